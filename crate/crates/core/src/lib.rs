//! Boundary-driven traffic microsimulation around a single ego vehicle.
//!
//! Recorded trajectories are replayed as ghost cells upstream and downstream
//! of a window of actively simulated vehicles. The simulated vehicles follow
//! the Intelligent Driver Model; the lead vehicle of each lane takes its
//! desired speed from the ghost vehicle ahead of it.

// `!(x > 0.0)` is how validation rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod cosim;
pub mod data;
pub mod metrics;
pub mod microsim;
pub mod rng;
pub mod synthgen;
