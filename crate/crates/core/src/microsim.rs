//! Car-following dynamics for the ego and visible vehicles.
//!
//! Acceleration follows the Intelligent Driver Model:
//!
//! ```text
//! a = a_max * [1 - (v / v0)^delta - (s* / s)^2]
//! s* = max(s0, s0 + v*T + v*dv / (2*sqrt(a_max*b)))
//! ```
//!
//! Positions are front-bumper coordinates and the gap `s` is measured from
//! the follower's front bumper to the leader's rear bumper. Integration is
//! semi-implicit (speed first, floored at zero) and simultaneous: every
//! acceleration is computed from the pre-step snapshot.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Lane, RoadSpec, VehicleState};
use crate::rng::keyed_rng;

/// Minimum acceleration advantage (m/s²) that justifies a lane change.
pub const LANE_CHANGE_GAIN: f64 = 0.2;
/// Seconds between lane-change evaluations of the same agent.
pub const LANE_CHECK_INTERVAL: f64 = 1.0;
/// Desired speeds below this are clamped so the free-road term stays finite.
const V0_FLOOR: f64 = 0.01;
/// Smallest gap assumed behind a phantom (replayed) leader.
const PHANTOM_GAP_FLOOR: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum MicrosimError {
    #[error("vehicle {follower:?} overlaps its leader {leader:?} (gap {gap:.3} m)")]
    Overlap {
        follower: String,
        leader: String,
        gap: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdmParams {
    pub a_max: f64,
    pub b: f64,
    pub s0: f64,
    /// Desired time headway, seconds.
    pub time_headway: f64,
    pub delta: f64,
    pub v0_default: f64,
    pub vehicle_length_range: [f64; 2],
}

impl Default for IdmParams {
    fn default() -> Self {
        IdmParams {
            a_max: 1.5,
            b: 2.0,
            s0: 2.0,
            time_headway: 1.5,
            delta: 4.0,
            v0_default: 30.0,
            vehicle_length_range: [4.2, 5.5],
        }
    }
}

impl IdmParams {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("a_max", self.a_max),
            ("b", self.b),
            ("s0", self.s0),
            ("time_headway", self.time_headway),
            ("delta", self.delta),
            ("v0_default", self.v0_default),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("model.{name} must be a positive number, got {v}"));
            }
        }
        let [lo, hi] = self.vehicle_length_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(format!(
                "model.vehicle_length_range must satisfy 0 < min <= max, got [{lo}, {hi}]"
            ));
        }
        Ok(())
    }

    /// Bumper-to-bumper gap at which a follower cruising at `vel` behind a
    /// leader of equal speed has zero acceleration. Infinite at `vel >= v0`.
    pub fn equilibrium_gap(&self, vel: f64, v0: f64) -> f64 {
        let free = 1.0 - (vel / v0).powf(self.delta);
        if free <= 0.0 {
            return f64::INFINITY;
        }
        (self.s0 + vel * self.time_headway) / free.sqrt()
    }

    pub fn nominal_length(&self) -> f64 {
        0.5 * (self.vehicle_length_range[0] + self.vehicle_length_range[1])
    }
}

/// One simulated vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: String,
    pub lane: Lane,
    /// Front bumper.
    pub x: f64,
    pub y: f64,
    pub vel: f64,
    /// Current desired speed.
    pub v0: f64,
    pub length: f64,
    pub last_accel: f64,
    /// Earliest time this agent may next consider a lane change.
    pub next_lane_check: f64,
}

impl AgentState {
    pub fn rear(&self) -> f64 {
        self.x - self.length
    }
}

/// The vehicle an agent reacts to.
#[derive(Debug, Clone, PartialEq)]
pub struct Leader {
    pub id: String,
    /// Front bumper of the leader.
    pub x: f64,
    pub length: f64,
    pub vel: f64,
    /// Replayed ghost standing in for a missing simulated leader.
    pub phantom: bool,
}

impl Leader {
    fn from_agent(a: &AgentState) -> Leader {
        Leader {
            id: a.id.clone(),
            x: a.x,
            length: a.length,
            vel: a.vel,
            phantom: false,
        }
    }

    fn from_ghost(g: &VehicleState, length: f64) -> Leader {
        Leader {
            id: g.id.clone(),
            x: g.x,
            length,
            vel: g.vel,
            phantom: true,
        }
    }
}

pub fn idm_acceleration(
    vel: f64,
    v0: f64,
    gap: f64,
    dv: f64,
    params: &IdmParams,
) -> Result<f64, MicrosimError> {
    if gap <= 0.0 {
        return Err(MicrosimError::Overlap {
            follower: String::new(),
            leader: String::new(),
            gap,
        });
    }
    let v0 = v0.max(V0_FLOOR);
    let free = (vel / v0).powf(params.delta);
    let interaction = if gap.is_infinite() {
        0.0
    } else {
        let s_star = (params.s0
            + vel * params.time_headway
            + vel * dv / (2.0 * (params.a_max * params.b).sqrt()))
        .max(params.s0);
        (s_star / gap).powi(2)
    };
    Ok(params.a_max * (1.0 - free - interaction))
}

/// Acceleration of `subject` behind `leader` (free road when absent).
pub fn acceleration_behind(
    subject: &AgentState,
    leader: Option<&Leader>,
    params: &IdmParams,
) -> Result<f64, MicrosimError> {
    let Some(l) = leader else {
        return idm_acceleration(subject.vel, subject.v0, f64::INFINITY, 0.0, params);
    };
    let mut gap = l.x - l.length - subject.x;
    if l.phantom {
        gap = gap.max(PHANTOM_GAP_FLOOR);
    }
    idm_acceleration(subject.vel, subject.v0, gap, subject.vel - l.vel, params).map_err(|_| {
        MicrosimError::Overlap {
            follower: subject.id.clone(),
            leader: l.id.clone(),
            gap,
        }
    })
}

/// Nearest same-lane agent strictly ahead of `subject`; with `phantom_leader`
/// set and no such agent, the nearest same-lane ghost ahead stands in.
/// Ghost bodies are taken to be `ghost_length` long.
pub fn find_leader(
    agents: &[AgentState],
    subject: &AgentState,
    ghosts: &[VehicleState],
    phantom_leader: bool,
    ghost_length: f64,
) -> Option<Leader> {
    let ahead = agents
        .iter()
        .filter(|a| a.id != subject.id && a.lane == subject.lane && a.x > subject.x)
        .min_by(|a, b| a.x.total_cmp(&b.x).then_with(|| a.id.cmp(&b.id)));
    if let Some(a) = ahead {
        return Some(Leader::from_agent(a));
    }
    if !phantom_leader {
        return None;
    }
    ghosts
        .iter()
        .filter(|g| g.lane == subject.lane && g.x > subject.x)
        .min_by(|a, b| a.x.total_cmp(&b.x).then_with(|| a.id.cmp(&b.id)))
        .map(|g| Leader::from_ghost(g, ghost_length))
}

/// Advances all agents by `dt` with a simultaneous update.
pub fn advance_agents(
    agents: &mut [AgentState],
    ghosts: &[VehicleState],
    phantom_leader: bool,
    dt: f64,
    params: &IdmParams,
) -> Result<(), MicrosimError> {
    // Same-lane order by position; each agent's leader is its successor.
    let mut order: Vec<usize> = (0..agents.len()).collect();
    order.sort_by(|&i, &j| {
        agents[i]
            .lane
            .cmp(&agents[j].lane)
            .then(agents[i].x.total_cmp(&agents[j].x))
            .then_with(|| agents[i].id.cmp(&agents[j].id))
    });
    let ghost_length = params.nominal_length();
    let mut accel = vec![0.0; agents.len()];
    for (k, &i) in order.iter().enumerate() {
        let me = &agents[i];
        let next = order[k + 1..]
            .iter()
            .map(|&j| &agents[j])
            .take_while(|a| a.lane == me.lane)
            .find(|a| a.x > me.x);
        let leader = match next {
            Some(a) => Some(Leader::from_agent(a)),
            None if phantom_leader => find_leader(&[], me, ghosts, true, ghost_length),
            None => None,
        };
        if let Some(a) = order[k + 1..]
            .iter()
            .map(|&j| &agents[j])
            .take_while(|a| a.lane == me.lane && a.x == me.x)
            .next()
        {
            return Err(MicrosimError::Overlap {
                follower: me.id.clone(),
                leader: a.id.clone(),
                gap: -me.length.min(a.length),
            });
        }
        accel[i] = acceleration_behind(me, leader.as_ref(), params)?;
    }
    for (a, acc) in agents.iter_mut().zip(accel) {
        a.vel = (a.vel + acc * dt).max(0.0);
        a.x += a.vel * dt;
        a.last_accel = acc;
    }
    Ok(())
}

/// Deterministic body length for `id` under `seed`.
pub fn vehicle_length(seed: u64, id: &str, params: &IdmParams) -> f64 {
    let [lo, hi] = params.vehicle_length_range;
    if hi <= lo {
        return lo;
    }
    let u: f64 = keyed_rng(seed, id).gen();
    lo + (hi - lo) * u
}

/// Turns a replayed vehicle into a simulated one, keeping its speed exactly.
pub fn materialize_agent(ghost: &VehicleState, params: &IdmParams, seed: u64) -> AgentState {
    AgentState {
        id: ghost.id.clone(),
        lane: ghost.lane,
        x: ghost.x,
        y: ghost.y,
        vel: ghost.vel,
        v0: params.v0_default,
        length: vehicle_length(seed, &ghost.id, params),
        last_accel: 0.0,
        next_lane_check: ghost.t,
    }
}

/// A completed lane change.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneChange {
    pub id: String,
    pub from: Lane,
    pub to: Lane,
}

fn clear_in_lane(agents: &[AgentState], me: &AgentState, lane: Lane, min_gap: f64) -> bool {
    agents
        .iter()
        .filter(|o| o.id != me.id && o.lane == lane)
        .all(|o| {
            if o.x >= me.x {
                o.rear() - me.x > min_gap
            } else {
                me.rear() - o.x > min_gap
            }
        })
}

/// Incentive-and-safety lane changes. An agent due for evaluation at `t`
/// moves to an adjacent lane when its own acceleration there beats the
/// current one by more than [`LANE_CHANGE_GAIN`] and the gaps to both the
/// new leader and the new follower exceed `s0`. Agents are processed in id
/// order against the progressively updated state.
pub fn lane_change_pass(
    agents: &mut [AgentState],
    ghosts: &[VehicleState],
    phantom_leader: bool,
    t: f64,
    road: &RoadSpec,
    params: &IdmParams,
) -> Result<Vec<LaneChange>, MicrosimError> {
    let ghost_length = params.nominal_length();
    let mut order: Vec<usize> = (0..agents.len()).collect();
    order.sort_by(|&i, &j| agents[i].id.cmp(&agents[j].id));
    let mut changes = Vec::new();
    for i in order {
        if agents[i].next_lane_check > t {
            continue;
        }
        agents[i].next_lane_check = t + LANE_CHECK_INTERVAL;
        let me = agents[i].clone();
        let here = find_leader(agents, &me, ghosts, phantom_leader, ghost_length);
        let a_here = acceleration_behind(&me, here.as_ref(), params)?;
        let mut best: Option<(f64, Lane)> = None;
        for target in [me.lane.left(), me.lane.right()].into_iter().flatten() {
            if !road.has_lane(target) || !clear_in_lane(agents, &me, target, params.s0) {
                continue;
            }
            let moved = AgentState {
                lane: target,
                ..me.clone()
            };
            let there = find_leader(agents, &moved, ghosts, phantom_leader, ghost_length);
            let a_there = acceleration_behind(&moved, there.as_ref(), params)?;
            let gain = a_there - a_here;
            if gain > LANE_CHANGE_GAIN && best.is_none_or(|(g, _)| gain > g) {
                best = Some((gain, target));
            }
        }
        if let Some((_, target)) = best {
            let a = &mut agents[i];
            changes.push(LaneChange {
                id: a.id.clone(),
                from: a.lane,
                to: target,
            });
            a.lane = target;
            a.y = road.lane_center_y(target);
        }
    }
    Ok(changes)
}
