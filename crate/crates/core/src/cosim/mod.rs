//! The cosimulation loop: ego selection, window classification, ghost-cell
//! boundary control, visible/ghost hand-over and ghost reload.
//!
//! One step runs, in order:
//!
//! 1. desired-speed assignment (each lane's leading visible vehicle ahead of
//!    the ego takes the speed of the first downstream ghost in its lane),
//! 2. optional lane changes, then IDM advance of the ego and visible agents,
//! 3. ballistic advance of the ghosts,
//! 4. visible → ghost and ghost → visible hand-over,
//! 5. clock advance, then a full reload of both ghost bands from data.

mod config;

use std::collections::BTreeMap;

use thiserror::Error;

pub use config::{classify_region, Region, SimConfig};

use crate::data::{DataError, Dataset, Lane, VehicleState};
use crate::metrics::{LogEntry, SimLog, Termination};
use crate::microsim::{
    advance_agents, lane_change_pass, materialize_agent, AgentState, MicrosimError,
};

#[derive(Debug, Error)]
pub enum CosimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("ego selection failed: {0}")]
    NoCandidate(DataError),
    #[error(transparent)]
    Microsim(#[from] MicrosimError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    /// Current unix timestamp.
    pub t: f64,
    /// Timestamp origin: the ego's source record time.
    pub t0: f64,
    pub step_index: usize,
    pub ego: AgentState,
    pub visible: BTreeMap<String, AgentState>,
    pub ghost: BTreeMap<String, VehicleState>,
    /// Vehicles that entered the window but could not be spawned yet.
    pub deferred: BTreeMap<String, VehicleState>,
}

/// Ids touched by one hand-over pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transition {
    pub spawned: Vec<String>,
    pub despawned: Vec<String>,
    pub deferred: Vec<String>,
}

fn body_clear(candidate: &AgentState, others: &[&AgentState], min_gap: f64) -> bool {
    others
        .iter()
        .filter(|o| o.lane == candidate.lane && o.id != candidate.id)
        .all(|o| {
            if o.x >= candidate.x {
                o.rear() - candidate.x >= min_gap
            } else {
                candidate.rear() - o.x >= min_gap
            }
        })
}

fn ghost_of(agent: &AgentState, config: &SimConfig, t: f64) -> VehicleState {
    VehicleState {
        id: agent.id.clone(),
        road: config.road,
        t,
        x: agent.x,
        y: agent.y,
        lane: agent.lane,
        vel: agent.vel,
    }
}

/// Picks the ego and populates the visible and ghost sets at its timestamp.
pub fn initialize(dataset: &Dataset, config: &SimConfig) -> Result<SimState, CosimError> {
    config.validate().map_err(CosimError::Config)?;
    let source = dataset
        .find_closest_vehicle(config.road, config.ego_lane, config.ego_x, config.ego_t)
        .map_err(CosimError::NoCandidate)?;
    let t0 = source.t;
    let mut ego = materialize_agent(&source, &config.model, config.seed);
    ego.v0 = config.vel_default;

    let reach = config.w_visible + config.w_ghost;
    let mut state = SimState {
        t: t0,
        t0,
        step_index: 0,
        visible: BTreeMap::new(),
        ghost: BTreeMap::new(),
        deferred: BTreeMap::new(),
        ego,
    };
    for s in dataset.query_interval(config.road, t0, source.x - reach, source.x + reach) {
        if s.id == source.id {
            continue;
        }
        match classify_region(source.x, s.x, config) {
            Region::Visible => {
                let agent = materialize_agent(&s, &config.model, config.seed);
                let placed: Vec<&AgentState> = std::iter::once(&state.ego)
                    .chain(state.visible.values())
                    .collect();
                // recorded positions are trusted; only true overlaps are held back
                if body_clear(&agent, &placed, f64::MIN_POSITIVE) {
                    state.visible.insert(agent.id.clone(), agent);
                } else {
                    state.deferred.insert(s.id.clone(), s);
                }
            }
            r if r.is_ghost() => {
                state.ghost.insert(s.id.clone(), s);
            }
            _ => {}
        }
    }
    Ok(state)
}

/// Sets `v0` on the ego and every visible agent.
pub fn assign_desired_speeds(state: &mut SimState, config: &SimConfig) {
    let ego_x = state.ego.x;
    state.ego.v0 = config.vel_default;
    let mut leaders: BTreeMap<Lane, (f64, String)> = BTreeMap::new();
    for a in state.visible.values_mut() {
        a.v0 = config.vel_default;
        if a.x > ego_x {
            let slot = leaders.entry(a.lane).or_insert((a.x, a.id.clone()));
            if a.x > slot.0 || (a.x == slot.0 && a.id > slot.1) {
                *slot = (a.x, a.id.clone());
            }
        }
    }
    for (lane, (lead_x, id)) in leaders {
        let ghost_ahead = state
            .ghost
            .values()
            .filter(|g| {
                g.lane == lane
                    && g.x > lead_x
                    && classify_region(ego_x, g.x, config) == Region::GhostDownstream
            })
            .min_by(|a, b| a.x.total_cmp(&b.x).then_with(|| a.id.cmp(&b.id)));
        if let (Some(g), Some(a)) = (ghost_ahead, state.visible.get_mut(&id)) {
            a.v0 = g.vel;
        }
    }
}

/// Hands agents that left the window back to replay, and spawns ghosts (and
/// previously deferred vehicles) that entered it, unless they would land
/// within `min_spawn_gap` of a same-lane body.
pub fn transition_vehicles(state: &mut SimState, config: &SimConfig) -> Transition {
    let ego_x = state.ego.x;
    let mut out = Transition::default();

    let leaving: Vec<String> = state
        .visible
        .values()
        .filter(|a| classify_region(ego_x, a.x, config) != Region::Visible)
        .map(|a| a.id.clone())
        .collect();
    for id in leaving {
        let agent = state.visible.remove(&id).expect("id from visible");
        if classify_region(ego_x, agent.x, config).is_ghost() {
            state
                .ghost
                .insert(id.clone(), ghost_of(&agent, config, state.t));
        }
        out.despawned.push(id);
    }

    let entering: Vec<String> = state
        .ghost
        .values()
        .filter(|g| classify_region(ego_x, g.x, config) == Region::Visible)
        .map(|g| g.id.clone())
        .collect();
    let mut candidates: BTreeMap<String, VehicleState> = entering
        .into_iter()
        .map(|id| {
            let g = state.ghost.remove(&id).expect("id from ghost");
            (id, g)
        })
        .collect();
    let waiting = std::mem::take(&mut state.deferred);
    candidates.extend(
        waiting
            .into_iter()
            .filter(|(_, g)| classify_region(ego_x, g.x, config) == Region::Visible),
    );

    for (id, g) in candidates {
        let agent = materialize_agent(&g, &config.model, config.seed);
        let placed: Vec<&AgentState> = std::iter::once(&state.ego)
            .chain(state.visible.values())
            .collect();
        if body_clear(&agent, &placed, config.min_spawn_gap) {
            state.visible.insert(id.clone(), agent);
            out.spawned.push(id);
        } else {
            state.deferred.insert(id.clone(), g);
            out.deferred.push(id);
        }
    }
    out
}

/// The ghost set the data implies at `state.t`: every recorded vehicle in
/// either ghost band, except the ego and the visible agents.
pub fn ghost_bands(
    state: &SimState,
    dataset: &Dataset,
    config: &SimConfig,
) -> BTreeMap<String, VehicleState> {
    let ego_x = state.ego.x;
    let reach = config.w_visible + config.w_ghost;
    dataset
        .query_interval(config.road, state.t, ego_x - reach, ego_x + reach)
        .into_iter()
        .filter(|s| {
            s.id != state.ego.id
                && !state.visible.contains_key(&s.id)
                && classify_region(ego_x, s.x, config).is_ghost()
        })
        .map(|s| (s.id.clone(), s))
        .collect()
}

/// Replaces the ghost set wholesale from data at the current time. Deferred
/// vehicles are refreshed from data too, so a late spawn still starts from
/// recorded values.
pub fn reload_ghosts(state: &mut SimState, dataset: &Dataset, config: &SimConfig) {
    state.ghost = ghost_bands(state, dataset, config);
    let (ghost, t) = (&state.ghost, state.t);
    state.deferred = std::mem::take(&mut state.deferred)
        .into_iter()
        .filter(|(id, _)| !ghost.contains_key(id))
        .filter_map(|(id, _)| dataset.interpolate_state(&id, t).map(|s| (id, s)))
        .collect();
}

fn snapshot(state: &SimState, tr: Transition) -> LogEntry {
    LogEntry {
        step: state.step_index,
        t: state.t,
        ego: state.ego.clone(),
        visible: state.visible.values().cloned().collect(),
        ghost: state.ghost.values().cloned().collect(),
        spawned: tr.spawned,
        despawned: tr.despawned,
        deferred: tr.deferred,
    }
}

/// Advances the cosimulation by one `dt` and returns the resulting snapshot.
pub fn step(
    state: &mut SimState,
    dataset: &Dataset,
    config: &SimConfig,
) -> Result<LogEntry, CosimError> {
    let dt = config.dt;
    assign_desired_speeds(state, config);

    let ghosts: Vec<VehicleState> = state.ghost.values().cloned().collect();
    let mut agents: Vec<AgentState> = std::iter::once(state.ego.clone())
        .chain(state.visible.values().cloned())
        .collect();
    if config.lane_changes {
        lane_change_pass(
            &mut agents,
            &ghosts,
            config.phantom_leader,
            state.t,
            dataset.roadspec(),
            &config.model,
        )?;
    }
    advance_agents(
        &mut agents,
        &ghosts,
        config.phantom_leader,
        dt,
        &config.model,
    )?;
    let mut agents = agents.into_iter();
    state.ego = agents.next().expect("ego is first");
    for a in agents {
        state.visible.insert(a.id.clone(), a);
    }

    let t_next = state.t0 + (state.step_index + 1) as f64 * dt;
    for g in state.ghost.values_mut().chain(state.deferred.values_mut()) {
        g.x += g.vel * dt;
        g.t = t_next;
    }

    state.t = t_next;
    let tr = transition_vehicles(state, config);
    state.step_index += 1;
    reload_ghosts(state, dataset, config);
    Ok(snapshot(state, tr))
}

/// Runs a full episode: until `t_max` has elapsed or the ego leaves the road.
pub fn run(dataset: &Dataset, config: &SimConfig) -> Result<SimLog, CosimError> {
    let mut state = initialize(dataset, config)?;
    let initial = Transition {
        spawned: state.visible.keys().cloned().collect(),
        deferred: state.deferred.keys().cloned().collect(),
        ..Transition::default()
    };
    let mut entries = vec![snapshot(&state, initial)];
    let road_end = dataset.roadspec().length;
    let mut termination = Termination::Time;
    for _ in 0..config.n_steps() {
        if state.ego.x >= road_end {
            termination = Termination::RoadEnd;
            break;
        }
        entries.push(step(&mut state, dataset, config)?);
    }
    if termination == Termination::Time && state.ego.x >= road_end {
        termination = Termination::RoadEnd;
    }
    Ok(SimLog {
        config: config.clone(),
        entries,
        termination,
    })
}
