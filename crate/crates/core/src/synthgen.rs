//! Synthetic trajectory datasets in the ingestion schema: per-lane IDM
//! platoons, optionally disturbed by clamping one vehicle's speed for a
//! while, which seeds a stop-and-go wave that travels upstream.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, Dataset, Lane, Road, RoadSpec, VehicleRecord};
use crate::microsim::{advance_agents, vehicle_length, AgentState, IdmParams, MicrosimError};
use crate::rng::keyed_rng;

/// Internal integration step, seconds.
pub const FINE_DT: f64 = 0.01;

/// 2022-11-30 06:45:50 CST as a unix timestamp.
pub const DEFAULT_T_START: f64 = 1_669_812_350.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    Config(String),
    #[error("generated platoon collided: {0}")]
    Collision(#[from] MicrosimError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Clamp on one vehicle's speed over a time window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub vehicle: String,
    /// Seconds after the start of generation.
    pub start: f64,
    pub duration: f64,
    pub target_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    /// Vehicles per lane.
    pub n_vehicles: usize,
    pub road: Road,
    #[serde(default)]
    pub roadspec: RoadSpec,
    pub lanes_used: Vec<Lane>,
    /// Front-to-front distance between consecutive vehicles at t = 0.
    pub initial_spacing: f64,
    pub initial_speed: f64,
    /// Front bumper of each lane's head vehicle at t = 0. May lie outside the
    /// road; only samples on the road are emitted.
    #[serde(default = "default_head_position")]
    pub head_position: f64,
    /// Each lane's head is shifted upstream by a seeded uniform draw from
    /// `[0, lane_stagger]`.
    #[serde(default)]
    pub lane_stagger: f64,
    #[serde(default)]
    pub model: IdmParams,
    #[serde(default)]
    pub perturbation: Option<Perturbation>,
    pub sample_rate: f64,
    pub duration: f64,
    #[serde(default = "default_t_start")]
    pub t_start: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_head_position() -> f64 {
    crate::data::MILE_M
}

fn default_t_start() -> f64 {
    DEFAULT_T_START
}

const FREEFLOW_JSON: &str = include_str!("../presets/freeflow.json");
const WAVE_JSON: &str = include_str!("../presets/wave.json");

pub const PRESETS: [&str; 2] = ["freeflow", "wave"];

impl SynthConfig {
    pub fn from_json(text: &str) -> Result<SynthConfig, SynthError> {
        let cfg: SynthConfig =
            serde_json::from_str(text).map_err(|e| SynthError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// One of the shipped presets: `freeflow` or `wave`.
    pub fn preset(name: &str) -> Option<SynthConfig> {
        let text = match name {
            "freeflow" => FREEFLOW_JSON,
            "wave" => WAVE_JSON,
            _ => return None,
        };
        Some(SynthConfig::from_json(text).expect("shipped presets are valid"))
    }

    pub fn vehicle_id(&self, lane: Lane, index: usize) -> String {
        let r = match self.road {
            Road::Westbound => 'W',
            Road::Eastbound => 'E',
        };
        format!("{r}{}-{index:03}", -lane.id())
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        self.roadspec.validate().map_err(SynthError::Config)?;
        self.model.validate().map_err(SynthError::Config)?;
        if self.n_vehicles < 1 {
            return bad("n_vehicles must be at least 1".into());
        }
        if self.lanes_used.is_empty() {
            return bad("lanes_used must not be empty".into());
        }
        for (i, lane) in self.lanes_used.iter().enumerate() {
            if !self.roadspec.has_lane(*lane) {
                return bad(format!("lane {lane} is not on the road"));
            }
            if self.lanes_used[..i].contains(lane) {
                return bad(format!("lane {lane} listed twice"));
            }
        }
        let max_len = self.model.vehicle_length_range[1];
        if !(self.initial_spacing > max_len) {
            return bad(format!(
                "initial_spacing {} must exceed the longest vehicle ({max_len} m)",
                self.initial_spacing
            ));
        }
        if !(self.initial_speed >= 0.0 && self.initial_speed.is_finite()) {
            return bad(format!(
                "initial_speed must be >= 0, got {}",
                self.initial_speed
            ));
        }
        if !(self.sample_rate > 0.0) {
            return bad(format!("sample_rate must be > 0, got {}", self.sample_rate));
        }
        self.steps_per_sample()?;
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be > 0, got {}", self.duration));
        }
        if !(self.lane_stagger >= 0.0) {
            return bad(format!(
                "lane_stagger must be >= 0, got {}",
                self.lane_stagger
            ));
        }
        if let Some(p) = &self.perturbation {
            let known = self
                .lanes_used
                .iter()
                .any(|&l| (0..self.n_vehicles).any(|i| self.vehicle_id(l, i) == p.vehicle));
            if !known {
                return bad(format!(
                    "perturbation vehicle {:?} is not generated",
                    p.vehicle
                ));
            }
            if !(p.duration > 0.0 && p.start >= 0.0 && p.target_speed >= 0.0) {
                return bad(
                    "perturbation needs start >= 0, duration > 0, target_speed >= 0".into(),
                );
            }
        }
        Ok(())
    }

    fn steps_per_sample(&self) -> Result<usize, SynthError> {
        let ratio = 1.0 / (self.sample_rate * FINE_DT);
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 {
            return Err(SynthError::Config(format!(
                "sample_rate {} Hz must divide the internal {} Hz step rate",
                self.sample_rate,
                1.0 / FINE_DT
            )));
        }
        Ok(n as usize)
    }
}

/// Simulates the configured platoons and samples them into a dataset.
pub fn generate(config: &SynthConfig) -> Result<Dataset, SynthError> {
    config.validate()?;
    let model = &config.model;
    let spec = &config.roadspec;

    let mut agents = Vec::new();
    for &lane in &config.lanes_used {
        let stagger = if config.lane_stagger > 0.0 {
            keyed_rng(config.seed, &format!("lane{lane}")).gen::<f64>() * config.lane_stagger
        } else {
            0.0
        };
        for i in 0..config.n_vehicles {
            let id = config.vehicle_id(lane, i);
            agents.push(AgentState {
                length: vehicle_length(config.seed, &id, model),
                id,
                lane,
                x: config.head_position - stagger - i as f64 * config.initial_spacing,
                y: spec.lane_center_y(lane),
                vel: config.initial_speed,
                // heads cruise at the initial speed, everyone else chases v0
                v0: if i == 0 {
                    config.initial_speed
                } else {
                    model.v0_default
                },
                last_accel: 0.0,
                next_lane_check: f64::INFINITY,
            });
        }
    }
    for pair in agents.windows(2) {
        if pair[0].lane == pair[1].lane && pair[0].rear() - pair[1].x <= 0.0 {
            return Err(SynthError::Config(format!(
                "{} and {} overlap at t = 0",
                pair[0].id, pair[1].id
            )));
        }
    }
    let perturbed = config.perturbation.as_ref().and_then(|p| {
        agents
            .iter()
            .position(|a| a.id == p.vehicle)
            .map(|i| (i, p))
    });

    let steps_per_sample = config.steps_per_sample()?;
    let n_samples = (config.duration * config.sample_rate + 1e-9).floor() as usize;
    let mut records = Vec::new();
    let mut emit = |agents: &[AgentState], k: usize| {
        let t = config.t_start + k as f64 / config.sample_rate;
        for a in agents {
            if a.x >= 0.0 && a.x <= spec.length {
                records.push(VehicleRecord {
                    id: a.id.clone(),
                    road: config.road,
                    t,
                    x: a.x,
                    y: a.y,
                    lane: a.lane,
                    vel: a.vel,
                });
            }
        }
    };
    emit(&agents, 0);
    for k in 1..=n_samples {
        for s in 0..steps_per_sample {
            let elapsed = ((k - 1) * steps_per_sample + s) as f64 * FINE_DT;
            advance_agents(&mut agents, &[], false, FINE_DT, model)?;
            if let Some((i, p)) = perturbed {
                if elapsed >= p.start && elapsed < p.start + p.duration {
                    let a = &mut agents[i];
                    if a.vel > p.target_speed {
                        // undo this step's travel at the old speed and redo it clamped
                        a.x -= (a.vel - p.target_speed) * FINE_DT;
                        a.vel = p.target_speed;
                    }
                }
            }
        }
        emit(&agents, k);
    }
    Ok(Dataset::from_records(records, spec.clone())?)
}
