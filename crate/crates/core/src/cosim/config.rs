use serde::{Deserialize, Serialize};

use crate::data::{Lane, Road};
use crate::microsim::IdmParams;

/// Cosimulation tunables. Mirrors the scenario JSON field for field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Episode length, seconds.
    #[serde(default = "defaults::t_max")]
    pub t_max: f64,
    /// Step size, seconds.
    #[serde(default = "defaults::dt")]
    pub dt: f64,
    /// Desired speed of the ego and of visible vehicles without a ghost to
    /// follow, m/s.
    #[serde(default = "defaults::vel_default")]
    pub vel_default: f64,
    pub road: Road,
    /// Half-width of the simulated window around the ego, meters.
    #[serde(default = "defaults::w_visible")]
    pub w_visible: f64,
    /// Depth of each replayed band beyond the window, meters.
    #[serde(default = "defaults::w_ghost")]
    pub w_ghost: f64,
    pub ego_lane: Lane,
    pub ego_x: f64,
    pub ego_t: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub model: IdmParams,
    /// Lane leaders also car-follow the nearest downstream ghost.
    #[serde(default)]
    pub phantom_leader: bool,
    #[serde(default)]
    pub lane_changes: bool,
    /// Clearance a spawning vehicle needs to every same-lane body, meters.
    #[serde(default = "defaults::min_spawn_gap")]
    pub min_spawn_gap: f64,
}

mod defaults {
    pub fn t_max() -> f64 {
        30.0
    }
    pub fn dt() -> f64 {
        0.01
    }
    pub fn vel_default() -> f64 {
        30.0
    }
    pub fn w_visible() -> f64 {
        150.0
    }
    pub fn w_ghost() -> f64 {
        50.0
    }
    pub fn min_spawn_gap() -> f64 {
        2.0
    }
}

impl SimConfig {
    /// Defaults everywhere except the requested ego placement.
    pub fn new(road: Road, ego_lane: Lane, ego_x: f64, ego_t: f64) -> SimConfig {
        SimConfig {
            t_max: defaults::t_max(),
            dt: defaults::dt(),
            vel_default: defaults::vel_default(),
            road,
            w_visible: defaults::w_visible(),
            w_ghost: defaults::w_ghost(),
            ego_lane,
            ego_x,
            ego_t,
            seed: 0,
            model: IdmParams::default(),
            phantom_leader: false,
            lane_changes: false,
            min_spawn_gap: defaults::min_spawn_gap(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let check = |name: &str, v: f64, ok: bool| {
            if ok && v.is_finite() {
                Ok(())
            } else {
                Err(format!("{name} = {v} is out of range"))
            }
        };
        check("t_max", self.t_max, self.t_max >= 0.0)?;
        check("dt", self.dt, self.dt > 0.0)?;
        check("vel_default", self.vel_default, self.vel_default > 0.0)?;
        check("w_visible", self.w_visible, self.w_visible > 0.0)?;
        check("w_ghost", self.w_ghost, self.w_ghost > 0.0)?;
        check(
            "min_spawn_gap",
            self.min_spawn_gap,
            self.min_spawn_gap >= 0.0,
        )?;
        check("ego_x", self.ego_x, true)?;
        check("ego_t", self.ego_t, true)?;
        self.model.validate()
    }

    /// Number of steps in a full episode.
    pub fn n_steps(&self) -> usize {
        (self.t_max / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

/// Where a vehicle sits relative to the ego's windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    Visible,
    GhostUpstream,
    GhostDownstream,
    Outside,
}

impl Region {
    pub fn is_ghost(self) -> bool {
        matches!(self, Region::GhostUpstream | Region::GhostDownstream)
    }
}

/// Classifies `x` against the windows centred on `ego_x`. The closed visible
/// and ghost intervals share their boundary points; those go to `Visible`.
pub fn classify_region(ego_x: f64, x: f64, config: &SimConfig) -> Region {
    let (wv, wg) = (config.w_visible, config.w_ghost);
    if ego_x - wv <= x && x <= ego_x + wv {
        Region::Visible
    } else if ego_x - wv - wg <= x && x < ego_x - wv {
        Region::GhostUpstream
    } else if ego_x + wv < x && x <= ego_x + wv + wg {
        Region::GhostDownstream
    } else {
        Region::Outside
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SimConfig {
        SimConfig::new(Road::Westbound, Lane::HOV, 0.0, 0.0)
    }

    #[test]
    fn classification_examples() {
        let c = cfg();
        assert_eq!(classify_region(1000.0, 1000.0, &c), Region::Visible);
        assert_eq!(classify_region(1000.0, 860.0, &c), Region::Visible);
        assert_eq!(classify_region(1000.0, 840.0, &c), Region::GhostUpstream);
        assert_eq!(classify_region(1000.0, 1160.0, &c), Region::GhostDownstream);
        assert_eq!(classify_region(1000.0, 1220.0, &c), Region::Outside);
        assert_eq!(classify_region(1000.0, 780.0, &c), Region::Outside);
    }

    #[test]
    fn shared_boundaries_go_to_visible() {
        let c = cfg();
        assert_eq!(classify_region(1000.0, 850.0, &c), Region::Visible);
        assert_eq!(classify_region(1000.0, 1150.0, &c), Region::Visible);
        assert_eq!(classify_region(1000.0, 800.0, &c), Region::GhostUpstream);
        assert_eq!(classify_region(1000.0, 1200.0, &c), Region::GhostDownstream);
    }

    #[test]
    fn episode_length() {
        let c = cfg();
        assert_eq!(c.n_steps(), 3000);
        let mut z = cfg();
        z.t_max = 0.0;
        assert_eq!(z.n_steps(), 0);
    }

    #[test]
    fn json_rejects_unknown_keys() {
        let ok = r#"{"road":"Westbound","ego_lane":-1,"ego_x":700,"ego_t":0}"#;
        let c: SimConfig = serde_json::from_str(ok).unwrap();
        assert_eq!(
            (c.t_max, c.dt, c.w_visible, c.w_ghost),
            (30.0, 0.01, 150.0, 50.0)
        );
        let bad = r#"{"road":"Westbound","ego_lane":-1,"ego_x":700,"ego_t":0,"wvisible":1}"#;
        let err = serde_json::from_str::<SimConfig>(bad).unwrap_err();
        assert!(err.to_string().contains("wvisible"));
        let lane = r#"{"road":"Westbound","ego_lane":-7,"ego_x":700,"ego_t":0}"#;
        assert!(serde_json::from_str::<SimConfig>(lane).is_err());
    }

    #[test]
    fn validation() {
        let mut c = cfg();
        assert!(c.validate().is_ok());
        c.dt = 0.0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.w_ghost = -1.0;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.vel_default = 0.0;
        assert!(c.validate().is_err());
    }
}
