//! Empirical trajectory data: record types, road geometry, CSV ingestion and
//! the spatiotemporal queries issued by the cosimulation loop.

mod dataset;
mod index;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{load_dataset, load_dataset_file, Dataset, Track};

/// Length of the instrumented segment: one mile.
pub const MILE_M: f64 = 1609.34;

/// Speed that converts a time offset into an equivalent distance when
/// ranking candidates for ego selection.
pub const CLOSENESS_SPEED: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Road {
    Westbound,
    Eastbound,
}

impl Road {
    pub const ALL: [Road; 2] = [Road::Westbound, Road::Eastbound];

    pub fn as_str(self) -> &'static str {
        match self {
            Road::Westbound => "Westbound",
            Road::Eastbound => "Eastbound",
        }
    }
}

impl fmt::Display for Road {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Road {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Westbound" => Ok(Road::Westbound),
            "Eastbound" => Ok(Road::Eastbound),
            other => Err(format!(
                "unknown road {other:?} (expected Westbound or Eastbound)"
            )),
        }
    }
}

/// Lane identifier. `-1` is the leftmost (HOV) lane, `-4` the rightmost;
/// identifiers descend from left to right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub struct Lane(i8);

impl Lane {
    pub const HOV: Lane = Lane(-1);
    pub const ALL: [Lane; 4] = [Lane(-1), Lane(-2), Lane(-3), Lane(-4)];

    pub fn new(id: i64) -> Option<Lane> {
        (-4..=-1).contains(&id).then_some(Lane(id as i8))
    }

    pub fn id(self) -> i8 {
        self.0
    }

    /// Zero-based position counted from the left edge of the road.
    pub fn index_from_left(self) -> usize {
        (-(self.0 as i32) - 1) as usize
    }

    pub fn left(self) -> Option<Lane> {
        Lane::new(self.0 as i64 + 1)
    }

    pub fn right(self) -> Option<Lane> {
        Lane::new(self.0 as i64 - 1)
    }
}

impl TryFrom<i64> for Lane {
    type Error = String;

    fn try_from(v: i64) -> Result<Self, Self::Error> {
        Lane::new(v).ok_or_else(|| format!("lane {v} outside {{-1, -2, -3, -4}}"))
    }
}

impl From<Lane> for i64 {
    fn from(l: Lane) -> i64 {
        l.0 as i64
    }
}

impl fmt::Display for Lane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneSpec {
    pub lane: Lane,
    pub hov: bool,
}

/// Geometry shared by both carriageways of the segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadSpec {
    pub name: String,
    pub length: f64,
    pub lanes: Vec<LaneSpec>,
    pub lane_width: f64,
}

impl RoadSpec {
    /// The four-lane, one-mile freeway segment with an HOV lane on the left.
    pub fn i24() -> Self {
        RoadSpec {
            name: "I-24 MM60.6-61.6".to_string(),
            length: MILE_M,
            lanes: Lane::ALL
                .iter()
                .map(|&lane| LaneSpec {
                    lane,
                    hov: lane == Lane::HOV,
                })
                .collect(),
            lane_width: 3.7,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.length > 0.0) {
            return Err(format!("road length must be > 0, got {}", self.length));
        }
        if self.lanes.is_empty() {
            return Err("road must have at least one lane".into());
        }
        if !(self.lane_width > 0.0) {
            return Err(format!("lane width must be > 0, got {}", self.lane_width));
        }
        Ok(())
    }

    pub fn has_lane(&self, lane: Lane) -> bool {
        self.lanes.iter().any(|l| l.lane == lane)
    }

    /// Lateral coordinate of a lane's centreline, measured from the left edge.
    pub fn lane_center_y(&self, lane: Lane) -> f64 {
        (lane.index_from_left() as f64 + 0.5) * self.lane_width
    }
}

impl Default for RoadSpec {
    fn default() -> Self {
        RoadSpec::i24()
    }
}

/// One timestamped kinematic sample of one vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: String,
    pub road: Road,
    /// Unix timestamp, seconds.
    pub t: f64,
    /// Longitudinal position, increasing in the direction of travel.
    pub x: f64,
    pub y: f64,
    pub lane: Lane,
    pub vel: f64,
}

/// Records as stored in a dataset have the same shape as states produced by
/// interpolation.
pub type VehicleRecord = VehicleState;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Malformed { line: u64, msg: String },
    #[error("bad header: expected `id,road,t,x,y,lane,vel`, got `{0}`")]
    Header(String),
    #[error("line {line}: lane {value} outside {{-1, -2, -3, -4}}")]
    Lane { line: u64, value: i64 },
    #[error("line {line}: x = {x} outside [0, {length}]")]
    Position { line: u64, x: f64, length: f64 },
    #[error("line {line}: negative velocity {vel}")]
    NegativeVelocity { line: u64, vel: f64 },
    #[error("line {line}: duplicate sample for vehicle {id:?} at t = {t}")]
    Duplicate { line: u64, id: String, t: f64 },
    #[error("line {line}: vehicle {id:?} appears on both roads")]
    RoadMismatch { line: u64, id: String },
    #[error("invalid road spec: {0}")]
    RoadSpec(String),
    #[error("no candidate vehicle on {road} lane {lane}")]
    NoCandidate { road: Road, lane: Lane },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lane_neighbours() {
        assert_eq!(Lane::HOV.left(), None);
        assert_eq!(Lane::HOV.right(), Lane::new(-2));
        assert_eq!(Lane::new(-4).unwrap().right(), None);
        assert_eq!(Lane::new(-4).unwrap().index_from_left(), 3);
        assert!(Lane::new(-5).is_none());
        assert!(Lane::new(0).is_none());
    }

    #[test]
    fn i24_spec() {
        let spec = RoadSpec::i24();
        assert_eq!(spec.lanes.len(), 4);
        assert!(spec.lanes[0].hov);
        assert!(spec.lanes[1..].iter().all(|l| !l.hov));
        assert_eq!(spec.length, 1609.34);
        assert!(spec.validate().is_ok());
    }

    #[test]
    fn road_parse() {
        assert_eq!("Eastbound".parse::<Road>(), Ok(Road::Eastbound));
        assert!("Northbound".parse::<Road>().is_err());
    }
}
