use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::cosim::SimConfig;
use crate::data::{Lane, VehicleState};
use crate::microsim::AgentState;

const LOG_HEADER: [&str; 10] = [
    "step", "t", "id", "kind", "lane", "x", "y", "vel", "v0", "accel",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// Episode length reached.
    Time,
    /// Ego left the instrumented segment.
    RoadEnd,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Time => "time",
            Termination::RoadEnd => "road-end",
        })
    }
}

/// Snapshot after one step (entry 0 is the initialized state).
#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub step: usize,
    pub t: f64,
    pub ego: AgentState,
    /// Ordered by id.
    pub visible: Vec<AgentState>,
    /// Ordered by id.
    pub ghost: Vec<VehicleState>,
    /// Ghosts materialized as agents during this step.
    pub spawned: Vec<String>,
    /// Agents handed back to replay during this step.
    pub despawned: Vec<String>,
    /// Spawns postponed by the spawn-gap check during this step.
    pub deferred: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimLog {
    pub config: SimConfig,
    pub entries: Vec<LogEntry>,
    pub termination: Termination,
}

impl SimLog {
    /// Number of executed steps, excluding the initial snapshot.
    pub fn steps(&self) -> usize {
        self.entries.len().saturating_sub(1)
    }

    pub fn ego_id(&self) -> &str {
        &self.entries[0].ego.id
    }

    pub fn final_ego(&self) -> &AgentState {
        &self.entries[self.entries.len() - 1].ego
    }

    pub fn ego_track(&self) -> EgoTrack {
        EgoTrack {
            id: self.ego_id().to_string(),
            points: self
                .entries
                .iter()
                .map(|e| TrackPoint {
                    t: e.t,
                    x: e.ego.x,
                    vel: e.ego.vel,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub t: f64,
    pub x: f64,
    pub vel: f64,
}

/// The simulated ego trajectory, either taken from an in-memory log or read
/// back from an exported one.
#[derive(Debug, Clone, PartialEq)]
pub struct EgoTrack {
    pub id: String,
    pub points: Vec<TrackPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RowKind {
    Ego,
    Visible,
    Ghost,
}

impl RowKind {
    fn as_str(self) -> &'static str {
        match self {
            RowKind::Ego => "ego",
            RowKind::Visible => "visible",
            RowKind::Ghost => "ghost",
        }
    }
}

/// One row of an exported log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub t: f64,
    pub id: String,
    pub kind: RowKind,
    pub lane: Lane,
    pub x: f64,
    pub y: f64,
    pub vel: f64,
    pub v0: Option<f64>,
    pub accel: Option<f64>,
}

fn agent_row(step: usize, t: f64, kind: RowKind, a: &AgentState) -> [String; 10] {
    [
        step.to_string(),
        t.to_string(),
        a.id.clone(),
        kind.as_str().to_string(),
        a.lane.to_string(),
        a.x.to_string(),
        a.y.to_string(),
        a.vel.to_string(),
        a.v0.to_string(),
        a.last_accel.to_string(),
    ]
}

/// Writes one row per vehicle per entry, ordered by step, then kind
/// (ego, visible, ghost), then id. Ghost rows leave `v0` and `accel` empty.
pub fn export_log<W: Write>(log: &SimLog, w: W) -> Result<(), MetricsError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(LOG_HEADER)?;
    for e in &log.entries {
        wtr.write_record(agent_row(e.step, e.t, RowKind::Ego, &e.ego))?;
        for a in &e.visible {
            wtr.write_record(agent_row(e.step, e.t, RowKind::Visible, a))?;
        }
        for g in &e.ghost {
            wtr.write_record([
                e.step.to_string(),
                e.t.to_string(),
                g.id.clone(),
                RowKind::Ghost.as_str().to_string(),
                g.lane.to_string(),
                g.x.to_string(),
                g.y.to_string(),
                g.vel.to_string(),
                String::new(),
                String::new(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Parses an exported log.
pub fn read_log<R: Read>(source: R) -> Result<Vec<LogRow>, MetricsError> {
    let mut rdr = csv::Reader::from_reader(source);
    let header = rdr.headers()?.clone();
    if header.iter().ne(LOG_HEADER.iter().copied()) {
        return Err(MetricsError::Format(format!(
            "unexpected log header {:?}",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |what: &str| MetricsError::Format(format!("line {line}: bad {what}"));
        let num = |i: usize| -> Result<f64, MetricsError> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(LOG_HEADER[i]))
        };
        let opt = |i: usize| -> Result<Option<f64>, MetricsError> {
            match rec.get(i) {
                Some("") => Ok(None),
                Some(s) => s.parse().map(Some).map_err(|_| bad(LOG_HEADER[i])),
                None => Err(bad(LOG_HEADER[i])),
            }
        };
        let kind = match rec.get(3) {
            Some("ego") => RowKind::Ego,
            Some("visible") => RowKind::Visible,
            Some("ghost") => RowKind::Ghost,
            _ => return Err(bad("kind")),
        };
        let lane = rec
            .get(4)
            .and_then(|s| s.parse::<i64>().ok())
            .and_then(Lane::new)
            .ok_or_else(|| bad("lane"))?;
        rows.push(LogRow {
            step: rec
                .get(0)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("step"))?,
            t: num(1)?,
            id: rec.get(2).unwrap_or_default().to_string(),
            kind,
            lane,
            x: num(5)?,
            y: num(6)?,
            vel: num(7)?,
            v0: opt(8)?,
            accel: opt(9)?,
        });
    }
    Ok(rows)
}

/// Ego rows of an exported log as a track.
pub fn ego_track_from_rows(rows: &[LogRow]) -> Result<EgoTrack, MetricsError> {
    let mut ego = rows.iter().filter(|r| r.kind == RowKind::Ego).peekable();
    let id = ego
        .peek()
        .map(|r| r.id.clone())
        .ok_or_else(|| MetricsError::Format("log has no ego rows".into()))?;
    Ok(EgoTrack {
        id,
        points: ego
            .map(|r| TrackPoint {
                t: r.t,
                x: r.x,
                vel: r.vel,
            })
            .collect(),
    })
}
