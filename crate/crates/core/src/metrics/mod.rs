//! Validation metrics: simulation logs, ego-vs-recorded deviation, binned
//! mean-speed fields, wave detection and time-space diagrams.

mod log;
mod svg;

use std::collections::VecDeque;

use serde::Serialize;
use thiserror::Error;

pub use log::{
    ego_track_from_rows, export_log, read_log, EgoTrack, LogEntry, LogRow, RowKind, SimLog,
    Termination, TrackPoint,
};
pub use svg::{render_time_space, RenderOptions, Window};

use crate::data::{Dataset, Lane, Road};

/// Default speed-field bin sizes: 1 s by 20 m.
pub const DEFAULT_T_BIN: f64 = 1.0;
pub const DEFAULT_X_BIN: f64 = 20.0;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed log: {0}")]
    Format(String),
    #[error("ego vehicle {0:?} does not appear in the dataset")]
    UnknownEgo(String),
    #[error("simulated and recorded ego trajectories share no timestamps")]
    NoOverlap,
    #[error("nothing to draw in the requested window")]
    EmptyWindow,
    #[error("invalid bins: {0}")]
    InvalidBins(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Deviation {
    pub rmse_x: f64,
    pub rmse_v: f64,
    pub max_abs_x: f64,
    /// Log timestamps compared against the recording.
    pub compared: usize,
    /// Log timestamps outside the recorded trajectory.
    pub excluded: usize,
}

/// Pointwise comparison of the simulated ego with the recorded trajectory of
/// the same vehicle.
pub fn ego_deviation(track: &EgoTrack, dataset: &Dataset) -> Result<Deviation, MetricsError> {
    let recorded = dataset
        .track(&track.id)
        .ok_or_else(|| MetricsError::UnknownEgo(track.id.clone()))?;
    let (mut sx, mut sv, mut max_x) = (0.0, 0.0, 0.0f64);
    let (mut compared, mut excluded) = (0usize, 0usize);
    for p in &track.points {
        match recorded.state_at(p.t) {
            Some(s) => {
                let dx = p.x - s.x;
                let dv = p.vel - s.vel;
                sx += dx * dx;
                sv += dv * dv;
                max_x = max_x.max(dx.abs());
                compared += 1;
            }
            None => excluded += 1,
        }
    }
    if compared == 0 {
        return Err(MetricsError::NoOverlap);
    }
    let n = compared as f64;
    Ok(Deviation {
        rmse_x: (sx / n).sqrt(),
        rmse_v: (sv / n).sqrt(),
        max_abs_x: max_x,
        compared,
        excluded,
    })
}

/// Edges `lo, lo + width, ...` closed off by `hi`.
pub fn uniform_edges(lo: f64, hi: f64, width: f64) -> Vec<f64> {
    let n = ((hi - lo) / width - 1e-9).ceil().max(1.0) as usize;
    let mut edges: Vec<f64> = (0..n).map(|i| lo + i as f64 * width).collect();
    edges.push(hi);
    edges
}

/// Binned mean speed over time × position.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedField {
    pub road: Road,
    pub lane: Option<Lane>,
    pub t_edges: Vec<f64>,
    pub x_edges: Vec<f64>,
    /// Row-major by time bin; `None` marks a cell without samples.
    pub mean: Vec<Option<f64>>,
    pub count: Vec<usize>,
}

impl SpeedField {
    pub fn n_t(&self) -> usize {
        self.t_edges.len() - 1
    }

    pub fn n_x(&self) -> usize {
        self.x_edges.len() - 1
    }

    pub fn cell(&self, ti: usize, xi: usize) -> Option<f64> {
        self.mean[ti * self.n_x() + xi]
    }

    pub fn t_center(&self, ti: usize) -> f64 {
        0.5 * (self.t_edges[ti] + self.t_edges[ti + 1])
    }

    pub fn x_center(&self, xi: usize) -> f64 {
        0.5 * (self.x_edges[xi] + self.x_edges[xi + 1])
    }

    /// 95th percentile of the non-empty cell means: a robust free-flow
    /// estimate when most of the field is uncongested.
    pub fn free_flow_speed(&self) -> Option<f64> {
        let mut v: Vec<f64> = self.mean.iter().flatten().copied().collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let k = ((v.len() - 1) as f64 * 0.95).round() as usize;
        Some(v[k])
    }
}

fn check_edges(name: &str, edges: &[f64]) -> Result<(), MetricsError> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(MetricsError::InvalidBins(format!(
            "{name} edges must be at least two strictly increasing values"
        )));
    }
    Ok(())
}

fn bin_of(edges: &[f64], v: f64) -> Option<usize> {
    let last = edges.len() - 1;
    if v < edges[0] || v > edges[last] {
        return None;
    }
    Some((edges.partition_point(|&e| e <= v)).clamp(1, last) - 1)
}

/// Mean interpolated speed per cell, sampling every vehicle at each time
/// bin's centre. `lane` restricts the field to one lane.
pub fn mean_speed_field(
    dataset: &Dataset,
    road: Road,
    lane: Option<Lane>,
    t_edges: &[f64],
    x_edges: &[f64],
) -> Result<SpeedField, MetricsError> {
    check_edges("time", t_edges)?;
    check_edges("space", x_edges)?;
    let (n_t, n_x) = (t_edges.len() - 1, x_edges.len() - 1);
    let mut sum = vec![0.0; n_t * n_x];
    let mut count = vec![0usize; n_t * n_x];
    for ti in 0..n_t {
        let tc = 0.5 * (t_edges[ti] + t_edges[ti + 1]);
        for s in dataset.query_interval(road, tc, x_edges[0], x_edges[n_x]) {
            if lane.is_some_and(|l| l != s.lane) {
                continue;
            }
            if let Some(xi) = bin_of(x_edges, s.x) {
                sum[ti * n_x + xi] += s.vel;
                count[ti * n_x + xi] += 1;
            }
        }
    }
    let mean = sum
        .iter()
        .zip(&count)
        .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
        .collect();
    Ok(SpeedField {
        road,
        lane,
        t_edges: t_edges.to_vec(),
        x_edges: x_edges.to_vec(),
        mean,
        count,
    })
}

/// A connected low-speed region of a speed field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaveRegion {
    pub t_span: [f64; 2],
    pub x_span: [f64; 2],
    pub min_speed: f64,
    /// Least-squares slope of the upstream edge, m/s. Negative when the
    /// region grows against the direction of travel.
    pub front_slope: f64,
    pub cells: usize,
}

/// Smallest component reported by [`detect_wave`].
pub const MIN_WAVE_CELLS: usize = 4;

/// 4-connected components of non-empty cells slower than `threshold`.
pub fn detect_wave(field: &SpeedField, threshold: f64) -> Vec<WaveRegion> {
    let (n_t, n_x) = (field.n_t(), field.n_x());
    let slow = |ti: usize, xi: usize| field.cell(ti, xi).is_some_and(|v| v < threshold);
    let mut seen = vec![false; n_t * n_x];
    let mut regions = Vec::new();
    for start in 0..n_t * n_x {
        if seen[start] || !slow(start / n_x, start % n_x) {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut cells = Vec::new();
        while let Some(c) = queue.pop_front() {
            cells.push(c);
            let (ti, xi) = (c / n_x, c % n_x);
            let mut push = |t: usize, x: usize| {
                let k = t * n_x + x;
                if !seen[k] && slow(t, x) {
                    seen[k] = true;
                    queue.push_back(k);
                }
            };
            if ti > 0 {
                push(ti - 1, xi);
            }
            if ti + 1 < n_t {
                push(ti + 1, xi);
            }
            if xi > 0 {
                push(ti, xi - 1);
            }
            if xi + 1 < n_x {
                push(ti, xi + 1);
            }
        }
        if cells.len() < MIN_WAVE_CELLS {
            continue;
        }
        regions.push(summarize(field, &cells));
    }
    regions
}

fn summarize(field: &SpeedField, cells: &[usize]) -> WaveRegion {
    let n_x = field.n_x();
    let (mut t_lo, mut t_hi, mut x_lo, mut x_hi) = (usize::MAX, 0, usize::MAX, 0);
    let mut min_speed = f64::INFINITY;
    // upstream edge: lowest space bin per time bin
    let mut edge: std::collections::BTreeMap<usize, usize> = Default::default();
    for &c in cells {
        let (ti, xi) = (c / n_x, c % n_x);
        t_lo = t_lo.min(ti);
        t_hi = t_hi.max(ti);
        x_lo = x_lo.min(xi);
        x_hi = x_hi.max(xi);
        min_speed = min_speed.min(field.mean[c].unwrap_or(f64::INFINITY));
        let e = edge.entry(ti).or_insert(xi);
        *e = (*e).min(xi);
    }
    let pts: Vec<(f64, f64)> = edge
        .iter()
        .map(|(&ti, &xi)| (field.t_center(ti), field.x_center(xi)))
        .collect();
    WaveRegion {
        t_span: [field.t_edges[t_lo], field.t_edges[t_hi + 1]],
        x_span: [field.x_edges[x_lo], field.x_edges[x_hi + 1]],
        min_speed,
        front_slope: least_squares_slope(&pts),
        cells: cells.len(),
    }
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mx = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for &(t, x) in pts {
        num += (t - mt) * (x - mx);
        den += (t - mt) * (t - mt);
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Bins {
    pub t: f64,
    pub x: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WaveReport {
    pub road: Road,
    pub lane: Option<Lane>,
    pub threshold: f64,
    pub bins: Bins,
    pub regions: Vec<WaveRegion>,
}

/// Speed field with default bins over `[t_lo, t_hi]` and the whole road,
/// scanned for waves slower than half the free-flow speed.
pub fn wave_report(
    dataset: &Dataset,
    road: Road,
    lane: Option<Lane>,
    t_lo: f64,
    t_hi: f64,
) -> Result<WaveReport, MetricsError> {
    let t_edges = uniform_edges(t_lo, t_hi, DEFAULT_T_BIN);
    let x_edges = uniform_edges(0.0, dataset.roadspec().length, DEFAULT_X_BIN);
    let field = mean_speed_field(dataset, road, lane, &t_edges, &x_edges)?;
    let threshold = 0.5 * field.free_flow_speed().unwrap_or(0.0);
    let regions = if threshold > 0.0 {
        detect_wave(&field, threshold)
    } else {
        Vec::new()
    };
    Ok(WaveReport {
        road,
        lane,
        threshold,
        bins: Bins {
            t: DEFAULT_T_BIN,
            x: DEFAULT_X_BIN,
        },
        regions,
    })
}

/// JSON document written by the compare command.
#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    pub ego_id: String,
    pub deviation: Deviation,
    pub wave: WaveReport,
}
