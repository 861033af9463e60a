//! Command implementations behind the `ghostwave` binary. Each command
//! returns a typed error whose [`CliError::exit_code`] is the process exit
//! status: 0 success, 1 I/O, 2 configuration, 3 no ego candidate.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::cosim::{self, CosimError, SimConfig};
use crate::data::{load_dataset_file, DataError, Dataset, Lane, RoadSpec};
use crate::metrics::{
    self, ego_deviation, ego_track_from_rows, export_log, read_log, render_time_space,
    CompareReport, EgoTrack, MetricsError, RenderOptions, SimLog, Termination, Window,
};
use crate::synthgen::{self, SynthConfig, SynthError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    NoCandidate(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::NoCandidate(_) => 3,
        }
    }
}

fn io_err(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io(_) => CliError::Io(e.to_string()),
            DataError::NoCandidate { .. } => CliError::NoCandidate(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Io(_) | MetricsError::Csv(_) => CliError::Io(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<CosimError> for CliError {
    fn from(e: CosimError) -> Self {
        match e {
            CosimError::NoCandidate(d) => CliError::NoCandidate(d.to_string()),
            CosimError::Config(m) => CliError::Config(m),
            CosimError::Microsim(m) => CliError::Config(format!("simulation failed: {m}")),
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_err(path, e))
}

fn load_data(path: &Path) -> Result<Dataset, CliError> {
    load_dataset_file(path, RoadSpec::i24()).map_err(|e| match e {
        DataError::Io(io) => io_err(path, io),
        other => CliError::Config(format!("{}: {other}", path.display())),
    })
}

/// Scenario document: dataset, simulation config and output paths.
/// Relative paths are resolved against the scenario file's directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub dataset: PathBuf,
    pub sim: SimConfig,
    pub outputs: Outputs,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub log: PathBuf,
    #[serde(default)]
    pub svg: Option<PathBuf>,
    #[serde(default)]
    pub report: Option<PathBuf>,
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<ScenarioFile, CliError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let mut sc: ScenarioFile = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        sc.sim
            .validate()
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut sc.dataset);
        resolve(&mut sc.outputs.log);
        if let Some(p) = sc.outputs.svg.as_mut() {
            resolve(p);
        }
        if let Some(p) = sc.outputs.report.as_mut() {
            resolve(p);
        }
        Ok(sc)
    }
}

pub struct GenerateArgs {
    pub preset: Option<String>,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub output: PathBuf,
}

/// Writes a synthetic dataset. Returns the number of records.
pub fn cmd_generate(args: &GenerateArgs) -> Result<usize, CliError> {
    let mut cfg = match (&args.preset, &args.config) {
        (Some(name), None) => SynthConfig::preset(name).ok_or_else(|| {
            CliError::Config(format!(
                "unknown preset {name:?} (available: {})",
                synthgen::PRESETS.join(", ")
            ))
        })?,
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            SynthConfig::from_json(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        _ => {
            return Err(CliError::Config(
                "give exactly one of --preset or --config".into(),
            ))
        }
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let data = synthgen::generate(&cfg).map_err(|e| match e {
        SynthError::Data(d) => CliError::from(d),
        other => CliError::Config(other.to_string()),
    })?;
    let mut out = create(&args.output)?;
    data.export_csv(&mut out)?;
    out.flush().map_err(|e| io_err(&args.output, e))?;
    Ok(data.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSummary {
    pub termination: Termination,
    pub steps: usize,
    pub ego_id: String,
    pub final_x: f64,
    pub final_vel: f64,
}

impl fmt::Display for SimulateSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "termination={} steps={} ego={} x={:.3} vel={:.3}",
            self.termination, self.steps, self.ego_id, self.final_x, self.final_vel
        )
    }
}

fn write_log(log: &SimLog, path: &Path) -> Result<(), CliError> {
    let mut out = create(path)?;
    export_log(log, &mut out)?;
    out.flush().map_err(|e| io_err(path, e))
}

/// Runs a scenario file, writing the log (and the diagram and report when
/// the scenario names them).
pub fn cmd_simulate(scenario: &Path) -> Result<SimulateSummary, CliError> {
    let sc = ScenarioFile::load(scenario)?;
    let data = load_data(&sc.dataset)?;
    let log = cosim::run(&data, &sc.sim)?;
    write_log(&log, &sc.outputs.log)?;
    let track = log.ego_track();
    if let Some(svg) = &sc.outputs.svg {
        render_to(&track, &data, None, None, None, svg)?;
    }
    if let Some(report) = &sc.outputs.report {
        compare_to(&track, &data, report)?;
    }
    let ego = log.final_ego();
    Ok(SimulateSummary {
        termination: log.termination,
        steps: log.steps(),
        ego_id: log.ego_id().to_string(),
        final_x: ego.x,
        final_vel: ego.vel,
    })
}

fn read_track(path: &Path) -> Result<EgoTrack, CliError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let rows = read_log(BufReader::new(file)).map_err(|e| match e {
        MetricsError::Csv(c) if c.is_io_error() => io_err(path, c),
        other => CliError::Config(format!("{}: {other}", path.display())),
    })?;
    Ok(ego_track_from_rows(&rows)?)
}

fn render_to(
    track: &EgoTrack,
    data: &Dataset,
    lane: Option<Lane>,
    t0: Option<f64>,
    t1: Option<f64>,
    output: &Path,
) -> Result<(), CliError> {
    let start = track.points[0].t;
    let end = track.points[track.points.len() - 1].t;
    let t_lo = t0.map_or(start, |o| start + o);
    // a zero-step log still gets a drawable default window
    let t_hi = t1.map_or(end.max(t_lo + 1.0), |o| start + o);
    let opts = RenderOptions {
        window: Window {
            t: [t_lo, t_hi],
            x: [0.0, data.roadspec().length],
        },
        lane,
        road: data.track(&track.id).map(|tr| tr.road),
        free_flow: 30.0,
    };
    // render into memory first so a failed render leaves no file behind
    let mut buf = Vec::new();
    render_time_space(track, data, &opts, &mut buf)?;
    let mut out = create(output)?;
    out.write_all(&buf).map_err(|e| io_err(output, e))?;
    out.flush().map_err(|e| io_err(output, e))
}

fn compare_to(track: &EgoTrack, data: &Dataset, output: &Path) -> Result<CompareReport, CliError> {
    let deviation = ego_deviation(track, data)?;
    let recorded = data
        .track(&track.id)
        .ok_or_else(|| CliError::Config(format!("ego {:?} not in dataset", track.id)))?;
    let lane = recorded.samples[0].lane;
    let (t_lo, t_hi) = data.t_span().expect("dataset holds the ego");
    let wave = metrics::wave_report(data, recorded.road, Some(lane), t_lo, t_hi)?;
    let report = CompareReport {
        ego_id: track.id.clone(),
        deviation,
        wave,
    };
    let mut out = create(output)?;
    serde_json::to_writer_pretty(&mut out, &report).map_err(|e| io_err(output, e))?;
    out.write_all(b"\n").map_err(|e| io_err(output, e))?;
    out.flush().map_err(|e| io_err(output, e))?;
    Ok(report)
}

pub struct RenderArgs {
    pub log: PathBuf,
    pub dataset: PathBuf,
    pub lane: Option<Lane>,
    /// Window start, seconds after the first log entry.
    pub t0: Option<f64>,
    /// Window end, seconds after the first log entry.
    pub t1: Option<f64>,
    pub output: PathBuf,
}

pub fn cmd_render(args: &RenderArgs) -> Result<(), CliError> {
    let track = read_track(&args.log)?;
    let data = load_data(&args.dataset)?;
    render_to(&track, &data, args.lane, args.t0, args.t1, &args.output)
}

pub struct CompareArgs {
    pub log: PathBuf,
    pub dataset: PathBuf,
    pub output: PathBuf,
}

pub fn cmd_compare(args: &CompareArgs) -> Result<CompareReport, CliError> {
    let track = read_track(&args.log)?;
    let data = load_data(&args.dataset)?;
    compare_to(&track, &data, &args.output)
}
