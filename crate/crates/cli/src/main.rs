use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ghostwave::cli::{
    cmd_compare, cmd_generate, cmd_render, cmd_simulate, CliError, CompareArgs, GenerateArgs,
    RenderArgs,
};
use ghostwave::data::Lane;

#[derive(Parser)]
#[command(
    name = "ghostwave",
    version,
    about = "Ghost-cell boundary-driven traffic cosimulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic trajectory dataset.
    Generate {
        #[arg(long, conflicts_with = "config", required_unless_present = "config")]
        preset: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short = 'o', long = "output")]
        output: PathBuf,
    },
    /// Run a scenario file and write its log.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Draw a time-space diagram of a log over its dataset.
    Render {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Restrict recorded trajectories to one lane (-1 .. -4).
        #[arg(long, allow_hyphen_values = true, value_parser = parse_lane)]
        lane: Option<Lane>,
        /// Window start, seconds after the first log entry.
        #[arg(long, allow_hyphen_values = true)]
        t0: Option<f64>,
        /// Window end, seconds after the first log entry.
        #[arg(long, allow_hyphen_values = true)]
        t1: Option<f64>,
        #[arg(short = 'o', long = "output")]
        output: PathBuf,
    },
    /// Score the simulated ego against its recording and write a JSON report.
    Compare {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(short = 'o', long = "output")]
        output: PathBuf,
    },
}

fn parse_lane(s: &str) -> Result<Lane, String> {
    let v: i64 = s.parse().map_err(|_| format!("not a lane id: {s}"))?;
    Lane::try_from(v)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate {
            preset,
            config,
            seed,
            output,
        } => {
            let n = cmd_generate(&GenerateArgs {
                preset,
                config,
                seed,
                output: output.clone(),
            })?;
            println!("wrote {n} records to {}", output.display());
        }
        Command::Simulate { scenario } => {
            println!("{}", cmd_simulate(&scenario)?);
        }
        Command::Render {
            log,
            dataset,
            lane,
            t0,
            t1,
            output,
        } => {
            cmd_render(&RenderArgs {
                log,
                dataset,
                lane,
                t0,
                t1,
                output: output.clone(),
            })?;
            println!("wrote {}", output.display());
        }
        Command::Compare {
            log,
            dataset,
            output,
        } => {
            let r = cmd_compare(&CompareArgs {
                log,
                dataset,
                output,
            })?;
            let d = r.deviation;
            println!(
                "rmse_x={:.4} rmse_v={:.4} max_abs_x={:.4} compared={} excluded={} wave_regions={}",
                d.rmse_x,
                d.rmse_v,
                d.max_abs_x,
                d.compared,
                d.excluded,
                r.wave.regions.len()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
