use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use tgm_core::harness::{compare, run, MapperKind, Overrides, PoseMode, RunConfig};
use tgm_core::sim::{
    scenario_intersection, scenario_traffic_light, IntersectionParams, TrafficLightParams,
    WorldSpec,
};

#[derive(Parser)]
#[command(name = "tgm", version, about = "Transitional grid map scenario runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one mapper over a scenario and write images, a pose trace and a summary.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_parser = parse_mapper)]
        mapper: MapperKind,
        #[arg(long, value_parser = parse_pose, default_value = "truth")]
        pose: PoseMode,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Simulated seconds at which to write map images.
        #[arg(long = "snapshot", num_args = 1..)]
        snapshots: Vec<f64>,
        /// Sensor range override, meters.
        #[arg(long)]
        range: Option<f64>,
    },
    /// Run several mappers on one scenario and print a metrics table.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', value_parser = parse_mapper)]
        mappers: Vec<MapperKind>,
        #[arg(long, value_parser = parse_pose, default_value = "truth")]
        pose: PoseMode,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        range: Option<f64>,
    },
    /// Write a built-in scenario file.
    Scenario {
        #[arg(value_enum)]
        kind: Builtin,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Builtin {
    TrafficLight,
    Intersection,
}

fn parse_mapper(s: &str) -> Result<MapperKind, String> {
    s.parse().map_err(|e: tgm_core::Error| e.to_string())
}

fn parse_pose(s: &str) -> Result<PoseMode, String> {
    s.parse().map_err(|e: tgm_core::Error| e.to_string())
}

fn load(path: &PathBuf) -> Result<WorldSpec> {
    WorldSpec::load(path).with_context(|| format!("loading scenario {}", path.display()))
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { scenario, mapper, pose, out, seed, snapshots, range } => {
            let mut cfg = RunConfig::new(load(&scenario)?, mapper, pose);
            cfg.seed = seed;
            cfg.snapshots = snapshots;
            cfg.overrides = Overrides { max_range: range, ..Overrides::default() };
            cfg.out_dir = Some(out.clone());
            let m = run(&cfg).context("run failed")?;
            println!(
                "{}: {} frames, static accuracy {:.4}, traces {}, pose rmse {:.4} m, mean step {:.1} ms",
                cfg.label(),
                m.frames,
                m.static_accuracy,
                m.trace_count,
                m.pose_rmse,
                1e3 * m.mean_step_time()
            );
            println!("artifacts in {}", out.display());
        }
        Command::Compare { scenario, mappers, pose, out, seed, range } => {
            if mappers.len() < 2 {
                bail!("compare needs at least two mappers");
            }
            let spec = load(&scenario)?;
            let configs: Vec<RunConfig> = mappers
                .into_iter()
                .map(|m| {
                    let mut c = RunConfig::new(spec.clone(), m, pose);
                    c.seed = seed;
                    c.overrides = Overrides { max_range: range, ..Overrides::default() };
                    c
                })
                .collect();
            let table = compare(&configs, Some(&out)).context("compare failed")?;
            print!("{}", table.to_table());
        }
        Command::Scenario { kind, out } => {
            let spec = match kind {
                Builtin::TrafficLight => scenario_traffic_light(&TrafficLightParams::default()),
                Builtin::Intersection => scenario_intersection(&IntersectionParams::default()),
            };
            let text = spec.to_toml_string()?;
            match out {
                Some(path) => std::fs::write(&path, text)
                    .with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}
