use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use forwarder_core::env::{EnvSettings, EpisodeTrace, Spawn, TERRAIN_RESOLUTION, TERRAIN_SIZE};
use forwarder_core::harness::{self, ObstacleTerrain, ProtocolOptions, RunConfig};
use forwarder_core::heightfield::TerrainRecipe;
use forwarder_core::nn::{checkpoint, ActorCritic};

#[derive(Parser)]
#[command(name = "forwarder", version, about = "Train and evaluate a terrain-driving policy for a six-wheeled forwarder")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the lesson curriculum described by a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "runs/train")]
        out: PathBuf,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the configured worker count.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Drive 40 headings on a planar incline.
    EvalSlopes {
        #[command(flatten)]
        common: EvalArgs,
        /// Incline in degrees.
        #[arg(long)]
        angle: f64,
    },
    /// Drive 40 headings through a boulder field and export value traces.
    EvalObstacles {
        #[command(flatten)]
        common: EvalArgs,
        /// `boulders` or an elevation grid file.
        #[arg(long, default_value = "boulders")]
        terrain: String,
    },
    /// Follow a waypoint route (`x y heading_deg` per line).
    EvalWaypoints {
        #[command(flatten)]
        common: EvalArgs,
        #[arg(long)]
        route_file: PathBuf,
        /// `flat`, `perlin:<seed>` or an elevation grid file.
        #[arg(long, default_value = "flat")]
        terrain: String,
        /// Start pose `x,y,heading_deg`; defaults to the terrain centre
        /// facing the first waypoint.
        #[arg(long)]
        start: Option<String>,
    },
    /// Evaluate over a grid of ground friction and payload mass.
    Sweep {
        #[command(flatten)]
        common: EvalArgs,
        #[arg(long, value_delimiter = ',', default_values_t = harness::DEFAULT_SWEEP_FRICTIONS)]
        frictions: Vec<f64>,
        /// Payload masses in kg.
        #[arg(long, value_delimiter = ',', default_values_t = harness::DEFAULT_SWEEP_LOADS)]
        loads: Vec<f64>,
    },
    /// Re-simulate a recorded episode trace and check it step by step.
    Replay {
        #[arg(long)]
        trace: PathBuf,
    },
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Run config whose vehicle, solver and reward settings apply.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, default_value_t = harness::PROTOCOL_EPISODES)]
    episodes: usize,
    #[arg(long, default_value_t = harness::PROTOCOL_MAX_STEPS)]
    max_steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl EvalArgs {
    fn load(&self) -> Result<(ActorCritic<f32>, ProtocolOptions)> {
        let net = checkpoint::load(&self.checkpoint)
            .with_context(|| format!("loading checkpoint {}", self.checkpoint.display()))?;
        let settings = match &self.config {
            Some(p) => RunConfig::load(p)?.env,
            None => EnvSettings::default(),
        };
        let opts = ProtocolOptions {
            episodes: self.episodes,
            max_steps: self.max_steps,
            seed: self.seed,
            settings,
        };
        Ok((net, opts))
    }
}

fn parse_terrain(s: &str) -> Result<TerrainRecipe> {
    if s == "flat" {
        return Ok(TerrainRecipe::Flat {
            size: TERRAIN_SIZE,
            resolution: TERRAIN_RESOLUTION,
        });
    }
    if let Some(seed) = s.strip_prefix("perlin:") {
        return Ok(TerrainRecipe::Perlin {
            seed: seed.parse().context("perlin seed")?,
            params: forwarder_core::env::gentle_perlin(),
            size: TERRAIN_SIZE,
            resolution: TERRAIN_RESOLUTION,
        });
    }
    if Path::new(s).is_file() {
        return Ok(TerrainRecipe::Dem { path: s.into() });
    }
    bail!("terrain must be `flat`, `perlin:<seed>` or an elevation grid file, got `{s}`")
}

fn parse_start(s: &str) -> Result<Spawn> {
    let v: Vec<f64> = s
        .split(',')
        .map(|f| f.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .context("start pose")?;
    match v[..] {
        [x, y, h] => Ok(Spawn {
            x,
            y,
            heading: h.to_radians(),
        }),
        _ => bail!("start pose must be `x,y,heading_deg`, got `{s}`"),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            out,
            seed,
            workers,
        } => {
            let mut run = RunConfig::load(&config)?;
            if let Some(s) = seed {
                run.seed = s;
            }
            if let Some(w) = workers {
                run.workers = w;
            }
            let summary = harness::train(&run, &out)?;
            for l in &summary.lessons {
                println!(
                    "lesson {}: {} steps, best eval {}, checkpoint {}",
                    l.lesson,
                    l.steps,
                    l.best_eval.map_or("n/a".into(), |v| format!("{v:.3}")),
                    out.join(&l.best_checkpoint).display()
                );
            }
            println!("metrics: {}", summary.metrics.display());
        }
        Command::EvalSlopes { common, angle } => {
            let (net, opts) = common.load()?;
            let report = harness::eval_slopes(&net, angle, &opts)?;
            harness::write_csv_rows(common.out.join("episodes.csv"), &report.episodes)?;
            harness::write_json(common.out.join("report.json"), &report)?;
            let s = &report.summary;
            println!(
                "slope {angle}°: success {:.3}, normalized return {:.3} ± {:.3}, mean |roll| {:.1}°{}",
                s.success_rate,
                s.mean_normalized_return,
                s.std_normalized_return,
                s.mean_abs_roll_deg,
                report
                    .reference_success_rate
                    .map_or(String::new(), |r| format!(" (reference success {r})"))
            );
        }
        Command::EvalObstacles { common, terrain } => {
            let (net, opts) = common.load()?;
            let terrain: ObstacleTerrain = terrain.parse()?;
            let report = harness::eval_obstacles(&net, &terrain, &opts, Some(&common.out.join("traces")))?;
            harness::write_csv_rows(common.out.join("episodes.csv"), &report.episodes)?;
            harness::write_json(common.out.join("report.json"), &report)?;
            let s = &report.summary;
            println!(
                "obstacles: success {:.3}, normalized return {:.3} ± {:.3} (reference {} and {:.2} ± {:.2})",
                s.success_rate,
                s.mean_normalized_return,
                s.std_normalized_return,
                report.reference_success_rate,
                report.reference_normalized_return.0,
                report.reference_normalized_return.1
            );
        }
        Command::EvalWaypoints {
            common,
            route_file,
            terrain,
            start,
        } => {
            let (net, opts) = common.load()?;
            let route = harness::load_route(&route_file)?;
            let start = start.as_deref().map(parse_start).transpose()?;
            let report = harness::eval_waypoints(&net, &parse_terrain(&terrain)?, &route, start, &opts)?;
            harness::write_csv_rows(common.out.join("legs.csv"), &report.legs)?;
            harness::write_json(common.out.join("report.json"), &report)?;
            println!(
                "route: {}/{} waypoints reached, normalized return {:.3} (reference {:.2} ± {:.2})",
                report.reached,
                report.legs.len(),
                report.mean_normalized_return,
                report.reference_normalized_return.0,
                report.reference_normalized_return.1
            );
        }
        Command::Sweep {
            common,
            frictions,
            loads,
        } => {
            let (net, opts) = common.load()?;
            let report = harness::sweep(&net, &frictions, &loads, &opts)?;
            harness::write_json(common.out.join("report.json"), &report)?;
            println!("{:>6} {:>9} {:>8} {:>8} {:>8}", "mu", "load_kg", "success", "mean", "sd");
            for c in &report.cells {
                println!(
                    "{:>6.2} {:>9.0} {:>8.3} {:>8.3} {:>8.3}",
                    c.friction,
                    c.payload_mass,
                    c.summary.success_rate,
                    c.summary.mean_normalized_return,
                    c.summary.std_normalized_return
                );
            }
        }
        Command::Replay { trace } => {
            let t = EpisodeTrace::read(&trace)?;
            let report = harness::replay(&t)?;
            println!(
                "replayed {} of {} steps, total reward {:.6}, termination {}",
                report.steps,
                t.rows.len(),
                report.total_reward,
                report.termination.map_or("none".into(), |t| t.to_string())
            );
            match report.first_mismatch {
                None if report.exact() => println!("trajectory reproduced exactly"),
                None => bail!("termination differs from the recording"),
                Some(step) => bail!("trajectory diverges from the recording at step {step}"),
            }
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    run(Cli::parse())
}
