//! Deterministic policy evaluation: single episodes, summaries and the four
//! evaluation protocols (slopes, obstacles, waypoint routes and the
//! friction/load sweep), plus exact replay of recorded traces.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{
    gentle_perlin, impassable_boulders, small_boulders, Env, EnvSettings, EpisodeConfig, EpisodeSpec, EpisodeTrace,
    Spawn, TargetPose, TerrainDescription, TerrainSource, Termination, TERRAIN_RESOLUTION, TERRAIN_SIZE,
};
use crate::error::{Error, Result};
use crate::heightfield::{EllipsoidGroup, Region, TerrainRecipe};
use crate::nn::{ActorCritic, Scalar};
use crate::ppo::to_input;
use crate::vehicle::Action;

/// Normalized returns above this indicate broken reward accounting.
pub const NORMALIZED_RETURN_ALARM: f64 = 1.05;

/// Episodes per slope, obstacle and sweep-cell evaluation.
pub const PROTOCOL_EPISODES: usize = 40;
/// Spawn-to-target distance of the evaluation protocols, m.
pub const PROTOCOL_DISTANCE: f64 = 20.0;
pub const PROTOCOL_MAX_STEPS: usize = 400;

/// Reference success rates on planar slopes, by angle in degrees.
pub const REFERENCE_SLOPE_SUCCESS: [(f64, f64); 2] = [(18.0, 0.925), (27.0, 0.65)];
pub const REFERENCE_OBSTACLE_SUCCESS: f64 = 0.90;
/// Reference obstacle-course normalized return, mean and SD.
pub const REFERENCE_OBSTACLE_RETURN: (f64, f64) = (0.62, 0.15);
/// Reference waypoint-route normalized return, mean and SD.
pub const REFERENCE_WAYPOINT_RETURN: (f64, f64) = (0.60, 0.12);

pub const DEFAULT_SWEEP_FRICTIONS: [f64; 10] = [0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1];
/// Payload masses of the unloaded and loaded sweep cases, kg.
pub const DEFAULT_SWEEP_LOADS: [f64; 2] = [0.0, 10_000.0];

/// Logs and flags a normalized return that exceeds the accounting bound.
pub fn return_alarm(normalized: f64) -> bool {
    let alarm = normalized > NORMALIZED_RETURN_ALARM;
    if alarm {
        log::error!("normalized return {normalized:.4} exceeds {NORMALIZED_RETURN_ALARM}; reward accounting is off");
    }
    alarm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode: usize,
    pub start_heading_deg: f64,
    pub termination: Termination,
    pub reached: bool,
    pub steps: usize,
    pub total_reward: f64,
    pub normalized_return: f64,
    pub initial_distance: f64,
    pub mean_abs_roll_deg: f64,
}

/// Drives the running episode of `env` to its end with the policy mean.
pub fn run_policy<T: Scalar>(env: &mut Env, net: &ActorCritic<T>, episode: usize) -> Result<EpisodeResult> {
    let start_heading_deg = env.spec()?.spawn.heading.to_degrees();
    let initial_distance = env.initial_distance()?;
    let mut obs = env.observe()?;
    let mut total = 0.0;
    let mut roll_sum = 0.0;
    let mut steps = 0;
    let termination = loop {
        let out = net.forward(&to_input::<T>(&obs), 1)?;
        let mu: Vec<f64> = out.mu.iter().map(|v| v.f64()).collect();
        let step = env.step(&Action::new(&mu)?)?;
        env.annotate_value(out.value[0].f64());
        total += step.reward.total;
        roll_sum += env.vehicle_state()?.roll.abs();
        steps += 1;
        if let Some(t) = step.termination {
            break t;
        }
        obs = step.observation;
    };
    let normalized_return = env.normalized_return(total)?;
    return_alarm(normalized_return);
    Ok(EpisodeResult {
        episode,
        start_heading_deg,
        termination,
        reached: termination == Termination::Target,
        steps,
        total_reward: total,
        normalized_return,
        initial_distance,
        mean_abs_roll_deg: (roll_sum / steps as f64).to_degrees(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_normalized_return: f64,
    /// Population standard deviation.
    pub std_normalized_return: f64,
    pub mean_return: f64,
    pub mean_abs_roll_deg: f64,
    /// Episode count per termination reason, every reason listed.
    pub terminations: BTreeMap<String, usize>,
    pub alarms: usize,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (mean, (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt())
}

pub fn summarize(results: &[EpisodeResult]) -> Summary {
    let mut terminations: BTreeMap<String, usize> =
        Termination::ALL.iter().map(|t| (t.as_str().to_string(), 0)).collect();
    for r in results {
        *terminations.entry(r.termination.as_str().to_string()).or_default() += 1;
    }
    let norm: Vec<f64> = results.iter().map(|r| r.normalized_return).collect();
    let (mean, std) = mean_std(&norm);
    let n = results.len().max(1) as f64;
    let successes = results.iter().filter(|r| r.reached).count();
    Summary {
        episodes: results.len(),
        successes,
        success_rate: successes as f64 / n,
        mean_normalized_return: mean,
        std_normalized_return: std,
        mean_return: results.iter().map(|r| r.total_reward).sum::<f64>() / n,
        mean_abs_roll_deg: results.iter().map(|r| r.mean_abs_roll_deg).sum::<f64>() / n,
        terminations,
        alarms: norm.iter().filter(|&&v| v > NORMALIZED_RETURN_ALARM).count(),
    }
}

/// Shared knobs of the evaluation protocols.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolOptions {
    pub episodes: usize,
    pub max_steps: usize,
    pub seed: u64,
    pub settings: EnvSettings,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        Self {
            episodes: PROTOCOL_EPISODES,
            max_steps: PROTOCOL_MAX_STEPS,
            seed: 0,
            settings: EnvSettings::default(),
        }
    }
}

fn protocol_config(terrain: TerrainSource, max_steps: usize) -> EpisodeConfig {
    let mut c = EpisodeConfig::new(terrain, PI / 3.0, max_steps);
    c.target_distance = PROTOCOL_DISTANCE;
    c.nominal_distance = PROTOCOL_DISTANCE;
    c
}

/// Runs every spec in its own environment, in parallel; results keep the
/// order of `specs`. With `trace_dir`, each episode's trace is written as
/// `episode_NN.csv` there.
pub fn run_specs<T: Scalar>(
    net: &ActorCritic<T>,
    config: &EpisodeConfig,
    settings: &EnvSettings,
    specs: &[EpisodeSpec],
    trace_dir: Option<&Path>,
) -> Result<Vec<EpisodeResult>> {
    specs
        .par_iter()
        .enumerate()
        .map(|(k, spec)| {
            let mut env = Env::new(config.clone(), settings.clone(), 0, k as u64)?;
            env.set_recording(trace_dir.is_some());
            env.start_episode(spec.clone())?;
            let result = run_policy(&mut env, net, k)?;
            if let (Some(dir), Some(trace)) = (trace_dir, env.take_trace()) {
                trace.write(trace_path(dir, k))?;
            }
            Ok(result)
        })
        .collect()
}

pub fn trace_path(dir: &Path, episode: usize) -> PathBuf {
    dir.join(format!("episode_{episode:02}.csv"))
}

/// Spawns at the terrain centre facing `2πk/n`, with the target straight
/// ahead and aligned with the spawn heading.
pub fn ring_specs(terrain: TerrainDescription, n: usize, max_steps: usize) -> Result<Vec<EpisodeSpec>> {
    let (cx, cy) = terrain.base.build()?.center();
    Ok((0..n)
        .map(|k| {
            let heading = 2.0 * PI * k as f64 / n as f64;
            EpisodeSpec {
                terrain: terrain.clone(),
                spawn: Spawn { x: cx, y: cy, heading },
                target: TargetPose {
                    x: cx + PROTOCOL_DISTANCE * heading.cos(),
                    y: cy + PROTOCOL_DISTANCE * heading.sin(),
                    heading,
                },
                max_steps,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeReport {
    pub angle_deg: f64,
    pub summary: Summary,
    /// Reference success rate at this angle, when there is one.
    pub reference_success_rate: Option<f64>,
    pub episodes: Vec<EpisodeResult>,
}

pub fn eval_slopes<T: Scalar>(net: &ActorCritic<T>, angle_deg: f64, opts: &ProtocolOptions) -> Result<SlopeReport> {
    let recipe = TerrainRecipe::Slope {
        angle_deg,
        size: TERRAIN_SIZE,
        resolution: TERRAIN_RESOLUTION,
    };
    let terrain = TerrainDescription {
        base: recipe.clone(),
        obstacles: Vec::new(),
    };
    let specs = ring_specs(terrain, opts.episodes, opts.max_steps)?;
    let config = protocol_config(TerrainSource::Fixed { recipe }, opts.max_steps);
    let episodes = run_specs(net, &config, &opts.settings, &specs, None)?;
    let reference = REFERENCE_SLOPE_SUCCESS
        .iter()
        .find(|(a, _)| (a - angle_deg).abs() < 1e-9)
        .map(|&(_, s)| s);
    if let Some(r) = reference {
        log::info!("reference success rate at {angle_deg}°: {r}");
    }
    Ok(SlopeReport {
        angle_deg,
        summary: summarize(&episodes),
        reference_success_rate: reference,
        episodes,
    })
}

/// Ground for the obstacle protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObstacleTerrain {
    /// Flat field with a seeded boulder scatter around the start.
    Boulders,
    /// Elevation file, used as is.
    Dem(PathBuf),
}

impl std::str::FromStr for ObstacleTerrain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "boulders" => Ok(Self::Boulders),
            path if Path::new(path).is_file() => Ok(Self::Dem(PathBuf::from(path))),
            other => Err(Error::Config(format!(
                "obstacle terrain must be `boulders` or an elevation file, got `{other}`"
            ))),
        }
    }
}

/// Boulders keep this far from the start so that every spawn is clear, m.
pub const OBSTACLE_CLEARANCE: f64 = 5.0;
const OBSTACLE_HALF_EXTENT: f64 = 24.0;

impl ObstacleTerrain {
    pub fn describe(&self, seed: u64) -> Result<TerrainDescription> {
        match self {
            Self::Dem(path) => Ok(TerrainDescription {
                base: TerrainRecipe::Dem { path: path.clone() },
                obstacles: Vec::new(),
            }),
            Self::Boulders => {
                let base = TerrainRecipe::Flat {
                    size: TERRAIN_SIZE,
                    resolution: TERRAIN_RESOLUTION,
                };
                let hf = base.build()?;
                let h = OBSTACLE_HALF_EXTENT;
                let region = Region::axis_aligned(-h, -h, h, h);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut obstacles = Vec::new();
                for spec in [impassable_boulders(24), small_boulders(48)] {
                    let group = EllipsoidGroup {
                        count: spec.count,
                        size_range: spec.size_range,
                        height_range: spec.height_range,
                    };
                    obstacles.extend(group.sample(&mut rng, &region, &hf)?.into_iter().filter(|e| {
                        let reach = e.semi_axes.0.max(e.semi_axes.1);
                        e.center.0.hypot(e.center.1) - reach > OBSTACLE_CLEARANCE
                    }));
                }
                Ok(TerrainDescription { base, obstacles })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleReport {
    pub terrain: ObstacleTerrain,
    pub summary: Summary,
    pub reference_success_rate: f64,
    pub reference_normalized_return: (f64, f64),
    pub episodes: Vec<EpisodeResult>,
    /// Per-episode trajectories with value estimates, when written.
    pub traces: Vec<PathBuf>,
}

/// Same starts and targets as the slope protocol on obstacle ground. With
/// `trace_dir`, per-step trajectories and value estimates are exported.
pub fn eval_obstacles<T: Scalar>(
    net: &ActorCritic<T>,
    terrain: &ObstacleTerrain,
    opts: &ProtocolOptions,
    trace_dir: Option<&Path>,
) -> Result<ObstacleReport> {
    let desc = terrain.describe(opts.seed)?;
    let specs = ring_specs(desc.clone(), opts.episodes, opts.max_steps)?;
    let config = protocol_config(TerrainSource::Fixed { recipe: desc.base }, opts.max_steps);
    if let Some(dir) = trace_dir {
        fs::create_dir_all(dir)?;
    }
    let episodes = run_specs(net, &config, &opts.settings, &specs, trace_dir)?;
    let traces = match trace_dir {
        Some(dir) => (0..episodes.len()).map(|k| trace_path(dir, k)).collect(),
        None => Vec::new(),
    };
    Ok(ObstacleReport {
        terrain: terrain.clone(),
        summary: summarize(&episodes),
        reference_success_rate: REFERENCE_OBSTACLE_SUCCESS,
        reference_normalized_return: REFERENCE_OBSTACLE_RETURN,
        episodes,
        traces,
    })
}

/// Reads a route: one `x y heading_deg` waypoint per line; blank lines and
/// `#` comments are skipped.
pub fn parse_route(text: &str, path: &Path) -> Result<Vec<TargetPose>> {
    let mut route = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let fields: Vec<f64> = line
            .split_whitespace()
            .map(|f| f.parse::<f64>().map_err(|_| err(format!("bad number `{f}`"))))
            .collect::<Result<_>>()?;
        if fields.len() != 3 || fields.iter().any(|v| !v.is_finite()) {
            return Err(err(format!("expected `x y heading_deg`, got `{line}`")));
        }
        route.push(TargetPose {
            x: fields[0],
            y: fields[1],
            heading: fields[2].to_radians(),
        });
    }
    if route.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "route has no waypoints".into(),
        });
    }
    Ok(route)
}

pub fn load_route(path: impl AsRef<Path>) -> Result<Vec<TargetPose>> {
    let path = path.as_ref();
    parse_route(&fs::read_to_string(path)?, path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegResult {
    pub leg: usize,
    pub target_x: f64,
    pub target_y: f64,
    pub target_heading_deg: f64,
    pub reached: bool,
    /// `None` when the route ended before this leg started.
    pub termination: Option<Termination>,
    pub steps: usize,
    pub initial_distance: f64,
    pub normalized_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteReport {
    pub legs: Vec<LegResult>,
    pub reached: usize,
    /// Mean over all legs; legs never started count as zero.
    pub mean_normalized_return: f64,
    pub reference_normalized_return: (f64, f64),
}

/// Drives a route leg by leg, each leg normalized by its own start
/// distance. A leg that ends without reaching its waypoint hands over to
/// the next one from wherever the vehicle stopped; after a failure ending
/// (rollover, chassis contact, divergence) the remaining legs are not run.
pub fn eval_waypoints<T: Scalar>(
    net: &ActorCritic<T>,
    terrain: &TerrainRecipe,
    route: &[TargetPose],
    start: Option<Spawn>,
    opts: &ProtocolOptions,
) -> Result<RouteReport> {
    let first = *route
        .first()
        .ok_or_else(|| Error::Config("route has no waypoints".into()))?;
    let spawn = match start {
        Some(s) => s,
        None => {
            let (cx, cy) = terrain.build()?.center();
            Spawn {
                x: cx,
                y: cy,
                heading: (first.y - cy).atan2(first.x - cx),
            }
        }
    };
    let config = protocol_config(
        TerrainSource::Fixed {
            recipe: terrain.clone(),
        },
        opts.max_steps,
    );
    let mut env = Env::new(config, opts.settings.clone(), opts.seed, 0)?;
    env.start_episode(EpisodeSpec {
        terrain: TerrainDescription {
            base: terrain.clone(),
            obstacles: Vec::new(),
        },
        spawn,
        target: first,
        max_steps: opts.max_steps,
    })?;

    let mut legs = Vec::with_capacity(route.len());
    let mut alive = true;
    for (i, wp) in route.iter().enumerate() {
        let mut leg = LegResult {
            leg: i,
            target_x: wp.x,
            target_y: wp.y,
            target_heading_deg: wp.heading.to_degrees(),
            reached: false,
            termination: None,
            steps: 0,
            initial_distance: 0.0,
            normalized_return: 0.0,
        };
        if alive {
            if i > 0 {
                env.retarget(*wp, opts.max_steps)?;
            }
            let r = run_policy(&mut env, net, i)?;
            leg.reached = r.reached;
            leg.termination = Some(r.termination);
            leg.steps = r.steps;
            leg.initial_distance = r.initial_distance;
            leg.normalized_return = r.normalized_return;
            alive = !r.termination.is_failure();
        }
        legs.push(leg);
    }
    let n = legs.len() as f64;
    Ok(RouteReport {
        reached: legs.iter().filter(|l| l.reached).count(),
        mean_normalized_return: legs.iter().map(|l| l.normalized_return).sum::<f64>() / n,
        reference_normalized_return: REFERENCE_WAYPOINT_RETURN,
        legs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub friction: f64,
    pub payload_mass: f64,
    /// Mass of every body in the simulated vehicle, kg.
    pub total_mass: f64,
    pub summary: Summary,
    pub normalized_returns: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub cells: Vec<SweepCell>,
}

/// Lesson-1 ground with targets `PROTOCOL_DISTANCE` away on bearings
/// within ±π/3. The same episodes are replayed in every cell.
pub fn sweep_specs(opts: &ProtocolOptions) -> Result<(EpisodeConfig, Vec<EpisodeSpec>)> {
    let config = protocol_config(
        TerrainSource::RandomPerlin {
            params: gentle_perlin(),
            size: TERRAIN_SIZE,
            resolution: TERRAIN_RESOLUTION,
        },
        opts.max_steps,
    );
    let mut env = Env::new(config.clone(), opts.settings.clone(), opts.seed, 0)?;
    let mut specs = Vec::with_capacity(opts.episodes);
    for _ in 0..opts.episodes {
        env.reset()?;
        specs.push(env.spec()?.clone());
    }
    Ok((config, specs))
}

pub fn sweep<T: Scalar>(
    net: &ActorCritic<T>,
    frictions: &[f64],
    loads: &[f64],
    opts: &ProtocolOptions,
) -> Result<SweepReport> {
    if frictions.is_empty() || loads.is_empty() {
        return Err(Error::Config("sweep needs at least one friction and one load".into()));
    }
    let (config, specs) = sweep_specs(opts)?;
    let mut cells = Vec::with_capacity(frictions.len() * loads.len());
    for &payload_mass in loads {
        for &friction in frictions {
            let mut settings = opts.settings.clone();
            settings.solver.friction = friction;
            settings.vehicle.payload_mass = payload_mass;
            let total_mass = {
                let mut env = Env::new(config.clone(), settings.clone(), 0, 0)?;
                env.start_episode(specs[0].clone())?;
                env.world()?.bodies().iter().map(|b| b.mass()).sum()
            };
            let episodes = run_specs(net, &config, &settings, &specs, None)?;
            log::info!(
                "sweep μ={friction} payload={payload_mass} kg: mean normalized return {:.3}",
                summarize(&episodes).mean_normalized_return
            );
            cells.push(SweepCell {
                friction,
                payload_mass,
                total_mass,
                summary: summarize(&episodes),
                normalized_returns: episodes.iter().map(|e| e.normalized_return).collect(),
            });
        }
    }
    Ok(SweepReport { cells })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub steps: usize,
    /// First step whose pose or reward differs from the recording.
    pub first_mismatch: Option<usize>,
    pub total_reward: f64,
    pub recorded_termination: Option<Termination>,
    pub termination: Option<Termination>,
}

impl ReplayReport {
    pub fn exact(&self) -> bool {
        self.first_mismatch.is_none() && self.termination == self.recorded_termination
    }
}

/// Re-simulates a recorded episode from its actions and compares every
/// step bit for bit.
pub fn replay(trace: &EpisodeTrace) -> Result<ReplayReport> {
    let mut env = Env::new(trace.config.clone(), trace.settings.clone(), 0, 0)?;
    env.start_episode(trace.spec.clone())?;
    let mut report = ReplayReport {
        steps: 0,
        first_mismatch: None,
        total_reward: 0.0,
        recorded_termination: trace.termination,
        termination: None,
    };
    for (row, action) in trace.rows.iter().zip(trace.actions()) {
        let out = env.step(&action)?;
        let p = env.vehicle_state()?.position;
        report.steps += 1;
        report.total_reward += out.reward.total;
        if report.first_mismatch.is_none() && ([p.x, p.y, p.z] != row.position || out.reward.total != row.reward.total) {
            report.first_mismatch = Some(row.step);
        }
        if out.done {
            report.termination = out.termination;
            break;
        }
    }
    Ok(report)
}

pub fn write_json(path: impl AsRef<Path>, value: &impl Serialize) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// One CSV row per record, columns from the field names.
pub fn write_csv_rows<R: Serialize>(path: impl AsRef<Path>, rows: &[R]) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
