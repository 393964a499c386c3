//! Episode lifecycle: spawning, observation, reward and termination.

mod config;
mod target;
mod trace;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use config::{
    gentle_perlin, hilly_perlin, impassable_boulders, lesson_config, small_boulders, CorridorSpec, EpisodeConfig,
    ObstacleSpec, TerrainSource, TERRAIN_RESOLUTION, TERRAIN_SIZE,
};
pub use target::{sample_bearing, sample_target, Spawn, TargetPose};
pub use trace::{sidecar_path, EpisodeTrace, TraceRow};

use crate::error::{Error, Result};
use crate::heightfield::{local_height_map, stamp_ellipsoids, EllipsoidGroup, HeightField, Region, SemiEllipsoid, TerrainRecipe};
use crate::reward::{self, RewardBreakdown, RewardConstants, RewardInputs};
use crate::sim::{SolverConfig, World, TIMESTEP};
use crate::vehicle::{Action, Placement, VehicleConstants, VehicleModel, VehicleState, WHEEL_COUNT};

pub const OBS_DIM: usize = 634;
pub const MAP_LEN: usize = 600;
pub mod obs_index {
    pub const TARGET: usize = 600;
    pub const VELOCITY: usize = 603;
    pub const ROLL_PITCH: usize = 606;
    pub const ARTICULATION: usize = 608;
    pub const PISTONS: usize = 610;
    pub const SLIP_LONG: usize = 616;
    pub const SLIP_ANGLE: usize = 622;
    pub const LOADS: usize = 628;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Target,
    Timeout,
    Rollover,
    ChassisContact,
    Overshoot,
    /// The physics solver diverged; treated as a failure.
    Unstable,
}

impl Termination {
    pub const ALL: [Termination; 6] = [
        Termination::Target,
        Termination::Timeout,
        Termination::Rollover,
        Termination::ChassisContact,
        Termination::Overshoot,
        Termination::Unstable,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Target => "target",
            Termination::Timeout => "timeout",
            Termination::Rollover => "rollover",
            Termination::ChassisContact => "chassis-contact",
            Termination::Overshoot => "overshoot",
            Termination::Unstable => "unstable",
        }
    }

    /// Whether the episode ended for a reason other than success or the
    /// step limit (no bootstrapping past it).
    pub fn is_failure(self) -> bool {
        !matches!(self, Termination::Target | Termination::Timeout)
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Termination {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Termination::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown termination reason `{s}`")))
    }
}

/// Terrain plus the boulders stamped on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainDescription {
    pub base: TerrainRecipe,
    #[serde(default)]
    pub obstacles: Vec<SemiEllipsoid>,
}

/// Everything needed to recreate an episode exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub terrain: TerrainDescription,
    pub spawn: Spawn,
    pub target: TargetPose,
    pub max_steps: usize,
}

/// Static settings shared by all episodes of one environment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSettings {
    pub vehicle: VehicleConstants,
    pub solver: SolverConfig,
    pub reward: RewardConstants,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: RewardBreakdown,
    pub done: bool,
    pub termination: Option<Termination>,
}

struct Episode {
    spec: EpisodeSpec,
    terrain: Arc<HeightField>,
    world: World,
    vehicle: VehicleModel,
    /// Start of the current leg (along-track origin).
    leg_start: (f64, f64),
    target: TargetPose,
    max_steps: usize,
    /// Distance to the target at the start of the leg.
    d0: f64,
    d_prev: f64,
    steps: usize,
    done: bool,
    termination: Option<Termination>,
}

pub struct Env {
    config: EpisodeConfig,
    settings: EnvSettings,
    k_tar: f64,
    rng: ChaCha8Rng,
    cache: Vec<(TerrainRecipe, Arc<HeightField>)>,
    episode: Option<Episode>,
    trace: Option<EpisodeTrace>,
    record: bool,
}

fn horizontal_distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

impl Env {
    /// Environment drawing episodes from `config`; `stream` selects an
    /// independent random substream of `seed` (one per worker).
    pub fn new(config: EpisodeConfig, settings: EnvSettings, seed: u64, stream: u64) -> Result<Self> {
        config.validate()?;
        settings.vehicle.validate()?;
        settings.reward.validate()?;
        let k_tar = settings.reward.k_tar(config.nominal_distance);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Ok(Self {
            config,
            settings,
            k_tar,
            rng,
            cache: Vec::new(),
            episode: None,
            trace: None,
            record: false,
        })
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.config
    }

    pub fn settings(&self) -> &EnvSettings {
        &self.settings
    }

    pub fn k_tar(&self) -> f64 {
        self.k_tar
    }

    /// Maximum undiscounted return of an episode from the nominal distance.
    pub fn max_return(&self) -> f64 {
        reward::max_return(&self.settings.reward, self.k_tar, self.config.nominal_distance)
    }

    /// Keep a per-step trace of subsequent episodes.
    pub fn set_recording(&mut self, on: bool) {
        self.record = on;
        if !on {
            self.trace = None;
        }
    }

    pub fn trace(&self) -> Option<&EpisodeTrace> {
        self.trace.as_ref()
    }

    pub fn take_trace(&mut self) -> Option<EpisodeTrace> {
        self.trace.take()
    }

    /// Reseeds the episode generator and starts a new episode.
    pub fn reset_seeded(&mut self, seed: u64) -> Result<Vec<f64>> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.reset()
    }

    /// Starts a new random episode, resampling the spawn when it lands on
    /// impassable geometry.
    pub fn reset(&mut self) -> Result<Vec<f64>> {
        let attempts = self.config.spawn_attempts;
        for _ in 0..attempts {
            let (spec, terrain) = self.sample_episode()?;
            if let Some(obs) = self.try_start(spec, terrain, true)? {
                return Ok(obs);
            }
        }
        Err(Error::Spawn { attempts })
    }

    /// Starts the episode described by `spec` exactly.
    pub fn reset_to(&mut self, spec: EpisodeSpec) -> Result<Vec<f64>> {
        let terrain = self.build_terrain(&spec.terrain)?;
        self.try_start(spec, terrain, true)?.ok_or(Error::Spawn { attempts: 1 })
    }

    /// Starts `spec` without screening the settled pose for chassis contact
    /// or excess roll, for protocols whose start poses are fixed; a bad
    /// start then ends on the first step. Only a diverging settle fails.
    pub fn start_episode(&mut self, spec: EpisodeSpec) -> Result<Vec<f64>> {
        let terrain = self.build_terrain(&spec.terrain)?;
        self.try_start(spec, terrain, false)?.ok_or(Error::Spawn { attempts: 1 })
    }

    fn base_terrain(&mut self, recipe: &TerrainRecipe) -> Result<Arc<HeightField>> {
        let cacheable = !matches!(recipe, TerrainRecipe::Perlin { .. });
        if let Some((_, hf)) = self.cache.iter().find(|(r, _)| r == recipe) {
            return Ok(hf.clone());
        }
        let hf = Arc::new(recipe.build()?);
        if cacheable {
            self.cache.push((recipe.clone(), hf.clone()));
        }
        Ok(hf)
    }

    fn build_terrain(&mut self, desc: &TerrainDescription) -> Result<Arc<HeightField>> {
        let base = self.base_terrain(&desc.base)?;
        if desc.obstacles.is_empty() {
            Ok(base)
        } else {
            Ok(Arc::new(stamp_ellipsoids(&base, &desc.obstacles)))
        }
    }

    fn sample_episode(&mut self) -> Result<(EpisodeSpec, Arc<HeightField>)> {
        let recipe = match &self.config.terrain {
            TerrainSource::Fixed { recipe } => recipe.clone(),
            TerrainSource::RandomPerlin {
                params,
                size,
                resolution,
            } => TerrainRecipe::Perlin {
                seed: self.rng.next_u64(),
                params: *params,
                size: *size,
                resolution: *resolution,
            },
            TerrainSource::DemPool { paths } => {
                let k = self.rng.random_range(0..paths.len());
                TerrainRecipe::Dem { path: paths[k].clone() }
            }
        };
        let base = self.base_terrain(&recipe)?;
        let (cx, cy) = base.center();
        let h = self.config.spawn_half_extent;
        let spawn = Spawn {
            x: cx + self.rng.random_range(-h..=h),
            y: cy + self.rng.random_range(-h..=h),
            heading: self.rng.random_range(0.0..2.0 * PI),
        };
        let target = sample_target(&spawn, self.config.phi_max, self.config.target_distance, &mut self.rng);

        let mut obstacles = Vec::new();
        if !self.config.obstacles.is_empty() {
            let c = self.config.corridor;
            let (dx, dy) = (target.x - spawn.x, target.y - spawn.y);
            let len = dx.hypot(dy);
            let (ux, uy) = (dx / len, dy / len);
            let start = (spawn.x + ux * c.start_offset, spawn.y + uy * c.start_offset);
            let end = (target.x - ux * c.end_margin, target.y - uy * c.end_margin);
            let region = Region::corridor(start, end, c.width);
            for group in &self.config.obstacles {
                let g = EllipsoidGroup {
                    count: group.count,
                    size_range: group.size_range,
                    height_range: group.height_range,
                };
                obstacles.extend(g.sample(&mut self.rng, &region, &base)?);
            }
        }
        let terrain = if obstacles.is_empty() {
            base
        } else {
            Arc::new(stamp_ellipsoids(&base, &obstacles))
        };
        let spec = EpisodeSpec {
            terrain: TerrainDescription {
                base: recipe,
                obstacles,
            },
            spawn,
            target,
            max_steps: self.config.max_steps,
        };
        Ok((spec, terrain))
    }

    /// Builds and settles the vehicle; `None` when the spawn is unusable.
    fn try_start(&mut self, spec: EpisodeSpec, terrain: Arc<HeightField>, screen: bool) -> Result<Option<Vec<f64>>> {
        self.episode = None;
        let settings = &self.settings;
        let mut world = World::new(terrain.clone(), settings.solver.clone())?;
        let c = &settings.vehicle;
        let reference_x = c.reference_x();
        let (s, co) = spec.spawn.heading.sin_cos();
        let placement = Placement {
            x: spec.spawn.x - co * reference_x,
            y: spec.spawn.y - s * reference_x,
            yaw: spec.spawn.heading,
        };
        let mut vehicle = VehicleModel::build(&mut world, c, placement)?;
        match vehicle.settle(&mut world, self.config.settle_steps) {
            Ok(()) => {}
            Err(Error::SimulationUnstable { .. }) => return Ok(None),
            Err(e) => return Err(e),
        }
        let state = vehicle.state(&world);
        if screen && (vehicle.chassis_in_contact(&world) || state.roll.abs() > self.config.roll_limit_deg.to_radians()) {
            return Ok(None);
        }
        let d0 = horizontal_distance((state.position.x, state.position.y), (spec.target.x, spec.target.y));
        self.trace = self.record.then(|| EpisodeTrace::new(spec.clone(), self.config.clone(), self.settings.clone()));
        self.episode = Some(Episode {
            target: spec.target,
            max_steps: spec.max_steps,
            leg_start: (spec.spawn.x, spec.spawn.y),
            spec,
            terrain,
            world,
            vehicle,
            d0,
            d_prev: d0,
            steps: 0,
            done: false,
            termination: None,
        });
        Ok(Some(self.observe()?))
    }

    /// Gives the running vehicle a new target and step budget, keeping its
    /// current state (for multi-leg routes).
    pub fn retarget(&mut self, target: TargetPose, max_steps: usize) -> Result<Vec<f64>> {
        let ep = self.episode.as_mut().ok_or_else(|| Error::Protocol("no active episode".into()))?;
        let state = ep.vehicle.state(&ep.world);
        ep.leg_start = (state.position.x, state.position.y);
        ep.target = target;
        ep.max_steps = max_steps;
        ep.d0 = horizontal_distance(ep.leg_start, (target.x, target.y));
        ep.d_prev = ep.d0;
        ep.steps = 0;
        ep.done = false;
        ep.termination = None;
        self.observe()
    }

    fn episode(&self) -> Result<&Episode> {
        self.episode.as_ref().ok_or_else(|| Error::Protocol("no active episode; call reset first".into()))
    }

    pub fn world(&self) -> Result<&World> {
        Ok(&self.episode()?.world)
    }

    pub fn terrain(&self) -> Result<&Arc<HeightField>> {
        Ok(&self.episode()?.terrain)
    }

    pub fn vehicle(&self) -> Result<&VehicleModel> {
        Ok(&self.episode()?.vehicle)
    }

    pub fn vehicle_state(&self) -> Result<VehicleState> {
        let ep = self.episode()?;
        Ok(ep.vehicle.state(&ep.world))
    }

    pub fn spec(&self) -> Result<&EpisodeSpec> {
        Ok(&self.episode()?.spec)
    }

    pub fn target(&self) -> Result<TargetPose> {
        Ok(self.episode()?.target)
    }

    pub fn steps(&self) -> Result<usize> {
        Ok(self.episode()?.steps)
    }

    pub fn initial_distance(&self) -> Result<f64> {
        Ok(self.episode()?.d0)
    }

    /// Episode return divided by the best achievable return from the
    /// current leg's start distance.
    pub fn normalized_return(&self, ret: f64) -> Result<f64> {
        let d0 = self.initial_distance()?;
        Ok(ret / reward::max_return(&self.settings.reward, self.k_tar, d0))
    }

    pub fn termination(&self) -> Result<Option<Termination>> {
        Ok(self.episode()?.termination)
    }

    /// Horizontal distance and wrapped heading error to the target.
    pub fn target_error(&self) -> Result<(f64, f64)> {
        let ep = self.episode()?;
        let s = ep.vehicle.state(&ep.world);
        Ok((
            horizontal_distance((s.position.x, s.position.y), (ep.target.x, ep.target.y)),
            reward::wrap_angle(ep.target.heading - s.yaw),
        ))
    }

    pub fn observe(&self) -> Result<Vec<f64>> {
        let ep = self.episode()?;
        let state = ep.vehicle.state(&ep.world);
        Ok(build_observation(&ep.terrain, &state, &ep.target))
    }

    /// Applies `action` for one control interval.
    pub fn step(&mut self, action: &Action) -> Result<StepOutcome> {
        let roll_limit = self.config.roll_limit_deg.to_radians();
        let overshoot_margin = self.config.overshoot_margin;
        let substeps = self.config.substeps;
        let k_tar = self.k_tar;
        let constants = &self.settings.reward;
        let ep = self
            .episode
            .as_mut()
            .ok_or_else(|| Error::Protocol("step called before reset".into()))?;
        if ep.done {
            return Err(Error::Protocol("step called after the episode ended".into()));
        }

        ep.vehicle.apply_action(action);
        ep.vehicle.begin_interval();
        let mut chassis_hit = false;
        let mut unstable = false;
        for _ in 0..substeps {
            match ep.vehicle.physics_step(&mut ep.world) {
                Ok(()) => {}
                Err(Error::SimulationUnstable { step, detail }) => {
                    log::warn!("physics diverged at step {step}: {detail}");
                    unstable = true;
                    break;
                }
                Err(e) => return Err(e),
            }
            chassis_hit |= ep.vehicle.chassis_in_contact(&ep.world);
        }
        ep.vehicle.end_interval(&ep.world);
        ep.steps += 1;

        let state = ep.vehicle.state(&ep.world);
        let pos = (state.position.x, state.position.y);
        let d_t = horizontal_distance(pos, (ep.target.x, ep.target.y));
        let psi = reward::wrap_angle(ep.target.heading - state.yaw);
        let interval = substeps as f64 * TIMESTEP;
        let (work, max_work) = ep.vehicle.joint_work(interval);
        let inputs = RewardInputs {
            d_prev: ep.d_prev,
            d_t,
            heading_error: psi,
            roll: state.roll,
            speed: state.forward_speed.hypot(state.lateral_speed),
            loads: state.loads,
            slip_long: state.slip_long,
            slip_angle: state.slip_angle,
            joint_work: work.min(max_work),
            max_joint_work: max_work,
            sidewall_contacts: state.sidewall_contacts,
        };
        let breakdown = reward::compute(constants, k_tar, &inputs)?;
        ep.d_prev = d_t;

        let (ux, uy) = {
            let (dx, dy) = (ep.target.x - ep.leg_start.0, ep.target.y - ep.leg_start.1);
            let len = dx.hypot(dy).max(1e-9);
            (dx / len, dy / len)
        };
        let along = (pos.0 - ep.leg_start.0) * ux + (pos.1 - ep.leg_start.1) * uy;
        let target_along = (ep.target.x - ep.leg_start.0) * ux + (ep.target.y - ep.leg_start.1) * uy;

        let termination = if unstable {
            Some(Termination::Unstable)
        } else if breakdown.r_tar > 0.0 {
            Some(Termination::Target)
        } else if chassis_hit {
            Some(Termination::ChassisContact)
        } else if state.roll.abs() > roll_limit {
            Some(Termination::Rollover)
        } else if along > target_along + overshoot_margin {
            Some(Termination::Overshoot)
        } else if ep.steps >= ep.max_steps {
            Some(Termination::Timeout)
        } else {
            None
        };
        ep.done = termination.is_some();
        ep.termination = termination;
        let observation = build_observation(&ep.terrain, &state, &ep.target);
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceRow::new(ep.steps, &state, action, &breakdown));
            trace.termination = termination;
        }
        Ok(StepOutcome {
            observation,
            reward: breakdown,
            done: ep.done,
            termination,
        })
    }

    /// Attaches a value estimate to the last trace row.
    pub fn annotate_value(&mut self, value: f64) {
        if let Some(row) = self.trace.as_mut().and_then(|t| t.rows.last_mut()) {
            row.value = Some(value);
        }
    }
}

/// Assembles the fixed 634-component observation.
pub fn build_observation(terrain: &HeightField, state: &VehicleState, target: &TargetPose) -> Vec<f64> {
    use obs_index::*;
    let p = &state.position;
    let map = local_height_map(terrain, (p.x, p.y, state.yaw), p.z);
    let mut obs = Vec::with_capacity(OBS_DIM);
    obs.extend_from_slice(&map.values);
    let (s, c) = state.yaw.sin_cos();
    let (dx, dy) = (target.x - p.x, target.y - p.y);
    debug_assert_eq!(obs.len(), TARGET);
    obs.extend([c * dx + s * dy, -s * dx + c * dy, reward::wrap_angle(target.heading - state.yaw)]);
    debug_assert_eq!(obs.len(), VELOCITY);
    obs.extend([state.forward_speed, state.lateral_speed, state.yaw_rate]);
    obs.extend([state.roll, state.pitch]);
    debug_assert_eq!(obs.len(), ARTICULATION);
    obs.extend(state.articulation);
    debug_assert_eq!(obs.len(), PISTONS);
    obs.extend(state.piston_normalized);
    obs.extend(state.slip_long);
    debug_assert_eq!(obs.len(), SLIP_ANGLE);
    obs.extend(state.slip_angle);
    obs.extend(state.loads);
    debug_assert_eq!(obs.len(), OBS_DIM);
    debug_assert_eq!(LOADS + WHEEL_COUNT, OBS_DIM);
    obs
}

#[cfg(test)]
mod tests;
