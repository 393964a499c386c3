use std::f64::consts::PI;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::heightfield::{PerlinParams, TerrainRecipe};

/// Where each episode's terrain comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerrainSource {
    /// The same terrain every episode.
    Fixed { recipe: TerrainRecipe },
    /// Fresh Perlin noise per episode.
    RandomPerlin {
        #[serde(flatten)]
        params: PerlinParams,
        size: f64,
        resolution: usize,
    },
    /// One elevation file per episode, drawn uniformly from the pool.
    DemPool { paths: Vec<PathBuf> },
}

/// A family of boulders scattered in the corridor between spawn and target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    pub count: usize,
    /// Full footprint extent range, m.
    pub size_range: (f64, f64),
    pub height_range: (f64, f64),
}

/// Strip along the spawn→target line where obstacles are placed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorridorSpec {
    /// Distance from the spawn point to the start of the strip, m.
    pub start_offset: f64,
    /// Distance short of the target where the strip ends, m.
    pub end_margin: f64,
    pub width: f64,
}

impl Default for CorridorSpec {
    fn default() -> Self {
        Self {
            start_offset: 4.0,
            end_margin: 2.0,
            width: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeConfig {
    pub terrain: TerrainSource,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
    #[serde(default)]
    pub corridor: CorridorSpec,
    /// Half-width of the bearing arc targets are drawn from, rad.
    pub phi_max: f64,
    pub max_steps: usize,
    /// Spawn positions are uniform on `[-h, h]²` around the terrain centre, m.
    #[serde(default = "defaults::spawn_half_extent")]
    pub spawn_half_extent: f64,
    /// Distance from spawn to target, m.
    #[serde(default = "defaults::target_distance")]
    pub target_distance: f64,
    /// Start distance used to size the target bonus, m.
    #[serde(default = "defaults::target_distance")]
    pub nominal_distance: f64,
    #[serde(default = "defaults::roll_limit_deg")]
    pub roll_limit_deg: f64,
    /// Along-track distance past the target that ends the episode, m.
    #[serde(default = "defaults::overshoot_margin")]
    pub overshoot_margin: f64,
    #[serde(default = "defaults::settle_steps")]
    pub settle_steps: usize,
    /// Physics steps per control step.
    #[serde(default = "defaults::substeps")]
    pub substeps: usize,
    #[serde(default = "defaults::spawn_attempts")]
    pub spawn_attempts: usize,
}

mod defaults {
    pub fn spawn_half_extent() -> f64 {
        1.0
    }
    pub fn target_distance() -> f64 {
        20.0
    }
    pub fn roll_limit_deg() -> f64 {
        25.0
    }
    pub fn overshoot_margin() -> f64 {
        2.0
    }
    pub fn settle_steps() -> usize {
        60
    }
    pub fn substeps() -> usize {
        5
    }
    pub fn spawn_attempts() -> usize {
        10
    }
}

/// Side length and node count of generated training terrains.
pub const TERRAIN_SIZE: f64 = 64.0;
pub const TERRAIN_RESOLUTION: usize = 257;

impl EpisodeConfig {
    pub fn new(terrain: TerrainSource, phi_max: f64, max_steps: usize) -> Self {
        Self {
            terrain,
            obstacles: Vec::new(),
            corridor: CorridorSpec::default(),
            phi_max,
            max_steps,
            spawn_half_extent: defaults::spawn_half_extent(),
            target_distance: defaults::target_distance(),
            nominal_distance: defaults::target_distance(),
            roll_limit_deg: defaults::roll_limit_deg(),
            overshoot_margin: defaults::overshoot_margin(),
            settle_steps: defaults::settle_steps(),
            substeps: defaults::substeps(),
            spawn_attempts: defaults::spawn_attempts(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.phi_max > 0.0 && self.phi_max <= PI) {
            return Err(config_err(format!("phi_max must lie in (0, π], got {}", self.phi_max)));
        }
        if self.max_steps == 0 || self.substeps == 0 || self.spawn_attempts == 0 {
            return Err(config_err("max_steps, substeps and spawn_attempts must be positive"));
        }
        if !(self.target_distance > 0.0 && self.nominal_distance > 0.0) {
            return Err(config_err("target distances must be positive"));
        }
        if !(self.spawn_half_extent >= 0.0) {
            return Err(config_err("spawn_half_extent must be non-negative"));
        }
        if let TerrainSource::DemPool { paths } = &self.terrain {
            if paths.is_empty() {
                return Err(config_err("DEM terrain pool is empty"));
            }
        }
        for o in &self.obstacles {
            if !(o.size_range.0 > 0.0 && o.size_range.1 >= o.size_range.0) {
                return Err(config_err(format!("invalid obstacle size range {:?}", o.size_range)));
            }
            if !(o.height_range.0 >= 0.0 && o.height_range.1 >= o.height_range.0) {
                return Err(config_err(format!("invalid obstacle height range {:?}", o.height_range)));
            }
        }
        Ok(())
    }
}

/// Perlin settings of the first lesson.
pub fn gentle_perlin() -> PerlinParams {
    PerlinParams {
        amplitude: 1.0,
        frequency: 0.05,
        octaves: 4,
    }
}

/// Hillier noise: amplitude ×2 and frequency ×1.5 of [`gentle_perlin`].
pub fn hilly_perlin() -> PerlinParams {
    let p = gentle_perlin();
    PerlinParams {
        amplitude: 2.0 * p.amplitude,
        frequency: 1.5 * p.frequency,
        octaves: p.octaves,
    }
}

pub fn impassable_boulders(count: usize) -> ObstacleSpec {
    ObstacleSpec {
        count,
        size_range: (1.5, 3.5),
        height_range: (1.0, 2.0),
    }
}

pub fn small_boulders(count: usize) -> ObstacleSpec {
    ObstacleSpec {
        count,
        size_range: (0.5, 1.5),
        height_range: (0.2, 0.6),
    }
}

/// Curriculum lesson `n` (1–4). Lesson 4 draws from `dem_paths`; with no
/// files configured it falls back to hilly procedural terrain.
pub fn lesson_config(n: u32, dem_paths: &[PathBuf]) -> Result<EpisodeConfig> {
    let perlin = |params| TerrainSource::RandomPerlin {
        params,
        size: TERRAIN_SIZE,
        resolution: TERRAIN_RESOLUTION,
    };
    let cfg = match n {
        1 => EpisodeConfig::new(perlin(gentle_perlin()), PI / 3.0, 400),
        2 => {
            let mut c = EpisodeConfig::new(perlin(gentle_perlin()), PI / 9.0, 400);
            c.obstacles = vec![impassable_boulders(8)];
            c
        }
        3 => {
            let mut c = EpisodeConfig::new(perlin(hilly_perlin()), PI / 3.0, 400);
            c.obstacles = vec![impassable_boulders(6), small_boulders(6)];
            c
        }
        4 => {
            let terrain = if dem_paths.is_empty() {
                perlin(hilly_perlin())
            } else {
                TerrainSource::DemPool {
                    paths: dem_paths.to_vec(),
                }
            };
            EpisodeConfig::new(terrain, PI / 3.0, 500)
        }
        other => return Err(config_err(format!("lesson must be 1..=4, got {other}"))),
    };
    Ok(cfg)
}
