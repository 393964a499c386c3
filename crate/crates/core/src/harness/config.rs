use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::{lesson_config, EnvSettings, EpisodeConfig};
use crate::error::{config_err, Error, Result};
use crate::nn::Architecture;
use crate::ppo::PpoConfig;

/// Step sizes of lessons 1–4.
pub const LESSON_LEARNING_RATES: [f64; 4] = [25e-5, 10e-5, 10e-5, 1e-5];
/// Default per-lesson step budgets; they add up to 19.22 M.
pub const LESSON_STEP_BUDGETS: [u64; 4] = [5_000_000, 5_000_000, 5_000_000, 4_220_000];
pub const DEFAULT_ADVANCE_THRESHOLD: f64 = 0.75;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LessonSpec {
    /// Curriculum stage, 1–4.
    pub lesson: u32,
    pub learning_rate: f64,
    /// Environment steps after which the next lesson starts.
    pub step_budget: u64,
    /// Advance early once an evaluation reaches this mean normalized return.
    #[serde(default)]
    pub advance_threshold: Option<f64>,
    /// Replaces the built-in episode settings of the lesson.
    #[serde(default)]
    pub episode: Option<EpisodeConfig>,
    /// Episode settings of the evaluation runs; defaults to `episode`.
    #[serde(default)]
    pub eval_episode: Option<EpisodeConfig>,
}

impl LessonSpec {
    pub fn standard(lesson: u32) -> Result<Self> {
        let i = lesson_slot(lesson)?;
        Ok(Self {
            lesson,
            learning_rate: LESSON_LEARNING_RATES[i],
            step_budget: LESSON_STEP_BUDGETS[i],
            advance_threshold: Some(DEFAULT_ADVANCE_THRESHOLD),
            episode: None,
            eval_episode: None,
        })
    }

    pub fn episode_config(&self, dem_paths: &[PathBuf]) -> Result<EpisodeConfig> {
        match &self.episode {
            Some(c) => Ok(c.clone()),
            None => lesson_config(self.lesson, dem_paths),
        }
    }

    pub fn eval_config(&self, dem_paths: &[PathBuf]) -> Result<EpisodeConfig> {
        match &self.eval_episode {
            Some(c) => Ok(c.clone()),
            None => self.episode_config(dem_paths),
        }
    }
}

fn lesson_slot(lesson: u32) -> Result<usize> {
    match lesson {
        1..=4 => Ok(lesson as usize - 1),
        _ => Err(config_err(format!("lesson must be 1..=4, got {lesson}"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Environment steps between evaluations.
    pub interval: u64,
    pub episodes: usize,
    /// Seed of the evaluation episodes, kept apart from the training streams.
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            interval: 25_000,
            episodes: 20,
            seed: 0x00e7_a15e,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Parallel rollout environments.
    pub workers: usize,
    pub architecture: Architecture,
    pub ppo: PpoConfig,
    pub env: EnvSettings,
    /// Elevation files of lesson 4.
    pub dem_paths: Vec<PathBuf>,
    pub lessons: Vec<LessonSpec>,
    pub eval: EvalSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            workers: 10,
            architecture: Architecture::default(),
            ppo: PpoConfig::default(),
            env: EnvSettings::default(),
            dem_paths: Vec::new(),
            lessons: (1..=4).map(|n| LessonSpec::standard(n).expect("valid lesson")).collect(),
            eval: EvalSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(config_err("workers must be at least 1"));
        }
        if self.eval.interval == 0 || self.eval.episodes == 0 {
            return Err(config_err("eval.interval and eval.episodes must be positive"));
        }
        self.architecture.validate()?;
        self.ppo.validate()?;
        self.env.vehicle.validate()?;
        self.env.reward.validate()?;
        if self.lessons.is_empty() {
            return Err(config_err("at least one lesson is required"));
        }
        let mut prev = 0;
        for l in &self.lessons {
            lesson_slot(l.lesson)?;
            if l.lesson <= prev {
                return Err(config_err(format!(
                    "lessons must run in increasing order, found {} after {prev}",
                    l.lesson
                )));
            }
            prev = l.lesson;
            if !(l.learning_rate > 0.0 && l.learning_rate.is_finite()) {
                return Err(config_err(format!("lesson {} learning rate must be positive", l.lesson)));
            }
            if l.step_budget == 0 {
                return Err(config_err(format!("lesson {} step budget must be positive", l.lesson)));
            }
            l.episode_config(&self.dem_paths)?.validate()?;
            l.eval_config(&self.dem_paths)?.validate()?;
        }
        Ok(())
    }
}
