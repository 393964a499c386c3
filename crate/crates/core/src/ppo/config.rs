use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};
use crate::nn::AdamConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    /// Clip range of the probability ratio.
    pub clip: f64,
    /// Clip range of the value update.
    pub value_clip: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub epochs: usize,
    pub minibatch: usize,
    /// Transitions collected per iteration, summed over workers.
    pub horizon: usize,
    pub learning_rate: f64,
    pub max_grad_norm: f64,
    pub normalize_advantages: bool,
    pub adam: AdamConfig,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip: 0.2,
            value_clip: 0.2,
            value_coef: 0.5,
            entropy_coef: 0.01,
            epochs: 10,
            minibatch: 800,
            horizon: 1280,
            learning_rate: 25e-5,
            max_grad_norm: 0.5,
            normalize_advantages: true,
            adam: AdamConfig::default(),
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(config_err("ppo.gamma and ppo.gae_lambda must lie in [0, 1]"));
        }
        if !(self.clip > 0.0 && self.value_clip > 0.0) {
            return Err(config_err("ppo clip ranges must be positive"));
        }
        if self.epochs == 0 || self.minibatch == 0 || self.horizon == 0 {
            return Err(config_err("ppo.epochs, ppo.minibatch and ppo.horizon must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.max_grad_norm > 0.0) {
            return Err(config_err("ppo.learning_rate and ppo.max_grad_norm must be positive"));
        }
        Ok(())
    }
}
