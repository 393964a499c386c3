//! Clipped surrogate objective, clipped value loss and entropy bonus.

use super::PpoConfig;
use crate::error::Result;
use crate::nn::{gaussian, ActorCritic, Scalar};
use crate::vehicle::ACTION_DIM;

/// `g(ε, A)`: the clipped advantage bound.
pub fn clip_bound(eps: f64, adv: f64) -> f64 {
    if adv >= 0.0 {
        (1.0 + eps) * adv
    } else {
        (1.0 - eps) * adv
    }
}

/// Per-sample surrogate `min(r·A, g(ε, A))`.
pub fn clipped_objective(ratio: f64, adv: f64, eps: f64) -> f64 {
    (ratio * adv).min(clip_bound(eps, adv))
}

/// Surrogate from new and behaviour log-probabilities.
pub fn surrogate(new_log_prob: f64, old_log_prob: f64, adv: f64, eps: f64) -> f64 {
    clipped_objective((new_log_prob - old_log_prob).exp(), adv, eps)
}

/// Per-sample value error `max((V − R)², (V_clip − R)²)`.
pub fn clipped_value_error(value: f64, old_value: f64, target: f64, eps: f64) -> f64 {
    let clipped = old_value + (value - old_value).clamp(-eps, eps);
    (value - target).powi(2).max((clipped - target).powi(2))
}

/// Rows of training data; every slice is indexed by sample.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a, T> {
    /// n×634 observations.
    pub obs: &'a [T],
    /// n×14 pre-clamp actions.
    pub actions: &'a [T],
    pub old_log_prob: &'a [T],
    pub old_values: &'a [T],
    pub advantages: &'a [T],
    pub returns: &'a [T],
}

impl<T> Batch<'_, T> {
    pub fn len(&self) -> usize {
        self.old_log_prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    /// Quantity minimised: −objective + c_v·value error − c_e·entropy.
    pub total: f64,
    pub policy_objective: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    /// Samples dropped because their ratio was not finite.
    pub skipped: usize,
}

/// Rows per forward/backward chunk, bounding activation memory.
const CHUNK: usize = 128;

/// Evaluates the PPO loss on `batch`; with `backprop` the gradients of
/// `total` are accumulated into the network.
pub fn ppo_loss<T: Scalar>(
    net: &mut ActorCritic<T>,
    batch: &Batch<'_, T>,
    cfg: &PpoConfig,
    backprop: bool,
) -> Result<LossParts> {
    let n = batch.len();
    let inv_n = 1.0 / n as f64;
    let log_std: Vec<T> = net.log_std().to_vec();
    let mut parts = LossParts::default();
    let mut d_log_std = vec![0.0f64; ACTION_DIM];
    let obs_dim = batch.obs.len() / n.max(1);

    for start in (0..n).step_by(CHUNK) {
        let m = CHUNK.min(n - start);
        let obs = &batch.obs[start * obs_dim..(start + m) * obs_dim];
        let out = if backprop {
            net.forward_train(obs, m)?
        } else {
            net.forward(obs, m)?
        };
        let mut d_mu = vec![T::zero(); m * ACTION_DIM];
        let mut d_v = vec![T::zero(); m];
        for i in 0..m {
            let j = start + i;
            let mu = &out.mu[i * ACTION_DIM..(i + 1) * ACTION_DIM];
            let act = &batch.actions[j * ACTION_DIM..(j + 1) * ACTION_DIM];
            let logp = gaussian::log_prob(mu, &log_std, act).f64();
            let log_ratio = logp - batch.old_log_prob[j].f64();
            let ratio = log_ratio.exp();
            let adv = batch.advantages[j].f64();

            let v = out.value[i].f64();
            let v_old = batch.old_values[j].f64();
            let ret = batch.returns[j].f64();
            parts.value_loss += clipped_value_error(v, v_old, ret, cfg.value_clip) * inv_n;
            if backprop {
                let eps = cfg.value_clip;
                let clipped = v_old + (v - v_old).clamp(-eps, eps);
                // Inside the clip band both branches coincide; outside it
                // the clipped branch is constant in V.
                let g = if (v - ret).powi(2) >= (clipped - ret).powi(2) {
                    2.0 * (v - ret)
                } else {
                    0.0
                };
                d_v[i] = T::cast(cfg.value_coef * g * inv_n);
            }

            if !ratio.is_finite() {
                parts.skipped += 1;
                continue;
            }
            let obj = clipped_objective(ratio, adv, cfg.clip);
            parts.policy_objective += obj * inv_n;
            parts.mean_ratio += ratio;
            parts.approx_kl += ratio - 1.0 - log_ratio;
            if (ratio - 1.0).abs() > cfg.clip {
                parts.clip_fraction += 1.0;
            }
            // The unclipped branch is the one carrying gradient.
            if backprop && ratio * adv <= clip_bound(cfg.clip, adv) {
                let scale = -ratio * adv * inv_n;
                let mut dm = vec![T::zero(); ACTION_DIM];
                let mut ds = vec![T::zero(); ACTION_DIM];
                gaussian::log_prob_grad(mu, &log_std, act, T::cast(scale), &mut dm, &mut ds);
                d_mu[i * ACTION_DIM..(i + 1) * ACTION_DIM].copy_from_slice(&dm);
                for (acc, g) in d_log_std.iter_mut().zip(&ds) {
                    *acc += g.f64();
                }
            }
        }
        if backprop {
            net.backward(&d_mu, &d_v)?;
        }
    }

    let used = (n - parts.skipped).max(1) as f64;
    parts.mean_ratio /= used;
    parts.approx_kl /= used;
    parts.clip_fraction /= used;
    if parts.skipped > 0 {
        log::warn!("{} samples with non-finite probability ratio skipped", parts.skipped);
    }
    parts.entropy = gaussian::entropy(&log_std).f64();
    parts.total = -parts.policy_objective + cfg.value_coef * parts.value_loss - cfg.entropy_coef * parts.entropy;
    if backprop {
        for (g, d) in net.log_std_grad_mut().iter_mut().zip(&d_log_std) {
            *g += T::cast(d - cfg.entropy_coef);
        }
    }
    Ok(parts)
}
