//! Proximal policy optimisation: rollouts, advantage estimation and the
//! clipped-objective update.

mod config;
mod gae;
mod loss;
mod rollout;

pub use config::PpoConfig;
pub use gae::compute_gae;
pub use loss::{clip_bound, clipped_objective, clipped_value_error, ppo_loss, surrogate, Batch, LossParts};
pub use rollout::{collect_rollouts, to_input, EpisodeStats, RolloutBuffer, Segment, Worker};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::env::OBS_DIM;
use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, Adam, ActorCritic, Scalar};
use crate::vehicle::ACTION_DIM;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub policy_objective: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub explained_variance: f64,
    pub grad_norm: f64,
    pub minibatches: usize,
}

/// `1 − Var(R − V) / Var(R)`; zero when the returns are constant.
pub fn explained_variance(values: &[f64], returns: &[f64]) -> f64 {
    let n = returns.len() as f64;
    let var = |x: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = x.collect();
        let m = v.iter().sum::<f64>() / n;
        v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / n
    };
    let vr = var(&mut returns.iter().copied());
    if vr <= 0.0 {
        return 0.0;
    }
    1.0 - var(&mut returns.iter().zip(values).map(|(r, v)| r - v)) / vr
}

/// Minibatch sizes of one epoch: full minibatches then the remainder.
pub fn minibatch_sizes(n: usize, minibatch: usize) -> Vec<usize> {
    let mut sizes = vec![minibatch; n / minibatch];
    if !n.is_multiple_of(minibatch) {
        sizes.push(n % minibatch);
    }
    sizes
}

/// Runs the configured epochs of shuffled minibatch updates. On a
/// non-finite loss or gradient the parameters and optimiser state are
/// restored and `NonFiniteLoss` is returned.
pub fn update<T: Scalar>(
    net: &mut ActorCritic<T>,
    opt: &mut Adam<T>,
    buf: &RolloutBuffer<T>,
    cfg: &PpoConfig,
    rng: &mut impl Rng,
) -> Result<UpdateStats> {
    let n = buf.len();
    if n == 0 {
        return Err(Error::Protocol("update called with an empty rollout buffer".into()));
    }
    let values: Vec<f64> = buf.values.iter().map(|v| v.f64()).collect();
    let returns: Vec<f64> = buf.returns.iter().map(|v| v.f64()).collect();
    let mut stats = UpdateStats {
        explained_variance: explained_variance(&values, &returns),
        ..UpdateStats::default()
    };

    let mut adv: Vec<f64> = buf.advantages.iter().map(|a| a.f64()).collect();
    if cfg.normalize_advantages && n > 1 {
        let mean = adv.iter().sum::<f64>() / n as f64;
        let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        adv.iter_mut().for_each(|a| *a = (*a - mean) / (std + 1e-8));
    }
    let adv: Vec<T> = adv.into_iter().map(T::cast).collect();

    let saved = (net.params().to_vec(), opt.clone());
    let mut order: Vec<usize> = (0..n).collect();
    let mut mb = MinibatchData::default();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        let mut start = 0;
        for size in minibatch_sizes(n, cfg.minibatch) {
            mb.gather(buf, &adv, &order[start..start + size]);
            start += size;
            net.zero_grads();
            let parts = ppo_loss(net, &mb.batch(), cfg, true)?;
            let finite = parts.total.is_finite() && net.grads().iter().all(|g| g.is_finite());
            if !finite {
                net.set_params(&saved.0)?;
                *opt = saved.1;
                return Err(Error::NonFiniteLoss(format!("loss {:?}", parts.total)));
            }
            stats.grad_norm += clip_grad_norm(net.grads_mut(), cfg.max_grad_norm);
            let (params, grads) = net.params_and_grads();
            opt.step(params, grads);

            stats.policy_objective += parts.policy_objective;
            stats.value_loss += parts.value_loss;
            stats.entropy += parts.entropy;
            stats.mean_ratio += parts.mean_ratio;
            stats.clip_fraction += parts.clip_fraction;
            stats.approx_kl += parts.approx_kl;
            stats.minibatches += 1;
        }
    }
    let k = stats.minibatches as f64;
    for v in [
        &mut stats.policy_objective,
        &mut stats.value_loss,
        &mut stats.entropy,
        &mut stats.mean_ratio,
        &mut stats.clip_fraction,
        &mut stats.approx_kl,
        &mut stats.grad_norm,
    ] {
        *v /= k;
    }
    Ok(stats)
}

#[derive(Default)]
struct MinibatchData<T> {
    obs: Vec<T>,
    actions: Vec<T>,
    log_probs: Vec<T>,
    values: Vec<T>,
    advantages: Vec<T>,
    returns: Vec<T>,
}

impl<T: Scalar> MinibatchData<T> {
    fn gather(&mut self, buf: &RolloutBuffer<T>, adv: &[T], idx: &[usize]) {
        self.obs.clear();
        self.actions.clear();
        self.log_probs.clear();
        self.values.clear();
        self.advantages.clear();
        self.returns.clear();
        for &i in idx {
            self.obs.extend_from_slice(&buf.obs[i * OBS_DIM..(i + 1) * OBS_DIM]);
            self.actions.extend_from_slice(&buf.actions[i * ACTION_DIM..(i + 1) * ACTION_DIM]);
            self.log_probs.push(buf.log_probs[i]);
            self.values.push(buf.values[i]);
            self.advantages.push(adv[i]);
            self.returns.push(buf.returns[i]);
        }
    }

    fn batch(&self) -> Batch<'_, T> {
        Batch {
            obs: &self.obs,
            actions: &self.actions,
            old_log_prob: &self.log_probs,
            old_values: &self.values,
            advantages: &self.advantages,
            returns: &self.returns,
        }
    }
}
