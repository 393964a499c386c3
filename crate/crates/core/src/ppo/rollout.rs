//! Experience collection with frozen policy snapshots.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::compute_gae;
use crate::env::{Env, Termination};
use crate::error::Result;
use crate::nn::{gaussian, ActorCritic, Scalar};
use crate::vehicle::{Action, ACTION_DIM};

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStats {
    pub total_reward: f64,
    pub normalized_return: f64,
    pub steps: usize,
    pub termination: Termination,
}

/// Transitions from one worker, contiguous in time.
#[derive(Debug, Clone, Default)]
pub struct Segment<T> {
    pub obs: Vec<T>,
    pub actions: Vec<T>,
    pub log_probs: Vec<T>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    /// Rewards seen by the advantage estimator: a timeout adds γ·V(s_T).
    pub gae_rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// V(s) after the last transition when the episode is still running.
    pub bootstrap: f64,
    pub episodes: Vec<EpisodeStats>,
}

impl<T> Segment<T> {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer<T> {
    pub obs: Vec<T>,
    pub actions: Vec<T>,
    pub log_probs: Vec<T>,
    pub values: Vec<T>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub advantages: Vec<T>,
    pub returns: Vec<T>,
    pub episodes: Vec<EpisodeStats>,
}

impl<T: Scalar> RolloutBuffer<T> {
    /// Concatenates worker segments in order, estimating advantages per
    /// segment.
    pub fn from_segments(segments: Vec<Segment<T>>, gamma: f64, lambda: f64) -> Result<Self> {
        let mut buf = Self::default();
        for seg in segments {
            let (adv, ret) = compute_gae(&seg.gae_rewards, &seg.values, &seg.dones, seg.bootstrap, gamma, lambda)?;
            buf.obs.extend(seg.obs);
            buf.actions.extend(seg.actions);
            buf.log_probs.extend(seg.log_probs);
            buf.values.extend(seg.values.iter().map(|&v| T::cast(v)));
            buf.rewards.extend(seg.rewards);
            buf.dones.extend(seg.dones);
            buf.advantages.extend(adv.into_iter().map(T::cast));
            buf.returns.extend(ret.into_iter().map(T::cast));
            buf.episodes.extend(seg.episodes);
        }
        Ok(buf)
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Casts an observation to the network precision.
pub fn to_input<T: Scalar>(obs: &[f64]) -> Vec<T> {
    obs.iter().map(|&v| T::cast(v)).collect()
}

/// One environment plus the state of its current episode.
pub struct Worker {
    pub env: Env,
    rng: ChaCha8Rng,
    obs: Option<Vec<f64>>,
    ep_reward: f64,
    ep_steps: usize,
}

impl Worker {
    pub fn new(env: Env, seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        Self {
            env,
            rng,
            obs: None,
            ep_reward: 0.0,
            ep_steps: 0,
        }
    }

    /// Runs `steps` stochastic policy steps, starting new episodes as
    /// needed.
    pub fn collect<T: Scalar>(&mut self, net: &ActorCritic<T>, steps: usize, gamma: f64) -> Result<Segment<T>> {
        let mut seg = Segment::default();
        let log_std = net.log_std().to_vec();
        for _ in 0..steps {
            let obs = match self.obs.take() {
                Some(o) => o,
                None => {
                    self.ep_reward = 0.0;
                    self.ep_steps = 0;
                    self.env.reset()?
                }
            };
            let x = to_input::<T>(&obs);
            let out = net.forward(&x, 1)?;
            let a = gaussian::sample(&out.mu, &log_std, &mut self.rng);
            let logp = gaussian::log_prob(&out.mu, &log_std, &a);
            let action = Action::new(&a.iter().map(|v| v.f64()).collect::<Vec<_>>())?;
            let step = self.env.step(&action)?;
            let r = step.reward.total;
            self.ep_reward += r;
            self.ep_steps += 1;

            seg.obs.extend(x);
            seg.actions.extend_from_slice(&a);
            seg.log_probs.push(logp);
            seg.values.push(out.value[0].f64());
            seg.rewards.push(r);
            seg.dones.push(step.done);
            let mut gae_r = r;
            if let Some(t) = step.termination {
                if t == Termination::Timeout {
                    let v_end = net.forward(&to_input::<T>(&step.observation), 1)?.value[0].f64();
                    gae_r += gamma * v_end;
                }
                seg.episodes.push(EpisodeStats {
                    total_reward: self.ep_reward,
                    normalized_return: self.env.normalized_return(self.ep_reward)?,
                    steps: self.ep_steps,
                    termination: t,
                });
            } else {
                self.obs = Some(step.observation);
            }
            seg.gae_rewards.push(gae_r);
        }
        seg.bootstrap = match &self.obs {
            Some(o) => net.forward(&to_input::<T>(o), 1)?.value[0].f64(),
            None => 0.0,
        };
        debug_assert_eq!(seg.actions.len(), seg.len() * ACTION_DIM);
        Ok(seg)
    }
}

/// Collects `horizon` transitions split evenly over the workers (earlier
/// workers take the remainder), in parallel. Results are assembled in
/// worker order, so they do not depend on scheduling.
pub fn collect_rollouts<T: Scalar>(
    workers: &mut [Worker],
    net: &ActorCritic<T>,
    horizon: usize,
    gamma: f64,
    lambda: f64,
) -> Result<RolloutBuffer<T>> {
    let n = workers.len().max(1);
    let segments = workers
        .par_iter_mut()
        .enumerate()
        .map(|(i, w)| {
            let steps = horizon / n + usize::from(i < horizon % n);
            w.collect(net, steps, gamma)
        })
        .collect::<Result<Vec<_>>>()?;
    RolloutBuffer::from_segments(segments, gamma, lambda)
}
