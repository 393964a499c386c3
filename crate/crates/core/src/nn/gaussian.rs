//! Diagonal Gaussian policy distribution with state-independent log σ.

use rand::Rng;
use rand_distr::StandardNormal;

use super::Scalar;

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

/// Entropies below this are reported as a collapsed distribution.
pub const ENTROPY_FLOOR: f64 = -1e6;

pub fn log_prob<T: Scalar>(mu: &[T], log_std: &[T], action: &[T]) -> T {
    debug_assert!(mu.len() == log_std.len() && mu.len() == action.len());
    let half = T::cast(0.5);
    let c = T::cast(HALF_LOG_2PI);
    mu.iter()
        .zip(log_std)
        .zip(action)
        .map(|((&m, &ls), &a)| {
            let z = (a - m) * (-ls).exp();
            -half * z * z - ls - c
        })
        .sum()
}

/// Gradients of `log_prob` w.r.t. μ and log σ, accumulated with `scale`.
pub fn log_prob_grad<T: Scalar>(mu: &[T], log_std: &[T], action: &[T], scale: T, d_mu: &mut [T], d_log_std: &mut [T]) {
    for k in 0..mu.len() {
        let inv = (-log_std[k]).exp();
        let z = (action[k] - mu[k]) * inv;
        d_mu[k] += scale * z * inv;
        d_log_std[k] += scale * (z * z - T::one());
    }
}

pub fn entropy<T: Scalar>(log_std: &[T]) -> T {
    let c = T::cast(0.5 + HALF_LOG_2PI);
    let h: T = log_std.iter().map(|&ls| c + ls).sum();
    if h.f64() < ENTROPY_FLOOR {
        log::warn!("policy entropy collapsed to {:.3e}", h.f64());
    }
    h
}

/// Draws `μ + σ·ε` with ε ~ N(0, I).
pub fn sample<T: Scalar>(mu: &[T], log_std: &[T], rng: &mut impl Rng) -> Vec<T> {
    mu.iter()
        .zip(log_std)
        .map(|(&m, &ls)| {
            let e: f64 = rng.sample(StandardNormal);
            m + ls.exp() * T::cast(e)
        })
        .collect()
}
