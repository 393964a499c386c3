//! Fixtures shared by the benchmarks.

use forwarder_core::env::{lesson_config, Env, EnvSettings, OBS_DIM};
use forwarder_core::vehicle::{Action, ACTION_DIM};

/// Lesson-1 environment with an episode already started.
pub fn started_env(seed: u64) -> Env {
    let mut env = Env::new(lesson_config(1, &[]).expect("lesson 1"), EnvSettings::default(), seed, 0).expect("env");
    env.reset().expect("reset");
    env
}

/// Gentle forward drive with the articulation centred.
pub fn cruise() -> Action {
    let mut a = [0.0; ACTION_DIM];
    a[8..].fill(0.4);
    Action(a)
}

/// Deterministic pseudo-observations in `[0, 1)`.
pub fn observations(batch: usize) -> Vec<f32> {
    (0..batch * OBS_DIM)
        .map(|i| ((i as f32 * 0.618_034).fract() + (i % 7) as f32 * 0.01).fract())
        .collect()
}
