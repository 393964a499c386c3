use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Goal position and heading in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetPose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

/// Position and heading of the reference frame at episode start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spawn {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

/// Bearing on `[-φmax, φmax]` with density ∝ φ², by inverting
/// `F(φ) = (φ³ + φmax³) / (2 φmax³)`.
pub fn sample_bearing(phi_max: f64, rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.random();
    phi_max * (2.0 * u - 1.0).cbrt()
}

/// Target `distance` away along a bearing relative to the spawn heading; the
/// target heading adds a uniform offset in `[-φmax/2, φmax/2]` to the
/// bearing.
pub fn sample_target(spawn: &Spawn, phi_max: f64, distance: f64, rng: &mut impl Rng) -> TargetPose {
    let bearing = spawn.heading + sample_bearing(phi_max, rng);
    let offset = if phi_max > 0.0 {
        rng.random_range(-0.5 * phi_max..=0.5 * phi_max)
    } else {
        0.0
    };
    TargetPose {
        x: spawn.x + distance * bearing.cos(),
        y: spawn.y + distance * bearing.sin(),
        heading: (bearing + offset).rem_euclid(2.0 * PI),
    }
}
