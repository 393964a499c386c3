//! Pure functions behind the vehicle's proprioceptive signals.

use nalgebra::Vector3;

/// Contacts closer than this to the wheel axis count as sidewall hits, rad.
pub const SIDEWALL_ANGLE: f64 = std::f64::consts::PI / 3.0;

/// Bound on the reported longitudinal slip magnitude.
pub const MAX_SLIP: f64 = 10.0;

/// Wheel torque for a command in `[-1, 1]` scaled by `limit`: torque that
/// would further accelerate a wheel already spinning faster than
/// `speed_clamp` is dropped.
pub fn wheel_torque_command(torque: f64, omega: f64, speed_clamp: f64) -> f64 {
    if omega.abs() > speed_clamp && torque * omega > 0.0 {
        0.0
    } else {
        torque
    }
}

/// Longitudinal slip and slip angle of one wheel.
///
/// `v_forward`/`v_lateral` are the wheel-centre velocity components along
/// the rolling direction and to its left in the ground plane; `omega` is
/// the spin rate, positive when rolling forward.
pub fn compute_slip(v_forward: f64, v_lateral: f64, omega: f64, radius: f64, v_eps: f64) -> (f64, f64) {
    let surface = omega * radius;
    let ground_speed = v_forward.hypot(v_lateral);
    if ground_speed < v_eps && surface.abs() < v_eps {
        return (0.0, 0.0);
    }
    let slip = ((v_forward - surface) / v_forward.abs().max(v_eps)).clamp(-MAX_SLIP, MAX_SLIP);
    let angle = if ground_speed < v_eps { 0.0 } else { v_lateral.atan2(v_forward) };
    (slip, angle)
}

/// Angle between a contact offset (from the wheel centre) and the wheel's
/// rotation axis, folded into `[0, π/2]`.
pub fn sidewall_angle(offset: &Vector3<f64>, axis: &Vector3<f64>) -> f64 {
    let n = offset.norm() * axis.norm();
    if n < 1e-12 {
        return std::f64::consts::FRAC_PI_2;
    }
    (offset.dot(axis).abs() / n).min(1.0).acos()
}

/// Wheel normal forces as fractions of the vehicle weight.
pub fn normalized_loads<const N: usize>(forces: &[f64; N], weight: f64) -> [f64; N] {
    forces.map(|f| f.max(0.0) / weight)
}

/// Work done by actuated joints, accumulated per physics step.
///
/// Joint speed enters clamped to the joint's rated maximum so the total is
/// bounded by `Σ limit · max_speed · Δt` by construction.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct JointWork {
    total: f64,
}

impl JointWork {
    pub fn add(&mut self, effort: f64, speed: f64, max_speed: f64, dt: f64) {
        self.total += effort.abs() * speed.abs().min(max_speed) * dt;
    }

    pub fn total(&self) -> f64 {
        self.total
    }
}
