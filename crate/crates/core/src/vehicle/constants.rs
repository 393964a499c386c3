use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

/// Geometry, mass and actuation constants of the forwarder model.
///
/// The defaults are an approximation of an eight-wheel-class forwarder
/// reduced to three frame segments with one wheel pair each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleConstants {
    /// Total vehicle mass without payload, kg.
    pub total_mass: f64,
    /// Share of the total mass carried by the front/mid/rear segment
    /// assemblies (segment plus its two arms and wheels).
    pub segment_mass_fractions: [f64; 3],
    pub arm_mass: f64,
    pub wheel_mass: f64,
    /// Extra load rigidly attached above the rear segment, kg.
    pub payload_mass: f64,
    /// Front/mid/rear segment lengths, m.
    pub segment_lengths: [f64; 3],
    pub segment_width: f64,
    pub segment_height: f64,
    /// Lateral distance between left and right wheel centres, m.
    pub track_width: f64,
    pub wheel_radius: f64,
    pub wheel_width: f64,
    pub arm_length: f64,
    /// Height of each segment's centre of mass above the arm pivots, m.
    pub chassis_height: f64,
    pub chassis_collider_radius: f64,
    /// Reference frame position behind the cabin (front segment centre), m.
    pub reference_offset: f64,
    pub articulation_range_deg: f64,
    pub suspension_range_deg: f64,
    pub articulation_torque_limit: f64,
    pub wheel_torque_limit: f64,
    pub piston_force_limit: f64,
    /// Lever converting piston force into suspension hinge torque, m.
    pub piston_lever_arm: f64,
    /// Above this wheel speed accelerating torque is cut, rad/s.
    pub wheel_speed_clamp: f64,
    /// Proportional gain of the joint position controllers, 1/s.
    pub kp: f64,
    pub articulation_max_speed: f64,
    pub suspension_max_speed: f64,
    /// Speed below which slip quantities are reported as zero, m/s.
    pub slip_speed_epsilon: f64,
}

impl Default for VehicleConstants {
    fn default() -> Self {
        Self {
            total_mass: 16_800.0,
            segment_mass_fractions: [0.40, 0.25, 0.35],
            arm_mass: 150.0,
            wheel_mass: 350.0,
            payload_mass: 0.0,
            segment_lengths: [2.5, 2.0, 2.5],
            segment_width: 2.0,
            segment_height: 1.0,
            track_width: 2.2,
            wheel_radius: 0.8,
            wheel_width: 0.6,
            arm_length: 1.0,
            chassis_height: 0.3,
            chassis_collider_radius: 0.45,
            reference_offset: 0.3,
            articulation_range_deg: 40.0,
            suspension_range_deg: 40.0,
            articulation_torque_limit: 50_000.0,
            wheel_torque_limit: 20_000.0,
            piston_force_limit: 270_000.0,
            piston_lever_arm: 0.4,
            wheel_speed_clamp: 1.5,
            kp: 5.0,
            articulation_max_speed: 0.5,
            suspension_max_speed: 0.5,
            slip_speed_epsilon: 0.05,
        }
    }
}

impl VehicleConstants {
    /// Mass of each frame segment body once its arms and wheels are removed.
    pub fn segment_masses(&self) -> [f64; 3] {
        let attached = 2.0 * (self.arm_mass + self.wheel_mass);
        self.segment_mass_fractions.map(|f| f * self.total_mass - attached)
    }

    /// Mass of the assembled vehicle (excluding payload).
    pub fn assembled_mass(&self) -> f64 {
        self.segment_masses().iter().sum::<f64>() + 6.0 * (self.arm_mass + self.wheel_mass)
    }

    pub fn suspension_torque_limit(&self) -> f64 {
        self.piston_force_limit * self.piston_lever_arm
    }

    pub fn articulation_range(&self) -> (f64, f64) {
        let r = self.articulation_range_deg.to_radians();
        (-r, r)
    }

    pub fn suspension_range(&self) -> (f64, f64) {
        let r = self.suspension_range_deg.to_radians();
        (-r, r)
    }

    /// Piston stroke corresponding to the full suspension range, m.
    pub fn piston_stroke(&self) -> f64 {
        let (lo, hi) = self.suspension_range();
        self.piston_lever_arm * (hi - lo)
    }

    /// Upper bound on actuated-joint work over an interval of `dt` seconds.
    pub fn max_joint_work(&self, dt: f64) -> f64 {
        let power = 2.0 * self.articulation_torque_limit * self.articulation_max_speed
            + 6.0 * self.suspension_torque_limit() * self.suspension_max_speed
            + 6.0 * self.wheel_torque_limit * self.wheel_speed_clamp;
        power * dt
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("total_mass", self.total_mass),
            ("arm_mass", self.arm_mass),
            ("wheel_mass", self.wheel_mass),
            ("segment_width", self.segment_width),
            ("segment_height", self.segment_height),
            ("track_width", self.track_width),
            ("wheel_radius", self.wheel_radius),
            ("wheel_width", self.wheel_width),
            ("arm_length", self.arm_length),
            ("chassis_collider_radius", self.chassis_collider_radius),
            ("articulation_range_deg", self.articulation_range_deg),
            ("suspension_range_deg", self.suspension_range_deg),
            ("articulation_torque_limit", self.articulation_torque_limit),
            ("wheel_torque_limit", self.wheel_torque_limit),
            ("piston_force_limit", self.piston_force_limit),
            ("piston_lever_arm", self.piston_lever_arm),
            ("wheel_speed_clamp", self.wheel_speed_clamp),
            ("kp", self.kp),
            ("articulation_max_speed", self.articulation_max_speed),
            ("suspension_max_speed", self.suspension_max_speed),
            ("slip_speed_epsilon", self.slip_speed_epsilon),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config_err(format!("vehicle.{name} must be positive, got {v}")));
            }
        }
        for (k, &l) in self.segment_lengths.iter().enumerate() {
            if !(l > 0.0 && l.is_finite()) {
                return Err(config_err(format!("vehicle.segment_lengths[{k}] must be positive, got {l}")));
            }
        }
        if !(self.payload_mass >= 0.0 && self.payload_mass.is_finite()) {
            return Err(config_err(format!(
                "vehicle.payload_mass must be non-negative, got {}",
                self.payload_mass
            )));
        }
        if let Some((k, m)) = self.segment_masses().iter().enumerate().find(|(_, &m)| !(m > 0.0)) {
            return Err(config_err(format!(
                "segment {k} would have mass {m} kg after removing arms and wheels"
            )));
        }
        let total = self.assembled_mass();
        if ((total - self.total_mass) / self.total_mass).abs() > 1e-3 {
            return Err(config_err(format!(
                "vehicle masses sum to {total} kg, expected {} kg (check segment_mass_fractions)",
                self.total_mass
            )));
        }
        Ok(())
    }
}

impl VehicleConstants {
    /// Forward position of the reference frame in the vehicle frame, m.
    pub fn reference_x(&self) -> f64 {
        let [lf, lm, _] = self.segment_lengths;
        0.5 * lm + 0.5 * lf - self.reference_offset
    }
}
