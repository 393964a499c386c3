use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use crate::error::{config_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BodyId(pub usize);

/// Spherical collision shape, offset from the body origin in body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sphere {
    pub radius: f64,
    pub offset: Vector3<f64>,
}

impl Sphere {
    pub fn centered(radius: f64) -> Self {
        Self {
            radius,
            offset: Vector3::zeros(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RigidBody {
    pub label: String,
    mass: f64,
    inv_mass: f64,
    inertia: Matrix3<f64>,
    inv_inertia: Matrix3<f64>,
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    pub linear_velocity: Vector3<f64>,
    pub angular_velocity: Vector3<f64>,
    pub colliders: Vec<Sphere>,
    pub(crate) torque: Vector3<f64>,
}

impl RigidBody {
    /// Dynamic body with a diagonal body-frame inertia tensor.
    pub fn new(
        label: impl Into<String>,
        mass: f64,
        principal_inertia: Vector3<f64>,
        position: Vector3<f64>,
        orientation: UnitQuaternion<f64>,
    ) -> Result<Self> {
        let label = label.into();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(config_err(format!("body `{label}` needs positive mass, got {mass}")));
        }
        if principal_inertia.iter().any(|&i| !(i > 0.0 && i.is_finite())) {
            return Err(config_err(format!(
                "body `{label}` inertia must be positive definite, got {principal_inertia:?}"
            )));
        }
        let inertia = Matrix3::from_diagonal(&principal_inertia);
        Ok(Self {
            label,
            mass,
            inv_mass: 1.0 / mass,
            inertia,
            inv_inertia: Matrix3::from_diagonal(&principal_inertia.map(|i| 1.0 / i)),
            position,
            orientation,
            linear_velocity: Vector3::zeros(),
            angular_velocity: Vector3::zeros(),
            colliders: Vec::new(),
            torque: Vector3::zeros(),
        })
    }

    /// Immovable body (infinite mass), used to anchor joints to the world.
    pub fn fixed(label: impl Into<String>, position: Vector3<f64>) -> Self {
        Self {
            label: label.into(),
            mass: f64::INFINITY,
            inv_mass: 0.0,
            inertia: Matrix3::zeros(),
            inv_inertia: Matrix3::zeros(),
            position,
            orientation: UnitQuaternion::identity(),
            linear_velocity: Vector3::zeros(),
            angular_velocity: Vector3::zeros(),
            colliders: Vec::new(),
            torque: Vector3::zeros(),
        }
    }

    pub fn with_collider(mut self, sphere: Sphere) -> Self {
        self.colliders.push(sphere);
        self
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn inv_mass(&self) -> f64 {
        self.inv_mass
    }

    pub fn is_fixed(&self) -> bool {
        self.inv_mass == 0.0
    }

    pub fn inertia(&self) -> &Matrix3<f64> {
        &self.inertia
    }

    pub fn world_inv_inertia(&self) -> Matrix3<f64> {
        let r = self.orientation.to_rotation_matrix();
        r.matrix() * self.inv_inertia * r.matrix().transpose()
    }

    pub fn world_inertia(&self) -> Matrix3<f64> {
        let r = self.orientation.to_rotation_matrix();
        r.matrix() * self.inertia * r.matrix().transpose()
    }

    pub fn to_world(&self, local: &Vector3<f64>) -> Vector3<f64> {
        self.position + self.orientation * local
    }

    pub fn to_local(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.orientation.inverse() * (world - self.position)
    }

    pub fn point_velocity(&self, world_point: &Vector3<f64>) -> Vector3<f64> {
        self.linear_velocity + self.angular_velocity.cross(&(world_point - self.position))
    }

    pub fn kinetic_energy(&self) -> f64 {
        if self.is_fixed() {
            return 0.0;
        }
        let w = &self.angular_velocity;
        0.5 * self.mass * self.linear_velocity.norm_squared()
            + 0.5 * w.dot(&(self.world_inertia() * w))
    }

    /// Adds a torque (world frame) applied during the next step only.
    pub fn apply_torque(&mut self, torque: Vector3<f64>) {
        self.torque += torque;
    }
}
