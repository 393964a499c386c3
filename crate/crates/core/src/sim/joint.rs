use nalgebra::{UnitQuaternion, Vector3};

use super::body::{BodyId, RigidBody};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct JointId(pub usize);

/// Actuation of a hinge's free rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Motor {
    Free,
    /// Speed constraint: drives the relative joint speed toward `target`
    /// with effort no larger than `limit`.
    Speed { target: f64, limit: f64 },
    /// Prescribed torque, applied as an equal and opposite pair.
    Torque(f64),
}

/// Revolute joint: the child rotates about one axis fixed in the parent.
#[derive(Debug, Clone)]
pub struct HingeJoint {
    pub parent: BodyId,
    pub child: BodyId,
    pub(crate) anchor_parent: Vector3<f64>,
    pub(crate) anchor_child: Vector3<f64>,
    pub(crate) axis_parent: Vector3<f64>,
    pub(crate) axis_child: Vector3<f64>,
    pub(crate) ref_parent: Vector3<f64>,
    pub(crate) ref_child: Vector3<f64>,
    pub limits: Option<(f64, f64)>,
    pub motor: Motor,
    pub(crate) angle: f64,
    pub(crate) speed: f64,
    pub(crate) applied_effort: f64,
    pub(crate) warm: [f64; 2],
}

impl HingeJoint {
    /// Hinge through `anchor` about `axis` (both world frame), using the
    /// bodies' current poses; the joint angle is zero in this configuration.
    pub fn new(
        parent: (BodyId, &RigidBody),
        child: (BodyId, &RigidBody),
        anchor: Vector3<f64>,
        axis: Vector3<f64>,
    ) -> Self {
        let axis = axis.normalize();
        let (pid, pb) = parent;
        let (cid, cb) = child;
        let reference = any_perpendicular(&axis);
        Self {
            parent: pid,
            child: cid,
            anchor_parent: pb.to_local(&anchor),
            anchor_child: cb.to_local(&anchor),
            axis_parent: pb.orientation.inverse() * axis,
            axis_child: cb.orientation.inverse() * axis,
            ref_parent: pb.orientation.inverse() * reference,
            ref_child: cb.orientation.inverse() * reference,
            limits: None,
            motor: Motor::Free,
            angle: 0.0,
            speed: 0.0,
            applied_effort: 0.0,
            warm: [0.0; 2],
        }
    }

    pub fn with_limits(mut self, lower: f64, upper: f64) -> Self {
        self.limits = Some((lower, upper));
        self
    }

    /// Child rotation relative to parent about the axis, radians.
    pub fn angle(&self) -> f64 {
        self.angle
    }

    /// Relative angular speed about the axis, rad/s.
    pub fn speed(&self) -> f64 {
        self.speed
    }

    /// Motor effort applied during the last step, N·m (signed).
    pub fn applied_effort(&self) -> f64 {
        self.applied_effort
    }

    pub fn world_axis(&self, parent: &RigidBody) -> Vector3<f64> {
        parent.orientation * self.axis_parent
    }

    pub(crate) fn measure(&self, parent: &RigidBody, child: &RigidBody) -> (f64, f64) {
        let axis = parent.orientation * self.axis_parent;
        let rp = parent.orientation * self.ref_parent;
        let rc = child.orientation * self.ref_child;
        let angle = rp.cross(&rc).dot(&axis).atan2(rp.dot(&rc));
        let speed = (child.angular_velocity - parent.angular_velocity).dot(&axis);
        (angle, speed)
    }
}

/// Rigid attachment of two bodies.
#[derive(Debug, Clone)]
pub struct FixedJoint {
    pub parent: BodyId,
    pub child: BodyId,
    pub(crate) anchor_parent: Vector3<f64>,
    pub(crate) anchor_child: Vector3<f64>,
    /// parent⁻¹ · child at creation.
    pub(crate) relative: UnitQuaternion<f64>,
}

impl FixedJoint {
    pub fn new(parent: (BodyId, &RigidBody), child: (BodyId, &RigidBody), anchor: Vector3<f64>) -> Self {
        let (pid, pb) = parent;
        let (cid, cb) = child;
        Self {
            parent: pid,
            child: cid,
            anchor_parent: pb.to_local(&anchor),
            anchor_child: cb.to_local(&anchor),
            relative: pb.orientation.inverse() * cb.orientation,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Joint {
    Hinge(HingeJoint),
    Fixed(FixedJoint),
}

impl Joint {
    pub fn as_hinge(&self) -> Option<&HingeJoint> {
        match self {
            Joint::Hinge(h) => Some(h),
            Joint::Fixed(_) => None,
        }
    }

    pub fn bodies(&self) -> (BodyId, BodyId) {
        match self {
            Joint::Hinge(h) => (h.parent, h.child),
            Joint::Fixed(f) => (f.parent, f.child),
        }
    }
}

impl From<HingeJoint> for Joint {
    fn from(h: HingeJoint) -> Self {
        Joint::Hinge(h)
    }
}

impl From<FixedJoint> for Joint {
    fn from(f: FixedJoint) -> Self {
        Joint::Fixed(f)
    }
}

/// Unit vector orthogonal to `v`, chosen deterministically.
pub(crate) fn any_perpendicular(v: &Vector3<f64>) -> Vector3<f64> {
    let helper = if v.x.abs() < 0.57 {
        Vector3::x()
    } else if v.y.abs() < 0.57 {
        Vector3::y()
    } else {
        Vector3::z()
    };
    v.cross(&helper).normalize()
}
