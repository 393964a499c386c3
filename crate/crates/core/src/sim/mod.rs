//! Fixed-step rigid multibody dynamics.
//!
//! Velocity-level impulses with Baumgarte stabilisation. Each step applies
//! gravity and prescribed torques, solves the joints exactly, detects sphere
//! contacts against the terrain, runs a fixed number of projected
//! Gauss-Seidel sweeps over motor, limit and contact rows, then integrates
//! positions. Bounded impulses are warm-started from the previous step.

mod body;
mod contact;
mod joint;
mod solver;

use std::sync::Arc;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

pub use body::{BodyId, RigidBody, Sphere};
pub use contact::{closest_point_on_triangle, sphere_terrain, ContactPoint, SphereHit};
pub use joint::{FixedJoint, HingeJoint, Joint, JointId, Motor};

use crate::error::{config_err, Error, Result};
use crate::heightfield::HeightField;
use joint::any_perpendicular;
use solver::{ContactRows, Jacobian, JointBlock, Row, RowSpec, System, V3};

/// Physics step, seconds.
pub const TIMESTEP: f64 = 1.0 / 60.0;

/// Any body speed above this is treated as solver divergence, m/s.
pub const DIVERGENCE_SPEED: f64 = 1.0e3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Gravitational acceleration magnitude, m/s².
    pub gravity: f64,
    /// Coulomb friction coefficient between wheels/chassis and ground.
    pub friction: f64,
    /// Gauss-Seidel sweeps per step.
    pub iterations: usize,
    /// Fraction of positional error corrected per step.
    pub baumgarte: f64,
    /// Penetration tolerated before positional correction kicks in, m.
    pub contact_slop: f64,
    /// Cap on the contact separation velocity used for correction, m/s.
    pub max_correction_speed: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gravity: 9.81,
            friction: 0.7,
            iterations: 20,
            baumgarte: 0.2,
            contact_slop: 0.005,
            max_correction_speed: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct ContactWarm {
    body: BodyId,
    collider: usize,
    normal: f64,
    tangent: V3,
}

#[derive(Debug, Clone)]
pub struct World {
    config: SolverConfig,
    terrain: Arc<HeightField>,
    bodies: Vec<RigidBody>,
    joints: Vec<Joint>,
    contacts: Vec<ContactPoint>,
    contact_warm: Vec<ContactWarm>,
    step_count: u64,
}

impl World {
    pub fn new(terrain: Arc<HeightField>, config: SolverConfig) -> Result<Self> {
        if !(config.friction >= 0.0 && config.friction.is_finite()) {
            return Err(config_err(format!(
                "friction coefficient must be non-negative, got {}",
                config.friction
            )));
        }
        if config.iterations == 0 {
            return Err(config_err("solver needs at least one iteration"));
        }
        if !(config.gravity >= 0.0 && config.gravity.is_finite()) {
            return Err(config_err(format!("gravity must be non-negative, got {}", config.gravity)));
        }
        Ok(Self {
            config,
            terrain,
            bodies: Vec::new(),
            joints: Vec::new(),
            contacts: Vec::new(),
            contact_warm: Vec::new(),
            step_count: 0,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn terrain(&self) -> &Arc<HeightField> {
        &self.terrain
    }

    pub fn friction(&self) -> f64 {
        self.config.friction
    }

    pub fn set_friction(&mut self, mu: f64) -> Result<()> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(config_err(format!("friction coefficient must be non-negative, got {mu}")));
        }
        self.config.friction = mu;
        Ok(())
    }

    pub fn gravity(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, -self.config.gravity)
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn time(&self) -> f64 {
        self.step_count as f64 * TIMESTEP
    }

    pub fn add_body(&mut self, body: RigidBody) -> BodyId {
        self.bodies.push(body);
        BodyId(self.bodies.len() - 1)
    }

    pub fn add_joint(&mut self, joint: impl Into<Joint>) -> JointId {
        self.joints.push(joint.into());
        JointId(self.joints.len() - 1)
    }

    pub fn body(&self, id: BodyId) -> &RigidBody {
        &self.bodies[id.0]
    }

    pub fn body_mut(&mut self, id: BodyId) -> &mut RigidBody {
        &mut self.bodies[id.0]
    }

    pub fn bodies(&self) -> &[RigidBody] {
        &self.bodies
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn hinge(&self, id: JointId) -> Option<&HingeJoint> {
        self.joints.get(id.0).and_then(Joint::as_hinge)
    }

    fn hinge_mut(&mut self, id: JointId) -> Result<&mut HingeJoint> {
        match self.joints.get_mut(id.0) {
            Some(Joint::Hinge(h)) => Ok(h),
            Some(Joint::Fixed(_)) => Err(config_err(format!("joint {} is not a hinge", id.0))),
            None => Err(config_err(format!("no joint with index {}", id.0))),
        }
    }

    /// Sets a speed motor on a hinge for the following steps.
    pub fn set_motor(&mut self, id: JointId, target_speed: f64, effort_limit: f64) -> Result<()> {
        if !(effort_limit >= 0.0) {
            return Err(config_err(format!("motor effort limit must be non-negative, got {effort_limit}")));
        }
        if !target_speed.is_finite() {
            return Err(config_err(format!("motor target speed must be finite, got {target_speed}")));
        }
        self.hinge_mut(id)?.motor = Motor::Speed {
            target: target_speed,
            limit: effort_limit,
        };
        Ok(())
    }

    /// Prescribes the hinge torque for the following steps.
    pub fn set_torque(&mut self, id: JointId, torque: f64) -> Result<()> {
        if !torque.is_finite() {
            return Err(config_err(format!("joint torque must be finite, got {torque}")));
        }
        self.hinge_mut(id)?.motor = Motor::Torque(torque);
        Ok(())
    }

    pub fn release_motor(&mut self, id: JointId) -> Result<()> {
        self.hinge_mut(id)?.motor = Motor::Free;
        Ok(())
    }

    /// Contacts resolved during the last step, with their forces.
    pub fn contacts(&self) -> &[ContactPoint] {
        &self.contacts
    }

    /// Geometric contacts for the current configuration (forces zero).
    pub fn detect_contacts(&self) -> Vec<ContactPoint> {
        let mut out = Vec::new();
        for (i, body) in self.bodies.iter().enumerate() {
            if body.is_fixed() {
                continue;
            }
            for (k, sphere) in body.colliders.iter().enumerate() {
                let center = body.to_world(&sphere.offset);
                if let Some(hit) = sphere_terrain(&self.terrain, &center, sphere.radius) {
                    out.push(ContactPoint {
                        body: BodyId(i),
                        collider: k,
                        position: hit.position,
                        normal: hit.normal,
                        depth: hit.depth,
                        normal_force: 0.0,
                        tangent_force: V3::zeros(),
                    });
                }
            }
        }
        out
    }

    /// Kinetic plus gravitational potential energy of all dynamic bodies,
    /// with the potential measured from the lowest terrain node.
    pub fn mechanical_energy(&self) -> f64 {
        let g = self.config.gravity;
        let datum = self.terrain.min_height();
        self.bodies
            .iter()
            .filter(|b| !b.is_fixed())
            .map(|b| b.kinetic_energy() + b.mass() * g * (b.position.z - datum))
            .sum()
    }

    /// Advances the world by one [`TIMESTEP`].
    pub fn step(&mut self) -> Result<()> {
        let dt = TIMESTEP;
        let beta = self.config.baumgarte;
        let gravity = self.gravity();

        let n = self.bodies.len();
        let mut sys = System {
            inv_mass: Vec::with_capacity(n),
            inv_inertia: Vec::with_capacity(n),
            u: vec![0.0; 6 * n],
        };
        for (i, b) in self.bodies.iter().enumerate() {
            let inv_inertia = b.world_inv_inertia();
            if !b.is_fixed() {
                let v = b.linear_velocity + gravity * dt;
                let w = b.angular_velocity + inv_inertia * b.torque * dt;
                sys.u[6 * i..6 * i + 3].copy_from_slice(v.as_slice());
                sys.u[6 * i + 3..6 * i + 6].copy_from_slice(w.as_slice());
            }
            sys.inv_mass.push(b.inv_mass());
            sys.inv_inertia.push(inv_inertia);
        }
        for joint in &self.joints {
            if let Joint::Hinge(h) = joint {
                if let Motor::Torque(tau) = h.motor {
                    let axis = self.bodies[h.parent.0].orientation * h.axis_parent;
                    let jac = Jacobian::angular(h.parent.0, h.child.0, axis);
                    let mut du = vec![0.0; 6 * n];
                    jac.add_response(&sys, tau * dt, &mut du);
                    for (x, d) in sys.u.iter_mut().zip(du) {
                        *x += d;
                    }
                }
            }
        }

        let (rows, rhs) = self.joint_rows(beta);
        let block = JointBlock::new(&sys, rows, rhs);
        block.enforce(&mut sys.u);

        // Gather every bounded row, then build their responses in one batch.
        let mut specs = Vec::new();
        let mut hinge_slots: Vec<(usize, Option<usize>, Option<usize>)> = Vec::new();
        for (ji, joint) in self.joints.iter().enumerate() {
            if let Joint::Hinge(h) = joint {
                let (motor, limit) = self.hinge_bounded_rows(h, beta);
                if motor.is_some() || limit.is_some() {
                    let mut slot = |r: Option<RowSpec>| {
                        r.map(|r| {
                            specs.push(r);
                            specs.len() - 1
                        })
                    };
                    let m = slot(motor);
                    let l = slot(limit);
                    hinge_slots.push((ji, m, l));
                }
            }
        }
        let geometric = self.detect_contacts();
        let contact_start = specs.len();
        for c in &geometric {
            specs.extend(self.contact_rows(c));
        }
        let mut rows = Row::batch(&sys, &block, specs).into_iter();
        let mut taken: Vec<Option<Row>> = rows.by_ref().take(contact_start).map(Some).collect();
        let mut hinge_rows: Vec<(usize, Option<Row>, Option<Row>)> = hinge_slots
            .into_iter()
            .map(|(ji, m, l)| (ji, m.and_then(|k| taken[k].take()), l.and_then(|k| taken[k].take())))
            .collect();
        let mu = self.config.friction;
        let mut contact_rows: Vec<ContactRows> = Vec::with_capacity(geometric.len());
        while let (Some(normal), Some(t1), Some(t2)) = (rows.next(), rows.next(), rows.next()) {
            contact_rows.push(ContactRows { normal, t1, t2, mu });
        }

        for (ji, motor, limit) in &mut hinge_rows {
            let Joint::Hinge(h) = &self.joints[*ji] else { unreachable!() };
            if let Some(m) = motor.as_mut() {
                m.warm_start(&mut sys.u, h.warm[0]);
            }
            if let Some(l) = limit.as_mut() {
                l.warm_start(&mut sys.u, h.warm[1]);
            }
        }
        for (rows, c) in contact_rows.iter_mut().zip(&geometric) {
            if let Some(w) = self
                .contact_warm
                .iter()
                .find(|w| w.body == c.body && w.collider == c.collider)
            {
                rows.warm_start(&mut sys.u, w.normal, &w.tangent);
            }
        }

        for _ in 0..self.config.iterations {
            for (_, motor, _) in &mut hinge_rows {
                if let Some(m) = motor.as_mut() {
                    m.solve(&mut sys.u);
                }
            }
            for (_, _, limit) in &mut hinge_rows {
                if let Some(l) = limit.as_mut() {
                    l.solve(&mut sys.u);
                }
            }
            for c in &mut contact_rows {
                c.normal.solve(&mut sys.u);
            }
            for c in &mut contact_rows {
                c.solve_friction(&mut sys.u);
            }
        }

        // Divergence check before anything is committed.
        for i in 0..n {
            let speed = sys.linear(i).norm().max(sys.angular(i).norm());
            if !speed.is_finite() || speed > DIVERGENCE_SPEED {
                return Err(Error::SimulationUnstable {
                    step: self.step_count,
                    detail: format!("body `{}` reached speed {speed:.3e}", self.bodies[i].label),
                });
            }
        }

        for joint in &mut self.joints {
            if let Joint::Hinge(h) = joint {
                h.warm = [0.0; 2];
                h.applied_effort = match h.motor {
                    Motor::Torque(tau) => tau,
                    _ => 0.0,
                };
            }
        }
        for (ji, motor, limit) in &hinge_rows {
            let Joint::Hinge(h) = &mut self.joints[*ji] else { unreachable!() };
            let m = motor.as_ref().map_or(0.0, |m| m.impulse);
            h.warm = [m, limit.as_ref().map_or(0.0, |l| l.impulse)];
            if let Motor::Speed { .. } = h.motor {
                h.applied_effort = m / dt;
            }
        }
        self.contacts = geometric
            .iter()
            .zip(&contact_rows)
            .map(|(c, rows)| ContactPoint {
                normal_force: rows.normal.impulse / dt,
                tangent_force: (rows.t1.jac.lin_a * rows.t1.impulse + rows.t2.jac.lin_a * rows.t2.impulse) / dt,
                ..*c
            })
            .collect();
        self.contact_warm = self
            .contacts
            .iter()
            .map(|c| ContactWarm {
                body: c.body,
                collider: c.collider,
                normal: c.normal_force * dt,
                tangent: c.tangent_force * dt,
            })
            .collect();

        for (i, body) in self.bodies.iter_mut().enumerate() {
            body.torque = V3::zeros();
            if body.is_fixed() {
                continue;
            }
            let v = sys.linear(i);
            let w = sys.angular(i);
            body.linear_velocity = v;
            body.angular_velocity = w;
            body.position += v * dt;
            let rotated = UnitQuaternion::from_scaled_axis(w * dt) * body.orientation;
            body.orientation = UnitQuaternion::new_normalize(rotated.into_inner());
        }

        for joint in &mut self.joints {
            if let Joint::Hinge(h) = joint {
                let (angle, speed) = h.measure(&self.bodies[h.parent.0], &self.bodies[h.child.0]);
                h.angle = angle;
                h.speed = speed;
            }
        }
        self.step_count += 1;
        Ok(())
    }

    /// Bilateral rows of every joint with their Baumgarte targets.
    fn joint_rows(&self, beta: f64) -> (Vec<Jacobian>, Vec<f64>) {
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        // Joints are usually added root first, so the reverse order
        // eliminates leaves first and keeps the factor sparse.
        for joint in self.joints.iter().rev() {
            let (pa, pb, anchor_a, anchor_b) = match joint {
                Joint::Hinge(h) => (h.parent.0, h.child.0, h.anchor_parent, h.anchor_child),
                Joint::Fixed(f) => (f.parent.0, f.child.0, f.anchor_parent, f.anchor_child),
            };
            let a = &self.bodies[pa];
            let b = &self.bodies[pb];
            let ra = a.orientation * anchor_a;
            let rb = b.orientation * anchor_b;
            let err = (b.position + rb) - (a.position + ra);
            for e in [V3::x(), V3::y(), V3::z()] {
                rows.push(Jacobian::pair(pa, -e, -ra.cross(&e), pb, e, rb.cross(&e)));
                rhs.push(-beta / TIMESTEP * err.dot(&e));
            }
            match joint {
                Joint::Hinge(h) => {
                    let axis_a = a.orientation * h.axis_parent;
                    let axis_b = b.orientation * h.axis_child;
                    let t1 = any_perpendicular(&axis_a);
                    let t2 = axis_a.cross(&t1);
                    // Rotation that carries the child axis back onto the parent axis.
                    let correction = axis_b.cross(&axis_a);
                    for t in [t1, t2] {
                        rows.push(Jacobian::angular(pa, pb, t));
                        rhs.push(beta / TIMESTEP * correction.dot(&t));
                    }
                }
                Joint::Fixed(f) => {
                    let target = a.orientation * f.relative;
                    // Rotation vector taking the child's orientation to the target one.
                    let correction = (target * b.orientation.inverse()).scaled_axis();
                    for e in [V3::x(), V3::y(), V3::z()] {
                        rows.push(Jacobian::angular(pa, pb, e));
                        rhs.push(beta / TIMESTEP * correction.dot(&e));
                    }
                }
            }
        }
        (rows, rhs)
    }

    fn hinge_bounded_rows(&self, h: &HingeJoint, beta: f64) -> (Option<RowSpec>, Option<RowSpec>) {
        let (pa, pb) = (h.parent.0, h.child.0);
        let a = &self.bodies[pa];
        let b = &self.bodies[pb];
        let axis = a.orientation * h.axis_parent;
        let spec = |rhs: f64, lo: f64, hi: f64| RowSpec {
            jac: Jacobian::angular(pa, pb, axis),
            rhs,
            lo,
            hi,
        };
        let motor = match h.motor {
            Motor::Speed { target, limit } => {
                let bound = limit * TIMESTEP;
                Some(spec(target, -bound, bound))
            }
            _ => None,
        };
        let limit = h.limits.and_then(|(lo, hi)| {
            // Rows are added slightly before the stop so a fast joint cannot
            // cross it within one step.
            const MARGIN: f64 = 0.1;
            let (angle, _) = h.measure(a, b);
            if angle - lo < MARGIN {
                let gap = lo - angle;
                let rhs = if gap > 0.0 { beta * gap / TIMESTEP } else { gap / TIMESTEP };
                Some(spec(rhs, 0.0, f64::INFINITY))
            } else if hi - angle < MARGIN {
                let gap = hi - angle;
                let rhs = if gap < 0.0 { beta * gap / TIMESTEP } else { gap / TIMESTEP };
                Some(spec(rhs, f64::NEG_INFINITY, 0.0))
            } else {
                None
            }
        });
        (motor, limit)
    }

    /// Normal and two tangential rows of one contact.
    fn contact_rows(&self, c: &ContactPoint) -> [RowSpec; 3] {
        let body = &self.bodies[c.body.0];
        let sphere = &body.colliders[c.collider];
        let center = body.to_world(&sphere.offset);
        let r = (center - c.normal * sphere.radius) - body.position;
        let n = c.normal;
        let correction = (self.config.baumgarte / TIMESTEP * (c.depth - self.config.contact_slop).max(0.0))
            .min(self.config.max_correction_speed);
        let i = c.body.0;
        let t1 = any_perpendicular(&n);
        let t2 = n.cross(&t1);
        let tangent = |t: V3| RowSpec {
            jac: Jacobian::single(i, t, r.cross(&t)),
            rhs: 0.0,
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        };
        [
            RowSpec {
                jac: Jacobian::single(i, n, r.cross(&n)),
                rhs: correction,
                lo: 0.0,
                hi: f64::INFINITY,
            },
            tangent(t1),
            tangent(t2),
        ]
    }
}
