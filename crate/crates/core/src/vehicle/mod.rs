//! Articulated eight-wheel-class forwarder reduced to 15 rigid bodies.
//!
//! Vehicle frame: x forward, y left, z up, origin at the centre of the mid
//! segment in the plane of the suspension pivots. Wheels and arms are
//! numbered front-left, front-right, mid-left, mid-right, rear-left,
//! rear-right.

mod constants;
mod kinematics;

use nalgebra::{UnitQuaternion, Vector3};

pub use constants::VehicleConstants;
pub use kinematics::{
    compute_slip, normalized_loads, sidewall_angle, wheel_torque_command, JointWork, SIDEWALL_ANGLE,
};

use crate::error::{Error, Result};
use crate::sim::{BodyId, FixedJoint, HingeJoint, JointId, Motor, RigidBody, Sphere, World, TIMESTEP};

pub const ACTION_DIM: usize = 14;
pub const WHEEL_COUNT: usize = 6;

/// Policy action: `[art_front, art_rear, piston_1..6, wheel_torque_1..6]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action(pub [f64; ACTION_DIM]);

impl Action {
    pub fn zero() -> Self {
        Self([0.0; ACTION_DIM])
    }

    /// Validates a raw action; components outside `[-1, 1]` are clamped.
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.len() != ACTION_DIM {
            return Err(Error::InvalidAction(format!(
                "expected {ACTION_DIM} components, got {}",
                values.len()
            )));
        }
        let mut a = [0.0; ACTION_DIM];
        for (k, (&v, slot)) in values.iter().zip(a.iter_mut()).enumerate() {
            if v.is_nan() {
                return Err(Error::InvalidAction(format!("component {k} is NaN")));
            }
            *slot = v.clamp(-1.0, 1.0);
        }
        Ok(Self(a))
    }

    pub fn articulation(&self) -> &[f64] {
        &self.0[0..2]
    }

    pub fn pistons(&self) -> &[f64] {
        &self.0[2..8]
    }

    pub fn wheel_torques(&self) -> &[f64] {
        &self.0[8..14]
    }
}

/// Affine map from `[-1, 1]` onto `[lo, hi]`.
pub fn map_to_range(a: f64, (lo, hi): (f64, f64)) -> f64 {
    lo + 0.5 * (a.clamp(-1.0, 1.0) + 1.0) * (hi - lo)
}

/// Pose of the vehicle frame origin on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub position: Vector3<f64>,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    /// Reference-frame velocity along the heading, m/s.
    pub forward_speed: f64,
    /// Reference-frame velocity to the left of the heading, m/s.
    pub lateral_speed: f64,
    pub yaw_rate: f64,
    pub articulation: [f64; 2],
    /// Piston extension from fully retracted, m.
    pub piston_displacement: [f64; WHEEL_COUNT],
    /// Piston extension as a fraction of the stroke, in `[0, 1]`.
    pub piston_normalized: [f64; WHEEL_COUNT],
    pub wheel_speeds: [f64; WHEEL_COUNT],
    pub slip_long: [f64; WHEEL_COUNT],
    pub slip_angle: [f64; WHEEL_COUNT],
    /// Wheel normal forces over the last control interval, as fractions of
    /// the vehicle weight.
    pub loads: [f64; WHEEL_COUNT],
    pub sidewall_contacts: usize,
    /// Actuated-joint work over the last control interval, J.
    pub joint_work: f64,
}

#[derive(Debug, Clone)]
pub struct VehicleModel {
    constants: VehicleConstants,
    pub segments: [BodyId; 3],
    pub arms: [BodyId; WHEEL_COUNT],
    pub wheels: [BodyId; WHEEL_COUNT],
    pub payload: Option<BodyId>,
    pub articulation: [JointId; 2],
    pub suspension: [JointId; WHEEL_COUNT],
    pub wheel_joints: [JointId; WHEEL_COUNT],
    articulation_targets: [f64; 2],
    suspension_targets: [f64; WHEEL_COUNT],
    wheel_commands: [f64; WHEEL_COUNT],
    holding_wheels: bool,
    work: JointWork,
    load_sum: [f64; WHEEL_COUNT],
    load_steps: usize,
    loads: [f64; WHEEL_COUNT],
    last_work: f64,
}

fn box_inertia(m: f64, lx: f64, ly: f64, lz: f64) -> Vector3<f64> {
    Vector3::new(
        m / 12.0 * (ly * ly + lz * lz),
        m / 12.0 * (lx * lx + lz * lz),
        m / 12.0 * (lx * lx + ly * ly),
    )
}

impl VehicleModel {
    /// Builds the vehicle into `world`, resting its wheels just above the
    /// highest terrain point under the footprint.
    pub fn build(world: &mut World, constants: &VehicleConstants, at: Placement) -> Result<Self> {
        constants.validate()?;
        let c = constants;
        let yaw = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), at.yaw);
        let [lf, lm, lr] = c.segment_lengths;
        let seg_x = [0.5 * lm + 0.5 * lf, 0.0, -(0.5 * lm + 0.5 * lr)];
        let half_track = 0.5 * c.track_width;
        let half_arm = 0.5 * c.arm_length;

        let mut ground = f64::NEG_INFINITY;
        for (k, &x) in seg_x.iter().enumerate() {
            let l = c.segment_lengths[k];
            for dx in [-0.5 * l, 0.0, 0.5 * l] {
                for dy in [-half_track, 0.0, half_track] {
                    let p = yaw * Vector3::new(x + dx, dy, 0.0);
                    let h = world.terrain().sample_clamped(at.x + p.x, at.y + p.y).height;
                    ground = ground.max(h);
                }
            }
        }
        let origin = Vector3::new(at.x, at.y, ground + c.wheel_radius + 0.02);
        let place = |local: Vector3<f64>| origin + yaw * local;

        let seg_mass = c.segment_masses();
        let names = ["front", "mid", "rear"];
        let mut segments = [BodyId(0); 3];
        for k in 0..3 {
            let l = c.segment_lengths[k];
            let mut body = RigidBody::new(
                format!("{} segment", names[k]),
                seg_mass[k],
                box_inertia(seg_mass[k], l, c.segment_width, c.segment_height),
                place(Vector3::new(seg_x[k], 0.0, c.chassis_height)),
                yaw,
            )?;
            let spacing = 0.5 * (l - c.chassis_collider_radius);
            for dx in [-spacing, 0.0, spacing] {
                body = body.with_collider(Sphere {
                    radius: c.chassis_collider_radius,
                    offset: Vector3::new(dx, 0.0, -0.2),
                });
            }
            segments[k] = world.add_body(body);
        }

        let mut articulation = [JointId(0); 2];
        for (slot, (child, sign)) in [(0usize, 1.0), (2usize, -1.0)].into_iter().enumerate() {
            let anchor = place(Vector3::new(sign * 0.5 * lm, 0.0, c.chassis_height));
            let (lo, hi) = c.articulation_range();
            let hinge = HingeJoint::new(
                (segments[1], world.body(segments[1])),
                (segments[child], world.body(segments[child])),
                anchor,
                yaw * Vector3::z(),
            )
            .with_limits(lo, hi);
            articulation[slot] = world.add_joint(hinge);
        }

        let arm_inertia = box_inertia(c.arm_mass, c.arm_length, 0.2, 0.2);
        let r = c.wheel_radius;
        let wm = c.wheel_mass;
        let wheel_inertia = Vector3::new(
            wm / 12.0 * (3.0 * r * r + c.wheel_width * c.wheel_width),
            0.5 * wm * r * r,
            wm / 12.0 * (3.0 * r * r + c.wheel_width * c.wheel_width),
        );
        let mut arms = [BodyId(0); WHEEL_COUNT];
        let mut wheels = [BodyId(0); WHEEL_COUNT];
        let mut suspension = [JointId(0); WHEEL_COUNT];
        let mut wheel_joints = [JointId(0); WHEEL_COUNT];
        for i in 0..WHEEL_COUNT {
            let seg = i / 2;
            let side = if i % 2 == 0 { 1.0 } else { -1.0 };
            let y = side * half_track;
            let xc = seg_x[seg];
            let arm = RigidBody::new(
                format!("arm {}", i + 1),
                c.arm_mass,
                arm_inertia,
                place(Vector3::new(xc, y, 0.0)),
                yaw,
            )?;
            arms[i] = world.add_body(arm);
            let wheel = RigidBody::new(
                format!("wheel {}", i + 1),
                wm,
                wheel_inertia,
                place(Vector3::new(xc - half_arm, y, 0.0)),
                yaw,
            )?
            .with_collider(Sphere::centered(r));
            wheels[i] = world.add_body(wheel);

            let (lo, hi) = c.suspension_range();
            let pivot = HingeJoint::new(
                (segments[seg], world.body(segments[seg])),
                (arms[i], world.body(arms[i])),
                place(Vector3::new(xc + half_arm, y, 0.0)),
                yaw * Vector3::y(),
            )
            .with_limits(lo, hi);
            suspension[i] = world.add_joint(pivot);
            let axle = HingeJoint::new(
                (arms[i], world.body(arms[i])),
                (wheels[i], world.body(wheels[i])),
                place(Vector3::new(xc - half_arm, y, 0.0)),
                yaw * Vector3::y(),
            );
            wheel_joints[i] = world.add_joint(axle);
        }

        let payload = if c.payload_mass > 0.0 {
            let centre = place(Vector3::new(seg_x[2], 0.0, c.chassis_height + 0.5 * c.segment_height + 0.6));
            let body = RigidBody::new(
                "payload",
                c.payload_mass,
                box_inertia(c.payload_mass, lr, c.segment_width, 1.2),
                centre,
                yaw,
            )?;
            let id = world.add_body(body);
            world.add_joint(FixedJoint::new((segments[2], world.body(segments[2])), (id, world.body(id)), centre));
            Some(id)
        } else {
            None
        };

        let mut model = Self {
            constants: c.clone(),
            segments,
            arms,
            wheels,
            payload,
            articulation,
            suspension,
            wheel_joints,
            articulation_targets: [0.0; 2],
            suspension_targets: [0.0; WHEEL_COUNT],
            wheel_commands: [0.0; WHEEL_COUNT],
            holding_wheels: false,
            work: JointWork::default(),
            load_sum: [0.0; WHEEL_COUNT],
            load_steps: 0,
            loads: [0.0; WHEEL_COUNT],
            last_work: 0.0,
        };
        model.apply_action(&Action::zero());
        Ok(model)
    }

    pub fn constants(&self) -> &VehicleConstants {
        &self.constants
    }

    /// Vehicle mass including payload, kg.
    pub fn total_mass(&self, world: &World) -> f64 {
        self.all_bodies().map(|b| world.body(b).mass()).sum()
    }

    pub fn weight(&self, world: &World) -> f64 {
        self.total_mass(world) * world.config().gravity
    }

    pub fn all_bodies(&self) -> impl Iterator<Item = BodyId> + '_ {
        self.segments
            .iter()
            .chain(&self.arms)
            .chain(&self.wheels)
            .copied()
            .chain(self.payload)
    }

    pub fn is_chassis(&self, body: BodyId) -> bool {
        self.segments.contains(&body) || self.payload == Some(body)
    }

    pub fn wheel_index(&self, body: BodyId) -> Option<usize> {
        self.wheels.iter().position(|&w| w == body)
    }

    /// Sets controller targets and wheel torque commands for the next
    /// control interval.
    pub fn apply_action(&mut self, action: &Action) {
        let c = &self.constants;
        for (t, &a) in self.articulation_targets.iter_mut().zip(action.articulation()) {
            *t = map_to_range(a, c.articulation_range());
        }
        for (t, &a) in self.suspension_targets.iter_mut().zip(action.pistons()) {
            *t = map_to_range(a, c.suspension_range());
        }
        for (t, &a) in self.wheel_commands.iter_mut().zip(action.wheel_torques()) {
            *t = a.clamp(-1.0, 1.0) * c.wheel_torque_limit;
        }
    }

    pub fn articulation_targets(&self) -> [f64; 2] {
        self.articulation_targets
    }

    pub fn suspension_targets(&self) -> [f64; WHEEL_COUNT] {
        self.suspension_targets
    }

    /// Updates every motor from its controller. Called before each physics step.
    pub fn update_motors(&self, world: &mut World) -> Result<()> {
        let c = &self.constants;
        let servo = |world: &mut World, joint: JointId, target: f64, max_speed: f64, limit: f64| {
            let angle = world.hinge(joint).map_or(0.0, |h| h.angle());
            let speed = (c.kp * (target - angle)).clamp(-max_speed, max_speed);
            world.set_motor(joint, speed, limit)
        };
        for k in 0..2 {
            servo(
                world,
                self.articulation[k],
                self.articulation_targets[k],
                c.articulation_max_speed,
                c.articulation_torque_limit,
            )?;
        }
        for i in 0..WHEEL_COUNT {
            servo(
                world,
                self.suspension[i],
                self.suspension_targets[i],
                c.suspension_max_speed,
                c.suspension_torque_limit(),
            )?;
            let joint = self.wheel_joints[i];
            if self.holding_wheels {
                world.set_motor(joint, 0.0, c.wheel_torque_limit)?;
            } else {
                let omega = world.hinge(joint).map_or(0.0, |h| h.speed());
                let torque = wheel_torque_command(self.wheel_commands[i], omega, c.wheel_speed_clamp);
                world.set_torque(joint, torque)?;
            }
        }
        Ok(())
    }

    /// Starts a new control interval: clears the work and load accumulators.
    pub fn begin_interval(&mut self) {
        self.work = JointWork::default();
        self.load_sum = [0.0; WHEEL_COUNT];
        self.load_steps = 0;
    }

    /// One physics step with controllers and bookkeeping.
    pub fn physics_step(&mut self, world: &mut World) -> Result<()> {
        self.update_motors(world)?;
        world.step()?;
        let c = &self.constants;
        for k in 0..2 {
            let h = world.hinge(self.articulation[k]).expect("articulation hinge");
            self.work.add(h.applied_effort(), h.speed(), c.articulation_max_speed, TIMESTEP);
        }
        for i in 0..WHEEL_COUNT {
            let h = world.hinge(self.suspension[i]).expect("suspension hinge");
            self.work.add(h.applied_effort(), h.speed(), c.suspension_max_speed, TIMESTEP);
            let h = world.hinge(self.wheel_joints[i]).expect("wheel hinge");
            self.work.add(h.applied_effort(), h.speed(), c.wheel_speed_clamp, TIMESTEP);
        }
        for contact in world.contacts() {
            if let Some(i) = self.wheel_index(contact.body) {
                self.load_sum[i] += contact.normal_force;
            }
        }
        self.load_steps += 1;
        Ok(())
    }

    /// Closes the control interval, publishing mean loads and total work.
    pub fn end_interval(&mut self, world: &World) {
        let steps = self.load_steps.max(1) as f64;
        let mean = self.load_sum.map(|f| f / steps);
        self.loads = normalized_loads(&mean, self.weight(world));
        self.last_work = self.work.total();
    }

    /// Applies `action` and advances `substeps` physics steps.
    pub fn control_step(&mut self, world: &mut World, action: &Action, substeps: usize) -> Result<()> {
        self.apply_action(action);
        self.begin_interval();
        for _ in 0..substeps {
            self.physics_step(world)?;
        }
        self.end_interval(world);
        Ok(())
    }

    /// Lets the vehicle drop onto the terrain with braked wheels and the
    /// suspension and articulation held at mid-range.
    pub fn settle(&mut self, world: &mut World, steps: usize) -> Result<()> {
        self.apply_action(&Action::zero());
        self.holding_wheels = true;
        self.begin_interval();
        let result = (0..steps).try_for_each(|_| self.physics_step(world));
        self.holding_wheels = false;
        for &j in &self.wheel_joints {
            world.set_torque(j, 0.0)?;
        }
        result?;
        self.end_interval(world);
        Ok(())
    }

    /// Normalized wheel loads over the last control interval.
    pub fn wheel_loads(&self) -> [f64; WHEEL_COUNT] {
        self.loads
    }

    /// Actuated-joint work over the last control interval and its upper
    /// bound, J.
    pub fn joint_work(&self, interval: f64) -> (f64, f64) {
        (self.last_work, self.constants.max_joint_work(interval))
    }

    /// Wheel contacts whose point lies within 60° of the wheel axis.
    pub fn sidewall_contacts(&self, world: &World) -> usize {
        world
            .contacts()
            .iter()
            .filter(|c| {
                self.wheel_index(c.body).is_some_and(|i| {
                    let wheel = world.body(self.wheels[i]);
                    let axis = world.hinge(self.wheel_joints[i]).expect("wheel hinge").world_axis(world.body(self.arms[i]));
                    sidewall_angle(&(c.position - wheel.position), &axis) < SIDEWALL_ANGLE
                })
            })
            .count()
    }

    pub fn chassis_in_contact(&self, world: &World) -> bool {
        world.contacts().iter().any(|c| self.is_chassis(c.body))
    }

    /// Reference frame: on the front segment, behind the cabin.
    pub fn reference_pose(&self, world: &World) -> (Vector3<f64>, UnitQuaternion<f64>) {
        let front = world.body(self.segments[0]);
        let local = Vector3::new(-self.constants.reference_offset, 0.0, 0.0);
        (front.to_world(&local), front.orientation)
    }

    pub fn state(&self, world: &World) -> VehicleState {
        let c = &self.constants;
        let (position, orientation) = self.reference_pose(world);
        let (roll, pitch, yaw) = orientation.euler_angles();
        let front = world.body(self.segments[0]);
        let v = front.point_velocity(&position);
        let heading = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
        let left = Vector3::new(-yaw.sin(), yaw.cos(), 0.0);

        let angle = |j: JointId| world.hinge(j).map_or(0.0, |h| h.angle());
        let (lo, hi) = c.suspension_range();
        let mut piston_displacement = [0.0; WHEEL_COUNT];
        let mut piston_normalized = [0.0; WHEEL_COUNT];
        let mut wheel_speeds = [0.0; WHEEL_COUNT];
        let mut slip_long = [0.0; WHEEL_COUNT];
        let mut slip_angle = [0.0; WHEEL_COUNT];
        for i in 0..WHEEL_COUNT {
            let theta = angle(self.suspension[i]).clamp(lo, hi);
            piston_displacement[i] = c.piston_lever_arm * (theta - lo);
            piston_normalized[i] = (theta - lo) / (hi - lo);
            let hinge = world.hinge(self.wheel_joints[i]).expect("wheel hinge");
            wheel_speeds[i] = hinge.speed();

            let wheel = world.body(self.wheels[i]);
            let axis = hinge.world_axis(world.body(self.arms[i]));
            let ground = world
                .contacts()
                .iter()
                .find(|k| k.body == self.wheels[i])
                .map_or(Vector3::z(), |k| k.normal);
            // The axis points left, so this is the rolling direction.
            let forward = axis.cross(&ground);
            let forward = if forward.norm() > 1e-9 { forward.normalize() } else { heading };
            let lateral = ground.cross(&forward);
            let spin = wheel.angular_velocity.dot(&axis);
            let (l, a) = compute_slip(
                wheel.linear_velocity.dot(&forward),
                wheel.linear_velocity.dot(&lateral),
                spin,
                c.wheel_radius,
                c.slip_speed_epsilon,
            );
            slip_long[i] = l;
            slip_angle[i] = a;
        }

        VehicleState {
            position,
            yaw,
            pitch,
            roll,
            forward_speed: v.dot(&heading),
            lateral_speed: v.dot(&left),
            yaw_rate: front.angular_velocity.z,
            articulation: [angle(self.articulation[0]), angle(self.articulation[1])],
            piston_displacement,
            piston_normalized,
            wheel_speeds,
            slip_long,
            slip_angle,
            loads: self.loads,
            sidewall_contacts: self.sidewall_contacts(world),
            joint_work: self.last_work,
        }
    }

    /// Current motor setting of a wheel hinge (for inspection and tests).
    pub fn wheel_motor(&self, world: &World, i: usize) -> Motor {
        world.hinge(self.wheel_joints[i]).expect("wheel hinge").motor
    }
}
