//! Planar tabletop world: a kinematic gripper, dynamic disc/box objects with
//! Coulomb surface friction, impulse-based contact resolution, and the
//! action-dependent velocity noise model used for stochastic execution.

mod shapes;
mod solver;

pub use shapes::{Manifold, Obb};

use crate::math::{normalize_angle, Vec2};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("control duration {0} s is not a positive integer multiple of the {1} s sub-step")]
    BadDuration(f64, f64),
    #[error("scene has no goal region")]
    NoGoal,
    #[error("object index {0} out of range ({1} objects)")]
    BadIndex(usize, usize),
}

/// Collision footprint of a dynamic object.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Disc { radius: f64 },
    Box { half_x: f64, half_y: f64 },
}

impl Shape {
    /// Radius of the smallest disc containing the footprint.
    pub fn bounding_radius(&self) -> f64 {
        match *self {
            Shape::Disc { radius } => radius,
            Shape::Box { half_x, half_y } => (half_x * half_x + half_y * half_y).sqrt(),
        }
    }

    /// Moment of inertia about the center for unit placement [kg m^2].
    pub fn inertia(&self, mass: f64) -> f64 {
        match *self {
            Shape::Disc { radius } => 0.5 * mass * radius * radius,
            Shape::Box { half_x, half_y } => {
                mass * (4.0 * half_x * half_x + 4.0 * half_y * half_y) / 12.0
            }
        }
    }
}

/// Robot joint state: planar pose, gripper opening, and their velocities.
///
/// Joint order everywhere is (x, y, rotation, gripper).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    /// Heading [rad], normalized to (-pi, pi].
    pub rotation: f64,
    /// Gripper opening [m], clamped to [0, max_opening].
    pub opening: f64,
    pub vx: f64,
    pub vy: f64,
    pub vrot: f64,
    pub vopen: f64,
}

impl RobotState {
    pub fn at(x: f64, y: f64, rotation: f64, opening: f64) -> Self {
        RobotState {
            x,
            y,
            rotation: normalize_angle(rotation),
            opening,
            vx: 0.0,
            vy: 0.0,
            vrot: 0.0,
            vopen: 0.0,
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// Unit vector the fingers point along.
    pub fn forward(&self) -> Vec2 {
        Vec2::new(self.rotation.cos(), self.rotation.sin())
    }

    /// Unit vector across the gripper (left of forward).
    pub fn lateral(&self) -> Vec2 {
        self.forward().perp()
    }

    fn is_finite(&self) -> bool {
        [
            self.x,
            self.y,
            self.rotation,
            self.opening,
            self.vx,
            self.vy,
            self.vrot,
            self.vopen,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// One dynamic tabletop object.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub shape: Shape,
    /// Mass [kg], > 0.
    pub mass: f64,
    /// Surface friction coefficient against the table, >= 0.
    pub friction: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
    /// Monotone within an episode: once true, never reset.
    pub fallen: bool,
}

impl ObjectState {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn velocity(&self) -> Vec2 {
        Vec2::new(self.vx, self.vy)
    }

    pub fn inertia(&self) -> f64 {
        self.shape.inertia(self.mass)
    }

    pub(crate) fn obb(&self) -> Option<Obb> {
        match self.shape {
            Shape::Box { half_x, half_y } => Some(Obb {
                center: self.position(),
                half: Vec2::new(half_x, half_y),
                rot: self.heading,
            }),
            Shape::Disc { .. } => None,
        }
    }

    fn is_finite(&self) -> bool {
        [
            self.x, self.y, self.heading, self.vx, self.vy, self.omega, self.mass, self.friction,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Full simulator state. Value semantics: cloning and stepping the clone
/// never touches the original.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub robot: RobotState,
    pub objects: Vec<ObjectState>,
    /// Simulated time [s].
    pub time: f64,
}

impl WorldState {
    pub fn is_finite(&self) -> bool {
        self.robot.is_finite() && self.objects.iter().all(|o| o.is_finite()) && self.time.is_finite()
    }

    /// Total kinetic energy of the (non-fallen) objects [J].
    pub fn kinetic_energy(&self) -> f64 {
        self.objects
            .iter()
            .filter(|o| !o.fallen)
            .map(|o| {
                0.5 * o.mass * o.velocity().norm_sq() + 0.5 * o.inertia() * o.omega * o.omega
            })
            .sum()
    }
}

/// One timestep's velocity command for the robot joints, applied for a fixed
/// duration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub vx: f64,
    pub vy: f64,
    pub vrot: f64,
    pub vopen: f64,
    /// Duration [s]; must be a positive integer multiple of the sub-step.
    pub duration: f64,
}

impl Control {
    pub fn zero(duration: f64) -> Self {
        Control {
            vx: 0.0,
            vy: 0.0,
            vrot: 0.0,
            vopen: 0.0,
            duration,
        }
    }

    pub fn joints(&self) -> [f64; 4] {
        [self.vx, self.vy, self.vrot, self.vopen]
    }

    pub fn from_joints(joints: [f64; 4], duration: f64) -> Self {
        Control {
            vx: joints[0],
            vy: joints[1],
            vrot: joints[2],
            vopen: joints[3],
            duration,
        }
    }

    /// Euclidean norm over all four joint components.
    pub fn norm(&self) -> f64 {
        self.joints().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn is_finite(&self) -> bool {
        self.joints().iter().all(|v| v.is_finite()) && self.duration.is_finite()
    }
}

/// Per-joint speed limits [m/s, m/s, rad/s, m/s].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SpeedLimits {
    pub linear: f64,
    pub angular: f64,
    pub gripper: f64,
}

impl Default for SpeedLimits {
    fn default() -> Self {
        SpeedLimits {
            linear: 1.0,
            angular: std::f64::consts::PI,
            gripper: 0.2,
        }
    }
}

impl SpeedLimits {
    pub fn per_joint(&self) -> [f64; 4] {
        [self.linear, self.linear, self.angular, self.gripper]
    }

    pub fn clamp_joints(&self, joints: [f64; 4]) -> [f64; 4] {
        let lim = self.per_joint();
        let mut out = joints;
        for (v, l) in out.iter_mut().zip(lim.iter()) {
            *v = v.clamp(-*l, *l);
        }
        out
    }

    pub fn clamp_control(&self, c: Control) -> Control {
        Control::from_joints(self.clamp_joints(c.joints()), c.duration)
    }
}

/// Action-dependent velocity noise: per-sub-step standard deviation
/// beta = slope * ||u||, scaled per channel.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Noise-per-speed slope b (dimensionless); 0 recovers the
    /// deterministic step exactly.
    pub slope: f64,
    /// Scales for the robot joints (x, y, rotation, gripper).
    pub robot_scale: [f64; 4],
    /// Scale for object linear velocity channels.
    pub object_linear_scale: f64,
    /// Scale for object angular velocity channels [rad/m].
    pub object_angular_scale: f64,
}

impl NoiseModel {
    pub fn with_slope(slope: f64) -> Self {
        NoiseModel {
            slope,
            robot_scale: [1.0; 4],
            object_linear_scale: 1.0,
            object_angular_scale: 1.0,
        }
    }

    /// Per-sub-step noise standard deviation for a control of norm
    /// `control_norm`, before per-channel scaling.
    pub fn std_for(&self, control_norm: f64) -> f64 {
        self.slope * control_norm
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel::with_slope(0.0)
    }
}

/// Axis-aligned rectangle, used for table panels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Rect { min, max }
    }

    /// Closed containment test.
    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn shrunk(&self, margin: f64) -> Option<Rect> {
        let r = Rect {
            min: self.min + Vec2::new(margin, margin),
            max: self.max - Vec2::new(margin, margin),
        };
        (r.min.x < r.max.x && r.min.y < r.max.y).then_some(r)
    }

    pub fn center(&self) -> Vec2 {
        (self.min + self.max).scale(0.5)
    }
}

/// Immovable obstacle resting on the table.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: Vec2,
    pub half: Vec2,
    pub heading: f64,
    pub friction: f64,
}

impl Obstacle {
    pub(crate) fn obb(&self) -> Obb {
        Obb {
            center: self.center,
            half: self.half,
            rot: self.heading,
        }
    }
}

/// Circular goal region for pushing tasks.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GoalSpec {
    pub center: Vec2,
    /// Goal radius R_g [m].
    pub radius: f64,
}

/// Table geometry: a union of axis-aligned panels (rectangle or L-shape),
/// a safe-zone inset, static obstacles, and an optional pushing goal.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TableSpec {
    pub panels: Vec<Rect>,
    /// Safe-zone inset margin from the boundary (and around obstacles) [m].
    pub safe_margin: f64,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default)]
    pub goal: Option<GoalSpec>,
}

impl TableSpec {
    pub fn rectangle(width: f64, length: f64) -> Self {
        TableSpec {
            panels: vec![Rect::new(
                Vec2::new(0.0, -width / 2.0),
                Vec2::new(length, width / 2.0),
            )],
            safe_margin: 0.05,
            obstacles: Vec::new(),
            goal: None,
        }
    }

    /// Closed containment: a point exactly on the boundary is on the table.
    pub fn contains(&self, p: Vec2) -> bool {
        self.panels.iter().any(|r| r.contains(p))
    }

    /// Inside the inset panels and away from every obstacle by the margin.
    pub fn in_safe_zone(&self, p: Vec2) -> bool {
        let inside = self
            .panels
            .iter()
            .filter_map(|r| r.shrunk(self.safe_margin))
            .any(|r| r.contains(p));
        if !inside {
            return false;
        }
        !self.obstacles.iter().any(|o| {
            let mut obb = o.obb();
            obb.half += Vec2::new(self.safe_margin, self.safe_margin);
            obb.contains(p)
        })
    }

    pub fn bounds(&self) -> Rect {
        let mut min = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for r in &self.panels {
            min.x = min.x.min(r.min.x);
            min.y = min.y.min(r.min.y);
            max.x = max.x.max(r.max.x);
            max.y = max.y.max(r.max.y);
        }
        Rect { min, max }
    }
}

/// Fixed geometry of the planar 1-DOF gripper: a palm bar with two fingers
/// extending forward, separated by the current opening.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GripperGeom {
    pub finger_length: f64,
    pub finger_thickness: f64,
    pub palm_thickness: f64,
    pub max_opening: f64,
    pub friction: f64,
}

impl Default for GripperGeom {
    fn default() -> Self {
        GripperGeom {
            finger_length: 0.08,
            finger_thickness: 0.012,
            palm_thickness: 0.024,
            max_opening: 0.10,
            friction: 0.8,
        }
    }
}

impl GripperGeom {
    /// Midpoint between the fingertips; the fixed reference point used by
    /// the grasp cost and by grasp candidate generation.
    pub fn reference_point(&self, robot: &RobotState) -> Vec2 {
        robot.position() + robot.forward().scale(self.palm_thickness / 2.0 + self.finger_length)
    }

    /// Center of the palm's leading face. Objects narrower than the opening
    /// slide between the fingers and are pushed here, so pushing distances
    /// are measured from this point.
    pub fn push_surface(&self, robot: &RobotState) -> Vec2 {
        robot.position() + robot.forward().scale(self.palm_thickness / 2.0)
    }

    /// The three collision parts (palm, left finger, right finger) for a pose.
    pub(crate) fn parts(&self, robot: &RobotState) -> [Obb; 3] {
        let fwd = robot.forward();
        let pos = robot.position();
        let half_span = robot.opening / 2.0 + self.finger_thickness / 2.0;
        let finger_center =
            |side: f64| -> Vec2 {
                pos + fwd.scale(self.palm_thickness / 2.0 + self.finger_length / 2.0)
                    + robot.lateral().scale(side * half_span)
            };
        let palm_half_width = self.max_opening / 2.0 + self.finger_thickness;
        [
            Obb {
                center: pos,
                half: Vec2::new(self.palm_thickness / 2.0, palm_half_width),
                rot: robot.rotation,
            },
            Obb {
                center: finger_center(1.0),
                half: Vec2::new(self.finger_length / 2.0, self.finger_thickness / 2.0),
                rot: robot.rotation,
            },
            Obb {
                center: finger_center(-1.0),
                half: Vec2::new(self.finger_length / 2.0, self.finger_thickness / 2.0),
                rot: robot.rotation,
            },
        ]
    }

    /// Lateral velocity sign of each part from the opening rate.
    pub(crate) fn part_open_sign(part: usize) -> f64 {
        match part {
            1 => 0.5,
            2 => -0.5,
            _ => 0.0,
        }
    }
}

/// Immutable simulation environment. Stepping functions are pure: state in,
/// state out, with explicit rng streams.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct World {
    pub table: TableSpec,
    pub gripper: GripperGeom,
    pub limits: SpeedLimits,
    /// Physics sub-step [s]; control durations must be integer multiples.
    pub substep: f64,
    /// Allowed residual penetration after contact resolution [m].
    pub slop: f64,
    /// Rest thresholds for settle's early exit.
    pub rest_linear: f64,
    pub rest_angular: f64,
    pub gravity: f64,
    pub velocity_iterations: usize,
    pub position_iterations: usize,
}

impl World {
    pub fn new(table: TableSpec, gripper: GripperGeom) -> Self {
        World {
            table,
            gripper,
            limits: SpeedLimits::default(),
            substep: 0.002,
            slop: 0.001,
            rest_linear: 1e-3,
            rest_angular: 1e-2,
            gravity: 9.81,
            velocity_iterations: 10,
            position_iterations: 16,
        }
    }

    fn substep_count(&self, duration: f64) -> Result<usize, WorldError> {
        if !duration.is_finite() || duration <= 0.0 {
            return Err(WorldError::BadDuration(duration, self.substep));
        }
        let n = (duration / self.substep).round();
        if n < 1.0 || (n * self.substep - duration).abs() > 1e-9 {
            return Err(WorldError::BadDuration(duration, self.substep));
        }
        Ok(n as usize)
    }

    fn validate(&self, state: &WorldState, control: &Control) -> Result<(), WorldError> {
        if !state.is_finite() {
            return Err(WorldError::NonFinite("state"));
        }
        if !control.is_finite() {
            return Err(WorldError::NonFinite("control"));
        }
        Ok(())
    }

    /// Deterministic stepper f(x, u): advance the robot kinematically for the
    /// control's duration, resolving contacts and surface friction.
    pub fn step_deterministic(
        &self,
        state: &WorldState,
        control: &Control,
    ) -> Result<WorldState, WorldError> {
        self.step_inner(state, control, None, &mut |_: &WorldState| {})
    }

    /// As [`step_deterministic`](Self::step_deterministic), invoking `sink`
    /// after every sub-step.
    pub fn step_deterministic_traced(
        &self,
        state: &WorldState,
        control: &Control,
        sink: &mut dyn FnMut(&WorldState),
    ) -> Result<WorldState, WorldError> {
        self.step_inner(state, control, None, sink)
    }

    /// Stochastic stepper: deterministic dynamics plus zero-mean Gaussian
    /// velocity noise with std = b * ||u|| injected into every robot and
    /// object velocity channel at each sub-step. With slope 0 the output is
    /// bit-identical to the deterministic step.
    pub fn step_stochastic(
        &self,
        state: &WorldState,
        control: &Control,
        noise: &NoiseModel,
        rng: &mut dyn RngCore,
    ) -> Result<WorldState, WorldError> {
        self.step_inner(state, control, Some((noise, rng)), &mut |_: &WorldState| {})
    }

    pub fn step_stochastic_traced(
        &self,
        state: &WorldState,
        control: &Control,
        noise: &NoiseModel,
        rng: &mut dyn RngCore,
        sink: &mut dyn FnMut(&WorldState),
    ) -> Result<WorldState, WorldError> {
        self.step_inner(state, control, Some((noise, rng)), sink)
    }

    fn step_inner(
        &self,
        state: &WorldState,
        control: &Control,
        noise: Option<(&NoiseModel, &mut dyn RngCore)>,
        sink: &mut dyn FnMut(&WorldState),
    ) -> Result<WorldState, WorldError> {
        self.validate(state, control)?;
        let n = self.substep_count(control.duration)?;
        let command = self.limits.clamp_joints(control.joints());
        let mut next = state.clone();
        let mut scratch = solver::Scratch::default();
        match noise {
            Some((model, rng)) => {
                let std = model.std_for(control.norm());
                for _ in 0..n {
                    self.substep_once(
                        &mut next,
                        command,
                        if std > 0.0 { Some((model, std, &mut *rng)) } else { None },
                        &mut scratch,
                    );
                    sink(&next);
                }
            }
            None => {
                for _ in 0..n {
                    self.substep_once(&mut next, command, None, &mut scratch);
                    sink(&next);
                }
            }
        }
        Ok(next)
    }

    /// Simulate with zero control for up to `t_rest`, returning early once
    /// every object is below the rest thresholds.
    pub fn settle(&self, state: &WorldState, t_rest: f64) -> Result<WorldState, WorldError> {
        self.settle_traced(state, t_rest, &mut |_: &WorldState| {})
    }

    pub fn settle_traced(
        &self,
        state: &WorldState,
        t_rest: f64,
        sink: &mut dyn FnMut(&WorldState),
    ) -> Result<WorldState, WorldError> {
        if !t_rest.is_finite() || t_rest < 0.0 {
            return Err(WorldError::BadDuration(t_rest, self.substep));
        }
        if !state.is_finite() {
            return Err(WorldError::NonFinite("state"));
        }
        let n = (t_rest / self.substep + 1e-9).floor() as usize;
        let mut next = state.clone();
        let mut scratch = solver::Scratch::default();
        let command = [0.0; 4];
        for _ in 0..n {
            if self.at_rest(&next) {
                break;
            }
            self.substep_once(&mut next, command, None, &mut scratch);
            sink(&next);
        }
        Ok(next)
    }

    pub fn at_rest(&self, state: &WorldState) -> bool {
        state.objects.iter().all(|o| {
            o.fallen
                || (o.velocity().norm() < self.rest_linear && o.omega.abs() < self.rest_angular)
        })
    }

    fn substep_once(
        &self,
        state: &mut WorldState,
        command: [f64; 4],
        noise: Option<(&NoiseModel, f64, &mut dyn RngCore)>,
        scratch: &mut solver::Scratch,
    ) {
        solver::substep(self, state, command, noise, scratch);
    }

    /// Deepest robot-object / object-object / obstacle-object overlap in the
    /// given state [m]; diagnostic for the penetration bound.
    pub fn max_penetration(&self, state: &WorldState) -> f64 {
        solver::max_penetration(self, state)
    }

    /// True iff the target object's center is on the closed goal disc and
    /// the object is still on the table.
    pub fn in_goal(&self, state: &WorldState, target: usize) -> Result<bool, WorldError> {
        let obj = state
            .objects
            .get(target)
            .ok_or(WorldError::BadIndex(target, state.objects.len()))?;
        in_goal(obj, &self.table)
    }

    /// True iff the target's center lies in the capture region between the
    /// fingers and the opening exceeds the target's width across the gripper.
    pub fn grasped(&self, state: &WorldState, target: usize) -> Result<bool, WorldError> {
        let obj = state
            .objects
            .get(target)
            .ok_or(WorldError::BadIndex(target, state.objects.len()))?;
        if obj.fallen {
            return Ok(false);
        }
        let robot = &state.robot;
        let rel = (obj.position() - robot.position()).rotated(-robot.rotation);
        let x_min = self.gripper.palm_thickness / 2.0;
        let x_max = x_min + self.gripper.finger_length;
        let in_capture =
            rel.x >= x_min && rel.x <= x_max && rel.y.abs() <= robot.opening / 2.0;
        if !in_capture {
            return Ok(false);
        }
        let lateral = robot.lateral();
        let width = match obj.shape {
            Shape::Disc { radius } => 2.0 * radius,
            Shape::Box { half_x, half_y } => {
                let u = Vec2::new(obj.heading.cos(), obj.heading.sin());
                let v = u.perp();
                2.0 * (half_x * u.dot(lateral).abs() + half_y * v.dot(lateral).abs())
            }
        };
        Ok(robot.opening > width)
    }
}

/// True iff the object's center of mass lies outside the (closed) table
/// boundary.
pub fn off_table(object: &ObjectState, table: &TableSpec) -> bool {
    !table.contains(object.position())
}

/// True iff the object is within the goal radius and on the table.
/// Errors when the scene has no goal region.
pub fn in_goal(object: &ObjectState, table: &TableSpec) -> Result<bool, WorldError> {
    let goal = table.goal.as_ref().ok_or(WorldError::NoGoal)?;
    if object.fallen || off_table(object, table) {
        return Ok(false);
    }
    Ok(object.position().distance(goal.center) <= goal.radius)
}

/// Sample one sub-step's velocity noise draws for every channel; exposed so
/// the injected-noise statistics can be checked directly.
pub fn sample_velocity_noise(
    model: &NoiseModel,
    control_norm: f64,
    num_objects: usize,
    rng: &mut dyn RngCore,
) -> NoiseDraw {
    let std = model.std_for(control_norm);
    solver::draw_noise(model, std, num_objects, rng)
}

/// Per-channel noise draws for one sub-step.
#[derive(Clone, Debug, Default)]
pub struct NoiseDraw {
    pub robot: [f64; 4],
    /// Per object: (vx, vy, omega) perturbations.
    pub objects: Vec<(f64, f64, f64)>,
}
