//! Sub-step integration: kinematic robot, Coulomb surface friction,
//! sequential-impulse contact resolution, and positional penetration
//! correction.

use super::shapes::{disc_disc, obb_disc, obb_obb, Manifold, Obb};
use super::{GripperGeom, NoiseDraw, NoiseModel, Shape, World, WorldState};
use crate::math::{normalize_angle, Vec2};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

#[derive(Clone, Copy, Debug, PartialEq)]
enum BodyRef {
    Object(usize),
    Part(usize),
    Obstacle(usize),
}

impl BodyRef {
    fn object(self) -> Option<usize> {
        match self {
            BodyRef::Object(i) => Some(i),
            _ => None,
        }
    }
}

#[derive(Clone, Copy)]
struct ContactPoint {
    point: Vec2,
    depth: f64,
    normal_mass: f64,
    tangent_mass: f64,
    jn: f64,
    jt: f64,
}

struct Contact {
    a: BodyRef,
    b: BodyRef,
    normal: Vec2,
    friction: f64,
    points: [ContactPoint; 2],
    count: usize,
}

#[derive(Default)]
pub(crate) struct Scratch {
    contacts: Vec<Contact>,
}

struct RobotMotion {
    pos: Vec2,
    lin: Vec2,
    vrot: f64,
    lateral: Vec2,
    open_rate: f64,
}

pub(crate) fn draw_noise(
    model: &NoiseModel,
    std: f64,
    num_objects: usize,
    rng: &mut dyn RngCore,
) -> NoiseDraw {
    let mut z = || -> f64 { StandardNormal.sample(rng) };
    let mut draw = NoiseDraw {
        robot: [0.0; 4],
        objects: Vec::with_capacity(num_objects),
    };
    for j in 0..4 {
        draw.robot[j] = z() * std * model.robot_scale[j];
    }
    for _ in 0..num_objects {
        draw.objects.push((
            z() * std * model.object_linear_scale,
            z() * std * model.object_linear_scale,
            z() * std * model.object_angular_scale,
        ));
    }
    draw
}

pub(crate) fn substep(
    world: &World,
    state: &mut WorldState,
    command: [f64; 4],
    noise: Option<(&NoiseModel, f64, &mut dyn RngCore)>,
    scratch: &mut Scratch,
) {
    let h = world.substep;

    // Velocity noise on every robot and object channel.
    let mut cmd = command;
    if let Some((model, std, rng)) = noise {
        let draw = draw_noise(model, std, state.objects.len(), rng);
        for j in 0..4 {
            cmd[j] += draw.robot[j];
        }
        for (obj, &(dx, dy, dw)) in state.objects.iter_mut().zip(draw.objects.iter()) {
            if !obj.fallen {
                obj.vx += dx;
                obj.vy += dy;
                obj.omega += dw;
            }
        }
    }

    // Kinematic robot integration.
    let robot = &mut state.robot;
    robot.vx = cmd[0];
    robot.vy = cmd[1];
    robot.vrot = cmd[2];
    robot.x += cmd[0] * h;
    robot.y += cmd[1] * h;
    robot.rotation = normalize_angle(robot.rotation + cmd[2] * h);
    let old_opening = robot.opening;
    robot.opening = (robot.opening + cmd[3] * h).clamp(0.0, world.gripper.max_opening);
    let open_rate = (robot.opening - old_opening) / h;
    robot.vopen = open_rate;

    // Obstacles block the gripper: project the robot out.
    project_robot_from_obstacles(world, state);

    let motion = RobotMotion {
        pos: state.robot.position(),
        lin: Vec2::new(state.robot.vx, state.robot.vy),
        vrot: state.robot.vrot,
        lateral: state.robot.lateral(),
        open_rate,
    };

    // Coulomb surface friction decelerates sliding and spinning.
    for obj in state.objects.iter_mut() {
        if obj.fallen {
            continue;
        }
        let decel = obj.friction * world.gravity * h;
        let speed = obj.velocity().norm();
        if speed <= decel {
            obj.vx = 0.0;
            obj.vy = 0.0;
        } else {
            let f = 1.0 - decel / speed;
            obj.vx *= f;
            obj.vy *= f;
        }
        let r_gyr = (obj.inertia() / obj.mass).sqrt();
        if r_gyr > 1e-9 {
            let adec = obj.friction * world.gravity / r_gyr * h;
            if obj.omega.abs() <= adec {
                obj.omega = 0.0;
            } else {
                obj.omega -= adec * obj.omega.signum();
            }
        }
    }

    // Contacts on the pre-integration object poses.
    let parts = world.gripper.parts(&state.robot);
    detect_contacts(world, state, &parts, &mut scratch.contacts);
    solve_velocities(world, state, &motion, &mut scratch.contacts);

    for obj in state.objects.iter_mut() {
        if obj.fallen {
            continue;
        }
        obj.x += obj.vx * h;
        obj.y += obj.vy * h;
        obj.heading = normalize_angle(obj.heading + obj.omega * h);
    }

    correct_positions(world, state, scratch);

    for obj in state.objects.iter_mut() {
        if !obj.fallen && !world.table.contains(obj.position()) {
            obj.fallen = true;
            obj.vx = 0.0;
            obj.vy = 0.0;
            obj.omega = 0.0;
        }
    }

    state.time += h;
}

fn project_robot_from_obstacles(world: &World, state: &mut WorldState) {
    if world.table.obstacles.is_empty() {
        return;
    }
    for _ in 0..4 {
        let parts = world.gripper.parts(&state.robot);
        let mut worst: Option<(f64, Vec2)> = None;
        for obs in &world.table.obstacles {
            let obs_obb = obs.obb();
            for part in &parts {
                if let Some(m) = obb_obb(&obs_obb, part) {
                    let depth = m.max_depth();
                    if worst.map_or(true, |(d, _)| depth > d) {
                        worst = Some((depth, m.normal));
                    }
                }
            }
        }
        match worst {
            Some((depth, normal)) if depth > world.slop => {
                let shift = normal.scale(depth - world.slop * 0.5);
                state.robot.x += shift.x;
                state.robot.y += shift.y;
            }
            _ => break,
        }
    }
}

fn object_manifold(a: &super::ObjectState, b: &super::ObjectState) -> Option<Manifold> {
    match (a.shape, b.shape) {
        (Shape::Disc { radius: ra }, Shape::Disc { radius: rb }) => {
            disc_disc(a.position(), ra, b.position(), rb)
        }
        (Shape::Box { .. }, Shape::Disc { radius }) => {
            obb_disc(&a.obb().unwrap(), b.position(), radius)
        }
        (Shape::Disc { radius }, Shape::Box { .. }) => {
            obb_disc(&b.obb().unwrap(), a.position(), radius).map(Manifold::flipped)
        }
        (Shape::Box { .. }, Shape::Box { .. }) => obb_obb(&a.obb().unwrap(), &b.obb().unwrap()),
    }
}

fn obb_object_manifold(obb: &Obb, obj: &super::ObjectState) -> Option<Manifold> {
    match obj.shape {
        Shape::Disc { radius } => obb_disc(obb, obj.position(), radius),
        Shape::Box { .. } => obb_obb(obb, &obj.obb().unwrap()),
    }
}

/// Populate `out` with all contacts; normals point from `a` toward `b`, and
/// `b` is always a dynamic object.
fn detect_contacts(world: &World, state: &WorldState, parts: &[Obb; 3], out: &mut Vec<Contact>) {
    out.clear();
    let objs = &state.objects;
    let mut push = |a: BodyRef, b: BodyRef, m: Manifold, friction: f64| {
        let mut points = [ContactPoint {
            point: Vec2::ZERO,
            depth: 0.0,
            normal_mass: 0.0,
            tangent_mass: 0.0,
            jn: 0.0,
            jt: 0.0,
        }; 2];
        for i in 0..m.count {
            points[i].point = m.points[i].0;
            points[i].depth = m.points[i].1;
        }
        out.push(Contact {
            a,
            b,
            normal: m.normal,
            friction,
            points,
            count: m.count,
        });
    };

    for (pi, part) in parts.iter().enumerate() {
        let cull = part.half.norm() + world.slop;
        for (oi, obj) in objs.iter().enumerate() {
            if obj.fallen {
                continue;
            }
            let reach = cull + obj.shape.bounding_radius();
            if (obj.position() - part.center).norm_sq() > reach * reach {
                continue;
            }
            if let Some(m) = obb_object_manifold(part, obj) {
                let friction = (world.gripper.friction * obj.friction).sqrt();
                push(BodyRef::Part(pi), BodyRef::Object(oi), m, friction);
            }
        }
    }
    for i in 0..objs.len() {
        if objs[i].fallen {
            continue;
        }
        for j in (i + 1)..objs.len() {
            if objs[j].fallen {
                continue;
            }
            let reach = objs[i].shape.bounding_radius() + objs[j].shape.bounding_radius();
            if (objs[j].position() - objs[i].position()).norm_sq() > reach * reach {
                continue;
            }
            if let Some(m) = object_manifold(&objs[i], &objs[j]) {
                let friction = (objs[i].friction * objs[j].friction).sqrt();
                push(BodyRef::Object(i), BodyRef::Object(j), m, friction);
            }
        }
    }
    for (bi, obs) in world.table.obstacles.iter().enumerate() {
        let obb = obs.obb();
        let cull = obb.half.norm() + world.slop;
        for (oi, obj) in objs.iter().enumerate() {
            if obj.fallen {
                continue;
            }
            let reach = cull + obj.shape.bounding_radius();
            if (obj.position() - obb.center).norm_sq() > reach * reach {
                continue;
            }
            if let Some(m) = obb_object_manifold(&obb, obj) {
                let friction = (obs.friction * obj.friction).sqrt();
                push(BodyRef::Obstacle(bi), BodyRef::Object(oi), m, friction);
            }
        }
    }
}

fn point_velocity(state: &WorldState, motion: &RobotMotion, body: BodyRef, p: Vec2) -> Vec2 {
    match body {
        BodyRef::Object(i) => {
            let o = &state.objects[i];
            o.velocity() + (p - o.position()).perp().scale(o.omega)
        }
        BodyRef::Part(pi) => {
            motion.lin
                + (p - motion.pos).perp().scale(motion.vrot)
                + motion
                    .lateral
                    .scale(GripperGeom::part_open_sign(pi) * motion.open_rate)
        }
        BodyRef::Obstacle(_) => Vec2::ZERO,
    }
}

fn inv_mass(state: &WorldState, body: BodyRef) -> (f64, f64, Vec2) {
    match body {
        BodyRef::Object(i) => {
            let o = &state.objects[i];
            (1.0 / o.mass, 1.0 / o.inertia(), o.position())
        }
        _ => (0.0, 0.0, Vec2::ZERO),
    }
}

fn apply_impulse(state: &mut WorldState, body: BodyRef, p: Vec2, impulse: Vec2) {
    if let Some(i) = body.object() {
        let o = &mut state.objects[i];
        let inv_m = 1.0 / o.mass;
        let inv_i = 1.0 / o.inertia();
        o.vx += impulse.x * inv_m;
        o.vy += impulse.y * inv_m;
        o.omega += (p - o.position()).cross(impulse) * inv_i;
    }
}

/// Sequential impulses with accumulated clamping; zero restitution.
fn solve_velocities(
    world: &World,
    state: &mut WorldState,
    motion: &RobotMotion,
    contacts: &mut [Contact],
) {
    for c in contacts.iter_mut() {
        let (inv_ma, inv_ia, ca) = inv_mass(state, c.a);
        let (inv_mb, inv_ib, cb) = inv_mass(state, c.b);
        let t = c.normal.perp();
        for pt in c.points.iter_mut().take(c.count) {
            let ra = pt.point - ca;
            let rb = pt.point - cb;
            let kn = inv_ma + inv_mb
                + inv_ia * ra.cross(c.normal).powi(2)
                + inv_ib * rb.cross(c.normal).powi(2);
            let kt =
                inv_ma + inv_mb + inv_ia * ra.cross(t).powi(2) + inv_ib * rb.cross(t).powi(2);
            pt.normal_mass = if kn > 0.0 { 1.0 / kn } else { 0.0 };
            pt.tangent_mass = if kt > 0.0 { 1.0 / kt } else { 0.0 };
        }
    }
    for _ in 0..world.velocity_iterations {
        for c in contacts.iter_mut() {
            let t = c.normal.perp();
            for k in 0..c.count {
                let pt = &mut c.points[k];
                let rel = point_velocity(state, motion, c.b, pt.point)
                    - point_velocity(state, motion, c.a, pt.point);
                let vn = rel.dot(c.normal);
                let new_jn = (pt.jn - vn * pt.normal_mass).max(0.0);
                let dj = new_jn - pt.jn;
                pt.jn = new_jn;
                let imp = c.normal.scale(dj);
                let (a, b, p) = (c.a, c.b, pt.point);
                apply_impulse(state, b, p, imp);
                apply_impulse(state, a, p, -imp);

                let rel = point_velocity(state, motion, c.b, pt.point)
                    - point_velocity(state, motion, c.a, pt.point);
                let vt = rel.dot(t);
                let pt = &mut c.points[k];
                let bound = c.friction * pt.jn;
                let new_jt = (pt.jt - vt * pt.tangent_mass).clamp(-bound, bound);
                let dj = new_jt - pt.jt;
                pt.jt = new_jt;
                let imp = t.scale(dj);
                apply_impulse(state, b, p, imp);
                apply_impulse(state, a, p, -imp);
            }
        }
    }
}

/// Positional projection: translate objects out of overlap until residual
/// penetration is within the slop. Does not touch velocities.
fn correct_positions(world: &World, state: &mut WorldState, scratch: &mut Scratch) {
    for _ in 0..world.position_iterations {
        let parts = world.gripper.parts(&state.robot);
        detect_contacts(world, state, &parts, &mut scratch.contacts);
        let mut worst: f64 = 0.0;
        for c in &scratch.contacts {
            for pt in c.points.iter().take(c.count) {
                worst = worst.max(pt.depth);
            }
        }
        if worst <= world.slop {
            break;
        }
        for c in &scratch.contacts {
            let depth = c.points[..c.count]
                .iter()
                .map(|p| p.depth)
                .fold(0.0, f64::max);
            if depth <= world.slop {
                continue;
            }
            let corr = depth - world.slop * 0.5;
            match (c.a.object(), c.b.object()) {
                (Some(i), Some(j)) => {
                    let (wa, wb) = {
                        let inv_a = 1.0 / state.objects[i].mass;
                        let inv_b = 1.0 / state.objects[j].mass;
                        (inv_a / (inv_a + inv_b), inv_b / (inv_a + inv_b))
                    };
                    let oa = &mut state.objects[i];
                    oa.x -= c.normal.x * corr * wa;
                    oa.y -= c.normal.y * corr * wa;
                    let ob = &mut state.objects[j];
                    ob.x += c.normal.x * corr * wb;
                    ob.y += c.normal.y * corr * wb;
                }
                (None, Some(j)) => {
                    let ob = &mut state.objects[j];
                    ob.x += c.normal.x * corr;
                    ob.y += c.normal.y * corr;
                }
                _ => {}
            }
        }
    }
}

pub(crate) fn max_penetration(world: &World, state: &WorldState) -> f64 {
    let parts = world.gripper.parts(&state.robot);
    let mut contacts = Vec::new();
    detect_contacts(world, state, &parts, &mut contacts);
    contacts
        .iter()
        .flat_map(|c| c.points[..c.count].iter().map(|p| p.depth))
        .fold(0.0, f64::max)
}
