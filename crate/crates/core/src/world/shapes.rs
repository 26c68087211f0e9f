//! Narrow-phase contact generation for discs and oriented boxes.

use crate::math::Vec2;

/// Oriented box (center, half extents, rotation).
#[derive(Clone, Copy, Debug)]
pub struct Obb {
    pub center: Vec2,
    pub half: Vec2,
    pub rot: f64,
}

impl Obb {
    pub fn axes(&self) -> (Vec2, Vec2) {
        let u = Vec2::new(self.rot.cos(), self.rot.sin());
        (u, u.perp())
    }

    pub fn to_local(&self, p: Vec2) -> Vec2 {
        (p - self.center).rotated(-self.rot)
    }

    pub fn to_world(&self, p: Vec2) -> Vec2 {
        self.center + p.rotated(self.rot)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let l = self.to_local(p);
        l.x.abs() <= self.half.x && l.y.abs() <= self.half.y
    }

    pub fn corners(&self) -> [Vec2; 4] {
        let (hx, hy) = (self.half.x, self.half.y);
        [
            self.to_world(Vec2::new(hx, hy)),
            self.to_world(Vec2::new(-hx, hy)),
            self.to_world(Vec2::new(-hx, -hy)),
            self.to_world(Vec2::new(hx, -hy)),
        ]
    }

    /// Half projection width onto a unit axis.
    fn extent(&self, axis: Vec2) -> f64 {
        let (u, v) = self.axes();
        self.half.x * u.dot(axis).abs() + self.half.y * v.dot(axis).abs()
    }
}

/// Contact manifold. The normal points from shape A toward shape B; pushing
/// B along +normal separates the pair. Up to two points, each with its own
/// penetration depth.
#[derive(Clone, Copy, Debug)]
pub struct Manifold {
    pub normal: Vec2,
    pub points: [(Vec2, f64); 2],
    pub count: usize,
}

impl Manifold {
    fn one(normal: Vec2, point: Vec2, depth: f64) -> Self {
        Manifold {
            normal,
            points: [(point, depth), (Vec2::ZERO, 0.0)],
            count: 1,
        }
    }

    pub fn max_depth(&self) -> f64 {
        self.points[..self.count]
            .iter()
            .map(|&(_, d)| d)
            .fold(0.0, f64::max)
    }

    pub fn flipped(mut self) -> Self {
        self.normal = -self.normal;
        self
    }
}

/// Disc A vs disc B.
pub fn disc_disc(ca: Vec2, ra: f64, cb: Vec2, rb: f64) -> Option<Manifold> {
    let d = cb - ca;
    let dist_sq = d.norm_sq();
    let r = ra + rb;
    if dist_sq >= r * r {
        return None;
    }
    let dist = dist_sq.sqrt();
    let normal = if dist > 1e-12 {
        d.scale(1.0 / dist)
    } else {
        Vec2::new(1.0, 0.0)
    };
    let point = ca + normal.scale(ra - (r - dist) / 2.0);
    Some(Manifold::one(normal, point, r - dist))
}

/// Box A vs disc B.
pub fn obb_disc(obb: &Obb, center: Vec2, radius: f64) -> Option<Manifold> {
    let l = obb.to_local(center);
    let clamped = Vec2::new(
        l.x.clamp(-obb.half.x, obb.half.x),
        l.y.clamp(-obb.half.y, obb.half.y),
    );
    let delta = l - clamped;
    let dist_sq = delta.norm_sq();
    if dist_sq > 1e-24 {
        // Disc center outside the box.
        let dist = dist_sq.sqrt();
        if dist >= radius {
            return None;
        }
        let normal_local = delta.scale(1.0 / dist);
        let normal = normal_local.rotated(obb.rot);
        let point = obb.to_world(clamped);
        Some(Manifold::one(normal, point, radius - dist))
    } else {
        // Center inside: exit through the nearest face.
        let dx = obb.half.x - l.x.abs();
        let dy = obb.half.y - l.y.abs();
        let normal_local = if dx < dy {
            Vec2::new(l.x.signum(), 0.0)
        } else {
            Vec2::new(0.0, l.y.signum())
        };
        let depth = radius + dx.min(dy);
        let face = if dx < dy {
            Vec2::new(normal_local.x * obb.half.x, l.y)
        } else {
            Vec2::new(l.x, normal_local.y * obb.half.y)
        };
        Some(Manifold::one(
            normal_local.rotated(obb.rot),
            obb.to_world(face),
            depth,
        ))
    }
}

/// Box A vs box B, SAT with reference-face clipping (up to two points).
pub fn obb_obb(a: &Obb, b: &Obb) -> Option<Manifold> {
    let delta = b.center - a.center;
    let (au, av) = a.axes();
    let (bu, bv) = b.axes();
    let mut best_overlap = f64::INFINITY;
    let mut best_axis = Vec2::ZERO;
    let mut best_is_a = true;
    for (axis, from_a) in [(au, true), (av, true), (bu, false), (bv, false)] {
        let overlap = a.extent(axis) + b.extent(axis) - delta.dot(axis).abs();
        if overlap <= 0.0 {
            return None;
        }
        // Slight preference for keeping the current axis avoids flip-flop
        // between near-equal axes across sub-steps.
        if overlap < best_overlap - 1e-12 {
            best_overlap = overlap;
            best_axis = axis;
            best_is_a = from_a;
        }
    }
    // Normal on the separating axis, oriented from A toward B.
    let normal = if delta.dot(best_axis) >= 0.0 {
        best_axis
    } else {
        -best_axis
    };
    let (reference, incident, ref_normal) = if best_is_a {
        (a, b, normal)
    } else {
        (b, a, -normal)
    };
    let points = clip_incident(reference, incident, ref_normal);
    if points.1 == 0 {
        // Degenerate clip; fall back to the deepest incident corner.
        let mut best = (Vec2::ZERO, f64::NEG_INFINITY);
        for c in incident.corners() {
            let depth = face_depth(reference, ref_normal, c);
            if depth > best.1 {
                best = (c, depth);
            }
        }
        return Some(Manifold::one(normal, best.0, best.1.max(0.0)));
    }
    let mut m = Manifold {
        normal,
        points: points.0,
        count: points.1,
    };
    // Drop non-penetrating clip points.
    let mut kept = 0;
    for i in 0..m.count {
        if m.points[i].1 > 0.0 {
            m.points[kept] = m.points[i];
            kept += 1;
        }
    }
    if kept == 0 {
        return None;
    }
    m.count = kept;
    Some(m)
}

/// Penetration of a point below the reference face with outward normal `n`.
fn face_depth(reference: &Obb, n: Vec2, p: Vec2) -> f64 {
    let face_offset = reference.center.dot(n) + reference.extent(n);
    face_offset - p.dot(n)
}

/// Clip the incident face of `incident` against the side planes of the
/// reference face whose outward normal is `n`.
fn clip_incident(reference: &Obb, incident: &Obb, n: Vec2) -> ([(Vec2, f64); 2], usize) {
    // Incident face: the one whose outward normal is most anti-parallel to n.
    let (iu, iv) = incident.axes();
    let candidates = [iu, -iu, iv, -iv];
    let mut face_normal = candidates[0];
    let mut best = f64::INFINITY;
    for c in candidates {
        let d = c.dot(n);
        if d < best {
            best = d;
            face_normal = c;
        }
    }
    let half_along = incident.extent(face_normal);
    let half_across = if face_normal.dot(iu).abs() > 0.9 {
        incident.half.y
    } else {
        incident.half.x
    };
    let across = face_normal.perp();
    let mid = incident.center + face_normal.scale(half_along);
    let mut v0 = mid + across.scale(half_across);
    let mut v1 = mid - across.scale(half_across);

    // Side planes of the reference face.
    let side = n.perp();
    let side_extent = reference.extent(side);
    for (axis, offset) in [
        (side, reference.center.dot(side) + side_extent),
        (-side, -reference.center.dot(side) + side_extent),
    ] {
        let d0 = v0.dot(axis) - offset;
        let d1 = v1.dot(axis) - offset;
        if d0 > 0.0 && d1 > 0.0 {
            return ([(Vec2::ZERO, 0.0); 2], 0);
        }
        if d0 > 0.0 {
            v0 = v0 + (v1 - v0).scale(d0 / (d0 - d1));
        } else if d1 > 0.0 {
            v1 = v1 + (v0 - v1).scale(d1 / (d1 - d0));
        }
    }
    let out = [
        (v0, face_depth(reference, n, v0)),
        (v1, face_depth(reference, n, v1)),
    ];
    ([out[0], out[1]], 2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disc_disc_overlap_and_separation() {
        let m = disc_disc(Vec2::new(0.0, 0.0), 0.05, Vec2::new(0.08, 0.0), 0.05).unwrap();
        assert!((m.normal.x - 1.0).abs() < 1e-12);
        assert!((m.max_depth() - 0.02).abs() < 1e-12);
        assert!(disc_disc(Vec2::new(0.0, 0.0), 0.05, Vec2::new(0.11, 0.0), 0.05).is_none());
    }

    #[test]
    fn obb_disc_face_contact() {
        let obb = Obb {
            center: Vec2::ZERO,
            half: Vec2::new(0.05, 0.05),
            rot: 0.0,
        };
        let m = obb_disc(&obb, Vec2::new(0.08, 0.0), 0.04).unwrap();
        assert!((m.normal.x - 1.0).abs() < 1e-12);
        assert!((m.max_depth() - 0.01).abs() < 1e-12);
    }

    #[test]
    fn obb_disc_center_inside() {
        let obb = Obb {
            center: Vec2::ZERO,
            half: Vec2::new(0.05, 0.05),
            rot: 0.0,
        };
        let m = obb_disc(&obb, Vec2::new(0.04, 0.0), 0.02).unwrap();
        assert!(m.normal.x > 0.99);
        assert!(m.max_depth() > 0.02);
    }

    #[test]
    fn obb_obb_face_contact_two_points() {
        let a = Obb {
            center: Vec2::ZERO,
            half: Vec2::new(0.05, 0.05),
            rot: 0.0,
        };
        let b = Obb {
            center: Vec2::new(0.09, 0.0),
            half: Vec2::new(0.05, 0.05),
            rot: 0.0,
        };
        let m = obb_obb(&a, &b).unwrap();
        assert_eq!(m.count, 2);
        assert!((m.normal.x - 1.0).abs() < 1e-12);
        assert!((m.max_depth() - 0.01).abs() < 1e-9);
    }

    #[test]
    fn obb_obb_separated() {
        let a = Obb {
            center: Vec2::ZERO,
            half: Vec2::new(0.05, 0.05),
            rot: 0.0,
        };
        let b = Obb {
            center: Vec2::new(0.2, 0.0),
            half: Vec2::new(0.05, 0.05),
            rot: 0.5,
        };
        assert!(obb_obb(&a, &b).is_none());
    }

    #[test]
    fn obb_obb_rotated_corner() {
        let a = Obb {
            center: Vec2::ZERO,
            half: Vec2::new(0.05, 0.05),
            rot: 0.0,
        };
        let b = Obb {
            center: Vec2::new(0.10, 0.0),
            half: Vec2::new(0.05, 0.05),
            rot: std::f64::consts::FRAC_PI_4,
        };
        let m = obb_obb(&a, &b).unwrap();
        assert!(m.count >= 1);
        assert!(m.normal.x > 0.7);
        assert!(m.max_depth() > 0.0);
    }
}
