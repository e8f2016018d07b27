use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::math::{Rot, Vec2};

/// Collision primitive in body-local coordinates, centred on the body origin.
///
/// Capsules run along the local y axis from `-length/2` to `+length/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    Circle { radius: f64 },
    Capsule { length: f64, radius: f64 },
    Box { half_extents: Vec2 },
}

impl Shape {
    pub fn circle(radius: f64) -> Self {
        Shape::Circle { radius }
    }

    pub fn capsule(length: f64, radius: f64) -> Self {
        Shape::Capsule { length, radius }
    }

    pub fn cuboid(half_width: f64, half_height: f64) -> Self {
        Shape::Box {
            half_extents: Vec2::new(half_width, half_height),
        }
    }

    pub fn is_valid(&self) -> bool {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        match *self {
            Shape::Circle { radius } => pos(radius),
            Shape::Capsule { length, radius } => pos(length) && pos(radius),
            Shape::Box { half_extents } => pos(half_extents.x) && pos(half_extents.y),
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            Shape::Circle { radius } => PI * radius * radius,
            Shape::Capsule { length, radius } => 2.0 * radius * length + PI * radius * radius,
            Shape::Box { half_extents } => 4.0 * half_extents.x * half_extents.y,
        }
    }

    /// Mass and centroidal polar moment for a lamina of uniform area density.
    pub fn mass_properties(&self, density: f64) -> (f64, f64) {
        match *self {
            Shape::Circle { radius } => {
                let m = density * PI * radius * radius;
                (m, 0.5 * m * radius * radius)
            }
            Shape::Box { half_extents } => {
                let (w, h) = (2.0 * half_extents.x, 2.0 * half_extents.y);
                let m = density * w * h;
                (m, m * (w * w + h * h) / 12.0)
            }
            Shape::Capsule { length, radius } => {
                let r = radius;
                let rect_m = density * 2.0 * r * length;
                let rect_i = rect_m * (4.0 * r * r + length * length) / 12.0;
                // each end cap is a half disc whose centroid sits 4r/3π past the segment end
                let cap_m = 0.5 * density * PI * r * r;
                let c = 4.0 * r / (3.0 * PI);
                let cap_centroidal = cap_m * (0.5 * r * r - c * c);
                let d = 0.5 * length + c;
                let cap_i = cap_centroidal + cap_m * d * d;
                (rect_m + 2.0 * cap_m, rect_i + 2.0 * cap_i)
            }
        }
    }

    /// World-space axis-aligned bounds `(min, max)` at the given pose.
    pub fn aabb(&self, position: Vec2, angle: f64) -> (Vec2, Vec2) {
        match *self {
            Shape::Circle { radius } => {
                let e = Vec2::new(radius, radius);
                (position - e, position + e)
            }
            Shape::Capsule { length, radius } => {
                let (p, q) = segment_points(length, position, Rot::new(angle));
                let e = Vec2::new(radius, radius);
                let lo = Vec2::new(p.x.min(q.x), p.y.min(q.y));
                let hi = Vec2::new(p.x.max(q.x), p.y.max(q.y));
                (lo - e, hi + e)
            }
            Shape::Box { half_extents } => {
                let r = Rot::new(angle);
                let ex = (r.c * half_extents.x).abs() + (r.s * half_extents.y).abs();
                let ey = (r.s * half_extents.x).abs() + (r.c * half_extents.y).abs();
                let e = Vec2::new(ex, ey);
                (position - e, position + e)
            }
        }
    }

    /// Highest point of the shape on the vertical line `x`, if the line hits it.
    pub fn top_at(&self, position: Vec2, angle: f64, x: f64) -> Option<f64> {
        match *self {
            Shape::Circle { radius } => disc_top(position, radius, x),
            Shape::Capsule { length, radius } => {
                let (p, q) = segment_points(length, position, Rot::new(angle));
                let mut best = disc_top(p, radius, x).into_iter().chain(disc_top(q, radius, x)).fold(None, max_opt);
                // swept rectangle between the two end discs
                let dir = q - p;
                let n = dir.perp().normalized() * radius;
                let quad = [p + n, q + n, q - n, p - n];
                best = max_opt_pair(best, polygon_top(&quad, x));
                best
            }
            Shape::Box { half_extents } => {
                let verts = box_vertices(half_extents, position, Rot::new(angle));
                polygon_top(&verts, x)
            }
        }
    }
}

fn max_opt(acc: Option<f64>, v: f64) -> Option<f64> {
    Some(acc.map_or(v, |a| a.max(v)))
}

fn max_opt_pair(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(a), Some(b)) => Some(a.max(b)),
        (a, None) => a,
        (None, b) => b,
    }
}

fn disc_top(c: Vec2, r: f64, x: f64) -> Option<f64> {
    let dx = x - c.x;
    if dx.abs() <= r {
        Some(c.y + (r * r - dx * dx).max(0.0).sqrt())
    } else {
        None
    }
}

fn polygon_top(verts: &[Vec2], x: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    let n = verts.len();
    for i in 0..n {
        let a = verts[i];
        let b = verts[(i + 1) % n];
        let (lo, hi) = if a.x <= b.x { (a, b) } else { (b, a) };
        if x < lo.x || x > hi.x {
            continue;
        }
        let y = if hi.x - lo.x <= 0.0 {
            lo.y.max(hi.y)
        } else {
            lo.y + (hi.y - lo.y) * (x - lo.x) / (hi.x - lo.x)
        };
        best = max_opt(best, y);
    }
    best
}

/// World-space endpoints of a capsule's core segment.
pub(crate) fn segment_points(length: f64, position: Vec2, rot: Rot) -> (Vec2, Vec2) {
    let half = rot.apply(Vec2::new(0.0, 0.5 * length));
    (position - half, position + half)
}

/// Counter-clockwise world-space box corners starting bottom-left.
pub(crate) fn box_vertices(h: Vec2, position: Vec2, rot: Rot) -> [Vec2; 4] {
    [
        position + rot.apply(Vec2::new(-h.x, -h.y)),
        position + rot.apply(Vec2::new(h.x, -h.y)),
        position + rot.apply(Vec2::new(h.x, h.y)),
        position + rot.apply(Vec2::new(-h.x, h.y)),
    ]
}
