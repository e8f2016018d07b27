//! Narrow-phase contact generation between primitive pairs.
//!
//! Every routine reports normals pointing from the first shape to the second
//! and positive penetration depths only.

use crate::math::{Rot, Vec2};

use super::shape::{box_vertices, segment_points, Shape};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ManifoldPoint {
    pub point: Vec2,
    pub normal: Vec2,
    pub depth: f64,
    pub feature: u32,
}

/// Pose of a shape instance in world coordinates.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Placed {
    pub shape: Shape,
    pub position: Vec2,
    pub rot: Rot,
}

/// Points whose separation is at most `margin` are reported; `depth` is negative
/// for such speculative points.
pub(crate) fn collide(a: &Placed, b: &Placed, margin: f64, out: &mut Vec<ManifoldPoint>) {
    use Shape::*;
    let start = out.len();
    match (a.shape, b.shape) {
        (Circle { radius: ra }, Circle { radius: rb }) => {
            point_point(a.position, ra, b.position, rb, 0, margin, out)
        }
        (Circle { radius }, Capsule { length, radius: rb }) => {
            let (p, q) = segment_points(length, b.position, b.rot);
            let s = closest_on_segment(p, q, a.position);
            point_point(a.position, radius, s, rb, 0, margin, out)
        }
        (Capsule { .. }, Circle { .. }) => flipped(b, a, margin, out, start),
        (Circle { radius }, Box { half_extents }) => {
            if let Some(c) = point_box(a.position, radius, half_extents, b.position, b.rot, 0, margin) {
                out.push(c);
            }
        }
        (Box { .. }, Circle { .. }) => flipped(b, a, margin, out, start),
        (Capsule { length: la, radius: ra }, Capsule { length: lb, radius: rb }) => {
            capsule_capsule(a, la, ra, b, lb, rb, margin, out)
        }
        (Capsule { length, radius }, Box { half_extents }) => {
            capsule_box(a, length, radius, b, half_extents, margin, out)
        }
        (Box { .. }, Capsule { .. }) => flipped(b, a, margin, out, start),
        (Box { half_extents: ha }, Box { half_extents: hb }) => box_box(a, ha, b, hb, margin, out),
    }
}

fn flipped(first: &Placed, second: &Placed, margin: f64, out: &mut Vec<ManifoldPoint>, start: usize) {
    collide(first, second, margin, out);
    for c in &mut out[start..] {
        c.normal = -c.normal;
    }
}

fn point_point(pa: Vec2, ra: f64, pb: Vec2, rb: f64, feature: u32, margin: f64, out: &mut Vec<ManifoldPoint>) {
    let d = pb - pa;
    let dist = d.length();
    let depth = ra + rb - dist;
    if depth < -margin {
        return;
    }
    let normal = if dist > 1e-12 { d / dist } else { Vec2::new(0.0, 1.0) };
    let on_a = pa + normal * ra;
    let on_b = pb - normal * rb;
    out.push(ManifoldPoint {
        point: (on_a + on_b) * 0.5,
        normal,
        depth,
        feature,
    });
}

pub(crate) fn closest_on_segment(p: Vec2, q: Vec2, x: Vec2) -> Vec2 {
    let d = q - p;
    let l2 = d.length_squared();
    if l2 <= 0.0 {
        return p;
    }
    let t = ((x - p).dot(d) / l2).clamp(0.0, 1.0);
    p + d * t
}

/// A rounded point (radius `r`) against a box. Normal points from the point to the box.
fn point_box(c: Vec2, r: f64, h: Vec2, bpos: Vec2, brot: Rot, feature: u32, margin: f64) -> Option<ManifoldPoint> {
    let local = brot.apply_inv(c - bpos);
    let inside = local.x.abs() <= h.x && local.y.abs() <= h.y;
    let (surface_local, normal_local, signed_dist) = if inside {
        // push out through the nearest face
        let dx = h.x - local.x.abs();
        let dy = h.y - local.y.abs();
        if dx < dy {
            let sx = if local.x >= 0.0 { 1.0 } else { -1.0 };
            (Vec2::new(sx * h.x, local.y), Vec2::new(sx, 0.0), -dx)
        } else {
            let sy = if local.y >= 0.0 { 1.0 } else { -1.0 };
            (Vec2::new(local.x, sy * h.y), Vec2::new(0.0, sy), -dy)
        }
    } else {
        let clamped = Vec2::new(local.x.clamp(-h.x, h.x), local.y.clamp(-h.y, h.y));
        let d = local - clamped;
        let dist = d.length();
        (clamped, d / dist, dist)
    };
    let depth = r - signed_dist;
    if depth < -margin {
        return None;
    }
    let n_box_out = brot.apply(normal_local);
    let surface = bpos + brot.apply(surface_local);
    let tip = c - n_box_out * r;
    Some(ManifoldPoint {
        point: (surface + tip) * 0.5,
        normal: -n_box_out,
        depth,
        feature,
    })
}

fn keep_deepest_two(mut cands: Vec<ManifoldPoint>, out: &mut Vec<ManifoldPoint>) {
    cands.sort_by(|a, b| b.depth.total_cmp(&a.depth).then(a.feature.cmp(&b.feature)));
    let mut kept: Vec<ManifoldPoint> = Vec::with_capacity(2);
    for c in cands {
        if kept.len() == 2 {
            break;
        }
        if kept.iter().any(|k| (k.point - c.point).length_squared() < 1e-10) {
            continue;
        }
        kept.push(c);
    }
    kept.sort_by_key(|c| c.feature);
    out.extend(kept);
}

fn capsule_capsule(a: &Placed, la: f64, ra: f64, b: &Placed, lb: f64, rb: f64, margin: f64, out: &mut Vec<ManifoldPoint>) {
    let (a0, a1) = segment_points(la, a.position, a.rot);
    let (b0, b1) = segment_points(lb, b.position, b.rot);
    let mut cands = Vec::new();
    for (k, &e) in [a0, a1].iter().enumerate() {
        let s = closest_on_segment(b0, b1, e);
        point_point(e, ra, s, rb, k as u32, margin, &mut cands);
    }
    for (k, &e) in [b0, b1].iter().enumerate() {
        let s = closest_on_segment(a0, a1, e);
        point_point(s, ra, e, rb, 2 + k as u32, margin, &mut cands);
    }
    keep_deepest_two(cands, out);
}

fn capsule_box(a: &Placed, length: f64, radius: f64, b: &Placed, h: Vec2, margin: f64, out: &mut Vec<ManifoldPoint>) {
    let (p, q) = segment_points(length, a.position, a.rot);
    let mut cands = Vec::new();
    for (k, &e) in [p, q].iter().enumerate() {
        if let Some(c) = point_box(e, radius, h, b.position, b.rot, k as u32, margin) {
            cands.push(c);
        }
    }
    for (k, &v) in box_vertices(h, b.position, b.rot).iter().enumerate() {
        let s = closest_on_segment(p, q, v);
        let d = v - s;
        let dist = d.length();
        if dist <= 1e-12 || dist > radius + margin {
            continue;
        }
        let normal = d / dist;
        cands.push(ManifoldPoint {
            point: (s + normal * radius + v) * 0.5,
            normal,
            depth: radius - dist,
            feature: 2 + k as u32,
        });
    }
    keep_deepest_two(cands, out);
}

const BOX_NORMALS: [Vec2; 4] = [
    Vec2 { x: 0.0, y: -1.0 },
    Vec2 { x: 1.0, y: 0.0 },
    Vec2 { x: 0.0, y: 1.0 },
    Vec2 { x: -1.0, y: 0.0 },
];

/// Largest separation of `other` from any face of `poly`, with the face index.
fn max_separation(poly: &[Vec2; 4], rot: Rot, other: &[Vec2; 4]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, n_local) in BOX_NORMALS.iter().enumerate() {
        let n = rot.apply(*n_local);
        let v = poly[i];
        let sep = other.iter().map(|&w| n.dot(w - v)).fold(f64::INFINITY, f64::min);
        if sep > best.1 {
            best = (i, sep);
        }
    }
    best
}

fn box_box(a: &Placed, ha: Vec2, b: &Placed, hb: Vec2, margin: f64, out: &mut Vec<ManifoldPoint>) {
    let va = box_vertices(ha, a.position, a.rot);
    let vb = box_vertices(hb, b.position, b.rot);
    let (edge_a, sep_a) = max_separation(&va, a.rot, &vb);
    if sep_a > margin {
        return;
    }
    let (edge_b, sep_b) = max_separation(&vb, b.rot, &va);
    if sep_b > margin {
        return;
    }
    // prefer A as reference unless B is clearly better, keeps the manifold stable
    let flip = sep_b > sep_a + 1e-4;
    let (ref_v, ref_rot, ref_edge, inc_v, inc_rot) = if flip {
        (&vb, b.rot, edge_b, &va, a.rot)
    } else {
        (&va, a.rot, edge_a, &vb, b.rot)
    };
    let ref_n = ref_rot.apply(BOX_NORMALS[ref_edge]);

    // incident edge: most anti-parallel face on the other box
    let mut inc_edge = 0;
    let mut min_dot = f64::INFINITY;
    for (i, n_local) in BOX_NORMALS.iter().enumerate() {
        let d = inc_rot.apply(*n_local).dot(ref_n);
        if d < min_dot {
            min_dot = d;
            inc_edge = i;
        }
    }
    let i1 = inc_edge;
    let i2 = (inc_edge + 1) % 4;
    let incident = [(inc_v[i1], i1 as u32), (inc_v[i2], i2 as u32)];

    let v11 = ref_v[ref_edge];
    let v12 = ref_v[(ref_edge + 1) % 4];
    let tangent = (v12 - v11).normalized();
    let side1 = -tangent.dot(v11);
    let side2 = tangent.dot(v12);

    let Some(clip1) = clip_segment(incident, -tangent, side1) else {
        return;
    };
    let Some(clip2) = clip_segment(clip1, tangent, side2) else {
        return;
    };

    let front = ref_n.dot(v11);
    for (cp, id) in clip2 {
        let separation = ref_n.dot(cp) - front;
        if separation <= margin {
            let depth = -separation;
            let normal = if flip { -ref_n } else { ref_n };
            out.push(ManifoldPoint {
                point: cp + ref_n * (0.5 * depth),
                normal,
                depth,
                feature: ((flip as u32) << 16) | ((ref_edge as u32) << 8) | id,
            });
        }
    }
}

/// Keeps the part of the segment with `dot(n, p) <= offset`.
fn clip_segment(seg: [(Vec2, u32); 2], n: Vec2, offset: f64) -> Option<[(Vec2, u32); 2]> {
    let d0 = n.dot(seg[0].0) - offset;
    let d1 = n.dot(seg[1].0) - offset;
    let mut res = Vec::with_capacity(2);
    if d0 <= 0.0 {
        res.push(seg[0]);
    }
    if d1 <= 0.0 {
        res.push(seg[1]);
    }
    if d0 * d1 < 0.0 {
        let t = d0 / (d0 - d1);
        let p = seg[0].0 + (seg[1].0 - seg[0].0) * t;
        // keep the id of the vertex that was clipped away
        let id = if d0 > 0.0 { seg[0].1 } else { seg[1].1 } | 0x80;
        res.push((p, id));
    }
    if res.len() < 2 {
        return None;
    }
    Some([res[0], res[1]])
}
