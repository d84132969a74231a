//! Exact segment predicates on a micrometre lattice in the table plane.

use crate::vec3::Vec3;

/// Lattice resolution: one unit is a micrometre.
pub const LATTICE: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LatticePoint {
    pub x: i64,
    pub y: i64,
}

impl LatticePoint {
    pub fn from_xy(p: Vec3) -> Self {
        Self { x: (p.x * LATTICE).round() as i64, y: (p.y * LATTICE).round() as i64 }
    }
}

fn orient(a: LatticePoint, b: LatticePoint, c: LatticePoint) -> i8 {
    let v = i128::from(b.x - a.x) * i128::from(c.y - a.y) - i128::from(b.y - a.y) * i128::from(c.x - a.x);
    v.signum() as i8
}

fn on_box(a: LatticePoint, b: LatticePoint, c: LatticePoint) -> bool {
    a.x.min(b.x) <= c.x && c.x <= a.x.max(b.x) && a.y.min(b.y) <= c.y && c.y <= a.y.max(b.y)
}

/// Closed-segment intersection. Touching endpoints and collinear overlap count.
pub fn segments_intersect(p1: LatticePoint, p2: LatticePoint, q1: LatticePoint, q2: LatticePoint) -> bool {
    let o1 = orient(p1, p2, q1);
    let o2 = orient(p1, p2, q2);
    let o3 = orient(q1, q2, p1);
    let o4 = orient(q1, q2, p2);
    if o1 * o2 < 0 && o3 * o4 < 0 {
        return true;
    }
    (o1 == 0 && on_box(p1, p2, q1))
        || (o2 == 0 && on_box(p1, p2, q2))
        || (o3 == 0 && on_box(q1, q2, p1))
        || (o4 == 0 && on_box(q1, q2, p2))
}

/// Same predicate on table-plane projections of world points.
pub fn segments_intersect_xy(a: [Vec3; 2], b: [Vec3; 2]) -> bool {
    let l = LatticePoint::from_xy;
    segments_intersect(l(a[0]), l(a[1]), l(b[0]), l(b[1]))
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 { ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let d = [ap[0] - t * ab[0], ap[1] - t * ab[1]];
    d[0].hypot(d[1])
}

/// Minimum distance between two table-plane segments; zero if they intersect.
pub fn segment_distance_xy(a: [Vec3; 2], b: [Vec3; 2]) -> f64 {
    if segments_intersect_xy(a, b) {
        return 0.0;
    }
    let (a0, a1, b0, b1) = (a[0].xy(), a[1].xy(), b[0].xy(), b[1].xy());
    point_segment_distance(a0, b0, b1)
        .min(point_segment_distance(a1, b0, b1))
        .min(point_segment_distance(b0, a0, a1))
        .min(point_segment_distance(b1, a0, a1))
}
