//! Points, convex polygons, hull construction and sequential hull reduction.

use alloc::vec::Vec;
use core::fmt;
use core::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::math;

/// Deflection angles closer than this are treated as ties.
const ANGLE_TIE_EPS: f64 = 1e-12;
/// Turns smaller than this (in cross-product units relative to the edge
/// lengths) count as collinear.
const COLLINEAR_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryError {
    /// Fewer than three distinct points, all points collinear, or a
    /// zero-length segment.
    DegenerateInput,
}

impl fmt::Display for GeometryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryError::DegenerateInput => f.write_str("degenerate geometric input"),
        }
    }
}

impl core::error::Error for GeometryError {}

/// A point in the map plane, meters east (`x`) and north (`y`).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 2-D cross product.
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        math::hypot(self.x, self.y)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Angle of the vector from the origin, radians in `(-π, π]`.
    pub fn angle(self) -> f64 {
        math::atan2(self.y, self.x)
    }

    pub fn from_polar(radius: f64, theta: f64) -> Self {
        Point2::new(radius * math::cos(theta), radius * math::sin(theta))
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

/// Orientation of `c` relative to the directed line `a -> b`; positive when
/// `c` lies to the left.
pub fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b - a).cross(c - a)
}

/// Strictly convex, counter-clockwise polygon with at least three vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexPolygon {
    vertices: Vec<Point2>,
}

impl ConvexPolygon {
    /// Validates and wraps a vertex list. Clockwise input is reversed;
    /// anything that is not strictly convex is rejected.
    pub fn new(mut vertices: Vec<Point2>) -> Result<Self, GeometryError> {
        if vertices.len() < 3 || vertices.iter().any(|p| !p.is_finite()) {
            return Err(GeometryError::DegenerateInput);
        }
        if signed_area(&vertices) < 0.0 {
            vertices.reverse();
        }
        let n = vertices.len();
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            if a == b {
                return Err(GeometryError::DegenerateInput);
            }
            let scale = (b - a).norm() * (c - b).norm();
            if orient(a, b, c) <= COLLINEAR_EPS * scale {
                return Err(GeometryError::DegenerateInput);
            }
        }
        Ok(ConvexPolygon { vertices })
    }

    /// Axis-aligned rectangle; convenient in tests and presets.
    pub fn rectangle(min: Point2, max: Point2) -> Result<Self, GeometryError> {
        ConvexPolygon::new(alloc::vec![
            min,
            Point2::new(max.x, min.y),
            max,
            Point2::new(min.x, max.y),
        ])
    }

    /// Regular polygon with `n` vertices, the first at angle `phase`.
    pub fn regular(center: Point2, radius: f64, n: usize, phase: f64) -> Result<Self, GeometryError> {
        let verts = (0..n)
            .map(|i| {
                let th = phase + core::f64::consts::TAU * i as f64 / n as f64;
                center + Point2::from_polar(radius, th)
            })
            .collect();
        ConvexPolygon::new(verts)
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn into_vertices(self) -> Vec<Point2> {
        self.vertices
    }

    /// Edge `k` runs from vertex `k` to vertex `k + 1` (cyclically).
    pub fn edge(&self, k: usize) -> (Point2, Point2) {
        let n = self.vertices.len();
        (self.vertices[k % n], self.vertices[(k + 1) % n])
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    /// Area centroid.
    pub fn centroid(&self) -> Point2 {
        let n = self.vertices.len();
        let mut cx = 0.0;
        let mut cy = 0.0;
        let mut a2 = 0.0;
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            let c = p.cross(q);
            a2 += c;
            cx += (p.x + q.x) * c;
            cy += (p.y + q.y) * c;
        }
        Point2::new(cx / (3.0 * a2), cy / (3.0 * a2))
    }

    pub fn mean_vertex_radius(&self) -> f64 {
        let c = self.centroid();
        self.vertices.iter().map(|v| v.distance(c)).sum::<f64>() / self.vertices.len() as f64
    }

    /// True when `p` is inside or on the boundary.
    pub fn contains(&self, p: Point2) -> bool {
        let n = self.vertices.len();
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let tol = 1e-9 * (b - a).norm().max(1.0);
            if orient(a, b, p) < -tol {
                return false;
            }
        }
        true
    }

    /// Outward unit normal of edge `k`.
    pub fn outward_normal(&self, k: usize) -> Point2 {
        let (a, b) = self.edge(k);
        let e = b - a;
        let len = e.norm();
        Point2::new(e.y / len, -e.x / len)
    }

    pub fn translate(&self, by: Point2) -> ConvexPolygon {
        ConvexPolygon { vertices: self.vertices.iter().map(|v| *v + by).collect() }
    }

    pub fn bounding_box(&self) -> (Point2, Point2) {
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for v in &self.vertices {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        (lo, hi)
    }
}

/// Shoelace signed area; positive for counter-clockwise order.
pub fn signed_area(vertices: &[Point2]) -> f64 {
    let n = vertices.len();
    let mut s = 0.0;
    for i in 0..n {
        s += vertices[i].cross(vertices[(i + 1) % n]);
    }
    0.5 * s
}

/// Convex hull by Quickhull. Output is counter-clockwise and starts at the
/// lowest-x (then lowest-y) input point; collinear boundary points are not
/// vertices.
pub fn convex_hull(points: &[Point2]) -> Result<ConvexPolygon, GeometryError> {
    if points.len() < 3 || points.iter().any(|p| !p.is_finite()) {
        return Err(GeometryError::DegenerateInput);
    }
    let key = |p: &Point2| (p.x, p.y);
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        if key(p) < key(&lo) {
            lo = *p;
        }
        if key(p) > key(&hi) {
            hi = *p;
        }
    }
    if lo == hi {
        return Err(GeometryError::DegenerateInput);
    }
    let below: Vec<Point2> = points.iter().copied().filter(|p| orient(lo, hi, *p) < 0.0).collect();
    let above: Vec<Point2> = points.iter().copied().filter(|p| orient(hi, lo, *p) < 0.0).collect();

    // Walking lo -> (below chain) -> hi -> (above chain) is counter-clockwise.
    let mut hull = Vec::new();
    hull.push(lo);
    quickhull_side(&below, lo, hi, &mut hull);
    hull.push(hi);
    quickhull_side(&above, hi, lo, &mut hull);
    if hull.len() < 3 {
        return Err(GeometryError::DegenerateInput);
    }
    let hull = drop_collinear(hull);
    ConvexPolygon::new(hull)
}

/// Appends the hull vertices strictly to the right of `a -> b`, in order
/// from `a` to `b`.
fn quickhull_side(candidates: &[Point2], a: Point2, b: Point2, out: &mut Vec<Point2>) {
    let mut far = None;
    let mut far_d = 0.0;
    for p in candidates {
        let d = -orient(a, b, *p);
        if d > far_d {
            far_d = d;
            far = Some(*p);
        }
    }
    let Some(f) = far else { return };
    let left: Vec<Point2> = candidates.iter().copied().filter(|p| orient(a, f, *p) < 0.0).collect();
    let right: Vec<Point2> = candidates.iter().copied().filter(|p| orient(f, b, *p) < 0.0).collect();
    quickhull_side(&left, a, f, out);
    out.push(f);
    quickhull_side(&right, f, b, out);
}

fn drop_collinear(mut pts: Vec<Point2>) -> Vec<Point2> {
    let mut changed = true;
    while changed && pts.len() > 3 {
        changed = false;
        let n = pts.len();
        for i in 0..n {
            let a = pts[(i + n - 1) % n];
            let b = pts[i];
            let c = pts[(i + 1) % n];
            let scale = (b - a).norm() * (c - b).norm();
            if a == b || orient(a, b, c) <= COLLINEAR_EPS * scale {
                pts.remove(i);
                changed = true;
                break;
            }
        }
    }
    pts
}

/// Turning angle at `v` between segment `prev -> v` and `v -> next`, in
/// `[0, π]`. Zero for a straight continuation.
pub fn deflection_angle(prev: Point2, v: Point2, next: Point2) -> Result<f64, GeometryError> {
    let a = v - prev;
    let b = next - v;
    let la = a.norm();
    let lb = b.norm();
    if !(la > 0.0) || !(lb > 0.0) {
        return Err(GeometryError::DegenerateInput);
    }
    let cos = (a.dot(b) / (la * lb)).clamp(-1.0, 1.0);
    Ok(math::acos(cos))
}

/// Sequential hull reduction: repeatedly delete the vertex with the smallest
/// deflection angle until `target` vertices remain. Ties go to the lowest
/// index. Hulls already at or below `target` come back unchanged.
///
/// # Panics
/// If `target < 3`.
pub fn reduce_hull(hull: &ConvexPolygon, target: usize) -> ConvexPolygon {
    assert!(target >= 3, "reduce_hull target must be at least 3");
    let mut verts = hull.vertices.clone();
    while verts.len() > target {
        let n = verts.len();
        let mut best = 0;
        let mut best_angle = f64::INFINITY;
        for i in 0..n {
            let theta = deflection_angle(verts[(i + n - 1) % n], verts[i], verts[(i + 1) % n])
                .unwrap_or(0.0);
            if theta < best_angle - ANGLE_TIE_EPS {
                best_angle = theta;
                best = i;
            }
        }
        verts.remove(best);
        verts = drop_collinear(verts);
    }
    ConvexPolygon::new(verts).unwrap_or_else(|_| hull.clone())
}
