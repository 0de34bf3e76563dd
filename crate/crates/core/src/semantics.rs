//! Softmax likelihoods synthesized from convex sketches, plus the inflated
//! "Near" range model.
//!
//! A polygon with `M` edges yields `M + 1` classes. The Interior class is the
//! zero reference; Exterior class `k` has weight `steepness * n_k` (outward
//! unit normal of edge `k`) and a bias that puts its boundary with Interior
//! exactly on the edge line, so its logit equals `steepness` times the signed
//! distance past that edge.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::geometry::{ConvexPolygon, GeometryError, Point2};
use crate::math;

pub const DEFAULT_STEEPNESS: f64 = 5.0;
pub const DEFAULT_NEAR_INFLATION: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassRole {
    Interior,
    /// Tied to the polygon edge with this index.
    Exterior(usize),
}

impl fmt::Display for ClassRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassRole::Interior => f.write_str("interior"),
            ClassRole::Exterior(k) => write!(f, "exterior{k}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxClass {
    pub role: ClassRole,
    pub weight: Point2,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxModel {
    classes: Vec<SoftmaxClass>,
}

impl SoftmaxModel {
    pub fn from_classes(classes: Vec<SoftmaxClass>) -> Self {
        SoftmaxModel { classes }
    }

    pub fn classes(&self) -> &[SoftmaxClass] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn interior_index(&self) -> Option<usize> {
        self.classes.iter().position(|c| c.role == ClassRole::Interior)
    }

    /// Writes `p(c | s)` for every class into `out` (resized as needed).
    pub fn probabilities_into(&self, s: Point2, out: &mut Vec<f64>) {
        out.clear();
        let mut max = f64::NEG_INFINITY;
        for c in &self.classes {
            let z = c.weight.dot(s) + c.bias;
            max = max.max(z);
            out.push(z);
        }
        let mut total = 0.0;
        for z in out.iter_mut() {
            *z = math::exp(*z - max);
            total += *z;
        }
        for z in out.iter_mut() {
            *z /= total;
        }
    }

    pub fn class_probability(&self, s: Point2) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.classes.len());
        self.probabilities_into(s, &mut out);
        out
    }

    /// Probability of a single class without allocating.
    pub fn probability_of(&self, class: usize, s: Point2) -> f64 {
        let mut max = f64::NEG_INFINITY;
        for c in &self.classes {
            max = max.max(c.weight.dot(s) + c.bias);
        }
        let mut total = 0.0;
        let mut mine = 0.0;
        for (i, c) in self.classes.iter().enumerate() {
            let e = math::exp(c.weight.dot(s) + c.bias - max);
            total += e;
            if i == class {
                mine = e;
            }
        }
        mine / total
    }

    /// Plain-text dump: one `role wx wy b` row per class.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for c in &self.classes {
            let _ = writeln!(s, "{} {:.12} {:.12} {:.12}", c.role, c.weight.x, c.weight.y, c.bias);
        }
        s
    }
}

/// Builds the edge-aligned softmax for a convex polygon.
pub fn synthesize(poly: &ConvexPolygon, steepness: f64) -> Result<SoftmaxModel, GeometryError> {
    if !(steepness > 0.0) {
        return Err(GeometryError::DegenerateInput);
    }
    let mut classes = Vec::with_capacity(poly.len() + 1);
    classes.push(SoftmaxClass { role: ClassRole::Interior, weight: Point2::default(), bias: 0.0 });
    for k in 0..poly.len() {
        let (a, b) = poly.edge(k);
        if !((b - a).norm() > 0.0) {
            return Err(GeometryError::DegenerateInput);
        }
        let n = poly.outward_normal(k);
        classes.push(SoftmaxClass {
            role: ClassRole::Exterior(k),
            weight: n * steepness,
            bias: -steepness * n.dot(a),
        });
    }
    Ok(SoftmaxModel { classes })
}

/// Scales the polygon about its centroid so that its area grows by `h`.
pub fn inflate(poly: &ConvexPolygon, h: f64) -> ConvexPolygon {
    let factor = math::sqrt(h.max(1.0));
    let c = poly.centroid();
    let verts = poly.vertices().iter().map(|v| c + (*v - c) * factor).collect();
    ConvexPolygon::new(verts).expect("similarity scaling preserves convexity")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeModel {
    pub near_polygon: ConvexPolygon,
    pub near_softmax: SoftmaxModel,
}

impl RangeModel {
    pub fn build(base: &ConvexPolygon, h: f64, steepness: f64) -> Result<Self, GeometryError> {
        let near_polygon = inflate(base, h);
        let near_softmax = synthesize(&near_polygon, steepness)?;
        Ok(RangeModel { near_polygon, near_softmax })
    }

    /// `p(Near | s)`: the Interior probability of the inflated model.
    pub fn p_near(&self, s: Point2) -> f64 {
        let idx = self.near_softmax.interior_index().unwrap_or(0);
        self.near_softmax.probability_of(idx, s)
    }
}

/// Composite range-bearing likelihood under range/bearing independence.
/// "Not near" is the complement of `p(Near | s)`.
pub fn range_bearing_likelihood(
    range: &RangeModel,
    bearing: &SoftmaxModel,
    s: Point2,
    wants_near: bool,
    bearing_class: usize,
) -> f64 {
    let near = range.p_near(s);
    let b = bearing.probability_of(bearing_class, s);
    if wants_near {
        near * b
    } else {
        (1.0 - near) * b
    }
}
