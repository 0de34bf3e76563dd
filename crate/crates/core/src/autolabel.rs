//! Monte Carlo auto-labelling of softmax classes with compass bearings.
//!
//! Each of the eight compass labels covers a closed 90° arc centred on its
//! direction, so neighbouring labels overlap by 45°. The joint `p(c, l)` is
//! estimated on a ring of equally spaced points around the sketch centroid;
//! both conditionals follow from it.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_4, TAU};
use core::fmt::{self, Write as _};
use core::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::geometry::Point2;
use crate::math;
use crate::rng::categorical;
use crate::semantics::SoftmaxModel;

/// Angular slack when testing interval end points.
const ARC_EPS: f64 = 1e-9;
/// Label columns with less total mass than this are treated as empty.
const EMPTY_COLUMN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Bearing {
    East,
    NorthEast,
    North,
    NorthWest,
    West,
    SouthWest,
    South,
    SouthEast,
}

impl Bearing {
    /// Counter-clockwise from east, matching the column order of the tables.
    pub const ALL: [Bearing; 8] = [
        Bearing::East,
        Bearing::NorthEast,
        Bearing::North,
        Bearing::NorthWest,
        Bearing::West,
        Bearing::SouthWest,
        Bearing::South,
        Bearing::SouthEast,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Bearing {
        Bearing::ALL[i % 8]
    }

    /// Direction of the arc centre, radians counter-clockwise from east.
    pub fn center(self) -> f64 {
        self.index() as f64 * FRAC_PI_4
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Bearing::East => "E",
            Bearing::NorthEast => "NE",
            Bearing::North => "N",
            Bearing::NorthWest => "NW",
            Bearing::West => "W",
            Bearing::SouthWest => "SW",
            Bearing::South => "S",
            Bearing::SouthEast => "SE",
        }
    }

    pub fn long_name(self) -> &'static str {
        match self {
            Bearing::East => "East",
            Bearing::NorthEast => "NorthEast",
            Bearing::North => "North",
            Bearing::NorthWest => "NorthWest",
            Bearing::West => "West",
            Bearing::SouthWest => "SouthWest",
            Bearing::South => "South",
            Bearing::SouthEast => "SouthEast",
        }
    }

    /// True if `theta` lies in this label's closed arc.
    pub fn covers(self, theta: f64) -> bool {
        math::wrap_pi(theta - self.center()).abs() <= FRAC_PI_4 + ARC_EPS
    }
}

impl fmt::Display for Bearing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.long_name())
    }
}

impl FromStr for Bearing {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        Bearing::ALL
            .iter()
            .copied()
            .find(|b| s.eq_ignore_ascii_case(b.short_name()) || s.eq_ignore_ascii_case(b.long_name()))
            .ok_or(())
    }
}

/// Labels whose arc contains `theta`. Always two labels, or three on the
/// multiples of 45°.
pub fn canonical_labels(theta: f64) -> Vec<Bearing> {
    Bearing::ALL.iter().copied().filter(|b| b.covers(theta)).collect()
}

/// Label membership as a bit mask indexed by [`Bearing::index`].
pub fn label_mask(theta: f64) -> [bool; 8] {
    let mut m = [false; 8];
    for b in Bearing::ALL {
        m[b.index()] = b.covers(theta);
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelTables {
    /// `joint[c][l]`.
    pub joint: Vec<[f64; 8]>,
    /// `class_given_label[c][l] = p(c | l)`; columns sum to one.
    pub class_given_label: Vec<[f64; 8]>,
    /// `label_given_class[c][l] = p(l | c)`; rows sum to one.
    pub label_given_class: Vec<[f64; 8]>,
    /// Ring average of `p(c | s)`.
    pub class_marginal: Vec<f64>,
}

impl LabelTables {
    /// Builds both conditionals from a joint estimate.
    pub fn from_joint(joint: Vec<[f64; 8]>, class_marginal: Vec<f64>) -> Self {
        let nc = joint.len();
        let mut class_given_label = vec![[0.0; 8]; nc];
        for l in 0..8 {
            let col: f64 = joint.iter().map(|row| row[l]).sum();
            for c in 0..nc {
                class_given_label[c][l] = if col > EMPTY_COLUMN {
                    joint[c][l] / col
                } else {
                    1.0 / nc as f64
                };
            }
            if col <= EMPTY_COLUMN {
                log::warn!("label {} carries no class mass; using a uniform column", Bearing::from_index(l));
            }
        }
        let label_given_class = joint
            .iter()
            .map(|row| {
                let total: f64 = row.iter().sum();
                let mut out = [0.125; 8];
                if total > EMPTY_COLUMN {
                    for l in 0..8 {
                        out[l] = row[l] / total;
                    }
                }
                out
            })
            .collect();
        LabelTables { joint, class_given_label, label_given_class, class_marginal }
    }

    pub fn num_classes(&self) -> usize {
        self.joint.len()
    }

    /// Probability that the label applies to a state drawn from class `c`:
    /// `p(c, l) / p(c)`. Rows sum to between two and three because every
    /// direction carries two or three labels.
    pub fn label_applies(&self, c: usize, l: Bearing) -> f64 {
        let m = self.class_marginal[c];
        if m > EMPTY_COLUMN {
            (self.joint[c][l.index()] / m).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }

    /// CSV dump with one row per class and one column per label.
    pub fn to_csv(&self, table: &[[f64; 8]]) -> String {
        let mut s = String::from("class");
        for b in Bearing::ALL {
            s.push(',');
            s.push_str(b.short_name());
        }
        s.push('\n');
        for (c, row) in table.iter().enumerate() {
            let _ = write!(s, "{c}");
            for v in row {
                let _ = write!(s, ",{v:.9}");
            }
            s.push('\n');
        }
        s
    }
}

/// Ring estimate of the class/label joint: `samples` points equally spaced in
/// angle at `ring_radius` from `centroid`.
pub fn build_tables(model: &SoftmaxModel, centroid: Point2, ring_radius: f64, samples: usize) -> LabelTables {
    let samples = samples.max(8);
    let points = (0..samples).map(|j| {
        let theta = TAU * j as f64 / samples as f64;
        (centroid + Point2::from_polar(ring_radius, theta), theta)
    });
    joint_from_points(model, points, samples)
}

/// Joint estimate from an arbitrary list of `(state, bearing angle)` pairs.
pub fn joint_from_points(
    model: &SoftmaxModel,
    points: impl Iterator<Item = (Point2, f64)>,
    count: usize,
) -> LabelTables {
    let nc = model.num_classes();
    let mut joint = vec![[0.0; 8]; nc];
    let mut marginal = vec![0.0; nc];
    let mut probs = Vec::with_capacity(nc);
    let inv = 1.0 / count as f64;
    for (s, theta) in points {
        model.probabilities_into(s, &mut probs);
        let mask = label_mask(theta);
        for c in 0..nc {
            let p = probs[c] * inv;
            marginal[c] += p;
            for l in 0..8 {
                if mask[l] {
                    joint[c][l] += p;
                }
            }
        }
    }
    LabelTables::from_joint(joint, marginal)
}

/// `Σ_c p(c | s) p(c | l)`: the positive-statement likelihood for label `l`.
pub fn label_likelihood(model: &SoftmaxModel, tables: &LabelTables, s: Point2, l: Bearing, scratch: &mut Vec<f64>) -> f64 {
    model.probabilities_into(s, scratch);
    scratch
        .iter()
        .zip(&tables.class_given_label)
        .map(|(p, row)| p * row[l.index()])
        .sum()
}

/// `Σ_c p(c | s) p(l applies | c)`: probability that a truthful observer
/// agrees that the target is `l` of the sketch.
pub fn label_applies_at(model: &SoftmaxModel, tables: &LabelTables, s: Point2, l: Bearing, scratch: &mut Vec<f64>) -> f64 {
    model.probabilities_into(s, scratch);
    scratch
        .iter()
        .enumerate()
        .map(|(c, p)| p * tables.label_applies(c, l))
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

/// `p(l | s) = Σ_c p(l | c) p(c | s)` for all eight labels.
pub fn label_distribution(model: &SoftmaxModel, tables: &LabelTables, s: Point2) -> [f64; 8] {
    let probs = model.class_probability(s);
    let mut out = [0.0; 8];
    for (c, p) in probs.iter().enumerate() {
        for l in 0..8 {
            out[l] += p * tables.label_given_class[c][l];
        }
    }
    out
}

/// Samples a bearing label from `p(l | s)`.
pub fn generate_label<R: RngCore + ?Sized>(model: &SoftmaxModel, tables: &LabelTables, s: Point2, rng: &mut R) -> Bearing {
    let dist = label_distribution(model, tables, s);
    Bearing::from_index(categorical(rng, &dist))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZeroLikelihood;

impl fmt::Display for ZeroLikelihood {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("every particle weight vanished")
    }
}

/// Multiplies each weight by the label likelihood (or its complement for a
/// negative statement) and renormalises in place.
pub fn fuse_label(
    weights: &mut [f64],
    states: &[Point2],
    model: &SoftmaxModel,
    tables: &LabelTables,
    label: Bearing,
    positive: bool,
) -> Result<(), ZeroLikelihood> {
    let mut scratch = Vec::with_capacity(model.num_classes());
    for (w, s) in weights.iter_mut().zip(states) {
        let lik = label_likelihood(model, tables, *s, label, &mut scratch);
        *w *= if positive { lik } else { (1.0 - lik).max(0.0) };
    }
    normalize(weights)
}

pub(crate) fn normalize(weights: &mut [f64]) -> Result<(), ZeroLikelihood> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(ZeroLikelihood);
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok(())
}
