//! Sketch records, the sketch-to-likelihood pipeline, and the codebook of
//! registered sketches and the query actions they induce.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autolabel::{self, Bearing, LabelTables};
use crate::geometry::{self, ConvexPolygon, GeometryError, Point2};
use crate::semantics::{self, RangeModel, SoftmaxModel};
use crate::world::Mode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchConfig {
    /// Vertex count the hull is reduced to.
    pub target_vertices: usize,
    /// Softmax steepness, 1/m.
    pub steepness: f64,
    /// Area ratio of the "Near" polygon to the sketch.
    pub near_inflation: f64,
    pub ring_samples: usize,
    /// Ring radius as a multiple of the mean vertex distance from the centroid.
    pub ring_factor: f64,
}

impl Default for SketchConfig {
    fn default() -> Self {
        SketchConfig {
            target_vertices: 4,
            steepness: semantics::DEFAULT_STEEPNESS,
            near_inflation: semantics::DEFAULT_NEAR_INFLATION,
            ring_samples: 360,
            ring_factor: 1.5,
        }
    }
}

/// A labelled sketch with every model derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchRecord {
    pub label: String,
    pub raw_points: Vec<Point2>,
    pub hull: ConvexPolygon,
    pub polygon: ConvexPolygon,
    /// Terrain speed multiplier, if the sketcher supplied one.
    pub delta: Option<f64>,
    pub softmax: SoftmaxModel,
    pub range: RangeModel,
    pub tables: LabelTables,
    pub centroid: Point2,
    pub ring_radius: f64,
}

impl SketchRecord {
    /// Hull, reduction, softmax synthesis, range model and auto-labelling.
    pub fn build(
        label: impl Into<String>,
        raw_points: Vec<Point2>,
        delta: Option<f64>,
        config: &SketchConfig,
    ) -> Result<Self, GeometryError> {
        let hull = geometry::convex_hull(&raw_points)?;
        let polygon = geometry::reduce_hull(&hull, config.target_vertices.max(3));
        let softmax = semantics::synthesize(&polygon, config.steepness)?;
        let range = RangeModel::build(&polygon, config.near_inflation, config.steepness)?;
        let centroid = polygon.centroid();
        let ring_radius = polygon.mean_vertex_radius() * config.ring_factor;
        let tables = autolabel::build_tables(&softmax, centroid, ring_radius, config.ring_samples);
        Ok(SketchRecord {
            label: label.into(),
            raw_points,
            hull,
            polygon,
            delta,
            softmax,
            range,
            tables,
            centroid,
            ring_radius,
        })
    }

    /// Probability that a truthful observer answers "yes" to
    /// "is the target `relation` of this sketch?".
    pub fn answer_truth(&self, relation: Relation, s: Point2, scratch: &mut Vec<f64>) -> f64 {
        match relation {
            Relation::Inside => f64::from(u8::from(self.polygon.contains(s))),
            Relation::Near => self.range.p_near(s),
            Relation::Bearing(b) => autolabel::label_applies_at(&self.softmax, &self.tables, s, b, scratch),
        }
    }

    /// Likelihood of a volunteered positive statement.
    pub fn statement_likelihood(&self, relation: Relation, s: Point2, scratch: &mut Vec<f64>) -> f64 {
        match relation {
            Relation::Inside => f64::from(u8::from(self.polygon.contains(s))),
            Relation::Near => self.range.p_near(s),
            Relation::Bearing(b) => autolabel::label_likelihood(&self.softmax, &self.tables, s, b, scratch),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    Near,
    Inside,
    Bearing(Bearing),
}

impl Relation {
    /// Relations the robot may ask about for every sketch.
    pub const QUERY_DEFAULT: [Relation; 5] = [
        Relation::Near,
        Relation::Bearing(Bearing::East),
        Relation::Bearing(Bearing::West),
        Relation::Bearing(Bearing::North),
        Relation::Bearing(Bearing::South),
    ];
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Relation::Near => f.write_str("Near"),
            Relation::Inside => f.write_str("Inside"),
            Relation::Bearing(b) => write!(f, "{b}"),
        }
    }
}

impl FromStr for Relation {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        if s.eq_ignore_ascii_case("near") {
            Ok(Relation::Near)
        } else if s.eq_ignore_ascii_case("inside") {
            Ok(Relation::Inside)
        } else {
            s.parse::<Bearing>().map(Relation::Bearing)
        }
    }
}

/// `Target is / is not <relation> <label>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub positive: bool,
    pub relation: Relation,
    pub label: String,
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verb = if self.positive { "is" } else { "is not" };
        write!(f, "Target {verb} {} {}", self.relation, self.label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QueryAction {
    Null,
    /// Ask about `relation` with respect to the sketch at this codebook index.
    Sketch { relation: Relation, sketch: usize },
    /// Ask whether the target is in the given mode.
    Mode(Mode),
}

impl QueryAction {
    pub fn is_null(self) -> bool {
        matches!(self, QueryAction::Null)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HumanAnswer {
    Yes,
    No,
    Null,
}

impl HumanAnswer {
    pub const ALL: [HumanAnswer; 3] = [HumanAnswer::Yes, HumanAnswer::No, HumanAnswer::Null];

    pub fn index(self) -> usize {
        match self {
            HumanAnswer::Yes => 0,
            HumanAnswer::No => 1,
            HumanAnswer::Null => 2,
        }
    }

    pub fn from_index(i: usize) -> Self {
        match i {
            0 => HumanAnswer::Yes,
            1 => HumanAnswer::No,
            _ => HumanAnswer::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CodebookError {
    DuplicateLabel(String),
    UnknownReference(String),
}

impl fmt::Display for CodebookError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodebookError::DuplicateLabel(l) => write!(f, "sketch label {l:?} already registered"),
            CodebookError::UnknownReference(l) => write!(f, "no sketch labelled {l:?}"),
        }
    }
}

impl core::error::Error for CodebookError {}

/// Registered sketches and the derived query action set. Only grows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    sketches: Vec<SketchRecord>,
    relations: Vec<Relation>,
    mode_queries: bool,
    queries: Vec<QueryAction>,
}

impl Codebook {
    pub fn new(relations: Vec<Relation>, mode_queries: bool) -> Self {
        let mut cb = Codebook { sketches: Vec::new(), relations, mode_queries, queries: Vec::new() };
        cb.queries.push(QueryAction::Null);
        if mode_queries {
            cb.queries.push(QueryAction::Mode(Mode::OffRoad));
        }
        cb
    }

    /// Codebook that never offers anything but `Null`; used without a human.
    pub fn empty() -> Self {
        Codebook::new(Vec::new(), false)
    }

    pub fn sketches(&self) -> &[SketchRecord] {
        &self.sketches
    }

    pub fn sketch(&self, index: usize) -> Option<&SketchRecord> {
        self.sketches.get(index)
    }

    pub fn find(&self, label: &str) -> Option<usize> {
        self.sketches.iter().position(|s| s.label == label)
    }

    pub fn queries(&self) -> &[QueryAction] {
        &self.queries
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn mode_queries(&self) -> bool {
        self.mode_queries
    }

    pub fn is_empty(&self) -> bool {
        self.sketches.is_empty()
    }

    /// Adds a sketch and its `relations x label` queries.
    pub fn register(&mut self, sketch: SketchRecord) -> Result<usize, CodebookError> {
        if self.find(&sketch.label).is_some() {
            return Err(CodebookError::DuplicateLabel(sketch.label));
        }
        let idx = self.sketches.len();
        self.sketches.push(sketch);
        for r in &self.relations {
            self.queries.push(QueryAction::Sketch { relation: *r, sketch: idx });
        }
        Ok(idx)
    }

    pub fn label_of(&self, q: QueryAction) -> Option<&str> {
        match q {
            QueryAction::Sketch { sketch, .. } => self.sketches.get(sketch).map(|s| s.label.as_str()),
            _ => None,
        }
    }

    pub fn resolve(&self, label: &str) -> Result<&SketchRecord, CodebookError> {
        self.find(label)
            .map(|i| &self.sketches[i])
            .ok_or_else(|| CodebookError::UnknownReference(label.to_string()))
    }
}
