//! Simulated human collaborator: the PSEUD sketch emulator, accuracy and
//! availability corruption, query answering, volunteered statements and the
//! constant-rate sketch schedule.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::TAU;
use core::fmt;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::autolabel::{self, Bearing};
use crate::geometry::{self, ConvexPolygon, Point2};
use crate::rng::{normal, uniform};
use crate::sketch::{Codebook, HumanAnswer, QueryAction, Relation, Statement};
use crate::world::{Landmark, TargetState};

/// PSEUD parameters: centroid, mean vertex radius, radius s.d., Poisson mean
/// of extra vertices, and angular-gap s.d.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SketchParams {
    pub centroid: Point2,
    pub r: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub psi: f64,
}

const PSEUD_ATTEMPTS: usize = 10;

/// Number of vertices PSEUD asks for: three plus a Poisson draw.
pub fn pseud_vertex_count<R: RngCore + ?Sized>(lambda: f64, rng: &mut R) -> usize {
    if !(lambda > 0.0) {
        return 3;
    }
    let extra: f64 = Poisson::new(lambda).map(|d| d.sample(rng)).unwrap_or(0.0);
    3 + extra as usize
}

/// Angular gaps drawn around `2*pi/n` and normalised to sum to `2*pi`.
/// Returns `None` when every gap came out non-positive.
pub fn pseud_gaps<R: RngCore + ?Sized>(n: usize, psi: f64, rng: &mut R) -> Option<Vec<f64>> {
    let nominal = TAU / n as f64;
    let gaps: Vec<f64> = (0..n).map(|_| normal(rng, nominal, psi).max(0.0)).collect();
    let total: f64 = gaps.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    Some(gaps.into_iter().map(|g| g * TAU / total).collect())
}

/// Parameterised sketch emulator. The raw vertex ring is passed through the
/// convex hull so the output is always strictly convex.
pub fn pseud_generate<R: RngCore + ?Sized>(params: &SketchParams, rng: &mut R) -> ConvexPolygon {
    assert!(params.r > 0.0, "PSEUD radius must be positive");
    let n = pseud_vertex_count(params.lambda, rng);
    for _ in 0..PSEUD_ATTEMPTS {
        let Some(gaps) = pseud_gaps(n, params.psi, rng) else { continue };
        let mut theta = uniform(rng) * TAU;
        let mut pts = Vec::with_capacity(n);
        for g in gaps {
            let mut radius = normal(rng, params.r, params.sigma);
            let mut tries = 0;
            while radius <= 0.0 && tries < PSEUD_ATTEMPTS {
                radius = normal(rng, params.r, params.sigma);
                tries += 1;
            }
            if radius <= 0.0 {
                radius = params.r;
            }
            pts.push(params.centroid + Point2::from_polar(radius, theta));
            theta += g;
        }
        if let Ok(poly) = geometry::convex_hull(&pts) {
            return poly;
        }
    }
    ConvexPolygon::regular(params.centroid, params.r, n, 0.0).expect("positive radius")
}

/// Keeps `eta` of each answer's truthful mass and spreads the rest uniformly
/// over the other answers, then renormalises.
pub fn corrupt_likelihood(p: &[f64], eta: f64) -> Vec<f64> {
    let k = p.len();
    if k <= 1 {
        return p.to_vec();
    }
    let mut out = alloc::vec![0.0; k];
    for (i, pi) in p.iter().enumerate() {
        let spill = (1.0 - eta) * pi / (k - 1) as f64;
        for (j, o) in out.iter_mut().enumerate() {
            *o += if i == j { eta * pi } else { spill };
        }
    }
    let total: f64 = out.iter().sum();
    if total > 0.0 {
        for o in &mut out {
            *o /= total;
        }
    }
    out
}

/// The planner's and filter's assumed model of the human sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumanSensorModel {
    pub eta: f64,
    pub xi: f64,
}

impl HumanSensorModel {
    /// `p(answer | s)` given the truthful yes-probability at `s`. Null is
    /// state independent, so it carries no information.
    pub fn likelihood(&self, answer: HumanAnswer, p_yes: f64) -> f64 {
        let yes = self.eta * p_yes + (1.0 - self.eta) * (1.0 - p_yes);
        match answer {
            HumanAnswer::Yes => self.xi * yes,
            HumanAnswer::No => self.xi * (1.0 - yes),
            HumanAnswer::Null => 1.0 - self.xi,
        }
    }

    /// Draws an answer the way the modelled human would.
    pub fn sample<R: RngCore + ?Sized>(&self, p_yes: f64, rng: &mut R) -> HumanAnswer {
        if uniform(rng) >= self.xi {
            return HumanAnswer::Null;
        }
        let yes = self.eta * p_yes + (1.0 - self.eta) * (1.0 - p_yes);
        if uniform(rng) < yes {
            HumanAnswer::Yes
        } else {
            HumanAnswer::No
        }
    }
}

/// Truthful probability of a "yes" to `query` for the given target.
pub fn truthful_yes(query: QueryAction, target: &TargetState, codebook: &Codebook, scratch: &mut Vec<f64>) -> Option<f64> {
    match query {
        QueryAction::Null => None,
        QueryAction::Sketch { relation, sketch } => {
            codebook.sketch(sketch).map(|sk| sk.answer_truth(relation, target.position, scratch))
        }
        QueryAction::Mode(m) => Some(if target.mode == m { 1.0 } else { 0.0 }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InteractionMode {
    /// The human only answers robot queries.
    Active,
    /// The human only volunteers statements.
    Passive,
    Both,
}

impl InteractionMode {
    pub fn answers_queries(self) -> bool {
        matches!(self, InteractionMode::Active | InteractionMode::Both)
    }

    pub fn volunteers(self) -> bool {
        matches!(self, InteractionMode::Passive | InteractionMode::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HumanModel {
    pub eta: f64,
    pub xi: f64,
    /// Seconds between sketches; infinite disables sketching.
    #[serde(with = "crate::math::extended_f64")]
    pub sketch_period: f64,
    pub mode: InteractionMode,
    /// Seconds between volunteered statements; infinite disables them.
    #[serde(with = "crate::math::extended_f64")]
    pub push_period: f64,
    /// PSEUD radius s.d. as a fraction of the landmark radius.
    pub sigma_fraction: f64,
    pub lambda: f64,
    pub psi: f64,
    /// Radius of improvised sketches once every landmark has been drawn.
    pub adhoc_radius: f64,
    /// Offset s.d. of improvised sketches from the true target.
    pub adhoc_offset: f64,
}

impl Default for HumanModel {
    fn default() -> Self {
        HumanModel {
            eta: 0.95,
            xi: 0.9,
            sketch_period: 60.0,
            mode: InteractionMode::Active,
            push_period: f64::INFINITY,
            sigma_fraction: 0.1,
            lambda: 2.0,
            psi: 0.2,
            adhoc_radius: 60.0,
            adhoc_offset: 60.0,
        }
    }
}

impl HumanModel {
    pub fn sensor(&self) -> HumanSensorModel {
        HumanSensorModel { eta: self.eta, xi: self.xi }
    }

    pub fn validate(&self) -> Result<(), HumanError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.eta) || !unit(self.xi) {
            return Err(HumanError::InvalidModel("eta and xi must lie in [0, 1]"));
        }
        if !(self.sketch_period > 0.0) || !(self.push_period > 0.0) {
            return Err(HumanError::InvalidModel("periods must be positive or infinite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HumanError {
    UnknownSketch(usize),
    InvalidModel(&'static str),
}

impl fmt::Display for HumanError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HumanError::UnknownSketch(i) => write!(f, "query refers to unregistered sketch {i}"),
            HumanError::InvalidModel(m) => f.write_str(m),
        }
    }
}

impl core::error::Error for HumanError {}

/// The true human's answer: Null with probability `1 - xi`, otherwise a draw
/// from the accuracy-corrupted truthful distribution.
pub fn answer_query<R: RngCore + ?Sized>(
    target: &TargetState,
    query: QueryAction,
    codebook: &Codebook,
    human: &HumanModel,
    rng: &mut R,
) -> Result<HumanAnswer, HumanError> {
    let mut scratch = Vec::new();
    let p_yes = match query {
        QueryAction::Null => return Ok(HumanAnswer::Null),
        QueryAction::Sketch { sketch, .. } if codebook.sketch(sketch).is_none() => {
            return Err(HumanError::UnknownSketch(sketch));
        }
        q => truthful_yes(q, target, codebook, &mut scratch).unwrap_or(0.0),
    };
    Ok(human.sensor().sample(p_yes, rng))
}

/// Relations a volunteered statement may use.
pub const STATEMENT_RELATIONS: [Relation; 10] = [
    Relation::Inside,
    Relation::Near,
    Relation::Bearing(Bearing::East),
    Relation::Bearing(Bearing::NorthEast),
    Relation::Bearing(Bearing::North),
    Relation::Bearing(Bearing::NorthWest),
    Relation::Bearing(Bearing::West),
    Relation::Bearing(Bearing::SouthWest),
    Relation::Bearing(Bearing::South),
    Relation::Bearing(Bearing::SouthEast),
];

/// A statement about the sketch nearest the target. Half the time the
/// relation is what the human would naturally say (Inside, else Near, else a
/// bearing drawn from `p(l | s)`), otherwise a uniformly chosen relation. Its
/// polarity is the sampled truth, flipped with probability `1 - eta`.
pub fn volunteer_statement<R: RngCore + ?Sized>(
    target: &TargetState,
    codebook: &Codebook,
    human: &HumanModel,
    rng: &mut R,
) -> Option<Statement> {
    let s = target.position;
    let sketch = codebook
        .sketches()
        .iter()
        .min_by(|a, b| a.centroid.distance(s).total_cmp(&b.centroid.distance(s)))?;
    let mut scratch = Vec::new();
    let relation = if uniform(rng) < 0.5 {
        if sketch.polygon.contains(s) {
            Relation::Inside
        } else if uniform(rng) < sketch.range.p_near(s) {
            Relation::Near
        } else {
            Relation::Bearing(autolabel::generate_label(&sketch.softmax, &sketch.tables, s, rng))
        }
    } else {
        STATEMENT_RELATIONS[rng.random_range(0..STATEMENT_RELATIONS.len())]
    };
    let truth = uniform(rng) < sketch.answer_truth(relation, s, &mut scratch);
    let accurate = uniform(rng) < human.eta;
    Some(Statement { positive: truth == accurate, relation, label: sketch.label.clone() })
}

/// A sketch the simulated human decided to draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchDraft {
    pub label: String,
    pub points: Vec<Point2>,
    pub delta: Option<f64>,
}

/// Constant-rate sketch schedule: sketches at `0, T, 2T, ...`. Landmarks are
/// drawn nearest-to-target first; once exhausted the human improvises
/// `area<n>` sketches around where they believe the target is.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchSchedule {
    next_at: f64,
    drawn: Vec<bool>,
    adhoc: usize,
}

impl SketchSchedule {
    pub fn new(landmarks: usize) -> Self {
        SketchSchedule { next_at: 0.0, drawn: alloc::vec![false; landmarks], adhoc: 0 }
    }

    pub fn maybe_sketch<R: RngCore + ?Sized>(
        &mut self,
        clock: f64,
        target: &TargetState,
        landmarks: &[Landmark],
        human: &HumanModel,
        rng: &mut R,
    ) -> Option<SketchDraft> {
        if !human.sketch_period.is_finite() || clock + 1e-9 < self.next_at {
            return None;
        }
        self.next_at += human.sketch_period;
        let s = target.position;
        let pick = landmarks
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.drawn.get(*i).copied().unwrap_or(true))
            .min_by(|(_, a), (_, b)| a.centroid.distance(s).total_cmp(&b.centroid.distance(s)))
            .map(|(i, _)| i);
        let (label, params, delta) = match pick {
            Some(i) => {
                self.drawn[i] = true;
                let l = &landmarks[i];
                let params = SketchParams {
                    centroid: l.centroid,
                    r: l.radius,
                    sigma: human.sigma_fraction * l.radius,
                    lambda: human.lambda,
                    psi: human.psi,
                };
                (l.name.clone(), params, Some(l.terrain))
            }
            None => {
                self.adhoc += 1;
                let offset = Point2::new(normal(rng, 0.0, human.adhoc_offset), normal(rng, 0.0, human.adhoc_offset));
                let params = SketchParams {
                    centroid: s + offset,
                    r: human.adhoc_radius,
                    sigma: human.sigma_fraction * human.adhoc_radius,
                    lambda: human.lambda,
                    psi: human.psi,
                };
                (format!("area{}", self.adhoc), params, None)
            }
        };
        let poly = pseud_generate(&params, rng);
        Some(SketchDraft { label, points: poly.into_vertices(), delta })
    }
}

/// Fixed-rate statement pushes for passive humans.
#[derive(Debug, Clone, PartialEq)]
pub struct PushSchedule {
    next_at: f64,
}

impl PushSchedule {
    pub fn new(period: f64) -> Self {
        PushSchedule { next_at: period }
    }

    pub fn due(&mut self, clock: f64, period: f64) -> bool {
        if !period.is_finite() || clock + 1e-9 < self.next_at {
            return false;
        }
        self.next_at += period;
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::sketch::{SketchConfig, SketchRecord};
    use crate::world::Mode;

    fn target_at(x: f64, y: f64) -> TargetState {
        TargetState::off_road(Point2::new(x, y), 0.0)
    }

    fn pond_codebook() -> Codebook {
        let mut cb = Codebook::new(Relation::QUERY_DEFAULT.to_vec(), true);
        let square = ConvexPolygon::rectangle(Point2::new(400.0, 400.0), Point2::new(500.0, 500.0)).unwrap();
        cb.register(SketchRecord::build("Pond", square.into_vertices(), Some(0.5), &SketchConfig::default()).unwrap())
            .unwrap();
        cb
    }

    #[test]
    fn regular_triangle_without_noise() {
        let mut rng = stream(1, 0);
        let p = SketchParams { centroid: Point2::new(500.0, 500.0), r: 50.0, sigma: 0.0, lambda: 0.0, psi: 0.0 };
        let poly = pseud_generate(&p, &mut rng);
        assert_eq!(poly.len(), 3);
        for v in poly.vertices() {
            assert!((v.distance(p.centroid) - 50.0).abs() < 1e-9);
        }
        let (a, b) = poly.edge(0);
        let (c, d) = poly.edge(1);
        assert!((a.distance(b) - c.distance(d)).abs() < 1e-9);
    }

    #[test]
    fn gaps_sum_to_full_turn() {
        let mut rng = stream(2, 0);
        for n in 3..12 {
            let g = pseud_gaps(n, 0.3, &mut rng).unwrap();
            assert!((g.iter().sum::<f64>() - TAU).abs() < 1e-9);
        }
    }

    #[test]
    fn pseud_draws_are_convex_and_sized() {
        let mut rng = stream(3, 0);
        let p = SketchParams { centroid: Point2::new(500.0, 500.0), r: 50.0, sigma: 5.0, lambda: 2.0, psi: 0.2 };
        let a = pseud_generate(&p, &mut rng);
        let b = pseud_generate(&p, &mut rng);
        assert_ne!(a, b);
        for poly in [a, b] {
            assert!(poly.len() >= 3);
            let mean: f64 = poly.vertices().iter().map(|v| v.distance(p.centroid)).sum::<f64>() / poly.len() as f64;
            assert!((mean - 50.0).abs() <= 3.0 * 5.0 / libm::sqrt(poly.len() as f64));
            assert!(ConvexPolygon::new(poly.vertices().to_vec()).is_ok());
        }
    }

    #[test]
    fn corruption_examples() {
        assert_eq!(corrupt_likelihood(&[0.7, 0.3], 1.0), alloc::vec![0.7, 0.3]);
        assert_eq!(corrupt_likelihood(&[1.0, 0.0], 0.5), alloc::vec![0.5, 0.5]);
        let anti = corrupt_likelihood(&[1.0, 0.0], 0.3);
        assert!(anti[1] > anti[0]);
        let three = corrupt_likelihood(&[0.2, 0.5, 0.3], 0.8);
        assert!((three.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sensor_model_matches_corruption() {
        let m = HumanSensorModel { eta: 0.8, xi: 0.6 };
        for p in [0.0, 0.3, 1.0] {
            let c = corrupt_likelihood(&[p, 1.0 - p], 0.8);
            assert!((m.likelihood(HumanAnswer::Yes, p) - 0.6 * c[0]).abs() < 1e-12);
            assert!((m.likelihood(HumanAnswer::No, p) - 0.6 * c[1]).abs() < 1e-12);
            let total: f64 = [HumanAnswer::Yes, HumanAnswer::No, HumanAnswer::Null].iter().map(|a| m.likelihood(*a, p)).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unavailable_human_is_silent() {
        let cb = pond_codebook();
        let h = HumanModel { xi: 0.0, ..HumanModel::default() };
        let mut rng = stream(4, 0);
        let q = cb.queries()[2];
        for _ in 0..100 {
            assert_eq!(answer_query(&target_at(450.0, 450.0), q, &cb, &h, &mut rng), Ok(HumanAnswer::Null));
        }
        let bad = QueryAction::Sketch { relation: Relation::Near, sketch: 7 };
        assert_eq!(answer_query(&target_at(0.0, 0.0), bad, &cb, &h, &mut rng), Err(HumanError::UnknownSketch(7)));
    }

    #[test]
    fn mode_query_answers_truthfully() {
        let cb = pond_codebook();
        let h = HumanModel { eta: 1.0, xi: 1.0, ..HumanModel::default() };
        let mut rng = stream(5, 0);
        let q = QueryAction::Mode(Mode::OffRoad);
        assert_eq!(answer_query(&target_at(10.0, 10.0), q, &cb, &h, &mut rng), Ok(HumanAnswer::Yes));
    }

    #[test]
    fn empty_codebook_no_statement() {
        let mut rng = stream(6, 0);
        assert!(volunteer_statement(&target_at(1.0, 1.0), &Codebook::empty(), &HumanModel::default(), &mut rng).is_none());
    }

    #[test]
    fn statements_inside_pond_favour_inside_and_near() {
        let cb = pond_codebook();
        let h = HumanModel { eta: 1.0, ..HumanModel::default() };
        let mut rng = stream(7, 0);
        let mut close = 0;
        let n = 1000;
        for _ in 0..n {
            let st = volunteer_statement(&target_at(450.0, 450.0), &cb, &h, &mut rng).unwrap();
            if st.positive && matches!(st.relation, Relation::Inside | Relation::Near) {
                close += 1;
            }
        }
        assert!(close > n / 2, "{close}");
    }

    #[test]
    fn infinite_period_never_sketches() {
        let net = crate::world::RoadNetwork::default_map();
        let mut sched = SketchSchedule::new(net.landmarks().len());
        let h = HumanModel { sketch_period: f64::INFINITY, ..HumanModel::default() };
        let mut rng = stream(8, 0);
        assert!((0..600).all(|t| sched.maybe_sketch(t as f64, &target_at(1.0, 1.0), net.landmarks(), &h, &mut rng).is_none()));
    }

    #[test]
    fn sixty_second_schedule_gives_ten() {
        let net = crate::world::RoadNetwork::default_map();
        let run = |seed| {
            let mut sched = SketchSchedule::new(net.landmarks().len());
            let mut rng = stream(seed, 0);
            let h = HumanModel::default();
            (0..600)
                .filter_map(|t| sched.maybe_sketch(t as f64, &target_at(500.0, 500.0), net.landmarks(), &h, &mut rng))
                .collect::<Vec<_>>()
        };
        let a = run(9);
        assert_eq!(a.len(), 10);
        assert_eq!(a, run(9));
        assert_eq!(a[8].label, "area1");
        assert!(a[8].delta.is_none());
        for d in &a {
            let rec = SketchRecord::build(d.label.clone(), d.points.clone(), d.delta, &SketchConfig::default());
            assert!(rec.is_ok());
        }
    }
}
