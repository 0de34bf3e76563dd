//! Bootstrap particle filter over the joint target position and mode.
//!
//! [`ParticleSet`] holds the generic weighting/resampling machinery so the
//! same code can be checked against an exact grid Bayes filter; [`Belief`]
//! specialises it to [`TargetState`] with the robot sensor, human answers and
//! volunteered statements.

use alloc::vec::Vec;
use core::f64::consts::TAU;
use core::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::autolabel::{self, ZeroLikelihood};
use crate::geometry::Point2;
use crate::rng::uniform;
use crate::sim_human::{truthful_yes, HumanSensorModel};
use crate::sketch::{Codebook, CodebookError, HumanAnswer, QueryAction, Relation, Statement};
use crate::world::{
    step_target, Mode, RoadNetwork, RobotObservation, SensorModel, TargetDynamics, TargetState, TerrainGrid,
};

/// Weighted particles with normalised weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleSet<S> {
    states: Vec<S>,
    weights: Vec<f64>,
}

impl<S: Clone> ParticleSet<S> {
    /// Equal-weight set. Panics when `states` is empty.
    pub fn uniform(states: Vec<S>) -> Self {
        assert!(!states.is_empty(), "a particle set needs at least one particle");
        let w = 1.0 / states.len() as f64;
        let weights = alloc::vec![w; states.len()];
        ParticleSet { states, weights }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[S] {
        &self.states
    }

    pub fn states_mut(&mut self) -> &mut [S] {
        &mut self.states
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&S, f64)> {
        self.states.iter().zip(self.weights.iter().copied())
    }

    /// `1 / sum w^2` for normalised weights.
    pub fn effective_sample_size(&self) -> f64 {
        let sq: f64 = self.weights.iter().map(|w| w * w).sum();
        if sq > 0.0 {
            1.0 / sq
        } else {
            0.0
        }
    }

    /// Multiplies each weight by `likelihood(state)` and renormalises. On
    /// total collapse the weights are left untouched and an error returned.
    pub fn reweight(&mut self, mut likelihood: impl FnMut(&S) -> f64) -> Result<(), ZeroLikelihood> {
        let mut next = Vec::with_capacity(self.weights.len());
        for (s, w) in self.states.iter().zip(&self.weights) {
            let l = likelihood(s);
            next.push(if l.is_finite() && l > 0.0 { w * l } else { 0.0 });
        }
        autolabel::normalize(&mut next)?;
        self.weights = next;
        Ok(())
    }

    /// Systematic resampling to the same particle count with equal weights.
    pub fn resample<R: RngCore + ?Sized>(&mut self, rng: &mut R) {
        let n = self.states.len();
        let step = 1.0 / n as f64;
        let mut u = uniform(rng) * step;
        let mut cumulative = self.weights[0];
        let mut i = 0;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            while u > cumulative && i + 1 < n {
                i += 1;
                cumulative += self.weights[i];
            }
            out.push(self.states[i].clone());
            u += step;
        }
        self.states = out;
        self.weights = alloc::vec![step; n];
    }

    /// Resamples when the effective sample size drops below half the count.
    pub fn resample_if_needed<R: RngCore + ?Sized>(&mut self, rng: &mut R) -> bool {
        if self.effective_sample_size() < 0.5 * self.states.len() as f64 {
            self.resample(rng);
            true
        } else {
            false
        }
    }

    /// Replaces every state through `f`, keeping weights.
    pub fn map_states(&mut self, mut f: impl FnMut(&S) -> S) {
        for s in &mut self.states {
            *s = f(s);
        }
    }

    /// Index drawn proportionally to weight.
    pub fn sample_index<R: RngCore + ?Sized>(&self, rng: &mut R) -> usize {
        let mut u = uniform(rng);
        for (i, w) in self.weights.iter().enumerate() {
            if u < *w {
                return i;
            }
            u -= w;
        }
        self.weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
    }

    /// Deterministic, weight-proportional subsample of at most `max` states.
    pub fn downsample(&self, max: usize) -> Vec<S> {
        let n = self.states.len();
        if n <= max {
            return self.states.clone();
        }
        let step = 1.0 / max as f64;
        let mut out = Vec::with_capacity(max);
        let mut cumulative = self.weights[0];
        let mut i = 0;
        for k in 0..max {
            let u = (k as f64 + 0.5) * step;
            while u > cumulative && i + 1 < n {
                i += 1;
                cumulative += self.weights[i];
            }
            out.push(self.states[i].clone());
        }
        out
    }

    /// Weighted sum of an indicator.
    pub fn mass(&self, mut pred: impl FnMut(&S) -> bool) -> f64 {
        self.iter().filter(|(s, _)| pred(s)).map(|(_, w)| w).sum()
    }
}

/// What an update did besides reweighting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateOutcome {
    pub resampled: bool,
    /// Every weight vanished and the prior was redrawn.
    pub reinitialized: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BeliefError {
    UnknownReference(CodebookError),
}

impl fmt::Display for BeliefError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BeliefError::UnknownReference(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for BeliefError {}

/// Fraction of reinitialised particles placed on roads.
pub const REINIT_ON_ROAD: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    particles: ParticleSet<TargetState>,
}

impl Belief {
    pub fn from_particles(particles: ParticleSet<TargetState>) -> Self {
        Belief { particles }
    }

    /// Uniform over the road network, all on road.
    pub fn road_prior<R: RngCore + ?Sized>(net: &RoadNetwork, n: usize, rng: &mut R) -> Self {
        let states = (0..n.max(1)).map(|_| TargetState::on_road(net, net.sample_road_position(rng))).collect();
        Belief { particles: ParticleSet::uniform(states) }
    }

    /// Uniform over roads with `on_road` of the particles flagged on road and
    /// the rest off road with random headings.
    pub fn mixed_prior<R: RngCore + ?Sized>(net: &RoadNetwork, n: usize, on_road: f64, rng: &mut R) -> Self {
        let states = (0..n.max(1))
            .map(|_| {
                let t = TargetState::on_road(net, net.sample_road_position(rng));
                if uniform(rng) < on_road {
                    t
                } else {
                    TargetState::off_road(t.position, uniform(rng) * TAU)
                }
            })
            .collect();
        Belief { particles: ParticleSet::uniform(states) }
    }

    pub fn particles(&self) -> &ParticleSet<TargetState> {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Advances every particle through the shared target dynamics.
    pub fn predict<R: RngCore + ?Sized>(
        &mut self,
        dt: f64,
        dyn_: &TargetDynamics,
        net: &RoadNetwork,
        grid: &TerrainGrid,
        rng: &mut R,
    ) {
        if !(dt > 0.0) {
            return;
        }
        self.particles.map_states(|s| step_target(s, dt, dyn_, net, grid, rng));
    }

    fn reweight_or_reset<R: RngCore + ?Sized>(
        &mut self,
        net: &RoadNetwork,
        rng: &mut R,
        likelihood: impl FnMut(&TargetState) -> f64,
    ) -> UpdateOutcome {
        match self.particles.reweight(likelihood) {
            Ok(()) => UpdateOutcome { resampled: self.particles.resample_if_needed(rng), reinitialized: false },
            Err(ZeroLikelihood) => {
                log::warn!("belief collapsed; redrawing from the prior");
                *self = Belief::mixed_prior(net, self.len(), REINIT_ON_ROAD, rng);
                UpdateOutcome { resampled: false, reinitialized: true }
            }
        }
    }

    /// Fuses a robot observation and, optionally, a human answer to a query
    /// under the assumed human model.
    #[allow(clippy::too_many_arguments)]
    pub fn weight_and_resample<R: RngCore + ?Sized>(
        &mut self,
        obs: RobotObservation,
        robot_position: Point2,
        robot_heading: f64,
        sensor: &SensorModel,
        answer: Option<(QueryAction, HumanAnswer)>,
        codebook: &Codebook,
        human: &HumanSensorModel,
        net: &RoadNetwork,
        rng: &mut R,
    ) -> UpdateOutcome {
        let human_part = answer.filter(|(q, a)| !q.is_null() && *a != HumanAnswer::Null);
        let mut scratch = Vec::new();
        self.reweight_or_reset(net, rng, |s| {
            let mut l = sensor.likelihood(robot_position, robot_heading, s.position)[obs.index()];
            if let Some((q, a)) = human_part {
                if let Some(p) = truthful_yes(q, s, codebook, &mut scratch) {
                    l *= human.likelihood(a, p);
                }
            }
            l
        })
    }

    /// Fuses only a human answer.
    pub fn fuse_answer<R: RngCore + ?Sized>(
        &mut self,
        query: QueryAction,
        answer: HumanAnswer,
        codebook: &Codebook,
        human: &HumanSensorModel,
        net: &RoadNetwork,
        rng: &mut R,
    ) -> UpdateOutcome {
        if query.is_null() || answer == HumanAnswer::Null {
            return UpdateOutcome::default();
        }
        let mut scratch = Vec::new();
        self.reweight_or_reset(net, rng, |s| {
            truthful_yes(query, s, codebook, &mut scratch).map_or(1.0, |p| human.likelihood(answer, p))
        })
    }

    /// Fuses a volunteered statement; "is not" uses the complement.
    pub fn fuse_statement<R: RngCore + ?Sized>(
        &mut self,
        statement: &Statement,
        codebook: &Codebook,
        net: &RoadNetwork,
        rng: &mut R,
    ) -> Result<UpdateOutcome, BeliefError> {
        let sketch = codebook.resolve(&statement.label).map_err(BeliefError::UnknownReference)?;
        let mut scratch = Vec::new();
        let rel: Relation = statement.relation;
        Ok(self.reweight_or_reset(net, rng, |s| {
            let l = sketch.statement_likelihood(rel, s.position, &mut scratch);
            if statement.positive {
                l
            } else {
                (1.0 - l).max(0.0)
            }
        }))
    }

    /// Weighted probability of the given mode.
    pub fn mode_probability(&self, mode: Mode) -> f64 {
        self.particles.mass(|s| s.mode == mode).clamp(0.0, 1.0)
    }

    pub fn mean_position(&self) -> Point2 {
        let mut m = Point2::default();
        for (s, w) in self.particles.iter() {
            m = m + s.position * w;
        }
        m
    }

    /// Down-sampled particles for telemetry (at most `max`).
    pub fn snapshot(&self, max: usize) -> Vec<(Point2, Mode)> {
        self.particles.downsample(max).into_iter().map(|s| (s.position, s.mode)).collect()
    }

    pub fn sample_state<R: RngCore + ?Sized>(&self, rng: &mut R) -> TargetState {
        self.particles.states()[self.particles.sample_index(rng)]
    }
}
