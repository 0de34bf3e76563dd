//! Online Monte Carlo tree search over the inclusive movement x query action
//! space, runtime codebook growth, and predictive tree planning.
//!
//! The tree alternates history nodes and actions. At each history node the
//! action is chosen in two UCB stages: first the movement (with statistics
//! pooled over every query paired with it), then the query within that
//! movement. This keeps movement estimates sharp when the query set is large
//! while still searching the full product space.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::belief::ParticleSet;
use crate::geometry::{GeometryError, Point2};
use crate::math;
use crate::rng::{categorical, uniform};
use crate::sim_human::{truthful_yes, HumanSensorModel};
use crate::sketch::{Codebook, CodebookError, HumanAnswer, QueryAction, SketchConfig, SketchRecord};
use crate::world::{
    step_target, RoadNetwork, RobotDynamics, RobotObservation, RobotState, SensorModel, TargetDynamics,
    TargetState, TerrainGrid,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub gamma: f64,
    /// UCB exploration constant.
    pub exploration: f64,
    /// Maximum number of decisions simulated ahead.
    pub max_depth: usize,
    /// Allow queries below the root of the tree.
    pub deep_queries: bool,
    /// Simulations granted per second of action execution.
    pub sims_per_second: f64,
    /// Lower bound on the simulations of any fresh search.
    pub min_simulations: usize,
    /// Longest target sub-step inside one simulated action, seconds.
    pub substep: f64,
    /// Probability a rollout step heads for the simulated target instead of
    /// moving at random.
    pub rollout_greedy: f64,
    /// Number of most informative queries offered to the tree.
    pub query_candidates: usize,
    /// Expected information, in bits, a question must carry to be asked.
    pub min_information: f64,
    /// Belief particles used to score a question's information.
    pub information_samples: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            gamma: 0.95,
            exploration: 50.0,
            max_depth: 30,
            deep_queries: false,
            sims_per_second: 100.0,
            min_simulations: 200,
            substep: 5.0,
            rollout_greedy: 0.0,
            query_candidates: 1,
            min_information: 0.01,
            information_samples: 256,
        }
    }
}

impl PlannerConfig {
    /// Simulation count for an action lasting `seconds`.
    pub fn simulations_for(&self, seconds: f64) -> usize {
        let n = math::round(self.sims_per_second * seconds.max(0.0));
        (n as usize).max(self.min_simulations)
    }
}

/// Movement destination plus the question asked while moving.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionPair {
    pub movement: usize,
    pub query: QueryAction,
}

/// Precomputed legs from every node to each of its movement options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionTable {
    legs: Vec<Vec<Leg>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub target: usize,
    /// Polyline from the start node to the target node.
    pub points: Vec<Point2>,
    pub length: f64,
}

impl Leg {
    /// Position and travel heading after covering `dist` metres.
    pub fn at(&self, dist: f64) -> (Point2, Option<f64>) {
        let mut left = dist.max(0.0);
        for w in self.points.windows(2) {
            let d = w[1] - w[0];
            let seg = d.norm();
            if left <= seg || seg == 0.0 {
                let f = if seg > 0.0 { left / seg } else { 0.0 };
                return (w[0] + d * f.min(1.0), Some(d.angle()));
            }
            left -= seg;
        }
        let n = self.points.len();
        let heading = if n >= 2 { Some((self.points[n - 1] - self.points[n - 2]).angle()) } else { None };
        (self.points[n - 1], heading)
    }
}

impl MotionTable {
    pub fn new(net: &RoadNetwork) -> Self {
        let legs = (0..net.nodes().len())
            .map(|from| {
                net.movement_options(from)
                    .into_iter()
                    .map(|target| {
                        let route = net.route(from, target).expect("movement options are routable");
                        let mut points = vec![net.node(from)];
                        points.extend(route.iter().map(|n| net.node(*n)));
                        let length = net.route_length(from, &route);
                        Leg { target, points, length }
                    })
                    .collect()
            })
            .collect();
        MotionTable { legs }
    }

    pub fn options(&self, node: usize) -> &[Leg] {
        &self.legs[node]
    }

    pub fn leg(&self, from: usize, to: usize) -> Option<&Leg> {
        self.legs.get(from)?.iter().find(|l| l.target == to)
    }

    pub fn is_legal(&self, from: usize, to: usize) -> bool {
        self.leg(from, to).is_some()
    }
}

/// Everything the generative model reads; frozen for one search.
#[derive(Clone, Copy)]
pub struct Model<'a> {
    pub net: &'a RoadNetwork,
    pub motions: &'a MotionTable,
    pub grid: &'a TerrainGrid,
    pub codebook: &'a Codebook,
    pub target: &'a TargetDynamics,
    pub robot: &'a RobotDynamics,
    pub sensor: &'a SensorModel,
    pub human: HumanSensorModel,
    pub config: &'a PlannerConfig,
}

/// Simulated joint state: target plus the robot parked at a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    pub target: TargetState,
    pub node: usize,
    pub heading: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub next: SimState,
    pub observation: RobotObservation,
    pub answer: HumanAnswer,
    pub reward: f64,
    pub terminal: bool,
}

impl Step {
    fn key(&self) -> u8 {
        (self.observation.index() * 3 + self.answer.index()) as u8
    }
}

impl<'a> Model<'a> {
    fn duration(&self, leg: &Leg) -> f64 {
        if leg.length > 0.0 {
            leg.length / self.robot.speed
        } else {
            self.robot.hover_s
        }
    }

    /// Moves the target along while the robot flies `leg`. Returns the state
    /// at arrival and the probability the target was captured on the way
    /// (excluding the arrival reading). With `sample_capture` the capture is
    /// sampled instead and the walk stops at the first capture.
    fn traverse<R: RngCore + ?Sized>(
        &self,
        state: &SimState,
        leg: &Leg,
        rng: &mut R,
        sample_capture: bool,
    ) -> (SimState, f64, bool) {
        let duration = self.duration(leg);
        let steps = (libm::ceil(duration / self.config.substep) as usize).max(1);
        let dt = duration / steps as f64;
        let mut target = state.target;
        let mut heading = state.heading;
        let mut escape = 1.0;
        for k in 1..=steps {
            target = step_target(&target, dt, self.target, self.net, self.grid, rng);
            let travelled = if leg.length > 0.0 { leg.length * k as f64 / steps as f64 } else { 0.0 };
            let (pos, h) = leg.at(travelled);
            if let Some(h) = h {
                heading = h;
            }
            if k == steps {
                break;
            }
            let p = self.sensor.likelihood(pos, heading, target.position)[RobotObservation::Captured.index()];
            if p > 0.0 && pos.distance(target.position) <= self.sensor.capture_radius {
                if sample_capture {
                    if uniform(rng) < p {
                        let next = SimState { target, node: leg.target, heading };
                        return (next, 1.0, true);
                    }
                } else {
                    escape *= 1.0 - p;
                }
            }
        }
        (SimState { target, node: leg.target, heading }, 1.0 - escape, false)
    }

    /// One draw of the generative model `(s', o, r) ~ G(s, a)`.
    pub fn generate<R: RngCore + ?Sized>(&self, state: &SimState, leg: &Leg, query: QueryAction, rng: &mut R) -> Step {
        let (next, _, captured) = self.traverse(state, leg, rng, true);
        let robot_pos = self.net.node(leg.target);
        let observation = if captured {
            RobotObservation::Captured
        } else {
            let lik = self.sensor.likelihood(robot_pos, next.heading, next.target.position);
            RobotObservation::from_index(categorical(rng, &lik))
        };
        let terminal = observation == RobotObservation::Captured
            && robot_pos.distance(next.target.position) <= self.sensor.capture_radius
            || captured;
        let answer = match query {
            QueryAction::Null => HumanAnswer::Null,
            q => {
                let mut scratch = Vec::new();
                // The human answers about the target as it is when asked.
                let p = truthful_yes(q, &state.target, self.codebook, &mut scratch).unwrap_or(0.0);
                self.human.sample(p, rng)
            }
        };
        // Capture is credited on the capture event, which also ends the run.
        let r = if terminal {
            100.0
        } else if query.is_null() {
            0.0
        } else {
            -1.0
        };
        Step { next, observation, answer, reward: r, terminal }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanError {
    EmptyBelief,
    UnknownNode(usize),
}

impl fmt::Display for PlanError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanError::EmptyBelief => f.write_str("belief holds no particles"),
            PlanError::UnknownNode(n) => write!(f, "robot node {n} is not on the map"),
        }
    }
}

impl core::error::Error for PlanError {}

/// Wall-clock source for time-bounded searches.
pub trait Clock {
    fn now(&self) -> f64;
}

#[derive(Clone, Copy)]
pub enum Budget<'a> {
    Simulations(usize),
    /// Run until `seconds` of `clock` time have passed (at least one sim).
    Time { clock: &'a dyn Clock, seconds: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootStat {
    pub action: ActionPair,
    pub visits: u32,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub action: ActionPair,
    pub simulations: usize,
    /// Root statistics of the most visited pairs, best first.
    pub top: Vec<RootStat>,
    pub value: f64,
}

#[derive(Default)]
struct QueryStat {
    query: u32,
    visits: u32,
    value: f64,
    children: Vec<(u8, u32)>,
}

struct MoveStat {
    leg: u32,
    visits: u32,
    value: f64,
    queries: Vec<QueryStat>,
}

struct Node {
    visits: u32,
    moves: Vec<MoveStat>,
}

struct Tree<'m, 'a> {
    model: &'m Model<'a>,
    nodes: Vec<Node>,
    root_queries: Vec<u32>,
}

fn ucb(value: f64, visits: u32, parent: u32, c: f64) -> f64 {
    value + c * math::sqrt(math::ln(f64::from(parent.max(1))) / f64::from(visits))
}

impl<'m, 'a> Tree<'m, 'a> {
    fn new_node(&mut self, robot_node: usize, depth: usize) -> u32 {
        let queries: &[u32] = if depth == 0 || self.model.config.deep_queries { &self.root_queries } else { &[0] };
        let moves = (0..self.model.motions.options(robot_node).len())
            .map(|leg| MoveStat {
                leg: leg as u32,
                visits: 0,
                value: 0.0,
                queries: queries.iter().map(|q| QueryStat { query: *q, ..QueryStat::default() }).collect(),
            })
            .collect();
        self.nodes.push(Node { visits: 0, moves });
        (self.nodes.len() - 1) as u32
    }

    fn select<R: RngCore + ?Sized>(&self, node: u32, rng: &mut R) -> (usize, usize) {
        let c = self.model.config.exploration;
        let n = &self.nodes[node as usize];
        let m = pick_ucb(n.moves.iter().map(|m| (m.visits, m.value)), n.visits, c, rng);
        let mv = &n.moves[m];
        let q = pick_ucb(mv.queries.iter().map(|q| (q.visits, q.value)), mv.visits, c, rng);
        (m, q)
    }

    fn simulate<R: RngCore + ?Sized>(&mut self, node: u32, state: SimState, depth: usize, rng: &mut R) -> f64 {
        let cfg = self.model.config;
        if depth >= cfg.max_depth {
            return 0.0;
        }
        let (m, q) = self.select(node, rng);
        let leg_idx = self.nodes[node as usize].moves[m].leg as usize;
        let leg = &self.model.motions.options(state.node)[leg_idx];
        let query = self.model.codebook.queries()[self.nodes[node as usize].moves[m].queries[q].query as usize];
        let step = self.model.generate(&state, leg, query, rng);
        let ret = if step.terminal {
            step.reward
        } else {
            let key = step.key();
            let existing = self.nodes[node as usize].moves[m].queries[q]
                .children
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, c)| *c);
            match existing {
                Some(child) => step.reward + cfg.gamma * self.simulate(child, step.next, depth + 1, rng),
                None => {
                    let child = self.new_node(step.next.node, depth + 1);
                    self.nodes[node as usize].moves[m].queries[q].children.push((key, child));
                    step.reward + cfg.gamma * rollout(self.model, step.next, depth + 1, rng)
                }
            }
        };
        let n = &mut self.nodes[node as usize];
        n.visits += 1;
        let mv = &mut n.moves[m];
        mv.visits += 1;
        mv.value += (ret - mv.value) / f64::from(mv.visits);
        let qs = &mut mv.queries[q];
        qs.visits += 1;
        qs.value += (ret - qs.value) / f64::from(qs.visits);
        ret
    }
}

/// Index maximising UCB; unvisited entries first, chosen uniformly.
fn pick_ucb<R: RngCore + ?Sized>(
    stats: impl Iterator<Item = (u32, f64)> + Clone,
    parent: u32,
    c: f64,
    rng: &mut R,
) -> usize {
    let unvisited = stats.clone().filter(|(v, _)| *v == 0).count();
    if unvisited > 0 {
        let pick = rng.random_range(0..unvisited);
        return stats.enumerate().filter(|(_, (v, _))| *v == 0).nth(pick).map(|(i, _)| i).unwrap_or(0);
    }
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, (v, q)) in stats.enumerate() {
        let s = ucb(q, v, parent, c);
        if s > best_score {
            best_score = s;
            best = i;
        }
    }
    best
}

/// Uniform random movement with no queries until the depth cap or capture.
pub fn rollout<R: RngCore + ?Sized>(model: &Model<'_>, mut state: SimState, depth: usize, rng: &mut R) -> f64 {
    let mut total = 0.0;
    let mut discount = 1.0;
    for _ in depth..model.config.max_depth {
        let options = model.motions.options(state.node);
        let leg = if model.config.rollout_greedy > 0.0 && uniform(rng) < model.config.rollout_greedy {
            let goal = state.target.position;
            options
                .iter()
                .min_by(|a, b| {
                    let da = model.net.node(a.target).distance(goal);
                    let db = model.net.node(b.target).distance(goal);
                    da.total_cmp(&db)
                })
                .unwrap_or(&options[0])
        } else {
            &options[rng.random_range(0..options.len())]
        };
        let step = model.generate(&state, leg, QueryAction::Null, rng);
        total += discount * step.reward;
        if step.terminal {
            break;
        }
        discount *= model.config.gamma;
        state = step.next;
    }
    total
}

fn entropy_bits(p: &[f64]) -> f64 {
    p.iter().filter(|x| **x > 0.0).map(|x| -x * math::log2(*x)).sum()
}

/// Mutual information, in bits, between the modelled human's answer to
/// `query` and the target state under `belief`.
pub fn query_information(belief: &ParticleSet<TargetState>, query: QueryAction, model: &Model<'_>) -> f64 {
    if query.is_null() || belief.is_empty() {
        return 0.0;
    }
    let step = (belief.len() / model.config.information_samples.max(1)).max(1);
    let mut scratch = Vec::new();
    let mut marginal = [0.0; 3];
    let mut conditional = 0.0;
    let mut total = 0.0;
    for (state, w) in belief.iter().step_by(step) {
        let Some(p) = truthful_yes(query, state, model.codebook, &mut scratch) else { return 0.0 };
        let lik = HumanAnswer::ALL.map(|a| model.human.likelihood(a, p));
        for (m, l) in marginal.iter_mut().zip(lik) {
            *m += w * l;
        }
        conditional += w * entropy_bits(&lik);
        total += w;
    }
    if total <= 0.0 {
        return 0.0;
    }
    let marginal = marginal.map(|m| m / total);
    (entropy_bits(&marginal) - conditional / total).max(0.0)
}

/// Codebook indices of the questions offered at the root: the most
/// informative ones above the threshold, or just `Null` when none qualify.
pub fn candidate_queries(belief: &ParticleSet<TargetState>, model: &Model<'_>) -> Vec<usize> {
    let mut scored: Vec<(usize, f64)> = model
        .codebook
        .queries()
        .iter()
        .enumerate()
        .filter(|(_, q)| !q.is_null())
        .map(|(i, q)| (i, query_information(belief, *q, model)))
        .filter(|(_, info)| *info >= model.config.min_information)
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(model.config.query_candidates);
    let null = model.codebook.queries().iter().position(|q| q.is_null()).unwrap_or(0);
    if scored.is_empty() {
        alloc::vec![null]
    } else {
        scored.into_iter().map(|(i, _)| i).collect()
    }
}

/// POMCP search from a weighted particle belief with the robot at `robot`.
pub fn search<R: RngCore + ?Sized>(
    belief: &ParticleSet<TargetState>,
    robot: &RobotState,
    model: &Model<'_>,
    budget: Budget<'_>,
    rng: &mut R,
) -> Result<SearchResult, PlanError> {
    if belief.is_empty() {
        return Err(PlanError::EmptyBelief);
    }
    if robot.node >= model.net.nodes().len() {
        return Err(PlanError::UnknownNode(robot.node));
    }
    let root_queries = candidate_queries(belief, model)
        .into_iter()
        .map(|q| q as u32)
        .collect::<Vec<_>>();
    let mut tree = Tree { model, nodes: Vec::new(), root_queries };
    let root = tree.new_node(robot.node, 0);
    let start = match budget {
        Budget::Time { clock, .. } => clock.now(),
        Budget::Simulations(_) => 0.0,
    };
    let mut sims = 0usize;
    loop {
        match budget {
            Budget::Simulations(n) if sims >= n => break,
            Budget::Time { clock, seconds } if sims > 0 && sims % 16 == 0 && clock.now() - start >= seconds => break,
            _ => {}
        }
        let target = belief.states()[belief.sample_index(rng)];
        let state = SimState { target, node: robot.node, heading: robot.heading };
        tree.simulate(root, state, 0, rng);
        sims += 1;
    }
    let node = &tree.nodes[root as usize];
    let options = model.motions.options(robot.node);
    let queries = model.codebook.queries();
    let best_move = (0..node.moves.len())
        .filter(|m| node.moves[*m].visits > 0)
        .max_by(|a, b| {
            let (x, y) = (&node.moves[*a], &node.moves[*b]);
            x.value.total_cmp(&y.value).then(x.visits.cmp(&y.visits)).then(b.cmp(a))
        })
        .unwrap_or(0);
    let mv = &node.moves[best_move];
    let best_query = (0..mv.queries.len())
        .filter(|q| mv.queries[*q].visits > 0)
        .max_by(|a, b| {
            let (x, y) = (&mv.queries[*a], &mv.queries[*b]);
            x.value.total_cmp(&y.value).then(x.visits.cmp(&y.visits)).then(b.cmp(a))
        })
        .unwrap_or(0);
    let action = ActionPair {
        movement: options[mv.leg as usize].target,
        query: queries[mv.queries[best_query].query as usize],
    };
    let mut top: Vec<RootStat> = node
        .moves
        .iter()
        .flat_map(|m| {
            m.queries.iter().filter(|q| q.visits > 0).map(move |q| RootStat {
                action: ActionPair { movement: options[m.leg as usize].target, query: queries[q.query as usize] },
                visits: q.visits,
                value: q.value,
            })
        })
        .collect();
    top.sort_by(|a, b| b.visits.cmp(&a.visits).then(b.value.total_cmp(&a.value)));
    top.truncate(5);
    Ok(SearchResult { action, simulations: sims, top, value: mv.value })
}

/// Arrival-time particles for an action, with each particle's probability of
/// producing each robot observation by the end of the action.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub particles: ParticleSet<TargetState>,
    pub likelihoods: Vec<[f64; 3]>,
    pub distribution: [f64; 3],
    pub arrival: RobotState,
    pub duration: f64,
}

/// Pushes every particle through the action and mixes the per-particle
/// observation likelihoods: `p(o | b, a) = sum_s w_s p(o | s, a)`.
pub fn project<R: RngCore + ?Sized>(
    belief: &ParticleSet<TargetState>,
    robot: &RobotState,
    movement: usize,
    model: &Model<'_>,
    rng: &mut R,
) -> Option<Projection> {
    let leg = model.motions.leg(robot.node, movement)?;
    let mut particles = belief.clone();
    let mut likelihoods = Vec::with_capacity(belief.len());
    let mut heading = robot.heading;
    let robot_pos = model.net.node(movement);
    particles.map_states(|s| {
        let start = SimState { target: *s, node: robot.node, heading: robot.heading };
        let (next, p_path, _) = model.traverse(&start, leg, rng, false);
        heading = next.heading;
        let arrive = model.sensor.likelihood(robot_pos, next.heading, next.target.position);
        let keep = 1.0 - p_path;
        likelihoods.push([keep * arrive[0], keep * arrive[1], p_path + keep * arrive[2]]);
        next.target
    });
    let mut distribution = [0.0; 3];
    for (l, w) in likelihoods.iter().zip(belief.weights()) {
        for k in 0..3 {
            distribution[k] += w * l[k];
        }
    }
    let total: f64 = distribution.iter().sum();
    for d in &mut distribution {
        *d /= total;
    }
    let arrival = RobotState { position: robot_pos, heading, node: movement };
    Some(Projection { particles, likelihoods, distribution, arrival, duration: model.duration(leg) })
}

/// `p(o | b, a)` over `[None, Detected, Captured]`.
pub fn observation_distribution<R: RngCore + ?Sized>(
    belief: &ParticleSet<TargetState>,
    robot: &RobotState,
    action: &ActionPair,
    model: &Model<'_>,
    rng: &mut R,
) -> Option<[f64; 3]> {
    project(belief, robot, action.movement, model, rng).map(|p| p.distribution)
}

/// Splits `total` simulations proportionally to `probs` (largest remainder).
pub fn allocate_budget(probs: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = probs.iter().filter(|p| **p > 0.0).sum();
    if !(sum > 0.0) {
        return vec![0; probs.len()];
    }
    let exact: Vec<f64> = probs.iter().map(|p| p.max(0.0) / sum * total as f64).collect();
    let mut out: Vec<usize> = exact.iter().map(|e| math::floor(*e) as usize).collect();
    let mut left = total - out.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|a, b| (exact[*b] - out[*b] as f64).total_cmp(&(exact[*a] - out[*a] as f64)).then(a.cmp(b)));
    for i in order {
        if left == 0 {
            break;
        }
        if probs[i] > 0.0 {
            out[i] += 1;
            left -= 1;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanningMode {
    /// One search per possible robot observation, conditioned on it.
    Predictive,
    /// One search on the dynamics-only prediction, ignoring the observation.
    Blind,
}

/// Plans prepared while an action executes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedPlan {
    pub mode: PlanningMode,
    pub distribution: [f64; 3],
    pub budgets: [usize; 3],
    /// Per observation for predictive plans; index 0 holds the blind plan.
    pub actions: [Option<ActionPair>; 3],
    pub simulations: usize,
}

impl PreparedPlan {
    pub fn action_for(&self, obs: RobotObservation) -> Option<ActionPair> {
        match self.mode {
            PlanningMode::Predictive => self.actions[obs.index()],
            PlanningMode::Blind => self.actions[0],
        }
    }
}

/// Plans the next decision during execution of `movement`, giving each
/// observation branch a share of `total` simulations proportional to its
/// predicted probability.
pub fn predictive_plan<R: RngCore + ?Sized>(
    belief: &ParticleSet<TargetState>,
    robot: &RobotState,
    movement: usize,
    model: &Model<'_>,
    mode: PlanningMode,
    total: usize,
    rng: &mut R,
) -> Option<PreparedPlan> {
    let proj = project(belief, robot, movement, model, rng)?;
    let mut actions = [None; 3];
    let mut simulations = 0;
    let budgets: [usize; 3] = match mode {
        PlanningMode::Blind => {
            let r = search(&proj.particles, &proj.arrival, model, Budget::Simulations(total), rng).ok()?;
            actions[0] = Some(r.action);
            simulations += r.simulations;
            [total, 0, 0]
        }
        PlanningMode::Predictive => {
            let split = allocate_budget(&proj.distribution, total);
            for o in RobotObservation::ALL {
                let k = o.index();
                if split[k] == 0 {
                    continue;
                }
                let mut branch = proj.particles.clone();
                let mut idx = 0;
                let conditioned = branch.reweight(|_| {
                    let l = proj.likelihoods[idx][k];
                    idx += 1;
                    l
                });
                if conditioned.is_err() {
                    continue;
                }
                branch.resample_if_needed(rng);
                if let Ok(r) = search(&branch, &proj.arrival, model, Budget::Simulations(split[k]), rng) {
                    actions[k] = Some(r.action);
                    simulations += r.simulations;
                }
            }
            [split[0], split[1], split[2]]
        }
    };
    Some(PreparedPlan { mode, distribution: proj.distribution, budgets, actions, simulations })
}

#[derive(Debug, Clone, PartialEq)]
pub enum RegisterError {
    Duplicate(CodebookError),
    Geometry(GeometryError),
}

impl fmt::Display for RegisterError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegisterError::Duplicate(e) => write!(f, "{e}"),
            RegisterError::Geometry(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for RegisterError {}

/// Compiles a raw sketch, adds its queries to the codebook and stamps its
/// terrain tag into the planning grid. Returns the new sketch index.
pub fn register_sketch(
    codebook: &mut Codebook,
    grid: &mut TerrainGrid,
    label: &str,
    points: Vec<Point2>,
    delta: Option<f64>,
    config: &SketchConfig,
) -> Result<usize, RegisterError> {
    if codebook.find(label).is_some() {
        return Err(RegisterError::Duplicate(CodebookError::DuplicateLabel(label.into())));
    }
    if let Some(d) = delta {
        if !(d > 0.0) {
            return Err(RegisterError::Geometry(GeometryError::DegenerateInput));
        }
    }
    let record = SketchRecord::build(label, points, delta, config).map_err(RegisterError::Geometry)?;
    grid.apply_sketch(&record.polygon, record.delta);
    codebook.register(record).map_err(RegisterError::Duplicate)
}
