//! Tick-driven episode engine shared by batch simulation, replay and live
//! sessions, plus the simulated-human driver and the episode transcript.
//!
//! Each call to [`Episode::step`] either takes a decision (no simulated time
//! passes) or advances the world by one tick. External input — sketches,
//! statements and answers — enters through [`Episode::apply`], is fused
//! immediately and is recorded in the log at its arrival position, which is
//! what makes transcripts replayable.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::belief::{Belief, UpdateOutcome};
use crate::geometry::Point2;
use crate::planner::{
    predictive_plan, register_sketch, search, ActionPair, Budget, MotionTable, Model, PlannerConfig, PlanningMode,
    PreparedPlan, RootStat,
};
use crate::rng::{stream, SimRng};
use crate::sim_human::{
    answer_query, volunteer_statement, HumanModel, HumanSensorModel, PushSchedule, SketchDraft, SketchSchedule,
};
use crate::sketch::{Codebook, HumanAnswer, QueryAction, Relation, SketchConfig, Statement};
use crate::world::{
    step_robot, GlimpseSource, Mode, RoadNetwork, RobotDynamics, RobotMotion, RobotObservation, RobotState,
    SensorModel, TargetDynamics, TargetState, TerrainGrid, EPISODE_LIMIT_S,
};

pub const LOG_VERSION: u32 = 1;

const STREAM_WORLD: u64 = 1;
const STREAM_FILTER: u64 = 2;
const STREAM_PLANNER: u64 = 3;
const STREAM_HUMAN: u64 = 4;
const STREAM_GLIMPSE: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub seed: u64,
    pub t_max: f64,
    pub dt: f64,
    pub particles: usize,
    pub planner: PlannerConfig,
    pub planning: PlanningMode,
    /// Simulations for searches that cannot use a prepared plan.
    pub fresh_seconds: f64,
    /// Replace a prepared plan when human input arrived after it was made.
    pub replan_on_input: bool,
    pub sketch: SketchConfig,
    pub query_relations: Vec<Relation>,
    pub mode_queries: bool,
    pub target: TargetDynamics,
    pub robot: RobotDynamics,
    pub sensor: SensorModel,
    /// Human accuracy and availability assumed by filter and planner.
    pub assumed_human: HumanSensorModel,
    /// Seconds a query stays open.
    #[serde(with = "crate::math::extended_f64")]
    pub query_timeout: f64,
    pub robot_start: Option<usize>,
    #[serde(with = "crate::math::extended_f64")]
    pub glimpse_period: f64,
    pub glimpse_noise: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            seed: 0,
            t_max: EPISODE_LIMIT_S,
            dt: 1.0,
            particles: 10_000,
            planner: PlannerConfig::default(),
            planning: PlanningMode::Predictive,
            fresh_seconds: 10.0,
            replan_on_input: true,
            sketch: SketchConfig::default(),
            query_relations: Relation::QUERY_DEFAULT.to_vec(),
            mode_queries: false,
            target: TargetDynamics::default(),
            robot: RobotDynamics::default(),
            sensor: SensorModel::default(),
            assumed_human: HumanSensorModel { eta: 0.95, xi: 0.9 },
            query_timeout: f64::INFINITY,
            robot_start: None,
            glimpse_period: f64::INFINITY,
            glimpse_noise: 25.0,
        }
    }
}

/// An open question to the human.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingQuery {
    pub id: u64,
    pub query: QueryAction,
    pub text: String,
    pub issued_at: f64,
    #[serde(with = "crate::math::extended_f64")]
    pub deadline: f64,
}

/// Input from a (live or simulated) human.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HumanInput {
    Sketch { label: String, points: Vec<Point2>, delta: Option<f64> },
    Statement(Statement),
    Answer { id: u64, answer: HumanAnswer },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InputResult {
    Accepted,
    Rejected(String),
}

/// Where the executed action came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlanSource {
    /// Predictive branch for the observation received on arrival.
    Branch(RobotObservation),
    Blind,
    /// A search run at the decision point.
    Fresh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub captured: bool,
    pub time_to_capture: Option<f64>,
    pub end_time: f64,
    pub decisions: usize,
    pub queries_asked: usize,
    pub queries_answered: usize,
    pub sketches: usize,
    pub statements: usize,
    pub reinitializations: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LogEvent {
    Header { version: u32, config: EpisodeConfig, map: RoadNetwork },
    Start { robot: RobotState, target: TargetState },
    Decision { t: f64, action: ActionPair, source: PlanSource, simulations: usize, top: Vec<RootStat> },
    Plan { t: f64, distribution: [f64; 3], budgets: [usize; 3], simulations: usize },
    Query { t: f64, id: u64, query: QueryAction, text: String },
    QueryExpired { t: f64, id: u64 },
    Input { t: f64, input: HumanInput, result: InputResult },
    SketchRegistered { t: f64, label: String, polygon: Vec<Point2>, query_count: usize },
    Sensed { t: f64, observation: RobotObservation, robot: Point2 },
    Arrival { t: f64, node: usize, observation: RobotObservation },
    Glimpse { t: f64, position: Point2 },
    Reinitialized { t: f64 },
    End { t: f64, outcome: Outcome },
}

/// Full transcript of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub events: Vec<LogEvent>,
}

impl EpisodeLog {
    pub fn outcome(&self) -> Option<&Outcome> {
        self.events.iter().rev().find_map(|e| match e {
            LogEvent::End { outcome, .. } => Some(outcome),
            _ => None,
        })
    }

    pub fn header(&self) -> Option<(&EpisodeConfig, &RoadNetwork)> {
        match self.events.first() {
            Some(LogEvent::Header { config, map, .. }) => Some((config, map)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EpisodeError {
    BadStartNode(usize),
    NoParticles,
    NotReplayable(&'static str),
}

impl fmt::Display for EpisodeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpisodeError::BadStartNode(n) => write!(f, "robot start node {n} is not on the map"),
            EpisodeError::NoParticles => f.write_str("particle count must be positive"),
            EpisodeError::NotReplayable(m) => write!(f, "log cannot be replayed: {m}"),
        }
    }
}

impl core::error::Error for EpisodeError {}

/// What one call to [`Episode::step`] did.
#[derive(Debug, Clone, PartialEq)]
pub enum StepEvent {
    /// A new action started; carries the query put to the human, if any.
    Decided(Option<PendingQuery>),
    Advanced { observation: RobotObservation },
    Finished,
}

/// Acknowledgement of an accepted sketch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchAck {
    pub label: String,
    pub polygon: Vec<Point2>,
    pub query_count: usize,
}

/// Human-readable form of a query.
pub fn question_text(query: QueryAction, codebook: &Codebook) -> String {
    match query {
        QueryAction::Null => String::new(),
        QueryAction::Mode(Mode::OffRoad) => "Has the target gone off-road?".into(),
        QueryAction::Mode(Mode::OnRoad) => "Is the target on the road?".into(),
        QueryAction::Sketch { relation, sketch } => {
            let label = codebook.sketch(sketch).map_or("?", |s| s.label.as_str());
            match relation {
                Relation::Near => format!("Is the target near {label}?"),
                Relation::Inside => format!("Is the target inside {label}?"),
                Relation::Bearing(b) => format!("Is the target {} of {label}?", b.long_name()),
            }
        }
    }
}

pub struct Episode {
    cfg: EpisodeConfig,
    net: RoadNetwork,
    motions: MotionTable,
    true_grid: TerrainGrid,
    grid: TerrainGrid,
    codebook: Codebook,
    belief: Belief,
    target: TargetState,
    robot: RobotState,
    motion: Option<RobotMotion>,
    current: Option<ActionPair>,
    plan: Option<PreparedPlan>,
    plan_due: bool,
    dirty: bool,
    arrival: Option<RobotObservation>,
    pending: Option<PendingQuery>,
    next_query_id: u64,
    clock: f64,
    world_rng: SimRng,
    filter_rng: SimRng,
    planner_rng: SimRng,
    glimpse_rng: SimRng,
    glimpses: GlimpseSource,
    events: Vec<LogEvent>,
    outcome: Option<Outcome>,
    tally: Outcome,
}

impl Episode {
    pub fn new(cfg: EpisodeConfig, net: RoadNetwork) -> Result<Self, EpisodeError> {
        if cfg.particles == 0 {
            return Err(EpisodeError::NoParticles);
        }
        let start = match cfg.robot_start {
            Some(n) if n < net.nodes().len() => n,
            Some(n) => return Err(EpisodeError::BadStartNode(n)),
            None => net.nearest_node(Point2::new(0.5 * net.width(), 0.5 * net.height())),
        };
        let mut world_rng = stream(cfg.seed, STREAM_WORLD);
        let mut filter_rng = stream(cfg.seed, STREAM_FILTER);
        let mut true_grid = TerrainGrid::for_map(&net);
        for l in net.landmarks() {
            true_grid.apply_polygon(&l.footprint(), l.terrain);
        }
        let target = TargetState::on_road(&net, net.sample_road_position(&mut world_rng));
        let robot = RobotState::at_node(&net, start, 0.0);
        let belief = Belief::road_prior(&net, cfg.particles, &mut filter_rng);
        let events = alloc::vec![
            LogEvent::Header { version: LOG_VERSION, config: cfg.clone(), map: net.clone() },
            LogEvent::Start { robot, target },
        ];
        Ok(Episode {
            motions: MotionTable::new(&net),
            grid: TerrainGrid::for_map(&net),
            codebook: Codebook::new(cfg.query_relations.clone(), cfg.mode_queries),
            planner_rng: stream(cfg.seed, STREAM_PLANNER),
            glimpse_rng: stream(cfg.seed, STREAM_GLIMPSE),
            glimpses: GlimpseSource::new(cfg.glimpse_period, cfg.glimpse_noise),
            true_grid,
            belief,
            target,
            robot,
            motion: None,
            current: None,
            plan: None,
            plan_due: false,
            dirty: false,
            arrival: None,
            pending: None,
            next_query_id: 1,
            clock: 0.0,
            world_rng,
            filter_rng,
            events,
            outcome: None,
            tally: Outcome {
                captured: false,
                time_to_capture: None,
                end_time: 0.0,
                decisions: 0,
                queries_asked: 0,
                queries_answered: 0,
                sketches: 0,
                statements: 0,
                reinitializations: 0,
                score: 0.0,
            },
            cfg,
            net,
        })
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.cfg
    }

    pub fn net(&self) -> &RoadNetwork {
        &self.net
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn robot(&self) -> &RobotState {
        &self.robot
    }

    /// Ground truth; only simulated humans and metrics may look.
    pub fn truth(&self) -> &TargetState {
        &self.target
    }

    pub fn belief(&self) -> &Belief {
        &self.belief
    }

    pub fn codebook(&self) -> &Codebook {
        &self.codebook
    }

    pub fn terrain(&self) -> &TerrainGrid {
        &self.grid
    }

    pub fn pending_query(&self) -> Option<&PendingQuery> {
        self.pending.as_ref()
    }

    pub fn current_action(&self) -> Option<ActionPair> {
        self.current
    }

    pub fn events(&self) -> &[LogEvent] {
        &self.events
    }

    pub fn outcome(&self) -> Option<&Outcome> {
        self.outcome.as_ref()
    }

    pub fn is_finished(&self) -> bool {
        self.outcome.is_some()
    }

    pub fn score(&self) -> f64 {
        self.tally.score
    }

    pub fn into_log(self) -> EpisodeLog {
        EpisodeLog { events: self.events }
    }

    fn model(&self) -> Model<'_> {
        Model {
            net: &self.net,
            motions: &self.motions,
            grid: &self.grid,
            codebook: &self.codebook,
            target: &self.cfg.target,
            robot: &self.cfg.robot,
            sensor: &self.cfg.sensor,
            human: self.cfg.assumed_human,
            config: &self.cfg.planner,
        }
    }

    fn note_update(&mut self, out: UpdateOutcome) {
        if out.reinitialized {
            self.tally.reinitializations += 1;
            self.events.push(LogEvent::Reinitialized { t: self.clock });
        }
    }

    fn mark_dirty(&mut self) {
        if !self.plan_due {
            self.dirty = true;
        }
    }

    fn query_is_valid(&self, q: QueryAction) -> bool {
        match q {
            QueryAction::Null => true,
            QueryAction::Sketch { relation, sketch } => {
                sketch < self.codebook.sketches().len() && self.codebook.relations().contains(&relation)
            }
            QueryAction::Mode(_) => self.codebook.mode_queries(),
        }
    }

    fn is_legal(&self, a: &ActionPair) -> bool {
        self.motions.is_legal(self.robot.node, a.movement) && self.query_is_valid(a.query)
    }

    fn expire_pending(&mut self) {
        if let Some(p) = self.pending.take() {
            self.events.push(LogEvent::QueryExpired { t: self.clock, id: p.id });
        }
    }

    /// Applies one piece of human input and records it.
    pub fn apply(&mut self, input: HumanInput) -> Result<Option<SketchAck>, String> {
        let before = self.events.len();
        let res = match &input {
            HumanInput::Sketch { label, points, delta } => self.register(label, points.clone(), *delta).map(Some),
            HumanInput::Statement(st) => self.statement(st).map(|_| None),
            HumanInput::Answer { id, answer } => self.answer(*id, *answer).map(|_| None),
        };
        let result = match &res {
            Ok(_) => InputResult::Accepted,
            Err(e) => InputResult::Rejected(e.clone()),
        };
        // The input record precedes its consequences so replay can find it.
        let consequences = self.events.split_off(before);
        self.events.push(LogEvent::Input { t: self.clock, input, result });
        self.events.extend(consequences);
        res
    }

    fn register(&mut self, label: &str, points: Vec<Point2>, delta: Option<f64>) -> Result<SketchAck, String> {
        if self.is_finished() {
            return Err("episode has ended".into());
        }
        let idx = register_sketch(&mut self.codebook, &mut self.grid, label, points, delta, &self.cfg.sketch)
            .map_err(|e| e.to_string())?;
        self.tally.sketches += 1;
        self.mark_dirty();
        let rec = &self.codebook.sketches()[idx];
        let ack = SketchAck {
            label: rec.label.clone(),
            polygon: rec.polygon.vertices().to_vec(),
            query_count: self.codebook.queries().len(),
        };
        self.events.push(LogEvent::SketchRegistered {
            t: self.clock,
            label: ack.label.clone(),
            polygon: ack.polygon.clone(),
            query_count: ack.query_count,
        });
        Ok(ack)
    }

    fn statement(&mut self, st: &Statement) -> Result<(), String> {
        if self.is_finished() {
            return Err("episode has ended".into());
        }
        let out = self
            .belief
            .fuse_statement(st, &self.codebook, &self.net, &mut self.filter_rng)
            .map_err(|e| e.to_string())?;
        self.tally.statements += 1;
        self.mark_dirty();
        self.note_update(out);
        Ok(())
    }

    fn answer(&mut self, id: u64, answer: HumanAnswer) -> Result<(), String> {
        let Some(p) = self.pending.as_ref() else {
            return Err(format!("query {id} is not open"));
        };
        if p.id != id {
            return Err(format!("query {id} is not open"));
        }
        if self.clock > p.deadline {
            return Err(format!("query {id} expired"));
        }
        let q = p.query;
        self.pending = None;
        if answer != HumanAnswer::Null {
            self.tally.queries_answered += 1;
            let out = self.belief.fuse_answer(
                q,
                answer,
                &self.codebook,
                &self.cfg.assumed_human,
                &self.net,
                &mut self.filter_rng,
            );
            self.mark_dirty();
            self.note_update(out);
        }
        Ok(())
    }

    /// Takes a decision or advances one tick.
    pub fn step(&mut self) -> StepEvent {
        if self.is_finished() {
            return StepEvent::Finished;
        }
        if self.motion.is_none() {
            self.decide();
            return StepEvent::Decided(self.pending.clone());
        }
        if self.plan_due {
            self.prepare_plan();
        }
        self.advance()
    }

    fn fresh_search(&mut self) -> (ActionPair, usize, Vec<RootStat>) {
        let n = self.cfg.planner.simulations_for(self.cfg.fresh_seconds);
        let robot = self.robot;
        let mut rng = self.planner_rng.clone();
        let result = search(self.belief.particles(), &robot, &self.model(), Budget::Simulations(n), &mut rng);
        self.planner_rng = rng;
        match result {
            Ok(r) => (r.action, r.simulations, r.top),
            Err(_) => (ActionPair { movement: robot.node, query: QueryAction::Null }, 0, Vec::new()),
        }
    }

    fn decide(&mut self) {
        self.expire_pending();
        let prepared = match (self.plan.take(), self.arrival.take()) {
            (Some(plan), Some(obs)) if !(self.dirty && self.cfg.replan_on_input) => {
                let source = match plan.mode {
                    PlanningMode::Predictive => PlanSource::Branch(obs),
                    PlanningMode::Blind => PlanSource::Blind,
                };
                plan.action_for(obs).filter(|a| self.is_legal(a)).map(|a| (a, source))
            }
            _ => None,
        };
        let (action, source, simulations, top) = match prepared {
            Some((a, s)) => (a, s, 0, Vec::new()),
            None => {
                let (a, n, top) = self.fresh_search();
                (a, PlanSource::Fresh, n, top)
            }
        };
        self.dirty = false;
        let motion = RobotMotion::start(&self.robot, action.movement, &self.net, &self.cfg.robot, &mut self.world_rng)
            .expect("planner returns legal movements");
        self.motion = Some(motion);
        self.current = Some(action);
        self.tally.decisions += 1;
        self.events.push(LogEvent::Decision { t: self.clock, action, source, simulations, top });
        if !action.query.is_null() {
            let id = self.next_query_id;
            self.next_query_id += 1;
            let text = question_text(action.query, &self.codebook);
            self.tally.queries_asked += 1;
            self.tally.score -= 1.0;
            self.events.push(LogEvent::Query { t: self.clock, id, query: action.query, text: text.clone() });
            self.pending = Some(PendingQuery {
                id,
                query: action.query,
                text,
                issued_at: self.clock,
                deadline: self.clock + self.cfg.query_timeout,
            });
        }
        self.plan_due = true;
    }

    fn prepare_plan(&mut self) {
        self.plan_due = false;
        self.dirty = false;
        let Some(action) = self.current else { return };
        let leg_seconds = self
            .motions
            .leg(self.robot.node, action.movement)
            .map(|l| if l.length > 0.0 { l.length / self.cfg.robot.speed } else { self.cfg.robot.hover_s })
            .unwrap_or(self.cfg.fresh_seconds);
        let total = self.cfg.planner.simulations_for(leg_seconds);
        let robot = self.robot;
        let mut rng = self.planner_rng.clone();
        let plan =
            predictive_plan(self.belief.particles(), &robot, action.movement, &self.model(), self.cfg.planning, total, &mut rng);
        self.planner_rng = rng;
        if let Some(p) = &plan {
            self.events.push(LogEvent::Plan {
                t: self.clock,
                distribution: p.distribution,
                budgets: p.budgets,
                simulations: p.simulations,
            });
        }
        self.plan = plan;
    }

    fn finish(&mut self, captured: bool) {
        let mut outcome = self.tally.clone();
        outcome.captured = captured;
        outcome.time_to_capture = captured.then_some(self.clock);
        outcome.end_time = self.clock;
        if captured {
            outcome.score += 100.0;
        }
        self.tally.score = outcome.score;
        self.events.push(LogEvent::End { t: self.clock, outcome: outcome.clone() });
        self.outcome = Some(outcome);
    }

    fn advance(&mut self) -> StepEvent {
        let dt = self.cfg.dt;
        self.clock += dt;
        self.target = crate::world::step_target(
            &self.target,
            dt,
            &self.cfg.target,
            &self.net,
            &self.true_grid,
            &mut self.world_rng,
        );
        let motion = self.motion.as_mut().expect("advance runs during an action");
        self.robot = step_robot(&self.robot, motion, dt, &self.net);
        let done = motion.is_done();
        let observation = self.cfg.sensor.sense(&self.robot, &self.target, &mut self.world_rng);
        if observation != RobotObservation::None {
            self.events.push(LogEvent::Sensed { t: self.clock, observation, robot: self.robot.position });
        }
        if observation == RobotObservation::Captured
            && self.robot.position.distance(self.target.position) <= self.cfg.sensor.capture_radius
        {
            self.finish(true);
            return StepEvent::Finished;
        }
        self.belief.predict(dt, &self.cfg.target, &self.net, &self.grid, &mut self.filter_rng);
        let out = self.belief.weight_and_resample(
            observation,
            self.robot.position,
            self.robot.heading,
            &self.cfg.sensor,
            None,
            &self.codebook,
            &self.cfg.assumed_human,
            &self.net,
            &mut self.filter_rng,
        );
        self.note_update(out);
        if let Some(g) = self.glimpses.poll(self.clock, &self.target, &mut self.glimpse_rng) {
            self.events.push(LogEvent::Glimpse { t: self.clock, position: g });
        }
        if self.pending.as_ref().is_some_and(|p| self.clock > p.deadline) {
            self.expire_pending();
        }
        if done {
            self.motion = None;
            self.arrival = Some(observation);
            self.events.push(LogEvent::Arrival { t: self.clock, node: self.robot.node, observation });
        }
        if self.clock + 1e-9 >= self.cfg.t_max {
            self.finish(false);
            return StepEvent::Finished;
        }
        StepEvent::Advanced { observation }
    }
}

/// Scripted stand-in for a human collaborator.
pub struct SimulatedHuman {
    model: HumanModel,
    sketches: SketchSchedule,
    pushes: PushSchedule,
    rng: SimRng,
}

impl SimulatedHuman {
    pub fn new(model: HumanModel, landmarks: usize, seed: u64) -> Self {
        SimulatedHuman {
            sketches: SketchSchedule::new(landmarks),
            pushes: PushSchedule::new(model.push_period),
            rng: stream(seed, STREAM_HUMAN),
            model,
        }
    }

    pub fn model(&self) -> &HumanModel {
        &self.model
    }

    /// Input the human volunteers at the current time.
    pub fn poll(&mut self, ep: &Episode) -> Vec<HumanInput> {
        let mut out = Vec::new();
        let truth = ep.truth();
        if let Some(SketchDraft { label, points, delta }) =
            self.sketches.maybe_sketch(ep.clock(), truth, ep.net().landmarks(), &self.model, &mut self.rng)
        {
            out.push(HumanInput::Sketch { label, points, delta });
        }
        if self.model.mode.volunteers() && self.pushes.due(ep.clock(), self.model.push_period) {
            if let Some(st) = volunteer_statement(truth, ep.codebook(), &self.model, &mut self.rng) {
                out.push(HumanInput::Statement(st));
            }
        }
        out
    }

    /// Reply to a query, or silence for humans who do not take questions.
    pub fn answer(&mut self, q: &PendingQuery, ep: &Episode) -> HumanAnswer {
        if !self.model.mode.answers_queries() {
            return HumanAnswer::Null;
        }
        answer_query(ep.truth(), q.query, ep.codebook(), &self.model, &mut self.rng).unwrap_or(HumanAnswer::Null)
    }
}

/// Runs one episode to completion with an optional simulated human.
pub fn run_episode(cfg: EpisodeConfig, net: RoadNetwork, human: Option<HumanModel>) -> Result<EpisodeLog, EpisodeError> {
    let seed = cfg.seed;
    let mut ep = Episode::new(cfg, net)?;
    let mut sim = human.map(|h| SimulatedHuman::new(h, ep.net().landmarks().len(), seed));
    while !ep.is_finished() {
        if let Some(h) = sim.as_mut() {
            for input in h.poll(&ep) {
                let _ = ep.apply(input);
            }
        }
        if let StepEvent::Decided(Some(q)) = ep.step() {
            if let Some(h) = sim.as_mut() {
                let a = h.answer(&q, &ep);
                let _ = ep.apply(HumanInput::Answer { id: q.id, answer: a });
            }
        }
    }
    Ok(ep.into_log())
}

/// Re-executes a transcript, feeding recorded human input back at the same
/// positions. An intact log reproduces itself exactly.
pub fn replay(log: &EpisodeLog) -> Result<EpisodeLog, EpisodeError> {
    let (cfg, net) = log.header().ok_or(EpisodeError::NotReplayable("missing header"))?;
    let mut ep = Episode::new(cfg.clone(), net.clone())?;
    let limit = log.events.len() * 4 + 10_000;
    let mut guard = 0;
    while !ep.is_finished() {
        guard += 1;
        if guard > limit {
            return Err(EpisodeError::NotReplayable("transcript diverged"));
        }
        match log.events.get(ep.events().len()) {
            Some(LogEvent::Input { t, input, .. }) if ep.clock() + 1e-9 >= *t => {
                let _ = ep.apply(input.clone());
            }
            _ => {
                ep.step();
            }
        }
    }
    Ok(ep.into_log())
}
