//! One operator session: an [`Episode`] driven tick by tick, with operator
//! frames translated into engine input and engine events into frames. The
//! type is transport-agnostic so it can be exercised without sockets.

use std::collections::VecDeque;
use std::path::PathBuf;

use sketchsearch_core::episode::{Episode, EpisodeConfig, EpisodeError, EpisodeLog, HumanInput, LogEvent, StepEvent};
use sketchsearch_core::sim_human::InteractionMode;
use sketchsearch_core::sketch::{HumanAnswer, QueryAction, Relation, Statement};
use sketchsearch_core::world::{Mode, RoadNetwork};

use super::protocol::{point, wire, ClientMessage, ServerMessage, WireGraph, WirePoint, WirePose};
use crate::logio::save_log;

/// Seconds a query stays open when the configuration leaves it unbounded.
pub const DEFAULT_QUERY_TIMEOUT: f64 = 15.0;
/// Upper bound on belief points per telemetry frame.
pub const MAX_BELIEF_POINTS: usize = 500;

#[derive(Debug, Clone)]
pub struct SessionOptions {
    pub mode: InteractionMode,
    /// Belief points per telemetry frame, capped at [`MAX_BELIEF_POINTS`].
    pub belief_points: usize,
    /// Robot positions kept in the telemetry trail.
    pub path_history: usize,
    /// Advertised in the welcome frame; the transport sends the heartbeats.
    pub heartbeat_seconds: f64,
    /// Where the transcript is written when the episode ends.
    pub transcript_dir: Option<PathBuf>,
}

impl Default for SessionOptions {
    fn default() -> Self {
        SessionOptions {
            mode: InteractionMode::Active,
            belief_points: MAX_BELIEF_POINTS,
            path_history: 300,
            heartbeat_seconds: 5.0,
            transcript_dir: None,
        }
    }
}

pub struct Session {
    id: u64,
    episode: Episode,
    opts: SessionOptions,
    graph: WireGraph,
    connected: bool,
    tick: u64,
    path: VecDeque<WirePoint>,
    glimpses: Vec<WirePoint>,
    events_seen: usize,
    expiry_noticed: Option<u64>,
    ended: bool,
    transcript: Option<PathBuf>,
}

impl Session {
    /// Passive sessions never ask: the engine is built without query
    /// relations, so its only query is the null query.
    pub fn new(id: u64, mut cfg: EpisodeConfig, net: RoadNetwork, mut opts: SessionOptions) -> Result<Self, EpisodeError> {
        if !cfg.query_timeout.is_finite() {
            cfg.query_timeout = DEFAULT_QUERY_TIMEOUT;
        }
        if !opts.mode.answers_queries() {
            cfg.query_relations.clear();
            cfg.mode_queries = false;
        }
        opts.belief_points = opts.belief_points.min(MAX_BELIEF_POINTS);
        let graph = WireGraph::from(&net);
        let episode = Episode::new(cfg, net)?;
        let mut s = Session {
            id,
            episode,
            opts,
            graph,
            connected: true,
            tick: 0,
            path: VecDeque::new(),
            glimpses: Vec::new(),
            events_seen: 0,
            expiry_noticed: None,
            ended: false,
            transcript: None,
        };
        s.record_position();
        Ok(s)
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn episode(&self) -> &Episode {
        &self.episode
    }

    pub fn is_connected(&self) -> bool {
        self.connected
    }

    pub fn is_finished(&self) -> bool {
        self.episode.is_finished()
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn transcript_path(&self) -> Option<&PathBuf> {
        self.transcript.as_ref()
    }

    pub fn log(&self) -> EpisodeLog {
        EpisodeLog { events: self.episode.events().to_vec() }
    }

    pub fn welcome(&self) -> ServerMessage {
        let cfg = self.episode.config();
        ServerMessage::Welcome {
            session: self.id,
            mode: self.opts.mode.into(),
            t_max: cfg.t_max,
            tick_seconds: cfg.dt,
            heartbeat_seconds: self.opts.heartbeat_seconds,
            relations: self.episode.codebook().relations().iter().map(|r| r.to_string()).collect(),
            graph: self.graph.clone(),
        }
    }

    /// Decodes and handles one text frame; protocol errors become error frames.
    pub fn handle_text(&mut self, text: &str) -> Vec<ServerMessage> {
        match super::protocol::decode_client(text) {
            Ok(msg) => self.handle(msg),
            Err(e) => vec![error(e.to_string())],
        }
    }

    pub fn handle(&mut self, msg: ClientMessage) -> Vec<ServerMessage> {
        if matches!(msg, ClientMessage::Ping) {
            return vec![ServerMessage::Pong];
        }
        if self.is_finished() {
            return vec![error("session has ended".into())];
        }
        match msg {
            ClientMessage::Ping => unreachable!(),
            ClientMessage::Sketch { label, delta, points } => {
                let input = HumanInput::Sketch { label, points: points.into_iter().map(point).collect(), delta };
                match self.episode.apply(input) {
                    Ok(Some(ack)) => vec![ServerMessage::Ack {
                        label: ack.label,
                        polygon: ack.polygon.into_iter().map(wire).collect(),
                        query_count: ack.query_count,
                    }],
                    Ok(None) => Vec::new(),
                    Err(e) => vec![error(format!("sketch rejected: {e}"))],
                }
            }
            ClientMessage::Statement { positive, relation, label } => {
                if !self.opts.mode.volunteers() {
                    return vec![error("statements are not accepted in active mode".into())];
                }
                let Ok(relation) = relation.parse::<Relation>() else {
                    return vec![error(format!("unknown relation '{relation}'"))];
                };
                let st = Statement { positive, relation, label };
                let text = st.to_string();
                match self.episode.apply(HumanInput::Statement(st)) {
                    Ok(_) => vec![ServerMessage::Notice { message: format!("statement accepted: {text}") }],
                    Err(e) => vec![error(format!("statement rejected: {e}"))],
                }
            }
            ClientMessage::Answer { id, answer } => {
                if !self.opts.mode.answers_queries() {
                    return vec![error("answers are not accepted in passive mode".into())];
                }
                match self.episode.apply(HumanInput::Answer { id, answer: answer.into() }) {
                    Ok(_) => Vec::new(),
                    Err(e) => vec![ServerMessage::Notice { message: format!("answer ignored: {e}") }],
                }
            }
        }
    }

    /// The operator went away: the open query and every later one resolve
    /// to the null answer, so the search carries on as a robot-only search.
    pub fn disconnect(&mut self) {
        self.connected = false;
        self.resolve_pending_as_null();
    }

    fn resolve_pending_as_null(&mut self) {
        if let Some(id) = self.episode.pending_query().map(|p| p.id) {
            let _ = self.episode.apply(HumanInput::Answer { id, answer: HumanAnswer::Null });
        }
    }

    /// Runs the engine for one tick and returns the frames it produced,
    /// ending with a telemetry frame (and the final frame once finished).
    pub fn advance(&mut self) -> Vec<ServerMessage> {
        let mut out = Vec::new();
        if self.ended {
            return out;
        }
        loop {
            match self.episode.step() {
                StepEvent::Decided(Some(q)) => {
                    if self.connected {
                        let (relation, label) = describe(q.query, &self.episode);
                        out.push(ServerMessage::Query { id: q.id, relation, label, text: q.text, deadline: q.deadline });
                    } else {
                        self.resolve_pending_as_null();
                    }
                }
                StepEvent::Decided(None) => {}
                StepEvent::Advanced { .. } | StepEvent::Finished => break,
            }
        }
        self.tick += 1;
        self.record_position();
        self.scan_events(&mut out);
        if let Some(p) = self.episode.pending_query() {
            if self.episode.clock() > p.deadline && self.expiry_noticed != Some(p.id) {
                self.expiry_noticed = Some(p.id);
                out.push(ServerMessage::Notice { message: format!("query {} expired unanswered", p.id) });
            }
        }
        out.push(self.telemetry());
        if self.is_finished() {
            out.push(self.finish());
        }
        out
    }

    fn record_position(&mut self) {
        self.path.push_back(wire(self.episode.robot().position));
        while self.path.len() > self.opts.path_history.max(1) {
            self.path.pop_front();
        }
    }

    fn scan_events(&mut self, out: &mut Vec<ServerMessage>) {
        for event in &self.episode.events()[self.events_seen..] {
            match event {
                LogEvent::Glimpse { position, .. } => self.glimpses.push(wire(*position)),
                LogEvent::QueryExpired { id, .. } if self.expiry_noticed != Some(*id) => {
                    out.push(ServerMessage::Notice { message: format!("query {id} expired unanswered") });
                }
                _ => {}
            }
        }
        self.events_seen = self.episode.events().len();
    }

    pub fn telemetry(&mut self) -> ServerMessage {
        let ep = &self.episode;
        let robot = ep.robot();
        ServerMessage::Telemetry {
            tick: self.tick,
            t: ep.clock(),
            robot: WirePose { x: robot.position.x, y: robot.position.y, heading: robot.heading, node: robot.node },
            path: self.path.iter().copied().collect(),
            belief: ep.belief().snapshot(self.opts.belief_points).into_iter().map(|(p, _)| wire(p)).collect(),
            off_road: ep.belief().mode_probability(Mode::OffRoad),
            graph: self.graph.clone(),
            glimpses: std::mem::take(&mut self.glimpses),
            score: ep.score(),
            query_count: ep.codebook().queries().len(),
            sketches: ep.codebook().sketches().iter().map(|s| s.label.clone()).collect(),
            pending_query: ep.pending_query().map(|p| p.id),
        }
    }

    fn finish(&mut self) -> ServerMessage {
        self.ended = true;
        if let Some(dir) = &self.opts.transcript_dir {
            let path = dir.join(format!("session-{:04}.jsonl", self.id));
            match std::fs::create_dir_all(dir).map_err(Into::into).and_then(|_| save_log(&self.log(), &path)) {
                Ok(()) => self.transcript = Some(path),
                Err(e) => log::error!("session {}: could not save transcript: {e}", self.id),
            }
        }
        ServerMessage::Ended {
            outcome: self.episode.outcome().cloned().expect("finished episodes have an outcome"),
            transcript: self.transcript.as_ref().map(|p| p.display().to_string()),
        }
    }
}

fn error(message: String) -> ServerMessage {
    ServerMessage::Error { message }
}

fn describe(q: QueryAction, ep: &Episode) -> (String, String) {
    match q {
        QueryAction::Null => ("none".into(), String::new()),
        QueryAction::Sketch { relation, sketch } => {
            (relation.to_string(), ep.codebook().sketches().get(sketch).map(|s| s.label.clone()).unwrap_or_default())
        }
        QueryAction::Mode(m) => ("mode".into(), format!("{m:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::service::protocol::{decode_server, encode_client, WireAnswer};
    use sketchsearch_core::episode::replay;
    use sketchsearch_core::Point2;

    fn cfg() -> EpisodeConfig {
        let mut c = EpisodeConfig { seed: 11, particles: 400, t_max: 90.0, ..EpisodeConfig::default() };
        c.planner.sims_per_second = 5.0;
        c.planner.min_simulations = 30;
        c.planner.max_depth = 6;
        c
    }

    fn circle(c: Point2, r: f64, n: usize) -> Vec<WirePoint> {
        (0..n)
            .map(|i| {
                let a = i as f64 / n as f64 * std::f64::consts::TAU;
                [c.x + r * a.cos(), c.y + r * a.sin()]
            })
            .collect()
    }

    fn session(mode: InteractionMode) -> Session {
        let opts = SessionOptions { mode, ..SessionOptions::default() };
        Session::new(1, cfg(), RoadNetwork::default_map(), opts).unwrap()
    }

    fn sketch_msg(label: &str) -> ClientMessage {
        ClientMessage::Sketch { label: label.into(), delta: None, points: circle(Point2::new(500.0, 500.0), 90.0, 60) }
    }

    #[test]
    fn sketch_is_acknowledged_with_polygon_and_new_queries() {
        let mut s = session(InteractionMode::Active);
        let out = s.handle(sketch_msg("area1"));
        let [ServerMessage::Ack { label, polygon, query_count }] = out.as_slice() else { panic!("{out:?}") };
        assert_eq!(label, "area1");
        assert!(polygon.len() >= 3);
        assert_eq!(*query_count, 1 + 5);
        let dup = s.handle(sketch_msg("area1"));
        assert!(matches!(dup.as_slice(), [ServerMessage::Error { .. }]));
    }

    #[test]
    fn passive_session_never_emits_queries_and_refuses_answers() {
        let mut s = session(InteractionMode::Passive);
        s.handle(sketch_msg("area1"));
        let mut frames = Vec::new();
        for _ in 0..60 {
            frames.extend(s.advance());
        }
        assert!(!frames.iter().any(|f| matches!(f, ServerMessage::Query { .. })));
        assert!(frames.iter().any(|f| matches!(f, ServerMessage::Telemetry { .. })));
        let out = s.handle(ClientMessage::Answer { id: 1, answer: WireAnswer::Yes });
        assert!(matches!(out.as_slice(), [ServerMessage::Error { .. }]));
        let out = s.handle(ClientMessage::Statement { positive: true, relation: "near".into(), label: "area1".into() });
        assert!(matches!(out.as_slice(), [ServerMessage::Notice { .. }]), "{out:?}");
    }

    #[test]
    fn active_session_refuses_statements() {
        let mut s = session(InteractionMode::Active);
        let out = s.handle(ClientMessage::Statement { positive: true, relation: "Near".into(), label: "Pond".into() });
        assert!(matches!(out.as_slice(), [ServerMessage::Error { .. }]));
        let out = s.handle_text(r#"{"v":1,"type":"bogus"}"#);
        assert!(matches!(out.as_slice(), [ServerMessage::Error { .. }]));
        assert_eq!(s.handle_text(r#"{"v":1,"type":"ping"}"#), vec![ServerMessage::Pong]);
    }

    fn first_query(s: &mut Session) -> (u64, f64) {
        for _ in 0..200 {
            for f in s.advance() {
                if let ServerMessage::Query { id, deadline, .. } = f {
                    return (id, deadline);
                }
            }
        }
        panic!("no query was asked");
    }

    #[test]
    fn late_answers_are_ignored_with_a_notice() {
        let mut s = session(InteractionMode::Active);
        s.handle(sketch_msg("area1"));
        let (id, deadline) = first_query(&mut s);
        assert!((deadline - s.episode().pending_query().unwrap().issued_at - DEFAULT_QUERY_TIMEOUT).abs() < 1e-9);
        let mut notices = Vec::new();
        while s.episode().clock() <= deadline && !s.is_finished() {
            notices.extend(s.advance().into_iter().filter(|f| matches!(f, ServerMessage::Notice { .. })));
        }
        assert!(!s.is_finished(), "episode outlived the query deadline");
        assert!(!notices.is_empty(), "expiry is announced");
        let out = s.handle(ClientMessage::Answer { id, answer: WireAnswer::Yes });
        assert!(matches!(out.as_slice(), [ServerMessage::Notice { .. }]), "{out:?}");
        assert_eq!(s.episode().outcome(), None);
        assert!(s.log().events.iter().any(|e| matches!(
            e,
            LogEvent::Input { result: sketchsearch_core::episode::InputResult::Rejected(_), .. }
        )));
    }

    #[test]
    fn disconnect_resolves_queries_to_null_and_keeps_searching() {
        let mut s = session(InteractionMode::Active);
        s.handle(sketch_msg("area1"));
        first_query(&mut s);
        s.disconnect();
        assert!(s.episode().pending_query().is_none());
        let mut frames = Vec::new();
        while !s.is_finished() {
            frames.extend(s.advance());
        }
        assert!(!frames.iter().any(|f| matches!(f, ServerMessage::Query { .. })));
        assert!(matches!(frames.last(), Some(ServerMessage::Ended { .. })));
        let outcome = s.episode().outcome().unwrap();
        assert_eq!(outcome.queries_answered, 0);
    }

    #[test]
    fn transcript_replays_exactly_and_is_saved() {
        let dir = tempfile::tempdir().unwrap();
        let opts = SessionOptions { transcript_dir: Some(dir.path().to_path_buf()), ..SessionOptions::default() };
        let mut s = Session::new(3, cfg(), RoadNetwork::default_map(), opts).unwrap();
        let mut answered = 0;
        for tick in 0.. {
            if tick == 5 {
                // Frames go through the text codec, as they would on the wire.
                s.handle_text(&encode_client(&sketch_msg("area1")));
            }
            let frames = s.advance();
            for f in &frames {
                let f = decode_server(&crate::service::protocol::encode_server(f)).unwrap();
                if let ServerMessage::Query { id, .. } = f {
                    let answer = if answered % 2 == 0 { WireAnswer::Yes } else { WireAnswer::DontKnow };
                    answered += 1;
                    s.handle(ClientMessage::Answer { id, answer });
                }
                if let ServerMessage::Telemetry { belief, .. } = f {
                    assert!(belief.len() <= MAX_BELIEF_POINTS);
                }
            }
            if s.is_finished() {
                break;
            }
        }
        assert!(answered > 0);
        let log = s.log();
        assert_eq!(replay(&log).unwrap(), log);
        let path = s.transcript_path().expect("transcript written");
        assert_eq!(crate::logio::load_log(path).unwrap(), log);
    }
}
