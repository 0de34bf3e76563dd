//! Wire format of the session gateway. Every frame is one UTF-8 JSON object
//! carrying the protocol version `v` and a `type` tag; field names and types
//! are frozen per version (see `PROTOCOL.md`).

use serde::{Deserialize, Serialize};
use sketchsearch_core::episode::Outcome;
use sketchsearch_core::sim_human::InteractionMode;
use sketchsearch_core::sketch::HumanAnswer;
use sketchsearch_core::world::RoadNetwork;
use sketchsearch_core::Point2;
use thiserror::Error;

pub const PROTOCOL_VERSION: u32 = 1;

pub type WirePoint = [f64; 2];

pub fn wire(p: Point2) -> WirePoint {
    [p.x, p.y]
}

pub fn point(p: WirePoint) -> Point2 {
    Point2::new(p[0], p[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireMode {
    Active,
    Passive,
    Both,
}

impl From<InteractionMode> for WireMode {
    fn from(m: InteractionMode) -> Self {
        match m {
            InteractionMode::Active => WireMode::Active,
            InteractionMode::Passive => WireMode::Passive,
            InteractionMode::Both => WireMode::Both,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WireAnswer {
    Yes,
    No,
    /// "I don't know"; fused as a non-answer.
    DontKnow,
}

impl From<WireAnswer> for HumanAnswer {
    fn from(a: WireAnswer) -> Self {
        match a {
            WireAnswer::Yes => HumanAnswer::Yes,
            WireAnswer::No => HumanAnswer::No,
            WireAnswer::DontKnow => HumanAnswer::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireLandmark {
    pub name: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireGraph {
    pub width: f64,
    pub height: f64,
    pub nodes: Vec<WirePoint>,
    pub edges: Vec<[usize; 2]>,
    pub landmarks: Vec<WireLandmark>,
}

impl From<&RoadNetwork> for WireGraph {
    fn from(net: &RoadNetwork) -> Self {
        WireGraph {
            width: net.width(),
            height: net.height(),
            nodes: net.nodes().iter().map(|p| wire(*p)).collect(),
            edges: net.edges().iter().map(|e| [e.a, e.b]).collect(),
            landmarks: net
                .landmarks()
                .iter()
                .map(|l| WireLandmark { name: l.name.clone(), x: l.centroid.x, y: l.centroid.y })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WirePose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub node: usize,
}

/// Messages from the operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Sketch {
        label: String,
        /// Terrain speed multiplier for the region, if the operator chose one.
        #[serde(default)]
        delta: Option<f64>,
        points: Vec<WirePoint>,
    },
    Statement {
        positive: bool,
        relation: String,
        label: String,
    },
    Answer {
        id: u64,
        answer: WireAnswer,
    },
    Ping,
}

/// Messages to the operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Welcome {
        session: u64,
        mode: WireMode,
        t_max: f64,
        tick_seconds: f64,
        heartbeat_seconds: f64,
        relations: Vec<String>,
        graph: WireGraph,
    },
    Telemetry {
        tick: u64,
        t: f64,
        robot: WirePose,
        /// Recent robot positions, oldest first.
        path: Vec<WirePoint>,
        /// Belief sample, at most 500 points.
        belief: Vec<WirePoint>,
        off_road: f64,
        graph: WireGraph,
        glimpses: Vec<WirePoint>,
        score: f64,
        query_count: usize,
        sketches: Vec<String>,
        pending_query: Option<u64>,
    },
    Query {
        id: u64,
        relation: String,
        label: String,
        text: String,
        deadline: f64,
    },
    Ack {
        label: String,
        polygon: Vec<WirePoint>,
        query_count: usize,
    },
    Notice {
        message: String,
    },
    Error {
        message: String,
    },
    Heartbeat {
        t: f64,
        tick: u64,
    },
    Pong,
    Ended {
        outcome: Outcome,
        transcript: Option<String>,
    },
}

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("unsupported protocol version {0}; this server speaks {PROTOCOL_VERSION}")]
    Version(u32),
}

#[derive(Serialize, Deserialize)]
struct Frame<T> {
    v: u32,
    #[serde(flatten)]
    body: T,
}

#[derive(Deserialize)]
struct VersionOnly {
    v: Option<u32>,
}

fn encode<T: Serialize>(body: &T) -> String {
    serde_json::to_string(&Frame { v: PROTOCOL_VERSION, body }).expect("protocol types serialize")
}

fn decode<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, ProtocolError> {
    let header: VersionOnly = serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    match header.v {
        Some(PROTOCOL_VERSION) => {}
        Some(v) => return Err(ProtocolError::Version(v)),
        None => return Err(ProtocolError::Malformed("missing protocol version 'v'".into())),
    }
    let frame: Frame<T> = serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    Ok(frame.body)
}

pub fn encode_server(msg: &ServerMessage) -> String {
    encode(msg)
}

pub fn encode_client(msg: &ClientMessage) -> String {
    encode(msg)
}

pub fn decode_client(text: &str) -> Result<ClientMessage, ProtocolError> {
    decode(text)
}

pub fn decode_server(text: &str) -> Result<ServerMessage, ProtocolError> {
    decode(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn client_frames_round_trip() {
        let msgs = [
            ClientMessage::Sketch { label: "area1".into(), delta: Some(0.5), points: vec![[1.0, 2.0], [3.0, 4.0]] },
            ClientMessage::Statement { positive: false, relation: "Near".into(), label: "Pond".into() },
            ClientMessage::Answer { id: 3, answer: WireAnswer::DontKnow },
            ClientMessage::Ping,
        ];
        for m in msgs {
            let text = encode_client(&m);
            assert!(text.starts_with("{\"v\":1,"), "{text}");
            assert_eq!(decode_client(&text).unwrap(), m);
        }
    }

    #[test]
    fn frozen_field_names() {
        let text = r#"{"v":1,"type":"answer","id":7,"answer":"dont_know"}"#;
        assert_eq!(decode_client(text).unwrap(), ClientMessage::Answer { id: 7, answer: WireAnswer::DontKnow });
        let text = r#"{"v":1,"type":"sketch","label":"barn","points":[[0,0],[10,0],[0,10]]}"#;
        assert!(matches!(decode_client(text).unwrap(), ClientMessage::Sketch { delta: None, .. }));
        let q = ServerMessage::Query { id: 1, relation: "Near".into(), label: "Pond".into(), text: "?".into(), deadline: 15.0 };
        let v: serde_json::Value = serde_json::from_str(&encode_server(&q)).unwrap();
        assert_eq!(v["type"], "query");
        assert_eq!(v["v"], 1);
        assert_eq!(v["deadline"], 15.0);
    }

    #[test]
    fn bad_frames_are_rejected() {
        assert!(matches!(decode_client("not json"), Err(ProtocolError::Malformed(_))));
        assert!(matches!(decode_client(r#"{"type":"ping"}"#), Err(ProtocolError::Malformed(_))));
        assert_eq!(decode_client(r#"{"v":2,"type":"ping"}"#), Err(ProtocolError::Version(2)));
        assert!(matches!(decode_client(r#"{"v":1,"type":"launch"}"#), Err(ProtocolError::Malformed(_))));
        assert!(matches!(decode_client(r#"{"v":1,"type":"answer","id":1,"answer":"maybe"}"#), Err(ProtocolError::Malformed(_))));
    }
}
