//! Headless operator against a live WebSocket server: sketch, receive the
//! acknowledgement and new queries, answer a query, and watch the belief
//! move toward the indicated region.

use std::net::TcpStream;
use std::time::{Duration, Instant};

use sketchsearch::service::protocol::{decode_server, encode_client, point, ClientMessage, WireAnswer, WirePoint};
use sketchsearch::service::{Server, ServerConfig, ServerMessage};
use sketchsearch_core::episode::EpisodeConfig;
use sketchsearch_core::sketch::{Relation, SketchConfig, SketchRecord};
use sketchsearch_core::Point2;
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

type Client = WebSocket<MaybeTlsStream<TcpStream>>;

fn recv(ws: &mut Client, deadline: Instant) -> ServerMessage {
    loop {
        assert!(Instant::now() < deadline, "timed out waiting for the server");
        match ws.read().expect("socket open") {
            Message::Text(t) => return decode_server(&t).expect("well-formed server frame"),
            _ => continue,
        }
    }
}

fn send(ws: &mut Client, msg: &ClientMessage) {
    ws.send(Message::text(encode_client(msg))).unwrap();
}

fn sketch_points() -> Vec<WirePoint> {
    (0..120)
        .map(|i| {
            let a = i as f64 / 120.0 * std::f64::consts::TAU;
            [480.0 + 110.0 * a.cos(), 520.0 + 80.0 * a.sin()]
        })
        .collect()
}

fn mass(belief: &[WirePoint], region: &SketchRecord, relation: Relation) -> f64 {
    let mut scratch = Vec::new();
    let inside = belief.iter().filter(|p| region.answer_truth(relation, point(**p), &mut scratch) > 0.5).count();
    inside as f64 / belief.len() as f64
}

#[test]
fn operator_sketches_answers_and_moves_the_belief() {
    let started = Instant::now();
    let deadline = started + Duration::from_secs(60);
    let mut episode = EpisodeConfig { seed: 2024, particles: 2000, t_max: 400.0, ..EpisodeConfig::default() };
    episode.planner.sims_per_second = 50.0;
    episode.planner.min_simulations = 100;
    let cfg = ServerConfig {
        bind: "127.0.0.1:0".parse().unwrap(),
        episode,
        speed: 20.0,
        heartbeat: Duration::from_millis(300),
        ..ServerConfig::default()
    };
    let server = Server::bind(cfg).unwrap();
    let addr = server.local_addr().unwrap();
    server.spawn();

    let (mut ws, _) = tungstenite::connect(format!("ws://{addr}")).unwrap();
    let ServerMessage::Welcome { mode, relations, graph, .. } = recv(&mut ws, deadline) else {
        panic!("first frame is the welcome")
    };
    assert_eq!(mode, sketchsearch::service::protocol::WireMode::Active);
    assert_eq!(relations.len(), 5);
    assert!(!graph.nodes.is_empty() && !graph.edges.is_empty());

    send(&mut ws, &ClientMessage::Sketch { label: "area1".into(), delta: None, points: sketch_points() });
    let polygon = loop {
        match recv(&mut ws, deadline) {
            ServerMessage::Ack { label, polygon, query_count } => {
                assert_eq!(label, "area1");
                assert_eq!(query_count, 1 + 5, "the null query plus five relations about the new sketch");
                break polygon;
            }
            ServerMessage::Error { message } => panic!("sketch refused: {message}"),
            _ => {}
        }
    };
    assert_eq!(polygon.len(), SketchConfig::default().target_vertices);
    let region = SketchRecord::build(
        "area1",
        sketch_points().into_iter().map(point).collect::<Vec<Point2>>(),
        None,
        &SketchConfig::default(),
    )
    .unwrap();

    // The next telemetry frames advertise the enlarged query set; wait for a
    // question about the sketch.
    let mut saw_heartbeat = false;
    let mut saw_new_count = false;
    let (id, relation) = loop {
        match recv(&mut ws, deadline) {
            ServerMessage::Telemetry { query_count, sketches, belief, .. } => {
                assert!(belief.len() <= 500);
                if query_count == 6 {
                    assert_eq!(sketches, vec!["area1".to_string()]);
                    saw_new_count = true;
                }
            }
            ServerMessage::Heartbeat { .. } => saw_heartbeat = true,
            ServerMessage::Query { id, relation, label, deadline: d, .. } => {
                assert_eq!(label, "area1");
                assert!(d > 0.0);
                break (id, relation.parse::<Relation>().expect("known relation"));
            }
            ServerMessage::Ended { .. } => panic!("episode ended before any question"),
            _ => {}
        }
    };

    // Telemetry right after the query is the belief the question was asked from.
    let before = loop {
        if let ServerMessage::Telemetry { belief, query_count, pending_query, .. } = recv(&mut ws, deadline) {
            assert_eq!(pending_query, Some(id));
            saw_new_count |= query_count == 6;
            break belief;
        }
    };
    assert!(saw_new_count);
    send(&mut ws, &ClientMessage::Answer { id, answer: WireAnswer::Yes });
    let after = loop {
        match recv(&mut ws, deadline) {
            ServerMessage::Telemetry { belief, pending_query, .. } if pending_query != Some(id) => break belief,
            ServerMessage::Notice { message } => panic!("answer not taken: {message}"),
            ServerMessage::Heartbeat { .. } => saw_heartbeat = true,
            _ => {}
        }
    };
    let (m0, m1) = (mass(&before, &region, relation), mass(&after, &region, relation));
    assert!(m1 > m0, "belief mass where '{relation} area1' holds: {m0:.3} before, {m1:.3} after a yes");

    while !saw_heartbeat {
        if let ServerMessage::Heartbeat { .. } = recv(&mut ws, deadline) {
            saw_heartbeat = true;
        }
    }
    send(&mut ws, &ClientMessage::Ping);
    while !matches!(recv(&mut ws, deadline), ServerMessage::Pong) {}
    ws.close(None).ok();
    assert!(started.elapsed() < Duration::from_secs(60));
}
