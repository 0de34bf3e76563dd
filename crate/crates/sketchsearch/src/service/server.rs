//! WebSocket transport. Each connection gets its own session with an engine
//! thread that ticks at a fixed wall-clock rate, so a slow client never
//! stalls the search: outbound frames go through a bounded queue that drops
//! the oldest telemetry when the client falls behind.

use std::collections::VecDeque;
use std::io;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use sketchsearch_core::episode::EpisodeConfig;
use sketchsearch_core::sim_human::InteractionMode;
use sketchsearch_core::world::RoadNetwork;
use tungstenite::{Message, WebSocket};

use super::protocol::{encode_server, ServerMessage};
use super::session::{Session, SessionOptions};

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind: SocketAddr,
    /// Template for every session; each session gets `seed + session id`.
    pub episode: EpisodeConfig,
    pub map: RoadNetwork,
    pub mode: InteractionMode,
    /// Simulated seconds per wall-clock second.
    pub speed: f64,
    pub heartbeat: Duration,
    /// Frames buffered per client before telemetry is dropped.
    pub outbox_capacity: usize,
    pub transcript_dir: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            bind: SocketAddr::from(([127, 0, 0, 1], 8765)),
            episode: EpisodeConfig::default(),
            map: RoadNetwork::default_map(),
            mode: InteractionMode::Active,
            speed: 1.0,
            heartbeat: Duration::from_secs(5),
            outbox_capacity: 64,
            transcript_dir: None,
        }
    }
}

/// Bounded frame queue. Telemetry is superseded by the next telemetry frame,
/// so it is what gets dropped; queries, acks and notices are always kept.
#[derive(Debug)]
pub struct Outbox {
    capacity: usize,
    frames: VecDeque<(bool, String)>,
    dropped: usize,
}

impl Outbox {
    pub fn new(capacity: usize) -> Self {
        Outbox { capacity: capacity.max(1), frames: VecDeque::new(), dropped: 0 }
    }

    pub fn push(&mut self, msg: &ServerMessage) {
        let droppable = matches!(msg, ServerMessage::Telemetry { .. } | ServerMessage::Heartbeat { .. });
        self.frames.push_back((droppable, encode_server(msg)));
        while self.frames.len() > self.capacity {
            match self.frames.iter().position(|(d, _)| *d) {
                Some(i) => {
                    self.frames.remove(i);
                    self.dropped += 1;
                }
                None => break,
            }
        }
    }

    pub fn pop(&mut self) -> Option<String> {
        self.frames.pop_front().map(|(_, f)| f)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dropped(&self) -> usize {
        self.dropped
    }
}

enum Inbound {
    Text(String),
    Gone,
}

pub struct Server {
    listener: TcpListener,
    cfg: Arc<ServerConfig>,
    next_id: AtomicU64,
}

impl Server {
    pub fn bind(cfg: ServerConfig) -> io::Result<Self> {
        let listener = TcpListener::bind(cfg.bind)?;
        Ok(Server { listener, cfg: Arc::new(cfg), next_id: AtomicU64::new(1) })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts connections until the listener fails.
    pub fn serve(&self) -> io::Result<()> {
        for stream in self.listener.incoming() {
            let stream = stream?;
            let id = self.next_id.fetch_add(1, Ordering::Relaxed);
            let cfg = Arc::clone(&self.cfg);
            thread::spawn(move || {
                if let Err(e) = connection(stream, id, &cfg) {
                    log::warn!("session {id}: {e}");
                }
            });
        }
        Ok(())
    }

    /// Serves on a background thread.
    pub fn spawn(self) -> JoinHandle<io::Result<()>> {
        thread::spawn(move || self.serve())
    }
}

fn connection(stream: TcpStream, id: u64, cfg: &ServerConfig) -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    stream.set_nodelay(true)?;
    let mut ws = tungstenite::accept(stream).map_err(|e| e.to_string())?;
    ws.get_mut().set_read_timeout(Some(Duration::from_millis(5)))?;

    let mut episode = cfg.episode.clone();
    episode.seed = episode.seed.wrapping_add(id);
    let opts = SessionOptions {
        mode: cfg.mode,
        heartbeat_seconds: cfg.heartbeat.as_secs_f64(),
        transcript_dir: cfg.transcript_dir.clone(),
        ..SessionOptions::default()
    };
    let session = Session::new(id, episode, cfg.map.clone(), opts).map_err(|e| e.to_string())?;
    log::info!("session {id} opened from {}", ws.get_ref().peer_addr()?);

    let outbox = Arc::new(Mutex::new(Outbox::new(cfg.outbox_capacity)));
    outbox.lock().unwrap().push(&session.welcome());
    let (tx, rx) = mpsc::channel();
    let engine = {
        let outbox = Arc::clone(&outbox);
        let tick = Duration::from_secs_f64(session.episode().config().dt / cfg.speed.max(1e-6));
        let heartbeat = cfg.heartbeat;
        thread::spawn(move || run_engine(session, rx, outbox, tick, heartbeat))
    };

    let result = pump(&mut ws, &outbox, &tx, &engine);
    let _ = tx.send(Inbound::Gone);
    let _ = ws.close(None);
    let _ = ws.flush();
    // A departed client leaves the engine to finish the episode on its own
    // so the transcript is complete.
    let _ = engine.join();
    log::info!("session {id} closed");
    result
}

fn pump(
    ws: &mut WebSocket<TcpStream>,
    outbox: &Mutex<Outbox>,
    tx: &mpsc::Sender<Inbound>,
    engine: &JoinHandle<()>,
) -> Result<(), Box<dyn std::error::Error + Send + Sync>> {
    loop {
        let mut sent = false;
        while let Some(frame) = outbox.lock().unwrap().pop() {
            ws.send(Message::text(frame))?;
            sent = true;
        }
        if sent {
            ws.flush()?;
        }
        if engine.is_finished() && outbox.lock().unwrap().is_empty() {
            return Ok(());
        }
        match ws.read() {
            Ok(Message::Text(t)) => {
                if tx.send(Inbound::Text(t.to_string())).is_err() {
                    return Ok(());
                }
            }
            Ok(Message::Close(_)) => return Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(()),
            Err(e) => return Err(e.into()),
        }
    }
}

fn run_engine(
    mut session: Session,
    rx: mpsc::Receiver<Inbound>,
    outbox: Arc<Mutex<Outbox>>,
    tick: Duration,
    heartbeat: Duration,
) {
    let mut next_tick = Instant::now() + tick;
    let mut next_beat = Instant::now() + heartbeat;
    let send = |frames: Vec<ServerMessage>, outbox: &Mutex<Outbox>| {
        let mut o = outbox.lock().unwrap();
        for f in &frames {
            o.push(f);
        }
    };
    while !session.is_finished() {
        let wait = next_tick.min(next_beat).saturating_duration_since(Instant::now());
        let inbound = if session.is_connected() { rx.recv_timeout(wait) } else { Err(RecvTimeoutError::Timeout) };
        match inbound {
            Ok(Inbound::Text(text)) => {
                let frames = session.handle_text(&text);
                send(frames, &outbox);
                continue;
            }
            Ok(Inbound::Gone) | Err(RecvTimeoutError::Disconnected) => {
                session.disconnect();
                continue;
            }
            Err(RecvTimeoutError::Timeout) => {}
        }
        let now = Instant::now();
        if session.is_connected() && now >= next_beat {
            send(vec![ServerMessage::Heartbeat { t: session.episode().clock(), tick: session.tick() }], &outbox);
            next_beat += heartbeat;
        }
        if !session.is_connected() || now >= next_tick {
            let frames = session.advance();
            if session.is_connected() {
                send(frames, &outbox);
            }
            next_tick += tick;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beat(tick: u64) -> ServerMessage {
        ServerMessage::Heartbeat { t: tick as f64, tick }
    }

    #[test]
    fn outbox_drops_oldest_telemetry_but_keeps_control_frames() {
        let mut o = Outbox::new(3);
        o.push(&ServerMessage::Notice { message: "keep".into() });
        for i in 0..5 {
            o.push(&beat(i));
        }
        assert_eq!(o.len(), 3);
        assert_eq!(o.dropped(), 3);
        assert!(o.pop().unwrap().contains("keep"));
        assert!(o.pop().unwrap().contains("\"tick\":3"));
        assert!(o.pop().unwrap().contains("\"tick\":4"));
        for i in 0..4 {
            o.push(&ServerMessage::Notice { message: format!("n{i}") });
        }
        assert_eq!(o.len(), 4, "control frames are never dropped");
    }
}
