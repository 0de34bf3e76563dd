//! Live operator sessions over WebSocket.

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{ClientMessage, ServerMessage, PROTOCOL_VERSION};
pub use server::{Server, ServerConfig};
pub use session::{Session, SessionOptions};
