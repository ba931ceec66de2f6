//! Authoritative multiplayer server for the safety arena: sessions, the
//! JSON-over-WebSocket protocol, per-room tick loops and visibility-filtered
//! replication.

pub mod capture;
pub mod client;
pub mod config;
pub mod local;
pub mod net;
pub mod protocol;
pub mod room;
pub mod session;
pub mod snapshot;

pub use client::ClientView;
pub use local::{ConnId, LocalServer, LocalTick};
pub use protocol::{ClientMessage, ServerMessage};
pub use room::{Profile, RoomCore};
pub use snapshot::{PublicPlayer, Snapshot};
