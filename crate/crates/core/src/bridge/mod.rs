//! Edit mirroring between the engine and connected clients.
//!
//! A [`Session`] owns the graph and applies requests one at a time. Each
//! change becomes an event stamped with the next session version and is
//! sent to every client except the one that asked for it, which gets an
//! `ack` instead. In-process listeners see every event; whatever they send
//! back is applied under the [`BridgeLock`] and never re-emitted, and any
//! stamped message a client sends back is treated as an echo and dropped.
//! Together these keep mirrored parties from feeding back into each other.

mod protocol;
mod replica;
mod session;

use thiserror::Error;

use crate::graph::GraphError;

pub use protocol::{link_entry, spot_entry, Envelope, Event, Request, ENGINE, PROTOCOL_VERSION};
pub use replica::Replica;
pub use session::{AnnotationCursor, BridgeLock, BridgeStats, Session, SessionConfig, SessionListener};

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("version gap: expected {expected}, got {got}")]
    Gap { expected: u64, got: u64 },
    #[error(transparent)]
    Graph(#[from] GraphError),
}
