//! Session server and offline commands for the celltrace engine.

pub mod commands;
pub mod server;
