//! Cell-lineage tracking engine.
//!
//! - [`graph`]: index-linked lineage graph with undo batches
//! - [`volume`]: volumetric time-series, synthetic scenes and ray sampling
//! - [`trace`]: track extraction from recorded rays
//! - [`detect`]: difference-of-Gaussians detection and greedy linking
//! - [`render`]: instance pools, sliding-window visibility and colormaps
//! - [`bridge`]: edit mirroring between the engine and connected clients
//! - [`project`]: project manifests and files

pub mod graph;
pub mod volume;
pub mod trace;
pub mod detect;
pub mod render;
pub mod bridge;
pub mod project;
