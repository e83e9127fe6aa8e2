//! CPU side of scene rendering: instance pools for spots and links, the
//! sliding-window link index and time colormaps.

pub mod bench;
mod colormap;
mod pool;
mod window;

use thiserror::Error;

pub use colormap::{track_color, ColorMap, Rgba};
pub use pool::{
    link_transform, populate_pools, spot_transform, DumpedInstance, FrameDump, FrameStats, Instance, InstanceKind,
    InstancePool, ScenePools, Transform, GROWTH_FACTOR, LINK_RADIUS, MIN_SPOT_RADIUS,
};
pub use window::{is_visible, VisibilityWindow};

#[derive(Debug, Error, PartialEq)]
pub enum RenderError {
    #[error("link index is stale (built at version {index}, graph at {graph})")]
    StaleIndex { index: u64, graph: u64 },
    #[error("invalid colormap: {0}")]
    ColorMap(String),
}
