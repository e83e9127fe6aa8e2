//! Classical detection and linking: difference-of-Gaussians spot detection
//! per frame and greedy nearest-neighbour linking between frames.

mod dog;
mod link;

use thiserror::Error;

use crate::graph::{Covariance, GraphError, LineageGraph, SpotId};
use crate::volume::VolumeError;

pub use dog::{detect, dog_response, gaussian_blur, gaussian_kernel, Detection, DetectionConfig};
pub use link::{label_all_true_positive, link_timepoints, LinkingConfig};

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Adds one spot per detection at `t` as a single undo batch. Spot size is
/// the mean of the two filter scales, converted with the smallest voxel edge.
pub fn add_detections(
    graph: &mut LineageGraph,
    t: i32,
    detections: &[Detection],
    config: &DetectionConfig,
    voxel_size: f64,
) -> Result<Vec<SpotId>, DetectError> {
    let cov = Covariance::isotropic(0.5 * (config.sigma_small + config.sigma_large) * voxel_size);
    Ok(graph.transaction(|g| detections.iter().map(|d| g.add_spot(t, d.position, cov)).collect::<Result<Vec<_>, _>>())?)
}
