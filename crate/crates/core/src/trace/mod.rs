//! Track extraction from recorded rays.
//!
//! While the user follows a cell, each recorded ray is sampled through the
//! volume. Analysis smooths every profile, keeps the strict local maxima as
//! candidate cell positions, and connects one candidate per ray into the
//! cheapest chain (see [`path`]). The result is one position per timepoint.

pub(crate) mod commit;
pub mod path;
mod smooth;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::GraphError;
use crate::volume::{VolumeError, VolumeTimeSeries};

pub use commit::{commit_track, CommitSummary};
pub use path::{Layer, LayerGraph, LayerPath};
pub use smooth::{find_local_maxima, smooth_profile, SmoothingConfig, KERNEL};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("track extraction failed: {0}")]
    ExtractionFailed(String),
    #[error("trace session is {actual:?}, expected {expected:?}")]
    State { expected: TraceState, actual: TraceState },
    #[error("invalid ray: {0}")]
    InvalidRay(String),
    #[error("track is empty")]
    EmptyTrack,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error("trace file: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace file: {0}")]
    Json(#[from] serde_json::Error),
}

/// Which way playback moves while annotating or tracing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeDirection {
    #[default]
    Backwards,
    Forwards,
}

impl TimeDirection {
    pub fn step(self) -> i32 {
        match self {
            TimeDirection::Backwards => -1,
            TimeDirection::Forwards => 1,
        }
    }
}

/// One recorded ray and its intensity profile. `smoothed` is filled by
/// analysis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayProfile {
    pub timepoint: i32,
    pub origin: [f64; 3],
    pub direction: [f64; 3],
    pub step: f64,
    #[serde(default)]
    pub raw: Vec<f64>,
    #[serde(skip)]
    pub smoothed: Vec<f64>,
}

impl RayProfile {
    /// Samples the volume along the ray at `timepoint`.
    pub fn sample(
        volume: &VolumeTimeSeries,
        timepoint: i32,
        origin: [f64; 3],
        direction: [f64; 3],
        step: f64,
        max_distance: f64,
    ) -> Result<Self, TraceError> {
        let t = volume.check_timepoint(timepoint as i64)?;
        let raw = volume.sample_ray(t, origin, direction, step, max_distance)?;
        Ok(RayProfile { timepoint, origin, direction, step, raw, smoothed: Vec::new() })
    }

    pub fn point_at(&self, sample_index: usize) -> [f64; 3] {
        let s = sample_index as f64 * self.step;
        std::array::from_fn(|a| self.origin[a] + s * self.direction[a])
    }

    fn validate(&self) -> Result<(), TraceError> {
        crate::volume::ray_sample_count(self.direction, self.step, 0.0)
            .map_err(|e| TraceError::InvalidRay(e.to_string()))?;
        if self.raw.is_empty() {
            return Err(TraceError::InvalidRay("profile has no samples".into()));
        }
        if self.origin.iter().chain(&self.raw).any(|v| !v.is_finite()) {
            return Err(TraceError::InvalidRay("non-finite value".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalMaximum {
    pub ray_index: usize,
    pub sample_index: usize,
    pub world_position: [f64; 3],
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceState {
    Recording,
    Analyzed,
    Committed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub timepoint: i32,
    pub position: [f64; 3],
}

/// Rays captured between trace start and stop.
#[derive(Clone, Debug)]
pub struct TraceSession {
    rays: Vec<RayProfile>,
    state: TraceState,
    direction: TimeDirection,
    config: SmoothingConfig,
    maxima: Vec<Vec<LocalMaximum>>,
}

impl TraceSession {
    pub fn new(direction: TimeDirection, config: SmoothingConfig) -> Self {
        TraceSession { rays: Vec::new(), state: TraceState::Recording, direction, config, maxima: Vec::new() }
    }

    /// Builds a recording session from already captured rays.
    pub fn from_rays(rays: Vec<RayProfile>, direction: TimeDirection, config: SmoothingConfig) -> Result<Self, TraceError> {
        let mut s = TraceSession::new(direction, config);
        for r in rays {
            s.push_ray(r)?;
        }
        Ok(s)
    }

    pub fn rays(&self) -> &[RayProfile] {
        &self.rays
    }

    pub fn state(&self) -> TraceState {
        self.state
    }

    pub fn direction(&self) -> TimeDirection {
        self.direction
    }

    pub fn config(&self) -> &SmoothingConfig {
        &self.config
    }

    /// Appends a ray. Timepoints may repeat but must not move against the
    /// session's direction.
    pub fn push_ray(&mut self, ray: RayProfile) -> Result<(), TraceError> {
        self.expect_state(TraceState::Recording)?;
        ray.validate()?;
        if let Some(prev) = self.rays.last() {
            let delta = (ray.timepoint - prev.timepoint) * self.direction.step();
            if delta < 0 {
                return Err(TraceError::InvalidRay(format!(
                    "timepoint {} runs against the {:?} playback after {}",
                    ray.timepoint, self.direction, prev.timepoint
                )));
            }
        }
        self.rays.push(ray);
        Ok(())
    }

    fn expect_state(&self, expected: TraceState) -> Result<(), TraceError> {
        if self.state != expected {
            return Err(TraceError::State { expected, actual: self.state });
        }
        Ok(())
    }

    /// Smooths every ray and extracts its local maxima. The maxima threshold
    /// is relative to the largest smoothed sample over the whole session.
    pub fn analyze(&mut self) -> Result<(), TraceError> {
        self.expect_state(TraceState::Recording)?;
        for ray in &mut self.rays {
            ray.smoothed = smooth_profile(&ray.raw, self.config.iterations);
        }
        let peak = self
            .rays
            .iter()
            .flat_map(|r| r.smoothed.iter().copied())
            .fold(f64::NEG_INFINITY, f64::max);
        let threshold = self.config.maxima_threshold_fraction * peak.max(0.0);
        self.maxima = self
            .rays
            .iter()
            .enumerate()
            .map(|(ray_index, ray)| {
                find_local_maxima(&ray.smoothed, threshold)
                    .into_iter()
                    .map(|sample_index| LocalMaximum {
                        ray_index,
                        sample_index,
                        world_position: ray.point_at(sample_index),
                        value: ray.smoothed[sample_index],
                    })
                    .collect()
            })
            .collect();
        self.state = TraceState::Analyzed;
        Ok(())
    }

    pub fn maxima(&self) -> &[Vec<LocalMaximum>] {
        &self.maxima
    }

    pub fn layer_graph(&self) -> Result<LayerGraph, TraceError> {
        if self.state == TraceState::Recording {
            return Err(TraceError::State { expected: TraceState::Analyzed, actual: self.state });
        }
        LayerGraph::new(self.rays.iter().map(|r| r.timepoint).zip(self.maxima.iter().cloned()).collect())
    }

    /// Cheapest chain through the layers, reduced to one position per
    /// timepoint (the strongest maximum wins) and sorted by timepoint.
    pub fn extract_track(&self) -> Result<Vec<TrackPoint>, TraceError> {
        let graph = self.layer_graph()?;
        let path = graph.shortest_path();
        Ok(collapse(&graph, &path))
    }

    pub fn mark_committed(&mut self) {
        self.state = TraceState::Committed;
    }
}

fn collapse(graph: &LayerGraph, path: &LayerPath) -> Vec<TrackPoint> {
    let mut best: BTreeMap<i32, LocalMaximum> = BTreeMap::new();
    for (layer, &node) in graph.layers.iter().zip(&path.nodes) {
        let m = layer.nodes[node];
        best.entry(layer.timepoint)
            .and_modify(|cur| {
                if m.value > cur.value {
                    *cur = m;
                }
            })
            .or_insert(m);
    }
    best.into_iter().map(|(timepoint, m)| TrackPoint { timepoint, position: m.world_position }).collect()
}

/// Analyzes `rays` with `config` and returns the extracted track.
pub fn extract_track(rays: Vec<RayProfile>, direction: TimeDirection, config: SmoothingConfig) -> Result<Vec<TrackPoint>, TraceError> {
    let mut session = TraceSession::from_rays(rays, direction, config)?;
    session.analyze()?;
    session.extract_track()
}

/// Reads a trace file: a JSON list of `{timepoint, origin, direction, step, raw}`.
pub fn read_trace_file(path: &FsPath) -> Result<Vec<RayProfile>, TraceError> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

pub fn write_trace_file(path: &FsPath, rays: &[RayProfile]) -> Result<(), TraceError> {
    fs::write(path, serde_json::to_vec_pretty(rays)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ray(t: i32, raw: Vec<f64>) -> RayProfile {
        RayProfile { timepoint: t, origin: [0.0; 3], direction: [1.0, 0.0, 0.0], step: 0.5, raw, smoothed: vec![] }
    }

    fn bump(len: usize, at: usize) -> Vec<f64> {
        (0..len).map(|i| 100.0 * (-((i as f64 - at as f64).powi(2)) / 8.0).exp()).collect()
    }

    #[test]
    fn single_ray_single_spot() {
        let track = extract_track(vec![ray(3, bump(20, 8))], TimeDirection::Backwards, SmoothingConfig::default()).unwrap();
        assert_eq!(track.len(), 1);
        assert_eq!(track[0].timepoint, 3);
        assert_eq!(track[0].position, [4.0, 0.0, 0.0]);
    }

    #[test]
    fn flat_middle_ray_is_a_gap() {
        let mut s = TraceSession::from_rays(
            vec![ray(2, bump(20, 8)), ray(1, vec![5.0; 20]), ray(0, bump(20, 9))],
            TimeDirection::Backwards,
            SmoothingConfig::default(),
        )
        .unwrap();
        s.analyze().unwrap();
        let g = s.layer_graph().unwrap();
        assert_eq!(g.layers.len(), 2);
        assert_eq!(g.gaps, vec![1]);
        let track = s.extract_track().unwrap();
        assert_eq!(track.iter().map(|p| p.timepoint).collect::<Vec<_>>(), vec![0, 2]);
    }

    #[test]
    fn no_maxima_fails() {
        let err = extract_track(vec![ray(0, vec![1.0, 2.0, 3.0])], TimeDirection::Backwards, SmoothingConfig::default());
        assert!(matches!(err, Err(TraceError::ExtractionFailed(_))));
    }

    #[test]
    fn same_timepoint_keeps_strongest() {
        let mut weak = bump(20, 8);
        weak.iter_mut().for_each(|v| *v *= 0.5);
        let track = extract_track(
            vec![ray(5, bump(20, 8)), ray(4, weak), ray(4, bump(20, 9))],
            TimeDirection::Backwards,
            SmoothingConfig::default(),
        )
        .unwrap();
        assert_eq!(track.len(), 2);
        assert_eq!(track[0].timepoint, 4);
        assert_eq!(track[0].position, [4.5, 0.0, 0.0]);
    }

    #[test]
    fn direction_enforced() {
        let mut s = TraceSession::new(TimeDirection::Backwards, SmoothingConfig::default());
        s.push_ray(ray(5, bump(10, 4))).unwrap();
        s.push_ray(ray(5, bump(10, 4))).unwrap();
        assert!(s.push_ray(ray(6, bump(10, 4))).is_err());
        let mut bad = ray(4, bump(10, 4));
        bad.direction = [1.0, 1.0, 0.0];
        assert!(matches!(s.push_ray(bad), Err(TraceError::InvalidRay(_))));
    }

    #[test]
    fn state_machine() {
        let mut s = TraceSession::new(TimeDirection::Backwards, SmoothingConfig::default());
        assert!(matches!(s.layer_graph(), Err(TraceError::State { .. })));
        s.push_ray(ray(0, bump(10, 4))).unwrap();
        s.analyze().unwrap();
        assert!(s.push_ray(ray(0, bump(10, 4))).is_err());
        assert!(s.analyze().is_err());
    }

    #[test]
    fn trace_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.json");
        let rays = vec![ray(1, vec![0.0, 1.0, 0.0])];
        write_trace_file(&path, &rays).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"timepoint\"") && text.contains("\"raw\""));
        assert_eq!(read_trace_file(&path).unwrap(), rays);
    }
}
