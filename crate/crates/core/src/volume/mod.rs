//! Volumetric time-series storage and sampling.
//!
//! Voxel `(i, j, k)` has its center at world position
//! `(i * vx, j * vy, k * vz)`. Samples are `u16`; all interpolation happens
//! in `f64`.

mod io;
mod slab;
mod synthetic;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{load_volume, save_volume, HEADER_FILE, RAW_FILE};
pub use slab::{Slab, VoxelBox};
pub use synthetic::{BlobSample, RandomSceneConfig, CellTrajectory, DivisionEvent, SyntheticScene};

/// Tolerance on `|direction| - 1` accepted by [`VolumeTimeSeries::sample_ray`].
pub const UNIT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("invalid volume: {0}")]
    Validation(String),
    #[error("timepoint {timepoint} outside 0..{timepoints}")]
    Range { timepoint: i64, timepoints: usize },
    #[error("volume io: {0}")]
    Io(#[from] std::io::Error),
    #[error("volume header: {0}")]
    Header(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    #[default]
    Uint16,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    pub voxel_size: [f64; 3],
    pub timepoints: usize,
    #[serde(default)]
    pub value_type: ValueType,
}

impl VolumeHeader {
    pub fn new(dims: [usize; 3], voxel_size: [f64; 3], timepoints: usize) -> Result<Self, VolumeError> {
        let h = VolumeHeader { dims, voxel_size, timepoints, value_type: ValueType::Uint16 };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<(), VolumeError> {
        if self.dims.contains(&0) {
            return Err(VolumeError::Validation("dims must be at least 1".into()));
        }
        if self.voxel_size.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(VolumeError::Validation("voxel size must be positive".into()));
        }
        if self.timepoints == 0 {
            return Err(VolumeError::Validation("at least one timepoint is required".into()));
        }
        Ok(())
    }

    pub fn voxels_per_frame(&self) -> usize {
        self.dims.iter().product()
    }

    /// Linear index, x fastest then y then z.
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    /// World extent covered by voxel centers, per axis.
    pub fn extent(&self) -> [f64; 3] {
        std::array::from_fn(|a| (self.dims[a] - 1) as f64 * self.voxel_size[a])
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        let e = self.extent();
        (0..3).all(|a| p[a] >= 0.0 && p[a] <= e[a])
    }

    pub fn min_voxel_size(&self) -> f64 {
        self.voxel_size.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Ray step used when none is configured: half the smallest voxel edge.
    pub fn default_ray_step(&self) -> f64 {
        0.5 * self.min_voxel_size()
    }

    /// Length of the extent's diagonal, a ray length that crosses the whole volume.
    pub fn diagonal(&self) -> f64 {
        self.extent().iter().map(|e| e * e).sum::<f64>().sqrt()
    }

    pub fn voxel_to_world(&self, v: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|a| v[a] * self.voxel_size[a])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VolumeTimeSeries {
    header: VolumeHeader,
    frames: Vec<Vec<u16>>,
}

impl VolumeTimeSeries {
    pub fn new(header: VolumeHeader, frames: Vec<Vec<u16>>) -> Result<Self, VolumeError> {
        header.validate()?;
        if frames.len() != header.timepoints {
            return Err(VolumeError::Validation(format!(
                "expected {} frames, got {}",
                header.timepoints,
                frames.len()
            )));
        }
        let n = header.voxels_per_frame();
        if let Some(bad) = frames.iter().position(|f| f.len() != n) {
            return Err(VolumeError::Validation(format!("frame {bad} does not have {n} samples")));
        }
        Ok(VolumeTimeSeries { header, frames })
    }

    pub fn zeros(header: VolumeHeader) -> Result<Self, VolumeError> {
        header.validate()?;
        let frames = vec![vec![0; header.voxels_per_frame()]; header.timepoints];
        Ok(VolumeTimeSeries { header, frames })
    }

    pub fn header(&self) -> &VolumeHeader {
        &self.header
    }

    pub fn timepoints(&self) -> usize {
        self.header.timepoints
    }

    pub fn frame(&self, t: usize) -> Option<&[u16]> {
        self.frames.get(t).map(Vec::as_slice)
    }

    pub fn frame_mut(&mut self, t: usize) -> Option<&mut [u16]> {
        self.frames.get_mut(t).map(Vec::as_mut_slice)
    }

    pub fn frames(&self) -> &[Vec<u16>] {
        &self.frames
    }

    pub fn check_timepoint(&self, t: i64) -> Result<usize, VolumeError> {
        if t < 0 || t as usize >= self.header.timepoints {
            return Err(VolumeError::Range { timepoint: t, timepoints: self.header.timepoints });
        }
        Ok(t as usize)
    }

    pub fn voxel(&self, t: usize, x: usize, y: usize, z: usize) -> u16 {
        self.frames[t][self.header.index(x, y, z)]
    }

    /// Trilinear interpolation of the eight voxels around `p`. Voxels outside
    /// the grid count as 0, so the result fades to 0 within one voxel of the
    /// boundary and is 0 everywhere beyond. Unknown timepoints sample as 0.
    pub fn trilinear_sample(&self, t: usize, p: [f64; 3]) -> f64 {
        let Some(frame) = self.frames.get(t) else {
            return 0.0;
        };
        let h = &self.header;
        let mut base = [0i64; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let c = p[a] / h.voxel_size[a];
            if !(c > -1.0 && c < h.dims[a] as f64) {
                return 0.0;
            }
            let f = c.floor();
            base[a] = f as i64;
            frac[a] = c - f;
        }
        let fetch = |x: i64, y: i64, z: i64| -> f64 {
            if x < 0 || y < 0 || z < 0 {
                return 0.0;
            }
            let (x, y, z) = (x as usize, y as usize, z as usize);
            if x >= h.dims[0] || y >= h.dims[1] || z >= h.dims[2] {
                return 0.0;
            }
            frame[h.index(x, y, z)] as f64
        };
        let [x, y, z] = base;
        let [fx, fy, fz] = frac;
        let c00 = fetch(x, y, z) * (1.0 - fx) + fetch(x + 1, y, z) * fx;
        let c10 = fetch(x, y + 1, z) * (1.0 - fx) + fetch(x + 1, y + 1, z) * fx;
        let c01 = fetch(x, y, z + 1) * (1.0 - fx) + fetch(x + 1, y, z + 1) * fx;
        let c11 = fetch(x, y + 1, z + 1) * (1.0 - fx) + fetch(x + 1, y + 1, z + 1) * fx;
        let c0 = c00 * (1.0 - fy) + c10 * fy;
        let c1 = c01 * (1.0 - fy) + c11 * fy;
        c0 * (1.0 - fz) + c1 * fz
    }

    /// Samples `floor(max_distance / step) + 1` points at
    /// `origin + k * step * direction`.
    pub fn sample_ray(
        &self,
        t: usize,
        origin: [f64; 3],
        direction: [f64; 3],
        step: f64,
        max_distance: f64,
    ) -> Result<Vec<f64>, VolumeError> {
        let count = ray_sample_count(direction, step, max_distance)?;
        Ok((0..count)
            .map(|k| {
                let s = k as f64 * step;
                self.trilinear_sample(t, std::array::from_fn(|a| origin[a] + s * direction[a]))
            })
            .collect())
    }
}

/// Validates ray parameters and returns the number of samples.
pub fn ray_sample_count(direction: [f64; 3], step: f64, max_distance: f64) -> Result<usize, VolumeError> {
    let norm = direction.iter().map(|d| d * d).sum::<f64>().sqrt();
    if !((norm - 1.0).abs() <= UNIT_TOLERANCE) {
        return Err(VolumeError::Validation(format!("ray direction has length {norm}, expected 1")));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(VolumeError::Validation("ray step must be positive".into()));
    }
    if !(max_distance >= 0.0 && max_distance.is_finite()) {
        return Err(VolumeError::Validation("ray length must be non-negative".into()));
    }
    // the epsilon keeps exact multiples (step == max_distance) from rounding down
    Ok((max_distance / step + 1e-9).floor() as usize + 1)
}

pub fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = v.iter().map(|d| d * d).sum::<f64>().sqrt();
    if n == 0.0 {
        return v;
    }
    v.map(|c| c / n)
}

pub fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}
