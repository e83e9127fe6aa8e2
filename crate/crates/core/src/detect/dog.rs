use serde::{Deserialize, Serialize};

use crate::volume::{distance, VolumeHeader, VolumeTimeSeries};

use super::DetectError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct DetectionConfig {
    /// Voxels.
    pub sigma_small: f64,
    /// Voxels.
    pub sigma_large: f64,
    /// Fraction of the frame's largest response.
    pub response_threshold: f64,
    /// World units.
    pub min_separation: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig { sigma_small: 1.5, sigma_large: 3.0, response_threshold: 0.1, min_separation: 4.0 }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        if !(self.sigma_small > 0.0 && self.sigma_large > self.sigma_small) {
            return Err(DetectError::Config("requires sigmaLarge > sigmaSmall > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.response_threshold) {
            return Err(DetectError::Config("responseThreshold must lie in [0, 1]".into()));
        }
        if !(self.min_separation >= 0.0) {
            return Err(DetectError::Config("minSeparation must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub position: [f64; 3],
    pub response: f64,
}

/// Normalized Gaussian taps with radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|v| (v / sum) as f32).collect()
}

/// Separable Gaussian blur with edge replication.
pub fn gaussian_blur(data: &[f32], dims: [usize; 3], sigma: f64) -> Vec<f32> {
    let kernel = gaussian_kernel(sigma);
    let mut cur = data.to_vec();
    let mut next = vec![0.0f32; data.len()];
    let strides = [1, dims[0], dims[0] * dims[1]];
    for axis in 0..3 {
        convolve_axis(&cur, &mut next, dims, strides, axis, &kernel);
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

fn convolve_axis(src: &[f32], dst: &mut [f32], dims: [usize; 3], strides: [usize; 3], axis: usize, kernel: &[f32]) {
    let radius = (kernel.len() / 2) as i64;
    let n = dims[axis] as i64;
    let stride = strides[axis];
    let (a1, a2) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let mut line = vec![0.0f32; dims[axis]];
    for j in 0..dims[a2] {
        for i in 0..dims[a1] {
            let base = i * strides[a1] + j * strides[a2];
            for (k, v) in line.iter_mut().enumerate() {
                *v = src[base + k * stride];
            }
            for k in 0..n {
                let mut acc = 0.0f32;
                for (tap, w) in kernel.iter().enumerate() {
                    let idx = (k + tap as i64 - radius).clamp(0, n - 1) as usize;
                    acc += w * line[idx];
                }
                dst[base + k as usize * stride] = acc;
            }
        }
    }
}

/// `blur(sigma_small) - blur(sigma_large)` of frame `t`.
pub fn dog_response(volume: &VolumeTimeSeries, t: usize, config: &DetectionConfig) -> Vec<f32> {
    let dims = volume.header().dims;
    let frame: Vec<f32> = volume.frame(t).expect("checked timepoint").iter().map(|&v| v as f32).collect();
    let small = gaussian_blur(&frame, dims, config.sigma_small);
    let large = gaussian_blur(&frame, dims, config.sigma_large);
    small.iter().zip(&large).map(|(s, l)| s - l).collect()
}

/// Difference-of-Gaussians blob detection on one frame.
///
/// Candidates are 26-neighbourhood maxima of the response (on a plateau the
/// lowest linear index wins) at or above `response_threshold` times the
/// largest response. They are refined to sub-voxel precision with a
/// per-axis parabola fit, then suppressed greedily so that no two kept
/// detections are closer than `min_separation`. Sorted by descending
/// response.
pub fn detect(volume: &VolumeTimeSeries, t: i64, config: &DetectionConfig) -> Result<Vec<Detection>, DetectError> {
    config.validate()?;
    let t = volume.check_timepoint(t)?;
    let header = volume.header();
    let response = dog_response(volume, t, config);
    let peak = response.iter().copied().fold(0.0f32, f32::max);
    if peak <= 0.0 {
        return Ok(Vec::new());
    }
    let threshold = (config.response_threshold as f32 * peak).max(f32::MIN_POSITIVE);
    let mut candidates: Vec<Detection> = local_maxima(&response, header, threshold)
        .into_iter()
        .map(|idx| Detection { position: refine(&response, header, idx), response: response[idx] as f64 })
        .collect();
    candidates.sort_by(|a, b| b.response.total_cmp(&a.response));
    let mut kept: Vec<Detection> = Vec::new();
    for c in candidates {
        if kept.iter().all(|k| distance(k.position, c.position) >= config.min_separation) {
            kept.push(c);
        }
    }
    Ok(kept)
}

fn unindex(h: &VolumeHeader, idx: usize) -> [usize; 3] {
    [idx % h.dims[0], (idx / h.dims[0]) % h.dims[1], idx / (h.dims[0] * h.dims[1])]
}

fn local_maxima(response: &[f32], h: &VolumeHeader, threshold: f32) -> Vec<usize> {
    let mut out = Vec::new();
    for (idx, &v) in response.iter().enumerate() {
        if v < threshold {
            continue;
        }
        let [x, y, z] = unindex(h, idx);
        let mut is_max = true;
        'scan: for dz in -1i64..=1 {
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 && dz == 0 {
                        continue;
                    }
                    let (nx, ny, nz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                    if nx < 0 || ny < 0 || nz < 0 {
                        continue;
                    }
                    let (nx, ny, nz) = (nx as usize, ny as usize, nz as usize);
                    if nx >= h.dims[0] || ny >= h.dims[1] || nz >= h.dims[2] {
                        continue;
                    }
                    let nidx = h.index(nx, ny, nz);
                    let w = response[nidx];
                    if w > v || (w == v && nidx < idx) {
                        is_max = false;
                        break 'scan;
                    }
                }
            }
        }
        if is_max {
            out.push(idx);
        }
    }
    out
}

fn refine(response: &[f32], h: &VolumeHeader, idx: usize) -> [f64; 3] {
    let c = unindex(h, idx);
    let strides = [1, h.dims[0], h.dims[0] * h.dims[1]];
    let mut voxel = [0.0; 3];
    for a in 0..3 {
        voxel[a] = c[a] as f64;
        if c[a] == 0 || c[a] + 1 >= h.dims[a] {
            continue;
        }
        let l = response[idx - strides[a]] as f64;
        let m = response[idx] as f64;
        let r = response[idx + strides[a]] as f64;
        let curvature = l - 2.0 * m + r;
        if curvature < 0.0 {
            voxel[a] += (0.5 * (l - r) / curvature).clamp(-0.5, 0.5);
        }
    }
    h.voxel_to_world(voxel)
}
