use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{VolumeError, VolumeHeader, VolumeTimeSeries};

/// One cell at one timepoint: an isotropic Gaussian blob.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobSample {
    pub timepoint: usize,
    /// World units.
    pub center: [f64; 3],
    /// World units.
    pub sigma: f64,
    pub peak: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellTrajectory {
    pub id: u32,
    pub samples: Vec<BlobSample>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivisionEvent {
    pub parent: u32,
    /// The parent's last timepoint.
    pub timepoint: usize,
    pub children: [u32; 2],
}

/// Ground truth for a synthetic dataset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub cells: Vec<CellTrajectory>,
    #[serde(default)]
    pub divisions: Vec<DivisionEvent>,
}

impl SyntheticScene {
    pub fn cell(&self, id: u32) -> Option<&CellTrajectory> {
        self.cells.iter().find(|c| c.id == id)
    }

    /// Blobs present at `t`, with their cell ids.
    pub fn blobs_at(&self, t: usize) -> Vec<(u32, BlobSample)> {
        self.cells
            .iter()
            .flat_map(|c| c.samples.iter().filter(|s| s.timepoint == t).map(move |s| (c.id, *s)))
            .collect()
    }

    pub fn validate(&self, header: &VolumeHeader) -> Result<(), VolumeError> {
        for cell in &self.cells {
            for pair in cell.samples.windows(2) {
                if pair[1].timepoint != pair[0].timepoint + 1 {
                    return Err(VolumeError::Validation(format!("cell {} trajectory is not contiguous", cell.id)));
                }
            }
            for s in &cell.samples {
                if s.timepoint >= header.timepoints {
                    return Err(VolumeError::Validation(format!(
                        "cell {} has timepoint {} outside the dataset",
                        cell.id, s.timepoint
                    )));
                }
                if !header.contains(s.center) {
                    return Err(VolumeError::Validation(format!(
                        "cell {} center {:?} at t={} is outside the volume",
                        cell.id, s.center, s.timepoint
                    )));
                }
                if !(s.sigma > 0.0) {
                    return Err(VolumeError::Validation(format!("cell {} has non-positive sigma", cell.id)));
                }
            }
        }
        for d in &self.divisions {
            let parent = self
                .cell(d.parent)
                .ok_or_else(|| VolumeError::Validation(format!("division parent {} unknown", d.parent)))?;
            let last = parent.samples.last().map(|s| s.timepoint);
            if last != Some(d.timepoint) {
                return Err(VolumeError::Validation(format!(
                    "division of cell {} is not at its last timepoint",
                    d.parent
                )));
            }
            for child in d.children {
                let c = self
                    .cell(child)
                    .ok_or_else(|| VolumeError::Validation(format!("division child {child} unknown")))?;
                if c.samples.first().map(|s| s.timepoint) != Some(d.timepoint + 1) {
                    return Err(VolumeError::Validation(format!(
                        "child {child} must start right after its parent's last timepoint"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Renders the scene: each frame is the sum of its blobs plus uniform
    /// noise in `[0, noise_level)`, rounded and clamped to `u16`.
    /// Deterministic for a fixed `seed`.
    pub fn generate(&self, header: &VolumeHeader, noise_level: f64, seed: u64) -> Result<VolumeTimeSeries, VolumeError> {
        header.validate()?;
        self.validate(header)?;
        if !(noise_level >= 0.0 && noise_level.is_finite()) {
            return Err(VolumeError::Validation("noise level must be non-negative".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = header.voxels_per_frame();
        let mut frames = Vec::with_capacity(header.timepoints);
        for t in 0..header.timepoints {
            let mut acc = vec![0.0f64; n];
            for (_, blob) in self.blobs_at(t) {
                splat(&mut acc, header, &blob);
            }
            let frame = acc
                .into_iter()
                .map(|v| {
                    let noise = if noise_level > 0.0 { rng.gen::<f64>() * noise_level } else { 0.0 };
                    (v + noise).round().clamp(0.0, u16::MAX as f64) as u16
                })
                .collect();
            frames.push(frame);
        }
        VolumeTimeSeries::new(header.clone(), frames)
    }
}

/// Parameters for [`SyntheticScene::random`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct RandomSceneConfig {
    pub cells: usize,
    /// World units.
    pub sigma: f64,
    pub peak: f64,
    /// Largest displacement between consecutive timepoints, world units.
    pub max_step: f64,
    /// Smallest allowed distance between two cells at any timepoint.
    pub min_separation: f64,
}

impl Default for RandomSceneConfig {
    fn default() -> Self {
        RandomSceneConfig { cells: 10, sigma: 2.0, peak: 1000.0, max_step: 1.5, min_separation: 8.0 }
    }
}

impl SyntheticScene {
    /// Cells random-walking through the whole time range, kept at least
    /// `min_separation` apart and `2 sigma` away from the volume faces where
    /// the volume allows it. Each trajectory is resampled until it fits;
    /// fails when a cell cannot be placed.
    pub fn random(header: &VolumeHeader, config: &RandomSceneConfig, seed: u64) -> Result<Self, VolumeError> {
        header.validate()?;
        if !(config.sigma > 0.0 && config.max_step >= 0.0 && config.min_separation >= 0.0) {
            return Err(VolumeError::Validation("invalid random scene parameters".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let extent = header.extent();
        let lo: [f64; 3] = std::array::from_fn(|a| (2.0 * config.sigma).min(extent[a] / 2.0));
        let hi: [f64; 3] = std::array::from_fn(|a| extent[a] - lo[a]);
        let mut cells: Vec<CellTrajectory> = Vec::with_capacity(config.cells);
        for id in 0..config.cells {
            let mut placed = None;
            for _ in 0..2000 {
                let mut p: [f64; 3] = std::array::from_fn(|a| rng.gen_range(lo[a]..=hi[a]));
                let mut samples = Vec::with_capacity(header.timepoints);
                for t in 0..header.timepoints {
                    if t > 0 {
                        let step = random_step(&mut rng, config.max_step);
                        p = std::array::from_fn(|a| (p[a] + step[a]).clamp(lo[a], hi[a]));
                    }
                    samples.push(BlobSample { timepoint: t, center: p, sigma: config.sigma, peak: config.peak });
                }
                let clear = cells.iter().all(|c| {
                    c.samples.iter().zip(&samples).all(|(a, b)| super::distance(a.center, b.center) >= config.min_separation)
                });
                if clear {
                    placed = Some(samples);
                    break;
                }
            }
            let samples = placed.ok_or_else(|| VolumeError::Validation(format!("could not place cell {id}")))?;
            cells.push(CellTrajectory { id: id as u32, samples });
        }
        Ok(SyntheticScene { cells, divisions: vec![] })
    }
}

/// Uniform direction, uniform length in `[0, max]`.
fn random_step(rng: &mut ChaCha8Rng, max: f64) -> [f64; 3] {
    if max == 0.0 {
        return [0.0; 3];
    }
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-1.0..=1.0));
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-6 && n <= 1.0 {
            let len = rng.gen_range(0.0..=max);
            return v.map(|c| c / n * len);
        }
    }
}

/// Adds one Gaussian to `acc`, evaluated within 4 sigma of its center.
fn splat(acc: &mut [f64], header: &VolumeHeader, blob: &BlobSample) {
    let reach = 4.0 * blob.sigma;
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    for a in 0..3 {
        let vs = header.voxel_size[a];
        lo[a] = ((blob.center[a] - reach) / vs).floor().max(0.0) as usize;
        hi[a] = (((blob.center[a] + reach) / vs).ceil().max(0.0) as usize).min(header.dims[a] - 1);
    }
    let inv = 1.0 / (2.0 * blob.sigma * blob.sigma);
    for z in lo[2]..=hi[2] {
        let dz = z as f64 * header.voxel_size[2] - blob.center[2];
        for y in lo[1]..=hi[1] {
            let dy = y as f64 * header.voxel_size[1] - blob.center[1];
            for x in lo[0]..=hi[0] {
                let dx = x as f64 * header.voxel_size[0] - blob.center[0];
                acc[header.index(x, y, z)] += blob.peak * (-(dx * dx + dy * dy + dz * dz) * inv).exp();
            }
        }
    }
}
