use serde::{Deserialize, Serialize};

use super::{VolumeError, VolumeTimeSeries};

/// Axis-aligned voxel box, `min` inclusive and `max` exclusive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoxelBox {
    pub min: [i64; 3],
    pub max: [i64; 3],
}

impl VoxelBox {
    pub fn dims(&self) -> [usize; 3] {
        std::array::from_fn(|a| (self.max[a] - self.min[a]).max(0) as usize)
    }

    pub fn is_empty(&self) -> bool {
        self.dims().contains(&0)
    }
}

/// Sub-box of one frame, samples x fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Slab {
    pub timepoint: usize,
    pub requested: VoxelBox,
    /// `requested` clipped to the volume; may be empty.
    pub actual: VoxelBox,
    pub data: Vec<u16>,
}

impl VolumeTimeSeries {
    /// Copies the part of `requested` that lies inside the volume.
    pub fn slab(&self, timepoint: i64, requested: VoxelBox) -> Result<Slab, VolumeError> {
        let t = self.check_timepoint(timepoint)?;
        let dims = self.header().dims;
        let mut actual = VoxelBox { min: [0; 3], max: [0; 3] };
        for a in 0..3 {
            actual.min[a] = requested.min[a].clamp(0, dims[a] as i64);
            actual.max[a] = requested.max[a].clamp(actual.min[a], dims[a] as i64);
        }
        let [nx, ny, nz] = actual.dims();
        let frame = &self.frames[t];
        let mut data = Vec::with_capacity(nx * ny * nz);
        for z in 0..nz {
            for y in 0..ny {
                let start = self.header().index(actual.min[0] as usize, actual.min[1] as usize + y, actual.min[2] as usize + z);
                data.extend_from_slice(&frame[start..start + nx]);
            }
        }
        Ok(Slab { timepoint: t, requested, actual, data })
    }
}
