//! On-disk volume layout: a directory holding `volume.json` (the header)
//! and `volume.raw`, little-endian `u16` samples ordered frame, z, y, x
//! (x fastest).

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{VolumeError, VolumeHeader, VolumeTimeSeries};

pub const HEADER_FILE: &str = "volume.json";
pub const RAW_FILE: &str = "volume.raw";

pub fn save_volume(volume: &VolumeTimeSeries, dir: &Path) -> Result<(), VolumeError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(HEADER_FILE), serde_json::to_vec_pretty(volume.header())?)?;
    let mut out = BufWriter::new(fs::File::create(dir.join(RAW_FILE))?);
    for frame in volume.frames() {
        for v in frame {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn load_volume(dir: &Path) -> Result<VolumeTimeSeries, VolumeError> {
    let header: VolumeHeader = serde_json::from_slice(&fs::read(dir.join(HEADER_FILE))?)?;
    header.validate()?;
    let n = header.voxels_per_frame();
    let mut bytes = Vec::new();
    fs::File::open(dir.join(RAW_FILE))?.read_to_end(&mut bytes)?;
    let expected = n * header.timepoints * 2;
    if bytes.len() != expected {
        return Err(VolumeError::Validation(format!(
            "{RAW_FILE} has {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let frames = bytes
        .chunks_exact(n * 2)
        .map(|frame| frame.chunks_exact(2).map(|b| u16::from_le_bytes([b[0], b[1]])).collect())
        .collect();
    VolumeTimeSeries::new(header, frames)
}
