use serde::{Deserialize, Serialize};

/// Three-tap binomial kernel slid along each ray profile.
pub const KERNEL: [f64; 3] = [0.25, 0.5, 0.25];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct SmoothingConfig {
    pub iterations: u32,
    /// Maxima below this fraction of the session-wide largest smoothed sample
    /// are ignored.
    pub maxima_threshold_fraction: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig { iterations: 4, maxima_threshold_fraction: 0.1 }
    }
}

impl SmoothingConfig {
    pub fn with_iterations(iterations: u32) -> Self {
        SmoothingConfig { iterations, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.maxima_threshold_fraction) {
            return Err("maximaThresholdFraction must lie in [0, 1]".into());
        }
        Ok(())
    }
}

/// Applies `iterations` passes of [`KERNEL`], repeating the edge samples at
/// the boundaries. Length is preserved.
pub fn smooth_profile(raw: &[f64], iterations: u32) -> Vec<f64> {
    let mut cur = raw.to_vec();
    if cur.len() < 2 {
        return cur;
    }
    let mut next = vec![0.0; cur.len()];
    let last = cur.len() - 1;
    for _ in 0..iterations {
        for i in 0..=last {
            let left = cur[i.saturating_sub(1)];
            let right = cur[(i + 1).min(last)];
            next[i] = KERNEL[0] * left + KERNEL[1] * cur[i] + KERNEL[2] * right;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur
}

/// Interior indices strictly greater than both neighbours and at least
/// `threshold`, ascending.
pub fn find_local_maxima(smoothed: &[f64], threshold: f64) -> Vec<usize> {
    if smoothed.len() < 3 {
        return Vec::new();
    }
    (1..smoothed.len() - 1)
        .filter(|&i| smoothed[i] > smoothed[i - 1] && smoothed[i] > smoothed[i + 1] && smoothed[i] >= threshold)
        .collect()
}
