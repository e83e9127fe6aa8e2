use serde::{Deserialize, Serialize};

use super::RenderError;

pub type Rgba = [f32; 4];

/// Piecewise-linear colormap over a timepoint range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ColorMap {
    pub name: String,
    pub stops: Vec<Rgba>,
    pub domain: (f64, f64),
}

impl ColorMap {
    pub fn new(name: &str, stops: Vec<Rgba>, t_min: f64, t_max: f64) -> Result<Self, RenderError> {
        let cmap = ColorMap { name: name.to_string(), stops, domain: (t_min, t_max) };
        cmap.validate()?;
        Ok(cmap)
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        if self.stops.len() < 2 {
            return Err(RenderError::ColorMap("at least two stops are required".into()));
        }
        if !(self.domain.0 < self.domain.1) {
            return Err(RenderError::ColorMap("domain must satisfy tMin < tMax".into()));
        }
        Ok(())
    }

    pub fn grayscale(t_min: f64, t_max: f64) -> Self {
        ColorMap { name: "grayscale".into(), stops: vec![[0.0, 0.0, 0.0, 1.0], [1.0, 1.0, 1.0, 1.0]], domain: (t_min, t_max) }
    }

    /// Five-stop approximation of viridis.
    pub fn viridis(t_min: f64, t_max: f64) -> Self {
        ColorMap {
            name: "viridis".into(),
            stops: vec![
                [0.267, 0.005, 0.329, 1.0],
                [0.229, 0.322, 0.546, 1.0],
                [0.128, 0.567, 0.551, 1.0],
                [0.369, 0.789, 0.383, 1.0],
                [0.993, 0.906, 0.144, 1.0],
            ],
            domain: (t_min, t_max),
        }
    }

    /// Named preset spanning `0..timepoints - 1`.
    pub fn preset(name: &str, timepoints: i32) -> Option<Self> {
        let t_max = (timepoints - 1).max(1) as f64;
        match name {
            "grayscale" => Some(Self::grayscale(0.0, t_max)),
            "viridis" => Some(Self::viridis(0.0, t_max)),
            _ => None,
        }
    }
}

/// Color for timepoint `t`: linear interpolation across the stops at
/// `u = clamp((t - tMin) / (tMax - tMin), 0, 1)`.
pub fn track_color(cmap: &ColorMap, t: f64) -> Rgba {
    let (lo, hi) = cmap.domain;
    let u = ((t - lo) / (hi - lo)).clamp(0.0, 1.0);
    let segments = (cmap.stops.len() - 1) as f64;
    let x = u * segments;
    let i = (x.floor() as usize).min(cmap.stops.len() - 2);
    let f = (x - i as f64) as f32;
    let (a, b) = (cmap.stops[i], cmap.stops[i + 1]);
    std::array::from_fn(|c| a[c] + f * (b[c] - a[c]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ends_and_midpoint() {
        let c = ColorMap::grayscale(0.0, 10.0);
        assert_eq!(track_color(&c, 0.0), [0.0, 0.0, 0.0, 1.0]);
        assert_eq!(track_color(&c, 10.0), [1.0, 1.0, 1.0, 1.0]);
        assert_eq!(track_color(&c, 5.0), [0.5, 0.5, 0.5, 1.0]);
        assert_eq!(track_color(&c, -3.0), [0.0, 0.0, 0.0, 1.0]);
        assert_eq!(track_color(&c, 30.0), [1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn multi_stop_hits_stops() {
        let c = ColorMap::viridis(0.0, 4.0);
        for (i, stop) in c.stops.iter().enumerate() {
            let got = track_color(&c, i as f64);
            for k in 0..4 {
                assert!((got[k] - stop[k]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn invalid_maps() {
        assert!(ColorMap::new("x", vec![[0.0; 4]], 0.0, 1.0).is_err());
        assert!(ColorMap::new("x", vec![[0.0; 4], [1.0; 4]], 1.0, 1.0).is_err());
        assert!(ColorMap::preset("nope", 5).is_none());
    }
}
