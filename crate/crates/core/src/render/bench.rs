//! Scene population benchmark over synthetic graphs shaped like real
//! tracking datasets: a fixed link count and a per-timepoint spot range.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{Covariance, LineageGraph, SpotId};

use super::pool::populate_pools;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BenchShape {
    pub links: usize,
    /// Inclusive range.
    pub spots_per_timepoint: (usize, usize),
    pub seed: u64,
}

impl BenchShape {
    pub const SMALL: BenchShape = BenchShape { links: 3000, spots_per_timepoint: (90, 110), seed: 1 };
    pub const LARGE: BenchShape = BenchShape { links: 243_000, spots_per_timepoint: (2500, 3700), seed: 1 };

    pub fn validate(&self) -> Result<(), String> {
        let (lo, hi) = self.spots_per_timepoint;
        if lo == 0 || lo > hi {
            return Err(format!("invalid spots-per-timepoint range {lo}..={hi}"));
        }
        Ok(())
    }
}

/// Builds a graph with exactly `shape.links` links. Each timepoint draws its
/// spot count from the range; spot `i` of one timepoint links to spot `i` of
/// the next, and the last pair of timepoints is linked only partially.
pub fn synthetic_graph(shape: &BenchShape) -> LineageGraph {
    let (lo, hi) = shape.spots_per_timepoint;
    let mut rng = ChaCha8Rng::seed_from_u64(shape.seed);
    let mut counts = vec![rng.gen_range(lo..=hi)];
    let mut pairs = 0usize;
    while pairs < shape.links {
        let n = rng.gen_range(lo..=hi);
        pairs += n.min(*counts.last().expect("non-empty"));
        counts.push(n);
    }
    let timepoints = if shape.links == 0 { 0 } else { counts.len() };
    let mut g = LineageGraph::new(timepoints as i32);
    if shape.links == 0 {
        return g;
    }
    let cov = Covariance::isotropic(1.0);
    let mut prev: Vec<SpotId> = Vec::new();
    let mut remaining = shape.links;
    for (t, &n) in counts.iter().enumerate() {
        let ids: Vec<SpotId> = (0..n)
            .map(|_| {
                let p = [rng.gen_range(0.0..512.0), rng.gen_range(0.0..512.0), rng.gen_range(0.0..64.0)];
                g.add_spot(t as i32, p, cov).expect("timepoint in range")
            })
            .collect();
        for (&a, &b) in prev.iter().zip(&ids) {
            if remaining == 0 {
                break;
            }
            g.add_link(a, b).expect("consecutive timepoints");
            remaining -= 1;
        }
        prev = ids;
    }
    g.clear_history();
    g
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PopulateReport {
    pub links: usize,
    pub spots_per_timepoint: (usize, usize),
    pub timepoints: i32,
    pub spots: usize,
    pub spot_capacity: usize,
    pub link_capacity: usize,
    pub population_seconds: f64,
    pub seconds_per_link: f64,
}

/// Times `populate_pools` on a synthetic graph of the given shape. The best
/// of `repeats` runs is reported.
pub fn bench_populate(shape: &BenchShape, repeats: usize) -> PopulateReport {
    let g = synthetic_graph(shape);
    let mut best = f64::INFINITY;
    let mut caps = (0, 0);
    for _ in 0..repeats.max(1) {
        let pools = populate_pools(&g);
        best = best.min(pools.population_seconds);
        caps = (pools.spots.capacity(), pools.links.capacity());
    }
    PopulateReport {
        links: g.link_count(),
        spots_per_timepoint: shape.spots_per_timepoint,
        timepoints: g.timepoints(),
        spots: g.spot_count(),
        spot_capacity: caps.0,
        link_capacity: caps.1,
        population_seconds: best,
        seconds_per_link: if g.link_count() == 0 { 0.0 } else { best / g.link_count() as f64 },
    }
}
