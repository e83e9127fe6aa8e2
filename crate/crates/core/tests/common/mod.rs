#![allow(dead_code)]

use celltrace::graph::{Covariance, LineageGraph, SpotId};
use rand::Rng;

/// Random graph: spots spread over `timepoints`, forward links between
/// random pairs on consecutive timepoints.
pub fn random_graph(rng: &mut impl Rng, timepoints: i32, spots: usize, links: usize) -> LineageGraph {
    let mut g = LineageGraph::new(timepoints);
    for _ in 0..spots {
        let t = rng.gen_range(0..timepoints);
        let p = [rng.gen_range(0.0..50.0), rng.gen_range(0.0..50.0), rng.gen_range(0.0..10.0)];
        g.add_spot(t, p, Covariance::isotropic(rng.gen_range(0.5..2.0))).unwrap();
    }
    for _ in 0..links {
        let t = rng.gen_range(0..timepoints - 1);
        let a = g.spots_at_timepoint(t);
        let b = g.spots_at_timepoint(t + 1);
        if a.is_empty() || b.is_empty() {
            continue;
        }
        let s = a[rng.gen_range(0..a.len())];
        let d = b[rng.gen_range(0..b.len())];
        if g.find_link(s, d).is_none() {
            g.add_link(s, d).unwrap();
        }
    }
    g.clear_history();
    g
}

pub fn spot_timepoint(g: &LineageGraph, id: SpotId) -> i32 {
    g.spot(id).unwrap().timepoint
}

use celltrace::volume::{BlobSample, CellTrajectory, SyntheticScene};
use celltrace::volume::{VolumeHeader, VolumeTimeSeries};

/// One blob drifting along x through a 32x32x16 volume with unit voxels.
pub fn moving_blob(timepoints: usize, noise: f64, seed: u64) -> (VolumeTimeSeries, SyntheticScene) {
    let header = VolumeHeader::new([32, 32, 16], [1.0; 3], timepoints).unwrap();
    let samples = (0..timepoints)
        .map(|t| BlobSample {
            timepoint: t,
            center: [8.0 + 1.5 * t as f64, 14.0 + 0.5 * t as f64, 8.0],
            sigma: 2.0,
            peak: 1000.0,
        })
        .collect();
    let scene = SyntheticScene { cells: vec![CellTrajectory { id: 0, samples }], divisions: vec![] };
    let volume = scene.generate(&header, noise, seed).unwrap();
    (volume, scene)
}

use celltrace::bridge::{Envelope, Request, Session};
use rand_chacha::ChaCha8Rng;

/// Random client traffic: edits, undo/redo, annotation and time changes.
pub fn random_traffic(s: &mut Session, clients: &[String], rng: &mut ChaCha8Rng, events: usize) {
    let mut guard = 0;
    while s.log().len() < events {
        guard += 1;
        assert!(guard < 100 * events);
        let c = &clients[rng.gen_range(0..clients.len())];
        let g = s.graph();
        let spots: Vec<u32> = g.spot_ids().map(|i| i.0).collect();
        let links: Vec<u32> = g.link_ids().map(|i| i.0).collect();
        let pick = |rng: &mut ChaCha8Rng, v: &[u32]| if v.is_empty() { 0 } else { v[rng.gen_range(0..v.len())] };
        let pos = [rng.gen_range(0.0..30.0), rng.gen_range(0.0..30.0), rng.gen_range(0.0..10.0)];
        let r = match rng.gen_range(0..12) {
            0..=2 => Request::AddSpot { timepoint: rng.gen_range(0..10), position: pos, covariance: None, id: None },
            3 => Request::MoveSpot { id: pick(rng, &spots), position: pos },
            4 => Request::DeleteSpot { id: pick(rng, &spots) },
            5 => {
                let s0 = pick(rng, &spots);
                let t = g.spot(SpotId(s0)).map_or(0, |sp| sp.timepoint);
                let next = g.spots_at_timepoint(t + 1);
                let target = if next.is_empty() { 0 } else { next[rng.gen_range(0..next.len())].0 };
                Request::AddLink { source: s0, target, id: None }
            }
            6 => Request::DeleteLink { id: pick(rng, &links) },
            7 => Request::SetTag { id: pick(rng, &spots), tag: if rng.gen() { Some("tp".into()) } else { None } },
            8 => Request::SetTimepoint { timepoint: rng.gen_range(-2..12) },
            9 => Request::Annotate { position: pos },
            10 => {
                if rng.gen() {
                    Request::Undo {}
                } else {
                    Request::Redo {}
                }
            }
            _ => Request::TerminateTrack {},
        };
        s.handle_text(c, &Envelope::request(&r).to_json());
    }
}
