//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::time::Instant;

use celltrace::bridge::{Envelope, Replica, Request, Session, SessionConfig};
use celltrace::detect::{add_detections, detect, link_timepoints, DetectionConfig, LinkingConfig};
use celltrace::graph::{Covariance, LineageGraph, LinkId, SpotId};
use celltrace::render::bench::{bench_populate, BenchShape};
use celltrace::render::VisibilityWindow;
use celltrace::trace::{extract_track, LayerGraph, LocalMaximum, RayProfile, SmoothingConfig, TimeDirection, TrackPoint};
use celltrace::volume::{distance, BlobSample, CellTrajectory, RandomSceneConfig, SyntheticScene, VolumeHeader};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{random_graph, random_traffic, spot_timepoint};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---- smoothing ------------------------------------------------------------

/// Two blobs: the target sits still except for one frame where it steps
/// 5.5 units deeper along the viewing axis; a dimmer neighbour drifts past
/// 2 units beside the axis, within 2 sigma of the target on the frames
/// around that step. Rays run along the axis through the target.
fn crossing_fixture() -> (Vec<RayProfile>, Vec<[f64; 3]>, Vec<[f64; 3]>) {
    let timepoints = 12;
    let header = VolumeHeader::new([32, 48, 40], [1.0; 3], timepoints).unwrap();
    let target: Vec<[f64; 3]> = (0..timepoints).map(|t| [16.0, 24.0, if t == 6 { 25.5 } else { 20.0 }]).collect();
    let other: Vec<[f64; 3]> = (0..timepoints).map(|t| [18.0, 24.0 + 3.0 * (t as f64 - 6.0), 20.0]).collect();
    let cell = |id: u32, centers: &[[f64; 3]], peak: f64| CellTrajectory {
        id,
        samples: centers
            .iter()
            .enumerate()
            .map(|(t, &center)| BlobSample { timepoint: t, center, sigma: 2.0, peak })
            .collect(),
    };
    let scene = SyntheticScene { cells: vec![cell(0, &target, 1000.0), cell(1, &other, 600.0)], divisions: vec![] };
    // noise amplitude is 10% of the target's peak
    let volume = scene.generate(&header, 100.0, 5).unwrap();
    let step = header.default_ray_step();
    let rays = (0..timepoints)
        .rev()
        .map(|t| RayProfile::sample(&volume, t as i32, [16.0, 24.0, 0.0], [0.0, 0.0, 1.0], step, 39.0).unwrap())
        .collect();
    (rays, target, other)
}

fn smoothing_reproduction() -> Outcome {
    let start = Instant::now();
    let (rays, target, other) = crossing_fixture();
    let tolerance = 2.0 * rays[0].step;
    let closest_pass = target.iter().zip(&other).map(|(a, b)| distance(*a, *b)).fold(f64::INFINITY, f64::min);
    if closest_pass >= 4.0 {
        return Err(format!("fixture blobs never come within 2 sigma ({closest_pass:.2})"));
    }
    let run = |iterations: u32| extract_track(rays.clone(), TimeDirection::Backwards, SmoothingConfig::with_iterations(iterations));
    let raw = run(0).map_err(|e| e.to_string())?;
    let wrong: Vec<i32> = raw
        .iter()
        .filter(|p| {
            let t = p.timepoint as usize;
            distance(p.position, other[t]) < distance(p.position, target[t])
        })
        .map(|p| p.timepoint)
        .collect();
    let mut errors = Vec::new();
    let mut smoothed_ok = true;
    for iterations in [4, 5, 6] {
        let track = run(iterations).map_err(|e| e.to_string())?;
        let worst = track.iter().map(|p| distance(p.position, target[p.timepoint as usize])).fold(0.0, f64::max);
        smoothed_ok &= track.len() == target.len() && worst <= tolerance;
        errors.push(format!("{iterations}:{worst:.2}"));
    }
    let elapsed = start.elapsed().as_secs_f64();
    check(
        !wrong.is_empty() && smoothed_ok && elapsed < 10.0,
        format!(
            "0 iterations: wrong blob at t={wrong:?}; max error per iterations {} (tolerance {tolerance}); {elapsed:.2}s",
            errors.join(" ")
        ),
    )
}

// ---- population benchmark -------------------------------------------------

fn population_benchmark() -> Outcome {
    let small = bench_populate(&BenchShape::SMALL, 3);
    let large = bench_populate(&BenchShape::LARGE, 1);
    let ratio = large.seconds_per_link / small.seconds_per_link;
    check(
        small.links == 3000 && large.links == 243_000 && large.population_seconds < 15.0 && ratio <= 3.0,
        format!(
            "small {:.4}s ({} spots), large {:.3}s ({} spots), per-link ratio {ratio:.2}",
            small.population_seconds, small.spots, large.population_seconds, large.spots
        ),
    )
}

// ---- graph fuzz -----------------------------------------------------------

/// Adjacency recomputed from the public link list only.
fn scan_matches_chains(g: &LineageGraph) -> Result<(), String> {
    let mut out: BTreeMap<SpotId, BTreeSet<LinkId>> = BTreeMap::new();
    let mut inc: BTreeMap<SpotId, BTreeSet<LinkId>> = BTreeMap::new();
    for l in g.link_ids() {
        let r = g.link(l).unwrap();
        out.entry(SpotId(r.source)).or_default().insert(l);
        inc.entry(SpotId(r.target)).or_default().insert(l);
    }
    for s in g.spot_ids() {
        let walked_out: BTreeSet<LinkId> = g.outgoing(s).collect();
        let walked_in: BTreeSet<LinkId> = g.incoming(s).collect();
        if walked_out != out.remove(&s).unwrap_or_default() || walked_in != inc.remove(&s).unwrap_or_default() {
            return Err(format!("adjacency of spot {} differs from scan", s.0));
        }
    }
    if !out.is_empty() || !inc.is_empty() {
        return Err("link references a spot that is not alive".into());
    }
    Ok(())
}

fn random_edit(g: &mut LineageGraph, rng: &mut ChaCha8Rng) {
    let spots: Vec<SpotId> = g.spot_ids().collect();
    let links: Vec<LinkId> = g.link_ids().collect();
    let pos = [rng.gen_range(0.0..40.0), rng.gen_range(0.0..40.0), rng.gen_range(0.0..10.0)];
    let _ = match rng.gen_range(0..10) {
        0..=2 => g.add_spot(rng.gen_range(0..g.timepoints()), pos, Covariance::isotropic(rng.gen_range(0.5..2.0))).map(|_| ()),
        3 if !spots.is_empty() => g.move_spot(spots[rng.gen_range(0..spots.len())], pos),
        4 if !spots.is_empty() => g.delete_spot(spots[rng.gen_range(0..spots.len())]),
        5 | 6 if !spots.is_empty() => {
            let s = spots[rng.gen_range(0..spots.len())];
            let next = g.spots_at_timepoint(spot_timepoint(g, s) + 1);
            if next.is_empty() {
                Ok(())
            } else {
                g.add_link(s, next[rng.gen_range(0..next.len())]).map(|_| ())
            }
        }
        7 if !links.is_empty() => g.delete_link(links[rng.gen_range(0..links.len())]),
        8 if !spots.is_empty() => g.set_tag(spots[rng.gen_range(0..spots.len())], if rng.gen() { Some("tp") } else { None }),
        _ => Ok(()),
    };
}

fn graph_fuzz() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut g = LineageGraph::new(8);
    let mut violations = 0;
    let mut first = None;
    let (mut undos, mut redos) = (0, 0);
    for op in 0..1000 {
        match rng.gen_range(0..10) {
            0 => undos += g.undo() as usize,
            1 => redos += g.redo() as usize,
            _ => random_edit(&mut g, &mut rng),
        }
        let result = g.validate().map_err(|v| v.join("; ")).and_then(|_| scan_matches_chains(&g));
        if let Err(e) = result {
            violations += 1;
            first.get_or_insert(format!("op {op}: {e}"));
        }
    }
    check(
        violations == 0,
        format!(
            "{violations} violations over 1000 operations ({undos} undos, {redos} redos, {} spots, {} links){}",
            g.spot_count(),
            g.link_count(),
            first.map(|f| format!("; first: {f}")).unwrap_or_default()
        ),
    )
}

// ---- undo -----------------------------------------------------------------

fn undo_completeness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let mut failures = 0;
    for _ in 0..100 {
        let mut g = random_graph(&mut rng, 8, 40, 30);
        let before = g.to_csv();
        for _ in 0..50 {
            random_edit(&mut g, &mut rng);
        }
        while g.undo() {}
        if g.to_csv() != before {
            failures += 1;
        }
    }
    check(failures == 0, format!("{failures}/100 sequences differ after full undo"))
}

// ---- sliding window -------------------------------------------------------

fn sliding_window() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut mismatches = 0;
    let mut visible = 0;
    for _ in 0..100 {
        let g = random_graph(&mut rng, 15, 60, 50);
        let width: u32 = rng.gen_range(0..8);
        let current = rng.gen_range(-2..17);
        let got = VisibilityWindow::build(&g, width).visible_links(&g, current).map_err(|e| e.to_string())?;
        let expected: BTreeSet<LinkId> = g
            .link_ids()
            .filter(|&l| {
                let r = g.link(l).unwrap();
                let (a, b) = (spot_timepoint(&g, SpotId(r.source)), spot_timepoint(&g, SpotId(r.target)));
                a.min(b) as i64 >= current as i64 - width as i64 && a.max(b) <= current
            })
            .collect();
        visible += expected.len();
        mismatches += (got != expected) as usize;
    }
    check(mismatches == 0, format!("{mismatches}/100 triples differ ({visible} visible links in total)"))
}

// ---- detection ------------------------------------------------------------

/// Greedy one-to-one matching of detections to truth within `tolerance`.
fn match_points(truth: &[[f64; 3]], found: &[[f64; 3]], tolerance: f64) -> HashMap<usize, usize> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, t) in truth.iter().enumerate() {
        for (j, f) in found.iter().enumerate() {
            let d = distance(*t, *f);
            if d <= tolerance {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut used = HashSet::new();
    let mut out = HashMap::new();
    for (_, i, j) in pairs {
        if !out.contains_key(&i) && used.insert(j) {
            out.insert(i, j);
        }
    }
    out
}


fn detection_fidelity() -> Outcome {
    let header = VolumeHeader::new([64, 64, 24], [1.0; 3], 5).unwrap();
    let dcfg = DetectionConfig::default();
    let lcfg = LinkingConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let (mut truths, mut found, mut matched) = (0, 0, 0);
    let (mut truth_links, mut recovered) = (0, 0);
    for scene_index in 0..20u64 {
        let cells = rng.gen_range(5..=30);
        let config = RandomSceneConfig {
            cells,
            sigma: 2.0,
            peak: 1000.0,
            max_step: lcfg.max_link_distance / 2.0,
            min_separation: 8.0,
        };
        let scene = SyntheticScene::random(&header, &config, scene_index).map_err(|e| e.to_string())?;
        let noise = rng.gen_range(0.0..=100.0);
        let volume = scene.generate(&header, noise, scene_index).map_err(|e| e.to_string())?;
        let mut g = LineageGraph::new(header.timepoints as i32);
        // per timepoint: truth cell id -> spot
        let mut assigned: Vec<HashMap<u32, SpotId>> = Vec::new();
        for t in 0..header.timepoints {
            let blobs = scene.blobs_at(t);
            let truth: Vec<[f64; 3]> = blobs.iter().map(|(_, b)| b.center).collect();
            let dets = detect(&volume, t as i64, &dcfg).map_err(|e| e.to_string())?;
            let ids = add_detections(&mut g, t as i32, &dets, &dcfg, header.min_voxel_size()).map_err(|e| e.to_string())?;
            let positions: Vec<[f64; 3]> = dets.iter().map(|d| d.position).collect();
            let m = match_points(&truth, &positions, 1.0);
            truths += truth.len();
            found += dets.len();
            matched += m.len();
            assigned.push(m.iter().map(|(&i, &j)| (blobs[i].0, ids[j])).collect());
        }
        for t in 0..header.timepoints as i32 - 1 {
            link_timepoints(&mut g, t, &lcfg).map_err(|e| e.to_string())?;
        }
        for cell in &scene.cells {
            for pair in cell.samples.windows(2) {
                truth_links += 1;
                let (a, b) = (pair[0].timepoint, pair[1].timepoint);
                if let (Some(&s), Some(&d)) = (assigned[a].get(&cell.id), assigned[b].get(&cell.id)) {
                    recovered += g.find_link(s, d).is_some() as usize;
                }
            }
        }
    }
    let recall = matched as f64 / truths as f64;
    let precision = matched as f64 / found as f64;
    let link_rate = recovered as f64 / truth_links as f64;
    check(
        recall >= 0.95 && precision >= 0.95 && link_rate >= 0.95,
        format!(
            "recall {:.1}% precision {:.1}% ({matched}/{truths} blobs, {found} detections); links {:.1}% ({recovered}/{truth_links})",
            100.0 * recall,
            100.0 * precision,
            100.0 * link_rate
        ),
    )
}

// ---- bridge ---------------------------------------------------------------

fn send(s: &mut Session, client: &str, r: &Request) {
    s.handle_text(client, &Envelope::request(r).to_json());
}

fn bridge_consistency() -> Outcome {
    let mut s = Session::new(LineageGraph::new(10), None, SessionConfig::default()).map_err(|e| e.to_string())?;
    let clients: Vec<String> = (0..3).map(|_| s.connect()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    random_traffic(&mut s, &clients, &mut rng, 500);
    send(&mut s, &clients[0], &Request::TerminateTrack {});
    let log = s.log().to_vec();
    let replica = Replica::replay(10, &log).map_err(|e| e.to_string())?;
    let replay_ok = replica.graph().to_csv() == s.graph().to_csv();

    // a client that sends every message it receives straight back
    let mut s = Session::new(LineageGraph::new(20), None, SessionConfig::default()).map_err(|e| e.to_string())?;
    let a = s.connect();
    let b = s.connect();
    s.drain(&a);
    s.drain(&b);
    let mut rounds = 0;
    for i in 0..50 {
        let t = rng.gen_range(0..19);
        send(&mut s, &a, &Request::AddSpot { timepoint: t, position: [i as f64, 0.0, 0.0], covariance: None, id: None });
        send(&mut s, &a, &Request::SetTimepoint { timepoint: t });
        loop {
            let inbox = s.drain(&b);
            if inbox.is_empty() || rounds > 10_000 {
                break;
            }
            rounds += 1;
            for m in inbox {
                s.handle_text(&b, &m.to_json());
            }
        }
    }
    let echoed = s.log().iter().filter(|e| e.origin == b).count();
    let to_a = s.drain(&a);
    let non_acks = to_a.iter().filter(|m| m.kind != "ack").count();
    let feedback_ok = rounds <= 10_000 && echoed == 0 && non_acks == 0 && s.log().len() == 100;
    check(
        replay_ok && feedback_ok,
        format!(
            "replay of {} events {}; feedback client: {rounds} bounce rounds, {echoed} echoed events, {non_acks} non-ack messages to the editor",
            log.len(),
            if replay_ok { "matches" } else { "differs" }
        ),
    )
}

// ---- path optimality ------------------------------------------------------

fn collapse(g: &LayerGraph, nodes: &[usize]) -> Vec<TrackPoint> {
    let mut best: BTreeMap<i32, LocalMaximum> = BTreeMap::new();
    for (layer, &n) in g.layers.iter().zip(nodes) {
        let m = layer.nodes[n];
        let e = best.entry(layer.timepoint).or_insert(m);
        if m.value > e.value {
            *e = m;
        }
    }
    best.into_iter().map(|(timepoint, m)| TrackPoint { timepoint, position: m.world_position }).collect()
}

fn exhaustive(g: &LayerGraph) -> (f64, Vec<usize>) {
    let start = (0..g.layers[0].nodes.len()).min_by_key(|&i| g.layers[0].nodes[i].sample_index).unwrap();
    let mut best = (f64::INFINITY, Vec::new());
    let mut path = vec![start];
    fn walk(g: &LayerGraph, path: &mut Vec<usize>, best: &mut (f64, Vec<usize>)) {
        if path.len() == g.layers.len() {
            let c = g.path_cost(path);
            if c < best.0 {
                *best = (c, path.clone());
            }
            return;
        }
        for n in 0..g.layers[path.len()].nodes.len() {
            path.push(n);
            walk(g, path, best);
            path.pop();
        }
    }
    walk(g, &mut path, &mut best);
    best
}

/// Profile with up to four separated bumps of random height.
fn random_profile(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let len = 60;
    let bumps = rng.gen_range(1..=4);
    let mut raw = vec![0.0; len];
    for k in 0..bumps {
        let center = 8.0 + 12.0 * k as f64 + rng.gen_range(-2.0..2.0);
        let height = rng.gen_range(200.0..1000.0);
        for (i, v) in raw.iter_mut().enumerate() {
            *v += height * (-((i as f64 - center).powi(2)) / 4.0).exp();
        }
    }
    raw
}

fn path_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut sessions = 0;
    let mut mismatches = 0;
    while sessions < 300 {
        let layers = rng.gen_range(1..=8);
        let mut t = 20;
        let rays: Vec<RayProfile> = (0..layers)
            .map(|_| {
                t -= rng.gen_range(0..=1);
                let dir = celltrace::volume::normalize([rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), 1.0]);
                RayProfile {
                    timepoint: t,
                    origin: [rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0), 0.0],
                    direction: dir,
                    step: 0.5,
                    raw: random_profile(&mut rng),
                    smoothed: vec![],
                }
            })
            .collect();
        let mut session = celltrace::trace::TraceSession::from_rays(rays, TimeDirection::Backwards, SmoothingConfig::default())
            .map_err(|e| e.to_string())?;
        session.analyze().map_err(|e| e.to_string())?;
        let g = session.layer_graph().map_err(|e| e.to_string())?;
        if g.layers.iter().any(|l| l.nodes.len() > 4) {
            continue;
        }
        sessions += 1;
        let (cost, nodes) = exhaustive(&g);
        let found = g.shortest_path();
        let track = session.extract_track().map_err(|e| e.to_string())?;
        if (found.cost - cost).abs() > 1e-9 || (found.cost - g.path_cost(&found.nodes)).abs() > 1e-9 || track != collapse(&g, &nodes) {
            mismatches += 1;
        }
    }
    check(mismatches == 0, format!("{mismatches}/{sessions} sessions differ from exhaustive enumeration"))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("smoothing reproduction", smoothing_reproduction),
        ("population benchmark", population_benchmark),
        ("graph oracle equivalence", graph_fuzz),
        ("undo completeness", undo_completeness),
        ("sliding window oracle", sliding_window),
        ("detection fidelity", detection_fidelity),
        ("bridge consistency", bridge_consistency),
        ("path optimality", path_optimality),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{secs:.2}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail} [{secs:.2}s]");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
