//! Offline commands. Every command is deterministic for fixed inputs and
//! seeds.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use celltrace::detect::{self, link_timepoints};
use celltrace::graph::LineageGraph;
use celltrace::project::{Project, ProjectManifest};
use celltrace::render::bench::{bench_populate, BenchShape, PopulateReport};
use celltrace::trace::{commit_track, read_trace_file, write_trace_file, CommitSummary, RayProfile, TrackPoint};
use celltrace::volume::{normalize, RandomSceneConfig, SyntheticScene, VolumeHeader};

pub const TRUTH_FILE: &str = "truth.json";
pub const RAYS_FILE: &str = "rays.json";

#[derive(Clone, Debug)]
pub struct GenerateOptions {
    pub out: PathBuf,
    pub name: String,
    pub dims: [usize; 3],
    pub voxel_size: [f64; 3],
    pub timepoints: usize,
    pub scene: RandomSceneConfig,
    pub noise: f64,
    pub seed: u64,
    /// Also write a ray recording that follows cell 0 backwards in time.
    pub rays: bool,
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GenerateSummary {
    pub project: PathBuf,
    pub cells: usize,
    pub timepoints: usize,
    pub rays: Option<PathBuf>,
}

/// Writes a synthetic project: volume, empty graph, manifest, the ground
/// truth scene and optionally a ray recording.
pub fn generate(opts: &GenerateOptions) -> Result<GenerateSummary> {
    let header = VolumeHeader::new(opts.dims, opts.voxel_size, opts.timepoints)?;
    let scene = SyntheticScene::random(&header, &opts.scene, opts.seed)?;
    let volume = scene.generate(&header, opts.noise, opts.seed)?;
    let graph = LineageGraph::new(opts.timepoints as i32);
    let project = Project::create(&opts.out, ProjectManifest::new(&opts.name), graph, volume)?;
    fs::write(opts.out.join(TRUTH_FILE), serde_json::to_vec_pretty(&scene)?)?;

    let mut rays_path = None;
    if opts.rays {
        let Some(cell) = scene.cells.first() else { bail!("--rays needs at least one cell") };
        let dir = normalize([1.0, 0.2, 1.0]);
        let reach = 8.0 * opts.scene.sigma;
        let step = header.default_ray_step();
        let mut rays = Vec::new();
        for s in cell.samples.iter().rev() {
            let origin = std::array::from_fn(|a| s.center[a] - reach * dir[a]);
            rays.push(RayProfile::sample(&project.volume, s.timepoint as i32, origin, dir, step, 2.0 * reach)?);
        }
        let path = opts.out.join(RAYS_FILE);
        write_trace_file(&path, &rays)?;
        rays_path = Some(path);
    }
    Ok(GenerateSummary { project: opts.out.clone(), cells: scene.cells.len(), timepoints: opts.timepoints, rays: rays_path })
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExtractSummary {
    pub track: Vec<TrackPoint>,
    pub committed: Option<CommitSummary>,
}

/// Extracts a track from a ray recording. Rays without samples are sampled
/// from the project volume first. With `commit` the track is written into
/// the project graph.
pub fn extract(project_dir: &Path, rays: &Path, iterations: Option<u32>, commit: bool) -> Result<ExtractSummary> {
    let mut project = Project::open(project_dir)?;
    let mut recorded = read_trace_file(rays).with_context(|| format!("reading {}", rays.display()))?;
    let diagonal = project.volume.header().diagonal();
    for ray in &mut recorded {
        if ray.raw.is_empty() {
            *ray = RayProfile::sample(&project.volume, ray.timepoint, ray.origin, ray.direction, ray.step, diagonal)?;
        }
    }
    let mut smoothing = project.manifest.config.smoothing;
    if let Some(n) = iterations {
        smoothing.iterations = n;
    }
    let track = celltrace::trace::extract_track(recorded, project.manifest.config.direction, smoothing)?;
    let committed = if commit {
        let radius = project.manifest.config.merge_radius_for(project.volume.header().min_voxel_size());
        let summary = commit_track(&track, &mut project.graph, radius)?;
        project.save()?;
        Some(summary)
    } else {
        None
    };
    Ok(ExtractSummary { track, committed })
}

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CountSummary {
    pub timepoints: Vec<i32>,
    pub added: usize,
    pub spots: usize,
    pub links: usize,
}

fn timepoint_range(t: Option<i32>, last: i32) -> Result<Vec<i32>> {
    match t {
        Some(t) if (0..=last).contains(&t) => Ok(vec![t]),
        Some(t) => bail!("timepoint {t} outside 0..={last}"),
        None => Ok((0..=last).collect()),
    }
}

/// Runs detection on one timepoint (or all) and saves the project.
pub fn detect(project_dir: &Path, timepoint: Option<i32>) -> Result<CountSummary> {
    let mut project = Project::open(project_dir)?;
    let last = project.graph.timepoints() - 1;
    let ts = timepoint_range(timepoint, last)?;
    let cfg = project.manifest.config.detection;
    let voxel = project.volume.header().min_voxel_size();
    let mut added = 0;
    for &t in &ts {
        let dets = detect::detect(&project.volume, t as i64, &cfg)?;
        added += detect::add_detections(&mut project.graph, t, &dets, &cfg, voxel)?.len();
    }
    project.save()?;
    Ok(CountSummary { timepoints: ts, added, spots: project.graph.spot_count(), links: project.graph.link_count() })
}

/// Links `t -> t + 1` for one source timepoint (or all) and saves.
pub fn link(project_dir: &Path, from: Option<i32>) -> Result<CountSummary> {
    let mut project = Project::open(project_dir)?;
    let last = project.graph.timepoints() - 2;
    if last < 0 {
        bail!("linking needs at least two timepoints");
    }
    let ts = timepoint_range(from, last)?;
    let cfg = project.manifest.config.linking;
    let mut added = 0;
    for &t in &ts {
        added += link_timepoints(&mut project.graph, t, &cfg)?.len();
    }
    project.save()?;
    Ok(CountSummary { timepoints: ts, added, spots: project.graph.spot_count(), links: project.graph.link_count() })
}

pub const SPOTS_CSV: &str = "spots.csv";
pub const LINKS_CSV: &str = "links.csv";

/// Writes `spots.csv` and `links.csv` into `out`.
pub fn export(project_dir: &Path, out: &Path) -> Result<[PathBuf; 2]> {
    let project = Project::open(project_dir)?;
    fs::create_dir_all(out)?;
    let (spots, links) = project.graph.to_csv();
    let paths = [out.join(SPOTS_CSV), out.join(LINKS_CSV)];
    fs::write(&paths[0], spots)?;
    fs::write(&paths[1], links)?;
    Ok(paths)
}

/// Parses `M` or `LO-HI`.
pub fn parse_spot_range(s: &str) -> Result<(usize, usize)> {
    let (lo, hi) = match s.split_once('-') {
        Some((a, b)) => (a.trim().parse()?, b.trim().parse()?),
        None => {
            let m = s.trim().parse()?;
            (m, m)
        }
    };
    let shape = BenchShape { links: 0, spots_per_timepoint: (lo, hi), seed: 0 };
    shape.validate().map_err(anyhow::Error::msg)?;
    Ok((lo, hi))
}

pub fn bench(shape: &BenchShape, repeats: usize, report: Option<&Path>) -> Result<PopulateReport> {
    shape.validate().map_err(anyhow::Error::msg)?;
    let r = bench_populate(shape, repeats);
    if let Some(path) = report {
        fs::write(path, serde_json::to_vec_pretty(&r)?).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(r)
}
