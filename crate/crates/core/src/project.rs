//! Project files: a JSON manifest naming the volume directory, the graph
//! file (a [`GraphSnapshot`] as JSON) and the session configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bridge::SessionConfig;
use crate::graph::{GraphError, GraphSnapshot, LineageGraph};
use crate::volume::{load_volume, save_volume, VolumeError, VolumeTimeSeries};

pub const MANIFEST_FILE: &str = "project.json";
pub const GRAPH_FILE: &str = "graph.json";
pub const VOLUME_DIR: &str = "volume";

#[derive(Debug, Error)]
pub enum ProjectError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("volume: {0}")]
    Volume(#[from] VolumeError),
    #[error("graph: {0}")]
    Graph(#[from] GraphError),
    #[error("invalid project: {0}")]
    Invalid(String),
}

/// Paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProjectManifest {
    pub name: String,
    pub volume: PathBuf,
    pub graph: PathBuf,
    #[serde(flatten)]
    pub config: SessionConfig,
}

impl ProjectManifest {
    pub fn new(name: &str) -> Self {
        ProjectManifest {
            name: name.to_string(),
            volume: VOLUME_DIR.into(),
            graph: GRAPH_FILE.into(),
            config: SessionConfig::default(),
        }
    }

    pub fn read(path: &Path) -> Result<Self, ProjectError> {
        let text = fs::read(path).map_err(|source| ProjectError::Io { path: path.into(), source })?;
        serde_json::from_slice(&text).map_err(|source| ProjectError::Json { path: path.into(), source })
    }

    pub fn write(&self, path: &Path) -> Result<(), ProjectError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text).map_err(|source| ProjectError::Io { path: path.into(), source })
    }

    pub fn validate(&self) -> Result<(), ProjectError> {
        if self.name.trim().is_empty() {
            return Err(ProjectError::Invalid("name is empty".into()));
        }
        self.config.validate().map_err(|e| ProjectError::Invalid(e.to_string()))
    }
}

/// A loaded project.
#[derive(Clone, Debug)]
pub struct Project {
    pub manifest: ProjectManifest,
    /// Directory holding the manifest.
    pub root: PathBuf,
    pub graph: LineageGraph,
    pub volume: VolumeTimeSeries,
}

impl Project {
    /// Writes a new project into `root` using the default layout.
    pub fn create(
        root: &Path,
        manifest: ProjectManifest,
        graph: LineageGraph,
        volume: VolumeTimeSeries,
    ) -> Result<Self, ProjectError> {
        let p = Project { manifest, root: root.to_path_buf(), graph, volume };
        p.check()?;
        fs::create_dir_all(p.volume_dir()).map_err(|source| ProjectError::Io { path: p.volume_dir(), source })?;
        save_volume(&p.volume, &p.volume_dir())?;
        p.save()?;
        Ok(p)
    }

    /// Opens a manifest file, or the manifest inside a directory.
    pub fn open(path: &Path) -> Result<Self, ProjectError> {
        let manifest_path = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let manifest = ProjectManifest::read(&manifest_path)?;
        let root = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
        let volume = load_volume(&root.join(&manifest.volume))?;
        let graph_path = root.join(&manifest.graph);
        let text = fs::read(&graph_path).map_err(|source| ProjectError::Io { path: graph_path.clone(), source })?;
        let snapshot: GraphSnapshot =
            serde_json::from_slice(&text).map_err(|source| ProjectError::Json { path: graph_path, source })?;
        let graph = LineageGraph::from_snapshot(&snapshot)?;
        let p = Project { manifest, root, graph, volume };
        p.check()?;
        Ok(p)
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }

    pub fn graph_path(&self) -> PathBuf {
        self.root.join(&self.manifest.graph)
    }

    pub fn volume_dir(&self) -> PathBuf {
        self.root.join(&self.manifest.volume)
    }

    /// Writes the manifest and the graph. The volume is never rewritten.
    pub fn save(&self) -> Result<(), ProjectError> {
        self.manifest.write(&self.manifest_path())?;
        write_graph(&self.graph, &self.graph_path())
    }

    fn check(&self) -> Result<(), ProjectError> {
        self.manifest.validate()?;
        if self.graph.timepoints() as usize != self.volume.timepoints() {
            return Err(ProjectError::Invalid(format!(
                "graph has {} timepoints, volume has {}",
                self.graph.timepoints(),
                self.volume.timepoints()
            )));
        }
        self.graph.validate().map_err(|v| ProjectError::Invalid(v.join("; ")))
    }
}

/// Writes `graph` as snapshot JSON, via a temporary file.
pub fn write_graph(graph: &LineageGraph, path: &Path) -> Result<(), ProjectError> {
    let text = serde_json::to_vec(&graph.snapshot()).expect("snapshot serializes");
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text).map_err(|source| ProjectError::Io { path: tmp.clone(), source })?;
    fs::rename(&tmp, path).map_err(|source| ProjectError::Io { path: path.into(), source })
}
