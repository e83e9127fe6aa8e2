use std::io::Write;

use serde::{Deserialize, Serialize};

use super::record::{Covariance, LinkId, SpotId};
use super::tags::{TagDef, TagTable};
use super::{GraphError, LineageGraph};

pub const SPOTS_CSV_HEADER: [&str; 12] =
    ["id", "timepoint", "x", "y", "z", "cxx", "cxy", "cxz", "cyy", "cyz", "czz", "tag"];
pub const LINKS_CSV_HEADER: [&str; 3] = ["id", "source", "target"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpotEntry {
    pub id: u32,
    pub timepoint: i32,
    pub position: [f64; 3],
    pub covariance: [f64; 6],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkEntry {
    pub id: u32,
    pub source: u32,
    pub target: u32,
}

/// Alive content of a graph with its ids, in ascending id order. Two graphs
/// with equal snapshots export identical CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSnapshot {
    pub timepoints: i32,
    pub tags: Vec<TagDef>,
    pub spots: Vec<SpotEntry>,
    pub links: Vec<LinkEntry>,
}

impl LineageGraph {
    pub fn snapshot(&self) -> GraphSnapshot {
        let spots = self
            .spot_ids()
            .map(|id| {
                let s = &self.spots[id.index()];
                SpotEntry {
                    id: id.0,
                    timepoint: s.timepoint,
                    position: s.position,
                    covariance: s.covariance.upper(),
                    tag: s.tag.map(|t| self.tags.name(t).to_string()),
                }
            })
            .collect();
        let links = self
            .link_ids()
            .map(|id| {
                let l = &self.links[id.index()];
                LinkEntry { id: id.0, source: l.source, target: l.target }
            })
            .collect();
        GraphSnapshot { timepoints: self.timepoints, tags: self.tags.defs().to_vec(), spots, links }
    }

    /// Rebuilds a graph with exactly the ids of `snapshot`. The result has an
    /// empty undo history.
    pub fn from_snapshot(snapshot: &GraphSnapshot) -> Result<LineageGraph, GraphError> {
        let mut g = LineageGraph::new(snapshot.timepoints);
        g.tags = TagTable::from_defs(snapshot.tags.clone());
        for s in &snapshot.spots {
            let cov = Covariance::from_upper(s.covariance)?;
            g.add_spot_at(SpotId(s.id), s.timepoint, s.position, cov)?;
            if s.tag.is_some() {
                g.set_tag(SpotId(s.id), s.tag.as_deref())?;
            }
        }
        for l in &snapshot.links {
            g.add_link_at(LinkId(l.id), SpotId(l.source), SpotId(l.target))?;
        }
        g.clear_history();
        Ok(g)
    }

    pub fn write_spots_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(SPOTS_CSV_HEADER)?;
        for id in self.spot_ids() {
            let s = &self.spots[id.index()];
            let mut row = Vec::with_capacity(12);
            row.push(id.0.to_string());
            row.push(s.timepoint.to_string());
            row.extend(s.position.iter().map(f64::to_string));
            row.extend(s.covariance.upper().iter().map(f64::to_string));
            row.push(s.tag.map(|t| self.tags.name(t).to_string()).unwrap_or_default());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_links_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(LINKS_CSV_HEADER)?;
        for id in self.link_ids() {
            let l = &self.links[id.index()];
            w.write_record([id.0.to_string(), l.source.to_string(), l.target.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `(spots.csv, links.csv)` contents.
    pub fn to_csv(&self) -> (String, String) {
        let mut spots = Vec::new();
        let mut links = Vec::new();
        self.write_spots_csv(&mut spots).expect("writing to memory");
        self.write_links_csv(&mut links).expect("writing to memory");
        (String::from_utf8(spots).expect("csv is utf-8"), String::from_utf8(links).expect("csv is utf-8"))
    }
}
