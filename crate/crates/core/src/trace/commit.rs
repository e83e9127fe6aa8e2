use serde::Serialize;

use crate::graph::{Covariance, LineageGraph, LinkId, SpotId};
use crate::volume::distance;

use super::{TraceError, TrackPoint};

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CommitSummary {
    /// One spot per timepoint of the committed track, ascending.
    pub spots: Vec<SpotId>,
    pub created_spots: Vec<SpotId>,
    pub reused_spots: Vec<SpotId>,
    pub links: Vec<LinkId>,
}

/// Writes a track into the graph as a single undo batch.
///
/// Timepoints missing between two track points are filled by linear
/// interpolation so that every link spans exactly one timepoint. Either end
/// of the track snaps onto an existing spot at the same timepoint when one
/// lies within `merge_radius`. New spots get an isotropic covariance with
/// standard deviation `merge_radius / 2`. On error nothing is committed.
pub fn commit_track(track: &[TrackPoint], graph: &mut LineageGraph, merge_radius: f64) -> Result<CommitSummary, TraceError> {
    if track.is_empty() {
        return Err(TraceError::EmptyTrack);
    }
    let mut points = track.to_vec();
    points.sort_by_key(|p| p.timepoint);
    let points = fill_gaps(&points);
    let covariance = Covariance::isotropic((merge_radius / 2.0).max(f64::MIN_POSITIVE));

    graph.transaction(|g| {
        let mut summary = CommitSummary::default();
        let last = points.len() - 1;
        for (i, p) in points.iter().enumerate() {
            let existing = if i == 0 || i == last { nearest_spot(g, p, merge_radius) } else { None };
            let id = match existing {
                Some(id) => {
                    summary.reused_spots.push(id);
                    id
                }
                None => {
                    let id = g.add_spot(p.timepoint, p.position, covariance)?;
                    summary.created_spots.push(id);
                    id
                }
            };
            if let Some(&prev) = summary.spots.last() {
                if g.find_link(prev, id).is_none() {
                    summary.links.push(g.add_link(prev, id)?);
                }
            }
            summary.spots.push(id);
        }
        Ok(summary)
    })
}

/// Nearest alive spot at the point's timepoint within `radius`.
pub(crate) fn nearest_spot(graph: &LineageGraph, p: &TrackPoint, radius: f64) -> Option<SpotId> {
    graph
        .spots_at_timepoint(p.timepoint)
        .into_iter()
        .map(|id| (id, distance(graph.spot(id).expect("listed spots are alive").position, p.position)))
        .filter(|&(_, d)| d <= radius)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(id, _)| id)
}

fn fill_gaps(points: &[TrackPoint]) -> Vec<TrackPoint> {
    let mut out = Vec::with_capacity(points.len());
    for pair in points.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        out.push(a);
        let span = b.timepoint - a.timepoint;
        for k in 1..span {
            let f = k as f64 / span as f64;
            out.push(TrackPoint {
                timepoint: a.timepoint + k,
                position: std::array::from_fn(|i| a.position[i] + f * (b.position[i] - a.position[i])),
            });
        }
    }
    out.push(*points.last().expect("non-empty"));
    out
}
