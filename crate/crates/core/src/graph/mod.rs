//! Lineage graph storage.
//!
//! Spots and links live in two flat arrays of fixed-width records that refer
//! to each other by index. Each spot holds the head of its incoming and
//! outgoing link chains; each link holds the next link sharing its source and
//! the next link sharing its target. Deleted records are tombstoned and their
//! slots reused, so indices handed out to clients stay stable.

mod export;
mod record;
mod tags;
mod undo;

use std::collections::BTreeSet;

use thiserror::Error;

pub use export::{GraphSnapshot, LinkEntry, SpotEntry, LINKS_CSV_HEADER, SPOTS_CSV_HEADER};
pub use record::{
    external_index, Covariance, LinkId, LinkRecord, SpotData, SpotId, SpotRecord, TagRef, NIL, PSD_TOLERANCE,
};
pub use tags::{TagDef, TagTable, TRUE_POSITIVE};
pub use undo::UndoRecorder;

use undo::Edit;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GraphError {
    #[error("timepoint {timepoint} outside dataset range 0..{timepoints}")]
    Range { timepoint: i64, timepoints: i32 },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("{0} not found")]
    SpotNotFound(SpotId),
    #[error("{0} not found")]
    LinkNotFound(LinkId),
    #[error("link {from} -> {to} already exists")]
    Duplicate { from: SpotId, to: SpotId },
    #[error("unknown tag {0:?}")]
    UnknownTag(String),
    #[error("slot {0} is already in use")]
    SlotInUse(u32),
}

pub type Result<T, E = GraphError> = std::result::Result<T, E>;

#[derive(Clone, Debug)]
pub struct LineageGraph {
    spots: Vec<SpotRecord>,
    links: Vec<LinkRecord>,
    free_spots: Vec<u32>,
    free_links: Vec<u32>,
    tags: TagTable,
    timepoints: i32,
    version: u64,
    alive_spots: usize,
    alive_links: usize,
    recorder: UndoRecorder,
}

impl LineageGraph {
    /// Creates an empty graph for a dataset with timepoints `0..timepoints`.
    pub fn new(timepoints: i32) -> Self {
        LineageGraph {
            spots: Vec::new(),
            links: Vec::new(),
            free_spots: Vec::new(),
            free_links: Vec::new(),
            tags: TagTable::default(),
            timepoints: timepoints.max(1),
            version: 0,
            alive_spots: 0,
            alive_links: 0,
            recorder: UndoRecorder::default(),
        }
    }

    pub fn timepoints(&self) -> i32 {
        self.timepoints
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn spot_count(&self) -> usize {
        self.alive_spots
    }

    pub fn link_count(&self) -> usize {
        self.alive_links
    }

    /// Number of spot slots, dead or alive.
    pub fn spot_capacity(&self) -> usize {
        self.spots.len()
    }

    pub fn link_capacity(&self) -> usize {
        self.links.len()
    }

    pub fn tags(&self) -> &TagTable {
        &self.tags
    }

    pub fn tags_mut(&mut self) -> &mut TagTable {
        &mut self.tags
    }

    pub fn recorder(&self) -> &UndoRecorder {
        &self.recorder
    }

    pub fn spot(&self, id: SpotId) -> Option<&SpotRecord> {
        self.spots.get(id.index()).filter(|s| s.alive)
    }

    pub fn link(&self, id: LinkId) -> Option<&LinkRecord> {
        self.links.get(id.index()).filter(|l| l.alive)
    }

    pub fn spot_ids(&self) -> impl Iterator<Item = SpotId> + '_ {
        self.spots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.alive)
            .map(|(i, _)| SpotId(i as u32))
    }

    pub fn link_ids(&self) -> impl Iterator<Item = LinkId> + '_ {
        self.links
            .iter()
            .enumerate()
            .filter(|(_, l)| l.alive)
            .map(|(i, _)| LinkId(i as u32))
    }

    /// Alive spots at `t` in ascending id order; empty for out-of-range `t`.
    pub fn spots_at_timepoint(&self, t: i32) -> Vec<SpotId> {
        self.spots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.alive && s.timepoint == t)
            .map(|(i, _)| SpotId(i as u32))
            .collect()
    }

    pub fn outgoing(&self, id: SpotId) -> ChainIter<'_> {
        let head = self.spot(id).map_or(NIL, |s| s.first_outgoing);
        ChainIter { graph: self, next: head, outgoing: true }
    }

    pub fn incoming(&self, id: SpotId) -> ChainIter<'_> {
        let head = self.spot(id).map_or(NIL, |s| s.first_incoming);
        ChainIter { graph: self, next: head, outgoing: false }
    }

    pub fn find_link(&self, source: SpotId, target: SpotId) -> Option<LinkId> {
        self.outgoing(source).find(|&l| self.links[l.index()].target == target.0)
    }

    pub fn tag_name(&self, id: SpotId) -> Option<&str> {
        self.spot(id).and_then(|s| s.tag).map(|t| self.tags.name(t))
    }

    fn check_timepoint(&self, timepoint: i64) -> Result<()> {
        if timepoint < 0 || timepoint >= self.timepoints as i64 {
            return Err(GraphError::Range { timepoint, timepoints: self.timepoints });
        }
        Ok(())
    }

    fn require_spot(&self, id: SpotId) -> Result<&SpotRecord> {
        self.spot(id).ok_or(GraphError::SpotNotFound(id))
    }

    fn require_link(&self, id: LinkId) -> Result<&LinkRecord> {
        self.link(id).ok_or(GraphError::LinkNotFound(id))
    }

    // ---- public edits -------------------------------------------------

    pub fn add_spot(&mut self, timepoint: i32, position: [f64; 3], covariance: Covariance) -> Result<SpotId> {
        self.check_timepoint(timepoint as i64)?;
        check_position(position)?;
        let id = self.free_spots.last().copied().unwrap_or(self.spots.len() as u32);
        let data = SpotData { timepoint, position, covariance, tag: None };
        self.apply(Edit::AddSpot { id, data });
        Ok(SpotId(id))
    }

    /// Adds a spot in a specific free slot. Used by replicas that mirror ids
    /// chosen elsewhere.
    pub fn add_spot_at(&mut self, id: SpotId, timepoint: i32, position: [f64; 3], covariance: Covariance) -> Result<()> {
        self.check_timepoint(timepoint as i64)?;
        check_position(position)?;
        if self.spot(id).is_some() {
            return Err(GraphError::SlotInUse(id.0));
        }
        let data = SpotData { timepoint, position, covariance, tag: None };
        self.apply(Edit::AddSpot { id: id.0, data });
        Ok(())
    }

    /// Deletes a spot together with all its incident links, as one batch.
    pub fn delete_spot(&mut self, id: SpotId) -> Result<()> {
        let spot = *self.require_spot(id)?;
        let incident: Vec<LinkId> = self.outgoing(id).chain(self.incoming(id)).collect();
        self.recorder.begin();
        for link in incident {
            let l = self.links[link.index()];
            self.apply(Edit::RemoveLink { id: link.0, source: l.source, target: l.target });
        }
        let data = SpotData {
            timepoint: spot.timepoint,
            position: spot.position,
            covariance: spot.covariance,
            tag: spot.tag,
        };
        self.apply(Edit::RemoveSpot { id: id.0, data });
        self.recorder.end();
        Ok(())
    }

    pub fn move_spot(&mut self, id: SpotId, position: [f64; 3]) -> Result<()> {
        let from = self.require_spot(id)?.position;
        check_position(position)?;
        self.apply(Edit::MoveSpot { id: id.0, from, to: position });
        Ok(())
    }

    pub fn add_link(&mut self, source: SpotId, target: SpotId) -> Result<LinkId> {
        self.check_link(source, target)?;
        let id = self.free_links.last().copied().unwrap_or(self.links.len() as u32);
        self.apply(Edit::AddLink { id, source: source.0, target: target.0 });
        Ok(LinkId(id))
    }

    pub fn add_link_at(&mut self, id: LinkId, source: SpotId, target: SpotId) -> Result<()> {
        self.check_link(source, target)?;
        if self.link(id).is_some() {
            return Err(GraphError::SlotInUse(id.0));
        }
        self.apply(Edit::AddLink { id: id.0, source: source.0, target: target.0 });
        Ok(())
    }

    fn check_link(&self, source: SpotId, target: SpotId) -> Result<()> {
        let s = self.require_spot(source)?.timepoint;
        let t = self.require_spot(target)?.timepoint;
        if t != s + 1 {
            return Err(GraphError::Validation(format!(
                "link target timepoint {t} must equal source timepoint {s} + 1"
            )));
        }
        if self.find_link(source, target).is_some() {
            return Err(GraphError::Duplicate { from: source, to: target });
        }
        Ok(())
    }

    pub fn delete_link(&mut self, id: LinkId) -> Result<()> {
        let l = *self.require_link(id)?;
        self.apply(Edit::RemoveLink { id: id.0, source: l.source, target: l.target });
        Ok(())
    }

    /// Sets or clears (`None`) the tag of a spot.
    pub fn set_tag(&mut self, id: SpotId, tag: Option<&str>) -> Result<()> {
        let from = self.require_spot(id)?.tag;
        let to = match tag {
            Some(name) => Some(self.tags.lookup(name).ok_or_else(|| GraphError::UnknownTag(name.to_string()))?),
            None => None,
        };
        if from != to {
            self.apply(Edit::SetTag { id: id.0, from, to });
        }
        Ok(())
    }

    // ---- batches and undo ---------------------------------------------

    /// Opens a batch: every edit until the matching [`end_batch`] is undone
    /// as one unit. Batches nest.
    ///
    /// [`end_batch`]: LineageGraph::end_batch
    pub fn begin_batch(&mut self) {
        self.recorder.begin();
    }

    pub fn end_batch(&mut self) {
        self.recorder.end();
    }

    /// Runs `f` inside a batch. If `f` fails, every edit it made is reverted
    /// and the version counter restored.
    pub fn transaction<T, E>(&mut self, f: impl FnOnce(&mut Self) -> std::result::Result<T, E>) -> std::result::Result<T, E> {
        let mark = self.recorder.open_len();
        let version = self.version;
        self.recorder.begin();
        match f(self) {
            Ok(v) => {
                self.recorder.end();
                Ok(v)
            }
            Err(e) => {
                let edits = self.recorder.truncate_open(mark);
                for edit in edits.iter().rev() {
                    self.apply_raw(&edit.inverse());
                }
                self.recorder.end();
                self.version = version;
                Err(e)
            }
        }
    }

    /// Reverts the last batch. Returns `false` when there is nothing to undo.
    pub fn undo(&mut self) -> bool {
        let Some(batch) = self.recorder.pop_undo() else {
            return false;
        };
        for edit in batch.iter().rev() {
            self.apply_raw(&edit.inverse());
        }
        self.version += 1;
        self.recorder.push_redo(batch);
        true
    }

    /// Reapplies the last undone batch. Returns `false` when there is nothing
    /// to redo.
    pub fn redo(&mut self) -> bool {
        let Some(batch) = self.recorder.pop_redo() else {
            return false;
        };
        for edit in &batch {
            self.apply_raw(edit);
        }
        self.version += 1;
        self.recorder.push_undo(batch);
        true
    }

    pub fn clear_history(&mut self) {
        self.recorder.clear();
    }

    fn apply(&mut self, edit: Edit) {
        self.apply_raw(&edit);
        self.version += 1;
        self.recorder.record(edit);
    }

    // ---- raw record manipulation --------------------------------------

    fn apply_raw(&mut self, edit: &Edit) {
        match *edit {
            Edit::AddSpot { id, data } => self.raw_insert_spot(id, data),
            Edit::RemoveSpot { id, .. } => self.raw_remove_spot(id),
            Edit::AddLink { id, source, target } => self.raw_insert_link(id, source, target),
            Edit::RemoveLink { id, .. } => self.raw_remove_link(id),
            Edit::MoveSpot { id, to, .. } => self.spots[id as usize].position = to,
            Edit::SetTag { id, to, .. } => self.spots[id as usize].tag = to,
        }
    }

    fn raw_insert_spot(&mut self, id: u32, data: SpotData) {
        claim_slot(&mut self.spots, &mut self.free_spots, id, SpotRecord::DEAD);
        self.spots[id as usize] = SpotRecord {
            timepoint: data.timepoint,
            position: data.position,
            covariance: data.covariance,
            first_incoming: NIL,
            first_outgoing: NIL,
            tag: data.tag,
            alive: true,
        };
        self.alive_spots += 1;
    }

    fn raw_remove_spot(&mut self, id: u32) {
        let spot = &mut self.spots[id as usize];
        debug_assert!(spot.first_incoming == NIL && spot.first_outgoing == NIL);
        *spot = SpotRecord::DEAD;
        self.free_spots.push(id);
        self.alive_spots -= 1;
    }

    fn raw_insert_link(&mut self, id: u32, source: u32, target: u32) {
        claim_slot(&mut self.links, &mut self.free_links, id, LinkRecord::DEAD);
        let next_source = self.spots[source as usize].first_outgoing;
        let next_target = self.spots[target as usize].first_incoming;
        self.links[id as usize] = LinkRecord { source, target, next_source, next_target, alive: true };
        self.spots[source as usize].first_outgoing = id;
        self.spots[target as usize].first_incoming = id;
        self.alive_links += 1;
    }

    fn raw_remove_link(&mut self, id: u32) {
        let link = self.links[id as usize];
        // unsplice from the source's outgoing chain
        if self.spots[link.source as usize].first_outgoing == id {
            self.spots[link.source as usize].first_outgoing = link.next_source;
        } else {
            let mut cur = self.spots[link.source as usize].first_outgoing;
            while self.links[cur as usize].next_source != id {
                cur = self.links[cur as usize].next_source;
            }
            self.links[cur as usize].next_source = link.next_source;
        }
        // and from the target's incoming chain
        if self.spots[link.target as usize].first_incoming == id {
            self.spots[link.target as usize].first_incoming = link.next_target;
        } else {
            let mut cur = self.spots[link.target as usize].first_incoming;
            while self.links[cur as usize].next_target != id {
                cur = self.links[cur as usize].next_target;
            }
            self.links[cur as usize].next_target = link.next_target;
        }
        self.links[id as usize] = LinkRecord::DEAD;
        self.free_links.push(id);
        self.alive_links -= 1;
    }

    // ---- checks ---------------------------------------------------------

    /// Checks every record invariant, including that chain-walk adjacency
    /// matches a full scan of the link array. Returns the list of violations.
    pub fn validate(&self) -> std::result::Result<(), Vec<String>> {
        let mut problems = Vec::new();
        let mut scan_out = vec![BTreeSet::new(); self.spots.len()];
        let mut scan_in = vec![BTreeSet::new(); self.spots.len()];
        for (i, l) in self.links.iter().enumerate() {
            if !l.alive {
                continue;
            }
            let (Some(s), Some(t)) = (self.spots.get(l.source as usize), self.spots.get(l.target as usize)) else {
                problems.push(format!("link {i} references a missing spot"));
                continue;
            };
            if !s.alive || !t.alive {
                problems.push(format!("link {i} references a dead spot"));
            }
            if t.timepoint != s.timepoint + 1 {
                problems.push(format!("link {i} does not point forward by one timepoint"));
            }
            scan_out[l.source as usize].insert(i as u32);
            scan_in[l.target as usize].insert(i as u32);
        }
        let limit = self.links.len() + 1;
        for (i, s) in self.spots.iter().enumerate() {
            if !s.alive {
                if s.first_incoming != NIL || s.first_outgoing != NIL {
                    problems.push(format!("dead spot {i} has link heads"));
                }
                continue;
            }
            if s.covariance.eigen().eigenvalues.min() < -PSD_TOLERANCE {
                problems.push(format!("spot {i} covariance is not PSD"));
            }
            for outgoing in [true, false] {
                let mut walked = BTreeSet::new();
                let mut cur = if outgoing { s.first_outgoing } else { s.first_incoming };
                let mut steps = 0;
                while cur != NIL {
                    steps += 1;
                    if steps > limit {
                        problems.push(format!("spot {i} chain does not terminate"));
                        break;
                    }
                    let Some(l) = self.links.get(cur as usize).filter(|l| l.alive) else {
                        problems.push(format!("spot {i} chain reaches dead link {cur}"));
                        break;
                    };
                    let end = if outgoing { l.source } else { l.target };
                    if end != i as u32 {
                        problems.push(format!("link {cur} in chain of spot {i} has the wrong endpoint"));
                    }
                    if !walked.insert(cur) {
                        problems.push(format!("link {cur} appears twice in chain of spot {i}"));
                        break;
                    }
                    cur = if outgoing { l.next_source } else { l.next_target };
                }
                let scanned = if outgoing { &scan_out[i] } else { &scan_in[i] };
                if &walked != scanned {
                    problems.push(format!(
                        "spot {i} {} chain {:?} differs from scan {:?}",
                        if outgoing { "outgoing" } else { "incoming" },
                        walked,
                        scanned
                    ));
                }
            }
        }
        let alive_spots = self.spots.iter().filter(|s| s.alive).count();
        let alive_links = self.links.iter().filter(|l| l.alive).count();
        if alive_spots != self.alive_spots || alive_links != self.alive_links {
            problems.push("alive counters out of sync".into());
        }
        let dead_spots = self.spots.len() - alive_spots;
        if self.free_spots.len() != dead_spots || self.free_spots.iter().any(|&f| self.spots[f as usize].alive) {
            problems.push("spot free list out of sync".into());
        }
        let dead_links = self.links.len() - alive_links;
        if self.free_links.len() != dead_links || self.free_links.iter().any(|&f| self.links[f as usize].alive) {
            problems.push("link free list out of sync".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems)
        }
    }
}

fn check_position(p: [f64; 3]) -> Result<()> {
    if p.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(GraphError::Validation("position must be finite".into()))
    }
}

/// Makes slot `id` available for a new record, growing the array with dead
/// records as needed and taking `id` off the free list.
fn claim_slot<R: Copy>(records: &mut Vec<R>, free: &mut Vec<u32>, id: u32, dead: R) {
    let idx = id as usize;
    if idx >= records.len() {
        for gap in records.len()..idx {
            free.push(gap as u32);
        }
        records.resize(idx + 1, dead);
    } else if let Some(pos) = free.iter().rposition(|&f| f == id) {
        free.remove(pos);
    }
}

/// Walks an adjacency chain.
pub struct ChainIter<'a> {
    graph: &'a LineageGraph,
    next: u32,
    outgoing: bool,
}

impl Iterator for ChainIter<'_> {
    type Item = LinkId;

    fn next(&mut self) -> Option<LinkId> {
        if self.next == NIL {
            return None;
        }
        let id = self.next;
        let l = &self.graph.links[id as usize];
        self.next = if self.outgoing { l.next_source } else { l.next_target };
        Some(LinkId(id))
    }
}
