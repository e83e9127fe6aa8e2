use crate::graph::{Covariance, LineageGraph, LinkId, SpotId};

use super::protocol::{Envelope, Event};
use super::BridgeError;

/// Mirror of a session graph built only from emitted events.
#[derive(Clone, Debug)]
pub struct Replica {
    graph: LineageGraph,
    timepoint: i32,
    version: u64,
}

impl Replica {
    pub fn new(timepoints: i32) -> Self {
        Replica { graph: LineageGraph::new(timepoints), timepoint: 0, version: 0 }
    }

    pub fn graph(&self) -> &LineageGraph {
        &self.graph
    }

    pub fn timepoint(&self) -> i32 {
        self.timepoint
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    /// Marks versions up to `version` as seen, e.g. after an ack for an
    /// edit this replica already applied locally.
    pub fn skip_to(&mut self, version: u64) {
        self.version = self.version.max(version);
    }

    /// Applies one event exactly once. Events at or below the current
    /// version are ignored (`Ok(false)`); a jump past the next version is a
    /// gap unless the event is a full redraw.
    pub fn apply(&mut self, env: &Envelope) -> Result<bool, BridgeError> {
        if env.version <= self.version {
            return Ok(false);
        }
        let event = env.to_event().map_err(BridgeError::Protocol)?;
        let redraw = matches!(event, Event::FullRedraw { .. });
        if env.version != self.version + 1 && !redraw {
            return Err(BridgeError::Gap { expected: self.version + 1, got: env.version });
        }
        let g = &mut self.graph;
        match event {
            Event::AddSpot(s) => {
                g.add_spot_at(SpotId(s.id), s.timepoint, s.position, Covariance::from_upper(s.covariance)?)?;
                if s.tag.is_some() {
                    g.set_tag(SpotId(s.id), s.tag.as_deref())?;
                }
            }
            Event::MoveSpot { id, position } => g.move_spot(SpotId(id), position)?,
            Event::DeleteSpot { id, .. } => g.delete_spot(SpotId(id))?,
            Event::AddLink(l) => g.add_link_at(LinkId(l.id), SpotId(l.source), SpotId(l.target))?,
            Event::DeleteLink { id } => g.delete_link(LinkId(id))?,
            Event::SetTag { id, tag } => g.set_tag(SpotId(id), tag.as_deref())?,
            Event::SetTimepoint { timepoint, .. } => self.timepoint = timepoint,
            Event::FullRedraw { snapshot, .. } => self.graph = LineageGraph::from_snapshot(&snapshot)?,
        }
        self.graph.clear_history();
        self.version = env.version;
        Ok(true)
    }

    /// Replays a recorded log into a fresh replica.
    pub fn replay(timepoints: i32, log: &[Envelope]) -> Result<Self, BridgeError> {
        let mut r = Replica::new(timepoints);
        for env in log {
            r.apply(env)?;
        }
        Ok(r)
    }
}
