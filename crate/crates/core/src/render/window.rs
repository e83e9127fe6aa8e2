use std::collections::{BTreeSet, HashMap};

use crate::graph::{LineageGraph, LinkId, SpotId};

use super::RenderError;

/// Timepoint range of every alive link, for the trailing track window.
#[derive(Clone, Debug)]
pub struct VisibilityWindow {
    pub width: u32,
    index: HashMap<LinkId, (i32, i32)>,
    version: u64,
}

/// A link spanning `range` is shown at `current` when
/// `range.0 >= current - width` and `range.1 <= current`.
pub fn is_visible(range: (i32, i32), current: i32, width: u32) -> bool {
    range.0 as i64 >= current as i64 - width as i64 && range.1 <= current
}

impl VisibilityWindow {
    pub fn build(graph: &LineageGraph, width: u32) -> Self {
        let mut w = VisibilityWindow { width, index: HashMap::with_capacity(graph.link_count()), version: 0 };
        w.refresh(graph);
        w
    }

    pub fn refresh(&mut self, graph: &LineageGraph) {
        self.index.clear();
        for id in graph.link_ids() {
            let l = graph.link(id).expect("alive");
            let a = graph.spot(SpotId(l.source)).expect("alive").timepoint;
            let b = graph.spot(SpotId(l.target)).expect("alive").timepoint;
            self.index.insert(id, (a.min(b), a.max(b)));
        }
        self.version = graph.version();
    }

    pub fn is_stale(&self, graph: &LineageGraph) -> bool {
        self.version != graph.version()
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn range(&self, link: LinkId) -> Option<(i32, i32)> {
        self.index.get(&link).copied()
    }

    /// Links inside the window at `current`. Fails if the graph changed
    /// since the index was built.
    pub fn visible_links(&self, graph: &LineageGraph, current: i32) -> Result<BTreeSet<LinkId>, RenderError> {
        if self.is_stale(graph) {
            return Err(RenderError::StaleIndex { index: self.version, graph: graph.version() });
        }
        Ok(self
            .index
            .iter()
            .filter(|(_, &r)| is_visible(r, current, self.width))
            .map(|(&id, _)| id)
            .collect())
    }
}
