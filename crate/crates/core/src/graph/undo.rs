use super::record::{SpotData, TagRef};

/// One primitive, invertible change to the graph.
#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Edit {
    AddSpot { id: u32, data: SpotData },
    RemoveSpot { id: u32, data: SpotData },
    AddLink { id: u32, source: u32, target: u32 },
    RemoveLink { id: u32, source: u32, target: u32 },
    MoveSpot { id: u32, from: [f64; 3], to: [f64; 3] },
    SetTag { id: u32, from: Option<TagRef>, to: Option<TagRef> },
}

impl Edit {
    pub(crate) fn inverse(&self) -> Edit {
        match *self {
            Edit::AddSpot { id, data } => Edit::RemoveSpot { id, data },
            Edit::RemoveSpot { id, data } => Edit::AddSpot { id, data },
            Edit::AddLink { id, source, target } => Edit::RemoveLink { id, source, target },
            Edit::RemoveLink { id, source, target } => Edit::AddLink { id, source, target },
            Edit::MoveSpot { id, from, to } => Edit::MoveSpot { id, from: to, to: from },
            Edit::SetTag { id, from, to } => Edit::SetTag { id, from: to, to: from },
        }
    }
}

/// Stacks of edit batches. A batch is what one user-visible action produced
/// and is undone or redone as a unit.
#[derive(Clone, Debug, Default)]
pub struct UndoRecorder {
    undo: Vec<Vec<Edit>>,
    redo: Vec<Vec<Edit>>,
    open: Vec<Edit>,
    depth: usize,
}

impl UndoRecorder {
    pub fn can_undo(&self) -> bool {
        !self.undo.is_empty() || !self.open.is_empty()
    }

    pub fn can_redo(&self) -> bool {
        !self.redo.is_empty()
    }

    pub fn undo_depth(&self) -> usize {
        self.undo.len() + usize::from(!self.open.is_empty())
    }

    pub fn redo_depth(&self) -> usize {
        self.redo.len()
    }

    pub fn in_batch(&self) -> bool {
        self.depth > 0
    }

    pub(crate) fn record(&mut self, edit: Edit) {
        self.redo.clear();
        self.open.push(edit);
        if self.depth == 0 {
            self.seal();
        }
    }

    pub(crate) fn begin(&mut self) {
        self.depth += 1;
    }

    pub(crate) fn end(&mut self) {
        self.depth = self.depth.saturating_sub(1);
        if self.depth == 0 {
            self.seal();
        }
    }

    /// Closes every open batch level.
    pub(crate) fn close_all(&mut self) {
        self.depth = 0;
        self.seal();
    }

    pub(crate) fn open_len(&self) -> usize {
        self.open.len()
    }

    /// Removes and returns open edits recorded after `mark`, newest last.
    pub(crate) fn truncate_open(&mut self, mark: usize) -> Vec<Edit> {
        self.open.split_off(mark)
    }

    pub(crate) fn pop_undo(&mut self) -> Option<Vec<Edit>> {
        self.close_all();
        self.undo.pop()
    }

    pub(crate) fn push_redo(&mut self, batch: Vec<Edit>) {
        self.redo.push(batch);
    }

    pub(crate) fn pop_redo(&mut self) -> Option<Vec<Edit>> {
        self.close_all();
        self.redo.pop()
    }

    pub(crate) fn push_undo(&mut self, batch: Vec<Edit>) {
        self.undo.push(batch);
    }

    pub(crate) fn clear(&mut self) {
        *self = UndoRecorder::default();
    }

    fn seal(&mut self) {
        if !self.open.is_empty() {
            self.undo.push(std::mem::take(&mut self.open));
        }
    }
}
