use serde::{Deserialize, Serialize};

use super::record::TagRef;

/// Name of the tag assigned by the "label all true positive" action.
pub const TRUE_POSITIVE: &str = "tp";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TagDef {
    pub name: String,
    pub color: [f32; 4],
}

/// Named spot colors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TagTable {
    tags: Vec<TagDef>,
}

impl Default for TagTable {
    fn default() -> Self {
        TagTable {
            tags: vec![
                TagDef { name: TRUE_POSITIVE.into(), color: [0.2, 0.8, 0.2, 1.0] },
                TagDef { name: "fp".into(), color: [0.9, 0.2, 0.2, 1.0] },
            ],
        }
    }
}

impl TagTable {
    pub fn from_defs(tags: Vec<TagDef>) -> Self {
        TagTable { tags }
    }

    pub fn lookup(&self, name: &str) -> Option<TagRef> {
        self.tags.iter().position(|t| t.name == name).map(|i| TagRef(i as u16))
    }

    /// Adds a tag, or recolors it if the name already exists.
    pub fn define(&mut self, name: &str, color: [f32; 4]) -> TagRef {
        if let Some(r) = self.lookup(name) {
            self.tags[r.0 as usize].color = color;
            return r;
        }
        self.tags.push(TagDef { name: name.to_string(), color });
        TagRef(self.tags.len() as u16 - 1)
    }

    pub fn name(&self, tag: TagRef) -> &str {
        &self.tags[tag.0 as usize].name
    }

    pub fn color(&self, tag: TagRef) -> [f32; 4] {
        self.tags[tag.0 as usize].color
    }

    pub fn defs(&self) -> &[TagDef] {
        &self.tags
    }
}
