use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::GraphError;

/// Sentinel for "no link" in the chained adjacency fields.
pub const NIL: u32 = u32::MAX;

/// Tolerance used for the symmetry and positive semi-definiteness checks.
pub const PSD_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpotId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub u32);

impl SpotId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl LinkId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for SpotId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "spot {}", self.0)
    }
}

impl std::fmt::Display for LinkId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "link {}", self.0)
    }
}

/// Converts an internal chain index to the external protocol form (NIL is -1).
pub fn external_index(index: u32) -> i64 {
    if index == NIL {
        -1
    } else {
        index as i64
    }
}

/// Symmetric 3x3 covariance stored as its upper triangle
/// `[xx, xy, xz, yy, yz, zz]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 6]", into = "[f64; 6]")]
pub struct Covariance([f64; 6]);

impl Covariance {
    pub const IDENTITY: Covariance = Covariance([1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);

    /// Isotropic covariance with the given standard deviation.
    pub fn isotropic(sd: f64) -> Self {
        let v = sd * sd;
        Covariance([v, 0.0, 0.0, v, 0.0, v])
    }

    /// Validates a full matrix: symmetric and positive semi-definite within
    /// [`PSD_TOLERANCE`].
    pub fn from_matrix(m: [[f64; 3]; 3]) -> Result<Self, GraphError> {
        for (i, row) in m.iter().enumerate() {
            for (j, value) in row.iter().enumerate() {
                if !value.is_finite() {
                    return Err(GraphError::Validation("covariance contains a non-finite entry".into()));
                }
                if (value - m[j][i]).abs() > PSD_TOLERANCE {
                    return Err(GraphError::Validation("covariance is not symmetric".into()));
                }
            }
        }
        let c = Covariance([m[0][0], m[0][1], m[0][2], m[1][1], m[1][2], m[2][2]]);
        let min = c.eigen().eigenvalues.min();
        if min < -PSD_TOLERANCE {
            return Err(GraphError::Validation(format!(
                "covariance is not positive semi-definite (eigenvalue {min:e})"
            )));
        }
        Ok(c)
    }

    pub fn from_upper(upper: [f64; 6]) -> Result<Self, GraphError> {
        let [xx, xy, xz, yy, yz, zz] = upper;
        Self::from_matrix([[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]])
    }

    pub fn upper(&self) -> [f64; 6] {
        self.0
    }

    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        let [xx, xy, xz, yy, yz, zz] = self.0;
        [[xx, xy, xz], [xy, yy, yz], [xz, yz, zz]]
    }

    pub fn eigen(&self) -> SymmetricEigen<f64, nalgebra::U3> {
        let m = self.to_matrix();
        Matrix3::from_fn(|i, j| m[i][j]).symmetric_eigen()
    }
}

impl TryFrom<[f64; 6]> for Covariance {
    type Error = GraphError;

    fn try_from(value: [f64; 6]) -> Result<Self, Self::Error> {
        Covariance::from_upper(value)
    }
}

impl From<Covariance> for [f64; 6] {
    fn from(c: Covariance) -> Self {
        c.0
    }
}

/// Index into the graph's tag table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TagRef(pub u16);

/// Fixed-width spot record. The spot's id is its index in the spot array.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpotRecord {
    pub timepoint: i32,
    pub position: [f64; 3],
    pub covariance: Covariance,
    pub first_incoming: u32,
    pub first_outgoing: u32,
    pub tag: Option<TagRef>,
    pub alive: bool,
}

impl SpotRecord {
    pub(crate) const DEAD: SpotRecord = SpotRecord {
        timepoint: 0,
        position: [0.0; 3],
        covariance: Covariance::IDENTITY,
        first_incoming: NIL,
        first_outgoing: NIL,
        tag: None,
        alive: false,
    };
}

/// Fixed-width link record; `next_source` / `next_target` chain links that
/// share a source (split) or a target (merge).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinkRecord {
    pub source: u32,
    pub target: u32,
    pub next_source: u32,
    pub next_target: u32,
    pub alive: bool,
}

impl LinkRecord {
    pub(crate) const DEAD: LinkRecord = LinkRecord {
        source: NIL,
        target: NIL,
        next_source: NIL,
        next_target: NIL,
        alive: false,
    };
}

/// The user-editable part of a spot, used by undo entries and snapshots.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpotData {
    pub timepoint: i32,
    pub position: [f64; 3],
    pub covariance: Covariance,
    pub tag: Option<TagRef>,
}
