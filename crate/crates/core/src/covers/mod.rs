//! Sequences of covers over the conditioning space.
//!
//! A cover sequence `C_1, C_2, ...` assigns every query (a point, a string
//! history, a cell) to one or more *contexts* per cover. Contexts at depth
//! `k` are linked to the overlapping contexts at depth `k - 1` (coarser) and
//! `k + 1` (finer); the inference engine walks these links.
//!
//! Three builders are provided:
//!
//! - [`KdCover`]: an online kd-tree partition of a box in `R^d`, refined when a
//!   leaf at depth `k` holds more than `alpha^k` points.
//! - [`SuffixCover`]: the suffix-tree partition of strings over a finite
//!   alphabet, materialized lazily along observed histories.
//! - [`ExplicitCover`]: a finite, fully materialized cover over numbered cells.
//!   Contexts may overlap, which makes it the test bed for multi-match paths.

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod explicit;
mod kd;
mod suffix;

pub use explicit::ExplicitCover;
pub use kd::{KdConfig, KdCover, OutOfRootPolicy};
pub use suffix::SuffixCover;

/// Stable identifier of a context within one cover sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ContextId(pub u32);

impl ContextId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for ContextId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// The set of queries a context contains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Region {
    /// Axis-aligned box, lower-inclusive; upper-inclusive only on the root boundary.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// All histories ending in `symbols` (oldest symbol first).
    Suffix { symbols: Vec<u32> },
    /// An explicit set of cells (sorted).
    Cells { cells: Vec<u32> },
}

impl Region {
    /// Center of a box region; `None` for discrete regions.
    pub fn center(&self) -> Option<Vec<f64>> {
        match self {
            Region::Box { lower, upper } => {
                Some(lower.iter().zip(upper).map(|(l, u)| 0.5 * (l + u)).collect())
            }
            _ => None,
        }
    }
}

/// A context on a match path that does not exist yet. Its id is the one it
/// will receive when the path is materialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingContext {
    pub id: ContextId,
    pub depth: usize,
    pub region: Region,
}

/// All contexts matching one query, grouped by depth.
///
/// `levels[k - 1]` holds the matching contexts of cover `C_k`. Ids at or
/// beyond the cover's current length refer to entries of `pending`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchPath {
    pub levels: Vec<Vec<ContextId>>,
    pub pending: Vec<PendingContext>,
}

impl MatchPath {
    /// Number of covers on the path (the deepest matching depth).
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Total number of matching contexts, i.e. the contexts reachable by the walk.
    pub fn reachable(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    /// The unique chain of a partition path, root first.
    pub fn chain(&self) -> Option<Vec<ContextId>> {
        self.levels
            .iter()
            .map(|l| if l.len() == 1 { Some(l[0]) } else { None })
            .collect()
    }

    pub fn pending(&self, id: ContextId) -> Option<&PendingContext> {
        self.pending.iter().find(|p| p.id == id)
    }
}

/// Children created by an online refinement, with the tags of the buffered
/// observations that now fall in each child (in arrival order).
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub parent: ContextId,
    pub children: Vec<ChildReplay>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChildReplay {
    pub id: ContextId,
    pub tags: Vec<u64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoverError {
    #[error("query lies outside the root region")]
    QueryOutOfRootRegion,
    #[error("query dimension {got} does not match cover dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("depth limit {requested} exceeds configured maximum {max}")]
    DepthLimitExceeded { requested: usize, max: usize },
    #[error("symbol {symbol} outside alphabet of size {alphabet}")]
    UnknownSymbol { symbol: u32, alphabet: u32 },
    #[error("cell {0} is not covered by any depth-1 context")]
    UnknownCell(u32),
    #[error("no context matches the query")]
    EmptyPath,
    #[error("invalid cover configuration: {0}")]
    BadConfig(String),
    #[error("malformed cover snapshot: {0}")]
    Snapshot(String),
}

/// A sequence of covers the inference engine can walk.
///
/// Structure is single-writer: `materialize` and `observe` need `&mut self`
/// and must be serialized by the caller, while `match_path` and the adjacency
/// lookups only read.
pub trait Cover {
    type Query: ?Sized;

    /// Number of materialized contexts; ids are `0..len()`.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cover index `k >= 1` of a context.
    fn depth(&self, id: ContextId) -> usize;

    fn region(&self, id: ContextId) -> Region;

    /// Overlapping contexts one cover coarser.
    fn coarser(&self, id: ContextId) -> &[ContextId];

    /// Overlapping contexts one cover finer.
    fn finer(&self, id: ContextId) -> &[ContextId];

    /// Matching contexts per depth, including not-yet-materialized ones.
    fn match_path(&self, query: &Self::Query) -> Result<MatchPath, CoverError>;

    /// Creates the pending contexts on the query's path; returns the new ids
    /// in creation order (coarsest first).
    fn materialize(&mut self, _query: &Self::Query) -> Result<Vec<ContextId>, CoverError> {
        Ok(Vec::new())
    }

    /// Records an observation at `query`, returning any refinements it
    /// triggers. `tag` identifies the observation in later [`Split`]s.
    fn observe(&mut self, _query: &Self::Query, _tag: u64) -> Result<Vec<Split>, CoverError> {
        Ok(Vec::new())
    }

    /// The conditioning value handed to local models, if the query has one.
    fn local_input<'q>(&self, _query: &'q Self::Query) -> Option<&'q [f64]> {
        None
    }

    /// Whether `observe` may split contexts, in which case the caller keeps
    /// observations around for replay.
    fn refines_online(&self) -> bool {
        false
    }
}

/// Covers that can be written to and rebuilt from a snapshot.
pub trait SnapshotCover: Cover + Sized {
    type Header: Serialize + for<'de> Deserialize<'de>;
    type Node: Serialize + for<'de> Deserialize<'de>;

    /// Global parameters plus one record per context, in id order.
    fn to_records(&self) -> (Self::Header, Vec<Self::Node>);

    fn from_records(header: Self::Header, nodes: Vec<Self::Node>) -> Result<Self, CoverError>;
}
