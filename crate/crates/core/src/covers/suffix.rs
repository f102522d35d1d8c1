use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{ContextId, Cover, CoverError, MatchPath, PendingContext, Region, SnapshotCover};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuffixNode {
    pub depth: usize,
    /// Context suffix, oldest symbol first; length `depth - 1`.
    pub symbols: Vec<u32>,
    pub parent: Vec<ContextId>,
    pub children: Vec<ContextId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuffixHeader {
    pub alphabet: u32,
    pub max_depth: usize,
    pub depth_limit: usize,
}

/// Suffix-tree partition sequence over strings on `{0, .., alphabet - 1}`.
///
/// Cover `C_k` holds the sets `F(s)` of histories ending in `s`, `|s| = k - 1`.
/// Contexts are created only along histories handed to [`Cover::materialize`];
/// a history of length `n` matches `min(n + 1, depth_limit)` covers.
#[derive(Debug, Clone, PartialEq)]
pub struct SuffixCover {
    alphabet: u32,
    max_depth: usize,
    depth_limit: usize,
    nodes: Vec<SuffixNode>,
    edges: HashMap<(u32, u32), ContextId>,
}

impl SuffixCover {
    /// A cover whose deepest context has depth `max_depth` (suffix length `max_depth - 1`).
    pub fn new(alphabet: u32, max_depth: usize) -> Result<Self, CoverError> {
        if alphabet == 0 {
            return Err(CoverError::BadConfig("alphabet must be non-empty".into()));
        }
        if max_depth == 0 {
            return Err(CoverError::BadConfig("max_depth must be at least 1".into()));
        }
        let root = SuffixNode { depth: 1, symbols: Vec::new(), parent: Vec::new(), children: Vec::new() };
        Ok(Self { alphabet, max_depth, depth_limit: max_depth, nodes: vec![root], edges: HashMap::new() })
    }

    pub fn alphabet(&self) -> u32 {
        self.alphabet
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn depth_limit(&self) -> usize {
        self.depth_limit
    }

    /// Sets how deep later histories are materialized.
    pub fn extend_suffix(&mut self, depth_limit: usize) -> Result<(), CoverError> {
        if depth_limit > self.max_depth {
            return Err(CoverError::DepthLimitExceeded { requested: depth_limit, max: self.max_depth });
        }
        if depth_limit == 0 {
            return Err(CoverError::BadConfig("depth limit must be at least 1".into()));
        }
        self.depth_limit = depth_limit;
        Ok(())
    }

    /// Materializes every context up to `depth`; `alphabet^(depth-1)` at the last level.
    pub fn complete(&mut self, depth: usize) -> Result<(), CoverError> {
        if depth > self.max_depth {
            return Err(CoverError::DepthLimitExceeded { requested: depth, max: self.max_depth });
        }
        let mut frontier = vec![ContextId(0)];
        for _ in 1..depth {
            let mut next = Vec::new();
            for parent in frontier {
                for sym in 0..self.alphabet {
                    next.push(self.child_or_insert(parent, sym));
                }
            }
            frontier = next;
        }
        Ok(())
    }

    /// Ids of the materialized contexts in cover `C_depth`.
    pub fn level(&self, depth: usize) -> Vec<ContextId> {
        (0..self.nodes.len() as u32).map(ContextId).filter(|c| self.nodes[c.index()].depth == depth).collect()
    }

    pub fn node(&self, id: ContextId) -> &SuffixNode {
        &self.nodes[id.index()]
    }

    fn child_or_insert(&mut self, parent: ContextId, sym: u32) -> ContextId {
        if let Some(&c) = self.edges.get(&(parent.0, sym)) {
            return c;
        }
        let id = ContextId(self.nodes.len() as u32);
        let p = &self.nodes[parent.index()];
        let mut symbols = Vec::with_capacity(p.symbols.len() + 1);
        symbols.push(sym);
        symbols.extend_from_slice(&p.symbols);
        let depth = p.depth + 1;
        self.nodes.push(SuffixNode { depth, symbols, parent: vec![parent], children: Vec::new() });
        self.nodes[parent.index()].children.push(id);
        self.edges.insert((parent.0, sym), id);
        id
    }

    fn path_depth(&self, history: &[u32]) -> usize {
        (history.len() + 1).min(self.depth_limit)
    }

    fn check(&self, history: &[u32]) -> Result<(), CoverError> {
        let used = self.path_depth(history) - 1;
        for &s in &history[history.len() - used..] {
            if s >= self.alphabet {
                return Err(CoverError::UnknownSymbol { symbol: s, alphabet: self.alphabet });
            }
        }
        Ok(())
    }
}

impl Cover for SuffixCover {
    type Query = [u32];

    fn len(&self) -> usize {
        self.nodes.len()
    }

    fn depth(&self, id: ContextId) -> usize {
        self.nodes[id.index()].depth
    }

    fn region(&self, id: ContextId) -> Region {
        Region::Suffix { symbols: self.nodes[id.index()].symbols.clone() }
    }

    fn coarser(&self, id: ContextId) -> &[ContextId] {
        &self.nodes[id.index()].parent
    }

    fn finer(&self, id: ContextId) -> &[ContextId] {
        &self.nodes[id.index()].children
    }

    fn match_path(&self, history: &[u32]) -> Result<MatchPath, CoverError> {
        self.check(history)?;
        let depth = self.path_depth(history);
        let mut path = MatchPath { levels: vec![vec![ContextId(0)]], pending: Vec::new() };
        let mut cur = Some(ContextId(0));
        let mut next_id = self.nodes.len() as u32;
        for k in 1..depth {
            let sym = history[history.len() - k];
            cur = cur.and_then(|c| self.edges.get(&(c.0, sym)).copied());
            let id = match cur {
                Some(id) => id,
                None => {
                    let id = ContextId(next_id);
                    next_id += 1;
                    path.pending.push(PendingContext {
                        id,
                        depth: k + 1,
                        region: Region::Suffix { symbols: history[history.len() - k..].to_vec() },
                    });
                    id
                }
            };
            path.levels.push(vec![id]);
        }
        Ok(path)
    }

    fn materialize(&mut self, history: &[u32]) -> Result<Vec<ContextId>, CoverError> {
        self.check(history)?;
        let depth = self.path_depth(history);
        let before = self.nodes.len();
        let mut cur = ContextId(0);
        for k in 1..depth {
            cur = self.child_or_insert(cur, history[history.len() - k]);
        }
        Ok((before as u32..self.nodes.len() as u32).map(ContextId).collect())
    }
}

impl SnapshotCover for SuffixCover {
    type Header = SuffixHeader;
    type Node = SuffixNode;

    fn to_records(&self) -> (SuffixHeader, Vec<SuffixNode>) {
        let header =
            SuffixHeader { alphabet: self.alphabet, max_depth: self.max_depth, depth_limit: self.depth_limit };
        (header, self.nodes.clone())
    }

    fn from_records(header: SuffixHeader, nodes: Vec<SuffixNode>) -> Result<Self, CoverError> {
        let mut cover = SuffixCover::new(header.alphabet, header.max_depth)?;
        cover.extend_suffix(header.depth_limit)?;
        if nodes.first().map(|n| n.depth) != Some(1) {
            return Err(CoverError::Snapshot("suffix cover must start with its root".into()));
        }
        for (i, n) in nodes.iter().enumerate().skip(1) {
            let parent = *n
                .parent
                .first()
                .filter(|p| p.index() < i)
                .ok_or_else(|| CoverError::Snapshot(format!("suffix node {i} has no earlier parent")))?;
            let sym = *n.symbols.first().ok_or_else(|| CoverError::Snapshot(format!("suffix node {i} is empty")))?;
            cover.edges.insert((parent.0, sym), ContextId(i as u32));
        }
        cover.nodes = nodes;
        Ok(cover)
    }
}
