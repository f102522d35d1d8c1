use serde::{Deserialize, Serialize};

use super::{ContextId, Cover, CoverError, MatchPath, Region, SnapshotCover};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplicitContext {
    pub depth: usize,
    pub cells: Vec<u32>,
    pub parents: Vec<ContextId>,
    pub children: Vec<ContextId>,
}

/// A finite cover sequence over cells `0..num_cells`, given context by context.
///
/// Contexts may overlap, so a cell can match several contexts per depth. A
/// cell's path stops at the first depth where nothing contains it.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitCover {
    num_cells: u32,
    contexts: Vec<ExplicitContext>,
    by_level: Vec<Vec<ContextId>>,
}

impl ExplicitCover {
    pub fn new(num_cells: u32) -> Self {
        Self { num_cells, contexts: Vec::new(), by_level: Vec::new() }
    }

    pub fn num_cells(&self) -> u32 {
        self.num_cells
    }

    /// Adds a context; depths must be added in non-decreasing order.
    pub fn add_context(&mut self, depth: usize, mut cells: Vec<u32>) -> Result<ContextId, CoverError> {
        let deepest = self.by_level.len();
        if depth == 0 || depth < deepest || depth > deepest + 1 {
            return Err(CoverError::BadConfig(format!(
                "context depth {depth} out of order (deepest so far {deepest})"
            )));
        }
        cells.sort_unstable();
        cells.dedup();
        if cells.is_empty() || cells.iter().any(|c| *c >= self.num_cells) {
            return Err(CoverError::BadConfig("context cells must be non-empty and in range".into()));
        }
        let id = ContextId(self.contexts.len() as u32);
        let parents: Vec<ContextId> = if depth > 1 {
            self.by_level[depth - 2]
                .iter()
                .copied()
                .filter(|p| intersects(&self.contexts[p.index()].cells, &cells))
                .collect()
        } else {
            Vec::new()
        };
        for p in &parents {
            self.contexts[p.index()].children.push(id);
        }
        if depth > deepest {
            self.by_level.push(Vec::new());
        }
        self.by_level[depth - 1].push(id);
        self.contexts.push(ExplicitContext { depth, cells, parents, children: Vec::new() });
        Ok(id)
    }

    /// Partition tree from a parent list (`None` marks the root, parents
    /// before children). Cells are the leaves in input order.
    ///
    /// Returns the cover, the context id of every input node, and the cell of
    /// every leaf input node.
    pub fn partition_tree(
        parents: &[Option<usize>],
    ) -> Result<(Self, Vec<ContextId>, Vec<Option<u32>>), CoverError> {
        let n = parents.len();
        let mut depth = vec![0usize; n];
        let mut children = vec![Vec::new(); n];
        for (i, p) in parents.iter().enumerate() {
            match p {
                None if i == 0 => depth[i] = 1,
                Some(p) if *p < i => {
                    depth[i] = depth[*p] + 1;
                    children[*p].push(i);
                }
                _ => return Err(CoverError::BadConfig(format!("node {i} has an invalid parent"))),
            }
        }
        let mut cell_of = vec![None; n];
        let mut next = 0u32;
        for i in 0..n {
            if children[i].is_empty() {
                cell_of[i] = Some(next);
                next += 1;
            }
        }
        fn collect(i: usize, children: &[Vec<usize>], cell_of: &[Option<u32>], out: &mut Vec<u32>) {
            if let Some(c) = cell_of[i] {
                out.push(c);
            }
            for &ch in &children[i] {
                collect(ch, children, cell_of, out);
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|i| depth[*i]);
        let mut cover = ExplicitCover::new(next);
        let mut ids = vec![ContextId(0); n];
        for i in order {
            let mut cells = Vec::new();
            collect(i, &children, &cell_of, &mut cells);
            ids[i] = cover.add_context(depth[i], cells)?;
        }
        Ok((cover, ids, cell_of))
    }

    pub fn context(&self, id: ContextId) -> &ExplicitContext {
        &self.contexts[id.index()]
    }

    pub fn levels(&self) -> usize {
        self.by_level.len()
    }

    pub fn level(&self, depth: usize) -> &[ContextId] {
        &self.by_level[depth - 1]
    }
}

fn intersects(a: &[u32], b: &[u32]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

impl Cover for ExplicitCover {
    type Query = u32;

    fn len(&self) -> usize {
        self.contexts.len()
    }

    fn depth(&self, id: ContextId) -> usize {
        self.contexts[id.index()].depth
    }

    fn region(&self, id: ContextId) -> Region {
        Region::Cells { cells: self.contexts[id.index()].cells.clone() }
    }

    fn coarser(&self, id: ContextId) -> &[ContextId] {
        &self.contexts[id.index()].parents
    }

    fn finer(&self, id: ContextId) -> &[ContextId] {
        &self.contexts[id.index()].children
    }

    fn match_path(&self, cell: &u32) -> Result<MatchPath, CoverError> {
        let mut path = MatchPath::default();
        for level in &self.by_level {
            let hits: Vec<ContextId> = level
                .iter()
                .copied()
                .filter(|c| self.contexts[c.index()].cells.binary_search(cell).is_ok())
                .collect();
            if hits.is_empty() {
                break;
            }
            path.levels.push(hits);
        }
        if path.is_empty() {
            return Err(CoverError::UnknownCell(*cell));
        }
        Ok(path)
    }
}

impl SnapshotCover for ExplicitCover {
    type Header = u32;
    type Node = ExplicitContext;

    fn to_records(&self) -> (u32, Vec<ExplicitContext>) {
        (self.num_cells, self.contexts.clone())
    }

    fn from_records(num_cells: u32, nodes: Vec<ExplicitContext>) -> Result<Self, CoverError> {
        let mut cover = ExplicitCover::new(num_cells);
        for n in &nodes {
            cover.add_context(n.depth, n.cells.clone())?;
        }
        if cover.contexts != nodes {
            return Err(CoverError::Snapshot("explicit cover adjacency does not match its cells".into()));
        }
        Ok(cover)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_tree_paths_are_chains() {
        // root -> {a, b}, a -> {a0, a1}
        let (cover, ids, cells) = ExplicitCover::partition_tree(&[None, Some(0), Some(0), Some(1), Some(1)]).unwrap();
        assert_eq!(cover.num_cells(), 3);
        let cell_a1 = cells[4].unwrap();
        let path = cover.match_path(&cell_a1).unwrap();
        assert_eq!(path.chain().unwrap(), vec![ids[0], ids[1], ids[4]]);
        let cell_b = cells[2].unwrap();
        assert_eq!(cover.match_path(&cell_b).unwrap().depth(), 2);
    }

    #[test]
    fn overlapping_contexts_match_together() {
        let mut cover = ExplicitCover::new(4);
        cover.add_context(1, vec![0, 1, 2, 3]).unwrap();
        let a = cover.add_context(2, vec![0, 1, 2]).unwrap();
        let b = cover.add_context(2, vec![1, 2, 3]).unwrap();
        let path = cover.match_path(&1).unwrap();
        assert_eq!(path.levels[1], vec![a, b]);
        assert_eq!(path.reachable(), 3);
        assert!(cover.add_context(1, vec![0]).is_err());
        assert_eq!(cover.match_path(&9), Err(CoverError::UnknownCell(9)));
    }
}
