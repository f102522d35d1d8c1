use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use super::{ChildReplay, ContextId, Cover, CoverError, MatchPath, Region, SnapshotCover, Split};

static CLAMP_WARNED: AtomicBool = AtomicBool::new(false);

/// What to do with queries outside the root box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum OutOfRootPolicy {
    #[default]
    Reject,
    /// Project onto the root box (warns once per process).
    Clamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdConfig {
    /// Split threshold base; a leaf at depth `k` splits once it holds more than `alpha^k` points.
    pub alpha: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub out_of_root: OutOfRootPolicy,
    /// Leaves at this depth never split.
    pub max_depth: usize,
}

impl KdConfig {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self {
            alpha: 2.0,
            lower,
            upper,
            out_of_root: OutOfRootPolicy::Reject,
            max_depth: 64,
        }
    }

    pub fn validate(&self) -> Result<(), CoverError> {
        if !(self.alpha > 1.0) || !self.alpha.is_finite() {
            return Err(CoverError::BadConfig(format!("alpha must exceed 1, got {}", self.alpha)));
        }
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(CoverError::BadConfig("root box bounds must be non-empty and equal length".into()));
        }
        if self
            .lower
            .iter()
            .zip(&self.upper)
            .any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite())
        {
            return Err(CoverError::BadConfig("root box needs finite lower < upper on every axis".into()));
        }
        if self.max_depth == 0 {
            return Err(CoverError::BadConfig("max_depth must be at least 1".into()));
        }
        Ok(())
    }

    /// Occupancy threshold `alpha^k` of a leaf at depth `k`.
    pub fn threshold(&self, depth: usize) -> f64 {
        self.alpha.powi(depth as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdNode {
    pub depth: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub parent: Vec<ContextId>,
    pub children: Vec<ContextId>,
    /// `(axis, cut)`: points with `x[axis] < cut` go to the first child.
    pub split: Option<(usize, f64)>,
    pub occupancy: u64,
    /// Points held by a leaf until it splits.
    pub buffer: Vec<(Vec<f64>, u64)>,
}

/// Online kd-tree partition sequence over a box in `R^d`.
///
/// Every leaf buffers the points that fell into it. When the occupancy of a
/// leaf at depth `k` exceeds `alpha^k`, the leaf is cut at the midpoint of its
/// longest side (lowest axis on ties) and its buffer is handed to the two
/// children, which may split again immediately.
#[derive(Debug, Clone, PartialEq)]
pub struct KdCover {
    config: KdConfig,
    nodes: Vec<KdNode>,
}

impl KdCover {
    pub fn new(config: KdConfig) -> Result<Self, CoverError> {
        config.validate()?;
        let root = KdNode {
            depth: 1,
            lower: config.lower.clone(),
            upper: config.upper.clone(),
            parent: Vec::new(),
            children: Vec::new(),
            split: None,
            occupancy: 0,
            buffer: Vec::new(),
        };
        Ok(Self { config, nodes: vec![root] })
    }

    pub fn config(&self) -> &KdConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.lower.len()
    }

    pub fn node(&self, id: ContextId) -> &KdNode {
        &self.nodes[id.index()]
    }

    /// Deepest depth present in the tree.
    pub fn max_depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.children.is_empty()).count()
    }

    fn admit<'a>(&self, x: &'a [f64]) -> Result<std::borrow::Cow<'a, [f64]>, CoverError> {
        if x.len() != self.dim() {
            return Err(CoverError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        let inside = x
            .iter()
            .zip(self.config.lower.iter().zip(&self.config.upper))
            .all(|(v, (l, u))| *v >= *l && *v <= *u);
        if inside {
            return Ok(std::borrow::Cow::Borrowed(x));
        }
        match self.config.out_of_root {
            OutOfRootPolicy::Reject => Err(CoverError::QueryOutOfRootRegion),
            OutOfRootPolicy::Clamp => {
                if !CLAMP_WARNED.swap(true, Ordering::Relaxed) {
                    log::warn!("query outside the kd root box; clamping onto it");
                }
                if x.iter().any(|v| v.is_nan()) {
                    return Err(CoverError::QueryOutOfRootRegion);
                }
                Ok(std::borrow::Cow::Owned(
                    x.iter()
                        .zip(self.config.lower.iter().zip(&self.config.upper))
                        .map(|(v, (l, u))| v.clamp(*l, *u))
                        .collect(),
                ))
            }
        }
    }

    fn descend(&self, x: &[f64]) -> Vec<ContextId> {
        let mut chain = vec![ContextId(0)];
        let mut cur = 0usize;
        while let Some((axis, cut)) = self.nodes[cur].split {
            let side = usize::from(x[axis] >= cut);
            cur = self.nodes[cur].children[side].index();
            chain.push(ContextId(cur as u32));
        }
        chain
    }

    /// The leaf containing `x`.
    pub fn leaf(&self, x: &[f64]) -> Result<ContextId, CoverError> {
        let x = self.admit(x)?;
        Ok(*self.descend(&x).last().expect("chain starts at the root"))
    }

    fn split_leaf(&mut self, id: usize) -> Split {
        let node = &self.nodes[id];
        let mut axis = 0;
        let mut widest = f64::NEG_INFINITY;
        for (i, (l, u)) in node.lower.iter().zip(&node.upper).enumerate() {
            if u - l > widest {
                widest = u - l;
                axis = i;
            }
        }
        let cut = 0.5 * (node.lower[axis] + node.upper[axis]);
        let depth = node.depth + 1;
        let mut left_upper = node.upper.clone();
        left_upper[axis] = cut;
        let mut right_lower = node.lower.clone();
        right_lower[axis] = cut;
        let boxes = [(node.lower.clone(), left_upper), (right_lower, node.upper.clone())];
        let buffer = std::mem::take(&mut self.nodes[id].buffer);

        let first = self.nodes.len() as u32;
        let ids = [ContextId(first), ContextId(first + 1)];
        let mut buffers: [Vec<(Vec<f64>, u64)>; 2] = [Vec::new(), Vec::new()];
        for (x, tag) in buffer {
            buffers[usize::from(x[axis] >= cut)].push((x, tag));
        }
        let mut children = Vec::with_capacity(2);
        for ((lower, upper), buf) in boxes.into_iter().zip(buffers) {
            children.push(ChildReplay {
                id: ContextId(self.nodes.len() as u32),
                tags: buf.iter().map(|(_, t)| *t).collect(),
            });
            self.nodes.push(KdNode {
                depth,
                lower,
                upper,
                parent: vec![ContextId(id as u32)],
                children: Vec::new(),
                split: None,
                occupancy: buf.len() as u64,
                buffer: buf,
            });
        }
        let parent = &mut self.nodes[id];
        parent.split = Some((axis, cut));
        parent.children = ids.to_vec();
        Split { parent: ContextId(id as u32), children }
    }

    fn over_threshold(&self, id: usize) -> bool {
        let n = &self.nodes[id];
        n.children.is_empty()
            && n.depth < self.config.max_depth
            && n.occupancy as f64 > self.config.threshold(n.depth)
    }

    /// Adds `x` to its leaf and splits every leaf whose occupancy now exceeds
    /// its threshold. Splits are returned parent-first.
    pub fn observe_and_refine(&mut self, x: &[f64], tag: u64) -> Result<Vec<Split>, CoverError> {
        let x = self.admit(x)?.into_owned();
        let leaf = self.descend(&x).last().expect("chain starts at the root").index();
        let node = &mut self.nodes[leaf];
        node.occupancy += 1;
        node.buffer.push((x, tag));

        let mut splits = Vec::new();
        let mut queue = vec![leaf];
        while let Some(id) = queue.pop() {
            if self.over_threshold(id) {
                let split = self.split_leaf(id);
                queue.extend(split.children.iter().rev().map(|c| c.id.index()));
                splits.push(split);
            }
        }
        Ok(splits)
    }
}

impl Cover for KdCover {
    type Query = [f64];

    fn len(&self) -> usize {
        self.nodes.len()
    }

    fn depth(&self, id: ContextId) -> usize {
        self.nodes[id.index()].depth
    }

    fn region(&self, id: ContextId) -> Region {
        let n = &self.nodes[id.index()];
        Region::Box { lower: n.lower.clone(), upper: n.upper.clone() }
    }

    fn coarser(&self, id: ContextId) -> &[ContextId] {
        &self.nodes[id.index()].parent
    }

    fn finer(&self, id: ContextId) -> &[ContextId] {
        &self.nodes[id.index()].children
    }

    fn match_path(&self, query: &[f64]) -> Result<MatchPath, CoverError> {
        let x = self.admit(query)?;
        Ok(MatchPath {
            levels: self.descend(&x).into_iter().map(|c| vec![c]).collect(),
            pending: Vec::new(),
        })
    }

    fn observe(&mut self, query: &[f64], tag: u64) -> Result<Vec<Split>, CoverError> {
        self.observe_and_refine(query, tag)
    }

    fn local_input<'q>(&self, query: &'q [f64]) -> Option<&'q [f64]> {
        Some(query)
    }

    fn refines_online(&self) -> bool {
        true
    }
}

impl SnapshotCover for KdCover {
    type Header = KdConfig;
    type Node = KdNode;

    fn to_records(&self) -> (KdConfig, Vec<KdNode>) {
        (self.config.clone(), self.nodes.clone())
    }

    fn from_records(config: KdConfig, nodes: Vec<KdNode>) -> Result<Self, CoverError> {
        config.validate()?;
        if nodes.is_empty() {
            return Err(CoverError::Snapshot("kd cover has no root".into()));
        }
        for (i, n) in nodes.iter().enumerate() {
            let bad_link = n.children.iter().chain(&n.parent).any(|c| c.index() >= nodes.len());
            if bad_link || (n.split.is_some() != (n.children.len() == 2)) {
                return Err(CoverError::Snapshot(format!("inconsistent kd node {i}")));
            }
        }
        Ok(Self { config, nodes })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> KdCover {
        KdCover::new(KdConfig::new(vec![0.0, 0.0], vec![1.0, 1.0])).unwrap()
    }

    #[test]
    fn unsplit_root_matches_alone() {
        let cover = unit_square();
        let path = cover.match_path(&[0.3, 0.7]).unwrap();
        assert_eq!(path.levels, vec![vec![ContextId(0)]]);
    }

    #[test]
    fn midpoint_split_routes_left() {
        let mut cover = unit_square();
        for (i, p) in [[0.1, 0.1], [0.9, 0.2], [0.2, 0.8]].iter().enumerate() {
            cover.observe_and_refine(p, i as u64).unwrap();
        }
        // third point exceeds theta_1 = 2; both sides are equal so axis 0 is cut
        assert_eq!(cover.node(ContextId(0)).split, Some((0, 0.5)));
        let path = cover.match_path(&[0.3, 0.7]).unwrap();
        assert_eq!(path.chain().unwrap(), vec![ContextId(0), ContextId(1)]);
        assert_eq!(cover.region(ContextId(1)), Region::Box { lower: vec![0.0, 0.0], upper: vec![0.5, 1.0] });
    }

    #[test]
    fn root_threshold_is_alpha() {
        let mut cover = unit_square();
        assert!(cover.observe_and_refine(&[0.1, 0.1], 0).unwrap().is_empty());
        assert!(cover.observe_and_refine(&[0.2, 0.1], 1).unwrap().is_empty());
        let splits = cover.observe_and_refine(&[0.3, 0.1], 2).unwrap();
        assert_eq!(splits.len(), 1);
        assert_eq!(splits[0].parent, ContextId(0));
        let tags: Vec<_> = splits[0].children.iter().map(|c| c.tags.clone()).collect();
        assert_eq!(tags, vec![vec![0, 1, 2], vec![]]);
    }

    #[test]
    fn depth_three_leaf_splits_on_ninth_point() {
        let mut config = KdConfig::new(vec![0.0], vec![1.0]);
        config.alpha = 2.0;
        let mut cover = KdCover::new(config).unwrap();
        // all points near 0 keep refining the leftmost leaf
        let mut tag = 0;
        while cover.max_depth() < 3 {
            cover.observe_and_refine(&[1e-6], tag).unwrap();
            tag += 1;
        }
        let leaf = cover.leaf(&[1e-6]).unwrap();
        assert_eq!(cover.depth(leaf), 3);
        while cover.node(leaf).occupancy < 8 {
            assert!(cover.observe_and_refine(&[1e-6], tag).unwrap().is_empty());
            tag += 1;
        }
        let splits = cover.observe_and_refine(&[1e-6], tag).unwrap();
        assert_eq!(splits.len(), 1);
        assert_eq!(splits[0].parent, leaf);
    }

    #[test]
    fn splits_along_longest_side() {
        let mut cover = KdCover::new(KdConfig::new(vec![0.0, 0.0], vec![1.0, 4.0])).unwrap();
        for t in 0..3 {
            cover.observe_and_refine(&[0.5, 1.0], t).unwrap();
        }
        let kids = cover.finer(ContextId(0)).to_vec();
        assert_eq!(cover.region(kids[0]), Region::Box { lower: vec![0.0, 0.0], upper: vec![1.0, 2.0] });
        assert_eq!(cover.region(kids[1]), Region::Box { lower: vec![0.0, 2.0], upper: vec![1.0, 4.0] });
    }

    #[test]
    fn out_of_root_rejected_or_clamped() {
        let mut cover = unit_square();
        assert_eq!(cover.match_path(&[1.5, 0.5]), Err(CoverError::QueryOutOfRootRegion));
        cover.config.out_of_root = OutOfRootPolicy::Clamp;
        assert_eq!(cover.match_path(&[1.5, 0.5]).unwrap().depth(), 1);
        assert!(matches!(cover.match_path(&[0.5]), Err(CoverError::DimensionMismatch { .. })));
    }

    #[test]
    fn bad_config_rejected() {
        let mut c = KdConfig::new(vec![0.0], vec![1.0]);
        c.alpha = 1.0;
        assert!(KdCover::new(c).is_err());
        assert!(KdCover::new(KdConfig::new(vec![1.0], vec![1.0])).is_err());
    }
}
