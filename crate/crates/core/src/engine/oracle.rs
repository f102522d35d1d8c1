//! Brute-force reference for finite partition-tree cover models.
//!
//! The latent structure of a refining cover model on a partition tree is a
//! once-drawn stop indicator per internal context: each cell is assigned to
//! the first context on its root-to-leaf chain whose indicator is set (or to
//! its leaf). [`enumerate_predictive`] sums over all indicator settings
//! explicitly, weighting each by its prior probability times the Dirichlet
//! marginal likelihood of the data it assigns to every context, and mixes
//! the resulting per-setting predictives. It shares no arithmetic with the
//! recursive engine.

use serde::{Deserialize, Serialize};

use super::{CoverModel, EngineError, ModelPrior, WalkDirection};
use crate::covers::{ContextId, ExplicitCover, Region};
use crate::local::{DirichletMultinomial, LocalError};
use crate::math::{ln_gamma, log_sum_exp};

/// Largest number of internal contexts [`enumerate_predictive`] accepts.
pub const MAX_ENUMERATED_INTERNAL: usize = 16;

/// A finite partition tree with per-context stop probabilities and
/// Dirichlet pseudo-counts. Nodes are listed parents first; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub parents: Vec<Option<usize>>,
    pub stop: Vec<f64>,
    pub counts: Vec<Vec<f64>>,
}

/// Per-context priors looked up by context id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TablePrior {
    pub stop: Vec<f64>,
    pub counts: Vec<Vec<f64>>,
}

impl ModelPrior for TablePrior {
    type Local = DirichletMultinomial;

    fn stop_prob(&self, id: ContextId, _depth: usize, _region: &Region) -> f64 {
        self.stop[id.index()]
    }

    fn fresh_local(&self, id: ContextId, _depth: usize, _region: &Region) -> Result<DirichletMultinomial, LocalError> {
        DirichletMultinomial::from_counts(self.counts[id.index()].clone())
    }
}

/// An engine over a [`PartitionSpec`], with the cell of every leaf node.
pub struct BuiltSpec {
    pub model: CoverModel<ExplicitCover, TablePrior>,
    /// `cell_of[node]` for leaf nodes, in input order.
    pub cell_of: Vec<Option<u32>>,
}

impl PartitionSpec {
    fn validate(&self) -> Result<(), EngineError> {
        let n = self.parents.len();
        if n == 0 || self.stop.len() != n || self.counts.len() != n {
            return Err(EngineError::BadSpec("parents, stop and counts must have one entry per node".into()));
        }
        let alphabet = self.counts[0].len();
        if self.counts.iter().any(|c| c.len() != alphabet) {
            return Err(EngineError::BadSpec("all contexts need the same alphabet".into()));
        }
        Ok(())
    }

    fn children(&self) -> Vec<Vec<usize>> {
        let mut children = vec![Vec::new(); self.parents.len()];
        for (i, p) in self.parents.iter().enumerate() {
            if let Some(p) = p {
                children[*p].push(i);
            }
        }
        children
    }

    /// Builds the recursive engine for this spec (refining walk).
    pub fn build(&self) -> Result<BuiltSpec, EngineError> {
        self.build_with(WalkDirection::Refining)
    }

    pub fn build_with(&self, direction: WalkDirection) -> Result<BuiltSpec, EngineError> {
        self.validate()?;
        let (cover, ids, cell_of) = ExplicitCover::partition_tree(&self.parents)?;
        let mut stop = vec![0.0; ids.len()];
        let mut counts = vec![Vec::new(); ids.len()];
        for (node, id) in ids.iter().enumerate() {
            stop[id.index()] = self.stop[node];
            counts[id.index()] = self.counts[node].clone();
        }
        let model = CoverModel::new(cover, TablePrior { stop, counts }, direction)?;
        Ok(BuiltSpec { model, cell_of })
    }
}

/// Log Dirichlet-multinomial marginal likelihood of a sequence with the given symbol counts.
fn ln_dirichlet_evidence(alpha: &[f64], n: &[usize]) -> f64 {
    let a: f64 = alpha.iter().sum();
    let total: usize = n.iter().sum();
    let mut out = ln_gamma(a) - ln_gamma(a + total as f64);
    for (al, k) in alpha.iter().zip(n) {
        out += ln_gamma(al + *k as f64) - ln_gamma(*al);
    }
    out
}

/// Exact posterior predictive probability of symbol `y` at `cell` after
/// observing `data` (`(cell, symbol)` pairs), by enumerating every stop
/// indicator setting of the internal contexts.
pub fn enumerate_predictive(spec: &PartitionSpec, data: &[(u32, usize)], cell: u32, y: usize) -> Result<f64, EngineError> {
    spec.validate()?;
    let n = spec.parents.len();
    let alphabet = spec.counts[0].len();
    let children = spec.children();
    let internal: Vec<usize> = (0..n).filter(|i| !children[*i].is_empty()).collect();
    if internal.len() > MAX_ENUMERATED_INTERNAL {
        return Err(EngineError::TooLargeToEnumerate(format!(
            "{} internal contexts (limit {MAX_ENUMERATED_INTERNAL})",
            internal.len()
        )));
    }
    // Root-to-leaf chain of each cell, cells numbered by leaf order.
    let mut chains: Vec<Vec<usize>> = Vec::new();
    for leaf in (0..n).filter(|i| children[*i].is_empty()) {
        let mut chain = vec![leaf];
        let mut cur = leaf;
        while let Some(p) = spec.parents[cur] {
            chain.push(p);
            cur = p;
        }
        chain.reverse();
        chains.push(chain);
    }
    let cells = chains.len() as u32;
    if cell >= cells || data.iter().any(|(c, _)| *c >= cells) {
        return Err(EngineError::BadSpec("cell outside the partition".into()));
    }
    if y >= alphabet || data.iter().any(|(_, s)| *s >= alphabet) {
        return Err(EngineError::BadSpec("symbol outside the alphabet".into()));
    }
    let mut slot = vec![usize::MAX; n];
    for (k, &i) in internal.iter().enumerate() {
        slot[i] = k;
    }

    let mut ln_joint = Vec::new();
    let mut ln_evidence = Vec::new();
    for mask in 0u32..(1u32 << internal.len()) {
        let stops = |node: usize| slot[node] != usize::MAX && mask & (1 << slot[node]) != 0;
        let mut ln_prior = 0.0;
        for (k, &i) in internal.iter().enumerate() {
            let w = spec.stop[i];
            ln_prior += if mask & (1 << k) != 0 { w.ln() } else { (1.0 - w).ln() };
        }
        if ln_prior == f64::NEG_INFINITY {
            continue;
        }
        let assign = |c: u32| -> usize {
            let chain = &chains[c as usize];
            *chain.iter().find(|node| stops(**node)).unwrap_or(chain.last().expect("chains are non-empty"))
        };
        let mut tallies = vec![vec![0usize; alphabet]; n];
        for &(c, s) in data {
            tallies[assign(c)][s] += 1;
        }
        let ln_lik: f64 = (0..n)
            .filter(|i| tallies[*i].iter().any(|k| *k > 0))
            .map(|i| ln_dirichlet_evidence(&spec.counts[i], &tallies[i]))
            .sum();
        let target = assign(cell);
        let mut with_query = tallies[target].clone();
        with_query[y] += 1;
        let ln_pred = ln_dirichlet_evidence(&spec.counts[target], &with_query)
            - ln_dirichlet_evidence(&spec.counts[target], &tallies[target]);
        ln_evidence.push(ln_prior + ln_lik);
        ln_joint.push(ln_prior + ln_lik + ln_pred);
    }
    Ok((log_sum_exp(&ln_joint) - log_sum_exp(&ln_evidence)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_context_is_its_local_predictive() {
        let spec = PartitionSpec { parents: vec![None], stop: vec![0.3], counts: vec![vec![1.0, 2.0]] };
        let p = enumerate_predictive(&spec, &[(0, 0), (0, 1), (0, 1)], 0, 1).unwrap();
        assert!((p - 4.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn always_stopping_root_pools_everything() {
        let spec = PartitionSpec {
            parents: vec![None, Some(0), Some(0)],
            stop: vec![1.0, 0.0, 0.0],
            counts: vec![vec![1.0, 1.0]; 3],
        };
        let data = [(0, 0), (1, 0), (1, 1), (0, 0)];
        let p = enumerate_predictive(&spec, &data, 1, 0).unwrap();
        assert!((p - 4.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn two_level_tree_by_hand() {
        // KT locals, root stop 1/2; after (c0,0),(c1,1) the root stop
        // posterior is 1/3, and P(0 at c0) = 1/3 * 1/2 + 2/3 * 3/4 = 2/3.
        let spec = PartitionSpec {
            parents: vec![None, Some(0), Some(0)],
            stop: vec![0.5, 0.5, 0.5],
            counts: vec![vec![0.5, 0.5]; 3],
        };
        let p = enumerate_predictive(&spec, &[(0, 0), (1, 1)], 0, 0).unwrap();
        assert!((p - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn refuses_large_trees() {
        let mut parents = vec![None];
        for i in 0..20 {
            parents.push(Some(i));
            parents.push(Some(i));
        }
        let n = parents.len();
        let spec = PartitionSpec { parents, stop: vec![0.5; n], counts: vec![vec![1.0, 1.0]; n] };
        assert!(matches!(enumerate_predictive(&spec, &[], 0, 0), Err(EngineError::TooLargeToEnumerate(_))));
    }
}
