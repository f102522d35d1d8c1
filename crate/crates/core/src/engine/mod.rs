//! The cover-model posterior and its closed-form per-observation updates.
//!
//! Every context `c` carries a stopping probability `w_c` (stored as the
//! log-odds `lambda_c`), a transition vector `v_c` over the overlapping
//! contexts one level further along the walk, and a local model `pi_c`. For a
//! query, the matching contexts are visited level by level; at context `c`
//! the walk stops with probability `w_c` and emits `y` from `pi_c`, or moves
//! on. The marginal predictive is the recursion
//!
//! ```text
//! psi_c(y) = w_c pi_c(y) + (1 - w_c) sum_b vbar_cb psi_b(y)
//! ```
//!
//! over the matching contexts `b` at the next level (`vbar` is `v`
//! renormalized over those), with `psi_c = pi_c` where the walk has nowhere
//! left to go. After observing `y`, each non-terminal context on the path
//! updates
//!
//! ```text
//! lambda_c += ln pi_c(y) - ln sum_b vbar_cb psi_b(y)
//! v_cb     <- v_cb psi_b(y) / sum_b' vbar_cb' psi_b'(y)
//! ```
//!
//! and every context on the path updates its local model.
//!
//! Two walk orientations are provided. [`WalkDirection::Refining`] starts at
//! the depth-1 contexts and moves to finer ones; the deepest matching context
//! always halts. This is context-tree weighting's recursion and is exact
//! Bayesian inference for partition sequences (see [`oracle`]).
//! [`WalkDirection::Coarsening`] starts at the deepest matching contexts and
//! moves to coarser ones, halting at depth 1. It applies the same updates,
//! but its predictive is not the posterior predictive of a once-drawn walk
//! as soon as coarse contexts are shared, so it is offered for comparison.

use std::borrow::Cow;
use std::sync::Arc;

use rand::Rng;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::covers::{ContextId, Cover, CoverError, MatchPath, Region, Split};
use crate::local::{DirichletMultinomial, LocalError, LocalModel};
use crate::math::{ln_sigmoid, log_add_exp, log_sum_exp, logit, softplus};

pub mod oracle;
mod snapshot;

pub use snapshot::SNAPSHOT_HEADER;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error(transparent)]
    Cover(#[from] CoverError),
    #[error(transparent)]
    Local(#[from] LocalError),
    #[error("no context matches the query")]
    EmptyPath,
    #[error("model too large to enumerate: {0}")]
    TooLargeToEnumerate(String),
    #[error("invalid model specification: {0}")]
    BadSpec(String),
    #[error("malformed snapshot at line {line}: {message}")]
    Snapshot { line: usize, message: String },
}

/// Which way the halting walk runs through the levels of a match path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum WalkDirection {
    /// Start at depth 1, move to finer contexts; the deepest match halts.
    #[default]
    Refining,
    /// Start at the deepest match, move to coarser contexts; depth 1 halts.
    Coarsening,
}

/// Prior stopping probability of a context as a function of its depth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StopRule {
    /// The same probability at every depth.
    Constant(f64),
    /// `ratio^k` at depth `k`.
    Geometric { ratio: f64 },
}

impl StopRule {
    pub fn prob(&self, depth: usize) -> f64 {
        match *self {
            StopRule::Constant(p) => p,
            StopRule::Geometric { ratio } => ratio.powi(depth as i32),
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let ok = match *self {
            StopRule::Constant(p) => (0.0..=1.0).contains(&p),
            StopRule::Geometric { ratio } => ratio > 0.0 && ratio <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(EngineError::BadSpec(format!("invalid stop rule {self:?}")))
        }
    }
}

/// Priors for contexts created at any time: stopping probability and a
/// fresh local model. New transition vectors are always uniform.
pub trait ModelPrior: Clone + std::fmt::Debug + Send + Sync + Serialize + DeserializeOwned {
    type Local: LocalModel;

    fn stop_prob(&self, id: ContextId, depth: usize, region: &Region) -> f64;

    fn fresh_local(&self, id: ContextId, depth: usize, region: &Region) -> Result<Self::Local, LocalError>;
}

/// Symmetric Dirichlet locals over a finite alphabet with a depth-based stop rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletPrior {
    pub alphabet: usize,
    /// Pseudo-count per symbol (1/2 for KT, 1 for Laplace).
    pub concentration: f64,
    pub stop: StopRule,
}

impl ModelPrior for DirichletPrior {
    type Local = DirichletMultinomial;

    fn stop_prob(&self, _id: ContextId, depth: usize, _region: &Region) -> f64 {
        self.stop.prob(depth)
    }

    fn fresh_local(&self, _id: ContextId, _depth: usize, _region: &Region) -> Result<DirichletMultinomial, LocalError> {
        DirichletMultinomial::symmetric(self.alphabet, self.concentration)
    }
}

/// Posterior state of one context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "L: LocalModel")]
pub struct ContextState<L> {
    /// Log-odds of the stopping probability `w`.
    pub log_odds: f64,
    /// `(context, ln v)` for each overlapping context one level further along the walk.
    pub links: Vec<(ContextId, f64)>,
    pub local: L,
    /// Sum of the local model's log predictive over every observation it absorbed.
    pub log_evidence: f64,
}

impl<L> ContextState<L> {
    pub fn stop_prob(&self) -> f64 {
        ln_sigmoid(self.log_odds).exp()
    }
}

/// An observation kept for replay into contexts created later.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retained<Y> {
    pub y: Y,
    pub x: Option<Vec<f64>>,
}

type Owned<P> = <<P as ModelPrior>::Local as LocalModel>::Owned;
type Obs<P> = <<P as ModelPrior>::Local as LocalModel>::Obs;

#[derive(Debug, Clone)]
struct Inner<C, P: ModelPrior> {
    cover: C,
    prior: P,
    direction: WalkDirection,
    states: Vec<ContextState<P::Local>>,
    retained: Vec<Retained<Owned<P>>>,
    t: u64,
}

/// One row of a [`PsiTable`].
#[derive(Debug, Clone, PartialEq)]
pub struct PsiEntry {
    pub id: ContextId,
    pub depth: usize,
    /// `ln psi_c(y)`.
    pub ln_psi: f64,
    /// `ln pi_c(y)`.
    pub ln_local: f64,
    /// `ln sum_b vbar_cb psi_b(y)`; `None` where the walk halts.
    pub ln_next: Option<f64>,
}

/// The recursion's values for one `(query, y)`, in walk order.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiTable {
    /// `levels[i]` holds the contexts visited at step `i` of the walk.
    pub levels: Vec<Vec<PsiEntry>>,
    /// Log marginal predictive (the start level averaged uniformly).
    pub ln_predictive: f64,
}

/// A path context as the recursion sees it: live state or fresh prior.
struct NodeView<'a, L: Clone> {
    id: ContextId,
    depth: usize,
    log_odds: f64,
    local: Cow<'a, L>,
    /// `ln vbar` toward each context of the next walk level.
    ln_vbar: Vec<f64>,
}

/// Exact cover-model posterior over a cover sequence `C` with priors `P`.
///
/// Cloning is cheap and yields an immutable snapshot: state is shared until
/// the next mutation, which copies it if a snapshot is still alive.
#[derive(Debug, Clone)]
pub struct CoverModel<C: Cover, P: ModelPrior> {
    inner: Arc<Inner<C, P>>,
}

impl<C, P> CoverModel<C, P>
where
    C: Cover + Clone,
    P: ModelPrior,
{
    /// Wraps a cover; every context it already holds starts at its prior.
    pub fn new(cover: C, prior: P, direction: WalkDirection) -> Result<Self, EngineError> {
        let mut inner = Inner { cover, prior, direction, states: Vec::new(), retained: Vec::new(), t: 0 };
        let ids: Vec<ContextId> = (0..inner.cover.len() as u32).map(ContextId).collect();
        inner.add_contexts(&ids)?;
        Ok(Self { inner: Arc::new(inner) })
    }

    /// A read-only handle sharing the current state.
    pub fn snapshot(&self) -> Self {
        self.clone()
    }

    pub fn cover(&self) -> &C {
        &self.inner.cover
    }

    pub fn prior(&self) -> &P {
        &self.inner.prior
    }

    pub fn direction(&self) -> WalkDirection {
        self.inner.direction
    }

    /// Number of observations absorbed.
    pub fn observations(&self) -> u64 {
        self.inner.t
    }

    pub fn state(&self, id: ContextId) -> &ContextState<P::Local> {
        &self.inner.states[id.index()]
    }

    pub fn states(&self) -> &[ContextState<P::Local>] {
        &self.inner.states
    }

    pub fn match_path(&self, query: &C::Query) -> Result<MatchPath, EngineError> {
        let path = self.inner.cover.match_path(query)?;
        if path.is_empty() {
            return Err(EngineError::EmptyPath);
        }
        Ok(path)
    }

    /// The full recursion table at `(query, y)`.
    pub fn psi_table(&self, query: &C::Query, y: &Obs<P>) -> Result<PsiTable, EngineError> {
        let path = self.match_path(query)?;
        let views = self.inner.views(&path)?;
        self.inner.table(&views, y, self.inner.cover.local_input(query))
    }

    /// Log marginal predictive density (or mass) of `y` at `query`.
    pub fn ln_predict(&self, query: &C::Query, y: &Obs<P>) -> Result<f64, EngineError> {
        Ok(self.psi_table(query, y)?.ln_predictive)
    }

    pub fn predict_density(&self, query: &C::Query, y: &Obs<P>) -> Result<f64, EngineError> {
        self.ln_predict(query, y).map(f64::exp)
    }

    /// Absorbs `(query, y)` and returns the log predictive it had beforehand.
    pub fn absorb(&mut self, query: &C::Query, y: &Obs<P>) -> Result<f64, EngineError> {
        Arc::make_mut(&mut self.inner).absorb(query, y)
    }

    /// Draws `y` by running the posterior halting walk at `query`.
    pub fn sample_y<R: Rng + ?Sized>(&self, query: &C::Query, rng: &mut R) -> Result<Owned<P>, EngineError> {
        let path = self.match_path(query)?;
        let views = self.inner.views(&path)?;
        let mut j = if views[0].len() == 1 { 0 } else { rng.random_range(0..views[0].len()) };
        for (i, level) in views.iter().enumerate() {
            let node = &level[j];
            let last = i + 1 == views.len();
            if last || rng.random::<f64>() < ln_sigmoid(node.log_odds).exp() {
                return Ok(node.local.sample(rng));
            }
            let mut u = rng.random::<f64>();
            j = node.ln_vbar.len() - 1;
            for (k, lv) in node.ln_vbar.iter().enumerate() {
                let p = lv.exp();
                if u < p {
                    j = k;
                    break;
                }
                u -= p;
            }
        }
        unreachable!("the last walk level always halts")
    }
}

impl<C, P> Inner<C, P>
where
    C: Cover + Clone,
    P: ModelPrior,
{
    /// Adjacent contexts one level further along the walk.
    fn adjacency(&self, id: ContextId) -> &[ContextId] {
        match self.direction {
            WalkDirection::Refining => self.cover.finer(id),
            WalkDirection::Coarsening => self.cover.coarser(id),
        }
    }

    fn fresh_state(&self, id: ContextId, depth: usize, region: &Region) -> Result<ContextState<P::Local>, EngineError> {
        let w = self.prior.stop_prob(id, depth, region);
        if !(0.0..=1.0).contains(&w) {
            return Err(EngineError::BadSpec(format!("stop probability {w} of context {id} outside [0, 1]")));
        }
        Ok(ContextState {
            log_odds: logit(w),
            links: Vec::new(),
            local: self.prior.fresh_local(id, depth, region)?,
            log_evidence: 0.0,
        })
    }

    /// Creates states for newly materialized contexts and extends the
    /// transition vectors of their neighbours.
    fn add_contexts(&mut self, ids: &[ContextId]) -> Result<(), EngineError> {
        for &id in ids {
            debug_assert_eq!(id.index(), self.states.len());
            let state = self.fresh_state(id, self.cover.depth(id), &self.cover.region(id))?;
            self.states.push(state);
        }
        let mut touched: Vec<ContextId> = Vec::new();
        for &id in ids {
            touched.push(id);
            touched.extend_from_slice(self.cover.coarser(id));
            touched.extend_from_slice(self.cover.finer(id));
        }
        touched.sort_unstable();
        touched.dedup();
        for id in touched {
            self.sync_links(id);
        }
        Ok(())
    }

    /// Appends links for adjacency entries added since the last sync. New
    /// entries get `1/n` and existing weights are scaled by `n_old/n`.
    fn sync_links(&mut self, id: ContextId) {
        let adjacency = self.adjacency(id).to_vec();
        let links = &mut self.states[id.index()].links;
        let old = links.len();
        let total = adjacency.len();
        if total == old {
            return;
        }
        debug_assert!(links.iter().zip(&adjacency).all(|((a, _), b)| a == b));
        let scale = (old as f64 / total as f64).ln();
        for link in links.iter_mut() {
            link.1 += scale;
        }
        let fresh = -(total as f64).ln();
        links.extend(adjacency[old..].iter().map(|b| (*b, fresh)));
    }

    /// Path levels in walk order, each context resolved to live or fresh state.
    fn views(&self, path: &MatchPath) -> Result<Vec<Vec<NodeView<'_, P::Local>>>, EngineError> {
        let mut order: Vec<&Vec<ContextId>> = path.levels.iter().collect();
        if self.direction == WalkDirection::Coarsening {
            order.reverse();
        }
        let mut views = Vec::with_capacity(order.len());
        for (i, level) in order.iter().enumerate() {
            let next: &[ContextId] = order.get(i + 1).map(|l| l.as_slice()).unwrap_or(&[]);
            let mut row = Vec::with_capacity(level.len());
            for &id in level.iter() {
                row.push(self.view(path, id, next)?);
            }
            views.push(row);
        }
        Ok(views)
    }

    fn view<'a>(&'a self, path: &MatchPath, id: ContextId, next: &[ContextId]) -> Result<NodeView<'a, P::Local>, EngineError> {
        if let Some(state) = self.states.get(id.index()) {
            // Every matching context at the next level contains the query, so it
            // overlaps `id` and is linked to it, possibly not yet materialized.
            let linked = state.links.len();
            let unlinked = next.iter().filter(|b| !state.links.iter().any(|(l, _)| l == *b)).count();
            let total = (linked + unlinked) as f64;
            let scale = (linked as f64 / total).ln();
            let fresh = -total.ln();
            let ln_v: Vec<f64> = next
                .iter()
                .map(|b| state.links.iter().find(|(l, _)| l == b).map_or(fresh, |(_, lv)| lv + scale))
                .collect();
            let ln_mass = log_sum_exp(&ln_v);
            Ok(NodeView {
                id,
                depth: self.cover.depth(id),
                log_odds: state.log_odds,
                local: Cow::Borrowed(&state.local),
                ln_vbar: ln_v.iter().map(|v| v - ln_mass).collect(),
            })
        } else {
            let pending = path.pending(id).ok_or(EngineError::EmptyPath)?;
            let fresh = self.fresh_state(id, pending.depth, &pending.region)?;
            let uniform = -(next.len() as f64).ln();
            Ok(NodeView {
                id,
                depth: pending.depth,
                log_odds: fresh.log_odds,
                local: Cow::Owned(fresh.local),
                ln_vbar: vec![uniform; next.len()],
            })
        }
    }

    fn table(
        &self,
        views: &[Vec<NodeView<'_, P::Local>>],
        y: &Obs<P>,
        x: Option<&[f64]>,
    ) -> Result<PsiTable, EngineError> {
        let mut levels: Vec<Vec<PsiEntry>> = vec![Vec::new(); views.len()];
        for i in (0..views.len()).rev() {
            let mut row = Vec::with_capacity(views[i].len());
            for node in &views[i] {
                let ln_local = node.local.ln_predictive(y, x)?;
                let (ln_psi, ln_next) = if i + 1 == views.len() {
                    (ln_local, None)
                } else {
                    let terms: Vec<f64> =
                        node.ln_vbar.iter().zip(&levels[i + 1]).map(|(v, e)| v + e.ln_psi).collect();
                    let ln_next = log_sum_exp(&terms);
                    let psi = log_add_exp(ln_sigmoid(node.log_odds) + ln_local, ln_sigmoid(-node.log_odds) + ln_next);
                    (psi, Some(ln_next))
                };
                row.push(PsiEntry { id: node.id, depth: node.depth, ln_psi, ln_local, ln_next });
            }
            levels[i] = row;
        }
        let start: Vec<f64> = levels[0].iter().map(|e| e.ln_psi).collect();
        let ln_predictive = log_sum_exp(&start) - (start.len() as f64).ln();
        Ok(PsiTable { levels, ln_predictive })
    }

    fn absorb(&mut self, query: &C::Query, y: &Obs<P>) -> Result<f64, EngineError> {
        let created = self.cover.materialize(query)?;
        self.add_contexts(&created)?;
        let path = self.cover.match_path(query)?;
        if path.is_empty() {
            return Err(EngineError::EmptyPath);
        }
        debug_assert!(path.pending.is_empty());
        let x = self.cover.local_input(query);
        let table = {
            let views = self.views(&path)?;
            self.table(&views, y, x)?
        };

        let levels = table.levels.len();
        for (i, row) in table.levels.iter().enumerate() {
            for entry in row {
                let state = &mut self.states[entry.id.index()];
                if let Some(ln_next) = entry.ln_next {
                    let delta = entry.ln_local - ln_next;
                    if state.log_odds.is_finite() && !delta.is_nan() {
                        state.log_odds += delta;
                    }
                    if i + 1 < levels && ln_next.is_finite() {
                        for b in &table.levels[i + 1] {
                            if let Some(link) = state.links.iter_mut().find(|(l, _)| *l == b.id) {
                                link.1 += b.ln_psi - ln_next;
                            }
                        }
                    }
                }
                state.local.update(y, x)?;
                state.log_evidence += entry.ln_local;
            }
        }

        if self.cover.refines_online() {
            let tag = self.t;
            self.retained.push(Retained { y: y.to_owned(), x: x.map(<[f64]>::to_vec) });
            let splits = self.cover.observe(query, tag)?;
            for split in splits {
                self.apply_split(&split)?;
            }
        }
        self.t += 1;
        Ok(table.ln_predictive)
    }

    /// Wires the children of a refined context, replays their data, and for
    /// the refining walk corrects the stopping posteriors above them.
    fn apply_split(&mut self, split: &Split) -> Result<(), EngineError> {
        let ids: Vec<ContextId> = split.children.iter().map(|c| c.id).collect();
        self.add_contexts(&ids)?;
        let mut children_evidence = 0.0;
        for child in &split.children {
            let state = &mut self.states[child.id.index()];
            for &tag in &child.tags {
                let obs = &self.retained[tag as usize];
                let y: &Obs<P> = std::borrow::Borrow::borrow(&obs.y);
                let lp = state.local.ln_predictive(y, obs.x.as_deref())?;
                state.local.update(y, obs.x.as_deref())?;
                state.log_evidence += lp;
            }
            children_evidence += state.log_evidence;
        }
        if self.direction == WalkDirection::Coarsening {
            return Ok(());
        }

        // The split context was terminal for all its data, so its marginal
        // likelihood was its own evidence E. It now mixes "stop" (E) with
        // "continue" (the children's evidence), and every ancestor's
        // continue-branch likelihood shifts by the same amount.
        let leaf = &mut self.states[split.parent.index()];
        let prior = leaf.log_odds;
        let evidence = leaf.log_evidence;
        leaf.log_odds = prior + evidence - children_evidence;
        let mut shift =
            log_add_exp(ln_sigmoid(prior) + evidence, ln_sigmoid(-prior) + children_evidence) - evidence;
        let mut cur = split.parent;
        while shift != 0.0 {
            let parents = self.cover.coarser(cur);
            let Some(&parent) = parents.first() else { break };
            if parents.len() > 1 {
                log::warn!("online refinement below overlapping contexts is not corrected exactly");
            }
            let state = &mut self.states[parent.index()];
            let lambda = state.log_odds;
            if lambda == f64::INFINITY {
                break;
            }
            if lambda.is_finite() {
                let updated = lambda - shift;
                shift += softplus(updated) - softplus(lambda);
                state.log_odds = updated;
            }
            cur = parent;
        }
        Ok(())
    }
}
