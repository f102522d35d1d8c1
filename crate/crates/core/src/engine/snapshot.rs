//! Line-oriented text snapshots of a [`CoverModel`].
//!
//! The first line is [`SNAPSHOT_HEADER`]. Every following line is one RON
//! record: a single `Model` record (walk direction, observation count, cover
//! parameters, prior), then one `Context` record per context in id order
//! (cover node, stopping log-odds, transition entries, local sufficient
//! statistics), then one `Observation` record per retained observation.
//! Floats are written in shortest round-trip form, so restoring is exact.

use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{ContextState, CoverModel, EngineError, Inner, ModelPrior, Retained, WalkDirection};
use crate::covers::SnapshotCover;

pub const SNAPSHOT_HEADER: &str = "covermodel-snapshot v1";

#[derive(Serialize, Deserialize)]
enum Record<H, N, P, S, Y> {
    Model { direction: WalkDirection, observations: u64, contexts: usize, retained: usize, cover: H, prior: P },
    Context { id: u32, node: N, state: S },
    Observation { tag: u64, y: Y, x: Option<Vec<f64>> },
}

type RecordOf<C, P> = Record<
    <C as SnapshotCover>::Header,
    <C as SnapshotCover>::Node,
    P,
    ContextState<<P as ModelPrior>::Local>,
    super::Owned<P>,
>;

fn io_error(e: std::io::Error) -> EngineError {
    EngineError::Snapshot { line: 0, message: e.to_string() }
}

impl<C, P> CoverModel<C, P>
where
    C: SnapshotCover + Clone,
    P: ModelPrior,
{
    /// Writes the full posterior as text.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> Result<(), EngineError> {
        let inner = &*self.inner;
        let (header, nodes) = inner.cover.to_records();
        let ser = |r: &RecordOf<C, P>| {
            ron::to_string(r).map_err(|e| EngineError::Snapshot { line: 0, message: e.to_string() })
        };
        writeln!(out, "{SNAPSHOT_HEADER}").map_err(io_error)?;
        let model: RecordOf<C, P> = Record::Model {
            direction: inner.direction,
            observations: inner.t,
            contexts: nodes.len(),
            retained: inner.retained.len(),
            cover: header,
            prior: inner.prior.clone(),
        };
        writeln!(out, "{}", ser(&model)?).map_err(io_error)?;
        for (i, (node, state)) in nodes.into_iter().zip(&inner.states).enumerate() {
            let rec: RecordOf<C, P> = Record::Context { id: i as u32, node, state: state.clone() };
            writeln!(out, "{}", ser(&rec)?).map_err(io_error)?;
        }
        for (tag, obs) in inner.retained.iter().enumerate() {
            let rec: RecordOf<C, P> = Record::Observation { tag: tag as u64, y: obs.y.clone(), x: obs.x.clone() };
            writeln!(out, "{}", ser(&rec)?).map_err(io_error)?;
        }
        out.flush().map_err(io_error)
    }

    /// Restores a model written by [`CoverModel::write_snapshot`].
    pub fn read_snapshot<R: BufRead>(input: R) -> Result<Self, EngineError> {
        let bad = |line: usize, message: String| EngineError::Snapshot { line, message };
        let mut lines = input.lines().enumerate();
        let header = lines.next().ok_or_else(|| bad(1, "empty snapshot".into()))?.1.map_err(io_error)?;
        if header.trim_end() != SNAPSHOT_HEADER {
            return Err(bad(1, format!("expected header {SNAPSHOT_HEADER:?}, found {header:?}")));
        }
        let mut model = None;
        let mut nodes = Vec::new();
        let mut states = Vec::new();
        let mut retained = Vec::new();
        for (i, line) in lines {
            let line_no = i + 1;
            let line = line.map_err(io_error)?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: RecordOf<C, P> = ron::from_str(&line).map_err(|e| bad(line_no, e.to_string()))?;
            match rec {
                Record::Model { direction, observations, contexts, retained, cover, prior } => {
                    if model.is_some() {
                        return Err(bad(line_no, "duplicate model record".into()));
                    }
                    model = Some((direction, observations, contexts, retained, cover, prior));
                }
                Record::Context { id, node, state } => {
                    if id as usize != nodes.len() {
                        return Err(bad(line_no, format!("context {id} out of order")));
                    }
                    nodes.push(node);
                    states.push(state);
                }
                Record::Observation { tag, y, x } => {
                    if tag as usize != retained.len() {
                        return Err(bad(line_no, format!("observation {tag} out of order")));
                    }
                    retained.push(Retained { y, x });
                }
            }
        }
        let (direction, t, contexts, retained_len, header, prior) =
            model.ok_or_else(|| bad(0, "missing model record".into()))?;
        if nodes.len() != contexts || retained.len() != retained_len {
            return Err(bad(0, "record counts do not match the model record".into()));
        }
        let cover = C::from_records(header, nodes)?;
        if cover.len() != states.len() {
            return Err(bad(0, "cover and context states disagree".into()));
        }
        Ok(Self { inner: Arc::new(Inner { cover, prior, direction, states, retained, t }) })
    }
}
