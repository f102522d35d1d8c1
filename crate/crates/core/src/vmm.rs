//! Variable-order Markov models: suffix-tree covers with Dirichlet locals,
//! plus an independent context-tree-weighting reference.
//!
//! A model of depth `D` conditions on suffixes of length `0..D-1`; with KT
//! locals and stopping probability 1/2 it computes exactly the CTW mixture
//! over context trees of depth `D - 1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::covers::SuffixCover;
use crate::engine::{CoverModel, DirichletPrior, EngineError, StopRule, WalkDirection};
use crate::math::ln_gamma;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VmmError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("symbol {0:?} is not in the alphabet")]
    UnknownSymbol(String),
    #[error("invalid model configuration: {0}")]
    BadConfig(String),
}

/// Dirichlet prior used by every context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum SymbolPrior {
    /// Krichevsky-Trofimov, pseudo-count 1/2.
    #[default]
    Kt,
    /// Laplace, pseudo-count 1.
    Laplace,
}

impl SymbolPrior {
    pub fn concentration(self) -> f64 {
        match self {
            SymbolPrior::Kt => 0.5,
            SymbolPrior::Laplace => 1.0,
        }
    }
}

impl std::str::FromStr for SymbolPrior {
    type Err = VmmError;

    fn from_str(s: &str) -> Result<Self, VmmError> {
        match s {
            "kt" => Ok(SymbolPrior::Kt),
            "laplace" => Ok(SymbolPrior::Laplace),
            other => Err(VmmError::BadConfig(format!("unknown prior {other:?} (expected kt or laplace)"))),
        }
    }
}

/// Mapping between text and symbol indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Alphabet {
    /// The listed characters, in order.
    Chars(Vec<char>),
    /// All 256 byte values.
    Bytes,
}

impl Alphabet {
    pub fn size(&self) -> usize {
        match self {
            Alphabet::Chars(c) => c.len(),
            Alphabet::Bytes => 256,
        }
    }

    /// Parses an alphabet spec: `bytes`, or the characters themselves (e.g. `01`).
    pub fn parse(spec: &str) -> Result<Self, VmmError> {
        if spec == "bytes" {
            return Ok(Alphabet::Bytes);
        }
        let mut chars: Vec<char> = Vec::new();
        for c in spec.chars() {
            if chars.contains(&c) {
                return Err(VmmError::BadConfig(format!("alphabet repeats {c:?}")));
            }
            chars.push(c);
        }
        if chars.is_empty() {
            return Err(VmmError::BadConfig("alphabet is empty".into()));
        }
        Ok(Alphabet::Chars(chars))
    }

    /// Encodes raw file content. Character alphabets skip whitespace that is
    /// not itself a symbol.
    pub fn encode(&self, content: &[u8]) -> Result<Vec<u32>, VmmError> {
        match self {
            Alphabet::Bytes => Ok(content.iter().map(|b| u32::from(*b)).collect()),
            Alphabet::Chars(chars) => {
                let text = std::str::from_utf8(content)
                    .map_err(|e| VmmError::UnknownSymbol(format!("invalid UTF-8: {e}")))?;
                let mut out = Vec::with_capacity(text.len());
                for c in text.chars() {
                    match chars.iter().position(|a| *a == c) {
                        Some(i) => out.push(i as u32),
                        None if c.is_whitespace() => {}
                        None => return Err(VmmError::UnknownSymbol(c.to_string())),
                    }
                }
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmmConfig {
    pub alphabet: usize,
    /// Number of covers; the longest context suffix has `depth - 1` symbols.
    pub depth: usize,
    pub prior: SymbolPrior,
    /// Stopping probability of every context.
    pub stop: f64,
}

impl VmmConfig {
    pub fn new(alphabet: usize, depth: usize) -> Self {
        Self { alphabet, depth, prior: SymbolPrior::Kt, stop: 0.5 }
    }
}

/// Sequential next-symbol predictor over a growing history.
#[derive(Debug, Clone)]
pub struct VmmModel {
    model: CoverModel<SuffixCover, DirichletPrior>,
    history: Vec<u32>,
}

impl VmmModel {
    pub fn new(config: &VmmConfig) -> Result<Self, VmmError> {
        if config.alphabet == 0 || config.alphabet > u32::MAX as usize {
            return Err(VmmError::BadConfig("alphabet size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&config.stop) {
            return Err(VmmError::BadConfig(format!("stop probability {} outside [0, 1]", config.stop)));
        }
        let cover = SuffixCover::new(config.alphabet as u32, config.depth).map_err(EngineError::from)?;
        let prior = DirichletPrior {
            alphabet: config.alphabet,
            concentration: config.prior.concentration(),
            stop: StopRule::Constant(config.stop),
        };
        Ok(Self { model: CoverModel::new(cover, prior, WalkDirection::Refining)?, history: Vec::new() })
    }

    pub fn history(&self) -> &[u32] {
        &self.history
    }

    pub fn posterior(&self) -> &CoverModel<SuffixCover, DirichletPrior> {
        &self.model
    }

    /// Predictive distribution of the next symbol.
    pub fn next_symbol_probs(&self) -> Result<Vec<f64>, VmmError> {
        let n = self.model.prior().alphabet;
        (0..n).map(|s| Ok(self.model.predict_density(&self.history, &s)?)).collect()
    }

    /// Log probability of `symbol` as the next symbol, then absorbs it.
    pub fn observe(&mut self, symbol: u32) -> Result<f64, VmmError> {
        let lp = self.model.absorb(&self.history, &(symbol as usize))?;
        self.history.push(symbol);
        Ok(lp)
    }

    /// Per-symbol log probabilities of `seq`, absorbing each symbol in turn.
    pub fn score(&mut self, seq: &[u32]) -> Result<Vec<f64>, VmmError> {
        seq.iter().map(|s| self.observe(*s)).collect()
    }

    /// Total log probability of `seq` continuing the current history.
    pub fn sequence_logprob(&mut self, seq: &[u32]) -> Result<f64, VmmError> {
        Ok(self.score(seq)?.iter().sum())
    }
}

/// Context-tree weighting, evaluated in one batch pass over a whole sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CtwOracle {
    pub alphabet: usize,
    /// Longest context length.
    pub depth: usize,
    /// Dirichlet pseudo-count of the estimators (1/2 for KT).
    pub concentration: f64,
}

impl CtwOracle {
    pub fn kt(alphabet: usize, depth: usize) -> Self {
        Self { alphabet, depth, concentration: 0.5 }
    }

    fn ln_estimate(&self, counts: &[usize]) -> f64 {
        let a = self.concentration;
        let n: usize = counts.iter().sum();
        let mut out = ln_gamma(a * self.alphabet as f64) - ln_gamma(a * self.alphabet as f64 + n as f64);
        for c in counts {
            out += ln_gamma(a + *c as f64) - ln_gamma(a);
        }
        out
    }

    /// `ln P_w` of the node with context `suffix` (most recent symbol last),
    /// over the positions `at` whose history ends in it.
    fn ln_weighted(&self, seq: &[u32], suffix_len: usize, at: &[usize]) -> f64 {
        let mut all = vec![0usize; self.alphabet];
        let mut terminating = vec![0usize; self.alphabet];
        let mut by_next: Vec<Vec<usize>> = vec![Vec::new(); self.alphabet];
        for &t in at {
            all[seq[t] as usize] += 1;
            if suffix_len < self.depth {
                if t == suffix_len {
                    terminating[seq[t] as usize] += 1;
                } else {
                    by_next[seq[t - suffix_len - 1] as usize].push(t);
                }
            }
        }
        let ln_all = self.ln_estimate(&all);
        if suffix_len == self.depth {
            return ln_all;
        }
        let mut ln_split = self.ln_estimate(&terminating);
        for child in by_next.iter().filter(|c| !c.is_empty()) {
            ln_split += self.ln_weighted(seq, suffix_len + 1, child);
        }
        let half = 0.5f64.ln();
        crate::math::log_add_exp(half + ln_all, half + ln_split)
    }

    /// `ln P_w(seq)` at the root. Positions whose history is shorter than a
    /// node's context are coded by that node's own estimator when it splits.
    pub fn ctw_logprob(&self, seq: &[u32]) -> Result<f64, VmmError> {
        if let Some(s) = seq.iter().find(|s| **s as usize >= self.alphabet) {
            return Err(VmmError::UnknownSymbol(s.to_string()));
        }
        if seq.is_empty() {
            return Ok(0.0);
        }
        let at: Vec<usize> = (0..seq.len()).collect();
        Ok(self.ln_weighted(seq, 0, &at))
    }
}
