//! Synthetic datasets, CSV ingestion and the streaming hold-out evaluation loop.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::cde::{CdeConfig, CdeError, CdeModel};
use crate::kernel::{fit_cv, CvFit, CvPlan, KernelError};
use crate::local::{LocalModel, NormalWishart, NormalWishartPrior};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("i/o error: {0}")]
    Io(String),
    #[error("line {line}: {message}")]
    ParseError { line: u64, message: String },
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid checkpoints: {0}")]
    BadCheckpoints(String),
    #[error(transparent)]
    Cde(#[from] CdeError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("{0}")]
    Method(String),
}

/// Paired inputs `x ∈ ℝ^d` and outputs `y ∈ ℝ^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x_dim: usize,
    pub y_dim: usize,
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<Vec<f64>>,
    /// Where the rows came from (generator and constants, or file path).
    pub provenance: String,
}

impl Dataset {
    pub fn new(xs: Vec<Vec<f64>>, ys: Vec<Vec<f64>>, provenance: impl Into<String>) -> Result<Self, HarnessError> {
        if xs.len() != ys.len() {
            return Err(HarnessError::InvalidDataset(format!("{} inputs but {} outputs", xs.len(), ys.len())));
        }
        let x_dim = xs.first().map_or(0, Vec::len);
        let y_dim = ys.first().map_or(0, Vec::len);
        for (i, (x, y)) in xs.iter().zip(&ys).enumerate() {
            if x.len() != x_dim || y.len() != y_dim {
                return Err(HarnessError::InvalidDataset(format!("row {i} has inconsistent dimensions")));
            }
            if x.iter().chain(y).any(|v| !v.is_finite()) {
                return Err(HarnessError::InvalidDataset(format!("row {i} has a non-finite value")));
            }
        }
        Ok(Self { x_dim, y_dim, xs, ys, provenance: provenance.into() })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// The first `n` rows and the rest.
    pub fn split_at(&self, n: usize) -> (Dataset, Dataset) {
        let n = n.min(self.len());
        let part = |r: std::ops::Range<usize>, tag: &str| Dataset {
            x_dim: self.x_dim,
            y_dim: self.y_dim,
            xs: self.xs[r.clone()].to_vec(),
            ys: self.ys[r].to_vec(),
            provenance: format!("{} [{tag}]", self.provenance),
        };
        (part(0..n, "head"), part(n..self.len(), "tail"))
    }

    /// Column names `x0.., y0..` as written by [`Dataset::write_csv`].
    pub fn column_names(&self) -> (Vec<String>, Vec<String>) {
        ((0..self.x_dim).map(|i| format!("x{i}")).collect(), (0..self.y_dim).map(|i| format!("y{i}")).collect())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(out);
        let (xn, yn) = self.column_names();
        w.write_record(xn.iter().chain(&yn)).map_err(io)?;
        for (x, y) in self.xs.iter().zip(&self.ys) {
            w.write_record(x.iter().chain(y).map(|v| v.to_string())).map_err(io)?;
        }
        w.flush().map_err(|e| HarnessError::Io(e.to_string()))
    }

    /// Parses a headed, comma-separated numeric table, taking the named columns.
    pub fn read_csv<R: Read>(input: R, x_cols: &[&str], y_cols: &[&str], provenance: &str) -> Result<Self, HarnessError> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header = r.headers().map_err(io)?.clone();
        let find = |name: &&str| {
            header.iter().position(|h| h == *name).ok_or_else(|| HarnessError::MissingColumn(name.to_string()))
        };
        let xi: Vec<usize> = x_cols.iter().map(find).collect::<Result<_, _>>()?;
        let yi: Vec<usize> = y_cols.iter().map(find).collect::<Result<_, _>>()?;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                HarnessError::ParseError { line, message: e.to_string() }
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            let field = |i: &usize| -> Result<f64, HarnessError> {
                let raw = rec.get(*i).unwrap_or("");
                match raw.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(HarnessError::ParseError {
                        line,
                        message: format!("column {:?}: {raw:?} is not a finite number", &header[*i]),
                    }),
                }
            };
            xs.push(xi.iter().map(field).collect::<Result<Vec<_>, _>>()?);
            ys.push(yi.iter().map(field).collect::<Result<Vec<_>, _>>()?);
        }
        Dataset::new(xs, ys, provenance)
    }
}

fn io<E: std::fmt::Display>(e: E) -> HarnessError {
    HarnessError::Io(e.to_string())
}

pub fn load_csv(path: &Path, x_cols: &[&str], y_cols: &[&str]) -> Result<Dataset, HarnessError> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    Dataset::read_csv(std::io::BufReader::new(file), x_cols, y_cols, &path.display().to_string())
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn pick<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    weights.len() - 1
}

fn nonempty(n: usize) -> Result<(), HarnessError> {
    if n == 0 {
        return Err(HarnessError::InvalidDataset("requested zero samples".into()));
    }
    Ok(())
}

/// Angles of the ring's angular mixture components.
pub const RING_ANGLES: [f64; 4] = [0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2];
pub const RING_ANGLE_SD: f64 = 0.5;
pub const RING_NOISE_SD: f64 = 0.1;

/// Points near the unit circle: an angle from an equal-weight mixture of
/// Gaussians at [`RING_ANGLES`] (wrapped by the trigonometry), then a
/// Gaussian observation around `(cos θ, sin θ)`. The first coordinate is the
/// input and the second the output.
pub fn gen_gaussian_ring<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Dataset, HarnessError> {
    nonempty(n)?;
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let k = pick(&[0.25; 4], rng);
        let theta = RING_ANGLES[k] + RING_ANGLE_SD * normal(rng);
        xs.push(vec![theta.cos() + RING_NOISE_SD * normal(rng)]);
        ys.push(vec![theta.sin() + RING_NOISE_SD * normal(rng)]);
    }
    Dataset::new(
        xs,
        ys,
        format!("ring: angles {RING_ANGLES:?}, angle sd {RING_ANGLE_SD}, noise sd {RING_NOISE_SD}"),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixtureKind {
    Gaussian,
    Uniform,
}

impl std::str::FromStr for MixtureKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, HarnessError> {
        match s {
            "gaussian" => Ok(MixtureKind::Gaussian),
            "uniform" => Ok(MixtureKind::Uniform),
            other => Err(HarnessError::InvalidDataset(format!("unknown mixture kind {other:?}"))),
        }
    }
}

pub const MIXTURE_MEANS: [[f64; 2]; 3] = [[-2.0, -2.0], [0.0, 2.0], [3.0, -1.0]];
/// Per-component variance of every coordinate.
pub const MIXTURE_VARIANCES: [f64; 3] = [1.0, 0.5, 1.5];
pub const MIXTURE_WEIGHTS: [f64; 3] = [0.3, 0.4, 0.3];

/// Half-width of uniform component `k`; the box has the Gaussian component's variance.
pub fn uniform_half_width(k: usize) -> f64 {
    (3.0 * MIXTURE_VARIANCES[k]).sqrt()
}

/// Two-dimensional three-component mixture samples with the component of
/// each row. Gaussian components are isotropic with [`MIXTURE_VARIANCES`];
/// uniform components are axis-aligned squares with the same centres and
/// variances.
pub fn gen_mixture_labeled<R: Rng + ?Sized>(
    kind: MixtureKind,
    n: usize,
    rng: &mut R,
) -> Result<(Dataset, Vec<usize>), HarnessError> {
    nonempty(n)?;
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let k = pick(&MIXTURE_WEIGHTS, rng);
        let [mx, my] = MIXTURE_MEANS[k];
        let (x, y) = match kind {
            MixtureKind::Gaussian => {
                let sd = MIXTURE_VARIANCES[k].sqrt();
                (mx + sd * normal(rng), my + sd * normal(rng))
            }
            MixtureKind::Uniform => {
                let h = uniform_half_width(k);
                (mx + h * (2.0 * rng.random::<f64>() - 1.0), my + h * (2.0 * rng.random::<f64>() - 1.0))
            }
        };
        xs.push(vec![x]);
        ys.push(vec![y]);
        labels.push(k);
    }
    let name = match kind {
        MixtureKind::Gaussian => "gaussian",
        MixtureKind::Uniform => "uniform",
    };
    let provenance = format!(
        "{name} mixture: means {MIXTURE_MEANS:?}, variances {MIXTURE_VARIANCES:?}, weights {MIXTURE_WEIGHTS:?}"
    );
    Ok((Dataset::new(xs, ys, provenance)?, labels))
}

/// [`gen_mixture_labeled`] without the labels; the first coordinate is the input.
pub fn gen_mixture<R: Rng + ?Sized>(kind: MixtureKind, n: usize, rng: &mut R) -> Result<Dataset, HarnessError> {
    gen_mixture_labeled(kind, n, rng).map(|(d, _)| d)
}

/// A conditional density estimator under streaming evaluation.
pub trait Method {
    fn name(&self) -> String;
    /// Whether [`Method::advance`] absorbs only the new rows (otherwise it refits).
    fn is_incremental(&self) -> bool;
    /// Brings the model to its state after the first `t` training rows;
    /// called with increasing `t`.
    fn advance(&mut self, train: &Dataset, t: usize) -> Result<(), HarnessError>;
    fn ln_density(&self, x: &[f64], y: &[f64]) -> Result<f64, HarnessError>;
    /// Run metadata, e.g. selected hyper-parameters.
    fn notes(&self) -> Vec<String> {
        Vec::new()
    }
    /// The cover estimator behind this method, if it is one.
    fn as_cover(&self) -> Option<&CoverCdeMethod> {
        None
    }
}

/// The streaming cover-model estimator.
#[derive(Debug, Clone)]
pub struct CoverCdeMethod {
    model: CdeModel,
    seen: usize,
}

impl CoverCdeMethod {
    /// Missing boxes in `config` are fitted to the full training set.
    pub fn new(mut config: CdeConfig, train: &Dataset) -> Result<Self, HarnessError> {
        config.fit_boxes(&train.xs, &train.ys)?;
        Ok(Self { model: CdeModel::new(&config)?, seen: 0 })
    }

    /// Continues from a model that has absorbed the first `seen` training rows.
    pub fn resume(model: CdeModel) -> Self {
        let seen = model.observations() as usize;
        Self { model, seen }
    }

    pub fn model(&self) -> &CdeModel {
        &self.model
    }
}

impl Method for CoverCdeMethod {
    fn name(&self) -> String {
        "cover-cde".into()
    }

    fn is_incremental(&self) -> bool {
        true
    }

    fn advance(&mut self, train: &Dataset, t: usize) -> Result<(), HarnessError> {
        for i in self.seen..t {
            self.model.absorb(&train.xs[i], &train.ys[i])?;
        }
        self.seen = self.seen.max(t);
        Ok(())
    }

    fn ln_density(&self, x: &[f64], y: &[f64]) -> Result<f64, HarnessError> {
        Ok(self.model.ln_predict(x, y)?)
    }

    fn notes(&self) -> Vec<String> {
        vec![format!("contexts={} max_depth={}", self.model.contexts(), self.model.max_depth())]
    }

    fn as_cover(&self) -> Option<&CoverCdeMethod> {
        Some(self)
    }
}

/// The double-kernel estimator, refitted with cross-validation at every checkpoint.
#[derive(Debug, Clone)]
pub struct KernelCdeMethod {
    /// Fixed plan; the default grid for the current prefix if absent.
    pub plan: Option<CvPlan>,
    /// Fold count used with the default grid.
    pub folds: usize,
    fit: Option<CvFit>,
    selections: Vec<(usize, f64, f64)>,
}

impl KernelCdeMethod {
    pub fn new(plan: Option<CvPlan>) -> Self {
        Self { plan, folds: 10, fit: None, selections: Vec::new() }
    }

    /// `(t, h_x, h_y)` chosen at every refit.
    pub fn selections(&self) -> &[(usize, f64, f64)] {
        &self.selections
    }
}

impl Method for KernelCdeMethod {
    fn name(&self) -> String {
        "kernel-cde".into()
    }

    fn is_incremental(&self) -> bool {
        false
    }

    fn advance(&mut self, train: &Dataset, t: usize) -> Result<(), HarnessError> {
        let (xs, ys) = (&train.xs[..t], &train.ys[..t]);
        let plan = match &self.plan {
            Some(p) => p.clone(),
            None => CvPlan { folds: self.folds, ..CvPlan::default_for(xs, ys)? },
        };
        let fit = fit_cv(xs, ys, &plan)?;
        let (hx, hy) = fit.estimator.bandwidths();
        self.selections.push((t, hx, hy));
        self.fit = Some(fit);
        Ok(())
    }

    fn ln_density(&self, x: &[f64], y: &[f64]) -> Result<f64, HarnessError> {
        let fit = self.fit.as_ref().ok_or_else(|| HarnessError::Method("kernel-cde has not been fitted".into()))?;
        Ok(fit.estimator.ln_density(x, y)?)
    }

    fn notes(&self) -> Vec<String> {
        self.selections.iter().map(|(t, hx, hy)| format!("t={t} h_x={hx} h_y={hy}")).collect()
    }
}

/// One Normal-Wishart model of `y` that ignores `x`.
#[derive(Debug, Clone)]
pub struct GlobalNwMethod {
    nw: NormalWishart,
    seen: usize,
}

impl GlobalNwMethod {
    pub fn new(prior: NormalWishartPrior) -> Result<Self, HarnessError> {
        let nw = NormalWishart::new(prior).map_err(|e| HarnessError::Method(e.to_string()))?;
        Ok(Self { nw, seen: 0 })
    }
}

impl Method for GlobalNwMethod {
    fn name(&self) -> String {
        "global-nw".into()
    }

    fn is_incremental(&self) -> bool {
        true
    }

    fn advance(&mut self, train: &Dataset, t: usize) -> Result<(), HarnessError> {
        for i in self.seen..t {
            self.nw.update(&train.ys[i], None).map_err(|e| HarnessError::Method(e.to_string()))?;
        }
        self.seen = self.seen.max(t);
        Ok(())
    }

    fn ln_density(&self, _x: &[f64], y: &[f64]) -> Result<f64, HarnessError> {
        self.nw.ln_predictive(y, None).map_err(|e| HarnessError::Method(e.to_string()))
    }
}

/// A fixed density, for checking the evaluation loop.
#[derive(Debug, Clone, Copy)]
pub struct ConstantDensity(pub f64);

impl Method for ConstantDensity {
    fn name(&self) -> String {
        "constant".into()
    }

    fn is_incremental(&self) -> bool {
        true
    }

    fn advance(&mut self, _train: &Dataset, _t: usize) -> Result<(), HarnessError> {
        Ok(())
    }

    fn ln_density(&self, _x: &[f64], _y: &[f64]) -> Result<f64, HarnessError> {
        Ok(self.0.ln())
    }
}

/// Hold-out loss of one method at one training size.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub t: usize,
    pub method: String,
    /// Mean negative log-likelihood over the whole hold-out set.
    pub l_t: f64,
    /// Wall-clock microseconds per absorbed row (per training row for refits).
    pub us_per_update: f64,
    pub seed: u64,
    /// Set when some hold-out row had zero density (`l_t` is then `+inf`).
    pub zero_density: bool,
}

/// Logarithmically spaced checkpoints `10^2, 10^2.5, …` not exceeding `max`.
pub fn default_checkpoints(max: usize) -> Vec<usize> {
    (0..)
        .map(|k| 10f64.powf(2.0 + 0.5 * k as f64).round() as usize)
        .take_while(|t| *t <= max)
        .collect()
}

/// Mean negative log-likelihood of `method` on `holdout`.
pub fn holdout_loss(method: &dyn Method, holdout: &Dataset) -> Result<(f64, bool), HarnessError> {
    let mut total = 0.0;
    for (x, y) in holdout.xs.iter().zip(&holdout.ys) {
        let lp = method.ln_density(x, y)?;
        if lp == f64::NEG_INFINITY {
            return Ok((f64::INFINITY, true));
        }
        total -= lp;
    }
    Ok((total / holdout.len() as f64, false))
}

/// Trains on growing prefixes of `train` and scores the full hold-out set at
/// every checkpoint. Incremental methods only absorb the rows added since
/// the previous checkpoint.
pub fn run_eval(
    method: &mut dyn Method,
    train: &Dataset,
    holdout: &Dataset,
    checkpoints: &[usize],
    seed: u64,
) -> Result<Vec<EvalRecord>, HarnessError> {
    if checkpoints.is_empty() {
        return Err(HarnessError::BadCheckpoints("no checkpoints".into()));
    }
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) || checkpoints[0] == 0 {
        return Err(HarnessError::BadCheckpoints("checkpoints must be positive and strictly increasing".into()));
    }
    if *checkpoints.last().expect("nonempty") > train.len() {
        return Err(HarnessError::BadCheckpoints(format!("checkpoint beyond {} training rows", train.len())));
    }
    if holdout.is_empty() {
        return Err(HarnessError::InvalidDataset("empty hold-out set".into()));
    }
    let mut records = Vec::with_capacity(checkpoints.len());
    let mut prev = 0;
    for &t in checkpoints {
        let start = Instant::now();
        method.advance(train, t)?;
        let elapsed = start.elapsed().as_secs_f64() * 1e6;
        let rows = if method.is_incremental() { t - prev } else { t };
        let (l_t, zero_density) = holdout_loss(method, holdout)?;
        log::info!("{} t={t} L_t={l_t}", method.name());
        records.push(EvalRecord {
            t,
            method: method.name(),
            l_t,
            us_per_update: elapsed / rows as f64,
            seed,
            zero_density,
        });
        prev = t;
    }
    Ok(records)
}

pub const RECORD_HEADER: [&str; 5] = ["t", "method", "L_t", "us_per_update", "seed"];

/// Writes records as CSV with columns `t,method,L_t,us_per_update,seed`.
pub fn write_records<W: Write>(out: W, records: &[EvalRecord]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RECORD_HEADER).map_err(io)?;
    for r in records {
        w.write_record([
            r.t.to_string(),
            r.method.clone(),
            r.l_t.to_string(),
            r.us_per_update.to_string(),
            r.seed.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| HarnessError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_holdout() -> Dataset {
        let xs = (0..10).map(|i| vec![i as f64 / 10.0]).collect();
        let ys = (0..10).map(|i| vec![(i as f64 + 0.5) / 10.0]).collect();
        Dataset::new(xs, ys, "grid").unwrap()
    }

    #[test]
    fn constant_densities_give_known_losses() {
        let data = unit_holdout();
        let recs = run_eval(&mut ConstantDensity(1.0), &data, &data, &[5, 10], 0).unwrap();
        assert!(recs.iter().all(|r| r.l_t == 0.0));
        let recs = run_eval(&mut ConstantDensity(std::f64::consts::E), &data, &data, &[10], 0).unwrap();
        assert_eq!(recs[0].l_t, -1.0);
        let recs = run_eval(&mut ConstantDensity(0.0), &data, &data, &[10], 0).unwrap();
        assert!(recs[0].zero_density && recs[0].l_t == f64::INFINITY);
    }

    #[test]
    fn checkpoints_are_validated() {
        let data = unit_holdout();
        for bad in [&[][..], &[5, 5], &[0, 3], &[11]] {
            assert!(matches!(
                run_eval(&mut ConstantDensity(1.0), &data, &data, bad, 0),
                Err(HarnessError::BadCheckpoints(_))
            ));
        }
        assert_eq!(default_checkpoints(10_000), vec![100, 316, 1000, 3162, 10000]);
        assert_eq!(default_checkpoints(99), Vec::<usize>::new());
    }

    #[test]
    fn ring_is_deterministic_and_near_unit_radius() {
        let a = gen_gaussian_ring(10_000, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = gen_gaussian_ring(10_000, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        let mean_r = a.xs.iter().zip(&a.ys).map(|(x, y)| x[0].hypot(y[0])).sum::<f64>() / a.len() as f64;
        assert!((0.7..=1.3).contains(&mean_r), "mean radius {mean_r}");
        let one = gen_gaussian_ring(1, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!((one.len(), one.x_dim, one.y_dim), (1, 1, 1));
    }

    #[test]
    fn uniform_mixture_stays_in_its_boxes() {
        let (d, labels) = gen_mixture_labeled(MixtureKind::Uniform, 5000, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        for ((x, y), k) in d.xs.iter().zip(&d.ys).zip(labels) {
            let h = uniform_half_width(k);
            let [mx, my] = MIXTURE_MEANS[k];
            assert!((x[0] - mx).abs() <= h && (y[0] - my).abs() <= h);
        }
    }

    #[test]
    fn gaussian_mixture_proportions() {
        let n = 100_000;
        let (_, labels) = gen_mixture_labeled(MixtureKind::Gaussian, n, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        for (k, w) in MIXTURE_WEIGHTS.iter().enumerate() {
            let got = labels.iter().filter(|l| **l == k).count() as f64;
            let sd = (n as f64 * w * (1.0 - w)).sqrt();
            assert!((got - n as f64 * w).abs() <= 3.0 * sd, "component {k}: {got}");
        }
        assert!(gen_mixture(MixtureKind::Gaussian, 0, &mut ChaCha8Rng::seed_from_u64(3)).is_err());
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let data = Dataset::new(vec![vec![1.0], vec![2.5], vec![-3.0]], vec![vec![0.1], vec![0.2], vec![1e-300]], "t")
            .unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"x0,y0\n"));
        let back = Dataset::read_csv(&buf[..], &["x0"], &["y0"], "t").unwrap();
        assert_eq!((back.x_dim, back.y_dim, back.len()), (1, 1, 3));
        assert_eq!((back.xs, back.ys), (data.xs, data.ys));

        let text = "x,y\n1,2\n3,4\n5,6\n";
        let d = Dataset::read_csv(text.as_bytes(), &["x"], &["y"], "t").unwrap();
        assert_eq!((d.x_dim, d.y_dim, d.len()), (1, 1, 3));
        assert_eq!(
            Dataset::read_csv(text.as_bytes(), &["x"], &["z"], "t").unwrap_err(),
            HarnessError::MissingColumn("z".into())
        );
        let bad = "x,y\n1,2\n3,oops\n";
        assert!(matches!(
            Dataset::read_csv(bad.as_bytes(), &["x"], &["y"], "t"),
            Err(HarnessError::ParseError { line: 3, .. })
        ));
    }

    #[test]
    fn wide_csv_dimensions() {
        let names: Vec<String> = (0..16).map(|i| format!("in{i}")).chain((0..8).map(|i| format!("out{i}"))).collect();
        let mut text = names.join(",") + "\n";
        for r in 0..4 {
            text += &(0..24).map(|c| (r * 24 + c).to_string()).collect::<Vec<_>>().join(",");
            text += "\n";
        }
        let xs: Vec<&str> = names[..16].iter().map(String::as_str).collect();
        let ys: Vec<&str> = names[16..].iter().map(String::as_str).collect();
        let d = Dataset::read_csv(text.as_bytes(), &xs, &ys, "wide").unwrap();
        assert_eq!((d.x_dim, d.y_dim, d.len()), (16, 8, 4));
    }

    #[test]
    fn record_csv_layout() {
        let rec = EvalRecord {
            t: 100,
            method: "m".into(),
            l_t: 1.5,
            us_per_update: 2.0,
            seed: 7,
            zero_density: false,
        };
        let mut buf = Vec::new();
        write_records(&mut buf, &[rec]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,method,L_t,us_per_update,seed\n100,m,1.5,2,7\n");
    }

    #[test]
    fn incremental_methods_match_a_single_pass() {
        let data = gen_mixture(MixtureKind::Gaussian, 400, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let (train, holdout) = data.split_at(300);
        let mut staged = CoverCdeMethod::new(CdeConfig::default(), &train).unwrap();
        let staged_recs = run_eval(&mut staged, &train, &holdout, &[50, 120, 300], 0).unwrap();
        let mut direct = CoverCdeMethod::new(CdeConfig::default(), &train).unwrap();
        let direct_recs = run_eval(&mut direct, &train, &holdout, &[300], 0).unwrap();
        assert_eq!(staged_recs[2].l_t.to_bits(), direct_recs[0].l_t.to_bits());
    }
}
