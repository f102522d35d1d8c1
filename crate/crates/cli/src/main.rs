//! `covermodel`: generate datasets, run streaming evaluations, sample
//! conditional densities and score symbol sequences.

mod config;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use covermodel::cde::{CdeConfig, CdeModel, Components};
use covermodel::engine::StopRule;
use covermodel::harness::{
    default_checkpoints, gen_gaussian_ring, gen_mixture, load_csv, run_eval, write_records, CoverCdeMethod, Dataset,
    EvalRecord, KernelCdeMethod, Method, MixtureKind,
};
use covermodel::vmm::{Alphabet, CtwOracle, SymbolPrior, VmmConfig, VmmModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use config::{List, Settings};

/// Environment variable naming the default directory for generated files.
const OUT_DIR_ENV: &str = "COVERMODEL_OUT_DIR";

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration; exit code 2.
    Usage(String),
    /// Failure while running; exit code 1.
    Runtime(anyhow::Error),
}

impl<E: std::error::Error + Send + Sync + 'static> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Runtime(e.into())
    }
}

fn runtime(e: anyhow::Error) -> CliError {
    CliError::Runtime(e)
}

#[derive(Parser, Debug)]
#[command(name = "covermodel", version, about = "Cover-model conditional density estimation and sequence scoring")]
struct Cli {
    /// `key = value` file supplying defaults for any long flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for generated files (default: $COVERMODEL_OUT_DIR, else the current directory).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write synthetic train and hold-out CSVs.
    Gen(GenArgs),
    /// Evaluate one method on growing training prefixes.
    FitEval(FitEvalArgs),
    /// Evaluate several methods on identical data and merge their records.
    Compare(CompareArgs),
    /// Fit the cover estimator and draw samples of y at one input.
    Sample(SampleArgs),
    /// Log probability of a symbol file under a variable-order Markov model.
    Score(ScoreArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    /// gaussian-mixture, uniform-mixture or ring.
    #[arg(long)]
    kind: Option<String>,
    /// Training rows.
    #[arg(long)]
    n: Option<usize>,
    /// Hold-out rows (default: same as --n).
    #[arg(long)]
    holdout_n: Option<usize>,
    /// Generator seed (default: 0).
    #[arg(long)]
    seed: Option<u64>,
    /// File name prefix (default: the kind).
    #[arg(long)]
    prefix: Option<String>,
}

#[derive(Args, Debug, Default)]
struct DataArgs {
    /// Training CSV (instead of a generator).
    #[arg(long)]
    train: Option<PathBuf>,
    /// Hold-out CSV.
    #[arg(long)]
    holdout: Option<PathBuf>,
    /// Input columns of the CSVs.
    #[arg(long)]
    x_cols: Option<List<String>>,
    /// Output columns of the CSVs.
    #[arg(long)]
    y_cols: Option<List<String>>,
    /// Generator: gaussian-mixture, uniform-mixture or ring.
    #[arg(long)]
    kind: Option<String>,
    /// Training rows to generate.
    #[arg(long)]
    n: Option<usize>,
    /// Hold-out rows to generate (default: same as --n).
    #[arg(long)]
    holdout_n: Option<usize>,
    /// Generator seed (default: 0).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug, Default)]
struct ModelArgs {
    /// kd split threshold base.
    #[arg(long)]
    alpha: Option<f64>,
    /// Stop probability at depth k is ratio^k.
    #[arg(long)]
    stop_ratio: Option<f64>,
    /// Local components: both, nw or tree.
    #[arg(long)]
    components: Option<Components>,
    /// Depth of the Bayesian-tree local densities.
    #[arg(long)]
    tree_depth: Option<usize>,
    /// Scale of the Normal-Wishart prior scatter matrix.
    #[arg(long)]
    nw_scale: Option<f64>,
    /// Cross-validation folds of the kernel estimator.
    #[arg(long)]
    folds: Option<usize>,
}

#[derive(Args, Debug)]
struct FitEvalArgs {
    /// cover-cde or kernel-cde.
    #[arg(long)]
    method: Option<String>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Training sizes to evaluate at (default: 100, 316, 1000, ...).
    #[arg(long)]
    checkpoints: Option<List<usize>>,
    /// Results CSV (relative paths land in the output directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the cover estimator's posterior here after the last checkpoint.
    #[arg(long)]
    save_snapshot: Option<PathBuf>,
    /// Continue the cover estimator from this snapshot.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Comma-separated methods.
    #[arg(long)]
    methods: Option<List<String>>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Training sizes to evaluate at (default: 100, 316, 1000, ...).
    #[arg(long)]
    checkpoints: Option<List<usize>>,
    /// Merged results CSV (relative paths land in the output directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Input point, comma-separated coordinates.
    #[arg(long)]
    at: Option<List<f64>>,
    /// Number of samples.
    #[arg(long)]
    count: Option<usize>,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    /// Symbol file.
    file: PathBuf,
    /// Symbols in order (e.g. 01 or acgt), or `bytes`.
    #[arg(long)]
    alphabet: Option<String>,
    /// Number of covers; contexts have up to depth - 1 symbols.
    #[arg(long)]
    depth: Option<usize>,
    /// kt or laplace.
    #[arg(long)]
    prior: Option<String>,
    /// Stopping probability of every context.
    #[arg(long)]
    stop: Option<f64>,
    /// Also print the context-tree-weighting reference (`ctw`).
    #[arg(long)]
    oracle: Option<String>,
    /// Print one log probability per symbol.
    #[arg(long)]
    per_symbol: bool,
}

const METHODS: [&str; 3] = ["cover-cde", "kernel-cde", "vmm"];

fn output_dir(flag: Option<&Path>) -> Result<PathBuf, CliError> {
    let dir = match flag {
        Some(d) => d.to_path_buf(),
        None => std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(".")),
    };
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display())).map_err(runtime)?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display())).map_err(runtime)?;
    Ok(BufWriter::new(f))
}

fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Writes the effective settings as a reusable config file, with notes as comments.
fn write_meta(path: &Path, settings: &Settings, notes: &[String]) -> Result<(), CliError> {
    let mut w = create(path)?;
    for (k, v) in settings.effective() {
        writeln!(w, "{k} = {v}")?;
    }
    for n in notes {
        for line in n.lines() {
            writeln!(w, "# {line}")?;
        }
    }
    w.flush()?;
    Ok(())
}

fn generate(kind: &str, n: usize, rng: &mut ChaCha8Rng) -> Result<Dataset, CliError> {
    let data = match kind {
        "gaussian-mixture" => gen_mixture(MixtureKind::Gaussian, n, rng),
        "uniform-mixture" => gen_mixture(MixtureKind::Uniform, n, rng),
        "ring" => gen_gaussian_ring(n, rng),
        other => {
            return Err(CliError::Usage(format!(
                "unknown kind {other:?} (expected gaussian-mixture, uniform-mixture or ring)"
            )))
        }
    };
    Ok(data?)
}

fn check_kind(kind: &str) -> Result<(), CliError> {
    match kind {
        "gaussian-mixture" | "uniform-mixture" | "ring" => Ok(()),
        other => Err(CliError::Usage(format!(
            "unknown kind {other:?} (expected gaussian-mixture, uniform-mixture or ring)"
        ))),
    }
}

fn positive(key: &str, n: usize) -> Result<usize, CliError> {
    if n == 0 {
        return Err(CliError::Usage(format!("--{key} must be at least 1")));
    }
    Ok(n)
}

/// Resolves the data settings; generation happens in [`DataPlan::load`].
enum DataPlan {
    Files { train: PathBuf, holdout: Option<PathBuf>, x_cols: Vec<String>, y_cols: Vec<String> },
    Generated { kind: String, n: usize, holdout_n: usize, seed: u64 },
}

impl DataPlan {
    fn resolve(args: DataArgs, s: &mut Settings) -> Result<Self, CliError> {
        let train: Option<String> = s.pick("train", args.train.map(|p| p.display().to_string()), None)?;
        let seed = s.require("seed", args.seed, Some(0))?;
        match train {
            Some(train) => {
                let holdout: Option<String> = s.pick("holdout", args.holdout.map(|p| p.display().to_string()), None)?;
                let x_cols: List<String> = s.require("x-cols", args.x_cols, Some(List(vec!["x0".into()])))?;
                let y_cols: List<String> = s.require("y-cols", args.y_cols, Some(List(vec!["y0".into()])))?;
                if !Path::new(&train).is_file() {
                    return Err(CliError::Usage(format!("training file {train} does not exist")));
                }
                if let Some(h) = &holdout {
                    if !Path::new(h).is_file() {
                        return Err(CliError::Usage(format!("hold-out file {h} does not exist")));
                    }
                }
                Ok(DataPlan::Files {
                    train: train.into(),
                    holdout: holdout.map(PathBuf::from),
                    x_cols: x_cols.0,
                    y_cols: y_cols.0,
                })
            }
            None => {
                let kind: String = s.require("kind", args.kind, None)?;
                check_kind(&kind)?;
                let n = positive("n", s.require("n", args.n, None)?)?;
                let holdout_n = positive("holdout-n", s.require("holdout-n", args.holdout_n, Some(n))?)?;
                Ok(DataPlan::Generated { kind, n, holdout_n, seed })
            }
        }
    }

    fn load(&self) -> Result<(Dataset, Option<Dataset>), CliError> {
        match self {
            DataPlan::Files { train, holdout, x_cols, y_cols } => {
                let xs: Vec<&str> = x_cols.iter().map(String::as_str).collect();
                let ys: Vec<&str> = y_cols.iter().map(String::as_str).collect();
                let t = load_csv(train, &xs, &ys)?;
                let h = holdout.as_ref().map(|p| load_csv(p, &xs, &ys)).transpose()?;
                Ok((t, h))
            }
            DataPlan::Generated { kind, n, holdout_n, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let train = generate(kind, *n, &mut rng)?;
                let holdout = generate(kind, *holdout_n, &mut rng)?;
                Ok((train, Some(holdout)))
            }
        }
    }

    fn seed(&self, s: &Settings) -> u64 {
        match self {
            DataPlan::Generated { seed, .. } => *seed,
            DataPlan::Files { .. } => {
                s.effective().iter().find(|(k, _)| k == "seed").and_then(|(_, v)| v.parse().ok()).unwrap_or(0)
            }
        }
    }
}

struct ModelSettings {
    cde: CdeConfig,
    folds: usize,
}

impl ModelSettings {
    fn resolve(args: ModelArgs, s: &mut Settings) -> Result<Self, CliError> {
        let d = CdeConfig::default();
        let alpha = s.require("alpha", args.alpha, Some(d.alpha))?;
        let ratio = s.require("stop-ratio", args.stop_ratio, Some(0.5))?;
        let components = s.require("components", args.components, Some(d.components))?;
        let tree_depth = s.require("tree-depth", args.tree_depth, Some(d.tree_max_depth))?;
        let nw_scale = s.require("nw-scale", args.nw_scale, Some(d.nw_scale))?;
        let folds = s.require("folds", args.folds, Some(10))?;
        if !(alpha > 1.0) {
            return Err(CliError::Usage(format!("--alpha must exceed 1, got {alpha}")));
        }
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(CliError::Usage(format!("--stop-ratio must lie in (0, 1), got {ratio}")));
        }
        if !(nw_scale > 0.0) {
            return Err(CliError::Usage(format!("--nw-scale must be positive, got {nw_scale}")));
        }
        if folds < 2 {
            return Err(CliError::Usage("--folds must be at least 2".into()));
        }
        let cde = CdeConfig {
            alpha,
            stop: StopRule::Geometric { ratio },
            components,
            tree_max_depth: tree_depth,
            nw_scale,
            ..d
        };
        Ok(Self { cde, folds })
    }

    fn method(&self, name: &str, train: &Dataset) -> Result<Box<dyn Method>, CliError> {
        match name {
            "cover-cde" => Ok(Box::new(CoverCdeMethod::new(self.cde.clone(), train)?)),
            "kernel-cde" => {
                let mut kernel = KernelCdeMethod::new(None);
                kernel.folds = self.folds;
                Ok(Box::new(kernel))
            }
            "vmm" => Err(CliError::Usage("vmm scores symbol sequences; use the score command".into())),
            other => Err(CliError::Usage(format!("unknown method {other:?} (expected one of {METHODS:?})"))),
        }
    }
}

fn check_method(name: &str) -> Result<(), CliError> {
    match name {
        "cover-cde" | "kernel-cde" => Ok(()),
        "vmm" => Err(CliError::Usage("vmm scores symbol sequences; use the score command".into())),
        other => Err(CliError::Usage(format!("unknown method {other:?} (expected one of {METHODS:?})"))),
    }
}

fn checkpoints_for(flag: Option<List<usize>>, s: &mut Settings, max: usize) -> Result<Vec<usize>, CliError> {
    let mut default = default_checkpoints(max);
    if default.last() != Some(&max) {
        default.push(max);
    }
    let cps: List<usize> = s.require("checkpoints", flag, Some(List(default)))?;
    let cps = cps.0;
    if cps.is_empty() || cps.windows(2).any(|w| w[0] >= w[1]) || cps[0] == 0 {
        return Err(CliError::Usage("--checkpoints must be positive and strictly increasing".into()));
    }
    if cps.last().is_some_and(|t| *t > max) {
        return Err(CliError::Usage(format!("checkpoint beyond the {max} training rows")));
    }
    Ok(cps)
}

fn print_records(records: &[EvalRecord]) {
    for r in records {
        println!("{:>12} t={:<8} L_t={:.6} us/update={:.2}", r.method, r.t, r.l_t, r.us_per_update);
    }
}

fn cmd_gen(args: GenArgs, mut s: Settings, out_dir: Option<PathBuf>) -> Result<(), CliError> {
    let kind: String = s.require("kind", args.kind, None)?;
    check_kind(&kind)?;
    let n = positive("n", s.require("n", args.n, None)?)?;
    let holdout_n = positive("holdout-n", s.require("holdout-n", args.holdout_n, Some(n))?)?;
    let seed = s.require("seed", args.seed, Some(0))?;
    let prefix = s.require("prefix", args.prefix, Some(kind.clone()))?;
    s.finish()?;
    let dir = output_dir(out_dir.as_deref())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = generate(&kind, n, &mut rng)?;
    let holdout = generate(&kind, holdout_n, &mut rng)?;
    for (data, tag) in [(&train, "train"), (&holdout, "holdout")] {
        let path = dir.join(format!("{prefix}-{tag}.csv"));
        let mut w = create(&path)?;
        data.write_csv(&mut w)?;
        w.flush()?;
        println!("wrote {} ({} rows)", path.display(), data.len());
    }
    write_meta(&dir.join(format!("{prefix}.meta")), &s, &[train.provenance])?;
    Ok(())
}

fn holdout_or_fail(holdout: Option<Dataset>) -> Result<Dataset, CliError> {
    holdout.ok_or_else(|| CliError::Usage("evaluation needs --holdout (or a generator)".into()))
}

fn cmd_fit_eval(args: FitEvalArgs, mut s: Settings, out_dir: Option<PathBuf>) -> Result<(), CliError> {
    let method: String = s.require("method", args.method, None)?;
    check_method(&method)?;
    let plan = DataPlan::resolve(args.data, &mut s)?;
    let model = ModelSettings::resolve(args.model, &mut s)?;
    let out: String = s.require("out", args.out.map(|p| p.display().to_string()), Some(format!("{method}-results.csv")))?;
    let save: Option<String> = s.pick("save-snapshot", args.save_snapshot.map(|p| p.display().to_string()), None)?;
    let resume: Option<String> = s.pick("resume", args.resume.map(|p| p.display().to_string()), None)?;
    if (save.is_some() || resume.is_some()) && method != "cover-cde" {
        return Err(CliError::Usage("snapshots are only available for cover-cde".into()));
    }
    if let Some(r) = &resume {
        if !Path::new(r).is_file() {
            return Err(CliError::Usage(format!("snapshot {r} does not exist")));
        }
    }
    let (train, holdout) = plan.load()?;
    let holdout = holdout_or_fail(holdout)?;
    let mut checkpoints = checkpoints_for(args.checkpoints, &mut s, train.len())?;
    s.finish()?;
    let seed = plan.seed(&s);
    let dir = output_dir(out_dir.as_deref())?;

    let mut m: Box<dyn Method> = match &resume {
        Some(path) => {
            let f = File::open(path).with_context(|| format!("opening {path}")).map_err(runtime)?;
            let restored = CdeModel::read_snapshot(BufReader::new(f))?;
            let seen = restored.observations() as usize;
            if seen > train.len() {
                return Err(CliError::Usage(format!(
                    "snapshot has absorbed {seen} rows but the training set has {}",
                    train.len()
                )));
            }
            checkpoints.retain(|t| *t > seen);
            log::info!("resuming after {seen} observations");
            Box::new(CoverCdeMethod::resume(restored))
        }
        None => model.method(&method, &train)?,
    };
    let records = if checkpoints.is_empty() {
        Vec::new()
    } else {
        run_eval(m.as_mut(), &train, &holdout, &checkpoints, seed)?
    };
    let out_path = dir.join(out);
    let mut w = create(&out_path)?;
    write_records(&mut w, &records)?;
    w.flush()?;
    print_records(&records);
    let mut notes = vec![format!("train: {}", train.provenance)];
    notes.extend(m.notes().into_iter().map(|n| format!("{method}: {n}")));
    write_meta(&meta_path(&out_path), &s, &notes)?;
    println!("wrote {}", out_path.display());

    if let Some(path) = save {
        let cover = m.as_cover().ok_or_else(|| CliError::Usage("snapshots are only available for cover-cde".into()))?;
        let mut w = create(Path::new(&path))?;
        cover.model().write_snapshot(&mut w)?;
        w.flush()?;
        println!("saved snapshot after {} observations to {path}", cover.model().observations());
    }
    Ok(())
}

fn cmd_compare(args: CompareArgs, mut s: Settings, out_dir: Option<PathBuf>) -> Result<(), CliError> {
    let methods: List<String> =
        s.require("methods", args.methods, Some(List(vec!["cover-cde".into(), "kernel-cde".into()])))?;
    if methods.0.is_empty() {
        return Err(CliError::Usage("--methods is empty".into()));
    }
    for m in &methods.0 {
        check_method(m)?;
    }
    let plan = DataPlan::resolve(args.data, &mut s)?;
    let model = ModelSettings::resolve(args.model, &mut s)?;
    let out: String = s.require("out", args.out.map(|p| p.display().to_string()), Some("compare-results.csv".into()))?;
    let (train, holdout) = plan.load()?;
    let holdout = holdout_or_fail(holdout)?;
    let checkpoints = checkpoints_for(args.checkpoints, &mut s, train.len())?;
    s.finish()?;
    let seed = plan.seed(&s);
    let dir = output_dir(out_dir.as_deref())?;

    let mut records = Vec::new();
    let mut notes = vec![format!("train: {}", train.provenance)];
    for name in &methods.0 {
        let mut m = model.method(name, &train)?;
        records.extend(run_eval(m.as_mut(), &train, &holdout, &checkpoints, seed)?);
        notes.extend(m.notes().into_iter().map(|n| format!("{name}: {n}")));
    }
    let out_path = dir.join(out);
    let mut w = create(&out_path)?;
    write_records(&mut w, &records)?;
    w.flush()?;
    print_records(&records);
    write_meta(&meta_path(&out_path), &s, &notes)?;
    println!("wrote {}", out_path.display());
    Ok(())
}

fn cmd_sample(args: SampleArgs, mut s: Settings) -> Result<(), CliError> {
    let plan = DataPlan::resolve(args.data, &mut s)?;
    let model = ModelSettings::resolve(args.model, &mut s)?;
    let at: List<f64> = s.require("at", args.at, None)?;
    let count = positive("count", s.require("count", args.count, Some(10))?)?;
    s.finish()?;
    let seed = plan.seed(&s);
    let (train, _) = plan.load()?;
    if at.0.len() != train.x_dim {
        return Err(CliError::Usage(format!("--at needs {} coordinates", train.x_dim)));
    }
    let mut cover = CoverCdeMethod::new(model.cde, &train)?;
    cover.advance(&train, train.len())?;
    // Sampling draws from its own stream so it does not depend on data generation.
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let names: Vec<String> = (0..train.y_dim).map(|i| format!("y{i}")).collect();
    println!("{}", names.join(","));
    for _ in 0..count {
        let y = cover.model().sample(&at.0, &mut rng)?;
        println!("{}", y.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
    }
    Ok(())
}

fn cmd_score(args: ScoreArgs, mut s: Settings) -> Result<(), CliError> {
    let alphabet_spec: String = s.require("alphabet", args.alphabet, Some("01".into()))?;
    let depth = positive("depth", s.require("depth", args.depth, Some(4))?)?;
    let prior_name: String = s.require("prior", args.prior, Some("kt".into()))?;
    let stop = s.require("stop", args.stop, Some(0.5))?;
    let oracle: Option<String> = s.pick("oracle", args.oracle, None)?;
    s.finish()?;
    let alphabet = Alphabet::parse(&alphabet_spec).map_err(|e| CliError::Usage(e.to_string()))?;
    let prior: SymbolPrior = prior_name.parse().map_err(|e: covermodel::vmm::VmmError| CliError::Usage(e.to_string()))?;
    if !(0.0..=1.0).contains(&stop) {
        return Err(CliError::Usage(format!("--stop must lie in [0, 1], got {stop}")));
    }
    if let Some(o) = &oracle {
        if o != "ctw" {
            return Err(CliError::Usage(format!("unknown oracle {o:?} (expected ctw)")));
        }
        if stop != 0.5 {
            return Err(CliError::Usage("the ctw oracle weights every node 1/2; use --stop 0.5".into()));
        }
    }
    let content = std::fs::read(&args.file)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", args.file.display())))?;
    let symbols = alphabet.encode(&content)?;
    let config = VmmConfig { alphabet: alphabet.size(), depth, prior, stop };
    let mut model = VmmModel::new(&config)?;
    let per_symbol = model.score(&symbols)?;
    let total: f64 = per_symbol.iter().sum::<f64>() + 0.0;
    if args.per_symbol {
        for lp in &per_symbol {
            println!("{lp}");
        }
    }
    println!("symbols {}", symbols.len());
    println!("total_ln_prob {total}");
    let mean = if symbols.is_empty() { 0.0 } else { total / symbols.len() as f64 };
    println!("mean_ln_prob_per_symbol {mean}");
    if oracle.is_some() {
        let ctw = CtwOracle { alphabet: alphabet.size(), depth: depth - 1, concentration: prior.concentration() };
        println!("ctw_ln_prob {}", ctw.ctw_logprob(&symbols)?);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let settings = Settings::load(cli.config.as_deref())?;
    match cli.command {
        Command::Gen(a) => cmd_gen(a, settings, cli.out_dir),
        Command::FitEval(a) => cmd_fit_eval(a, settings, cli.out_dir),
        Command::Compare(a) => cmd_compare(a, settings, cli.out_dir),
        Command::Sample(a) => cmd_sample(a, settings),
        Command::Score(a) => cmd_score(a, settings),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
