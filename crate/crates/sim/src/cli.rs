//! `islet` command line.
//!
//! Exit codes: 0 on success, 2 on usage or configuration errors, 3 when the
//! data are numerically degenerate.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use islet_core::distributed::{fit_distributed, ShardPlan};
use islet_core::io::{write_estimate, write_samples, EstimateRecord, FileSource};
use islet_core::rank_select::{fit_with_rank_selection, RankSelectConfig, RefitEstimate};
use islet_core::rng::StreamRng;
use islet_core::sparse::{check_grip, GroupPartition};
use islet_core::{fit_islet, HooiConfig, InMemorySource, IsletError, Matrix, SampleSource, Vector};

use crate::experiment::{run_experiment, ExperimentConfig, Mode, Storage, IN_MEMORY_MAX_P};
use crate::generate::{generate_approx, generate_regular, generate_sparse};
use crate::metrics::mean_std;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "islet", version, about = "Importance-sketching low-rank tensor regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a Monte-Carlo sweep and write per-repetition CSV plus a JSON summary.
    Simulate(SimulateArgs),
    /// Fit the regular estimator to a sample file.
    Fit(FitArgs),
    /// Select Tucker ranks from an over-ranked fit and refit.
    RankSelect(RankSelectArgs),
    /// Time fits at several sample sizes.
    Bench(BenchArgs),
    /// Check the group restricted isometry of a Gaussian design by enumeration.
    GripCheck(GripArgs),
    /// Write a synthetic sample file.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// JSON experiment configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long)]
    pub order: Option<usize>,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub reps: Option<usize>,
    /// Comma-separated shard counts (parallel-sweep).
    #[arg(long, value_delimiter = ',')]
    pub shards: Option<Vec<usize>>,
    /// Row sparsity per sparse mode (sparse).
    #[arg(long)]
    pub sparsity: Option<usize>,
    /// Comma-separated perturbation levels (approx-low-rank).
    #[arg(long, value_delimiter = ',')]
    pub tau: Option<Vec<f64>>,
    /// Comma-separated pass-1 fractions (split-compare).
    #[arg(long, value_delimiter = ',')]
    pub splits: Option<Vec<f64>>,
    /// Over-specified rank (rank-select).
    #[arg(long)]
    pub r_ini: Option<usize>,
    #[arg(long, value_enum)]
    pub storage: Option<Storage>,
    /// Allow in-memory storage above the mode-length cap.
    #[arg(long)]
    pub force: bool,
    /// CSV path; the summary goes next to it with a `.summary.json` suffix.
    /// Without it the CSV goes to stdout and the summary to stderr.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Comma-separated Tucker ranks.
    #[arg(long, value_delimiter = ',', required = true)]
    pub ranks: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Fraction of samples used for the probing pass only.
    #[arg(long)]
    pub split: Option<f64>,
    /// Run both passes over this many shards.
    #[arg(long, default_value_t = 1)]
    pub shards: usize,
    /// Load the file into memory once instead of streaming it twice.
    #[arg(long)]
    pub in_memory: bool,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct RankSelectArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Comma-separated over-specified ranks.
    #[arg(long, value_delimiter = ',', required = true)]
    pub r_ini: Vec<usize>,
    #[arg(long, default_value_t = 3.0)]
    pub threshold: f64,
    /// Row sparsity applied to every mode.
    #[arg(long)]
    pub sparsity: Option<usize>,
    /// Estimate file for the refit (body and coefficient only for sparse refits).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub in_memory: bool,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 20)]
    pub p: usize,
    #[arg(long, default_value_t = 3)]
    pub r: usize,
    #[arg(long, value_delimiter = ',', default_value = "2000,4000")]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    #[arg(long, default_value_t = 1)]
    pub shards: usize,
    #[arg(long)]
    pub force: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GripArgs {
    /// Rows of the design.
    #[arg(long)]
    pub n: usize,
    /// Number of groups.
    #[arg(long)]
    pub p: usize,
    /// Group size.
    #[arg(long)]
    pub r: usize,
    /// Group sparsity.
    #[arg(long)]
    pub s: usize,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub p: usize,
    #[arg(long)]
    pub r: usize,
    #[arg(long, default_value_t = 3)]
    pub order: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub sigma: f64,
    #[arg(long)]
    pub seed: u64,
    /// Row sparsity on every mode.
    #[arg(long)]
    pub sparsity: Option<usize>,
    /// Dense perturbation level.
    #[arg(long, conflicts_with = "sparsity")]
    pub tau: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<IsletError> for CliError {
    fn from(e: IsletError) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("islet: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::RankSelect(a) => rank_select(a),
        Command::Bench(a) => bench(a),
        Command::GripCheck(a) => grip_check(a),
        Command::Generate(a) => generate(a),
    }
}

fn load_config(args: &SimulateArgs) -> CliResult<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => {
            let missing = |flag: &str| CliError::Config(format!("--{flag} is required without --config"));
            ExperimentConfig::new(
                args.mode.unwrap_or(Mode::Regular),
                args.p.ok_or_else(|| missing("p"))?,
                args.r.ok_or_else(|| missing("r"))?,
                args.sigma.ok_or_else(|| missing("sigma"))?,
                args.n.clone().ok_or_else(|| missing("n"))?,
                args.reps.unwrap_or(1),
                args.seed.unwrap_or(0),
            )
        }
    };
    if let Some(v) = args.mode {
        cfg.mode = v;
    }
    if let Some(v) = args.p {
        cfg.p = v;
    }
    if let Some(v) = args.r {
        cfg.r = v;
    }
    if let Some(v) = args.order {
        cfg.order = v;
    }
    if let Some(v) = &args.n {
        cfg.n = v.clone();
    }
    if let Some(v) = args.sigma {
        cfg.sigma = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.reps {
        cfg.reps = v;
    }
    if let Some(v) = &args.shards {
        cfg.shards = v.clone();
    }
    if let Some(v) = args.sparsity {
        cfg.sparsity = Some(v);
    }
    if let Some(v) = &args.tau {
        cfg.tau = v.clone();
    }
    if let Some(v) = &args.splits {
        cfg.splits = v.clone();
    }
    if let Some(v) = args.r_ini {
        cfg.r_ini = Some(v);
    }
    if let Some(v) = args.storage {
        cfg.storage = v;
    }
    cfg.force |= args.force;
    cfg.validate()?;
    Ok(cfg)
}

/// `run.csv` -> `run.summary.json`.
pub fn summary_path(csv: &Path) -> PathBuf {
    csv.with_extension("summary.json")
}

fn simulate(args: SimulateArgs) -> CliResult<()> {
    let cfg = load_config(&args)?;
    let result = run_experiment(&cfg)?;
    match &args.out {
        Some(path) => {
            result.write_csv(BufWriter::new(File::create(path)?))?;
            std::fs::write(summary_path(path), result.summary_json())?;
        }
        None => {
            result.write_csv(io::stdout().lock())?;
            eprintln!("{}", result.summary_json());
        }
    }
    Ok(())
}

fn check_cap(dims: &[usize], force: bool) -> CliResult<()> {
    let p = dims.iter().copied().max().unwrap_or(0);
    if p > IN_MEMORY_MAX_P && !force {
        return Err(CliError::Config(format!(
            "mode length {p} exceeds the in-memory cap of {IN_MEMORY_MAX_P}; pass --force to load anyway"
        )));
    }
    Ok(())
}

/// Opens a sample file, loading it into memory if requested.
fn open_input(path: &Path, in_memory: bool, force: bool) -> CliResult<Box<dyn SampleSource>> {
    let file = FileSource::open(path)?;
    if !in_memory {
        return Ok(Box::new(file));
    }
    check_cap(file.dims(), force)?;
    Ok(Box::new(InMemorySource::collect(&file)?))
}

#[derive(Serialize)]
struct FitReport {
    n: usize,
    dims: Vec<usize>,
    ranks: Vec<usize>,
    unknowns: usize,
    residual_norm: f64,
    gram_condition: f64,
    rho: Vec<f64>,
    padded: bool,
    wall_ms: f64,
}

fn fit(args: FitArgs) -> CliResult<()> {
    let src = open_input(&args.input, args.in_memory, args.force)?;
    let cfg = HooiConfig::new(args.ranks.clone());
    let start = Instant::now();
    let est = if args.shards > 1 {
        if args.split.is_some() {
            return Err(CliError::Config("--split is not supported with --shards".into()));
        }
        let plan = ShardPlan::even(src.len(), args.shards)?;
        fit_distributed(src.as_ref(), &cfg, &plan)?.estimate
    } else {
        fit_islet(src.as_ref(), &cfg, args.split)?
    };
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    write_estimate(
        &args.out,
        &EstimateRecord {
            a_hat: est.a_hat.clone(),
            b_hat: est.b_hat.clone(),
            gamma: est.gamma.clone(),
        },
    )?;
    let report = FitReport {
        n: src.len(),
        dims: src.dims().to_vec(),
        ranks: args.ranks,
        unknowns: est.gamma.len(),
        residual_norm: est.diagnostics.residual_norm,
        gram_condition: est.diagnostics.gram_condition,
        rho: est.diagnostics.rho.clone(),
        padded: est.diagnostics.padded,
        wall_ms,
    };
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}

#[derive(Serialize)]
struct RankReport {
    r_ini: Vec<usize>,
    selected: Vec<usize>,
    clamped: bool,
    zero_estimate: bool,
}

fn rank_select(args: RankSelectArgs) -> CliResult<()> {
    let src = open_input(&args.input, args.in_memory, args.force)?;
    let d = src.dims().len();
    let mut cfg = RankSelectConfig::new(args.r_ini.clone());
    cfg.threshold = args.threshold;
    cfg.sparsity = args.sparsity.map(|s| vec![Some(s); d]);
    let out = fit_with_rank_selection(src.as_ref(), &cfg)?;
    if let Some(path) = &args.out {
        let record = match &out.estimate {
            Some(RefitEstimate::Regular(e)) => EstimateRecord {
                a_hat: e.a_hat.clone(),
                b_hat: e.b_hat.clone(),
                gamma: e.gamma.clone(),
            },
            Some(RefitEstimate::Sparse(e)) => EstimateRecord {
                a_hat: e.a_hat.clone(),
                b_hat: e.b_hat.clone(),
                gamma: Vector::zeros(0),
            },
            None => {
                return Err(CliError::Numerical(
                    "a selected rank is 0; the estimate is the zero tensor and is not written".into(),
                ))
            }
        };
        write_estimate(path, &record)?;
    }
    let report = RankReport {
        r_ini: args.r_ini,
        selected: out.ranks().to_vec(),
        clamped: out.selection.clamped,
        zero_estimate: out.is_zero(),
    };
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}

#[derive(Serialize)]
struct BenchRow {
    n: usize,
    rep: usize,
    wall_ms: f64,
}

#[derive(Serialize)]
struct BenchSummary {
    p: usize,
    r: usize,
    shards: usize,
    n: Vec<usize>,
    mean_wall_ms: Vec<f64>,
    /// Mean wall time at each size over the previous size.
    ratios: Vec<f64>,
}

fn bench(args: BenchArgs) -> CliResult<()> {
    check_cap(&[args.p], args.force)?;
    if args.reps == 0 || args.n.is_empty() {
        return Err(CliError::Config("bench needs reps >= 1 and at least one n".into()));
    }
    let dims = vec![args.p; 3];
    let ranks = vec![args.r; 3];
    let model = generate_regular(&dims, &ranks, args.seed)?;
    let cfg = HooiConfig::new(ranks);
    let mut rows = Vec::new();
    let mut means = Vec::new();
    for &n in &args.n {
        let data = InMemorySource::collect(&model.sampler(args.sigma, n)?)?;
        let plan = ShardPlan::even(n, args.shards)?;
        let mut walls = Vec::new();
        for rep in 0..args.reps {
            let start = Instant::now();
            if args.shards > 1 {
                fit_distributed(&data, &cfg, &plan)?;
            } else {
                fit_islet(&data, &cfg, None)?;
            }
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            walls.push(wall_ms);
            rows.push(BenchRow { n, rep, wall_ms });
        }
        means.push(mean_std(&walls).0);
    }
    let ratios = means.windows(2).map(|w| w[1] / w[0]).collect();
    let summary = BenchSummary {
        p: args.p,
        r: args.r,
        shards: args.shards,
        n: args.n.clone(),
        mean_wall_ms: means,
        ratios,
    };
    let mut out: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(&mut out);
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    drop(w);
    out.flush()?;
    eprintln!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    Ok(())
}

#[derive(Serialize)]
struct GripOutput {
    n: usize,
    groups: usize,
    group_size: usize,
    s: usize,
    delta: f64,
    holds: bool,
    min_ratio: f64,
    max_ratio: f64,
    worst_support: Vec<usize>,
}

fn grip_check(args: GripArgs) -> CliResult<()> {
    if args.n == 0 || args.p == 0 || args.r == 0 {
        return Err(CliError::Config("n, p and r must be positive".into()));
    }
    let mut rng = StreamRng::new(args.seed, 0);
    let scale = 1.0 / (args.n as f64).sqrt();
    let design = Matrix::from_fn(args.n, args.p * args.r, |_, _| rng.normal() * scale);
    let report = check_grip(&design, &GroupPartition::matrix_rows(args.p, args.r), args.s, args.delta)?;
    let out = GripOutput {
        n: args.n,
        groups: args.p,
        group_size: args.r,
        s: args.s,
        delta: args.delta,
        holds: report.holds,
        min_ratio: report.min_ratio,
        max_ratio: report.max_ratio,
        worst_support: report.worst_support,
    };
    println!("{}", serde_json::to_string_pretty(&out).expect("report serializes"));
    Ok(())
}

fn generate(args: GenerateArgs) -> CliResult<()> {
    let dims = vec![args.p; args.order];
    let ranks = vec![args.r; args.order];
    let model = match (args.sparsity, args.tau) {
        (Some(s), _) => generate_sparse(&dims, &ranks, &vec![s; args.order], args.seed)?,
        (None, Some(t)) => generate_approx(&dims, &ranks, t, args.seed)?,
        (None, None) => generate_regular(&dims, &ranks, args.seed)?,
    };
    let src = model.sampler(args.sigma, args.n)?;
    write_samples(&args.out, &src)?;
    eprintln!(
        "wrote {} samples of dims {:?} to {} (|A| = {:.6})",
        args.n,
        dims,
        args.out.display(),
        model.a.norm()
    );
    Ok(())
}
