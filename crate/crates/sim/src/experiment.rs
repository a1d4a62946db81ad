//! Monte-Carlo sweeps over sample sizes and repetitions.
//!
//! Repetition `j` uses model seed `derive_seed(seed, j)` at every sample size
//! and variant, so sweeps compare methods on common random numbers. Rows are
//! ordered by `(n, rep, variant)` whatever order the workers finish in.

use std::time::Instant;

use clap::ValueEnum;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use islet_core::decomposition::validate_ranks;
use islet_core::distributed::{fit_distributed, ShardPlan};
use islet_core::rank_select::{fit_with_rank_selection, RankSelectConfig};
use islet_core::rng::derive_seed;
use islet_core::sparse::{fit_sparse_islet, PenaltyPolicy};
use islet_core::{fit_islet, DenseTensor, HooiConfig, InMemorySource, IsletError, Result, SampleSource};

use crate::generate::{generate_approx, generate_regular, generate_sparse, Model};
use crate::metrics::{mean_std, rmse};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Largest mode length accepted for in-memory storage without `force`.
pub const IN_MEMORY_MAX_P: usize = 60;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Regular,
    Sparse,
    ApproxLowRank,
    RankSelect,
    ParallelSweep,
    SplitCompare,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Regular => "regular",
            Mode::Sparse => "sparse",
            Mode::ApproxLowRank => "approx-low-rank",
            Mode::RankSelect => "rank-select",
            Mode::ParallelSweep => "parallel-sweep",
            Mode::SplitCompare => "split-compare",
        }
    }
}

/// Where samples live while a repetition is fitted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Storage {
    /// Materialized before the clock starts; timings exclude generation.
    #[default]
    Memory,
    /// Regenerated on every pass; timings include generation.
    Seeded,
}

fn default_order() -> usize {
    3
}

fn default_tau() -> Vec<f64> {
    vec![0.0, 0.1, 0.3, 0.5]
}

fn default_splits() -> Vec<f64> {
    vec![0.5]
}

fn default_shards() -> Vec<usize> {
    vec![1, 4]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    /// Common mode length.
    pub p: usize,
    /// Common Tucker rank.
    pub r: usize,
    #[serde(default = "default_order")]
    pub order: usize,
    pub sigma: f64,
    /// Sample sizes swept.
    pub n: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    /// Row sparsity `s_k` on the sparse modes (sparse mode only).
    #[serde(default)]
    pub sparsity: Option<usize>,
    /// Sparse modes; every mode when absent.
    #[serde(default)]
    pub sparse_modes: Option<Vec<usize>>,
    /// Perturbation levels (approx-low-rank mode).
    #[serde(default = "default_tau")]
    pub tau: Vec<f64>,
    /// Pass-1 fractions compared against no split (split-compare mode).
    #[serde(default = "default_splits")]
    pub splits: Vec<f64>,
    /// Shard counts (parallel-sweep mode).
    #[serde(default = "default_shards")]
    pub shards: Vec<usize>,
    /// Over-specified rank (rank-select mode); `r + 3` when absent.
    #[serde(default)]
    pub r_ini: Option<usize>,
    #[serde(default)]
    pub storage: Storage,
    /// Lifts the in-memory size cap.
    #[serde(default)]
    pub force: bool,
}

impl ExperimentConfig {
    pub fn new(mode: Mode, p: usize, r: usize, sigma: f64, n: Vec<usize>, reps: usize, seed: u64) -> Self {
        Self {
            mode,
            p,
            r,
            order: default_order(),
            sigma,
            n,
            reps,
            seed,
            sparsity: None,
            sparse_modes: None,
            tau: default_tau(),
            splits: default_splits(),
            shards: default_shards(),
            r_ini: None,
            storage: Storage::default(),
            force: false,
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        vec![self.p; self.order]
    }

    pub fn ranks(&self) -> Vec<usize> {
        vec![self.r; self.order]
    }

    fn r_ini(&self) -> usize {
        self.r_ini.unwrap_or(self.r + 3).min(self.p)
    }

    fn sparse_modes(&self) -> Vec<usize> {
        self.sparse_modes.clone().unwrap_or_else(|| (0..self.order).collect())
    }

    /// Row sparsity per mode; `p` on dense modes.
    fn sparsity_levels(&self) -> Vec<usize> {
        let modes = self.sparse_modes();
        let s = self.sparsity.unwrap_or(self.p);
        (0..self.order).map(|k| if modes.contains(&k) { s } else { self.p }).collect()
    }

    fn hooi_config(&self) -> HooiConfig {
        let cfg = HooiConfig::new(self.ranks());
        if self.mode != Mode::Sparse {
            return cfg;
        }
        let modes = self.sparse_modes();
        let s = self.sparsity;
        cfg.with_sparsity((0..self.order).map(|k| if modes.contains(&k) { s } else { None }).collect())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(IsletError::InvalidArgument(msg));
        if self.p == 0 || self.r == 0 || self.order < 2 {
            return bad(format!("need p >= 1, r >= 1 and order >= 2 (got p={}, r={}, order={})", self.p, self.r, self.order));
        }
        validate_ranks(&self.ranks(), &self.dims())?;
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be finite and >= 0 (got {})", self.sigma));
        }
        if self.n.is_empty() || self.n.contains(&0) {
            return bad("n must list at least one positive sample size".into());
        }
        if self.reps == 0 {
            return bad("reps must be >= 1".into());
        }
        if self.storage == Storage::Memory && self.p > IN_MEMORY_MAX_P && !self.force {
            return bad(format!(
                "p = {} exceeds the in-memory cap of {IN_MEMORY_MAX_P}; use seeded storage or force",
                self.p
            ));
        }
        match self.mode {
            Mode::Sparse => {
                let Some(s) = self.sparsity else {
                    return bad("sparse mode needs a sparsity level".into());
                };
                if s < self.r || s > self.p {
                    return bad(format!("sparsity {s} must lie in [r, p] = [{}, {}]", self.r, self.p));
                }
                if self.sparse_modes().iter().any(|&k| k >= self.order) {
                    return bad("sparse mode index out of range".into());
                }
            }
            Mode::ApproxLowRank => {
                if self.tau.is_empty() || self.tau.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
                    return bad("tau must list finite levels >= 0".into());
                }
            }
            Mode::SplitCompare => {
                if self.splits.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
                    return bad("split fractions must lie in (0, 1)".into());
                }
            }
            Mode::ParallelSweep => {
                if self.shards.is_empty() || self.shards.contains(&0) {
                    return bad("shards must list positive counts".into());
                }
            }
            Mode::RankSelect => {
                if self.r_ini() < self.r {
                    return bad(format!("r_ini {} is below r {}", self.r_ini(), self.r));
                }
            }
            Mode::Regular => {}
        }
        Ok(())
    }

    pub fn variants(&self) -> Vec<Variant> {
        match self.mode {
            Mode::ApproxLowRank => self.tau.iter().map(|&t| Variant::Tau(t)).collect(),
            Mode::ParallelSweep => self.shards.iter().map(|&b| Variant::Shards(b)).collect(),
            Mode::SplitCompare => std::iter::once(Variant::Split(None))
                .chain(self.splits.iter().map(|&f| Variant::Split(Some(f))))
                .collect(),
            _ => vec![Variant::Plain],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Variant {
    Plain,
    Tau(f64),
    Shards(usize),
    Split(Option<f64>),
}

impl Variant {
    pub fn label(&self) -> String {
        match self {
            Variant::Plain => String::new(),
            Variant::Tau(t) => format!("tau={t}"),
            Variant::Shards(b) => format!("shards={b}"),
            Variant::Split(None) => "split=none".into(),
            Variant::Split(Some(f)) => format!("split={f}"),
        }
    }
}

/// One CSV row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RepRow {
    pub mode: &'static str,
    pub p: usize,
    pub r: usize,
    pub n: usize,
    pub sigma: f64,
    pub rep: usize,
    pub seed: u64,
    pub rmse: Option<f64>,
    pub wall_ms: f64,
    pub rank_selected: Option<String>,
    pub notes: String,
    #[serde(skip)]
    pub variant: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupSummary {
    pub variant: String,
    pub n: usize,
    pub reps_ok: usize,
    pub reps_failed: usize,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub wall_ms_mean: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentResult {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    #[serde(skip)]
    pub rows: Vec<RepRow>,
    pub groups: Vec<GroupSummary>,
}

impl ExperimentResult {
    pub fn group(&self, variant: &str, n: usize) -> Option<&GroupSummary> {
        self.groups.iter().find(|g| g.variant == variant && g.n == n)
    }

    pub fn write_csv(&self, out: impl std::io::Write) -> std::result::Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

fn build_model(cfg: &ExperimentConfig, variant: Variant, seed: u64) -> Result<Model> {
    let (dims, ranks) = (cfg.dims(), cfg.ranks());
    match (cfg.mode, variant) {
        (Mode::Sparse, _) => generate_sparse(&dims, &ranks, &cfg.sparsity_levels(), seed),
        (_, Variant::Tau(t)) => generate_approx(&dims, &ranks, t, seed),
        _ => generate_regular(&dims, &ranks, seed),
    }
}

struct Fitted {
    a_hat: DenseTensor,
    rank_selected: Option<String>,
}

fn fit_variant(cfg: &ExperimentConfig, variant: Variant, src: &dyn SampleSource) -> Result<Fitted> {
    let hooi = cfg.hooi_config();
    let plain = |a_hat| Fitted {
        a_hat,
        rank_selected: None,
    };
    match (cfg.mode, variant) {
        (Mode::Sparse, _) => Ok(plain(fit_sparse_islet(src, &hooi, &PenaltyPolicy::default(), None)?.a_hat)),
        (Mode::RankSelect, _) => {
            let out = fit_with_rank_selection(src, &RankSelectConfig::new(vec![cfg.r_ini(); cfg.order]))?;
            let label = out.ranks().iter().map(|r| r.to_string()).collect::<Vec<_>>().join("x");
            Ok(Fitted {
                a_hat: out.a_hat,
                rank_selected: Some(label),
            })
        }
        (_, Variant::Shards(b)) => {
            let plan = ShardPlan::even(src.len(), b)?;
            Ok(plain(fit_distributed(src, &hooi, &plan)?.estimate.a_hat))
        }
        (_, Variant::Split(f)) => Ok(plain(fit_islet(src, &hooi, f)?.a_hat)),
        _ => Ok(plain(fit_islet(src, &hooi, None)?.a_hat)),
    }
}

/// Runs one repetition; failures are reported in the row, not propagated.
pub fn run_rep(cfg: &ExperimentConfig, variant: Variant, n: usize, rep: usize) -> RepRow {
    let seed = derive_seed(cfg.seed, rep as u64);
    let mut row = RepRow {
        mode: cfg.mode.name(),
        p: cfg.p,
        r: cfg.r,
        n,
        sigma: cfg.sigma,
        rep,
        seed,
        rmse: None,
        wall_ms: 0.0,
        rank_selected: None,
        notes: variant.label(),
        variant: variant.label(),
    };
    let outcome = (|| -> Result<(Fitted, f64, DenseTensor)> {
        let model = build_model(cfg, variant, seed)?;
        let seeded = model.sampler(cfg.sigma, n)?;
        let memory;
        let src: &dyn SampleSource = match cfg.storage {
            Storage::Memory => {
                memory = InMemorySource::collect(&seeded)?;
                &memory
            }
            Storage::Seeded => &seeded,
        };
        let start = Instant::now();
        let fitted = fit_variant(cfg, variant, src)?;
        Ok((fitted, start.elapsed().as_secs_f64() * 1e3, model.a))
    })();
    match outcome {
        Ok((fitted, ms, a)) => {
            row.rmse = Some(rmse(&fitted.a_hat, &a));
            row.wall_ms = ms;
            row.rank_selected = fitted.rank_selected;
        }
        Err(e) => {
            let err = format!("error: {e}");
            row.notes = if row.notes.is_empty() { err } else { format!("{}; {err}", row.notes) };
        }
    }
    row
}

fn summarize(rows: &[RepRow], variants: &[Variant], sizes: &[usize]) -> Vec<GroupSummary> {
    let mut groups = Vec::new();
    for v in variants {
        let label = v.label();
        for &n in sizes {
            let members: Vec<&RepRow> = rows.iter().filter(|r| r.variant == label && r.n == n).collect();
            let ok: Vec<&RepRow> = members.iter().copied().filter(|r| r.rmse.is_some()).collect();
            let errors: Vec<f64> = ok.iter().filter_map(|r| r.rmse).collect();
            let walls: Vec<f64> = ok.iter().map(|r| r.wall_ms).collect();
            let (rmse_mean, rmse_std) = mean_std(&errors);
            groups.push(GroupSummary {
                variant: label.clone(),
                n,
                reps_ok: ok.len(),
                reps_failed: members.len() - ok.len(),
                rmse_mean,
                rmse_std,
                wall_ms_mean: mean_std(&walls).0,
            });
        }
    }
    groups
}

/// Every `(n, rep, variant)` cell of the sweep, run on the rayon pool.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let variants = cfg.variants();
    let mut cells = Vec::with_capacity(cfg.n.len() * cfg.reps * variants.len());
    for &n in &cfg.n {
        for rep in 0..cfg.reps {
            cells.extend(variants.iter().map(|&v| (n, rep, v)));
        }
    }
    let rows: Vec<RepRow> = cells.par_iter().map(|&(n, rep, v)| run_rep(cfg, v, n, rep)).collect();
    let groups = summarize(&rows, &variants, &cfg.n);
    Ok(ExperimentResult {
        schema_version: SUMMARY_SCHEMA_VERSION,
        config: cfg.clone(),
        rows,
        groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_ordered_and_reproducible() {
        let mut cfg = ExperimentConfig::new(Mode::SplitCompare, 4, 2, 0.5, vec![150, 120], 2, 3);
        cfg.storage = Storage::Seeded;
        let a = run_experiment(&cfg).unwrap();
        let keys: Vec<(usize, usize, &str)> = a.rows.iter().map(|r| (r.n, r.rep, r.notes.as_str())).collect();
        assert_eq!(
            keys,
            vec![
                (150, 0, "split=none"),
                (150, 0, "split=0.5"),
                (150, 1, "split=none"),
                (150, 1, "split=0.5"),
                (120, 0, "split=none"),
                (120, 0, "split=0.5"),
                (120, 1, "split=none"),
                (120, 1, "split=0.5"),
            ]
        );
        let b = run_experiment(&cfg).unwrap();
        let rmses = |r: &ExperimentResult| r.rows.iter().map(|r| r.rmse.unwrap().to_bits()).collect::<Vec<_>>();
        assert_eq!(rmses(&a), rmses(&b));
        assert_eq!(a.groups.len(), 4);
        assert_eq!(a.group("split=0.5", 120).unwrap().reps_ok, 2);
    }

    #[test]
    fn failures_are_recorded_per_rep() {
        // m = 8 + 3 * 2 * 2 = 20 unknowns; n = 10 cannot be solved
        let cfg = ExperimentConfig::new(Mode::Regular, 4, 2, 0.1, vec![10, 60], 1, 1);
        let res = run_experiment(&cfg).unwrap();
        assert!(res.rows[0].rmse.is_none());
        assert!(res.rows[0].notes.contains("underdetermined"), "{}", res.rows[0].notes);
        assert!(res.rows[1].rmse.is_some());
        assert_eq!(res.group("", 10).unwrap().reps_failed, 1);
    }

    #[test]
    fn invalid_configs_rejected() {
        let ok = ExperimentConfig::new(Mode::Regular, 5, 2, 1.0, vec![100], 1, 0);
        assert!(ok.validate().is_ok());
        for broken in [
            ExperimentConfig { reps: 0, ..ok.clone() },
            ExperimentConfig { n: vec![], ..ok.clone() },
            ExperimentConfig { sigma: -1.0, ..ok.clone() },
            ExperimentConfig { r: 6, ..ok.clone() },
            ExperimentConfig { mode: Mode::Sparse, ..ok.clone() },
            ExperimentConfig { p: 61, r: 2, ..ok.clone() },
            ExperimentConfig { mode: Mode::SplitCompare, splits: vec![1.0], ..ok.clone() },
        ] {
            assert!(broken.validate().is_err(), "{broken:?}");
        }
        assert!(ExperimentConfig { p: 61, force: true, ..ok.clone() }.validate().is_ok());
        assert!(ExperimentConfig { p: 61, storage: Storage::Seeded, ..ok }.validate().is_ok());
    }

    #[test]
    fn config_json_defaults_and_unknown_fields() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"mode":"approx-low-rank","p":6,"r":2,"sigma":1,"n":[100],"reps":1,"seed":2}"#,
        )
        .unwrap();
        assert_eq!(cfg.tau, vec![0.0, 0.1, 0.3, 0.5]);
        assert_eq!(cfg.order, 3);
        assert!(serde_json::from_str::<ExperimentConfig>(
            r#"{"mode":"regular","p":6,"r":2,"sigma":1,"n":[100],"reps":1,"seed":2,"bogus":1}"#
        )
        .is_err());
    }

    #[test]
    fn csv_header_matches_contract() {
        let cfg = ExperimentConfig::new(Mode::Regular, 4, 2, 0.1, vec![60], 1, 1);
        let mut buf = Vec::new();
        run_experiment(&cfg).unwrap().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "mode,p,r,n,sigma,rep,seed,rmse,wall_ms,rank_selected,notes"
        );
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn parallel_sweep_shard_counts_agree() {
        let mut cfg = ExperimentConfig::new(Mode::ParallelSweep, 5, 2, 1.0, vec![200], 2, 4);
        cfg.shards = vec![1, 4];
        let res = run_experiment(&cfg).unwrap();
        for pair in res.rows.chunks(2) {
            let (a, b) = (pair[0].rmse.unwrap(), pair[1].rmse.unwrap());
            assert!((a - b).abs() <= 1e-10 * a.max(1e-300), "{a} vs {b}");
        }
    }
}
