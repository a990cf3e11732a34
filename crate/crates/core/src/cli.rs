//! Command-line front end.
//!
//! Settings resolve as built-in defaults, then top-level keys of the config
//! file, then the file's section for the subcommand, then flags. Every run
//! writes `manifest.json` with the resolved settings; passing that manifest
//! back through `--config` reproduces the run.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::eigen::{asymptotic_deviation, solve_basis_pair, BasisPair, SolverOptions};
use crate::ensembles::{ProcessKind, RandomProcess};
use crate::error::{Error, Result};
use crate::harness::{
    contiguity_diagnostic, format_float, gap_diagnostics, summarize, sup_eps_diagnostic, warped_covariance_check,
    worker_pool, write_json, Experiment, ExperimentConfig, GapSource, PerturbationSpec, SummaryReport,
};
use crate::kernels::{
    kac_rice_expected, kac_rice_stationary_closed, kac_rice_warped_closed, second_order_classical,
    second_order_empirical, second_order_exact, second_order_from_basis, second_order_stationary,
};
use crate::rng::sample_coefficients;
use crate::weight::{builtin_weight_with, LiouvilleMap, DEFAULT_EXPCOS_A, TWO_PI};

#[derive(Debug, Parser)]
#[command(name = "slzeros", version, about = "Zeros of random Sturm-Liouville sums: solver, simulator, diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Eigenvalues and asymptotic deviations of both families.
    Eigen(CommonArgs),
    /// Monte Carlo zero counts, records and summary.
    Simulate(CommonArgs),
    /// Kac-Rice expected zero counts.
    Kac(CommonArgs),
    /// Contiguity of f_n and X_n counts, and sup-norm of their difference.
    Compare(CommonArgs),
    /// Covariance checks and alpha/Delta/beta gap tables.
    Diagnose(CommonArgs),
    /// Perturbed against plain stationary polynomials.
    Robustness(CommonArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Eigen(_) => "eigen",
            Command::Simulate(_) => "simulate",
            Command::Kac(_) => "kac",
            Command::Compare(_) => "compare",
            Command::Diagnose(_) => "diagnose",
            Command::Robustness(_) => "robustness",
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::Eigen(a)
            | Command::Simulate(a)
            | Command::Kac(a)
            | Command::Compare(a)
            | Command::Diagnose(a)
            | Command::Robustness(a) => a,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML config file, or a manifest.json from an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Weight preset: unit, sine2 or expcos.
    #[arg(long)]
    pub weight: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub n_list: Option<Vec<usize>>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub grid_factor: Option<usize>,
    #[arg(long)]
    pub k_max: Option<usize>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    /// Process kinds, e.g. `f,X,T,pert`.
    #[arg(long, value_delimiter = ',')]
    pub kinds: Option<Vec<ProcessKind>>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Optional settings as they appear in a config file or section.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub weight: Option<String>,
    pub expcos_a: Option<f64>,
    pub n_list: Option<Vec<usize>>,
    pub replicates: Option<usize>,
    pub master_seed: Option<u64>,
    pub kinds: Option<Vec<ProcessKind>>,
    pub grid_factor: Option<usize>,
    pub k_max: Option<usize>,
    pub grid_points: Option<usize>,
    pub record_timing: Option<bool>,
    pub perturbation: Option<PerturbationSpec>,
    pub x_ref: Option<f64>,
    pub x_points: Option<usize>,
    pub cov_pairs: Option<usize>,
    pub cov_replicates: Option<usize>,
    pub gap_source: Option<GapSource>,
    pub out: Option<PathBuf>,
}

impl Settings {
    fn overlay(&mut self, other: Settings) {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            weight,
            expcos_a,
            n_list,
            replicates,
            master_seed,
            kinds,
            grid_factor,
            k_max,
            grid_points,
            record_timing,
            perturbation,
            x_ref,
            x_points,
            cov_pairs,
            cov_replicates,
            gap_source,
            out
        );
    }

    fn from_args(a: &CommonArgs) -> Settings {
        Settings {
            weight: a.weight.clone(),
            n_list: a.n_list.clone(),
            replicates: a.replicates,
            master_seed: a.seed,
            kinds: a.kinds.clone(),
            grid_factor: a.grid_factor,
            k_max: a.k_max,
            grid_points: a.grid_points,
            out: a.out.clone(),
            ..Settings::default()
        }
    }
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub weight: String,
    pub expcos_a: f64,
    pub n_list: Vec<usize>,
    pub replicates: usize,
    pub master_seed: u64,
    pub kinds: Vec<ProcessKind>,
    pub grid_factor: usize,
    pub k_max: usize,
    pub grid_points: usize,
    pub record_timing: bool,
    pub perturbation: PerturbationSpec,
    /// Reference point of the β table and of the pointwise moment checks.
    pub x_ref: f64,
    /// Points of the uniform `x` grid used by the gap tables.
    pub x_points: usize,
    /// Random point pairs for the covariance check.
    pub cov_pairs: usize,
    pub cov_replicates: usize,
    pub gap_source: GapSource,
    pub out: PathBuf,
}

impl Resolved {
    fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            weight: self.weight.clone(),
            expcos_a: self.expcos_a,
            n_list: self.n_list.clone(),
            replicates: self.replicates,
            master_seed: self.master_seed,
            kinds: self.kinds.clone(),
            grid_factor: self.grid_factor,
            k_max: Some(self.k_max),
            grid_points: self.grid_points,
            perturbation: self.perturbation,
            record_timing: self.record_timing,
        }
    }

    fn solver(&self) -> SolverOptions {
        SolverOptions {
            grid_points: self.grid_points,
            ..SolverOptions::default()
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub subcommand: String,
    pub version: String,
    pub config: Settings,
}

const SECTIONS: [&str; 6] = ["eigen", "simulate", "kac", "compare", "diagnose", "robustness"];

fn parse_settings(table: toml::Table, origin: &str) -> Result<Settings> {
    Settings::deserialize(toml::Value::Table(table)).map_err(|e| Error::Config(format!("{origin}: {}", e.message())))
}

/// Reads a TOML config, returning the top-level settings overlaid with the
/// section for `subcommand`.
pub fn load_config(path: &Path, subcommand: &str) -> Result<Settings> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let m: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        return Ok(m.config);
    }
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(format!("{}: {}", path.display(), e.message())))?;
    let mut sections = Vec::new();
    for name in SECTIONS {
        if let Some(v) = table.remove(name) {
            match v {
                toml::Value::Table(t) => sections.push((name, t)),
                _ => return Err(Error::Config(format!("`{name}` must be a section"))),
            }
        }
    }
    let mut settings = parse_settings(table, &path.display().to_string())?;
    for (name, t) in sections {
        let s = parse_settings(t, &format!("{} [{name}]", path.display()))?;
        if name == subcommand {
            settings.overlay(s);
        }
    }
    Ok(settings)
}

fn default_kinds(subcommand: &str) -> Vec<ProcessKind> {
    use ProcessKind::*;
    match subcommand {
        "compare" => vec![SlSumScaled, Warped],
        "robustness" => vec![Stationary, Perturbed],
        "kac" => vec![Warped, Stationary],
        _ => vec![SlSumScaled, Warped, Stationary, Perturbed],
    }
}

pub fn resolve(subcommand: &str, args: &CommonArgs) -> Result<Resolved> {
    let mut s = match &args.config {
        Some(p) => load_config(p, subcommand)?,
        None => Settings::default(),
    };
    s.overlay(Settings::from_args(args));
    let defaults = ExperimentConfig::default();
    let n_list = s.n_list.unwrap_or(defaults.n_list);
    let k_default = if subcommand == "eigen" { 50 } else { n_list.iter().copied().max().unwrap_or(1) };
    Ok(Resolved {
        weight: s.weight.unwrap_or(defaults.weight),
        expcos_a: s.expcos_a.unwrap_or(DEFAULT_EXPCOS_A),
        replicates: s.replicates.unwrap_or(defaults.replicates),
        master_seed: s.master_seed.unwrap_or(defaults.master_seed),
        kinds: s.kinds.unwrap_or_else(|| default_kinds(subcommand)),
        grid_factor: s.grid_factor.unwrap_or(defaults.grid_factor),
        k_max: s.k_max.unwrap_or(k_default),
        grid_points: s.grid_points.unwrap_or(defaults.grid_points),
        record_timing: s.record_timing.unwrap_or(false),
        perturbation: s.perturbation.unwrap_or_default(),
        x_ref: s.x_ref.unwrap_or(1.0),
        x_points: s.x_points.unwrap_or(64),
        cov_pairs: s.cov_pairs.unwrap_or(20),
        cov_replicates: s.cov_replicates.unwrap_or(5000),
        gap_source: s.gap_source.unwrap_or(GapSource::Empirical),
        out: s.out.unwrap_or_else(|| PathBuf::from("out")),
        n_list,
    })
}

fn write_manifest(subcommand: &str, r: &Resolved) -> Result<()> {
    let config: Settings = serde_json::from_value(serde_json::to_value(r)?)?;
    write_json(
        &r.out.join("manifest.json"),
        &Manifest {
            subcommand: subcommand.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
        },
    )
}

fn csv_writer(path: &Path, header: &[&str]) -> Result<csv::Writer<fs::File>> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    Ok(w)
}

fn f(v: f64) -> String {
    format_float(v)
}

/// Runs one parsed invocation inside the worker pool.
pub fn run(cli: &Cli) -> Result<()> {
    let name = cli.command.name();
    let r = resolve(name, cli.command.args())?;
    if r.x_points < 2 || r.cov_replicates < 2 {
        return Err(Error::Config("x_points and cov_replicates must be at least 2".into()));
    }
    if !(0.0..=TWO_PI).contains(&r.x_ref) {
        return Err(Error::Config(format!("x_ref = {} lies outside [0, 2π]", r.x_ref)));
    }
    fs::create_dir_all(&r.out)
        .map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", r.out.display())))?;
    write_manifest(name, &r)?;
    let pool = worker_pool()?;
    pool.install(|| match &cli.command {
        Command::Eigen(_) => cmd_eigen(&r),
        Command::Simulate(_) => cmd_simulate(&r),
        Command::Kac(_) => cmd_kac(&r),
        Command::Compare(_) => cmd_compare(&r),
        Command::Diagnose(_) => cmd_diagnose(&r),
        Command::Robustness(_) => cmd_robustness(&r),
    })
}

pub fn cmd_eigen(r: &Resolved) -> Result<()> {
    if r.k_max == 0 {
        return Err(Error::Config("k_max must be at least 1".into()));
    }
    let weight = builtin_weight_with(&r.weight, r.expcos_a)?;
    let basis = solve_basis_pair(&weight, r.k_max, &r.solver())?;
    let mut w = csv_writer(
        &r.out.join("eigen.csv"),
        &["bc", "k", "lambda", "sqrt_lambda_minus_half_k", "dev", "k_dev", "dev_deriv"],
    )?;
    for fam in [&basis.cos_family, &basis.sin_family] {
        for row in asymptotic_deviation(fam) {
            w.write_record([
                fam.bc().to_string(),
                row.k.to_string(),
                f(row.lambda),
                f(row.sqrt_gap),
                f(row.dev),
                f(row.k_dev),
                f(row.dev_deriv),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn run_and_summarize(r: &Resolved, kinds: Option<Vec<ProcessKind>>) -> Result<(Experiment, SummaryReport)> {
    let mut cfg = r.experiment();
    if let Some(k) = kinds {
        cfg.kinds = k;
    }
    let exp = Experiment::prepare(cfg)?;
    let records = exp.run(Some(&r.out.join("records.csv")))?;
    let summary = summarize(&records)?;
    write_json(&r.out.join("summary.json"), &summary)?;
    Ok((exp, summary))
}

pub fn cmd_simulate(r: &Resolved) -> Result<()> {
    run_and_summarize(r, None).map(|_| ())
}

pub fn cmd_kac(r: &Resolved) -> Result<()> {
    let weight = builtin_weight_with(&r.weight, r.expcos_a)?;
    let basis = if r.kinds.contains(&ProcessKind::SlSumScaled) {
        let k = r.k_max.max(r.n_list.iter().copied().max().unwrap_or(1));
        Some(Arc::new(solve_basis_pair(&weight, k, &r.solver())?))
    } else {
        None
    };
    let map = match &basis {
        Some(b) => b.map().clone(),
        None => Arc::new(LiouvilleMap::new(&weight, r.grid_points)?),
    };
    let mut w = csv_writer(&r.out.join("kac.csv"), &["kind", "n", "expected", "closed_form"])?;
    for &kind in &r.kinds {
        for &n in &r.n_list {
            let (so, closed) = match kind {
                ProcessKind::Warped => (second_order_exact(n, map.clone()), Some(kac_rice_warped_closed(n))),
                ProcessKind::Stationary => (second_order_stationary(n), Some(kac_rice_stationary_closed(n))),
                ProcessKind::Classical => (second_order_classical(n), None),
                ProcessKind::SlSumScaled => (
                    second_order_from_basis(n, basis.clone().expect("basis solved for f"))?,
                    None,
                ),
                other => {
                    return Err(Error::Config(format!(
                        "kac supports kinds X, T, C and f, not {other}"
                    )))
                }
            };
            let e = kac_rice_expected(&so, (0.0, TWO_PI))?;
            w.write_record([kind.label().to_string(), n.to_string(), f(e), closed.map(f).unwrap_or_default()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_compare(r: &Resolved) -> Result<()> {
    let cfg = r.experiment();
    let exp = Experiment::prepare(ExperimentConfig {
        kinds: vec![ProcessKind::SlSumScaled, ProcessKind::Warped],
        ..cfg
    })?;
    let records = exp.run(Some(&r.out.join("records.csv")))?;
    write_json(&r.out.join("summary.json"), &summarize(&records)?)?;
    let mut w = csv_writer(&r.out.join("contiguity.csv"), &["n", "mean_abs_diff_over_sqrt_n", "pairs"])?;
    for row in contiguity_diagnostic(&records) {
        w.write_record([row.n.to_string(), f(row.value), row.pairs.to_string()])?;
    }
    w.flush()?;
    let mut w = csv_writer(
        &r.out.join("sup_eps.csv"),
        &["n", "median", "p99", "median_scaled", "p99_scaled"],
    )?;
    for row in sup_eps_diagnostic(&records) {
        w.write_record([row.n.to_string(), f(row.median), f(row.p99), f(row.median_scaled), f(row.p99_scaled)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_robustness(r: &Resolved) -> Result<()> {
    let (_, summary) = run_and_summarize(r, Some(vec![ProcessKind::Stationary, ProcessKind::Perturbed]))?;
    let mut w = csv_writer(
        &r.out.join("robustness.csv"),
        &[
            "n",
            "kac_T",
            "mean_T",
            "se_T",
            "mean_pert",
            "se_pert",
            "var_over_n_T",
            "var_over_n_pert",
            "ks_T",
            "ks_pert",
        ],
    )?;
    for row in &summary.per_n {
        let (t, p) = (&row.counts["T"], &row.counts["pert"]);
        w.write_record([
            row.n.to_string(),
            f(kac_rice_stationary_closed(row.n)),
            f(t.mean),
            f(t.se_mean),
            f(p.mean),
            f(p.se_mean),
            f(t.var_over_n),
            f(p.var_over_n),
            f(t.ks),
            f(p.ks),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Random point pairs in `[0, 2π]²` drawn from the seeded coefficient stream.
pub fn random_pairs(seed: u64, count: usize) -> Result<Vec<(f64, f64)>> {
    use statrs::distribution::{ContinuousCDF, Normal};
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let d = sample_coefficients(seed ^ 0x5E_ED0F_7A1E, count.max(1), u64::MAX)?;
    Ok((0..count)
        .map(|i| (TWO_PI * normal.cdf(d.a[i]), TWO_PI * normal.cdf(d.b[i])))
        .collect())
}

pub fn cmd_diagnose(r: &Resolved) -> Result<()> {
    let weight = builtin_weight_with(&r.weight, r.expcos_a)?;
    let n_max = r.n_list.iter().copied().max().unwrap_or(1);
    let basis: Arc<BasisPair> = Arc::new(solve_basis_pair(&weight, r.k_max.max(n_max), &r.solver())?);
    let map = basis.map().clone();
    let grid: Vec<f64> = (0..r.x_points)
        .map(|i| TWO_PI * i as f64 / (r.x_points - 1) as f64)
        .collect();
    let sources: Vec<GapSource> = match r.gap_source {
        GapSource::Exact => vec![GapSource::Exact],
        GapSource::Empirical => vec![GapSource::Exact, GapSource::Empirical],
    };
    let mut gaps = csv_writer(&r.out.join("gaps.csv"), &["n", "source", "x", "alpha", "delta", "beta"])?;
    let mut gap_sum = csv_writer(
        &r.out.join("gap_summary.csv"),
        &["n", "source", "replicates", "sup_alpha", "sup_n_delta", "sup_beta_scaled"],
    )?;
    let mut cov = csv_writer(&r.out.join("covariance.csv"), &["n", "x", "y", "empirical", "exact", "se"])?;
    let mut so = csv_writer(
        &r.out.join("second_order.csv"),
        &[
            "n", "x", "var0", "se_var0", "var1", "se_var1", "cov01", "se_cov01", "basis_var0", "basis_var1",
            "basis_cov01", "warped_var1",
        ],
    )?;
    let pairs = random_pairs(r.master_seed, r.cov_pairs)?;
    for &n in &r.n_list {
        for &src in &sources {
            let t = gap_diagnostics(&basis, n, &grid, r.x_ref, src, r.replicates, r.master_seed)?;
            let label = serde_json::to_value(src)?.as_str().unwrap_or("").to_string();
            for row in &t.rows {
                gaps.write_record([n.to_string(), label.clone(), f(row.x), f(row.alpha), f(row.delta), f(row.beta)])?;
            }
            gap_sum.write_record([
                n.to_string(),
                label,
                t.replicates.to_string(),
                f(t.sup_alpha),
                f(t.sup_n_delta),
                f(t.sup_beta_scaled),
            ])?;
        }
        for c in warped_covariance_check(&map, n, &pairs, r.cov_replicates, r.master_seed)? {
            cov.write_record([n.to_string(), f(c.x), f(c.y), f(c.empirical), f(c.exact), f(c.se)])?;
        }
        let b = basis.clone();
        let est = second_order_empirical(
            |rep| {
                RandomProcess::sl_direct(
                    ProcessKind::SlSumScaled,
                    Arc::new(sample_coefficients(r.master_seed, n, rep)?),
                    b.clone(),
                )
            },
            r.cov_replicates,
            r.x_ref,
        )?;
        let exact = second_order_from_basis(n, basis.clone())?.at(r.x_ref);
        let warped = second_order_exact(n, map.clone()).var1(r.x_ref);
        so.write_record([
            n.to_string(),
            f(r.x_ref),
            f(est.var0),
            f(est.se_var0),
            f(est.var1),
            f(est.se_var1),
            f(est.cov01),
            f(est.se_cov01),
            f(exact.0),
            f(exact.1),
            f(exact.2),
            f(warped),
        ])?;
    }
    gaps.flush()?;
    gap_sum.flush()?;
    cov.flush()?;
    so.flush()?;
    Ok(())
}
