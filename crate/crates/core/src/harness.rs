//! Seeded Monte Carlo experiments over the coupled processes, and the
//! statistics computed from their records.
//!
//! A replicate is keyed by `(master_seed, n, replicate_id)`. Replicates run in
//! parallel chunks; each chunk is written in id order before the next one
//! starts, so the record file does not depend on the worker count.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::statistics::{Data, OrderStatistics, Statistics};

use crate::eigen::{solve_basis_pair, BasisPair, SolverOptions};
use crate::ensembles::{
    sup_abs_diff, BasisSnapshot, CombinedSamples, PerturbationFamily, ProcessKind, RandomProcess,
    DEFAULT_PERTURB_C0, DEFAULT_PERTURB_C1, DEFAULT_PERTURB_SCALE,
};
use crate::error::{Error, Result};
use crate::kernels::{mean_and_se, r_n_closed};
use crate::rng::{sample_coefficients, CoefficientDraw};
use crate::weight::{builtin_weight_with, LiouvilleMap, DEFAULT_EXPCOS_A, TWO_PI};
use crate::zeros::{count_zeros, CountOptions, Evaluable, ZeroCountResult};

pub const THREADS_ENV: &str = "SLZEROS_THREADS";

/// Kinds a replicate can count.
pub const RECORD_KINDS: [ProcessKind; 4] = [
    ProcessKind::SlSumScaled,
    ProcessKind::Warped,
    ProcessKind::Stationary,
    ProcessKind::Perturbed,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbationSpec {
    pub scale: f64,
    pub c0: f64,
    pub c1: f64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        PerturbationSpec {
            scale: DEFAULT_PERTURB_SCALE,
            c0: DEFAULT_PERTURB_C0,
            c1: DEFAULT_PERTURB_C1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub weight: String,
    pub expcos_a: f64,
    pub n_list: Vec<usize>,
    pub replicates: usize,
    pub master_seed: u64,
    pub kinds: Vec<ProcessKind>,
    /// Zero-counting grid intervals per unit of frequency.
    pub grid_factor: usize,
    /// Eigenpairs per family; defaults to `max(n_list)`.
    pub k_max: Option<usize>,
    /// Points of the eigenfunction and Liouville grids.
    pub grid_points: usize,
    pub perturbation: PerturbationSpec,
    /// Write wall-clock milliseconds per replicate. Off by default because
    /// timings make record files differ between runs.
    pub record_timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            weight: "sine2".into(),
            expcos_a: DEFAULT_EXPCOS_A,
            n_list: vec![50, 100, 200, 400],
            replicates: 2000,
            master_seed: 20240601,
            kinds: RECORD_KINDS.to_vec(),
            grid_factor: 16,
            k_max: None,
            grid_points: 8192,
            perturbation: PerturbationSpec::default(),
            record_timing: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::Config("replicates must be at least 2".into()));
        }
        if self.n_list.is_empty() {
            return Err(Error::Config("n_list must not be empty".into()));
        }
        if self.n_list[0] == 0 || self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "n_list must be positive and strictly ascending, got {:?}",
                self.n_list
            )));
        }
        if self.kinds.is_empty() {
            return Err(Error::Config("kinds must not be empty".into()));
        }
        if let Some(k) = self.kinds.iter().find(|k| !RECORD_KINDS.contains(k)) {
            return Err(Error::Config(format!(
                "kind `{k}` cannot be recorded (expected a subset of f, X, T, pert)"
            )));
        }
        if self.grid_factor == 0 {
            return Err(Error::Config("grid_factor must be at least 1".into()));
        }
        if self.grid_points < 64 {
            return Err(Error::Config("grid_points must be at least 64".into()));
        }
        let n_max = self.n_max();
        if self.needs_basis() && self.k_max() < n_max {
            return Err(Error::Config(format!(
                "k_max = {} is smaller than max(n_list) = {n_max}",
                self.k_max()
            )));
        }
        Ok(())
    }

    pub fn n_max(&self) -> usize {
        self.n_list.iter().copied().max().unwrap_or(0)
    }

    pub fn k_max(&self) -> usize {
        self.k_max.unwrap_or_else(|| self.n_max())
    }

    pub fn has(&self, kind: ProcessKind) -> bool {
        self.kinds.contains(&kind)
    }

    fn needs_basis(&self) -> bool {
        self.has(ProcessKind::SlSumScaled)
    }

    fn count_options(&self) -> CountOptions {
        CountOptions {
            factor: self.grid_factor,
            refine: false,
            ..CountOptions::default()
        }
    }
}

/// One Monte Carlo replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub n: usize,
    pub replicate_id: u64,
    pub seed: u64,
    pub n_f: Option<usize>,
    pub n_x: Option<usize>,
    pub n_t: Option<usize>,
    pub n_pert: Option<usize>,
    /// `‖f_n − X_n‖∞` on the Liouville grid.
    pub sup_eps: Option<f64>,
    pub stable_f: Option<bool>,
    pub stable_x: Option<bool>,
    pub stable_t: Option<bool>,
    pub stable_pert: Option<bool>,
    pub millis: u64,
}

impl ReplicateRecord {
    pub fn count(&self, kind: ProcessKind) -> Option<usize> {
        match kind {
            ProcessKind::SlSumScaled => self.n_f,
            ProcessKind::Warped => self.n_x,
            ProcessKind::Stationary => self.n_t,
            ProcessKind::Perturbed => self.n_pert,
            _ => None,
        }
    }

    pub fn stable(&self, kind: ProcessKind) -> Option<bool> {
        match kind {
            ProcessKind::SlSumScaled => self.stable_f,
            ProcessKind::Warped => self.stable_x,
            ProcessKind::Stationary => self.stable_t,
            ProcessKind::Perturbed => self.stable_pert,
            _ => None,
        }
    }
}

pub const RECORD_HEADER: [&str; 13] = [
    "n",
    "replicate_id",
    "seed",
    "N_fn",
    "N_Xn",
    "N_Tn",
    "N_pert",
    "sup_eps",
    "stable_fn",
    "stable_Xn",
    "stable_Tn",
    "stable_pert",
    "millis",
];

/// Floats with 17 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn record_row(r: &ReplicateRecord) -> [String; 13] {
    [
        r.n.to_string(),
        r.replicate_id.to_string(),
        r.seed.to_string(),
        opt(r.n_f),
        opt(r.n_x),
        opt(r.n_t),
        opt(r.n_pert),
        r.sup_eps.map(format_float).unwrap_or_default(),
        opt(r.stable_f),
        opt(r.stable_x),
        opt(r.stable_t),
        opt(r.stable_pert),
        r.millis.to_string(),
    ]
}

/// Appends records to a CSV file as they are produced.
pub struct RecordWriter {
    inner: csv::Writer<BufWriter<File>>,
}

impl RecordWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
        inner.write_record(RECORD_HEADER)?;
        inner.flush()?;
        Ok(RecordWriter { inner })
    }

    pub fn write(&mut self, records: &[ReplicateRecord]) -> Result<()> {
        for r in records {
            self.inner.write_record(record_row(r))?;
        }
        self.inner.flush()?;
        Ok(())
    }
}

pub fn write_records(path: &Path, records: &[ReplicateRecord]) -> Result<()> {
    RecordWriter::create(path)?.write(records)
}

fn parse_field<T: std::str::FromStr>(s: &str, column: &str) -> Result<Option<T>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::Config(format!("bad value `{s}` in column {column}")))
}

fn required<T>(v: Option<T>, column: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("missing value in column {column}")))
}

pub fn read_records(path: &Path) -> Result<Vec<ReplicateRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header != RECORD_HEADER {
        return Err(Error::Config(format!(
            "unexpected record header {header:?}, expected {RECORD_HEADER:?}"
        )));
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let f = |i: usize| row.get(i).unwrap_or("");
        out.push(ReplicateRecord {
            n: required(parse_field(f(0), "n")?, "n")?,
            replicate_id: required(parse_field(f(1), "replicate_id")?, "replicate_id")?,
            seed: required(parse_field(f(2), "seed")?, "seed")?,
            n_f: parse_field(f(3), "N_fn")?,
            n_x: parse_field(f(4), "N_Xn")?,
            n_t: parse_field(f(5), "N_Tn")?,
            n_pert: parse_field(f(6), "N_pert")?,
            sup_eps: parse_field(f(7), "sup_eps")?,
            stable_f: parse_field(f(8), "stable_fn")?,
            stable_x: parse_field(f(9), "stable_Xn")?,
            stable_t: parse_field(f(10), "stable_Tn")?,
            stable_pert: parse_field(f(11), "stable_pert")?,
            millis: required(parse_field(f(12), "millis")?, "millis")?,
        });
    }
    Ok(out)
}

/// Worker pool sized by `SLZEROS_THREADS` (all cores when unset).
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
        if n == 0 {
            return Err(Error::Config(format!("{THREADS_ENV} must be a positive integer")));
        }
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// A validated configuration with its weight, map and (if needed) eigenbasis.
pub struct Experiment {
    config: ExperimentConfig,
    map: Arc<LiouvilleMap>,
    basis: Option<Arc<BasisPair>>,
    perturbation: Arc<PerturbationFamily>,
}

const CHUNK: usize = 64;
const BATCH: usize = 8;

impl Experiment {
    pub fn prepare(config: ExperimentConfig) -> Result<Self> {
        Self::prepare_with(config, None)
    }

    /// Reuses an already solved basis when it matches the configuration.
    pub fn prepare_with(config: ExperimentConfig, basis: Option<Arc<BasisPair>>) -> Result<Self> {
        config.validate()?;
        let p = config.perturbation;
        let perturbation = Arc::new(if config.has(ProcessKind::Perturbed) {
            PerturbationFamily::harmonic(p.scale, p.c0, p.c1, config.n_max())
                .map_err(|e| Error::Config(format!("perturbation rejected: {e}")))?
        } else {
            PerturbationFamily::zero()
        });
        let weight = builtin_weight_with(&config.weight, config.expcos_a)?;
        let basis = match basis {
            Some(b) if config.needs_basis() => {
                if b.len() < config.n_max() || b.weight().name() != weight.name() {
                    return Err(Error::Config("supplied eigenbasis does not match the configuration".into()));
                }
                Some(b)
            }
            _ if config.needs_basis() => {
                let opts = SolverOptions {
                    grid_points: config.grid_points,
                    ..SolverOptions::default()
                };
                Some(Arc::new(solve_basis_pair(&weight, config.k_max(), &opts)?))
            }
            _ => None,
        };
        let map = match &basis {
            Some(b) => b.map().clone(),
            None => Arc::new(LiouvilleMap::new(&weight, config.grid_points)?),
        };
        Ok(Experiment {
            config,
            map,
            basis,
            perturbation,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn basis(&self) -> Option<&Arc<BasisPair>> {
        self.basis.as_ref()
    }

    pub fn map(&self) -> &Arc<LiouvilleMap> {
        &self.map
    }

    /// Runs every replicate, streaming to `sink` when given.
    pub fn run(&self, sink: Option<&Path>) -> Result<Vec<ReplicateRecord>> {
        let pool = worker_pool()?;
        let mut writer = sink.map(RecordWriter::create).transpose()?;
        let mut all = Vec::with_capacity(self.config.n_list.len() * self.config.replicates);
        for &n in &self.config.n_list {
            let ids: Vec<u64> = (0..self.config.replicates as u64).collect();
            for chunk in ids.chunks(CHUNK) {
                let batches: Vec<Result<Vec<ReplicateRecord>>> =
                    pool.install(|| chunk.par_chunks(BATCH).map(|b| self.run_batch(n, b)).collect());
                let mut records = Vec::with_capacity(chunk.len());
                for b in batches {
                    records.extend(b?);
                }
                if let Some(w) = writer.as_mut() {
                    w.write(&records)?;
                }
                all.extend(records);
            }
        }
        Ok(all)
    }

    fn run_batch(&self, n: usize, ids: &[u64]) -> Result<Vec<ReplicateRecord>> {
        let started = Instant::now();
        let draws: Vec<CoefficientDraw> = ids
            .iter()
            .map(|&r| sample_coefficients(self.config.master_seed, n, r))
            .collect::<Result<_>>()?;
        let combined = match &self.basis {
            Some(basis) => {
                let refs: Vec<&CoefficientDraw> = draws.iter().collect();
                CombinedSamples::batch(basis, &refs)?.into_iter().map(Some).collect()
            }
            None => vec![None; draws.len()],
        };
        let shared = started.elapsed().as_secs_f64() * 1e3 / draws.len() as f64;
        draws
            .into_iter()
            .zip(combined)
            .map(|(d, c)| {
                let t = Instant::now();
                let mut rec = self.replicate(Arc::new(d), c.map(Arc::new));
                if self.config.record_timing {
                    rec.millis = (shared + t.elapsed().as_secs_f64() * 1e3).round() as u64;
                }
                Ok(rec)
            })
            .collect()
    }

    fn replicate(&self, draw: Arc<CoefficientDraw>, combined: Option<Arc<CombinedSamples>>) -> ReplicateRecord {
        let n = draw.n;
        let opts = self.config.count_options();
        let full = (0.0, TWO_PI);
        let mut rec = ReplicateRecord {
            n,
            replicate_id: draw.replicate_id,
            seed: draw.seed,
            n_f: None,
            n_x: None,
            n_t: None,
            n_pert: None,
            sup_eps: None,
            stable_f: None,
            stable_x: None,
            stable_t: None,
            stable_pert: None,
            millis: 0,
        };
        let put = |r: ZeroCountResult| (Some(r.count), Some(r.stable));
        let x_proc = RandomProcess::warped(draw.clone(), self.map.clone());
        if let Some(c) = &combined {
            let f = RandomProcess::from_combined(ProcessKind::SlSumScaled, draw.clone(), self.map.clone(), c.clone());
            let view = f.liouville().expect("eigen sums have a Liouville view");
            (rec.n_f, rec.stable_f) = put(count_zeros(&view, full, n, &opts));
            if self.config.has(ProcessKind::Warped) {
                // f_n on its own nodes against X_n on the same nodes
                let norm = 1.0 / (n as f64).sqrt();
                let fv: Vec<f64> = c.values.iter().map(|v| v * norm).collect();
                let xv = x_proc
                    .liouville()
                    .expect("warped sums have a Liouville view")
                    .sample_uniform(0.0, TWO_PI, fv.len() - 1);
                rec.sup_eps = Some(sup_abs_diff(&fv, &xv));
            }
        }
        if self.config.has(ProcessKind::Warped) {
            let view = x_proc.liouville().expect("warped sums have a Liouville view");
            (rec.n_x, rec.stable_x) = put(count_zeros(&view, full, n, &opts));
        }
        if self.config.has(ProcessKind::Stationary) {
            let t = RandomProcess::stationary(draw.clone());
            (rec.n_t, rec.stable_t) = put(count_zeros(&t, full, 2 * n, &opts));
        }
        if self.config.has(ProcessKind::Perturbed) {
            let p = RandomProcess::perturbed(draw, self.perturbation.clone());
            (rec.n_pert, rec.stable_pert) = put(count_zeros(&p, full, 2 * n, &opts));
        }
        rec
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ReplicateRecord>> {
    Experiment::prepare(config.clone())?.run(None)
}

/// Records grouped by `n`, each group sorted by replicate id.
pub fn group_by_n(records: &[ReplicateRecord]) -> BTreeMap<usize, Vec<&ReplicateRecord>> {
    let mut groups: BTreeMap<usize, Vec<&ReplicateRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.n).or_default().push(r);
    }
    for g in groups.values_mut() {
        g.sort_by_key(|r| r.replicate_id);
    }
    groups
}

/// Kolmogorov-Smirnov distance between a sample and `N(mean, sd²)`.
pub fn ks_statistic(sample: &[f64], mean: f64, sd: f64) -> Result<f64> {
    if sample.len() < 2 {
        return Err(Error::Precondition("KS needs at least two observations".into()));
    }
    if !(sd > 0.0) || !sd.is_finite() {
        return Err(Error::Domain(format!("reference standard deviation must be positive, got {sd}")));
    }
    let normal = Normal::new(mean, sd).map_err(|e| Error::Domain(e.to_string()))?;
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let c = normal.cdf(x);
        d = d.max((i as f64 + 1.0) / m - c).max(c - i as f64 / m);
    }
    Ok(d.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountSummary {
    pub mean: f64,
    pub se_mean: f64,
    /// Unbiased sample variance of the count.
    pub var: f64,
    pub var_over_n: f64,
    /// 95% interval for `var/n` (normal theory on the log scale).
    pub var_over_n_ci: [f64; 2],
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// KS distance of the standardized counts to the fitted Gaussian.
    pub ks: f64,
    pub unstable: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupEpsRow {
    pub n: usize,
    pub median: f64,
    pub p99: f64,
    /// Quantiles of `‖ε_n‖∞ · √n / ln n`.
    pub median_scaled: f64,
    pub p99_scaled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContiguityRow {
    pub n: usize,
    /// Mean of `|N_f − N_X| / √n`.
    pub value: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NSummary {
    pub n: usize,
    pub replicates: usize,
    pub counts: BTreeMap<String, CountSummary>,
    pub contiguity: Option<f64>,
    pub sup_eps: Option<SupEpsRow>,
    /// False when every replicate of some kind had an unstable count.
    pub reliable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryReport {
    pub per_n: Vec<NSummary>,
    /// Per kind: `|v(n_max) − v(n_prev)| / v(n_max)` for `v = var/n` at the
    /// two largest `n`.
    pub var_over_n_rel_change: BTreeMap<String, f64>,
    /// Least-squares slope of `ln median(‖ε_n‖∞√n/ln n)` against `ln n`.
    pub sup_eps_slope: Option<f64>,
}

fn skew_kurt(z: &[f64]) -> (f64, f64) {
    let m = z.len() as f64;
    let mean = z.iter().sum::<f64>() / m;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in z {
        let d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    let (m2, m3, m4) = (m2 / m, m3 / m, m4 / m);
    if m2 == 0.0 {
        return (0.0, 0.0);
    }
    (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
}

fn count_summary(n: usize, counts: &[f64], unstable: usize) -> CountSummary {
    let m = counts.len() as f64;
    let mean = counts.mean();
    let var = counts.variance();
    let nf = n as f64;
    let z: Vec<f64> = counts.iter().map(|c| (c - mean) / nf.sqrt()).collect();
    let (skewness, excess_kurtosis) = skew_kurt(&z);
    let half = 1.96 * (2.0 / (m - 1.0)).sqrt();
    let ks = if var > 0.0 {
        ks_statistic(&z, 0.0, (var / nf).sqrt()).unwrap_or(1.0)
    } else {
        1.0
    };
    CountSummary {
        mean,
        se_mean: (var / m).sqrt(),
        var,
        var_over_n: var / nf,
        var_over_n_ci: [var / nf * (-half).exp(), var / nf * half.exp()],
        skewness,
        excess_kurtosis,
        ks,
        unstable,
    }
}

pub fn summarize(records: &[ReplicateRecord]) -> Result<SummaryReport> {
    let groups = group_by_n(records);
    let contiguity: BTreeMap<usize, f64> = contiguity_diagnostic(records).into_iter().map(|r| (r.n, r.value)).collect();
    let sup: BTreeMap<usize, SupEpsRow> = sup_eps_diagnostic(records).into_iter().map(|r| (r.n, r)).collect();
    let mut per_n = Vec::new();
    for (&n, group) in &groups {
        if group.len() < 2 {
            return Err(Error::Precondition(format!("n = {n} has fewer than two records")));
        }
        let mut counts = BTreeMap::new();
        let mut reliable = true;
        for kind in RECORD_KINDS {
            let values: Vec<f64> = group.iter().filter_map(|r| r.count(kind)).map(|c| c as f64).collect();
            if values.len() < 2 {
                continue;
            }
            let unstable = group.iter().filter(|r| r.stable(kind) == Some(false)).count();
            if unstable == values.len() {
                reliable = false;
            }
            counts.insert(kind.label().to_string(), count_summary(n, &values, unstable));
        }
        per_n.push(NSummary {
            n,
            replicates: group.len(),
            counts,
            contiguity: contiguity.get(&n).copied(),
            sup_eps: sup.get(&n).cloned(),
            reliable,
        });
    }
    let mut var_over_n_rel_change = BTreeMap::new();
    if per_n.len() >= 2 {
        let (a, b) = (&per_n[per_n.len() - 2], &per_n[per_n.len() - 1]);
        for (kind, sb) in &b.counts {
            if let Some(sa) = a.counts.get(kind) {
                var_over_n_rel_change.insert(kind.clone(), (sb.var_over_n - sa.var_over_n).abs() / sb.var_over_n);
            }
        }
    }
    let pts: Vec<(f64, f64)> = sup
        .values()
        .filter(|r| r.median_scaled > 0.0)
        .map(|r| (r.n as f64, r.median_scaled))
        .collect();
    let sup_eps_slope = if pts.len() >= 2 { Some(log_log_slope(&pts)) } else { None };
    Ok(SummaryReport {
        per_n,
        var_over_n_rel_change,
        sup_eps_slope,
    })
}

/// `E|N_f − N_X| / √n` per `n`, over records holding both counts.
pub fn contiguity_diagnostic(records: &[ReplicateRecord]) -> Vec<ContiguityRow> {
    group_by_n(records)
        .into_iter()
        .filter_map(|(n, g)| {
            let d: Vec<f64> = g
                .iter()
                .filter_map(|r| Some((r.n_f? as f64 - r.n_x? as f64).abs() / (n as f64).sqrt()))
                .collect();
            (!d.is_empty()).then(|| ContiguityRow {
                n,
                value: d.iter().sum::<f64>() / d.len() as f64,
                pairs: d.len(),
            })
        })
        .collect()
}

/// Median and 99th percentile of `‖ε_n‖∞`, raw and scaled by `√n / ln n`.
pub fn sup_eps_diagnostic(records: &[ReplicateRecord]) -> Vec<SupEpsRow> {
    group_by_n(records)
        .into_iter()
        .filter_map(|(n, g)| {
            let v: Vec<f64> = g.iter().filter_map(|r| r.sup_eps).collect();
            if v.is_empty() {
                return None;
            }
            let mut data = Data::new(v);
            let (median, p99) = (data.median(), data.quantile(0.99));
            let scale = (n as f64).sqrt() / (n as f64).ln().max(f64::MIN_POSITIVE);
            Some(SupEpsRow {
                n,
                median,
                p99,
                median_scaled: median * scale,
                p99_scaled: p99 * scale,
            })
        })
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (mx, my) = (lx.iter().sum::<f64>() / lx.len() as f64, ly.iter().sum::<f64>() / ly.len() as f64);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// A Gaussian linear functional `L = n^{-1/2} Σ ca_k a_k + cb_k b_k` of the
/// coefficient draw.
#[derive(Debug, Clone)]
struct Functional {
    ca: Vec<f64>,
    cb: Vec<f64>,
}

impl Functional {
    fn apply(&self, d: &CoefficientDraw) -> f64 {
        let s: f64 = self.ca.iter().zip(&d.a).map(|(c, a)| c * a).sum::<f64>()
            + self.cb.iter().zip(&d.b).map(|(c, b)| c * b).sum::<f64>();
        s / (self.ca.len() as f64).sqrt()
    }

    fn cov(&self, other: &Functional) -> f64 {
        let s: f64 = self.ca.iter().zip(&other.ca).map(|(x, y)| x * y).sum::<f64>()
            + self.cb.iter().zip(&other.cb).map(|(x, y)| x * y).sum::<f64>();
        s / self.ca.len() as f64
    }

    fn minus(&self, other: &Functional) -> Functional {
        Functional {
            ca: self.ca.iter().zip(&other.ca).map(|(x, y)| x - y).collect(),
            cb: self.cb.iter().zip(&other.cb).map(|(x, y)| x - y).collect(),
        }
    }
}

/// `X_n(x)` and `X′_n(x)` as functionals.
fn warped_functionals(map: &LiouvilleMap, n: usize, x: f64) -> (Functional, Functional) {
    let y = map.omega(x);
    let o = map.weight().eval(x);
    let mut v = Functional {
        ca: Vec::with_capacity(n),
        cb: Vec::with_capacity(n),
    };
    let mut d = v.clone();
    for k in 1..=n {
        let kh = 0.5 * k as f64;
        let (s, c) = (kh * y).sin_cos();
        v.ca.push(c);
        v.cb.push(s);
        d.ca.push(-kh * o * s);
        d.cb.push(kh * o * c);
    }
    (v, d)
}

fn scaled_sum_functional(basis: &BasisPair, n: usize, x: f64) -> Result<Functional> {
    let snap = BasisSnapshot::at(basis, n, basis.map().omega(x))?;
    Ok(Functional {
        ca: snap.cos_values,
        cb: snap.sin_values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GapSource {
    /// Covariances summed over the eigenbasis.
    Exact,
    /// Sample moments over coefficient draws.
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapRow {
    pub x: f64,
    /// `E(X′_n f_n) / var f_n` at `x`.
    pub alpha: f64,
    /// `|var X_n · var f_n − cov(X_n, f_n)²|` at `x`.
    pub delta: f64,
    /// `cov(ε_n(x), X_n(x_ref)) / var X_n(x_ref)`.
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapTable {
    pub n: usize,
    pub source: GapSource,
    pub replicates: usize,
    pub x_ref: f64,
    pub rows: Vec<GapRow>,
    pub sup_alpha: f64,
    pub sup_n_delta: f64,
    /// `sup |β_n| · n / ln n`
    pub sup_beta_scaled: f64,
}

/// Tabulates `α_n`, `Δ` and `β_n` over `x_grid`.
///
/// `Empirical` uses `replicates` draws keyed by `master_seed`; moments are
/// taken about the known mean zero.
pub fn gap_diagnostics(
    basis: &BasisPair,
    n: usize,
    x_grid: &[f64],
    x_ref: f64,
    source: GapSource,
    replicates: usize,
    master_seed: u64,
) -> Result<GapTable> {
    let map = basis.map();
    let (x_ref_f, _) = warped_functionals(map, n, x_ref);
    let mut funcs = Vec::with_capacity(x_grid.len());
    for &x in x_grid {
        let (xv, xd) = warped_functionals(map, n, x);
        let f = scaled_sum_functional(basis, n, x)?;
        let eps = f.minus(&xv);
        funcs.push((xv, xd, f, eps));
    }
    let cov = |a: &Functional, b: &Functional| -> f64 { a.cov(b) };
    let rows: Vec<GapRow> = match source {
        GapSource::Exact => {
            let vref = cov(&x_ref_f, &x_ref_f);
            x_grid
                .iter()
                .zip(&funcs)
                .map(|(&x, (xv, xd, f, eps))| {
                    let vf = cov(f, f);
                    let cxf = cov(xv, f);
                    GapRow {
                        x,
                        alpha: cov(xd, f) / vf,
                        delta: (cov(xv, xv) * vf - cxf * cxf).abs(),
                        beta: cov(eps, &x_ref_f) / vref,
                    }
                })
                .collect()
        }
        GapSource::Empirical => {
            if replicates < 2 {
                return Err(Error::Precondition("at least two replicates are needed".into()));
            }
            let g = x_grid.len();
            // per grid point: Σ X′ε, Σ f², Σ X², Σ Xf, Σ ε·X(x_ref).
            // E(X′X) = 0 exactly since var X ≡ 1, so E(X′f) = E(X′ε); the raw
            // product X′f has spread of order n and swamps α at large n.
            let mut acc = vec![[0.0f64; 5]; g];
            let mut ref_sq = 0.0;
            for r in 0..replicates as u64 {
                let d = sample_coefficients(master_seed, n, r)?;
                let xr = x_ref_f.apply(&d);
                ref_sq += xr * xr;
                for (a, (xv, xd, f, eps)) in acc.iter_mut().zip(&funcs) {
                    let (vx, vd, vf, ve) = (xv.apply(&d), xd.apply(&d), f.apply(&d), eps.apply(&d));
                    a[0] += vd * ve;
                    a[1] += vf * vf;
                    a[2] += vx * vx;
                    a[3] += vx * vf;
                    a[4] += ve * xr;
                }
            }
            let m = replicates as f64;
            let vref = ref_sq / m;
            x_grid
                .iter()
                .zip(&acc)
                .map(|(&x, a)| {
                    let [xdf, ff, xx, xf, ex] = a.map(|v| v / m);
                    GapRow {
                        x,
                        alpha: xdf / ff,
                        delta: (xx * ff - xf * xf).abs(),
                        beta: ex / vref,
                    }
                })
                .collect()
        }
    };
    let nf = n as f64;
    let sup = |f: &dyn Fn(&GapRow) -> f64| rows.iter().map(f).fold(0.0f64, f64::max);
    let beta_scale = nf / nf.ln().max(f64::MIN_POSITIVE);
    Ok(GapTable {
        n,
        source,
        replicates: if source == GapSource::Exact { 0 } else { replicates },
        x_ref,
        sup_alpha: sup(&|r| r.alpha.abs()),
        sup_n_delta: sup(&|r| nf * r.delta),
        sup_beta_scaled: sup(&|r| r.beta.abs() * beta_scale),
        rows,
    })
}

/// Empirical against exact covariance of `X_n` at one pair of points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CovarianceCheck {
    pub x: f64,
    pub y: f64,
    pub empirical: f64,
    pub exact: f64,
    pub se: f64,
}

/// `E X_n(x) X_n(y)` over `replicates` draws against `r_n((Ω(x) − Ω(y))/2)`.
pub fn warped_covariance_check(
    map: &LiouvilleMap,
    n: usize,
    pairs: &[(f64, f64)],
    replicates: usize,
    master_seed: u64,
) -> Result<Vec<CovarianceCheck>> {
    let funcs: Vec<(Functional, Functional)> = pairs
        .iter()
        .map(|&(x, y)| (warped_functionals(map, n, x).0, warped_functionals(map, n, y).0))
        .collect();
    let mut products = vec![Vec::with_capacity(replicates); pairs.len()];
    for r in 0..replicates as u64 {
        let d = sample_coefficients(master_seed, n, r)?;
        for (p, (fx, fy)) in products.iter_mut().zip(&funcs) {
            p.push(fx.apply(&d) * fy.apply(&d));
        }
    }
    Ok(pairs
        .iter()
        .zip(products)
        .map(|(&(x, y), p)| {
            let (empirical, se) = mean_and_se(p);
            CovarianceCheck {
                x,
                y,
                empirical,
                exact: r_n_closed(n, 0.5 * (map.omega(x) - map.omega(y))).0,
                se,
            }
        })
        .collect())
}

/// Writes any serializable value as pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::kac_rice_warped_closed;

    fn small(weight: &str) -> ExperimentConfig {
        ExperimentConfig {
            weight: weight.into(),
            n_list: vec![5, 10],
            replicates: 40,
            master_seed: 9,
            grid_points: 1024,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut c = small("unit");
        c.replicates = 1;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = small("unit");
        c.n_list = vec![10, 5];
        assert!(c.validate().is_err());
        let mut c = small("unit");
        c.k_max = Some(8);
        assert!(c.validate().unwrap_err().to_string().contains("k_max"));
        let mut c = small("unit");
        c.kinds = vec![ProcessKind::Classical];
        assert!(c.validate().is_err());
    }

    #[test]
    fn unit_weight_couples_exactly() {
        let records = run_experiment(&small("unit")).unwrap();
        assert_eq!(records.len(), 80);
        for r in &records {
            assert_eq!(r.n_f, r.n_x);
            assert!(r.sup_eps.unwrap() < 1e-6);
        }
        assert!(contiguity_diagnostic(&records).iter().all(|c| c.value == 0.0));
    }

    #[test]
    fn records_round_trip_through_csv() {
        let records = run_experiment(&small("sine2")).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.csv");
        write_records(&path, &records).unwrap();
        let back = read_records(&path).unwrap();
        assert_eq!(back.len(), records.len());
        for (a, b) in records.iter().zip(&back) {
            assert_eq!(a.n_f, b.n_f);
            assert_eq!(a.seed, b.seed);
            assert_eq!(a.sup_eps, b.sup_eps);
        }
        let s1 = summarize(&records).unwrap();
        let s2 = summarize(&back).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn streamed_file_matches_returned_records() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        let exp = Experiment::prepare(small("sine2")).unwrap();
        let records = exp.run(Some(&a)).unwrap();
        write_records(&b, &records).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn summary_intervals_contain_estimates() {
        let records = run_experiment(&small("sine2")).unwrap();
        let s = summarize(&records).unwrap();
        for row in &s.per_n {
            for c in row.counts.values() {
                assert!(c.var_over_n_ci[0] <= c.var_over_n && c.var_over_n <= c.var_over_n_ci[1]);
                assert!((0.0..=1.0).contains(&c.ks));
            }
            assert!(row.contiguity.unwrap() >= 0.0);
        }
    }

    #[test]
    fn ks_examples() {
        assert!(ks_statistic(&[3.0; 10], 0.0, 1.0).unwrap() >= 0.5);
        assert!(ks_statistic(&[1.0, 2.0], 0.0, 0.0).is_err());
        // quantiles of the reference put the ECDF steps astride the CDF
        let m = 1000;
        let normal = Normal::new(0.0, 1.0).unwrap();
        let q: Vec<f64> = (0..m).map(|i| normal.inverse_cdf((i as f64 + 0.5) / m as f64)).collect();
        assert!((ks_statistic(&q, 0.0, 1.0).unwrap() - 0.5 / m as f64).abs() < 1e-9);
        // a Gaussian sample of size 2000 sits within the 0.999 Kolmogorov band
        let z: Vec<f64> = (0..40u64)
            .flat_map(|r| sample_coefficients(1, 50, r).unwrap().a)
            .collect();
        assert!(ks_statistic(&z, 0.0, 1.0).unwrap() <= 0.040);
    }

    #[test]
    fn log_log_slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [50.0, 100.0, 200.0, 400.0].iter().map(|&n: &f64| (n, 3.0 * n.powf(-0.7))).collect();
        assert!((log_log_slope(&pts) + 0.7).abs() < 1e-12);
    }

    #[test]
    fn gap_diagnostics_degenerate_for_unit_weight() {
        let basis = solve_basis_pair(
            &crate::weight::WeightFunction::unit(),
            20,
            &SolverOptions {
                grid_points: 2048,
                ..Default::default()
            },
        )
        .unwrap();
        let grid: Vec<f64> = (0..16).map(|i| 0.4 * i as f64).collect();
        let t = gap_diagnostics(&basis, 20, &grid, 1.0, GapSource::Exact, 0, 0).unwrap();
        assert!(t.sup_n_delta < 1e-6 && t.sup_beta_scaled < 1e-6 && t.sup_alpha < 1e-6);
        let e = gap_diagnostics(&basis, 20, &grid, 1.0, GapSource::Empirical, 500, 3).unwrap();
        assert!(e.sup_n_delta < 1e-6);
    }

    #[test]
    fn covariance_check_is_consistent() {
        let map = LiouvilleMap::new(&builtin_weight_with("sine2", 0.5).unwrap(), 2048).unwrap();
        let rows = warped_covariance_check(&map, 30, &[(0.5, 0.5), (1.0, 2.5)], 2000, 4).unwrap();
        assert!((rows[0].exact - 1.0).abs() < 1e-15);
        for r in rows {
            assert!((r.empirical - r.exact).abs() < 4.0 * r.se, "{r:?}");
        }
        assert!(kac_rice_warped_closed(1) == 1.0);
    }
}
