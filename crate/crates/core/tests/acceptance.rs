//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero when any criterion fails.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slzeros::eigen::{
    asymptotic_deviation, eigen_solve, solve_basis_pair, BasisPair, BoundaryCondition, DeviationRow,
    SolverOptions,
};
use slzeros::ensembles::{BasisSnapshot, ProcessKind, RandomProcess};
use slzeros::harness::{
    gap_diagnostics, log_log_slope, summarize, warped_covariance_check, write_records, Experiment,
    ExperimentConfig, GapSource, ReplicateRecord, SummaryReport, THREADS_ENV,
};
use slzeros::kernels::kac_rice_warped_closed;
use slzeros::rng::sample_coefficients;
use slzeros::weight::{builtin_weights, weight_to_potential, WeightFunction, TWO_PI};
use slzeros::zeros::{count_zeros_changed_variable, CountOptions};
use slzeros::Result;

const SEED: u64 = 20240601;
const N_LIST: [usize; 4] = [50, 100, 200, 400];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len();
    if m % 2 == 1 {
        s[m / 2]
    } else {
        0.5 * (s[m / 2 - 1] + s[m / 2])
    }
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn c1_unit_eigen() -> Result<Outcome> {
    let start = Instant::now();
    let q = weight_to_potential(&WeightFunction::unit())?;
    let mut worst = 0.0f64;
    for bc in [BoundaryCondition::C, BoundaryCondition::D] {
        let basis = eigen_solve(&q, bc, 20, &SolverOptions::default())?;
        for (i, l) in basis.eigenvalues().iter().enumerate() {
            let k = (i + 1) as f64;
            worst = worst.max((l - k * k / 4.0).abs());
        }
    }
    let t = secs(start.elapsed());
    outcome(worst <= 1e-8 && t < 5.0, format!("max |λ_k − k²/4| = {worst:.2e}, {t:.2} s"))
}

fn in_range(rows: &[DeviationRow]) -> impl Iterator<Item = &DeviationRow> {
    rows.iter().filter(|r| (20..=200).contains(&r.k))
}

fn c2_eigen_asymptotics(rows: &[(BoundaryCondition, Vec<DeviationRow>)], solve: f64) -> Result<Outcome> {
    let mut pass = solve < 60.0;
    let mut detail = Vec::new();
    for (bc, rows) in rows {
        let pts: Vec<(f64, f64)> = in_range(rows).map(|r| (r.k as f64, r.sqrt_gap.abs())).collect();
        let slope = log_log_slope(&pts);
        pass &= (slope + 1.0).abs() <= 0.3;
        detail.push(format!("{bc} slope {slope:.3}"));
    }
    outcome(pass, format!("{}, solve {solve:.1} s", detail.join(", ")))
}

fn c3_eigenfunction_asymptotics(rows: &[(BoundaryCondition, Vec<DeviationRow>)]) -> Result<Outcome> {
    let mut pass = true;
    let mut detail = Vec::new();
    for (bc, rows) in rows {
        let kd: Vec<f64> = in_range(rows).map(|r| r.k_dev).collect();
        let (mx, md) = (max(&kd), median(&kd));
        pass &= mx <= 3.0 * md;
        detail.push(format!("{bc} max k·d_k {mx:.3} vs 3×median {:.3}", 3.0 * md));
    }
    outcome(pass, detail.join(", "))
}

fn c4_kac_rice() -> Result<Outcome> {
    let start = Instant::now();
    let config = ExperimentConfig {
        weight: "unit".into(),
        n_list: vec![50],
        replicates: 2000,
        master_seed: SEED,
        kinds: vec![ProcessKind::Warped],
        ..ExperimentConfig::default()
    };
    let records = Experiment::prepare(config)?.run(None)?;
    let s = &summarize(&records)?.per_n[0].counts["X"];
    let oracle = kac_rice_warped_closed(50);
    let z = (s.mean - oracle) / s.se_mean;
    let t = secs(start.elapsed());
    outcome(
        z.abs() <= 3.0 && t < 180.0,
        format!("mean {:.3} vs {oracle:.3} ({z:+.2} SE), {t:.1} s", s.mean),
    )
}

fn c5_degenerate_coupling() -> Result<Outcome> {
    let config = ExperimentConfig {
        weight: "unit".into(),
        n_list: vec![50, 100],
        replicates: 500,
        master_seed: SEED,
        kinds: vec![ProcessKind::SlSumScaled, ProcessKind::Warped],
        ..ExperimentConfig::default()
    };
    let records = Experiment::prepare(config)?.run(None)?;
    let equal = records.iter().filter(|r| r.n_f == r.n_x).count();
    let sup = max(&records.iter().map(|r| r.sup_eps.unwrap_or(f64::INFINITY)).collect::<Vec<_>>());
    outcome(
        equal == records.len() && sup <= 1e-6,
        format!("equal counts {equal}/{}, max ‖ε_n‖∞ {sup:.2e}", records.len()),
    )
}

fn stabilization(report: &SummaryReport, label: &str) -> (bool, String) {
    let at = |n: usize| report.per_n.iter().find(|s| s.n == n).map(|s| &s.counts[label]);
    let (Some(a), Some(b)) = (at(200), at(400)) else {
        return (false, "missing n".into());
    };
    let rel = (b.var_over_n - a.var_over_n).abs() / b.var_over_n;
    let pass = rel <= 0.15 && b.var_over_n > 0.0 && b.var_over_n_ci[0] > 0.0;
    (
        pass,
        format!(
            "var/n {:.4} → {:.4} (rel {rel:.3}), CI [{:.4}, {:.4}]",
            a.var_over_n, b.var_over_n, b.var_over_n_ci[0], b.var_over_n_ci[1]
        ),
    )
}

fn gaussian_limit(report: &SummaryReport, label: &str) -> (bool, String) {
    let ks = |n: usize| report.per_n.iter().find(|s| s.n == n).map(|s| s.counts[label].ks);
    let (Some(k50), Some(k400)) = (ks(50), ks(400)) else {
        return (false, "missing n".into());
    };
    (k400 <= 0.08 && k400 < k50, format!("KS n=400 {k400:.4}, n=50 {k50:.4}"))
}

fn c6(report: &SummaryReport) -> Result<Outcome> {
    let (pass, detail) = stabilization(report, "f");
    outcome(pass, detail)
}

fn c7(report: &SummaryReport) -> Result<Outcome> {
    let (pass, detail) = gaussian_limit(report, "f");
    outcome(pass, detail)
}

fn c8(report: &SummaryReport) -> Result<Outcome> {
    let c = |n: usize| report.per_n.iter().find(|s| s.n == n).and_then(|s| s.contiguity);
    let (Some(a), Some(b)) = (c(50), c(400)) else {
        return outcome(false, "missing contiguity".into());
    };
    outcome(b < a && b <= 0.1, format!("E|N_f − N_X|/√n: n=50 {a:.4}, n=400 {b:.4}"))
}

fn c9(report: &SummaryReport) -> Result<Outcome> {
    let Some(slope) = report.sup_eps_slope else {
        return outcome(false, "no sup_eps data".into());
    };
    let meds: Vec<String> = report
        .per_n
        .iter()
        .filter_map(|s| s.sup_eps.as_ref().map(|r| format!("{:.3}", r.median_scaled)))
        .collect();
    outcome(slope.abs() <= 0.3, format!("slope {slope:.3}, medians [{}]", meds.join(", ")))
}

fn c10_covariance(basis: &BasisPair) -> Result<Outcome> {
    let n = 400;
    let m = 5000;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 0xc0f);
    let pairs: Vec<(f64, f64)> = (0..20).map(|_| (rng.random::<f64>() * TWO_PI, rng.random::<f64>() * TWO_PI)).collect();
    let checks = warped_covariance_check(basis.map(), n, &pairs, m, SEED + 1)?;
    let tol = 4.0 / (m as f64).sqrt();
    let worst_cov = max(&checks.iter().map(|c| (c.empirical - c.exact).abs()).collect::<Vec<_>>());

    let xs: Vec<f64> = pairs.iter().take(5).map(|p| p.0).collect();
    let snaps: Vec<BasisSnapshot> = xs
        .iter()
        .map(|&x| BasisSnapshot::at(basis, n, basis.map().omega(x)))
        .collect::<Result<_>>()?;
    let mut sq = vec![0.0; xs.len()];
    for r in 0..m as u64 {
        let d = sample_coefficients(SEED + 2, n, r)?;
        for (s, snap) in sq.iter_mut().zip(&snaps) {
            let v = snap.combine(&d).0;
            *s += v * v / n as f64;
        }
    }
    let worst_var = max(&sq.iter().map(|s| (s / m as f64 - 1.0).abs()).collect::<Vec<_>>());
    outcome(
        worst_cov <= tol && worst_var <= 0.05,
        format!("max cov error {worst_cov:.4} (tol {tol:.4}), max |var f_n − 1| {worst_var:.4}"),
    )
}

fn c11_gaps(basis: &BasisPair) -> Result<Outcome> {
    let x_grid: Vec<f64> = (0..64).map(|i| (i as f64 + 0.5) * TWO_PI / 64.0).collect();
    let mut alpha = Vec::new();
    let mut delta = Vec::new();
    let mut beta = Vec::new();
    for n in N_LIST {
        let t = gap_diagnostics(basis, n, &x_grid, 1.0, GapSource::Empirical, 2000, SEED + 3)?;
        alpha.push(t.sup_alpha);
        delta.push(t.sup_n_delta);
        beta.push(t.sup_beta_scaled);
    }
    let bounded = |v: &[f64]| max(v) <= 3.0 * median(v);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ");
    outcome(
        bounded(&alpha) && bounded(&delta) && bounded(&beta),
        format!("sup α [{}], sup nΔ [{}], sup β·n/ln n [{}]", fmt(&alpha), fmt(&delta), fmt(&beta)),
    )
}

fn c12(report: &SummaryReport) -> Result<Outcome> {
    let (stab, d6) = stabilization(report, "pert");
    let (gauss, d7) = gaussian_limit(report, "pert");
    let s = &report.per_n.iter().find(|s| s.n == 400).expect("n = 400").counts["pert"];
    let nf = 400.0f64;
    let oracle = 2.0 * ((nf + 1.0) * (2.0 * nf + 1.0) / 6.0).sqrt();
    let z = (s.mean - oracle) / s.se_mean;
    outcome(
        stab && gauss && z.abs() <= 3.0,
        format!("{d6}; {d7}; mean {:.2} vs {oracle:.2} ({z:+.2} SE)", s.mean),
    )
}

fn c13_change_of_variables(basis: &BasisPair) -> Result<Outcome> {
    let n = 100;
    let map = basis.map().clone();
    let opts = CountOptions { refine: false, ..CountOptions::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 0x13);
    let mut agree = 0;
    let mut first_failure = String::new();
    for r in 0..500u64 {
        let draw = Arc::new(sample_coefficients(SEED + 4, n, r)?);
        let t_end = rng.random::<f64>() * TWO_PI;
        let x0 = RandomProcess::warped_raw(draw, map.clone());
        let view = x0.liouville()?;
        let xs = |x: f64| x0.eval(x);
        match count_zeros_changed_variable(&slzeros::zeros::FromFn(xs), &view, t_end, map.omega(t_end), n, &opts) {
            Ok(_) => agree += 1,
            Err(e) if first_failure.is_empty() => first_failure = format!(", first failure: {e}"),
            Err(_) => {}
        }
    }
    outcome(agree == 500, format!("{agree}/500 trials agree{first_failure}"))
}

fn c14_determinism() -> Result<Outcome> {
    let dir = tempfile::tempdir()?;
    let config = ExperimentConfig {
        n_list: vec![20, 40],
        replicates: 150,
        master_seed: SEED,
        ..ExperimentConfig::default()
    };
    let experiment = Experiment::prepare(config)?;
    let mut files = Vec::new();
    for threads in ["1", "3", "1"] {
        std::env::set_var(THREADS_ENV, threads);
        let path = dir.path().join(format!("records_{}.csv", files.len()));
        experiment.run(Some(&path))?;
        files.push(std::fs::read(&path)?);
    }
    std::env::remove_var(THREADS_ENV);
    // the in-memory records must serialize to the same bytes as the stream
    let copy = dir.path().join("copy.csv");
    let records: Vec<ReplicateRecord> = experiment.run(None)?;
    write_records(&copy, &records)?;
    files.push(std::fs::read(&copy)?);
    let same = files.windows(2).all(|w| w[0] == w[1]);
    outcome(same, format!("{} files of {} bytes, identical: {same}", files.len(), files[0].len()))
}

fn main() {
    let total = Instant::now();
    let mut failures = 0;
    let mut report = |id: u32, name: &str, r: Result<Outcome>| {
        let (pass, detail) = match r {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failures += 1;
        }
        println!("criterion {id:>2} {} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    };

    report(1, "unit-weight eigenvalues", c1_unit_eigen());

    let start = Instant::now();
    let sine2 = builtin_weights("sine2").and_then(|w| solve_basis_pair(&w, 400, &SolverOptions::default()));
    let solve = secs(start.elapsed());
    let basis = match sine2 {
        Ok(b) => Arc::new(b),
        Err(e) => {
            println!("sine2 eigenbasis failed: {e}");
            std::process::exit(1);
        }
    };
    let rows: Vec<(BoundaryCondition, Vec<DeviationRow>)> = [&basis.cos_family, &basis.sin_family]
        .iter()
        .map(|b| (b.bc(), asymptotic_deviation(b).into_iter().filter(|r| r.k <= 200).collect()))
        .collect();
    report(2, "eigenvalue asymptotics", c2_eigen_asymptotics(&rows, solve));
    report(3, "eigenfunction asymptotics", c3_eigenfunction_asymptotics(&rows));
    report(4, "Kac-Rice mean for X_n", c4_kac_rice());
    report(5, "unit-weight coupling", c5_degenerate_coupling());

    let config = ExperimentConfig {
        n_list: N_LIST.to_vec(),
        replicates: 2000,
        master_seed: SEED,
        k_max: Some(400),
        ..ExperimentConfig::default()
    };
    let summary = Experiment::prepare_with(config, Some(basis.clone()))
        .and_then(|e| e.run(None))
        .and_then(|r| summarize(&r));
    match &summary {
        Ok(s) => {
            report(6, "variance stabilization", c6(s));
            report(7, "Gaussian limit", c7(s));
            report(8, "L1 contiguity", c8(s));
            report(9, "sup-norm scale", c9(s));
        }
        Err(e) => {
            for (id, name) in [(6, "variance stabilization"), (7, "Gaussian limit"), (8, "L1 contiguity"), (9, "sup-norm scale")] {
                report(id, name, outcome(false, format!("error: {e}")));
            }
        }
    }
    report(10, "covariance kernels", c10_covariance(&basis));
    report(11, "gap diagnostics", c11_gaps(&basis));
    match &summary {
        Ok(s) => report(12, "perturbed robustness", c12(s)),
        Err(e) => report(12, "perturbed robustness", outcome(false, format!("error: {e}"))),
    }
    report(13, "change of variables", c13_change_of_variables(&basis));
    report(14, "determinism", c14_determinism());

    println!("acceptance: {failures} failing, {:.0} s", secs(total.elapsed()));
    if failures > 0 {
        std::process::exit(1);
    }
}
