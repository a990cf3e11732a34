//! Covariance kernels and the Kac-Rice first moment.
//!
//! `r_n(t) = (1/n) Σ_{k≤n} cos(kt)` is the covariance of the stationary
//! polynomial; every second-order quantity of `X_n`, `T_n` and `C_n` is a
//! composition of `r_n` and its derivatives.

use std::cell::Cell;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::eigen::BasisPair;
use crate::ensembles::{BasisSnapshot, RandomProcess};
use crate::error::{Error, Result};
use crate::quad::{gauss7, integrate_adaptive};
use crate::weight::{LiouvilleMap, TWO_PI};

const TAYLOR_SWITCH: f64 = 1e-6;

/// `(1/n) Σ k²`
pub fn power_sum2(n: usize) -> f64 {
    let n = n as f64;
    (n + 1.0) * (2.0 * n + 1.0) / 6.0
}

/// `(1/n) Σ k⁴`
pub fn power_sum4(n: usize) -> f64 {
    let n = n as f64;
    (n + 1.0) * (2.0 * n + 1.0) * (3.0 * n * n + 3.0 * n - 1.0) / 30.0
}

/// `r_n(t)`, `r′_n(t)`, `r″_n(t)` by the Dirichlet closed form.
///
/// Near the diagonal the quotient form loses digits in the derivatives, so
/// `|t| < 1e-6` (mod 2π) uses the fourth-order Taylor polynomial and
/// `n|t| < 1` falls back to the finite sum.
pub fn r_n_closed(n: usize, t: f64) -> (f64, f64, f64) {
    assert!(n >= 1, "r_n needs n >= 1");
    let t = reduce(t);
    if t.abs() < TAYLOR_SWITCH {
        let (s2, s4) = (power_sum2(n), power_sum4(n));
        let t2 = t * t;
        return (
            1.0 - s2 * t2 / 2.0 + s4 * t2 * t2 / 24.0,
            -s2 * t + s4 * t2 * t / 6.0,
            -s2 + s4 * t2 / 2.0,
        );
    }
    if (n as f64) * t.abs() < 1.0 {
        return r_n_direct(n, t);
    }
    // Σ cos kt = u/v − 1/2 with u = sin((n+½)t), v = 2 sin(t/2)
    let m = n as f64 + 0.5;
    let (u, um) = (m * t).sin_cos();
    let (sh, ch) = (0.5 * t).sin_cos();
    let (u1, u2) = (m * um, -m * m * u);
    let (v, v1, v2) = (2.0 * sh, ch, -0.5 * sh);
    let w = u1 * v - u * v1;
    let d0 = u / v - 0.5;
    let d1 = w / (v * v);
    let d2 = (u2 * v - u * v2) / (v * v) - 2.0 * v1 * w / (v * v * v);
    let nf = n as f64;
    (d0 / nf, d1 / nf, d2 / nf)
}

/// `r_n` and derivatives by the finite sum.
pub fn r_n_direct(n: usize, t: f64) -> (f64, f64, f64) {
    let mut r = (0.0, 0.0, 0.0);
    for k in 1..=n {
        let kf = k as f64;
        let (s, c) = (kf * t).sin_cos();
        r.0 += c;
        r.1 -= kf * s;
        r.2 -= kf * kf * c;
    }
    let nf = n as f64;
    (r.0 / nf, r.1 / nf, r.2 / nf)
}

// into (−π, π]
fn reduce(t: f64) -> f64 {
    let r = t.rem_euclid(TWO_PI);
    if r > std::f64::consts::PI {
        r - TWO_PI
    } else {
        r
    }
}

/// `r_n` with its order fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StationaryKernel {
    pub n: usize,
}

impl StationaryKernel {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Precondition("r_n needs n >= 1".into()));
        }
        Ok(StationaryKernel { n })
    }

    pub fn eval(&self, t: f64) -> f64 {
        r_n_closed(self.n, t).0
    }

    pub fn d1(&self, t: f64) -> f64 {
        r_n_closed(self.n, t).1
    }

    pub fn d2(&self, t: f64) -> f64 {
        r_n_closed(self.n, t).2
    }
}

/// `R_n(x, y) = E X_n(x) X_n(y) = r_n((Ω(x) − Ω(y))/2)`.
pub fn covariance_x(n: usize, map: &LiouvilleMap, x: f64, y: f64) -> Result<f64> {
    let (ox, oy) = (map.omega_cumulative(x)?, map.omega_cumulative(y)?);
    Ok(r_n_closed(n, 0.5 * (ox - oy)).0)
}

type Field = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Pointwise second-order structure of a centred process `Z`:
/// `var Z(x)`, `var Z′(x)` and `cov(Z(x), Z′(x))`.
#[derive(Clone)]
pub struct ProcessSecondOrder {
    var0: Field,
    var1: Field,
    cov01: Field,
    /// Points where the fields are only piecewise smooth (interpolation nodes).
    breakpoints: Option<Arc<Vec<f64>>>,
}

impl fmt::Debug for ProcessSecondOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ProcessSecondOrder {{ at 0: {:?} }}", self.at(0.0))
    }
}

impl ProcessSecondOrder {
    pub fn new<A, B, C>(var0: A, var1: B, cov01: C) -> Self
    where
        A: Fn(f64) -> f64 + Send + Sync + 'static,
        B: Fn(f64) -> f64 + Send + Sync + 'static,
        C: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        ProcessSecondOrder {
            var0: Arc::new(var0),
            var1: Arc::new(var1),
            cov01: Arc::new(cov01),
            breakpoints: None,
        }
    }

    /// Declares the nodes between which the fields are smooth; Kac-Rice then
    /// integrates cell by cell.
    pub fn with_breakpoints(mut self, mut points: Vec<f64>) -> Self {
        points.sort_by(f64::total_cmp);
        points.dedup();
        self.breakpoints = Some(Arc::new(points));
        self
    }

    pub fn var0(&self, x: f64) -> f64 {
        (self.var0)(x)
    }

    pub fn var1(&self, x: f64) -> f64 {
        (self.var1)(x)
    }

    pub fn cov01(&self, x: f64) -> f64 {
        (self.cov01)(x)
    }

    /// `(var0, var1, cov01)` at `x`.
    pub fn at(&self, x: f64) -> (f64, f64, f64) {
        (self.var0(x), self.var1(x), self.cov01(x))
    }
}

/// Exact second-order structure of `X_n`.
pub fn second_order_exact(n: usize, map: Arc<LiouvilleMap>) -> ProcessSecondOrder {
    let s2 = power_sum2(n);
    ProcessSecondOrder::new(
        |_| 1.0,
        move |x| {
            let o = map.weight().eval(x);
            o * o * s2 / 4.0
        },
        |_| 0.0,
    )
}

/// `T_n`: `var T′_n = (n+1)(2n+1)/6`.
pub fn second_order_stationary(n: usize) -> ProcessSecondOrder {
    let s2 = power_sum2(n);
    ProcessSecondOrder::new(|_| 1.0, move |_| s2, |_| 0.0)
}

/// `C_n` through `r_n(2x)`: `var C_n(x) = (1 + r_n(2x))/2`.
pub fn second_order_classical(n: usize) -> ProcessSecondOrder {
    let s2 = power_sum2(n);
    ProcessSecondOrder::new(
        move |x| 0.5 * (1.0 + r_n_closed(n, 2.0 * x).0),
        move |x| 0.5 * (s2 + r_n_closed(n, 2.0 * x).2),
        move |x| 0.5 * r_n_closed(n, 2.0 * x).1,
    )
}

/// Second-order structure of `f_n = √ω F_n` from the eigenbasis sums.
pub fn second_order_from_basis(n: usize, basis: Arc<BasisPair>) -> Result<ProcessSecondOrder> {
    if basis.len() < n || n == 0 {
        return Err(Error::Precondition(format!(
            "eigenbasis has {} pairs per family but n = {n}",
            basis.len()
        )));
    }
    let (points, h) = (basis.map().points(), basis.map().spacing());
    let inverse = basis.map().inverse_nodes().to_vec();
    let sums = move |x: f64| -> (f64, f64, f64) {
        let map = basis.map();
        let o = map.weight().eval(x);
        let snap = BasisSnapshot::at(&basis, n, map.omega(x)).expect("length checked");
        let (mut s0, mut s1, mut s01) = (0.0, 0.0, 0.0);
        for k in 0..n {
            let (u, du, v, dv) = (
                snap.cos_values[k],
                snap.cos_slopes[k],
                snap.sin_values[k],
                snap.sin_slopes[k],
            );
            s0 += u * u + v * v;
            s1 += du * du + dv * dv;
            s01 += u * du + v * dv;
        }
        let nf = n as f64;
        (s0 / nf, o * o * s1 / nf, o * s01 / nf)
    };
    let (a, b, c) = (sums.clone(), sums.clone(), sums);
    let mut nodes: Vec<f64> = (0..points).map(|i| i as f64 * h).collect();
    nodes.extend_from_slice(&inverse);
    Ok(ProcessSecondOrder::new(move |x| a(x).0, move |x| b(x).1, move |x| c(x).2).with_breakpoints(nodes))
}

/// Monte Carlo estimate at one point, with standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SecondOrderEstimate {
    pub x: f64,
    pub replicates: usize,
    pub var0: f64,
    pub var1: f64,
    pub cov01: f64,
    pub se_var0: f64,
    pub se_var1: f64,
    pub se_cov01: f64,
}

/// Estimates `var Z(x)`, `var Z′(x)` and `cov(Z(x), Z′(x))` from `m` draws
/// of a centred process built by `builder(replicate_id)`. Moments are taken
/// about the known mean zero.
pub fn second_order_empirical<B>(builder: B, m: usize, x: f64) -> Result<SecondOrderEstimate>
where
    B: Fn(u64) -> Result<RandomProcess>,
{
    if m < 2 {
        return Err(Error::Precondition("at least two replicates are needed".into()));
    }
    let mut z0 = Vec::with_capacity(m);
    let mut z1 = Vec::with_capacity(m);
    for r in 0..m {
        let (v, d) = builder(r as u64)?.eval_with_derivative(x);
        z0.push(v);
        z1.push(d);
    }
    let (var0, se_var0) = mean_and_se(z0.iter().map(|v| v * v));
    let (var1, se_var1) = mean_and_se(z1.iter().map(|d| d * d));
    let (cov01, se_cov01) = mean_and_se(z0.iter().zip(&z1).map(|(v, d)| v * d));
    Ok(SecondOrderEstimate {
        x,
        replicates: m,
        var0,
        var1,
        cov01,
        se_var0,
        se_var1,
        se_cov01,
    })
}

/// Sample mean and its standard error.
pub fn mean_and_se<I: IntoIterator<Item = f64>>(values: I) -> (f64, f64) {
    let v: Vec<f64> = values.into_iter().collect();
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Expected number of zeros on `[a, b]`:
/// `(1/π) ∫ √(var0·var1 − cov01²)/var0 dx`.
pub fn kac_rice_expected(so: &ProcessSecondOrder, (a, b): (f64, f64)) -> Result<f64> {
    const PROBE: usize = 1024;
    for i in 0..=PROBE {
        let x = a + (b - a) * i as f64 / PROBE as f64;
        check_var0(so.var0(x), x)?;
    }
    let bad = Cell::new(None);
    let integrand = |x: f64| {
        let (v0, v1, c) = so.at(x);
        if !(v0 > 0.0) {
            bad.set(Some(x));
            return 0.0;
        }
        (v0 * v1 - c * c).max(0.0).sqrt() / v0
    };
    if let Some(bp) = &so.breakpoints {
        let mut edges = vec![a];
        edges.extend(bp.iter().copied().filter(|&x| x > a && x < b));
        edges.push(b);
        let value: f64 = edges.windows(2).map(|w| gauss7(&integrand, w[0], w[1])).sum();
        if let Some(x) = bad.get() {
            check_var0(so.var0(x), x)?;
        }
        return Ok(value / std::f64::consts::PI);
    }
    let value = integrate_adaptive(
        integrand,
        a,
        b,
        1e-10,
        0.0,
    )?;
    if let Some(x) = bad.get() {
        check_var0(so.var0(x), x)?;
    }
    Ok(value / std::f64::consts::PI)
}

fn check_var0(v0: f64, x: f64) -> Result<()> {
    if !(v0 > 0.0) {
        return Err(Error::Domain(format!("process variance {v0:e} is not positive at x = {x}")));
    }
    Ok(())
}

/// Closed form for the Kac-Rice count of `X_n` on `[0, 2π]`: `√((n+1)(2n+1)/6)`.
pub fn kac_rice_warped_closed(n: usize) -> f64 {
    power_sum2(n).sqrt()
}

/// Closed form for `T_n` on `[0, 2π]`: `2√((n+1)(2n+1)/6)`.
pub fn kac_rice_stationary_closed(n: usize) -> f64 {
    2.0 * power_sum2(n).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::{solve_basis_pair, SolverOptions};
    use crate::rng::sample_coefficients;
    use crate::weight::{builtin_weights, WeightFunction};
    use std::f64::consts::PI;

    #[test]
    fn origin_values() {
        for n in [1, 2, 7, 50, 400] {
            let (r, r1, r2) = r_n_closed(n, 0.0);
            assert_eq!(r, 1.0);
            assert_eq!(r1, 0.0);
            assert!((r2 + (n as f64 + 1.0) * (2.0 * n as f64 + 1.0) / 6.0).abs() < 1e-12 * r2.abs());
        }
    }

    #[test]
    fn small_orders() {
        assert!(r_n_closed(2, PI).0.abs() < 1e-15);
        for t in [0.3, 1.0, 2.5, 6.0] {
            let (r, r1, r2) = r_n_closed(1, t);
            assert!((r - t.cos()).abs() < 1e-14);
            assert!((r1 + t.sin()).abs() < 1e-14);
            assert!((r2 + t.cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn closed_form_matches_direct_sum() {
        let mut worst: f64 = 0.0;
        for n in [1usize, 3, 50, 400] {
            let s2 = power_sum2(n);
            let pts = 10_000;
            for i in 0..pts {
                // dense near 0 and 2π, plus a uniform sweep
                let t = match i % 3 {
                    0 => 1e-9 * 1.01f64.powi((i / 3) % 2000),
                    1 => TWO_PI - 1e-9 * 1.01f64.powi((i / 3) % 2000),
                    _ => TWO_PI * i as f64 / pts as f64,
                };
                let c = r_n_closed(n, t);
                let d = r_n_direct(n, t);
                worst = worst.max((c.0 - d.0).abs());
                assert!((c.0 - d.0).abs() < 1e-10, "n={n} t={t}");
                assert!((c.1 - d.1).abs() < 1e-10 * s2.sqrt(), "n={n} t={t} r'");
                assert!((c.2 - d.2).abs() < 1e-10 * s2, "n={n} t={t} r''");
            }
        }
        assert!(worst < 1e-10);
    }

    #[test]
    fn warped_covariance_on_the_diagonal() {
        let map = LiouvilleMap::new(&builtin_weights("sine2").unwrap(), 4096).unwrap();
        assert_eq!(covariance_x(9, &map, 1.3, 1.3).unwrap(), 1.0);
        let unit = LiouvilleMap::new(&WeightFunction::unit(), 4096).unwrap();
        let v = covariance_x(9, &unit, 2.0, 0.5).unwrap();
        assert!((v - r_n_closed(9, 0.75).0).abs() < 1e-12);
        assert!(covariance_x(9, &unit, 7.0, 0.5).is_err());
    }

    #[test]
    fn exact_second_order_of_warped() {
        let unit = Arc::new(LiouvilleMap::new(&WeightFunction::unit(), 1024).unwrap());
        let so = second_order_exact(1, unit);
        assert_eq!(so.at(1.0), (1.0, 0.25, 0.0));
        let map = Arc::new(LiouvilleMap::new(&builtin_weights("sine2").unwrap(), 1024).unwrap());
        let so = second_order_exact(20, map.clone());
        for x in [0.0, 1.0, 4.0] {
            let o = map.weight().eval(x);
            assert!((so.var1(x) / (o * o) - 21.0 * 41.0 / 24.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kac_rice_oracles() {
        let unit = Arc::new(LiouvilleMap::new(&WeightFunction::unit(), 1024).unwrap());
        let x1 = kac_rice_expected(&second_order_exact(1, unit), (0.0, TWO_PI)).unwrap();
        assert!((x1 - 1.0).abs() < 1e-10);
        let t1 = kac_rice_expected(&second_order_stationary(1), (0.0, TWO_PI)).unwrap();
        assert!((t1 - 2.0).abs() < 1e-10);
        let map = Arc::new(LiouvilleMap::new(&builtin_weights("expcos").unwrap(), 4096).unwrap());
        for n in [1, 50, 400] {
            let v = kac_rice_expected(&second_order_exact(n, map.clone()), (0.0, TWO_PI)).unwrap();
            assert!((v / kac_rice_warped_closed(n) - 1.0).abs() < 1e-8, "n={n}");
            let t = kac_rice_expected(&second_order_stationary(n), (0.0, TWO_PI)).unwrap();
            assert!((t / kac_rice_stationary_closed(n) - 1.0).abs() < 1e-8);
        }
        assert!((kac_rice_warped_closed(50) - 29.3001706).abs() < 1e-6);
    }

    #[test]
    fn vanishing_variance_is_a_domain_error() {
        // C_1 = a cos x has zero variance at π/2
        let err = kac_rice_expected(&second_order_classical(1), (0.0, TWO_PI)).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn classical_variance_identity() {
        for n in [2usize, 5, 30] {
            let so = second_order_classical(n);
            for i in 0..40 {
                let x = 0.157 * i as f64 + 0.01;
                let nf = n as f64;
                let direct: f64 = (1..=n).map(|k| (k as f64 * x).cos().powi(2)).sum::<f64>() / nf;
                let d1: f64 = (1..=n).map(|k| (k as f64).powi(2) * (k as f64 * x).sin().powi(2)).sum::<f64>() / nf;
                let c: f64 = (1..=n)
                    .map(|k| -(k as f64) * (k as f64 * x).cos() * (k as f64 * x).sin())
                    .sum::<f64>()
                    / nf;
                assert!((so.var0(x) - direct).abs() < 1e-12);
                assert!((so.var1(x) - d1).abs() < 1e-10 * nf * nf);
                assert!((so.cov01(x) - c).abs() < 1e-11 * nf);
            }
        }
    }

    #[test]
    fn basis_second_order_for_unit_weight_is_exact() {
        let basis = Arc::new(
            solve_basis_pair(
                &WeightFunction::unit(),
                12,
                &SolverOptions {
                    grid_points: 2048,
                    ..Default::default()
                },
            )
            .unwrap(),
        );
        let so = second_order_from_basis(12, basis.clone()).unwrap();
        let exact = second_order_exact(12, basis.map().clone());
        for x in [0.0, 0.7, 3.0, TWO_PI] {
            let (a, b, c) = so.at(x);
            let (ea, eb, ec) = exact.at(x);
            assert!((a - ea).abs() < 1e-8 && (b - eb).abs() < 1e-6 && (c - ec).abs() < 1e-6, "{x}: {a} {b} {c}");
        }
    }

    #[test]
    fn kac_rice_from_basis_tracks_the_warped_count() {
        let basis = Arc::new(
            solve_basis_pair(
                &builtin_weights("sine2").unwrap(),
                60,
                &SolverOptions {
                    grid_points: 2048,
                    ..Default::default()
                },
            )
            .unwrap(),
        );
        let e = kac_rice_expected(&second_order_from_basis(60, basis).unwrap(), (0.0, TWO_PI)).unwrap();
        assert!((e / kac_rice_warped_closed(60) - 1.0).abs() < 0.01, "{e}");
    }

    #[test]
    fn empirical_second_order_for_unit_weight() {
        let basis = Arc::new(
            solve_basis_pair(
                &WeightFunction::unit(),
                6,
                &SolverOptions {
                    grid_points: 1024,
                    ..Default::default()
                },
            )
            .unwrap(),
        );
        let b = basis.clone();
        let est = second_order_empirical(
            |r| {
                RandomProcess::sl_direct(
                    crate::ensembles::ProcessKind::SlSumScaled,
                    Arc::new(sample_coefficients(5, 6, r)?),
                    b.clone(),
                )
            },
            2000,
            1.1,
        )
        .unwrap();
        let exact = second_order_exact(6, basis.map().clone());
        assert!((est.var0 - 1.0).abs() < 4.0 * est.se_var0);
        assert!((est.var1 - exact.var1(1.1)).abs() < 4.0 * est.se_var1);
        assert!(est.cov01.abs() < 4.0 * est.se_cov01);
    }

    proptest::proptest! {
        #[test]
        fn kernel_bounded_and_even(n in 1usize..500, t in -20.0f64..20.0) {
            let (r, r1, _) = r_n_closed(n, t);
            let (rm, r1m, _) = r_n_closed(n, -t);
            proptest::prop_assert!(r.abs() <= 1.0 + 1e-12);
            proptest::prop_assert!((r - rm).abs() < 1e-12);
            proptest::prop_assert!((r1 + r1m).abs() < 1e-9 * n as f64);
        }

        #[test]
        fn cauchy_schwarz_holds(n in 2usize..200, x in 0.0..TWO_PI) {
            for so in [second_order_classical(n), second_order_stationary(n)] {
                let (v0, v1, c) = so.at(x);
                proptest::prop_assert!(c * c <= v0 * v1 * (1.0 + 1e-12) + 1e-12);
            }
        }
    }
}
