//! Random Gaussian processes built from one shared coefficient draw.
//!
//! | kind            | definition                                                        |
//! |-----------------|-------------------------------------------------------------------|
//! | `SlSum`         | `F_n = n^{-1/2} Σ a_k u_k(x) + b_k v_k(x)` (eigenfunctions)       |
//! | `SlSumScaled`   | `f_n = √ω F_n`                                                    |
//! | `Warped`        | `X_n = n^{-1/2} Σ a_k cos(kΩ(x)/2) + b_k sin(kΩ(x)/2)`            |
//! | `WarpedRaw`     | `X°_n = ω^{-1/2} X_n`                                             |
//! | `Stationary`    | `T_n = n^{-1/2} Σ a_k cos(kx) + b_k sin(kx)`                      |
//! | `Classical`     | `C_n = n^{-1/2} Σ a_k cos(kx)`                                    |
//! | `Perturbed`     | `n^{-1/2} Σ a_k (cos kx + ε_k(x)) + b_k (sin kx + η_k(x))`        |
//!
//! The eigenfunction sums are stored as one combined sample vector on the
//! uniform Liouville grid, so a point evaluation costs one Hermite lookup.

use std::cell::RefCell;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::eigen::BasisPair;
use crate::error::{Error, Result};
use crate::interp::{hermite_dweights, hermite_eval, hermite_weights, locate};
use crate::rng::CoefficientDraw;
use crate::weight::{LiouvilleMap, TWO_PI};
use crate::zeros::Evaluable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProcessKind {
    #[serde(rename = "F")]
    SlSum,
    #[serde(rename = "f")]
    SlSumScaled,
    #[serde(rename = "X")]
    Warped,
    #[serde(rename = "X0")]
    WarpedRaw,
    #[serde(rename = "T")]
    Stationary,
    #[serde(rename = "C")]
    Classical,
    #[serde(rename = "pert")]
    Perturbed,
}

impl ProcessKind {
    pub fn label(self) -> &'static str {
        match self {
            ProcessKind::SlSum => "F",
            ProcessKind::SlSumScaled => "f",
            ProcessKind::Warped => "X",
            ProcessKind::WarpedRaw => "X0",
            ProcessKind::Stationary => "T",
            ProcessKind::Classical => "C",
            ProcessKind::Perturbed => "pert",
        }
    }

    /// Frequency scale used to size zero-counting grids: the eigen and warped
    /// sums oscillate at half-integer frequencies in the Liouville variable.
    pub fn n_hint(self, n: usize) -> usize {
        match self {
            ProcessKind::Stationary | ProcessKind::Classical | ProcessKind::Perturbed => 2 * n,
            _ => n,
        }
    }
}

impl fmt::Display for ProcessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ProcessKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "F" => ProcessKind::SlSum,
            "f" => ProcessKind::SlSumScaled,
            "X" => ProcessKind::Warped,
            "X0" => ProcessKind::WarpedRaw,
            "T" => ProcessKind::Stationary,
            "C" => ProcessKind::Classical,
            "pert" => ProcessKind::Perturbed,
            other => {
                return Err(Error::Config(format!(
                    "unknown process kind `{other}` (expected one of F, f, X, X0, T, C, pert)"
                )))
            }
        })
    }
}

type PerturbFn = Arc<dyn Fn(usize, f64) -> (f64, f64) + Send + Sync>;

#[derive(Clone)]
enum Shape {
    /// `ε_k = s·sin((k+1)x)/k`, `η_k = s·cos((k+1)x)/k`.
    Harmonic { scale: f64 },
    Custom { eps: PerturbFn, eta: PerturbFn },
}

/// Perturbations `ε_k`, `η_k` with `|ε_k| ≤ c0/k` and `|ε′_k| ≤ c1`.
#[derive(Clone)]
pub struct PerturbationFamily {
    shape: Shape,
    c0: f64,
    c1: f64,
}

impl fmt::Debug for PerturbationFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.shape {
            Shape::Harmonic { scale } => write!(f, "Harmonic(scale={scale}, c0={}, c1={})", self.c0, self.c1),
            Shape::Custom { .. } => write!(f, "Custom(c0={}, c1={})", self.c0, self.c1),
        }
    }
}

pub const DEFAULT_PERTURB_SCALE: f64 = 0.5;
pub const DEFAULT_PERTURB_C0: f64 = 0.5;
pub const DEFAULT_PERTURB_C1: f64 = 1.0;

impl PerturbationFamily {
    /// `sin((k+1)x)/(2k)` and `cos((k+1)x)/(2k)`.
    pub fn default_family() -> Self {
        PerturbationFamily {
            shape: Shape::Harmonic {
                scale: DEFAULT_PERTURB_SCALE,
            },
            c0: DEFAULT_PERTURB_C0,
            c1: DEFAULT_PERTURB_C1,
        }
    }

    pub fn zero() -> Self {
        PerturbationFamily {
            shape: Shape::Harmonic { scale: 0.0 },
            c0: 0.0,
            c1: 0.0,
        }
    }

    pub fn harmonic(scale: f64, c0: f64, c1: f64, k_max: usize) -> Result<Self> {
        let p = PerturbationFamily {
            shape: Shape::Harmonic { scale },
            c0,
            c1,
        };
        p.validate(k_max)?;
        Ok(p)
    }

    /// Arbitrary families; closures return `(value, derivative)`.
    pub fn custom<E, H>(eps: E, eta: H, c0: f64, c1: f64, k_max: usize) -> Result<Self>
    where
        E: Fn(usize, f64) -> (f64, f64) + Send + Sync + 'static,
        H: Fn(usize, f64) -> (f64, f64) + Send + Sync + 'static,
    {
        let p = PerturbationFamily {
            shape: Shape::Custom {
                eps: Arc::new(eps),
                eta: Arc::new(eta),
            },
            c0,
            c1,
        };
        p.validate(k_max)?;
        Ok(p)
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.c0, self.c1)
    }

    /// `(ε_k(x), ε′_k(x))`
    pub fn eps(&self, k: usize, x: f64) -> (f64, f64) {
        match &self.shape {
            Shape::Harmonic { scale } => {
                let m = (k + 1) as f64;
                let (s, c) = (m * x).sin_cos();
                let f = scale / k as f64;
                (f * s, f * m * c)
            }
            Shape::Custom { eps, .. } => eps(k, x),
        }
    }

    /// `(η_k(x), η′_k(x))`
    pub fn eta(&self, k: usize, x: f64) -> (f64, f64) {
        match &self.shape {
            Shape::Harmonic { scale } => {
                let m = (k + 1) as f64;
                let (s, c) = (m * x).sin_cos();
                let f = scale / k as f64;
                (f * c, -f * m * s)
            }
            Shape::Custom { eta, .. } => eta(k, x),
        }
    }

    /// Checks the bounds on a 2048-point grid for `k ≤ k_max`.
    pub fn validate(&self, k_max: usize) -> Result<()> {
        const SAMPLES: usize = 2048;
        let slack = |c: f64| c * (1.0 + 1e-12) + 1e-15;
        for k in 1..=k_max {
            for i in 0..SAMPLES {
                let x = TWO_PI * i as f64 / (SAMPLES - 1) as f64;
                for (name, (v, d)) in [("eps", self.eps(k, x)), ("eta", self.eta(k, x))] {
                    if v.abs() * k as f64 > slack(self.c0) {
                        return Err(Error::Invariant(format!(
                            "perturbation bound violated: |{name}_{k}({x:.6})| = {:.6e} > c0/k = {:.6e}",
                            v.abs(),
                            self.c0 / k as f64
                        )));
                    }
                    if d.abs() > slack(self.c1) {
                        return Err(Error::Invariant(format!(
                            "perturbation bound violated: |{name}'_{k}({x:.6})| = {:.6e} > c1 = {:.6e}",
                            d.abs(),
                            self.c1
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Combined eigenfunction sum `G(y) = Σ a_k g^C_k(y) + b_k g^D_k(y)` on the
/// Liouville grid (values and `y`-derivatives, without the `n^{-1/2}`).
#[derive(Debug, Clone)]
pub struct CombinedSamples {
    pub values: Vec<f64>,
    pub slopes: Vec<f64>,
}

impl CombinedSamples {
    pub fn new(basis: &BasisPair, draw: &CoefficientDraw) -> Result<Self> {
        check_basis(basis, draw.n)?;
        let len = basis.map().points();
        let mut values = vec![0.0; len];
        let mut slopes = vec![0.0; len];
        for k in 1..=draw.n {
            let (a, b) = (draw.a[k - 1], draw.b[k - 1]);
            let u = basis.cos_family.pair(k);
            let v = basis.sin_family.pair(k);
            for i in 0..len {
                values[i] += a * u.values[i] + b * v.values[i];
                slopes[i] += a * u.slopes[i] + b * v.slopes[i];
            }
        }
        Ok(CombinedSamples { values, slopes })
    }

    /// Several draws at once; reads the basis once per block of draws.
    pub fn batch(basis: &BasisPair, draws: &[&CoefficientDraw]) -> Result<Vec<Self>> {
        let Some(first) = draws.first() else {
            return Ok(Vec::new());
        };
        let n = first.n;
        if draws.iter().any(|d| d.n != n) {
            return Err(Error::Precondition("batched draws must share n".into()));
        }
        check_basis(basis, n)?;
        let len = basis.map().points();
        let m = draws.len();
        // coefficient-major layout: coef[k][j]
        let ca: Vec<f64> = (0..n).flat_map(|k| draws.iter().map(move |d| d.a[k])).collect();
        let cb: Vec<f64> = (0..n).flat_map(|k| draws.iter().map(move |d| d.b[k])).collect();
        let mut values = vec![0.0; len * m];
        let mut slopes = vec![0.0; len * m];
        const BLOCK: usize = 256;
        for start in (0..len).step_by(BLOCK) {
            let end = (start + BLOCK).min(len);
            for k in 0..n {
                let u = basis.cos_family.pair(k + 1);
                let v = basis.sin_family.pair(k + 1);
                let a = &ca[k * m..(k + 1) * m];
                let b = &cb[k * m..(k + 1) * m];
                for i in start..end {
                    let (uv, us, vv, vs) = (u.values[i], u.slopes[i], v.values[i], v.slopes[i]);
                    let row = &mut values[i * m..(i + 1) * m];
                    for j in 0..m {
                        row[j] += a[j] * uv + b[j] * vv;
                    }
                    let row = &mut slopes[i * m..(i + 1) * m];
                    for j in 0..m {
                        row[j] += a[j] * us + b[j] * vs;
                    }
                }
            }
        }
        Ok((0..m)
            .map(|j| CombinedSamples {
                values: (0..len).map(|i| values[i * m + j]).collect(),
                slopes: (0..len).map(|i| slopes[i * m + j]).collect(),
            })
            .collect())
    }
}

/// Eigenfunction values `g^C_k(y)`, `g^D_k(y)` and their `y`-derivatives for
/// `k = 1..=n`, stored zero-based.
#[derive(Debug, Clone)]
pub struct BasisSnapshot {
    pub cos_values: Vec<f64>,
    pub cos_slopes: Vec<f64>,
    pub sin_values: Vec<f64>,
    pub sin_slopes: Vec<f64>,
}

impl BasisSnapshot {
    pub fn at(basis: &BasisPair, n: usize, y: f64) -> Result<Self> {
        check_basis(basis, n)?;
        let h = basis.map().spacing();
        let (i, t) = locate(y, 0.0, h, basis.map().points());
        let w = hermite_weights(t);
        let dw = hermite_dweights(t);
        let eval = |values: &[f64], slopes: &[f64]| {
            let (y0, y1, d0, d1) = (values[i], values[i + 1], slopes[i] * h, slopes[i + 1] * h);
            (
                w[0] * y0 + w[1] * d0 + w[2] * y1 + w[3] * d1,
                (dw[0] * y0 + dw[1] * d0 + dw[2] * y1 + dw[3] * d1) / h,
            )
        };
        let mut snap = BasisSnapshot {
            cos_values: Vec::with_capacity(n),
            cos_slopes: Vec::with_capacity(n),
            sin_values: Vec::with_capacity(n),
            sin_slopes: Vec::with_capacity(n),
        };
        for k in 1..=n {
            let u = basis.cos_family.pair(k);
            let v = basis.sin_family.pair(k);
            let (uv, ud) = eval(&u.values, &u.slopes);
            let (vv, vd) = eval(&v.values, &v.slopes);
            snap.cos_values.push(uv);
            snap.cos_slopes.push(ud);
            snap.sin_values.push(vv);
            snap.sin_slopes.push(vd);
        }
        Ok(snap)
    }

    /// `(G(y), G′(y))` for one draw.
    pub fn combine(&self, draw: &CoefficientDraw) -> (f64, f64) {
        let mut v = 0.0;
        let mut d = 0.0;
        for k in 0..self.cos_values.len() {
            v += draw.a[k] * self.cos_values[k] + draw.b[k] * self.sin_values[k];
            d += draw.a[k] * self.cos_slopes[k] + draw.b[k] * self.sin_slopes[k];
        }
        (v, d)
    }
}

fn check_basis(basis: &BasisPair, n: usize) -> Result<()> {
    if basis.len() < n {
        return Err(Error::Precondition(format!(
            "eigenbasis has {} pairs per family but n = {n}",
            basis.len()
        )));
    }
    Ok(())
}

#[derive(Clone)]
enum SlSource {
    Combined(Arc<CombinedSamples>),
    /// Pointwise sums over the basis: `O(n)` per evaluation, no setup cost.
    Direct(Arc<BasisPair>),
}

/// A Gaussian random function bound to one coefficient draw.
#[derive(Clone)]
pub struct RandomProcess {
    kind: ProcessKind,
    draw: Arc<CoefficientDraw>,
    map: Option<Arc<LiouvilleMap>>,
    sl: Option<SlSource>,
    perturbation: Option<Arc<PerturbationFamily>>,
    norm: f64,
}

impl fmt::Debug for RandomProcess {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RandomProcess")
            .field("kind", &self.kind)
            .field("n", &self.draw.n)
            .field("seed", &self.draw.seed)
            .finish()
    }
}

impl RandomProcess {
    fn bare(kind: ProcessKind, draw: Arc<CoefficientDraw>) -> Self {
        let norm = 1.0 / (draw.n as f64).sqrt();
        RandomProcess {
            kind,
            draw,
            map: None,
            sl: None,
            perturbation: None,
            norm,
        }
    }

    /// `F_n`
    pub fn sl_sum(draw: Arc<CoefficientDraw>, basis: &BasisPair) -> Result<Self> {
        let combined = Arc::new(CombinedSamples::new(basis, &draw)?);
        Ok(Self::from_combined(ProcessKind::SlSum, draw, basis.map().clone(), combined))
    }

    /// `f_n = √ω F_n`
    pub fn sl_sum_scaled(draw: Arc<CoefficientDraw>, basis: &BasisPair) -> Result<Self> {
        let combined = Arc::new(CombinedSamples::new(basis, &draw)?);
        Ok(Self::from_combined(ProcessKind::SlSumScaled, draw, basis.map().clone(), combined))
    }

    /// `F_n` or `f_n` from precomputed combined samples.
    pub fn from_combined(
        kind: ProcessKind,
        draw: Arc<CoefficientDraw>,
        map: Arc<LiouvilleMap>,
        combined: Arc<CombinedSamples>,
    ) -> Self {
        debug_assert!(matches!(kind, ProcessKind::SlSum | ProcessKind::SlSumScaled));
        let mut p = Self::bare(kind, draw);
        p.map = Some(map);
        p.sl = Some(SlSource::Combined(combined));
        p
    }

    /// `F_n` or `f_n` evaluated by direct summation over a shared basis; cheap
    /// to build, suited to evaluation at a few points.
    pub fn sl_direct(kind: ProcessKind, draw: Arc<CoefficientDraw>, basis: Arc<BasisPair>) -> Result<Self> {
        if !matches!(kind, ProcessKind::SlSum | ProcessKind::SlSumScaled) {
            return Err(Error::Precondition(format!("{kind} is not an eigenfunction sum")));
        }
        check_basis(&basis, draw.n)?;
        let mut p = Self::bare(kind, draw);
        p.map = Some(basis.map().clone());
        p.sl = Some(SlSource::Direct(basis));
        Ok(p)
    }

    /// `X_n`
    pub fn warped(draw: Arc<CoefficientDraw>, map: Arc<LiouvilleMap>) -> Self {
        let mut p = Self::bare(ProcessKind::Warped, draw);
        p.map = Some(map);
        p
    }

    /// `X°_n = ω^{-1/2} X_n`
    pub fn warped_raw(draw: Arc<CoefficientDraw>, map: Arc<LiouvilleMap>) -> Self {
        let mut p = Self::bare(ProcessKind::WarpedRaw, draw);
        p.map = Some(map);
        p
    }

    /// `T_n`
    pub fn stationary(draw: Arc<CoefficientDraw>) -> Self {
        Self::bare(ProcessKind::Stationary, draw)
    }

    /// `C_n`
    pub fn classical(draw: Arc<CoefficientDraw>) -> Self {
        Self::bare(ProcessKind::Classical, draw)
    }

    pub fn perturbed(draw: Arc<CoefficientDraw>, family: Arc<PerturbationFamily>) -> Self {
        let mut p = Self::bare(ProcessKind::Perturbed, draw);
        p.perturbation = Some(family);
        p
    }

    pub fn kind(&self) -> ProcessKind {
        self.kind
    }

    pub fn n(&self) -> usize {
        self.draw.n
    }

    pub fn draw(&self) -> &Arc<CoefficientDraw> {
        &self.draw
    }

    fn map(&self) -> &LiouvilleMap {
        self.map.as_deref().expect("kind carries a Liouville map")
    }

    fn combined_at(&self, y: f64) -> (f64, f64) {
        match self.sl.as_ref().expect("eigen sums carry a basis source") {
            SlSource::Combined(c) => hermite_eval(&c.values, &c.slopes, 0.0, self.map().spacing(), y),
            SlSource::Direct(basis) => BasisSnapshot::at(basis, self.draw.n, y)
                .expect("basis length checked at construction")
                .combine(&self.draw),
        }
    }

    /// Value and derivative at `x ∈ [0, 2π]`.
    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        let s = self.norm;
        match self.kind {
            ProcessKind::Stationary => {
                let (v, d) = trig_sum(&self.draw.a, Some(&self.draw.b), x);
                (s * v, s * d)
            }
            ProcessKind::Classical => {
                let (v, d) = trig_sum(&self.draw.a, None, x);
                (s * v, s * d)
            }
            ProcessKind::Warped | ProcessKind::WarpedRaw => {
                let map = self.map();
                let o = map.weight().eval(x);
                let (v, dtheta) = trig_sum(&self.draw.a, Some(&self.draw.b), 0.5 * map.omega(x));
                let (xv, xd) = (s * v, s * 0.5 * o * dtheta);
                if self.kind == ProcessKind::Warped {
                    (xv, xd)
                } else {
                    raw_from_scaled(xv, xd, o, map.weight().deriv1(x))
                }
            }
            ProcessKind::SlSum | ProcessKind::SlSumScaled => {
                let map = self.map();
                let o = map.weight().eval(x);
                let (g, dg) = self.combined_at(map.omega(x));
                let (fv, fd) = (s * g, s * o * dg);
                if self.kind == ProcessKind::SlSumScaled {
                    (fv, fd)
                } else {
                    raw_from_scaled(fv, fd, o, map.weight().deriv1(x))
                }
            }
            ProcessKind::Perturbed => {
                let fam = self.perturbation.as_deref().expect("perturbed kind carries a family");
                let (mut v, mut d) = trig_sum(&self.draw.a, Some(&self.draw.b), x);
                for k in 1..=self.draw.n {
                    let (e, de) = fam.eps(k, x);
                    let (h, dh) = fam.eta(k, x);
                    v += self.draw.a[k - 1] * e + self.draw.b[k - 1] * h;
                    d += self.draw.a[k - 1] * de + self.draw.b[k - 1] * dh;
                }
                (s * v, s * d)
            }
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_with_derivative(x).0
    }

    /// The same process as a function of the Liouville variable `y = Ω(x)`.
    pub fn liouville(&self) -> Result<LiouvilleView<'_>> {
        match self.kind {
            ProcessKind::SlSum | ProcessKind::SlSumScaled | ProcessKind::Warped | ProcessKind::WarpedRaw => {
                Ok(LiouvilleView { proc: self })
            }
            other => Err(Error::Precondition(format!(
                "process kind {other} has no Liouville representation"
            ))),
        }
    }

    /// Cosine and sine coefficients by integer frequency, when the process is
    /// a finite trigonometric sum in its natural variable (`x` or `y/2`).
    fn harmonic_coefficients(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self.draw.n;
        let (a, b) = (&self.draw.a, &self.draw.b);
        let mut cos_c = vec![0.0; n + 2];
        let mut sin_c = vec![0.0; n + 2];
        cos_c[1..=n].copy_from_slice(a);
        match self.kind {
            ProcessKind::Classical => {}
            ProcessKind::Stationary | ProcessKind::Warped | ProcessKind::WarpedRaw => {
                sin_c[1..=n].copy_from_slice(b);
            }
            ProcessKind::Perturbed => {
                let fam = self.perturbation.as_deref()?;
                let Shape::Harmonic { scale } = fam.shape else {
                    return None;
                };
                sin_c[1..=n].copy_from_slice(b);
                for k in 1..=n {
                    let f = scale / k as f64;
                    sin_c[k + 1] += f * a[k - 1];
                    cos_c[k + 1] += f * b[k - 1];
                }
            }
            _ => return None,
        }
        Some((cos_c, sin_c))
    }
}

#[inline]
fn raw_from_scaled(v: f64, d: f64, o: f64, o1: f64) -> (f64, f64) {
    let r = 1.0 / o.sqrt();
    (v * r, d * r - 0.5 * o1 / o * v * r)
}

/// `Σ a_k cos(kθ) + b_k sin(kθ)` and its `θ`-derivative, by angle rotation
/// resynchronised every 32 terms.
pub fn trig_sum(a: &[f64], b: Option<&[f64]>, theta: f64) -> (f64, f64) {
    let (s1, c1) = theta.sin_cos();
    let (mut c, mut s) = (c1, s1);
    let mut v = 0.0;
    let mut d = 0.0;
    for k in 1..=a.len() {
        let kf = k as f64;
        let bk = b.map_or(0.0, |b| b[k - 1]);
        v += a[k - 1] * c + bk * s;
        d += kf * (bk * c - a[k - 1] * s);
        if k % 32 == 0 {
            let (sn, cs) = ((kf + 1.0) * theta).sin_cos();
            s = sn;
            c = cs;
        } else {
            let cn = c * c1 - s * s1;
            s = s * c1 + c * s1;
            c = cn;
        }
    }
    (v, d)
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Samples `Σ_m cos_c[m] cos(mθ_j) + sin_c[m] sin(mθ_j)` at
/// `θ_j = span · j / intervals`, `j = 0..=intervals`, with `span = π` (`half`)
/// or `2π`, by one inverse FFT. Exact up to rounding for any frequency.
pub fn harmonic_samples(cos_c: &[f64], sin_c: &[f64], intervals: usize, half: bool) -> Vec<f64> {
    let len = if half { 2 * intervals } else { intervals };
    let mut buf = vec![Complex::new(0.0, 0.0); len];
    for (m, (&c, &s)) in cos_c.iter().zip(sin_c).enumerate() {
        buf[m % len] += Complex::new(c, -s);
    }
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(len));
    fft.process(&mut buf);
    (0..=intervals).map(|j| buf[j % len].re).collect()
}

fn is_full_period(a: f64, b: f64) -> bool {
    a == 0.0 && b == TWO_PI
}

impl Evaluable for RandomProcess {
    fn value(&self, t: f64) -> f64 {
        self.eval(t)
    }

    fn sample_uniform(&self, a: f64, b: f64, intervals: usize) -> Vec<f64> {
        if is_full_period(a, b)
            && matches!(
                self.kind,
                ProcessKind::Stationary | ProcessKind::Classical | ProcessKind::Perturbed
            )
        {
            if let Some((cos_c, sin_c)) = self.harmonic_coefficients() {
                let mut out = harmonic_samples(&cos_c, &sin_c, intervals, false);
                out.iter_mut().for_each(|v| *v *= self.norm);
                return out;
            }
        }
        let h = (b - a) / intervals as f64;
        (0..=intervals)
            .map(|j| self.eval(if j == intervals { b } else { a + j as f64 * h }))
            .collect()
    }
}

/// A process of the eigen or warped families viewed in `y = Ω(x)`.
///
/// Zeros are preserved by the bijection `Ω`, so counting here counts the zeros
/// of the original process.
#[derive(Clone, Copy)]
pub struct LiouvilleView<'a> {
    proc: &'a RandomProcess,
}

impl LiouvilleView<'_> {
    fn scaled_value(&self, y: f64) -> f64 {
        let p = self.proc;
        match p.kind {
            ProcessKind::SlSum | ProcessKind::SlSumScaled => p.norm * p.combined_at(y).0,
            _ => p.norm * trig_sum(&p.draw.a, Some(&p.draw.b), 0.5 * y).0,
        }
    }

    fn is_raw(&self) -> bool {
        matches!(self.proc.kind, ProcessKind::SlSum | ProcessKind::WarpedRaw)
    }
}

impl Evaluable for LiouvilleView<'_> {
    fn value(&self, y: f64) -> f64 {
        let v = self.scaled_value(y);
        if self.is_raw() {
            let map = self.proc.map();
            v / map.weight().eval(map.inverse_fast(y)).sqrt()
        } else {
            v
        }
    }

    fn sample_uniform(&self, a: f64, b: f64, intervals: usize) -> Vec<f64> {
        let p = self.proc;
        let h = (b - a) / intervals as f64;
        let node = |j: usize| if j == intervals { b } else { a + j as f64 * h };
        let mut out: Vec<f64> = match p.kind {
            ProcessKind::Warped | ProcessKind::WarpedRaw if is_full_period(a, b) => {
                let (cos_c, sin_c) = p.harmonic_coefficients().expect("warped sums are harmonic");
                let mut v = harmonic_samples(&cos_c, &sin_c, intervals, true);
                v.iter_mut().for_each(|x| *x *= p.norm);
                v
            }
            _ => (0..=intervals).map(|j| self.scaled_value(node(j))).collect(),
        };
        if self.is_raw() {
            let map = p.map();
            for (j, v) in out.iter_mut().enumerate() {
                *v /= map.weight().eval(map.inverse_fast(node(j))).sqrt();
            }
        }
        out
    }
}

fn same_draw(a: &RandomProcess, b: &RandomProcess) -> bool {
    Arc::ptr_eq(&a.draw, &b.draw) || (a.draw.a == b.draw.a && a.draw.b == b.draw.b)
}

/// `ε_n(x) = f_n(x) − X_n(x)` for two processes on one draw.
pub fn eval_epsilon(f: &RandomProcess, x_proc: &RandomProcess, x: f64) -> Result<f64> {
    check_epsilon_pair(f, x_proc)?;
    Ok(f.eval(x) - x_proc.eval(x))
}

fn check_epsilon_pair(f: &RandomProcess, x_proc: &RandomProcess) -> Result<()> {
    if f.kind != ProcessKind::SlSumScaled || x_proc.kind != ProcessKind::Warped {
        return Err(Error::Precondition(format!(
            "ε_n needs (f, X) processes, got ({}, {})",
            f.kind, x_proc.kind
        )));
    }
    if !same_draw(f, x_proc) {
        return Err(Error::Precondition("ε_n needs both processes on one coefficient draw".into()));
    }
    Ok(())
}

/// `‖ε_n‖∞` over a uniform Liouville grid of `intervals` cells (a uniform
/// grid in `y` is a grid in `x` through `Ω⁻¹`, so this is a sup over `x`).
pub fn sup_epsilon(f: &RandomProcess, x_proc: &RandomProcess, intervals: usize) -> Result<f64> {
    check_epsilon_pair(f, x_proc)?;
    let fs = f.liouville()?.sample_uniform(0.0, TWO_PI, intervals);
    let xs = x_proc.liouville()?.sample_uniform(0.0, TWO_PI, intervals);
    Ok(sup_abs_diff(&fs, &xs))
}

pub fn sup_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}
