//! Eigenpairs of the normal-form operator `q − d²/dy²` on `[0, 2π]` by
//! scaled Prüfer shooting.
//!
//! The problem is posed in the Liouville variable `y = Ω(x)` but integrated in
//! `x` (`dy = ω dx`), so the potential never has to be composed with `Ω⁻¹`.
//! Eigenfunctions are sampled on the uniform `y`-grid of a [`LiouvilleMap`];
//! the original-variable eigenfunction is `ψ(x) = ω(x)^{-1/2} g(Ω(x))`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interp::hermite_eval;
use crate::ode::{DormandPrince, Tolerance};
use crate::quad::hermite_trapezoid;
use crate::roots::brent;
use crate::weight::{LiouvilleMap, Potential, WeightFunction, TWO_PI};

/// Boundary-condition family.
///
/// `D` is Dirichlet at both ends, `C` is Neumann at both ends of the
/// normal-form problem. Both are indexed from `k = 1` with phase `k/2`, so
/// that with `q ≡ 0` the families are `cos(ky/2)` and `sin(ky/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryCondition {
    C,
    D,
}

impl BoundaryCondition {
    fn initial_phase(self) -> f64 {
        match self {
            BoundaryCondition::D => 0.0,
            BoundaryCondition::C => FRAC_PI_2,
        }
    }

    fn target_phase(self, k: usize) -> f64 {
        self.initial_phase() + k as f64 * PI
    }
}

impl fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundaryCondition::C => "C",
            BoundaryCondition::D => "D",
        })
    }
}

impl FromStr for BoundaryCondition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "C" | "c" => Ok(BoundaryCondition::C),
            "D" | "d" => Ok(BoundaryCondition::D),
            _ => Err(Error::Config(format!("unknown boundary condition `{s}` (expected C or D)"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Nodes of the uniform `y`-grid the eigenfunctions are sampled on.
    pub grid_points: usize,
    /// Relative tolerance of the Prüfer integration.
    pub ode_rel_tol: f64,
    /// Eigenvalues are refined to `eigen_rel_tol · max(1, λ)`.
    pub eigen_rel_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            grid_points: 8192,
            ode_rel_tol: 1e-13,
            eigen_rel_tol: 1e-13,
        }
    }
}

/// One eigenpair, sampled in the normal-form variable.
#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub index: usize,
    pub eigenvalue: f64,
    /// `g(y_i)` on the uniform `y`-grid.
    pub values: Vec<f64>,
    /// `g′(y_i)`.
    pub slopes: Vec<f64>,
}

impl Eigenpair {
    /// Number of sign changes of `g` strictly inside `(0, 2π)`.
    pub fn interior_zeros(&self) -> usize {
        let n = self.values.len();
        // skip endpoint samples that vanish by the boundary condition
        let inner = &self.values[1..n - 1];
        inner
            .windows(2)
            .filter(|w| (w[0] < 0.0) != (w[1] < 0.0))
            .count()
    }
}

/// Ordered eigenpairs of one boundary-condition family.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    bc: BoundaryCondition,
    pairs: Vec<Eigenpair>,
    map: Arc<LiouvilleMap>,
}

impl EigenBasis {
    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Eigenpair with 1-based index `k`.
    pub fn pair(&self, k: usize) -> &Eigenpair {
        &self.pairs[k - 1]
    }

    pub fn pairs(&self) -> &[Eigenpair] {
        &self.pairs
    }

    pub fn map(&self) -> &Arc<LiouvilleMap> {
        &self.map
    }

    pub fn weight(&self) -> &WeightFunction {
        self.map.weight()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.eigenvalue).collect()
    }

    /// `(g_k(y), g′_k(y))` by Hermite interpolation.
    pub fn eval_normal(&self, k: usize, y: f64) -> (f64, f64) {
        let p = self.pair(k);
        hermite_eval(&p.values, &p.slopes, 0.0, self.map.spacing(), y)
    }

    /// `(ψ_k(x), ψ′_k(x))` in the original variable.
    pub fn eval_psi(&self, k: usize, x: f64) -> (f64, f64) {
        let w = self.map.weight();
        let (o, o1) = (w.eval(x), w.deriv1(x));
        let (g, dg) = self.eval_normal(k, self.map.omega(x));
        let psi = g / o.sqrt();
        (psi, -0.5 * o1 / o * psi + o.sqrt() * dg)
    }
}

#[inline]
fn prufer_rhs(w: &WeightFunction, x: f64, theta: f64, lambda: f64, scale: f64) -> (f64, f64) {
    let o = w.eval(x);
    let o1 = w.deriv1(x);
    let o2 = w.deriv2(x);
    let osq = o * o;
    let q = o2 / (2.0 * osq * o) - 0.75 * o1 * o1 / (osq * osq);
    let (s, c) = theta.sin_cos();
    let a = (lambda - q) / scale;
    (o * (scale * c * c + a * s * s), o * (scale - a) * s * c)
}

fn terminal_phase(
    q: &Potential,
    lambda: f64,
    bc: BoundaryCondition,
    scale: f64,
    rel_tol: f64,
) -> Result<f64> {
    let w = q.weight();
    let f = |x: f64, y: &[f64; 1]| [prufer_rhs(w, x, y[0], lambda, scale).0];
    let mut state = [bc.initial_phase()];
    let mut dp = DormandPrince::new(Tolerance { rel: rel_tol, abs: rel_tol }, 1e-2);
    dp.integrate(&f, 0.0, TWO_PI, &mut state)?;
    Ok(state[0])
}

/// Terminal Prüfer phase `θ(2π; λ)` of `θ′ = cos²θ + (λ − q) sin²θ`
/// (in the Liouville variable), started at `0` for `D` and `π/2` for `C`.
pub fn prufer_phase(q: &Potential, lambda: f64, bc: BoundaryCondition) -> Result<f64> {
    terminal_phase(q, lambda, bc, 1.0, 1e-11)
}

/// First `k_max` eigenpairs of one family; builds its own Liouville map.
pub fn eigen_solve(
    q: &Potential,
    bc: BoundaryCondition,
    k_max: usize,
    opts: &SolverOptions,
) -> Result<EigenBasis> {
    let map = Arc::new(LiouvilleMap::new(q.weight(), opts.grid_points)?);
    eigen_solve_on(q, &map, bc, k_max, opts)
}

/// As [`eigen_solve`] with a shared Liouville map (which fixes the grid).
pub fn eigen_solve_on(
    q: &Potential,
    map: &Arc<LiouvilleMap>,
    bc: BoundaryCondition,
    k_max: usize,
    opts: &SolverOptions,
) -> Result<EigenBasis> {
    if k_max == 0 {
        return Err(Error::Precondition("k_max must be at least 1".into()));
    }
    let q_range = q.range(4097);
    let pairs = (1..=k_max)
        .into_par_iter()
        .map(|k| solve_one(q, map, bc, k, q_range, opts))
        .collect::<Result<Vec<_>>>()?;
    for w in pairs.windows(2) {
        if !(w[1].eigenvalue > w[0].eigenvalue) {
            return Err(Error::Numeric(format!(
                "eigenvalues not increasing at k = {}: {} then {}",
                w[0].index, w[0].eigenvalue, w[1].eigenvalue
            )));
        }
    }
    Ok(EigenBasis {
        bc,
        pairs,
        map: map.clone(),
    })
}

/// Both families up to `k_max` on one shared map.
pub fn solve_basis_pair(
    weight: &WeightFunction,
    k_max: usize,
    opts: &SolverOptions,
) -> Result<BasisPair> {
    let q = crate::weight::weight_to_potential(weight)?;
    let map = Arc::new(LiouvilleMap::new(weight, opts.grid_points)?);
    let cos_family = eigen_solve_on(&q, &map, BoundaryCondition::C, k_max, opts)?;
    let sin_family = eigen_solve_on(&q, &map, BoundaryCondition::D, k_max, opts)?;
    Ok(BasisPair {
        cos_family,
        sin_family,
    })
}

/// The `C` (cosine-like, `u_k`) and `D` (sine-like, `v_k`) families together.
#[derive(Debug, Clone)]
pub struct BasisPair {
    pub cos_family: EigenBasis,
    pub sin_family: EigenBasis,
}

impl BasisPair {
    pub fn len(&self) -> usize {
        self.cos_family.len().min(self.sin_family.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn map(&self) -> &Arc<LiouvilleMap> {
        self.cos_family.map()
    }

    pub fn weight(&self) -> &WeightFunction {
        self.cos_family.weight()
    }
}

fn solve_one(
    q: &Potential,
    map: &LiouvilleMap,
    bc: BoundaryCondition,
    k: usize,
    (q_lo, q_hi): (f64, f64),
    opts: &SolverOptions,
) -> Result<Eigenpair> {
    // Min-max: λ_k(q) lies in [λ_k(0) + min q, λ_k(0) + max q], λ_k(0) = k²/4.
    let base = (k * k) as f64 / 4.0;
    let margin = 0.05 * (1.0 + q_hi - q_lo);
    let mut lo = base + q_lo - margin;
    let mut hi = base + q_hi + margin;
    let scale = (0.5 * (lo + hi)).max(0.25).sqrt();
    let target = bc.target_phase(k);
    let phase = |lambda: f64| -> Result<f64> {
        Ok(terminal_phase(q, lambda, bc, scale, opts.ode_rel_tol)? - target)
    };

    let mut widen = margin.max(1.0);
    let mut tries = 0;
    while phase(lo)? > 0.0 {
        lo -= widen;
        widen *= 2.0;
        tries += 1;
        if tries > 60 {
            return Err(Error::Numeric(format!("no lower bracket for eigenvalue {k} ({bc})")));
        }
    }
    widen = margin.max(1.0);
    tries = 0;
    while phase(hi)? < 0.0 {
        hi += widen;
        widen *= 2.0;
        tries += 1;
        if tries > 60 {
            return Err(Error::Numeric(format!("no upper bracket for eigenvalue {k} ({bc})")));
        }
    }
    let xtol = opts.eigen_rel_tol * hi.abs().max(1.0);
    let lambda = brent(phase, lo, hi, xtol)?;
    let pair = sample_eigenfunction(q, map, bc, k, lambda, scale, opts)?;
    normalize_eigenfunction(pair, bc, map)
}

fn sample_eigenfunction(
    q: &Potential,
    map: &LiouvilleMap,
    bc: BoundaryCondition,
    k: usize,
    lambda: f64,
    scale: f64,
    opts: &SolverOptions,
) -> Result<Eigenpair> {
    let w = q.weight();
    let f = |x: f64, y: &[f64; 2]| {
        let (dt, dl) = prufer_rhs(w, x, y[0], lambda, scale);
        [dt, dl]
    };
    let nodes = map.inverse_nodes();
    let mut values = Vec::with_capacity(nodes.len());
    let mut slopes = Vec::with_capacity(nodes.len());
    let mut state = [bc.initial_phase(), 0.0];
    let mut push = |s: &[f64; 2]| {
        let r = s[1].exp();
        let (sn, cs) = s[0].sin_cos();
        values.push(r * sn);
        slopes.push(scale * r * cs);
    };
    push(&state);
    let mut dp = DormandPrince::new(
        Tolerance {
            rel: opts.ode_rel_tol,
            abs: opts.ode_rel_tol,
        },
        1e-3,
    );
    for seg in nodes.windows(2) {
        dp.integrate(&f, seg[0], seg[1], &mut state)?;
        push(&state);
    }
    Ok(Eigenpair {
        index: k,
        eigenvalue: lambda,
        values,
        slopes,
    })
}

/// Scales an eigenpair to `∫ g² dy = ∫ ψ² ω dx = π` and fixes its sign so that
/// `g(0) > 0` (family `C`) or `g′(0) > 0` (family `D`).
pub fn normalize_eigenfunction(
    mut pair: Eigenpair,
    bc: BoundaryCondition,
    map: &LiouvilleMap,
) -> Result<Eigenpair> {
    let sq: Vec<f64> = pair.values.iter().map(|g| g * g).collect();
    let dsq: Vec<f64> = pair
        .values
        .iter()
        .zip(&pair.slopes)
        .map(|(g, d)| 2.0 * g * d)
        .collect();
    let norm2 = hermite_trapezoid(&sq, &dsq, map.spacing());
    if !(norm2 > 0.0) || !norm2.is_finite() {
        return Err(Error::Invariant(format!(
            "eigenfunction {} has zero or non-finite norm",
            pair.index
        )));
    }
    let lead = match bc {
        BoundaryCondition::C => pair.values[0],
        BoundaryCondition::D => pair.slopes[0],
    };
    let sign = if lead < 0.0 { -1.0 } else { 1.0 };
    let factor = sign * (PI / norm2).sqrt();
    pair.values.iter_mut().for_each(|v| *v *= factor);
    pair.slopes.iter_mut().for_each(|v| *v *= factor);
    Ok(pair)
}

/// `ω(x)^{-1/2} cos((k/2)Ω(x))` for `C`, `ω(x)^{-1/2} sin((k/2)Ω(x))` for `D`.
pub fn asymptotic_eigenfunction(map: &LiouvilleMap, k: usize, bc: BoundaryCondition, x: f64) -> f64 {
    let phase = 0.5 * k as f64 * map.omega(x);
    let amp = 1.0 / map.weight().eval(x).sqrt();
    match bc {
        BoundaryCondition::C => amp * phase.cos(),
        BoundaryCondition::D => amp * phase.sin(),
    }
}

/// One row of the eigen table.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DeviationRow {
    pub k: usize,
    pub lambda: f64,
    /// `√λ_k − k/2`.
    pub sqrt_gap: f64,
    /// `sup_x |ψ_k − asymptotic_k|`.
    pub dev: f64,
    /// `k · dev`.
    pub k_dev: f64,
    /// `sup_x |ψ′_k − asymptotic′_k|`.
    pub dev_deriv: f64,
}

/// Sup-norm deviations of each eigenfunction from its closed-form asymptotic
/// shape, evaluated at the grid nodes.
pub fn asymptotic_deviation(basis: &EigenBasis) -> Vec<DeviationRow> {
    let map = basis.map();
    let w = map.weight();
    let h = map.spacing();
    let nodes = map.inverse_nodes();
    let geometry: Vec<(f64, f64, f64)> = nodes
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let o = w.eval(x);
            (i as f64 * h, o, w.deriv1(x) / (2.0 * o))
        })
        .collect();
    basis
        .pairs()
        .par_iter()
        .map(|p| {
            let half_k = 0.5 * p.index as f64;
            let mut dev = 0.0f64;
            let mut dev_deriv = 0.0f64;
            for (i, &(y, o, log_slope)) in geometry.iter().enumerate() {
                let (s, c) = (half_k * y).sin_cos();
                let (shape, dshape) = match basis.bc() {
                    BoundaryCondition::C => (c, -half_k * s),
                    BoundaryCondition::D => (s, half_k * c),
                };
                let root = o.sqrt();
                let diff = (p.values[i] - shape) / root;
                let ddiff = -log_slope * diff + root * (p.slopes[i] - dshape);
                dev = dev.max(diff.abs());
                dev_deriv = dev_deriv.max(ddiff.abs());
            }
            DeviationRow {
                k: p.index,
                lambda: p.eigenvalue,
                sqrt_gap: p.eigenvalue.sqrt() - half_k,
                dev,
                k_dev: p.index as f64 * dev,
                dev_deriv,
            }
        })
        .collect()
}
