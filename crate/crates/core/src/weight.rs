//! Weight functions, the Liouville change of variables `y = Ω(x)`, and the
//! normal-form potential.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::interp::hermite_eval;
use crate::quad::{cumulative_uniform, integrate_adaptive};

pub const TWO_PI: f64 = 2.0 * PI;

/// Names accepted by [`builtin_weights`].
pub const PRESETS: [&str; 3] = ["unit", "sine2", "expcos"];

/// Default shape parameter of the `expcos` preset.
pub const DEFAULT_EXPCOS_A: f64 = 0.5;

type Scalar = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A strictly positive C² weight `ω` on `[0, 2π]` with analytic derivatives.
#[derive(Clone)]
pub struct WeightFunction {
    name: String,
    eval: Scalar,
    deriv1: Scalar,
    deriv2: Scalar,
}

impl fmt::Debug for WeightFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WeightFunction").field("name", &self.name).finish()
    }
}

impl WeightFunction {
    pub fn new<F, D1, D2>(name: impl Into<String>, eval: F, deriv1: D1, deriv2: D2) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        D1: Fn(f64) -> f64 + Send + Sync + 'static,
        D2: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        WeightFunction {
            name: name.into(),
            eval: Arc::new(eval),
            deriv1: Arc::new(deriv1),
            deriv2: Arc::new(deriv2),
        }
    }

    /// The constant weight `ω ≡ 1`.
    pub fn unit() -> Self {
        WeightFunction::new("unit", |_| 1.0, |_| 0.0, |_| 0.0)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    #[inline]
    pub fn deriv1(&self, x: f64) -> f64 {
        (self.deriv1)(x)
    }

    #[inline]
    pub fn deriv2(&self, x: f64) -> f64 {
        (self.deriv2)(x)
    }

    /// `∫₀^{2π} ω(u) du`.
    pub fn mass(&self) -> Result<f64> {
        let f = self.eval.clone();
        integrate_adaptive(move |x| f(x), 0.0, TWO_PI, 1e-14, 0.0)
    }

    fn check_positive(&self, samples: usize) -> Result<()> {
        for i in 0..samples {
            let x = TWO_PI * i as f64 / (samples - 1) as f64;
            let v = self.eval(x);
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!(
                    "weight `{}` is not strictly positive at x = {x}: ω(x) = {v}",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// Rescales `raw` so that its total mass on `[0, 2π]` is `2π`.
pub fn normalize_weight(raw: &WeightFunction) -> Result<WeightFunction> {
    raw.check_positive(4097)?;
    let scale = TWO_PI / raw.mass()?;
    let (e, d1, d2) = (raw.eval.clone(), raw.deriv1.clone(), raw.deriv2.clone());
    Ok(WeightFunction {
        name: raw.name.clone(),
        eval: Arc::new(move |x| scale * e(x)),
        deriv1: Arc::new(move |x| scale * d1(x)),
        deriv2: Arc::new(move |x| scale * d2(x)),
    })
}

/// Preset weights by name, `expcos` with the default shape parameter.
pub fn builtin_weights(name: &str) -> Result<WeightFunction> {
    builtin_weight_with(name, DEFAULT_EXPCOS_A)
}

/// Preset weights by name with an explicit `expcos` shape parameter `a`
/// (`ω ∝ exp(a cos x)`).
pub fn builtin_weight_with(name: &str, expcos_a: f64) -> Result<WeightFunction> {
    match name {
        "unit" => Ok(WeightFunction::unit()),
        "sine2" => normalize_weight(&WeightFunction::new(
            "sine2",
            |x: f64| 2.0 + x.sin(),
            |x: f64| x.cos(),
            |x: f64| -x.sin(),
        )),
        "expcos" => {
            if !expcos_a.is_finite() {
                return Err(Error::Config(format!("expcos parameter must be finite, got {expcos_a}")));
            }
            let a = expcos_a;
            normalize_weight(&WeightFunction::new(
                "expcos",
                move |x: f64| (a * x.cos()).exp(),
                move |x: f64| -a * x.sin() * (a * x.cos()).exp(),
                move |x: f64| {
                    let s = x.sin();
                    (a * a * s * s - a * x.cos()) * (a * x.cos()).exp()
                },
            ))
        }
        other => Err(Error::Config(format!(
            "unknown weight `{other}`; available presets: {}",
            PRESETS.join(", ")
        ))),
    }
}

/// Uniform sampling grid of `[0, 2π]` including both endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
}

impl Grid {
    pub fn uniform(count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::Config(format!("grid needs at least 2 points, got {count}")));
        }
        let h = TWO_PI / (count - 1) as f64;
        let mut points: Vec<f64> = (0..count).map(|i| i as f64 * h).collect();
        points[count - 1] = TWO_PI;
        Ok(Grid { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn count(&self) -> usize {
        self.points.len()
    }

    pub fn spacing(&self) -> f64 {
        TWO_PI / (self.points.len() - 1) as f64
    }
}

/// Normal-form potential `q = ω″/(2ω³) − (3/4)(ω′)²/ω⁴` of a weight, as a
/// function of the original variable `x`.
#[derive(Debug, Clone)]
pub struct Potential {
    weight: WeightFunction,
}

impl Potential {
    pub fn weight(&self) -> &WeightFunction {
        &self.weight
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        potential_value(&self.weight, x)
    }

    /// `(min, max)` of `q` over a uniform sample of `[0, 2π]`.
    pub fn range(&self, samples: usize) -> (f64, f64) {
        (0..samples)
            .map(|i| self.eval(TWO_PI * i as f64 / (samples - 1) as f64))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), q| (lo.min(q), hi.max(q)))
    }
}

#[inline]
fn potential_value(w: &WeightFunction, x: f64) -> f64 {
    let o = w.eval(x);
    let o1 = w.deriv1(x);
    let o2 = w.deriv2(x);
    let o2sq = o * o;
    o2 / (2.0 * o2sq * o) - 0.75 * o1 * o1 / (o2sq * o2sq)
}

pub fn weight_to_potential(w: &WeightFunction) -> Result<Potential> {
    let grid = Grid::uniform(4097)?;
    for &x in grid.points() {
        let q = potential_value(w, x);
        if !q.is_finite() {
            return Err(Error::Domain(format!(
                "potential of weight `{}` is not finite at x = {x}",
                w.name()
            )));
        }
    }
    Ok(Potential { weight: w.clone() })
}

/// Tabulated Liouville map `Ω(x) = ∫₀^x ω` and its inverse.
///
/// `Ω` is stored on a uniform `x`-grid and its inverse on a uniform `y`-grid;
/// both are interpolated with cubic Hermite using the exact slopes `ω` and `1/ω`.
#[derive(Debug, Clone)]
pub struct LiouvilleMap {
    weight: WeightFunction,
    h: f64,
    omega_nodes: Vec<f64>,
    omega_slopes: Vec<f64>,
    inverse_nodes: Vec<f64>,
    inverse_slopes: Vec<f64>,
}

impl LiouvilleMap {
    pub fn new(weight: &WeightFunction, points: usize) -> Result<Self> {
        let grid = Grid::uniform(points)?;
        weight.check_positive(points)?;
        let h = grid.spacing();
        let w = weight.clone();
        let omega_nodes = cumulative_uniform(&|x| w.eval(x), 0.0, TWO_PI, points);
        let omega_slopes: Vec<f64> = grid.points().iter().map(|&x| weight.eval(x)).collect();
        let mut map = LiouvilleMap {
            weight: weight.clone(),
            h,
            omega_nodes,
            omega_slopes,
            inverse_nodes: Vec::new(),
            inverse_slopes: Vec::new(),
        };
        let total = map.omega_nodes[points - 1];
        if ((total - TWO_PI) / TWO_PI).abs() > 1e-10 {
            return Err(Error::Domain(format!(
                "weight `{}` is not normalized: Ω(2π) = {total}",
                weight.name()
            )));
        }
        let mut inv = Vec::with_capacity(points);
        let mut inv_slopes = Vec::with_capacity(points);
        for &y in grid.points() {
            let x = map.invert(y);
            inv.push(x);
            inv_slopes.push(1.0 / weight.eval(x));
        }
        inv[0] = 0.0;
        inv[points - 1] = TWO_PI;
        map.inverse_nodes = inv;
        map.inverse_slopes = inv_slopes;
        Ok(map)
    }

    pub fn weight(&self) -> &WeightFunction {
        &self.weight
    }

    pub fn points(&self) -> usize {
        self.omega_nodes.len()
    }

    /// Spacing shared by the uniform `x`- and `y`-grids.
    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// `x` positions of the uniform `y`-grid nodes: `Ω(x_i) = i·h`.
    pub fn inverse_nodes(&self) -> &[f64] {
        &self.inverse_nodes
    }

    /// `Ω(x)` without domain checks.
    #[inline]
    pub fn omega(&self, x: f64) -> f64 {
        hermite_eval(&self.omega_nodes, &self.omega_slopes, 0.0, self.h, x).0
    }

    /// `Ω⁻¹(y)` from the inverse table, without Newton polish.
    #[inline]
    pub fn inverse_fast(&self, y: f64) -> f64 {
        hermite_eval(&self.inverse_nodes, &self.inverse_slopes, 0.0, self.h, y).0
    }

    pub fn omega_cumulative(&self, x: f64) -> Result<f64> {
        check_domain(x, "x")?;
        Ok(self.omega(x))
    }

    pub fn omega_inverse(&self, y: f64) -> Result<f64> {
        check_domain(y, "y")?;
        Ok(self.invert(y))
    }

    // Bisection on the node table, then safeguarded Newton inside the cell.
    fn invert(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let n = self.omega_nodes.len();
        if y >= self.omega_nodes[n - 1] {
            return TWO_PI;
        }
        let (mut lo, mut hi) = (0usize, n - 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.omega_nodes[mid] <= y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut a = lo as f64 * self.h;
        let mut b = (hi as f64 * self.h).min(TWO_PI);
        let mut x = a + (y - self.omega_nodes[lo]) / self.omega_slopes[lo];
        for _ in 0..60 {
            if !(x > a && x < b) {
                x = 0.5 * (a + b);
            }
            let r = self.omega(x) - y;
            if r > 0.0 {
                b = x;
            } else {
                a = x;
            }
            let step = r / self.weight.eval(x);
            x -= step;
            if step.abs() <= 1e-14 || b - a <= 1e-14 {
                break;
            }
        }
        x.clamp(0.0, TWO_PI)
    }
}

fn check_domain(v: f64, what: &str) -> Result<()> {
    const SLACK: f64 = 1e-12;
    if !(-SLACK..=TWO_PI + SLACK).contains(&v) {
        return Err(Error::Domain(format!("{what} = {v} lies outside [0, 2π]")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine2() -> WeightFunction {
        builtin_weights("sine2").unwrap()
    }

    #[test]
    fn constant_weight_rescales_to_unit() {
        let w = normalize_weight(&WeightFunction::new("three", |_| 3.0, |_| 0.0, |_| 0.0)).unwrap();
        for x in [0.0, 1.0, 5.0] {
            assert!((w.eval(x) - 1.0).abs() < 1e-14);
        }
        let u = normalize_weight(&WeightFunction::unit()).unwrap();
        assert!((u.eval(2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sine2_is_half_of_raw() {
        let w = sine2();
        for x in [0.0, 0.7, PI, 4.0] {
            assert!((w.eval(x) - (2.0 + x.sin()) / 2.0).abs() < 1e-14);
            assert!((w.deriv1(x) - x.cos() / 2.0).abs() < 1e-14);
        }
        assert!(((w.mass().unwrap() - TWO_PI) / TWO_PI).abs() < 1e-10);
    }

    #[test]
    fn expcos_is_positive_and_normalized() {
        let w = builtin_weights("expcos").unwrap();
        assert!(((w.mass().unwrap() - TWO_PI) / TWO_PI).abs() < 1e-10);
        for i in 0..100 {
            let x = TWO_PI * i as f64 / 99.0;
            assert!(w.eval(x) > 0.0);
            let h = 1e-4;
            let fd1 = (w.eval(x + h) - w.eval(x - h)) / (2.0 * h);
            let fd2 = (w.eval(x + h) - 2.0 * w.eval(x) + w.eval(x - h)) / (h * h);
            assert!((fd1 - w.deriv1(x)).abs() < 1e-7);
            assert!((fd2 - w.deriv2(x)).abs() < 1e-5);
        }
    }

    #[test]
    fn non_positive_weight_is_rejected_with_location() {
        let bad = WeightFunction::new("bad", |x: f64| x.sin(), |x: f64| x.cos(), |x: f64| -x.sin());
        match normalize_weight(&bad) {
            Err(Error::Domain(msg)) => assert!(msg.contains("x = 0")),
            other => panic!("expected domain error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_preset_lists_available() {
        match builtin_weights("bessel") {
            Err(Error::Config(msg)) => {
                for p in PRESETS {
                    assert!(msg.contains(p));
                }
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn omega_of_sine2_matches_antiderivative() {
        let m = LiouvilleMap::new(&sine2(), 8192).unwrap();
        // Ω(x) = (2x + 1 − cos x)/2
        for i in 0..200 {
            let x = TWO_PI * i as f64 / 199.0;
            let exact = (2.0 * x + 1.0 - x.cos()) / 2.0;
            assert!((m.omega_cumulative(x).unwrap() - exact).abs() < 1e-10);
        }
        assert!((m.omega_cumulative(PI).unwrap() - (PI + 1.0)).abs() < 1e-10);
        assert!((m.omega_cumulative(TWO_PI).unwrap() - TWO_PI).abs() < 1e-10);
        assert!((m.omega_inverse(PI + 1.0).unwrap() - PI).abs() < 1e-10);
        assert_eq!(m.omega_inverse(0.0).unwrap(), 0.0);
    }

    #[test]
    fn identity_map_for_unit_weight() {
        let m = LiouvilleMap::new(&WeightFunction::unit(), 1024).unwrap();
        for y in [0.0, 0.3, 3.0, 6.0, TWO_PI] {
            assert!((m.omega_inverse(y).unwrap() - y).abs() < 1e-13);
            assert!((m.omega_cumulative(y).unwrap() - y).abs() < 1e-13);
        }
    }

    #[test]
    fn out_of_range_is_domain_error() {
        let m = LiouvilleMap::new(&WeightFunction::unit(), 64).unwrap();
        assert!(matches!(m.omega_cumulative(-0.1), Err(Error::Domain(_))));
        assert!(matches!(m.omega_inverse(7.0), Err(Error::Domain(_))));
    }

    #[test]
    fn potential_values() {
        let q = weight_to_potential(&WeightFunction::unit()).unwrap();
        let (lo, hi) = q.range(1000);
        assert_eq!((lo, hi), (0.0, 0.0));

        let w = sine2();
        let q = weight_to_potential(&w).unwrap();
        assert!((q.eval(0.0) + 3.0 / 16.0).abs() < 1e-14);

        // Oracle: finite differences of ω alone, independent of the analytic derivatives.
        let x = PI / 2.0;
        let h = 1e-3;
        let f = |t: f64| w.eval(t);
        let d1 = (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h);
        let d2 = (-f(x + 2.0 * h) + 16.0 * f(x + h) - 30.0 * f(x) + 16.0 * f(x - h) - f(x - 2.0 * h))
            / (12.0 * h * h);
        let o = f(x);
        let oracle = d2 / (2.0 * o.powi(3)) - 0.75 * d1 * d1 / o.powi(4);
        assert!((q.eval(x) - oracle).abs() < 1e-9);
        assert!((q.eval(x) + 2.0 / 27.0).abs() < 1e-14);
    }

    #[test]
    fn grid_endpoints_and_spacing() {
        let g = Grid::uniform(8192).unwrap();
        assert_eq!(g.points()[0], 0.0);
        assert_eq!(*g.points().last().unwrap(), TWO_PI);
        let h = g.spacing();
        for w in g.points().windows(2) {
            assert!((w[1] - w[0] - h).abs() < 1e-12);
        }
    }
}
