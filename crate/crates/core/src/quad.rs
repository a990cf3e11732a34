//! Quadrature rules shared by the weight geometry and the Kac-Rice integrals.

use crate::error::{Error, Result};

const KRONROD_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Weights of the embedded 7-point Gauss rule, on KRONROD_NODES[1], [3], [5], [7].
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// 7-point Gauss-Legendre rule on `[a, b]`; exact for polynomials of degree 13.
pub fn gauss7<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut sum = GAUSS_WEIGHTS[3] * f(c);
    for j in 0..3 {
        let x = KRONROD_NODES[2 * j + 1];
        sum += GAUSS_WEIGHTS[j] * (f(c - h * x) + f(c + h * x));
    }
    sum * h
}

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = KRONROD_WEIGHTS[7] * fc;
    let mut gauss = GAUSS_WEIGHTS[3] * fc;
    for j in 0..7 {
        let x = KRONROD_NODES[j];
        let pair = f(c - h * x) + f(c + h * x);
        kron += KRONROD_WEIGHTS[j] * pair;
        if j % 2 == 1 {
            gauss += GAUSS_WEIGHTS[j / 2] * pair;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Globally adaptive Gauss-Kronrod (7/15) integration.
///
/// Splits the interval with the largest error estimate until the summed
/// estimate drops below `max(abs_tol, rel_tol * |I|)`.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<f64> {
    const MAX_INTERVALS: usize = 4000;
    if a == b {
        return Ok(0.0);
    }
    let (v, e) = kronrod15(&f, a, b);
    let mut parts = vec![(a, b, v, e)];
    loop {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if !total.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite integrand on [{a}, {b}]"
            )));
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(total);
        }
        if parts.len() >= MAX_INTERVALS {
            return Err(Error::Numeric(format!(
                "adaptive quadrature did not converge on [{a}, {b}]: error {err:e}"
            )));
        }
        let (worst, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = kronrod15(&f, lo, mid);
        let (v2, e2) = kronrod15(&f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
}

/// Cumulative integral of `f` on a uniform grid of `points` nodes over `[a, b]`,
/// one Gauss rule per cell. `out[0] = 0`.
pub fn cumulative_uniform<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, points: usize) -> Vec<f64> {
    let cells = points - 1;
    let h = (b - a) / cells as f64;
    let mut out = Vec::with_capacity(points);
    let mut acc = 0.0;
    out.push(0.0);
    for i in 0..cells {
        let lo = a + i as f64 * h;
        let hi = if i + 1 == cells { b } else { a + (i + 1) as f64 * h };
        acc += gauss7(f, lo, hi);
        out.push(acc);
    }
    out
}

/// Integral of a function known by values and first derivatives on a uniform
/// grid (trapezoid plus the Euler-Maclaurin endpoint correction, fourth order).
pub fn hermite_trapezoid(values: &[f64], slopes: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..n - 1].iter().sum();
    let trap = h * (0.5 * (values[0] + values[n - 1]) + inner);
    trap + h * h / 12.0 * (slopes[0] - slopes[n - 1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn gauss7_is_exact_for_degree_13() {
        let f = |x: f64| x.powi(13) + 3.0 * x.powi(12) - x;
        let exact = 3.0 / 13.0 * 2.0;
        assert!((gauss7(&f, -1.0, 1.0) - exact).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_peaked_integrand() {
        let v = integrate_adaptive(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-10, 0.0).unwrap();
        let exact = 2.0 / 1e-2 * (1.0f64 / 1e-2).atan();
        assert!(((v - exact) / exact).abs() < 1e-9);
    }

    #[test]
    fn cumulative_matches_antiderivative() {
        let f = |x: f64| 2.0 + x.sin();
        let c = cumulative_uniform(&f, 0.0, 2.0 * PI, 257);
        let h = 2.0 * PI / 256.0;
        for (i, v) in c.iter().enumerate() {
            let x = i as f64 * h;
            let exact = 2.0 * x + 1.0 - x.cos();
            assert!((v - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn hermite_trapezoid_on_polynomial() {
        // exact for cubics
        let n = 11;
        let h = 0.1;
        let xs: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let v: Vec<f64> = xs.iter().map(|x| x * x * x - x).collect();
        let d: Vec<f64> = xs.iter().map(|x| 3.0 * x * x - 1.0).collect();
        assert!((hermite_trapezoid(&v, &d, h) - (0.25 - 0.5)).abs() < 1e-14);
    }
}
