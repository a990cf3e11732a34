//! Zero counting for sampled oscillatory processes.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::roots::bisect;

/// Something that can be evaluated pointwise and, ideally, sampled cheaply on
/// a uniform grid.
pub trait Evaluable {
    fn value(&self, t: f64) -> f64;

    /// Values at `a + j (b − a)/intervals`, `j = 0..=intervals`.
    fn sample_uniform(&self, a: f64, b: f64, intervals: usize) -> Vec<f64> {
        let h = (b - a) / intervals as f64;
        (0..=intervals)
            .map(|j| {
                let t = if j == intervals { b } else { a + j as f64 * h };
                self.value(t)
            })
            .collect()
    }
}

/// Adapter turning a closure into an [`Evaluable`].
pub struct FromFn<F>(pub F);

impl<F: Fn(f64) -> f64> Evaluable for FromFn<F> {
    fn value(&self, t: f64) -> f64 {
        (self.0)(t)
    }
}

impl<T: Evaluable + ?Sized> Evaluable for &T {
    fn value(&self, t: f64) -> f64 {
        (**self).value(t)
    }

    fn sample_uniform(&self, a: f64, b: f64, intervals: usize) -> Vec<f64> {
        (**self).sample_uniform(a, b, intervals)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CountOptions {
    /// Grid intervals per unit of `n_hint`.
    pub factor: usize,
    pub max_doublings: usize,
    /// Locate each zero by bisection (otherwise only count).
    pub refine: bool,
    pub xtol: f64,
}

impl Default for CountOptions {
    fn default() -> Self {
        CountOptions {
            factor: 16,
            max_doublings: 3,
            refine: true,
            xtol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroCountResult {
    pub count: usize,
    /// Sorted zero abscissae; empty when refinement is off.
    pub locations: Vec<f64>,
    /// Grid intervals per unit of `n_hint` of the grid the count comes from.
    pub grid_factor: usize,
    /// The last grid doubling left the count unchanged.
    pub stable: bool,
    /// Local minima of `|P|` below `1e-9` without a sign change (not counted).
    pub near_tangencies: usize,
}

const EXACT_ZERO: f64 = 1e-13;
const TANGENCY: f64 = 1e-9;

struct Scan {
    count: usize,
    brackets: Vec<(usize, usize)>,
    endpoint_zeros: Vec<usize>,
    near_tangencies: usize,
    interior_exact_zero: bool,
}

fn scan(samples: &[f64], stride: usize) -> Scan {
    let idx: Vec<usize> = (0..samples.len()).step_by(stride).collect();
    let last = idx.len() - 1;
    let mut endpoint_zeros = Vec::new();
    let mut interior_exact_zero = false;
    let mut signs: Vec<bool> = idx.iter().map(|&i| samples[i] < 0.0).collect();
    for (j, &i) in idx.iter().enumerate() {
        if samples[i].abs() <= EXACT_ZERO {
            if j == 0 || j == last {
                endpoint_zeros.push(i);
                let nb = if j == 0 { idx[1] } else { idx[last - 1] };
                signs[j] = samples[nb] < 0.0;
            } else {
                interior_exact_zero = true;
            }
        }
    }
    let mut brackets = Vec::new();
    for j in 0..last {
        if signs[j] != signs[j + 1] {
            brackets.push((idx[j], idx[j + 1]));
        }
    }
    let mut near_tangencies = 0;
    for j in 1..last {
        let (l, m, r) = (samples[idx[j - 1]], samples[idx[j]], samples[idx[j + 1]]);
        if m.abs() < TANGENCY
            && m.abs() <= l.abs()
            && m.abs() <= r.abs()
            && signs[j - 1] == signs[j]
            && signs[j] == signs[j + 1]
        {
            near_tangencies += 1;
        }
    }
    Scan {
        count: brackets.len() + endpoint_zeros.len(),
        brackets,
        endpoint_zeros,
        near_tangencies,
        interior_exact_zero,
    }
}

/// Counts zeros of `p` on `[a, b]` from sign changes on a uniform grid of
/// `factor · n_hint` intervals, doubling the grid until two consecutive
/// counts agree.
pub fn count_zeros<P: Evaluable + ?Sized>(
    p: &P,
    (a, b): (f64, f64),
    n_hint: usize,
    opts: &CountOptions,
) -> ZeroCountResult {
    let base = opts.factor.max(1) * n_hint.max(1);
    let mut level = 1;
    let mut samples = p.sample_uniform(a, b, base << level);
    let mut prev = scan(&samples, 2);
    let mut cur = scan(&samples, 1);
    let mut stable = prev.count == cur.count;
    while !stable && level < opts.max_doublings {
        level += 1;
        samples = p.sample_uniform(a, b, base << level);
        prev = cur;
        cur = scan(&samples, 1);
        stable = prev.count == cur.count;
    }
    let mut intervals = base << level;
    let mut shift = 0.0;
    if cur.interior_exact_zero {
        // a grid node sits on a root: move the interior nodes by half a cell
        let h = (b - a) / intervals as f64;
        let mut shifted = Vec::with_capacity(intervals + 2);
        shifted.push(samples[0]);
        for j in 0..intervals {
            shifted.push(p.value(a + (j as f64 + 0.5) * h));
        }
        shifted.push(samples[intervals]);
        samples = shifted;
        cur = scan(&samples, 1);
        shift = 0.5;
        intervals += 1;
    }
    let locations = if opts.refine {
        let h = (b - a) / (base << level) as f64;
        let node = |i: usize| -> f64 {
            if i == 0 {
                a
            } else if i == intervals {
                b
            } else {
                a + (i as f64 - shift) * h
            }
        };
        let mut locs: Vec<f64> = cur.endpoint_zeros.iter().map(|&i| node(i)).collect();
        for &(l, r) in &cur.brackets {
            locs.push(bisect(|t| p.value(t), node(l), node(r), opts.xtol));
        }
        locs.sort_by(f64::total_cmp);
        locs
    } else {
        Vec::new()
    };
    ZeroCountResult {
        count: cur.count,
        locations,
        grid_factor: opts.factor << level,
        stable,
        near_tangencies: cur.near_tangencies,
    }
}

/// `(count − mean)/√n`.
pub fn standardize_count(count: f64, expected_mean: f64, n: usize) -> f64 {
    (count - expected_mean) / (n as f64).sqrt()
}

/// Counts the zeros of a process on `[0, T]` in the original variable and of
/// the same process expressed in the Liouville variable on `[0, Ω(T)]`.
/// The two counts must agree.
pub fn count_zeros_changed_variable<P, Q>(
    original: &P,
    liouville: &Q,
    t_end: f64,
    omega_t: f64,
    n_hint: usize,
    opts: &CountOptions,
) -> Result<(usize, usize)>
where
    P: Evaluable + ?Sized,
    Q: Evaluable + ?Sized,
{
    let nx = count_zeros(original, (0.0, t_end), n_hint, opts).count;
    let ny = count_zeros(liouville, (0.0, omega_t), n_hint, opts).count;
    if nx != ny {
        return Err(Error::Invariant(format!(
            "zero counts differ under the change of variables: {nx} on [0, {t_end}] vs {ny} on [0, {omega_t}]"
        )));
    }
    Ok((nx, ny))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const FULL: (f64, f64) = (0.0, 2.0 * PI);

    #[test]
    fn half_cosine_has_one_zero_at_pi() {
        let r = count_zeros(&FromFn(|x: f64| (x / 2.0).cos()), FULL, 1, &CountOptions::default());
        assert_eq!(r.count, 1);
        assert!((r.locations[0] - PI).abs() < 1e-11);
        assert!(r.stable);
    }

    #[test]
    fn single_harmonic_has_two_zeros() {
        let (a, b) = (0.3, -1.7);
        let r = count_zeros(&FromFn(|x: f64| a * x.cos() + b * x.sin()), FULL, 2, &CountOptions::default());
        assert_eq!(r.count, 2);
        for z in &r.locations {
            assert!((a * z.cos() + b * z.sin()).abs() < 1e-11);
        }
    }

    #[test]
    fn constant_has_no_zeros() {
        let r = count_zeros(&FromFn(|_| 1.0), FULL, 5, &CountOptions::default());
        assert_eq!(r.count, 0);
        assert!(r.locations.is_empty());
    }

    #[test]
    fn root_on_a_grid_node_is_counted_once() {
        // sin(x − π/2) vanishes on the node π/2 of every dyadic grid of [0, 2π]
        let r = count_zeros(&FromFn(|x: f64| (x - PI / 2.0).sin()), FULL, 1, &CountOptions::default());
        assert_eq!(r.count, 2);
        assert!((r.locations[0] - PI / 2.0).abs() < 1e-11);
        assert!((r.locations[1] - 3.0 * PI / 2.0).abs() < 1e-11);
    }

    #[test]
    fn tangency_is_not_counted() {
        let r = count_zeros(&FromFn(|x: f64| (x - 1.0 - 3e-6).powi(2)), (0.0, 2.0), 1, &CountOptions::default());
        assert_eq!(r.count, 0);
        assert_eq!(r.near_tangencies, 1);
    }

    #[test]
    fn standardization_arithmetic() {
        assert_eq!(standardize_count(29.0, 29.0, 100), 0.0);
        assert!((standardize_count(30.0, 29.3, 100) - 0.07).abs() < 1e-12);
    }
}
