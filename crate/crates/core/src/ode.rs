//! Adaptive Dormand-Prince 5(4) integrator for small fixed-size systems.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// 5th minus embedded 4th order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
}

/// Stepper state: keeps the last proposed step size across calls so that
/// consecutive short segments do not restart from a tiny step.
#[derive(Debug, Clone)]
pub struct DormandPrince<const N: usize> {
    tol: Tolerance,
    h: f64,
    min_step: f64,
    pub steps: usize,
}

#[inline]
fn axpy<const N: usize>(y: &[f64; N], terms: &[(f64, &[f64; N])], h: f64) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

impl<const N: usize> DormandPrince<N> {
    pub fn new(tol: Tolerance, initial_step: f64) -> Self {
        DormandPrince {
            tol,
            h: initial_step,
            min_step: 1e-14,
            steps: 0,
        }
    }

    /// Integrates `y` from `t0` to `t1` in place.
    pub fn integrate<F>(&mut self, f: &F, t0: f64, t1: f64, y: &mut [f64; N]) -> Result<()>
    where
        F: Fn(f64, &[f64; N]) -> [f64; N],
    {
        let mut t = t0;
        let mut k1 = f(t, y);
        while t < t1 {
            let remaining = t1 - t;
            let last = self.h >= remaining;
            let h = if last { remaining } else { self.h };

            let k2 = f(t + C2 * h, &axpy(y, &[(A21, &k1)], h));
            let k3 = f(t + C3 * h, &axpy(y, &[(A31, &k1), (A32, &k2)], h));
            let k4 = f(t + C4 * h, &axpy(y, &[(A41, &k1), (A42, &k2), (A43, &k3)], h));
            let k5 = f(
                t + C5 * h,
                &axpy(y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], h),
            );
            let k6 = f(
                t + h,
                &axpy(y, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], h),
            );
            let y_new = axpy(y, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], h);
            let k7 = f(t + h, &y_new);

            let mut err = 0.0f64;
            for i in 0..N {
                let e = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.tol.abs + self.tol.rel * y[i].abs().max(y_new[i].abs());
                err = err.max((e / sc).abs());
            }
            if !err.is_finite() {
                return Err(Error::Numeric(format!("non-finite state at t = {t}")));
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if err <= 1.0 {
                t = if last { t1 } else { t + h };
                *y = y_new;
                k1 = k7;
                self.steps += 1;
                // a step clipped to the segment end says nothing about the natural size
                if !last || factor < 1.0 {
                    self.h = h * factor;
                }
            } else {
                self.h = h * factor.min(1.0);
                if self.h < self.min_step {
                    return Err(Error::Numeric(format!(
                        "step size underflow at t = {t} (h = {:e}, error ratio {err:e})",
                        self.h
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_one_period() {
        let f = |_t: f64, y: &[f64; 2]| [y[1], -4.0 * y[0]];
        let mut y = [1.0, 0.0];
        let mut dp = DormandPrince::new(Tolerance { rel: 1e-11, abs: 1e-12 }, 1e-3);
        dp.integrate(&f, 0.0, std::f64::consts::PI, &mut y).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-9);
        assert!(y[1].abs() < 1e-8);
    }

    #[test]
    fn segments_match_single_run() {
        let f = |t: f64, y: &[f64; 1]| [t.cos() * y[0]];
        let tol = Tolerance { rel: 1e-12, abs: 1e-13 };
        let mut a = [1.0];
        DormandPrince::new(tol, 0.01).integrate(&f, 0.0, 3.0, &mut a).unwrap();
        let mut b = [1.0];
        let mut dp = DormandPrince::new(tol, 0.01);
        for i in 0..300 {
            dp.integrate(&f, i as f64 * 0.01, (i + 1) as f64 * 0.01, &mut b).unwrap();
        }
        let exact = 3.0f64.sin().exp();
        assert!((a[0] - exact).abs() < 1e-10);
        assert!((b[0] - exact).abs() < 1e-10);
    }
}
