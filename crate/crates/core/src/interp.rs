//! Cubic Hermite interpolation on uniform grids.

/// Basis weights `(h00, h10, h01, h11)` for the value at local parameter `t ∈ [0,1]`.
#[inline]
pub fn hermite_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        2.0 * t3 - 3.0 * t2 + 1.0,
        t3 - 2.0 * t2 + t,
        -2.0 * t3 + 3.0 * t2,
        t3 - t2,
    ]
}

/// Basis weights for the derivative with respect to `t`.
#[inline]
pub fn hermite_dweights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    [
        6.0 * t2 - 6.0 * t,
        3.0 * t2 - 4.0 * t + 1.0,
        -6.0 * t2 + 6.0 * t,
        3.0 * t2 - 2.0 * t,
    ]
}

/// Locates `x` on the uniform grid `start + i*h`, `i < len`, returning the
/// left cell index and the local parameter in `[0, 1]`.
#[inline]
pub fn locate(x: f64, start: f64, h: f64, len: usize) -> (usize, f64) {
    let s = (x - start) / h;
    let last = len - 2;
    let i = if s <= 0.0 {
        0
    } else {
        (s.floor() as usize).min(last)
    };
    (i, s - i as f64)
}

/// Value and derivative of the Hermite interpolant of `(values, slopes)` at `x`.
#[inline]
pub fn hermite_eval(values: &[f64], slopes: &[f64], start: f64, h: f64, x: f64) -> (f64, f64) {
    let (i, t) = locate(x, start, h, values.len());
    let w = hermite_weights(t);
    let dw = hermite_dweights(t);
    let (y0, y1) = (values[i], values[i + 1]);
    let (d0, d1) = (slopes[i] * h, slopes[i + 1] * h);
    let v = w[0] * y0 + w[1] * d0 + w[2] * y1 + w[3] * d1;
    let d = (dw[0] * y0 + dw[1] * d0 + dw[2] * y1 + dw[3] * d1) / h;
    (v, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_cubics() {
        let f = |x: f64| 2.0 * x * x * x - x * x + 0.5;
        let df = |x: f64| 6.0 * x * x - 2.0 * x;
        let h = 0.25;
        let xs: Vec<f64> = (0..9).map(|i| i as f64 * h).collect();
        let v: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        let d: Vec<f64> = xs.iter().map(|&x| df(x)).collect();
        for k in 0..50 {
            let x = k as f64 * 2.0 / 49.0;
            let (a, b) = hermite_eval(&v, &d, 0.0, h, x);
            assert!((a - f(x)).abs() < 1e-13);
            assert!((b - df(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn locate_clamps_to_last_cell() {
        let (i, t) = locate(1.0, 0.0, 0.25, 5);
        assert_eq!(i, 3);
        assert!((t - 1.0).abs() < 1e-15);
    }
}
