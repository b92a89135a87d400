//! Piecewise-cubic interpolation helpers.

/// Index `i` with `xs[i] <= x <= xs[i+1]`, clamped to valid segments.
pub fn locate(xs: &[f64], x: f64) -> usize {
    debug_assert!(xs.len() >= 2);
    let k = xs.partition_point(|&v| v <= x);
    k.saturating_sub(1).min(xs.len() - 2)
}

/// Cubic Hermite value on `[x0, x1]` from end values and end slopes.
#[inline]
pub fn hermite(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

/// Derivative of [`hermite`] in `x`.
#[inline]
pub fn hermite_slope(x0: f64, x1: f64, y0: f64, y1: f64, d0: f64, d1: f64, x: f64) -> f64 {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let t2 = t * t;
    let dh00 = 6.0 * t2 - 6.0 * t;
    let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
    let dh01 = -6.0 * t2 + 6.0 * t;
    let dh11 = 3.0 * t2 - 2.0 * t;
    (dh00 * y0 + dh01 * y1) / h + dh10 * d0 + dh11 * d1
}

/// Fritsch–Carlson limiter: shrink node slopes so every Hermite segment is
/// monotone on data that is monotone.
pub fn limit_monotone(xs: &[f64], ys: &[f64], ds: &mut [f64]) {
    for i in 0..xs.len() - 1 {
        let delta = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
        if delta == 0.0 {
            ds[i] = 0.0;
            ds[i + 1] = 0.0;
            continue;
        }
        let alpha = ds[i] / delta;
        let beta = ds[i + 1] / delta;
        if alpha < 0.0 {
            ds[i] = 0.0;
        }
        if beta < 0.0 {
            ds[i + 1] = 0.0;
        }
        let (alpha, beta) = (alpha.max(0.0), beta.max(0.0));
        let r2 = alpha * alpha + beta * beta;
        if r2 > 9.0 {
            let tau = 3.0 / r2.sqrt();
            ds[i] = tau * alpha * delta;
            ds[i + 1] = tau * beta * delta;
        }
    }
}

/// Local four-point Lagrange interpolation on a (possibly nonuniform) grid.
pub fn lagrange4(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if n < 4 {
        let i = locate(xs, x);
        let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
        return ys[i] + t * (ys[i + 1] - ys[i]);
    }
    let i = locate(xs, x);
    let start = i.saturating_sub(1).min(n - 4);
    let mut acc = 0.0;
    for j in start..start + 4 {
        let mut l = 1.0;
        for k in start..start + 4 {
            if k != j {
                l *= (x - xs[k]) / (xs[j] - xs[k]);
            }
        }
        acc += l * ys[j];
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_reproduces_cubics() {
        let f = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x * x;
        let df = |x: f64| -2.0 + 1.5 * x * x;
        let (a, b) = (0.3, 1.1);
        for k in 0..=10 {
            let x = a + (b - a) * k as f64 / 10.0;
            let v = hermite(a, b, f(a), f(b), df(a), df(b), x);
            let s = hermite_slope(a, b, f(a), f(b), df(a), df(b), x);
            assert!((v - f(x)).abs() < 1e-14);
            assert!((s - df(x)).abs() < 1e-13);
        }
    }

    #[test]
    fn lagrange_reproduces_cubics_on_nonuniform_grid() {
        let xs: Vec<f64> = (0..12).map(|i| (i as f64 / 11.0).powi(2)).collect();
        let f = |x: f64| x * x * x - x + 0.25;
        let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        for k in 0..=50 {
            let x = k as f64 / 50.0;
            assert!((lagrange4(&xs, &ys, x) - f(x)).abs() < 1e-13);
        }
    }

    #[test]
    fn limiter_keeps_monotone_data_monotone() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [0.0, 0.1, 2.0, 2.05];
        let mut ds = [5.0, 5.0, 5.0, 5.0];
        limit_monotone(&xs, &ys, &mut ds);
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=300 {
            let x = k as f64 / 100.0;
            let i = locate(&xs, x);
            let v = hermite(xs[i], xs[i + 1], ys[i], ys[i + 1], ds[i], ds[i + 1], x);
            assert!(v >= prev - 1e-15);
            prev = v;
        }
    }

    #[test]
    fn locate_clamps() {
        let xs = [0.0, 1.0, 2.0];
        assert_eq!(locate(&xs, -1.0), 0);
        assert_eq!(locate(&xs, 0.5), 0);
        assert_eq!(locate(&xs, 1.0), 1);
        assert_eq!(locate(&xs, 2.0), 1);
        assert_eq!(locate(&xs, 5.0), 1);
    }
}
