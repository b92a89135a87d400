//! Dormand–Prince 5(4) embedded Runge–Kutta stepping for small fixed-size
//! systems, with per-step error estimates for adaptive control.

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
// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Result of one trial step.
#[derive(Debug, Clone, Copy)]
pub struct Step<const D: usize> {
    pub y: [f64; D],
    pub err: [f64; D],
}

fn axpy<const D: usize>(y: &[f64; D], h: f64, terms: &[(f64, &[f64; D])]) -> [f64; D] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..D {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// One Dormand–Prince step of length `h` from `(x, y)`.
pub fn dopri5_step<const D: usize, F>(f: &F, x: f64, y: &[f64; D], h: f64) -> Step<D>
where
    F: Fn(f64, &[f64; D]) -> [f64; D],
{
    let k1 = f(x, y);
    let k2 = f(x + C2 * h, &axpy(y, h, &[(A21, &k1)]));
    let k3 = f(x + C3 * h, &axpy(y, h, &[(A31, &k1), (A32, &k2)]));
    let k4 = f(x + C4 * h, &axpy(y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
    let k5 = f(
        x + C5 * h,
        &axpy(y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
    );
    let k6 = f(
        x + h,
        &axpy(y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
    );
    let y_new = axpy(y, h, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
    let k7 = f(x + h, &y_new);
    let mut err = [0.0; D];
    for i in 0..D {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    Step { y: y_new, err }
}

/// Scaled RMS error norm used by the step-size controller.
pub fn error_norm<const D: usize>(step: &Step<D>, y_old: &[f64; D], atol: f64, rtol: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..D {
        let sc = atol + rtol * y_old[i].abs().max(step.y[i].abs());
        acc += (step.err[i] / sc).powi(2);
    }
    (acc / D as f64).sqrt()
}

/// Integrate from `x0` to `x1` with adaptive substeps. Returns the state at
/// `x1`, or the last accepted abscissa if the step size underflows.
pub fn integrate<const D: usize, F>(
    f: &F,
    x0: f64,
    y0: [f64; D],
    x1: f64,
    atol: f64,
    rtol: f64,
) -> Result<[f64; D], f64>
where
    F: Fn(f64, &[f64; D]) -> [f64; D],
{
    let mut x = x0;
    let mut y = y0;
    let mut h = x1 - x0;
    let span = (x1 - x0).abs();
    let mut rejects = 0usize;
    while (x1 - x).abs() > 1e-15 * span.max(x1.abs()) {
        if (x + h - x1) * h.signum() > 0.0 {
            h = x1 - x;
        }
        let step = dopri5_step(f, x, &y, h);
        let e = error_norm(&step, &y, atol, rtol);
        if !e.is_finite() || step.y.iter().any(|v| !v.is_finite()) {
            h *= 0.25;
            rejects += 1;
        } else if e <= 1.0 {
            x += h;
            y = step.y;
            let fac = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
            h *= fac;
        } else {
            h *= (0.9 * e.powf(-0.2)).clamp(0.1, 0.9);
            rejects += 1;
        }
        if h.abs() < 1e-14 * span.max(x.abs()) || rejects > 10_000 {
            return Err(x);
        }
    }
    Ok(y)
}
