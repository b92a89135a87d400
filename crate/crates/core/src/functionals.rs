//! Lyapunov functionals, the metric `g_u` and the dissipation identity.

use crate::error::{Error, Result};
use crate::evolution::Trajectory;
use crate::params::{pow_q, ModelParams};
use crate::weighted_norms::{GridFn, PowerWeightCells};

/// Slopes at or below this value make `G` undefined.
pub const SLOPE_FLOOR: f64 = 1e-14;

/// Value of a Lyapunov functional at a snapshot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovSample {
    pub t: f64,
    pub value: f64,
    /// Finite-difference `d/dt` of `value`.
    pub dissipation_estimate: f64,
}

fn cell_form(w: &[f64; 3], fa: f64, fb: f64, ga: f64, gb: f64) -> f64 {
    let mut v = fb * gb * w[2];
    if fa != 0.0 || ga != 0.0 {
        v += fa * ga * w[0] + (fa * gb + fb * ga) * w[1];
    }
    v
}

fn check_origin(u: &GridFn) -> Result<()> {
    let u0 = u.values()[0];
    if u0 != 0.0 {
        return Err(Error::DivergentWeight { h0: u0 });
    }
    Ok(())
}

/// `F[u] = int u'^{2-q} / ((2-q)(1-q)) - u^2 / (2 x^{2-q})` for `N >= 3`.
pub fn f_energy(u: &GridFn, params: &ModelParams) -> Result<f64> {
    if params.dim() < 3 {
        return Err(Error::WrongFunctional { n: params.dim() });
    }
    check_origin(u)?;
    let q = params.q();
    let grid = u.grid();
    let c = 1.0 / ((2.0 - q) * (1.0 - q));
    let gradient: f64 = u
        .slopes()
        .iter()
        .enumerate()
        .map(|(k, s)| s.max(0.0).powf(2.0 - q) * grid.width(k))
        .sum();
    let cells = PowerWeightCells::new(grid, q - 2.0);
    let potential = cells.bilinear(u.values(), u.values())?;
    Ok(c * gradient - 0.5 * potential)
}

/// `G[u] = int u' (ln u' - 1) - u^2 / (2x)` for `N = 2`.
pub fn g_energy(u: &GridFn) -> Result<f64> {
    check_origin(u)?;
    let grid = u.grid();
    let mut gradient = 0.0;
    for (k, s) in u.slopes().iter().enumerate() {
        if !(*s > SLOPE_FLOOR) {
            return Err(Error::NonpositiveSlope { cell: k, slope: *s });
        }
        gradient += s * (s.ln() - 1.0) * grid.width(k);
    }
    let cells = PowerWeightCells::new(grid, -1.0);
    let potential = cells.bilinear(u.values(), u.values())?;
    Ok(gradient - 0.5 * potential)
}

/// `G[u1] - G[u0]` evaluated in difference form, accurate when the two
/// states are close.
pub fn g_energy_difference(u0: &GridFn, u1: &GridFn) -> Result<f64> {
    check_origin(u0)?;
    check_origin(u1)?;
    let du = u1.sub(u0)?;
    let grid = u0.grid();
    let (s0, ds) = (u0.slopes(), du.slopes());
    let mut gradient = 0.0;
    for (k, (a, d)) in s0.iter().zip(&ds).enumerate() {
        let b = a + d;
        if !(*a > SLOPE_FLOOR) || !(b > SLOPE_FLOOR) {
            let slope = if *a > SLOPE_FLOOR { b } else { *a };
            return Err(Error::NonpositiveSlope { cell: k, slope });
        }
        // b ln b - a ln a - (b - a) = d ln a + b ln(1 + d/a) - d
        gradient += (d * a.ln() + b * (d / a).ln_1p() - d) * grid.width(k);
    }
    let sum = u1.add(u0)?;
    let cells = PowerWeightCells::new(grid, -1.0);
    let potential = cells.bilinear(du.values(), sum.values())?;
    Ok(gradient - 0.5 * potential)
}

/// `G` for `N = 2`, `F` otherwise.
pub fn lyapunov(u: &GridFn, params: &ModelParams) -> Result<f64> {
    if params.dim() == 2 {
        g_energy(u)
    } else {
        f_energy(u, params)
    }
}

/// `g_u(h, k) = int h k / (x^{2-q} u'^q)` with `u'` constant per cell.
pub fn metric_g(u: &GridFn, h: &GridFn, k: &GridFn, params: &ModelParams) -> Result<f64> {
    h.same_grid(u)?;
    k.same_grid(u)?;
    let (hv, kv) = (h.values(), k.values());
    if hv[0] != 0.0 || kv[0] != 0.0 {
        let h0 = if hv[0] != 0.0 { hv[0] } else { kv[0] };
        return Err(Error::DivergentWeight { h0 });
    }
    let q = params.q();
    let cells = PowerWeightCells::new(u.grid(), q - 2.0);
    let mut acc = 0.0;
    for (c, (s, w)) in u.slopes().iter().zip(cells.cells()).enumerate() {
        if !(*s > 0.0) {
            return Err(Error::NonpositiveSlope { cell: c, slope: *s });
        }
        acc += cell_form(w, hv[c], hv[c + 1], kv[c], kv[c + 1]) / pow_q(*s, q);
    }
    Ok(acc)
}

/// `int u_t^2 / (x u_x)` with `u_t` piecewise linear and `u_x` per cell.
pub fn dissipation_g(u: &GridFn, ut: &[f64]) -> Result<f64> {
    let cells = PowerWeightCells::new(u.grid(), -1.0);
    let mut acc = 0.0;
    for (c, (s, w)) in u.slopes().iter().zip(cells.cells()).enumerate() {
        if !(*s > SLOPE_FLOOR) {
            return Err(Error::NonpositiveSlope { cell: c, slope: *s });
        }
        acc += cell_form(w, ut[c], ut[c + 1], ut[c], ut[c + 1]) / s;
    }
    Ok(acc)
}

/// Lyapunov values along a trajectory, with centred differences for the
/// time derivative (one-sided at the ends).
pub fn lyapunov_series(traj: &Trajectory) -> Result<Vec<LyapunovSample>> {
    let n = traj.snapshots.len();
    let mut values = Vec::with_capacity(n);
    for k in 0..n {
        values.push(lyapunov(&traj.grid_fn(k), &traj.params)?);
    }
    let t = traj.times();
    Ok((0..n)
        .map(|k| {
            let (lo, hi) = (k.saturating_sub(1), (k + 1).min(n - 1));
            let d = if hi > lo {
                (values[hi] - values[lo]) / (t[hi] - t[lo])
            } else {
                0.0
            };
            LyapunovSample {
                t: t[k],
                value: values[k],
                dissipation_estimate: d,
            }
        })
        .collect())
}

/// One interval of the `G` dissipation check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipationInterval {
    pub t0: f64,
    pub t1: f64,
    /// `(G(t1) - G(t0)) / (t1 - t0)`
    pub rate: f64,
    /// `int u_t^2/(x u_x)` at `t0`
    pub dissipation: f64,
    /// `|rate + dissipation|`
    pub residual: f64,
}

/// Compare `dG/dt` with `-int u_t^2/(x u_x)` on consecutive snapshot pairs,
/// using the increment recorded at the left snapshot. Pairs whose left
/// snapshot has no increment or where `G` is undefined are skipped.
pub fn dissipation_residual_g(traj: &Trajectory) -> Vec<DissipationInterval> {
    let mut out = Vec::new();
    if traj.params.dim() != 2 {
        return out;
    }
    for k in 0..traj.snapshots.len().saturating_sub(1) {
        let (s0, s1) = (&traj.snapshots[k], &traj.snapshots[k + 1]);
        let Some(inc) = s0.increment.as_ref() else {
            continue;
        };
        let u0 = traj.grid_fn(k);
        let (Ok(dg), Ok(dissipation)) = (g_energy_difference(&u0, &traj.grid_fn(k + 1)), dissipation_g(&u0, inc)) else {
            continue;
        };
        let rate = dg / (s1.t - s0.t);
        out.push(DissipationInterval {
            t0: s0.t,
            t1: s1.t,
            rate,
            dissipation,
            residual: (rate + dissipation).abs(),
        });
    }
    out
}
