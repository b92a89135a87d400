//! Time integration of the degenerate problem in `x`-coordinates and of the
//! transformed radial problem, with snapshot diagnostics.

mod radial;
mod x_solver;

use std::sync::Arc;

pub use radial::{map_u_to_w, map_w_to_u, RadialStepper};
pub use x_solver::{discrete_steady_state, Scheme, XStepper};

use crate::error::{Error, MembershipClause, Result};
use crate::functionals;
use crate::params::ModelParams;
use crate::weighted_norms::{sup_ratio, Grid, GridFn};

/// Slack allowed on cell slopes when validating initial data.
pub const INITIAL_MONO_TOL: f64 = 1e-12;

/// Solution of the `x`-coordinate problem at time `t`.
#[derive(Debug, Clone)]
pub struct PdeState {
    pub params: ModelParams,
    pub t: f64,
    pub u: GridFn,
}

/// Solution of the radial problem at (radial) time `t`.
#[derive(Debug, Clone)]
pub struct RadialState {
    pub params: ModelParams,
    pub t: f64,
    pub w: GridFn,
}

/// Run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolveConfig {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    /// Steps between snapshots while `dense_from <= t <= dense_until`.
    pub snapshot_every: usize,
    pub dense_from: f64,
    pub dense_until: f64,
    /// Ratio between consecutive snapshot times outside the dense range.
    pub snapshot_ratio: f64,
    pub mono_tol: f64,
    /// `sup u/x` above which the run stops as supercritical.
    pub blowup_threshold: f64,
    /// Maximum number of step halvings when a step produces non-finite values.
    pub max_halvings: u32,
    /// Keep the realized one-step increment after every snapshot.
    pub record_increments: bool,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            t_end: 10.0,
            scheme: Scheme::Imex,
            snapshot_every: 10,
            dense_from: 0.0,
            dense_until: 1.0,
            snapshot_ratio: 1.05,
            mono_tol: 1e-8,
            blowup_threshold: 1e3,
            max_halvings: 10,
            record_increments: true,
        }
    }
}

impl EvolveConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if self.snapshot_every == 0 {
            return bad("snapshot_every must be >= 1".into());
        }
        if !(self.snapshot_ratio > 1.0) {
            return bad(format!("snapshot_ratio must exceed 1, got {}", self.snapshot_ratio));
        }
        if !(self.mono_tol >= 0.0) {
            return bad(format!("mono_tol must be >= 0, got {}", self.mono_tol));
        }
        Ok(())
    }
}

/// Check that `u0` is admissible: `u0(0) = 0`, `u0(1) = m`, nondecreasing.
pub fn validate_initial(u0: GridFn, params: ModelParams) -> Result<PdeState> {
    let v = u0.values();
    let n = v.len() - 1;
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::Membership {
            clause: MembershipClause::Finite,
            detail: format!("u0[{i}] = {}", v[i]),
        });
    }
    if v[0] != 0.0 {
        return Err(Error::Membership {
            clause: MembershipClause::LeftBoundary,
            detail: format!("u0(0) = {}", v[0]),
        });
    }
    if (v[n] - params.mass()).abs() > 1e-14 * (1.0 + params.mass()) {
        return Err(Error::Membership {
            clause: MembershipClause::RightBoundary,
            detail: format!("u0(1) = {} but m = {}", v[n], params.mass()),
        });
    }
    if let Some((c, s)) = u0.slopes().iter().enumerate().find(|(_, s)| **s < -INITIAL_MONO_TOL) {
        return Err(Error::Membership {
            clause: MembershipClause::Monotone,
            detail: format!("cell {c} has slope {s}"),
        });
    }
    let mut u = u0;
    u.values_mut()[n] = params.mass();
    Ok(PdeState { params, t: 0.0, u })
}

/// One step of the IMEX scheme.
pub fn step_x(s: &PdeState, dt: f64) -> Result<PdeState> {
    let mut stepper = XStepper::new(s.u.grid(), &s.params, dt, Scheme::Imex)?;
    let mut u = s.u.clone();
    stepper.step(u.values_mut());
    check_finite(u.values(), s.t + dt)?;
    Ok(PdeState {
        params: s.params,
        t: s.t + dt,
        u,
    })
}

/// One IMEX step of the radial problem (`dt` in radial time).
pub fn step_w(s: &RadialState, dt: f64) -> Result<RadialState> {
    let stepper = RadialStepper::new(s.w.grid(), &s.params, dt, Scheme::Imex)?;
    let mut w = s.w.clone();
    stepper.step(w.values_mut());
    check_finite(w.values(), s.t + dt)?;
    Ok(RadialState {
        params: s.params,
        t: s.t + dt,
        w,
    })
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

fn check_finite(v: &[f64], t: f64) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        let (min, max) = min_max(v);
        Err(Error::Instability { t, min, max })
    }
}

/// Per-snapshot diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub min_slope: f64,
    pub sup_ratio: f64,
    /// `|u(0)| + |u(1) - m|`
    pub boundary_residual: f64,
    /// `G` for `N = 2`, `F` for `N >= 3`; `None` where undefined.
    pub lyapunov: Option<f64>,
}

impl Diagnostics {
    pub fn of(u: &GridFn, params: &ModelParams) -> Self {
        let v = u.values();
        let min_slope = u.slopes().iter().fold(f64::INFINITY, |m, &s| m.min(s));
        let lyapunov = if v.iter().all(|&x| x == 0.0) {
            // u = 0: both functionals vanish (0 ln 0 = 0)
            Some(0.0)
        } else {
            functionals::lyapunov(u, params).ok()
        };
        Self {
            min_slope,
            sup_ratio: sup_ratio(u),
            boundary_residual: v[0].abs() + (v[v.len() - 1] - params.mass()).abs(),
            lyapunov,
        }
    }
}

/// Stored solution sample.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub u: Vec<f64>,
    /// `(u(t + dt) - u(t)) / dt` for the step taken right after this snapshot.
    pub increment: Option<Vec<f64>>,
    pub diagnostics: Diagnostics,
}

/// How a run ended.
#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    SupercriticalDetected { t: f64, sup_ratio: f64 },
    Unstable { t: f64, min: f64, max: f64 },
}

/// Snapshot series of one run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub params: ModelParams,
    pub grid: Arc<Grid>,
    pub dt: f64,
    pub snapshots: Vec<Snapshot>,
    pub status: RunStatus,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn grid_fn(&self, k: usize) -> GridFn {
        GridFn::new(self.grid.clone(), self.snapshots[k].u.clone()).expect("snapshot matches grid")
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("a trajectory has at least the initial snapshot")
    }

    /// Turn an unstable run into an error.
    pub fn into_result(self) -> Result<Self> {
        match self.status {
            RunStatus::Unstable { t, min, max } => Err(Error::Instability { t, min, max }),
            _ => Ok(self),
        }
    }
}

/// Observer called on every snapshot; returning `false` stops the run.
pub trait RunHook {
    fn on_snapshot(&mut self, snapshot: &Snapshot, u: &GridFn) -> bool;
}

/// Hook that observes nothing.
pub struct NoHook;

impl RunHook for NoHook {
    fn on_snapshot(&mut self, _: &Snapshot, _: &GridFn) -> bool {
        true
    }
}

impl<F: FnMut(&Snapshot, &GridFn) -> bool> RunHook for F {
    fn on_snapshot(&mut self, snapshot: &Snapshot, u: &GridFn) -> bool {
        self(snapshot, u)
    }
}

struct SubSteppers {
    base: XStepper,
    halved: Vec<XStepper>,
}

impl SubSteppers {
    /// Advance one macro step, halving the sub-step on non-finite output.
    fn advance(&mut self, u: &mut [f64], grid: &Grid, params: &ModelParams, scheme: Scheme, max_halvings: u32) -> bool {
        let start = u.to_vec();
        self.base.step(u);
        if u.iter().all(|x| x.is_finite()) {
            return true;
        }
        for k in 1..=max_halvings as usize {
            if self.halved.len() < k {
                let dt = self.base.dt() / (1u64 << k) as f64;
                match XStepper::new(grid, params, dt, scheme) {
                    Ok(s) => self.halved.push(s),
                    Err(_) => return false,
                }
            }
            u.copy_from_slice(&start);
            let stepper = &mut self.halved[k - 1];
            for _ in 0..(1usize << k) {
                stepper.step(u);
            }
            if u.iter().all(|x| x.is_finite()) {
                return true;
            }
        }
        false
    }
}

/// Integrate from `initial` to `cfg.t_end`, taking snapshots on the
/// configured schedule.
pub fn run(initial: &PdeState, cfg: &EvolveConfig, hook: &mut dyn RunHook) -> Result<Trajectory> {
    cfg.validate()?;
    let params = initial.params;
    let grid = initial.u.grid().clone();
    let mut steppers = SubSteppers {
        base: XStepper::new(&grid, &params, cfg.dt, cfg.scheme)?,
        halved: Vec::new(),
    };
    let steps = (cfg.t_end / cfg.dt).round().max(1.0) as usize;
    let mut u = initial.u.values().to_vec();
    let mut snapshots: Vec<Snapshot> = Vec::new();
    let mut status = RunStatus::Completed;
    let mut next_geometric = cfg.snapshot_every as f64 * cfg.dt;

    let mut take = |t: f64, u: &[f64], snapshots: &mut Vec<Snapshot>| -> bool {
        let gf = GridFn::new(grid.clone(), u.to_vec()).expect("state matches grid");
        let snap = Snapshot {
            t,
            u: u.to_vec(),
            increment: None,
            diagnostics: Diagnostics::of(&gf, &params),
        };
        let keep_going = hook.on_snapshot(&snap, &gf);
        snapshots.push(snap);
        keep_going
    };

    let t0 = initial.t;
    if !take(t0, &u, &mut snapshots) {
        return Ok(Trajectory { params, grid, dt: cfg.dt, snapshots, status });
    }
    let mut pending_increment = cfg.record_increments.then_some(0);

    for k in 1..=steps {
        let before = pending_increment.map(|_| u.clone());
        let t = t0 + k as f64 * cfg.dt;
        if !steppers.advance(&mut u, &grid, &params, cfg.scheme, cfg.max_halvings) {
            let (min, max) = min_max(&u);
            status = RunStatus::Unstable { t, min, max };
            break;
        }
        if let (Some(idx), Some(prev)) = (pending_increment.take(), before) {
            let inc = u.iter().zip(&prev).map(|(a, b)| (a - b) / cfg.dt).collect();
            snapshots[idx].increment = Some(inc);
        }
        let ratio = u
            .iter()
            .zip(grid.nodes())
            .skip(1)
            .fold(0.0f64, |m, (v, x)| m.max(v / x));
        let elapsed = t - t0;
        let dense = elapsed >= cfg.dense_from - 1e-12 && elapsed <= cfg.dense_until + 1e-12;
        let due = if dense {
            k % cfg.snapshot_every == 0
        } else {
            elapsed >= next_geometric * (1.0 - 1e-12)
        };
        let blowup = ratio > cfg.blowup_threshold;
        if due || k == steps || blowup {
            if !dense {
                let min_gap = cfg.snapshot_every as f64 * cfg.dt;
                next_geometric = (elapsed * cfg.snapshot_ratio).max(elapsed + min_gap);
            }
            let go_on = take(t, &u, &mut snapshots);
            if cfg.record_increments && k < steps {
                pending_increment = Some(snapshots.len() - 1);
            }
            if blowup {
                status = RunStatus::SupercriticalDetected { t, sup_ratio: ratio };
                break;
            }
            if !go_on {
                break;
            }
        }
    }
    Ok(Trajectory {
        params,
        grid,
        dt: cfg.dt,
        snapshots,
        status,
    })
}

/// `series.csv`: `t,normL,normC1,lyapunov,min_ux,sup_ratio`, norms taken
/// against `reference`.
pub fn series_csv(traj: &Trajectory, reference: &GridFn) -> Result<String> {
    use crate::weighted_norms::{norm_c1, norm_l};
    let mut out = String::from("t,normL,normC1,lyapunov,min_ux,sup_ratio\n");
    for k in 0..traj.snapshots.len() {
        let s = &traj.snapshots[k];
        let e = traj.grid_fn(k).sub(reference)?;
        let d = &s.diagnostics;
        out.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            s.t,
            norm_l(&e, traj.params.q())?,
            norm_c1(&e),
            d.lyapunov.unwrap_or(f64::NAN),
            d.min_slope,
            d.sup_ratio
        ));
    }
    Ok(out)
}

/// `x,u` table of one snapshot.
pub fn snapshot_csv(nodes: &[f64], u: &[f64]) -> String {
    let mut out = String::from("x,u\n");
    for (x, v) in nodes.iter().zip(u) {
        out.push_str(&format!("{x:.16e},{v:.16e}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::SteadyProfile;

    fn uniform(n: usize) -> Arc<Grid> {
        Arc::new(Grid::uniform(n).unwrap())
    }

    fn linear(n: usize, dim: u32, m: f64) -> PdeState {
        let params = ModelParams::new(dim, m).unwrap();
        validate_initial(GridFn::from_fn(uniform(n), |x| m * x), params).unwrap()
    }

    #[test]
    fn initial_data_clauses() {
        let p = ModelParams::new(2, 1.0).unwrap();
        let g = uniform(16);
        let clause = |u: GridFn| match validate_initial(u, p) {
            Err(Error::Membership { clause, .. }) => Some(clause),
            _ => None,
        };
        assert_eq!(clause(GridFn::from_fn(g.clone(), |x| x + 0.1)), Some(MembershipClause::LeftBoundary));
        assert_eq!(clause(GridFn::from_fn(g.clone(), |x| 0.5 * x)), Some(MembershipClause::RightBoundary));
        assert_eq!(
            clause(GridFn::from_fn(g.clone(), |x| if (0.45..0.55).contains(&x) { x - 0.1 } else { x })),
            Some(MembershipClause::Monotone)
        );
        let mut bad = GridFn::from_fn(g.clone(), |x| x);
        bad.values_mut()[3] = f64::NAN;
        assert_eq!(clause(bad), Some(MembershipClause::Finite));
        assert!(validate_initial(GridFn::from_fn(g, |x| x), p).is_ok());
    }

    #[test]
    fn zero_mass_stays_zero() {
        let s = linear(64, 3, 0.0);
        let cfg = EvolveConfig { t_end: 0.05, dt: 1e-3, snapshot_every: 5, ..Default::default() };
        let tr = run(&s, &cfg, &mut NoHook).unwrap();
        assert_eq!(tr.status, RunStatus::Completed);
        for snap in &tr.snapshots {
            assert!(snap.u.iter().all(|&v| v == 0.0));
            let d = snap.diagnostics;
            assert_eq!((d.min_slope, d.sup_ratio, d.boundary_residual, d.lyapunov), (0.0, 0.0, 0.0, Some(0.0)));
        }
    }

    #[test]
    fn snapshot_schedule_and_increments() {
        let s = linear(64, 2, 1.0);
        let cfg = EvolveConfig { t_end: 0.5, dt: 1e-3, dense_until: 0.1, ..Default::default() };
        let tr = run(&s, &cfg, &mut NoHook).unwrap();
        let t = tr.times();
        assert_eq!(t[0], 0.0);
        assert!((t[1] - 0.01).abs() < 1e-12 && (t[10] - 0.1).abs() < 1e-12);
        assert!(t.windows(2).all(|w| w[1] > w[0]));
        assert!((t[t.len() - 1] - 0.5).abs() < 1e-12);
        let late: Vec<f64> = t.windows(2).filter(|w| w[0] > 0.1 + 1e-9).map(|w| w[1] / w[0]).collect();
        assert!(late[..late.len() - 1].iter().all(|r| *r >= 1.05 - 1e-9));
        assert!(tr.snapshots[..t.len() - 1].iter().all(|s| s.increment.is_some()));
        assert!(tr.last().increment.is_none());
    }

    #[test]
    fn hook_can_stop_the_run() {
        let s = linear(32, 2, 1.0);
        let mut seen = 0;
        let mut hook = |_: &Snapshot, _: &GridFn| {
            seen += 1;
            seen < 3
        };
        let tr = run(&s, &EvolveConfig { t_end: 1.0, dt: 1e-3, ..Default::default() }, &mut hook).unwrap();
        assert_eq!(tr.snapshots.len(), 3);
    }

    #[test]
    fn step_x_matches_stepper() {
        let s = linear(128, 3, 0.5);
        let one = step_x(&s, 1e-3).unwrap();
        let mut st = XStepper::new(s.u.grid(), &s.params, 1e-3, Scheme::Imex).unwrap();
        let mut u = s.u.values().to_vec();
        st.step(&mut u);
        assert_eq!(one.u.values(), &u[..]);
        assert!((one.t - 1e-3).abs() < 1e-15);
        assert_eq!(one.u.values()[0], 0.0);
        assert_eq!(*one.u.values().last().unwrap(), 0.5);
    }

    #[test]
    fn imex_is_first_order_in_time() {
        let s = linear(64, 2, 1.0);
        let at = |dt: f64| {
            let cfg = EvolveConfig { t_end: 0.2, dt, ..Default::default() };
            run(&s, &cfg, &mut NoHook).unwrap().last().u.clone()
        };
        let (a, b, c) = (at(4e-3), at(2e-3), at(1e-3));
        let diff = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        let ratio = diff(&a, &b) / diff(&b, &c);
        assert!((ratio - 2.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn explicit_and_imex_agree_for_small_steps() {
        let s = linear(32, 3, 0.5);
        let dt = 1e-5;
        let imex = run(&s, &EvolveConfig { t_end: 0.05, dt, ..Default::default() }, &mut NoHook).unwrap();
        let expl = run(
            &s,
            &EvolveConfig { t_end: 0.05, dt, scheme: Scheme::Explicit, ..Default::default() },
            &mut NoHook,
        )
        .unwrap();
        let (a, b) = (&imex.last().u, &expl.last().u);
        let d = a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(d < 1e-5, "{d}");
    }

    #[test]
    fn explicit_blowup_without_halving_is_unstable() {
        let s = linear(256, 2, 1.0);
        let cfg = EvolveConfig { t_end: 1.0, dt: 0.1, scheme: Scheme::Explicit, max_halvings: 0, ..Default::default() };
        let tr = run(&s, &cfg, &mut NoHook).unwrap();
        assert!(matches!(tr.status, RunStatus::Unstable { .. }) || matches!(tr.status, RunStatus::SupercriticalDetected { .. }));
        assert!(tr.snapshots[0].u.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn supercritical_mass_is_detected() {
        let s = linear(256, 2, 2.5);
        let cfg = EvolveConfig { t_end: 20.0, dt: 1e-4, ..Default::default() };
        let tr = run(&s, &cfg, &mut NoHook).unwrap();
        assert!(matches!(tr.status, RunStatus::SupercriticalDetected { .. }), "{:?}", tr.status);
    }

    #[test]
    fn steady_state_barely_moves() {
        let prof = SteadyProfile::build(2, 1e-10).unwrap();
        let g = uniform(256);
        let params = ModelParams::new(2, 1.0).unwrap();
        let u0 = GridFn::try_from_fn(g.clone(), |x| prof.eval_u(2.0, x)).unwrap();
        let s = validate_initial(u0.clone(), params).unwrap();
        let tr = run(&s, &EvolveConfig { t_end: 0.5, dt: 1e-3, ..Default::default() }, &mut NoHook).unwrap();
        let drift = tr.grid_fn(tr.snapshots.len() - 1).sub(&u0).unwrap().max_abs();
        assert!(drift < 1e-10, "{drift}");
        let fixed = discrete_steady_state(&g, &params, u0.values()).unwrap();
        let mut st = XStepper::new(&g, &params, 1e-3, Scheme::Imex).unwrap();
        let r = st.rhs(&fixed);
        let worst = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // rounding in the second difference is about eps / dx^2
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn radial_maps_round_trip() {
        for dim in [2u32, 3] {
            let params = ModelParams::new(dim, 0.4).unwrap();
            let xg = uniform(512);
            let u = GridFn::from_fn(xg.clone(), |x| 0.4 * x * (2.0 - x));
            let s = PdeState { params, t: 0.9, u };
            let w = map_u_to_w(&s, uniform(512)).unwrap();
            assert!((w.t - 0.9 / (dim * dim) as f64).abs() < 1e-15);
            // w(r) = 0.4 (2 - r^N)
            let x1 = 1.0 / 512.0;
            for (r, v) in w.w.nodes().iter().zip(w.w.values()) {
                let err = (v - 0.4 * (2.0 - r.powi(dim as i32))).abs();
                // inside the first x-cell the slope there is used
                let tol = if r.powi(dim as i32) <= x1 { 0.8 * x1 } else { 1e-8 };
                assert!(err < tol, "r={r}: {err}");
            }
            let back = map_w_to_u(&w, xg).unwrap();
            assert!((back.t - 0.9).abs() < 1e-14);
            assert!(back.u.sub(&s.u).unwrap().max_abs() < 1e-6);
        }
    }

    #[test]
    fn radial_solver_needs_uniform_grid() {
        let params = ModelParams::new(2, 1.0).unwrap();
        let g = Grid::graded(64, 2.0).unwrap();
        assert!(RadialStepper::new(&g, &params, 1e-4, Scheme::Imex).is_err());
    }

    #[test]
    fn invalid_configs() {
        let s = linear(16, 2, 1.0);
        for cfg in [
            EvolveConfig { dt: 0.0, ..Default::default() },
            EvolveConfig { t_end: -1.0, ..Default::default() },
            EvolveConfig { snapshot_every: 0, ..Default::default() },
            EvolveConfig { snapshot_ratio: 1.0, ..Default::default() },
        ] {
            assert!(matches!(run(&s, &cfg, &mut NoHook), Err(Error::InvalidParameter(_))));
        }
    }

    #[test]
    fn csv_layouts() {
        let s = linear(16, 2, 1.0);
        let tr = run(&s, &EvolveConfig { t_end: 0.01, dt: 1e-3, ..Default::default() }, &mut NoHook).unwrap();
        let text = series_csv(&tr, &s.u).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,normL,normC1,lyapunov,min_ux,sup_ratio"));
        assert!(lines.next().unwrap().starts_with("0.0000000000000000e0,0.0000000000000000e0,"));
        assert_eq!(snapshot_csv(&[0.0, 1.0], &[0.0, 1.0]), "x,u\n0.0000000000000000e0,0.0000000000000000e0\n1.0000000000000000e0,1.0000000000000000e0\n");
    }
}
