//! Small-grid invariant suite for CI.

use std::str::FromStr;
use std::sync::Arc;

use pkslab_core::evolution::{discrete_steady_state, map_u_to_w, map_w_to_u, validate_initial, RadialStepper, Scheme, XStepper};
use pkslab_core::functionals::lyapunov;
use pkslab_core::spectrum::{beesack_residual, lambda1_synthetic, lemma41_residual, SpectralPencil};
use pkslab_core::{Grid, GridFn, ModelParams, SteadyProfile};

use crate::commands::PROFILE_TOL;
use crate::error::{CliError, Result};

/// A deliberate defect, used to check that the suite notices it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    /// Negated stiffness weight in the pencil.
    PencilSign,
    /// The right boundary value of one solution drops by 1% every step.
    BoundaryLeak,
}

impl FromStr for Mutation {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pencil-sign" => Ok(Mutation::PencilSign),
            "boundary-leak" => Ok(Mutation::BoundaryLeak),
            _ => Err(CliError::Config(format!("unknown mutation '{s}' (pencil-sign | boundary-leak)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroupResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

struct Ctx {
    profiles: Vec<SteadyProfile>,
    mutation: Option<Mutation>,
}

impl Ctx {
    fn profile(&self, dim: u32) -> &SteadyProfile {
        &self.profiles[(dim - 2) as usize]
    }

    /// Half of the dilation of mass `0.9 M`.
    fn a_mid(&self, dim: u32) -> Result<f64> {
        let p = self.profile(dim);
        Ok(0.5 * p.solve_a_of_m(0.9 * p.critical_mass())?)
    }
}

fn uniform(n: usize) -> Result<Arc<Grid>> {
    Ok(Arc::new(Grid::uniform(n)?))
}

fn profiles_group(ctx: &Ctx) -> Result<GroupResult> {
    let p2 = ctx.profile(2);
    let err = (0..=1000)
        .map(|i| {
            let x = 64.0 * i as f64 / 1000.0;
            p2.u1(x).map(|u| (u - x / (1.0 + x / 2.0)).abs())
        })
        .collect::<pkslab_core::Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0f64, f64::max);
    let p3 = ctx.profile(3);
    let pass = err <= 1e-8
        && (p2.critical_mass() - 2.0).abs() <= 1e-10
        && p3.threshold().is_finite()
        && (p3.critical_mass() - 1.16523).abs() <= 1e-4;
    Ok(GroupResult {
        name: "profiles",
        pass,
        detail: format!(
            "N=2 closed-form error {err:.1e}, M(2) = {:.10}; N=3 A = {:.4}, M = {:.6}",
            p2.critical_mass(),
            p3.threshold(),
            p3.critical_mass()
        ),
    })
}

fn spectrum_group(ctx: &Ctx) -> Result<GroupResult> {
    let g = uniform(256)?;
    let mut values = Vec::new();
    for dim in [2u32, 3, 4] {
        let p = ctx.profile(dim);
        let a = ctx.a_mid(dim)?;
        let q = p.q();
        let sign = if ctx.mutation == Some(Mutation::PencilSign) { -1.0 } else { 1.0 };
        let pencil = SpectralPencil::with_weights(g.clone(), |x| Ok(sign / p.eval_du(a, x)?.powf(q)), q - 2.0)?;
        values.push(pencil.kth_eigenvalue(1, 0.0));
    }
    let pass = values.iter().all(|l| *l > 1.0);
    Ok(GroupResult {
        name: "spectrum",
        pass,
        detail: format!(
            "lambda1 at a = A_eff/2, n = 256: N=2 {:.6}, N=3 {:.6}, N=4 {:.6} (each must exceed 1{})",
            values[0],
            values[1],
            values[2],
            if pass { "" } else { "; lambda1 <= 1 found" }
        ),
    })
}

fn hardy_group() -> Result<GroupResult> {
    let r = lambda1_synthetic(Arc::new(Grid::graded(1024, 8.0)?), -2.0)?;
    let dev = (r.lambda1 - 0.25).abs();
    Ok(GroupResult {
        name: "hardy",
        pass: dev <= 1e-2,
        detail: format!("unit-weight pencil against x^-2: lambda1 = {:.6}", r.lambda1),
    })
}

fn identities_group(ctx: &Ctx) -> Result<GroupResult> {
    let g = uniform(512)?;
    let mut h = GridFn::from_fn(g, |x| {
        let pi = std::f64::consts::PI;
        (pi * x).sin() + 0.3 * (3.0 * pi * x).sin()
    });
    let last = h.values().len() - 1;
    h.values_mut()[last] = 0.0;
    let mut worst = 0.0f64;
    for dim in [2u32, 3, 4] {
        let a = ctx.a_mid(dim)?;
        let p = ctx.profile(dim);
        worst = worst.max(beesack_residual(&h, a, p)?).max(lemma41_residual(&h, a, p)?);
    }
    Ok(GroupResult {
        name: "identities",
        pass: worst <= 1e-4,
        detail: format!("largest integration-by-parts residual at n = 512: {worst:.2e}"),
    })
}

fn steady_samples(p: &SteadyProfile, m: f64, g: &Arc<Grid>) -> Result<GridFn> {
    let a = p.solve_a_of_m(m)?;
    let mut u = GridFn::try_from_fn(g.clone(), |x| p.eval_u(a, x))?;
    let last = u.values().len() - 1;
    u.values_mut()[last] = m;
    Ok(u)
}

fn steady_group(ctx: &Ctx) -> Result<GroupResult> {
    let g = uniform(256)?;
    let mut sampled = Vec::new();
    let mut discrete = Vec::new();
    for dim in [2u32, 3] {
        let p = ctx.profile(dim);
        let m = 0.5 * p.critical_mass();
        let params = ModelParams::new(dim, m)?;
        let u0 = steady_samples(p, m, &g)?;
        let fixed = discrete_steady_state(&g, &params, u0.values())?;
        for (start, out) in [(u0.values().to_vec(), &mut sampled), (fixed, &mut discrete)] {
            let mut u = start.clone();
            let mut stepper = XStepper::new(&g, &params, 1e-4, Scheme::Imex)?;
            for _ in 0..5000 {
                stepper.step(&mut u);
            }
            out.push(u.iter().zip(&start).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        }
    }
    let pass = sampled.iter().all(|d| *d <= 1e-4) && discrete.iter().all(|d| *d <= 1e-10);
    Ok(GroupResult {
        name: "steady",
        pass,
        detail: format!(
            "drift over t = 0.5 of sampled U_a: N=2 {:.1e}, N=3 {:.1e}; of the discrete fixed point: {:.1e}, {:.1e}",
            sampled[0], sampled[1], discrete[0], discrete[1]
        ),
    })
}

/// Ordered pairs stepped side by side; returns the comparison and the
/// Lyapunov results.
fn evolution_groups(ctx: &Ctx) -> Result<(GroupResult, GroupResult)> {
    let g = uniform(128)?;
    let dt = 1e-4;
    let mut violation = f64::NEG_INFINITY;
    let mut increase = f64::NEG_INFINITY;
    for dim in [2u32, 3] {
        let p = ctx.profile(dim);
        let m = 0.5 * p.critical_mass();
        let params = ModelParams::new(dim, m)?;
        let pairs = [
            (GridFn::from_fn(g.clone(), |x| m * x * x), GridFn::from_fn(g.clone(), |x| m * x)),
            (GridFn::from_fn(g.clone(), |x| m * x.powi(3)), steady_samples(p, m, &g)?),
        ];
        for (lo, hi) in pairs {
            let mut lo = validate_initial(lo, params)?.u.into_values();
            let mut hi = validate_initial(hi, params)?.u.into_values();
            let n = hi.len() - 1;
            let mut s_lo = XStepper::new(&g, &params, dt, Scheme::Imex)?;
            let mut s_hi = s_lo.clone();
            let mut last_v = lyapunov(&GridFn::new(g.clone(), hi.clone())?, &params)?;
            for k in 1..=10_000 {
                s_lo.step(&mut lo);
                s_hi.step(&mut hi);
                if ctx.mutation == Some(Mutation::BoundaryLeak) {
                    hi[n] *= 0.99;
                }
                violation = lo.iter().zip(&hi).map(|(a, b)| a - b).fold(violation, f64::max);
                if k % 100 == 0 && ctx.mutation.is_none() {
                    let v = lyapunov(&GridFn::new(g.clone(), hi.clone())?, &params)?;
                    increase = increase.max((v - last_v) / (1.0 + last_v.abs()));
                    last_v = v;
                }
            }
        }
    }
    let comparison = GroupResult {
        name: "comparison",
        pass: violation <= 1e-10,
        detail: format!("4 ordered pairs to t = 1: max(u_lo - u_hi) = {violation:.2e}"),
    };
    let lyap = if ctx.mutation.is_some() {
        GroupResult {
            name: "lyapunov",
            pass: true,
            detail: "skipped under mutation".into(),
        }
    } else {
        GroupResult {
            name: "lyapunov",
            pass: increase <= 1e-8,
            detail: format!("largest relative increase of the functional: {increase:.1e}"),
        }
    };
    Ok((comparison, lyap))
}

fn cross_solver_group() -> Result<GroupResult> {
    let g = uniform(256)?;
    let params = ModelParams::new(2, 1.0)?;
    let dt = 1e-4;
    let s = validate_initial(GridFn::from_fn(g.clone(), |x| x), params)?;
    let mut w = map_u_to_w(&s, g.clone())?;
    let mut u = s.u.into_values();
    let mut xs = XStepper::new(&g, &params, dt, Scheme::Imex)?;
    let rs = RadialStepper::new(w.w.grid(), &params, dt / 4.0, Scheme::Imex)?;
    for _ in 0..5000 {
        xs.step(&mut u);
        rs.step(w.w.values_mut());
    }
    w.t = 0.5 / 4.0;
    let back = map_w_to_u(&w, g.clone())?;
    let err = back.u.values().iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(GroupResult {
        name: "cross-solver",
        pass: err <= 1e-3,
        detail: format!("N=2, t = 0.5, n = 256: max difference {err:.2e}"),
    })
}

pub fn run_suite(mutation: Option<Mutation>) -> Result<Vec<GroupResult>> {
    let profiles = [2u32, 3, 4]
        .iter()
        .map(|&d| SteadyProfile::build(d, PROFILE_TOL))
        .collect::<pkslab_core::Result<Vec<_>>>()?;
    let ctx = Ctx { profiles, mutation };
    let (comparison, lyap) = evolution_groups(&ctx)?;
    Ok(vec![
        profiles_group(&ctx)?,
        spectrum_group(&ctx)?,
        hardy_group()?,
        identities_group(&ctx)?,
        steady_group(&ctx)?,
        comparison,
        lyap,
        cross_solver_group()?,
    ])
}
