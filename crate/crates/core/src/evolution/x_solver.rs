//! Finite-difference stepping of `u_t = x^{2-q} u_xx + u (u_x)^q` on a
//! (possibly graded) grid of `[0, 1]`.

use crate::error::{Error, Result};
use crate::params::{pow_q, ModelParams};
use crate::tridiag::TridiagLu;
use crate::weighted_norms::Grid;

/// Time discretization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Implicit diffusion, explicit reaction.
    #[default]
    Imex,
    /// Forward Euler in both terms; needs `dt = O(dx^2)`.
    Explicit,
}

/// Three-point stencil weights at interior node `i`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Stencil {
    /// second derivative: `d2[0] u_{i-1} + d2[1] u_i + d2[2] u_{i+1}`
    pub d2: [f64; 3],
    /// first derivative, same layout
    pub d1: [f64; 3],
}

pub(crate) fn stencils(x: &[f64]) -> Vec<Stencil> {
    let n = x.len() - 1;
    let mut out = Vec::with_capacity(n + 1);
    out.push(Stencil { d2: [0.0; 3], d1: [0.0; 3] });
    for i in 1..n {
        let hl = x[i] - x[i - 1];
        let hr = x[i + 1] - x[i];
        let s = hl + hr;
        out.push(Stencil {
            d2: [2.0 / (hl * s), -2.0 / (hl * hr), 2.0 / (hr * s)],
            d1: [-hr / (hl * s), (hr - hl) / (hl * hr), hl / (hr * s)],
        });
    }
    out.push(Stencil { d2: [0.0; 3], d1: [0.0; 3] });
    out
}

/// Stepper for the x-coordinate problem with a fixed time step.
#[derive(Debug, Clone)]
pub struct XStepper {
    q: f64,
    m: f64,
    dt: f64,
    scheme: Scheme,
    /// `x_i^{2-q}`
    diffusivity: Vec<f64>,
    stencils: Vec<Stencil>,
    lu: Option<TridiagLu>,
    reaction: Vec<f64>,
}

impl XStepper {
    pub fn new(grid: &Grid, params: &ModelParams, dt: f64, scheme: Scheme) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let q = params.q();
        let x = grid.nodes();
        let n = x.len() - 1;
        let diffusivity: Vec<f64> = x.iter().map(|&x| x.powf(2.0 - q)).collect();
        let stencils = stencils(x);
        let lu = match scheme {
            Scheme::Explicit => None,
            Scheme::Imex => {
                let mut lower = vec![0.0; n];
                let mut diag = vec![1.0; n + 1];
                let mut upper = vec![0.0; n];
                for i in 1..n {
                    let c = dt * diffusivity[i];
                    let st = &stencils[i].d2;
                    lower[i - 1] = -c * st[0];
                    diag[i] = 1.0 - c * st[1];
                    upper[i] = -c * st[2];
                }
                Some(TridiagLu::new(&lower, &diag, &upper)?)
            }
        };
        Ok(Self {
            q,
            m: params.mass(),
            dt,
            scheme,
            diffusivity,
            stencils,
            lu,
            reaction: vec![0.0; n + 1],
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `u (max(u_x, 0))^q` with centered `u_x` at interior nodes.
    fn fill_reaction(&mut self, u: &[f64]) {
        let n = u.len() - 1;
        for i in 1..n {
            let d1 = &self.stencils[i].d1;
            let ux = d1[0] * u[i - 1] + d1[1] * u[i] + d1[2] * u[i + 1];
            self.reaction[i] = u[i] * pow_q(ux.max(0.0), self.q);
        }
    }

    /// Advance `u` by one step in place.
    pub fn step(&mut self, u: &mut [f64]) {
        let n = u.len() - 1;
        self.fill_reaction(u);
        match self.scheme {
            Scheme::Imex => {
                for i in 1..n {
                    u[i] += self.dt * self.reaction[i];
                }
                u[0] = 0.0;
                u[n] = self.m;
                self.lu.as_ref().expect("IMEX stepper has a factorization").solve_in_place(u);
            }
            Scheme::Explicit => {
                let mut next = u.to_vec();
                for i in 1..n {
                    let st = &self.stencils[i].d2;
                    let uxx = st[0] * u[i - 1] + st[1] * u[i] + st[2] * u[i + 1];
                    next[i] = u[i] + self.dt * (self.diffusivity[i] * uxx + self.reaction[i]);
                }
                u.copy_from_slice(&next);
            }
        }
        u[0] = 0.0;
        u[n] = self.m;
    }

    /// Spatial right-hand side `x^{2-q} u_xx + u (max(u_x,0))^q` (zero at the ends).
    pub fn rhs(&mut self, u: &[f64]) -> Vec<f64> {
        let n = u.len() - 1;
        self.fill_reaction(u);
        let mut out = vec![0.0; n + 1];
        for i in 1..n {
            let st = &self.stencils[i].d2;
            let uxx = st[0] * u[i - 1] + st[1] * u[i] + st[2] * u[i + 1];
            out[i] = self.diffusivity[i] * uxx + self.reaction[i];
        }
        out
    }
}

/// Fixed point of the discrete scheme near `guess`, by Newton's method on
/// the spatial right-hand side with Dirichlet rows `u_0 = 0`, `u_n = m`.
pub fn discrete_steady_state(grid: &Grid, params: &ModelParams, guess: &[f64]) -> Result<Vec<f64>> {
    let q = params.q();
    let x = grid.nodes();
    let n = x.len() - 1;
    let st = stencils(x);
    let diff: Vec<f64> = x.iter().map(|&x| x.powf(2.0 - q)).collect();
    let mut u = guess.to_vec();
    u[0] = 0.0;
    u[n] = params.mass();
    for _ in 0..50 {
        let mut res = vec![0.0; n + 1];
        let mut lower = vec![0.0; n];
        let mut diag = vec![1.0; n + 1];
        let mut upper = vec![0.0; n];
        let mut worst: f64 = 0.0;
        for i in 1..n {
            let s = &st[i];
            let uxx = s.d2[0] * u[i - 1] + s.d2[1] * u[i] + s.d2[2] * u[i + 1];
            let ux = (s.d1[0] * u[i - 1] + s.d1[1] * u[i] + s.d1[2] * u[i + 1]).max(0.0);
            let uxq = pow_q(ux, q);
            res[i] = diff[i] * uxx + u[i] * uxq;
            worst = worst.max(res[i].abs());
            let dn = if ux > 0.0 { u[i] * q * ux.powf(q - 1.0) } else { 0.0 };
            lower[i - 1] = diff[i] * s.d2[0] + dn * s.d1[0];
            diag[i] = diff[i] * s.d2[1] + uxq + dn * s.d1[1];
            upper[i] = diff[i] * s.d2[2] + dn * s.d1[2];
        }
        let lu = TridiagLu::new(&lower, &diag, &upper)?;
        let mut delta: Vec<f64> = res.iter().map(|r| -r).collect();
        lu.solve_in_place(&mut delta);
        let mut step: f64 = 0.0;
        for i in 1..n {
            u[i] += delta[i];
            step = step.max(delta[i].abs());
        }
        if step < 1e-15 * (1.0 + params.mass()) || worst < 1e-14 {
            return Ok(u);
        }
        if !step.is_finite() {
            break;
        }
    }
    Err(Error::LinearAlgebra("Newton iteration for the discrete steady state did not converge".into()))
}
