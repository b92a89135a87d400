//! The transformed problem `w_t = Δw + N^2 w (w + r w_r / N)^q` for radial
//! `w` in the unit ball of `R^{N+2}`, and the maps
//! `u(t,x) = x w(t/N^2, x^{1/N})`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::interp::lagrange4;
use crate::params::{pow_q, ModelParams};
use crate::tridiag::TridiagLu;
use crate::weighted_norms::{Grid, GridFn};

use super::x_solver::Scheme;
use super::{PdeState, RadialState};

/// Stepper for the radial problem on a uniform `r`-grid. `dt` is in the
/// radial problem's own time.
#[derive(Debug, Clone)]
pub struct RadialStepper {
    dim: f64,
    q: f64,
    m: f64,
    dt: f64,
    h: f64,
    scheme: Scheme,
    r: Vec<f64>,
    left: Vec<f64>,
    right: Vec<f64>,
    lu: Option<TridiagLu>,
}

/// Finite-volume radial Laplacian in dimension `d`:
/// `Δw_i ≈ left_i (w_{i-1} - w_i) + right_i (w_{i+1} - w_i)`, built from
/// fluxes `r^{d-1} w_r` at cell faces over the shell volume. At the origin
/// this is `2d (w_1 - w_0)/h^2`, the symmetric limit `d w_rr(0)`.
fn radial_coefficients(r: &[f64], d: f64) -> (Vec<f64>, Vec<f64>) {
    let n = r.len() - 1;
    let h = r[1] - r[0];
    let mut left = vec![0.0; n + 1];
    let mut right = vec![0.0; n + 1];
    for i in 0..n {
        let face_r = r[i] + 0.5 * h;
        let face_l = (r[i] - 0.5 * h).max(0.0);
        let volume = (face_r.powf(d) - face_l.powf(d)) / d;
        right[i] = face_r.powf(d - 1.0) / (h * volume);
        left[i] = if i == 0 { 0.0 } else { face_l.powf(d - 1.0) / (h * volume) };
    }
    (left, right)
}

impl RadialStepper {
    pub fn new(grid: &Grid, params: &ModelParams, dt: f64, scheme: Scheme) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let r = grid.nodes().to_vec();
        let n = r.len() - 1;
        let h = 1.0 / n as f64;
        if r.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-12) {
            return Err(Error::InvalidParameter("radial solver needs a uniform grid".into()));
        }
        let ball_dim = params.dim() as f64 + 2.0;
        let (left, right) = radial_coefficients(&r, ball_dim);
        let lu = match scheme {
            Scheme::Explicit => None,
            Scheme::Imex => {
                let mut lower = vec![0.0; n];
                let mut diag = vec![1.0; n + 1];
                let mut upper = vec![0.0; n];
                for i in 0..n {
                    if i > 0 {
                        lower[i - 1] = -dt * left[i];
                    }
                    diag[i] = 1.0 + dt * (left[i] + right[i]);
                    upper[i] = -dt * right[i];
                }
                Some(TridiagLu::new(&lower, &diag, &upper)?)
            }
        };
        Ok(Self {
            dim: params.dim() as f64,
            q: params.q(),
            m: params.mass(),
            dt,
            h,
            scheme,
            r,
            left,
            right,
            lu,
        })
    }

    fn reaction(&self, w: &[f64], i: usize) -> f64 {
        let base = if i == 0 {
            w[0]
        } else {
            w[i] + self.r[i] * (w[i + 1] - w[i - 1]) / (2.0 * self.h * self.dim)
        };
        self.dim * self.dim * w[i] * pow_q(base.max(0.0), self.q)
    }

    fn laplacian(&self, w: &[f64], i: usize) -> f64 {
        let l = if i == 0 { 0.0 } else { self.left[i] * (w[i - 1] - w[i]) };
        l + self.right[i] * (w[i + 1] - w[i])
    }

    pub fn step(&self, w: &mut [f64]) {
        let n = w.len() - 1;
        let react: Vec<f64> = (0..n).map(|i| self.reaction(w, i)).collect();
        match self.scheme {
            Scheme::Imex => {
                for i in 0..n {
                    w[i] += self.dt * react[i];
                }
                w[n] = self.m;
                self.lu.as_ref().expect("IMEX stepper has a factorization").solve_in_place(w);
            }
            Scheme::Explicit => {
                let lap: Vec<f64> = (0..n).map(|i| self.laplacian(w, i)).collect();
                for i in 0..n {
                    w[i] += self.dt * (lap[i] + react[i]);
                }
            }
        }
        w[n] = self.m;
    }
}

/// `w(r) = u(r^N) / r^N`, with the removable value `u_x(0)` (first-cell slope)
/// at `r = 0`.
pub fn map_u_to_w(state: &PdeState, r_grid: Arc<Grid>) -> Result<RadialState> {
    let dim = state.params.dim() as i32;
    let x = state.u.nodes();
    let u = state.u.values();
    let slope0 = (u[1] - u[0]) / (x[1] - x[0]);
    let w = GridFn::from_fn(r_grid, |r| {
        let xr = r.powi(dim);
        if xr <= x[1] {
            slope0
        } else if r >= 1.0 {
            u[u.len() - 1]
        } else {
            lagrange4(x, u, xr) / xr
        }
    });
    Ok(RadialState {
        params: state.params,
        t: state.t / (dim * dim) as f64,
        w,
    })
}

/// `u(x) = x w(x^{1/N})` on `x_grid`; time is scaled back by `N^2`.
pub fn map_w_to_u(state: &RadialState, x_grid: Arc<Grid>) -> Result<PdeState> {
    let dim = state.params.dim();
    let r = state.w.nodes();
    let w = state.w.values();
    let mut u = GridFn::from_fn(x_grid, |x| {
        if x == 0.0 {
            0.0
        } else {
            x * lagrange4(r, w, x.powf(1.0 / dim as f64))
        }
    });
    let last = u.values().len() - 1;
    u.values_mut()[last] = w[w.len() - 1];
    Ok(PdeState {
        params: state.params,
        t: state.t * (dim * dim) as f64,
        u,
    })
}
