//! Steady states `U_a(x) = U_1(ax)` of the stationary problem
//! `x^{2-q} U'' + U (U')^q = 0`, `U(0) = 0`, `U'(0) = 1`.
//!
//! `U_1` is tabulated once on `[0, A]` (or `[0, 64]` when `A = +inf`) and then
//! evaluated by cubic Hermite interpolation. Near the degenerate point `x = 0`
//! the local series `U_1(x) = x + c1 x^{1+q} + c2 x^{1+2q} + O(x^{1+3q})` is
//! used instead of the table.
//!
//! For `q < 1` the integrated unknown is `v = (U')^{1-q}`, which satisfies
//! `v' = -(1-q) U x^{q-2}` and crosses zero transversally at `A`; for `q = 1`
//! it is `v = ln U'` with `v' = -U/x`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::interp::{hermite, hermite_slope, limit_monotone, locate};
use crate::ode;
use crate::params::{pow_q, q_of};

/// Abscissa beyond which no zero of `U_1'` is searched for.
pub const X_MAX: f64 = 64.0;

const MAX_SPACING: f64 = 2e-3;
const RELATIVE_SPACING: f64 = 1e-2;

/// Tabulated `U_1` for a given dimension together with `A` and `M`.
#[derive(Debug, Clone)]
pub struct SteadyProfile {
    dim: u32,
    q: f64,
    tol: f64,
    series_cutoff: f64,
    c1: f64,
    c2: f64,
    xs: Vec<f64>,
    u: Vec<f64>,
    du: Vec<f64>,
    du_limited: Vec<f64>,
    d2u_limited: Vec<f64>,
    threshold: Option<f64>,
    critical_mass: f64,
}

/// Coefficients of the two correction terms of the series at the origin.
pub fn series_coefficients(q: f64) -> (f64, f64) {
    let c1 = -1.0 / (q * (1.0 + q));
    let c2 = (1.0 + q + q * q) / (2.0 * q * q * (1.0 + q) * (1.0 + 2.0 * q));
    (c1, c2)
}

struct Rhs {
    q: f64,
}

impl Rhs {
    fn slope_from(&self, v: f64) -> f64 {
        if self.q == 1.0 {
            v.exp()
        } else {
            v.signum() * v.abs().powf(1.0 / (1.0 - self.q))
        }
    }

    fn v_from_slope(&self, du: f64) -> f64 {
        if self.q == 1.0 {
            du.ln()
        } else {
            du.powf(1.0 - self.q)
        }
    }

    fn eval(&self, x: f64, y: &[f64; 2]) -> [f64; 2] {
        let du = self.slope_from(y[1]);
        let dv = if self.q == 1.0 {
            -y[0] / x
        } else {
            -(1.0 - self.q) * y[0] * x.powf(self.q - 2.0)
        };
        [du, dv]
    }
}

/// `U''` from the equation itself.
fn second_derivative(q: f64, x: f64, u: f64, du: f64) -> f64 {
    -u * pow_q(du.max(0.0), q) * x.powf(q - 2.0)
}

impl SteadyProfile {
    /// Integrate the profile equation for dimension `dim` with accuracy `tol`.
    pub fn build(dim: u32, tol: f64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidParameter(format!("N must be >= 2, got {dim}")));
        }
        if !(tol > 0.0) || !tol.is_finite() {
            return Err(Error::InvalidParameter(format!("tol must be positive, got {tol}")));
        }
        let q = q_of(dim);
        let (c1, c2) = series_coefficients(q);
        let x0 = 0.5 * tol.powf(1.0 / (1.0 + q));
        let rhs = Rhs { q };
        let f = |x: f64, y: &[f64; 2]| rhs.eval(x, y);
        let step_tol = (tol * 1e-2).max(1e-15);

        let series_u = |x: f64| x + c1 * x.powf(1.0 + q) + c2 * x.powf(1.0 + 2.0 * q);
        let series_du = |x: f64| {
            1.0 + c1 * (1.0 + q) * x.powf(q) + c2 * (1.0 + 2.0 * q) * x.powf(2.0 * q)
        };

        let mut xs = vec![0.0, x0];
        let mut u = vec![0.0, series_u(x0)];
        let mut du = vec![1.0, series_du(x0)];
        let mut y = [u[1], rhs.v_from_slope(du[1])];
        let mut x = x0;
        let mut threshold = None;

        while x < X_MAX {
            let h = (RELATIVE_SPACING * x).min(MAX_SPACING).min(X_MAX - x);
            let x_next = x + h;
            let y_next = ode::integrate(&f, x, y, x_next, step_tol, step_tol).map_err(|last_x| {
                Error::IntegrationFailure {
                    last_x,
                    reason: "step size underflow".into(),
                }
            })?;
            if !y_next[0].is_finite() || !y_next[1].is_finite() {
                return Err(Error::IntegrationFailure {
                    last_x: x,
                    reason: "non-finite state".into(),
                });
            }
            if q < 1.0 && y_next[1] <= 0.0 {
                // U' vanishes inside this segment: bisect on the step length.
                let (mut lo, mut hi) = (0.0, h);
                let mut y_root = y;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    let ym = ode::integrate(&f, x, y, x + mid, step_tol, step_tol).map_err(
                        |last_x| Error::IntegrationFailure {
                            last_x,
                            reason: "step size underflow while locating A".into(),
                        },
                    )?;
                    if ym[1] > 0.0 {
                        lo = mid;
                        y_root = ym;
                    } else {
                        hi = mid;
                    }
                }
                let a = x + lo;
                if lo > 0.0 {
                    xs.push(a);
                    u.push(y_root[0]);
                    du.push(0.0);
                } else {
                    *du.last_mut().unwrap() = 0.0;
                }
                threshold = Some(*xs.last().unwrap());
                break;
            }
            x = x_next;
            y = y_next;
            let slope = rhs.slope_from(y[1]);
            if slope < -tol {
                return Err(Error::ModelViolation {
                    x,
                    what: format!("U1' = {slope} < 0"),
                });
            }
            xs.push(x);
            u.push(y[0]);
            du.push(slope);
        }

        let mut d2u: Vec<f64> = xs
            .iter()
            .zip(u.iter().zip(du.iter()))
            .map(|(&x, (&u, &du))| {
                if x == 0.0 {
                    if q == 1.0 {
                        -1.0
                    } else {
                        f64::NEG_INFINITY
                    }
                } else {
                    second_derivative(q, x, u, du)
                }
            })
            .collect();
        if threshold.is_some() {
            *d2u.last_mut().unwrap() = 0.0;
        }

        let critical_mass = match threshold {
            Some(_) => *u.last().unwrap(),
            // For q = 1 the equation has the first integral x U' = U - U^2/2,
            // so U_1 increases to the root U = 2.
            None if q == 1.0 => 2.0,
            None => *u.last().unwrap(),
        };

        let mut du_limited = du.clone();
        let mut d2u_limited = d2u.clone();
        // The first segment [0, x0] is served by the series; keep it out of the limiter.
        limit_monotone(&xs[1..], &u[1..], &mut du_limited[1..]);
        limit_monotone(&xs[1..], &du[1..], &mut d2u_limited[1..]);

        Ok(Self {
            dim,
            q,
            tol,
            series_cutoff: x0,
            c1,
            c2,
            xs,
            u,
            du,
            du_limited,
            d2u_limited,
            threshold,
            critical_mass,
        })
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// `A`, or `+inf` when `U_1'` never vanishes.
    pub fn threshold(&self) -> f64 {
        self.threshold.unwrap_or(f64::INFINITY)
    }

    /// Critical mass `M = sup U_1`.
    pub fn critical_mass(&self) -> f64 {
        self.critical_mass
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn u_samples(&self) -> &[f64] {
        &self.u
    }

    pub fn du_samples(&self) -> &[f64] {
        &self.du
    }

    pub fn x_last(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    fn check_range(&self, y: f64) -> Result<()> {
        let last = self.x_last();
        if !(y >= 0.0) || y > last * (1.0 + 1e-12) {
            return Err(Error::Range { value: y, max: last });
        }
        Ok(())
    }

    fn series(&self, y: f64) -> (f64, f64, f64) {
        let q = self.q;
        let yq = y.powf(q);
        let u = y * (1.0 + self.c1 * yq + self.c2 * yq * yq);
        let du = 1.0 + self.c1 * (1.0 + q) * yq + self.c2 * (1.0 + 2.0 * q) * yq * yq;
        let d2u = if y == 0.0 {
            if q == 1.0 {
                -1.0
            } else {
                f64::NEG_INFINITY
            }
        } else {
            (self.c1 * (1.0 + q) * q * yq + self.c2 * (1.0 + 2.0 * q) * 2.0 * q * yq * yq) / y
        };
        (u, du, d2u)
    }

    /// `U_1(y)`.
    pub fn u1(&self, y: f64) -> Result<f64> {
        self.check_range(y)?;
        if y <= self.series_cutoff {
            return Ok(self.series(y).0);
        }
        let y = y.min(self.x_last());
        let i = locate(&self.xs, y);
        Ok(hermite(
            self.xs[i],
            self.xs[i + 1],
            self.u[i],
            self.u[i + 1],
            self.du_limited[i],
            self.du_limited[i + 1],
            y,
        ))
    }

    /// `U_1'(y)`.
    pub fn du1(&self, y: f64) -> Result<f64> {
        self.check_range(y)?;
        if y <= self.series_cutoff {
            return Ok(self.series(y).1);
        }
        let y = y.min(self.x_last());
        let i = locate(&self.xs, y);
        let v = hermite(
            self.xs[i],
            self.xs[i + 1],
            self.du[i],
            self.du[i + 1],
            self.d2u_limited[i],
            self.d2u_limited[i + 1],
            y,
        );
        Ok(v.max(0.0))
    }

    /// `U_1''(y)` from the equation, `-inf` at `y = 0` when `q < 1`.
    pub fn d2u1(&self, y: f64) -> Result<f64> {
        self.check_range(y)?;
        if y <= self.series_cutoff {
            return Ok(self.series(y).2);
        }
        Ok(second_derivative(self.q, y, self.u1(y)?, self.du1(y)?))
    }

    /// Slope of the Hermite interpolant of `U_1'`: a second derivative that
    /// does not use the equation.
    pub fn d2u1_interpolated(&self, y: f64) -> Result<f64> {
        self.check_range(y)?;
        if y <= self.series_cutoff {
            return Ok(self.series(y).2);
        }
        let y = y.min(self.x_last());
        let i = locate(&self.xs, y);
        Ok(hermite_slope(
            self.xs[i],
            self.xs[i + 1],
            self.du[i],
            self.du[i + 1],
            self.d2u_limited[i],
            self.d2u_limited[i + 1],
            y,
        ))
    }

    fn check_x(x: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Range { value: x, max: 1.0 });
        }
        Ok(())
    }

    /// `U_a(x) = U_1(ax)`.
    pub fn eval_u(&self, a: f64, x: f64) -> Result<f64> {
        Self::check_x(x)?;
        if a < 0.0 {
            return Err(Error::Domain(format!("dilation a = {a} must be >= 0")));
        }
        if a == 0.0 {
            return Ok(0.0);
        }
        self.u1(a * x)
    }

    /// `U_a'(x) = a U_1'(ax)`.
    pub fn eval_du(&self, a: f64, x: f64) -> Result<f64> {
        Self::check_x(x)?;
        if a < 0.0 {
            return Err(Error::Domain(format!("dilation a = {a} must be >= 0")));
        }
        if a == 0.0 {
            return Ok(0.0);
        }
        Ok(a * self.du1(a * x)?)
    }

    /// `U_a''(x) = a^2 U_1''(ax)`.
    pub fn eval_d2u(&self, a: f64, x: f64) -> Result<f64> {
        Self::check_x(x)?;
        Ok(a * a * self.d2u1(a * x)?)
    }

    fn check_subcritical_a(&self, a: f64) -> Result<()> {
        if !(a > 0.0) {
            return Err(Error::Domain(format!("dilation a = {a} must be > 0")));
        }
        if a >= self.threshold() {
            return Err(Error::Domain(format!(
                "dilation a = {a} must be below A = {}",
                self.threshold()
            )));
        }
        Ok(())
    }

    /// `w_a(x) = d/da U_a(x) = x U_1'(ax)`, for `0 < a < A`.
    pub fn eval_wa(&self, a: f64, x: f64) -> Result<f64> {
        self.check_subcritical_a(a)?;
        Self::check_x(x)?;
        Ok(x * self.du1(a * x)?)
    }

    /// `w_a'(x) = U_1'(ax) + ax U_1''(ax)`, with the second term rewritten
    /// through the equation so it stays finite at the origin.
    pub fn eval_dwa(&self, a: f64, x: f64) -> Result<f64> {
        self.check_subcritical_a(a)?;
        Self::check_x(x)?;
        let y = a * x;
        let du = self.du1(y)?;
        if y == 0.0 {
            return Ok(du);
        }
        let u = self.u1(y)?;
        Ok(du - u * pow_q(du, self.q) * y.powf(self.q - 1.0))
    }

    /// Dilation `a` with `U_1(a) = m`, by bisection.
    pub fn solve_a_of_m(&self, m: f64) -> Result<f64> {
        if !(m >= 0.0) {
            return Err(Error::InvalidParameter(format!("mass m = {m} must be >= 0")));
        }
        if m >= self.critical_mass {
            return Err(Error::Supercritical {
                m,
                critical: self.critical_mass,
            });
        }
        if m == 0.0 {
            return Ok(0.0);
        }
        let last = self.x_last();
        let mut hi = match self.threshold {
            Some(a) => a,
            None => {
                let mut hi = 1.0f64;
                while self.u1(hi.min(last))? <= m {
                    if hi >= last {
                        return Err(Error::Range { value: hi, max: last });
                    }
                    hi *= 2.0;
                }
                hi.min(last)
            }
        };
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.u1(mid)? < m {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// `profile.csv` text: a metadata comment line, a header, and one row
    /// per tabulated sample.
    pub fn to_csv(&self) -> String {
        let a = match self.threshold {
            Some(a) => format!("{a:.16e}"),
            None => "inf".to_string(),
        };
        let mut out = String::with_capacity(64 * self.xs.len());
        let _ = writeln!(
            out,
            "# N={} A={} M={:.16e} tol={:e}",
            self.dim, a, self.critical_mass, self.tol
        );
        out.push_str("x,U1,dU1\n");
        for i in 0..self.xs.len() {
            let _ = writeln!(out, "{:.16e},{:.16e},{:.16e}", self.xs[i], self.u[i], self.du[i]);
        }
        out
    }
}
