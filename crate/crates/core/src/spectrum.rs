//! The Hardy-type constant
//!
//! ```text
//! lambda_1(a) = inf_{h in H, h != 0}  int h'^2 / U_a'^q  /  int h^2 / x^{2-q}
//! ```
//!
//! as the smallest eigenvalue of the P1 pencil `K h = lambda M h`, plus the
//! linearization `L_{U_a}` of the evolution operator at `U_a`, the nonlinear
//! remainder, and residuals of the integral identities these satisfy.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::params::pow_q;
use crate::profiles::SteadyProfile;
use crate::quadrature::GaussRule;
use crate::tridiag::{pencil_count_below, SymTridiag};
use crate::weighted_norms::{Grid, GridFn, PowerWeightCells};

const STIFFNESS_POINTS: usize = 4;
const RAYLEIGH_TOL: f64 = 1e-12;
const MAX_ITERATIONS: usize = 50_000;

/// Stiffness and weighted mass matrices restricted to interior nodes.
#[derive(Debug, Clone)]
pub struct SpectralPencil {
    grid: Arc<Grid>,
    a: f64,
    stiffness: SymTridiag,
    /// Per-cell `int w / dx^2`, so `Lambda(h,h) = sum k_c (h_{c+1} - h_c)^2`
    /// can be formed without cancellation.
    cell_stiffness: Vec<f64>,
    mass: SymTridiag,
}

/// Smallest eigenpair of a pencil and refinement diagnostics.
#[derive(Debug, Clone)]
pub struct SpectralResult {
    pub lambda1: f64,
    /// Normalized to `||phi1||_L = 1`, positive interior mean.
    pub phi1: GridFn,
    pub iterations: usize,
    /// `|lambda1(n) - lambda1(2n)|`.
    pub refinement_gap: f64,
    /// Second eigenvalue of the same pencil, from inertia bisection.
    pub lambda2: f64,
    /// `lambda1` on the refined grid.
    pub lambda1_refined: f64,
    pub lambda2_refined: f64,
}

/// One solved pencil.
#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub value: f64,
    /// Interior-node vector, `v^T M v = 1`.
    pub vector: Vec<f64>,
    pub iterations: usize,
}

impl SpectralPencil {
    /// Pencil with an arbitrary stiffness weight and mass weight `x^p`.
    pub fn with_weights<F: Fn(f64) -> Result<f64>>(
        grid: Arc<Grid>,
        stiffness_weight: F,
        mass_exponent: f64,
    ) -> Result<Self> {
        let n = grid.cells();
        let rule = GaussRule::new(STIFFNESS_POINTS);
        let x = grid.nodes();
        let mut k = Vec::with_capacity(n);
        for c in 0..n {
            let (a, b) = (x[c], x[c + 1]);
            let mut acc = 0.0;
            for (xq, w) in rule.points(a, b) {
                acc += w * stiffness_weight(xq)?;
            }
            let d = b - a;
            k.push(acc / (d * d));
        }
        let mut diag = vec![0.0; n - 1];
        let mut off = vec![0.0; n - 2];
        for c in 0..n {
            if c >= 1 {
                diag[c - 1] += k[c];
            }
            if c + 1 < n {
                diag[c] += k[c];
            }
            if c >= 1 && c + 1 < n {
                off[c - 1] -= k[c];
            }
        }
        let (md, mo) = PowerWeightCells::new(&grid, mass_exponent).interior_matrix();
        Ok(Self {
            grid,
            a: f64::NAN,
            stiffness: SymTridiag::new(diag, off),
            cell_stiffness: k,
            mass: SymTridiag::new(md, mo),
        })
    }

    /// Pencil of `Lambda(h,h) = int h'^2/U_a'^q` against `int h^2/x^{2-q}`.
    pub fn assemble(grid: Arc<Grid>, a: f64, profile: &SteadyProfile) -> Result<Self> {
        check_a(a, profile)?;
        let q = profile.q();
        let mut pencil = Self::with_weights(
            grid,
            |x| Ok(1.0 / pow_q(profile.eval_du(a, x)?, q)),
            q - 2.0,
        )?;
        pencil.a = a;
        Ok(pencil)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn dilation(&self) -> f64 {
        self.a
    }

    pub fn stiffness(&self) -> &SymTridiag {
        &self.stiffness
    }

    pub fn mass(&self) -> &SymTridiag {
        &self.mass
    }

    /// `Lambda(v,v)` for an interior-node vector.
    pub fn energy(&self, v: &[f64]) -> f64 {
        let n = self.cell_stiffness.len();
        let at = |i: usize| if i == 0 || i == n { 0.0 } else { v[i - 1] };
        (0..n)
            .map(|c| {
                let d = at(c + 1) - at(c);
                self.cell_stiffness[c] * d * d
            })
            .sum()
    }

    /// `Lambda(h,h) / ||h||_L^2` for a grid function vanishing at both ends.
    pub fn rayleigh_quotient(&self, h: &GridFn) -> Result<f64> {
        let v = interior(h)?;
        Ok(self.energy(v) / self.mass.quad(v))
    }

    /// Number of pencil eigenvalues strictly below `sigma`.
    pub fn count_below(&self, sigma: f64) -> usize {
        pencil_count_below(&self.stiffness, &self.mass, sigma)
    }

    /// Smallest eigenpair by inverse iteration.
    pub fn smallest(&self) -> Result<Eigenpair> {
        let factor = self.stiffness.ldlt()?;
        let nodes = self.grid.nodes();
        let mut v: Vec<f64> = nodes[1..nodes.len() - 1]
            .iter()
            .map(|&x| (std::f64::consts::PI * x).sin())
            .collect();
        normalize(&mut v, &self.mass);
        let mut last = self.energy(&v);
        for it in 1..=MAX_ITERATIONS {
            let mut y = self.mass.mul(&v);
            factor.solve_in_place(&mut y);
            normalize(&mut y, &self.mass);
            let rq = self.energy(&y);
            v = y;
            if (rq - last).abs() < RAYLEIGH_TOL * rq.abs().max(1.0) {
                if v.iter().sum::<f64>() < 0.0 {
                    v.iter_mut().for_each(|c| *c = -*c);
                }
                if self.count_below(rq * (1.0 - 1e-9)) != 0 {
                    return Err(Error::Spectral { iterations: it, last: rq });
                }
                return Ok(Eigenpair {
                    value: rq,
                    vector: v,
                    iterations: it,
                });
            }
            last = rq;
        }
        Err(Error::Spectral {
            iterations: MAX_ITERATIONS,
            last,
        })
    }

    /// The `k`-th eigenvalue (1-based) by bisection on inertia counts.
    pub fn kth_eigenvalue(&self, k: usize, lower: f64) -> f64 {
        let mut lo = lower;
        let mut hi = lower.abs().max(1.0) * 2.0;
        while self.count_below(hi) < k {
            lo = hi;
            hi *= 2.0;
        }
        while self.count_below(lo) >= k {
            lo = if lo > 0.0 { lo * 0.5 } else { lo * 2.0 - 1.0 };
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi || hi - lo <= 1e-15 * hi.abs() {
                break;
            }
            if self.count_below(mid) >= k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn solve_with_gap(
        &self,
        refined: &SpectralPencil,
    ) -> Result<SpectralResult> {
        let pair = self.smallest()?;
        let fine = refined.smallest()?;
        let mut values = vec![0.0];
        values.extend_from_slice(&pair.vector);
        values.push(0.0);
        let phi1 = GridFn::new(self.grid.clone(), values)?;
        let lambda2 = self.kth_eigenvalue(2, pair.value);
        let lambda2_refined = refined.kth_eigenvalue(2, fine.value);
        Ok(SpectralResult {
            lambda1: pair.value,
            phi1,
            iterations: pair.iterations,
            refinement_gap: (pair.value - fine.value).abs(),
            lambda2,
            lambda1_refined: fine.value,
            lambda2_refined,
        })
    }
}

fn normalize(v: &mut [f64], mass: &SymTridiag) {
    let s = mass.quad(v).sqrt();
    v.iter_mut().for_each(|c| *c /= s);
}

fn interior(h: &GridFn) -> Result<&[f64]> {
    let v = h.values();
    if v[0] != 0.0 || v[v.len() - 1] != 0.0 {
        return Err(Error::Domain("h must vanish at x = 0 and x = 1".into()));
    }
    Ok(&v[1..v.len() - 1])
}

fn check_a(a: f64, profile: &SteadyProfile) -> Result<()> {
    if !(a > 0.0) || a >= profile.threshold() {
        return Err(Error::Domain(format!(
            "dilation a = {a} must lie in (0, A) with A = {}",
            profile.threshold()
        )));
    }
    Ok(())
}

/// `lambda_1(a)` on `grid`, with the gap to the once-refined grid.
pub fn lambda1(a: f64, grid: Arc<Grid>, profile: &SteadyProfile) -> Result<SpectralResult> {
    let coarse = SpectralPencil::assemble(grid.clone(), a, profile)?;
    let fine = SpectralPencil::assemble(Arc::new(grid.refined()), a, profile)?;
    coarse.solve_with_gap(&fine)
}

/// `lambda_1` of the pencil with unit stiffness weight and mass weight `x^p`
/// (for `p = -2` the classical Hardy constant `1/4` is the continuum limit).
pub fn lambda1_synthetic(grid: Arc<Grid>, mass_exponent: f64) -> Result<SpectralResult> {
    let coarse = SpectralPencil::with_weights(grid.clone(), |_| Ok(1.0), mass_exponent)?;
    let fine = SpectralPencil::with_weights(Arc::new(grid.refined()), |_| Ok(1.0), mass_exponent)?;
    coarse.solve_with_gap(&fine)
}

/// Coefficients of the linearization at a steady state: nodal `x`, `U`, `U'`.
#[derive(Debug, Clone)]
pub struct Linearization {
    q: f64,
    x: Vec<f64>,
    u: Vec<f64>,
    du: Vec<f64>,
    /// `U'` at cell midpoints, for the flux form.
    du_mid: Vec<f64>,
}

impl Linearization {
    /// Coefficients taken from the profile.
    pub fn from_profile(grid: &Grid, a: f64, profile: &SteadyProfile) -> Result<Self> {
        check_a(a, profile)?;
        let x = grid.nodes().to_vec();
        let u = x.iter().map(|&x| profile.eval_u(a, x)).collect::<Result<Vec<_>>>()?;
        let du = x.iter().map(|&x| profile.eval_du(a, x)).collect::<Result<Vec<_>>>()?;
        let du_mid = x
            .windows(2)
            .map(|w| profile.eval_du(a, 0.5 * (w[0] + w[1])))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            q: profile.q(),
            x,
            u,
            du,
            du_mid,
        })
    }

    /// Coefficients from nodal samples of a steady state, with `U'` from
    /// the same difference stencil the evolution scheme uses.
    pub fn from_samples(steady: &GridFn, q: f64) -> Self {
        let x = steady.nodes().to_vec();
        let u = steady.values().to_vec();
        let du = first_derivative(&x, &u);
        let du_mid = steady.slopes();
        Self { q, x, u, du, du_mid }
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// `L h = x^{2-q} h'' + q U/U'^{1-q} h' + U'^q h` with three-point
    /// differences; zero at both endpoints.
    pub fn apply(&self, h: &GridFn) -> Result<GridFn> {
        let v = h.values();
        let n = v.len() - 1;
        let dh = first_derivative(&self.x, v);
        let d2h = second_derivative(&self.x, v);
        let q = self.q;
        let mut out = vec![0.0; n + 1];
        for i in 1..n {
            let x = self.x[i];
            let du = self.du[i];
            out[i] = x.powf(2.0 - q) * d2h[i]
                + q * self.u[i] * du.powf(q - 1.0) * dh[i]
                + pow_q(du, q) * v[i];
        }
        GridFn::new(h.grid().clone(), out)
    }

    /// `L h = x^{2-q} U'^q (h'/U'^q)' + U'^q h`, differencing the flux
    /// `h'/U'^q` between cell midpoints.
    pub fn apply_flux_form(&self, h: &GridFn) -> Result<GridFn> {
        let v = h.values();
        let n = v.len() - 1;
        let q = self.q;
        let flux: Vec<f64> = (0..n)
            .map(|c| (v[c + 1] - v[c]) / (self.x[c + 1] - self.x[c]) / pow_q(self.du_mid[c], q))
            .collect();
        let mut out = vec![0.0; n + 1];
        for i in 1..n {
            let x = self.x[i];
            let duq = pow_q(self.du[i], q);
            let dflux = (flux[i] - flux[i - 1]) / (0.5 * (self.x[i + 1] - self.x[i - 1]));
            out[i] = x.powf(2.0 - q) * duq * dflux + duq * v[i];
        }
        GridFn::new(h.grid().clone(), out)
    }

    /// `F(x, h, h') = q h h'/U'^{1-q} + (h U'^q + U U'^q) [(1 + h'/U')^q - 1 - q h'/U']`.
    pub fn remainder(&self, h: &GridFn) -> Result<GridFn> {
        let v = h.values();
        let n = v.len() - 1;
        let dh = first_derivative(&self.x, v);
        let q = self.q;
        let mut out = vec![0.0; n + 1];
        for i in 1..n {
            let du = self.du[i];
            let z = dh[i] / du;
            if !(1.0 + z > 0.0) {
                return Err(Error::Domain(format!(
                    "1 + h'/U_a' = {} <= 0 at x = {}",
                    1.0 + z,
                    self.x[i]
                )));
            }
            let bracket = if q == 1.0 {
                0.0
            } else {
                (q * z.ln_1p()).exp_m1() - q * z
            };
            let duq = pow_q(du, q);
            out[i] = q * v[i] * dh[i] * du.powf(q - 1.0) + (v[i] * duq + self.u[i] * duq) * bracket;
        }
        GridFn::new(h.grid().clone(), out)
    }
}

/// Three-point first derivative at interior nodes, one-sided at the ends.
pub fn first_derivative(x: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len() - 1;
    let mut d = vec![0.0; n + 1];
    for i in 1..n {
        let hl = x[i] - x[i - 1];
        let hr = x[i + 1] - x[i];
        d[i] = (hl * hl * (v[i + 1] - v[i]) + hr * hr * (v[i] - v[i - 1])) / (hl * hr * (hl + hr));
    }
    d[0] = (v[1] - v[0]) / (x[1] - x[0]);
    d[n] = (v[n] - v[n - 1]) / (x[n] - x[n - 1]);
    d
}

/// Three-point second derivative at interior nodes (zero at the ends).
pub fn second_derivative(x: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len() - 1;
    let mut d = vec![0.0; n + 1];
    for i in 1..n {
        let hl = x[i] - x[i - 1];
        let hr = x[i + 1] - x[i];
        d[i] = 2.0 * (hl * v[i + 1] - (hl + hr) * v[i] + hr * v[i - 1]) / (hl * hr * (hl + hr));
    }
    d
}

/// `L_{U_a} h` with coefficients from the profile.
pub fn apply_linearized(h: &GridFn, a: f64, profile: &SteadyProfile) -> Result<GridFn> {
    interior(h)?;
    Linearization::from_profile(h.grid(), a, profile)?.apply(h)
}

/// Nonlinear remainder `F(x, h, h')` with coefficients from the profile.
pub fn remainder(h: &GridFn, a: f64, profile: &SteadyProfile) -> Result<GridFn> {
    Linearization::from_profile(h.grid(), a, profile)?.remainder(h)
}

/// `|int h'^2/U_a'^q - int h^2/x^{2-q} - int (h' - (w_a'/w_a) h)^2 / U_a'^q|`
/// for the piecewise-linear `h`. Gauss points never touch `x = 0`, where
/// `h/w_a` only has a limit.
pub fn beesack_residual(h: &GridFn, a: f64, profile: &SteadyProfile) -> Result<f64> {
    let terms = beesack_terms(h, a, profile)?;
    Ok((terms.energy - terms.weighted_mass - terms.completed_square).abs())
}

/// The three integrals entering the identity.
#[derive(Debug, Clone, Copy)]
pub struct BeesackTerms {
    pub energy: f64,
    pub weighted_mass: f64,
    pub completed_square: f64,
}

pub fn beesack_terms(h: &GridFn, a: f64, profile: &SteadyProfile) -> Result<BeesackTerms> {
    check_a(a, profile)?;
    interior(h)?;
    let q = profile.q();
    let x = h.nodes();
    let v = h.values();
    let rule = GaussRule::new(3);
    let mut energy = 0.0;
    let mut square = 0.0;
    for c in 0..h.grid().cells() {
        let (xa, xb) = (x[c], x[c + 1]);
        let s = (v[c + 1] - v[c]) / (xb - xa);
        for (xq, w) in rule.points(xa, xb) {
            let duq = pow_q(profile.eval_du(a, xq)?, q);
            let wa = profile.eval_wa(a, xq)?;
            if !(wa > 0.0) {
                return Err(Error::Domain(format!("w_a({xq}) = {wa} is not positive")));
            }
            let dwa = profile.eval_dwa(a, xq)?;
            let hq = v[c] + s * (xq - xa);
            let t = s - dwa / wa * hq;
            energy += w * s * s / duq;
            square += w * t * t / duq;
        }
    }
    let weighted_mass = PowerWeightCells::new(h.grid(), q - 2.0).bilinear(v, v)?;
    Ok(BeesackTerms {
        energy,
        weighted_mass,
        completed_square: square,
    })
}

/// Both sides of `int h L h / (x^{2-q} U_a'^q) = -int [h'^2/U_a'^q - h^2/x^{2-q}]`.
#[derive(Debug, Clone, Copy)]
pub struct Lemma41Sides {
    pub lhs: f64,
    pub rhs: f64,
}

pub fn lemma41_sides(h: &GridFn, a: f64, profile: &SteadyProfile) -> Result<Lemma41Sides> {
    let lin = Linearization::from_profile(h.grid(), a, profile)?;
    interior(h)?;
    let lh = lin.apply(h)?;
    let q = profile.q();
    let x = h.nodes();
    let v = h.values();
    // Integrand is k(x) x^{q-1} with k = h Lh / (x U_a'^q) vanishing at 0;
    // the plain trapezoid rule on it only converges like h^{1+q}.
    let k: Vec<f64> = (0..x.len())
        .map(|i| {
            if x[i] == 0.0 {
                0.0
            } else {
                v[i] * lh.values()[i] / (x[i] * pow_q(lin.du[i], q))
            }
        })
        .collect();
    let ones = vec![1.0; x.len()];
    let lhs = PowerWeightCells::new(h.grid(), q - 1.0).bilinear(&k, &ones)?;
    let terms = beesack_terms(h, a, profile)?;
    Ok(Lemma41Sides {
        lhs,
        rhs: -(terms.energy - terms.weighted_mass),
    })
}

/// `|lhs - rhs|` of the integration-by-parts identity.
pub fn lemma41_residual(h: &GridFn, a: f64, profile: &SteadyProfile) -> Result<f64> {
    let s = lemma41_sides(h, a, profile)?;
    Ok((s.lhs - s.rhs).abs())
}

/// `lambda1.csv` text.
pub fn lambda1_csv(rows: &[(u32, f64, usize, &SpectralResult)]) -> String {
    let mut out = String::from("N,a,n,lambda1,gap,iters\n");
    for (dim, a, n, r) in rows {
        out.push_str(&format!(
            "{},{:.16e},{},{:.16e},{:.16e},{}\n",
            dim, a, n, r.lambda1, r.refinement_gap, r.iterations
        ));
    }
    out
}

/// `phi1.csv` text.
pub fn phi1_csv(phi: &GridFn) -> String {
    let mut out = String::from("x,phi1\n");
    for (x, v) in phi.nodes().iter().zip(phi.values()) {
        out.push_str(&format!("{x:.16e},{v:.16e}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::XStepper;
    use crate::params::ModelParams;

    fn uniform(n: usize) -> Arc<Grid> {
        Arc::new(Grid::uniform(n).unwrap())
    }

    fn closed_n2() -> SteadyProfile {
        SteadyProfile::build(2, 1e-10).unwrap()
    }

    #[test]
    fn unit_weight_gives_standard_stiffness() {
        let n = 16;
        let p = SpectralPencil::with_weights(uniform(n), |_| Ok(1.0), 0.0).unwrap();
        let h = 1.0 / n as f64;
        for d in &p.stiffness().diag {
            assert!((d - 2.0 / h).abs() < 1e-10);
        }
        for o in &p.stiffness().off {
            assert!((o + 1.0 / h).abs() < 1e-10);
        }
    }

    #[test]
    fn unit_mass_matches_discrete_laplacian_eigenvalue() {
        // P1 eigenvalue of -u'' = lambda u on a uniform grid
        let n = 64;
        let h = 1.0 / n as f64;
        let exact = 6.0 / (h * h) * (1.0 - (std::f64::consts::PI * h).cos())
            / (2.0 + (std::f64::consts::PI * h).cos());
        let r = lambda1_synthetic(uniform(n), 0.0).unwrap();
        assert!((r.lambda1 - exact).abs() < 1e-9 * exact, "{} vs {exact}", r.lambda1);
        let p = SpectralPencil::with_weights(uniform(n), |_| Ok(1.0), 0.0).unwrap();
        let second = 6.0 / (h * h) * (1.0 - (2.0 * std::f64::consts::PI * h).cos())
            / (2.0 + (2.0 * std::f64::consts::PI * h).cos());
        assert!((p.kth_eigenvalue(2, r.lambda1) - second).abs() < 1e-9 * second);
    }

    #[test]
    fn rayleigh_quotient_agrees_with_weighted_norms() {
        let prof = closed_n2();
        let g = uniform(256);
        let pencil = SpectralPencil::assemble(g.clone(), 2.0, &prof).unwrap();
        let h = GridFn::from_fn(g.clone(), |x| x * (1.0 - x) * (1.0 + x * x));
        let energy: f64 = {
            // Gauss quadrature of h'^2 / U_a' per cell
            let rule = GaussRule::new(6);
            let x = g.nodes();
            let s = h.slopes();
            (0..g.cells())
                .map(|c| rule.integrate(x[c], x[c + 1], |y| s[c] * s[c] / prof.eval_du(2.0, y).unwrap()))
                .sum()
        };
        let mass = crate::weighted_norms::norm_l_squared(&h, 1.0).unwrap();
        let rq = pencil.rayleigh_quotient(&h).unwrap();
        assert!((rq - energy / mass).abs() < 1e-10 * rq);
    }

    #[test]
    fn n2_lambda1_exceeds_one_and_eigenvector_is_positive() {
        let prof = closed_n2();
        let r = lambda1(2.0, uniform(512), &prof).unwrap();
        assert!(r.lambda1 > 1.0 + r.refinement_gap);
        let v = r.phi1.values();
        assert!(v[1..v.len() - 1].iter().all(|&c| c > 0.0));
        let nl = crate::weighted_norms::norm_l(&r.phi1, 1.0).unwrap();
        assert!((nl - 1.0).abs() < 1e-10);
        assert!(r.lambda2 > r.lambda1 && r.lambda2_refined > r.lambda1_refined);
        // the eigenvector's Rayleigh quotient reproduces the eigenvalue
        let pencil = SpectralPencil::assemble(uniform(512), 2.0, &prof).unwrap();
        assert!((pencil.rayleigh_quotient(&r.phi1).unwrap() - r.lambda1).abs() < 1e-10);
    }

    #[test]
    fn lambda1_decreases_with_dilation_for_n3() {
        let prof = SteadyProfile::build(3, 1e-10).unwrap();
        let g = Arc::new(Grid::graded(512, 4.0).unwrap());
        let mut prev = f64::INFINITY;
        for f in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let l = lambda1(f * prof.threshold(), g.clone(), &prof).unwrap().lambda1;
            assert!(l < prev && l > 1.0, "lambda1({f} A) = {l}");
            prev = l;
        }
    }

    #[test]
    fn dilation_outside_range_is_rejected() {
        let prof = SteadyProfile::build(3, 1e-8).unwrap();
        let g = uniform(64);
        assert!(matches!(lambda1(0.0, g.clone(), &prof), Err(Error::Domain(_))));
        assert!(matches!(
            SpectralPencil::assemble(g.clone(), prof.threshold() * 1.01, &prof),
            Err(Error::Domain(_))
        ));
        let h = GridFn::from_fn(g, |x| 1.0 - x);
        assert!(apply_linearized(&h, 1.0, &prof).is_err());
    }

    #[test]
    fn flux_and_expanded_forms_converge_together() {
        for (dim, a) in [(2u32, 2.0), (3, 5.0)] {
            let prof = SteadyProfile::build(dim, 1e-11).unwrap();
            let gap = |n: usize| {
                let g = uniform(n);
                let lin = Linearization::from_profile(&g, a, &prof).unwrap();
                let h = GridFn::from_fn(g.clone(), |x| (std::f64::consts::PI * x).sin() * x);
                let l1 = lin.apply(&h).unwrap();
                let l2 = lin.apply_flux_form(&h).unwrap();
                g.nodes()
                    .iter()
                    .zip(l1.values().iter().zip(l2.values()))
                    .filter(|(x, _)| **x >= 0.1 && **x <= 0.9)
                    .map(|(_, (p, q))| (p - q).abs())
                    .fold(0.0f64, f64::max)
            };
            let (coarse, fine) = (gap(256), gap(512));
            assert!(fine < coarse / 3.0, "N={dim}: {coarse} -> {fine}");
        }
    }

    #[test]
    fn annihilated_flux_leaves_potential_term() {
        // q = 1 and h = U_a: the flux h'/U_a' is constant, so L h = U_a' h
        let prof = closed_n2();
        let a = 2.0;
        let g = uniform(1024);
        let h = GridFn::try_from_fn(g.clone(), |x| prof.eval_u(a, x)).unwrap();
        let lin = Linearization::from_profile(&g, a, &prof).unwrap();
        let out = lin.apply_flux_form(&h).unwrap();
        for i in 1..g.cells() {
            let x = g.nodes()[i];
            let want = prof.eval_du(a, x).unwrap() * h.values()[i];
            assert!((out.values()[i] - want).abs() < 1e-4, "x={x}");
        }
    }

    #[test]
    fn remainder_trivial_cases() {
        let prof = closed_n2();
        let g = uniform(128);
        let zero = GridFn::zeros(g.clone());
        assert!(remainder(&zero, 2.0, &prof).unwrap().max_abs() == 0.0);
        // q = 1: F = h h'
        let h = GridFn::from_fn(g.clone(), |x| 0.01 * x * (1.0 - x));
        let f = remainder(&h, 2.0, &prof).unwrap();
        let dh = first_derivative(g.nodes(), h.values());
        for i in 1..g.cells() {
            assert!((f.values()[i] - h.values()[i] * dh[i]).abs() < 1e-16);
        }
        // bracket base <= 0
        let prof3 = SteadyProfile::build(3, 1e-8).unwrap();
        let steep = GridFn::from_fn(g, |x| -10.0 * x * (1.0 - x));
        assert!(matches!(remainder(&steep, 2.0, &prof3), Err(Error::Domain(_))));
    }

    #[test]
    fn linearization_plus_remainder_is_exact_on_the_grid() {
        for dim in [2u32, 3, 4] {
            let prof = SteadyProfile::build(dim, 1e-10).unwrap();
            let a = 0.4 * prof.solve_a_of_m(0.9 * prof.critical_mass()).unwrap();
            let m = prof.eval_u(a, 1.0).unwrap();
            let params = ModelParams::new(dim, m).unwrap();
            let g = uniform(512);
            let steady = GridFn::try_from_fn(g.clone(), |x| prof.eval_u(a, x)).unwrap();
            let h = GridFn::from_fn(g.clone(), |x| 1e-3 * (std::f64::consts::PI * x).sin() * x);
            let lin = Linearization::from_samples(&steady, prof.q());
            let mut st = XStepper::new(&g, &params, 1e-4, Default::default()).unwrap();
            let r1 = st.rhs(steady.add(&h).unwrap().values());
            let r0 = st.rhs(steady.values());
            let lh = lin.apply(&h).unwrap();
            let f = lin.remainder(&h).unwrap();
            let worst = (1..g.cells())
                .map(|i| (r1[i] - r0[i] - lh.values()[i] - f.values()[i]).abs())
                .fold(0.0f64, f64::max);
            assert!(worst < 1e-10, "N={dim}: {worst}");
        }
    }

    #[test]
    fn identities_vanish_for_zero_and_are_small_for_smooth_h() {
        let prof = closed_n2();
        let g = uniform(1024);
        let zero = GridFn::zeros(g.clone());
        assert_eq!(beesack_residual(&zero, 2.0, &prof).unwrap(), 0.0);
        assert_eq!(lemma41_residual(&zero, 2.0, &prof).unwrap(), 0.0);
        let h = GridFn::from_fn(g.clone(), |x| x * (1.0 - x));
        assert!(beesack_residual(&h, 2.0, &prof).unwrap() < 1e-8);
        let coarse = lemma41_residual(&h, 2.0, &prof).unwrap();
        let fine = lemma41_residual(&GridFn::from_fn(uniform(2048), |x| x * (1.0 - x)), 2.0, &prof).unwrap();
        assert!(fine < coarse / 1.9, "{coarse} -> {fine}");
    }

    #[test]
    fn eigenfunction_satisfies_both_characterizations() {
        let prof = closed_n2();
        let r = lambda1(2.0, uniform(2048), &prof).unwrap();
        let t = beesack_terms(&r.phi1, 2.0, &prof).unwrap();
        // ||phi1||_L = 1, so the energy minus the mass is lambda1 - 1
        assert!((t.energy - t.weighted_mass - (r.lambda1 - 1.0)).abs() < 1e-6);
        assert!(beesack_residual(&r.phi1, 2.0, &prof).unwrap() < 1e-6);
        let s = lemma41_sides(&r.phi1, 2.0, &prof).unwrap();
        assert!((s.lhs + (r.lambda1 - 1.0)).abs() < 1e-5);
    }

    #[test]
    fn csv_headers() {
        let prof = closed_n2();
        let r = lambda1(2.0, uniform(64), &prof).unwrap();
        let text = lambda1_csv(&[(2, 2.0, 64, &r)]);
        assert!(text.starts_with("N,a,n,lambda1,gap,iters\n2,2.0000000000000000e0,64,"));
        let phi = phi1_csv(&r.phi1);
        assert_eq!(phi.lines().count(), 66);
        assert!(phi.starts_with("x,phi1\n"));
    }
}
