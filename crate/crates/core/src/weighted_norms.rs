//! Grids on `[0, 1]`, nodal grid functions, and discrete norms for the
//! weighted space `L = L^2((0,1), x^{q-2} dx)`, its energy space `H`, `C^1`,
//! and `sup u(x)/x`.
//!
//! All power-weight integrals are computed exactly for the piecewise-linear
//! interpolant: on the first cell in closed form (the integrand is
//! `beta^2 x^{p+2}`), on cells that are wide relative to their distance from
//! the origin by closed-form moments, and elsewhere by a Gauss rule whose
//! error is far below rounding (the weight is analytic on a neighbourhood
//! at least twice the cell width).

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::GaussRule;

pub const MIN_CELLS: usize = 8;

/// Nodes `0 = x_0 < x_1 < ... < x_n = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nodes: Vec<f64>,
    grading: f64,
}

impl Grid {
    pub fn uniform(n: usize) -> Result<Self> {
        Self::graded(n, 1.0)
    }

    /// `x_i = (i/n)^gamma`.
    pub fn graded(n: usize, gamma: f64) -> Result<Self> {
        if n < MIN_CELLS {
            return Err(Error::InvalidParameter(format!("need n >= {MIN_CELLS} cells, got {n}")));
        }
        if !(gamma >= 1.0) || !gamma.is_finite() {
            return Err(Error::InvalidParameter(format!("grading must be >= 1, got {gamma}")));
        }
        let nodes = (0..=n)
            .map(|i| {
                if i == n {
                    1.0
                } else if gamma == 1.0 {
                    i as f64 / n as f64
                } else {
                    (i as f64 / n as f64).powf(gamma)
                }
            })
            .collect();
        Ok(Self { nodes, grading: gamma })
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < MIN_CELLS + 1 {
            return Err(Error::InvalidParameter("too few nodes".into()));
        }
        if nodes[0] != 0.0 || *nodes.last().unwrap() != 1.0 {
            return Err(Error::InvalidParameter("nodes must start at 0 and end at 1".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("nodes must be strictly increasing".into()));
        }
        Ok(Self { nodes, grading: f64::NAN })
    }

    /// Number of cells.
    pub fn cells(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn grading(&self) -> f64 {
        self.grading
    }

    pub fn width(&self, cell: usize) -> f64 {
        self.nodes[cell + 1] - self.nodes[cell]
    }

    /// Grid with every cell split in two.
    pub fn refined(&self) -> Self {
        if self.grading.is_finite() {
            return Self::graded(2 * self.cells(), self.grading).expect("refinement of a valid grid");
        }
        let mut nodes = Vec::with_capacity(2 * self.nodes.len());
        for w in self.nodes.windows(2) {
            nodes.push(w[0]);
            nodes.push(0.5 * (w[0] + w[1]));
        }
        nodes.push(1.0);
        Self { nodes, grading: f64::NAN }
    }
}

/// Nodal values on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFn {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridFn {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.nodes.len() {
            return Err(Error::InvalidParameter(format!(
                "{} values for a grid with {} nodes",
                values.len(),
                grid.nodes.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn<F: FnMut(f64) -> f64>(grid: Arc<Grid>, mut f: F) -> Self {
        let values = grid.nodes.iter().map(|&x| f(x)).collect();
        Self { grid, values }
    }

    pub fn try_from_fn<F: FnMut(f64) -> Result<f64>>(grid: Arc<Grid>, mut f: F) -> Result<Self> {
        let values = grid.nodes.iter().map(|&x| f(x)).collect::<Result<Vec<_>>>()?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.nodes.len();
        Self { grid, values: vec![0.0; n] }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn nodes(&self) -> &[f64] {
        &self.grid.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Cell slopes `(h_{i+1} - h_i) / (x_{i+1} - x_i)`.
    pub fn slopes(&self) -> Vec<f64> {
        self.values
            .windows(2)
            .zip(self.grid.nodes.windows(2))
            .map(|(v, x)| (v[1] - v[0]) / (x[1] - x[0]))
            .collect()
    }

    pub(crate) fn same_grid(&self, other: &GridFn) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::InvalidParameter("grid functions live on different grids".into()))
        }
    }

    pub fn sub(&self, other: &GridFn) -> Result<GridFn> {
        self.same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Self { grid: self.grid.clone(), values })
    }

    pub fn add(&self, other: &GridFn) -> Result<GridFn> {
        self.same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(Self { grid: self.grid.clone(), values })
    }

    pub fn scaled(&self, c: f64) -> GridFn {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Per-cell integrals `int phi_i phi_j x^p` of the two hat functions that
/// live on each cell: `[left-left, left-right, right-right]`.
#[derive(Debug, Clone)]
pub struct PowerWeightCells {
    exponent: f64,
    cells: Vec<[f64; 3]>,
}

fn moment(a: f64, b: f64, e: f64) -> f64 {
    if e == 0.0 {
        (b / a).ln()
    } else {
        (b.powf(e) - a.powf(e)) / e
    }
}

impl PowerWeightCells {
    /// Cell integrals against `x^p`. The first cell's left-left entry is
    /// `+inf` when `p <= -1`; only functions vanishing at 0 are admissible then.
    pub fn new(grid: &Grid, p: f64) -> Self {
        assert!(p > -3.0, "weight x^{p} is not integrable against x^2");
        let rule = GaussRule::new(10);
        let x = &grid.nodes;
        let cells = (0..grid.cells())
            .map(|c| {
                let (a, b) = (x[c], x[c + 1]);
                let d = b - a;
                if a == 0.0 {
                    let scale = b.powf(p + 1.0);
                    let aa = if p > -1.0 {
                        scale * (1.0 / (p + 1.0) - 2.0 / (p + 2.0) + 1.0 / (p + 3.0))
                    } else {
                        f64::INFINITY
                    };
                    let ab = if p > -2.0 {
                        scale * (1.0 / (p + 2.0) - 1.0 / (p + 3.0))
                    } else {
                        f64::INFINITY
                    };
                    [aa, ab, scale / (p + 3.0)]
                } else if d > 0.5 * a {
                    let m0 = moment(a, b, p + 1.0);
                    let m1 = moment(a, b, p + 2.0);
                    let m2 = moment(a, b, p + 3.0);
                    let d2 = d * d;
                    [
                        (b * b * m0 - 2.0 * b * m1 + m2) / d2,
                        (-a * b * m0 + (a + b) * m1 - m2) / d2,
                        (a * a * m0 - 2.0 * a * m1 + m2) / d2,
                    ]
                } else {
                    let mut acc = [0.0; 3];
                    for (xq, w) in rule.points(a, b) {
                        let wt = w * xq.powf(p);
                        let l = (b - xq) / d;
                        let r = (xq - a) / d;
                        acc[0] += wt * l * l;
                        acc[1] += wt * l * r;
                        acc[2] += wt * r * r;
                    }
                    acc
                }
            })
            .collect();
        Self { exponent: p, cells }
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn cells(&self) -> &[[f64; 3]] {
        &self.cells
    }

    /// `int f g x^p` for the piecewise-linear interpolants of `f`, `g`.
    pub fn bilinear(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        if self.exponent <= -1.0 && (f[0] != 0.0 || g[0] != 0.0) {
            let h0 = if f[0] != 0.0 { f[0] } else { g[0] };
            return Err(Error::DivergentWeight { h0 });
        }
        let mut acc = 0.0;
        for (c, w) in self.cells.iter().enumerate() {
            let (fa, fb, ga, gb) = (f[c], f[c + 1], g[c], g[c + 1]);
            let mut cell = fb * gb * w[2];
            if fa != 0.0 || ga != 0.0 {
                cell += fa * ga * w[0] + (fa * gb + fb * ga) * w[1];
            }
            acc += cell;
        }
        Ok(acc)
    }

    /// Tridiagonal matrix of the form restricted to interior nodes
    /// `1..n-1`: `(diagonal, superdiagonal)`.
    pub fn interior_matrix(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.cells.len();
        let mut diag = vec![0.0; n - 1];
        let mut off = vec![0.0; n - 2];
        for (c, w) in self.cells.iter().enumerate() {
            // cell c joins nodes c and c+1, i.e. interior indices c-1 and c
            if c >= 1 {
                diag[c - 1] += w[0];
            }
            if c + 1 < n {
                diag[c] += w[2];
            }
            if c >= 1 && c + 1 < n {
                off[c - 1] += w[1];
            }
        }
        (diag, off)
    }
}

fn weight_exponent(q: f64) -> f64 {
    q - 2.0
}

/// `||h||_L^2 = int h^2 / x^{2-q}`.
pub fn norm_l_squared(h: &GridFn, q: f64) -> Result<f64> {
    let cells = PowerWeightCells::new(&h.grid, weight_exponent(q));
    Ok(cells.bilinear(&h.values, &h.values)?.max(0.0))
}

/// `||h||_L`.
pub fn norm_l(h: &GridFn, q: f64) -> Result<f64> {
    Ok(norm_l_squared(h, q)?.sqrt())
}

/// `int h k / x^{2-q}`.
pub fn inner_l(h: &GridFn, k: &GridFn, q: f64) -> Result<f64> {
    h.same_grid(k)?;
    PowerWeightCells::new(&h.grid, weight_exponent(q)).bilinear(&h.values, &k.values)
}

/// `int (h')^2` for the piecewise-linear interpolant.
pub fn dirichlet_energy(h: &GridFn) -> f64 {
    h.slopes()
        .iter()
        .enumerate()
        .map(|(c, s)| s * s * h.grid.width(c))
        .sum()
}

/// `||h||_H = sqrt(||h||_L^2 + int (h')^2)`.
pub fn norm_h(h: &GridFn, q: f64) -> Result<f64> {
    let last = *h.values.last().unwrap();
    if last != 0.0 {
        return Err(Error::Domain(format!("h(1) = {last} must vanish in H")));
    }
    Ok((norm_l_squared(h, q)? + dirichlet_energy(h)).sqrt())
}

/// Discrete `C^1` norm: `max |h_i| + max |cell slope|`.
pub fn norm_c1(h: &GridFn) -> f64 {
    let slope = h.slopes().iter().fold(0.0f64, |m, s| m.max(s.abs()));
    h.max_abs() + slope
}

/// `sup_{x in (0,1]} u(x)/x` over the nodes.
pub fn sup_ratio(u: &GridFn) -> f64 {
    u.values
        .iter()
        .zip(&u.grid.nodes)
        .skip(1)
        .fold(0.0f64, |m, (v, x)| m.max(v / x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Arc<Grid> {
        Arc::new(Grid::uniform(n).unwrap())
    }

    #[test]
    fn grid_endpoints_and_validation() {
        let g = Grid::graded(16, 2.0).unwrap();
        assert_eq!(g.nodes()[0], 0.0);
        assert_eq!(*g.nodes().last().unwrap(), 1.0);
        assert!(Grid::uniform(7).is_err());
        assert!(Grid::graded(16, 0.5).is_err());
        assert_eq!(g.refined().cells(), 32);
    }

    #[test]
    fn linear_function_norm_l_is_exact() {
        let h = GridFn::from_fn(grid(1024), |x| x);
        assert!((norm_l(&h, 1.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-14);
        let h = GridFn::from_fn(grid(16), |x| x);
        // q = 2/3: int x^{2/3} = 3/5
        assert!((norm_l_squared(&h, 2.0 / 3.0).unwrap() - 0.6).abs() < 1e-14);
    }

    #[test]
    fn zero_function() {
        let h = GridFn::zeros(grid(64));
        assert_eq!(norm_l(&h, 1.0).unwrap(), 0.0);
        assert_eq!(norm_h(&h, 1.0).unwrap(), 0.0);
        assert_eq!(norm_c1(&h), 0.0);
    }

    #[test]
    fn divergent_weight_is_reported() {
        let h = GridFn::from_fn(grid(64), |x| 1.0 + x);
        assert!(matches!(norm_l(&h, 1.0), Err(Error::DivergentWeight { .. })));
        // the weight x^0 is integrable, so nonzero h(0) is fine for q = 2
        assert!(norm_l(&h, 2.0).is_ok());
    }

    #[test]
    fn c1_norm_examples() {
        let h = GridFn::from_fn(grid(64), |x| x);
        assert!((norm_c1(&h) - 2.0).abs() < 1e-14);
        let h = GridFn::from_fn(grid(64), |_| -3.0);
        assert_eq!(norm_c1(&h), 3.0);
    }

    #[test]
    fn sup_ratio_examples() {
        let g = grid(64);
        assert!((sup_ratio(&GridFn::from_fn(g.clone(), |x| x)) - 1.0).abs() < 1e-15);
        assert!((sup_ratio(&GridFn::from_fn(g, |x| x * x)) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn interior_matrix_matches_bilinear_form() {
        let g = Grid::graded(12, 1.5).unwrap();
        let cells = PowerWeightCells::new(&g, -4.0 / 3.0);
        let (d, o) = cells.interior_matrix();
        let h: Vec<f64> = g.nodes().iter().map(|&x| x * (1.0 - x) * (2.0 + x)).collect();
        let inner = &h[1..h.len() - 1];
        let mut quad = 0.0;
        for i in 0..inner.len() {
            quad += d[i] * inner[i] * inner[i];
            if i + 1 < inner.len() {
                quad += 2.0 * o[i] * inner[i] * inner[i + 1];
            }
        }
        let direct = cells.bilinear(&h, &h).unwrap();
        assert!((quad - direct).abs() < 1e-14 * direct);
    }

    #[test]
    fn moments_agree_across_branches() {
        // A cell straddling the closed-form/Gauss switch.
        let g = Grid::from_nodes(
            [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.8, 0.9, 1.0].to_vec(),
        )
        .unwrap();
        let p = -4.0 / 3.0;
        let gauss = PowerWeightCells::new(&g, p);
        let rule = GaussRule::new(40);
        for c in 1..g.cells() {
            let (a, b) = (g.nodes()[c], g.nodes()[c + 1]);
            let d = b - a;
            let rr = rule.integrate(a, b, |x| ((x - a) / d).powi(2) * x.powf(p));
            assert!((gauss.cells()[c][2] - rr).abs() < 1e-13 * rr, "cell {c}");
        }
    }
}
