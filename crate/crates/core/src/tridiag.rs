//! Tridiagonal linear algebra: general (Thomas) solves, symmetric `LDL^T`
//! factorizations, and Sylvester inertia counts for symmetric pencils.

use crate::error::{Error, Result};

/// General tridiagonal matrix with a precomputed LU factorization
/// (no pivoting; intended for diagonally dominant systems).
#[derive(Debug, Clone)]
pub struct TridiagLu {
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl TridiagLu {
    /// `lower[i]` couples row `i+1` to column `i`, `upper[i]` couples row `i`
    /// to column `i+1`.
    pub fn new(lower: &[f64], diag: &[f64], upper: &[f64]) -> Result<Self> {
        let n = diag.len();
        if lower.len() + 1 != n || upper.len() + 1 != n {
            return Err(Error::LinearAlgebra("inconsistent tridiagonal band lengths".into()));
        }
        let mut d = diag.to_vec();
        let mut l = lower.to_vec();
        for i in 1..n {
            if d[i - 1] == 0.0 || !d[i - 1].is_finite() {
                return Err(Error::LinearAlgebra(format!("zero pivot in row {}", i - 1)));
            }
            l[i - 1] /= d[i - 1];
            d[i] -= l[i - 1] * upper[i - 1];
        }
        if d[n - 1] == 0.0 || !d[n - 1].is_finite() {
            return Err(Error::LinearAlgebra(format!("zero pivot in row {}", n - 1)));
        }
        Ok(Self {
            lower: l,
            diag: d,
            upper: upper.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Solve in place.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.diag.len();
        for i in 1..n {
            rhs[i] -= self.lower[i - 1] * rhs[i - 1];
        }
        rhs[n - 1] /= self.diag[n - 1];
        for i in (0..n - 1).rev() {
            rhs[i] = (rhs[i] - self.upper[i] * rhs[i + 1]) / self.diag[i];
        }
    }
}

/// Symmetric tridiagonal matrix `(diag, off)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(diag.len(), off.len() + 1);
        Self { diag, off }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let n = self.diag.len();
        let mut y: Vec<f64> = (0..n).map(|i| self.diag[i] * x[i]).collect();
        for i in 0..n - 1 {
            y[i] += self.off[i] * x[i + 1];
            y[i + 1] += self.off[i] * x[i];
        }
        y
    }

    pub fn quad(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.diag.len() {
            acc += self.diag[i] * x[i] * x[i];
        }
        for i in 0..self.off.len() {
            acc += 2.0 * self.off[i] * x[i] * x[i + 1];
        }
        acc
    }

    /// `self - sigma * other`.
    pub fn shifted(&self, sigma: f64, other: &SymTridiag) -> SymTridiag {
        SymTridiag {
            diag: self.diag.iter().zip(&other.diag).map(|(a, b)| a - sigma * b).collect(),
            off: self.off.iter().zip(&other.off).map(|(a, b)| a - sigma * b).collect(),
        }
    }

    /// `LDL^T` factorization; fails on a zero or non-finite pivot.
    pub fn ldlt(&self) -> Result<Ldlt> {
        let n = self.diag.len();
        let mut d = vec![0.0; n];
        let mut l = vec![0.0; n.saturating_sub(1)];
        d[0] = self.diag[0];
        for i in 1..n {
            if d[i - 1] == 0.0 || !d[i - 1].is_finite() {
                return Err(Error::LinearAlgebra(format!("zero pivot in row {}", i - 1)));
            }
            l[i - 1] = self.off[i - 1] / d[i - 1];
            d[i] = self.diag[i] - l[i - 1] * self.off[i - 1];
        }
        if d[n - 1] == 0.0 || !d[n - 1].is_finite() {
            return Err(Error::LinearAlgebra(format!("zero pivot in row {}", n - 1)));
        }
        Ok(Ldlt { l, d })
    }

    /// Number of negative eigenvalues, from the signs of the `LDL^T` pivots.
    pub fn negative_count(&self) -> usize {
        let n = self.diag.len();
        let mut count = 0;
        let mut d = self.diag[0];
        for i in 0..n {
            if i > 0 {
                let prev = if d == 0.0 { f64::MIN_POSITIVE * 1e-3 } else { d };
                d = self.diag[i] - self.off[i - 1] * self.off[i - 1] / prev;
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }
}

/// `A = L D L^T` with unit lower-bidiagonal `L`.
#[derive(Debug, Clone)]
pub struct Ldlt {
    l: Vec<f64>,
    d: Vec<f64>,
}

impl Ldlt {
    pub fn pivots(&self) -> &[f64] {
        &self.d
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.d.len();
        for i in 1..n {
            b[i] -= self.l[i - 1] * b[i - 1];
        }
        for i in 0..n {
            b[i] /= self.d[i];
        }
        for i in (0..n - 1).rev() {
            b[i] -= self.l[i] * b[i + 1];
        }
    }
}

/// Number of eigenvalues of the pencil `K h = lambda M h` below `sigma`
/// (`M` positive definite).
pub fn pencil_count_below(k: &SymTridiag, m: &SymTridiag, sigma: f64) -> usize {
    k.shifted(sigma, m).negative_count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thomas_solves_nonsymmetric_system() {
        let lower = [1.0, -0.5, 0.25];
        let diag = [4.0, 5.0, 6.0, 7.0];
        let upper = [0.5, 1.5, -1.0];
        let x = [1.0, -2.0, 3.0, 0.5];
        let mut b = vec![0.0; 4];
        for i in 0..4 {
            b[i] = diag[i] * x[i];
            if i > 0 {
                b[i] += lower[i - 1] * x[i - 1];
            }
            if i < 3 {
                b[i] += upper[i] * x[i + 1];
            }
        }
        let lu = TridiagLu::new(&lower, &diag, &upper).unwrap();
        lu.solve_in_place(&mut b);
        for i in 0..4 {
            assert!((b[i] - x[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn ldlt_round_trip() {
        let a = SymTridiag::new(vec![2.0, 3.0, 4.0, 5.0], vec![-1.0, 0.5, -2.0]);
        let x = [1.0, 2.0, -1.0, 0.25];
        let mut b = a.mul(&x);
        a.ldlt().unwrap().solve_in_place(&mut b);
        for i in 0..4 {
            assert!((b[i] - x[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn inertia_counts_laplacian_eigenvalues() {
        // eigenvalues of tridiag(-1, 2, -1) of size n are 2 - 2 cos(k pi/(n+1))
        let n = 20;
        let a = SymTridiag::new(vec![2.0; n], vec![-1.0; n - 1]);
        let id = SymTridiag::new(vec![1.0; n], vec![0.0; n - 1]);
        for k in 1..=n {
            let ev = 2.0 - 2.0 * (k as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos();
            assert_eq!(pencil_count_below(&a, &id, ev - 1e-9), k - 1);
            assert_eq!(pencil_count_below(&a, &id, ev + 1e-9), k);
        }
    }
}
