use crate::error::{Error, Result};

/// Problem parameters: space dimension `N`, boundary mass `m`.
///
/// The diffusion exponent `q = 2/N` is always derived from `N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    n: u32,
    m: f64,
}

impl ModelParams {
    pub fn new(n: u32, m: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("N must be >= 2, got {n}")));
        }
        if !(m >= 0.0) || !m.is_finite() {
            return Err(Error::InvalidParameter(format!("m must be finite and >= 0, got {m}")));
        }
        Ok(Self { n, m })
    }

    pub fn dim(&self) -> u32 {
        self.n
    }

    pub fn q(&self) -> f64 {
        q_of(self.n)
    }

    pub fn mass(&self) -> f64 {
        self.m
    }

    pub fn with_mass(&self, m: f64) -> Result<Self> {
        Self::new(self.n, m)
    }
}

/// `q = 2/N`.
pub fn q_of(n: u32) -> f64 {
    2.0 / n as f64
}

/// `x^q`, exact for `q = 1`.
#[inline]
pub(crate) fn pow_q(x: f64, q: f64) -> f64 {
    if q == 1.0 {
        x
    } else {
        x.powf(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_is_derived() {
        let p = ModelParams::new(3, 0.5).unwrap();
        assert_eq!(p.q(), 2.0 / 3.0);
        assert_eq!(ModelParams::new(2, 1.0).unwrap().q(), 1.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ModelParams::new(1, 0.5).is_err());
        assert!(ModelParams::new(2, -1e-3).is_err());
        assert!(ModelParams::new(2, f64::NAN).is_err());
    }
}
