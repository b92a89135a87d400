#![allow(dead_code)]

use std::sync::Arc;

use pkslab_core::{Grid, GridFn};
use rand::Rng;

pub fn uniform(n: usize) -> Arc<Grid> {
    Arc::new(Grid::uniform(n).unwrap())
}

/// A nondecreasing shape on `[0, 1]` with `b(0) = 0`, `b(1) = 1`.
#[derive(Debug, Clone, Copy)]
pub enum Shape {
    Power(f64),
    Reflected(f64),
}

impl Shape {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Shape::Power(p) => x.powf(p),
            Shape::Reflected(p) => 1.0 - (1.0 - x).powf(p),
        }
    }
}

/// Convex combination of shapes, scaled by `m`.
#[derive(Debug, Clone)]
pub struct Mixture {
    pub parts: Vec<(f64, Shape)>,
}

impl Mixture {
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        let k = rng.gen_range(1..=3);
        let mut parts: Vec<(f64, Shape)> = (0..k)
            .map(|_| {
                let p = rng.gen_range(1.0..4.0);
                let s = if rng.gen_bool(0.5) { Shape::Power(p) } else { Shape::Reflected(p) };
                (rng.gen_range(0.1..1.0), s)
            })
            .collect();
        let total: f64 = parts.iter().map(|p| p.0).sum();
        parts.iter_mut().for_each(|p| p.0 /= total);
        Self { parts }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.parts.iter().map(|(w, s)| w * s.eval(x)).sum()
    }

    /// Nodal values of `m * mixture`, with exact endpoint values.
    pub fn sample(&self, grid: Arc<Grid>, m: f64) -> GridFn {
        let mut u = GridFn::from_fn(grid, |x| m * self.eval(x));
        let n = u.values().len() - 1;
        u.values_mut()[0] = 0.0;
        u.values_mut()[n] = m;
        u
    }
}

/// Ordered pair `u1 <= u2` of admissible data with the same mass.
pub fn ordered_pair<R: Rng>(rng: &mut R, grid: Arc<Grid>, m: f64) -> (GridFn, GridFn) {
    let a = Mixture::random(rng).sample(grid.clone(), m);
    let b = Mixture::random(rng).sample(grid.clone(), m);
    let lo: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| x.min(*y)).collect();
    let hi: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| x.max(*y)).collect();
    (GridFn::new(grid.clone(), lo).unwrap(), GridFn::new(grid, hi).unwrap())
}
