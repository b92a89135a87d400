mod common;

use common::uniform;
use nalgebra::DMatrix;
use pkslab_core::spectrum::{lambda1, SpectralPencil};
use pkslab_core::tridiag::SymTridiag;
use pkslab_core::SteadyProfile;

fn dense(t: &SymTridiag) -> DMatrix<f64> {
    let n = t.diag.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = t.diag[i];
        if i + 1 < n {
            m[(i, i + 1)] = t.off[i];
            m[(i + 1, i)] = t.off[i];
        }
    }
    m
}

/// Sorted generalized eigenvalues of `K v = lambda M v` via the Cholesky
/// reduction `L^{-1} K L^{-T}`.
fn dense_pencil_eigenvalues(pencil: &SpectralPencil) -> Vec<f64> {
    let k = dense(pencil.stiffness());
    let m = dense(pencil.mass());
    let l = m.cholesky().expect("mass matrix is SPD").l();
    let linv = l.try_inverse().unwrap();
    let c = &linv * k * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let mut ev: Vec<f64> = c.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

#[test]
fn inverse_iteration_matches_dense_solver() {
    for (dim, a) in [(2u32, 2.0), (3, 5.0), (4, 3.0)] {
        let prof = SteadyProfile::build(dim, 1e-10).unwrap();
        let pencil = SpectralPencil::assemble(uniform(512), a, &prof).unwrap();
        let ev = dense_pencil_eigenvalues(&pencil);
        let pair = pencil.smallest().unwrap();
        assert!((pair.value - ev[0]).abs() < 1e-8 * ev[0], "N={dim}: {} vs {}", pair.value, ev[0]);
        let second = pencil.kth_eigenvalue(2, pair.value);
        assert!((second - ev[1]).abs() < 1e-8 * ev[1], "N={dim}: {second} vs {}", ev[1]);
        assert_eq!(pencil.count_below(0.5 * (ev[0] + ev[1])), 1);
    }
}

#[test]
fn n2_refinement_gap_at_4096() {
    let prof = SteadyProfile::build(2, 1e-10).unwrap();
    let r = lambda1(2.0, uniform(4096), &prof).unwrap();
    assert!(r.lambda1 > 1.0);
    assert!(r.refinement_gap <= 1e-6, "{}", r.refinement_gap);
    // and the coarse solve agrees with the dense oracle at n = 512
    let coarse = lambda1(2.0, uniform(512), &prof).unwrap();
    let ev = dense_pencil_eigenvalues(&SpectralPencil::assemble(uniform(512), 2.0, &prof).unwrap());
    assert!((coarse.lambda1 - ev[0]).abs() <= 1e-6);
}
