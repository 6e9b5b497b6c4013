#![allow(dead_code)]

use proptest::prelude::*;
use qude_core::qcore::{ComplexMatrix, DensityMatrix, C64};

/// Arbitrary complex N×N matrix with entries in [-1, 1] + i[-1, 1].
pub fn complex_matrix(n: usize) -> impl Strategy<Value = ComplexMatrix> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), n * n).prop_map(move |v| {
        ComplexMatrix::from_vec(n, v.into_iter().map(|(r, i)| C64::new(r, i)).collect()).unwrap()
    })
}

pub fn hermitian(n: usize) -> impl Strategy<Value = ComplexMatrix> {
    complex_matrix(n).prop_map(|m| m.hermitize())
}

/// `A A† / Tr(A A†)`: full-rank states, occasionally near the boundary.
pub fn density(n: usize) -> impl Strategy<Value = DensityMatrix> {
    complex_matrix(n).prop_filter_map("singular", |a| {
        let g = &a * &a.adjoint();
        let tr = g.trace().re;
        (tr > 1e-6).then(|| DensityMatrix::new(g.scale_re(1.0 / tr).hermitize()).unwrap())
    })
}

/// Same construction from a seeded stream, for non-proptest loops.
pub fn seeded_density(n: usize, rng: &mut impl rand::Rng) -> DensityMatrix {
    loop {
        let data: Vec<C64> = (0..n * n)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let a = ComplexMatrix::from_vec(n, data).unwrap();
        let g = &a * &a.adjoint();
        let tr = g.trace().re;
        if tr > 1e-6 {
            return DensityMatrix::new(g.scale_re(1.0 / tr).hermitize()).unwrap();
        }
    }
}
