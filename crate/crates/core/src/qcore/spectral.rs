//! Hermitian eigendecomposition, the spectral filter and the trace distance.

use super::matrix::{ComplexMatrix, DensityMatrix, C64, ZERO};
use crate::error::{Error, Result};

/// Eigenvalues (ascending) and orthonormal eigenvectors stored as columns.
#[derive(Clone, Debug)]
pub struct Eigh {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl Eigh {
    /// `Σ_i w_i |v_i⟩⟨v_i|`
    pub fn assemble(&self, weights: &[f64]) -> ComplexMatrix {
        let n = self.vectors.dim();
        let mut out = ComplexMatrix::zeros(n);
        for (i, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for r in 0..n {
                let vr = self.vectors[(r, i)] * w;
                for c in 0..n {
                    out[(r, c)] += vr * self.vectors[(c, i)].conj();
                }
            }
        }
        out.hermitize()
    }
}

/// Eigendecomposition of the Hermitian part of `h`.
///
/// 2x2 matrices use the closed form; larger ones go through nalgebra's
/// symmetric tridiagonalization and implicit QL/QR iteration.
pub fn eigh(h: &ComplexMatrix) -> Eigh {
    let h = h.hermitize();
    if h.dim() == 2 {
        return eigh_2x2(&h);
    }
    let se = nalgebra::SymmetricEigen::new(h.to_nalgebra());
    let n = h.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let values = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vectors = ComplexMatrix::zeros(n);
    for (col, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors[(r, col)] = se.eigenvectors[(r, src)];
        }
    }
    Eigh { values, vectors }
}

fn eigh_2x2(h: &ComplexMatrix) -> Eigh {
    let a = h[(0, 0)].re;
    let d = h[(1, 1)].re;
    let b = h[(0, 1)];
    let mean = 0.5 * (a + d);
    let half = 0.5 * (a - d);
    let r = half.hypot(b.norm());
    let hi = mean + r;
    let lo = mean - r;

    // eigenvector (x, y) of the upper eigenvalue, picked to avoid cancellation
    let (x, y) = if b.norm() == 0.0 {
        if half >= 0.0 {
            (C64::new(1.0, 0.0), ZERO)
        } else {
            (ZERO, C64::new(1.0, 0.0))
        }
    } else if half >= 0.0 {
        (C64::new(r + half, 0.0), b.conj())
    } else {
        (b, C64::new(r - half, 0.0))
    };
    let norm = (x.norm_sqr() + y.norm_sqr()).sqrt();
    let (x, y) = (x / norm, y / norm);

    let mut vectors = ComplexMatrix::zeros(2);
    // column 0: lower eigenvalue, orthogonal complement (-y*, x*)
    vectors[(0, 0)] = -y.conj();
    vectors[(1, 0)] = x.conj();
    vectors[(0, 1)] = x;
    vectors[(1, 1)] = y;
    Eigh {
        values: vec![lo, hi],
        vectors,
    }
}

/// Projects a Hermitian matrix onto the density matrices by zeroing the
/// non-positive eigenvalues and renormalizing the rest to unit sum.
pub fn spectral_filter(h: &ComplexMatrix) -> Result<DensityMatrix> {
    super::basis::require_hermitian(h, "spectral_filter")?;
    let eig = eigh(h);
    let kept: Vec<f64> = eig
        .values
        .iter()
        .map(|&e| if e > 0.0 { e } else { 0.0 })
        .collect();
    let total: f64 = kept.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateSpectrum { time_us: None });
    }
    let weights: Vec<f64> = kept.iter().map(|e| e / total).collect();
    Ok(DensityMatrix::new_unchecked(eig.assemble(&weights)))
}

/// `½ Σ σ_i(ρ1 - ρ2)`; for Hermitian arguments the singular values are the
/// absolute eigenvalues of the difference.
pub fn trace_distance(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    if rho1.dim() != rho2.dim() {
        return Err(Error::InvalidArgument(format!(
            "trace distance between {}- and {}-level states",
            rho1.dim(),
            rho2.dim()
        )));
    }
    let diff = rho1.matrix() - rho2.matrix();
    let eig = eigh(&diff);
    let t = 0.5 * eig.values.iter().map(|v| v.abs()).sum::<f64>();
    Ok(t.clamp(0.0, 1.0))
}

/// Smallest eigenvalue of the Hermitian part.
pub fn min_eigenvalue(h: &ComplexMatrix) -> f64 {
    eigh(h).values[0]
}
