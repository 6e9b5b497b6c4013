//! Operator bases: generalized Gell-Mann matrices and the trace-orthogonal
//! Hermitian basis used to vectorize density matrices.

use super::matrix::{ComplexMatrix, C64, HERMITIAN_TOL, I, ONE};
use crate::error::{Error, Result};

/// The N²-1 generalized Gell-Mann matrices together with their
/// upper-triangular parts (diagonal included).
///
/// Ordering: all symmetric off-diagonal generators for pairs j<k
/// (row-major pair order), then all antisymmetric ones, then the N-1
/// diagonal generators. For N = 2 this is (σx, σy, σz).
#[derive(Clone, Debug)]
pub struct GellMannBasis {
    dim: usize,
    elements: Vec<ComplexMatrix>,
    uppers: Vec<ComplexMatrix>,
}

impl GellMannBasis {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[ComplexMatrix] {
        &self.elements
    }

    pub fn uppers(&self) -> &[ComplexMatrix] {
        &self.uppers
    }
}

pub fn gell_mann_basis(dim: usize) -> Result<GellMannBasis> {
    if dim < 2 {
        return Err(Error::InvalidDimension(dim));
    }
    let pairs: Vec<(usize, usize)> = (0..dim)
        .flat_map(|j| ((j + 1)..dim).map(move |k| (j, k)))
        .collect();

    let mut elements = Vec::with_capacity(dim * dim - 1);
    for &(j, k) in &pairs {
        let mut m = ComplexMatrix::zeros(dim);
        m[(j, k)] = ONE;
        m[(k, j)] = ONE;
        elements.push(m);
    }
    for &(j, k) in &pairs {
        let mut m = ComplexMatrix::zeros(dim);
        m[(j, k)] = -I;
        m[(k, j)] = I;
        elements.push(m);
    }
    for l in 1..dim {
        let norm = (2.0 / (l * (l + 1)) as f64).sqrt();
        let mut m = ComplexMatrix::zeros(dim);
        for j in 0..l {
            m[(j, j)] = C64::new(norm, 0.0);
        }
        m[(l, l)] = C64::new(-(l as f64) * norm, 0.0);
        elements.push(m);
    }
    let uppers = elements.iter().map(ComplexMatrix::upper).collect();
    Ok(GellMannBasis {
        dim,
        elements,
        uppers,
    })
}

/// The N² matrices Ĥ_jk indexed by the row-major multi-index (j, k):
/// `|j⟩⟨j|` on the diagonal, `½(|j⟩⟨k| + |k⟩⟨j|)` for j<k and
/// `(i/2)(|j⟩⟨k| - |k⟩⟨j|)` for j>k.
///
/// The elements are pairwise trace-orthogonal but the off-diagonal ones
/// have `Tr(Ĥ²) = ½`; those norms are kept in `gram_norms` and divided
/// out by [`expand`].
#[derive(Clone, Debug)]
pub struct HermitianBasis {
    dim: usize,
    elements: Vec<ComplexMatrix>,
    gram_norms: Vec<f64>,
}

impl HermitianBasis {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of basis elements, N².
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[ComplexMatrix] {
        &self.elements
    }

    pub fn gram_norms(&self) -> &[f64] {
        &self.gram_norms
    }

    /// Position of Ĥ_jk in the element list.
    pub fn index_of(&self, j: usize, k: usize) -> usize {
        j * self.dim + k
    }
}

pub fn hermitian_basis(dim: usize) -> Result<HermitianBasis> {
    if dim < 2 {
        return Err(Error::InvalidDimension(dim));
    }
    let mut elements = Vec::with_capacity(dim * dim);
    let mut gram_norms = Vec::with_capacity(dim * dim);
    for j in 0..dim {
        for k in 0..dim {
            let mut m = ComplexMatrix::zeros(dim);
            if j == k {
                m[(j, j)] = ONE;
            } else if j < k {
                m[(j, k)] = C64::new(0.5, 0.0);
                m[(k, j)] = C64::new(0.5, 0.0);
            } else {
                m[(j, k)] = C64::new(0.0, 0.5);
                m[(k, j)] = C64::new(0.0, -0.5);
            }
            let g = (&m * &m).trace().re;
            elements.push(m);
            gram_norms.push(g);
        }
    }
    Ok(HermitianBasis {
        dim,
        elements,
        gram_norms,
    })
}

/// Expansion coefficients `c_i = Tr(Ĥ_i H) / Tr(Ĥ_i Ĥ_i)`.
pub fn expand(h: &ComplexMatrix, basis: &HermitianBasis) -> Result<Vec<f64>> {
    if h.dim() != basis.dim() {
        return Err(Error::InvalidArgument(format!(
            "matrix dimension {} does not match basis dimension {}",
            h.dim(),
            basis.dim()
        )));
    }
    let defect = h.hermitian_defect();
    if defect > 1e-10 {
        return Err(Error::ContractViolation(format!(
            "expand requires a Hermitian matrix (defect {defect:.3e})"
        )));
    }
    Ok(expand_unchecked(h, basis.dim()))
}

/// Coefficient extraction for an (assumed) Hermitian matrix, read directly
/// from the entries. Matches the trace formula since each Ĥ_i touches at
/// most two entries.
pub(crate) fn expand_unchecked(h: &ComplexMatrix, dim: usize) -> Vec<f64> {
    let mut c = vec![0.0; dim * dim];
    for j in 0..dim {
        for k in 0..dim {
            c[j * dim + k] = if j == k {
                h[(j, j)].re
            } else if j < k {
                // Tr(Ĥ H)/½ = Re(H_jk) + Re(H_kj)
                h[(j, k)].re + h[(k, j)].re
            } else {
                // Tr(Ĥ H)/½ = i(H_kj - H_jk)
                (I * (h[(k, j)] - h[(j, k)])).re
            };
        }
    }
    c
}

/// `Σ_i c_i Ĥ_i`, exactly Hermitian.
pub fn reconstruct(coeffs: &[f64], basis: &HermitianBasis) -> Result<ComplexMatrix> {
    let n = basis.dim();
    if coeffs.len() != n * n {
        return Err(Error::InvalidArgument(format!(
            "expected {} coefficients, got {}",
            n * n,
            coeffs.len()
        )));
    }
    Ok(reconstruct_unchecked(coeffs, n))
}

pub(crate) fn reconstruct_unchecked(coeffs: &[f64], dim: usize) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(dim);
    for j in 0..dim {
        m[(j, j)] = C64::new(coeffs[j * dim + j], 0.0);
        for k in (j + 1)..dim {
            let sym = coeffs[j * dim + k];
            let anti = coeffs[k * dim + j];
            // ½ sym (|j⟩⟨k| + |k⟩⟨j|) + (i/2) anti (|k⟩⟨j| - |j⟩⟨k|)
            let v = C64::new(0.5 * sym, -0.5 * anti);
            m[(j, k)] = v;
            m[(k, j)] = v.conj();
        }
    }
    m
}

/// Checks the Hermitian precondition shared by several operations.
pub(crate) fn require_hermitian(h: &ComplexMatrix, what: &str) -> Result<()> {
    let defect = h.hermitian_defect();
    if defect > HERMITIAN_TOL.max(1e-10) {
        return Err(Error::ContractViolation(format!(
            "{what} requires a Hermitian matrix (defect {defect:.3e})"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::matrix::{pauli_x, pauli_y, pauli_z};

    #[test]
    fn gell_mann_qubit_is_pauli() {
        let gm = gell_mann_basis(2).unwrap();
        assert_eq!(gm.elements()[0], pauli_x());
        assert_eq!(gm.elements()[1], pauli_y());
        assert_eq!(gm.elements()[2], pauli_z());
    }

    #[test]
    fn gell_mann_uppers_for_qubit() {
        let gm = gell_mann_basis(2).unwrap();
        let a = crate::qcore::matrix::lowering(2);
        assert_eq!(gm.uppers()[0], a);
        assert_eq!(gm.uppers()[1].scale(I), gm.uppers()[0]);
        assert_eq!(gm.uppers()[2], ComplexMatrix::diag(&[1.0, -1.0]));
    }

    #[test]
    fn gell_mann_qutrit_by_brute_force_traces() {
        let gm = gell_mann_basis(3).unwrap();
        assert_eq!(gm.len(), 8);
        for (i, a) in gm.elements().iter().enumerate() {
            assert!(a.is_hermitian(1e-12));
            assert!(a.trace().norm() < 1e-12);
            for (j, b) in gm.elements().iter().enumerate() {
                let t = (a * b).trace();
                let expect = if i == j { 2.0 } else { 0.0 };
                assert!((t.re - expect).abs() < 1e-12 && t.im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn invalid_dimension() {
        assert!(matches!(
            gell_mann_basis(1),
            Err(Error::InvalidDimension(1))
        ));
        assert!(matches!(
            hermitian_basis(0),
            Err(Error::InvalidDimension(0))
        ));
    }

    #[test]
    fn hermitian_basis_elements_and_norms() {
        let hb = hermitian_basis(2).unwrap();
        assert_eq!(hb.elements()[0], ComplexMatrix::diag(&[1.0, 0.0]));
        let sym = &hb.elements()[hb.index_of(0, 1)];
        assert_eq!(*sym, pauli_x().scale_re(0.5));
        assert_eq!(hb.gram_norms(), &[1.0, 0.5, 0.5, 1.0]);
        for (i, a) in hb.elements().iter().enumerate() {
            for (j, b) in hb.elements().iter().enumerate() {
                if i != j {
                    assert!((a * b).trace().norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn expand_examples() {
        let hb = hermitian_basis(2).unwrap();
        assert_eq!(expand(&ComplexMatrix::zeros(2), &hb).unwrap(), vec![0.0; 4]);
        for k in 0..4 {
            let c = expand(&hb.elements()[k], &hb).unwrap();
            for (i, v) in c.iter().enumerate() {
                assert_eq!(*v, if i == k { 1.0 } else { 0.0 });
            }
        }
        let c = expand(&ComplexMatrix::diag(&[0.3, 0.7]), &hb).unwrap();
        assert_eq!(c, vec![0.3, 0.0, 0.0, 0.7]);
    }

    #[test]
    fn expand_matches_trace_formula() {
        let hb = hermitian_basis(3).unwrap();
        let h = ComplexMatrix::from_rows(&[
            &[C64::new(0.2, 0.0), C64::new(0.1, 0.4), C64::new(-0.3, 0.2)],
            &[C64::new(0.1, -0.4), C64::new(-1.0, 0.0), C64::new(0.5, 0.5)],
            &[
                C64::new(-0.3, -0.2),
                C64::new(0.5, -0.5),
                C64::new(0.9, 0.0),
            ],
        ])
        .unwrap();
        let c = expand(&h, &hb).unwrap();
        for (i, e) in hb.elements().iter().enumerate() {
            let by_trace = (e * &h).trace().re / hb.gram_norms()[i];
            assert!((c[i] - by_trace).abs() < 1e-14);
        }
    }

    #[test]
    fn expand_rejects_non_hermitian() {
        let hb = hermitian_basis(2).unwrap();
        let m = ComplexMatrix::outer_basis(2, 0, 1);
        assert!(matches!(expand(&m, &hb), Err(Error::ContractViolation(_))));
    }

    #[test]
    fn reconstruct_length_mismatch() {
        let hb = hermitian_basis(2).unwrap();
        assert!(matches!(
            reconstruct(&[1.0, 2.0], &hb),
            Err(Error::InvalidArgument(_))
        ));
        assert_eq!(
            reconstruct(&[0.0; 4], &hb).unwrap(),
            ComplexMatrix::zeros(2)
        );
        for k in 0..4 {
            let mut e = vec![0.0; 4];
            e[k] = 1.0;
            assert_eq!(reconstruct(&e, &hb).unwrap(), hb.elements()[k]);
        }
    }
}
