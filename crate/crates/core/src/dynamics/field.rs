//! Right-hand sides in Hermitian-basis coordinates.
//!
//! Every model in this crate maps Hermitian matrices to Hermitian
//! matrices, so the state can be carried as the N² real coefficients of ρ
//! in the basis Ĥ. Linear pieces (commutators, dissipators) become real
//! N²×N² matrices built column-by-column from the matrix-level operators,
//! which keeps the coordinate route tied to the matrix definitions.

use crate::dynamics::{hamiltonian, jump_dissipator, lindblad_dissipator, DeviceModel, Experiment};
use crate::error::{Error, Result};
use crate::models::{GammaMode, NetworkSource, SourceModel};
use crate::qcore::{expand_unchecked, hermitian_basis, ComplexMatrix, I};

/// Autonomous vector field `y' = f(y; θ)` with reverse-mode derivatives.
pub trait VectorField: Sync {
    fn state_dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn eval(&self, y: &[f64], out: &mut [f64]);
    /// Accumulates `J_yᵀ v` into `y_bar` and `J_θᵀ v` into `theta_bar`.
    fn vjp(&self, y: &[f64], v: &[f64], y_bar: &mut [f64], theta_bar: &mut [f64]);
}

/// Real linear map on coordinates, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Superop {
    n: usize,
    a: Vec<f64>,
}

impl Superop {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            a: vec![0.0; n * n],
        }
    }

    /// Coordinate matrix of a Hermiticity-preserving linear map on N×N matrices.
    pub fn from_map(dim: usize, map: impl Fn(&ComplexMatrix) -> ComplexMatrix) -> Self {
        let basis = hermitian_basis(dim).expect("dim >= 2");
        let n = dim * dim;
        let mut a = vec![0.0; n * n];
        for (col, e) in basis.elements().iter().enumerate() {
            let image = expand_unchecked(&map(e), dim);
            for (row, v) in image.into_iter().enumerate() {
                a[row * n + col] = v;
            }
        }
        Self { n, a }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[f64] {
        &self.a
    }

    /// `out = A y`
    #[inline]
    pub fn apply(&self, y: &[f64], out: &mut [f64]) {
        let n = self.n;
        for (r, o) in out.iter_mut().enumerate().take(n) {
            let row = &self.a[r * n..(r + 1) * n];
            *o = row.iter().zip(y).map(|(a, b)| a * b).sum();
        }
    }

    /// `out += Aᵀ v`
    #[inline]
    pub fn apply_transpose_add(&self, v: &[f64], out: &mut [f64]) {
        let n = self.n;
        for (r, &vr) in v.iter().enumerate().take(n) {
            if vr == 0.0 {
                continue;
            }
            let row = &self.a[r * n..(r + 1) * n];
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * vr;
            }
        }
    }

    /// `vᵀ A y`
    #[inline]
    pub fn bilinear(&self, v: &[f64], y: &[f64]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for r in 0..n {
            if v[r] == 0.0 {
                continue;
            }
            let row = &self.a[r * n..(r + 1) * n];
            s += v[r] * row.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();
        }
        s
    }

    pub fn add_scaled(&mut self, s: f64, other: &Superop) {
        for (a, b) in self.a.iter_mut().zip(&other.a) {
            *a += s * b;
        }
    }
}

enum FieldSource {
    None,
    StructurePreserving {
        /// ρ ↦ -i[Λ_j, ρ] per generator
        hamiltonian: Vec<Superop>,
        /// ρ ↦ S_L(ρ; Λ̌_j) per generator
        dissipative: Vec<Superop>,
        /// dγ_j/dθ_j
        gamma_slope: Vec<f64>,
    },
    Network(NetworkSource),
}

/// The augmented right-hand side of one experiment in coordinates.
pub struct UdeField {
    n: usize,
    /// Base generator plus, for the structure-preserving source, its
    /// current linear contribution.
    linear: Superop,
    source: FieldSource,
}

impl UdeField {
    pub fn new(dev: &DeviceModel, exp: &Experiment, source: Option<&SourceModel>) -> Result<Self> {
        let dim = dev.dim;
        if exp.initial_state.dim() != dim {
            return Err(Error::InvalidArgument(format!(
                "experiment '{}' has a {}-level initial state but the device has {dim} levels",
                exp.id,
                exp.initial_state.dim()
            )));
        }
        let h = hamiltonian(dev, exp);
        let mut linear = Superop::from_map(dim, |e| {
            let mut out = h.commutator(e).scale(-I);
            out += &lindblad_dissipator(dev, e);
            out
        });
        let source = match source {
            None => FieldSource::None,
            Some(SourceModel::StructurePreserving(sp)) => {
                if sp.dim() != dim {
                    return Err(dim_mismatch(sp.dim(), dim));
                }
                let basis = sp.basis();
                let hamiltonian: Vec<Superop> = basis
                    .elements()
                    .iter()
                    .map(|l| Superop::from_map(dim, |e| l.commutator(e).scale(-I)))
                    .collect();
                let dissipative: Vec<Superop> = basis
                    .uppers()
                    .iter()
                    .map(|l| Superop::from_map(dim, |e| jump_dissipator(l, e)))
                    .collect();
                let gamma = sp.gamma();
                for (j, op) in hamiltonian.iter().enumerate() {
                    linear.add_scaled(sp.alpha()[j], op);
                }
                for (j, op) in dissipative.iter().enumerate() {
                    linear.add_scaled(gamma[j], op);
                }
                let gamma_slope = match sp.gamma_mode() {
                    GammaMode::Squared => sp.gamma_raw().iter().map(|r| 2.0 * r).collect(),
                    GammaMode::Signed => vec![1.0; gamma.len()],
                };
                FieldSource::StructurePreserving {
                    hamiltonian,
                    dissipative,
                    gamma_slope,
                }
            }
            Some(SourceModel::Network(net)) => {
                if net.dim() != dim {
                    return Err(dim_mismatch(net.dim(), dim));
                }
                FieldSource::Network(net.clone())
            }
        };
        Ok(Self {
            n: dim * dim,
            linear,
            source,
        })
    }

    /// The linear part of the generator (base plus structure-preserving source).
    pub fn linear_part(&self) -> &Superop {
        &self.linear
    }
}

fn dim_mismatch(src: usize, dev: usize) -> Error {
    Error::InvalidArgument(format!(
        "source is built for {src} levels but the device has {dev}"
    ))
}

impl VectorField for UdeField {
    fn state_dim(&self) -> usize {
        self.n
    }

    fn param_dim(&self) -> usize {
        match &self.source {
            FieldSource::None => 0,
            FieldSource::StructurePreserving { hamiltonian, .. } => 2 * hamiltonian.len(),
            FieldSource::Network(net) => net.param_len(),
        }
    }

    fn eval(&self, y: &[f64], out: &mut [f64]) {
        self.linear.apply(y, out);
        if let FieldSource::Network(net) = &self.source {
            let s = net.forward_coeffs(y);
            for (o, v) in out.iter_mut().zip(s) {
                *o += v;
            }
        }
    }

    fn vjp(&self, y: &[f64], v: &[f64], y_bar: &mut [f64], theta_bar: &mut [f64]) {
        self.linear.apply_transpose_add(v, y_bar);
        match &self.source {
            FieldSource::None => {}
            FieldSource::StructurePreserving {
                hamiltonian,
                dissipative,
                gamma_slope,
            } => {
                let k = hamiltonian.len();
                for j in 0..k {
                    theta_bar[j] += hamiltonian[j].bilinear(v, y);
                    theta_bar[k + j] += gamma_slope[j] * dissipative[j].bilinear(v, y);
                }
            }
            FieldSource::Network(net) => net.vjp(y, v, y_bar, theta_bar),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{rhs, BaseKind};
    use crate::models::AnsatzSpec;
    use crate::qcore::{expand_unchecked, ComplexMatrix, C64};

    fn state() -> ComplexMatrix {
        ComplexMatrix::from_rows(&[
            &[C64::new(0.62, 0.0), C64::new(0.21, -0.33)],
            &[C64::new(0.21, 0.33), C64::new(0.38, 0.0)],
        ])
        .unwrap()
    }

    #[test]
    fn coordinate_field_matches_matrix_rhs() {
        let dev = DeviceModel::new(3.45, 3.449, 30.0, 12.0, BaseKind::Lindblad).unwrap();
        let mut exp = Experiment::square_pulse("e", 1.7, 1.0, 4.0).unwrap();
        exp.amplitude_q_mhz = -0.4;
        let rho = state();
        let y = expand_unchecked(&rho, 2);
        for spec in [
            AnsatzSpec::sp(2),
            AnsatzSpec::affine(2),
            AnsatzSpec::nonlinear(2),
        ] {
            let theta: Vec<f64> = (0..spec.param_len())
                .map(|i| 0.05 * ((i as f64) * 1.37).sin())
                .collect();
            let src = spec.unpack(&theta).unwrap();
            let field = UdeField::new(&dev, &exp, Some(&src)).unwrap();
            let mut out = vec![0.0; 4];
            field.eval(&y, &mut out);
            let m = rhs(&dev, &exp, Some(&src), &rho, 0.0).unwrap();
            let expect = expand_unchecked(&m, 2);
            for (a, b) in out.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-13, "{out:?} vs {expect:?}");
            }
        }
    }
}
