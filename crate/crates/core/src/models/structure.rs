//! Structure-preserving source: a Gell-Mann Hamiltonian correction plus a
//! Lindblad-form dissipator built from the upper-triangular Gell-Mann parts.

use serde::{Deserialize, Serialize};

use crate::dynamics::{jump_dissipator, DeviceModel};
use crate::error::{Error, Result};
use crate::qcore::{gell_mann_basis, ComplexMatrix, GellMannBasis, C64};

/// How the trainable dissipative parameters map to rates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GammaMode {
    /// γ_j = θ_j², always a valid Lindblad generator.
    #[default]
    Squared,
    /// γ_j = θ_j; may leave the CPTP class.
    Signed,
}

#[derive(Clone, Debug)]
pub struct StructurePreservingSource {
    alpha: Vec<f64>,
    gamma_raw: Vec<f64>,
    gamma_mode: GammaMode,
    basis: GellMannBasis,
}

impl StructurePreservingSource {
    /// Source with all parameters zero.
    pub fn zeros(dim: usize, gamma_mode: GammaMode) -> Result<Self> {
        let basis = gell_mann_basis(dim)?;
        let k = basis.len();
        Ok(Self {
            alpha: vec![0.0; k],
            gamma_raw: vec![0.0; k],
            gamma_mode,
            basis,
        })
    }

    /// From Hamiltonian coefficients α (rad/μs) and raw dissipative parameters.
    pub fn from_raw(
        dim: usize,
        alpha: Vec<f64>,
        gamma_raw: Vec<f64>,
        gamma_mode: GammaMode,
    ) -> Result<Self> {
        let basis = gell_mann_basis(dim)?;
        let k = basis.len();
        if alpha.len() != k || gamma_raw.len() != k {
            return Err(Error::InvalidArgument(format!(
                "structure-preserving source for N = {dim} needs {k} alphas and {k} gammas"
            )));
        }
        if gamma_mode == GammaMode::Signed && gamma_raw.iter().any(|g| *g < 0.0) {
            log::warn!("negative dissipative rate: the generator is no longer CPTP");
        }
        Ok(Self {
            alpha,
            gamma_raw,
            gamma_mode,
            basis,
        })
    }

    /// From physical rates γ_j (1/μs).
    pub fn from_rates(
        dim: usize,
        alpha: Vec<f64>,
        gamma: Vec<f64>,
        gamma_mode: GammaMode,
    ) -> Result<Self> {
        let raw = match gamma_mode {
            GammaMode::Signed => gamma,
            GammaMode::Squared => {
                if let Some(g) = gamma.iter().find(|g| **g < 0.0) {
                    return Err(Error::UnphysicalRate(format!(
                        "rate {g} cannot be represented with non-negative rates"
                    )));
                }
                gamma.iter().map(|g| g.sqrt()).collect()
            }
        };
        Self::from_raw(dim, alpha, raw, gamma_mode)
    }

    /// Qubit source from a Hamiltonian readout in kHz (ordinary frequency)
    /// and decoherence times γ_j⁻¹ in μs.
    pub fn qubit_from_readout(alpha_khz: [f64; 3], gamma_inv_us: [f64; 3]) -> Result<Self> {
        let alpha = alpha_khz.iter().map(|a| khz_to_rad_per_us(*a)).collect();
        let gamma = gamma_inv_us
            .iter()
            .map(|t| if t.is_infinite() { 0.0 } else { 1.0 / t })
            .collect();
        Self::from_rates(2, alpha, gamma, GammaMode::Squared)
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn basis(&self) -> &GellMannBasis {
        &self.basis
    }

    /// Hamiltonian coefficients, rad/μs.
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn gamma_raw(&self) -> &[f64] {
        &self.gamma_raw
    }

    pub fn gamma_mode(&self) -> GammaMode {
        self.gamma_mode
    }

    /// Dissipative rates γ_j, 1/μs.
    pub fn gamma(&self) -> Vec<f64> {
        match self.gamma_mode {
            GammaMode::Squared => self.gamma_raw.iter().map(|r| r * r).collect(),
            GammaMode::Signed => self.gamma_raw.clone(),
        }
    }

    pub fn param_len(&self) -> usize {
        2 * self.alpha.len()
    }

    pub fn pack(&self) -> Vec<f64> {
        self.alpha.iter().chain(&self.gamma_raw).copied().collect()
    }
}

pub fn khz_to_rad_per_us(khz: f64) -> f64 {
    crate::dynamics::TWO_PI * khz * 1e-3
}

pub fn rad_per_us_to_khz(w: f64) -> f64 {
    w / (crate::dynamics::TWO_PI * 1e-3)
}

/// `S_H = Σ_j α_j (Λ_j - ⟨0|Λ_j|0⟩ I)`
pub fn sp_hermitian(src: &StructurePreservingSource) -> ComplexMatrix {
    let n = src.dim();
    let mut out = ComplexMatrix::zeros(n);
    let id = ComplexMatrix::identity(n);
    for (a, l) in src.alpha.iter().zip(src.basis.elements()) {
        if *a == 0.0 {
            continue;
        }
        out.axpy(C64::new(*a, 0.0), l);
        out.axpy(C64::new(-*a * l[(0, 0)].re, 0.0), &id);
    }
    out
}

/// Contribution of one jump operator, `S_L(ρ; Λ̌)`.
pub fn sp_channel(upper: &ComplexMatrix, rho: &ComplexMatrix) -> ComplexMatrix {
    jump_dissipator(upper, rho)
}

/// `Σ_j γ_j (Λ̌_j ρ Λ̌_j† - ½{Λ̌_j†Λ̌_j, ρ})`
pub fn sp_dissipator(src: &StructurePreservingSource, rho: &ComplexMatrix) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(rho.dim());
    for (g, l) in src.gamma().iter().zip(src.basis.uppers()) {
        if *g == 0.0 {
            continue;
        }
        out.axpy(C64::new(*g, 0.0), &sp_channel(l, rho));
    }
    out
}

/// Decoherence times implied by a base device plus a learned qubit source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveTimes {
    pub t1_eff_us: f64,
    pub t2_eff_us: f64,
    /// γ⁻¹ for the decay (Λ̌1) and dephasing (Λ̌3) channels, μs.
    pub per_channel_us: Vec<f64>,
}

/// `T1 = (τ1 + γ1 + γ2)⁻¹`, `T2 = (τ2 + 4γ3)⁻¹`.
///
/// The base rates are those of the device's base model, so an LvN base
/// contributes nothing.
pub fn effective_times(
    dev: &DeviceModel,
    src: &StructurePreservingSource,
) -> Result<EffectiveTimes> {
    if src.dim() != 2 {
        return Err(Error::InvalidArgument(format!(
            "effective times are defined for a single qubit, got N = {}",
            src.dim()
        )));
    }
    let (tau1, tau2) = dev.rates();
    effective_times_from_rates(tau1, tau2, &src.gamma())
}

pub fn effective_times_from_rates(tau1: f64, tau2: f64, gamma: &[f64]) -> Result<EffectiveTimes> {
    if gamma.len() != 3 {
        return Err(Error::InvalidArgument(format!(
            "expected three qubit rates, got {}",
            gamma.len()
        )));
    }
    let rate1 = tau1 + gamma[0] + gamma[1];
    let rate2 = tau2 + 4.0 * gamma[2];
    if !(rate1 > 0.0) || !(rate2 > 0.0) {
        return Err(Error::UnphysicalRate(format!(
            "effective decay rate {rate1} or dephasing rate {rate2} is not positive"
        )));
    }
    Ok(EffectiveTimes {
        t1_eff_us: 1.0 / rate1,
        t2_eff_us: 1.0 / rate2,
        per_channel_us: vec![1.0 / gamma[0], 1.0 / gamma[2]],
    })
}
