//! Baseline and augmented master equations and their fixed-step RK4
//! integration.
//!
//! Units: time in μs, frequencies entered as ordinary frequencies
//! (GHz for the qubit, MHz for drive amplitudes) and converted to rad/μs
//! with a factor 2π.

mod field;
mod rk4;

pub use field::{Superop, UdeField, VectorField};
pub use rk4::{rk4_loss_and_gradient, rk4_samples, RecordTarget, StepGrid};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{net_forward, sp_dissipator, sp_hermitian, SourceModel};
use crate::qcore::{lowering, number, reconstruct_unchecked, ComplexMatrix, DensityMatrix, C64, I};

pub const TWO_PI: f64 = std::f64::consts::TAU;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseKind {
    /// Closed-system Liouville–von Neumann equation.
    Lvn,
    /// Lindblad equation with T1 decay and T2 dephasing channels.
    Lindblad,
}

impl BaseKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BaseKind::Lvn => "lvn",
            BaseKind::Lindblad => "lindblad",
        }
    }
}

impl std::str::FromStr for BaseKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lvn" => Ok(BaseKind::Lvn),
            "lindblad" => Ok(BaseKind::Lindblad),
            other => Err(Error::InvalidArgument(format!(
                "unknown base model '{other}' (expected lvn or lindblad)"
            ))),
        }
    }
}

/// Baseline device physics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceModel {
    /// Qubit transition frequency, GHz.
    pub omega01_ghz: f64,
    /// Rotating-frame frequency, GHz.
    pub omega_rot_ghz: f64,
    /// Energy decay time, μs.
    pub t1_us: f64,
    /// Dephasing time, μs.
    pub t2_us: f64,
    pub base_kind: BaseKind,
    pub dim: usize,
}

impl DeviceModel {
    pub fn new(
        omega01_ghz: f64,
        omega_rot_ghz: f64,
        t1_us: f64,
        t2_us: f64,
        base_kind: BaseKind,
    ) -> Result<Self> {
        let dev = Self {
            omega01_ghz,
            omega_rot_ghz,
            t1_us,
            t2_us,
            base_kind,
            dim: 2,
        };
        dev.validate()?;
        Ok(dev)
    }

    /// Resonant single-qubit device (rotating frame at ω01).
    pub fn resonant(omega01_ghz: f64, t1_us: f64, t2_us: f64, base_kind: BaseKind) -> Result<Self> {
        Self::new(omega01_ghz, omega01_ghz, t1_us, t2_us, base_kind)
    }

    /// The long-coherence tantalum transmon.
    pub fn dev1(base_kind: BaseKind) -> Self {
        Self::resonant(3.448, 214.0, 32.0, base_kind).expect("valid preset")
    }

    /// The noisier 3D transmon.
    pub fn dev2(base_kind: BaseKind) -> Self {
        Self::resonant(4.086, 62.0, 6.0, base_kind).expect("valid preset")
    }

    pub fn with_base(&self, base_kind: BaseKind) -> Self {
        Self {
            base_kind,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::InvalidDimension(self.dim));
        }
        if !self.omega01_ghz.is_finite() || !self.omega_rot_ghz.is_finite() {
            return Err(Error::InvalidConfiguration(
                "frequencies must be finite".into(),
            ));
        }
        if self.base_kind == BaseKind::Lindblad && !(self.t1_us > 0.0 && self.t2_us > 0.0) {
            return Err(Error::InvalidConfiguration(format!(
                "Lindblad base needs T1 > 0 and T2 > 0 (got {} and {})",
                self.t1_us, self.t2_us
            )));
        }
        Ok(())
    }

    /// Decay rates (τ1, τ2) in 1/μs; zero for the LvN base.
    pub fn rates(&self) -> (f64, f64) {
        match self.base_kind {
            BaseKind::Lvn => (0.0, 0.0),
            BaseKind::Lindblad => (1.0 / self.t1_us, 1.0 / self.t2_us),
        }
    }

    /// Drift detuning ω - ω_rot in rad/μs.
    pub fn detuning_rad_per_us(&self) -> f64 {
        TWO_PI * (self.omega01_ghz - self.omega_rot_ghz) * 1e3
    }
}

/// One control setting: a constant square pulse in the rotating frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    pub id: String,
    /// In-phase amplitude p, MHz.
    pub amplitude_p_mhz: f64,
    /// Quadrature amplitude q, MHz.
    pub amplitude_q_mhz: f64,
    /// Total time T, μs.
    pub duration_us: f64,
    /// Output sampling interval, ns.
    pub sample_dt_ns: f64,
    pub initial_state: DensityMatrix,
}

impl Experiment {
    /// In-phase square pulse from the ground state.
    pub fn square_pulse(
        id: impl Into<String>,
        amplitude_p_mhz: f64,
        duration_us: f64,
        sample_dt_ns: f64,
    ) -> Result<Self> {
        let exp = Self {
            id: id.into(),
            amplitude_p_mhz,
            amplitude_q_mhz: 0.0,
            duration_us,
            sample_dt_ns,
            initial_state: DensityMatrix::ground(2),
        };
        exp.validate()?;
        Ok(exp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration_us > 0.0) || !(self.sample_dt_ns > 0.0) {
            return Err(Error::InvalidConfiguration(format!(
                "experiment '{}': duration and sample interval must be positive",
                self.id
            )));
        }
        if !self.amplitude_p_mhz.is_finite() || !self.amplitude_q_mhz.is_finite() {
            return Err(Error::InvalidConfiguration(format!(
                "experiment '{}': amplitudes must be finite",
                self.id
            )));
        }
        self.n_samples().map(|_| ())
    }

    /// Number of output instants, `duration / sample_dt`.
    pub fn n_samples(&self) -> Result<usize> {
        let ratio = self.duration_us * 1e3 / self.sample_dt_ns;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidConfiguration(format!(
                "experiment '{}': duration {} us is not a whole number of {} ns samples",
                self.id, self.duration_us, self.sample_dt_ns
            )));
        }
        Ok(n as usize)
    }

    /// Time of output sample `j` (1-based) in μs.
    pub fn sample_time(&self, j: usize) -> f64 {
        j as f64 * self.sample_dt_ns / 1e3
    }
}

/// States of a model on the output grid.
///
/// Model predictions are Hermitian but, for network sources, not
/// necessarily of unit trace, so the raw matrices are stored.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<ComplexMatrix>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// `H = 2π(ω-ω_rot) a†a + 2πp (a + a†) + 2πq i(a - a†)` in rad/μs.
pub fn hamiltonian(dev: &DeviceModel, exp: &Experiment) -> ComplexMatrix {
    let n = dev.dim;
    let a = lowering(n);
    let ad = a.adjoint();
    let mut h = number(n).scale_re(dev.detuning_rad_per_us());
    h.axpy(C64::new(TWO_PI * exp.amplitude_p_mhz, 0.0), &(&a + &ad));
    h.axpy(C64::new(0.0, TWO_PI * exp.amplitude_q_mhz), &(&a - &ad));
    h
}

/// `D[L](ρ) = LρL† - ½{L†L, ρ}`
pub fn jump_dissipator(l: &ComplexMatrix, rho: &ComplexMatrix) -> ComplexMatrix {
    let ld = l.adjoint();
    let ldl = &ld * l;
    let jump = &(l * rho) * &ld;
    &jump - &ldl.anticommutator(rho).scale_re(0.5)
}

/// `τ1 D[a](ρ) + τ2 D[a†a](ρ)`; zero for the LvN base.
pub fn lindblad_dissipator(dev: &DeviceModel, rho: &ComplexMatrix) -> ComplexMatrix {
    let n = rho.dim();
    if dev.base_kind == BaseKind::Lvn {
        return ComplexMatrix::zeros(n);
    }
    let (tau1, tau2) = dev.rates();
    let mut out = jump_dissipator(&lowering(n), rho).scale_re(tau1);
    out.axpy(C64::new(tau2, 0.0), &jump_dissipator(&number(n), rho));
    out
}

/// Right-hand side of the (augmented) master equation at ρ.
///
/// Structure-preserving sources enter as `-i[H + S_H, ρ] + L(ρ) + S_L(ρ)`,
/// network sources as `-i[H, ρ] + L(ρ) + N(ρ)`. Pulses are constant, so
/// `t` does not enter.
pub fn rhs(
    dev: &DeviceModel,
    exp: &Experiment,
    source: Option<&SourceModel>,
    rho: &ComplexMatrix,
    _t: f64,
) -> Result<ComplexMatrix> {
    if rho.dim() != dev.dim {
        return Err(Error::InvalidArgument(format!(
            "state dimension {} does not match device dimension {}",
            rho.dim(),
            dev.dim
        )));
    }
    let mut h = hamiltonian(dev, exp);
    let mut extra = None;
    match source {
        None => {}
        Some(SourceModel::StructurePreserving(sp)) => {
            h += &sp_hermitian(sp);
            extra = Some(sp_dissipator(sp, rho));
        }
        Some(SourceModel::Network(net)) => {
            extra = Some(net_forward(net, rho)?);
        }
    }
    let mut out = h.commutator(rho).scale(-I);
    out += &lindblad_dissipator(dev, rho);
    if let Some(e) = extra {
        out += &e;
    }
    Ok(out)
}

/// Number of internal steps per output sample; `dt_internal` must divide
/// the sampling interval.
pub fn steps_per_sample(sample_dt_ns: f64, dt_internal_ns: f64) -> Result<usize> {
    if !(dt_internal_ns > 0.0) || !dt_internal_ns.is_finite() {
        return Err(Error::InvalidConfiguration(format!(
            "internal step must be positive (got {dt_internal_ns} ns)"
        )));
    }
    let ratio = sample_dt_ns / dt_internal_ns;
    let k = ratio.round();
    if k < 1.0 || (ratio - k).abs() > 1e-9 * ratio {
        return Err(Error::InvalidConfiguration(format!(
            "internal step {dt_internal_ns} ns does not divide sample interval {sample_dt_ns} ns"
        )));
    }
    Ok(k as usize)
}

/// Integrates the model from `t = 0` with classic RK4 and records the state
/// at every output sample.
pub fn integrate_rk4(
    dev: &DeviceModel,
    exp: &Experiment,
    source: Option<&SourceModel>,
    dt_internal_ns: f64,
) -> Result<Trajectory> {
    let n_samples = exp.n_samples()?;
    integrate_rk4_samples(dev, exp, source, dt_internal_ns, n_samples)
}

/// Like [`integrate_rk4`] but stops after the first `n_samples` outputs.
pub fn integrate_rk4_samples(
    dev: &DeviceModel,
    exp: &Experiment,
    source: Option<&SourceModel>,
    dt_internal_ns: f64,
    n_samples: usize,
) -> Result<Trajectory> {
    exp.validate()?;
    let field = UdeField::new(dev, exp, source)?;
    let grid = StepGrid::new(exp.sample_dt_ns, dt_internal_ns, n_samples)?;
    let y0 = crate::qcore::expand_unchecked(exp.initial_state.matrix(), dev.dim);
    let coords = rk4_samples(&field, &y0, &grid)?;
    let states = coords
        .iter()
        .map(|c| reconstruct_unchecked(c, dev.dim))
        .collect();
    Ok(Trajectory {
        times: (1..=n_samples).map(|j| exp.sample_time(j)).collect(),
        states,
    })
}
