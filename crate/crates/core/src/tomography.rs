//! Qubit tomography: the forward measurement model, binomial shot sampling
//! and linear inversion with spectral filtering.
//!
//! The population vector is `p = M vec(ρ)` with `vec` row-major and
//! `p = (1, 2P(x)-1, 2P(y)-1, 2P(z)-1)`.

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{number, spectral_filter, ComplexMatrix, DensityMatrix, C64, I, ONE, ZERO};

const PROB_TOL: f64 = 1e-10;

/// Per-axis probabilities of the counted outcome.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementProbs {
    pub px: f64,
    pub py: f64,
    pub pz: f64,
}

impl MeasurementProbs {
    pub fn new(px: f64, py: f64, pz: f64) -> Self {
        Self { px, py, pz }
    }

    pub fn from_counts(counts: [u64; 3], shots: [u64; 3]) -> Result<Self> {
        for a in 0..3 {
            if shots[a] == 0 {
                return Err(Error::InvalidArgument("shot count must be positive".into()));
            }
            if counts[a] > shots[a] {
                return Err(Error::InvalidArgument(format!(
                    "{} successes out of {} shots",
                    counts[a], shots[a]
                )));
            }
        }
        Ok(Self {
            px: counts[0] as f64 / shots[0] as f64,
            py: counts[1] as f64 / shots[1] as f64,
            pz: counts[2] as f64 / shots[2] as f64,
        })
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.px, self.py, self.pz]
    }

    /// `p = (1, 2P(x)-1, 2P(y)-1, 2P(z)-1)`
    pub fn population_vector(&self) -> [f64; 4] {
        [
            1.0,
            2.0 * self.px - 1.0,
            2.0 * self.py - 1.0,
            2.0 * self.pz - 1.0,
        ]
    }
}

/// The fixed qubit measurement matrix and its inverse.
#[derive(Clone, Debug)]
pub struct InversionMatrix {
    m: [[C64; 4]; 4],
    m_inv: [[C64; 4]; 4],
}

impl InversionMatrix {
    pub fn new() -> Self {
        let r = |x: f64| C64::new(x, 0.0);
        let m = [
            [ONE, ZERO, ZERO, ONE],
            [ZERO, -ONE, -ONE, ZERO],
            [ZERO, I, -I, ZERO],
            [-ONE, ZERO, ZERO, ONE],
        ];
        let m_inv = [
            [r(0.5), ZERO, ZERO, r(-0.5)],
            [ZERO, r(-0.5), C64::new(0.0, -0.5), ZERO],
            [ZERO, r(-0.5), C64::new(0.0, 0.5), ZERO],
            [r(0.5), ZERO, ZERO, r(0.5)],
        ];
        Self { m, m_inv }
    }

    pub fn m(&self) -> &[[C64; 4]; 4] {
        &self.m
    }

    pub fn m_inv(&self) -> &[[C64; 4]; 4] {
        &self.m_inv
    }

    fn apply(a: &[[C64; 4]; 4], v: &[C64; 4]) -> [C64; 4] {
        let mut out = [ZERO; 4];
        for (o, row) in out.iter_mut().zip(a) {
            *o = row.iter().zip(v).map(|(x, y)| x * y).sum();
        }
        out
    }

    pub fn forward(&self, vec_rho: &[C64; 4]) -> [C64; 4] {
        Self::apply(&self.m, vec_rho)
    }

    pub fn inverse(&self, p: &[C64; 4]) -> [C64; 4] {
        Self::apply(&self.m_inv, p)
    }
}

impl Default for InversionMatrix {
    fn default() -> Self {
        Self::new()
    }
}

fn require_qubit(dim: usize) -> Result<()> {
    if dim != 2 {
        return Err(Error::InvalidDimension(dim));
    }
    Ok(())
}

/// Measurement probabilities of a 2×2 Hermitian matrix, without range checks.
pub(crate) fn probs_of(rho: &ComplexMatrix) -> MeasurementProbs {
    let v = rho.vec();
    let p = InversionMatrix::new().forward(&[v[0], v[1], v[2], v[3]]);
    MeasurementProbs {
        px: 0.5 * (p[1].re + 1.0),
        py: 0.5 * (p[2].re + 1.0),
        pz: 0.5 * (p[3].re + 1.0),
    }
}

pub fn measurement_probs(rho: &DensityMatrix) -> Result<MeasurementProbs> {
    require_qubit(rho.dim())?;
    let probs = probs_of(rho.matrix());
    for p in probs.as_array() {
        if !(-PROB_TOL..=1.0 + PROB_TOL).contains(&p) {
            return Err(Error::InvalidState(format!(
                "measurement probability {p} outside [0, 1]"
            )));
        }
    }
    Ok(probs)
}

/// Binomial success counts per axis, drawn in the order x, y, z.
pub fn sample_shots<R: Rng + ?Sized>(
    probs: &MeasurementProbs,
    shots: [u64; 3],
    rng: &mut R,
) -> Result<[u64; 3]> {
    let mut counts = [0; 3];
    for (a, p) in probs.as_array().into_iter().enumerate() {
        if shots[a] == 0 {
            return Err(Error::InvalidArgument("shot count must be positive".into()));
        }
        let p = p.clamp(0.0, 1.0);
        let dist = Binomial::new(shots[a], p)
            .map_err(|e| Error::InvalidArgument(format!("binomial({}, {p}): {e}", shots[a])))?;
        counts[a] = dist.sample(rng);
    }
    Ok(counts)
}

/// Linear inversion estimate followed by Hermitization and the spectral filter.
pub fn lie_reconstruct(probs_hat: &MeasurementProbs) -> Result<DensityMatrix> {
    for p in probs_hat.as_array() {
        if !(-PROB_TOL..=1.0 + PROB_TOL).contains(&p) {
            return Err(Error::InvalidArgument(format!(
                "empirical probability {p} outside [0, 1]"
            )));
        }
    }
    let p = probs_hat.population_vector().map(|x| C64::new(x, 0.0));
    let v = InversionMatrix::new().inverse(&p);
    let raw = ComplexMatrix::from_vec(2, v.to_vec())?;
    spectral_filter(&raw.hermitize())
}

/// `Tr(ρ a†a)`, the excited population for a qubit.
pub fn expected_energy(rho: &DensityMatrix) -> f64 {
    (&number(rho.dim()) * rho.matrix()).trace().re
}

/// How a total shot budget maps onto the three measurement axes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShotMode {
    /// The full budget on every axis.
    #[default]
    PerAxis,
    /// `⌊budget/3⌋` on each axis.
    Split,
}

impl ShotMode {
    pub fn per_axis(&self, budget: u64) -> u64 {
        match self {
            ShotMode::PerAxis => budget,
            ShotMode::Split => budget / 3,
        }
    }
}

/// One tomographic snapshot of an experiment.
#[derive(Clone, Debug)]
pub struct TomographyRecord {
    pub time_us: f64,
    /// Shots per axis; zero marks an exact (noise-free) record.
    pub shots: u64,
    pub counts: Option<[u64; 3]>,
    pub probs_hat: MeasurementProbs,
    pub rho_hat: DensityMatrix,
}

impl TomographyRecord {
    pub fn from_counts(time_us: f64, shots: u64, counts: [u64; 3]) -> Result<Self> {
        let probs_hat = MeasurementProbs::from_counts(counts, [shots; 3])?;
        let rho_hat = lie_reconstruct(&probs_hat).map_err(|e| e.at_time(time_us))?;
        Ok(Self {
            time_us,
            shots,
            counts: Some(counts),
            probs_hat,
            rho_hat,
        })
    }

    /// Record with exact probabilities (infinite shots).
    pub fn exact(time_us: f64, probs: MeasurementProbs) -> Result<Self> {
        let rho_hat = lie_reconstruct(&probs).map_err(|e| e.at_time(time_us))?;
        Ok(Self {
            time_us,
            shots: 0,
            counts: None,
            probs_hat: probs,
            rho_hat,
        })
    }

    pub fn is_exact(&self) -> bool {
        self.counts.is_none()
    }
}
