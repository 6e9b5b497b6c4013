//! Synthetic ground-truth device: simulates a planted model and samples
//! tomography records from it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::{integrate_rk4, DeviceModel, Experiment};
use crate::error::{Error, Result};
use crate::models::SourceModel;
use crate::tomography::{probs_of, sample_shots, MeasurementProbs, ShotMode, TomographyRecord};
use crate::train::{Dataset, ExperimentData};

const PROB_SLACK: f64 = 1e-8;

/// Amplitudes `p ~ U(0, p_max]`, drawn from stream 0 of the seed.
pub fn sample_amplitudes(n: usize, p_max_mhz: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    (0..n)
        .map(|_| p_max_mhz * (1.0 - rng.random::<f64>()))
        .collect()
}

pub fn experiment_id(i: usize) -> String {
    format!("exp-{i:03}")
}

#[derive(Clone, Debug)]
pub struct TwinGenerator {
    pub device: DeviceModel,
    /// Planted source term; `None` generates from the base model alone.
    pub latent: Option<SourceModel>,
    pub amplitudes_mhz: Vec<f64>,
    pub duration_us: f64,
    pub sample_dt_ns: f64,
    /// Shot budget per time step; zero records exact probabilities.
    pub shots: u64,
    pub shot_mode: ShotMode,
    pub seed: u64,
    pub dt_internal_ns: f64,
}

impl TwinGenerator {
    /// Dev-style defaults: 50 μs at 4 ns sampling, 5000 shots per axis.
    pub fn new(device: DeviceModel, latent: Option<SourceModel>, amplitudes_mhz: Vec<f64>) -> Self {
        Self {
            device,
            latent,
            amplitudes_mhz,
            duration_us: 50.0,
            sample_dt_ns: 4.0,
            shots: 5000,
            shot_mode: ShotMode::PerAxis,
            seed: 0,
            dt_internal_ns: 4.0,
        }
    }

    pub fn experiments(&self) -> Result<Vec<Experiment>> {
        self.amplitudes_mhz
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let mut e = Experiment::square_pulse(
                    experiment_id(i),
                    p,
                    self.duration_us,
                    self.sample_dt_ns,
                )?;
                e.initial_state = crate::qcore::DensityMatrix::ground(self.device.dim);
                Ok(e)
            })
            .collect()
    }

    fn records(&self, index: usize, exp: &Experiment) -> Result<Vec<TomographyRecord>> {
        let traj = integrate_rk4(&self.device, exp, self.latent.as_ref(), self.dt_internal_ns)?;
        let shots = self.shot_mode.per_axis(self.shots);
        if self.shots > 0 && shots == 0 {
            return Err(Error::InvalidConfiguration(format!(
                "shot budget {} leaves no shots per axis",
                self.shots
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64 + 1);
        let mut out = Vec::with_capacity(traj.len());
        for (t, rho) in traj.times.iter().zip(&traj.states) {
            let p = probs_of(rho);
            let arr = p.as_array();
            if arr
                .iter()
                .any(|v| !(-PROB_SLACK..=1.0 + PROB_SLACK).contains(v))
            {
                return Err(Error::InvalidState(format!(
                    "planted model left the state space at t = {t} us in experiment '{}'",
                    exp.id
                )));
            }
            let p = MeasurementProbs::new(
                arr[0].clamp(0.0, 1.0),
                arr[1].clamp(0.0, 1.0),
                arr[2].clamp(0.0, 1.0),
            );
            out.push(if self.shots == 0 {
                TomographyRecord::exact(*t, p)?
            } else {
                let counts = sample_shots(&p, [shots; 3], &mut rng)?;
                TomographyRecord::from_counts(*t, shots, counts)?
            });
        }
        Ok(out)
    }

    /// Simulates every experiment (in parallel, one RNG stream each).
    pub fn generate(&self, train_horizon_us: f64) -> Result<Dataset> {
        if self.device.dim != 2 {
            return Err(Error::InvalidDimension(self.device.dim));
        }
        let exps = self.experiments()?;
        let data: Vec<Result<ExperimentData>> = exps
            .into_par_iter()
            .enumerate()
            .map(|(i, e)| {
                let records = self.records(i, &e)?;
                ExperimentData::new(e, records)
            })
            .collect();
        Dataset::new(data.into_iter().collect::<Result<_>>()?, train_horizon_us)
    }
}
