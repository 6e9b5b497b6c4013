use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::objective::{GradMethod, Objective};
use super::optim::{lbfgs, norm, Adam, AdamConfig, LbfgsConfig};
use crate::dynamics::DeviceModel;
use crate::error::{Error, Result};
use crate::models::{AnsatzSpec, InitOptions};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    /// One source term shared by all experiments.
    #[default]
    #[serde(rename = "exp-gen")]
    ExperimentGeneralized,
    /// One source term per experiment; the dataset holds a single experiment.
    #[serde(rename = "exp-spec")]
    ExperimentSpecific,
}

impl TrainMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrainMode::ExperimentGeneralized => "exp-gen",
            TrainMode::ExperimentSpecific => "exp-spec",
        }
    }
}

impl std::str::FromStr for TrainMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp-gen" => Ok(TrainMode::ExperimentGeneralized),
            "exp-spec" => Ok(TrainMode::ExperimentSpecific),
            other => Err(Error::InvalidArgument(format!(
                "unknown training mode '{other}' (expected exp-gen or exp-spec)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mode: TrainMode,
    /// Experiment trained on in experiment-specific mode; may be omitted
    /// when the dataset holds one experiment.
    pub experiment: Option<String>,
    pub adam: AdamConfig,
    pub lbfgs: LbfgsConfig,
    pub grad_method: GradMethod,
    pub dt_internal_ns: f64,
    pub seed: u64,
    pub init: InitOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::ExperimentGeneralized,
            experiment: None,
            adam: AdamConfig::default(),
            lbfgs: LbfgsConfig::default(),
            grad_method: GradMethod::DiscreteAdjoint,
            dt_internal_ns: 4.0,
            seed: 0,
            init: InitOptions::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, n_experiments: usize) -> Result<()> {
        self.adam.validate()?;
        self.lbfgs.validate()?;
        if self.mode == TrainMode::ExperimentGeneralized && self.adam.batch_size > n_experiments {
            return Err(Error::InvalidConfiguration(format!(
                "batch size {} exceeds the {n_experiments} experiments in the dataset",
                self.adam.batch_size
            )));
        }
        if !(self.dt_internal_ns > 0.0) {
            return Err(Error::InvalidConfiguration(
                "internal step must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Adam,
    Lbfgs,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Adam => "adam",
            Phase::Lbfgs => "lbfgs",
        }
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub iteration: usize,
    pub phase: Phase,
    /// Full-batch training loss.
    pub loss: f64,
    pub grad_norm: f64,
    pub elapsed_s: f64,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub spec: AnsatzSpec,
    pub mode: TrainMode,
    /// Ids of the experiments trained on.
    pub experiments: Vec<String>,
    pub theta_star: Vec<f64>,
    pub log: Vec<LogEntry>,
    /// Full-batch loss at the end of ADAM (the starting point of L-BFGS).
    pub adam_final_loss: f64,
    pub final_loss: f64,
    pub stalled: bool,
    pub wall_time_s: f64,
}

impl FitResult {
    pub fn loss_history(&self) -> Vec<f64> {
        self.log.iter().map(|e| e.loss).collect()
    }

    pub fn grad_norm_history(&self) -> Vec<f64> {
        self.log.iter().map(|e| e.grad_norm).collect()
    }
}

fn select(data: &Dataset, cfg: &TrainConfig) -> Result<Option<Dataset>> {
    match cfg.mode {
        TrainMode::ExperimentGeneralized => Ok(None),
        TrainMode::ExperimentSpecific => {
            let idx = match &cfg.experiment {
                Some(id) => data.find(id).ok_or_else(|| {
                    Error::InvalidConfiguration(format!("experiment '{id}' not in dataset"))
                })?,
                None if data.len() == 1 => 0,
                None => {
                    return Err(Error::InvalidConfiguration(
                        "experiment-specific training needs an experiment id when the dataset holds several".into(),
                    ))
                }
            };
            Ok(Some(data.subset(&[idx])?))
        }
    }
}

/// ADAM over mini-batches of experiments, then full-batch L-BFGS from ADAM's iterate.
pub fn fit(
    data: &Dataset,
    dev: &DeviceModel,
    spec: &AnsatzSpec,
    cfg: &TrainConfig,
) -> Result<FitResult> {
    let theta0 = spec.initial_params(&cfg.init)?;
    fit_from(data, dev, spec, cfg, theta0)
}

pub fn fit_from(
    data: &Dataset,
    dev: &DeviceModel,
    spec: &AnsatzSpec,
    cfg: &TrainConfig,
    theta0: Vec<f64>,
) -> Result<FitResult> {
    let start = Instant::now();
    let selected = select(data, cfg)?;
    let data = selected.as_ref().unwrap_or(data);
    cfg.validate(data.len())?;
    let obj = Objective::new(dev, spec.clone(), data, cfg.dt_internal_ns, cfg.grad_method)?;
    let mut theta = theta0;
    if theta.len() != obj.param_len() {
        return Err(Error::InvalidArgument(format!(
            "initial point has {} parameters, ansatz needs {}",
            theta.len(),
            obj.param_len()
        )));
    }
    let batch_size = match cfg.mode {
        TrainMode::ExperimentGeneralized => cfg.adam.batch_size,
        TrainMode::ExperimentSpecific => obj.n_experiments(),
    };
    let mut log = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg.adam.clone(), theta.len());
    let mut order = obj.all();
    let mut iteration = 0;

    let (l0, g0) = obj.loss_and_gradient(&theta)?;
    log.push(LogEntry {
        iteration,
        phase: Phase::Adam,
        loss: l0,
        grad_norm: norm(&g0),
        elapsed_s: start.elapsed().as_secs_f64(),
    });
    let mut adam_final_loss = l0;
    let mut full = (l0, g0);
    for _ in 0..cfg.adam.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(batch_size) {
            let (_, g) = obj.loss_and_gradient_on(&theta, batch)?;
            adam.step(&mut theta, &g);
        }
        iteration += 1;
        full = obj.loss_and_gradient(&theta)?;
        adam_final_loss = full.0;
        log.push(LogEntry {
            iteration,
            phase: Phase::Adam,
            loss: full.0,
            grad_norm: norm(&full.1),
            elapsed_s: start.elapsed().as_secs_f64(),
        });
    }

    let first = Some(full);
    let mut cached = first;
    let outcome = lbfgs(
        |x| match cached.take() {
            Some(v) => Ok(v),
            None => obj.loss_and_gradient(x),
        },
        theta,
        &cfg.lbfgs,
    )?;
    for s in &outcome.steps {
        iteration += 1;
        log.push(LogEntry {
            iteration,
            phase: Phase::Lbfgs,
            loss: s.loss,
            grad_norm: s.grad_norm,
            elapsed_s: start.elapsed().as_secs_f64(),
        });
    }
    if outcome.stalled {
        log::info!("L-BFGS line search stalled at loss {:.6e}", outcome.loss);
    }
    Ok(FitResult {
        spec: spec.clone(),
        mode: cfg.mode,
        experiments: data
            .experiments
            .iter()
            .map(|e| e.experiment.id.clone())
            .collect(),
        theta_star: outcome.theta,
        log,
        adam_final_loss,
        final_loss: outcome.loss,
        stalled: outcome.stalled,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
