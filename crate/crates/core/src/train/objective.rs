use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Split};
use crate::dynamics::DeviceModel;
use crate::dynamics::{rk4_loss_and_gradient, rk4_samples, RecordTarget, StepGrid, UdeField};
use crate::error::{Error, Result};
use crate::models::AnsatzSpec;
use crate::qcore::{expand_unchecked, hermitian_basis};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradMethod {
    /// Reverse sweep through the RK4 recursion: the exact gradient of the discrete loss.
    #[default]
    DiscreteAdjoint,
    /// Central differences, one pair of loss evaluations per parameter.
    FiniteDifference,
}

/// Relative step of the central-difference gradient.
pub const FD_STEP: f64 = 1e-6;

struct Problem {
    exp_index: usize,
    y0: Vec<f64>,
    grid: StepGrid,
    targets: Vec<RecordTarget>,
}

/// Sum over records of `‖ρ̃(t_j) - ρ(t_j; θ)‖²_F` on the training split.
pub struct Objective<'a> {
    dev: &'a DeviceModel,
    spec: AnsatzSpec,
    data: &'a Dataset,
    problems: Vec<Problem>,
    weights: Vec<f64>,
    dt_internal_ns: f64,
    grad_method: GradMethod,
}

impl<'a> Objective<'a> {
    /// Objective over the records selected by `ranges` (one per experiment).
    pub fn with_ranges(
        dev: &'a DeviceModel,
        spec: AnsatzSpec,
        data: &'a Dataset,
        ranges: &[std::ops::Range<usize>],
        dt_internal_ns: f64,
        grad_method: GradMethod,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidArgument("dataset has no experiments".into()));
        }
        if spec.dim != dev.dim {
            return Err(Error::InvalidArgument(format!(
                "ansatz is built for {} levels but the device has {}",
                spec.dim, dev.dim
            )));
        }
        let basis = hermitian_basis(dev.dim)?;
        let mut problems = Vec::with_capacity(data.len());
        for (i, (e, range)) in data.experiments.iter().zip(ranges).enumerate() {
            if e.experiment.initial_state.dim() != dev.dim {
                return Err(Error::InvalidArgument(format!(
                    "experiment '{}' does not match the device dimension",
                    e.experiment.id
                )));
            }
            let mut targets = Vec::with_capacity(range.len());
            for r in &e.records[range.clone()] {
                if r.rho_hat.dim() != dev.dim {
                    return Err(Error::InvalidArgument(format!(
                        "record of experiment '{}' does not match the device dimension",
                        e.experiment.id
                    )));
                }
                targets.push(RecordTarget {
                    sample: e.sample_index(r.time_us)?,
                    coords: expand_unchecked(r.rho_hat.matrix(), dev.dim),
                });
            }
            let n_samples = targets.last().map_or(0, |t| t.sample);
            problems.push(Problem {
                exp_index: i,
                y0: expand_unchecked(e.experiment.initial_state.matrix(), dev.dim),
                grid: StepGrid::new(e.experiment.sample_dt_ns, dt_internal_ns, n_samples)?,
                targets,
            });
        }
        Ok(Self {
            dev,
            spec,
            data,
            problems,
            weights: basis.gram_norms().to_vec(),
            dt_internal_ns,
            grad_method,
        })
    }

    /// Objective on the training split of `data`.
    pub fn new(
        dev: &'a DeviceModel,
        spec: AnsatzSpec,
        data: &'a Dataset,
        dt_internal_ns: f64,
        grad_method: GradMethod,
    ) -> Result<Self> {
        let Split { train, .. } = data.default_split();
        Self::with_ranges(dev, spec, data, &train, dt_internal_ns, grad_method)
    }

    pub fn spec(&self) -> &AnsatzSpec {
        &self.spec
    }

    pub fn n_experiments(&self) -> usize {
        self.problems.len()
    }

    pub fn param_len(&self) -> usize {
        self.spec.param_len()
    }

    pub fn dt_internal_ns(&self) -> f64 {
        self.dt_internal_ns
    }

    fn field(&self, theta: &[f64], p: &Problem) -> Result<UdeField> {
        let src = self.spec.unpack(theta)?;
        UdeField::new(
            self.dev,
            &self.data.experiments[p.exp_index].experiment,
            Some(&src),
        )
    }

    fn tag(&self, err: Error, p: &Problem, theta: &[f64]) -> Error {
        err.in_experiment(&self.data.experiments[p.exp_index].experiment.id, theta)
    }

    fn problem_loss(&self, theta: &[f64], p: &Problem) -> Result<f64> {
        if p.targets.is_empty() {
            return Ok(0.0);
        }
        let field = self.field(theta, p)?;
        let states = rk4_samples(&field, &p.y0, &p.grid).map_err(|e| self.tag(e, p, theta))?;
        let mut loss = 0.0;
        for t in &p.targets {
            let y = &states[t.sample - 1];
            for ((a, b), w) in y.iter().zip(&t.coords).zip(&self.weights) {
                loss += w * (a - b) * (a - b);
            }
        }
        Ok(loss)
    }

    fn problem_grad(&self, theta: &[f64], p: &Problem) -> Result<(f64, Vec<f64>)> {
        let field = self.field(theta, p)?;
        rk4_loss_and_gradient(&field, &p.y0, &p.grid, &p.targets, &self.weights)
            .map_err(|e| self.tag(e, p, theta))
    }

    fn check_batch(&self, batch: &[usize]) -> Result<()> {
        match batch.iter().find(|&&i| i >= self.problems.len()) {
            Some(i) => Err(Error::InvalidArgument(format!(
                "experiment index {i} out of range"
            ))),
            None => Ok(()),
        }
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, got {}",
                self.param_len(),
                theta.len()
            )));
        }
        Ok(())
    }

    pub fn all(&self) -> Vec<usize> {
        (0..self.problems.len()).collect()
    }

    /// Loss over the experiments in `batch`; contributions are summed in
    /// batch order.
    pub fn loss_on(&self, theta: &[f64], batch: &[usize]) -> Result<f64> {
        self.check_theta(theta)?;
        self.check_batch(batch)?;
        let parts: Vec<Result<f64>> = batch
            .par_iter()
            .map(|&i| self.problem_loss(theta, &self.problems[i]))
            .collect();
        parts.into_iter().try_fold(0.0, |acc, l| Ok(acc + l?))
    }

    pub fn loss(&self, theta: &[f64]) -> Result<f64> {
        self.loss_on(theta, &self.all())
    }

    pub fn loss_and_gradient_on(&self, theta: &[f64], batch: &[usize]) -> Result<(f64, Vec<f64>)> {
        self.check_theta(theta)?;
        self.check_batch(batch)?;
        let (loss, grad) = match self.grad_method {
            GradMethod::DiscreteAdjoint => {
                let parts: Vec<Result<(f64, Vec<f64>)>> = batch
                    .par_iter()
                    .map(|&i| self.problem_grad(theta, &self.problems[i]))
                    .collect();
                let mut loss = 0.0;
                let mut grad = vec![0.0; theta.len()];
                for part in parts {
                    let (l, g) = part?;
                    loss += l;
                    grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
                }
                (loss, grad)
            }
            GradMethod::FiniteDifference => {
                let loss = self.loss_on(theta, batch)?;
                (loss, self.fd_gradient_on(theta, batch)?)
            }
        };
        if let Some(bad) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::GradientFailure(format!(
                "non-finite gradient component {bad}"
            )));
        }
        Ok((loss, grad))
    }

    pub fn loss_and_gradient(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.loss_and_gradient_on(theta, &self.all())
    }

    /// Central differences with step `FD_STEP · max(|θ_i|, 1)`.
    pub fn fd_gradient_on(&self, theta: &[f64], batch: &[usize]) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; theta.len()];
        let mut tp = theta.to_vec();
        for i in 0..theta.len() {
            let h = FD_STEP * theta[i].abs().max(1.0);
            tp[i] = theta[i] + h;
            let lp = self.loss_on(&tp, batch)?;
            tp[i] = theta[i] - h;
            let lm = self.loss_on(&tp, batch)?;
            tp[i] = theta[i];
            grad[i] = (lp - lm) / (2.0 * h);
        }
        Ok(grad)
    }
}

/// Training-split loss of `theta` on `data`.
pub fn loss(
    theta: &[f64],
    data: &Dataset,
    dev: &DeviceModel,
    spec: &AnsatzSpec,
    dt_internal_ns: f64,
) -> Result<f64> {
    Objective::new(
        dev,
        spec.clone(),
        data,
        dt_internal_ns,
        GradMethod::DiscreteAdjoint,
    )?
    .loss(theta)
}

/// Gradient of the training-split loss.
pub fn gradient(
    theta: &[f64],
    data: &Dataset,
    dev: &DeviceModel,
    spec: &AnsatzSpec,
    dt_internal_ns: f64,
    method: GradMethod,
) -> Result<Vec<f64>> {
    Ok(
        Objective::new(dev, spec.clone(), data, dt_internal_ns, method)?
            .loss_and_gradient(theta)?
            .1,
    )
}
