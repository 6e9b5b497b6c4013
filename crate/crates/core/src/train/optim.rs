//! ADAM and L-BFGS over flat parameter vectors.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    /// Experiments per mini-batch.
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 1,
            epochs: 300,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfiguration(
                "ADAM learning rate must be positive".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfiguration(
                "batch size must be at least 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidConfiguration(
                "ADAM betas must lie in [0, 1)".into(),
            ));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidConfiguration(
                "ADAM epsilon must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// First and second moment state of ADAM.
#[derive(Clone, Debug)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(cfg: AdamConfig, n: usize) -> Self {
        Self {
            cfg,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c = &self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t);
        let bc2 = 1.0 - c.beta2.powi(self.t);
        for i in 0..theta.len() {
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * grad[i];
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            theta[i] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.eps);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LbfgsConfig {
    pub memory: usize,
    pub max_iterations: usize,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant; steps are extended while the weak curvature
    /// condition fails and sufficient decrease still holds.
    pub c2: f64,
    /// Stop once the gradient norm falls below this.
    pub grad_tol: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iterations: 200,
            c1: 1e-4,
            c2: 0.9,
            grad_tol: 0.0,
            max_backtracks: 40,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.memory == 0 {
            return Err(Error::InvalidConfiguration(
                "L-BFGS memory must be at least 1".into(),
            ));
        }
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::InvalidConfiguration(
                "line-search constants must satisfy 0 < c1 < c2 < 1".into(),
            ));
        }
        Ok(())
    }
}

/// One accepted L-BFGS iterate.
#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsStep {
    pub loss: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug)]
pub struct LbfgsOutcome {
    pub theta: Vec<f64>,
    pub loss: f64,
    pub grad: Vec<f64>,
    pub steps: Vec<LbfgsStep>,
    /// The line search could not find an acceptable step.
    pub stalled: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Two-loop recursion: `-H g` from the stored pairs.
fn direction(grad: &[f64], mem: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = grad.to_vec();
    let mut alphas = Vec::with_capacity(mem.len());
    for (s, y, rho) in mem.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = mem.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in mem.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Minimizes `f` from `theta0`. Evaluation errors that are numerical
/// (divergence, gradient failure) during a line search count as an
/// infinite loss; any error at the starting point is returned.
pub fn lbfgs<F>(mut f: F, theta0: Vec<f64>, cfg: &LbfgsConfig) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    cfg.validate()?;
    let (mut loss, mut grad) = f(&theta0)?;
    let mut theta = theta0;
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.memory);
    let mut steps = Vec::new();
    let mut stalled = false;

    let trial = |f: &mut F, x: &[f64]| -> Result<Option<(f64, Vec<f64>)>> {
        match f(x) {
            Ok((l, g)) if l.is_finite() => Ok(Some((l, g))),
            Ok(_) => Ok(None),
            Err(e) if e.is_numerical() => Ok(None),
            Err(e) => Err(e),
        }
    };

    for _ in 0..cfg.max_iterations {
        let gnorm = norm(&grad);
        if gnorm <= cfg.grad_tol || gnorm == 0.0 {
            break;
        }
        let mut d = direction(&grad, &mem);
        let mut slope = dot(&grad, &d);
        if !(slope < 0.0) {
            mem.clear();
            d = grad.iter().map(|g| -g).collect();
            slope = -gnorm * gnorm;
        }
        // unit-length first step when there is no curvature information
        let mut step = if mem.is_empty() { 1.0 / norm(&d) } else { 1.0 };

        let mut accepted: Option<(Vec<f64>, f64, Vec<f64>)> = None;
        for _ in 0..cfg.max_backtracks {
            let x: Vec<f64> = theta.iter().zip(&d).map(|(t, di)| t + step * di).collect();
            match trial(&mut f, &x)? {
                Some((l, g)) if l <= loss + cfg.c1 * step * slope => {
                    accepted = Some((x, l, g));
                    break;
                }
                _ => step *= 0.5,
            }
        }
        let Some((mut x, mut l, mut g)) = accepted else {
            stalled = true;
            break;
        };
        if l >= loss {
            // converged to rounding level
            break;
        }
        // extend while the curvature condition fails
        let mut grow = 0;
        while dot(&g, &d) < cfg.c2 * slope && grow < 10 {
            let s2 = step * 2.0;
            let x2: Vec<f64> = theta.iter().zip(&d).map(|(t, di)| t + s2 * di).collect();
            match trial(&mut f, &x2)? {
                Some((l2, g2)) if l2 <= loss + cfg.c1 * s2 * slope && l2 < l => {
                    step = s2;
                    x = x2;
                    l = l2;
                    g = g2;
                    grow += 1;
                }
                _ => break,
            }
        }

        let s: Vec<f64> = x.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if mem.len() == cfg.memory {
                mem.pop_front();
            }
            mem.push_back((s, y, 1.0 / sy));
        }
        theta = x;
        loss = l;
        grad = g;
        steps.push(LbfgsStep {
            loss,
            grad_norm: norm(&grad),
        });
    }
    Ok(LbfgsOutcome {
        theta,
        loss,
        grad,
        steps,
        stalled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![
            -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
            200.0 * (b - a * a),
        ];
        Ok((f, g))
    }

    #[test]
    fn lbfgs_solves_rosenbrock() {
        let out = lbfgs(rosenbrock, vec![-1.2, 1.0], &LbfgsConfig::default()).unwrap();
        assert!((out.theta[0] - 1.0).abs() < 1e-6, "{:?}", out.theta);
        assert!((out.theta[1] - 1.0).abs() < 1e-6);
        assert!(out.steps.windows(2).all(|w| w[1].loss <= w[0].loss));
    }

    #[test]
    fn lbfgs_minimizes_ill_conditioned_quadratic() {
        let scales = [1e-4, 1.0, 1e4];
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let l = x
                .iter()
                .zip(scales)
                .map(|(v, s)| s * (v - 1.0).powi(2))
                .sum();
            let g = x
                .iter()
                .zip(scales)
                .map(|(v, s)| 2.0 * s * (v - 1.0))
                .collect();
            Ok((l, g))
        };
        let out = lbfgs(f, vec![0.0; 3], &LbfgsConfig::default()).unwrap();
        assert!(out.loss < 1e-16, "{}", out.loss);
    }

    #[test]
    fn adam_descends_on_quadratic() {
        let mut theta = vec![1.0, -2.0];
        let mut opt = Adam::new(
            AdamConfig {
                learning_rate: 0.05,
                ..Default::default()
            },
            2,
        );
        for _ in 0..2000 {
            let g: Vec<f64> = theta.iter().map(|t| 2.0 * t).collect();
            opt.step(&mut theta, &g);
        }
        assert!(norm(&theta) < 1e-2, "{theta:?}");
    }

    #[test]
    fn first_adam_step_has_learning_rate_length() {
        let mut theta = vec![0.0, 0.0];
        let mut opt = Adam::new(AdamConfig::default(), 2);
        opt.step(&mut theta, &[3.0, -1e-3]);
        assert!((theta[0] + 1e-3).abs() < 1e-9);
        assert!((theta[1] - 1e-3).abs() < 1e-8);
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(AdamConfig {
            learning_rate: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(LbfgsConfig {
            c1: 0.95,
            ..Default::default()
        }
        .validate()
        .is_err());
    }
}
