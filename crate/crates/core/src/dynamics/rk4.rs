//! Classic four-stage Runge–Kutta on a fixed grid, and the exact discrete
//! adjoint of that recursion for squared-error losses on sampled states.

use super::field::VectorField;
use super::steps_per_sample;
use crate::error::{Error, Result};

/// Internal step size and output sampling of one integration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepGrid {
    /// Internal step, μs.
    pub h: f64,
    pub steps_per_sample: usize,
    pub n_samples: usize,
    /// Output interval, μs.
    pub sample_dt: f64,
}

impl StepGrid {
    pub fn new(sample_dt_ns: f64, dt_internal_ns: f64, n_samples: usize) -> Result<Self> {
        let k = steps_per_sample(sample_dt_ns, dt_internal_ns)?;
        Ok(Self {
            h: sample_dt_ns / k as f64 / 1e3,
            steps_per_sample: k,
            n_samples,
            sample_dt: sample_dt_ns / 1e3,
        })
    }

    pub fn sample_time(&self, j: usize) -> f64 {
        j as f64 * self.sample_dt
    }
}

/// A target state in coordinates at output sample `sample` (1-based).
#[derive(Clone, Debug, PartialEq)]
pub struct RecordTarget {
    pub sample: usize,
    pub coords: Vec<f64>,
}

struct Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    u: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            u: vec![0.0; n],
        }
    }
}

#[inline]
fn rk4_step<F: VectorField + ?Sized>(field: &F, h: f64, y: &mut [f64], ws: &mut Workspace) {
    field.eval(y, &mut ws.k1);
    for i in 0..y.len() {
        ws.u[i] = y[i] + 0.5 * h * ws.k1[i];
    }
    field.eval(&ws.u, &mut ws.k2);
    for i in 0..y.len() {
        ws.u[i] = y[i] + 0.5 * h * ws.k2[i];
    }
    field.eval(&ws.u, &mut ws.k3);
    for i in 0..y.len() {
        ws.u[i] = y[i] + h * ws.k3[i];
    }
    field.eval(&ws.u, &mut ws.k4);
    for i in 0..y.len() {
        y[i] += h / 6.0 * (ws.k1[i] + 2.0 * ws.k2[i] + 2.0 * ws.k3[i] + ws.k4[i]);
    }
}

fn diverged(time_us: f64) -> Error {
    Error::Divergence {
        time_us,
        experiment: None,
        theta: None,
    }
}

/// States at output samples `1..=n_samples`.
pub fn rk4_samples<F: VectorField + ?Sized>(
    field: &F,
    y0: &[f64],
    grid: &StepGrid,
) -> Result<Vec<Vec<f64>>> {
    let n = field.state_dim();
    let mut y = y0.to_vec();
    let mut ws = Workspace::new(n);
    let mut out = Vec::with_capacity(grid.n_samples);
    for j in 1..=grid.n_samples {
        for _ in 0..grid.steps_per_sample {
            rk4_step(field, grid.h, &mut y, &mut ws);
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(diverged(grid.sample_time(j)));
        }
        out.push(y.clone());
    }
    Ok(out)
}

/// Loss `Σ_records Σ_i w_i (y_i - ỹ_i)²` and its exact gradient with respect
/// to the field parameters, via the adjoint of the RK4 recursion.
///
/// `targets` must be sorted by sample index; integration stops at the last one.
pub fn rk4_loss_and_gradient<F: VectorField + ?Sized>(
    field: &F,
    y0: &[f64],
    grid: &StepGrid,
    targets: &[RecordTarget],
    weights: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let n = field.state_dim();
    let p = field.param_dim();
    let mut grad = vec![0.0; p];
    let Some(last) = targets.last() else {
        return Ok((0.0, grad));
    };
    if targets.windows(2).any(|w| w[0].sample >= w[1].sample) {
        return Err(Error::InvalidArgument(
            "record targets must be strictly increasing in time".into(),
        ));
    }
    let k = grid.steps_per_sample;
    let h = grid.h;
    let total_steps = last.sample * k;

    // forward sweep, checkpointing every step start
    let mut states = Vec::with_capacity((total_steps + 1) * n);
    let mut y = y0.to_vec();
    let mut ws = Workspace::new(n);
    states.extend_from_slice(&y);
    let mut loss = 0.0;
    // seeds[r] = dL/dy at targets[r]
    let mut seeds: Vec<Vec<f64>> = Vec::with_capacity(targets.len());
    let mut next = 0;
    for step in 1..=total_steps {
        rk4_step(field, h, &mut y, &mut ws);
        states.extend_from_slice(&y);
        if step % k == 0 {
            let j = step / k;
            if !y.iter().all(|v| v.is_finite()) {
                return Err(diverged(grid.sample_time(j)));
            }
            if next < targets.len() && targets[next].sample == j {
                let t = &targets[next].coords;
                let mut seed = vec![0.0; n];
                for i in 0..n {
                    let d = y[i] - t[i];
                    loss += weights[i] * d * d;
                    seed[i] = 2.0 * weights[i] * d;
                }
                seeds.push(seed);
                next += 1;
            }
        }
    }

    // reverse sweep
    let mut y_bar = vec![0.0; n];
    let mut kb1 = vec![0.0; n];
    let mut kb2 = vec![0.0; n];
    let mut kb3 = vec![0.0; n];
    let mut kb4 = vec![0.0; n];
    let mut u_bar = vec![0.0; n];
    let mut u2 = vec![0.0; n];
    let mut u3 = vec![0.0; n];
    let mut u4 = vec![0.0; n];
    let mut r = targets.len();
    for step in (0..total_steps).rev() {
        let end = step + 1;
        if end % k == 0 && r > 0 && targets[r - 1].sample == end / k {
            r -= 1;
            for (yb, s) in y_bar.iter_mut().zip(&seeds[r]) {
                *yb += s;
            }
        }
        let y_n = &states[step * n..(step + 1) * n];
        // recompute stage inputs
        field.eval(y_n, &mut ws.k1);
        for i in 0..n {
            u2[i] = y_n[i] + 0.5 * h * ws.k1[i];
        }
        field.eval(&u2, &mut ws.k2);
        for i in 0..n {
            u3[i] = y_n[i] + 0.5 * h * ws.k2[i];
        }
        field.eval(&u3, &mut ws.k3);
        for i in 0..n {
            u4[i] = y_n[i] + h * ws.k3[i];
        }

        for i in 0..n {
            kb1[i] = h / 6.0 * y_bar[i];
            kb2[i] = h / 3.0 * y_bar[i];
            kb3[i] = h / 3.0 * y_bar[i];
            kb4[i] = h / 6.0 * y_bar[i];
        }
        // y_bar already holds the identity path y_n -> y_{n+1}

        u_bar.iter_mut().for_each(|v| *v = 0.0);
        field.vjp(&u4, &kb4, &mut u_bar, &mut grad);
        for i in 0..n {
            y_bar[i] += u_bar[i];
            kb3[i] += h * u_bar[i];
        }

        u_bar.iter_mut().for_each(|v| *v = 0.0);
        field.vjp(&u3, &kb3, &mut u_bar, &mut grad);
        for i in 0..n {
            y_bar[i] += u_bar[i];
            kb2[i] += 0.5 * h * u_bar[i];
        }

        u_bar.iter_mut().for_each(|v| *v = 0.0);
        field.vjp(&u2, &kb2, &mut u_bar, &mut grad);
        for i in 0..n {
            y_bar[i] += u_bar[i];
            kb1[i] += 0.5 * h * u_bar[i];
        }

        u_bar.iter_mut().for_each(|v| *v = 0.0);
        field.vjp(y_n, &kb1, &mut u_bar, &mut grad);
        for i in 0..n {
            y_bar[i] += u_bar[i];
        }
    }
    if let Some(bad) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::GradientFailure(format!(
            "non-finite gradient component {bad}"
        )));
    }
    Ok((loss, grad))
}
