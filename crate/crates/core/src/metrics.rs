//! Trace-distance statistics, histograms and energy series for evaluating
//! models against tomographic records.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate_rk4, DeviceModel, Trajectory};
use crate::error::{Error, Result};
use crate::models::SourceModel;
use crate::qcore::{spectral_filter, trace_distance, DensityMatrix};
use crate::tomography::{expected_energy, TomographyRecord};
use crate::train::{Dataset, ExperimentData};
use crate::twin::{sample_amplitudes, TwinGenerator};

const TIME_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    /// `t ≤ T_Tr`
    Interpolation,
    /// `t > T_Tr`
    Extrapolation,
}

impl SplitTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitTag::Interpolation => "interpolation",
            SplitTag::Extrapolation => "extrapolation",
        }
    }
}

fn filtered(state: &crate::qcore::ComplexMatrix, t: f64) -> Result<DensityMatrix> {
    spectral_filter(&state.hermitize()).map_err(|e| e.at_time(t))
}

/// Trace distance between the filtered prediction and each record.
pub fn trace_distance_series(
    pred: &Trajectory,
    records: &[TomographyRecord],
) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let j = pred.times.partition_point(|t| *t < r.time_us - TIME_TOL);
        if j >= pred.len() || (pred.times[j] - r.time_us).abs() > TIME_TOL {
            return Err(Error::InvalidArgument(format!(
                "no prediction at record time {} us",
                r.time_us
            )));
        }
        let rho = filtered(&pred.states[j], r.time_us)?;
        out.push((r.time_us, trace_distance(&rho, &r.rho_hat)?));
    }
    Ok(out)
}

/// Monte Carlo mean with standard error `s/√n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub n: usize,
}

impl McEstimate {
    /// Standard error from the sample (n-1) standard deviation.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("no values to average".into()));
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std_err = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Ok(Self { mean, std_err, n })
    }
}

/// Time window `(from, to]` in μs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub from_us: f64,
    pub to_us: f64,
}

impl TimeWindow {
    pub fn contains(&self, t: f64) -> bool {
        t > self.from_us + TIME_TOL && t <= self.to_us + TIME_TOL
    }
}

/// Settings of the Monte Carlo estimate of the expected trace distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_samples: usize,
    pub p_max_mhz: f64,
    pub seed: u64,
    pub window: TimeWindow,
    /// Average all records of all draws instead of time-averaging each draw first.
    pub pooled: bool,
    pub dt_internal_ns: f64,
}

/// Expected trace distance between a model and the exact evolution of
/// `truth` over pulse amplitudes drawn uniformly from `(0, p_max]`.
pub fn expected_trace_distance(
    model: Option<&SourceModel>,
    dev: &DeviceModel,
    truth: &TwinGenerator,
    cfg: &McConfig,
) -> Result<McEstimate> {
    if cfg.n_samples == 0 {
        return Err(Error::InvalidArgument(
            "n_samples must be at least 1".into(),
        ));
    }
    let mut gen = truth.clone();
    gen.amplitudes_mhz = sample_amplitudes(cfg.n_samples, cfg.p_max_mhz, cfg.seed);
    gen.shots = 0;
    let exps = gen.experiments()?;
    let per_draw: Vec<Result<Vec<f64>>> = exps
        .par_iter()
        .map(|e| {
            let true_traj = integrate_rk4(&gen.device, e, gen.latent.as_ref(), gen.dt_internal_ns)?;
            let pred = integrate_rk4(dev, e, model, cfg.dt_internal_ns)?;
            let mut vals = Vec::new();
            for (j, t) in true_traj.times.iter().enumerate() {
                if !cfg.window.contains(*t) {
                    continue;
                }
                let a = filtered(&true_traj.states[j], *t)?;
                let b = filtered(&pred.states[j], *t)?;
                vals.push(trace_distance(&a, &b)?);
            }
            Ok(vals)
        })
        .collect();
    let per_draw: Vec<Vec<f64>> = per_draw.into_iter().collect::<Result<_>>()?;
    aggregate(&per_draw, cfg.pooled)
}

fn aggregate(per_draw: &[Vec<f64>], pooled: bool) -> Result<McEstimate> {
    if pooled {
        let all: Vec<f64> = per_draw.iter().flatten().copied().collect();
        McEstimate::from_values(&all)
    } else {
        let means: Vec<f64> = per_draw
            .iter()
            .filter(|v| !v.is_empty())
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
            .collect();
        McEstimate::from_values(&means)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub model: String,
    pub split: SplitTag,
    pub mean: f64,
    /// Population standard deviation.
    pub stddev: f64,
    pub count: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub rows: Vec<MomentRow>,
    /// (model, split) pairs left out because they had no values.
    pub omitted: Vec<(String, SplitTag)>,
}

/// Mean and population standard deviation.
pub fn moments(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// One row per (model, split), ordered by model name then split.
pub fn moment_table<'a>(
    pools: impl IntoIterator<Item = (&'a str, SplitTag, &'a [f64])>,
) -> MomentTable {
    let mut sorted: BTreeMap<(String, SplitTag), &[f64]> = BTreeMap::new();
    for (m, s, v) in pools {
        sorted.insert((m.to_string(), s), v);
    }
    let mut table = MomentTable::default();
    for ((model, split), values) in sorted {
        match moments(values) {
            Some((mean, stddev)) => table.rows.push(MomentRow {
                model,
                split,
                mean,
                stddev,
                count: values.len(),
            }),
            None => {
                log::warn!(
                    "no records for model '{model}' in the {} split",
                    split.as_str()
                );
                table.omitted.push((model, split));
            }
        }
    }
    table
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    pub lo: f64,
    pub hi: f64,
    pub density: f64,
}

/// Normalized densities over `[0, max(values)]` (or `[0, 1]` if all values are zero).
pub fn histogram_density(values: &[f64], bin_count: usize) -> Result<Vec<HistBin>> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("histogram of an empty set".into()));
    }
    if bin_count < 2 {
        return Err(Error::InvalidArgument(
            "histogram needs at least two bins".into(),
        ));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidArgument(
            "histogram values must be finite and nonnegative".into(),
        ));
    }
    let max = values.iter().copied().fold(0.0, f64::max);
    let hi = if max > 0.0 { max } else { 1.0 };
    let width = hi / bin_count as f64;
    let mut counts = vec![0usize; bin_count];
    for v in values {
        let b = ((v / width) as usize).min(bin_count - 1);
        counts[b] += 1;
    }
    let n = values.len() as f64;
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| HistBin {
            lo: i as f64 * width,
            hi: if i + 1 == bin_count {
                hi
            } else {
                (i + 1) as f64 * width
            },
            density: c as f64 / (n * width),
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyPoint {
    pub t_us: f64,
    pub energy_pred: f64,
    pub energy_target: f64,
}

/// Trace distances and energies of one experiment, split at the horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentEval {
    pub id: String,
    pub amplitude_mhz: f64,
    pub interpolation: Vec<(f64, f64)>,
    pub extrapolation: Vec<(f64, f64)>,
    pub energy: Vec<EnergyPoint>,
}

impl ExperimentEval {
    pub fn values(&self, split: SplitTag) -> Vec<f64> {
        let s = match split {
            SplitTag::Interpolation => &self.interpolation,
            SplitTag::Extrapolation => &self.extrapolation,
        };
        s.iter().map(|(_, d)| *d).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentStat {
    pub id: String,
    pub split: SplitTag,
    pub mean: f64,
    pub stddev: f64,
}

/// Evaluation of one model on a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub train_horizon_us: f64,
    pub experiments: Vec<ExperimentEval>,
}

impl EvalReport {
    pub const SPLITS: [SplitTag; 2] = [SplitTag::Interpolation, SplitTag::Extrapolation];

    /// All record-level trace distances of a split, in experiment order.
    pub fn pooled(&self, split: SplitTag) -> Vec<f64> {
        self.experiments
            .iter()
            .flat_map(|e| e.values(split))
            .collect()
    }

    pub fn per_experiment(&self) -> Vec<ExperimentStat> {
        let mut out = Vec::new();
        for e in &self.experiments {
            for split in Self::SPLITS {
                if let Some((mean, stddev)) = moments(&e.values(split)) {
                    out.push(ExperimentStat {
                        id: e.id.clone(),
                        split,
                        mean,
                        stddev,
                    });
                }
            }
        }
        out
    }

    /// Expected trace distance with the dataset's experiments as Monte Carlo draws.
    pub fn expected_trace_distance(&self, split: SplitTag, pooled: bool) -> Result<McEstimate> {
        let per: Vec<Vec<f64>> = self.experiments.iter().map(|e| e.values(split)).collect();
        aggregate(&per, pooled)
    }

    pub fn histogram(&self, split: SplitTag, bins: usize) -> Result<Vec<HistBin>> {
        histogram_density(&self.pooled(split), bins)
    }
}

fn eval_experiment(
    model: Option<&SourceModel>,
    dev: &DeviceModel,
    e: &ExperimentData,
    horizon: f64,
    dt_internal_ns: f64,
) -> Result<ExperimentEval> {
    let n = e
        .records
        .last()
        .map(|r| e.sample_index(r.time_us))
        .transpose()?
        .unwrap_or(0);
    let pred =
        crate::dynamics::integrate_rk4_samples(dev, &e.experiment, model, dt_internal_ns, n)?;
    let series = trace_distance_series(&pred, &e.records)?;
    let k = e.count_until(horizon);
    let mut energy = Vec::with_capacity(e.records.len());
    for r in &e.records {
        let j = e.sample_index(r.time_us)?;
        let rho = filtered(&pred.states[j - 1], r.time_us)?;
        energy.push(EnergyPoint {
            t_us: r.time_us,
            energy_pred: expected_energy(&rho),
            energy_target: expected_energy(&r.rho_hat),
        });
    }
    Ok(ExperimentEval {
        id: e.experiment.id.clone(),
        amplitude_mhz: e.experiment.amplitude_p_mhz,
        interpolation: series[..k].to_vec(),
        extrapolation: series[k..].to_vec(),
        energy,
    })
}

/// Predicts every experiment of `data` (in parallel) and compares with its records.
pub fn evaluate(
    name: &str,
    model: Option<&SourceModel>,
    dev: &DeviceModel,
    data: &Dataset,
    dt_internal_ns: f64,
) -> Result<EvalReport> {
    if let Some(m) = model {
        if m.dim() != dev.dim {
            return Err(Error::InvalidArgument(format!(
                "model is built for {} levels but the device has {}",
                m.dim(),
                dev.dim
            )));
        }
    }
    let evals: Vec<Result<ExperimentEval>> = data
        .experiments
        .par_iter()
        .map(|e| eval_experiment(model, dev, e, data.train_horizon_us, dt_internal_ns))
        .collect();
    Ok(EvalReport {
        model: name.to_string(),
        train_horizon_us: data.train_horizon_us,
        experiments: evals.into_iter().collect::<Result<_>>()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::ComplexMatrix;
    use crate::tomography::measurement_probs;

    #[test]
    fn identical_prediction_has_zero_distance() {
        let rho = DensityMatrix::new(ComplexMatrix::diag(&[0.75, 0.25])).unwrap();
        let rec = TomographyRecord::exact(0.004, measurement_probs(&rho).unwrap()).unwrap();
        let pred = Trajectory {
            times: vec![0.004],
            states: vec![rho.matrix().clone()],
        };
        let s = trace_distance_series(&pred, &[rec]).unwrap();
        assert!(s[0].1 < 1e-12);
    }

    #[test]
    fn single_step_distance() {
        let target = DensityMatrix::maximally_mixed(2);
        let rec = TomographyRecord::exact(0.004, measurement_probs(&target).unwrap()).unwrap();
        let pred = Trajectory {
            times: vec![0.004],
            states: vec![ComplexMatrix::diag(&[0.75, 0.25])],
        };
        let s = trace_distance_series(&pred, &[rec]).unwrap();
        assert!((s[0].1 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn grid_mismatch_rejected() {
        let rec =
            TomographyRecord::exact(0.008, measurement_probs(&DensityMatrix::ground(2)).unwrap())
                .unwrap();
        let pred = Trajectory {
            times: vec![0.004],
            states: vec![ComplexMatrix::diag(&[1.0, 0.0])],
        };
        assert!(trace_distance_series(&pred, &[rec]).is_err());
    }

    #[test]
    fn closed_form_moments() {
        assert_eq!(moments(&[0.25]), Some((0.25, 0.0)));
        let (m, s) = moments(&[0.1, 0.3]).unwrap();
        assert!((m - 0.2).abs() < 1e-15 && (s - 0.1).abs() < 1e-15);
        assert_eq!(moments(&[]), None);
    }

    #[test]
    fn moment_table_order_and_omission() {
        let a = [0.1, 0.3];
        let empty: [f64; 0] = [];
        let t = moment_table([
            ("sp", SplitTag::Extrapolation, &a[..]),
            ("affine", SplitTag::Interpolation, &a[..]),
            ("sp", SplitTag::Interpolation, &empty[..]),
        ]);
        let keys: Vec<_> = t.rows.iter().map(|r| (r.model.as_str(), r.split)).collect();
        assert_eq!(
            keys,
            vec![
                ("affine", SplitTag::Interpolation),
                ("sp", SplitTag::Extrapolation)
            ]
        );
        assert_eq!(t.omitted, vec![("sp".to_string(), SplitTag::Interpolation)]);
    }

    #[test]
    fn identical_values_fill_one_bin() {
        let h = histogram_density(&[0.2; 10], 50).unwrap();
        let occupied: Vec<_> = h.iter().filter(|b| b.density > 0.0).collect();
        assert_eq!(occupied.len(), 1);
        let mass: f64 = h.iter().map(|b| b.density * (b.hi - b.lo)).sum();
        assert!((mass - 1.0).abs() < 1e-9);
    }

    #[test]
    fn histogram_rejects_bad_input() {
        assert!(histogram_density(&[], 10).is_err());
        assert!(histogram_density(&[0.1], 1).is_err());
    }

    #[test]
    fn uniform_values_are_flat() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 20_000;
        let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        v.push(1.0);
        let bins = 20;
        let h = histogram_density(&v, bins).unwrap();
        let expected = v.len() as f64 / bins as f64;
        let chi2: f64 = h
            .iter()
            .map(|b| {
                let c = b.density * v.len() as f64 * (b.hi - b.lo);
                (c - expected).powi(2) / expected
            })
            .sum();
        // 95th percentile of χ² with 19 degrees of freedom
        assert!(chi2 < 30.14, "chi2 = {chi2}");
    }

    #[test]
    fn standard_error() {
        let e = McEstimate::from_values(&[1.0, 3.0]).unwrap();
        assert_eq!(e.mean, 2.0);
        assert!((e.std_err - 1.0).abs() < 1e-15);
    }
}
