use std::ops::Range;

use crate::dynamics::Experiment;
use crate::error::{Error, Result};
use crate::tomography::TomographyRecord;

/// Slack for time comparisons, μs.
const TIME_EPS: f64 = 1e-9;

/// One experiment and its tomographic records, sorted by time.
#[derive(Clone, Debug)]
pub struct ExperimentData {
    pub experiment: Experiment,
    pub records: Vec<TomographyRecord>,
}

impl ExperimentData {
    pub fn new(experiment: Experiment, records: Vec<TomographyRecord>) -> Result<Self> {
        experiment.validate()?;
        if records.windows(2).any(|w| w[0].time_us >= w[1].time_us) {
            return Err(Error::InvalidArgument(format!(
                "records of experiment '{}' are not strictly increasing in time",
                experiment.id
            )));
        }
        let data = Self {
            experiment,
            records,
        };
        for r in &data.records {
            data.sample_index(r.time_us)?;
        }
        Ok(data)
    }

    /// 1-based output sample at time `t` on the experiment's grid.
    pub fn sample_index(&self, t: f64) -> Result<usize> {
        let dt = self.experiment.sample_dt_ns / 1e3;
        let x = t / dt;
        let j = x.round();
        if j < 1.0 || (x - j).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "record at t = {t} us of experiment '{}' is not on its {} ns sampling grid",
                self.experiment.id, self.experiment.sample_dt_ns
            )));
        }
        Ok(j as usize)
    }

    /// Number of leading records with `t ≤ horizon`.
    pub fn count_until(&self, horizon_us: f64) -> usize {
        self.records
            .partition_point(|r| r.time_us <= horizon_us + TIME_EPS)
    }

    pub fn last_time(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.time_us)
    }
}

/// Experiments with records, plus the training horizon `T_Tr`.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub experiments: Vec<ExperimentData>,
    pub train_horizon_us: f64,
    pub total_horizon_us: f64,
}

/// Per-experiment record ranges of a time split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<Range<usize>>,
    pub validation: Vec<Range<usize>>,
}

impl Split {
    pub fn train_len(&self) -> usize {
        self.train.iter().map(|r| r.len()).sum()
    }

    pub fn validation_len(&self) -> usize {
        self.validation.iter().map(|r| r.len()).sum()
    }
}

impl Dataset {
    /// The total horizon is the latest record time across experiments.
    pub fn new(experiments: Vec<ExperimentData>, train_horizon_us: f64) -> Result<Self> {
        if experiments.is_empty() {
            return Err(Error::InvalidArgument("dataset has no experiments".into()));
        }
        let total = experiments
            .iter()
            .map(ExperimentData::last_time)
            .fold(0.0, f64::max);
        let ds = Self {
            experiments,
            train_horizon_us,
            total_horizon_us: total,
        };
        ds.split(train_horizon_us)?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.experiments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experiments.is_empty()
    }

    pub fn record_count(&self) -> usize {
        self.experiments.iter().map(|e| e.records.len()).sum()
    }

    /// Records with `t ≤ T_Tr` train, the rest validate.
    pub fn split(&self, train_horizon_us: f64) -> Result<Split> {
        if !(train_horizon_us > 0.0 && train_horizon_us <= self.total_horizon_us) {
            return Err(Error::InvalidArgument(format!(
                "training horizon {train_horizon_us} us outside (0, {}] us",
                self.total_horizon_us
            )));
        }
        let mut split = Split {
            train: Vec::with_capacity(self.len()),
            validation: Vec::with_capacity(self.len()),
        };
        for e in &self.experiments {
            let k = e.count_until(train_horizon_us);
            split.train.push(0..k);
            split.validation.push(k..e.records.len());
        }
        Ok(split)
    }

    /// The split at the dataset's own training horizon.
    pub fn default_split(&self) -> Split {
        self.split(self.train_horizon_us)
            .expect("horizon validated at construction")
    }

    /// A dataset restricted to the experiments at `indices`.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut exps = Vec::with_capacity(indices.len());
        for &i in indices {
            let e = self.experiments.get(i).ok_or_else(|| {
                Error::InvalidArgument(format!("experiment index {i} out of range"))
            })?;
            exps.push(e.clone());
        }
        Self::new(exps, self.train_horizon_us)
    }

    pub fn find(&self, id: &str) -> Option<usize> {
        self.experiments.iter().position(|e| e.experiment.id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::DensityMatrix;
    use crate::tomography::{measurement_probs, TomographyRecord};

    fn data(duration_us: f64, dt_ns: f64) -> ExperimentData {
        let exp = Experiment::square_pulse("e0", 1.0, duration_us, dt_ns).unwrap();
        let probs = measurement_probs(&DensityMatrix::ground(2)).unwrap();
        let n = exp.n_samples().unwrap();
        let records = (1..=n)
            .map(|j| TomographyRecord::exact(exp.sample_time(j), probs).unwrap())
            .collect();
        ExperimentData::new(exp, records).unwrap()
    }

    #[test]
    fn half_horizon_split_is_exhaustive() {
        let ds = Dataset::new(vec![data(1.0, 4.0), data(1.0, 4.0)], 0.5).unwrap();
        let s = ds.split(0.5).unwrap();
        assert_eq!(s.train_len() + s.validation_len(), ds.record_count());
    }

    #[test]
    fn ten_microseconds_at_four_ns_is_2500_records() {
        let ds = Dataset::new(vec![data(50.0, 4.0)], 10.0).unwrap();
        let s = ds.default_split();
        assert_eq!(s.train[0], 0..2500);
        assert_eq!(s.validation[0].len(), 10000);
    }

    #[test]
    fn boundary_record_goes_to_train() {
        let ds = Dataset::new(vec![data(0.1, 4.0)], 0.1).unwrap();
        let e = &ds.experiments[0];
        assert_eq!(ds.split(e.records[9].time_us).unwrap().train[0], 0..10);
    }

    #[test]
    fn horizon_out_of_range() {
        let ds = Dataset::new(vec![data(1.0, 4.0)], 0.5).unwrap();
        assert!(ds.split(0.0).is_err());
        assert!(ds.split(1.5).is_err());
    }

    #[test]
    fn off_grid_record_rejected() {
        let exp = Experiment::square_pulse("e0", 1.0, 1.0, 4.0).unwrap();
        let probs = measurement_probs(&DensityMatrix::ground(2)).unwrap();
        let rec = TomographyRecord::exact(0.005, probs).unwrap();
        assert!(ExperimentData::new(exp, vec![rec]).is_err());
    }
}
