//! Fitting source terms to tomographic records.
//!
//! The loss is the plain sum over training records of squared Frobenius
//! distances between the filtered tomographic estimate and the unfiltered
//! model prediction. ADAM runs over shuffled mini-batches of whole
//! experiments, then L-BFGS polishes on the full batch.

mod dataset;
mod fit;
mod objective;
mod optim;

pub use dataset::{Dataset, ExperimentData, Split};
pub use fit::{fit, fit_from, FitResult, LogEntry, Phase, TrainConfig, TrainMode};
pub use objective::{gradient, loss, GradMethod, Objective, FD_STEP};
pub use optim::{lbfgs, norm, Adam, AdamConfig, LbfgsConfig, LbfgsOutcome, LbfgsStep};
