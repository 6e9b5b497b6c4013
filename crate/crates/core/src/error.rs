use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid dimension {0}: at least two levels are required")]
    InvalidDimension(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("degenerate spectrum: no positive eigenvalue to renormalize{}", fmt_time(*.time_us))]
    DegenerateSpectrum { time_us: Option<f64> },

    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("integration diverged at t = {time_us} us{}", fmt_exp(.experiment))]
    Divergence {
        time_us: f64,
        experiment: Option<String>,
        theta: Option<Vec<f64>>,
    },

    #[error("gradient failure: {0}")]
    GradientFailure(String),

    #[error("unphysical rate: {0}")]
    UnphysicalRate(String),

    #[error("unsupported ansatz: {0}")]
    UnsupportedAnsatz(String),
}

fn fmt_time(t: Option<f64>) -> String {
    match t {
        Some(t) => format!(" (record at t = {t} us)"),
        None => String::new(),
    }
}

fn fmt_exp(e: &Option<String>) -> String {
    match e {
        Some(id) => format!(" in experiment '{id}'"),
        None => String::new(),
    }
}

impl Error {
    /// Attach the time stamp of a tomography record to a degenerate-spectrum error.
    pub fn at_time(self, time_us: f64) -> Self {
        match self {
            Error::DegenerateSpectrum { .. } => Error::DegenerateSpectrum {
                time_us: Some(time_us),
            },
            other => other,
        }
    }

    /// Attach experiment id and parameter vector to a divergence error.
    pub fn in_experiment(self, id: &str, theta: &[f64]) -> Self {
        match self {
            Error::Divergence { time_us, .. } => Error::Divergence {
                time_us,
                experiment: Some(id.to_string()),
                theta: Some(theta.to_vec()),
            },
            other => other,
        }
    }

    /// True for errors caused by the numerics rather than by the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateSpectrum { .. }
                | Error::Divergence { .. }
                | Error::GradientFailure(_)
                | Error::UnphysicalRate(_)
        )
    }
}
