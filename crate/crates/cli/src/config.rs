//! Run configuration, read from a TOML file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use qude_core::dynamics::{BaseKind, DeviceModel};
use qude_core::models::{
    AnsatzKind, AnsatzSpec, InitOptions, SourceModel, StructurePreservingSource,
};
use qude_core::tomography::ShotMode;
use qude_core::train::{AdamConfig, GradMethod, LbfgsConfig, TrainConfig, TrainMode};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Absent means: take the device recorded with the dataset or model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device: Option<DeviceSection>,
    #[serde(default)]
    pub experiments: ExperimentsSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent: Option<LatentSection>,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    #[serde(default)]
    pub report: ReportSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSection {
    #[serde(rename = "omega01_GHz")]
    pub omega01_ghz: f64,
    /// Defaults to ω01 (resonant frame).
    #[serde(
        rename = "omega_rot_GHz",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub omega_rot_ghz: Option<f64>,
    #[serde(rename = "T1_us")]
    pub t1_us: f64,
    #[serde(rename = "T2_us")]
    pub t2_us: f64,
    #[serde(default = "default_base")]
    pub base_model: BaseKind,
}

fn default_base() -> BaseKind {
    BaseKind::Lindblad
}

impl DeviceSection {
    pub fn from_device(dev: &DeviceModel) -> Self {
        Self {
            omega01_ghz: dev.omega01_ghz,
            omega_rot_ghz: Some(dev.omega_rot_ghz),
            t1_us: dev.t1_us,
            t2_us: dev.t2_us,
            base_model: dev.base_kind,
        }
    }

    pub fn to_device(&self) -> Result<DeviceModel> {
        Ok(DeviceModel::new(
            self.omega01_ghz,
            self.omega_rot_ghz.unwrap_or(self.omega01_ghz),
            self.t1_us,
            self.t2_us,
            self.base_model,
        )?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentsSection {
    pub n_experiments: usize,
    #[serde(rename = "p_max_MHz")]
    pub p_max_mhz: f64,
    pub duration_us: f64,
    pub sample_dt_ns: f64,
    /// Shot budget per time step; 0 writes exact probabilities.
    pub shots: u64,
    pub shot_mode: ShotMode,
    pub seed: u64,
    /// Internal RK4 step of the simulated truth, ns.
    pub dt_internal_ns: f64,
}

impl Default for ExperimentsSection {
    fn default() -> Self {
        Self {
            n_experiments: 5,
            p_max_mhz: 3.47,
            duration_us: 50.0,
            sample_dt_ns: 4.0,
            shots: 5000,
            shot_mode: ShotMode::PerAxis,
            seed: 0,
            dt_internal_ns: 4.0,
        }
    }
}

/// Planted latent dynamics of the twin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentSection {
    /// `sp`, `affine`, `nonlinear` or `none`.
    pub ansatz: String,
    /// Structure-preserving readout: α in kHz.
    #[serde(rename = "alpha_kHz", default, skip_serializing_if = "Option::is_none")]
    pub alpha_khz: Option<Vec<f64>>,
    /// Structure-preserving readout: γ⁻¹ in μs (`inf` disables a channel).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_inv_us: Option<Vec<f64>>,
    /// Raw parameter vector of the ansatz, alternative to the readout form.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<f64>>,
}

impl LatentSection {
    pub fn zero() -> Self {
        Self {
            ansatz: "none".into(),
            alpha_khz: None,
            gamma_inv_us: None,
            params: None,
        }
    }

    pub fn sp_readout(alpha_khz: [f64; 3], gamma_inv_us: [f64; 3]) -> Self {
        Self {
            ansatz: "sp".into(),
            alpha_khz: Some(alpha_khz.to_vec()),
            gamma_inv_us: Some(gamma_inv_us.to_vec()),
            params: None,
        }
    }

    pub fn to_model(&self, dim: usize) -> Result<Option<SourceModel>> {
        if self.ansatz.eq_ignore_ascii_case("none") {
            return Ok(None);
        }
        let kind: AnsatzKind = self.ansatz.parse().map_err(cfg_err)?;
        let spec = AnsatzSpec::default_for(kind, dim);
        if let Some(params) = &self.params {
            if self.alpha_khz.is_some() || self.gamma_inv_us.is_some() {
                return Err(CliError::Config(
                    "latent: give either params or alpha_kHz/gamma_inv_us, not both".into(),
                ));
            }
            return Ok(Some(spec.unpack(params).map_err(cfg_err)?));
        }
        match (kind, &self.alpha_khz, &self.gamma_inv_us) {
            (AnsatzKind::StructurePreserving, Some(a), Some(g)) => {
                let a: [f64; 3] = a
                    .as_slice()
                    .try_into()
                    .map_err(|_| CliError::Config("latent.alpha_kHz needs three entries".into()))?;
                let g: [f64; 3] = g.as_slice().try_into().map_err(|_| {
                    CliError::Config("latent.gamma_inv_us needs three entries".into())
                })?;
                if g.iter().any(|t| !t.is_finite() || *t <= 0.0) {
                    return Err(CliError::Config(
                        "latent.gamma_inv_us must be positive".into(),
                    ));
                }
                Ok(Some(SourceModel::StructurePreserving(
                    StructurePreservingSource::qubit_from_readout(a, g).map_err(cfg_err)?,
                )))
            }
            _ => Err(CliError::Config(format!(
                "latent '{}' needs params (or alpha_kHz and gamma_inv_us for sp)",
                self.ansatz
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub ansatz: AnsatzKind,
    /// Overrides the device's base model for training and evaluation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_model: Option<BaseKind>,
    /// Absent: the horizon recorded with the dataset or model, else 10 μs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_horizon_us: Option<f64>,
    pub mode: TrainMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<String>,
    pub grad_method: GradMethod,
    pub dt_internal_ns: f64,
    pub seed: u64,
    pub adam: AdamConfig,
    pub lbfgs: LbfgsConfig,
    pub init: InitOptions,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            ansatz: AnsatzKind::StructurePreserving,
            base_model: None,
            train_horizon_us: None,
            mode: t.mode,
            experiment: t.experiment,
            grad_method: t.grad_method,
            dt_internal_ns: t.dt_internal_ns,
            seed: t.seed,
            adam: t.adam,
            lbfgs: t.lbfgs,
            init: t.init,
        }
    }
}

impl TrainingSection {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            mode: self.mode,
            experiment: self.experiment.clone(),
            adam: self.adam.clone(),
            lbfgs: self.lbfgs.clone(),
            grad_method: self.grad_method,
            dt_internal_ns: self.dt_internal_ns,
            seed: self.seed,
            init: InitOptions {
                seed: self.seed,
                ..self.init.clone()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    pub bins: usize,
    /// Pool all records instead of time-averaging per experiment first.
    pub pooled: bool,
    pub dt_internal_ns: f64,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            bins: 50,
            pooled: false,
            dt_internal_ns: 4.0,
        }
    }
}

/// Models compared by the `report` pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportSection {
    pub ansatze: Vec<AnsatzKind>,
    pub include_base: bool,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self {
            ansatze: vec![
                AnsatzKind::StructurePreserving,
                AnsatzKind::Affine,
                AnsatzKind::Nonlinear,
            ],
            include_base: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: PathBuf,
    /// Subset of `csv` and `json`.
    pub formats: Vec<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("qude-out"),
            formats: vec!["csv".into(), "json".into()],
        }
    }
}

impl OutputSection {
    pub fn csv(&self) -> bool {
        self.formats.iter().any(|f| f == "csv")
    }

    pub fn json(&self) -> bool {
        self.formats.iter().any(|f| f == "json")
    }
}

fn cfg_err(e: qude_core::Error) -> CliError {
    CliError::Config(e.to_string())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization, so overrides count.
    pub fn sha256(&self) -> String {
        format!("{:x}", Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(d) = &self.device {
            positive("device.omega01_GHz", d.omega01_ghz)?;
            if let Some(w) = d.omega_rot_ghz {
                positive("device.omega_rot_GHz", w)?;
            }
            positive("device.T1_us", d.t1_us)?;
            positive("device.T2_us", d.t2_us)?;
        }
        let e = &self.experiments;
        if e.n_experiments == 0 {
            return Err(CliError::Config(
                "experiments.n_experiments must be at least 1".into(),
            ));
        }
        positive("experiments.p_max_MHz", e.p_max_mhz)?;
        positive("experiments.duration_us", e.duration_us)?;
        positive("experiments.sample_dt_ns", e.sample_dt_ns)?;
        positive("experiments.dt_internal_ns", e.dt_internal_ns)?;
        let t = &self.training;
        if let Some(h) = t.train_horizon_us {
            positive("training.train_horizon_us", h)?;
        }
        positive("training.dt_internal_ns", t.dt_internal_ns)?;
        t.train_config().adam.validate().map_err(cfg_err)?;
        t.lbfgs.validate().map_err(cfg_err)?;
        if self.evaluation.bins == 0 {
            return Err(CliError::Config(
                "evaluation.bins must be at least 1".into(),
            ));
        }
        positive("evaluation.dt_internal_ns", self.evaluation.dt_internal_ns)?;
        if let Some(f) = self
            .output
            .formats
            .iter()
            .find(|f| *f != "csv" && *f != "json")
        {
            return Err(CliError::Config(format!(
                "output.formats: unknown format '{f}' (expected csv or json)"
            )));
        }
        if let Some(l) = &self.latent {
            l.to_model(2)?;
        }
        Ok(())
    }

    /// The device section, or an error naming the command that needs it.
    pub fn device(&self, what: &str) -> Result<DeviceModel> {
        match &self.device {
            Some(d) => d.to_device(),
            None => Err(CliError::Config(format!("{what} needs a [device] section"))),
        }
    }

    /// Applies the training base-model override.
    pub fn with_base(&self, dev: DeviceModel) -> DeviceModel {
        match self.training.base_model {
            Some(b) => dev.with_base(b),
            None => dev,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEV1: &str = r#"
[device]
omega01_GHz = 3.448
T1_us = 214.0
T2_us = 32.0
base_model = "lindblad"

[experiments]
n_experiments = 5
p_max_MHz = 3.47
shots = 5000
seed = 1

[latent]
ansatz = "sp"
alpha_kHz = [0.15, 2.18, 5.66]
gamma_inv_us = [1686.0, 1686.0, 688.0]

[training]
ansatz = "sp"
train_horizon_us = 10.0
mode = "exp-gen"

[training.adam]
epochs = 20
"#;

    #[test]
    fn parses_dev1_config() {
        let cfg = RunConfig::from_toml(DEV1).unwrap();
        let dev = cfg.device("test").unwrap();
        assert_eq!(dev, DeviceModel::dev1(BaseKind::Lindblad));
        assert_eq!(cfg.experiments.duration_us, 50.0);
        assert_eq!(cfg.training.adam.epochs, 20);
        assert_eq!(cfg.training.adam.learning_rate, 1e-3);
        assert!(matches!(
            cfg.latent.unwrap().to_model(2).unwrap(),
            Some(SourceModel::StructurePreserving(_))
        ));
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = RunConfig::from_toml(DEV1).unwrap();
        let again = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.sha256(), again.sha256());
        let mut other = cfg.clone();
        other.training.seed = 3;
        assert_ne!(cfg.sha256(), other.sha256());
    }

    #[test]
    fn unknown_field_reports_location() {
        let err = RunConfig::from_toml("[device]\nomega01_GHz = 3.4\nT1 = 2\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line"), "{msg}");
        assert!(msg.contains("T1"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn nonpositive_quantities_rejected() {
        let bad = DEV1.replace("T2_us = 32.0", "T2_us = -1.0");
        assert!(RunConfig::from_toml(&bad).is_err());
        let bad = DEV1.replace("p_max_MHz = 3.47", "p_max_MHz = 0.0");
        assert!(RunConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn latent_needs_parameters() {
        let bad = DEV1.replace("alpha_kHz = [0.15, 2.18, 5.66]\n", "");
        assert!(RunConfig::from_toml(&bad).is_err());
        let none = LatentSection::zero();
        assert!(none.to_model(2).unwrap().is_none());
    }

    #[test]
    fn empty_config_uses_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert!(cfg.device.is_none());
        assert_eq!(cfg.training.train_config(), TrainConfig::default());
        assert_eq!(cfg.evaluation.bins, 50);
    }
}
