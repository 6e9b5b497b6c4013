//! Trainable source terms and their interpretability readouts.

mod network;
mod structure;

pub use network::{net_forward, Activation, Layer, NetworkSource};
pub use structure::{
    effective_times, effective_times_from_rates, khz_to_rad_per_us, rad_per_us_to_khz, sp_channel,
    sp_dissipator, sp_hermitian, EffectiveTimes, GammaMode, StructurePreservingSource,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub enum SourceModel {
    StructurePreserving(StructurePreservingSource),
    Network(NetworkSource),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnsatzKind {
    #[serde(rename = "sp")]
    StructurePreserving,
    Affine,
    Nonlinear,
}

impl AnsatzKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AnsatzKind::StructurePreserving => "sp",
            AnsatzKind::Affine => "affine",
            AnsatzKind::Nonlinear => "nonlinear",
        }
    }
}

impl std::str::FromStr for AnsatzKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sp" | "structure-preserving" => Ok(AnsatzKind::StructurePreserving),
            "affine" => Ok(AnsatzKind::Affine),
            "nonlinear" => Ok(AnsatzKind::Nonlinear),
            other => Err(Error::InvalidArgument(format!(
                "unknown ansatz '{other}' (expected sp, affine or nonlinear)"
            ))),
        }
    }
}

/// Architecture of a source model: everything needed to turn a flat
/// parameter vector back into a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnsatzSpec {
    pub kind: AnsatzKind,
    pub dim: usize,
    #[serde(default)]
    pub gamma_mode: GammaMode,
    /// Hidden layer widths for network ansätze.
    #[serde(default)]
    pub hidden: Vec<usize>,
}

impl AnsatzSpec {
    pub fn sp(dim: usize) -> Self {
        Self {
            kind: AnsatzKind::StructurePreserving,
            dim,
            gamma_mode: GammaMode::Squared,
            hidden: Vec::new(),
        }
    }

    /// Single affine layer.
    pub fn affine(dim: usize) -> Self {
        Self {
            kind: AnsatzKind::Affine,
            dim,
            gamma_mode: GammaMode::Squared,
            hidden: Vec::new(),
        }
    }

    /// Two tanh hidden layers of width N² and an identity output layer.
    pub fn nonlinear(dim: usize) -> Self {
        Self {
            kind: AnsatzKind::Nonlinear,
            dim,
            gamma_mode: GammaMode::Squared,
            hidden: vec![dim * dim, dim * dim],
        }
    }

    pub fn default_for(kind: AnsatzKind, dim: usize) -> Self {
        match kind {
            AnsatzKind::StructurePreserving => Self::sp(dim),
            AnsatzKind::Affine => Self::affine(dim),
            AnsatzKind::Nonlinear => Self::nonlinear(dim),
        }
    }

    fn activation(&self) -> Activation {
        match self.kind {
            AnsatzKind::Nonlinear => Activation::Tanh,
            _ => Activation::Identity,
        }
    }

    pub fn param_len(&self) -> usize {
        let n2 = self.dim * self.dim;
        match self.kind {
            AnsatzKind::StructurePreserving => 2 * (n2 - 1),
            _ => {
                let mut widths = vec![n2];
                widths.extend_from_slice(&self.hidden);
                widths.push(n2);
                widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
            }
        }
    }

    /// Number of layers of a network ansatz (zero for sp).
    pub fn layer_count(&self) -> usize {
        match self.kind {
            AnsatzKind::StructurePreserving => 0,
            _ => self.hidden.len() + 1,
        }
    }

    pub fn unpack(&self, theta: &[f64]) -> Result<SourceModel> {
        if theta.len() != self.param_len() {
            return Err(Error::InvalidArgument(format!(
                "{} ansatz expects {} parameters, got {}",
                self.kind.as_str(),
                self.param_len(),
                theta.len()
            )));
        }
        match self.kind {
            AnsatzKind::StructurePreserving => {
                let k = theta.len() / 2;
                Ok(SourceModel::StructurePreserving(
                    StructurePreservingSource::from_raw(
                        self.dim,
                        theta[..k].to_vec(),
                        theta[k..].to_vec(),
                        self.gamma_mode,
                    )?,
                ))
            }
            _ => {
                let mut net = NetworkSource::zeros(self.dim, self.activation(), &self.hidden)?;
                net.set_params(theta)?;
                Ok(SourceModel::Network(net))
            }
        }
    }

    /// Starting point for training.
    pub fn initial_params(&self, init: &InitOptions) -> Result<Vec<f64>> {
        match self.kind {
            AnsatzKind::StructurePreserving => {
                let k = self.dim * self.dim - 1;
                let raw = match self.gamma_mode {
                    GammaMode::Squared => init.gamma_rate.max(0.0).sqrt(),
                    GammaMode::Signed => init.gamma_rate,
                };
                let mut theta = vec![0.0; 2 * k];
                theta[k..].iter_mut().for_each(|v| *v = raw);
                Ok(theta)
            }
            _ => {
                let mut rng = ChaCha8Rng::seed_from_u64(init.seed);
                let net = NetworkSource::init_random(
                    self.dim,
                    self.activation(),
                    &self.hidden,
                    init.output_scale,
                    &mut rng,
                )?;
                Ok(net.pack())
            }
        }
    }
}

/// Initialization of trainable parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitOptions {
    /// Starting dissipative rate for every structure-preserving channel, 1/μs.
    /// Must be nonzero in squared mode: θ = 0 is a stationary point of γ = θ².
    pub gamma_rate: f64,
    /// Scale applied to the output layer of a freshly initialized network.
    pub output_scale: f64,
    pub seed: u64,
}

impl Default for InitOptions {
    fn default() -> Self {
        Self {
            gamma_rate: 1e-3,
            output_scale: 0.01,
            seed: 0,
        }
    }
}

impl SourceModel {
    pub fn dim(&self) -> usize {
        match self {
            SourceModel::StructurePreserving(s) => s.dim(),
            SourceModel::Network(n) => n.dim(),
        }
    }

    pub fn spec(&self) -> AnsatzSpec {
        match self {
            SourceModel::StructurePreserving(s) => AnsatzSpec {
                kind: AnsatzKind::StructurePreserving,
                dim: s.dim(),
                gamma_mode: s.gamma_mode(),
                hidden: Vec::new(),
            },
            SourceModel::Network(n) => AnsatzSpec {
                kind: match n.activation() {
                    Activation::Tanh => AnsatzKind::Nonlinear,
                    Activation::Identity => AnsatzKind::Affine,
                },
                dim: n.dim(),
                gamma_mode: GammaMode::Squared,
                hidden: n.hidden_widths(),
            },
        }
    }

    pub fn pack(&self) -> Vec<f64> {
        pack_params(self)
    }
}

/// Flat parameter vector θ in a fixed order.
pub fn pack_params(src: &SourceModel) -> Vec<f64> {
    match src {
        SourceModel::StructurePreserving(s) => s.pack(),
        SourceModel::Network(n) => n.pack(),
    }
}

pub fn unpack_params(spec: &AnsatzSpec, theta: &[f64]) -> Result<SourceModel> {
    spec.unpack(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parameter_counts() {
        assert_eq!(AnsatzSpec::sp(2).param_len(), 6);
        assert_eq!(AnsatzSpec::affine(2).param_len(), 20);
        assert_eq!(AnsatzSpec::nonlinear(2).param_len(), 60);
        assert_eq!(AnsatzSpec::nonlinear(2).layer_count(), 3);
        assert_eq!(AnsatzSpec::sp(3).param_len(), 16);
    }

    #[test]
    fn wrong_length_rejected() {
        assert!(matches!(
            unpack_params(&AnsatzSpec::sp(2), &[0.0; 5]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn sp_initial_point_has_nonzero_rates() {
        let theta = AnsatzSpec::sp(2)
            .initial_params(&InitOptions::default())
            .unwrap();
        assert_eq!(&theta[..3], &[0.0; 3]);
        assert!(theta[3..].iter().all(|v| *v > 0.0));
    }

    #[test]
    fn spec_is_recovered_from_model() {
        for spec in [
            AnsatzSpec::sp(2),
            AnsatzSpec::affine(2),
            AnsatzSpec::nonlinear(2),
        ] {
            let theta = spec.initial_params(&InitOptions::default()).unwrap();
            assert_eq!(spec.unpack(&theta).unwrap().spec(), spec);
        }
    }

    proptest! {
        #[test]
        fn pack_unpack_round_trip(
            kind in prop_oneof![
                Just(AnsatzKind::StructurePreserving),
                Just(AnsatzKind::Affine),
                Just(AnsatzKind::Nonlinear)
            ],
            seed in any::<u64>(),
        ) {
            use rand::Rng;
            let spec = AnsatzSpec::default_for(kind, 2);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let theta: Vec<f64> = (0..spec.param_len()).map(|_| rng.random_range(-3.0..3.0)).collect();
            let model = unpack_params(&spec, &theta).unwrap();
            prop_assert_eq!(pack_params(&model), theta);
        }
    }
}
