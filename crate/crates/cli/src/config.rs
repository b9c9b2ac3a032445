//! Experiment configuration: one canonical JSON document with sorted keys.
//!
//! Fields are declared in alphabetical order so the serialized form is the
//! canonical sorted-key encoding, and unknown fields are rejected so a
//! typo'd config fails loudly instead of silently using a default.

use std::f64::consts::FRAC_PI_4;
use std::fmt;
use std::path::Path;

use qnn_core::dataset::{full_dataset, Dataset, LabelRule};
use qnn_core::qnn_train::{DeltaSeed, QnnTrainConfig, UpdateRule};
use qnn_core::qsim::{LabeledString, ReadoutAxis, MAX_DATA_WIRES};
use qnn_core::rng::{stream_rng, Stream};
use qnn_core::rqnn_train::{RqnnTrainConfig, DEFAULT_KAPPA};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Qnn,
    Rqnn,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Qnn => "qnn",
            Mode::Rqnn => "rqnn",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaInit {
    Zeros,
    /// Uniform draws from (-pi/4, pi/4) on the parameter-init RNG stream.
    /// The all-zero point is stationary for the reference ansatz, so
    /// gradient-based runs start here.
    #[default]
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateChoice {
    #[default]
    Multiplicative,
    /// Full-batch parameter-shift descent at rate `lambda`.
    Descent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnsatzSpec {
    /// Repetitions of the per-wire X + nearest-neighbor ZZ block.
    pub layers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub ansatz: AnsatzSpec,
    #[serde(default)]
    pub bias: f64,
    #[serde(default)]
    pub delta_seed: DeltaSeed,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    pub lambda: f64,
    pub mode: Mode,
    pub n: usize,
    #[serde(default)]
    pub observable: ReadoutAxis,
    pub rounds: usize,
    pub seed: u64,
    #[serde(default)]
    pub shots: u64,
    #[serde(default)]
    pub theta_init: ThetaInit,
    #[serde(default)]
    pub update_rule: UpdateChoice,
    #[serde(default)]
    pub x0_override: Option<f64>,
}

fn default_kappa() -> f64 {
    DEFAULT_KAPPA
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.n == 0 {
            return Err(CliError::Config("n must be at least 1".into()));
        }
        if self.n > MAX_DATA_WIRES {
            return Err(CliError::Config(format!(
                "n = {} exceeds the supported maximum of {MAX_DATA_WIRES} data wires",
                self.n
            )));
        }
        if self.rounds == 0 {
            return Err(CliError::Config("rounds must be >= 1".into()));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(CliError::Config(format!(
                "lambda must be positive and finite, got {}",
                self.lambda
            )));
        }
        if self.ansatz.layers == 0 {
            return Err(CliError::Config("ansatz.layers must be >= 1".into()));
        }
        if !self.kappa.is_finite() {
            return Err(CliError::Config(format!(
                "kappa must be finite, got {}",
                self.kappa
            )));
        }
        if !self.bias.is_finite() {
            return Err(CliError::Config(format!(
                "bias must be finite, got {}",
                self.bias
            )));
        }
        if let Some(x0) = self.x0_override {
            if !x0.is_finite() {
                return Err(CliError::Config(format!(
                    "x0_override must be finite, got {x0}"
                )));
            }
        }
        Ok(())
    }

    /// Canonical serialization: pretty JSON with the struct's alphabetical
    /// field order.
    pub fn canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// Gate parameters for the reference ansatz per the init policy.
    pub fn initial_thetas(&self, seed: u64) -> Vec<f64> {
        let len = qnn_core::qsim::reference_circuit_len(self.n, self.ansatz.layers);
        match self.theta_init {
            ThetaInit::Zeros => vec![0.0; len],
            ThetaInit::Random => {
                let mut rng = stream_rng(seed, Stream::ThetaInit);
                (0..len).map(|_| rng.gen_range(-FRAC_PI_4..FRAC_PI_4)).collect()
            }
        }
    }

    pub fn qnn_train_config(&self, seed: u64) -> QnnTrainConfig {
        QnnTrainConfig {
            rounds: self.rounds,
            observable: self.observable,
            shots: self.shots,
            seed,
            delta_seed: self.delta_seed,
            update_rule: match self.update_rule {
                UpdateChoice::Multiplicative => UpdateRule::Multiplicative,
                UpdateChoice::Descent => UpdateRule::Descent {
                    lambda: self.lambda,
                },
            },
            x0_override: self.x0_override,
            ..QnnTrainConfig::default()
        }
    }

    pub fn rqnn_train_config(&self, seed: u64) -> RqnnTrainConfig {
        RqnnTrainConfig {
            rounds: self.rounds,
            lambda: self.lambda,
            kappa: self.kappa,
            bias: self.bias,
            observable: self.observable,
            shots: self.shots,
            seed,
        }
    }
}

/// Loads a dataset file and re-validates every item through the library
/// constructors, or synthesizes the full parity dataset for the configured
/// width when no file is given.
pub fn resolve_dataset(n: usize, data: Option<&Path>) -> Result<Dataset, CliError> {
    match data {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                CliError::Config(format!("cannot read dataset {}: {e}", path.display()))
            })?;
            let raw: Dataset = serde_json::from_str(&text).map_err(|e| {
                CliError::Config(format!("invalid dataset {}: {e}", path.display()))
            })?;
            let items = raw
                .items
                .into_iter()
                .map(|it| LabeledString::new(it.z, it.label))
                .collect::<qnn_core::Result<Vec<_>>>()
                .map_err(|e| CliError::Config(format!("invalid dataset item: {e}")))?;
            let ds = Dataset::new(raw.n, items)
                .map_err(|e| CliError::Config(format!("invalid dataset: {e}")))?;
            if ds.n != n {
                return Err(CliError::Config(format!(
                    "dataset is for n = {}, config has n = {n}",
                    ds.n
                )));
            }
            Ok(ds)
        }
        None => full_dataset(n, LabelRule::Parity)
            .map_err(|e| CliError::Config(format!("cannot build default dataset: {e}"))),
    }
}
