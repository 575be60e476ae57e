use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::baselines::{BaselineHyper, BaselineKind, BaselineState};
use crate::optimizer::AdaSecantConfig;
use crate::problems::ProblemSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerSpec {
    Adasecant(AdaSecantConfig),
    Baseline {
        algorithm: BaselineKind,
        /// Defaults for the algorithm when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hyper: Option<BaselineHyper>,
    },
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        OptimizerSpec::Adasecant(AdaSecantConfig::default())
    }
}

impl OptimizerSpec {
    pub fn baseline(algorithm: BaselineKind) -> Self {
        OptimizerSpec::Baseline {
            algorithm,
            hyper: None,
        }
    }

    /// `adasecant` or a baseline name.
    pub fn by_name(name: &str) -> Option<Self> {
        if name == "adasecant" {
            return Some(Self::default());
        }
        name.parse().ok().map(Self::baseline)
    }

    pub fn label(&self) -> String {
        match self {
            OptimizerSpec::Adasecant(c) => c.label(),
            OptimizerSpec::Baseline { algorithm, .. } => algorithm.name().to_string(),
        }
    }

    pub fn resolved_hyper(&self, max_steps: u64) -> Option<BaselineHyper> {
        match self {
            OptimizerSpec::Adasecant(_) => None,
            OptimizerSpec::Baseline { algorithm, hyper } => Some(
                hyper
                    .clone()
                    .unwrap_or_else(|| BaselineHyper::defaults(*algorithm, max_steps)),
            ),
        }
    }
}

fn default_batch_size() -> usize {
    32
}
fn default_max_steps() -> u64 {
    1000
}
fn default_record_every() -> u64 {
    10
}
fn default_divergence_loss() -> f64 {
    1e6
}

/// One experiment: a problem, an optimizer, and the run protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub problem: ProblemSpec,
    #[serde(default)]
    pub optimizer: OptimizerSpec,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_record_every")]
    pub record_every: u64,
    #[serde(default = "default_divergence_loss")]
    pub divergence_loss: f64,
    /// Fill the `wall_ms` column. Off by default so that curves are reproducible.
    #[serde(default)]
    pub record_wall_clock: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: ProblemSpec::default(),
            optimizer: OptimizerSpec::default(),
            batch_size: default_batch_size(),
            max_steps: default_max_steps(),
            seed: 0,
            record_every: default_record_every(),
            divergence_loss: default_divergence_loss(),
            record_wall_clock: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        if self.record_every == 0 {
            return bad("record_every must be positive");
        }
        if self.divergence_loss.is_nan() {
            return bad("divergence_loss must not be NaN");
        }
        match &self.optimizer {
            OptimizerSpec::Adasecant(c) => c
                .validate()
                .map_err(|e| HarnessError::Config(e.to_string()))?,
            spec @ OptimizerSpec::Baseline { algorithm, .. } => {
                let hyper = spec.resolved_hyper(self.max_steps).expect("baseline");
                BaselineState::new(*algorithm, 1, hyper)
                    .map_err(|e| HarnessError::Config(e.to_string()))?;
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_defaults() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            seed = 4
            max_steps = 50
            [problem]
            kind = "logreg"
            n_samples = 100
            [optimizer]
            kind = "adasecant"
            use_vr = false
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.batch_size, 32);
        match &cfg.optimizer {
            OptimizerSpec::Adasecant(c) => assert!(!c.use_vr && c.use_ag),
            other => panic!("{other:?}"),
        }
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.digest(), cfg.digest());
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
        assert!(
            ExperimentConfig::from_toml("[optimizer]\nkind = \"adasecant\"\nbogus = 1").is_err()
        );
        let cfg = ExperimentConfig {
            record_every: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig {
            optimizer: OptimizerSpec::Baseline {
                algorithm: BaselineKind::Adam,
                hyper: Some(BaselineHyper {
                    lr: -1.0,
                    ..BaselineHyper::defaults(BaselineKind::Adam, 10)
                }),
            },
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn digest_changes_with_config() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            seed: 1,
            ..a.clone()
        };
        assert_eq!(a.digest().len(), 64);
        assert_ne!(a.digest(), b.digest());
    }
}
