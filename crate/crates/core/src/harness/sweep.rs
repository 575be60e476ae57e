use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, OptimizerSpec};
use super::emit::NamedRecord;
use super::run::run_experiment;
use super::HarnessError;

/// Cartesian grid of optimizers, learning-rate multipliers (baselines only)
/// and batch sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub optimizers: Vec<OptimizerSpec>,
    pub lr_scales: Vec<f64>,
    pub batch_sizes: Vec<usize>,
}

impl SweepGrid {
    pub fn configs(
        &self,
        base: &ExperimentConfig,
    ) -> Result<Vec<(String, ExperimentConfig)>, HarnessError> {
        if self.optimizers.is_empty() || self.lr_scales.is_empty() || self.batch_sizes.is_empty() {
            return Err(HarnessError::Config("sweep grid has an empty axis".into()));
        }
        let mut out = Vec::new();
        for opt in &self.optimizers {
            let scales: &[f64] = match opt {
                OptimizerSpec::Adasecant(_) => &[1.0],
                OptimizerSpec::Baseline { .. } => &self.lr_scales,
            };
            for &scale in scales {
                if !(scale.is_finite() && scale > 0.0) {
                    return Err(HarnessError::Config(format!(
                        "bad learning-rate scale {scale}"
                    )));
                }
                for &batch_size in &self.batch_sizes {
                    let optimizer = match opt {
                        OptimizerSpec::Baseline { algorithm, .. } => {
                            let mut hyper = opt.resolved_hyper(base.max_steps).expect("baseline");
                            hyper.lr *= scale;
                            OptimizerSpec::Baseline {
                                algorithm: *algorithm,
                                hyper: Some(hyper),
                            }
                        }
                        other => other.clone(),
                    };
                    let name = match opt {
                        OptimizerSpec::Adasecant(_) => format!("adasecant_b{batch_size}"),
                        OptimizerSpec::Baseline { algorithm, .. } => {
                            format!("{}_lrx{scale}_b{batch_size}", algorithm.name())
                        }
                    };
                    let cfg = ExperimentConfig {
                        optimizer,
                        batch_size,
                        ..base.clone()
                    };
                    cfg.validate()?;
                    out.push((name, cfg));
                }
            }
        }
        Ok(out)
    }
}

pub fn run_sweep(
    base: &ExperimentConfig,
    grid: &SweepGrid,
) -> Result<Vec<NamedRecord>, HarnessError> {
    grid.configs(base)?
        .into_par_iter()
        .map(|(name, cfg)| {
            let record = run_experiment(&cfg)?;
            Ok(NamedRecord {
                name,
                config: Some(cfg),
                record,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::BaselineKind;

    #[test]
    fn grid_expands_baselines_only_over_scales() {
        let grid = SweepGrid {
            optimizers: vec![
                OptimizerSpec::default(),
                OptimizerSpec::baseline(BaselineKind::Adam),
            ],
            lr_scales: vec![0.5, 2.0],
            batch_sizes: vec![8, 16],
        };
        let cfgs = grid.configs(&ExperimentConfig::default()).unwrap();
        assert_eq!(cfgs.len(), 2 + 4);
        assert_eq!(cfgs[2].0, "adam_lrx0.5_b8");
        match &cfgs[2].1.optimizer {
            OptimizerSpec::Baseline { hyper: Some(h), .. } => assert_eq!(h.lr, 0.0005),
            other => panic!("{other:?}"),
        }
    }
}
