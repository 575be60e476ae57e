use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, OptimizerSpec};
use super::run::{run_experiment, Row, RunRecord, TerminalStatus};
use super::HarnessError;
use crate::optimizer::AdaSecantConfig;

/// Which AdaSecant components are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Toggles {
    pub vr: bool,
    pub ag: bool,
    pub bn: bool,
    pub od: bool,
}

impl Toggles {
    pub const ALL_ON: Toggles = Toggles {
        vr: true,
        ag: true,
        bn: true,
        od: true,
    };

    pub fn of(cfg: &AdaSecantConfig) -> Self {
        Self {
            vr: cfg.use_vr,
            ag: cfg.use_ag,
            bn: cfg.use_bn,
            od: cfg.use_od,
        }
    }

    pub fn apply(self, cfg: &AdaSecantConfig) -> AdaSecantConfig {
        AdaSecantConfig {
            use_vr: self.vr,
            use_ag: self.ag,
            use_bn: self.bn,
            use_od: self.od,
            ..cfg.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    pub configs: Vec<Toggles>,
}

impl AblationGrid {
    /// All 16 subsets, all-on first.
    pub fn full() -> Self {
        let configs = (0..16u8)
            .map(|m| Toggles {
                vr: m & 1 == 0,
                ag: m & 2 == 0,
                bn: m & 4 == 0,
                od: m & 8 == 0,
            })
            .collect();
        Self { configs }
    }

    pub fn single(t: Toggles) -> Self {
        Self { configs: vec![t] }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let mut seen = std::collections::HashSet::new();
        if self.configs.is_empty() || self.configs.len() > 16 {
            return Err(HarnessError::Config(
                "ablation grid needs 1 to 16 configurations".into(),
            ));
        }
        if !self.configs.iter().all(|t| seen.insert(*t)) {
            return Err(HarnessError::Config(
                "ablation grid repeats a configuration".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub label: String,
    pub toggles: Toggles,
    pub config: ExperimentConfig,
    pub record: RunRecord,
}

/// Early-stopping point of a run: the recorded row with the lowest holdout
/// loss, or the lowest train loss when the problem has no holdout split.
/// Ties go to the earliest step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub step: u64,
    pub holdout_loss: Option<f64>,
    pub train_loss: f64,
}

pub fn early_stopping(rows: &[Row]) -> Option<EarlyStop> {
    let score = |r: &Row| r.holdout_loss.unwrap_or(r.train_loss);
    rows.iter()
        .filter(|r| score(r).is_finite() && r.train_loss.is_finite())
        .fold(None::<&Row>, |best, r| match best {
            Some(b) if score(b) <= score(r) => Some(b),
            _ => Some(r),
        })
        .map(|r| EarlyStop {
            step: r.step,
            holdout_loss: r.holdout_loss,
            train_loss: r.train_loss,
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSummaryRow {
    pub label: String,
    pub toggles: Toggles,
    pub status: TerminalStatus,
    pub best: Option<EarlyStop>,
}

pub fn summarize(runs: &[AblationRun]) -> Vec<AblationSummaryRow> {
    runs.iter()
        .map(|r| AblationSummaryRow {
            label: r.label.clone(),
            toggles: r.toggles,
            status: r.record.terminal_status,
            best: early_stopping(&r.record.rows),
        })
        .collect()
}

/// One run per toggle configuration, in parallel. Diverged runs are kept in
/// the results.
pub fn run_ablation(
    base: &ExperimentConfig,
    grid: &AblationGrid,
) -> Result<Vec<AblationRun>, HarnessError> {
    let OptimizerSpec::Adasecant(ada) = &base.optimizer else {
        return Err(HarnessError::Config(
            "ablation needs the adasecant optimizer".into(),
        ));
    };
    grid.validate()?;
    let configs: Vec<(Toggles, ExperimentConfig)> = grid
        .configs
        .iter()
        .map(|t| {
            let cfg = ExperimentConfig {
                optimizer: OptimizerSpec::Adasecant(t.apply(ada)),
                ..base.clone()
            };
            (*t, cfg)
        })
        .collect();
    configs
        .into_par_iter()
        .map(|(toggles, config)| {
            let record = run_experiment(&config)?;
            Ok(AblationRun {
                label: config.optimizer.label(),
                toggles,
                config,
                record,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(step: u64, train: f64, holdout: Option<f64>) -> Row {
        Row {
            step,
            train_loss: train,
            holdout_loss: holdout,
            mean_rate: 0.0,
            mean_gamma: 0.0,
            outlier_count: 0,
            mean_tau: 0.0,
            update_norm: 0.0,
            wall_ms: 0.0,
        }
    }

    #[test]
    fn full_grid_is_the_lattice() {
        let g = AblationGrid::full();
        assert_eq!(g.configs.len(), 16);
        assert_eq!(g.configs[0], Toggles::ALL_ON);
        g.validate().unwrap();
        let dup = AblationGrid {
            configs: vec![Toggles::ALL_ON, Toggles::ALL_ON],
        };
        assert!(dup.validate().is_err());
    }

    #[test]
    fn early_stopping_picks_min_holdout() {
        let rows = [
            row(0, 1.0, Some(1.0)),
            row(10, 0.5, Some(0.4)),
            row(20, 0.2, Some(0.6)),
            row(30, f64::NAN, Some(f64::NAN)),
        ];
        let best = early_stopping(&rows).unwrap();
        assert_eq!((best.step, best.train_loss), (10, 0.5));
        assert_eq!(early_stopping(&[]), None);
        let rows = [row(0, 1.0, None), row(10, 0.3, None)];
        assert_eq!(early_stopping(&rows).unwrap().step, 10);
    }

    #[test]
    fn single_all_on_matches_run_experiment() {
        let base = ExperimentConfig {
            max_steps: 50,
            ..Default::default()
        };
        let runs = run_ablation(&base, &AblationGrid::single(Toggles::ALL_ON)).unwrap();
        assert_eq!(runs.len(), 1);
        assert_eq!(runs[0].record, run_experiment(&base).unwrap());
    }
}
