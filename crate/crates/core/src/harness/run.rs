use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, OptimizerSpec};
use super::HarnessError;
use crate::baselines::{BaselineError, BaselineState};
use crate::optimizer::{AdaSecantState, StepDiagnostics, StepError};
use crate::problems::{Batch, BatchStream, Problem};

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalStatus {
    Completed,
    Diverged,
    Error,
}

impl TerminalStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminalStatus::Completed => "completed",
            TerminalStatus::Diverged => "diverged",
            TerminalStatus::Error => "error",
        }
    }
}

/// One recorded point of a learning curve. Diagnostics describe the update
/// that produced the parameters at `step` and are zero at step 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub step: u64,
    pub train_loss: f64,
    pub holdout_loss: Option<f64>,
    pub mean_rate: f64,
    pub mean_gamma: f64,
    pub outlier_count: usize,
    pub mean_tau: f64,
    pub update_norm: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_digest: String,
    pub rows: Vec<Row>,
    pub terminal_status: TerminalStatus,
    /// Why the run stopped early, if it did.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum OptimizerState {
    Adasecant(AdaSecantState),
    Baseline(BaselineState),
}

impl OptimizerState {
    fn dimension(&self) -> usize {
        match self {
            OptimizerState::Adasecant(s) => s.dimension(),
            OptimizerState::Baseline(s) => s.dimension(),
        }
    }
}

enum Failure {
    Diverged(String, Option<StepDiagnostics>),
    Error(String),
}

/// Versioned on-disk state of a run in progress.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub step: u64,
    pub theta: Vec<f64>,
    pub optimizer: OptimizerState,
    pub rows: Vec<Row>,
    pub status: Option<TerminalStatus>,
    pub message: Option<String>,
    pub elapsed_ms: f64,
}

/// A resumable run. Minibatch `k` is a pure function of `(seed, k)`, so the
/// checkpoint only needs parameters, optimizer state and recorded rows.
pub struct Run {
    config: ExperimentConfig,
    digest: String,
    problem: Box<dyn Problem>,
    stream: BatchStream,
    holdout: Option<Batch>,
    theta: Vec<f64>,
    optimizer: OptimizerState,
    step: u64,
    rows: Vec<Row>,
    status: Option<TerminalStatus>,
    message: Option<String>,
    elapsed_ms: f64,
}

impl Run {
    pub fn new(config: ExperimentConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        let problem = config.problem.build()?;
        let d = problem.dimension();
        let optimizer = match &config.optimizer {
            OptimizerSpec::Adasecant(_) => OptimizerState::Adasecant(AdaSecantState::new(d)),
            spec @ OptimizerSpec::Baseline { algorithm, .. } => {
                let hyper = spec.resolved_hyper(config.max_steps).expect("baseline");
                OptimizerState::Baseline(
                    BaselineState::new(*algorithm, d, hyper)
                        .map_err(|e| HarnessError::Config(e.to_string()))?,
                )
            }
        };
        let theta = problem.initial_point(config.seed);
        Self::assemble(
            config,
            problem,
            theta,
            optimizer,
            0,
            Vec::new(),
            None,
            None,
            0.0,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        config: ExperimentConfig,
        problem: Box<dyn Problem>,
        theta: Vec<f64>,
        optimizer: OptimizerState,
        step: u64,
        rows: Vec<Row>,
        status: Option<TerminalStatus>,
        message: Option<String>,
        elapsed_ms: f64,
    ) -> Result<Self, HarnessError> {
        let stream = BatchStream::for_problem(problem.as_ref(), config.seed, config.batch_size)?;
        let holdout = problem.holdout_batch();
        Ok(Self {
            digest: config.digest(),
            config,
            problem,
            stream,
            holdout,
            theta,
            optimizer,
            step,
            rows,
            status,
            message,
            elapsed_ms,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn optimizer(&self) -> &OptimizerState {
        &self.optimizer
    }

    pub fn problem(&self) -> &dyn Problem {
        self.problem.as_ref()
    }

    pub fn status(&self) -> Option<TerminalStatus> {
        self.status
    }

    pub fn is_finished(&self) -> bool {
        self.status.is_some()
    }

    /// Advances by up to `n` optimizer steps, stopping at the end of the run.
    pub fn advance(&mut self, n: u64) {
        let t0 = Instant::now();
        if self.rows.is_empty() && self.status.is_none() {
            self.record(StepDiagnostics::default(), 0.0);
        }
        let target = self.step.saturating_add(n).min(self.config.max_steps);
        while self.status.is_none() && self.step < target {
            match self.one_step() {
                Ok(diag) => {
                    if self.step.is_multiple_of(self.config.record_every) {
                        self.record(diag, t0.elapsed().as_secs_f64() * 1e3);
                    }
                }
                Err(Failure::Diverged(msg, diag)) => {
                    self.record_failure(diag, t0.elapsed().as_secs_f64() * 1e3);
                    self.status = Some(TerminalStatus::Diverged);
                    self.message = Some(msg);
                }
                Err(Failure::Error(msg)) => {
                    self.status = Some(TerminalStatus::Error);
                    self.message = Some(msg);
                }
            }
        }
        if self.status.is_none() && self.step >= self.config.max_steps {
            self.status = Some(TerminalStatus::Completed);
        }
        self.elapsed_ms += t0.elapsed().as_secs_f64() * 1e3;
    }

    pub fn run_to_end(&mut self) {
        self.advance(u64::MAX);
    }

    pub fn record_so_far(&self) -> RunRecord {
        RunRecord {
            config_digest: self.digest.clone(),
            rows: self.rows.clone(),
            terminal_status: self.status.unwrap_or(TerminalStatus::Error),
            message: self.message.clone(),
        }
    }

    pub fn finish(mut self) -> RunRecord {
        self.run_to_end();
        self.record_so_far()
    }

    fn one_step(&mut self) -> Result<StepDiagnostics, Failure> {
        let batch = self.stream.batch(self.step);
        let g = self.problem.grad(&self.theta, &batch);
        let (update, diag) = match &mut self.optimizer {
            OptimizerState::Adasecant(state) => {
                let OptimizerSpec::Adasecant(cfg) = &self.config.optimizer else {
                    return Err(Failure::Error(
                        "optimizer state does not match config".into(),
                    ));
                };
                match state.step(&g, self.problem.layout(), cfg) {
                    Ok(out) => out,
                    Err(StepError::NonFinite {
                        step,
                        index,
                        value,
                        diagnostics,
                    }) => {
                        return Err(Failure::Diverged(
                            format!(
                                "non-finite value {value} at coordinate {index} on step {step}"
                            ),
                            Some(diagnostics),
                        ))
                    }
                    Err(e) => return Err(Failure::Error(e.to_string())),
                }
            }
            OptimizerState::Baseline(state) => match state.step(&g) {
                Ok(u) => {
                    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let diag = StepDiagnostics {
                        update_norm: norm,
                        ..StepDiagnostics::default()
                    };
                    (u, diag)
                }
                Err(e @ BaselineError::NonFinite { .. }) => {
                    return Err(Failure::Diverged(e.to_string(), None))
                }
                Err(e) => return Err(Failure::Error(e.to_string())),
            },
        };
        for (t, u) in self.theta.iter_mut().zip(&update) {
            *t += u;
        }
        self.step += 1;
        if let Some(i) = self.theta.iter().position(|t| !t.is_finite()) {
            return Err(Failure::Diverged(
                format!("parameter {i} became non-finite"),
                Some(diag),
            ));
        }
        Ok(diag)
    }

    fn losses(&self) -> (f64, Option<f64>) {
        let train = self.problem.loss(&self.theta, &self.problem.full_batch());
        let holdout = self
            .holdout
            .as_ref()
            .map(|b| self.problem.loss(&self.theta, b));
        (train, holdout)
    }

    fn row(&self, diag: StepDiagnostics, wall_ms: f64) -> Row {
        let (train_loss, holdout_loss) = self.losses();
        Row {
            step: self.step,
            train_loss,
            holdout_loss,
            mean_rate: diag.mean_rate,
            mean_gamma: diag.mean_gamma,
            outlier_count: diag.outlier_count,
            mean_tau: diag.mean_tau,
            update_norm: diag.update_norm,
            wall_ms: if self.config.record_wall_clock {
                self.elapsed_ms + wall_ms
            } else {
                0.0
            },
        }
    }

    fn record(&mut self, diag: StepDiagnostics, wall_ms: f64) {
        let row = self.row(diag, wall_ms);
        let values = [row.train_loss, row.holdout_loss.unwrap_or(0.0)];
        let blown = values
            .iter()
            .any(|v| !v.is_finite() || *v > self.config.divergence_loss);
        self.rows.push(row);
        if blown {
            self.status = Some(TerminalStatus::Diverged);
            self.message = Some(format!(
                "loss {} exceeds divergence threshold {}",
                row.train_loss, self.config.divergence_loss
            ));
        }
    }

    /// Final row of a diverged run; the step that failed may not be a recording step.
    fn record_failure(&mut self, diag: Option<StepDiagnostics>, wall_ms: f64) {
        let diag = diag.unwrap_or(StepDiagnostics {
            mean_rate: f64::NAN,
            mean_gamma: f64::NAN,
            outlier_count: 0,
            mean_tau: f64::NAN,
            update_norm: f64::NAN,
        });
        let mut row = self.row(diag, wall_ms);
        // a failing gradient leaves the step counter on the last good parameters
        if self.rows.last().is_some_and(|r| r.step >= row.step) {
            row.step = self.rows.last().expect("nonempty").step + 1;
        }
        self.rows.push(row);
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            config: self.config.clone(),
            step: self.step,
            theta: self.theta.clone(),
            optimizer: self.optimizer.clone(),
            rows: self.rows.clone(),
            status: self.status,
            message: self.message.clone(),
            elapsed_ms: self.elapsed_ms,
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self, HarnessError> {
        if ckpt.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(HarnessError::Schema {
                found: ckpt.schema_version,
                expected: CHECKPOINT_SCHEMA_VERSION,
            });
        }
        ckpt.config.validate()?;
        let problem = ckpt.config.problem.build()?;
        let d = problem.dimension();
        let consistent = match &ckpt.optimizer {
            OptimizerState::Adasecant(s) => {
                s.is_consistent() && matches!(ckpt.config.optimizer, OptimizerSpec::Adasecant(_))
            }
            OptimizerState::Baseline(s) => matches!(
                &ckpt.config.optimizer,
                OptimizerSpec::Baseline { algorithm, .. } if *algorithm == s.kind
            ),
        };
        if !consistent || ckpt.optimizer.dimension() != d || ckpt.theta.len() != d {
            return Err(HarnessError::Checkpoint(
                "optimizer state does not match the configured problem".into(),
            ));
        }
        Self::assemble(
            ckpt.config,
            problem,
            ckpt.theta,
            ckpt.optimizer,
            ckpt.step,
            ckpt.rows,
            ckpt.status,
            ckpt.message,
            ckpt.elapsed_ms,
        )
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<(), HarnessError> {
        let json = serde_json::to_string_pretty(&self.checkpoint())?;
        std::fs::write(path, json).map_err(|e| HarnessError::io(path, e))
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        // check the version before the body so that old files get a clear error
        #[derive(Deserialize)]
        struct Header {
            schema_version: u32,
        }
        let header: Header = serde_json::from_str(&text)?;
        if header.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(HarnessError::Schema {
                found: header.schema_version,
                expected: CHECKPOINT_SCHEMA_VERSION,
            });
        }
        Self::from_checkpoint(serde_json::from_str(&text)?)
    }
}

/// Runs one experiment to completion. Divergence is reported in the record,
/// only an invalid config is an error.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunRecord, HarnessError> {
    Ok(Run::new(cfg.clone())?.finish())
}
