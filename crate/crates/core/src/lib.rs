//! AdaSecant: per-coordinate adaptive learning rates from directional secant
//! curvature estimates, with variance-reduced gradients, adaptive-memory
//! statistics, outlier resets, block normalization and Adagrad damping.
//!
//! The crate also ships the reference optimizers, analytic test problems with
//! finite-difference oracles, and an experiment harness (runs, ablation grids,
//! CSV curves, checkpoint/resume).

pub mod baselines;
pub mod harness;
pub mod layout;
pub mod optimizer;
pub mod problems;
pub mod rng;
pub mod stats;

pub use baselines::{BaselineError, BaselineHyper, BaselineKind, BaselineState};
pub use layout::{BlockLayout, LayoutError};
pub use optimizer::{
    adagrad_scale, block_normalize, secant_rate_direct, variance_reduce, AdaSecantConfig,
    AdaSecantState, ConfigError, GammaForm, StepDiagnostics, StepError, StepFormula,
};
pub use problems::{
    fd_diag_hessian, fd_gradient, Batch, BatchStream, Problem, ProblemError, ProblemSpec,
};
pub use stats::{MovingStat, StatBank, StatsError, TAU_RESET};
