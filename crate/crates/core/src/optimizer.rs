//! The AdaSecant stepper.
//!
//! Per-coordinate learning rates come from a directional secant: the ratio of
//! the parameter change `Δ` to the gradient change `α` it produced, averaged
//! over minibatches with an adaptive memory. On top of that sit four separable
//! components, each behind a toggle in [`AdaSecantConfig`]:
//!
//! * **VR**, variance reduction: the gradient is pulled towards its moving
//!   mean, `(g + γ·E[g]) / (1 + γ)`, with a per-coordinate `γ` estimated from
//!   consecutive minibatch gradients.
//! * **BN**, block normalization: each block of the gradient is divided by the
//!   norm of that block's moving-mean gradient.
//! * **OD**, outlier detection: a gradient or curvature sample more than
//!   `outlier_k` standard deviations from its moving mean resets the memory of
//!   that coordinate to `tau_reset`.
//! * **AG**, thresholded Adagrad: the step is divided by
//!   `max(1, sqrt(Σ g̃²))`, so the rate can only shrink.
//!
//! Curvature statistics (`α`, `Δ`, `αΔ`) are kept in raw gradient units so the
//! secant ratio does not drift when block normalizers change between steps.
//! The rate applied to the normalized gradient is the raw rate times the block
//! normalizer, so `η·g̃` is the same step either way. `Δ` is the undamped
//! proposal `-η·g̃`; the Adagrad divisor is applied after it and does not feed
//! back into the rate estimate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::BlockLayout;
use crate::stats::{MovingStat, StatBank, StatsError, TAU_RESET};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StepFormula {
    /// `sqrt(E[Δ²])/sqrt(E[α²]) - E[αΔ]/E[α²]`
    #[default]
    Simple,
    /// `sqrt(E[Δ²])/sqrt(E[α²]) - (E[αΔ] - E[α]E[Δ])/E[α²]`
    Taylor,
}

/// How `γ` is read off the moving statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GammaForm {
    /// Ratio of root-mean-square products; always nonnegative.
    #[default]
    Rms,
    /// `β = cov(g, g') / (Var(g) + λ)`, `γ = (1 - β) / β`.
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaSecantConfig {
    pub use_vr: bool,
    pub use_ag: bool,
    pub use_bn: bool,
    pub use_od: bool,
    pub lambda: f64,
    pub gamma_clip: f64,
    pub gamma_form: GammaForm,
    pub outlier_k: f64,
    pub tau_reset: f64,
    pub eps: f64,
    /// Gradient changes `|α|` at or below this carry no usable curvature and
    /// leave the secant statistics and memory untouched. A coordinate's first
    /// sample only has to clear `eps`.
    pub alpha_floor: f64,
    pub step_formula: StepFormula,
    pub warmup_steps: u64,
    pub warmup_rate: f64,
    pub rate_min: f64,
    pub rate_max: f64,
}

impl Default for AdaSecantConfig {
    fn default() -> Self {
        Self {
            use_vr: true,
            use_ag: true,
            use_bn: true,
            use_od: true,
            lambda: 1e-5,
            gamma_clip: 1.8,
            gamma_form: GammaForm::Rms,
            outlier_k: 2.0,
            tau_reset: TAU_RESET,
            eps: 1e-7,
            alpha_floor: 1e-5,
            step_formula: StepFormula::Simple,
            warmup_steps: 10,
            warmup_rate: 1e-4,
            rate_min: 1e-8,
            rate_max: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid AdaSecant config: {0}")]
pub struct ConfigError(pub String);

impl AdaSecantConfig {
    /// All four components disabled.
    pub fn plain() -> Self {
        Self {
            use_vr: false,
            use_ag: false,
            use_bn: false,
            use_od: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let reals = [
            ("lambda", self.lambda),
            ("gamma_clip", self.gamma_clip),
            ("outlier_k", self.outlier_k),
            ("tau_reset", self.tau_reset),
            ("eps", self.eps),
            ("alpha_floor", self.alpha_floor),
            ("warmup_rate", self.warmup_rate),
            ("rate_min", self.rate_min),
            ("rate_max", self.rate_max),
        ];
        if let Some((name, v)) = reals.iter().find(|(_, v)| !v.is_finite()) {
            return Err(ConfigError(format!("{name} = {v} is not finite")));
        }
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError(msg.into()))
            }
        };
        check(self.lambda >= 0.0, "lambda must be >= 0")?;
        check(self.gamma_clip > 0.0, "gamma_clip must be > 0")?;
        check(self.outlier_k > 0.0, "outlier_k must be > 0")?;
        check(self.tau_reset >= 1.0, "tau_reset must be >= 1")?;
        check(self.eps > 0.0, "eps must be > 0")?;
        check(self.alpha_floor >= 0.0, "alpha_floor must be >= 0")?;
        check(self.warmup_rate > 0.0, "warmup_rate must be > 0")?;
        check(
            self.rate_min >= 0.0 && self.rate_min <= self.rate_max,
            "need 0 <= rate_min <= rate_max",
        )
    }

    /// Short label in the "no VR, no AG" style; the full algorithm is "AdaSecant".
    pub fn label(&self) -> String {
        let off: Vec<&str> = [
            (self.use_vr, "no VR"),
            (self.use_ag, "no AG"),
            (self.use_bn, "no BN"),
            (self.use_od, "no OD"),
        ]
        .iter()
        .filter(|(on, _)| !on)
        .map(|(_, s)| *s)
        .collect();
        if off.is_empty() {
            "AdaSecant".to_string()
        } else {
            format!("AdaSecant, {}", off.join(", "))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub mean_gamma: f64,
    /// Mean applied rate `η/ρ`, raw gradient units.
    pub mean_rate: f64,
    pub outlier_count: usize,
    pub mean_tau: f64,
    pub update_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error("gradient has length {got}, optimizer dimension is {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value {value} at coordinate {index} on step {step}")]
    NonFinite {
        step: u64,
        index: usize,
        value: f64,
        diagnostics: StepDiagnostics,
    },
}

/// Scales each block of `g` by `1 / max(eps, ‖g_mean restricted to the block‖₂)`.
pub fn block_normalize(g: &[f64], layout: &BlockLayout, g_mean: &[f64], eps: f64) -> Vec<f64> {
    let scales = block_norms(layout, g_mean, eps);
    g.iter().zip(&scales).map(|(x, n)| x / n).collect()
}

/// Per-coordinate normalizer: the floored norm of the coordinate's block of `g_mean`.
fn block_norms(layout: &BlockLayout, g_mean: &[f64], eps: f64) -> Vec<f64> {
    debug_assert_eq!(layout.dimension(), g_mean.len());
    let mut out = vec![0.0; g_mean.len()];
    for b in layout.blocks() {
        let norm = g_mean[b.clone()].iter().map(|x| x * x).sum::<f64>().sqrt();
        out[b.clone()].fill(norm.max(eps));
    }
    out
}

/// `(g + γ·g_mean) / (1 + γ)`, i.e. `β·g + (1-β)·g_mean` with `β = 1/(1+γ)`.
pub fn variance_reduce(g: f64, g_mean: f64, gamma: f64) -> f64 {
    debug_assert!(gamma >= 0.0);
    let beta = 1.0 / (1.0 + gamma);
    beta * g + (1.0 - beta) * g_mean
}

/// `Δ / α`, or 0 when `|α| <= eps` (no curvature information).
pub fn secant_rate_direct(delta: f64, alpha: f64, eps: f64) -> f64 {
    if alpha.abs() <= eps {
        0.0
    } else {
        delta / alpha
    }
}

/// Adds `g²` to the accumulator and returns it with `ρ = max(1, sqrt(accum))`.
pub fn adagrad_scale(accum: f64, g_corrected: f64) -> (f64, f64) {
    debug_assert!(accum >= 0.0);
    let new_accum = accum + g_corrected * g_corrected;
    (new_accum, new_accum.sqrt().max(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaSecantState {
    dimension: usize,
    /// `E[g]`, `E[g²]`
    pub g_stat: StatBank,
    /// `E[α]`, `E[α²]`
    pub alpha_stat: StatBank,
    /// `E[Δ]`, `E[Δ²]`; its `tau` is the memory of the coordinate
    pub delta_stat: StatBank,
    /// `E[αΔ]`
    pub alpha_delta_stat: StatBank,
    /// products `(g - g')(g - E[g])`
    pub gamma_num_stat: StatBank,
    /// products `(g - E[g])(g' - E[g])`
    pub gamma_den_stat: StatBank,
    pub prev_grad: Vec<f64>,
    /// Previous undamped proposal `-η·g̃`, before division by `ρ`.
    pub prev_delta: Vec<f64>,
    pub adagrad_accum: Vec<f64>,
    /// Last undamped rate per coordinate, in raw gradient units.
    pub rate: Vec<f64>,
    pub step_count: u64,
}

impl AdaSecantState {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        let bank = || StatBank::new(dimension);
        Self {
            dimension,
            g_stat: bank(),
            alpha_stat: bank(),
            delta_stat: bank(),
            alpha_delta_stat: bank(),
            gamma_num_stat: bank(),
            gamma_den_stat: bank(),
            prev_grad: vec![0.0; dimension],
            prev_delta: vec![0.0; dimension],
            adagrad_accum: vec![0.0; dimension],
            rate: vec![0.0; dimension],
            step_count: 0,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Memory size of coordinate `i`.
    pub fn tau(&self, i: usize) -> f64 {
        self.delta_stat[i].tau
    }

    /// Checks that every bank and vector has the declared dimension.
    pub fn is_consistent(&self) -> bool {
        let d = self.dimension;
        [
            &self.g_stat,
            &self.alpha_stat,
            &self.delta_stat,
            &self.alpha_delta_stat,
            &self.gamma_num_stat,
            &self.gamma_den_stat,
        ]
        .iter()
        .all(|b| b.dimension() == d)
            && [
                &self.prev_grad,
                &self.prev_delta,
                &self.adagrad_accum,
                &self.rate,
            ]
            .iter()
            .all(|v| v.len() == d)
    }

    /// Unclipped `γ_i`. Zero before any product has been observed.
    pub fn estimate_gamma(&self, i: usize, lambda: f64, form: GammaForm) -> f64 {
        let num = &self.gamma_num_stat[i];
        let den = &self.gamma_den_stat[i];
        if num.count == 0 || den.count == 0 {
            return 0.0;
        }
        match form {
            GammaForm::Rms => num.rms() / (den.rms() + lambda),
            GammaForm::Closed => {
                let beta = den.mean / (self.g_stat[i].variance() + lambda);
                if beta >= 1.0 {
                    0.0
                } else if beta <= 0.0 {
                    f64::INFINITY
                } else {
                    (1.0 - beta) / beta
                }
            }
        }
    }

    /// Unclamped secant rate of coordinate `i` from the curvature statistics.
    pub fn estimate_rate(&self, i: usize, formula: StepFormula, eps: f64) -> f64 {
        let a = &self.alpha_stat[i];
        let d = &self.delta_stat[i];
        if a.count == 0 || d.count == 0 {
            return 0.0;
        }
        let alpha_sq = a.mean_sq;
        let cross = self.alpha_delta_stat[i].mean;
        let cov = match formula {
            StepFormula::Simple => cross,
            StepFormula::Taylor => cross - a.mean * d.mean,
        };
        d.mean_sq.sqrt() / (alpha_sq.sqrt() + eps) - cov / (alpha_sq + eps)
    }

    /// One AdaSecant update for gradient `g`. Returns the parameter increment
    /// (to be added to `θ`) and diagnostics.
    pub fn step(
        &mut self,
        g: &[f64],
        layout: &BlockLayout,
        cfg: &AdaSecantConfig,
    ) -> Result<(Vec<f64>, StepDiagnostics), StepError> {
        let d = self.dimension;
        if g.len() != d {
            return Err(StepError::DimensionMismatch {
                expected: d,
                got: g.len(),
            });
        }
        assert_eq!(
            layout.dimension(),
            d,
            "layout does not cover the parameters"
        );
        if let Some((index, &value)) = g.iter().enumerate().find(|(_, x)| !x.is_finite()) {
            return Err(self.non_finite(index, value));
        }

        let step = self.step_count;
        let has_prev = step > 0;
        let warmup = step < cfg.warmup_steps;
        let memory: Vec<f64> = (0..d).map(|i| self.delta_stat[i].tau).collect();

        for i in 0..d {
            self.g_stat[i] = self.g_stat[i]
                .with_tau(memory[i])
                .update(g[i])
                .map_err(|e| self.stat_error(i, e))?;
        }
        let g_mean = self.g_stat.means();
        let norms = if cfg.use_bn {
            block_norms(layout, &g_mean, cfg.eps)
        } else {
            vec![1.0; d]
        };

        let mut update = vec![0.0; d];
        let mut proposal = vec![0.0; d];
        let mut applied_sum = 0.0;
        let mut gamma_sum = 0.0;
        let mut outliers = 0;
        for i in 0..d {
            let mut tau = memory[i];

            let mut gamma = 0.0;
            if has_prev {
                let (prev, m) = (self.prev_grad[i], g_mean[i]);
                let num = (prev - g[i]) * (prev - m);
                let den = (prev - m) * (g[i] - m);
                self.gamma_num_stat[i] = self.gamma_num_stat[i]
                    .with_tau(tau)
                    .update(num)
                    .map_err(|e| self.stat_error(i, e))?;
                self.gamma_den_stat[i] = self.gamma_den_stat[i]
                    .with_tau(tau)
                    .update(den)
                    .map_err(|e| self.stat_error(i, e))?;
                if cfg.use_vr {
                    gamma = self
                        .estimate_gamma(i, cfg.lambda, cfg.gamma_form)
                        .min(cfg.gamma_clip);
                }
            }
            gamma_sum += gamma;
            let corrected = variance_reduce(g[i], g_mean[i], gamma);
            let normalized = corrected / norms[i];

            // curvature sample: gradient change caused by the previous step
            let alpha = g[i] - self.prev_grad[i];
            let floor = if self.alpha_stat[i].count == 0 {
                cfg.eps
            } else {
                cfg.alpha_floor
            };
            let informative = has_prev && alpha.abs() > floor;

            let mut reset = false;
            if cfg.use_od && has_prev {
                // the gradient mean already includes g; curvature is judged before folding α in
                let g_out = self.g_stat[i].is_outlier(g[i], cfg.outlier_k);
                let a_out = informative && self.alpha_stat[i].is_outlier(alpha, cfg.outlier_k);
                if g_out || a_out {
                    reset = true;
                    outliers += 1;
                    tau = cfg.tau_reset;
                }
            }

            if informative {
                let delta = self.prev_delta[i];
                let fold = |s: MovingStat, x: f64| s.with_tau(tau).update(x);
                self.alpha_stat[i] =
                    fold(self.alpha_stat[i], alpha).map_err(|e| self.stat_error(i, e))?;
                self.delta_stat[i] =
                    fold(self.delta_stat[i], delta).map_err(|e| self.stat_error(i, e))?;
                self.alpha_delta_stat[i] = fold(self.alpha_delta_stat[i], alpha * delta)
                    .map_err(|e| self.stat_error(i, e))?;
            }

            let rate = if warmup {
                cfg.warmup_rate / norms[i]
            } else {
                self.estimate_rate(i, cfg.step_formula, cfg.eps)
                    .clamp(cfg.rate_min, cfg.rate_max)
            };

            // an outlier reset holds for the next update instead of being adapted away
            self.delta_stat[i] = if reset {
                self.delta_stat[i].with_tau(tau)
            } else if informative {
                self.delta_stat[i].update_tau()
            } else {
                self.delta_stat[i]
            };

            let (accum, rho) = adagrad_scale(self.adagrad_accum[i], normalized);
            self.adagrad_accum[i] = accum;
            let rho = if cfg.use_ag && !warmup { rho } else { 1.0 };

            self.rate[i] = rate;
            applied_sum += rate / rho;
            // rate in normalized-gradient units is rate * norm; the secant
            // statistics follow the undamped proposal
            proposal[i] = -(rate * norms[i]) * normalized;
            update[i] = proposal[i] / rho;
        }

        if let Some((index, &value)) = update.iter().enumerate().find(|(_, x)| !x.is_finite()) {
            return Err(self.non_finite(index, value));
        }
        self.prev_grad.copy_from_slice(g);
        self.prev_delta.copy_from_slice(&proposal);
        self.step_count += 1;

        let diag = StepDiagnostics {
            mean_gamma: gamma_sum / d as f64,
            mean_rate: applied_sum / d as f64,
            outlier_count: outliers,
            mean_tau: self.mean_tau(),
            update_norm: update.iter().map(|x| x * x).sum::<f64>().sqrt(),
        };
        Ok((update, diag))
    }

    fn mean_tau(&self) -> f64 {
        self.delta_stat
            .as_slice()
            .iter()
            .map(|s| s.tau)
            .sum::<f64>()
            / self.dimension as f64
    }

    fn snapshot(&self) -> StepDiagnostics {
        StepDiagnostics {
            mean_gamma: f64::NAN,
            mean_rate: self.rate.iter().sum::<f64>() / self.dimension as f64,
            outlier_count: 0,
            mean_tau: self.mean_tau(),
            update_norm: f64::NAN,
        }
    }

    fn non_finite(&self, index: usize, value: f64) -> StepError {
        StepError::NonFinite {
            step: self.step_count,
            index,
            value,
            diagnostics: self.snapshot(),
        }
    }

    fn stat_error(&self, index: usize, e: StatsError) -> StepError {
        let StatsError::NonFinite(value) = e;
        self.non_finite(index, value)
    }
}
