//! Quick invariant and oracle checks, run by the `validate` subcommand.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::config::{ExperimentConfig, OptimizerSpec};
use super::oracle::{beta_bruteforce_oracle, beta_closed_form};
use super::run::Run;
use crate::baselines::BaselineKind;
use crate::optimizer::{secant_rate_direct, variance_reduce};
use crate::problems::{fd_gradient, relative_error, ProblemSpec, QuadraticSpec, FD_STEP};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check {
        name: name.to_string(),
        passed,
        detail,
    }
}

pub fn run_all(seed: u64) -> Vec<Check> {
    let mut out = gradient_checks(seed);
    out.push(secant_check(seed));
    out.push(variance_check(seed));
    out.push(beta_check(seed));
    out.push(resume_check(seed));
    out
}

fn gradient_checks(seed: u64) -> Vec<Check> {
    let mut r = rng::stream(seed, rng::STREAM_DATA);
    ["quadratic", "rosenbrock", "logreg", "mlp"]
        .iter()
        .map(|name| {
            let mut spec = ProblemSpec::by_name(name).expect("known problem");
            if let ProblemSpec::Logreg(s) = &mut spec {
                s.n_samples = 64;
            }
            let p = spec.build().expect("default spec builds");
            let tol = if *name == "mlp" { 1e-4 } else { 1e-5 };
            let mut worst: f64 = 0.0;
            for _ in 0..3 {
                let theta: Vec<f64> = (0..p.dimension())
                    .map(|_| r.random_range(-1.0..1.0))
                    .collect();
                let batch = p.full_batch();
                let g = p.grad(&theta, &batch);
                let fd = fd_gradient(p.as_ref(), &theta, &batch, FD_STEP);
                worst = g
                    .iter()
                    .zip(&fd)
                    .map(|(a, b)| relative_error(*a, *b))
                    .fold(worst, f64::max);
            }
            check(
                &format!("gradient matches finite differences ({name})"),
                worst <= tol,
                format!("max relative error {worst:.2e}"),
            )
        })
        .collect()
}

fn secant_check(seed: u64) -> Check {
    let q = QuadraticSpec::random(20, 0.5, 10.0, seed, 0.0);
    let mut r = rng::stream(seed, rng::STREAM_INIT);
    let worst =
        q.h.iter()
            .map(|&h| {
                let delta: f64 = r.random_range(-1.0..1.0);
                relative_error(secant_rate_direct(delta, h * delta, 0.0), 1.0 / h)
            })
            .fold(0.0, f64::max);
    check(
        "secant rate is 1/h on quadratics",
        worst <= 1e-10,
        format!("max relative error {worst:.2e}"),
    )
}

fn variance_check(seed: u64) -> Check {
    let mut r = rng::stream(seed, rng::STREAM_NOISE);
    let samples: Vec<f64> = (0..20_000)
        .map(|_| 1.0 + 2.0 * r.sample::<f64, _>(StandardNormal))
        .collect();
    let var = |xs: &[f64]| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64
    };
    let gamma = 1.0;
    let reduced: Vec<f64> = samples
        .iter()
        .map(|g| variance_reduce(*g, 1.0, gamma))
        .collect();
    let ratio = var(&reduced) / var(&samples);
    let target = 1.0 / (1.0f64 + gamma).powi(2);
    check(
        "variance reduction factor is 1/(1+γ)²",
        relative_error(ratio, target) < 0.05,
        format!("ratio {ratio:.4}, expected {target:.4}"),
    )
}

fn beta_check(seed: u64) -> Check {
    let mut r = rng::stream(seed, rng::STREAM_HOLDOUT);
    let pairs: Vec<(f64, f64)> = (0..5000)
        .map(|_| {
            let g: f64 = r.sample(StandardNormal);
            let e: f64 = r.sample(StandardNormal);
            (g, 0.6 * g + 0.8 * e)
        })
        .collect();
    let grid = beta_bruteforce_oracle(&pairs, 0.0, 1000).expect("nonempty");
    let closed = beta_closed_form(&pairs, 0.0)
        .expect("nonempty")
        .clamp(1e-3, 1.0);
    check(
        "β grid search agrees with the closed form",
        (grid - closed).abs() <= 2e-3,
        format!("grid {grid:.4}, closed form {closed:.4}"),
    )
}

fn resume_check(seed: u64) -> Check {
    let mut optimizers = vec![OptimizerSpec::default()];
    optimizers.extend(BaselineKind::ALL.map(OptimizerSpec::baseline));
    let mut failed = Vec::new();
    for optimizer in optimizers {
        let cfg = ExperimentConfig {
            problem: ProblemSpec::Logreg(crate::problems::LogRegSpec {
                n_samples: 64,
                ..Default::default()
            }),
            optimizer: optimizer.clone(),
            max_steps: 40,
            record_every: 5,
            seed,
            ..Default::default()
        };
        let full = Run::new(cfg.clone()).map(|r| r.finish());
        let resumed = Run::new(cfg).and_then(|mut r| {
            r.advance(20);
            let text = serde_json::to_string(&r.checkpoint())?;
            Ok(Run::from_checkpoint(serde_json::from_str(&text)?)?.finish())
        });
        match (full, resumed) {
            (Ok(a), Ok(b)) if a == b => {}
            _ => failed.push(optimizer.label()),
        }
    }
    check(
        "checkpoint resume equals an uninterrupted run",
        failed.is_empty(),
        if failed.is_empty() {
            "all optimizers".to_string()
        } else {
            format!("mismatch: {}", failed.join(", "))
        },
    )
}

#[cfg(test)]
mod tests {
    #[test]
    fn suite_passes() {
        for c in super::run_all(0) {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
