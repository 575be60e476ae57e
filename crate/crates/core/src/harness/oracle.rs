use super::HarnessError;

/// Sample mean of `g` and mean of the centered products needed by both β forms.
fn moments(pairs: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pairs.len() as f64;
    let mean = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let var = pairs.iter().map(|p| (p.0 - mean).powi(2)).sum::<f64>() / n;
    let cov = pairs
        .iter()
        .map(|p| (p.0 - mean) * (p.1 - mean))
        .sum::<f64>()
        / n;
    (mean, var, cov)
}

/// Monte-Carlo objective `E[(β g + (1 - β) E[g] - g')²] + λ β²`.
pub fn beta_objective(pairs: &[(f64, f64)], lambda: f64, beta: f64) -> f64 {
    let (mean, _, _) = moments(pairs);
    objective_at(pairs, mean, lambda, beta)
}

fn objective_at(pairs: &[(f64, f64)], mean: f64, lambda: f64, beta: f64) -> f64 {
    let n = pairs.len() as f64;
    let mse = pairs
        .iter()
        .map(|(g, gn)| (beta * g + (1.0 - beta) * mean - gn).powi(2))
        .sum::<f64>()
        / n;
    mse + lambda * beta * beta
}

/// Grid minimizer of [`beta_objective`] over `β ∈ {1/N, 2/N, ..., 1}`.
pub fn beta_bruteforce_oracle(
    pairs: &[(f64, f64)],
    lambda: f64,
    grid_size: usize,
) -> Result<f64, HarnessError> {
    if pairs.is_empty() {
        return Err(HarnessError::Oracle("empty sample stream".into()));
    }
    if grid_size < 100 {
        return Err(HarnessError::Oracle(
            "grid_size must be at least 100".into(),
        ));
    }
    let (mean, _, _) = moments(pairs);
    let objective = |b: f64| objective_at(pairs, mean, lambda, b);
    let best = (1..=grid_size).map(|j| j as f64 / grid_size as f64).fold(
        (f64::INFINITY, 0.0),
        |(fbest, bbest), b| {
            let f = objective(b);
            if f < fbest {
                (f, b)
            } else {
                (fbest, bbest)
            }
        },
    );
    Ok(best.1)
}

/// `E[(g - E[g])(g' - E[g])] / (Var(g) + λ)`, unconstrained.
pub fn beta_closed_form(pairs: &[(f64, f64)], lambda: f64) -> Result<f64, HarnessError> {
    if pairs.is_empty() {
        return Err(HarnessError::Oracle("empty sample stream".into()));
    }
    let (_, var, cov) = moments(pairs);
    Ok(cov / (var + lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn objective_is_the_expected_quadratic_in_beta() {
        let pairs = [(1.0, 2.0), (-0.5, 0.1), (3.0, 2.5), (0.2, -1.0)];
        let (_, var, cov) = moments(&pairs);
        let base = beta_objective(&pairs, 0.3, 0.0);
        for b in [0.1, 0.5, 0.9] {
            let direct = beta_objective(&pairs, 0.3, b) - base;
            let expanded = b * b * (var + 0.3) - 2.0 * b * cov;
            assert!((direct - expanded).abs() < 1e-12);
        }
    }

    #[test]
    fn perfectly_predictive_pair_hits_the_upper_boundary() {
        let mut r = rng::stream(1, rng::STREAM_DATA);
        let pairs: Vec<(f64, f64)> = (0..1000)
            .map(|_| {
                let g: f64 = r.sample(StandardNormal);
                (g, g)
            })
            .collect();
        assert_eq!(beta_bruteforce_oracle(&pairs, 0.0, 1000).unwrap(), 1.0);
        assert!((beta_closed_form(&pairs, 0.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn independent_pair_hits_the_lower_boundary() {
        // exactly uncorrelated by construction: g' = ±1 flips sign with g's sign pattern
        let pairs: Vec<(f64, f64)> = [(1.0, 1.0), (-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)].to_vec();
        assert_eq!(beta_closed_form(&pairs, 0.0).unwrap(), 0.0);
        assert_eq!(beta_bruteforce_oracle(&pairs, 0.0, 1000).unwrap(), 0.001);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(beta_bruteforce_oracle(&[], 0.0, 1000).is_err());
        assert!(beta_bruteforce_oracle(&[(1.0, 1.0)], 0.0, 10).is_err());
        assert!(beta_closed_form(&[], 0.0).is_err());
    }
}
