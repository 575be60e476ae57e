//! Reference optimizers: SGD with momentum and a linearly decaying rate,
//! Adagrad, RMSProp, Adadelta and Adam, in their usual textbook forms.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    SgdMomentum,
    Adagrad,
    Rmsprop,
    Adadelta,
    Adam,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 5] = [
        BaselineKind::SgdMomentum,
        BaselineKind::Adagrad,
        BaselineKind::Rmsprop,
        BaselineKind::Adadelta,
        BaselineKind::Adam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::SgdMomentum => "sgd_momentum",
            BaselineKind::Adagrad => "adagrad",
            BaselineKind::Rmsprop => "rmsprop",
            BaselineKind::Adadelta => "adadelta",
            BaselineKind::Adam => "adam",
        }
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown baseline optimizer `{s}`"))
    }
}

/// Hyperparameters. Fields a kind does not use are ignored by it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineHyper {
    pub lr: f64,
    /// SGD momentum coefficient.
    pub momentum: f64,
    /// Squared-gradient decay for RMSProp and Adadelta.
    pub decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// SGD learning rate reaches zero after this many steps.
    pub lr_decay_steps: u64,
}

impl BaselineHyper {
    pub fn defaults(kind: BaselineKind, total_steps: u64) -> Self {
        let base = Self {
            lr: 0.01,
            momentum: 0.9,
            decay: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lr_decay_steps: total_steps,
        };
        match kind {
            BaselineKind::SgdMomentum => base,
            BaselineKind::Adagrad => Self { lr: 0.01, ..base },
            BaselineKind::Rmsprop => Self {
                lr: 0.001,
                decay: 0.9,
                ..base
            },
            BaselineKind::Adadelta => Self {
                lr: 1.0,
                decay: 0.95,
                eps: 1e-6,
                ..base
            },
            BaselineKind::Adam => Self { lr: 0.001, ..base },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("gradient has length {got}, optimizer dimension is {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value {value} at coordinate {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("invalid hyperparameter: {0}")]
    Hyper(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineState {
    pub kind: BaselineKind,
    pub hyper: BaselineHyper,
    /// Velocity (SGD), first moment (Adam), squared-gradient average (others).
    pub first: Vec<f64>,
    /// Second moment (Adam), squared-update average (Adadelta); unused otherwise.
    pub second: Vec<f64>,
    pub step_count: u64,
}

impl BaselineState {
    pub fn new(
        kind: BaselineKind,
        dimension: usize,
        hyper: BaselineHyper,
    ) -> Result<Self, BaselineError> {
        let h = &hyper;
        let bad = |m: &str| Err(BaselineError::Hyper(m.to_string()));
        if ![h.lr, h.momentum, h.decay, h.beta1, h.beta2, h.eps]
            .iter()
            .all(|x| x.is_finite())
        {
            return bad("all hyperparameters must be finite");
        }
        if h.lr <= 0.0 || h.eps < 0.0 {
            return bad("need lr > 0 and eps >= 0");
        }
        if !(0.0..1.0).contains(&h.momentum)
            || !(0.0..1.0).contains(&h.decay)
            || !(0.0..1.0).contains(&h.beta1)
            || !(0.0..1.0).contains(&h.beta2)
        {
            return bad("momentum, decay, beta1 and beta2 must lie in [0, 1)");
        }
        let second = match kind {
            BaselineKind::Adam | BaselineKind::Adadelta => vec![0.0; dimension],
            _ => Vec::new(),
        };
        Ok(Self {
            kind,
            hyper,
            first: vec![0.0; dimension],
            second,
            step_count: 0,
        })
    }

    pub fn with_defaults(kind: BaselineKind, dimension: usize, total_steps: u64) -> Self {
        Self::new(kind, dimension, BaselineHyper::defaults(kind, total_steps))
            .expect("default hyperparameters are valid")
    }

    pub fn dimension(&self) -> usize {
        self.first.len()
    }

    /// Current SGD learning rate after linear decay.
    fn decayed_lr(&self) -> f64 {
        let h = &self.hyper;
        if h.lr_decay_steps == 0 {
            return h.lr;
        }
        let frac = self.step_count as f64 / h.lr_decay_steps as f64;
        h.lr * (1.0 - frac).max(0.0)
    }

    /// Returns the increment to add to the parameters.
    pub fn step(&mut self, g: &[f64]) -> Result<Vec<f64>, BaselineError> {
        if g.len() != self.dimension() {
            return Err(BaselineError::DimensionMismatch {
                expected: self.dimension(),
                got: g.len(),
            });
        }
        if let Some((index, &value)) = g.iter().enumerate().find(|(_, x)| !x.is_finite()) {
            return Err(BaselineError::NonFinite { index, value });
        }
        let h = self.hyper.clone();
        let mut update = vec![0.0; g.len()];
        match self.kind {
            BaselineKind::SgdMomentum => {
                let lr = self.decayed_lr();
                for ((u, v), &gi) in update.iter_mut().zip(&mut self.first).zip(g) {
                    *v = h.momentum * *v - lr * gi;
                    *u = *v;
                }
            }
            BaselineKind::Adagrad => {
                for ((u, a), &gi) in update.iter_mut().zip(&mut self.first).zip(g) {
                    *a += gi * gi;
                    *u = if gi == 0.0 {
                        0.0
                    } else {
                        -h.lr * gi / (a.sqrt() + h.eps)
                    };
                }
            }
            BaselineKind::Rmsprop => {
                for ((u, ms), &gi) in update.iter_mut().zip(&mut self.first).zip(g) {
                    *ms = h.decay * *ms + (1.0 - h.decay) * gi * gi;
                    *u = if gi == 0.0 {
                        0.0
                    } else {
                        -h.lr * gi / (ms.sqrt() + h.eps)
                    };
                }
            }
            BaselineKind::Adadelta => {
                for (i, &gi) in g.iter().enumerate() {
                    let eg = &mut self.first[i];
                    *eg = h.decay * *eg + (1.0 - h.decay) * gi * gi;
                    let dx = -((self.second[i] + h.eps).sqrt() / (*eg + h.eps).sqrt()) * gi;
                    self.second[i] = h.decay * self.second[i] + (1.0 - h.decay) * dx * dx;
                    update[i] = h.lr * dx;
                }
            }
            BaselineKind::Adam => {
                let t = (self.step_count + 1) as i32;
                let c1 = 1.0 - h.beta1.powi(t);
                let c2 = 1.0 - h.beta2.powi(t);
                for (i, &gi) in g.iter().enumerate() {
                    let m = &mut self.first[i];
                    *m = h.beta1 * *m + (1.0 - h.beta1) * gi;
                    let v = &mut self.second[i];
                    *v = h.beta2 * *v + (1.0 - h.beta2) * gi * gi;
                    let m_hat = self.first[i] / c1;
                    let v_hat = self.second[i] / c2;
                    update[i] = -h.lr * m_hat / (v_hat.sqrt() + h.eps);
                }
            }
        }
        if let Some((index, &value)) = update.iter().enumerate().find(|(_, x)| !x.is_finite()) {
            return Err(BaselineError::NonFinite { index, value });
        }
        self.step_count += 1;
        Ok(update)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        for kind in BaselineKind::ALL {
            let mut s = BaselineState::with_defaults(kind, 3, 100);
            for _ in 0..3 {
                assert_eq!(s.step(&[0.0; 3]).unwrap(), vec![0.0; 3], "{kind:?}");
            }
        }
    }

    #[test]
    fn adam_first_step_closed_form() {
        let mut s = BaselineState::with_defaults(BaselineKind::Adam, 1, 10);
        let u = s.step(&[0.5]).unwrap()[0];
        // bias-corrected moments are g and g², so the step is lr·g/(|g| + ε)
        let expected = -0.001 * 0.5 / (0.5 + 1e-8);
        assert!((u - expected).abs() < 1e-15, "{u} vs {expected}");
    }

    #[test]
    fn adagrad_two_steps() {
        let hyper = BaselineHyper {
            lr: 1.0,
            eps: 0.0,
            ..BaselineHyper::defaults(BaselineKind::Adagrad, 0)
        };
        let mut s = BaselineState::new(BaselineKind::Adagrad, 1, hyper).unwrap();
        assert_eq!(s.step(&[3.0]).unwrap(), vec![-1.0]);
        assert_eq!(s.step(&[4.0]).unwrap(), vec![-0.8]);
    }

    #[test]
    fn sgd_rate_decays_linearly_to_zero() {
        let hyper = BaselineHyper {
            momentum: 0.0,
            lr: 1.0,
            ..BaselineHyper::defaults(BaselineKind::SgdMomentum, 4)
        };
        let mut s = BaselineState::new(BaselineKind::SgdMomentum, 1, hyper).unwrap();
        let steps: Vec<f64> = (0..6).map(|_| s.step(&[1.0]).unwrap()[0]).collect();
        assert_eq!(steps, vec![-1.0, -0.75, -0.5, -0.25, 0.0, 0.0]);
    }

    #[test]
    fn rmsprop_and_adadelta_first_steps() {
        let mut r = BaselineState::with_defaults(BaselineKind::Rmsprop, 1, 1);
        let u = r.step(&[2.0]).unwrap()[0];
        let expected = -0.001 * 2.0 / ((0.1f64 * 4.0).sqrt() + 1e-8);
        assert!((u - expected).abs() < 1e-15);

        let mut a = BaselineState::with_defaults(BaselineKind::Adadelta, 1, 1);
        let u = a.step(&[2.0]).unwrap()[0];
        let expected = -(1e-6f64).sqrt() / (0.05f64 * 4.0 + 1e-6).sqrt() * 2.0;
        assert!((u - expected).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        let mut s = BaselineState::with_defaults(BaselineKind::Adam, 2, 1);
        assert!(matches!(
            s.step(&[1.0]),
            Err(BaselineError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            s.step(&[1.0, f64::INFINITY]),
            Err(BaselineError::NonFinite { index: 1, .. })
        ));
        let hyper = BaselineHyper {
            beta1: 1.0,
            ..BaselineHyper::defaults(BaselineKind::Adam, 1)
        };
        assert!(BaselineState::new(BaselineKind::Adam, 1, hyper).is_err());
    }

    #[test]
    fn kind_names_round_trip() {
        for k in BaselineKind::ALL {
            assert_eq!(k.name().parse::<BaselineKind>().unwrap(), k);
        }
        assert!("nesterov".parse::<BaselineKind>().is_err());
    }

    proptest! {
        #[test]
        fn momentumless_sgd_descends_below_stability_threshold(
            h in 0.1f64..10.0,
            frac in 0.05f64..0.95,
            x0 in -10.0f64..10.0,
        ) {
            prop_assume!(x0.abs() > 1e-6);
            let lr = frac * 2.0 / h;
            let hyper = BaselineHyper { lr, momentum: 0.0, lr_decay_steps: 0, ..BaselineHyper::defaults(BaselineKind::SgdMomentum, 0) };
            let mut s = BaselineState::new(BaselineKind::SgdMomentum, 1, hyper).unwrap();
            let mut x = x0;
            let mut loss = 0.5 * h * x * x;
            for _ in 0..20 {
                x += s.step(&[h * x]).unwrap()[0];
                let next = 0.5 * h * x * x;
                prop_assert!(next < loss || loss == 0.0);
                loss = next;
            }
        }

        #[test]
        fn second_moments_stay_nonnegative(gs in proptest::collection::vec(-100.0f64..100.0, 1..40)) {
            for kind in BaselineKind::ALL {
                let mut s = BaselineState::with_defaults(kind, 1, 40);
                for &g in &gs {
                    s.step(&[g]).unwrap();
                    match kind {
                        BaselineKind::Adam => prop_assert!(s.second[0] >= 0.0),
                        BaselineKind::Adadelta | BaselineKind::Adagrad | BaselineKind::Rmsprop => {
                            prop_assert!(s.first[0] >= 0.0)
                        }
                        BaselineKind::SgdMomentum => {}
                    }
                }
            }
        }
    }
}
