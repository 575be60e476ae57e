//! Per-coordinate moving statistics with an adaptive memory size.
//!
//! A [`MovingStat`] tracks a moving estimate of `E[x]` and `E[x²]` using an
//! exponential average whose time constant `tau` is itself adapted from the
//! variability of the signal: a steady signal shrinks the memory towards one
//! step, a noisy one grows it. Outliers can force the memory back to
//! [`TAU_RESET`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Memory size after an outlier reset, and the initial memory of a fresh stat.
pub const TAU_RESET: f64 = 2.2;

/// Below this mean-square a coordinate is treated as carrying no signal.
pub const EPS_VAR: f64 = 1e-30;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum StatsError {
    #[error("non-finite observation {0} (divergent gradient upstream)")]
    NonFinite(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MovingStat {
    pub mean: f64,
    pub mean_sq: f64,
    pub tau: f64,
    pub count: u64,
}

impl Default for MovingStat {
    fn default() -> Self {
        Self::new()
    }
}

impl MovingStat {
    /// An empty stat with memory [`TAU_RESET`]. The first observation initializes
    /// `mean` and `mean_sq` directly.
    pub fn new() -> Self {
        Self {
            mean: 0.0,
            mean_sq: 0.0,
            tau: TAU_RESET,
            count: 0,
        }
    }

    /// A stat that has already seen data, with the given moments and memory.
    pub fn with_moments(mean: f64, mean_sq: f64, tau: f64) -> Self {
        debug_assert!(tau >= 1.0);
        Self {
            mean,
            mean_sq: mean_sq.max(0.0),
            tau,
            count: 1,
        }
    }

    /// Same moments, different memory size.
    pub fn with_tau(self, tau: f64) -> Self {
        debug_assert!(tau >= 1.0);
        Self { tau, ..self }
    }

    /// Folds one observation in with weight `1/tau`. Does not touch `tau`.
    pub fn update(self, x: f64) -> Result<Self, StatsError> {
        if !x.is_finite() {
            return Err(StatsError::NonFinite(x));
        }
        if self.count == 0 {
            return Ok(Self {
                mean: x,
                mean_sq: x * x,
                count: 1,
                ..self
            });
        }
        let w = 1.0 / self.tau;
        Ok(Self {
            mean: (1.0 - w) * self.mean + w * x,
            mean_sq: ((1.0 - w) * self.mean_sq + w * x * x).max(0.0),
            tau: self.tau,
            count: self.count + 1,
        })
    }

    /// `mean² / mean_sq` clamped to `[0, 1]`, or `None` for a signal-free stat.
    pub fn stability_ratio(&self) -> Option<f64> {
        if self.mean_sq <= EPS_VAR {
            return None;
        }
        Some((self.mean * self.mean / self.mean_sq).clamp(0.0, 1.0))
    }

    /// Adapts the memory: `tau' = (1 - mean²/mean_sq) * tau + 1`.
    pub fn update_tau(self) -> Self {
        match self.stability_ratio() {
            Some(ratio) => Self {
                tau: ((1.0 - ratio) * self.tau + 1.0).max(1.0),
                ..self
            },
            None => self,
        }
    }

    pub fn reset_memory(self) -> Self {
        Self {
            tau: TAU_RESET,
            ..self
        }
    }

    pub fn variance(&self) -> f64 {
        (self.mean_sq - self.mean * self.mean).max(0.0)
    }

    /// `|x - mean| > k * std`. A signal-free stat never flags.
    pub fn is_outlier(&self, x: f64, k: f64) -> bool {
        debug_assert!(k > 0.0);
        if self.mean_sq <= EPS_VAR {
            return false;
        }
        (x - self.mean).abs() > k * self.variance().sqrt()
    }

    pub fn rms(&self) -> f64 {
        self.mean_sq.max(0.0).sqrt()
    }
}

/// One [`MovingStat`] per parameter coordinate. Serializes as four flat
/// arrays of equal length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "FlatBank", try_from = "FlatBank")]
pub struct StatBank {
    stats: Vec<MovingStat>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FlatBank {
    mean: Vec<f64>,
    mean_sq: Vec<f64>,
    tau: Vec<f64>,
    count: Vec<u64>,
}

impl From<StatBank> for FlatBank {
    fn from(b: StatBank) -> Self {
        let s = &b.stats;
        Self {
            mean: s.iter().map(|x| x.mean).collect(),
            mean_sq: s.iter().map(|x| x.mean_sq).collect(),
            tau: s.iter().map(|x| x.tau).collect(),
            count: s.iter().map(|x| x.count).collect(),
        }
    }
}

impl TryFrom<FlatBank> for StatBank {
    type Error = String;
    fn try_from(f: FlatBank) -> Result<Self, String> {
        let n = f.mean.len();
        if f.mean_sq.len() != n || f.tau.len() != n || f.count.len() != n {
            return Err("stat bank arrays differ in length".into());
        }
        if f.tau.iter().any(|t| t.is_nan() || *t < 1.0)
            || f.mean_sq.iter().any(|s| s.is_nan() || *s < 0.0)
        {
            return Err("stat bank violates tau >= 1 or mean_sq >= 0".into());
        }
        let stats = (0..n)
            .map(|i| MovingStat {
                mean: f.mean[i],
                mean_sq: f.mean_sq[i],
                tau: f.tau[i],
                count: f.count[i],
            })
            .collect();
        Ok(Self { stats })
    }
}

impl StatBank {
    pub fn new(dimension: usize) -> Self {
        Self {
            stats: vec![MovingStat::new(); dimension],
        }
    }

    pub fn from_stats(stats: Vec<MovingStat>) -> Self {
        Self { stats }
    }

    pub fn dimension(&self) -> usize {
        self.stats.len()
    }

    pub fn as_slice(&self) -> &[MovingStat] {
        &self.stats
    }

    pub fn means(&self) -> Vec<f64> {
        self.stats.iter().map(|s| s.mean).collect()
    }
}

impl std::ops::Index<usize> for StatBank {
    type Output = MovingStat;
    fn index(&self, i: usize) -> &MovingStat {
        &self.stats[i]
    }
}

impl std::ops::IndexMut<usize> for StatBank {
    fn index_mut(&mut self, i: usize) -> &mut MovingStat {
        &mut self.stats[i]
    }
}
