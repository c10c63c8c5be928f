use crate::error::{Error, Result};

/// Magnitude below which a negative reconstruction artifact is clamped to 0.
const NEG_CLAMP: f64 = 1e-10;
/// Normalization slack accepted at construction.
const SUM_TOL: f64 = 1e-9;

/// Finite-support probability mass function over consecutive integers.
///
/// This is the common currency of the analysis: CRI durations and decode
/// slots live on supports starting at 1, contender counts on supports
/// starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    support_min: usize,
    probs: Vec<f64>,
}

impl Pmf {
    /// Builds a PMF from raw weights.
    ///
    /// Entries with a negative value of magnitude below `1e-10` (floating
    /// point IDFT artifacts) are clamped to 0 and the vector renormalized;
    /// anything more negative, or a total mass off 1 by more than `1e-9`,
    /// is rejected.
    pub fn new(support_min: usize, mut probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidConfig("empty PMF support".into()));
        }
        for p in &mut probs {
            if !p.is_finite() {
                return Err(Error::InvalidConfig("non-finite PMF entry".into()));
            }
            if *p < 0.0 {
                if *p < -NEG_CLAMP {
                    return Err(Error::InvalidConfig(format!(
                        "negative PMF entry {p:.3e} exceeds the clamp threshold"
                    )));
                }
                *p = 0.0;
            }
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidConfig(format!(
                "PMF mass {total} deviates from 1 by more than {SUM_TOL:e}"
            )));
        }
        for p in &mut probs {
            *p /= total;
        }
        Ok(Self { support_min, probs })
    }

    /// A distribution concentrated on a single value.
    pub fn point_mass(value: usize) -> Self {
        Self { support_min: value, probs: vec![1.0] }
    }

    pub fn support_min(&self) -> usize {
        self.support_min
    }

    pub fn support_max(&self) -> usize {
        self.support_min + self.probs.len() - 1
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Probability of `value`; 0 outside the support.
    pub fn prob(&self, value: usize) -> f64 {
        if value < self.support_min {
            return 0.0;
        }
        self.probs.get(value - self.support_min).copied().unwrap_or(0.0)
    }

    /// Iterates `(value, probability)` pairs over the support.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.probs.iter().enumerate().map(|(i, &p)| (self.support_min + i, p))
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(v, p)| v as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.iter().map(|(v, p)| (v as f64 - m).powi(2) * p).sum()
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}
