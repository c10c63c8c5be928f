use std::fmt;

use crate::error::{Error, Result};

/// Contention resolution horizon: either cut every CRI at a fixed number of
/// slots (early termination) or let each CRI run until every contender is
/// resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Truncation {
    /// Early termination after the given number of slots (at least 2).
    AtSlots(usize),
    /// Plain protocol: CRIs are never cut short.
    Unbounded,
}

impl Truncation {
    pub fn is_finite(self) -> bool {
        matches!(self, Truncation::AtSlots(_))
    }

    pub fn finite(self) -> Option<usize> {
        match self {
            Truncation::AtSlots(l) => Some(l),
            Truncation::Unbounded => None,
        }
    }
}

impl fmt::Display for Truncation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Truncation::AtSlots(l) => write!(f, "{l}"),
            Truncation::Unbounded => write!(f, "inf"),
        }
    }
}

/// Static description of the access protocol and its traffic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolConfig {
    users: usize,
    gen_prob: f64,
    truncation: Truncation,
}

impl ProtocolConfig {
    /// Validates and builds a configuration.
    ///
    /// `gen_prob` is the per-slot, per-user generation probability. A finite
    /// truncation must be at least 2 slots: a one-slot cap would cut CRIs
    /// that consist of a single uncontended slot.
    pub fn new(users: usize, gen_prob: f64, truncation: Truncation) -> Result<Self> {
        if users < 1 {
            return Err(Error::InvalidConfig("population must be at least 1".into()));
        }
        if !gen_prob.is_finite() || !(0.0..=1.0).contains(&gen_prob) {
            return Err(Error::InvalidConfig(format!(
                "generation probability must lie in [0, 1], got {gen_prob}"
            )));
        }
        if let Truncation::AtSlots(l) = truncation {
            if l < 2 {
                return Err(Error::InvalidConfig(format!(
                    "finite truncation must be at least 2 slots, got {l}"
                )));
            }
        }
        Ok(Self { users, gen_prob, truncation })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn gen_prob(&self) -> f64 {
        self.gen_prob
    }

    pub fn truncation(&self) -> Truncation {
        self.truncation
    }

    /// Aggregate generation rate, `users * gen_prob`.
    pub fn aggregate_rate(&self) -> f64 {
        self.users as f64 * self.gen_prob
    }
}
