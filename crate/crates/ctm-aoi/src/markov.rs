//! Markov chain of consecutive CRI durations under early termination, its
//! stationary distribution, and the conditional contender laws that couple
//! one CRI to the next.

use nalgebra::{DMatrix, DVector};

use crate::config::{ProtocolConfig, Truncation};
use crate::error::{Error, Result};
use crate::numeric::BinomialTable;
use crate::pgf::PgfTables;
use crate::pmf::Pmf;

/// Residual accepted for the stationary fixed point.
const STATIONARY_TOL: f64 = 1e-10;
/// Power iteration fallback settings.
const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITERS: usize = 1_000_000;
/// Certification bound used when standing in for the unbounded protocol.
const PLAIN_TOL: f64 = 1e-9;
const PLAIN_START: usize = 128;
const PLAIN_MAX: usize = 1 << 16;

/// Probability that a user holds a fresh packet after an interval of
/// `slots` slots: `1 - (1 - rho)^slots`.
pub fn generation_prob(rho: f64, slots: usize) -> f64 {
    debug_assert!((0.0..=1.0).contains(&rho));
    debug_assert!(slots >= 1);
    // log1p/expm1 keep full precision for small rho.
    let ln_idle = (-rho).ln_1p();
    (-(slots as f64 * ln_idle).exp_m1()).clamp(0.0, 1.0)
}

/// Number of users contending in the CRI that follows one of `l_prev` slots.
///
/// `include_reference` counts the whole population (`Binomial(U, gamma)`);
/// without it the law covers the other users only (`Binomial(U-1, gamma)`).
pub fn contender_dist(cfg: &ProtocolConfig, l_prev: usize, include_reference: bool) -> Pmf {
    let n = if include_reference { cfg.users() } else { cfg.users() - 1 };
    let gamma = generation_prob(cfg.gen_prob(), l_prev);
    let row = BinomialTable::new(n).pmf_row(n, gamma);
    Pmf::new(0, row).expect("binomial row is a distribution")
}

/// Duration law of a CRI with `u` contenders cut at `l_max` slots: exact
/// below the cap, all remaining mass on the cap.
pub fn truncated_cri_pmf(tables: &PgfTables, u: usize, l_max: usize) -> Result<Pmf> {
    tables.cri_length_pmf(u, l_max)
}

/// Effective state-space size: the configured truncation, or a certified
/// finite stand-in for the unbounded protocol.
///
/// The stand-in doubles from 128 until the tagged user's unresolved
/// probability at full population and the at-or-beyond-cap mass of every
/// duration row drop below `1e-9`, making the truncated chain
/// indistinguishable from the unbounded one at that tolerance.
pub fn effective_truncation(cfg: &ProtocolConfig, tables: &PgfTables) -> Result<usize> {
    match cfg.truncation() {
        Truncation::AtSlots(l) => Ok(l),
        Truncation::Unbounded => {
            let users = cfg.users();
            let mut cap = PLAIN_START;
            loop {
                let phi = tables.unresolved_prob(users - 1, cap)?;
                let worst_tail = tables.with_windows(cap, |w| {
                    (2..=users)
                        .map(|u| 1.0 - w.cri(u)[1..cap].iter().sum::<f64>())
                        .fold(0.0f64, f64::max)
                })?;
                if phi < PLAIN_TOL && worst_tail < PLAIN_TOL {
                    return Ok(cap);
                }
                cap *= 2;
                if cap > PLAIN_MAX {
                    return Err(Error::PlainHorizonNotFound { users });
                }
            }
        }
    }
}

/// One-step transition matrix of the CRI-duration chain on `{1, ..., l_max}`.
#[derive(Debug, Clone)]
pub struct TransitionKernel {
    l_max: usize,
    rows: Vec<Vec<f64>>,
}

impl TransitionKernel {
    /// Builds the kernel for `cfg`, resolving an unbounded truncation to its
    /// certified finite stand-in.
    pub fn build(cfg: &ProtocolConfig, tables: &PgfTables) -> Result<Self> {
        let l_max = effective_truncation(cfg, tables)?;
        Self::build_resolved(cfg, tables, l_max)
    }

    pub(crate) fn build_resolved(
        cfg: &ProtocolConfig,
        tables: &PgfTables,
        l_max: usize,
    ) -> Result<Self> {
        let users = cfg.users();
        let duration = duration_rows(tables, users, l_max)?;
        let binom = BinomialTable::new(users);
        let rows = (1..=l_max)
            .map(|l_prev| {
                let gamma = generation_prob(cfg.gen_prob(), l_prev);
                let weights = binom.pmf_row(users, gamma);
                mix_rows(&weights, &duration, l_max)
            })
            .collect();
        Ok(Self { l_max, rows })
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    /// Transition probability from a CRI of `from` slots to one of `to`.
    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.rows[from - 1][to - 1]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.rows[from - 1]
    }

    /// `sum_l pi[l] * P(l, to)` for every `to`.
    fn propagate(&self, pi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.l_max];
        for (row, &weight) in self.rows.iter().zip(pi) {
            if weight == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(row) {
                *o += weight * p;
            }
        }
        out
    }
}

/// Duration PMFs over `{1, ..., l_max}` for every contender count, as dense
/// rows indexed by `u`.
pub(crate) fn duration_rows(
    tables: &PgfTables,
    users: usize,
    l_max: usize,
) -> Result<Vec<Vec<f64>>> {
    tables.with_windows(l_max, |w| {
        (0..=users)
            .map(|u| {
                let mut row = vec![0.0; l_max];
                if u <= 1 {
                    row[0] = 1.0;
                    return row;
                }
                let mut head = 0.0;
                for l in 1..l_max {
                    let p = w.cri(u)[l].max(0.0);
                    head += p;
                    row[l - 1] = p;
                }
                row[l_max - 1] = (1.0 - head).max(0.0);
                row
            })
            .collect()
    })
}

/// Mixes per-contender-count rows with binomial weights.
pub(crate) fn mix_rows(weights: &[f64], rows: &[Vec<f64>], width: usize) -> Vec<f64> {
    let mut out = vec![0.0; width];
    for (&weight, row) in weights.iter().zip(rows) {
        if weight == 0.0 {
            continue;
        }
        for (o, &p) in out.iter_mut().zip(row) {
            *o += weight * p;
        }
    }
    out
}

/// Stationary distribution of the CRI-duration chain.
#[derive(Debug, Clone)]
pub struct StationaryDist {
    probs: Vec<f64>,
}

impl StationaryDist {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Stationary probability of a CRI of `slots` slots.
    pub fn prob(&self, slots: usize) -> f64 {
        self.probs[slots - 1]
    }

    pub fn l1_residual(&self, kernel: &TransitionKernel) -> f64 {
        kernel
            .propagate(&self.probs)
            .iter()
            .zip(&self.probs)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

/// Solves `pi P = pi`, `sum pi = 1`.
///
/// A direct linear solve (one row of `P^T - I` replaced by the
/// normalization) is attempted first; power iteration refines or replaces
/// it if the residual is not met.
pub fn stationary_dist(kernel: &TransitionKernel) -> Result<StationaryDist> {
    let n = kernel.l_max();
    let mut best = direct_stationary(kernel).unwrap_or_else(|| vec![1.0 / n as f64; n]);
    normalize_clamped(&mut best);
    let mut dist = StationaryDist { probs: best };
    let mut residual = dist.l1_residual(kernel);
    if residual <= STATIONARY_TOL {
        return Ok(dist);
    }
    for _ in 0..POWER_MAX_ITERS {
        let mut next = kernel.propagate(&dist.probs);
        normalize_clamped(&mut next);
        dist.probs = next;
        residual = dist.l1_residual(kernel);
        if residual <= POWER_TOL {
            return Ok(dist);
        }
    }
    if residual <= STATIONARY_TOL {
        Ok(dist)
    } else {
        Err(Error::StationaryNotConverged { residual })
    }
}

fn direct_stationary(kernel: &TransitionKernel) -> Option<Vec<f64>> {
    let n = kernel.l_max();
    let mut m = DMatrix::from_fn(n, n, |r, c| {
        let p = kernel.prob(c + 1, r + 1);
        if r == c {
            p - 1.0
        } else {
            p
        }
    });
    for c in 0..n {
        m[(n - 1, c)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    m.lu().solve(&b).map(|x| x.iter().copied().collect())
}

fn normalize_clamped(v: &mut [f64]) {
    for x in v.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        for x in v.iter_mut() {
            *x /= total;
        }
    }
}
