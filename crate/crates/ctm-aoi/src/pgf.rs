//! Conditional PGFs of the contention resolution interval (CRI) duration and
//! of the decode slot of a tagged contender, plus recovery of their PMFs.
//!
//! Both PGFs follow first-step recursions over the fair binary split. PMFs
//! are recovered by sampling the PGFs on the unit circle and taking an
//! inverse DFT; the sample count is doubled adaptively until the mass that
//! could alias back into the reported window is certifiably negligible.

use std::sync::RwLock;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::numeric::BinomialTable;
use crate::pmf::Pmf;

/// Callers must keep sample points on the unit circle to this tolerance.
const UNIT_CIRCLE_TOL: f64 = 1e-12;
/// Aliased mass allowed beyond the certified half-window.
const TAIL_TOL: f64 = 1e-12;
/// Hard cap on the adaptive sample count.
const MAX_WINDOW: usize = 1 << 16;

/// Evaluates the CRI-duration and decode-slot PGFs by their recursions.
///
/// All contender counts up to `max_users` share one coefficient table; a
/// single upward pass produces the whole ladder of conditional PGF values at
/// one sample point.
#[derive(Debug)]
pub struct PgfEvaluator {
    max_users: usize,
    binom: BinomialTable,
    pow2: Vec<f64>,
}

impl PgfEvaluator {
    pub fn new(max_users: usize) -> Self {
        assert!(max_users >= 1, "population must be at least 1");
        assert!(max_users <= 1024, "population beyond supported range");
        let mut pow2 = Vec::with_capacity(max_users + 2);
        let mut v = 1.0;
        for _ in 0..=max_users + 1 {
            pow2.push(v);
            v *= 2.0;
        }
        Self { max_users, binom: BinomialTable::new(max_users), pow2 }
    }

    pub fn max_users(&self) -> usize {
        self.max_users
    }

    /// Fills `out` with the CRI-duration PGF values for 0..=`count`
    /// contenders at the sample point `z`.
    fn cri_ladder_into(&self, count: usize, z: Complex64, out: &mut Vec<Complex64>) {
        debug_assert!(count <= self.max_users);
        out.clear();
        // No contender and a single contender both finish in one slot.
        out.push(z);
        if count == 0 {
            return;
        }
        out.push(z);
        let z2 = z * z;
        for u in 2..=count {
            let mut sum = Complex64::new(0.0, 0.0);
            for i in 1..=(u - 1) / 2 {
                sum += self.binom.choose(u, i) * (out[i] * out[u - i]);
            }
            sum *= 2.0;
            if u % 2 == 0 {
                let mid = out[u / 2];
                sum += self.binom.choose(u, u / 2) * (mid * mid);
            }
            let denom = 2.0 * (self.pow2[u - 1] - z2);
            out.push(z * sum / denom);
        }
    }

    /// Fills `out[m]` with the decode-slot PGF for the tagged user against
    /// `m` other contenders, for m in 0..`rows`. Requires the CRI ladder at
    /// the same point, with at least `rows` entries.
    fn decode_ladder_into(
        &self,
        rows: usize,
        z: Complex64,
        cri: &[Complex64],
        out: &mut Vec<Complex64>,
    ) {
        debug_assert!(rows >= 1 && rows <= self.max_users);
        debug_assert!(cri.len() >= rows);
        out.clear();
        // Alone, the tagged user is decoded in the first slot.
        out.push(z);
        let one = Complex64::new(1.0, 0.0);
        for m in 1..rows {
            let mut sum = z * (one + cri[m]);
            for i in 1..m {
                sum += self.binom.choose(m, i) * (out[i] + cri[i] * out[m - i]);
            }
            let denom = self.pow2[m + 1] - z * (z + one);
            out.push(z * sum / denom);
        }
    }

    /// CRI-duration PGF conditioned on `u` contenders, evaluated at `z` on
    /// the unit circle.
    pub fn eval_cri_pgf(&self, u: usize, z: Complex64) -> Complex64 {
        assert!(u <= self.max_users, "contender count beyond table size");
        assert!((z.norm() - 1.0).abs() <= UNIT_CIRCLE_TOL, "sample point off the unit circle");
        let mut ladder = Vec::with_capacity(u + 1);
        self.cri_ladder_into(u, z, &mut ladder);
        ladder[u]
    }

    /// Decode-slot PGF for a CRI with `total_contenders` users in total, one
    /// of which is the tagged user (so an argument of 1 means the tagged
    /// user contends alone).
    pub fn eval_decode_pgf(&self, total_contenders: usize, z: Complex64) -> Complex64 {
        assert!(total_contenders >= 1, "the tagged user itself always contends");
        assert!(total_contenders <= self.max_users, "contender count beyond table size");
        assert!((z.norm() - 1.0).abs() <= UNIT_CIRCLE_TOL, "sample point off the unit circle");
        let mut cri = Vec::with_capacity(total_contenders);
        self.cri_ladder_into(total_contenders - 1, z, &mut cri);
        let mut dec = Vec::with_capacity(total_contenders);
        self.decode_ladder_into(total_contenders, z, &cri, &mut dec);
        dec[total_contenders - 1]
    }
}

/// Unaliased PMF windows recovered from the PGF samples.
///
/// `cri[u][v]` is the probability of a CRI of exactly `v` slots given `u`
/// contenders; `decode[m][v]` the probability that the tagged user, facing
/// `m` others, is decoded in slot `v`. Values up to half the window length
/// carry at most `1e-12` of aliasing error.
#[derive(Debug)]
pub(crate) struct Windows {
    len: usize,
    cri: Vec<Vec<f64>>,
    decode: Vec<Vec<f64>>,
}

impl Windows {
    pub(crate) fn len(&self) -> usize {
        self.len
    }

    pub(crate) fn cri(&self, u: usize) -> &[f64] {
        &self.cri[u]
    }

    pub(crate) fn decode(&self, m: usize) -> &[f64] {
        &self.decode[m]
    }
}

/// Shared cache of the PMF windows for every contender count up to the
/// population size.
///
/// The tables are grown on demand: a request that needs `w` exact support
/// points triggers a build at `max(64, 2w)` samples, doubled until the mass
/// beyond the half-window drops below `1e-12` for every row. Once built,
/// reads are lock-cheap and the data is immutable.
#[derive(Debug)]
pub struct PgfTables {
    evaluator: PgfEvaluator,
    windows: RwLock<Option<Windows>>,
}

impl PgfTables {
    pub fn new(max_users: usize) -> Self {
        Self { evaluator: PgfEvaluator::new(max_users), windows: RwLock::new(None) }
    }

    pub fn max_users(&self) -> usize {
        self.evaluator.max_users()
    }

    pub fn evaluator(&self) -> &PgfEvaluator {
        &self.evaluator
    }

    /// Guarantees windows whose first `min_exact` support points are exact
    /// to the aliasing tolerance.
    fn ensure(&self, min_exact: usize) -> Result<()> {
        let need = min_exact.max(32).checked_mul(2).unwrap().next_power_of_two().max(64);
        {
            let guard = self.windows.read().unwrap();
            if let Some(w) = guard.as_ref() {
                if w.len >= need {
                    return Ok(());
                }
            }
        }
        let mut guard = self.windows.write().unwrap();
        if let Some(w) = guard.as_ref() {
            if w.len >= need {
                return Ok(());
            }
        }
        let mut n = need;
        loop {
            let built = self.build(n);
            match Self::first_uncertified(&built) {
                None => {
                    *guard = Some(built);
                    return Ok(());
                }
                Some(row) => {
                    n *= 2;
                    if n > MAX_WINDOW {
                        return Err(Error::TailBudgetExceeded { contenders: row, window: n / 2 });
                    }
                }
            }
        }
    }

    /// Samples both PGF ladders on the `n`-point unit-circle grid and
    /// recovers the PMF windows by inverse FFT.
    fn build(&self, n: usize) -> Windows {
        let users = self.evaluator.max_users();
        let mut cri_rows = vec![vec![Complex64::new(0.0, 0.0); n]; users + 1];
        let mut dec_rows = vec![vec![Complex64::new(0.0, 0.0); n]; users];
        let mut cri_ladder = Vec::with_capacity(users + 1);
        let mut dec_ladder = Vec::with_capacity(users);
        // Real coefficients: samples at k and n-k are conjugate.
        for k in 0..=n / 2 {
            let angle = -2.0 * std::f64::consts::PI * k as f64 / n as f64;
            let z = Complex64::new(angle.cos(), angle.sin());
            self.evaluator.cri_ladder_into(users, z, &mut cri_ladder);
            self.evaluator.decode_ladder_into(users, z, &cri_ladder, &mut dec_ladder);
            for (u, &v) in cri_ladder.iter().enumerate() {
                cri_rows[u][k] = v;
                if k != 0 && k != n - k {
                    cri_rows[u][n - k] = v.conj();
                }
            }
            for (m, &v) in dec_ladder.iter().enumerate() {
                dec_rows[m][k] = v;
                if k != 0 && k != n - k {
                    dec_rows[m][n - k] = v.conj();
                }
            }
        }
        let mut planner = FftPlanner::new();
        let ifft = planner.plan_fft_inverse(n);
        let scale = 1.0 / n as f64;
        let to_real = |mut row: Vec<Complex64>| -> Vec<f64> {
            ifft.process(&mut row);
            row.iter().map(|c| c.re * scale).collect()
        };
        Windows {
            len: n,
            cri: cri_rows.into_iter().map(to_real).collect(),
            decode: dec_rows.into_iter().map(to_real).collect(),
        }
    }

    /// Returns the contender count of a row whose mass beyond the
    /// half-window is still above tolerance, if any.
    ///
    /// Both distributions have geometrically decaying tails, so a
    /// half-window mass below `1e-12` bounds the true tail beyond it and
    /// certifies every reported bin.
    fn first_uncertified(w: &Windows) -> Option<usize> {
        let half = w.len / 2;
        let tail_ok =
            |row: &[f64]| row[0].abs() <= TAIL_TOL && row[half..].iter().sum::<f64>() <= TAIL_TOL;
        for (u, row) in w.cri.iter().enumerate() {
            if !tail_ok(row) {
                return Some(u);
            }
        }
        for (m, row) in w.decode.iter().enumerate() {
            if !tail_ok(row) {
                return Some(m + 1);
            }
        }
        None
    }

    pub(crate) fn with_windows<T>(
        &self,
        min_exact: usize,
        f: impl FnOnce(&Windows) -> T,
    ) -> Result<T> {
        self.ensure(min_exact)?;
        let guard = self.windows.read().unwrap();
        Ok(f(guard.as_ref().expect("windows present after ensure")))
    }

    /// PMF of the CRI duration given `u` contenders, on `{1, ..., cap}`.
    ///
    /// Bins below `cap` are exact; bin `cap` receives the entire remaining
    /// tail, matching the early-termination duration law.
    pub fn cri_length_pmf(&self, u: usize, cap: usize) -> Result<Pmf> {
        assert!(u <= self.max_users(), "contender count beyond table size");
        assert!(cap >= 1, "cap must be at least 1");
        if u <= 1 {
            return Ok(Pmf::point_mass(1));
        }
        self.with_windows(cap, |w| fold_window(w.cri(u), cap))?
    }

    /// PMF of the tagged user's decode slot given `m` other contenders, on
    /// `{1, ..., cap}`, with the tail folded into bin `cap`.
    pub fn decode_slot_pmf(&self, m: usize, cap: usize) -> Result<Pmf> {
        assert!(m < self.max_users(), "other-contender count beyond table size");
        assert!(cap >= 1, "cap must be at least 1");
        if m == 0 {
            return Ok(Pmf::point_mass(1));
        }
        self.with_windows(cap, |w| fold_window(w.decode(m), cap))?
    }

    /// Probability that the tagged user facing `m` others is still
    /// undecoded when the CRI is cut after `l_max` slots.
    pub fn unresolved_prob(&self, m: usize, l_max: usize) -> Result<f64> {
        assert!(m < self.max_users(), "other-contender count beyond table size");
        assert!(l_max >= 1, "truncation must be at least 1 slot");
        if m == 0 {
            return Ok(0.0);
        }
        self.with_windows(l_max + 1, |w| {
            let decoded: f64 = w.decode(m)[1..=l_max].iter().sum();
            (1.0 - decoded).clamp(0.0, 1.0)
        })
    }

    /// Mean CRI duration given `u` contenders (unbounded protocol).
    pub fn cri_mean(&self, u: usize) -> Result<f64> {
        assert!(u <= self.max_users(), "contender count beyond table size");
        if u <= 1 {
            return Ok(1.0);
        }
        self.with_windows(64, |w| {
            w.cri(u).iter().enumerate().map(|(v, &p)| v as f64 * p).sum()
        })
    }

    /// Mean decode slot of the tagged user facing `m` others (unbounded).
    pub fn decode_mean(&self, m: usize) -> Result<f64> {
        assert!(m < self.max_users(), "other-contender count beyond table size");
        if m == 0 {
            return Ok(1.0);
        }
        self.with_windows(64, |w| {
            w.decode(m).iter().enumerate().map(|(v, &p)| v as f64 * p).sum()
        })
    }
}

/// Exact head bins plus a tail-sum bin at `cap`.
fn fold_window(row: &[f64], cap: usize) -> Result<Pmf> {
    let mut probs = Vec::with_capacity(cap);
    let mut head = 0.0;
    for v in 1..cap {
        let p = row[v].max(0.0);
        head += p;
        probs.push(p);
    }
    probs.push((1.0 - head).max(0.0));
    Pmf::new(1, probs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_point(frac: f64) -> Complex64 {
        let angle = 2.0 * std::f64::consts::PI * frac;
        Complex64::new(angle.cos(), angle.sin())
    }

    #[test]
    fn base_cases_equal_z() {
        let ev = PgfEvaluator::new(8);
        for frac in [0.0, 0.1, 0.37, 0.5, 0.9] {
            let z = unit_point(frac);
            assert!((ev.eval_cri_pgf(0, z) - z).norm() < 1e-15);
            assert!((ev.eval_cri_pgf(1, z) - z).norm() < 1e-15);
            assert!((ev.eval_decode_pgf(1, z) - z).norm() < 1e-15);
        }
    }

    #[test]
    fn two_contender_pgf_closed_form() {
        let ev = PgfEvaluator::new(4);
        for frac in [0.05, 0.21, 0.6, 0.83] {
            let z = unit_point(frac);
            let expect = z.powu(3) / (2.0 - z * z);
            assert!((ev.eval_cri_pgf(2, z) - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn normalization_at_one() {
        let ev = PgfEvaluator::new(40);
        let one = Complex64::new(1.0, 0.0);
        for u in 0..=40 {
            assert!((ev.eval_cri_pgf(u, one) - one).norm() < 1e-9, "cri u={u}");
        }
        for total in 1..=40 {
            assert!((ev.eval_decode_pgf(total, one) - one).norm() < 1e-9, "decode {total}");
        }
    }

    #[test]
    fn modulus_bounded_on_circle() {
        let ev = PgfEvaluator::new(30);
        let mut cri = Vec::new();
        let mut dec = Vec::new();
        for k in 0..64 {
            let z = unit_point(k as f64 / 64.0);
            ev.cri_ladder_into(30, z, &mut cri);
            ev.decode_ladder_into(30, z, &cri, &mut dec);
            for v in cri.iter().chain(dec.iter()) {
                assert!(v.norm() <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    #[should_panic(expected = "unit circle")]
    fn rejects_off_circle_points() {
        let ev = PgfEvaluator::new(4);
        ev.eval_cri_pgf(2, Complex64::new(0.5, 0.0));
    }

    #[test]
    fn trivial_pmfs_are_point_masses() {
        let t = PgfTables::new(4);
        for u in 0..=1 {
            let pmf = t.cri_length_pmf(u, 16).unwrap();
            assert_eq!(pmf.prob(1), 1.0);
        }
        let pmf = t.decode_slot_pmf(0, 16).unwrap();
        assert_eq!(pmf.prob(1), 1.0);
    }

    #[test]
    fn two_contender_cri_pmf() {
        let t = PgfTables::new(4);
        let pmf = t.cri_length_pmf(2, 64).unwrap();
        // Hand enumeration of the two-user split: immediate {1,1} split with
        // probability 1/2 ends in 3 slots; a same-group flip prepends 2 slots.
        assert!((pmf.prob(3) - 0.5).abs() < 1e-12);
        assert!(pmf.prob(4).abs() < 1e-12);
        assert!((pmf.prob(5) - 0.25).abs() < 1e-12);
        assert!((pmf.prob(7) - 0.125).abs() < 1e-12);
        assert!((pmf.total() - 1.0).abs() < 1e-9);
        assert!((t.cri_mean(2).unwrap() - 5.0).abs() < 1e-6);
    }

    #[test]
    fn one_rival_decode_pmf() {
        let t = PgfTables::new(4);
        let pmf = t.decode_slot_pmf(1, 64).unwrap();
        // Enumeration: decoded in slot 2 iff the tagged user alone picks the
        // first group (1/4); slot 3 adds the rival-first order (1/4) and the
        // both-first-group recursion (1/16).
        assert!((pmf.prob(2) - 0.25).abs() < 1e-12);
        assert!((pmf.prob(3) - 0.3125).abs() < 1e-12);
        assert!((t.decode_mean(1).unwrap() - 4.0).abs() < 1e-6);
    }

    #[test]
    fn truncated_two_contender_pmf() {
        let t = PgfTables::new(4);
        let pmf = t.cri_length_pmf(2, 4).unwrap();
        assert!((pmf.prob(3) - 0.5).abs() < 1e-12);
        assert!((pmf.prob(4) - 0.5).abs() < 1e-12);
        assert_eq!(pmf.support_max(), 4);
    }

    #[test]
    fn unresolved_probability_examples() {
        let t = PgfTables::new(8);
        assert_eq!(t.unresolved_prob(0, 1).unwrap(), 0.0);
        assert_eq!(t.unresolved_prob(0, 100).unwrap(), 0.0);
        // One rival, cut after 2 slots: survive unless alone in the first
        // group (probability 1/4).
        assert!((t.unresolved_prob(1, 2).unwrap() - 0.75).abs() < 1e-12);
        // Everyone is resolved eventually.
        for m in 1..8 {
            assert!(t.unresolved_prob(m, 512).unwrap() < 1e-9);
        }
    }

    #[test]
    fn decode_mass_splits_between_window_and_tail() {
        let t = PgfTables::new(12);
        for m in [1usize, 4, 11] {
            for l_max in [2usize, 5, 17] {
                let pmf = t.decode_slot_pmf(m, l_max + 1).unwrap();
                let within: f64 = (1..=l_max).map(|d| pmf.prob(d)).sum();
                let phi = t.unresolved_prob(m, l_max).unwrap();
                assert!((within + phi - 1.0).abs() < 1e-9, "m={m} l_max={l_max}");
            }
        }
    }

    #[test]
    fn cri_mean_strictly_increasing() {
        let t = PgfTables::new(30);
        let mut prev = t.cri_mean(1).unwrap();
        for u in 2..=30 {
            let mean = t.cri_mean(u).unwrap();
            assert!(mean > prev, "mean not increasing at u={u}");
            prev = mean;
        }
    }
}
