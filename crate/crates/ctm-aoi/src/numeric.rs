//! Small numeric kernels shared by the analysis modules: binomial
//! coefficients and binomial PMF rows evaluated stably in log space.

/// Largest order for which Pascal's triangle stays exact in u128.
const EXACT_BINOMIAL_MAX: usize = 60;

/// Table of binomial coefficients C(n, k) for n up to a fixed order.
///
/// Rows up to order 60 come from exact integer Pascal recursion; larger
/// orders switch to the log-factorial route so that populations of hundreds
/// of users cannot overflow.
#[derive(Debug, Clone)]
pub struct BinomialTable {
    rows: Vec<Vec<f64>>,
    ln_fact: Vec<f64>,
}

impl BinomialTable {
    pub fn new(max_order: usize) -> Self {
        let ln_fact = ln_factorials(max_order);
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(max_order + 1);
        let mut exact: Vec<u128> = vec![1];
        for n in 0..=max_order {
            if n <= EXACT_BINOMIAL_MAX {
                if n > 0 {
                    let mut next = vec![1u128; n + 1];
                    for k in 1..n {
                        next[k] = exact[k - 1] + exact[k];
                    }
                    exact = next;
                }
                rows.push(exact.iter().map(|&c| c as f64).collect());
            } else {
                let row = (0..=n)
                    .map(|k| (ln_fact[n] - ln_fact[k] - ln_fact[n - k]).exp())
                    .collect();
                rows.push(row);
            }
        }
        Self { rows, ln_fact }
    }

    pub fn max_order(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn choose(&self, n: usize, k: usize) -> f64 {
        self.rows[n][k]
    }

    /// Binomial(n, p) PMF over {0, ..., n}.
    ///
    /// Evaluated term by term in log space; immune to the underflow of the
    /// usual `q^n` recurrence when p approaches 1.
    pub fn pmf_row(&self, n: usize, p: f64) -> Vec<f64> {
        assert!(n <= self.max_order(), "order {n} beyond table size");
        assert!((0.0..=1.0).contains(&p), "probability out of range: {p}");
        if n == 0 {
            return vec![1.0];
        }
        if p == 0.0 {
            let mut row = vec![0.0; n + 1];
            row[0] = 1.0;
            return row;
        }
        if p == 1.0 {
            let mut row = vec![0.0; n + 1];
            row[n] = 1.0;
            return row;
        }
        let ln_p = p.ln();
        let ln_q = (-p).ln_1p();
        let mut row: Vec<f64> = (0..=n)
            .map(|k| {
                let ln_c = self.ln_fact[n] - self.ln_fact[k] - self.ln_fact[n - k];
                (ln_c + k as f64 * ln_p + (n - k) as f64 * ln_q).exp()
            })
            .collect();
        let total: f64 = row.iter().sum();
        for v in &mut row {
            *v /= total;
        }
        row
    }
}

fn ln_factorials(max: usize) -> Vec<f64> {
    let mut t = vec![0.0; max + 1];
    for n in 1..=max {
        t[n] = t[n - 1] + (n as f64).ln();
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_small_coefficients() {
        let t = BinomialTable::new(10);
        assert_eq!(t.choose(5, 2), 10.0);
        assert_eq!(t.choose(10, 5), 252.0);
        assert_eq!(t.choose(10, 0), 1.0);
        assert_eq!(t.choose(10, 10), 1.0);
    }

    #[test]
    fn large_orders_match_log_route() {
        let t = BinomialTable::new(100);
        // C(100, 50) = 100891344545564193334812497256
        let exact = 1.00891344545564193e29;
        assert!((t.choose(100, 50) - exact).abs() / exact < 1e-12);
        // Transition point consistency.
        let t61 = t.choose(61, 30);
        let exact61 = 232714176627630544u128 as f64 * 1.0; // C(61,30)
        assert!((t61 - exact61).abs() / exact61 < 1e-12);
    }

    #[test]
    fn pmf_row_normalizes_and_matches_mean() {
        let t = BinomialTable::new(100);
        for &(n, p) in &[(100usize, 0.008), (99, 0.5), (100, 0.97), (7, 0.3)] {
            let row = t.pmf_row(n, p);
            let total: f64 = row.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            let mean: f64 = row.iter().enumerate().map(|(k, &v)| k as f64 * v).sum();
            assert!((mean - n as f64 * p).abs() < 1e-9, "mean {mean} vs {}", n as f64 * p);
        }
    }

    #[test]
    fn pmf_row_degenerate_endpoints() {
        let t = BinomialTable::new(20);
        let zero = t.pmf_row(20, 0.0);
        assert_eq!(zero[0], 1.0);
        assert_eq!(zero.iter().sum::<f64>(), 1.0);
        let one = t.pmf_row(20, 1.0);
        assert_eq!(one[20], 1.0);
    }
}
