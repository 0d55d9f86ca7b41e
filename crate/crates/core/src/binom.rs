//! Binomial coefficients and probabilities.
//!
//! Coefficients are exact `u128` integers up to `n = 64`. Beyond that every
//! quantity is carried in the log domain and accumulated term by term through
//! the ratio `C(n, k+1) / C(n, k) = (n - k) / (k + 1)`.

use crate::sum::Accumulator;

/// Largest `n` for which coefficients are computed in integer arithmetic.
pub const EXACT_LIMIT: u64 = 64;

/// `C(n, k)` exactly, for `n <= EXACT_LIMIT`.
pub fn choose_exact(n: u64, k: u64) -> Option<u128> {
    if n > EXACT_LIMIT {
        return None;
    }
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        // c * (n - i) is divisible by (i + 1) at every step
        c = c * u128::from(n - i) / u128::from(i + 1);
    }
    Some(c)
}

/// `ln C(n, k)`; `-inf` when `k > n`.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if let Some(c) = choose_exact(n, k) {
        return (c as f64).ln();
    }
    let k = k.min(n - k);
    let mut acc = Accumulator::default();
    for i in 0..k {
        acc.add(((n - i) as f64 / (i + 1) as f64).ln());
    }
    acc.total()
}

/// `Pr(X = k)` for `X ~ Binom(n, p)`.
pub fn pmf(n: u64, k: u64, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    if let Some(c) = choose_exact(n, k) {
        return c as f64 * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
    }
    (ln_choose(n, k) + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()).exp()
}

/// The whole distribution `[Pr(X = 0), ..., Pr(X = n)]` for `X ~ Binom(n, p)`.
pub fn pmf_row(n: u64, p: f64) -> Vec<f64> {
    let len = n as usize + 1;
    let mut row = vec![0.0; len];
    if p <= 0.0 {
        row[0] = 1.0;
        return row;
    }
    if p >= 1.0 {
        row[len - 1] = 1.0;
        return row;
    }
    if n <= EXACT_LIMIT {
        for (k, slot) in row.iter_mut().enumerate() {
            *slot = pmf(n, k as u64, p);
        }
        return row;
    }
    let log_odds = p.ln() - (-p).ln_1p();
    let mut log_term = Accumulator::default();
    log_term.add(n as f64 * (-p).ln_1p());
    row[0] = log_term.total().exp();
    for k in 0..n {
        log_term.add(((n - k) as f64 / (k + 1) as f64).ln());
        log_term.add(log_odds);
        row[k as usize + 1] = log_term.total().exp();
    }
    row
}

/// `Pr(X <= (n - 1) / 2)` for `X ~ Binom(n, q)` and odd `n`: the probability
/// that a value with per-draw probability `q` fails to take a strict majority.
pub fn minority_tail(q: f64, n: u64) -> f64 {
    debug_assert!(n % 2 == 1);
    if q <= 0.0 {
        return 1.0;
    }
    if q >= 1.0 {
        return 0.0;
    }
    let half = (n - 1) / 2;
    let mut acc = Accumulator::default();
    if n <= EXACT_LIMIT {
        for i in 0..=half {
            let c = choose_exact(n, i).expect("n within exact limit") as f64;
            acc.add(c * q.powi(i as i32) * (1.0 - q).powi((n - i) as i32));
        }
    } else {
        let ln_q = q.ln();
        let ln_r = (-q).ln_1p();
        let mut ln_c = Accumulator::default();
        for i in 0..=half {
            if i > 0 {
                ln_c.add(((n - i + 1) as f64 / i as f64).ln());
            }
            acc.add((ln_c.total() + i as f64 * ln_q + (n - i) as f64 * ln_r).exp());
        }
    }
    acc.total().clamp(0.0, 1.0)
}
