//! Closed-form data-requirement bounds for the mode learner.
//!
//! Two ingredients: how much test mass lands in bins that received no
//! training instances (`w`), and how far the error in a bin holding `n`
//! instances can sit above that bin's optimum (`U_n`). [`corpus_error_bound`]
//! mixes the per-bin bounds over the binomial distribution of `n`.

use serde::{Deserialize, Serialize};

use crate::binom;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::learner::FallbackPolicy;
use crate::model::{optimal_error_rate, BinId, ProcessorModel};
use crate::sum::{self, Accumulator};

/// Exact probability that a fresh test instance lands in a bin holding none of
/// `m` training instances: `w = sum_b p_b (1 - p_b)^m`.
pub fn empty_bin_mass_exact(model: &ProcessorModel, m: u64) -> f64 {
    sum::sum(
        model
            .bin_probs()
            .iter()
            .map(|&p| p * (1.0 - p).powf(m as f64)),
    )
}

/// `((1 - 1/|B|)^m, e^(-m/|B|))`: `w` under uniform bin probabilities, and its
/// exponential relaxation.
///
/// The first component bounds [`empty_bin_mass_exact`] only while every
/// `p_b <= 2 / (m + 1)`, where `p (1 - p)^m` is concave. Skewed models with
/// `m` well above `|B|` can exceed it.
pub fn empty_bin_mass_bounds(num_bins: u64, m: u64) -> (f64, f64) {
    assert!(num_bins >= 1, "need at least one bin");
    let b = num_bins as f64;
    ((1.0 - 1.0 / b).powf(m as f64), (-(m as f64) / b).exp())
}

/// `U_n`: upper bound on the expected error in a bin whose best value has
/// probability `q`, after training on `n >= 1` instances in that bin.
///
/// For odd `n` this is `1 - q * Pr(Binom(n, q) > n/2)`; even `n` uses `U_{n-1}`.
pub fn u_bound(q: f64, n: u64) -> f64 {
    assert!(n >= 1, "u_bound needs at least one instance");
    let odd = if n.is_multiple_of(2) { n - 1 } else { n };
    if odd == 1 {
        return 1.0 - q * q;
    }
    (1.0 - q) + q * binom::minority_tail(q, odd)
}

/// `U_1 ..= U_max_n` for one `q`, via a two-step recurrence on the minority tail
/// `T_n = Pr(Binom(n, q) <= (n - 1)/2)`:
///
/// `T_{n+2} = T_n + b_n (1 - q)^2 - a_n q^2`, where `a_n`, `b_n` are the binomial
/// masses at `(n - 1)/2` and `(n + 1)/2`, both scaling by `4 q (1 - q) (n + 2)/(n + 3)`.
#[derive(Debug, Clone)]
pub struct UBoundTable {
    q: f64,
    /// `odd_tails[k] = T_{2k+1}`.
    odd_tails: Vec<f64>,
}

impl UBoundTable {
    pub fn new(q: f64, max_n: u64) -> Self {
        let len = (max_n.max(1) as usize).div_ceil(2);
        let r = 1.0 - q;
        let mut odd_tails = Vec::with_capacity(len);
        let (mut a, mut b, mut t) = (r, q, r);
        let step = 4.0 * q * r;
        for k in 0..len {
            odd_tails.push(t.clamp(0.0, 1.0));
            let n = (2 * k + 1) as f64;
            t += b * r * r - a * q * q;
            let scale = step * (n + 2.0) / (n + 3.0);
            a *= scale;
            b *= scale;
        }
        UBoundTable { q, odd_tails }
    }

    pub fn get(&self, n: u64) -> f64 {
        assert!(n >= 1);
        let odd = if n.is_multiple_of(2) { n - 1 } else { n };
        if odd == 1 {
            return 1.0 - self.q * self.q;
        }
        (1.0 - self.q) + self.q * self.odd_tails[(odd / 2) as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorTwo {
    /// `U_1 = 1 - q^2`.
    pub u1: f64,
    /// `2 (1 - q)`.
    pub two_ropt: f64,
}

impl FactorTwo {
    pub fn accuracy_floor(&self) -> f64 {
        1.0 - self.u1
    }
}

pub fn factor_two_bound(q: f64) -> FactorTwo {
    FactorTwo {
        u1: 1.0 - q * q,
        two_ropt: 2.0 * (1.0 - q),
    }
}

/// Skew description: a low-probability bin subset `B'` of total mass `c`, and
/// the fraction `beta = |B''| / |B|` of bins outside it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkewParams {
    pub c: f64,
    pub beta: f64,
    /// `beta / (1 - c)`.
    pub beta_c: f64,
}

impl SkewParams {
    pub fn new(c: f64, beta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&c) {
            return Err(Error::InvalidArgument(format!(
                "skew mass c = {c} outside [0, 1)"
            )));
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "skew fraction beta = {beta} outside (0, 1]"
            )));
        }
        Ok(SkewParams {
            c,
            beta,
            beta_c: beta / (1.0 - c),
        })
    }

    /// Parameters of `model` for the subset `B' = { b : in_tail(b) }`.
    pub fn from_partition(model: &ProcessorModel, in_tail: impl Fn(BinId) -> bool) -> Result<Self> {
        let tail: Vec<BinId> = model.bins().filter(|&b| in_tail(b)).collect();
        let c = sum::sum(tail.iter().map(|&b| model.bin_prob(b)));
        let beta = 1.0 - tail.len() as f64 / model.num_bins() as f64;
        SkewParams::new(c, beta)
    }
}

/// `min(1, c + e^(-m / (beta_c |B|)))`.
pub fn skewed_empty_bound(params: &SkewParams, num_bins: u64, m: u64) -> f64 {
    let exp = (-(m as f64) / (params.beta_c * num_bins as f64)).exp();
    (params.c + exp).min(1.0)
}

/// Estimates `(c, beta)` from observed bin counts.
///
/// Bins are ordered by count ascending (ties by bin index) and `B'` is the
/// longest prefix whose empirical mass stays within `tail_mass`.
pub fn estimate_skew_params(counts: &[u64], tail_mass: f64) -> Result<SkewParams> {
    if !(0.0..1.0).contains(&tail_mass) {
        return Err(Error::InvalidArgument(format!(
            "tail mass {tail_mass} outside [0, 1)"
        )));
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::NoObservations);
    }
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by_key(|&b| (counts[b], b));
    let limit = tail_mass * total as f64 * (1.0 + 1e-12);
    let mut mass = 0u64;
    let mut taken = 0usize;
    for &b in &order {
        if (mass + counts[b]) as f64 > limit {
            break;
        }
        mass += counts[b];
        taken += 1;
    }
    SkewParams::new(
        mass as f64 / total as f64,
        1.0 - taken as f64 / counts.len() as f64,
    )
}

/// Error charged to an empty bin by [`corpus_error_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FallbackError {
    /// Every empty-bin prediction counts as wrong.
    Conservative,
    /// Analytic expected error of the learner's fallback policy.
    Policy(FallbackPolicy),
    /// Same as `Policy(FallbackPolicy::UniformRandom)`.
    #[default]
    DefaultPolicy,
}

impl FallbackError {
    pub fn for_bin(&self, model: &ProcessorModel, b: BinId) -> f64 {
        let row = model.cond_row(b);
        match self {
            FallbackError::Conservative => 1.0,
            FallbackError::Policy(FallbackPolicy::UniformRandom) | FallbackError::DefaultPolicy => {
                1.0 - sum::sum(row.iter().copied()) / row.len() as f64
            }
            FallbackError::Policy(FallbackPolicy::FixedDefault(v)) => 1.0 - row[v.0],
            // the global mode is corpus dependent; charge the worst value
            FallbackError::Policy(FallbackPolicy::GlobalMode) => {
                1.0 - row.iter().copied().fold(1.0, f64::min)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FallbackError::Conservative => "conservative",
            FallbackError::Policy(p) => p.name(),
            FallbackError::DefaultPolicy => FallbackPolicy::UniformRandom.name(),
        }
    }
}

fn bin_bound_term(model: &ProcessorModel, b: BinId, m: u64, fallback: &FallbackError) -> f64 {
    let p = model.bin_prob(b);
    if p <= 0.0 {
        return 0.0;
    }
    let weights = binom::pmf_row(m, p);
    let mut acc = Accumulator::default();
    acc.add(weights[0] * fallback.for_bin(model, b));
    if m > 0 {
        let table = UBoundTable::new(model.q(b), m);
        for (n, &w) in weights.iter().enumerate().skip(1) {
            if w > 0.0 {
                acc.add(w * table.get(n as u64));
            }
        }
    }
    p * acc.total()
}

/// Upper bound on the expected error of the mode learner after `m` instances:
///
/// `sum_b p_b [ Binom(0; m, p_b) fallback(b) + sum_{n>=1} Binom(n; m, p_b) U_n(q(b)) ]`,
/// clamped to `[0, 1]`.
pub fn corpus_error_bound(model: &ProcessorModel, m: u64, fallback: &FallbackError) -> f64 {
    corpus_error_bound_with(Exec::default(), model, m, fallback)
}

pub fn corpus_error_bound_with(
    exec: Exec,
    model: &ProcessorModel,
    m: u64,
    fallback: &FallbackError,
) -> f64 {
    let terms = exec.map_range(model.num_bins(), |b| {
        bin_bound_term(model, BinId(b), m, fallback)
    });
    sum::sum(terms).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinU {
    pub bin: String,
    pub p: f64,
    pub q: f64,
    pub opt_error: f64,
    pub u1: f64,
    pub u3: f64,
    pub u5: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub m: u64,
    pub num_bins: usize,
    pub fallback: String,
    pub w_exact: f64,
    pub w_finite_bound: f64,
    pub w_exp_bound: f64,
    /// Whether `w_exact <= w_finite_bound` held for this model.
    pub uniform_bound_holds: bool,
    pub per_bin_u: Vec<BinU>,
    pub corpus_bound: f64,
    pub r_opt: f64,
}

pub fn bound_report(model: &ProcessorModel, m: u64, fallback: &FallbackError) -> BoundReport {
    let w_exact = empty_bin_mass_exact(model, m);
    let (w_finite_bound, w_exp_bound) = empty_bin_mass_bounds(model.num_bins() as u64, m);
    let per_bin_u = model
        .bins()
        .map(|b| {
            let q = model.q(b);
            BinU {
                bin: model.domain().bin_label(b).to_owned(),
                p: model.bin_prob(b),
                q,
                opt_error: 1.0 - q,
                u1: u_bound(q, 1),
                u3: u_bound(q, 3),
                u5: u_bound(q, 5),
            }
        })
        .collect();
    BoundReport {
        m,
        num_bins: model.num_bins(),
        fallback: fallback.name().to_owned(),
        w_exact,
        w_finite_bound,
        w_exp_bound,
        uniform_bound_holds: w_exact <= w_finite_bound * (1.0 + 1e-12),
        per_bin_u,
        corpus_bound: corpus_error_bound(model, m, fallback),
        r_opt: optimal_error_rate(model),
    }
}

/// One row of the `curves` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub m: u64,
    pub w_exact: f64,
    pub w_finite: f64,
    pub w_exp: f64,
    pub corpus_bound: f64,
    pub r_opt: f64,
}

pub fn curves(model: &ProcessorModel, grid: &[u64], fallback: &FallbackError) -> Vec<CurveRow> {
    let r_opt = optimal_error_rate(model);
    grid.iter()
        .map(|&m| {
            let (w_finite, w_exp) = empty_bin_mass_bounds(model.num_bins() as u64, m);
            CurveRow {
                m,
                w_exact: empty_bin_mass_exact(model, m),
                w_finite,
                w_exp,
                corpus_bound: corpus_error_bound(model, m, fallback),
                r_opt,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ValueId;

    fn uniform(num_bins: usize, row: &[f64]) -> ProcessorModel {
        ProcessorModel::from_rows(
            vec![1.0 / num_bins as f64; num_bins],
            vec![row.to_vec(); num_bins],
        )
        .unwrap()
    }

    #[test]
    fn empty_mass_examples() {
        assert_eq!(empty_bin_mass_exact(&uniform(3, &[0.5, 0.5]), 0), 1.0);
        assert!((empty_bin_mass_exact(&uniform(2, &[0.5, 0.5]), 1) - 0.5).abs() < 1e-15);
        let w = empty_bin_mass_exact(&uniform(1000, &[0.5, 0.5]), 3000);
        assert!((w - 0.999f64.powi(3000)).abs() < 1e-12);
        assert!(w < 0.05 && (w - 0.0497).abs() < 1e-4);
    }

    #[test]
    fn empty_mass_bound_examples() {
        let (f, e) = empty_bin_mass_bounds(1000, 3000);
        assert!((f - 0.049_712_393_998).abs() < 1e-9);
        assert!((e - (-3.0f64).exp()).abs() < 1e-15 && f <= e);
        assert_eq!(empty_bin_mass_bounds(17, 0), (1.0, 1.0));
        let (f, e) = empty_bin_mass_bounds(1, 1);
        assert_eq!(f, 0.0);
        assert!((e - 0.367_879_441_171).abs() < 1e-11);
    }

    #[test]
    fn uniform_maximisation_fails_for_skewed_models() {
        // p (1 - p)^m is convex beyond p = 2/(m+1)
        let m = ProcessorModel::from_rows(vec![0.1, 0.9], vec![vec![1.0, 0.0]; 2]).unwrap();
        let w = empty_bin_mass_exact(&m, 10);
        assert!((w - (0.1 * 0.9f64.powi(10) + 0.9 * 0.1f64.powi(10))).abs() < 1e-15);
        assert!(w > empty_bin_mass_bounds(2, 10).0);
        assert!(!bound_report(&m, 10, &FallbackError::Conservative).uniform_bound_holds);
    }

    #[test]
    fn u_bound_examples() {
        assert!((u_bound(0.9, 3) - 0.1252).abs() < 1e-12);
        assert!((u_bound(0.9, 5) - 0.107_704).abs() < 1e-12);
        assert_eq!(u_bound(0.9, 4), u_bound(0.9, 3));
        for n in 1..20 {
            assert_eq!(u_bound(1.0, n), 0.0);
            assert_eq!(u_bound(0.0, n), 1.0);
        }
        assert!(u_bound(0.9, 3) <= 1.26 * 0.1 && u_bound(0.9, 5) <= 1.08 * 0.1);
    }

    #[test]
    fn u_bound_not_below_u1_when_q_below_half() {
        // majority voting hurts a value that is not a majority in expectation
        assert!((u_bound(0.3, 3) - 0.9352).abs() < 1e-12);
        assert!(u_bound(0.3, 3) > u_bound(0.3, 1));
    }

    #[test]
    fn u_bound_large_n_uses_log_domain() {
        // Binom(101, 0.5) is symmetric: the minority tail is exactly 1/2
        assert!((u_bound(0.5, 101) - 0.75).abs() < 1e-12);
        assert!((u_bound(0.5, 65) - 0.75).abs() < 1e-12);
        assert!(u_bound(0.6, 1001) - 0.4 < 1e-9);
    }

    #[test]
    fn table_matches_direct_evaluation() {
        for &q in &[0.0, 0.05, 0.3, 0.5, 0.51, 0.7, 0.9, 0.999, 1.0] {
            let table = UBoundTable::new(q, 501);
            for n in 1..=501 {
                let (t, d) = (table.get(n), u_bound(q, n));
                assert!(
                    (t - d).abs() <= 1e-12 * d.max(1e-300) + 1e-15,
                    "q={q} n={n} table={t} direct={d}"
                );
            }
        }
    }

    #[test]
    fn factor_two_examples() {
        let f = factor_two_bound(0.88);
        assert!((f.u1 - 0.2256).abs() < 1e-12 && (f.two_ropt - 0.24).abs() < 1e-12);
        assert!((f.accuracy_floor() - 0.7744).abs() < 1e-12);
        assert_eq!(
            factor_two_bound(1.0),
            FactorTwo {
                u1: 0.0,
                two_ropt: 0.0
            }
        );
        assert_eq!(
            factor_two_bound(0.5),
            FactorTwo {
                u1: 0.75,
                two_ropt: 1.0
            }
        );
    }

    #[test]
    fn skew_params_validate() {
        let s = SkewParams::new(0.05, 0.5).unwrap();
        assert!((s.beta_c - 0.5 / 0.95).abs() < 1e-12);
        assert!(SkewParams::new(1.0, 0.5).is_err());
        assert!(SkewParams::new(0.1, 0.0).is_err());
        assert!(SkewParams::new(-0.1, 0.5).is_err());
    }

    #[test]
    fn skewed_bound_examples() {
        let none = SkewParams::new(0.0, 1.0).unwrap();
        for (b, m) in [(10u64, 7u64), (1000, 3000), (3, 100)] {
            assert_eq!(
                skewed_empty_bound(&none, b, m),
                empty_bin_mass_bounds(b, m).1
            );
        }
        let s = SkewParams::new(0.05, 0.5).unwrap();
        assert!((skewed_empty_bound(&s, 100, 100) - (0.05 + (-1.9f64).exp())).abs() < 1e-12);
        assert!((skewed_empty_bound(&s, 100, 100) - 0.1996).abs() < 1e-4);
        assert_eq!(skewed_empty_bound(&s, 100, 0), 1.0);
    }

    #[test]
    fn estimate_skew_examples() {
        let s = estimate_skew_params(&[5, 5, 5, 5], 0.0).unwrap();
        assert_eq!((s.c, s.beta), (0.0, 1.0));
        let s = estimate_skew_params(&[98, 1, 1], 0.02).unwrap();
        assert!((s.c - 0.02).abs() < 1e-15);
        assert!((s.beta - 1.0 / 3.0).abs() < 1e-15);
        // boundary tie: only one of the two equal bins fits
        let s = estimate_skew_params(&[98, 1, 1], 0.015).unwrap();
        assert!((s.c - 0.01).abs() < 1e-15 && (s.beta - 2.0 / 3.0).abs() < 1e-15);
        // unobserved bins join B' first
        let s = estimate_skew_params(&[0, 10, 0, 10], 0.0).unwrap();
        assert_eq!((s.c, s.beta), (0.0, 0.5));
        assert!(matches!(
            estimate_skew_params(&[], 0.1),
            Err(Error::NoObservations)
        ));
        assert!(matches!(
            estimate_skew_params(&[0, 0], 0.1),
            Err(Error::NoObservations)
        ));
    }

    #[test]
    fn corpus_bound_collapses_for_deterministic_model() {
        let m = ProcessorModel::from_rows(
            vec![0.5, 0.3, 0.2],
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]],
        )
        .unwrap();
        for n in [1, 2, 5, 17] {
            let b = corpus_error_bound(&m, n, &FallbackError::Conservative);
            assert!((b - empty_bin_mass_exact(&m, n)).abs() < 1e-15);
        }
    }

    #[test]
    fn corpus_bound_single_bin() {
        let m = ProcessorModel::from_rows(vec![1.0], vec![vec![0.7, 0.3]]).unwrap();
        assert!((corpus_error_bound(&m, 1, &FallbackError::Conservative) - 0.51).abs() < 1e-15);
    }

    #[test]
    fn corpus_bound_approaches_ropt() {
        let m = ProcessorModel::from_rows(vec![0.6, 0.4], vec![vec![0.8, 0.2], vec![0.3, 0.7]])
            .unwrap();
        let r_opt = optimal_error_rate(&m);
        // with m = 200, Binom(200, 0.4) puts far more than 0.999 of its mass on n >= 9
        let b = corpus_error_bound(&m, 200, &FallbackError::Conservative);
        assert!(b >= r_opt && b - r_opt < 1e-3, "b={b} r_opt={r_opt}");
    }

    #[test]
    fn fallback_errors() {
        let m = ProcessorModel::from_rows(vec![1.0], vec![vec![0.7, 0.2, 0.1]]).unwrap();
        let b = BinId(0);
        assert_eq!(FallbackError::Conservative.for_bin(&m, b), 1.0);
        assert!((FallbackError::DefaultPolicy.for_bin(&m, b) - 2.0 / 3.0).abs() < 1e-15);
        let fixed = FallbackError::Policy(FallbackPolicy::FixedDefault(ValueId(1)));
        assert!((fixed.for_bin(&m, b) - 0.8).abs() < 1e-15);
        let global = FallbackError::Policy(FallbackPolicy::GlobalMode);
        assert!((global.for_bin(&m, b) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn parallel_and_sequential_agree_bitwise() {
        let p: Vec<f64> = (1..=40).map(|i| i as f64 / 820.0).collect();
        let cond = (0..40)
            .map(|i| vec![0.5 + i as f64 / 100.0, 0.5 - i as f64 / 100.0])
            .collect();
        let m = ProcessorModel::from_rows(p, cond).unwrap();
        let fb = FallbackError::DefaultPolicy;
        let a = corpus_error_bound_with(Exec::Sequential, &m, 300, &fb);
        let b = corpus_error_bound_with(Exec::Parallel, &m, 300, &fb);
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
