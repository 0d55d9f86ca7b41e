//! Sampling corpora from a known model, measuring the trained learner's exact
//! error, and an exhaustive oracle for the learner's expected error.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::learner::{
    train_mode_from_tally, Corpus, FallbackPolicy, Instance, LearnedMap, Prediction, Tally,
};
use crate::model::{BinId, ProcessorModel, ValueId};
use crate::rng;
use crate::sum::{self, Accumulator};

/// Largest number of corpora the oracle will enumerate.
pub const ORACLE_CAP: u64 = 10_000_000;

/// Draws `(bin, value)` pairs from a model.
#[derive(Debug, Clone)]
pub struct CorpusSampler {
    bins: WeightedIndex<f64>,
    values: Vec<Option<WeightedIndex<f64>>>,
}

impl CorpusSampler {
    pub fn new(model: &ProcessorModel) -> Result<Self> {
        let bins = WeightedIndex::new(model.bin_probs())
            .map_err(|e| Error::InvalidModel(format!("bin probabilities: {e}")))?;
        let values = model
            .bins()
            .map(|b| {
                if model.bin_prob(b) > 0.0 {
                    WeightedIndex::new(model.cond_row(b))
                        .map(Some)
                        .map_err(|e| {
                            Error::InvalidModel(format!("bin {}: {e}", model.domain().bin_label(b)))
                        })
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<_>>()?;
        Ok(CorpusSampler { bins, values })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Instance {
        let b = self.bins.sample(rng);
        let v = self.values[b]
            .as_ref()
            .expect("sampled bins have positive mass")
            .sample(rng);
        Instance::new(b, v)
    }

    pub fn corpus<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Corpus {
        Corpus::new((0..m).map(|_| self.draw(rng)).collect())
    }
}

/// `m` independent draws from `model`, reproducible from `seed`.
pub fn sample_corpus(model: &ProcessorModel, m: usize, seed: u64) -> Result<Corpus> {
    Ok(CorpusSampler::new(model)?.corpus(m, &mut rng::stream(seed, 0)))
}

fn predicted_error(model: &ProcessorModel, b: BinId, prediction: Prediction) -> f64 {
    let row = model.cond_row(b);
    match prediction {
        Prediction::Value(v) => 1.0 - row[v.0],
        Prediction::Uniform => 1.0 - sum::sum(row.iter().copied()) / row.len() as f64,
    }
}

/// Exact error of a trained map under the true model. Empty bins under the
/// uniform-random fallback are charged their expected error.
pub fn realized_error(model: &ProcessorModel, learned: &LearnedMap) -> f64 {
    sum::sum(
        model
            .bins()
            .map(|b| model.bin_prob(b) * predicted_error(model, b, learned.predict(b))),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub trials: usize,
    pub m: usize,
    pub seed: u64,
    pub policy: String,
    pub mean_error: f64,
    pub std_error: f64,
    /// Bin-probability mass left without training instances, averaged over trials.
    pub empty_bin_hit_rate: f64,
    pub empty_bin_std_error: f64,
    pub per_trial_errors: Vec<f64>,
}

fn mean_and_std_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = sum::sum(xs.iter().copied()) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = sum::sum(xs.iter().map(|x| (x - mean) * (x - mean))) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Seed for trial `t`; also keys the trial's tie-breaks.
pub fn trial_seed(seed: u64, t: usize) -> u64 {
    rng::mix(seed, t as u64)
}

pub fn monte_carlo(
    model: &ProcessorModel,
    m: usize,
    trials: usize,
    seed: u64,
    policy: FallbackPolicy,
) -> Result<SimulationResult> {
    monte_carlo_with(Exec::default(), model, m, trials, seed, policy)
}

/// Repeats sample, train, measure `trials` times. Trial `t` is fully determined
/// by `(seed, t)`, so the result does not depend on `exec` or the thread count.
pub fn monte_carlo_with(
    exec: Exec,
    model: &ProcessorModel,
    m: usize,
    trials: usize,
    seed: u64,
    policy: FallbackPolicy,
) -> Result<SimulationResult> {
    if trials == 0 {
        return Err(Error::NoTrials);
    }
    let sampler = CorpusSampler::new(model)?;
    let domain = model.domain();
    let outcomes = exec.map_range(trials, |t| -> Result<(f64, f64)> {
        let s = trial_seed(seed, t);
        let corpus = sampler.corpus(m, &mut rng::stream(s, 0));
        let tally = Tally::new(&corpus, domain)?;
        let learned = train_mode_from_tally(&tally, domain, policy, s)?;
        let empty = sum::sum(
            model
                .bins()
                .filter(|&b| learned.is_empty_bin(b))
                .map(|b| model.bin_prob(b)),
        );
        Ok((realized_error(model, &learned), empty))
    });
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let errors: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
    let empties: Vec<f64> = outcomes.iter().map(|o| o.1).collect();
    let (mean_error, std_error) = mean_and_std_error(&errors);
    let (empty_bin_hit_rate, empty_bin_std_error) = mean_and_std_error(&empties);
    Ok(SimulationResult {
        trials,
        m,
        seed,
        policy: policy.name().to_owned(),
        mean_error,
        std_error,
        empty_bin_hit_rate,
        empty_bin_std_error,
        per_trial_errors: errors,
    })
}

/// Number of corpora of length `m` over `cells` (bin, value) pairs, if within the cap.
fn oracle_size(cells: u64, m: usize) -> Result<u64> {
    let mut total: u64 = 1;
    for _ in 0..m {
        total = match total.checked_mul(cells) {
            Some(t) if t <= ORACLE_CAP => t,
            _ => return Err(Error::OracleTooLarge(format!("({cells})^{m}"), ORACLE_CAP)),
        };
    }
    Ok(total)
}

struct Oracle<'a> {
    model: &'a ProcessorModel,
    policy: FallbackPolicy,
    /// Reachable (bin, value, joint probability) cells.
    cells: Vec<(usize, usize, f64)>,
    num_values: usize,
}

/// Mutable enumeration state for one branch of the search.
struct Frame {
    counts: Vec<u64>,
    value_totals: Vec<u64>,
}

impl Oracle<'_> {
    /// Expected error of the learner on a fixed corpus (given by `frame`),
    /// averaging exactly over tied modes.
    fn corpus_error(&self, frame: &Frame) -> f64 {
        let v = self.num_values;
        let tie_mean = |counts: &[u64], row: &[f64]| {
            let top = counts.iter().copied().max().unwrap_or(0);
            let mut acc = Accumulator::default();
            let mut k = 0;
            for (c, p) in counts.iter().zip(row) {
                if *c == top {
                    acc.add(*p);
                    k += 1;
                }
            }
            acc.total() / k as f64
        };
        let mut total = Accumulator::default();
        for b in self.model.bins() {
            let p = self.model.bin_prob(b);
            if p <= 0.0 {
                continue;
            }
            let row = self.model.cond_row(b);
            let counts = &frame.counts[b.0 * v..(b.0 + 1) * v];
            let err = if counts.iter().any(|&c| c > 0) {
                1.0 - tie_mean(counts, row)
            } else {
                match self.policy {
                    FallbackPolicy::UniformRandom => 1.0 - sum::sum(row.iter().copied()) / v as f64,
                    FallbackPolicy::FixedDefault(ValueId(d)) => 1.0 - row[d],
                    FallbackPolicy::GlobalMode => 1.0 - tie_mean(&frame.value_totals, row),
                }
            };
            total.add(p * err);
        }
        total.total()
    }

    fn descend(&self, frame: &mut Frame, depth: usize, prob: f64, acc: &mut Accumulator) {
        if depth == 0 {
            acc.add(prob * self.corpus_error(frame));
            return;
        }
        for &(b, v, p) in &self.cells {
            frame.counts[b * self.num_values + v] += 1;
            frame.value_totals[v] += 1;
            self.descend(frame, depth - 1, prob * p, acc);
            frame.counts[b * self.num_values + v] -= 1;
            frame.value_totals[v] -= 1;
        }
    }

    fn fresh_frame(&self) -> Frame {
        Frame {
            counts: vec![0; self.model.num_bins() * self.num_values],
            value_totals: vec![0; self.num_values],
        }
    }
}

pub fn brute_force_expected_error(
    model: &ProcessorModel,
    m: usize,
    policy: FallbackPolicy,
) -> Result<f64> {
    brute_force_expected_error_with(Exec::default(), model, m, policy)
}

/// Exact `E[R(P_c)]` over every corpus of length `m`, each weighted by its
/// probability. Requires `(|B| |V|)^m <= ORACLE_CAP`.
///
/// Zero-probability corpora are skipped; they contribute nothing.
pub fn brute_force_expected_error_with(
    exec: Exec,
    model: &ProcessorModel,
    m: usize,
    policy: FallbackPolicy,
) -> Result<f64> {
    let num_values = model.num_values();
    oracle_size((model.num_bins() * num_values) as u64, m)?;
    if let FallbackPolicy::FixedDefault(v) = policy {
        if v.0 >= num_values {
            return Err(Error::DomainMismatch(format!(
                "unknown default value index {}",
                v.0
            )));
        }
    }
    let cells = model
        .bins()
        .flat_map(|b| (0..num_values).map(move |v| (b, v)))
        .map(|(b, v)| (b.0, v, model.bin_prob(b) * model.cond_prob(b, ValueId(v))))
        .filter(|c| c.2 > 0.0)
        .collect();
    let oracle = Oracle {
        model,
        policy,
        cells,
        num_values,
    };
    if m == 0 {
        return Ok(oracle.corpus_error(&oracle.fresh_frame()));
    }
    let branches = exec.map_range(oracle.cells.len(), |i| {
        let (b, v, p) = oracle.cells[i];
        let mut frame = oracle.fresh_frame();
        frame.counts[b * num_values + v] += 1;
        frame.value_totals[v] += 1;
        let mut acc = Accumulator::default();
        oracle.descend(&mut frame, m - 1, p, &mut acc);
        acc.total()
    });
    Ok(sum::sum(branches))
}
