//! Training corpora and the two learners over them: the per-bin mode learner
//! and the maximum-likelihood conditional table.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BinId, Domain, ValueId};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Instance {
    pub bin: BinId,
    pub value: ValueId,
}

impl Instance {
    pub fn new(bin: usize, value: usize) -> Self {
        Instance {
            bin: BinId(bin),
            value: ValueId(value),
        }
    }
}

/// Ordered multiset of training instances.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    instances: Vec<Instance>,
}

impl Corpus {
    pub fn new(instances: Vec<Instance>) -> Self {
        Corpus { instances }
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    /// `m`.
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn push(&mut self, instance: Instance) {
        self.instances.push(instance);
    }

    pub fn check_domain(&self, domain: &Domain) -> Result<()> {
        for (i, inst) in self.instances.iter().enumerate() {
            if inst.bin.0 >= domain.num_bins() {
                return Err(Error::DomainMismatch(format!(
                    "instance {i} has unknown bin index {}",
                    inst.bin.0
                )));
            }
            if inst.value.0 >= domain.num_values() {
                return Err(Error::DomainMismatch(format!(
                    "instance {i} has unknown value index {}",
                    inst.value.0
                )));
            }
        }
        Ok(())
    }

    /// Reads `bin<TAB>value` lines against a fixed domain. Blank lines are skipped.
    pub fn read_tsv<R: BufRead>(reader: R, domain: &Domain) -> Result<Self> {
        let mut corpus = Corpus::default();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            let Some((b, v)) = split_tsv(&line, n + 1)? else {
                continue;
            };
            let bin = domain.bin_id(b).ok_or_else(|| {
                Error::DomainMismatch(format!("line {}: unknown bin {b:?}", n + 1))
            })?;
            let value = domain.value_id(v).ok_or_else(|| {
                Error::DomainMismatch(format!("line {}: unknown value {v:?}", n + 1))
            })?;
            corpus.push(Instance { bin, value });
        }
        Ok(corpus)
    }

    /// Reads `bin<TAB>value` lines, growing `domain` with unseen labels.
    pub fn read_tsv_open<R: BufRead>(reader: R, domain: &mut Domain) -> Result<Self> {
        let mut corpus = Corpus::default();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            let Some((b, v)) = split_tsv(&line, n + 1)? else {
                continue;
            };
            let bin = domain.intern_bin(b);
            let value = domain.intern_value(v);
            corpus.push(Instance { bin, value });
        }
        Ok(corpus)
    }

    pub fn write_tsv<W: Write>(&self, domain: &Domain, mut w: W) -> Result<()> {
        self.check_domain(domain)?;
        for inst in &self.instances {
            writeln!(
                w,
                "{}\t{}",
                domain.bin_label(inst.bin),
                domain.value_label(inst.value)
            )?;
        }
        Ok(())
    }
}

fn split_tsv(line: &str, line_no: usize) -> Result<Option<(&str, &str)>> {
    let line = line.strip_suffix('\r').unwrap_or(line);
    if line.trim().is_empty() {
        return Ok(None);
    }
    let mut parts = line.split('\t');
    match (parts.next(), parts.next(), parts.next()) {
        (Some(b), Some(v), None) if !b.is_empty() && !v.is_empty() => Ok(Some((b, v))),
        _ => Err(Error::MalformedCorpus {
            line: line_no,
            reason: "expected exactly two non-empty tab-separated fields".into(),
        }),
    }
}

/// `t(b, c)`: the instances of `corpus` falling into `bin`, in corpus order.
pub fn bin_instances(corpus: &Corpus, bin: BinId) -> Vec<Instance> {
    corpus
        .instances
        .iter()
        .copied()
        .filter(|i| i.bin == bin)
        .collect()
}

/// `f(v, t)`: how many of `instances` carry `value`.
pub fn value_frequency(value: ValueId, instances: &[Instance]) -> usize {
    instances.iter().filter(|i| i.value == value).count()
}

/// Per-bin, per-value counts (`counts[b * |V| + v]`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tally {
    num_values: usize,
    counts: Vec<u64>,
}

impl Tally {
    pub fn new(corpus: &Corpus, domain: &Domain) -> Result<Self> {
        corpus.check_domain(domain)?;
        let num_values = domain.num_values();
        let mut counts = vec![0; domain.num_bins() * num_values];
        for inst in corpus.instances() {
            counts[inst.bin.0 * num_values + inst.value.0] += 1;
        }
        Ok(Tally { num_values, counts })
    }

    pub fn row(&self, b: BinId) -> &[u64] {
        &self.counts[b.0 * self.num_values..(b.0 + 1) * self.num_values]
    }

    /// `n = |t(b, c)|`.
    pub fn bin_total(&self, b: BinId) -> u64 {
        self.row(b).iter().sum()
    }

    pub fn value_totals(&self) -> Vec<u64> {
        let mut totals = vec![0; self.num_values];
        for row in self.counts.chunks(self.num_values.max(1)) {
            for (t, c) in totals.iter_mut().zip(row) {
                *t += c;
            }
        }
        totals
    }
}

/// What the mode learner predicts for a bin with no training instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FallbackPolicy {
    /// A uniformly random value, drawn per query.
    #[default]
    UniformRandom,
    FixedDefault(ValueId),
    /// The most frequent value in the whole corpus, ties broken by seed.
    GlobalMode,
}

impl FallbackPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            FallbackPolicy::UniformRandom => "uniform-random",
            FallbackPolicy::FixedDefault(_) => "fixed-default-value",
            FallbackPolicy::GlobalMode => "global-mode",
        }
    }

    /// Parses a policy name. `fixed-default-value` needs `default_value`.
    pub fn parse(name: &str, default_value: Option<&str>, domain: &Domain) -> Result<Self> {
        match name {
            "uniform-random" => Ok(FallbackPolicy::UniformRandom),
            "global-mode" => Ok(FallbackPolicy::GlobalMode),
            "fixed-default-value" => {
                let label = default_value.ok_or_else(|| {
                    Error::InvalidArgument("fixed-default-value needs a default value".into())
                })?;
                domain
                    .value_id(label)
                    .map(FallbackPolicy::FixedDefault)
                    .ok_or_else(|| Error::DomainMismatch(format!("unknown default value {label:?}")))
            }
            other => Err(Error::InvalidArgument(format!(
                "unknown fallback policy {other:?} (expected uniform-random, fixed-default-value or global-mode)"
            ))),
        }
    }
}

/// A learned prediction for one bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prediction {
    Value(ValueId),
    /// Any value with probability `1 / |V|`.
    Uniform,
}

/// The trained decision function: a mode per non-empty bin plus a fallback.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LearnedMap {
    assignment: Vec<Option<ValueId>>,
    fallback: FallbackPolicy,
    /// The fallback's value once resolved; `None` for [`FallbackPolicy::UniformRandom`].
    fallback_value: Option<ValueId>,
    seed: u64,
}

impl LearnedMap {
    /// `mode(b, c)`, or `None` for an empty bin.
    pub fn assignment(&self, b: BinId) -> Option<ValueId> {
        self.assignment.get(b.0).copied().flatten()
    }

    pub fn predict(&self, b: BinId) -> Prediction {
        match (self.assignment(b), self.fallback_value) {
            (Some(v), _) | (None, Some(v)) => Prediction::Value(v),
            (None, None) => Prediction::Uniform,
        }
    }

    pub fn fallback(&self) -> FallbackPolicy {
        self.fallback
    }

    pub fn fallback_value(&self) -> Option<ValueId> {
        self.fallback_value
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_bins(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty_bin(&self, b: BinId) -> bool {
        self.assignment(b).is_none()
    }

    pub fn to_export(&self, domain: &Domain) -> LearnedMapExport {
        LearnedMapExport {
            assignment: self
                .assignment
                .iter()
                .enumerate()
                .filter_map(|(b, v)| {
                    v.map(|v| {
                        (
                            domain.bin_label(BinId(b)).to_owned(),
                            domain.value_label(v).to_owned(),
                        )
                    })
                })
                .collect(),
            fallback: FallbackExport {
                policy: self.fallback.name().to_owned(),
                value: self
                    .fallback_value
                    .map(|v| domain.value_label(v).to_owned()),
            },
            seed: self.seed,
        }
    }

    pub fn from_export(export: &LearnedMapExport, domain: &Domain) -> Result<Self> {
        let value = |label: &str| {
            domain
                .value_id(label)
                .ok_or_else(|| Error::DomainMismatch(format!("unknown value {label:?}")))
        };
        let mut assignment = vec![None; domain.num_bins()];
        for (b, v) in &export.assignment {
            let bin = domain
                .bin_id(b)
                .ok_or_else(|| Error::DomainMismatch(format!("unknown bin {b:?}")))?;
            assignment[bin.0] = Some(value(v)?);
        }
        let fallback_value = export.fallback.value.as_deref().map(value).transpose()?;
        let fallback = match (export.fallback.policy.as_str(), fallback_value) {
            ("uniform-random", None) => FallbackPolicy::UniformRandom,
            ("fixed-default-value", Some(v)) => FallbackPolicy::FixedDefault(v),
            ("global-mode", Some(_)) => FallbackPolicy::GlobalMode,
            (p, _) => {
                return Err(Error::InvalidArgument(format!(
                    "bad fallback {p:?} in learned map"
                )))
            }
        };
        Ok(LearnedMap {
            assignment,
            fallback,
            fallback_value,
            seed: export.seed,
        })
    }
}

/// JSON form: `{"assignment": {bin: value}, "fallback": {...}, "seed": n}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearnedMapExport {
    pub assignment: BTreeMap<String, String>,
    pub fallback: FallbackExport,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallbackExport {
    pub policy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

/// Uniform pick among the values sharing the top count of `counts`,
/// drawn from the stream keyed by `(seed, key)`.
fn pick_mode(counts: &[u64], seed: u64, key: u64) -> ValueId {
    let top = counts.iter().copied().max().unwrap_or(0);
    let tied: Vec<usize> = (0..counts.len()).filter(|&v| counts[v] == top).collect();
    if tied.len() == 1 {
        return ValueId(tied[0]);
    }
    let mut r = rng::stream(rng::mix(seed, rng::TIE_SALT), key);
    ValueId(tied[r.random_range(0..tied.len())])
}

/// Trains the mode learner: each non-empty bin gets its most frequent value.
///
/// Frequency ties are resolved once, at training time, by a uniform draw keyed
/// on `(seed, bin)`; the same corpus, policy and seed always give the same map.
pub fn train_mode(
    corpus: &Corpus,
    domain: &Domain,
    policy: FallbackPolicy,
    seed: u64,
) -> Result<LearnedMap> {
    let tally = Tally::new(corpus, domain)?;
    train_mode_from_tally(&tally, domain, policy, seed)
}

pub fn train_mode_from_tally(
    tally: &Tally,
    domain: &Domain,
    policy: FallbackPolicy,
    seed: u64,
) -> Result<LearnedMap> {
    let assignment = (0..domain.num_bins())
        .map(BinId)
        .map(|b| (tally.bin_total(b) > 0).then(|| pick_mode(tally.row(b), seed, b.0 as u64)))
        .collect();
    let fallback_value = match policy {
        FallbackPolicy::UniformRandom => None,
        FallbackPolicy::FixedDefault(v) => {
            if v.0 >= domain.num_values() {
                return Err(Error::DomainMismatch(format!(
                    "unknown default value index {}",
                    v.0
                )));
            }
            Some(v)
        }
        FallbackPolicy::GlobalMode => Some(pick_mode(&tally.value_totals(), seed, u64::MAX)),
    };
    Ok(LearnedMap {
        assignment,
        fallback: policy,
        fallback_value,
        seed,
    })
}

/// Maximum-likelihood estimate of `Pr(J = v | I = b)`; empty bins are undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct MleTable {
    rows: Vec<Option<Vec<f64>>>,
}

impl MleTable {
    pub fn row(&self, b: BinId) -> Option<&[f64]> {
        self.rows.get(b.0).and_then(|r| r.as_deref())
    }

    pub fn get(&self, b: BinId, v: ValueId) -> Option<f64> {
        self.row(b).map(|r| r[v.0])
    }
}

pub fn train_mle(corpus: &Corpus, domain: &Domain) -> Result<MleTable> {
    let tally = Tally::new(corpus, domain)?;
    let rows = (0..domain.num_bins())
        .map(BinId)
        .map(|b| {
            let n = tally.bin_total(b);
            (n > 0).then(|| tally.row(b).iter().map(|&c| c as f64 / n as f64).collect())
        })
        .collect();
    Ok(MleTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(pairs: &[(usize, usize)]) -> Corpus {
        Corpus::new(pairs.iter().map(|&(b, v)| Instance::new(b, v)).collect())
    }

    #[test]
    fn bin_instances_filters_in_order() {
        let c = corpus(&[(0, 0), (1, 1), (0, 1)]);
        assert_eq!(
            bin_instances(&c, BinId(0)),
            vec![Instance::new(0, 0), Instance::new(0, 1)]
        );
        assert!(bin_instances(&c, BinId(2)).is_empty());
        assert!(bin_instances(&Corpus::default(), BinId(0)).is_empty());
    }

    #[test]
    fn value_frequency_counts() {
        let t = [
            Instance::new(0, 0),
            Instance::new(0, 0),
            Instance::new(0, 1),
        ];
        assert_eq!(value_frequency(ValueId(0), &t), 2);
        assert_eq!(value_frequency(ValueId(1), &t), 1);
        assert_eq!(value_frequency(ValueId(0), &[]), 0);
    }

    #[test]
    fn mode_strict_majority() {
        let d = Domain::indexed(1, 2);
        let m = train_mode(
            &corpus(&[(0, 0), (0, 0), (0, 1)]),
            &d,
            FallbackPolicy::UniformRandom,
            0,
        )
        .unwrap();
        assert_eq!(m.assignment(BinId(0)), Some(ValueId(0)));
    }

    #[test]
    fn mode_tie_is_seeded() {
        let d = Domain::indexed(1, 2);
        let c = corpus(&[(0, 0), (0, 1)]);
        let mut seen = [false; 2];
        for seed in 0..64 {
            let a = train_mode(&c, &d, FallbackPolicy::UniformRandom, seed).unwrap();
            let b = train_mode(&c, &d, FallbackPolicy::UniformRandom, seed).unwrap();
            assert_eq!(a, b);
            seen[a.assignment(BinId(0)).unwrap().0] = true;
        }
        assert_eq!(seen, [true, true]);
    }

    #[test]
    fn empty_corpus_uses_fallback() {
        let d = Domain::indexed(3, 2);
        let m = train_mode(&Corpus::default(), &d, FallbackPolicy::UniformRandom, 1).unwrap();
        assert!((0..3).all(|b| m.predict(BinId(b)) == Prediction::Uniform));
        let m = train_mode(
            &Corpus::default(),
            &d,
            FallbackPolicy::FixedDefault(ValueId(1)),
            1,
        )
        .unwrap();
        assert_eq!(m.predict(BinId(2)), Prediction::Value(ValueId(1)));
        let m = train_mode(
            &corpus(&[(0, 1), (0, 1), (1, 0)]),
            &d,
            FallbackPolicy::GlobalMode,
            1,
        )
        .unwrap();
        assert_eq!(m.predict(BinId(2)), Prediction::Value(ValueId(1)));
        assert_eq!(m.predict(BinId(1)), Prediction::Value(ValueId(0)));
    }

    #[test]
    fn domain_mismatch() {
        let d = Domain::indexed(1, 2);
        let err = train_mode(&corpus(&[(0, 2)]), &d, FallbackPolicy::UniformRandom, 0).unwrap_err();
        assert!(err.to_string().starts_with("domain mismatch"));
        assert!(train_mle(&corpus(&[(1, 0)]), &d).is_err());
    }

    #[test]
    fn mle_examples() {
        let d = Domain::indexed(2, 2);
        let t = train_mle(&corpus(&[(0, 0), (0, 0), (0, 1)]), &d).unwrap();
        assert!((t.get(BinId(0), ValueId(0)).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((t.get(BinId(0), ValueId(1)).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(t.row(BinId(1)).is_none());
        let t = train_mle(&corpus(&[(0, 0)]), &d).unwrap();
        assert_eq!(t.get(BinId(0), ValueId(0)), Some(1.0));
    }

    #[test]
    fn tsv_round_trip_and_errors() {
        let d = Domain::new(["x", "y"], ["p", "q"]).unwrap();
        let c = Corpus::read_tsv("x\tp\n\ny\tq\r\nx\tq\n".as_bytes(), &d).unwrap();
        assert_eq!(c, corpus(&[(0, 0), (1, 1), (0, 1)]));
        let mut out = Vec::new();
        c.write_tsv(&d, &mut out).unwrap();
        assert_eq!(Corpus::read_tsv(out.as_slice(), &d).unwrap(), c);

        assert!(matches!(
            Corpus::read_tsv("x\tp\tz\n".as_bytes(), &d),
            Err(Error::MalformedCorpus { line: 1, .. })
        ));
        assert!(matches!(
            Corpus::read_tsv("z\tp\n".as_bytes(), &d),
            Err(Error::DomainMismatch(_))
        ));

        let mut open = Domain::default();
        let c = Corpus::read_tsv_open("a\tb\nb\ta\n".as_bytes(), &mut open).unwrap();
        assert_eq!(open.num_bins(), 2);
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn export_round_trip() {
        let d = Domain::indexed(3, 3);
        for policy in [
            FallbackPolicy::UniformRandom,
            FallbackPolicy::FixedDefault(ValueId(2)),
            FallbackPolicy::GlobalMode,
        ] {
            let m = train_mode(&corpus(&[(0, 1), (2, 2), (2, 0)]), &d, policy, 9).unwrap();
            let json = serde_json::to_string(&m.to_export(&d)).unwrap();
            let back = LearnedMap::from_export(&serde_json::from_str(&json).unwrap(), &d).unwrap();
            assert_eq!(back, m);
        }
    }
}
