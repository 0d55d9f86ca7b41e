//! The probabilistic universe: bins, values, their joint distribution, and
//! exact error rates of decision maps over it.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sum;

/// Absolute tolerance on every probability-sum check.
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BinId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ValueId(pub usize);

#[derive(Debug, Clone, Default)]
struct Labels {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Labels {
    fn intern(&mut self, name: &str) -> usize {
        if let Some(&i) = self.index.get(name) {
            return i;
        }
        let i = self.names.len();
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), i);
        i
    }

    fn insert_unique(&mut self, name: &str, what: &str) -> Result<usize> {
        if self.index.contains_key(name) {
            return Err(Error::InvalidModel(format!("duplicate {what} id {name:?}")));
        }
        Ok(self.intern(name))
    }
}

/// Labelled index sets for bins and values.
#[derive(Debug, Clone, Default)]
pub struct Domain {
    bins: Labels,
    values: Labels,
}

impl PartialEq for Domain {
    fn eq(&self, other: &Self) -> bool {
        self.bins.names == other.bins.names && self.values.names == other.values.names
    }
}

impl Domain {
    pub fn new<B, V>(bins: B, values: V) -> Result<Self>
    where
        B: IntoIterator,
        B::Item: AsRef<str>,
        V: IntoIterator,
        V::Item: AsRef<str>,
    {
        let mut d = Domain::default();
        for b in bins {
            d.bins.insert_unique(b.as_ref(), "bin")?;
        }
        for v in values {
            d.values.insert_unique(v.as_ref(), "value")?;
        }
        Ok(d)
    }

    /// Domain with bins `b0..` and values `v0..`.
    pub fn indexed(num_bins: usize, num_values: usize) -> Self {
        Domain::new(
            (0..num_bins).map(|i| format!("b{i}")),
            (0..num_values).map(|i| format!("v{i}")),
        )
        .expect("generated labels are unique")
    }

    pub fn num_bins(&self) -> usize {
        self.bins.names.len()
    }

    pub fn num_values(&self) -> usize {
        self.values.names.len()
    }

    pub fn bin_label(&self, b: BinId) -> &str {
        &self.bins.names[b.0]
    }

    pub fn value_label(&self, v: ValueId) -> &str {
        &self.values.names[v.0]
    }

    pub fn bin_id(&self, label: &str) -> Option<BinId> {
        self.bins.index.get(label).copied().map(BinId)
    }

    pub fn value_id(&self, label: &str) -> Option<ValueId> {
        self.values.index.get(label).copied().map(ValueId)
    }

    pub fn intern_bin(&mut self, label: &str) -> BinId {
        BinId(self.bins.intern(label))
    }

    pub fn intern_value(&mut self, label: &str) -> ValueId {
        ValueId(self.values.intern(label))
    }

    pub fn bin_labels(&self) -> &[String] {
        &self.bins.names
    }

    pub fn value_labels(&self) -> &[String] {
        &self.values.names
    }
}

/// Known joint distribution over bins and values: `Pr(I = b)` and `Pr(J = v | I = b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessorModel {
    domain: Domain,
    bin_probs: Vec<f64>,
    cond: Vec<Vec<f64>>,
}

impl ProcessorModel {
    /// Checks shapes only. Numeric invariants are reported by [`validate_model`].
    pub fn new(domain: Domain, bin_probs: Vec<f64>, cond: Vec<Vec<f64>>) -> Result<Self> {
        if bin_probs.len() != domain.num_bins() || cond.len() != domain.num_bins() {
            return Err(Error::InvalidModel(format!(
                "{} bins declared but {} bin probabilities and {} conditional rows given",
                domain.num_bins(),
                bin_probs.len(),
                cond.len()
            )));
        }
        if let Some((b, row)) = cond
            .iter()
            .enumerate()
            .find(|(_, r)| r.len() != domain.num_values())
        {
            return Err(Error::InvalidModel(format!(
                "bin {:?} has {} conditional probabilities, expected {}",
                domain.bin_label(BinId(b)),
                row.len(),
                domain.num_values()
            )));
        }
        Ok(ProcessorModel {
            domain,
            bin_probs,
            cond,
        })
    }

    /// Convenience constructor over [`Domain::indexed`] labels.
    pub fn from_rows(bin_probs: Vec<f64>, cond: Vec<Vec<f64>>) -> Result<Self> {
        let num_values = cond.first().map_or(0, Vec::len);
        ProcessorModel::new(
            Domain::indexed(bin_probs.len(), num_values),
            bin_probs,
            cond,
        )
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn num_bins(&self) -> usize {
        self.bin_probs.len()
    }

    pub fn num_values(&self) -> usize {
        self.domain.num_values()
    }

    pub fn bin_probs(&self) -> &[f64] {
        &self.bin_probs
    }

    pub fn bin_prob(&self, b: BinId) -> f64 {
        self.bin_probs[b.0]
    }

    /// `Pr(J = · | I = b)`.
    pub fn cond_row(&self, b: BinId) -> &[f64] {
        &self.cond[b.0]
    }

    pub fn cond_prob(&self, b: BinId, v: ValueId) -> f64 {
        self.cond[b.0][v.0]
    }

    /// `q(b)`: probability of the most likely value in bin `b`.
    pub fn q(&self, b: BinId) -> f64 {
        self.cond[b.0].iter().copied().fold(0.0, f64::max)
    }

    /// The first value attaining `q(b)`.
    pub fn best_value(&self, b: BinId) -> ValueId {
        let row = &self.cond[b.0];
        let best = row
            .iter()
            .enumerate()
            .fold(0, |best, (v, &p)| if p > row[best] { v } else { best });
        ValueId(best)
    }

    pub fn bins(&self) -> impl ExactSizeIterator<Item = BinId> + '_ {
        (0..self.num_bins()).map(BinId)
    }

    /// Rescales bin probabilities and each conditional row to sum to one.
    /// Rows summing to zero are left untouched and still fail validation.
    pub fn renormalized(&self) -> Self {
        let scale = |row: &[f64]| {
            let s = sum::sum(row.iter().copied());
            if s > 0.0 {
                row.iter().map(|p| p / s).collect()
            } else {
                row.to_vec()
            }
        };
        ProcessorModel {
            domain: self.domain.clone(),
            bin_probs: scale(&self.bin_probs),
            cond: self.cond.iter().map(|r| scale(r)).collect(),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s)?;
        file.try_into()
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_file_format(&self) -> ModelFile {
        ModelFile {
            values: self
                .domain
                .value_labels()
                .iter()
                .cloned()
                .map(Label)
                .collect(),
            bins: self
                .bins()
                .map(|b| BinEntry {
                    id: Label(self.domain.bin_label(b).to_owned()),
                    p: self.bin_prob(b),
                    cond: self
                        .domain
                        .value_labels()
                        .iter()
                        .zip(self.cond_row(b))
                        .map(|(v, &p)| (v.clone(), p))
                        .collect(),
                })
                .collect(),
        }
    }
}

/// A bin or value identifier as it appears in a model file. Numbers are accepted
/// and kept as their decimal text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Label(pub String);

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Number(serde_json::Number),
        }
        Ok(match Raw::deserialize(d)? {
            Raw::Text(s) => Label(s),
            Raw::Number(n) => Label(n.to_string()),
        })
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// On-disk model: `{"values": [...], "bins": [{"id", "p", "cond": {value: prob}}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub values: Vec<Label>,
    pub bins: Vec<BinEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinEntry {
    pub id: Label,
    pub p: f64,
    /// Values missing from the map have probability zero.
    pub cond: BTreeMap<String, f64>,
}

impl TryFrom<ModelFile> for ProcessorModel {
    type Error = Error;

    fn try_from(file: ModelFile) -> Result<Self> {
        let domain = Domain::new(
            file.bins.iter().map(|b| b.id.0.as_str()),
            file.values.iter().map(|v| v.0.as_str()),
        )?;
        let mut cond = Vec::with_capacity(file.bins.len());
        for entry in &file.bins {
            let mut row = vec![0.0; domain.num_values()];
            for (label, &p) in &entry.cond {
                let v = domain.value_id(label).ok_or_else(|| {
                    Error::InvalidModel(format!(
                        "bin {:?} references unknown value {label:?}",
                        entry.id.0
                    ))
                })?;
                row[v.0] = p;
            }
            cond.push(row);
        }
        let bin_probs = file.bins.iter().map(|b| b.p).collect();
        ProcessorModel::new(domain, bin_probs, cond)
    }
}

/// One failed invariant: where, what, and by how much.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub location: String,
    pub message: String,
    pub residual: f64,
}

/// Lists every violated model invariant. An empty list means the model is valid.
pub fn validate_model(model: &ProcessorModel) -> Vec<Violation> {
    let mut out = Vec::new();
    let d = model.domain();
    if d.num_bins() == 0 {
        out.push(Violation {
            location: "bins".into(),
            message: "no bins".into(),
            residual: 1.0,
        });
    }
    if d.num_values() < 2 {
        out.push(Violation {
            location: "values".into(),
            message: format!("{} values, need at least 2", d.num_values()),
            residual: (2 - d.num_values()) as f64,
        });
    }
    for b in model.bins() {
        let p = model.bin_prob(b);
        if !(p >= 0.0 && p.is_finite()) {
            out.push(Violation {
                location: format!("bin {:?} p", d.bin_label(b)),
                message: format!("bin probability {p} is negative or not finite"),
                residual: p,
            });
        }
    }
    let total = sum::sum(model.bin_probs().iter().copied());
    let sums_to_one = (total - 1.0).abs() <= SUM_TOLERANCE;
    if !sums_to_one {
        out.push(Violation {
            location: "bin_probs".into(),
            message: format!("bin_probs sum {total}"),
            residual: total - 1.0,
        });
    }
    for b in model.bins() {
        let row = model.cond_row(b);
        for (v, &p) in row.iter().enumerate() {
            if !(p >= 0.0 && p.is_finite()) {
                out.push(Violation {
                    location: format!(
                        "bin {:?} cond {:?}",
                        d.bin_label(b),
                        d.value_label(ValueId(v))
                    ),
                    message: format!("conditional probability {p} is negative or not finite"),
                    residual: p,
                });
            }
        }
        let s = sum::sum(row.iter().copied());
        let sums_to_one = (s - 1.0).abs() <= SUM_TOLERANCE;
        if !sums_to_one {
            out.push(Violation {
                location: format!("bin {:?} cond", d.bin_label(b)),
                message: format!(
                    "conditional probabilities of bin {:?} sum {s}",
                    d.bin_label(b)
                ),
                residual: s - 1.0,
            });
        }
    }
    out
}

/// `L = |B| (|V| - 1)`, the number of free parameters of a conditional table.
pub fn slots(num_bins: u64, num_values: u64) -> u64 {
    num_bins * num_values.saturating_sub(1)
}

/// A total assignment of one value to every bin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionMap {
    assignment: Vec<ValueId>,
}

impl DecisionMap {
    pub fn new(assignment: Vec<ValueId>) -> Self {
        DecisionMap { assignment }
    }

    /// Picks an argmax value in every bin.
    pub fn optimal(model: &ProcessorModel) -> Self {
        DecisionMap::new(model.bins().map(|b| model.best_value(b)).collect())
    }

    pub fn get(&self, b: BinId) -> Option<ValueId> {
        self.assignment.get(b.0).copied()
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }
}

/// `R = sum_b p_b (1 - Pr(J = decision(b) | I = b))`.
pub fn expected_error_rate(model: &ProcessorModel, decision: &DecisionMap) -> Result<f64> {
    if decision.len() != model.num_bins() {
        return Err(Error::IncompleteDecision {
            expected: model.num_bins(),
            got: decision.len(),
        });
    }
    let mut terms = Vec::with_capacity(model.num_bins());
    for b in model.bins() {
        let v = decision.get(b).expect("length checked");
        if v.0 >= model.num_values() {
            return Err(Error::DomainMismatch(format!(
                "decision assigns unknown value index {}",
                v.0
            )));
        }
        terms.push(model.bin_prob(b) * (1.0 - model.cond_prob(b, v)));
    }
    Ok(sum::sum(terms))
}

/// `r_opt = sum_b p_b (1 - q(b))`.
pub fn optimal_error_rate(model: &ProcessorModel) -> f64 {
    sum::sum(model.bins().map(|b| model.bin_prob(b) * (1.0 - model.q(b))))
}
