//! Turning raw text into `(bin, value)` instances and counting them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::{Corpus, Instance};
use crate::model::{slots, Domain};

/// Bin label for the position before the first token.
pub const START: &str = "<s>";
/// Value label for the position after the last token.
pub const END: &str = "</s>";

/// Lowercased word tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStream {
    pub tokens: Vec<String>,
}

impl TokenStream {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Space-joined tokens; `tokenize` of this is the stream itself.
    pub fn render(&self) -> String {
        self.tokens.join(" ")
    }
}

impl<S: Into<String>> FromIterator<S> for TokenStream {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        TokenStream {
            tokens: iter.into_iter().map(Into::into).collect(),
        }
    }
}

/// Lowercase, split on whitespace, strip leading and trailing ASCII
/// punctuation. Internal apostrophes and hyphens survive.
pub fn tokenize(text: &str) -> TokenStream {
    text.split_whitespace()
        .map(|w| w.to_lowercase())
        .map(|w| {
            w.trim_matches(|c: char| c.is_ascii_punctuation())
                .to_owned()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// A corpus together with the labels it was built over.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledCorpus {
    pub domain: Domain,
    pub corpus: Corpus,
}

impl LabeledCorpus {
    fn push(&mut self, bin: &str, value: &str) {
        let bin = self.domain.intern_bin(bin);
        let value = self.domain.intern_value(value);
        self.corpus.push(Instance { bin, value });
    }
}

/// Next-word instances: `(START, w1), (w1, w2), ..., (wn, END)`.
pub fn extract_bigram_instances(tokens: &TokenStream) -> LabeledCorpus {
    let mut out = LabeledCorpus::default();
    if tokens.is_empty() {
        return out;
    }
    let t = &tokens.tokens;
    out.push(START, &t[0]);
    for pair in t.windows(2) {
        out.push(&pair[0], &pair[1]);
    }
    out.push(&t[t.len() - 1], END);
    out
}

/// Co-occurrence instances: for every full window of `width` tokens, pair its
/// first token with each of the other `width - 1`. A stream shorter than the
/// window yields a single truncated window.
pub fn extract_window_instances(tokens: &TokenStream, width: usize) -> Result<LabeledCorpus> {
    if width < 2 {
        return Err(Error::InvalidArgument(format!(
            "window width {width} must be at least 2"
        )));
    }
    let mut out = LabeledCorpus::default();
    let t = &tokens.tokens;
    let windows: Vec<&[String]> = if t.len() >= width {
        t.windows(width).collect()
    } else if t.is_empty() {
        Vec::new()
    } else {
        vec![&t[..]]
    };
    for w in windows {
        for other in &w[1..] {
            out.push(&w[0], other);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceStats {
    pub m: u64,
    pub observed_bins: u64,
    pub bin_histogram: BTreeMap<String, u64>,
    pub declared_num_values: u64,
    /// `observed_bins * (declared_num_values - 1)`.
    pub slots: u64,
    /// `m / observed_bins`, zero for an empty corpus.
    pub mean_instances_per_bin: f64,
}

pub fn instance_stats(
    corpus: &Corpus,
    domain: &Domain,
    declared_num_values: u64,
) -> Result<InstanceStats> {
    corpus.check_domain(domain)?;
    let mut bin_histogram = BTreeMap::new();
    for inst in corpus.instances() {
        *bin_histogram
            .entry(domain.bin_label(inst.bin).to_owned())
            .or_insert(0) += 1;
    }
    let m = corpus.len() as u64;
    let observed_bins = bin_histogram.len() as u64;
    Ok(InstanceStats {
        m,
        observed_bins,
        bin_histogram,
        declared_num_values,
        slots: slots(observed_bins, declared_num_values),
        mean_instances_per_bin: if observed_bins == 0 {
            0.0
        } else {
            m as f64 / observed_bins as f64
        },
    })
}
