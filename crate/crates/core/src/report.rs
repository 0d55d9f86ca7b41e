//! Table-style system accounting (instances against slots) and the
//! bound-versus-simulation report.

use std::cmp::Ordering;
use std::io::{Read, Write};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::bounds::{
    corpus_error_bound, empty_bin_mass_bounds, empty_bin_mass_exact, FallbackError,
};
use crate::error::{Error, Result};
use crate::learner::FallbackPolicy;
use crate::model::{optimal_error_rate, ProcessorModel};
use crate::simulator::monte_carlo;

/// How a reported figure relates to the true quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Qualifier {
    #[default]
    Exact,
    Approx,
    AtLeast,
    AtMost,
    /// Between `low` and `value`.
    Range,
}

impl Qualifier {
    /// Qualifier of `a / b` given qualifiers of `a` and `b`.
    pub fn of_ratio(num: Qualifier, den: Qualifier) -> Qualifier {
        use Qualifier::*;
        match (num, den) {
            (Exact, Exact) => Exact,
            (Exact | AtLeast, AtMost) | (AtLeast, Exact) => AtLeast,
            (Exact | AtMost, AtLeast) | (AtMost, Exact) => AtMost,
            _ => Approx,
        }
    }

    pub fn symbol(&self) -> &'static str {
        match self {
            Qualifier::Exact | Qualifier::Range => "",
            Qualifier::Approx => "~",
            Qualifier::AtLeast => ">=",
            Qualifier::AtMost => "<=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub value: f64,
    #[serde(default)]
    pub qualifier: Qualifier,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// Measured on different data or under different conditions.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub different_conditions: bool,
}

impl Quantity {
    pub fn exact(value: f64) -> Self {
        Quantity {
            value,
            qualifier: Qualifier::Exact,
            low: None,
            note: None,
            different_conditions: false,
        }
    }
}

/// One row of the systems fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemEntry {
    pub name: String,
    pub training_source: String,
    pub m: Quantity,
    pub l: Quantity,
    #[serde(default)]
    pub accuracy: Option<f64>,
    #[serde(default)]
    pub human_accuracy: Option<Quantity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSummary {
    pub name: String,
    pub training_source: String,
    pub m: f64,
    pub m_qualifier: Qualifier,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "L_qualifier")]
    pub l_qualifier: Qualifier,
    /// `m / L`.
    pub ratio: f64,
    pub ratio_qualifier: Qualifier,
    pub accuracy: Option<f64>,
    pub human_accuracy: Option<Quantity>,
}

/// `m:L` accounting for one system.
pub fn summarize_system(
    name: &str,
    m: f64,
    l: f64,
    accuracy: Option<f64>,
) -> Result<SystemSummary> {
    SystemEntry {
        name: name.to_owned(),
        training_source: String::new(),
        m: Quantity::exact(m),
        l: Quantity::exact(l),
        accuracy,
        human_accuracy: None,
    }
    .summarize()
}

impl SystemEntry {
    pub fn summarize(&self) -> Result<SystemSummary> {
        let positive = self.m.value >= 1.0 && self.l.value >= 1.0;
        if !positive {
            return Err(Error::InvalidArgument(format!(
                "{}: instance count m = {} and slot count L = {} must both be positive",
                self.name, self.m.value, self.l.value
            )));
        }
        Ok(SystemSummary {
            name: self.name.clone(),
            training_source: self.training_source.clone(),
            m: self.m.value,
            m_qualifier: self.m.qualifier,
            l: self.l.value,
            l_qualifier: self.l.qualifier,
            ratio: self.m.value / self.l.value,
            ratio_qualifier: Qualifier::of_ratio(self.m.qualifier, self.l.qualifier),
            accuracy: self.accuracy,
            human_accuracy: self.human_accuracy.clone(),
        })
    }
}

/// The surveyed-systems fixture shipped with the crate.
pub const SYSTEMS_FIXTURE: &str = include_str!("../data/systems.json");

pub fn parse_systems(json: &str) -> Result<Vec<SystemEntry>> {
    Ok(serde_json::from_str(json)?)
}

pub fn builtin_systems() -> Vec<SystemEntry> {
    parse_systems(SYSTEMS_FIXTURE).expect("bundled fixture parses")
}

/// Summaries ordered by `m:L`, largest first.
pub fn summarize_systems(entries: &[SystemEntry]) -> Result<Vec<SystemSummary>> {
    let mut rows = entries
        .iter()
        .map(SystemEntry::summarize)
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| b.ratio.partial_cmp(&a.ratio).unwrap_or(Ordering::Equal));
    Ok(rows)
}

/// One grid point of the bound-versus-simulation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub m: u64,
    pub r_opt: f64,
    pub corpus_bound: f64,
    pub mc_mean: f64,
    pub mc_stderr: f64,
    pub w_exact: f64,
    pub w_exp_bound: f64,
    /// `mc_mean > corpus_bound + VIOLATION_SIGMAS * mc_stderr`.
    pub bound_violated: bool,
}

pub const VIOLATION_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub seed: u64,
    pub trials: usize,
    pub policy: String,
    pub num_bins: usize,
    pub num_values: usize,
    pub violations: usize,
    pub rows: Vec<ReportRow>,
}

/// Bounds and Monte Carlo at every grid point. The fallback policy drives both
/// the simulated learner and the empty-bin term of the bound.
pub fn report_bundle(
    model: &ProcessorModel,
    grid: &[u64],
    trials: usize,
    seed: u64,
    policy: FallbackPolicy,
) -> Result<ReportBundle> {
    let fallback = FallbackError::Policy(policy);
    let r_opt = optimal_error_rate(model);
    let mut rows = Vec::with_capacity(grid.len());
    for &m in grid {
        let mc = monte_carlo(model, m as usize, trials, seed, policy)?;
        let corpus_bound = corpus_error_bound(model, m, &fallback);
        rows.push(ReportRow {
            m,
            r_opt,
            corpus_bound,
            mc_mean: mc.mean_error,
            mc_stderr: mc.std_error,
            w_exact: empty_bin_mass_exact(model, m),
            w_exp_bound: empty_bin_mass_bounds(model.num_bins() as u64, m).1,
            bound_violated: mc.mean_error > corpus_bound + VIOLATION_SIGMAS * mc.std_error,
        });
    }
    Ok(ReportBundle {
        seed,
        trials,
        policy: policy.name().to_owned(),
        num_bins: model.num_bins(),
        num_values: model.num_values(),
        violations: rows.iter().filter(|r| r.bound_violated).count(),
        rows,
    })
}

pub fn write_csv<T: Serialize, W: Write>(rows: &[T], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned, R: Read>(r: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summarize_examples() {
        assert_eq!(
            summarize_system("Weischedel", 4e6, 1e5, Some(0.97))
                .unwrap()
                .ratio,
            40.0
        );
        assert_eq!(
            summarize_system("Lauer", 35_000.0, 1e6, Some(0.75))
                .unwrap()
                .ratio,
            0.035
        );
        assert_eq!(summarize_system("x", 10.0, 10.0, None).unwrap().ratio, 1.0);
        assert!(summarize_system("x", 0.0, 10.0, None).is_err());
        assert!(summarize_system("x", 10.0, -1.0, None).is_err());
    }

    #[test]
    fn ratio_qualifiers() {
        use Qualifier::*;
        assert_eq!(Qualifier::of_ratio(Exact, AtLeast), AtMost);
        assert_eq!(Qualifier::of_ratio(Exact, Approx), Approx);
        assert_eq!(Qualifier::of_ratio(AtLeast, AtLeast), Approx);
        assert_eq!(Qualifier::of_ratio(AtLeast, Exact), AtLeast);
    }

    #[test]
    fn fixture_sorted_by_ratio() {
        let rows = summarize_systems(&builtin_systems()).unwrap();
        let names: Vec<&str> = rows.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "Weischedel et al.",
                "Yarowsky",
                "Hindle & Rooth",
                "Lauer",
                "Resnik & Hearst"
            ]
        );
        assert_eq!(rows[4].ratio_qualifier, Qualifier::AtMost);
        assert_eq!(rows[2].ratio_qualifier, Qualifier::Approx);
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![ReportRow {
            m: 7,
            r_opt: 0.1 + 0.2,
            corpus_bound: 1.0 / 3.0,
            mc_mean: 0.123_456_789_012_345_67,
            mc_stderr: 1e-17,
            w_exact: 5e-324,
            w_exp_bound: std::f64::consts::E.recip(),
            bound_violated: false,
        }];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let back: Vec<ReportRow> = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
    }
}
