#![allow(dead_code)]

use datareq::ProcessorModel;
use proptest::prelude::*;

/// Normalizes positive weights into a probability vector.
pub fn normalize(w: &[f64]) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

/// Random models with `1..=max_bins` bins and `2..=max_values` values.
pub fn arb_model(max_bins: usize, max_values: usize) -> impl Strategy<Value = ProcessorModel> {
    (1..=max_bins, 2..=max_values).prop_flat_map(|(nb, nv)| {
        (
            prop::collection::vec(0.01f64..1.0, nb),
            prop::collection::vec(prop::collection::vec(0.0f64..1.0, nv), nb),
        )
            .prop_filter("rows need mass", |(_, rows)| {
                rows.iter().all(|r| r.iter().sum::<f64>() > 1e-3)
            })
            .prop_map(|(p, rows)| {
                ProcessorModel::from_rows(
                    normalize(&p),
                    rows.iter().map(|r| normalize(r)).collect(),
                )
                .unwrap()
            })
    })
}
