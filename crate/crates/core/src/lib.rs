//! Data-requirement analysis for bin/value statistical learners.
//!
//! A learner sees instances `(bin, value)` drawn from a fixed joint
//! distribution and predicts, for each bin, the value it saw most often.
//! This crate computes exact error rates for such learners, closed-form upper
//! bounds on their expected error as a function of the training-set size, and
//! checks those bounds by simulation and exhaustive enumeration.
//!
//! Data-parallel loops run on rayon when the `parallel` feature is enabled
//! (the default); see [`Exec`].

pub mod binom;
pub mod bounds;
pub mod error;
pub mod exec;
pub mod ingest;
pub mod learner;
pub mod model;
pub mod report;
pub mod rng;
pub mod simulator;
pub mod sum;

pub use bounds::{
    bound_report, corpus_error_bound, empty_bin_mass_bounds, empty_bin_mass_exact,
    estimate_skew_params, factor_two_bound, skewed_empty_bound, u_bound, BoundReport,
    FallbackError, SkewParams,
};
pub use error::{Error, Result};
pub use exec::Exec;
pub use ingest::{
    extract_bigram_instances, extract_window_instances, instance_stats, tokenize, TokenStream,
};
pub use learner::{
    bin_instances, train_mle, train_mode, value_frequency, Corpus, FallbackPolicy, Instance,
    LearnedMap,
};
pub use model::{
    expected_error_rate, optimal_error_rate, slots, validate_model, BinId, DecisionMap, Domain,
    ProcessorModel, ValueId,
};
pub use report::{report_bundle, summarize_system, ReportBundle, SystemSummary};
pub use simulator::{
    brute_force_expected_error, monte_carlo, realized_error, sample_corpus, SimulationResult,
};
