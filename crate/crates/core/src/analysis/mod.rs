//! Path metrics, Skorohod bounds, goodness-of-fit tests and condition values.

pub mod conditions;
pub mod metric;
pub mod skorohod;
pub mod stats;

pub use conditions::{condition_values, ConditionReport, LevelConditions, LimitEnvironment};
pub use metric::state_distance;
pub use skorohod::{
    best_bound, distortion_badness, match_distortion, skorohod_upper_bound, SkorohodBound, TimeDistortion,
};
pub use stats::{
    chi_square_gof, chi_square_homogeneity, chi_square_transitions, ks_one_sample, ks_two_sample, mean_se, median,
    KsResult, Reference, TestResult,
};
