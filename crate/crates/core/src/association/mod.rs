//! Correlation clustering and the hierarchical tracker built on it.

pub mod cc;
pub mod tracker;

pub use cc::{
    cc_objective, solve_cc_exact, solve_cc_exact_capped, solve_cc_heuristic, solve_cc_heuristic_with, Partition,
    DEFAULT_EXACT_CAP, DEFAULT_RESTARTS,
};
pub use tracker::{form_tracklets, mct_pass, run_tracker, sct_pass, Hypothesis, TrackerConfig};
