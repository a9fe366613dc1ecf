//! Tracking metrics and pairwise affinity diagnostics.

pub mod hungarian;
pub mod idmeasures;
pub mod scopes;

pub use hungarian::hungarian;
pub use idmeasures::{id_measures, id_measures_from_correspondences, id_measures_iou, BoxLabel, Correspondence, IdReport};
pub use scopes::{
    affinity_histograms, compare_affinity_errors, histogram_range, scope_error_analysis, score_pairs, AffinityHistogram,
    ComparisonRow, ScopeErrorReport,
};
