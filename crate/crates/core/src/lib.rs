//! Multi-camera multi-target tracking with adaptive pairwise affinity.
//!
//! Generic over the scalar type; `f64` aliases are exported at the root and
//! `f32` aliases under [`single`].

pub mod affinity;
pub mod association;
pub mod error;
pub mod evaluation;
pub mod metric_train;
pub mod model;
pub mod scalar;
pub mod siamese;
pub mod synthgen;

pub use affinity::{
    build_affinity_matrix, calibrate_threshold, reid_affinity, siamese_affinity, siamese_forward, Affinity,
    ThresholdCalibration,
};
pub use association::{
    cc_objective, form_tracklets, mct_pass, run_tracker, sct_pass, solve_cc_exact, solve_cc_heuristic, Hypothesis,
    Partition, TrackerConfig,
};
pub use error::{Error, PairClass, Result};
pub use evaluation::{
    affinity_histograms, compare_affinity_errors, id_measures, scope_error_analysis, AffinityHistogram, IdReport,
    ScopeErrorReport,
};
pub use model::{
    majority_label, pool_feature, spans_overlap, windows_over, AffinityMatrix, BBox, CameraId, CameraRule, Detection,
    Feature, Frame, Scorable, ScopeKind, ScopeSpec, TemporalWindow, Tracklet, Trajectory,
};
pub use scalar::Scalar;
pub use synthgen::{generate_world, scope_pair_iter, ScopePair, SynthDataset, WorldConfig};
pub use siamese::{DenseLayer, Gradients, ProbPair, Provenance, SiameseModel, DEFAULT_TEMPERATURE, HIDDEN_WIDTHS};

pub type FeatureVec = Feature<f64>;
pub type Det = Detection<f64>;
pub type TrackletF64 = Tracklet<f64>;
pub type TrajectoryF64 = Trajectory<f64>;
pub type Matrix = AffinityMatrix<f64>;
pub type Metric = SiameseModel<f64>;
pub type Calibration = ThresholdCalibration<f64>;
pub type Tracker = TrackerConfig<f64>;

pub mod single {
    //! `f32` instantiations.
    use super::*;
    pub type FeatureVec = Feature<f32>;
    pub type Det = Detection<f32>;
    pub type TrackletF32 = Tracklet<f32>;
    pub type TrajectoryF32 = Trajectory<f32>;
    pub type Matrix = AffinityMatrix<f32>;
    pub type Metric = SiameseModel<f32>;
    pub type Calibration = ThresholdCalibration<f32>;
}
