//! Pair sampling under the three matching scopes and training of the Siamese metric.

mod gradcheck;
mod sampler;
mod schedule;
mod train;

pub use gradcheck::{compare_gradients, gradient_check};
pub use sampler::{
    gt_tracklet_observations, observations, sample_global_pairs, sample_inter_pairs, sample_intra_pairs,
    sample_pairs, LabeledPair, Observation, PairMeta, SamplerConfig, Scheme,
};
pub use schedule::cosine_lr;
pub use train::{train_metric, TrainConfig, TrainOutcome};
