//! Miniature one-stage grounding network: a small CNN backbone, coordinate
//! features, language-conditioned FiLM fusion at two strides, a context module
//! on the fused map, and an anchor-based localisation head trained with a
//! single-positive softmax loss.

mod boxes;
mod config;
mod model;
mod train;

pub use boxes::{
    anchor_box, assign_positive, cell_fraction, coord_features, decode, encode, sigmoid, Candidate, Prediction,
};
pub use config::{HeadVariant, ModelConfig, TrainConfig, ANCHORS_PER_SCALE, ANCHOR_OUTPUTS, COORD_CHANNELS};
pub use model::{scale_fuse, scale_unfuse, Context, Film, Forward, Network};
pub use train::{evaluate, predict_sample, sample_loss, score_predictions, train, EpochReport, Metrics};
