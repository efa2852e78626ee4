//! Proximity classifier and covisibility-weighted proximity supervision.

pub mod descent;
pub mod loss;
pub mod mlp;
pub mod train;

pub use descent::{descend, DEFAULT_STEP};
pub use loss::{
    classify_cloud, proximity_loss, proximity_loss_grad, proximity_loss_naive, total_objective, weight_in,
    weight_out, weight_out_from, Classification, GaussianTerm, LossEval,
};
pub use mlp::{Normalization, ProximityModel, TrainMeta};
pub use train::{
    accuracy, default_r_neg, make_training_set, sampling_box, train_classifier, TrainOutcome, TrainingSet,
};
