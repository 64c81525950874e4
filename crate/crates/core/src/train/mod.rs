//! Losses, centroid bank, optimizer and the two-stage training loop.

mod centroid;
mod config;
mod losses;
mod objective;
mod trainer;

pub use centroid::{batch_centroids, centroid_loss, centroid_loss_grad, BatchCentroids, CentroidBank};
pub use config::{lr_at, Adam, TrainConfig};
pub use losses::{
    am_softmax_grad, am_softmax_loss, consistency_grad, consistency_loss, predict_probs, similarity_grad, similarity_loss,
    PseudoLabelBatch, LOG_EPS,
};
pub use objective::{
    evaluate_objective, pseudo_labels, stage1_loss, stage2_loss, stage2_prepare, Branch, LossBreakdown, LossRecipe,
    ObjectiveTerms, Stage1Batch, Stage2Batch, Stage2Frozen, Supervision,
};
pub use trainer::{run_stage, train_stage1, train_stage2, EpochRecord, StageRun, TrainReport};
