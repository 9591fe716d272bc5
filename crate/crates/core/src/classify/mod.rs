//! Per-fold classifiers: a sentence encoder behind [`EncoderBackend`], a
//! dropout + linear head, class-weighted cross-entropy, and checkpoint
//! selection on validation macro-F1.

mod backend;
mod head;
mod predictions;
mod train;

pub use backend::{backend_from_reference, EncoderBackend, HashedNgramBackend};
pub use head::{
    argmax, batch_weighted_cross_entropy, forward, head_gradients, softmax, weighted_cross_entropy,
    ClassificationHead, Forward, HeadGradients,
};
pub use predictions::{PredictionRow, PredictionSet};
pub use train::{
    predict_with_confidence, prepare_examples, train_fold, Checkpoint, EarlyStopping, EpochLog,
    Example, Schedule, StopDecision, TrainConfig, TrainOutcome,
};
