//! Classification of tutor responses in educational dialogues into the
//! three pedagogical categories *No*, *To some extent* and *Yes*.
//!
//! The crate covers the whole pipeline: corpus loading and validation,
//! response sanitization, grouped k-fold splitting, class weighting,
//! per-fold training of a dropout + linear head over a pluggable sentence
//! encoder, hard-vote ensembling with mean-softmax tie-breaking, exact and
//! lenient metrics, and analysis exports.

pub mod analysis;
pub mod classify;
pub mod corpus;
pub mod desk;
pub mod ensemble;
mod error;
pub mod folds;
pub mod io;
pub mod metrics;
pub mod preprocess;
pub mod weights;

pub use classify::{
    Checkpoint, ClassificationHead, EncoderBackend, HashedNgramBackend, PredictionSet, TrainConfig,
};
pub use corpus::{Corpus, Dialogue, Label, LabelCounts, Track, Turn, TutorResponse};
pub use ensemble::{hard_vote, EnsembleResult};
pub use error::{Error, Result};
pub use folds::{grouped_kfold, verify_no_leakage, FoldPlan};
pub use metrics::{ConfusionMatrix, MetricsReport};
pub use weights::ClassWeightSpec;
