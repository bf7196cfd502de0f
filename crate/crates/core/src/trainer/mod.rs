//! Second-stage training with a softmax speaker classifier, and
//! verification-time scoring.

pub mod checkpoint;
pub mod eval;
pub mod model;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest};
pub use eval::{all_pairs_trials, compute_eer, cosine_score, evaluate, EerResult, EvalReport, Trial, TrialSet};
pub use model::{Model, ModelConfig, ModelMechanism, Selection, SelectionInfo, UtteranceEmbedding};
pub use train::{train_second_stage, train_until, OptimizerState, Sample, TrainConfig};
