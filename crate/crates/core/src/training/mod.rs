//! Real/fake discrimination training: balanced pair streams, Adam on
//! BCE-with-logits, early stopping on validation loss.

pub mod batches;
pub mod early_stop;
pub mod trainer;

pub use batches::{derive_seed, labeled_pairs, make_training_batches, LabeledPair, FAKE, REAL};
pub use early_stop::{EarlyStopping, Verdict};
pub use trainer::{
    evaluate_loss, loss_and_accuracy, split_sessions, train, train_with_observer, TrainConfig, TrainOutcome,
    TrainRecord, BEST_CHECKPOINT,
};
