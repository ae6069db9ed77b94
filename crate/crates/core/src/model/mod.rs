//! CNN instrument classifier: layers, training, checkpoints and waveform-level inference.

mod checkpoint;
mod inference;
pub mod layers;
mod network;
pub mod tensor;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use inference::{evaluate, input_gradient, predict, Classifier, EvalReport, LabeledClip, LossTarget, SystemOutput};
pub use network::{cross_entropy, softmax, Architecture, ClassifierModel, ModelMode, NetTape, Prediction};
pub use train::{fit, fit_with_callback, EpochLog, TrainConfig};

use crate::dsp::FrontendError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("spectrogram has {got} frames, model needs at least {min}; pad first")]
    TooFewFrames { got: usize, min: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("model must be in eval mode")]
    NotEval,
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("non-finite training loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("class index {0} out of range")]
    ClassIndex(usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
