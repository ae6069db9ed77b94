//! End-to-end adversarial attacks on a mel-spectrogram CNN instrument classifier.
//!
//! Modules follow the data flow: [`audio`] loads and resamples clips, [`dsp`] turns
//! waveforms into normalized log-mel spectrograms (with gradients back to samples),
//! [`model`] is the CNN, [`attack`] perturbs waveforms against a frozen model, and
//! [`metrics`] scores the outcome.

pub mod attack;
pub mod audio;
pub mod dsp;
pub mod metrics;
pub mod model;
pub mod optim;
