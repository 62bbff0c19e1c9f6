//! Paired audio-text augmentation and multi-level test-time augmentation.
//!
//! The crate is organised bottom-up:
//!
//! - [`signal`]: WAV I/O, resampling, clip-length fixing and the log-mel transform.
//! - [`augment`]: uni-modal augmentations (Gaussian noise, reverb, SpecAugment, EDA)
//!   and the test-time halving rule.
//! - [`pairmix`]: the paired mixup generator and mini-batch composition.
//! - [`tta`]: multi-level test-time augmentation strategies and their executor.
//! - [`toy`]: a small seeded two-layer model used to exercise the TTA engine.
//! - [`pipeline`]: manifests, configuration and the dataset-level drivers behind the CLI.

pub mod augment;
pub mod error;
pub mod pairmix;
pub mod pipeline;
pub mod seed;
pub mod signal;
pub mod toy;
pub mod tta;

pub use error::{Error, Result};
pub use signal::{MelParams, MelSpectrogram, Waveform};
