//! Uni-modal augmentations and the test-time halving rule.
//!
//! Every operation takes an explicit 64-bit seed and is deterministic given
//! `(input, spec, seed)`. Waveform augmentations that carry a probability
//! make exactly one uniform draw first to decide whether to apply, so the
//! gate decision does not depend on what is drawn afterwards.

mod eda;
mod noise;
mod reverb;
mod specaug;

pub use eda::{eda_augment, EdaOp, EdaSpec, Lexicon};
pub use noise::{add_gaussian_noise, NoiseSpec};
pub use reverb::{apply_reverb, fft_convolve, impulse_response, ReverbSpec};
pub use specaug::{apply_freq_mask, apply_time_mask, spec_augment, SpecAugmentSpec};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// What a gated augmentation did.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugStatus {
    /// The probability gate rejected the draw; output is the input.
    Skipped,
    Applied,
    /// The input had zero power; output is the input.
    SilentInput,
}

impl AugStatus {
    pub fn applied(self) -> bool {
        self == AugStatus::Applied
    }
}

/// The audio augmentation specs that share the test-time halving rule.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AudioAugSpecs {
    pub noise: NoiseSpec,
    pub reverb: ReverbSpec,
    pub specaug: SpecAugmentSpec,
}

impl AudioAugSpecs {
    /// Specs with every augmentation disabled.
    pub fn disabled() -> Self {
        Self {
            noise: NoiseSpec {
                probability: 0.0,
                ..NoiseSpec::default()
            },
            reverb: ReverbSpec {
                probability: 0.0,
                ..ReverbSpec::default()
            },
            specaug: SpecAugmentSpec {
                max_time_width: 0,
                max_freq_width: 0,
                ..SpecAugmentSpec::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        self.reverb.validate()?;
        Ok(())
    }

    /// Test-time variant: halves SpecAugment mask widths (rounding down),
    /// the reverb decay, and both application probabilities.
    pub fn halved(&self) -> Self {
        halve_for_test_time(self)
    }
}

pub fn halve_for_test_time(train: &AudioAugSpecs) -> AudioAugSpecs {
    AudioAugSpecs {
        noise: NoiseSpec {
            probability: train.noise.probability * 0.5,
            ..train.noise.clone()
        },
        reverb: ReverbSpec {
            decay_seconds: train.reverb.decay_seconds * 0.5,
            probability: train.reverb.probability * 0.5,
            ..train.reverb.clone()
        },
        specaug: SpecAugmentSpec {
            max_time_width: train.specaug.max_time_width / 2,
            max_freq_width: train.specaug.max_freq_width / 2,
            ..train.specaug.clone()
        },
    }
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must lie in [0, 1], got {p}"
        )))
    }
}

/// The leading gate draw shared by the waveform augmentations.
fn gate(rng: &mut impl Rng, probability: f64) -> bool {
    rng.random::<f64>() < probability
}
