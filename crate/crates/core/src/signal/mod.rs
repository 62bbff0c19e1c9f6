//! Audio primitives: waveforms, WAV I/O, resampling and the log-mel transform.

mod mel;
mod resample;
mod wav;

pub use mel::{
    hz_to_mel, mel_filterbank, mel_to_hz, mel_transform, read_mels, write_mels, MelParams,
    MelSpectrogram, MelTransform, MELS_MAGIC, MELS_VERSION,
};
pub use resample::resample;
pub use wav::{load_wav, write_wav, SampleFormat};

use crate::{Error, Result};

/// Mono audio with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl Waveform {
    /// Builds a waveform, rejecting empty or non-finite audio.
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyAudio);
        }
        if sample_rate == 0 {
            return Err(Error::InvalidParameter(
                "sample rate must be positive".into(),
            ));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFiniteSample(i));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    /// Mean power of the samples.
    pub fn power(&self) -> f64 {
        self.samples
            .iter()
            .map(|&s| f64::from(s) * f64::from(s))
            .sum::<f64>()
            / self.samples.len() as f64
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }

    /// Replaces the samples while keeping the rate. Callers guarantee the
    /// new buffer is non-empty and finite.
    pub(crate) fn with_samples(&self, samples: Vec<f32>) -> Self {
        debug_assert!(!samples.is_empty());
        debug_assert!(samples.iter().all(|s| s.is_finite()));
        Self {
            samples,
            sample_rate: self.sample_rate,
        }
    }
}

/// Truncates or zero-pads at the end to exactly `round(seconds * rate)` samples.
pub fn fix_length(w: &Waveform, seconds: f64) -> Result<Waveform> {
    if !(seconds > 0.0) || !seconds.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "clip length must be positive, got {seconds}"
        )));
    }
    let target = (seconds * w.sample_rate as f64).round() as usize;
    fix_length_samples(w, target)
}

/// Same as [`fix_length`] with the target given in samples.
pub fn fix_length_samples(w: &Waveform, target: usize) -> Result<Waveform> {
    if target == 0 {
        return Err(Error::InvalidParameter(
            "target length is zero samples".into(),
        ));
    }
    if target == w.len() {
        return Ok(w.clone());
    }
    let mut samples = w.samples[..target.min(w.len())].to_vec();
    samples.resize(target, 0.0);
    Ok(w.with_samples(samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(n: usize, rate: u32) -> Waveform {
        Waveform::new((0..n).map(|i| (i % 97) as f32 / 97.0).collect(), rate).unwrap()
    }

    #[test]
    fn rejects_empty_and_nan() {
        assert!(matches!(
            Waveform::new(vec![], 16000),
            Err(Error::EmptyAudio)
        ));
        assert!(matches!(
            Waveform::new(vec![0.0, f32::NAN], 16000),
            Err(Error::NonFiniteSample(1))
        ));
    }

    #[test]
    fn fix_length_truncates_from_end() {
        let w = ramp(12 * 100, 100);
        let out = fix_length(&w, 10.0).unwrap();
        assert_eq!(out.len(), 1000);
        assert_eq!(out.samples(), &w.samples()[..1000]);
    }

    #[test]
    fn fix_length_pads_with_zeros() {
        let w = ramp(8 * 100, 100);
        let out = fix_length(&w, 10.0).unwrap();
        assert_eq!(out.len(), 1000);
        assert_eq!(&out.samples()[..800], w.samples());
        assert!(out.samples()[800..].iter().all(|&s| s == 0.0));
    }

    #[test]
    fn fix_length_identity() {
        let w = ramp(1000, 100);
        assert_eq!(fix_length(&w, 10.0).unwrap(), w);
    }

    #[test]
    fn fix_length_rejects_nonpositive() {
        assert!(fix_length(&ramp(10, 100), 0.0).is_err());
        assert!(fix_length(&ramp(10, 100), -1.0).is_err());
    }

    proptest! {
        #[test]
        fn fix_length_is_idempotent(n in 1usize..3000, secs in 0.01f64..40.0) {
            let w = ramp(n, 100);
            let once = fix_length(&w, secs).unwrap();
            let twice = fix_length(&once, secs).unwrap();
            prop_assert_eq!(once.len(), (secs * 100.0).round() as usize);
            prop_assert_eq!(once, twice);
        }
    }
}
