use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{check_probability, gate, AugStatus};
use crate::signal::Waveform;
use crate::{seed, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// SNR is drawn uniformly from `[low, high]` dB.
    pub snr_db_range: [f64; 2],
    pub probability: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            snr_db_range: [20.0, 40.0],
            probability: 0.5,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.snr_db_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidParameter(format!(
                "snr_db_range must satisfy low <= high, got [{lo}, {hi}]"
            )));
        }
        check_probability("noise probability", self.probability)
    }
}

/// Adds white Gaussian noise at an SNR drawn from the spec's range.
///
/// The realized noise is rescaled so that the measured SNR equals the drawn
/// value exactly. Silent input is returned unchanged with
/// [`AugStatus::SilentInput`].
pub fn add_gaussian_noise(
    w: &Waveform,
    spec: &NoiseSpec,
    rng_seed: u64,
) -> Result<(Waveform, AugStatus)> {
    spec.validate()?;
    let mut rng = seed::rng(rng_seed);
    if !gate(&mut rng, spec.probability) {
        return Ok((w.clone(), AugStatus::Skipped));
    }
    let signal_power = w.power();
    if signal_power == 0.0 {
        return Ok((w.clone(), AugStatus::SilentInput));
    }
    let [lo, hi] = spec.snr_db_range;
    let snr_db = if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    };

    let noise: Vec<f64> = (0..w.len()).map(|_| rng.sample(StandardNormal)).collect();
    let noise_power = noise.iter().map(|n| n * n).sum::<f64>() / noise.len() as f64;
    if noise_power == 0.0 {
        return Ok((w.clone(), AugStatus::Skipped));
    }
    let target_power = signal_power / 10f64.powf(snr_db / 10.0);
    let gain = (target_power / noise_power).sqrt();
    let out = w
        .samples()
        .iter()
        .zip(&noise)
        .map(|(&s, &n)| (f64::from(s) + gain * n) as f32)
        .collect();
    Ok((w.with_samples(out), AugStatus::Applied))
}
