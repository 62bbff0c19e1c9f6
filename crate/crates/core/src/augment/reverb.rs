use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{check_probability, gate, AugStatus};
use crate::signal::Waveform;
use crate::{seed, Error, Result};

/// ln(10^3): amplitude decays by 60 dB over `decay_seconds`.
const DECAY_60DB: f64 = 6.91;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReverbSpec {
    /// Time for the impulse response to fall by 60 dB.
    pub decay_seconds: f64,
    pub wet_mix: f64,
    pub probability: f64,
}

impl Default for ReverbSpec {
    fn default() -> Self {
        Self {
            decay_seconds: 0.3,
            wet_mix: 0.5,
            probability: 0.5,
        }
    }
}

impl ReverbSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.decay_seconds > 0.0 && self.decay_seconds.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "decay_seconds must be positive, got {}",
                self.decay_seconds
            )));
        }
        check_probability("wet_mix", self.wet_mix)?;
        check_probability("reverb probability", self.probability)
    }
}

/// Exponentially decaying Gaussian-noise impulse response, peak-normalized,
/// `round(decay_seconds * sample_rate)` taps long (at least one).
pub fn impulse_response(sample_rate: u32, decay_seconds: f64, rng: &mut impl Rng) -> Vec<f64> {
    let fs = f64::from(sample_rate);
    let len = ((decay_seconds * fs).round() as usize).max(1);
    let mut h: Vec<f64> = (0..len)
        .map(|k| {
            let g: f64 = rng.sample(StandardNormal);
            g * (-DECAY_60DB * k as f64 / (fs * decay_seconds)).exp()
        })
        .collect();
    let peak = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        h.iter_mut().for_each(|v| *v /= peak);
    } else {
        h[0] = 1.0;
    }
    h
}

/// Linear convolution via FFT; output length `x.len() + h.len() - 1`.
pub fn fft_convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let out_len = x.len() + h.len() - 1;
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let to_complex = |v: &[f64]| {
        let mut buf: Vec<Complex<f64>> = v.iter().map(|&r| Complex::new(r, 0.0)).collect();
        buf.resize(n, Complex::new(0.0, 0.0));
        buf
    };
    let mut xa = to_complex(x);
    let mut ha = to_complex(h);
    fwd.process(&mut xa);
    fwd.process(&mut ha);
    for (a, b) in xa.iter_mut().zip(&ha) {
        *a *= b;
    }
    inv.process(&mut xa);
    let scale = 1.0 / n as f64;
    xa[..out_len].iter().map(|c| c.re * scale).collect()
}

/// Convolves with a synthetic decaying-noise impulse response and mixes
/// `(1 - wet) * dry + wet * (dry * h)`, truncated to the input length. The
/// result is peak-renormalized only when it exceeds unit amplitude.
pub fn apply_reverb(
    w: &Waveform,
    spec: &ReverbSpec,
    rng_seed: u64,
) -> Result<(Waveform, AugStatus)> {
    spec.validate()?;
    let mut rng = seed::rng(rng_seed);
    if !gate(&mut rng, spec.probability) || spec.wet_mix == 0.0 {
        return Ok((w.clone(), AugStatus::Skipped));
    }
    let h = impulse_response(w.sample_rate(), spec.decay_seconds, &mut rng);
    let dry: Vec<f64> = w.samples().iter().map(|&s| f64::from(s)).collect();
    let wet = fft_convolve(&dry, &h);
    let mut out: Vec<f64> = dry
        .iter()
        .zip(&wet)
        .map(|(&d, &r)| (1.0 - spec.wet_mix) * d + spec.wet_mix * r)
        .collect();
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 1.0 {
        out.iter_mut().for_each(|v| *v /= peak);
    }
    Ok((
        w.with_samples(out.into_iter().map(|v| v as f32).collect()),
        AugStatus::Applied,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len() + h.len() - 1];
        for (i, &a) in x.iter().enumerate() {
            for (j, &b) in h.iter().enumerate() {
                y[i + j] += a * b;
            }
        }
        y
    }

    #[test]
    fn fft_convolution_matches_direct_sum() {
        let x: Vec<f64> = (0..37).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
        let h: Vec<f64> = (0..11).map(|i| 1.0 / (i as f64 + 1.0)).collect();
        let fast = fft_convolve(&x, &h);
        let slow = direct_convolve(&x, &h);
        assert_eq!(fast.len(), slow.len());
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn dry_only_is_identity() {
        let w = Waveform::new(vec![0.2, -0.1, 0.4, 0.0], 8000).unwrap();
        let spec = ReverbSpec {
            wet_mix: 0.0,
            probability: 1.0,
            ..ReverbSpec::default()
        };
        assert_eq!(apply_reverb(&w, &spec, 5).unwrap().0, w);
    }

    #[test]
    fn zero_probability_is_identity() {
        let w = Waveform::new(vec![0.2, -0.1, 0.4, 0.0], 8000).unwrap();
        let spec = ReverbSpec {
            probability: 0.0,
            ..ReverbSpec::default()
        };
        let (out, status) = apply_reverb(&w, &spec, 5).unwrap();
        assert_eq!(out, w);
        assert_eq!(status, AugStatus::Skipped);
    }

    #[test]
    fn impulse_returns_the_impulse_response() {
        let rate = 8000;
        let mut x = vec![0.0f32; 4000];
        x[0] = 1.0;
        let w = Waveform::new(x, rate).unwrap();
        let spec = ReverbSpec {
            decay_seconds: 0.3,
            wet_mix: 1.0,
            probability: 1.0,
        };
        let seed = 17;
        let (out, status) = apply_reverb(&w, &spec, seed).unwrap();
        assert!(status.applied());

        // Rebuild the response from the same stream: gate draw, then taps.
        let mut rng = crate::seed::rng(seed);
        let _gate: f64 = rng.random();
        let h = impulse_response(rate, 0.3, &mut rng);
        assert_eq!(h.len(), 2400);
        for (k, &y) in out.samples().iter().enumerate() {
            let expected = h.get(k).copied().unwrap_or(0.0);
            assert!((f64::from(y) - expected).abs() < 1e-6, "tap {k}");
        }
    }

    #[test]
    fn impulse_response_decays_by_60_db() {
        let mut rng = crate::seed::rng(1);
        let h = impulse_response(16000, 0.5, &mut rng);
        let peak = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 1.0).abs() < 1e-12);
        let head: f64 = h[..800].iter().map(|v| v * v).sum::<f64>() / 800.0;
        let tail: f64 = h[h.len() - 800..].iter().map(|v| v * v).sum::<f64>() / 800.0;
        let drop_db = 10.0 * (head / tail).log10();
        // energy envelope falls ~60 dB over the full length; the two 50 ms
        // windows sit ~57 dB apart
        assert!((45.0..70.0).contains(&drop_db), "drop {drop_db} dB");
    }

    #[test]
    fn reverb_extends_the_tail() {
        // 1.5 s burst followed by 1 s of silence.
        let rate = 8000;
        let mut rng = crate::seed::rng(2);
        let mut x: Vec<f32> = (0..rate * 3 / 2)
            .map(|_| rng.random_range(-0.5f32..0.5))
            .collect();
        x.resize(rate as usize * 5 / 2, 0.0);
        let w = Waveform::new(x, rate).unwrap();
        let spec = ReverbSpec {
            decay_seconds: 0.3,
            wet_mix: 0.5,
            probability: 1.0,
        };
        let (out, _) = apply_reverb(&w, &spec, 3).unwrap();
        let last_second = |s: &[f32]| -> f64 {
            s[s.len() - rate as usize..]
                .iter()
                .map(|&v| f64::from(v).powi(2))
                .sum()
        };
        assert_eq!(last_second(w.samples()), 0.0);
        assert!(last_second(out.samples()) > last_second(w.samples()));
        assert_eq!(out.len(), w.len());
        assert!(out.peak() <= 1.0);
    }

    #[test]
    fn loud_output_is_renormalized() {
        let w = Waveform::new(vec![1.0; 4000], 8000).unwrap();
        let spec = ReverbSpec {
            decay_seconds: 0.2,
            wet_mix: 1.0,
            probability: 1.0,
        };
        let (out, _) = apply_reverb(&w, &spec, 8).unwrap();
        assert!((out.peak() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn invalid_spec_rejected() {
        let w = Waveform::new(vec![0.1; 10], 8000).unwrap();
        for spec in [
            ReverbSpec {
                decay_seconds: 0.0,
                ..ReverbSpec::default()
            },
            ReverbSpec {
                wet_mix: 1.5,
                ..ReverbSpec::default()
            },
        ] {
            assert!(apply_reverb(&w, &spec, 0).is_err());
        }
    }
}
