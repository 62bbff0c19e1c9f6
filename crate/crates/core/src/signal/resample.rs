use std::f64::consts::PI;

use super::Waveform;
use crate::{Error, Result};

/// Half-width of the interpolation kernel, in input samples at the cutoff.
const HALF_TAPS: f64 = 32.0;
/// Cutoff as a fraction of the lower Nyquist frequency.
const ROLLOFF: f64 = 0.945;

/// Band-limited resampling by windowed-sinc interpolation.
///
/// The kernel is a Hann-windowed sinc whose cutoff sits just below the lower
/// of the two Nyquist frequencies. Tap weights are renormalized to sum to one
/// at every output position, which keeps DC exact (also at the edges, where
/// part of the kernel falls outside the signal). Equal rates return the input
/// unchanged.
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    if target_rate == 0 {
        return Err(Error::InvalidParameter(
            "target rate must be positive".into(),
        ));
    }
    let src_rate = w.sample_rate();
    if src_rate == target_rate {
        return Ok(w.clone());
    }

    let ratio = f64::from(target_rate) / f64::from(src_rate);
    let cutoff = ROLLOFF * ratio.min(1.0);
    // kernel support in input samples
    let half_width = HALF_TAPS / cutoff;
    let input = w.samples();
    let n_in = input.len() as i64;
    let n_out = ((input.len() as f64 * ratio).ceil() as usize).max(1);

    let out: Vec<f32> = (0..n_out)
        .map(|n| {
            let t = n as f64 / ratio;
            let lo = ((t - half_width).ceil() as i64).max(0);
            let hi = ((t + half_width).floor() as i64).min(n_in - 1);
            let mut acc = 0.0;
            let mut norm = 0.0;
            for k in lo..=hi {
                let x = t - k as f64;
                let weight = sinc(cutoff * x) * hann(x / half_width);
                acc += weight * f64::from(input[k as usize]);
                norm += weight;
            }
            if norm.abs() > f64::EPSILON {
                (acc / norm) as f32
            } else {
                0.0
            }
        })
        .collect();
    Waveform::new(out, target_rate)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Hann taper on [-1, 1].
fn hann(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        0.5 * (1.0 + (PI * u).cos())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, rate: u32, n: usize) -> Waveform {
        let s = (0..n)
            .map(|i| (0.5 * (2.0 * PI * freq * i as f64 / f64::from(rate)).sin()) as f32)
            .collect();
        Waveform::new(s, rate).unwrap()
    }

    /// Index of the largest-magnitude bin of a naive DFT over the first half spectrum.
    fn dft_peak_hz(x: &[f32], rate: u32) -> f64 {
        let n = x.len();
        let (best, _) = (1..n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (i, &v) in x.iter().enumerate() {
                    let ang = -2.0 * PI * (k * i) as f64 / n as f64;
                    re += f64::from(v) * ang.cos();
                    im += f64::from(v) * ang.sin();
                }
                (k, re * re + im * im)
            })
            .fold((0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
        best as f64 * f64::from(rate) / n as f64
    }

    #[test]
    fn same_rate_is_identity() {
        let w = sine(440.0, 16000, 1000);
        assert_eq!(resample(&w, 16000).unwrap(), w);
    }

    #[test]
    fn dc_is_preserved_when_upsampling() {
        let w = Waveform::new(vec![0.3; 16000], 16000).unwrap();
        let out = resample(&w, 32000).unwrap();
        assert_eq!(out.len(), 32000);
        assert_eq!(out.sample_rate(), 32000);
        for &s in &out.samples()[100..out.len() - 100] {
            assert!((s - 0.3).abs() < 1e-3, "{s}");
        }
    }

    #[test]
    fn dc_is_preserved_when_downsampling() {
        let w = Waveform::new(vec![-0.4; 44100], 44100).unwrap();
        let out = resample(&w, 16000).unwrap();
        for &s in &out.samples()[50..out.len() - 50] {
            assert!((s + 0.4).abs() < 1e-3, "{s}");
        }
    }

    #[test]
    fn tone_frequency_survives_upsampling() {
        // 2000 input samples at 16 kHz; DFT bin spacing 8 Hz after upsampling.
        let out = resample(&sine(1000.0, 16000, 2000), 32000).unwrap();
        let peak = dft_peak_hz(out.samples(), 32000);
        assert!((peak - 1000.0).abs() <= 8.0, "peak at {peak} Hz");
    }

    #[test]
    fn aliasing_tone_is_suppressed_when_downsampling() {
        // 7 kHz sits above the 4 kHz Nyquist of the 8 kHz target.
        let out = resample(&sine(7000.0, 32000, 8000), 8000).unwrap();
        let interior = &out.samples()[100..out.len() - 100];
        let rms = (interior.iter().map(|&s| f64::from(s).powi(2)).sum::<f64>()
            / interior.len() as f64)
            .sqrt();
        assert!(rms < 0.01, "rms {rms}");
    }

    #[test]
    fn zero_target_rate_is_rejected() {
        assert!(resample(&sine(1.0, 100, 10), 0).is_err());
    }
}
