use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::Waveform;
use crate::{Error, Result};

pub const MELS_MAGIC: &[u8; 4] = b"MELS";
pub const MELS_VERSION: u32 = 1;

/// Parameters of the log-mel transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MelParams {
    pub sample_rate: u32,
    pub fft_size: usize,
    pub hop_size: usize,
    pub window_size: usize,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    /// Mel power is clamped to at least this value before the logarithm.
    pub log_floor: f64,
}

impl Default for MelParams {
    fn default() -> Self {
        Self {
            sample_rate: 32000,
            fft_size: 1024,
            hop_size: 320,
            window_size: 1024,
            n_mels: 64,
            f_min: 50.0,
            f_max: 14000.0,
            log_floor: 1e-10,
        }
    }
}

impl MelParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive".into());
        }
        if self.hop_size == 0
            || self.hop_size > self.window_size
            || self.window_size > self.fft_size
        {
            return bad(format!(
                "need 0 < hop_size ({}) <= window_size ({}) <= fft_size ({})",
                self.hop_size, self.window_size, self.fft_size
            ));
        }
        let nyquist = f64::from(self.sample_rate) / 2.0;
        if !(self.f_min >= 0.0 && self.f_min < self.f_max && self.f_max <= nyquist) {
            return bad(format!(
                "need 0 <= f_min ({}) < f_max ({}) <= {nyquist}",
                self.f_min, self.f_max
            ));
        }
        if self.n_mels == 0 {
            return bad("n_mels must be at least 1".into());
        }
        if !(self.log_floor > 0.0) {
            return bad("log_floor must be positive".into());
        }
        Ok(())
    }

    /// Frame count for an input of `n_samples` with centered (reflect-padded) frames.
    pub fn n_frames(&self, n_samples: usize) -> usize {
        let padded = n_samples + 2 * (self.window_size / 2);
        1 + (padded - self.window_size) / self.hop_size
    }

    /// Value of a cell whose mel power is at or below the floor.
    pub fn floor_value(&self) -> f32 {
        self.log_floor.ln() as f32
    }
}

/// Log-mel spectrogram, `n_frames x n_mels`, row-major by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    data: Vec<f32>,
    n_frames: usize,
    n_mels: usize,
    params: MelParams,
}

impl MelSpectrogram {
    pub fn from_data(data: Vec<f32>, n_frames: usize, params: MelParams) -> Result<Self> {
        let n_mels = params.n_mels;
        if data.len() != n_frames * n_mels {
            return Err(Error::MelFormat(format!(
                "{} cells for {n_frames} x {n_mels} grid",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::MelFormat(format!("non-finite cell at {i}")));
        }
        Ok(Self {
            data,
            n_frames,
            n_mels,
            params,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn params(&self) -> &MelParams {
        &self.params
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.data[t * self.n_mels..(t + 1) * self.n_mels]
    }

    pub fn get(&self, t: usize, m: usize) -> f32 {
        self.data[t * self.n_mels + m]
    }

    /// Largest absolute cellwise difference; `None` when the shapes differ.
    pub fn max_abs_diff(&self, other: &MelSpectrogram) -> Option<f32> {
        if self.n_frames != other.n_frames || self.n_mels != other.n_mels {
            return None;
        }
        Some(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f32::max),
        )
    }

    /// Encodes as a `MELS` binary: magic, version, frame and mel counts
    /// (all little-endian u32), then the cells as little-endian f32.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.data.len());
        out.extend_from_slice(MELS_MAGIC);
        out.extend_from_slice(&MELS_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n_frames as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_mels as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Decodes a `MELS` binary; returns `(n_frames, n_mels, cells)`.
    pub fn decode(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
        if bytes.len() < 16 {
            return Err(Error::MelFormat("truncated header".into()));
        }
        if &bytes[..4] != MELS_MAGIC {
            return Err(Error::MelFormat("bad magic".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let version = word(4);
        if version != MELS_VERSION {
            return Err(Error::MelFormat(format!("unsupported version {version}")));
        }
        let (n_frames, n_mels) = (word(8) as usize, word(12) as usize);
        let expected = n_frames
            .checked_mul(n_mels)
            .and_then(|c| c.checked_mul(4))
            .ok_or_else(|| Error::MelFormat("dimension overflow".into()))?;
        let body = &bytes[16..];
        if body.len() != expected {
            return Err(Error::MelFormat(format!(
                "expected {expected} payload bytes, found {}",
                body.len()
            )));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok((n_frames, n_mels, data))
    }

    /// Decodes and attaches `params`, checking the mel count.
    pub fn from_bytes(bytes: &[u8], params: MelParams) -> Result<Self> {
        let (n_frames, n_mels, data) = Self::decode(bytes)?;
        if n_mels != params.n_mels {
            return Err(Error::MelFormat(format!(
                "file has {n_mels} mel bins, parameters say {}",
                params.n_mels
            )));
        }
        Self::from_data(data, n_frames, params)
    }
}

/// Writes a `MELS` file atomically (temporary file + rename).
pub fn write_mels(path: impl AsRef<Path>, s: &MelSpectrogram) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("mels.tmp");
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&s.to_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| Error::io(path, e))
}

pub fn read_mels(path: impl AsRef<Path>, params: MelParams) -> Result<MelSpectrogram> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    MelSpectrogram::from_bytes(&bytes, params)
}

/// Slaney mel scale: linear below 1 kHz, logarithmic above.
pub fn hz_to_mel(hz: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    const MIN_LOG_HZ: f64 = 1000.0;
    let min_log_mel = MIN_LOG_HZ / F_SP;
    let logstep = 6.4f64.ln() / 27.0;
    if hz >= MIN_LOG_HZ {
        min_log_mel + (hz / MIN_LOG_HZ).ln() / logstep
    } else {
        hz / F_SP
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    const F_SP: f64 = 200.0 / 3.0;
    const MIN_LOG_HZ: f64 = 1000.0;
    let min_log_mel = MIN_LOG_HZ / F_SP;
    let logstep = 6.4f64.ln() / 27.0;
    if mel >= min_log_mel {
        MIN_LOG_HZ * (logstep * (mel - min_log_mel)).exp()
    } else {
        mel * F_SP
    }
}

/// Triangular, area-normalized mel filterbank. Returns the filters as
/// `n_mels` rows of `fft_size / 2 + 1` weights, plus the center frequency
/// of each filter in Hz.
pub fn mel_filterbank(p: &MelParams) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n_bins = p.fft_size / 2 + 1;
    let (mel_lo, mel_hi) = (hz_to_mel(p.f_min), hz_to_mel(p.f_max));
    let edges: Vec<f64> = (0..p.n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (p.n_mels + 1) as f64))
        .collect();
    let bin_hz = |k: usize| k as f64 * f64::from(p.sample_rate) / p.fft_size as f64;

    let rows = (0..p.n_mels)
        .map(|m| {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let norm = 2.0 / (hi - lo);
            (0..n_bins)
                .map(|k| {
                    let f = bin_hz(k);
                    let rising = (f - lo) / (center - lo);
                    let falling = (hi - f) / (hi - center);
                    rising.min(falling).max(0.0) * norm
                })
                .collect()
        })
        .collect();
    (rows, edges[1..=p.n_mels].to_vec())
}

/// Reusable log-mel transform with a cached FFT plan, window and filterbank.
pub struct MelTransform {
    params: MelParams,
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    /// Sparse filter rows: (first bin, weights).
    filters: Vec<(usize, Vec<f64>)>,
}

impl MelTransform {
    pub fn new(params: MelParams) -> Result<Self> {
        params.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(params.fft_size);
        let n = params.window_size;
        // periodic Hann
        let window = (0..n)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
            .collect();
        let (rows, _) = mel_filterbank(&params);
        let filters = rows
            .into_iter()
            .map(|row| {
                let first = row.iter().position(|&w| w > 0.0).unwrap_or(0);
                let last = row.iter().rposition(|&w| w > 0.0).unwrap_or(0);
                (first, row[first..=last].to_vec())
            })
            .collect();
        Ok(Self {
            params,
            fft,
            window,
            filters,
        })
    }

    pub fn params(&self) -> &MelParams {
        &self.params
    }

    pub fn apply(&self, w: &Waveform) -> Result<MelSpectrogram> {
        let p = &self.params;
        if w.sample_rate() != p.sample_rate {
            return Err(Error::SampleRateMismatch {
                expected: p.sample_rate,
                actual: w.sample_rate(),
            });
        }
        let x = w.samples();
        let pad = p.window_size / 2;
        let n_frames = p.n_frames(x.len());
        let offset = (p.fft_size - p.window_size) / 2;
        let n_bins = p.fft_size / 2 + 1;

        let mut buf = vec![Complex::new(0.0, 0.0); p.fft_size];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut power = vec![0.0f64; n_bins];
        let mut data = Vec::with_capacity(n_frames * p.n_mels);
        let floor = p.log_floor;

        for t in 0..n_frames {
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            let start = (t * p.hop_size) as i64 - pad as i64;
            for (i, &win) in self.window.iter().enumerate() {
                let s = x[reflect(start + i as i64, x.len())];
                buf[offset + i] = Complex::new(f64::from(s) * win, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (pw, c) in power.iter_mut().zip(&buf) {
                *pw = c.norm_sqr();
            }
            for (first, weights) in &self.filters {
                let e: f64 = weights
                    .iter()
                    .zip(&power[*first..])
                    .map(|(w, p)| w * p)
                    .sum();
                data.push(e.max(floor).ln() as f32);
            }
        }
        MelSpectrogram::from_data(data, n_frames, *p)
    }
}

/// Hann-windowed power STFT, Slaney mel filterbank, natural log of the
/// floored mel power.
pub fn mel_transform(w: &Waveform, p: &MelParams) -> Result<MelSpectrogram> {
    MelTransform::new(*p)?.apply(w)
}

/// Reflect-pad index mapping without edge repetition; bounces repeatedly
/// for pads longer than the signal.
fn reflect(i: i64, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as i64 - 1);
    let r = i.rem_euclid(period);
    (if r < len as i64 { r } else { period - r }) as usize
}
