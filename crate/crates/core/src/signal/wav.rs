use std::path::Path;

use hound::{SampleFormat as HoundFormat, WavReader, WavSpec, WavWriter};

use super::Waveform;
use crate::{Error, Result};

/// Encoding used by [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    Pcm16,
    Pcm24,
    Float32,
}

/// Reads a PCM WAV file (8/16/24/32-bit integer or 32-bit float), averaging
/// all channels to mono and scaling integer samples by `1 / 2^(bits-1)`.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let wav_err = |e: hound::Error| match e {
        hound::Error::IoError(source) => Error::io(path, source),
        other => Error::Wav {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    };
    let mut reader = WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    let channels = usize::from(spec.channels);
    if channels == 0 {
        return Err(Error::UnsupportedEncoding("zero channels".into()));
    }

    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (HoundFormat::Float, 32) => reader
            .samples::<f32>()
            .collect::<Result<_, _>>()
            .map_err(wav_err)?,
        (HoundFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| (f64::from(v) * scale) as f32))
                .collect::<Result<_, _>>()
                .map_err(wav_err)?
        }
        (fmt, bits) => {
            return Err(Error::UnsupportedEncoding(format!(
                "{bits}-bit {fmt:?} samples"
            )))
        }
    };

    if interleaved.len() < channels {
        return Err(Error::EmptyAudio);
    }
    let mono: Vec<f32> = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| {
                (frame.iter().map(|&s| f64::from(s)).sum::<f64>() / channels as f64) as f32
            })
            .collect()
    };
    Waveform::new(mono, spec.sample_rate)
}

/// Writes a mono WAV file. Integer encodings round to nearest and clip to
/// the representable range.
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform, format: SampleFormat) -> Result<()> {
    let path = path.as_ref();
    let (bits, sample_format) = match format {
        SampleFormat::Pcm16 => (16, HoundFormat::Int),
        SampleFormat::Pcm24 => (24, HoundFormat::Int),
        SampleFormat::Float32 => (32, HoundFormat::Float),
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: w.sample_rate(),
        bits_per_sample: bits,
        sample_format,
    };
    let wav_err = |e: hound::Error| match e {
        hound::Error::IoError(source) => Error::io(path, source),
        other => Error::Wav {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    };
    let mut writer = WavWriter::create(path, spec).map_err(wav_err)?;
    match format {
        SampleFormat::Float32 => {
            for &s in w.samples() {
                writer.write_sample(s).map_err(wav_err)?;
            }
        }
        SampleFormat::Pcm16 | SampleFormat::Pcm24 => {
            let full = (1i64 << (bits - 1)) as f64;
            for &s in w.samples() {
                let v = (f64::from(s) * full).round().clamp(-full, full - 1.0) as i32;
                writer.write_sample(v).map_err(wav_err)?;
            }
        }
    }
    writer.finalize().map_err(wav_err)
}
