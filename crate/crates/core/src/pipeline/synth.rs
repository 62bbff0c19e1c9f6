use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use super::manifest::{Manifest, ManifestEntry, Split};
use super::write_atomic;
use crate::seed;
use crate::signal::{write_wav, SampleFormat, Waveform};
use crate::{Error, Result};

pub const SYNTH_MANIFEST: &str = "manifest.jsonl";

const SOUNDS: [(&str, f64); 6] = [
    ("a bird chirps", 3200.0),
    ("an engine hums", 110.0),
    ("a bell rings", 880.0),
    ("a whistle blows", 2000.0),
    ("a motor whines", 440.0),
    ("a horn honks", 330.0),
];
const SETTINGS: [&str; 4] = ["", " in the distance", " while wind blows", " over static"];

/// Writes `n` train clips of `seconds` at `sample_rate` (tone plus noise,
/// 16-bit PCM) under `dir/audio` and a manifest describing them.
/// Returns the manifest path.
pub fn synth_corpus(
    dir: &Path,
    n: usize,
    seconds: f64,
    sample_rate: u32,
    rng_seed: u64,
) -> Result<PathBuf> {
    if n == 0 || !(seconds > 0.0) {
        return Err(Error::InvalidParameter(
            "need at least one clip of positive length".into(),
        ));
    }
    let audio = dir.join("audio");
    fs::create_dir_all(&audio).map_err(|e| Error::io(&audio, e))?;
    let len = (seconds * f64::from(sample_rate)).round() as usize;
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = seed::rng(seed::derive(rng_seed, &[i as u64]));
        let &(sound, freq) = SOUNDS.choose(&mut rng).expect("non-empty");
        let setting = *SETTINGS.choose(&mut rng).expect("non-empty");
        let freq = freq * rng.random_range(0.9..1.1);
        let amp = rng.random_range(0.2..0.6);
        let noise = rng.random_range(0.005..0.05);
        let phase = rng.random_range(0.0..TAU);
        let samples = (0..len)
            .map(|t| {
                let x = amp * (TAU * freq * t as f64 / f64::from(sample_rate) + phase).sin()
                    + noise * rng.sample::<f64, _>(StandardNormal);
                x.clamp(-1.0, 1.0) as f32
            })
            .collect();
        let name = format!("clip_{i:04}.wav");
        write_wav(
            audio.join(&name),
            &Waveform::new(samples, sample_rate)?,
            SampleFormat::Pcm16,
        )?;
        entries.push(ManifestEntry {
            id: format!("clip_{i:04}"),
            audio_path: format!("audio/{name}"),
            captions: vec![format!("{sound}{setting}"), format!("{sound}")],
            split: Split::Train,
        });
    }
    let manifest = Manifest {
        entries,
        base_dir: dir.to_path_buf(),
    };
    let path = dir.join(SYNTH_MANIFEST);
    write_atomic(&path, manifest.to_jsonl().as_bytes())?;
    Ok(path)
}
