use std::fs;
use std::path::Path;

use log::{info, warn};
use rand::seq::{IndexedRandom, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::manifest::{Manifest, ManifestEntry, Split};
use super::write_atomic;
use crate::augment::{add_gaussian_noise, apply_reverb, eda_augment, spec_augment, AugStatus};
use crate::pairmix::{generate_pair, plan_batch, plan_pairs, MixLevel, PairPlan, Source};
use crate::seed::{self, stream};
use crate::signal::{
    fix_length_samples, load_wav, resample, write_mels, MelSpectrogram, MelTransform, Waveform,
};
use crate::{Error, Result};

pub const SAMPLES_FILE: &str = "samples.jsonl";
const MEL_DIR: &str = "mels";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    Original,
    Generated,
}

/// One line of `samples.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub sample_id: String,
    pub kind: SampleKind,
    pub batch: usize,
    /// Relative to the output directory.
    pub mel_path: String,
    pub n_frames: usize,
    pub n_mels: usize,
    pub caption: String,
    pub source_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<MixLevel>,
    /// Uni-modal augmentations that changed the sample, in application order.
    pub augs: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentSummary {
    pub batches: usize,
    pub originals: usize,
    pub generated: usize,
    /// Train entries skipped because their audio file does not exist.
    pub missing_audio: usize,
    /// Batches whose pairs had to reuse the batch's own clips.
    pub duplicate_source_batches: usize,
}

struct Sample {
    mel: MelSpectrogram,
    record: SampleRecord,
}

struct Context<'a> {
    manifest: &'a Manifest,
    cfg: &'a PipelineConfig,
    mel: MelTransform,
    by_id: std::collections::HashMap<&'a str, &'a ManifestEntry>,
}

impl Context<'_> {
    fn load_clip(&self, entry: &ManifestEntry) -> Result<Waveform> {
        let w = load_wav(self.manifest.resolve(entry))?;
        let w = resample(&w, self.cfg.mel.sample_rate)?;
        fix_length_samples(&w, self.cfg.clip_samples())
    }

    fn pick_caption(&self, entry: &ManifestEntry, rng_seed: u64) -> String {
        entry
            .captions
            .choose(&mut seed::rng(rng_seed))
            .expect("manifest captions are non-empty")
            .clone()
    }
}

/// Generates the augmented training set: every usable train clip once,
/// plus `round(K * B)` PairMix samples per batch.
///
/// Batch `b` has seed `derive(seed, [split, b])`. The original at position
/// `p` uses `derive(batch_seed, [p])` and generated sample `k` uses
/// `derive(batch_seed, [PAIR, k])`; each uni-modal augmentation draws from
/// its own labelled child stream. Output is independent of thread count.
pub fn run_augment(
    manifest: &Manifest,
    cfg: &PipelineConfig,
    out_dir: &Path,
) -> Result<AugmentSummary> {
    cfg.validate()?;
    let mel_dir = out_dir.join(MEL_DIR);
    fs::create_dir_all(&mel_dir).map_err(|e| Error::io(&mel_dir, e))?;

    let split = Split::Train;
    let mut summary = AugmentSummary::default();
    let mut usable: Vec<&ManifestEntry> = Vec::new();
    for entry in manifest.split(split) {
        if manifest.resolve(entry).is_file() {
            usable.push(entry);
        } else {
            warn!(
                "{}: audio {} not found, skipping",
                entry.id, entry.audio_path
            );
            summary.missing_audio += 1;
        }
    }
    let pool_ids: Vec<&str> = usable.iter().map(|e| e.id.as_str()).collect();
    let ctx = Context {
        manifest,
        cfg,
        mel: MelTransform::new(cfg.mel)?,
        by_id: usable.iter().map(|e| (e.id.as_str(), *e)).collect(),
    };

    let mut order = usable.clone();
    order.shuffle(&mut seed::rng(seed::derive(
        cfg.seed,
        &[stream::SHUFFLE, split.code()],
    )));

    let mut lines = String::new();
    for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
        let batch_seed = seed::derive(cfg.seed, &[split.code(), b as u64]);
        let originals = batch
            .par_iter()
            .enumerate()
            .map(|(p, entry)| {
                original_sample(&ctx, entry, b, p, seed::derive(batch_seed, &[p as u64]))
            })
            .collect::<Result<Vec<_>>>()?;

        let batch_ids: Vec<&str> = batch.iter().map(|e| e.id.as_str()).collect();
        let (plans, duplicates) = match plan_batch(&batch_ids, &pool_ids, &cfg.pairmix, batch_seed)
        {
            Ok(plans) => (plans, false),
            Err(Error::PoolTooSmall { available, .. }) => {
                warn!("batch {b}: only {available} clips outside the batch, sampling pairs from the whole pool");
                let count = crate::pairmix::generated_count(batch.len(), cfg.pairmix.k_ratio);
                (
                    plan_pairs(count, &[], &pool_ids, &cfg.pairmix, batch_seed)?,
                    true,
                )
            }
            Err(e) => return Err(e),
        };
        summary.duplicate_source_batches += usize::from(duplicates);
        let generated = plans
            .par_iter()
            .enumerate()
            .map(|(k, plan)| generated_sample(&ctx, plan, b, batch.len() + k, duplicates))
            .collect::<Result<Vec<_>>>()?;

        for sample in originals.iter().chain(&generated) {
            write_mels(out_dir.join(&sample.record.mel_path), &sample.mel)?;
            lines.push_str(&serde_json::to_string(&sample.record)?);
            lines.push('\n');
        }
        summary.batches += 1;
        summary.originals += originals.len();
        summary.generated += generated.len();
        info!(
            "batch {b}: {} originals, {} generated",
            originals.len(),
            generated.len()
        );
    }
    write_atomic(&out_dir.join(SAMPLES_FILE), lines.as_bytes())?;
    Ok(summary)
}

fn mel_path(batch: usize, pos: usize) -> String {
    format!("{MEL_DIR}/b{batch:05}_{pos:03}.mels")
}

fn specaug_active(cfg: &PipelineConfig) -> bool {
    let s = &cfg.specaug;
    s.n_time_masks * s.max_time_width + s.n_freq_masks * s.max_freq_width > 0
}

fn original_sample(
    ctx: &Context,
    entry: &ManifestEntry,
    batch: usize,
    pos: usize,
    sample_seed: u64,
) -> Result<Sample> {
    let cfg = ctx.cfg;
    let child = |label| seed::derive(sample_seed, &[label]);
    let mut augs = Vec::new();
    let mut flags = Vec::new();
    let mut note = |name: &str, status: AugStatus| match status {
        AugStatus::Applied => augs.push(name.to_owned()),
        AugStatus::SilentInput => flags.push(format!("silent_input_{name}")),
        AugStatus::Skipped => {}
    };

    let clip = ctx.load_clip(entry)?;
    let (clip, status) = add_gaussian_noise(&clip, &cfg.noise, child(stream::NOISE))?;
    note("noise", status);
    let (clip, status) = apply_reverb(&clip, &cfg.reverb, child(stream::REVERB))?;
    note("reverb", status);
    let mut mel = ctx.mel.apply(&clip)?;
    if specaug_active(cfg) {
        mel = spec_augment(&mel, &cfg.specaug, child(stream::SPEC_AUGMENT));
        augs.push("spec_augment".into());
    }
    let mut caption = ctx.pick_caption(entry, child(stream::CAPTION));
    if cfg.apply_eda {
        let (text, op) = eda_augment(&caption, &cfg.eda, child(stream::EDA))?;
        if text != caption {
            augs.push(format!("eda_{}", format!("{op:?}").to_lowercase()));
        }
        caption = text;
    }
    Ok(Sample {
        record: SampleRecord {
            sample_id: format!("b{batch:05}_{pos:03}"),
            kind: SampleKind::Original,
            batch,
            mel_path: mel_path(batch, pos),
            n_frames: mel.n_frames(),
            n_mels: mel.n_mels(),
            caption,
            source_ids: vec![entry.id.clone()],
            lambdas: None,
            gamma: None,
            variant: None,
            level: None,
            augs,
            flags,
        },
        mel,
    })
}

/// Generated samples get SpecAugment only: their sources are clean clips.
fn generated_sample(
    ctx: &Context,
    plan: &PairPlan,
    batch: usize,
    pos: usize,
    duplicates: bool,
) -> Result<Sample> {
    let sources = plan
        .source_ids
        .iter()
        .enumerate()
        .map(|(j, id)| {
            let entry = ctx.by_id[id.as_str()];
            let caption =
                ctx.pick_caption(entry, seed::derive(plan.seed, &[stream::CAPTION, j as u64]));
            Ok(Source::new(id.clone(), ctx.load_clip(entry)?, caption))
        })
        .collect::<Result<Vec<_>>>()?;
    let pair = generate_pair(&sources, &ctx.cfg.pairmix, &ctx.mel, plan.seed)?;

    let mut augs = Vec::new();
    let mut mel = pair.mel;
    if specaug_active(ctx.cfg) {
        mel = spec_augment(
            &mel,
            &ctx.cfg.specaug,
            seed::derive(plan.seed, &[stream::SPEC_AUGMENT]),
        );
        augs.push("spec_augment".into());
    }
    let mut flags = Vec::new();
    if pair.peak_exceeded {
        flags.push("peak_exceeded".to_owned());
    }
    if pair.concat_truncated {
        flags.push("concat_truncated".to_owned());
    }
    if duplicates {
        flags.push("duplicate_sources".to_owned());
    }
    Ok(Sample {
        record: SampleRecord {
            sample_id: format!("b{batch:05}_{pos:03}"),
            kind: SampleKind::Generated,
            batch,
            mel_path: mel_path(batch, pos),
            n_frames: mel.n_frames(),
            n_mels: mel.n_mels(),
            caption: pair.caption,
            source_ids: pair.source_ids,
            lambdas: Some(pair.lambdas.as_slice().to_vec()),
            gamma: Some(pair.gamma),
            variant: Some(pair.variant.name().to_owned()),
            level: Some(pair.level),
            augs,
            flags,
        },
        mel,
    })
}
