//! Paired audio-text mixup.
//!
//! A generated pair mixes `N` source clips and concatenates their captions.
//! The audio is mixed either before the mel transform (waveform level,
//! `M(Σ λ_i a_i)`) or after it (spectrogram level, `Σ λ_i M(a_i)`), chosen
//! per generated sample by a Bernoulli draw `γ`. The ablation variants fix
//! the level, or concatenate the clips in time instead of mixing.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::seed::{self, stream};
use crate::signal::{fix_length_samples, MelParams, MelSpectrogram, MelTransform, Waveform};
use crate::{Error, Result};

/// Mixing weights on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MixWeights(Vec<f64>);

impl MixWeights {
    pub fn new(lambdas: Vec<f64>) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::InvalidParameter("mix weights are empty".into()));
        }
        if let Some(l) = lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(Error::InvalidParameter(format!(
                "mix weight {l} outside [0, 1]"
            )));
        }
        let sum: f64 = lambdas.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "mix weights sum to {sum}, not 1"
            )));
        }
        Ok(Self(lambdas))
    }

    /// All mass on source `i` of `n`.
    pub fn one_hot(n: usize, i: usize) -> Self {
        Self((0..n).map(|j| if j == i { 1.0 } else { 0.0 }).collect())
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for MixWeights {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<MixWeights> for Vec<f64> {
    fn from(w: MixWeights) -> Self {
        w.0
    }
}

/// How mixup weights are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LambdaMode {
    /// Equal weights `1/N` (0.5 each for two sources).
    Fixed,
    /// `Beta(alpha, alpha)` for two sources, `Dirichlet(alpha, ..., alpha)` beyond.
    Beta { alpha: f64 },
}

impl Default for LambdaMode {
    fn default() -> Self {
        LambdaMode::Beta { alpha: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Variant {
    /// Waveform or spectrogram level, chosen by γ.
    #[default]
    #[serde(rename = "pairmix")]
    PairMix,
    /// Clips concatenated in time, then cut back to one clip's length.
    #[serde(rename = "concat_audio")]
    ConcatAudio,
    #[serde(rename = "waveform_only")]
    WaveformOnly,
    #[serde(rename = "spectrogram_only")]
    SpectrogramOnly,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::PairMix,
        Variant::ConcatAudio,
        Variant::WaveformOnly,
        Variant::SpectrogramOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::PairMix => "pairmix",
            Variant::ConcatAudio => "concat_audio",
            Variant::WaveformOnly => "waveform_only",
            Variant::SpectrogramOnly => "spectrogram_only",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "pairmix" => Ok(Variant::PairMix),
            "concat" | "concat_audio" => Ok(Variant::ConcatAudio),
            "waveform" | "waveform_only" => Ok(Variant::WaveformOnly),
            "spectrogram" | "spectrogram_only" => Ok(Variant::SpectrogramOnly),
            other => Err(Error::InvalidParameter(format!(
                "unknown variant {other:?}"
            ))),
        }
    }
}

/// Representation in which spectrogram-level mixing happens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixDomain {
    /// Combine the log-mel grids directly.
    #[default]
    LogMel,
    /// Combine mel power (`exp` of the grids) and take the log afterwards.
    PowerMel,
}

/// The mixing level that produced a generated spectrogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixLevel {
    Waveform,
    Spectrogram,
    Concat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairMixConfig {
    pub n_sources: usize,
    /// Generated samples per mini-batch as a fraction of the batch size.
    pub k_ratio: f64,
    pub lambda_mode: LambdaMode,
    pub gamma_prob: f64,
    pub variant: Variant,
    pub text_joiner: String,
    pub mix_domain: MixDomain,
}

impl Default for PairMixConfig {
    fn default() -> Self {
        Self {
            n_sources: 2,
            k_ratio: 0.25,
            lambda_mode: LambdaMode::default(),
            gamma_prob: 0.5,
            variant: Variant::PairMix,
            text_joiner: " ".into(),
            mix_domain: MixDomain::LogMel,
        }
    }
}

impl PairMixConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_sources < 2 {
            return bad(format!(
                "n_sources must be at least 2, got {}",
                self.n_sources
            ));
        }
        if !(0.0..1.0).contains(&self.k_ratio) {
            return bad(format!("k_ratio must lie in [0, 1), got {}", self.k_ratio));
        }
        if !(0.0..=1.0).contains(&self.gamma_prob) {
            return bad(format!(
                "gamma_prob must lie in [0, 1], got {}",
                self.gamma_prob
            ));
        }
        if let LambdaMode::Beta { alpha } = self.lambda_mode {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return bad(format!("beta alpha must be positive, got {alpha}"));
            }
        }
        Ok(())
    }
}

/// One audio-text training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Source {
    pub id: String,
    pub waveform: Waveform,
    pub caption: String,
}

impl Source {
    pub fn new(id: impl Into<String>, waveform: Waveform, caption: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            waveform,
            caption: caption.into(),
        }
    }
}

/// A generated spectrogram-caption pair with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedPair {
    pub mel: MelSpectrogram,
    pub caption: String,
    pub source_ids: Vec<String>,
    pub lambdas: MixWeights,
    /// The Bernoulli draw, kept even when the variant ignores it.
    pub gamma: u8,
    pub variant: Variant,
    pub level: MixLevel,
    /// Waveform-level mix peaked above unit amplitude (left unclamped).
    pub peak_exceeded: bool,
    /// Concatenated audio was longer than one clip and was cut.
    pub concat_truncated: bool,
}

/// Draws mixup weights for `n` sources.
pub fn sample_lambda(mode: LambdaMode, n: usize, rng_seed: u64) -> Result<MixWeights> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 sources, got {n}"
        )));
    }
    let mut rng = seed::rng(rng_seed);
    let lambdas = match mode {
        LambdaMode::Fixed => vec![1.0 / n as f64; n],
        LambdaMode::Beta { alpha } => {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(Error::InvalidParameter(format!("beta alpha {alpha}")));
            }
            if n == 2 {
                let beta =
                    Beta::new(alpha, alpha).map_err(|e| Error::InvalidParameter(e.to_string()))?;
                let l: f64 = beta.sample(&mut rng).clamp(0.0, 1.0);
                vec![l, 1.0 - l]
            } else {
                dirichlet(alpha, n, &mut rng)?
            }
        }
    };
    MixWeights::new(lambdas)
}

/// Symmetric Dirichlet draw computed in log space, so that small `alpha`
/// (where plain gamma variates underflow to zero) stays well defined.
/// Uses `Gamma(a) = Gamma(a + 1) * U^(1/a)`.
fn dirichlet(alpha: f64, n: usize, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let gamma = Gamma::new(alpha + 1.0, 1.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let logs: Vec<f64> = (0..n)
        .map(|_| {
            let g: f64 = gamma.sample(rng);
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            g.ln() + u.ln() / alpha
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    // put the rounding residue on the last weight
    let head: f64 = w[..n - 1].iter().sum();
    w[n - 1] = (1.0 - head).max(0.0);
    Ok(w)
}

/// Bernoulli draw: 1 with probability `gamma_prob`.
pub fn sample_gamma(gamma_prob: f64, rng_seed: u64) -> u8 {
    let mut rng = seed::rng(rng_seed);
    u8::from(rng.random::<f64>() < gamma_prob)
}

/// Joins captions in order. Trailing sentence punctuation is stripped from
/// every caption except the last so the result reads as one sentence run.
pub fn join_captions<S: AsRef<str>>(captions: &[S], joiner: &str) -> String {
    let last = captions.len().saturating_sub(1);
    captions
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let c = c.as_ref().trim();
            if i < last {
                c.trim_end_matches(['.', '!', '?', ',', ';', ':'])
                    .trim_end()
            } else {
                c
            }
        })
        .collect::<Vec<_>>()
        .join(joiner)
}

fn check_sources(sources: &[Source], weights: Option<&MixWeights>) -> Result<()> {
    let first = sources
        .first()
        .ok_or_else(|| Error::InvalidParameter("no sources".into()))?;
    if let Some(w) = weights {
        if w.len() != sources.len() {
            return Err(Error::InvalidParameter(format!(
                "{} weights for {} sources",
                w.len(),
                sources.len()
            )));
        }
    }
    for s in &sources[1..] {
        if s.waveform.sample_rate() != first.waveform.sample_rate() {
            return Err(Error::SampleRateMismatch {
                expected: first.waveform.sample_rate(),
                actual: s.waveform.sample_rate(),
            });
        }
        if s.waveform.len() != first.waveform.len() {
            return Err(Error::LengthMismatch {
                expected: first.waveform.len(),
                actual: s.waveform.len(),
            });
        }
    }
    Ok(())
}

/// `Σ λ_i a_i`, unclamped.
pub fn mix_waveforms(sources: &[Source], weights: &MixWeights) -> Result<Waveform> {
    check_sources(sources, Some(weights))?;
    let len = sources[0].waveform.len();
    let mixed: Vec<f32> = (0..len)
        .map(|t| {
            sources
                .iter()
                .zip(weights.as_slice())
                .map(|(s, &l)| l * f64::from(s.waveform.samples()[t]))
                .sum::<f64>() as f32
        })
        .collect();
    Waveform::new(mixed, sources[0].waveform.sample_rate())
}

/// Cellwise `Σ λ_i S_i` over spectrograms of equal shape, in `domain`.
pub fn mix_spectrograms(
    spectrograms: &[MelSpectrogram],
    weights: &MixWeights,
    domain: MixDomain,
) -> Result<MelSpectrogram> {
    let first = spectrograms
        .first()
        .ok_or_else(|| Error::InvalidParameter("no spectrograms".into()))?;
    if weights.len() != spectrograms.len() {
        return Err(Error::InvalidParameter("weight count mismatch".into()));
    }
    if spectrograms
        .iter()
        .any(|s| s.n_frames() != first.n_frames() || s.n_mels() != first.n_mels())
    {
        return Err(Error::InvalidParameter("spectrogram shapes differ".into()));
    }
    let data = (0..first.data().len())
        .map(|c| {
            let terms = spectrograms.iter().zip(weights.as_slice());
            match domain {
                MixDomain::LogMel => {
                    terms.map(|(s, &l)| l * f64::from(s.data()[c])).sum::<f64>() as f32
                }
                MixDomain::PowerMel => terms
                    .map(|(s, &l)| l * f64::from(s.data()[c]).exp())
                    .sum::<f64>()
                    .ln() as f32,
            }
        })
        .collect();
    MelSpectrogram::from_data(data, first.n_frames(), *first.params())
}

/// `ŝ_w = M(Σ λ_i a_i)`; also reports whether the mix peaked above 1.
pub fn waveform_level(
    sources: &[Source],
    weights: &MixWeights,
    mel: &MelTransform,
) -> Result<(MelSpectrogram, bool)> {
    let mixed = mix_waveforms(sources, weights)?;
    Ok((mel.apply(&mixed)?, mixed.peak() > 1.0))
}

/// `ŝ_m = Σ λ_i M(a_i)`.
pub fn spectrogram_level(
    sources: &[Source],
    weights: &MixWeights,
    mel: &MelTransform,
    domain: MixDomain,
) -> Result<MelSpectrogram> {
    check_sources(sources, Some(weights))?;
    let mels = sources
        .iter()
        .map(|s| mel.apply(&s.waveform))
        .collect::<Result<Vec<_>>>()?;
    mix_spectrograms(&mels, weights, domain)
}

/// One PairMix sample for given weights and γ: the waveform-level mix
/// when `gamma == 1`, the spectrogram-level mix otherwise.
pub fn pairmix(
    sources: &[Source],
    weights: &MixWeights,
    gamma: u8,
    params: &MelParams,
    joiner: &str,
) -> Result<GeneratedPair> {
    let mel = MelTransform::new(*params)?;
    mix_with_level(
        sources,
        weights,
        gamma,
        gamma == 1,
        &mel,
        joiner,
        MixDomain::LogMel,
        Variant::PairMix,
    )
}

#[allow(clippy::too_many_arguments)]
fn mix_with_level(
    sources: &[Source],
    weights: &MixWeights,
    gamma: u8,
    waveform: bool,
    mel: &MelTransform,
    joiner: &str,
    domain: MixDomain,
    variant: Variant,
) -> Result<GeneratedPair> {
    let (spectrogram, peak_exceeded, level) = if waveform {
        let (s, peak) = waveform_level(sources, weights, mel)?;
        (s, peak, MixLevel::Waveform)
    } else {
        (
            spectrogram_level(sources, weights, mel, domain)?,
            false,
            MixLevel::Spectrogram,
        )
    };
    Ok(GeneratedPair {
        mel: spectrogram,
        caption: join_captions(&captions(sources), joiner),
        source_ids: sources.iter().map(|s| s.id.clone()).collect(),
        lambdas: weights.clone(),
        gamma,
        variant,
        level,
        peak_exceeded,
        concat_truncated: false,
    })
}

fn captions(sources: &[Source]) -> Vec<&str> {
    sources.iter().map(|s| s.caption.as_str()).collect()
}

/// Concatenates the clips in time, fixes the result to `clip_samples`
/// (truncating or zero-padding at the end), then applies the transform.
pub fn concat_audio_variant(
    sources: &[Source],
    clip_samples: usize,
    params: &MelParams,
    joiner: &str,
) -> Result<GeneratedPair> {
    let mel = MelTransform::new(*params)?;
    concat_with(
        sources,
        clip_samples,
        &mel,
        joiner,
        MixWeights::uniform(sources.len()),
        0,
    )
}

fn concat_with(
    sources: &[Source],
    clip_samples: usize,
    mel: &MelTransform,
    joiner: &str,
    lambdas: MixWeights,
    gamma: u8,
) -> Result<GeneratedPair> {
    check_sources(sources, None)?;
    let joined: Vec<f32> = sources
        .iter()
        .flat_map(|s| s.waveform.samples().iter().copied())
        .collect();
    let truncated = joined.len() > clip_samples;
    let audio = Waveform::new(joined, sources[0].waveform.sample_rate())?;
    let audio = fix_length_samples(&audio, clip_samples)?;
    Ok(GeneratedPair {
        mel: mel.apply(&audio)?,
        caption: join_captions(&captions(sources), joiner),
        source_ids: sources.iter().map(|s| s.id.clone()).collect(),
        lambdas,
        gamma,
        variant: Variant::ConcatAudio,
        level: MixLevel::Concat,
        peak_exceeded: false,
        concat_truncated: truncated,
    })
}

/// Draws λ and γ from streams derived from `pair_seed` and generates one
/// sample with the configured variant. Concatenation keeps the length of
/// the first source.
pub fn generate_pair(
    sources: &[Source],
    cfg: &PairMixConfig,
    mel: &MelTransform,
    pair_seed: u64,
) -> Result<GeneratedPair> {
    let lambdas = sample_lambda(
        cfg.lambda_mode,
        sources.len(),
        seed::derive(pair_seed, &[stream::LAMBDA]),
    )?;
    let gamma = sample_gamma(cfg.gamma_prob, seed::derive(pair_seed, &[stream::GAMMA]));
    let joiner = cfg.text_joiner.as_str();
    let waveform = match cfg.variant {
        Variant::ConcatAudio => {
            let clip = sources
                .first()
                .ok_or_else(|| Error::InvalidParameter("no sources".into()))?
                .waveform
                .len();
            return concat_with(sources, clip, mel, joiner, lambdas, gamma);
        }
        Variant::PairMix => gamma == 1,
        Variant::WaveformOnly => true,
        Variant::SpectrogramOnly => false,
    };
    mix_with_level(
        sources,
        &lambdas,
        gamma,
        waveform,
        mel,
        joiner,
        cfg.mix_domain,
        cfg.variant,
    )
}

/// `round(k_ratio * batch_size)`.
pub fn generated_count(batch_size: usize, k_ratio: f64) -> usize {
    (k_ratio * batch_size as f64).round() as usize
}

/// Which pool items one generated sample mixes, and its seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairPlan {
    pub source_ids: Vec<String>,
    pub seed: u64,
}

/// Chooses sources for the `round(K * B)` generated samples of a batch.
///
/// Each sample draws `n_sources` distinct ids uniformly from the pool
/// minus the ids of the batch's originals. Sample `k` gets the seed
/// `derive(batch_seed, [PAIR, k])`.
pub fn plan_batch<S: AsRef<str>>(
    batch_ids: &[S],
    pool_ids: &[S],
    cfg: &PairMixConfig,
    batch_seed: u64,
) -> Result<Vec<PairPlan>> {
    let count = generated_count(batch_ids.len(), cfg.k_ratio);
    plan_pairs(count, batch_ids, pool_ids, cfg, batch_seed)
}

/// Plans `count` generated samples whose sources avoid `excluded`.
pub fn plan_pairs<S: AsRef<str>>(
    count: usize,
    excluded: &[S],
    pool_ids: &[S],
    cfg: &PairMixConfig,
    batch_seed: u64,
) -> Result<Vec<PairPlan>> {
    cfg.validate()?;
    if count == 0 {
        return Ok(Vec::new());
    }
    let excluded: HashSet<&str> = excluded.iter().map(AsRef::as_ref).collect();
    let eligible: Vec<&str> = pool_ids
        .iter()
        .map(AsRef::as_ref)
        .filter(|id| !excluded.contains(id))
        .collect();
    if eligible.len() < cfg.n_sources {
        return Err(Error::PoolTooSmall {
            needed: cfg.n_sources,
            available: eligible.len(),
        });
    }
    let mut rng = seed::rng(seed::derive(batch_seed, &[stream::SELECT]));
    Ok((0..count)
        .map(|k| PairPlan {
            source_ids: index::sample(&mut rng, eligible.len(), cfg.n_sources)
                .iter()
                .map(|i| eligible[i].to_owned())
                .collect(),
            seed: seed::derive(batch_seed, &[stream::PAIR, k as u64]),
        })
        .collect())
}

/// A mini-batch of originals followed by its generated samples.
#[derive(Debug, Clone)]
pub struct ComposedBatch {
    pub originals: Vec<Source>,
    pub generated: Vec<GeneratedPair>,
}

impl ComposedBatch {
    pub fn len(&self) -> usize {
        self.originals.len() + self.generated.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Appends `round(K * B)` generated samples to `originals`. Pool sources
/// are fetched through `load`, which must return clips of equal length and
/// rate. Samples are generated in parallel; each depends only on its own
/// derived seed, so the output does not depend on the thread count.
pub fn compose_batch<F>(
    originals: Vec<Source>,
    pool_ids: &[String],
    cfg: &PairMixConfig,
    params: &MelParams,
    rng_seed: u64,
    load: F,
) -> Result<ComposedBatch>
where
    F: Fn(&str) -> Result<Source> + Sync,
{
    let batch_ids: Vec<&str> = originals.iter().map(|s| s.id.as_str()).collect();
    let pool: Vec<&str> = pool_ids.iter().map(String::as_str).collect();
    let plans = plan_batch(&batch_ids, &pool, cfg, rng_seed)?;
    let mel = MelTransform::new(*params)?;
    let generated = plans
        .par_iter()
        .map(|plan| {
            let sources = plan
                .source_ids
                .iter()
                .map(|id| load(id))
                .collect::<Result<Vec<_>>>()?;
            generate_pair(&sources, cfg, &mel, plan.seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComposedBatch {
        originals,
        generated,
    })
}
