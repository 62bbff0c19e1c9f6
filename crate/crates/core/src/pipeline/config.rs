use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::{AudioAugSpecs, EdaSpec, Lexicon, NoiseSpec, ReverbSpec, SpecAugmentSpec};
use crate::pairmix::PairMixConfig;
use crate::signal::MelParams;
use crate::{Error, Result};

/// Everything a dataset run needs. Missing fields take their defaults, so
/// `{}` is a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub mel: MelParams,
    pub noise: NoiseSpec,
    pub reverb: ReverbSpec,
    pub specaug: SpecAugmentSpec,
    pub eda: EdaSpec,
    pub pairmix: PairMixConfig,
    pub seed: u64,
    pub batch_size: usize,
    /// Every clip is cut or padded to this length before use.
    pub clip_seconds: f64,
    /// Text augmentation on original captions. Off by default: captioning
    /// targets are left untouched.
    pub apply_eda: bool,
    /// Synonym lexicon merged into `eda.lexicon` when the config is loaded.
    /// Relative paths resolve against the config file's directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lexicon_path: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mel: MelParams::default(),
            noise: NoiseSpec::default(),
            reverb: ReverbSpec::default(),
            specaug: SpecAugmentSpec::default(),
            eda: EdaSpec::default(),
            pairmix: PairMixConfig::default(),
            seed: 0,
            batch_size: 32,
            clip_seconds: 10.0,
            apply_eda: false,
            lexicon_path: None,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text)?;
        if let Some(lex) = &cfg.lexicon_path {
            let lex = path.parent().unwrap_or(Path::new("")).join(lex);
            let loaded = Lexicon::load(&lex)?;
            cfg.eda.lexicon = if cfg.eda.lexicon.is_empty() {
                loaded
            } else {
                cfg.eda.lexicon.clone()
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.mel.validate()?;
        self.audio_specs().validate()?;
        self.eda.validate()?;
        self.pairmix.validate()?;
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter(
                "batch_size must be at least 1".into(),
            ));
        }
        if !(self.clip_seconds > 0.0 && self.clip_seconds.is_finite()) {
            return Err(Error::InvalidParameter(
                "clip_seconds must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Train-time audio augmentation specs.
    pub fn audio_specs(&self) -> AudioAugSpecs {
        AudioAugSpecs {
            noise: self.noise.clone(),
            reverb: self.reverb.clone(),
            specaug: self.specaug.clone(),
        }
    }

    pub fn clip_samples(&self) -> usize {
        (self.clip_seconds * f64::from(self.mel.sample_rate)).round() as usize
    }
}
