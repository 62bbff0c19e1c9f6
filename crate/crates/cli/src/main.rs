//! `pairmix`: dataset augmentation and test-time augmentation experiments.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use log::{info, warn};

use pairmix_core::pairmix::Variant;
use pairmix_core::pipeline::{
    default_choices, run_augment, run_tta_sim, synth_corpus, synthetic_inputs, Manifest,
    PipelineConfig, StrategyChoice, TtaSimRequest,
};
use pairmix_core::signal::{fix_length, load_wav, resample, write_mels, MelTransform};
use pairmix_core::toy::{write_csv, SWEEP_TAUS};
use pairmix_core::tta::StrategySpec;

#[derive(Parser)]
#[command(
    name = "pairmix",
    version,
    about = "Paired audio-text augmentation and multi-level TTA"
)]
struct Cli {
    /// Pipeline config (JSON). Omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Writes augmented mel spectrograms and samples.jsonl for the train split.
    Augment {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long)]
        k_ratio: Option<f64>,
    },
    /// Converts one WAV file to a MELS binary.
    Mel {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Runs the TTA variance sweep on a toy model and writes a CSV.
    TtaSim {
        /// Number of views; repeatable. Defaults to 10, 25, 50 and 100.
        #[arg(long)]
        tau: Vec<usize>,
        /// Comma-separated: conventional, mid, multi, or AxB.
        #[arg(long, value_delimiter = ',')]
        strategies: Option<Vec<String>>,
        #[arg(long, default_value_t = 20)]
        repeats: usize,
        #[arg(long, default_value = "tta_sim.csv")]
        out: PathBuf,
        /// Clean WAV inputs; repeatable. Synthetic clips are used when absent.
        #[arg(long)]
        input: Vec<PathBuf>,
        #[arg(long, default_value_t = 4)]
        n_inputs: usize,
        #[arg(long, default_value_t = 0.5)]
        clip_seconds: f64,
        #[arg(long, default_value_t = 16)]
        hidden: usize,
        #[arg(long, default_value_t = 10)]
        classes: usize,
        /// Drop the model's nonlinearities.
        #[arg(long)]
        affine: bool,
    },
    /// Checks a strategy JSON file against the partition laws.
    ValidateStrategy {
        /// Strategy JSON file, or `-` for stdin.
        strategy: PathBuf,
        /// Model depth; defaults to the depth implied by the file.
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Summarizes a manifest.
    Stats { manifest: PathBuf },
    /// Writes a synthetic corpus (WAV clips plus manifest).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 32)]
        clips: usize,
        #[arg(long, default_value_t = 10.0)]
        seconds: f64,
    },
}

/// Bad command-line input; exits with code 2.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PAIRMIX_LOG", "info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(e: &anyhow::Error) -> ExitCode {
    let malformed = e.chain().any(|c| {
        c.is::<Usage>()
            || c.is::<serde_json::Error>()
            || matches!(
                c.downcast_ref::<pairmix_core::Error>(),
                Some(pairmix_core::Error::Json(_))
            )
    });
    ExitCode::from(if malformed { 2 } else { 1 })
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            PipelineConfig::load(path).with_context(|| format!("config {}", path.display()))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Augment {
            manifest,
            out,
            variant,
            k_ratio,
        } => {
            if let Some(v) = variant {
                cfg.pairmix.variant = v;
            }
            if let Some(k) = k_ratio {
                cfg.pairmix.k_ratio = k;
            }
            cfg.validate()?;
            let manifest = Manifest::load(&manifest)?;
            let summary = run_augment(&manifest, &cfg, &out)?;
            if summary.missing_audio > 0 {
                warn!(
                    "{} train entries skipped for missing audio",
                    summary.missing_audio
                );
            }
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Mel { input, out } => {
            let w = resample(&load_wav(&input)?, cfg.mel.sample_rate)?;
            let mel = MelTransform::new(cfg.mel)?.apply(&w)?;
            write_mels(&out, &mel)?;
            info!(
                "{}: {} frames x {} mels",
                out.display(),
                mel.n_frames(),
                mel.n_mels()
            );
        }
        Command::TtaSim {
            tau,
            strategies,
            repeats,
            out,
            input,
            n_inputs,
            clip_seconds,
            hidden,
            classes,
            affine,
        } => {
            return tta_sim(
                &cfg,
                tau,
                strategies,
                repeats,
                &out,
                &input,
                n_inputs,
                clip_seconds,
                hidden,
                classes,
                affine,
            )
        }
        Command::ValidateStrategy { strategy, depth } => {
            return validate_strategy(&strategy, depth)
        }
        Command::Stats { manifest } => {
            let stats = Manifest::load(&manifest)?.stats();
            println!("{}", serde_json::to_string_pretty(&stats)?);
        }
        Command::Synth {
            out,
            clips,
            seconds,
        } => {
            let path = synth_corpus(&out, clips, seconds, cfg.mel.sample_rate, cfg.seed)?;
            println!("{}", path.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn tta_sim(
    cfg: &PipelineConfig,
    taus: Vec<usize>,
    strategies: Option<Vec<String>>,
    repeats: usize,
    out: &Path,
    inputs: &[PathBuf],
    n_inputs: usize,
    clip_seconds: f64,
    hidden: usize,
    classes: usize,
    affine: bool,
) -> Result<ExitCode> {
    let strategies = match strategies {
        None => default_choices(),
        Some(names) => names
            .iter()
            .filter(|n| !n.trim().is_empty())
            .map(|n| {
                n.parse::<StrategyChoice>()
                    .map_err(|e| usage(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?,
    };
    if strategies.is_empty() {
        return Err(usage("no strategies given"));
    }
    let taus = if taus.is_empty() {
        SWEEP_TAUS.to_vec()
    } else {
        taus
    };
    if taus.contains(&0) || repeats == 0 {
        return Err(usage("tau and repeats must be at least 1"));
    }
    let clean_inputs = if inputs.is_empty() {
        synthetic_inputs(n_inputs, clip_seconds, cfg.mel.sample_rate, cfg.seed)?
    } else {
        inputs
            .iter()
            .map(|p| {
                let w = resample(&load_wav(p)?, cfg.mel.sample_rate)?;
                fix_length(&w, clip_seconds)
            })
            .collect::<pairmix_core::Result<_>>()?
    };
    let report = run_tta_sim(&TtaSimRequest {
        taus,
        strategies,
        repeats,
        seed: cfg.seed,
        specs: cfg.audio_specs(),
        mel: cfg.mel,
        clean_inputs,
        hidden,
        classes,
        affine,
    })?;
    for v in &report.verdicts {
        println!("{v}");
    }
    if !report.all_valid() {
        eprintln!("error: invalid strategy; nothing run");
        return Ok(ExitCode::from(1));
    }
    write_csv(out, &report.rows)?;
    info!("wrote {} rows to {}", report.rows.len(), out.display());
    Ok(ExitCode::SUCCESS)
}

fn validate_strategy(path: &Path, depth: Option<usize>) -> Result<ExitCode> {
    let text = if path == Path::new("-") {
        std::io::read_to_string(std::io::stdin())?
    } else {
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?
    };
    let spec: StrategySpec =
        serde_json::from_str(&text).map_err(|e| usage(format!("malformed strategy JSON: {e}")))?;
    match spec.build(depth) {
        Ok(_) => {
            println!("ok");
            Ok(ExitCode::SUCCESS)
        }
        Err(v) => {
            println!("{v}");
            Ok(ExitCode::from(1))
        }
    }
}
