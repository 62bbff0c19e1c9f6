use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::augment::AudioAugSpecs;
use crate::seed;
use crate::signal::{MelParams, Waveform};
use crate::toy::{
    build_toy_model, sweep_multi_tta, tta_experiment, ExperimentCell, ExperimentRow, DEPTH,
    ENCODER_LAYER,
};
use crate::tta::{conventional_tta, multi_tta_uniform, Strategy, Violation};
use crate::{Error, Result};

/// A strategy family requested by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrategyChoice {
    Conventional,
    /// Every view averaged once, at the encoder output.
    Mid,
    /// The multi-level tuple of the standard sweep for each τ.
    Multi,
    /// Groups of `a` at the encoder output, then `b` at the head; τ = a·b.
    Grid(usize, usize),
}

impl FromStr for StrategyChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "conventional" => return Ok(Self::Conventional),
            "mid" => return Ok(Self::Mid),
            "multi" => return Ok(Self::Multi),
            _ => {}
        }
        let parse = |t: &str| t.trim().parse::<usize>().ok();
        lower
            .split_once(['x', '×'])
            .and_then(|(a, b)| Some(Self::Grid(parse(a)?, parse(b)?)))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown strategy {s:?}")))
    }
}

impl fmt::Display for StrategyChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Conventional => f.write_str("conventional"),
            Self::Mid => f.write_str("mid"),
            Self::Multi => f.write_str("multi"),
            Self::Grid(a, b) => write!(f, "{a}x{b}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TtaSimRequest {
    pub taus: Vec<usize>,
    pub strategies: Vec<StrategyChoice>,
    pub repeats: usize,
    pub seed: u64,
    /// Train-time specs; views use their halved form.
    pub specs: AudioAugSpecs,
    pub mel: MelParams,
    pub clean_inputs: Vec<Waveform>,
    pub hidden: usize,
    pub classes: usize,
    pub affine: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyVerdict {
    pub label: String,
    pub tau: usize,
    /// `None` when the strategy is valid.
    pub violation: Option<String>,
}

impl fmt::Display for StrategyVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.violation {
            None => write!(f, "{} (tau {}): ok", self.label, self.tau),
            Some(v) => write!(f, "{} (tau {}): {v}", self.label, self.tau),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TtaSimReport {
    pub verdicts: Vec<StrategyVerdict>,
    /// Empty when any strategy failed validation.
    pub rows: Vec<ExperimentRow>,
}

impl TtaSimReport {
    pub fn all_valid(&self) -> bool {
        self.verdicts.iter().all(|v| v.violation.is_none())
    }
}

fn cells_for(
    choice: StrategyChoice,
    taus: &[usize],
) -> Vec<(String, usize, std::result::Result<Strategy, Violation>)> {
    let mid = |tau| multi_tta_uniform(&[tau, 1], &[ENCODER_LAYER, DEPTH], DEPTH);
    match choice {
        StrategyChoice::Conventional => taus
            .iter()
            .map(|&t| ("conventional".into(), t, conventional_tta(t, DEPTH)))
            .collect(),
        StrategyChoice::Mid => taus.iter().map(|&t| ("mid".into(), t, mid(t))).collect(),
        StrategyChoice::Multi => taus
            .iter()
            .filter_map(|&t| sweep_multi_tta(t).map(|s| (s.label(), t, Ok(s))))
            .collect(),
        StrategyChoice::Grid(a, b) => {
            let s = multi_tta_uniform(&[a, b], &[ENCODER_LAYER, DEPTH], DEPTH);
            let label = s
                .as_ref()
                .map(Strategy::label)
                .unwrap_or_else(|_| format!("{a}×{b}"));
            vec![(label, a * b, s)]
        }
    }
}

/// Validates every requested strategy and, when all pass, runs the
/// variance sweep on a seeded toy model.
pub fn run_tta_sim(req: &TtaSimRequest) -> Result<TtaSimReport> {
    if req.strategies.is_empty() || req.taus.is_empty() {
        return Err(Error::InvalidParameter(
            "no strategies or taus requested".into(),
        ));
    }
    let mut verdicts = Vec::new();
    let mut cells = Vec::new();
    for &choice in &req.strategies {
        let found = cells_for(choice, &req.taus);
        if found.is_empty() {
            log::warn!("{choice}: no strategy defined for the requested taus");
        }
        for (label, tau, built) in found {
            verdicts.push(StrategyVerdict {
                label: label.clone(),
                tau,
                violation: built.as_ref().err().map(ToString::to_string),
            });
            if let Ok(strategy) = built {
                cells.push(ExperimentCell { label, strategy });
            }
        }
    }
    let mut report = TtaSimReport {
        verdicts,
        rows: Vec::new(),
    };
    if !report.all_valid() || cells.is_empty() {
        return Ok(report);
    }
    let model = build_toy_model(
        req.seed,
        req.mel.n_mels,
        req.hidden,
        req.classes,
        req.affine,
    )?;
    report.rows = tta_experiment(
        &model,
        &req.clean_inputs,
        &req.specs.halved(),
        &req.mel,
        &cells,
        req.repeats,
        seed::derive(req.seed, &[1]),
    )?;
    Ok(report)
}

/// Strategy choices covering the standard sweep.
pub fn default_choices() -> Vec<StrategyChoice> {
    vec![
        StrategyChoice::Conventional,
        StrategyChoice::Mid,
        StrategyChoice::Multi,
    ]
}

/// Seeded clean inputs: a few decaying partials plus a little noise.
pub fn synthetic_inputs(
    n: usize,
    seconds: f64,
    sample_rate: u32,
    rng_seed: u64,
) -> Result<Vec<Waveform>> {
    let len = (seconds * f64::from(sample_rate)).round() as usize;
    (0..n)
        .map(|i| {
            let mut rng = seed::rng(seed::derive(rng_seed, &[i as u64]));
            let partials: Vec<(f64, f64)> = (0..3)
                .map(|_| (rng.random_range(100.0..6000.0), rng.random_range(0.05..0.3)))
                .collect();
            let samples = (0..len)
                .map(|t| {
                    let time = t as f64 / f64::from(sample_rate);
                    let tone: f64 = partials
                        .iter()
                        .map(|&(f, a)| a * (std::f64::consts::TAU * f * time).sin())
                        .sum();
                    (tone * (-time).exp() + 0.01 * rng.sample::<f64, _>(StandardNormal)) as f32
                })
                .collect();
            Waveform::new(samples, sample_rate)
        })
        .collect()
}
