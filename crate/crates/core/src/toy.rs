//! A small seeded two-layer model for exercising the TTA engine, and the
//! τ-sweep experiment that runs on it.
//!
//! Layer 1 (the encoder) mean-pools a log-mel grid over frames, projects it
//! to `d` dimensions and applies `tanh`. Layer 2 (the head) is a linear map
//! to `c` scores followed by a softmax. In affine mode both nonlinearities
//! are dropped.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::AudioAugSpecs;
use crate::seed;
use crate::signal::{MelParams, MelSpectrogram, Waveform};
use crate::tta::{
    augment_inputs, conventional_tta, execute, multi_tta_uniform, Layer, LayeredModel, Strategy,
};
use crate::{Error, Result};

/// Layer at which the encoder output lives.
pub const ENCODER_LAYER: usize = 1;
pub const DEPTH: usize = 2;

/// τ values of the sweep.
pub const SWEEP_TAUS: [usize; 4] = [10, 25, 50, 100];

/// `(tau, encoder group size, head group size)` for the multi-level runs.
pub const SWEEP_TUPLES: [(usize, usize, usize); 4] =
    [(10, 2, 5), (25, 5, 5), (50, 5, 10), (100, 5, 20)];

struct Encoder {
    n_mels: usize,
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    affine: bool,
}

impl Layer for Encoder {
    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let frames = x.len() / self.n_mels;
        let mut pooled = vec![0.0; self.n_mels];
        for frame in x.chunks_exact(self.n_mels) {
            for (p, v) in pooled.iter_mut().zip(frame) {
                *p += v;
            }
        }
        pooled.iter_mut().for_each(|p| *p /= frames as f64);
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| {
                let z = row.iter().zip(&pooled).map(|(w, p)| w * p).sum::<f64>() + b;
                if self.affine {
                    z
                } else {
                    z.tanh()
                }
            })
            .collect()
    }

    fn accepts(&self, len: usize) -> bool {
        len > 0 && len.is_multiple_of(self.n_mels)
    }
}

struct Head {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    affine: bool,
}

impl Layer for Head {
    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect();
        if self.affine {
            return z;
        }
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = e.iter().sum();
        e.into_iter().map(|v| v / total).collect()
    }

    fn input_dim(&self) -> Option<usize> {
        Some(self.weights[0].len())
    }
}

pub struct ToyModel {
    pub seed: u64,
    pub n_mels: usize,
    pub d: usize,
    pub c: usize,
    pub affine: bool,
    model: LayeredModel,
}

impl ToyModel {
    pub fn layered(&self) -> &LayeredModel {
        &self.model
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.model.forward(x)
    }
}

fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| {
            (0..cols)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect()
}

/// Builds the model from `seed`: encoder `d x n_mels`, head `c x d`.
pub fn build_toy_model(
    seed: u64,
    n_mels: usize,
    d: usize,
    c: usize,
    affine_mode: bool,
) -> Result<ToyModel> {
    if n_mels == 0 || d == 0 || c == 0 {
        return Err(Error::InvalidParameter(
            "toy model dimensions must be at least 1".into(),
        ));
    }
    let mut rng = seed::rng(seed);
    // log-mel magnitudes are O(10); keep the encoder out of tanh saturation
    let enc_scale = 1.0 / (8.0 * (n_mels as f64).sqrt());
    let encoder = Encoder {
        n_mels,
        weights: gaussian_matrix(&mut rng, d, n_mels, enc_scale),
        bias: gaussian_matrix(&mut rng, 1, d, 0.1).remove(0),
        affine: affine_mode,
    };
    let head = Head {
        weights: gaussian_matrix(&mut rng, c, d, 3.0 / (d as f64).sqrt()),
        bias: gaussian_matrix(&mut rng, 1, c, 0.1).remove(0),
        affine: affine_mode,
    };
    Ok(ToyModel {
        seed,
        n_mels,
        d,
        c,
        affine: affine_mode,
        model: LayeredModel::new(vec![Box::new(encoder), Box::new(head)])?,
    })
}

/// Flattens a log-mel grid into the encoder's input vector.
pub fn mel_to_value(s: &MelSpectrogram) -> Vec<f64> {
    s.data().iter().map(|&v| f64::from(v)).collect()
}

/// A labelled strategy in the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentCell {
    pub label: String,
    pub strategy: Strategy,
}

/// Conventional, mid-level (all views averaged at the encoder output) and,
/// where τ has a multi-level tuple, the multi-level strategy for every τ.
pub fn default_grid(taus: &[usize]) -> Result<Vec<ExperimentCell>> {
    let mut cells = Vec::new();
    for &tau in taus {
        cells.push(ExperimentCell {
            label: "conventional".into(),
            strategy: conventional_tta(tau, DEPTH)?,
        });
        cells.push(ExperimentCell {
            label: "mid".into(),
            strategy: multi_tta_uniform(&[tau, 1], &[ENCODER_LAYER, DEPTH], DEPTH)?,
        });
        if let Some(s) = sweep_multi_tta(tau) {
            cells.push(ExperimentCell {
                label: s.label(),
                strategy: s,
            });
        }
    }
    Ok(cells)
}

/// The multi-level strategy of the sweep for `tau`, if there is one.
pub fn sweep_multi_tta(tau: usize) -> Option<Strategy> {
    SWEEP_TUPLES.iter().find(|t| t.0 == tau).map(|&(_, a, b)| {
        multi_tta_uniform(&[a, b], &[ENCODER_LAYER, DEPTH], DEPTH).expect("valid tuple")
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub strategy: String,
    pub tau: usize,
    /// Number of repeated augmentation draws behind the row.
    pub repeat: usize,
    /// L2 norm of the mean prediction, averaged over clean inputs.
    pub mean_l2: f64,
    /// Trace of the prediction covariance across repeats, averaged over
    /// clean inputs.
    pub variance_trace: f64,
}

/// Runs every cell on every clean input `repeats` times.
///
/// Repeat `r` of input `i` draws `max τ` augmented views with seed
/// `derive(seed, [r, i])`; a cell with τ views uses the first τ of them,
/// so all strategies at one τ see identical views.
pub fn tta_experiment(
    model: &ToyModel,
    clean_inputs: &[Waveform],
    specs: &AudioAugSpecs,
    params: &MelParams,
    cells: &[ExperimentCell],
    repeats: usize,
    seed: u64,
) -> Result<Vec<ExperimentRow>> {
    if repeats == 0 || clean_inputs.is_empty() || cells.is_empty() {
        return Err(Error::InvalidParameter(
            "need at least one repeat, clean input and strategy".into(),
        ));
    }
    for cell in cells {
        crate::tta::validate_strategy(&cell.strategy, model.layered().depth())?;
    }
    let max_tau = cells.iter().map(|c| c.strategy.tau()).max().unwrap_or(1);

    // predictions[r][i][cell]
    let predictions: Vec<Vec<Vec<Vec<f64>>>> = (0..repeats)
        .into_par_iter()
        .map(|r| {
            clean_inputs
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    let views: Vec<Vec<f64>> = augment_inputs(
                        x,
                        max_tau,
                        specs,
                        params,
                        seed::derive(seed, &[r as u64, i as u64]),
                    )?
                    .iter()
                    .map(mel_to_value)
                    .collect();
                    cells
                        .iter()
                        .map(|cell| {
                            execute(
                                model.layered(),
                                &cell.strategy,
                                &views[..cell.strategy.tau()],
                            )
                            .map(|o| o.prediction)
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let rows = cells
        .iter()
        .enumerate()
        .map(|(k, cell)| {
            let (mut l2, mut var) = (0.0, 0.0);
            for i in 0..clean_inputs.len() {
                let draws: Vec<&Vec<f64>> = predictions.iter().map(|p| &p[i][k]).collect();
                let (m, v) = mean_and_variance_trace(&draws);
                l2 += m.iter().map(|x| x * x).sum::<f64>().sqrt();
                var += v;
            }
            let n = clean_inputs.len() as f64;
            ExperimentRow {
                strategy: cell.label.clone(),
                tau: cell.strategy.tau(),
                repeat: repeats,
                mean_l2: l2 / n,
                variance_trace: var / n,
            }
        })
        .collect();
    Ok(rows)
}

/// Mean vector and trace of the sample covariance (denominator `n - 1`;
/// zero for a single draw).
pub fn mean_and_variance_trace(draws: &[&Vec<f64>]) -> (Vec<f64>, f64) {
    let n = draws.len();
    let dim = draws[0].len();
    let mean: Vec<f64> = (0..dim)
        .map(|d| draws.iter().map(|v| v[d]).sum::<f64>() / n as f64)
        .collect();
    if n < 2 {
        return (mean, 0.0);
    }
    let trace = (0..dim)
        .map(|d| draws.iter().map(|v| (v[d] - mean[d]).powi(2)).sum::<f64>() / (n - 1) as f64)
        .sum();
    (mean, trace)
}

pub const CSV_HEADER: &str = "strategy,tau,repeat,mean_l2,variance_trace";

pub fn rows_to_csv(rows: &[ExperimentRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.strategy, r.tau, r.repeat, r.mean_l2, r.variance_trace
        )
        .expect("writing to a String");
    }
    out
}

pub fn write_csv(path: impl AsRef<Path>, rows: &[ExperimentRow]) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("csv.tmp");
    std::fs::write(&tmp, rows_to_csv(rows))
        .and_then(|_| std::fs::rename(&tmp, path))
        .map_err(|e| Error::io(path, e))
}
