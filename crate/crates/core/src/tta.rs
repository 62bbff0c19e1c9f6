//! Multi-level test-time augmentation.
//!
//! A [`Strategy`] fixes, for every layer `h` of a [`LayeredModel`], a
//! partition `P_h` of the previous layer's live outputs. Layer `h` is applied
//! to every live value, and the outputs inside each group of `P_h` are
//! averaged with equal weights, so `|P_h|` values survive the layer. The
//! first partition is over the `tau` augmented inputs and the last one must
//! have exactly one group.
//!
//! Conventional TTA (average only the final outputs) and Mid-TTA (average
//! once at an intermediate layer) are special cases with dedicated
//! constructors. Group indices are 0-based; layers are numbered from 1.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{add_gaussian_noise, apply_reverb, spec_augment, AudioAugSpecs};
use crate::seed::{self, stream};
use crate::signal::{MelParams, MelSpectrogram, MelTransform, Waveform};
use crate::{Error, Result};

/// One index group of a layer partition.
pub type Group = Vec<usize>;

/// The first law a strategy breaks.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("tau must be at least 1")]
    ZeroTau,
    #[error("strategy has no layers")]
    NoLayers,
    #[error("strategy has {found} layers but the model has {expected}")]
    LayerCount { expected: usize, found: usize },
    #[error("layer {layer}: group {group} is empty")]
    EmptyGroup { layer: usize, group: usize },
    #[error("layer {layer}: index {index} is out of range for {count} inputs")]
    IndexOutOfRange {
        layer: usize,
        index: usize,
        count: usize,
    },
    #[error("layer {layer}: index {index} appears in more than one group")]
    DuplicateIndex { layer: usize, index: usize },
    #[error("layer {layer}: input {index} is not covered by any group")]
    MissingIndex { layer: usize, index: usize },
    #[error("layer {layer}: group size must be at least 1")]
    ZeroGroupSize { layer: usize },
    #[error("layer {layer}: group size {group_size} does not divide {count}")]
    GroupSizeDoesNotDivide {
        layer: usize,
        group_size: usize,
        count: usize,
    },
    #[error("aggregation layers must be strictly increasing within 1..={depth}, got {layers:?}")]
    LayerOrder { layers: Vec<usize>, depth: usize },
    #[error("final layer must yield one output, got {count}")]
    FinalLayerOutputs { count: usize },
    #[error("product of group sizes {product} does not equal tau {tau}")]
    TauProduct { product: usize, tau: usize },
    #[error("mid-level aggregation layer {h_prime} must satisfy 1 <= h' < {depth}")]
    MidLayer { h_prime: usize, depth: usize },
}

/// A multi-level TTA plan: `tau` inputs and one partition per layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strategy {
    tau: usize,
    partitions: Vec<Vec<Group>>,
}

impl Strategy {
    /// Builds a strategy from explicit partitions, validating it against a
    /// model of `partitions.len()` layers.
    pub fn new(tau: usize, partitions: Vec<Vec<Group>>) -> Result<Self, Violation> {
        let s = Self { tau, partitions };
        validate_strategy(&s, s.partitions.len())?;
        Ok(s)
    }

    /// Builds without validation, e.g. to report violations later.
    pub fn new_unchecked(tau: usize, partitions: Vec<Vec<Group>>) -> Self {
        Self { tau, partitions }
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn depth(&self) -> usize {
        self.partitions.len()
    }

    pub fn partitions(&self) -> &[Vec<Group>] {
        &self.partitions
    }

    /// `|P_h|` for every layer.
    pub fn output_counts(&self) -> Vec<usize> {
        self.partitions.iter().map(Vec::len).collect()
    }

    /// Group size of each layer when every group in that layer has the
    /// same size; `None` if some layer is non-uniform.
    pub fn uniform_group_sizes(&self) -> Option<Vec<usize>> {
        self.partitions
            .iter()
            .map(|groups| {
                let first = groups.first()?.len();
                groups.iter().all(|g| g.len() == first).then_some(first)
            })
            .collect()
    }

    /// Short label: `conventional`-style strategies show the aggregating
    /// group sizes joined by `×`, e.g. `5×20`.
    pub fn label(&self) -> String {
        match self.uniform_group_sizes() {
            Some(sizes) => {
                let agg: Vec<String> = sizes
                    .iter()
                    .filter(|&&g| g > 1)
                    .map(usize::to_string)
                    .collect();
                if agg.is_empty() {
                    "1".into()
                } else {
                    agg.join("×")
                }
            }
            None => "custom".into(),
        }
    }
}

/// Checks the partition laws at every layer, that the first layer covers
/// `0..tau`, that the final layer has one group, and (for uniform
/// strategies) that the product of the group sizes equals `tau`.
pub fn validate_strategy(s: &Strategy, depth: usize) -> Result<(), Violation> {
    if s.tau == 0 {
        return Err(Violation::ZeroTau);
    }
    if s.partitions.is_empty() {
        return Err(Violation::NoLayers);
    }
    if s.partitions.len() != depth {
        return Err(Violation::LayerCount {
            expected: depth,
            found: s.partitions.len(),
        });
    }
    let mut live = s.tau;
    for (h, groups) in s.partitions.iter().enumerate() {
        let layer = h + 1;
        let mut seen = vec![false; live];
        for (g, group) in groups.iter().enumerate() {
            if group.is_empty() {
                return Err(Violation::EmptyGroup { layer, group: g });
            }
            for &index in group {
                if index >= live {
                    return Err(Violation::IndexOutOfRange {
                        layer,
                        index,
                        count: live,
                    });
                }
                if std::mem::replace(&mut seen[index], true) {
                    return Err(Violation::DuplicateIndex { layer, index });
                }
            }
        }
        if let Some(index) = seen.iter().position(|&c| !c) {
            return Err(Violation::MissingIndex { layer, index });
        }
        live = groups.len();
    }
    if live != 1 {
        return Err(Violation::FinalLayerOutputs { count: live });
    }
    if let Some(sizes) = s.uniform_group_sizes() {
        let product: usize = sizes.iter().product();
        if product != s.tau {
            return Err(Violation::TauProduct {
                product,
                tau: s.tau,
            });
        }
    }
    Ok(())
}

fn singletons(n: usize) -> Vec<Group> {
    (0..n).map(|i| vec![i]).collect()
}

/// Average only the final outputs: singleton groups on layers `1..H-1`,
/// one group of all `tau` values on layer `H`.
pub fn conventional_tta(tau: usize, depth: usize) -> Result<Strategy, Violation> {
    if tau == 0 {
        return Err(Violation::ZeroTau);
    }
    if depth == 0 {
        return Err(Violation::NoLayers);
    }
    let mut partitions = vec![singletons(tau); depth - 1];
    partitions.push(vec![(0..tau).collect()]);
    Strategy::new(tau, partitions)
}

/// Keep all `tau` branches through layer `h_prime`, average them all on
/// layer `h_prime + 1`, then run the single survivor through the rest.
pub fn mid_tta(tau: usize, h_prime: usize, depth: usize) -> Result<Strategy, Violation> {
    if tau == 0 {
        return Err(Violation::ZeroTau);
    }
    if h_prime == 0 || h_prime >= depth {
        return Err(Violation::MidLayer { h_prime, depth });
    }
    let mut partitions = vec![singletons(tau); h_prime];
    partitions.push(vec![(0..tau).collect()]);
    partitions.extend(std::iter::repeat_n(singletons(1), depth - h_prime - 1));
    Strategy::new(tau, partitions)
}

/// Uniform consecutive grouping with an explicit `tau`.
///
/// `layers` lists `(layer, group_size)` pairs with strictly increasing
/// layer numbers in `1..=depth`; unlisted layers use singleton groups.
pub fn uniform_strategy(
    tau: usize,
    layers: &[(usize, usize)],
    depth: usize,
) -> Result<Strategy, Violation> {
    if tau == 0 {
        return Err(Violation::ZeroTau);
    }
    if depth == 0 {
        return Err(Violation::NoLayers);
    }
    let indices: Vec<usize> = layers.iter().map(|&(h, _)| h).collect();
    let ordered = indices.windows(2).all(|w| w[0] < w[1])
        && indices.iter().all(|&h| (1..=depth).contains(&h));
    if !ordered {
        return Err(Violation::LayerOrder {
            layers: indices,
            depth,
        });
    }

    let mut live = tau;
    let mut partitions = Vec::with_capacity(depth);
    for layer in 1..=depth {
        let size = layers.iter().find(|&&(h, _)| h == layer).map(|&(_, g)| g);
        match size {
            Some(0) => return Err(Violation::ZeroGroupSize { layer }),
            Some(g) if !live.is_multiple_of(g) => {
                return Err(Violation::GroupSizeDoesNotDivide {
                    layer,
                    group_size: g,
                    count: live,
                })
            }
            Some(g) => {
                partitions.push(
                    (0..live / g)
                        .map(|i| (i * g..(i + 1) * g).collect())
                        .collect(),
                );
                live /= g;
            }
            None => partitions.push(singletons(live)),
        }
    }
    let strategy = Strategy::new_unchecked(tau, partitions);
    validate_strategy(&strategy, depth)?;
    Ok(strategy)
}

/// Uniform strategy whose `tau` is the product of the group sizes.
/// `layer_indices` must be strictly increasing and end at `depth`.
pub fn multi_tta_uniform(
    group_sizes: &[usize],
    layer_indices: &[usize],
    depth: usize,
) -> Result<Strategy, Violation> {
    if group_sizes.len() != layer_indices.len() || layer_indices.last() != Some(&depth) {
        return Err(Violation::LayerOrder {
            layers: layer_indices.to_vec(),
            depth,
        });
    }
    let tau = group_sizes.iter().product();
    let layers: Vec<(usize, usize)> = layer_indices
        .iter()
        .copied()
        .zip(group_sizes.iter().copied())
        .collect();
    uniform_strategy(tau, &layers, depth)
}

/// JSON form of a strategy: either uniform per-layer group sizes or
/// explicit partitions.
///
/// ```json
/// {"tau": 10, "layers": [{"index": 1, "group_size": 2}, {"index": 2, "group_size": 5}]}
/// {"tau": 4, "partitions": [[[0], [1], [2], [3]], [[0, 1, 2, 3]]]}
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StrategySpec {
    Uniform {
        tau: usize,
        layers: Vec<UniformLayer>,
        /// Model depth; defaults to the last listed layer index.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        depth: Option<usize>,
    },
    Explicit {
        tau: usize,
        partitions: Vec<Vec<Group>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniformLayer {
    pub index: usize,
    pub group_size: usize,
}

impl StrategySpec {
    pub fn depth(&self) -> usize {
        match self {
            StrategySpec::Uniform { layers, depth, .. } => {
                depth.unwrap_or_else(|| layers.iter().map(|l| l.index).max().unwrap_or(0))
            }
            StrategySpec::Explicit { partitions, .. } => partitions.len(),
        }
    }

    /// Builds and validates the strategy against `depth` layers (or the
    /// spec's own depth when `None`).
    pub fn build(&self, depth: Option<usize>) -> Result<Strategy, Violation> {
        let depth = depth.unwrap_or_else(|| self.depth());
        match self {
            StrategySpec::Uniform { tau, layers, .. } => {
                let pairs: Vec<(usize, usize)> =
                    layers.iter().map(|l| (l.index, l.group_size)).collect();
                uniform_strategy(*tau, &pairs, depth)
            }
            StrategySpec::Explicit { tau, partitions } => {
                let s = Strategy::new_unchecked(*tau, partitions.clone());
                validate_strategy(&s, depth)?;
                Ok(s)
            }
        }
    }
}

impl From<&Strategy> for StrategySpec {
    fn from(s: &Strategy) -> Self {
        StrategySpec::Explicit {
            tau: s.tau,
            partitions: s.partitions.clone(),
        }
    }
}

/// One stage of a layered model.
pub trait Layer: Send + Sync {
    fn forward(&self, x: &[f64]) -> Vec<f64>;

    /// Accepted input dimension; `None` accepts any length.
    fn input_dim(&self) -> Option<usize> {
        None
    }

    fn accepts(&self, len: usize) -> bool {
        self.input_dim().is_none_or(|d| d == len)
    }
}

/// Wraps a closure as a [`Layer`].
pub struct FnLayer<F> {
    f: F,
    input_dim: Option<usize>,
}

impl<F> FnLayer<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    pub fn new(input_dim: Option<usize>, f: F) -> Self {
        Self { f, input_dim }
    }
}

impl<F> Layer for FnLayer<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    fn forward(&self, x: &[f64]) -> Vec<f64> {
        (self.f)(x)
    }

    fn input_dim(&self) -> Option<usize> {
        self.input_dim
    }
}

/// An ordered stack of layers `f_1..f_H`.
pub struct LayeredModel {
    layers: Vec<Box<dyn Layer>>,
}

impl LayeredModel {
    pub fn new(layers: Vec<Box<dyn Layer>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter(
                "a model needs at least one layer".into(),
            ));
        }
        Ok(Self { layers })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Applies layer `h` (1-based), checking its input dimension.
    pub fn apply_layer(&self, h: usize, x: &[f64]) -> Result<Vec<f64>> {
        let layer = &self.layers[h - 1];
        if !layer.accepts(x.len()) {
            return Err(Error::Dimension {
                layer: h,
                detail: match layer.input_dim() {
                    Some(dim) => format!("expected input of length {dim}, got {}", x.len()),
                    None => format!("input of length {} not accepted", x.len()),
                },
            });
        }
        Ok(layer.forward(x))
    }

    /// Plain forward pass through all layers.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        (1..=self.depth()).try_fold(x.to_vec(), |v, h| self.apply_layer(h, &v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtaOutput {
    pub prediction: Vec<f64>,
    /// `|P_h|` after each layer; the last entry is 1.
    pub intermediate_counts: Vec<usize>,
    pub stabilized: bool,
}

/// Runs the strategy: `o_0 = inputs`, and for each layer every group
/// output is the equal-weight mean of the layer applied to its members.
/// Group members are summed in ascending index order, so the result does
/// not depend on how many threads evaluate the branches.
pub fn execute(m: &LayeredModel, s: &Strategy, inputs: &[Vec<f64>]) -> Result<TtaOutput> {
    validate_strategy(s, m.depth())?;
    if inputs.len() != s.tau() {
        return Err(Error::InvalidParameter(format!(
            "strategy expects {} inputs, got {}",
            s.tau(),
            inputs.len()
        )));
    }

    let mut live: Vec<Vec<f64>> = inputs.to_vec();
    let mut counts = Vec::with_capacity(m.depth());
    for (h, groups) in s.partitions().iter().enumerate() {
        let layer = h + 1;
        let outputs: Vec<Vec<f64>> = live
            .par_iter()
            .map(|v| m.apply_layer(layer, v))
            .collect::<Result<_>>()?;
        let dim = outputs[0].len();
        if outputs.iter().any(|o| o.len() != dim) {
            return Err(Error::Dimension {
                layer,
                detail: "branches produced outputs of different lengths".into(),
            });
        }
        live = groups.iter().map(|g| group_mean(&outputs, g)).collect();
        counts.push(live.len());
    }

    let prediction = live.pop().expect("final layer has one group");
    if prediction.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite prediction".into()));
    }
    Ok(TtaOutput {
        prediction,
        intermediate_counts: counts,
        stabilized: false,
    })
}

fn group_mean(outputs: &[Vec<f64>], group: &[usize]) -> Vec<f64> {
    let mut order = group.to_vec();
    order.sort_unstable();
    let mut acc = outputs[order[0]].clone();
    for &j in &order[1..] {
        for (a, v) in acc.iter_mut().zip(&outputs[j]) {
            *a += v;
        }
    }
    let n = order.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Averages the un-augmented prediction with the TTA prediction, 0.5 each.
pub fn stabilized_predict(
    m: &LayeredModel,
    s: &Strategy,
    clean: &[f64],
    views: &[Vec<f64>],
) -> Result<TtaOutput> {
    let plain = m.forward(clean)?;
    let mut out = execute(m, s, views)?;
    if plain.len() != out.prediction.len() {
        return Err(Error::Dimension {
            layer: m.depth(),
            detail: "clean and augmented predictions differ in length".into(),
        });
    }
    for (p, c) in out.prediction.iter_mut().zip(&plain) {
        *p = 0.5 * c + 0.5 * *p;
    }
    out.stabilized = true;
    Ok(out)
}

/// Produces `tau` independently augmented log-mel views of `x`:
/// Gaussian noise, then reverb on the waveform, the mel transform, then
/// SpecAugment. View `j` uses seeds derived from `(rng_seed, j)`. No paired
/// mixing happens at test time.
pub fn augment_inputs(
    x: &Waveform,
    tau: usize,
    specs: &AudioAugSpecs,
    params: &MelParams,
    rng_seed: u64,
) -> Result<Vec<MelSpectrogram>> {
    if tau == 0 {
        return Err(Error::InvalidParameter("tau must be at least 1".into()));
    }
    specs.validate()?;
    let mel = MelTransform::new(*params)?;
    (0..tau)
        .into_par_iter()
        .map(|j| {
            augment_view(
                x,
                specs,
                &mel,
                seed::derive(rng_seed, &[stream::VIEW, j as u64]),
            )
        })
        .collect()
}

fn augment_view(
    x: &Waveform,
    specs: &AudioAugSpecs,
    mel: &MelTransform,
    view_seed: u64,
) -> Result<MelSpectrogram> {
    let (noisy, _) =
        add_gaussian_noise(x, &specs.noise, seed::derive(view_seed, &[stream::NOISE]))?;
    let (wet, _) = apply_reverb(
        &noisy,
        &specs.reverb,
        seed::derive(view_seed, &[stream::REVERB]),
    )?;
    let s = mel.apply(&wet)?;
    Ok(spec_augment(
        &s,
        &specs.specaug,
        seed::derive(view_seed, &[stream::SPEC_AUGMENT]),
    ))
}
