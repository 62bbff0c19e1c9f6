use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed;
use crate::signal::{MelParams, MelSpectrogram};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpecAugmentSpec {
    pub n_time_masks: usize,
    /// Upper bound (inclusive) on a time mask's width, in frames.
    pub max_time_width: usize,
    pub n_freq_masks: usize,
    /// Upper bound (inclusive) on a frequency mask's width, in mel bins.
    pub max_freq_width: usize,
    pub mask_value: f32,
}

impl Default for SpecAugmentSpec {
    fn default() -> Self {
        Self {
            n_time_masks: 2,
            max_time_width: 64,
            n_freq_masks: 2,
            max_freq_width: 8,
            mask_value: MelParams::default().floor_value(),
        }
    }
}

impl SpecAugmentSpec {
    /// Upper bound on the number of masked cells for an `n_frames x n_mels` grid.
    pub fn masked_cell_bound(&self, n_frames: usize, n_mels: usize) -> usize {
        self.n_time_masks * self.max_time_width.min(n_frames) * n_mels
            + self.n_freq_masks * self.max_freq_width.min(n_mels) * n_frames
    }
}

/// Sets frames `start..start + width` to `value` (clipped to the grid).
pub fn apply_time_mask(s: &mut MelSpectrogram, start: usize, width: usize, value: f32) {
    let n_mels = s.n_mels();
    let end = (start + width).min(s.n_frames());
    for t in start.min(end)..end {
        s.data_mut()[t * n_mels..(t + 1) * n_mels].fill(value);
    }
}

/// Sets mel bins `start..start + width` of every frame to `value`.
pub fn apply_freq_mask(s: &mut MelSpectrogram, start: usize, width: usize, value: f32) {
    let n_mels = s.n_mels();
    let end = (start + width).min(n_mels);
    if start >= end {
        return;
    }
    for frame in s.data_mut().chunks_exact_mut(n_mels) {
        frame[start..end].fill(value);
    }
}

/// Masks random time and frequency stripes.
///
/// Widths are drawn from `U{0..=max}` (the max is clipped to the axis
/// length) and starts from `U{0..=len - width}`. Time masks are drawn
/// first, then frequency masks.
pub fn spec_augment(s: &MelSpectrogram, spec: &SpecAugmentSpec, rng_seed: u64) -> MelSpectrogram {
    let mut rng = seed::rng(rng_seed);
    let mut out = s.clone();
    let (n_frames, n_mels) = (s.n_frames(), s.n_mels());

    for _ in 0..spec.n_time_masks {
        let (start, width) = draw_stripe(&mut rng, spec.max_time_width, n_frames);
        apply_time_mask(&mut out, start, width, spec.mask_value);
    }
    for _ in 0..spec.n_freq_masks {
        let (start, width) = draw_stripe(&mut rng, spec.max_freq_width, n_mels);
        apply_freq_mask(&mut out, start, width, spec.mask_value);
    }
    out
}

fn draw_stripe(rng: &mut impl Rng, max_width: usize, len: usize) -> (usize, usize) {
    let width = rng.random_range(0..=max_width.min(len));
    let start = rng.random_range(0..=len - width);
    (start, width)
}
