//! Dataset-level drivers: manifests, configuration and the runs behind
//! the command-line tool.

mod augment;
mod config;
mod manifest;
mod synth;
mod tta_sim;

pub use augment::{run_augment, AugmentSummary, SampleKind, SampleRecord, SAMPLES_FILE};
pub use config::PipelineConfig;
pub use manifest::{Manifest, ManifestEntry, ManifestStats, Split, SplitStats, MAX_CAPTIONS};
pub use synth::{synth_corpus, SYNTH_MANIFEST};
pub use tta_sim::{
    default_choices, run_tta_sim, synthetic_inputs, StrategyChoice, StrategyVerdict, TtaSimReport,
    TtaSimRequest,
};

use std::fs;
use std::path::Path;

use crate::{Error, Result};

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes)
        .and_then(|_| fs::rename(&tmp, path))
        .map_err(|e| Error::io(path, e))
}
