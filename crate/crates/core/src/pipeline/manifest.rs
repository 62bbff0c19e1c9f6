use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MAX_CAPTIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    /// Seed label of the split.
    pub fn code(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// One line of a JSONL manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative to the manifest's directory.
    pub audio_path: String,
    pub captions: Vec<String>,
    pub split: Split,
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory audio paths are resolved against.
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base_dir)
    }

    /// Parses JSONL, skipping blank lines, and validates every entry.
    pub fn parse(text: &str, base_dir: PathBuf) -> Result<Self> {
        let mut entries = Vec::new();
        let mut ids = HashSet::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry = serde_json::from_str(line)
                .map_err(|e| Error::Manifest(format!("line {}: {e}", n + 1)))?;
            entry
                .validate()
                .map_err(|m| Error::Manifest(format!("line {}: {m}", n + 1)))?;
            if !ids.insert(entry.id.clone()) {
                return Err(Error::Manifest(format!(
                    "line {}: duplicate id {:?}",
                    n + 1,
                    entry.id
                )));
            }
            entries.push(entry);
        }
        Ok(Self { entries, base_dir })
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.base_dir.join(&entry.audio_path)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("manifest entries serialize") + "\n")
            .collect()
    }

    pub fn stats(&self) -> ManifestStats {
        let mut per_split: BTreeMap<String, SplitStats> = BTreeMap::new();
        for e in &self.entries {
            let s = per_split.entry(e.split.to_string()).or_default();
            s.entries += 1;
            s.captions += e.captions.len();
            if !self.resolve(e).is_file() {
                s.missing_audio += 1;
            }
        }
        ManifestStats {
            entries: self.entries.len(),
            captions: self.entries.iter().map(|e| e.captions.len()).sum(),
            missing_audio: per_split.values().map(|s| s.missing_audio).sum(),
            per_split,
        }
    }
}

impl ManifestEntry {
    fn validate(&self) -> std::result::Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if self.audio_path.trim().is_empty() {
            return Err(format!("{}: empty audio_path", self.id));
        }
        if self.captions.is_empty() || self.captions.len() > MAX_CAPTIONS {
            return Err(format!(
                "{}: expected 1..={MAX_CAPTIONS} captions, found {}",
                self.id,
                self.captions.len()
            ));
        }
        if self.captions.iter().any(|c| c.trim().is_empty()) {
            return Err(format!("{}: empty caption", self.id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub entries: usize,
    pub captions: usize,
    pub missing_audio: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestStats {
    pub entries: usize,
    pub captions: usize,
    pub missing_audio: usize,
    pub per_split: BTreeMap<String, SplitStats>,
}
