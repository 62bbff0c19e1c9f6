use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::check_probability;
use crate::{seed, Error, Result};

/// Synonym table, keyed by lower-cased word.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Lexicon(BTreeMap<String, Vec<String>>);

impl Lexicon {
    /// Parses lines of the form `word<TAB>syn1,syn2`. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, syns) = line.split_once('\t').ok_or_else(|| {
                Error::InvalidParameter(format!("lexicon line {}: missing tab", n + 1))
            })?;
            let word = word.trim().to_lowercase();
            let syns: Vec<String> = syns
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty() && s.to_lowercase() != word)
                .collect();
            if !word.is_empty() && !syns.is_empty() {
                map.entry(word).or_insert_with(Vec::new).extend(syns);
            }
        }
        Ok(Self(map))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn synonyms(&self, word: &str) -> Option<&[String]> {
        self.0.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromIterator<(String, Vec<String>)> for Lexicon {
    fn from_iter<I: IntoIterator<Item = (String, Vec<String>)>>(iter: I) -> Self {
        Self(
            iter.into_iter()
                .map(|(k, v)| (k.to_lowercase(), v))
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdaSpec {
    pub alpha_sr: f64,
    pub alpha_ri: f64,
    pub alpha_rs: f64,
    pub p_rd: f64,
    pub lexicon: Lexicon,
}

impl Default for EdaSpec {
    fn default() -> Self {
        Self {
            alpha_sr: 0.1,
            alpha_ri: 0.1,
            alpha_rs: 0.1,
            p_rd: 0.1,
            lexicon: Lexicon::default(),
        }
    }
}

impl EdaSpec {
    pub fn validate(&self) -> Result<()> {
        check_probability("alpha_sr", self.alpha_sr)?;
        check_probability("alpha_ri", self.alpha_ri)?;
        check_probability("alpha_rs", self.alpha_rs)?;
        check_probability("p_rd", self.p_rd)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdaOp {
    SynonymReplacement,
    RandomInsertion,
    RandomSwap,
    RandomDeletion,
}

impl EdaOp {
    pub const ALL: [EdaOp; 4] = [
        EdaOp::SynonymReplacement,
        EdaOp::RandomInsertion,
        EdaOp::RandomSwap,
        EdaOp::RandomDeletion,
    ];

    /// Applies this single operation to whitespace-separated `words`.
    pub fn apply(self, words: &[String], spec: &EdaSpec, rng: &mut impl Rng) -> Vec<String> {
        let count = |alpha: f64| (alpha * words.len() as f64).round() as usize;
        match self {
            EdaOp::SynonymReplacement => {
                synonym_replacement(words, &spec.lexicon, count(spec.alpha_sr), rng)
            }
            EdaOp::RandomInsertion => {
                random_insertion(words, &spec.lexicon, count(spec.alpha_ri), rng)
            }
            EdaOp::RandomSwap => random_swap(words, count(spec.alpha_rs), rng),
            EdaOp::RandomDeletion => random_deletion(words, spec.p_rd, rng),
        }
    }
}

/// Applies one EDA operation, chosen uniformly, to the caption. Returns the
/// augmented caption and the operation used.
pub fn eda_augment(caption: &str, spec: &EdaSpec, rng_seed: u64) -> Result<(String, EdaOp)> {
    spec.validate()?;
    let words: Vec<String> = caption.split_whitespace().map(str::to_owned).collect();
    if words.is_empty() {
        return Err(Error::InvalidParameter("caption has no words".into()));
    }
    let mut rng = seed::rng(rng_seed);
    let op = *EdaOp::ALL.choose(&mut rng).expect("non-empty");
    Ok((op.apply(&words, spec, &mut rng).join(" "), op))
}

fn synonym_replacement(
    words: &[String],
    lexicon: &Lexicon,
    n: usize,
    rng: &mut impl Rng,
) -> Vec<String> {
    let mut out = words.to_vec();
    let mut eligible: Vec<usize> = (0..words.len())
        .filter(|&i| lexicon.synonyms(&words[i]).is_some())
        .collect();
    eligible.shuffle(rng);
    for &i in eligible.iter().take(n) {
        let syns = lexicon.synonyms(&words[i]).expect("eligible");
        out[i] = syns.choose(rng).expect("non-empty synonym list").clone();
    }
    out
}

fn random_insertion(
    words: &[String],
    lexicon: &Lexicon,
    n: usize,
    rng: &mut impl Rng,
) -> Vec<String> {
    let mut out = words.to_vec();
    for _ in 0..n {
        // up to ten attempts to find a word with synonyms
        let synonym = (0..10).find_map(|_| {
            let w = out.choose(rng).expect("non-empty");
            lexicon.synonyms(w).and_then(|s| s.choose(rng)).cloned()
        });
        if let Some(s) = synonym {
            let pos = rng.random_range(0..=out.len());
            out.insert(pos, s);
        }
    }
    out
}

fn random_swap(words: &[String], n: usize, rng: &mut impl Rng) -> Vec<String> {
    let mut out = words.to_vec();
    if out.len() < 2 {
        return out;
    }
    for _ in 0..n {
        let a = rng.random_range(0..out.len());
        let b = rng.random_range(0..out.len());
        out.swap(a, b);
    }
    out
}

fn random_deletion(words: &[String], p: f64, rng: &mut impl Rng) -> Vec<String> {
    if words.len() == 1 {
        return words.to_vec();
    }
    let kept: Vec<String> = words
        .iter()
        .filter(|_| rng.random::<f64>() >= p)
        .cloned()
        .collect();
    if kept.is_empty() {
        vec![words.choose(rng).expect("non-empty").clone()]
    } else {
        kept
    }
}
