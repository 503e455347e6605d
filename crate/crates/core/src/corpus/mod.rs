//! Synthetic worlds, monolingual corpora, vocabularies and evaluation sets.

mod vocab;
mod world;

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use vocab::{Specials, TokenId, Vocabulary};
pub use world::{
    Cipher, LanguageId, LanguageSpec, MarkovChain, SyntheticWorld, SyntheticWorldSpec, WordOrder,
    MIN_BASE_VOCAB,
};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    /// Split owning a base sentence: 80/10/10 by content hash.
    fn of_base(base: &[usize], grammar_seed: u64) -> Split {
        let mut bytes = grammar_seed.to_le_bytes().to_vec();
        for &b in base {
            bytes.extend_from_slice(&(b as u32).to_le_bytes());
        }
        match rng::fnv1a(&bytes) % 100 {
            0..=79 => Split::Train,
            80..=89 => Split::Valid,
            _ => Split::Test,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonolingualCorpus {
    pub language: LanguageId,
    pub split: Split,
    pub sentences: Vec<String>,
}

impl MonolingualCorpus {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn write_plaintext(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.sentences.join("\n");
        if !text.is_empty() {
            text.push('\n');
        }
        fs::write(path.as_ref(), text).map_err(|e| Error::io(path.as_ref(), e))
    }
}

/// Samples `n` sentences of `lang` from the world's generator.
///
/// Each base sentence belongs to exactly one split (by content hash), so
/// splits are disjoint as string sets in every language.
pub fn sample_monolingual(
    world: &SyntheticWorld,
    lang: &LanguageId,
    n: usize,
    split: Split,
    seed: u64,
) -> Result<MonolingualCorpus> {
    if n == 0 {
        return Err(Error::InvalidArgument("corpus size must be at least 1".into()));
    }
    let cipher = world.cipher(lang)?;
    let mut r = rng::stream(seed, &format!("mono/{lang}/{split}"));
    let grammar_seed = world.spec.grammar_seed;
    let mut sentences = Vec::with_capacity(n);
    while sentences.len() < n {
        let base = world.chain().sample(&mut r);
        if Split::of_base(&base, grammar_seed) == split {
            sentences.push(cipher.encode(&base).join(" "));
        }
    }
    Ok(MonolingualCorpus { language: lang.clone(), split, sentences })
}

/// Reads a newline-delimited UTF-8 corpus; lines are trimmed and blanks dropped.
pub fn load_plaintext(path: impl AsRef<Path>, lang: LanguageId, split: Split) -> Result<MonolingualCorpus> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut sentences = Vec::new();
    for (i, line) in bytes.split(|&b| b == b'\n').enumerate() {
        let line = std::str::from_utf8(line)
            .map_err(|_| Error::Encoding { path: path.display().to_string(), line: i + 1 })?;
        let line = line.trim();
        if !line.is_empty() {
            sentences.push(line.to_string());
        }
    }
    Ok(MonolingualCorpus { language: lang, split, sentences })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSet {
    pub src: LanguageId,
    pub tgt: LanguageId,
    pub pairs: Vec<(String, String)>,
}

impl EvalSet {
    /// Oracle-referenced evaluation pairs drawn from a held-out split.
    pub fn synthetic(
        world: &SyntheticWorld,
        src: &LanguageId,
        tgt: &LanguageId,
        n: usize,
        split: Split,
        seed: u64,
    ) -> Result<Self> {
        let corpus = sample_monolingual(world, src, n, split, rng::derive_seed(seed, &format!("eval/{tgt}")))?;
        let pairs = corpus
            .sentences
            .into_iter()
            .map(|s| {
                let r = world.oracle_translate(&s, src, tgt)?;
                Ok((s, r))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EvalSet { src: src.clone(), tgt: tgt.clone(), pairs })
    }

    /// Pairs from two line-aligned held-out files.
    pub fn from_files(
        src: LanguageId,
        tgt: LanguageId,
        src_path: impl AsRef<Path>,
        ref_path: impl AsRef<Path>,
    ) -> Result<Self> {
        let s = load_plaintext(src_path, src.clone(), Split::Test)?;
        let r = load_plaintext(ref_path, tgt.clone(), Split::Test)?;
        if s.len() != r.len() {
            return Err(Error::LengthMismatch { hyps: s.len(), refs: r.len() });
        }
        Ok(EvalSet { src, tgt, pairs: s.sentences.into_iter().zip(r.sentences).collect() })
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }
}
