use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{LanguageId, MonolingualCorpus};
use crate::error::{Error, Result};

pub type TokenId = u32;

/// Fixed special token ids. Language tags follow at `FIRST_TAG..`.
pub struct Specials;

impl Specials {
    pub const PAD: TokenId = 0;
    pub const BOS: TokenId = 1;
    pub const EOS: TokenId = 2;
    pub const UNK: TokenId = 3;
    pub const FIRST_TAG: TokenId = 4;

    pub const PAD_STR: &'static str = "<pad>";
    pub const BOS_STR: &'static str = "<s>";
    pub const EOS_STR: &'static str = "</s>";
    pub const UNK_STR: &'static str = "<unk>";

    pub fn tag_string(lang: &LanguageId) -> String {
        format!("{lang} version:")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "VocabFile", try_from = "VocabFile")]
pub struct Vocabulary {
    tokens: Vec<String>,
    languages: Vec<LanguageId>,
    index: HashMap<String, TokenId>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    languages: Vec<LanguageId>,
    tokens: Vec<String>,
}

impl From<Vocabulary> for VocabFile {
    fn from(v: Vocabulary) -> Self {
        VocabFile { languages: v.languages, tokens: v.tokens }
    }
}

impl TryFrom<VocabFile> for Vocabulary {
    type Error = Error;

    fn try_from(f: VocabFile) -> Result<Self> {
        let expected_prefix = Vocabulary::special_strings(&f.languages);
        if f.tokens.len() < expected_prefix.len() || f.tokens[..expected_prefix.len()] != expected_prefix[..] {
            return Err(Error::InvalidArgument("vocabulary special tokens are malformed".into()));
        }
        Vocabulary::from_tokens(f.tokens, f.languages)
    }
}

impl Vocabulary {
    fn special_strings(languages: &[LanguageId]) -> Vec<String> {
        let mut v = vec![
            Specials::PAD_STR.to_string(),
            Specials::BOS_STR.to_string(),
            Specials::EOS_STR.to_string(),
            Specials::UNK_STR.to_string(),
        ];
        v.extend(languages.iter().map(Specials::tag_string));
        v
    }

    fn from_tokens(tokens: Vec<String>, languages: Vec<LanguageId>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate vocabulary entry {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, languages, index })
    }

    /// One id per observed word, ranked by descending frequency (ties by
    /// byte order), after the specials and one tag per language.
    pub fn build(corpora: &[&MonolingualCorpus], languages: &[LanguageId]) -> Result<Self> {
        if corpora.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for c in corpora {
            for s in &c.sentences {
                for w in s.split_whitespace() {
                    *counts.entry(w).or_default() += 1;
                }
            }
        }
        let mut tokens = Self::special_strings(languages);
        let mut words: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|(w, _)| !tokens.iter().any(|t| t == w))
            .collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        tokens.extend(words.into_iter().map(|(w, _)| w.to_string()));
        Self::from_tokens(tokens, languages.to_vec())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn languages(&self) -> &[LanguageId] {
        &self.languages
    }

    pub fn tag(&self, lang: &LanguageId) -> Result<TokenId> {
        self.languages
            .iter()
            .position(|l| l == lang)
            .map(|i| Specials::FIRST_TAG + i as TokenId)
            .ok_or_else(|| Error::UnknownLanguage(lang.to_string()))
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        (id as usize) < Specials::FIRST_TAG as usize + self.languages.len()
    }

    pub fn id(&self, word: &str) -> Option<TokenId> {
        self.index.get(word).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Whitespace split; unknown words map to UNK.
    pub fn tokenize(&self, s: &str) -> Vec<TokenId> {
        s.split_whitespace().map(|w| self.id(w).unwrap_or(Specials::UNK)).collect()
    }

    /// Inverse of [`tokenize`](Self::tokenize). Control tokens and language
    /// tags are skipped; UNK renders as `<unk>`.
    pub fn detokenize(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .filter(|&&id| id == Specials::UNK || !self.is_special(id))
            .map(|&id| self.token(id).unwrap_or(Specials::UNK_STR))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// SHA-256 over the id-ordered token strings, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path.as_ref(), json).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
