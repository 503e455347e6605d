//! Synthetic language families.
//!
//! A world owns a base language (an order-1 Markov chain over abstract base
//! words) and a set of surface languages. Each surface language is a
//! bijective word substitution followed by a word-order transform, so every
//! pair of languages has an exact translation oracle.

use std::collections::{HashMap, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const MIN_BASE_VOCAB: usize = 20;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LanguageId(pub String);

impl LanguageId {
    pub fn new(id: impl Into<String>) -> Self {
        LanguageId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for LanguageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for LanguageId {
    fn from(s: &str) -> Self {
        LanguageId(s.to_string())
    }
}

/// Permutation applied to word positions after substitution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "k")]
pub enum WordOrder {
    Identity,
    Reverse,
    /// Rotate left by `k` positions (modulo sentence length).
    Rotate(usize),
}

impl WordOrder {
    pub fn apply<T: Clone>(&self, words: &[T]) -> Vec<T> {
        let mut out = words.to_vec();
        match *self {
            WordOrder::Identity => {}
            WordOrder::Reverse => out.reverse(),
            WordOrder::Rotate(k) => {
                if !out.is_empty() {
                    let n = out.len();
                    out.rotate_left(k % n);
                }
            }
        }
        out
    }

    pub fn invert<T: Clone>(&self, words: &[T]) -> Vec<T> {
        let mut out = words.to_vec();
        match *self {
            WordOrder::Identity => {}
            WordOrder::Reverse => out.reverse(),
            WordOrder::Rotate(k) => {
                if !out.is_empty() {
                    let n = out.len();
                    out.rotate_right(k % n);
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanguageSpec {
    pub id: LanguageId,
    pub substitution_seed: u64,
    #[serde(default = "default_order")]
    pub word_order: WordOrder,
}

fn default_order() -> WordOrder {
    WordOrder::Identity
}

fn default_concentration() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorldSpec {
    pub base_vocab_size: usize,
    /// Inclusive `(min, max)` sentence length in words.
    pub sentence_length_range: (usize, usize),
    pub grammar_seed: u64,
    pub languages: Vec<LanguageSpec>,
    /// Dirichlet concentration of each transition row. Small values give
    /// peaked, easily learnable successor distributions.
    #[serde(default = "default_concentration")]
    pub transition_concentration: f64,
}

impl SyntheticWorldSpec {
    pub fn validate(&self) -> Result<()> {
        if self.base_vocab_size < MIN_BASE_VOCAB {
            return Err(Error::InvalidSpec(format!(
                "base_vocab_size {} is below the minimum of {MIN_BASE_VOCAB}",
                self.base_vocab_size
            )));
        }
        let (lo, hi) = self.sentence_length_range;
        if lo < 1 || hi < lo {
            return Err(Error::InvalidSpec(format!(
                "sentence_length_range ({lo}, {hi}) must satisfy 1 <= min <= max"
            )));
        }
        if self.languages.is_empty() {
            return Err(Error::InvalidSpec("world has no languages".into()));
        }
        let mut seen = HashSet::new();
        for l in &self.languages {
            if l.id.0.is_empty() || l.id.0.contains(char::is_whitespace) {
                return Err(Error::InvalidSpec(format!("invalid language id {:?}", l.id.0)));
            }
            if !seen.insert(&l.id) {
                return Err(Error::InvalidSpec(format!("duplicate language id {}", l.id)));
            }
        }
        if !(self.transition_concentration > 0.0 && self.transition_concentration.is_finite()) {
            return Err(Error::InvalidSpec("transition_concentration must be > 0".into()));
        }
        Ok(())
    }
}

/// Order-1 Markov chain over base word indices.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkovChain {
    initial: Vec<f64>,
    transitions: Vec<Vec<f64>>,
    length_range: (usize, usize),
}

fn dirichlet(rng: &mut rng::Rng, n: usize, alpha: f64) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha > 0");
    let mut w: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let total: f64 = w.iter().sum();
    if total > 0.0 && total.is_finite() {
        w.iter_mut().for_each(|x| *x /= total);
    } else {
        // All draws underflowed; fall back to a point mass.
        let i = rng.gen_range(0..n);
        w.iter_mut().for_each(|x| *x = 0.0);
        w[i] = 1.0;
    }
    w
}

fn sample_categorical(rng: &mut rng::Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

impl MarkovChain {
    pub fn generate(n_words: usize, length_range: (usize, usize), alpha: f64, seed: u64) -> Self {
        let mut r = rng::stream(seed, "markov-chain");
        let initial = dirichlet(&mut r, n_words, alpha.max(0.5));
        let transitions = (0..n_words).map(|_| dirichlet(&mut r, n_words, alpha)).collect();
        MarkovChain { initial, transitions, length_range }
    }

    pub fn sample(&self, rng: &mut rng::Rng) -> Vec<usize> {
        let (lo, hi) = self.length_range;
        let len = rng.gen_range(lo..=hi);
        let mut out = Vec::with_capacity(len);
        let mut cur = sample_categorical(rng, &self.initial);
        out.push(cur);
        while out.len() < len {
            cur = sample_categorical(rng, &self.transitions[cur]);
            out.push(cur);
        }
        out
    }

    pub fn transition(&self, from: usize) -> &[f64] {
        &self.transitions[from]
    }
}

/// One surface language: base word index → surface word, plus word order.
#[derive(Clone, Debug, PartialEq)]
pub struct Cipher {
    pub id: LanguageId,
    pub words: Vec<String>,
    pub order: WordOrder,
    lookup: HashMap<String, usize>,
}

impl Cipher {
    pub fn new(id: LanguageId, words: Vec<String>, order: WordOrder) -> Result<Self> {
        let mut lookup = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if w.is_empty() || w.contains(char::is_whitespace) {
                return Err(Error::InvalidSpec(format!("invalid surface word {w:?} in {id}")));
            }
            if lookup.insert(w.clone(), i).is_some() {
                return Err(Error::InvalidSpec(format!("substitution for {id} is not injective")));
            }
        }
        Ok(Cipher { id, words, order, lookup })
    }

    pub fn encode(&self, base: &[usize]) -> Vec<String> {
        let surface: Vec<String> = base.iter().map(|&b| self.words[b].clone()).collect();
        self.order.apply(&surface)
    }

    pub fn decode(&self, surface: &[&str]) -> Result<Vec<usize>> {
        let base = surface
            .iter()
            .map(|w| {
                self.lookup.get(*w).copied().ok_or_else(|| Error::UnknownWord {
                    word: w.to_string(),
                    language: self.id.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.order.invert(&base))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.lookup.contains_key(word)
    }
}

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "sh", "tr", "kl",
];
const NUCLEI: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];

fn random_word(r: &mut rng::Rng) -> String {
    let syllables = r.gen_range(2..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(ONSETS.choose(r).unwrap());
        w.push_str(NUCLEI.choose(r).unwrap());
    }
    w
}

#[derive(Clone, Debug)]
pub struct SyntheticWorld {
    pub spec: SyntheticWorldSpec,
    chain: MarkovChain,
    ciphers: Vec<Cipher>,
    owner: HashMap<String, usize>,
}

impl SyntheticWorld {
    /// Builds the world described by `spec`. Deterministic in the spec's seeds.
    pub fn build(spec: &SyntheticWorldSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.base_vocab_size;
        let chain = MarkovChain::generate(
            n,
            spec.sentence_length_range,
            spec.transition_concentration,
            spec.grammar_seed,
        );
        let mut taken: HashSet<String> = HashSet::new();
        let mut ciphers = Vec::with_capacity(spec.languages.len());
        for lang in &spec.languages {
            let mut r = rng::stream(lang.substitution_seed, &format!("substitution/{}", lang.id));
            let mut words = Vec::with_capacity(n);
            while words.len() < n {
                let w = random_word(&mut r);
                if taken.insert(w.clone()) {
                    words.push(w);
                }
            }
            ciphers.push(Cipher::new(lang.id.clone(), words, lang.word_order)?);
        }
        Self::assemble(spec.clone(), chain, ciphers)
    }

    /// Builds a world from explicit substitutions. The base vocabulary size
    /// minimum is not enforced, which makes tiny hand-written worlds possible.
    pub fn from_ciphers(
        chain: MarkovChain,
        ciphers: Vec<Cipher>,
        grammar_seed: u64,
    ) -> Result<Self> {
        let n = chain.initial.len();
        if ciphers.iter().any(|c| c.words.len() != n) {
            return Err(Error::InvalidSpec("cipher size differs from base vocabulary".into()));
        }
        let spec = SyntheticWorldSpec {
            base_vocab_size: n,
            sentence_length_range: chain.length_range,
            grammar_seed,
            languages: ciphers
                .iter()
                .map(|c| LanguageSpec { id: c.id.clone(), substitution_seed: 0, word_order: c.order })
                .collect(),
            transition_concentration: default_concentration(),
        };
        Self::assemble(spec, chain, ciphers)
    }

    fn assemble(spec: SyntheticWorldSpec, chain: MarkovChain, ciphers: Vec<Cipher>) -> Result<Self> {
        let mut owner = HashMap::new();
        let mut ids = HashSet::new();
        for (li, c) in ciphers.iter().enumerate() {
            if !ids.insert(c.id.clone()) {
                return Err(Error::InvalidSpec(format!("duplicate language id {}", c.id)));
            }
            for w in &c.words {
                if owner.insert(w.clone(), li).is_some() {
                    return Err(Error::InvalidSpec(format!(
                        "surface word {w:?} is shared between languages"
                    )));
                }
            }
        }
        Ok(SyntheticWorld { spec, chain, ciphers, owner })
    }

    pub fn languages(&self) -> Vec<LanguageId> {
        self.ciphers.iter().map(|c| c.id.clone()).collect()
    }

    pub fn has_language(&self, id: &LanguageId) -> bool {
        self.ciphers.iter().any(|c| &c.id == id)
    }

    pub fn cipher(&self, id: &LanguageId) -> Result<&Cipher> {
        self.ciphers
            .iter()
            .find(|c| &c.id == id)
            .ok_or_else(|| Error::UnknownLanguage(id.to_string()))
    }

    pub fn chain(&self) -> &MarkovChain {
        &self.chain
    }

    /// Surface vocabulary of a language, in base-word order.
    pub fn vocabulary(&self, id: &LanguageId) -> Result<&[String]> {
        Ok(&self.cipher(id)?.words)
    }

    /// The language owning a surface word, if any.
    pub fn language_of(&self, word: &str) -> Option<&LanguageId> {
        self.owner.get(word).map(|&i| &self.ciphers[i].id)
    }

    /// Renders a base sentence in a surface language.
    pub fn render(&self, base: &[usize], lang: &LanguageId) -> Result<String> {
        Ok(self.cipher(lang)?.encode(base).join(" "))
    }

    /// Exact translation between two surface languages.
    pub fn oracle_translate(&self, s: &str, src: &LanguageId, tgt: &LanguageId) -> Result<String> {
        let words: Vec<&str> = s.split_whitespace().collect();
        let base = self.cipher(src)?.decode(&words)?;
        if src == tgt {
            return Ok(words.join(" "));
        }
        self.render(&base, tgt)
    }

    /// Recovers the base sentence behind a surface sentence.
    pub fn to_base(&self, s: &str, lang: &LanguageId) -> Result<Vec<usize>> {
        let words: Vec<&str> = s.split_whitespace().collect();
        self.cipher(lang)?.decode(&words)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn spec(n: usize) -> SyntheticWorldSpec {
        SyntheticWorldSpec {
            base_vocab_size: n,
            sentence_length_range: (3, 7),
            grammar_seed: 11,
            languages: vec![
                LanguageSpec { id: "A".into(), substitution_seed: 1, word_order: WordOrder::Identity },
                LanguageSpec { id: "B".into(), substitution_seed: 2, word_order: WordOrder::Reverse },
                LanguageSpec { id: "C1".into(), substitution_seed: 3, word_order: WordOrder::Rotate(2) },
            ],
            transition_concentration: 0.1,
        }
    }

    #[test]
    fn build_is_deterministic() {
        let a = SyntheticWorld::build(&spec(24)).unwrap();
        let b = SyntheticWorld::build(&spec(24)).unwrap();
        for l in a.languages() {
            assert_eq!(a.vocabulary(&l).unwrap(), b.vocabulary(&l).unwrap());
        }
        assert_eq!(a.chain(), b.chain());
    }

    #[test]
    fn vocabularies_are_disjoint() {
        let w = SyntheticWorld::build(&spec(30)).unwrap();
        let a: HashSet<_> = w.vocabulary(&"A".into()).unwrap().iter().collect();
        let b: HashSet<_> = w.vocabulary(&"B".into()).unwrap().iter().collect();
        assert!(a.is_disjoint(&b));
        for l in w.languages() {
            for word in w.vocabulary(&l).unwrap() {
                assert_eq!(w.language_of(word), Some(&l));
            }
        }
    }

    #[test]
    fn small_vocab_rejected() {
        assert!(matches!(SyntheticWorld::build(&spec(10)), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn duplicate_language_rejected() {
        let mut s = spec(24);
        s.languages[1].id = "A".into();
        assert!(matches!(SyntheticWorld::build(&s), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn hand_written_cipher_example() {
        let chain = MarkovChain::generate(2, (1, 3), 0.5, 0);
        let a = Cipher::new("A".into(), vec!["cat".into(), "dog".into()], WordOrder::Identity).unwrap();
        let b = Cipher::new("B".into(), vec!["kot".into(), "pies".into()], WordOrder::Reverse).unwrap();
        let w = SyntheticWorld::from_ciphers(chain, vec![a, b], 0).unwrap();
        assert_eq!(w.oracle_translate("cat dog", &"A".into(), &"B".into()).unwrap(), "pies kot");
        assert_eq!(w.oracle_translate("pies kot", &"B".into(), &"A".into()).unwrap(), "cat dog");
        assert_eq!(w.oracle_translate("cat dog", &"A".into(), &"A".into()).unwrap(), "cat dog");
        assert!(matches!(
            w.oracle_translate("cat kot", &"A".into(), &"B".into()),
            Err(Error::UnknownWord { .. })
        ));
    }

    #[test]
    fn round_trip_over_random_sentences() {
        let w = SyntheticWorld::build(&spec(25)).unwrap();
        let mut r = rng::stream(5, "test");
        let langs = w.languages();
        for _ in 0..100 {
            let base = w.chain().sample(&mut r);
            for x in &langs {
                let s = w.render(&base, x).unwrap();
                for y in &langs {
                    let t = w.oracle_translate(&s, x, y).unwrap();
                    assert_eq!(w.oracle_translate(&t, y, x).unwrap(), s);
                }
            }
        }
    }

    #[test]
    fn rotate_inverts() {
        let o = WordOrder::Rotate(5);
        let v = vec![1, 2, 3];
        assert_eq!(o.invert(&o.apply(&v)), v);
        assert_eq!(o.apply(&Vec::<u8>::new()), Vec::<u8>::new());
    }

    #[test]
    fn spec_json_round_trip() {
        let s = spec(24);
        let j = serde_json::to_string(&s).unwrap();
        let back: SyntheticWorldSpec = serde_json::from_str(&j).unwrap();
        assert_eq!(s, back);
    }
}
