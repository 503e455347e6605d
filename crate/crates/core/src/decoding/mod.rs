//! Prompt construction and token-level ensemble decoding.
//!
//! Every member scores the same prefix; the per-member logit vectors are
//! averaged before the temperature and the softmax are applied.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::{LanguageId, Specials, TokenId, Vocabulary};
use crate::error::{Error, Result};
use crate::model::Transformer;
use crate::rng;
use crate::scalar::Scalar;

/// `[BOS, TAG(src), src…, TAG(tgt)]`; generation continues after the last tag.
pub fn build_translation_prompt(
    vocab: &Vocabulary,
    src_lang: &LanguageId,
    tgt_lang: &LanguageId,
    src_tokens: &[TokenId],
) -> Result<Vec<TokenId>> {
    let src_tag = vocab.tag(src_lang)?;
    let tgt_tag = vocab.tag(tgt_lang)?;
    let mut out = Vec::with_capacity(src_tokens.len() + 3);
    out.push(Specials::BOS);
    out.push(src_tag);
    out.extend_from_slice(src_tokens);
    out.push(tgt_tag);
    Ok(out)
}

/// Tag and sentence boundaries recovered from a rendered token sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptSpans {
    pub first_tag: TokenId,
    /// Token range of the first sentence.
    pub first: std::ops::Range<usize>,
    pub second_tag: Option<TokenId>,
    /// Token range of the second sentence (up to, excluding, EOS).
    pub second: Option<std::ops::Range<usize>>,
    pub has_eos: bool,
}

/// Parses `[BOS, TAG, s…, (TAG, t…)?, EOS?]`.
pub fn parse_spans(vocab: &Vocabulary, tokens: &[TokenId]) -> Result<PromptSpans> {
    let bad = |m: &str| Error::InvalidArgument(format!("malformed sequence: {m}"));
    let is_tag = |t: TokenId| t >= Specials::FIRST_TAG && vocab.is_special(t);
    if tokens.len() < 2 || tokens[0] != Specials::BOS || !is_tag(tokens[1]) {
        return Err(bad("expected BOS followed by a language tag"));
    }
    let has_eos = tokens.last() == Some(&Specials::EOS);
    let end = if has_eos { tokens.len() - 1 } else { tokens.len() };
    let body = &tokens[2..end];
    if body.iter().any(|&t| matches!(t, Specials::BOS | Specials::EOS | Specials::PAD)) {
        return Err(bad("unexpected control token inside a sentence"));
    }
    match body.iter().position(|&t| is_tag(t)) {
        None => Ok(PromptSpans { first_tag: tokens[1], first: 2..end, second_tag: None, second: None, has_eos }),
        Some(p) => {
            let tag_pos = 2 + p;
            if tokens[tag_pos + 1..end].iter().any(|&t| is_tag(t)) {
                return Err(bad("more than two language tags"));
            }
            Ok(PromptSpans {
                first_tag: tokens[1],
                first: 2..tag_pos,
                second_tag: Some(tokens[tag_pos]),
                second: Some(tag_pos + 1..end),
                has_eos,
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub temperature: f64,
    /// Explicit generation cap. `None` means `2 × source length + 8`,
    /// clipped to the remaining context.
    #[serde(default)]
    pub max_new_tokens: Option<usize>,
    #[serde(default)]
    pub greedy: bool,
    #[serde(default)]
    pub rng_seed: u64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig { temperature: 0.1, max_new_tokens: None, greedy: false, rng_seed: 0 }
    }
}

impl DecodeConfig {
    pub fn greedy() -> Self {
        DecodeConfig { greedy: true, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidArgument("temperature must be > 0".into()));
        }
        if self.max_new_tokens == Some(0) {
            return Err(Error::InvalidArgument("max_new_tokens must be >= 1".into()));
        }
        Ok(())
    }

    /// The same configuration with the sampling stream of sentence `index`.
    pub fn for_sentence(&self, index: u64) -> Self {
        DecodeConfig { rng_seed: rng::derive_indexed(self.rng_seed, index), ..self.clone() }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        DecodeConfig { rng_seed: seed, ..self.clone() }
    }
}

/// Default generation budget for a source of `src_len` tokens.
pub fn default_max_new_tokens(src_len: usize) -> usize {
    2 * src_len + 8
}

/// Ordered, non-empty set of models that decode together.
#[derive(Clone, Debug)]
pub struct Ensemble<'a, S> {
    members: Vec<&'a Transformer<S>>,
}

impl<'a, S: Scalar> Ensemble<'a, S> {
    /// Members must agree on vocabulary size and context window.
    pub fn new(members: Vec<&'a Transformer<S>>) -> Result<Self> {
        let first = members.first().ok_or(Error::EmptyEnsemble)?;
        let (v, c) = (first.config().vocab_size, first.config().max_context);
        for m in &members[1..] {
            if m.config().vocab_size != v {
                return Err(Error::ShapeMismatch(format!(
                    "member vocabulary {} differs from {v}",
                    m.config().vocab_size
                )));
            }
            if m.config().max_context != c {
                return Err(Error::ShapeMismatch("members disagree on max_context".into()));
            }
        }
        Ok(Ensemble { members })
    }

    /// Like [`new`](Self::new), additionally requiring every member's
    /// vocabulary hash to equal `expected`.
    pub fn with_vocab_hashes(members: Vec<(&'a Transformer<S>, &str)>, expected: &str) -> Result<Self> {
        for (_, h) in &members {
            if *h != expected {
                return Err(Error::VocabHashMismatch { expected: expected.to_string(), found: h.to_string() });
            }
        }
        Self::new(members.into_iter().map(|(m, _)| m).collect())
    }

    pub fn single(model: &'a Transformer<S>) -> Self {
        Ensemble { members: vec![model] }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[&'a Transformer<S>] {
        &self.members
    }

    pub fn max_context(&self) -> usize {
        self.members[0].config().max_context
    }
}

/// Element-wise arithmetic mean, summed in member order in `f64`.
pub fn ensemble_average_logits<S: Scalar>(vectors: &[&[S]]) -> Result<Vec<f64>> {
    let first = vectors.first().ok_or(Error::EmptyEnsemble)?;
    let v = first.len();
    let mut acc = vec![0.0f64; v];
    for z in vectors {
        if z.len() != v {
            return Err(Error::ShapeMismatch(format!("logit vector of length {} vs {v}", z.len())));
        }
        for (a, x) in acc.iter_mut().zip(z.iter()) {
            *a += x.f64();
        }
    }
    let n = vectors.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// Index of the maximum; ties go to the lowest index.
pub fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in z.iter().enumerate().skip(1) {
        if x > z[best] {
            best = i;
        }
    }
    best
}

/// `softmax(z / temperature)`.
pub fn next_token_distribution(z: &[f64], temperature: f64) -> Vec<f64> {
    let mut p: Vec<f64> = z.iter().map(|x| x / temperature).collect();
    crate::model::softmax(&mut p);
    p
}

fn sample(probs: &[f64], r: &mut rng::Rng) -> usize {
    let u: f64 = r.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Generates a continuation of `prompt`. The returned tokens exclude EOS.
///
/// `src_len` sets the default generation budget when the config has none.
pub fn decode<S: Scalar>(
    ensemble: &Ensemble<'_, S>,
    prompt: &[TokenId],
    src_len: usize,
    cfg: &DecodeConfig,
) -> Result<Vec<TokenId>> {
    cfg.validate()?;
    let ctx = ensemble.max_context();
    if prompt.is_empty() {
        return Err(Error::InvalidArgument("prompt is empty".into()));
    }
    if prompt.len() >= ctx {
        return Err(Error::ContextOverflow { len: prompt.len() + 1, max: ctx });
    }
    let budget = match cfg.max_new_tokens {
        Some(n) => {
            if prompt.len() + n > ctx {
                return Err(Error::ContextOverflow { len: prompt.len() + n, max: ctx });
            }
            n
        }
        None => default_max_new_tokens(src_len).min(ctx - prompt.len()),
    };
    let mut r = rng::indexed_stream(cfg.rng_seed, 0);
    let mut caches: Vec<_> = ensemble.members.iter().map(|m| m.new_cache()).collect();
    let mut logits: Vec<Vec<S>> = ensemble
        .members
        .iter()
        .zip(caches.iter_mut())
        .map(|(m, c)| m.extend(c, prompt))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    loop {
        let views: Vec<&[S]> = logits.iter().map(|l| l.as_slice()).collect();
        let z = ensemble_average_logits(&views)?;
        let next = if cfg.greedy {
            argmax(&z)
        } else {
            sample(&next_token_distribution(&z, cfg.temperature), &mut r)
        } as TokenId;
        if next == Specials::EOS {
            break;
        }
        out.push(next);
        if out.len() >= budget {
            break;
        }
        for ((m, c), l) in ensemble.members.iter().zip(caches.iter_mut()).zip(logits.iter_mut()) {
            *l = m.extend(c, &[next])?;
        }
    }
    Ok(out)
}

/// Sentence-level translation system: an ensemble, a single model, or a
/// hand-built stub.
pub trait Translator {
    /// Translates each sentence. Output order matches input order.
    fn translate(&self, src: &LanguageId, tgt: &LanguageId, sentences: &[String]) -> Result<Vec<String>>;
}

/// Token-level translation of one sentence; `index` selects the sampling
/// stream so that a batch can be generated in any order.
pub trait TokenTranslator {
    fn translate_tokens(&self, src: &LanguageId, tgt: &LanguageId, tokens: &[TokenId], index: u64)
        -> Result<Vec<TokenId>>;
}

/// Decodes whitespace-tokenized sentences with an ensemble. Sentence `i`
/// samples from its own stream derived from `(cfg.rng_seed, i)`.
pub struct EnsembleTranslator<'a, S> {
    pub ensemble: Ensemble<'a, S>,
    pub vocab: &'a Vocabulary,
    pub cfg: DecodeConfig,
}

impl<'a, S: Scalar> EnsembleTranslator<'a, S> {
    pub fn new(ensemble: Ensemble<'a, S>, vocab: &'a Vocabulary, cfg: DecodeConfig) -> Self {
        EnsembleTranslator { ensemble, vocab, cfg }
    }

    /// Token-level translation of one sentence with stream index `index`.
    pub fn decode_tokens(
        &self,
        src: &LanguageId,
        tgt: &LanguageId,
        tokens: &[TokenId],
        index: u64,
    ) -> Result<Vec<TokenId>> {
        let prompt = build_translation_prompt(self.vocab, src, tgt, tokens)?;
        if prompt.len() >= self.ensemble.max_context() {
            // Source too long to leave room for any output.
            return Ok(Vec::new());
        }
        decode(&self.ensemble, &prompt, tokens.len(), &self.cfg.for_sentence(index))
    }
}

impl<S: Scalar> TokenTranslator for EnsembleTranslator<'_, S> {
    fn translate_tokens(&self, src: &LanguageId, tgt: &LanguageId, tokens: &[TokenId], index: u64)
        -> Result<Vec<TokenId>> {
        self.decode_tokens(src, tgt, tokens, index)
    }
}

impl<S: Scalar> Translator for EnsembleTranslator<'_, S> {
    fn translate(&self, src: &LanguageId, tgt: &LanguageId, sentences: &[String]) -> Result<Vec<String>> {
        sentences
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let toks = self.vocab.tokenize(s);
                let out = self.decode_tokens(src, tgt, &toks, i as u64)?;
                Ok(self.vocab.detokenize(&out))
            })
            .collect()
    }
}
