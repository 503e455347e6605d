//! Collapse detection for back-translation training.
//!
//! Copying collapse shows up as outputs equal to their inputs; constant
//! output collapse as outputs that barely depend on the input. Neither
//! mutual information nor a collapse threshold is estimated here: the
//! statistics are reported and the caller decides.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{sample_monolingual, LanguageId, Specials, Split, SyntheticWorld};
use crate::decoding::Translator;
use crate::error::{Error, Result};
use crate::eval::{chrf_sentence, ChrfConfig};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    pub src: LanguageId,
    pub tgt: LanguageId,
    pub copying_rate: f64,
    pub constancy_score: f64,
    pub distinct_output_ratio: f64,
    pub target_language_rate: f64,
    pub sample_size: usize,
}

fn normalize(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

/// Fraction of pairs whose output equals the input as a token sequence.
pub fn copying_rate<I: AsRef<str>, O: AsRef<str>>(pairs: &[(I, O)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let copied = pairs.iter().filter(|(i, o)| normalize(i.as_ref()) == normalize(o.as_ref())).count();
    Ok(copied as f64 / pairs.len() as f64)
}

/// Returns `(constancy, distinct_ratio)` for outputs of distinct inputs.
///
/// Constancy is the mean sentence chrF over all unordered output pairs,
/// divided by 100. Both argument orders of chrF are averaged so the score does
/// not depend on the input order.
pub fn constancy_score<O: AsRef<str>>(outputs: &[O]) -> Result<(f64, f64)> {
    let n = outputs.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let norm: Vec<String> = outputs.iter().map(|o| normalize(o.as_ref()).join(" ")).collect();
    let distinct = norm.iter().collect::<HashSet<_>>().len();
    let cfg = ChrfConfig::default();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let s = if norm[i] == norm[j] {
                100.0
            } else {
                0.5 * (chrf_sentence(&norm[i], &norm[j], &cfg) + chrf_sentence(&norm[j], &norm[i], &cfg))
            };
            total += s;
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    Ok((total / pairs / 100.0, distinct as f64 / n as f64))
}

fn is_special_word(w: &str) -> bool {
    matches!(w, Specials::PAD_STR | Specials::BOS_STR | Specials::EOS_STR | Specials::UNK_STR)
}

/// Fraction of output words that belong to `tgt`'s surface vocabulary.
/// Outputs without any word score 0.
pub fn target_language_rate<O: AsRef<str>>(
    outputs: &[O],
    world: Option<&SyntheticWorld>,
    tgt: &LanguageId,
) -> Result<f64> {
    let world = world.ok_or_else(|| Error::NotApplicable("target-language rate needs a synthetic world".into()))?;
    world.cipher(tgt)?;
    let (mut hit, mut total) = (0usize, 0usize);
    for o in outputs {
        for w in o.as_ref().split_whitespace().filter(|w| !is_special_word(w)) {
            total += 1;
            if world.language_of(w) == Some(tgt) {
                hit += 1;
            }
        }
    }
    Ok(if total == 0 { 0.0 } else { hit as f64 / total as f64 })
}

/// Translates `n` distinct training sentences of `src` and assembles the
/// collapse statistics. Pass a greedy translator to keep sampling noise out.
pub fn collapse_report(
    system: &dyn Translator,
    world: &SyntheticWorld,
    src: &LanguageId,
    tgt: &LanguageId,
    n: usize,
    seed: u64,
) -> Result<CollapseReport> {
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let pool = sample_monolingual(world, src, 4 * n, Split::Train, rng::derive_seed(seed, "diagnostics"))?;
    let mut seen = HashSet::new();
    let inputs: Vec<String> = pool.sentences.into_iter().filter(|s| seen.insert(s.clone())).take(n).collect();
    let outputs = system.translate(src, tgt, &inputs)?;
    if outputs.len() != inputs.len() {
        return Err(Error::LengthMismatch { hyps: outputs.len(), refs: inputs.len() });
    }
    let pairs: Vec<(&str, &str)> = inputs.iter().map(String::as_str).zip(outputs.iter().map(String::as_str)).collect();
    let (constancy_score, distinct_output_ratio) = constancy_score(&outputs)?;
    Ok(CollapseReport {
        src: src.clone(),
        tgt: tgt.clone(),
        copying_rate: copying_rate(&pairs)?,
        constancy_score,
        distinct_output_ratio,
        target_language_rate: target_language_rate(&outputs, Some(world), tgt)?,
        sample_size: inputs.len(),
    })
}

/// Always returns its input.
pub struct IdentityStub;

impl Translator for IdentityStub {
    fn translate(&self, _: &LanguageId, _: &LanguageId, sentences: &[String]) -> Result<Vec<String>> {
        Ok(sentences.to_vec())
    }
}

/// Always returns the same sentence.
pub struct ConstantStub(pub String);

impl Translator for ConstantStub {
    fn translate(&self, _: &LanguageId, _: &LanguageId, sentences: &[String]) -> Result<Vec<String>> {
        Ok(vec![self.0.clone(); sentences.len()])
    }
}

/// Exact translations from the world's oracle.
pub struct OracleStub<'a>(pub &'a SyntheticWorld);

impl Translator for OracleStub<'_> {
    fn translate(&self, src: &LanguageId, tgt: &LanguageId, sentences: &[String]) -> Result<Vec<String>> {
        sentences.iter().map(|s| self.0.oracle_translate(s, src, tgt)).collect()
    }
}
