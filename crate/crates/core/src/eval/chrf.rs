use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChrfConfig {
    pub max_order: usize,
    pub beta: f64,
}

impl Default for ChrfConfig {
    fn default() -> Self {
        ChrfConfig { max_order: 6, beta: 2.0 }
    }
}

/// Pooled character n-gram statistics for one order.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct OrderStats {
    hyp: u64,
    reference: u64,
    matched: u64,
}

fn char_ngrams(chars: &[char], n: usize) -> HashMap<&[char], u64> {
    let mut m = HashMap::new();
    if chars.len() >= n {
        for w in chars.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

fn strip_whitespace(s: &str) -> Vec<char> {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

/// Corpus chrF in `[0, 100]`.
///
/// Character n-gram counts (whitespace removed) are pooled over the whole
/// corpus per order; each order yields an F-β score and the result is the
/// mean over the orders for which the references contain any n-gram.
/// A corpus whose references have no characters scores 100 if the
/// hypotheses are also empty and 0 otherwise.
pub fn chrf_corpus<S: AsRef<str>, R: AsRef<str>>(hyps: &[S], refs: &[R], cfg: &ChrfConfig) -> Result<f64> {
    if hyps.len() != refs.len() {
        return Err(Error::LengthMismatch { hyps: hyps.len(), refs: refs.len() });
    }
    if hyps.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if cfg.max_order == 0 || !(cfg.beta > 0.0) {
        return Err(Error::InvalidArgument("chrF needs order >= 1 and beta > 0".into()));
    }
    let mut stats = vec![OrderStats::default(); cfg.max_order];
    for (h, r) in hyps.iter().zip(refs) {
        let hc = strip_whitespace(h.as_ref());
        let rc = strip_whitespace(r.as_ref());
        for (i, st) in stats.iter_mut().enumerate() {
            let n = i + 1;
            let hg = char_ngrams(&hc, n);
            let rg = char_ngrams(&rc, n);
            st.hyp += hg.values().sum::<u64>();
            st.reference += rg.values().sum::<u64>();
            st.matched += hg.iter().map(|(g, &c)| c.min(rg.get(g).copied().unwrap_or(0))).sum::<u64>();
        }
    }
    Ok(score_from_stats(&stats, cfg.beta))
}

fn score_from_stats(stats: &[OrderStats], beta: f64) -> f64 {
    let b2 = beta * beta;
    let mut total = 0.0;
    let mut orders = 0usize;
    for st in stats {
        if st.reference == 0 {
            continue;
        }
        orders += 1;
        if st.hyp == 0 || st.matched == 0 {
            continue;
        }
        let p = st.matched as f64 / st.hyp as f64;
        let r = st.matched as f64 / st.reference as f64;
        total += (1.0 + b2) * p * r / (b2 * p + r);
    }
    if orders == 0 {
        let hyp_empty = stats.iter().all(|s| s.hyp == 0);
        return if hyp_empty { 100.0 } else { 0.0 };
    }
    if total == orders as f64 {
        return 100.0;
    }
    100.0 * total / orders as f64
}

/// Sentence-level chrF (a one-pair corpus).
pub fn chrf_sentence(hyp: &str, reference: &str, cfg: &ChrfConfig) -> f64 {
    chrf_corpus(&[hyp], &[reference], cfg).expect("one pair is a valid corpus")
}
