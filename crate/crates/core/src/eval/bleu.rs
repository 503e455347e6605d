use std::collections::HashMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Corpus BLEU settings. The defaults are the only supported combination:
/// four orders, exponential smoothing, 13a-style tokens, mixed case and no
/// effective order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BleuConfig {
    pub max_order: usize,
}

impl Default for BleuConfig {
    fn default() -> Self {
        BleuConfig { max_order: 4 }
    }
}

struct Patterns {
    punct: Regex,
    period_comma_left: Regex,
    period_comma_right: Regex,
    dash: Regex,
    spaces: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| Patterns {
        punct: Regex::new(r"([\{-~\[-` -&\(-\+:-@/])").unwrap(),
        period_comma_left: Regex::new(r"([^0-9])([\.,])").unwrap(),
        period_comma_right: Regex::new(r"([\.,])([^0-9])").unwrap(),
        dash: Regex::new(r"([0-9])(-)").unwrap(),
        spaces: Regex::new(r"\s+").unwrap(),
    })
}

/// 13a-style tokenization: unicode dashes and quotes are folded to ASCII,
/// punctuation is split from adjacent text, and periods and commas stay
/// attached only between digits.
pub fn tokenize_13a(line: &str) -> Vec<String> {
    let mut s: String = line
        .chars()
        .map(|c| match c {
            '\u{2010}'..='\u{2015}' | '\u{2212}' => '-',
            '\u{2018}' | '\u{2019}' | '\u{201A}' | '\u{2032}' => '\'',
            '\u{201C}' | '\u{201D}' | '\u{201E}' | '\u{2033}' => '"',
            c => c,
        })
        .collect();
    s = s.replace("<skipped>", "").replace("-\n", "").replace('\n', " ");
    if s.contains('&') {
        s = s.replace("&quot;", "\"").replace("&amp;", "&").replace("&lt;", "<").replace("&gt;", ">");
    }
    let p = patterns();
    let s = format!(" {s} ");
    let s = p.punct.replace_all(&s, " $1 ");
    let s = p.period_comma_left.replace_all(&s, "$1 $2 ");
    let s = p.period_comma_right.replace_all(&s, " $1 $2");
    let s = p.dash.replace_all(&s, "$1 $2 ");
    let s = p.spaces.replace_all(&s, " ");
    s.split_whitespace().map(str::to_owned).collect()
}

/// Sufficient statistics of corpus BLEU.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: Vec<u64>,
    pub totals: Vec<u64>,
    pub hyp_len: u64,
    pub ref_len: u64,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

pub fn bleu_stats<S: AsRef<str>, R: AsRef<str>>(hyps: &[S], refs: &[R], cfg: &BleuConfig) -> Result<BleuStats> {
    if hyps.len() != refs.len() {
        return Err(Error::LengthMismatch { hyps: hyps.len(), refs: refs.len() });
    }
    if hyps.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut st = BleuStats { matches: vec![0; cfg.max_order], totals: vec![0; cfg.max_order], ..Default::default() };
    for (h, r) in hyps.iter().zip(refs) {
        let ht = tokenize_13a(h.as_ref());
        let rt = tokenize_13a(r.as_ref());
        st.hyp_len += ht.len() as u64;
        st.ref_len += rt.len() as u64;
        for n in 1..=cfg.max_order {
            let hc = ngram_counts(&ht, n);
            let rc = ngram_counts(&rt, n);
            st.totals[n - 1] += hc.values().sum::<u64>();
            st.matches[n - 1] += hc.iter().map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0))).sum::<u64>();
        }
    }
    Ok(st)
}

/// BLEU in `[0, 100]` from pooled statistics.
///
/// An order with matches contributes `m/t`; the j-th order without matches
/// contributes `1/(2^j · t)`; an order with no hypothesis n-grams at all
/// makes the score 0.
pub fn bleu_from_stats(st: &BleuStats) -> f64 {
    if st.hyp_len == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    let mut smooth = 1.0;
    for (&m, &t) in st.matches.iter().zip(&st.totals) {
        if t == 0 {
            return 0.0;
        }
        let p = if m == 0 {
            smooth *= 2.0;
            1.0 / (smooth * t as f64)
        } else {
            m as f64 / t as f64
        };
        log_sum += p.ln();
    }
    let bp = if st.hyp_len < st.ref_len { (1.0 - st.ref_len as f64 / st.hyp_len as f64).exp() } else { 1.0 };
    100.0 * bp * (log_sum / st.matches.len() as f64).exp()
}

pub fn bleu_corpus<S: AsRef<str>, R: AsRef<str>>(hyps: &[S], refs: &[R], cfg: &BleuConfig) -> Result<f64> {
    if cfg.max_order == 0 {
        return Err(Error::InvalidArgument("BLEU needs order >= 1".into()));
    }
    Ok(bleu_from_stats(&bleu_stats(hyps, refs, cfg)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize_13a(s)
    }

    #[test]
    fn tokenizer_splits_punctuation() {
        assert_eq!(toks("Hello, world!"), ["Hello", ",", "world", "!"]);
        assert_eq!(toks("3.14 and 1,000"), ["3.14", "and", "1,000"]);
        assert_eq!(toks("end."), ["end", "."]);
        assert_eq!(toks("(a)"), ["(", "a", ")"]);
        assert_eq!(toks("don't"), ["don't"]);
        assert_eq!(toks("2-3"), ["2", "-", "3"]);
        assert_eq!(toks("well-known"), ["well-known"]);
        assert_eq!(toks("\u{201C}hi\u{201D}"), ["\"", "hi", "\""]);
        assert_eq!(toks("  a   b "), ["a", "b"]);
    }

    #[test]
    fn identical_is_100() {
        let c = BleuConfig::default();
        let s = ["the cat sat on the mat", "a b c d e"];
        assert_eq!(bleu_corpus(&s, &s, &c).unwrap(), 100.0);
    }

    #[test]
    fn empty_hypothesis_is_zero() {
        let c = BleuConfig::default();
        assert_eq!(bleu_corpus(&[""], &["a b c d"], &c).unwrap(), 0.0);
    }

    #[test]
    fn smoothing_by_hand() {
        // hyp "a b c d x", ref "a b c d y z": matches 4,3,2,1 of totals 5,4,3,2.
        let c = BleuConfig::default();
        let v = bleu_corpus(&["a b c d x"], &["a b c d y z"], &c).unwrap();
        let p: f64 = [4.0 / 5.0, 3.0 / 4.0, 2.0 / 3.0, 1.0 / 2.0].iter().map(|x: &f64| x.ln()).sum::<f64>() / 4.0;
        let expected = 100.0 * (1.0 - 6.0 / 5.0f64).exp() * p.exp();
        assert!((v - expected).abs() < 1e-12);
        // No 4-gram match: the fourth precision becomes 1/(2·2).
        let v = bleu_corpus(&["a b c x d"], &["a b c y d"], &c).unwrap();
        let p: f64 = [4.0f64 / 5.0, 2.0 / 4.0, 1.0 / 3.0, 1.0 / 4.0].iter().map(|x| x.ln()).sum::<f64>() / 4.0;
        assert!((v - 100.0 * p.exp()).abs() < 1e-12);
    }

    #[test]
    fn short_hypothesis_without_four_grams() {
        let c = BleuConfig::default();
        assert_eq!(bleu_corpus(&["a b"], &["a b"], &c).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        let c = BleuConfig::default();
        assert!(matches!(bleu_corpus(&["a"], &["a", "b"], &c), Err(Error::LengthMismatch { .. })));
        assert!(matches!(bleu_corpus::<&str, &str>(&[], &[], &c), Err(Error::EmptyCorpus)));
    }
}
