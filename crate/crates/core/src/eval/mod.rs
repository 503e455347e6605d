//! Translation metrics, system evaluation and paired significance tests.

mod bleu;
mod chrf;
mod stats;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use bleu::{bleu_corpus, bleu_from_stats, bleu_stats, tokenize_13a, BleuConfig, BleuStats};
pub use chrf::{chrf_corpus, chrf_sentence, ChrfConfig};
pub use stats::{paired_t_test, student_t_two_sided, TTestResult, P_FLOOR};

use crate::corpus::{EvalSet, Split};
use crate::decoding::Translator;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Chrf,
    Bleu,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Chrf => "chrf",
            Metric::Bleu => "bleu",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    #[serde(default)]
    pub chrf: ChrfConfig,
    #[serde(default)]
    pub bleu: BleuConfig,
}

impl MetricConfig {
    pub fn score<S: AsRef<str>, R: AsRef<str>>(&self, metric: Metric, hyps: &[S], refs: &[R]) -> Result<f64> {
        match metric {
            Metric::Chrf => chrf_corpus(hyps, refs, &self.chrf),
            Metric::Bleu => bleu_corpus(hyps, refs, &self.bleu),
        }
    }
}

/// One score of one system on one direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub system: String,
    pub direction: String,
    pub metric: Metric,
    pub split: Split,
    /// Ensemble round; `None` for scores taken outside the rounds.
    pub round: Option<usize>,
    pub value: f64,
    pub seed: u64,
}

/// Where a score was taken, carried into every record.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreContext {
    pub system: String,
    pub split: Split,
    pub round: Option<usize>,
    pub seed: u64,
}

pub fn direction_label(set: &EvalSet) -> String {
    format!("{}-{}", set.src, set.tgt)
}

/// Translates every source of `set` and scores the outputs.
pub fn evaluate_system(
    system: &dyn Translator,
    set: &EvalSet,
    metrics: &[Metric],
    cfg: &MetricConfig,
    ctx: &ScoreContext,
) -> Result<Vec<ScoreRecord>> {
    if set.is_empty() {
        return Err(Error::EmptyEvalSet);
    }
    let sources: Vec<String> = set.pairs.iter().map(|(s, _)| s.clone()).collect();
    let refs: Vec<&str> = set.pairs.iter().map(|(_, r)| r.as_str()).collect();
    let hyps = system.translate(&set.src, &set.tgt, &sources)?;
    if hyps.len() != refs.len() {
        return Err(Error::LengthMismatch { hyps: hyps.len(), refs: refs.len() });
    }
    metrics
        .iter()
        .map(|&m| {
            Ok(ScoreRecord {
                system: ctx.system.clone(),
                direction: direction_label(set),
                metric: m,
                split: ctx.split,
                round: ctx.round,
                value: cfg.score(m, &hyps, &refs)?,
                seed: ctx.seed,
            })
        })
        .collect()
}

/// chrF of `system` on `set`.
pub fn chrf_of(system: &dyn Translator, set: &EvalSet, cfg: &ChrfConfig) -> Result<f64> {
    let mc = MetricConfig { chrf: *cfg, ..Default::default() };
    let ctx = ScoreContext { system: String::new(), split: Split::Valid, round: None, seed: 0 };
    Ok(evaluate_system(system, set, &[Metric::Chrf], &mc, &ctx)?[0].value)
}

pub const SUMMARY_HEADER: [&str; 7] = ["system", "direction", "metric", "split", "round", "value", "seed"];

/// Writes records as the summary CSV. Rounds outside the ensemble loop are
/// left blank; values are printed with the shortest exact representation.
pub fn write_summary_csv<W: Write>(records: &[ScoreRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in records {
        let round = r.round.map(|k| k.to_string()).unwrap_or_default();
        w.write_record([
            r.system.as_str(),
            r.direction.as_str(),
            r.metric.as_str(),
            r.split.as_str(),
            round.as_str(),
            &r.value.to_string(),
            &r.seed.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("summary.csv", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LanguageId;

    struct Fixed(Vec<String>);

    impl Translator for Fixed {
        fn translate(&self, _: &LanguageId, _: &LanguageId, s: &[String]) -> Result<Vec<String>> {
            Ok(self.0.iter().cycle().take(s.len()).cloned().collect())
        }
    }

    fn set() -> EvalSet {
        EvalSet {
            src: "A".into(),
            tgt: "B".into(),
            pairs: vec![("x y".into(), "ka lo".into()), ("y x".into(), "lo ka".into())],
        }
    }

    fn ctx() -> ScoreContext {
        ScoreContext { system: "member-0".into(), split: Split::Valid, round: Some(1), seed: 3 }
    }

    #[test]
    fn perfect_system() {
        let sys = Fixed(vec!["ka lo".into(), "lo ka".into()]);
        let r = evaluate_system(&sys, &set(), &[Metric::Chrf], &MetricConfig::default(), &ctx()).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].value, 100.0);
        assert_eq!(r[0].direction, "A-B");
        assert_eq!(r[0].round, Some(1));
    }

    #[test]
    fn constant_system_matches_direct_score() {
        let sys = Fixed(vec!["ka ka".into()]);
        let r = evaluate_system(&sys, &set(), &[Metric::Chrf, Metric::Bleu], &MetricConfig::default(), &ctx()).unwrap();
        let direct = chrf_corpus(&["ka ka", "ka ka"], &["ka lo", "lo ka"], &ChrfConfig::default()).unwrap();
        assert_eq!(r[0].value, direct);
        assert!(r[0].value < 100.0);
        assert_eq!(r[1].metric, Metric::Bleu);
    }

    #[test]
    fn empty_set() {
        let s = EvalSet { pairs: vec![], ..set() };
        let e = evaluate_system(&Fixed(vec![]), &s, &[Metric::Chrf], &MetricConfig::default(), &ctx());
        assert!(matches!(e, Err(Error::EmptyEvalSet)));
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_summary_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "system,direction,metric,split,round,value,seed\n");
        let rec = ScoreRecord {
            system: "ensemble".into(),
            direction: "A-B".into(),
            metric: Metric::Chrf,
            split: Split::Valid,
            round: None,
            value: 12.5,
            seed: 7,
        };
        let mut buf = Vec::new();
        write_summary_csv(&[rec], &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().ends_with("ensemble,A-B,chrf,valid,,12.5,7\n"));
    }
}
