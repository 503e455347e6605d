use std::collections::BTreeMap;
use std::fmt;

use log::{debug, warn};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::examples::{make_bt_example, make_mono_example, make_random_pair_example, Provenance, TrainingExample};
use crate::corpus::{LanguageId, MonolingualCorpus, TokenId, Vocabulary};
use crate::decoding::{DecodeConfig, Ensemble, EnsembleTranslator};
use crate::error::{Error, Result};
use crate::model::{apply_gradient_step, LrSchedule};
use crate::rng;
use crate::{Model, Optimizer};

/// Primary pair `(A, B)` plus one auxiliary language.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectionSet {
    pub a: LanguageId,
    pub b: LanguageId,
    pub aux: LanguageId,
}

impl DirectionSet {
    pub fn new(a: impl Into<LanguageId>, b: impl Into<LanguageId>, aux: impl Into<LanguageId>) -> Result<Self> {
        let d = DirectionSet { a: a.into(), b: b.into(), aux: aux.into() };
        if d.a == d.b || d.a == d.aux || d.b == d.aux {
            return Err(Error::InvalidArgument(format!("languages {}, {}, {} must be distinct", d.a, d.b, d.aux)));
        }
        Ok(d)
    }

    pub fn languages(&self) -> [&LanguageId; 3] {
        [&self.a, &self.b, &self.aux]
    }

    /// The six directed directions in schedule order:
    /// A→B, B→A, B→C, C→B, C→A, A→C.
    pub fn directed(&self) -> [(&LanguageId, &LanguageId); 6] {
        let (a, b, c) = (&self.a, &self.b, &self.aux);
        [(a, b), (b, a), (b, c), (c, b), (c, a), (a, c)]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionSchedule {
    #[default]
    RoundRobin,
    UniformRandom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Monolingual,
    Mixed,
    PureBt,
    Pseudo,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Monolingual => "mono",
            Phase::Mixed => "mixed",
            Phase::PureBt => "pure_bt",
            Phase::Pseudo => "pseudo",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_batch() -> usize {
    16
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub phase: Phase,
    pub steps: u64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Share of back-translation examples; forced to 1 for `pure_bt`.
    #[serde(default = "PhaseConfig::default_ratio")]
    pub bt_ratio: f64,
    #[serde(default)]
    pub decode: DecodeConfig,
    #[serde(default)]
    pub schedule: DirectionSchedule,
}

impl PhaseConfig {
    fn default_ratio() -> f64 {
        0.98
    }

    pub fn monolingual(steps: u64) -> Self {
        PhaseConfig {
            phase: Phase::Monolingual,
            steps,
            batch_size: 16,
            bt_ratio: 0.0,
            decode: DecodeConfig::default(),
            schedule: DirectionSchedule::RoundRobin,
        }
    }

    pub fn mixed(steps: u64, bt_ratio: f64) -> Self {
        PhaseConfig { phase: Phase::Mixed, bt_ratio, ..Self::monolingual(steps) }
    }

    pub fn pure_bt(steps: u64) -> Self {
        PhaseConfig { phase: Phase::PureBt, bt_ratio: 1.0, ..Self::monolingual(steps) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.bt_ratio) {
            return Err(Error::InvalidArgument(format!("bt_ratio {} outside [0, 1]", self.bt_ratio)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        if self.phase == Phase::Pseudo {
            return Err(Error::InvalidArgument("pseudo-parallel training is not a base phase".into()));
        }
        if self.phase == Phase::Mixed && !(0.90..=0.98).contains(&self.bt_ratio) {
            warn!("bt_ratio {} is outside the usual 0.90..0.98 range", self.bt_ratio);
        }
        self.decode.validate()
    }

    fn effective_bt_ratio(&self) -> f64 {
        if self.phase == Phase::PureBt {
            1.0
        } else {
            self.bt_ratio
        }
    }
}

/// Outcome of one phase or one pseudo-parallel training run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub phase: Option<Phase>,
    /// Optimizer steps taken in this run.
    pub steps: u64,
    /// Optimizer step counter after the run.
    pub optimizer_step: u64,
    pub examples: BTreeMap<String, u64>,
    pub dropped: u64,
    /// Mean batch loss of each step.
    pub losses: Vec<f64>,
}

impl PhaseReport {
    pub fn count(&self, p: Provenance) -> u64 {
        self.examples.get(provenance_key(p)).copied().unwrap_or(0)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.losses.last().copied()
    }
}

fn provenance_key(p: Provenance) -> &'static str {
    match p {
        Provenance::Mono => "mono",
        Provenance::Bt => "bt",
        Provenance::RandomPair => "random_pair",
        Provenance::PseudoParallel => "pseudo_parallel",
    }
}

/// Tokenized training sentences per language.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TokenCorpora {
    by_lang: BTreeMap<LanguageId, Vec<Vec<TokenId>>>,
}

impl TokenCorpora {
    pub fn new(vocab: &Vocabulary, corpora: &[&MonolingualCorpus]) -> Self {
        let mut by_lang: BTreeMap<LanguageId, Vec<Vec<TokenId>>> = BTreeMap::new();
        for c in corpora {
            by_lang.entry(c.language.clone()).or_default().extend(c.sentences.iter().map(|s| vocab.tokenize(s)));
        }
        TokenCorpora { by_lang }
    }

    pub fn get(&self, lang: &LanguageId) -> Result<&[Vec<TokenId>]> {
        match self.by_lang.get(lang) {
            Some(s) if !s.is_empty() => Ok(s),
            _ => Err(Error::EmptyDataset(format!("no training sentences for {lang}"))),
        }
    }

    fn draw(&self, lang: &LanguageId, r: &mut rng::Rng) -> Result<&[TokenId]> {
        let s = self.get(lang)?;
        Ok(&s[r.gen_range(0..s.len())])
    }
}

/// Averages per-example losses over the batch and takes one optimizer step.
/// A batch whose examples were all dropped still counts as a (zero
/// gradient) step so step budgets stay comparable across runs.
pub(crate) fn train_step(
    model: &mut Model,
    opt: &mut Optimizer,
    batch: &[TrainingExample],
    sched: &LrSchedule,
) -> Result<f64> {
    let mut grads = model.zero_grads();
    let mut loss = 0.0;
    let w = 1.0 / batch.len().max(1) as f64;
    for ex in batch {
        loss += w * model.sequence_loss(&ex.tokens, &ex.mask, w, Some(&mut grads))?;
    }
    apply_gradient_step(model, opt, &grads, sched)?;
    Ok(loss)
}

/// Runs one base-training phase.
///
/// The monolingual phase cycles through the three languages. The mixed and
/// pure back-translation phases pick a direction per example and build a
/// back-translation example with probability `bt_ratio`, generated by the
/// model being trained, else a random pair.
#[allow(clippy::too_many_arguments)]
pub fn run_phase(
    model: &mut Model,
    opt: &mut Optimizer,
    vocab: &Vocabulary,
    corpora: &TokenCorpora,
    directions: &DirectionSet,
    cfg: &PhaseConfig,
    sched: &LrSchedule,
    seed: u64,
) -> Result<PhaseReport> {
    cfg.validate()?;
    let mut report = PhaseReport { phase: Some(cfg.phase), optimizer_step: opt.step, ..Default::default() };
    if cfg.steps == 0 {
        return Ok(report);
    }
    for l in directions.languages() {
        corpora.get(l)?;
    }
    let label = format!("phase/{}", cfg.phase);
    let mut r = rng::stream(seed, &label);
    let decode_cfg = cfg.decode.with_seed(rng::derive_seed(seed, &format!("{label}/decode")));
    let ratio = cfg.effective_bt_ratio();
    let max_context = model.config().max_context;
    let langs = directions.languages();
    let dirs = directions.directed();
    let mut drawn: u64 = 0;
    for step in 0..cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            let i = drawn;
            drawn += 1;
            let ex = if cfg.phase == Phase::Monolingual {
                let lang = langs[(i % 3) as usize];
                make_mono_example(vocab, lang, corpora.draw(lang, &mut r)?)
            } else {
                let (x, y) = match cfg.schedule {
                    DirectionSchedule::RoundRobin => dirs[(i % 6) as usize],
                    DirectionSchedule::UniformRandom => dirs[r.gen_range(0..6)],
                };
                if ratio >= 1.0 || r.gen::<f64>() < ratio {
                    let y_sent = corpora.draw(y, &mut r)?;
                    let gen = EnsembleTranslator::new(Ensemble::single(model), vocab, decode_cfg.clone());
                    make_bt_example(&gen, vocab, x, y, y_sent, i, max_context)
                } else {
                    let xs = corpora.draw(x, &mut r)?;
                    let ys = corpora.draw(y, &mut r)?;
                    make_random_pair_example(vocab, x, xs, y, ys, max_context)
                }
            };
            match ex {
                Ok(ex) => {
                    *report.examples.entry(provenance_key(ex.provenance).into()).or_insert(0) += 1;
                    batch.push(ex);
                }
                Err(Error::ContextOverflow { .. }) => report.dropped += 1,
                Err(e) => return Err(e),
            }
        }
        let loss = train_step(model, opt, &batch, sched)?;
        if step % 50 == 0 {
            debug!("{} step {step}: loss {loss:.4}", cfg.phase);
        }
        report.losses.push(loss);
        report.steps += 1;
    }
    report.optimizer_step = opt.step;
    Ok(report)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::corpus::{sample_monolingual, LanguageSpec, Split, SyntheticWorld, SyntheticWorldSpec, WordOrder};
    use crate::model::{ModelConfig, OptimizerState};

    pub(crate) fn setup() -> (Vocabulary, TokenCorpora, DirectionSet, Model) {
        let spec = SyntheticWorldSpec {
            base_vocab_size: 20,
            sentence_length_range: (2, 4),
            grammar_seed: 3,
            languages: ["A", "B", "C"]
                .iter()
                .enumerate()
                .map(|(i, l)| LanguageSpec { id: (*l).into(), substitution_seed: i as u64, word_order: WordOrder::Identity })
                .collect(),
            transition_concentration: 0.1,
        };
        let w = SyntheticWorld::build(&spec).unwrap();
        let langs = w.languages();
        let cs: Vec<_> = langs.iter().map(|l| sample_monolingual(&w, l, 50, Split::Train, 1).unwrap()).collect();
        let refs: Vec<_> = cs.iter().collect();
        let vocab = Vocabulary::build(&refs, &langs).unwrap();
        let corpora = TokenCorpora::new(&vocab, &refs);
        let cfg = ModelConfig {
            n_layers: 1,
            d_model: 16,
            n_heads: 2,
            d_ff: 32,
            max_context: 24,
            vocab_size: vocab.len(),
            init_seed: 9,
        };
        (vocab, corpora, DirectionSet::new("A", "B", "C").unwrap(), Model::init(&cfg).unwrap())
    }

    #[test]
    fn directions_cover_all_orderings() {
        let d = DirectionSet::new("A", "B", "C").unwrap();
        let mut seen: Vec<(String, String)> =
            d.directed().iter().map(|(x, y)| (x.to_string(), y.to_string())).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 6);
        assert!(DirectionSet::new("A", "A", "C").is_err());
    }

    #[test]
    fn zero_steps_leave_model_alone() {
        let (v, c, d, mut m) = setup();
        let before = m.params().to_vec();
        let mut opt = OptimizerState::for_model(&m);
        let r = run_phase(&mut m, &mut opt, &v, &c, &d, &PhaseConfig::mixed(0, 0.98), &LrSchedule::constant(1e-3), 1)
            .unwrap();
        assert_eq!(m.params(), &before[..]);
        assert_eq!(r.steps, 0);
        assert!(r.examples.is_empty());
    }

    #[test]
    fn mono_phase_reduces_loss() {
        let (v, c, d, mut m) = setup();
        let mut opt = OptimizerState::for_model(&m);
        let cfg = PhaseConfig { batch_size: 8, ..PhaseConfig::monolingual(60) };
        let r = run_phase(&mut m, &mut opt, &v, &c, &d, &cfg, &LrSchedule::constant(3e-3), 1).unwrap();
        assert_eq!(r.steps, 60);
        assert_eq!(opt.step, 60);
        assert_eq!(r.count(Provenance::Mono), 480);
        let head: f64 = r.losses[..5].iter().sum::<f64>() / 5.0;
        let tail: f64 = r.losses[55..].iter().sum::<f64>() / 5.0;
        assert!(tail < head - 0.5, "{head} -> {tail}");
    }

    #[test]
    fn pure_bt_has_no_random_pairs() {
        let (v, c, d, mut m) = setup();
        let mut opt = OptimizerState::for_model(&m);
        let cfg = PhaseConfig { batch_size: 4, ..PhaseConfig::pure_bt(3) };
        let r = run_phase(&mut m, &mut opt, &v, &c, &d, &cfg, &LrSchedule::constant(1e-3), 1).unwrap();
        assert_eq!(r.count(Provenance::RandomPair), 0);
        assert_eq!(r.count(Provenance::Bt) + r.dropped, 12);
    }

    #[test]
    fn phases_are_deterministic() {
        let run = || {
            let (v, c, d, mut m) = setup();
            let mut opt = OptimizerState::for_model(&m);
            let cfg = PhaseConfig { batch_size: 4, ..PhaseConfig::mixed(4, 0.5) };
            run_phase(&mut m, &mut opt, &v, &c, &d, &cfg, &LrSchedule::constant(1e-3), 7).unwrap();
            m.params().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn bad_ratio() {
        assert!(PhaseConfig::mixed(1, 1.5).validate().is_err());
    }
}
