use log::info;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::examples::{make_pair_example, Provenance, TrainingExample};
use super::phase::{train_step, DirectionSet, Phase, PhaseReport, TokenCorpora};
use crate::corpus::{EvalSet, LanguageId, TokenId, Vocabulary};
use crate::decoding::{DecodeConfig, Ensemble, EnsembleTranslator, TokenTranslator, Translator};
use crate::error::{Error, Result};
use crate::eval::{chrf_of, ChrfConfig};
use crate::model::LrSchedule;
use crate::rng;
use crate::{Model, Optimizer};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoPair {
    pub src: LanguageId,
    pub tgt: LanguageId,
    pub source: Vec<TokenId>,
    pub pseudo_target: Vec<TokenId>,
    pub round: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoParallelSet {
    pub round: usize,
    pub pairs: Vec<PseudoPair>,
}

impl PseudoParallelSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Translates `n` fresh training sentences of `a` into `b` and `n` of `b`
/// into `a`. Sentences are drawn with a stream specific to `(seed, round)`;
/// sampling streams of the generator are indexed `0..n` for `a→b` and
/// `n..2n` for `b→a`.
pub fn generate_pseudo_parallel(
    generator: &dyn TokenTranslator,
    corpora: &TokenCorpora,
    a: &LanguageId,
    b: &LanguageId,
    n: usize,
    round: usize,
    seed: u64,
) -> Result<PseudoParallelSet> {
    let mut pairs = Vec::with_capacity(2 * n);
    if n > 0 {
        for (k, (src, tgt)) in [(a, b), (b, a)].into_iter().enumerate() {
            let pool = corpora.get(src)?;
            let mut r = rng::stream(seed, &format!("pseudo/round{round}/{src}"));
            for i in 0..n {
                let source = pool[r.gen_range(0..pool.len())].clone();
                let pseudo_target = generator.translate_tokens(src, tgt, &source, (k * n + i) as u64)?;
                pairs.push(PseudoPair { src: src.clone(), tgt: tgt.clone(), source, pseudo_target, round });
            }
        }
    }
    Ok(PseudoParallelSet { round, pairs })
}

/// Trains on a pseudo-parallel set for `steps` optimizer steps.
///
/// Pairs that do not fit the context are dropped once up front. The
/// remaining examples, both directions interleaved, are reshuffled at every
/// pass over the set.
#[allow(clippy::too_many_arguments)]
pub fn train_on_pseudo(
    model: &mut Model,
    opt: &mut Optimizer,
    vocab: &Vocabulary,
    set: &PseudoParallelSet,
    steps: u64,
    batch_size: usize,
    sched: &LrSchedule,
    seed: u64,
) -> Result<PhaseReport> {
    let mut report = PhaseReport { phase: Some(Phase::Pseudo), optimizer_step: opt.step, ..Default::default() };
    if steps == 0 {
        return Ok(report);
    }
    if batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    let max_context = model.config().max_context;
    let mut examples: Vec<TrainingExample> = Vec::with_capacity(set.len());
    let (fwd, bwd): (Vec<&PseudoPair>, Vec<&PseudoPair>) = set.pairs.iter().partition(|p| p.src == set.pairs[0].src);
    let mut interleaved: Vec<&PseudoPair> = Vec::with_capacity(set.len());
    for i in 0..fwd.len().max(bwd.len()) {
        interleaved.extend(fwd.get(i).copied());
        interleaved.extend(bwd.get(i).copied());
    }
    for p in interleaved {
        let ex = make_pair_example(vocab, &p.src, &p.source, &p.tgt, &p.pseudo_target, Provenance::PseudoParallel)?;
        if ex.len() > max_context {
            report.dropped += 1;
        } else {
            examples.push(ex);
        }
    }
    if examples.is_empty() {
        return Err(Error::EmptyDataset(format!("no usable pseudo-parallel pairs in round {}", set.round)));
    }
    let mut r = rng::stream(seed, &format!("shuffle/round{}", set.round));
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut cursor = order.len();
    let mut batch = Vec::with_capacity(batch_size);
    for _ in 0..steps {
        batch.clear();
        while batch.len() < batch_size {
            if cursor == order.len() {
                order.shuffle(&mut r);
                cursor = 0;
            }
            batch.push(examples[order[cursor]].clone());
            cursor += 1;
        }
        report.losses.push(train_step(model, opt, &batch, sched)?);
        report.steps += 1;
    }
    *report.examples.entry("pseudo_parallel".into()).or_insert(0) += steps * batch_size as u64;
    report.optimizer_step = opt.step;
    Ok(report)
}

/// Validation sets for both directions of the primary pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Validation {
    pub ab: EvalSet,
    pub ba: EvalSet,
    pub chrf: ChrfConfig,
    pub decode: DecodeConfig,
}

impl Validation {
    /// chrF in both directions and their mean.
    pub fn score(&self, system: &dyn Translator) -> Result<DirectionScores> {
        if self.ab.is_empty() || self.ba.is_empty() {
            return Err(Error::EmptyEvalSet);
        }
        let ab = chrf_of(system, &self.ab, &self.chrf)?;
        let ba = chrf_of(system, &self.ba, &self.chrf)?;
        Ok(DirectionScores { ab, ba, mean: 0.5 * (ab + ba) })
    }

    pub fn score_models(&self, members: &[&Model], vocab: &Vocabulary) -> Result<DirectionScores> {
        let t = EnsembleTranslator::new(Ensemble::new(members.to_vec())?, vocab, self.decode.clone());
        self.score(&t)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DirectionScores {
    pub ab: f64,
    pub ba: f64,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub valid: DirectionScores,
    pub steps: u64,
    pub dropped: u64,
}

/// One ensemble member: model, optimizer state, direction set and the
/// validation history of its ensemble rounds.
#[derive(Clone, Debug)]
pub struct Member {
    pub model: Model,
    pub opt: Optimizer,
    pub directions: DirectionSet,
    pub history: Vec<RoundMetrics>,
}

#[derive(Clone, Debug)]
pub struct ModelPool {
    pub members: Vec<Member>,
}

impl ModelPool {
    pub fn new(members: Vec<Member>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        let (a, b) = (&members[0].directions.a, &members[0].directions.b);
        for (i, m) in members.iter().enumerate() {
            if &m.directions.a != a || &m.directions.b != b {
                return Err(Error::InvalidArgument(format!("member {i} has a different primary pair")));
            }
            if members[..i].iter().any(|o| o.directions.aux == m.directions.aux) {
                return Err(Error::InvalidArgument(format!(
                    "auxiliary language {} is used by more than one member",
                    m.directions.aux
                )));
            }
            let shape = |c: &crate::model::ModelConfig| crate::model::ModelConfig { init_seed: 0, ..c.clone() };
            if shape(m.model.config()) != shape(members[0].model.config()) {
                return Err(Error::ShapeMismatch(format!("member {i} has a different model shape")));
            }
        }
        Ok(ModelPool { members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn models(&self) -> Vec<&Model> {
        self.members.iter().map(|m| &m.model).collect()
    }

    pub fn primary(&self) -> (&LanguageId, &LanguageId) {
        (&self.members[0].directions.a, &self.members[0].directions.b)
    }
}

fn default_rounds() -> usize {
    2
}

fn default_per_direction() -> usize {
    2000
}

fn default_round_steps() -> u64 {
    500
}

fn default_batch() -> usize {
    16
}

fn default_round_lr() -> f64 {
    7.5e-5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundsConfig {
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    #[serde(default = "default_per_direction")]
    pub sentences_per_direction: usize,
    #[serde(default = "default_round_steps")]
    pub steps: u64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Constant rate; the default is the base rate after both halvings.
    #[serde(default = "default_round_lr")]
    pub lr: f64,
    /// Decoding used to generate pseudo-targets.
    #[serde(default)]
    pub decode: DecodeConfig,
}

impl Default for RoundsConfig {
    fn default() -> Self {
        RoundsConfig {
            rounds: default_rounds(),
            sentences_per_direction: default_per_direction(),
            steps: default_round_steps(),
            batch_size: default_batch(),
            lr: default_round_lr(),
            decode: DecodeConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub pseudo_pairs: usize,
    pub members: Vec<RoundMetrics>,
    pub ensemble: DirectionScores,
    pub member_reports: Vec<PhaseReport>,
}

/// Iterative ensemble self-training: each round the whole pool generates one
/// shared pseudo-parallel set for the primary pair, then every member
/// trains on it. Members continue from their own optimizer state with a
/// constant learning rate. Sets are regenerated, not accumulated.
pub fn run_algorithm1(
    pool: &mut ModelPool,
    vocab: &Vocabulary,
    corpora: &TokenCorpora,
    cfg: &RoundsConfig,
    validation: &Validation,
    seed: u64,
) -> Result<Vec<RoundReport>> {
    (1..=cfg.rounds).map(|round| run_round(pool, vocab, corpora, cfg, validation, round, seed)).collect()
}

/// Round `round` (1-based) of [`run_algorithm1`].
pub fn run_round(
    pool: &mut ModelPool,
    vocab: &Vocabulary,
    corpora: &TokenCorpora,
    cfg: &RoundsConfig,
    validation: &Validation,
    round: usize,
    seed: u64,
) -> Result<RoundReport> {
    let sched = LrSchedule::new(cfg.lr, Vec::new())?;
    cfg.decode.validate()?;
    let (a, b) = {
        let (a, b) = pool.primary();
        (a.clone(), b.clone())
    };
    let decode = cfg.decode.with_seed(rng::derive_seed(seed, &format!("round{round}/decode")));
    let set = {
        let gen = EnsembleTranslator::new(Ensemble::new(pool.models())?, vocab, decode);
        generate_pseudo_parallel(&gen, corpora, &a, &b, cfg.sentences_per_direction, round, seed)?
    };
    info!("round {round}: {} pseudo-parallel pairs from {} members", set.len(), pool.len());
    let mut member_reports = Vec::with_capacity(pool.len());
    let mut member_metrics = Vec::with_capacity(pool.len());
    for (i, m) in pool.members.iter_mut().enumerate() {
        let s = rng::derive_seed(seed, &format!("member{i}/round{round}"));
        let rep = train_on_pseudo(&mut m.model, &mut m.opt, vocab, &set, cfg.steps, cfg.batch_size, &sched, s)?;
        let valid = validation.score_models(&[&m.model], vocab)?;
        let metrics = RoundMetrics { round, valid, steps: rep.steps, dropped: rep.dropped };
        m.history.push(metrics.clone());
        member_metrics.push(metrics);
        member_reports.push(rep);
    }
    let ensemble = if pool.len() == 1 { member_metrics[0].valid } else { validation.score_models(&pool.models(), vocab)? };
    info!(
        "round {round}: ensemble chrF {:.2}, members {:?}",
        ensemble.mean,
        member_metrics.iter().map(|m| (m.valid.mean * 100.0).round() / 100.0).collect::<Vec<_>>()
    );
    Ok(RoundReport { round, pseudo_pairs: set.len(), members: member_metrics, ensemble, member_reports })
}

/// Index of the system with the highest mean validation chrF over both
/// primary directions, with every score. Ties go to the lowest index.
pub fn select_best(systems: &[&dyn Translator], validation: &Validation) -> Result<(usize, Vec<DirectionScores>)> {
    if systems.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let scores = systems.iter().map(|s| validation.score(*s)).collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.mean > scores[best].mean {
            best = i;
        }
    }
    Ok((best, scores))
}

pub fn select_best_model(
    pool: &ModelPool,
    vocab: &Vocabulary,
    validation: &Validation,
) -> Result<(usize, Vec<DirectionScores>)> {
    let ts: Vec<EnsembleTranslator<'_, f32>> = pool
        .members
        .iter()
        .map(|m| EnsembleTranslator::new(Ensemble::single(&m.model), vocab, validation.decode.clone()))
        .collect();
    let refs: Vec<&dyn Translator> = ts.iter().map(|t| t as &dyn Translator).collect();
    select_best(&refs, validation)
}

/// Continues `member` through the same rounds as the ensemble arm with a
/// pool of one, so pseudo-targets come from the model itself.
pub fn run_matched_single_baseline(
    member: Member,
    vocab: &Vocabulary,
    corpora: &TokenCorpora,
    cfg: &RoundsConfig,
    validation: &Validation,
    seed: u64,
) -> Result<(Member, Vec<RoundReport>)> {
    let mut pool = ModelPool::new(vec![member])?;
    let reports = run_algorithm1(&mut pool, vocab, corpora, cfg, validation, seed)?;
    Ok((pool.members.pop().expect("pool of one"), reports))
}
