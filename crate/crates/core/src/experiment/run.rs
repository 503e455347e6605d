use std::cell::RefCell;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::log::{read_log, scores, LogPayload, MetricsLog};
use crate::corpus::{sample_monolingual, EvalSet, LanguageId, MonolingualCorpus, Split, SyntheticWorld, Vocabulary};
use crate::decoding::{Ensemble, EnsembleTranslator, Translator};
use crate::diagnostics::collapse_report;
use crate::error::{Error, Result};
use crate::eval::{
    chrf_sentence, evaluate_system, paired_t_test, write_summary_csv, Metric, ScoreContext, ScoreRecord,
};
use crate::model::{load_checkpoint, save_checkpoint, CheckpointMeta};
use crate::rng;
use crate::training::{
    run_phase, run_round, select_best_model, Member, ModelPool, PhaseReport, RoundReport, TokenCorpora, Validation,
};
use crate::{Model, Optimizer};

pub const CONFIG_FILE: &str = "config.resolved.json";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const STAGE_FILE: &str = "stage.json";
pub const SELECTION_FILE: &str = "selection.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    GenData,
    TrainSingle,
    TrainEnsemble,
    Baseline,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::GenData, Stage::TrainSingle, Stage::TrainEnsemble, Stage::Baseline, Stage::Evaluate];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::GenData => "gen-data",
            Stage::TrainSingle => "train-single",
            Stage::TrainEnsemble => "train-ensemble",
            Stage::Baseline => "baseline",
            Stage::Evaluate => "evaluate",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown stage {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Running,
    Done,
    Failed { error: String },
}

/// Contents of the stage marker file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageMarker {
    pub stage: Stage,
    pub status: StageStatus,
}

/// Post-ensemble selection written by the evaluate stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub best_member: usize,
    pub best_valid_chrf: f64,
    pub baseline_valid_chrf: Option<f64>,
}

pub fn member_name(i: usize) -> String {
    format!("member-{i}")
}

pub fn checkpoint_path(dir: &Path, system: &str, phase: &str, step: u64) -> PathBuf {
    dir.join("checkpoints").join(system).join(format!("phase-{phase}-step-{step}.ckpt"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// An experiment directory with its configuration and generated data loaded.
pub struct Experiment {
    pub dir: PathBuf,
    pub config: ExperimentConfig,
    pub world: SyntheticWorld,
    pub vocab: Vocabulary,
    pub corpora: TokenCorpora,
    pub validation: Validation,
    pub test: [EvalSet; 2],
    log: RefCell<MetricsLog>,
}

fn data_dir(dir: &Path) -> PathBuf {
    dir.join("data")
}

fn corpus_path(dir: &Path, lang: &LanguageId) -> PathBuf {
    data_dir(dir).join(format!("{lang}.train.txt"))
}

fn eval_path(dir: &Path, split: Split) -> PathBuf {
    data_dir(dir).join(format!("{split}.json"))
}

/// Identifies a run by its resolved configuration.
fn run_id(config_json: &str) -> String {
    format!("{:016x}", rng::fnv1a(config_json.as_bytes()))
}

/// Validates `config` and writes it as the resolved snapshot of `dir`.
pub fn init_dir(config: &ExperimentConfig, dir: &Path) -> Result<()> {
    config.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut resolved = config.clone();
    resolved.out_dir = None;
    resolved.schedule.halving_steps = Some(config.lr_schedule()?.halving_steps);
    fs::write(dir.join(CONFIG_FILE), resolved.to_json()?).map_err(|e| Error::io(dir.join(CONFIG_FILE), e))
}

/// Samples training corpora for every language and the oracle-referenced
/// validation and test sets of the primary pair, and builds the vocabulary.
pub fn gen_data(dir: &Path) -> Result<()> {
    let config = ExperimentConfig::load(dir.join(CONFIG_FILE))?;
    let world = SyntheticWorld::build(&config.world)?;
    let langs = world.languages();
    let seed = rng::derive_seed(config.seed, "corpus");
    let corpora = langs
        .iter()
        .map(|l| sample_monolingual(&world, l, config.data.train_sentences, Split::Train, seed))
        .collect::<Result<Vec<_>>>()?;
    let d = data_dir(dir);
    fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    for c in &corpora {
        c.write_plaintext(corpus_path(dir, &c.language))?;
    }
    let refs: Vec<&MonolingualCorpus> = corpora.iter().collect();
    Vocabulary::build(&refs, &langs)?.save(d.join("vocab.json"))?;
    let (a, b) = &config.pool.primary;
    for (split, n) in [(Split::Valid, config.data.valid_pairs), (Split::Test, config.data.test_pairs)] {
        let sets = vec![
            EvalSet::synthetic(&world, a, b, n, split, seed)?,
            EvalSet::synthetic(&world, b, a, n, split, seed)?,
        ];
        write_json(&eval_path(dir, split), &sets)?;
    }
    Ok(())
}

impl Experiment {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let config_path = dir.join(CONFIG_FILE);
        let text = fs::read_to_string(&config_path).map_err(|e| Error::io(&config_path, e))?;
        let config = ExperimentConfig::from_json(&text)?;
        config.validate()?;
        let world = SyntheticWorld::build(&config.world)?;
        let vocab = Vocabulary::load(data_dir(&dir).join("vocab.json"))?;
        let corpora = world
            .languages()
            .into_iter()
            .map(|l| crate::corpus::load_plaintext(corpus_path(&dir, &l), l, Split::Train))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&MonolingualCorpus> = corpora.iter().collect();
        let corpora = TokenCorpora::new(&vocab, &refs);
        let [ab, ba]: [EvalSet; 2] = read_json::<Vec<EvalSet>>(&eval_path(&dir, Split::Valid))?
            .try_into()
            .map_err(|_| Error::InvalidArgument("validation file must hold two sets".into()))?;
        let validation = Validation { ab, ba, chrf: config.eval.metric.chrf, decode: config.eval.decode.clone() };
        let test: [EvalSet; 2] = read_json::<Vec<EvalSet>>(&eval_path(&dir, Split::Test))?
            .try_into()
            .map_err(|_| Error::InvalidArgument("test file must hold two sets".into()))?;
        let log = RefCell::new(MetricsLog::open(dir.join(METRICS_FILE), run_id(&text))?);
        Ok(Experiment { dir, config, world, vocab, corpora, validation, test, log })
    }

    fn translator<'a>(&'a self, models: Vec<&'a Model>) -> Result<EnsembleTranslator<'a, f32>> {
        Ok(EnsembleTranslator::new(Ensemble::new(models)?, &self.vocab, self.config.eval.decode.clone()))
    }

    /// Scores `system` on both directions of `split` and logs every record.
    fn score(&self, system: &dyn Translator, name: &str, split: Split, round: Option<usize>) -> Result<Vec<ScoreRecord>> {
        let out = self.score_unlogged(system, name, split, round)?;
        for r in &out {
            self.log.borrow_mut().score(r)?;
        }
        Ok(out)
    }

    /// Scores `system` on both directions of `split` without logging.
    pub fn score_unlogged(
        &self,
        system: &dyn Translator,
        name: &str,
        split: Split,
        round: Option<usize>,
    ) -> Result<Vec<ScoreRecord>> {
        let sets = match split {
            Split::Test => self.test.clone(),
            _ => [self.validation.ab.clone(), self.validation.ba.clone()],
        };
        let ctx = ScoreContext { system: name.into(), split, round, seed: self.config.seed };
        let mut out = Vec::new();
        for set in &sets {
            out.extend(evaluate_system(system, set, &self.config.eval.metrics, &self.config.eval.metric, &ctx)?);
        }
        Ok(out)
    }

    fn log_collapse(&self, system: &dyn Translator, name: &str) -> Result<()> {
        let (a, b) = self.config.pool.primary.clone();
        let n = self.config.eval.collapse_sample;
        for (src, tgt) in [(&a, &b), (&b, &a)] {
            let report = collapse_report(system, &self.world, src, tgt, n, self.config.seed)?;
            self.log.borrow_mut().append(LogPayload::CollapseReport { system: name.into(), report })?;
        }
        Ok(())
    }

    fn save(&self, system: &str, phase: &str, model: &Model, opt: &Optimizer) -> Result<PathBuf> {
        let path = checkpoint_path(&self.dir, system, phase, opt.step);
        let mut meta = CheckpointMeta::new(model.config(), self.vocab.content_hash(), phase, opt.step);
        meta.seeds.insert("experiment".into(), self.config.seed);
        meta.seeds.insert("init".into(), model.config().init_seed);
        save_checkpoint(model, opt, &meta, &path)?;
        Ok(path)
    }

    fn load(&self, path: &Path) -> Result<(Model, Optimizer)> {
        let (model, opt, meta) = load_checkpoint(path)?;
        meta.check_vocab(&self.vocab)?;
        Ok((model, opt))
    }

    /// Final base checkpoint of member `i`: the last phase with steps, or the
    /// initial checkpoint when no phase trains.
    pub fn base_checkpoint(&self, member: usize) -> PathBuf {
        let mut last = ("init".to_string(), 0u64);
        let mut total = 0;
        for p in &self.config.phases {
            total += p.steps;
            if p.steps > 0 {
                last = (p.phase.to_string(), total);
            }
        }
        checkpoint_path(&self.dir, &member_name(member), &last.0, last.1)
    }

    fn round_step(&self, round: usize) -> u64 {
        self.config.base_steps() + round as u64 * self.config.rounds.steps
    }

    /// Checkpoint of `system` after the last ensemble round, or the base
    /// checkpoint of `base_member` when there are no rounds.
    pub fn final_checkpoint(&self, system: &str, base_member: usize) -> PathBuf {
        let k = self.config.rounds.rounds;
        if k == 0 {
            return self.base_checkpoint(base_member);
        }
        checkpoint_path(&self.dir, system, &format!("round{k}"), self.round_step(k))
    }

    fn members_from(&self, paths: &[PathBuf]) -> Result<ModelPool> {
        let members = paths
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let (model, opt) = self.load(p)?;
                Ok(Member { model, opt, directions: self.config.pool.directions(i)?, history: Vec::new() })
            })
            .collect::<Result<Vec<_>>>()?;
        ModelPool::new(members)
    }

    fn base_pool(&self) -> Result<ModelPool> {
        let paths: Vec<PathBuf> = (0..self.config.pool.members()).map(|i| self.base_checkpoint(i)).collect();
        self.members_from(&paths)
    }

    /// Base training of every member, with checkpoints after each phase and
    /// validation scores (round 0) for each member and the whole pool.
    pub fn train_single(&mut self) -> Result<()> {
        let sched = self.config.lr_schedule()?;
        let n = self.config.pool.members();
        for i in 0..n {
            let name = member_name(i);
            let directions = self.config.pool.directions(i)?;
            let mut model = Model::init(&self.config.member_model(&self.vocab, i))?;
            let mut opt = Optimizer::for_model(&model);
            self.save(&name, "init", &model, &opt)?;
            let seed = rng::derive_seed(self.config.seed, &format!("train/member{i}"));
            for p in self.config.phases.clone() {
                if p.steps == 0 {
                    continue;
                }
                info!("{name}: phase {} for {} steps", p.phase, p.steps);
                let report = run_phase(&mut model, &mut opt, &self.vocab, &self.corpora, &directions, &p, &sched, seed)?;
                self.log.borrow_mut().append(LogPayload::PhaseReport { system: name.clone(), report })?;
                self.save(&name, p.phase.as_str(), &model, &opt)?;
            }
            let t = self.translator(vec![&model])?;
            self.score(&t, &name, Split::Valid, Some(0))?;
            self.log_collapse(&t, &name)?;
        }
        let pool = self.base_pool()?;
        let t = self.translator(pool.models())?;
        self.score(&t, "ensemble", Split::Valid, Some(0))?;
        Ok(())
    }

    fn log_round(&self, arm: &str, names: &[String], report: &RoundReport) -> Result<()> {
        let seed = self.config.seed;
        let round = Some(report.round);
        let mut recs = Vec::new();
        let (a, b) = &self.config.pool.primary;
        let mut push = |system: &str, ab: f64, ba: f64| {
            for (dir, v) in [(format!("{a}-{b}"), ab), (format!("{b}-{a}"), ba)] {
                recs.push(ScoreRecord {
                    system: system.into(),
                    direction: dir,
                    metric: Metric::Chrf,
                    split: Split::Valid,
                    round,
                    value: v,
                    seed,
                });
            }
        };
        for (m, name) in report.members.iter().zip(names) {
            push(name, m.valid.ab, m.valid.ba);
        }
        if names.len() > 1 {
            push(&format!("{arm}-pool"), report.ensemble.ab, report.ensemble.ba);
        }
        self.log.borrow_mut().append(LogPayload::RoundReport { arm: arm.into(), report: report.clone() })?;
        for r in &recs {
            self.log.borrow_mut().score(r)?;
        }
        Ok(())
    }

    fn run_rounds(&mut self, pool: &mut ModelPool, arm: &str, names: &[String]) -> Result<()> {
        let cfg = self.config.rounds.clone();
        for round in 1..=cfg.rounds {
            let report = run_round(pool, &self.vocab, &self.corpora, &cfg, &self.validation, round, self.config.seed)?;
            for (m, name) in pool.members.iter().zip(names) {
                self.save(name, &format!("round{round}"), &m.model, &m.opt)?;
            }
            self.log_round(arm, names, &report)?;
        }
        Ok(())
    }

    /// Ensemble self-training rounds over the base-trained pool.
    pub fn train_ensemble(&mut self) -> Result<()> {
        let mut pool = self.base_pool()?;
        let names: Vec<String> = (0..pool.len()).map(member_name).collect();
        self.run_rounds(&mut pool, "ensemble", &names)
    }

    /// Index of the best base-trained member by mean validation chrF.
    pub fn best_base_member(&self) -> Result<usize> {
        let pool = self.base_pool()?;
        Ok(select_best_model(&pool, &self.vocab, &self.validation)?.0)
    }

    /// Matched single-model continuation of the best base-trained member.
    pub fn baseline(&mut self) -> Result<()> {
        let best = self.best_base_member()?;
        info!("baseline continues {}", member_name(best));
        let mut pool = self.members_from(&[self.base_checkpoint(best)])?;
        pool.members[0].directions = self.config.pool.directions(best)?;
        self.run_rounds(&mut pool, "baseline", &["baseline".to_string()])
    }

    /// Selects the best post-ensemble member on validation, scores every
    /// final system on the test sets and runs the paired t-test of the best
    /// member against the baseline over sentence-level test chrF.
    pub fn evaluate(&mut self) -> Result<Selection> {
        let n = self.config.pool.members();
        let paths: Vec<PathBuf> = (0..n).map(|i| self.final_checkpoint(&member_name(i), i)).collect();
        let pool = self.members_from(&paths)?;
        let (best, valid) = select_best_model(&pool, &self.vocab, &self.validation)?;
        let mut selection = Selection { best_member: best, best_valid_chrf: valid[best].mean, baseline_valid_chrf: None };
        for (i, m) in pool.members.iter().enumerate() {
            let t = self.translator(vec![&m.model])?;
            self.score(&t, &member_name(i), Split::Test, None)?;
            self.log_collapse(&t, &member_name(i))?;
        }
        let t = self.translator(pool.models())?;
        self.score(&t, "ensemble", Split::Test, None)?;
        let best_t = self.translator(vec![&pool.members[best].model])?;
        self.score(&best_t, "best", Split::Test, None)?;
        if self.config.baseline {
            let base_best = self.best_base_member()?;
            let (model, _) = self.load(&self.final_checkpoint("baseline", base_best))?;
            let bt = self.translator(vec![&model])?;
            selection.baseline_valid_chrf = Some(self.validation.score(&bt)?.mean);
            self.score(&bt, "baseline", Split::Test, None)?;
            let diffs = self.sentence_chrf_differences(&best_t, &bt)?;
            match paired_t_test(&diffs) {
                Ok(result) => {
                    self.log.borrow_mut().append(LogPayload::Ttest { label: "best-vs-baseline/test/chrf".into(), result })?
                }
                Err(e) => info!("t-test skipped: {e}"),
            }
        }
        write_json(&self.dir.join(SELECTION_FILE), &selection)?;
        Ok(selection)
    }

    /// Per-sentence chrF of `x` minus that of `y` over both test directions.
    fn sentence_chrf_differences(&self, x: &dyn Translator, y: &dyn Translator) -> Result<Vec<f64>> {
        let cfg = &self.config.eval.metric.chrf;
        let mut d = Vec::new();
        for set in &self.test {
            let sources: Vec<String> = set.pairs.iter().map(|p| p.0.clone()).collect();
            let hx = x.translate(&set.src, &set.tgt, &sources)?;
            let hy = y.translate(&set.src, &set.tgt, &sources)?;
            for ((a, b), (_, r)) in hx.iter().zip(&hy).zip(&set.pairs) {
                d.push(chrf_sentence(a, r, cfg) - chrf_sentence(b, r, cfg));
            }
        }
        Ok(d)
    }

    pub fn phase_reports(&self) -> Result<Vec<(String, PhaseReport)>> {
        Ok(read_log(self.dir.join(METRICS_FILE))?
            .into_iter()
            .filter_map(|r| match r.payload {
                LogPayload::PhaseReport { system, report } => Some((system, report)),
                _ => None,
            })
            .collect())
    }
}

fn mark(dir: &Path, stage: Stage, status: StageStatus) -> Result<()> {
    write_json(&dir.join(STAGE_FILE), &StageMarker { stage, status })
}

/// Runs one stage against an initialized directory, maintaining the stage
/// marker. Errors are wrapped with the stage name.
pub fn run_stage(dir: &Path, stage: Stage) -> Result<()> {
    mark(dir, stage, StageStatus::Running)?;
    let result = match stage {
        Stage::GenData => gen_data(dir),
        Stage::TrainSingle => Experiment::open(dir).and_then(|mut e| e.train_single()),
        Stage::TrainEnsemble => Experiment::open(dir).and_then(|mut e| e.train_ensemble()),
        Stage::Baseline => Experiment::open(dir).and_then(|mut e| e.baseline()),
        Stage::Evaluate => Experiment::open(dir).and_then(|mut e| e.evaluate().map(|_| ())).and_then(|_| report(dir)),
    };
    match result {
        Ok(()) => mark(dir, stage, StageStatus::Done),
        Err(e) => {
            mark(dir, stage, StageStatus::Failed { error: e.to_string() })?;
            Err(Error::Stage { stage: stage.to_string(), source: Box::new(e) })
        }
    }
}

/// Rewrites `summary.csv` from the score records of `metrics.jsonl`.
pub fn report(dir: &Path) -> Result<()> {
    let log = dir.join(METRICS_FILE);
    let records = if log.exists() { scores(&read_log(&log)?) } else { Vec::new() };
    let path = dir.join(SUMMARY_FILE);
    let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_summary_csv(&records, f)
}

/// Runs every stage into a fresh directory: `out`, else the config's
/// `out_dir`.
pub fn run_experiment(config: &ExperimentConfig, out: Option<&Path>) -> Result<PathBuf> {
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| config.out_dir.clone())
        .ok_or_else(|| Error::config("out_dir", "no output directory given"))?;
    if dir.join(METRICS_FILE).exists() {
        return Err(Error::InvalidArgument(format!("{} already holds an experiment", dir.display())));
    }
    init_dir(config, &dir)?;
    for stage in Stage::ALL {
        if stage == Stage::Baseline && !config.baseline {
            continue;
        }
        info!("stage {stage}");
        run_stage(&dir, stage)?;
    }
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::config::tests::tiny;

    fn files(dir: &Path) -> Vec<String> {
        let mut out = Vec::new();
        let mut stack = vec![dir.to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in fs::read_dir(&d).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    out.push(p.strip_prefix(dir).unwrap().display().to_string());
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn full_run_layout() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = run_experiment(&tiny(), Some(&tmp.path().join("x"))).unwrap();
        let f = files(&dir);
        for want in [
            "config.resolved.json",
            "metrics.jsonl",
            "summary.csv",
            "selection.json",
            "stage.json",
            "data/vocab.json",
            "data/A.train.txt",
            "data/valid.json",
            "checkpoints/member-0/phase-init-step-0.ckpt",
            "checkpoints/member-1/phase-mono-step-2.ckpt",
            "checkpoints/member-1/phase-mixed-step-4.ckpt",
            "checkpoints/member-1/phase-pure_bt-step-6.ckpt",
            "checkpoints/member-0/phase-round1-step-8.ckpt",
            "checkpoints/baseline/phase-round1-step-8.ckpt",
        ] {
            assert!(f.contains(&want.to_string()), "missing {want} in {f:?}");
        }
        let marker: StageMarker = read_json(&dir.join(STAGE_FILE)).unwrap();
        assert_eq!(marker, StageMarker { stage: Stage::Evaluate, status: StageStatus::Done });
        let recs = read_log(dir.join(METRICS_FILE)).unwrap();
        let kinds: Vec<&LogPayload> = recs.iter().map(|r| &r.payload).collect();
        assert_eq!(kinds.iter().filter(|p| matches!(p, LogPayload::PhaseReport { .. })).count(), 6);
        assert_eq!(kinds.iter().filter(|p| matches!(p, LogPayload::RoundReport { .. })).count(), 2);
        let csv = fs::read_to_string(dir.join(SUMMARY_FILE)).unwrap();
        assert_eq!(csv.lines().count(), 1 + scores(&recs).len());
        assert!(run_experiment(&tiny(), Some(&dir)).is_err());
    }

    #[test]
    fn zero_steps_leave_initial_checkpoints() {
        let mut c = tiny();
        c.phases.iter_mut().for_each(|p| p.steps = 0);
        c.rounds.rounds = 0;
        let tmp = tempfile::tempdir().unwrap();
        let dir = run_experiment(&c, Some(tmp.path())).unwrap();
        let ckpts: Vec<String> = files(&dir).into_iter().filter(|f| f.starts_with("checkpoints")).collect();
        assert_eq!(ckpts, ["checkpoints/member-0/phase-init-step-0.ckpt", "checkpoints/member-1/phase-init-step-0.ckpt"]);
        let recs = read_log(dir.join(METRICS_FILE)).unwrap();
        assert!(recs.iter().all(|r| !matches!(r.payload, LogPayload::PhaseReport { .. } | LogPayload::RoundReport { .. })));
    }

    #[test]
    fn failed_stage_leaves_marker() {
        let tmp = tempfile::tempdir().unwrap();
        init_dir(&tiny(), tmp.path()).unwrap();
        let e = run_stage(tmp.path(), Stage::TrainSingle).unwrap_err();
        assert!(matches!(&e, Error::Stage { stage, .. } if stage == "train-single"));
        let marker: StageMarker = read_json(&tmp.path().join(STAGE_FILE)).unwrap();
        assert!(matches!(marker.status, StageStatus::Failed { .. }));
    }

    #[test]
    fn stage_names_parse() {
        for s in Stage::ALL {
            assert_eq!(s.as_str().parse::<Stage>().unwrap(), s);
        }
        assert!("train".parse::<Stage>().is_err());
    }
}
