use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{LanguageId, SyntheticWorldSpec, Vocabulary};
use crate::decoding::DecodeConfig;
use crate::error::{Error, Result};
use crate::eval::{Metric, MetricConfig};
use crate::model::{LrSchedule, ModelConfig};
use crate::training::{DirectionSet, Phase, PhaseConfig, RoundsConfig};

/// Model shape without the vocabulary size, which comes from the data.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelShape {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_context: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        let d = ModelConfig::desk(2, 0);
        ModelShape {
            n_layers: d.n_layers,
            d_model: d.d_model,
            n_heads: d.n_heads,
            d_ff: d.d_ff,
            max_context: d.max_context,
        }
    }
}

impl ModelShape {
    pub fn config(&self, vocab_size: usize, init_seed: u64) -> ModelConfig {
        ModelConfig {
            n_layers: self.n_layers,
            d_model: self.d_model,
            n_heads: self.n_heads,
            d_ff: self.d_ff,
            max_context: self.max_context,
            vocab_size,
            init_seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Training sentences sampled per language.
    pub train_sentences: usize,
    /// Pairs per direction in the validation sets used for selection.
    pub valid_pairs: usize,
    pub test_pairs: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { train_sentences: 2000, valid_pairs: 200, test_pairs: 200 }
    }
}

/// Base-training learning rate. Without explicit milestones the rate is
/// halved after 10% and 20% of the base steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub initial_lr: f64,
    #[serde(default)]
    pub halving_steps: Option<Vec<u64>>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig { initial_lr: 3e-4, halving_steps: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolConfig {
    pub primary: (LanguageId, LanguageId),
    /// One auxiliary language per member; N is the length of this list.
    pub auxiliary: Vec<LanguageId>,
}

impl PoolConfig {
    pub fn members(&self) -> usize {
        self.auxiliary.len()
    }

    pub fn directions(&self, member: usize) -> Result<DirectionSet> {
        let aux = self.auxiliary.get(member).ok_or_else(|| {
            Error::config("pool.auxiliary", format!("member {member} does not exist"))
        })?;
        DirectionSet::new(self.primary.0.clone(), self.primary.1.clone(), aux.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub metrics: Vec<Metric>,
    #[serde(default)]
    pub metric: MetricConfig,
    /// Decoding used for validation, selection and test scores.
    pub decode: DecodeConfig,
    /// Distinct source sentences per collapse report.
    pub collapse_sample: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            metrics: vec![Metric::Chrf, Metric::Bleu],
            metric: MetricConfig::default(),
            decode: DecodeConfig::greedy(),
            collapse_sample: 100,
        }
    }
}

fn default_phases() -> Vec<PhaseConfig> {
    vec![PhaseConfig::monolingual(200), PhaseConfig::mixed(400, 0.98), PhaseConfig::pure_bt(1400)]
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub world: SyntheticWorldSpec,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelShape,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default = "default_phases")]
    pub phases: Vec<PhaseConfig>,
    pub pool: PoolConfig,
    #[serde(default)]
    pub rounds: RoundsConfig,
    /// Run the matched single-model continuation baseline.
    #[serde(default = "default_true")]
    pub baseline: bool,
    #[serde(default)]
    pub eval: EvalConfig,
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(json_path(&e), e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn base_steps(&self) -> u64 {
        self.phases.iter().map(|p| p.steps).sum()
    }

    pub fn lr_schedule(&self) -> Result<LrSchedule> {
        let halvings = match &self.schedule.halving_steps {
            Some(h) => h.clone(),
            None => {
                let total = self.base_steps();
                let mut h = vec![total / 10, total / 5];
                h.dedup();
                h.retain(|&s| s > 0);
                h
            }
        };
        LrSchedule::new(self.schedule.initial_lr, halvings).map_err(|e| Error::config("schedule", e.to_string()))
    }

    /// Checks every cross-field invariant and names the offending field.
    pub fn validate(&self) -> Result<()> {
        self.world.validate().map_err(|e| Error::config("world", e.to_string()))?;
        let known: HashSet<&LanguageId> = self.world.languages.iter().map(|l| &l.id).collect();
        let (a, b) = &self.pool.primary;
        for (field, l) in [("pool.primary", a), ("pool.primary", b)] {
            if !known.contains(l) {
                return Err(Error::config(field, format!("language {l} is not in the world")));
            }
        }
        if a == b {
            return Err(Error::config("pool.primary", "the two primary languages must differ"));
        }
        if self.pool.auxiliary.is_empty() {
            return Err(Error::config("pool.auxiliary", "need at least one member"));
        }
        let mut seen = HashSet::new();
        for l in &self.pool.auxiliary {
            if !known.contains(l) {
                return Err(Error::config("pool.auxiliary", format!("language {l} is not in the world")));
            }
            if l == a || l == b {
                return Err(Error::config("pool.auxiliary", format!("{l} is a primary language")));
            }
            if !seen.insert(l) {
                return Err(Error::config("pool.auxiliary", format!("{l} is listed twice")));
            }
        }
        let d = &self.data;
        if d.train_sentences == 0 || d.valid_pairs == 0 || d.test_pairs == 0 {
            return Err(Error::config("data", "corpus and evaluation sizes must be positive"));
        }
        self.model.config(16, 0).validate().map_err(|e| Error::config("model", e.to_string()))?;
        let (_, max_len) = self.world.sentence_length_range;
        if self.model.max_context < max_len + 3 {
            return Err(Error::config(
                "model.max_context",
                format!("{} cannot hold a monolingual example of {max_len} words", self.model.max_context),
            ));
        }
        for (i, p) in self.phases.iter().enumerate() {
            if p.phase == Phase::Pseudo {
                return Err(Error::config(format!("phases[{i}]"), "pseudo is not a base phase"));
            }
            p.validate().map_err(|e| Error::config(format!("phases[{i}]"), e.to_string()))?;
        }
        self.lr_schedule()?;
        let r = &self.rounds;
        if r.batch_size == 0 {
            return Err(Error::config("rounds.batch_size", "must be positive"));
        }
        if !(r.lr > 0.0 && r.lr.is_finite()) {
            return Err(Error::config("rounds.lr", "must be positive"));
        }
        r.decode.validate().map_err(|e| Error::config("rounds.decode", e.to_string()))?;
        if self.eval.metrics.is_empty() {
            return Err(Error::config("eval.metrics", "need at least one metric"));
        }
        if self.eval.collapse_sample < 2 {
            return Err(Error::config("eval.collapse_sample", "need at least 2 sentences"));
        }
        self.eval.decode.validate().map_err(|e| Error::config("eval.decode", e.to_string()))?;
        Ok(())
    }

    /// Model configuration of member `i` for a given vocabulary.
    pub fn member_model(&self, vocab: &Vocabulary, member: usize) -> ModelConfig {
        self.model.config(vocab.len(), crate::rng::derive_seed(self.seed, &format!("init/member{member}")))
    }
}

/// Best-effort field name for a deserialization error.
fn json_path(e: &serde_json::Error) -> String {
    let msg = e.to_string();
    for key in ["missing field `", "unknown field `"] {
        if let Some(rest) = msg.split(key).nth(1) {
            if let Some(name) = rest.split('`').next() {
                return name.to_string();
            }
        }
    }
    "config".into()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::corpus::{LanguageSpec, WordOrder};

    pub(crate) fn tiny() -> ExperimentConfig {
        let spec = SyntheticWorldSpec {
            base_vocab_size: 20,
            sentence_length_range: (2, 4),
            grammar_seed: 3,
            languages: ["A", "B", "C1", "C2"]
                .iter()
                .enumerate()
                .map(|(i, l)| LanguageSpec {
                    id: (*l).into(),
                    substitution_seed: 40 + i as u64,
                    word_order: WordOrder::Identity,
                })
                .collect(),
            transition_concentration: 0.1,
        };
        let mut phases = default_phases();
        for (p, s) in phases.iter_mut().zip([2, 2, 2]) {
            p.steps = s;
            p.batch_size = 2;
        }
        ExperimentConfig {
            world: spec,
            data: DataConfig { train_sentences: 30, valid_pairs: 4, test_pairs: 4 },
            model: ModelShape { n_layers: 1, d_model: 8, n_heads: 2, d_ff: 8, max_context: 32 },
            schedule: ScheduleConfig::default(),
            phases,
            pool: PoolConfig { primary: ("A".into(), "B".into()), auxiliary: vec!["C1".into(), "C2".into()] },
            rounds: RoundsConfig { rounds: 1, sentences_per_direction: 3, steps: 2, batch_size: 2, ..Default::default() },
            baseline: true,
            eval: EvalConfig { collapse_sample: 4, ..Default::default() },
            seed: 9,
            out_dir: None,
        }
    }

    fn field(e: Error) -> String {
        match e {
            Error::Config { field, .. } => field,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn json_round_trip() {
        let c = tiny();
        let back = ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
        c.validate().unwrap();
    }

    #[test]
    fn defaults_fill_in() {
        let c = tiny();
        let mut v: serde_json::Value = serde_json::from_str(&c.to_json().unwrap()).unwrap();
        let o = v.as_object_mut().unwrap();
        for k in ["data", "model", "schedule", "phases", "rounds", "baseline", "eval", "out_dir"] {
            o.remove(k);
        }
        let d = ExperimentConfig::from_json(&v.to_string()).unwrap();
        assert_eq!(d.base_steps(), 2000);
        assert_eq!(d.model.d_model, 64);
        assert_eq!(d.rounds.rounds, 2);
        assert_eq!(d.rounds.steps, 500);
        assert_eq!(d.data.valid_pairs, 200);
        assert!(d.baseline);
        assert_eq!(d.lr_schedule().unwrap(), LrSchedule::new(3e-4, vec![200, 400]).unwrap());
    }

    #[test]
    fn bad_auxiliary_is_named() {
        let mut c = tiny();
        c.pool.auxiliary.push("Z".into());
        assert_eq!(field(c.validate().unwrap_err()), "pool.auxiliary");
        let mut c = tiny();
        c.pool.auxiliary = vec!["C1".into(), "C1".into()];
        assert_eq!(field(c.validate().unwrap_err()), "pool.auxiliary");
        let mut c = tiny();
        c.pool.auxiliary = vec![];
        assert_eq!(field(c.validate().unwrap_err()), "pool.auxiliary");
    }

    #[test]
    fn other_fields_are_named() {
        let mut c = tiny();
        c.model.max_context = 5;
        assert_eq!(field(c.validate().unwrap_err()), "model.max_context");
        let mut c = tiny();
        c.phases[1].bt_ratio = 1.5;
        assert_eq!(field(c.validate().unwrap_err()), "phases[1]");
        let mut c = tiny();
        c.pool.primary.1 = "A".into();
        assert_eq!(field(c.validate().unwrap_err()), "pool.primary");
        let e = ExperimentConfig::from_json("{\"seed\": 1}").unwrap_err();
        assert_eq!(field(e), "world");
        let e = ExperimentConfig::from_json("{\"sed\": 1}").unwrap_err();
        assert_eq!(field(e), "sed");
    }

    #[test]
    fn zero_steps_have_no_halvings() {
        let mut c = tiny();
        c.phases.iter_mut().for_each(|p| p.steps = 0);
        assert!(c.lr_schedule().unwrap().halving_steps.is_empty());
    }
}
