//! Binary checkpoint files.
//!
//! ```text
//! "BTEL"                  4 bytes magic
//! version                 u16 LE
//! metadata length         u32 LE
//! metadata                UTF-8 JSON (CheckpointMeta)
//! parameters              f32 LE, ParamLayout tensor order
//! Adam first moments      f32 LE, same order
//! Adam second moments     f32 LE, same order
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::optim::{AdamConfig, OptimizerState};
use super::transformer::Transformer;
use super::{ModelConfig, ParamLayout};
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"BTEL";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub vocab_hash: String,
    pub phase: String,
    pub step: u64,
    pub optimizer_step: u64,
    pub adam: AdamConfig,
    pub seeds: BTreeMap<String, u64>,
}

impl CheckpointMeta {
    pub fn new(model: &ModelConfig, vocab_hash: impl Into<String>, phase: impl Into<String>, step: u64) -> Self {
        CheckpointMeta {
            model: model.clone(),
            vocab_hash: vocab_hash.into(),
            phase: phase.into(),
            step,
            optimizer_step: 0,
            adam: AdamConfig::default(),
            seeds: BTreeMap::new(),
        }
    }

    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<()> {
        let found = vocab.content_hash();
        if found != self.vocab_hash {
            return Err(Error::VocabHashMismatch { expected: self.vocab_hash.clone(), found });
        }
        Ok(())
    }
}

pub fn save_checkpoint(
    model: &Transformer<f32>,
    opt: &OptimizerState<f32>,
    meta: &CheckpointMeta,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let mut meta = meta.clone();
    meta.model = model.config().clone();
    meta.optimizer_step = opt.step;
    meta.adam = opt.adam;
    let json = serde_json::to_vec(&meta)?;
    let n = model.param_count();
    let mut buf = Vec::with_capacity(10 + json.len() + 12 * n);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for block in [model.params(), &opt.m[..], &opt.v[..]] {
        if block.len() != n {
            return Err(Error::ShapeMismatch("optimizer state does not match model".into()));
        }
        for x in block {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Transformer<f32>, OptimizerState<f32>, CheckpointMeta)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::FormatVersionMismatch(format!("{}: {m}", path.display()));
    if bytes.len() < 10 || &bytes[..4] != MAGIC {
        return Err(bad("missing BTEL magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(bad(&format!("version {version}, expected {FORMAT_VERSION}")));
    }
    let meta_len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let body = 10 + meta_len;
    if bytes.len() < body {
        return Err(bad("truncated metadata"));
    }
    let meta: CheckpointMeta = serde_json::from_slice(&bytes[10..body])?;
    meta.model.validate()?;
    let n = ParamLayout::new(&meta.model).total;
    if bytes.len() != body + 12 * n {
        return Err(bad(&format!("expected {} tensor bytes, found {}", 12 * n, bytes.len() - body)));
    }
    let read = |block: usize| -> Vec<f32> {
        bytes[body + 4 * n * block..body + 4 * n * (block + 1)]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect()
    };
    let model = Transformer::from_params(&meta.model, read(0))?;
    let opt = OptimizerState { m: read(1), v: read(2), step: meta.optimizer_step, adam: meta.adam };
    Ok((model, opt, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{apply_gradient_step, LrSchedule};

    fn tiny() -> ModelConfig {
        ModelConfig { n_layers: 1, d_model: 8, n_heads: 2, d_ff: 8, max_context: 8, vocab_size: 9, init_seed: 4 }
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let mut m = Transformer::<f32>::init(&tiny()).unwrap();
        let mut opt = OptimizerState::for_model(&m);
        let mut g = m.zero_grads();
        g.data.iter_mut().enumerate().for_each(|(i, x)| *x = (i as f64).sin());
        apply_gradient_step(&mut m, &mut opt, &g, &LrSchedule::constant(1e-2)).unwrap();
        let mut meta = CheckpointMeta::new(m.config(), "abc", "mono", 1);
        meta.seeds.insert("init".into(), 4);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/x.ckpt");
        save_checkpoint(&m, &opt, &meta, &p).unwrap();
        let (m2, opt2, meta2) = load_checkpoint(&p).unwrap();
        assert_eq!(m.params().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                   m2.params().iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        assert_eq!(opt, opt2);
        assert_eq!(meta2.optimizer_step, 1);
        assert_eq!(meta2.phase, "mono");
        assert_eq!(meta2.seeds["init"], 4);
    }

    #[test]
    fn corrupted_magic() {
        let m = Transformer::<f32>::init(&tiny()).unwrap();
        let opt = OptimizerState::for_model(&m);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.ckpt");
        save_checkpoint(&m, &opt, &CheckpointMeta::new(m.config(), "h", "init", 0), &p).unwrap();
        let mut bytes = fs::read(&p).unwrap();
        bytes[0] = b'X';
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&p), Err(Error::FormatVersionMismatch(_))));
        bytes[0] = b'B';
        bytes[4] = 9;
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&p), Err(Error::FormatVersionMismatch(_))));
    }

    #[test]
    fn foreign_vocab_is_detected() {
        use crate::corpus::{MonolingualCorpus, Split};
        let c = MonolingualCorpus { language: "A".into(), split: Split::Train, sentences: vec!["a b".into()] };
        let v1 = Vocabulary::build(&[&c], &["A".into()]).unwrap();
        let c2 = MonolingualCorpus { sentences: vec!["a c".into()], ..c };
        let v2 = Vocabulary::build(&[&c2], &["A".into()]).unwrap();
        let meta = CheckpointMeta::new(&tiny(), v1.content_hash(), "x", 0);
        meta.check_vocab(&v1).unwrap();
        assert!(matches!(meta.check_vocab(&v2), Err(Error::VocabHashMismatch { .. })));
    }
}
