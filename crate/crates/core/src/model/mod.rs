//! Micro decoder-only causal language model.
//!
//! Pre-norm transformer blocks with learned positions, tanh-GELU
//! feed-forward layers and an output projection tied to the token
//! embeddings. Gradients are derived by hand; there is no autograd tape.

mod checkpoint;
mod kernels;
mod loss;
mod optim;
mod transformer;

use serde::{Deserialize, Serialize};

pub use kernels::softmax_in_place as softmax;
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, FORMAT_VERSION, MAGIC};
pub use loss::{masked_nll, LossMask};
pub use optim::{apply_gradient_step, AdamConfig, LrSchedule, OptimizerState};
pub use transformer::{Gradients, KvCache, Transformer};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_context: usize,
    pub vocab_size: usize,
    pub init_seed: u64,
}

impl ModelConfig {
    /// Default desk-scale shape for a given vocabulary.
    pub fn desk(vocab_size: usize, init_seed: u64) -> Self {
        ModelConfig {
            n_layers: 2,
            d_model: 64,
            n_heads: 4,
            d_ff: 256,
            max_context: 64,
            vocab_size,
            init_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_layers == 0 || self.d_model == 0 || self.n_heads == 0 || self.d_ff == 0 {
            return bad("layer, width, head and feed-forward counts must be positive".into());
        }
        if self.d_model % self.n_heads != 0 {
            return bad(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.max_context < 2 {
            return bad("max_context must be at least 2".into());
        }
        if self.vocab_size < 2 {
            return bad("vocab_size must be at least 2".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// Named tensor inside the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct LayerOffsets {
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub qkv: usize,
    pub attn_out: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub ff_up: usize,
    pub ff_down: usize,
}

/// Fixed tensor order of the flat parameter vector (and of checkpoints):
/// `tok_emb [V×d]`, `pos_emb [C×d]`, then per layer `ln1.g [d]`, `ln1.b [d]`,
/// `attn.qkv [d×3d]`, `attn.out [d×d]`, `ln2.g [d]`, `ln2.b [d]`,
/// `ff.up [d×f]`, `ff.down [f×d]`, and finally `ln_f.g [d]`, `ln_f.b [d]`.
/// Matrices are row-major with the input dimension as rows.
#[derive(Clone, Debug)]
pub struct ParamLayout {
    pub tensors: Vec<TensorSpec>,
    pub(crate) tok_emb: usize,
    pub(crate) pos_emb: usize,
    pub(crate) layers: Vec<LayerOffsets>,
    pub(crate) lnf_g: usize,
    pub(crate) lnf_b: usize,
    pub total: usize,
}

impl ParamLayout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let d = cfg.d_model;
        let mut tensors = Vec::new();
        let mut total = 0;
        let mut push = |name: String, rows: usize, cols: usize| {
            let offset = total;
            tensors.push(TensorSpec { name, rows, cols, offset });
            total += rows * cols;
            offset
        };
        let tok_emb = push("tok_emb".into(), cfg.vocab_size, d);
        let pos_emb = push("pos_emb".into(), cfg.max_context, d);
        let mut layers = Vec::with_capacity(cfg.n_layers);
        for l in 0..cfg.n_layers {
            layers.push(LayerOffsets {
                ln1_g: push(format!("layer{l}.ln1.g"), 1, d),
                ln1_b: push(format!("layer{l}.ln1.b"), 1, d),
                qkv: push(format!("layer{l}.attn.qkv"), d, 3 * d),
                attn_out: push(format!("layer{l}.attn.out"), d, d),
                ln2_g: push(format!("layer{l}.ln2.g"), 1, d),
                ln2_b: push(format!("layer{l}.ln2.b"), 1, d),
                ff_up: push(format!("layer{l}.ff.up"), d, cfg.d_ff),
                ff_down: push(format!("layer{l}.ff.down"), cfg.d_ff, d),
            });
        }
        let lnf_g = push("ln_f.g".into(), 1, d);
        let lnf_b = push("ln_f.b".into(), 1, d);
        ParamLayout { tensors, tok_emb, pos_emb, layers, lnf_g, lnf_b, total }
    }

    pub fn tensor(&self, name: &str) -> Option<&TensorSpec> {
        self.tensors.iter().find(|t| t.name == name)
    }
}
