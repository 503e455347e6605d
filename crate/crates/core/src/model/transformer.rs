use rand_distr::{Distribution, Normal};

use super::kernels::{attend, gelu, gelu_grad, layer_norm, layer_norm_backward, linear};
use super::loss::{masked_nll, LossMask};
use super::{ModelConfig, ParamLayout};
use crate::corpus::TokenId;
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::{axpy, Scalar};

const INIT_STD: f64 = 0.02;

/// Transposed copies of every matrix, kept in sync with the parameters so
/// that all products can be written as row updates.
#[derive(Clone, Debug)]
struct Transposes<S> {
    emb: Vec<S>,
    qkv: Vec<Vec<S>>,
    attn_out: Vec<Vec<S>>,
    ff_up: Vec<Vec<S>>,
    ff_down: Vec<Vec<S>>,
}

fn transpose<S: Scalar>(m: &[S], rows: usize, cols: usize) -> Vec<S> {
    let mut t = vec![S::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            t[c * rows + r] = m[r * cols + c];
        }
    }
    t
}

#[derive(Clone, Debug)]
pub struct Transformer<S> {
    cfg: ModelConfig,
    layout: ParamLayout,
    params: Vec<S>,
    t: Transposes<S>,
}

/// Gradient of a scalar loss with respect to every parameter, in `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub data: Vec<f64>,
}

impl Gradients {
    pub fn zeros(n: usize) -> Self {
        Gradients { data: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|g| *g *= s);
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Per-position key/value state for incremental decoding.
#[derive(Clone, Debug)]
pub struct KvCache<S> {
    /// Per layer, one `[q | k | v]` row per processed position.
    qkv: Vec<Vec<S>>,
    len: usize,
}

impl<S> KvCache<S> {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

#[derive(Clone, Debug, Default)]
struct LayerTrace<S> {
    x_in: Vec<S>,
    xhat1: Vec<S>,
    rstd1: Vec<f64>,
    a: Vec<S>,
    qkv: Vec<S>,
    probs: Vec<f64>,
    ctx: Vec<S>,
    x_mid: Vec<S>,
    xhat2: Vec<S>,
    rstd2: Vec<f64>,
    b: Vec<S>,
    up_pre: Vec<S>,
    up_act: Vec<S>,
}

/// Activations recorded by a full forward pass, consumed by backward.
#[derive(Clone, Debug)]
pub struct Trace<S> {
    tokens: Vec<TokenId>,
    layers: Vec<LayerTrace<S>>,
    xhatf: Vec<S>,
    rstdf: Vec<f64>,
    hf: Vec<S>,
    pub logits: Vec<S>,
}

struct Scratch {
    acc: Vec<f64>,
    probs: Vec<f64>,
}

impl Scratch {
    fn new() -> Self {
        Scratch { acc: Vec::new(), probs: Vec::new() }
    }
}

fn tri(t: usize) -> usize {
    t * (t + 1) / 2
}

impl<S: Scalar> Transformer<S> {
    /// Gaussian initialization (std 0.02); the attention output and
    /// feed-forward down projections are further scaled by `1/√(2·n_layers)`.
    /// Layer-norm gains start at one and biases at zero.
    pub fn init(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let layout = ParamLayout::new(cfg);
        let mut params = vec![S::zero(); layout.total];
        let mut r = rng::stream(cfg.init_seed, "model-init");
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let resid_scale = 1.0 / (2.0 * cfg.n_layers as f64).sqrt();
        for spec in &layout.tensors {
            let name = spec.name.as_str();
            let slice = &mut params[spec.range()];
            if name.ends_with(".g") {
                slice.iter_mut().for_each(|p| *p = S::one());
            } else if name.ends_with(".b") {
                // zeros
            } else {
                let scale = if name.ends_with("attn.out") || name.ends_with("ff.down") {
                    resid_scale
                } else {
                    1.0
                };
                for p in slice.iter_mut() {
                    *p = S::of(normal.sample(&mut r) * scale);
                }
            }
        }
        Ok(Self::assemble(cfg.clone(), layout, params))
    }

    pub fn from_params(cfg: &ModelConfig, params: Vec<S>) -> Result<Self> {
        cfg.validate()?;
        let layout = ParamLayout::new(cfg);
        if params.len() != layout.total {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                layout.total,
                params.len()
            )));
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::ShapeMismatch(format!("parameter {i} is not finite")));
        }
        Ok(Self::assemble(cfg.clone(), layout, params))
    }

    fn assemble(cfg: ModelConfig, layout: ParamLayout, params: Vec<S>) -> Self {
        let t = Self::build_transposes(&cfg, &layout, &params);
        Transformer { cfg, layout, params, t }
    }

    fn build_transposes(cfg: &ModelConfig, layout: &ParamLayout, p: &[S]) -> Transposes<S> {
        let d = cfg.d_model;
        let f = cfg.d_ff;
        let v = cfg.vocab_size;
        let m = |off: usize, r: usize, c: usize| transpose(&p[off..off + r * c], r, c);
        Transposes {
            emb: m(layout.tok_emb, v, d),
            qkv: layout.layers.iter().map(|l| m(l.qkv, d, 3 * d)).collect(),
            attn_out: layout.layers.iter().map(|l| m(l.attn_out, d, d)).collect(),
            ff_up: layout.layers.iter().map(|l| m(l.ff_up, d, f)).collect(),
            ff_down: layout.layers.iter().map(|l| m(l.ff_down, f, d)).collect(),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[S] {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Mutates the flat parameter vector, then resynchronizes derived state.
    pub fn update_params(&mut self, f: impl FnOnce(&mut [S])) {
        f(&mut self.params);
        self.t = Self::build_transposes(&self.cfg, &self.layout, &self.params);
    }

    /// Converts the parameters to another scalar type.
    pub fn cast<T: Scalar>(&self) -> Transformer<T> {
        let params = self.params.iter().map(|p| T::of(p.f64())).collect();
        Transformer::<T>::assemble(self.cfg.clone(), self.layout.clone(), params)
    }

    fn slice(&self, off: usize, len: usize) -> &[S] {
        &self.params[off..off + len]
    }

    fn check_tokens(&self, tokens: &[TokenId], already: usize) -> Result<()> {
        let len = already + tokens.len();
        if len > self.cfg.max_context {
            return Err(Error::ContextOverflow { len, max: self.cfg.max_context });
        }
        if let Some(&t) = tokens.iter().find(|&&t| t as usize >= self.cfg.vocab_size) {
            return Err(Error::ShapeMismatch(format!(
                "token id {t} outside vocabulary of {}",
                self.cfg.vocab_size
            )));
        }
        Ok(())
    }

    fn embed(&self, token: TokenId, pos: usize, out: &mut [S]) {
        let d = self.cfg.d_model;
        let e = self.slice(self.layout.tok_emb + token as usize * d, d);
        let p = self.slice(self.layout.pos_emb + pos * d, d);
        for i in 0..d {
            out[i] = S::of(e[i].f64() + p[i].f64());
        }
    }

    /// Runs one position through the attention output projection and the
    /// feed-forward sub-block. Returns nothing; all outputs land in the
    /// provided row buffers.
    #[allow(clippy::too_many_arguments)]
    fn block_tail(
        &self,
        l: usize,
        x_in: &[S],
        ctx: &[S],
        x_mid: &mut [S],
        xhat2: &mut [S],
        b: &mut [S],
        up_pre: &mut [S],
        up_act: &mut [S],
        x_out: &mut [S],
        sc: &mut Scratch,
    ) -> f64 {
        let d = self.cfg.d_model;
        let f = self.cfg.d_ff;
        let lo = self.layout.layers[l];
        let mut tmp = vec![S::zero(); d];
        linear(ctx, self.slice(lo.attn_out, d * d), d, &mut sc.acc, &mut tmp);
        for i in 0..d {
            x_mid[i] = S::of(x_in[i].f64() + tmp[i].f64());
        }
        let rstd2 = layer_norm(x_mid, self.slice(lo.ln2_g, d), self.slice(lo.ln2_b, d), xhat2, b);
        linear(b, self.slice(lo.ff_up, d * f), f, &mut sc.acc, up_pre);
        for i in 0..f {
            up_act[i] = S::of(gelu(up_pre[i].f64()));
        }
        linear(up_act, self.slice(lo.ff_down, f * d), d, &mut sc.acc, &mut tmp);
        for i in 0..d {
            x_out[i] = S::of(x_mid[i].f64() + tmp[i].f64());
        }
        rstd2
    }

    fn attention_row(&self, qkv_rows: &[S], t: usize, ctx: &mut [S], probs_out: Option<(&mut [f64], usize)>, sc: &mut Scratch) {
        let d = self.cfg.d_model;
        let hd = self.cfg.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();
        let q_row = &qkv_rows[t * 3 * d..t * 3 * d + d];
        let mut probs_out = probs_out;
        for h in 0..self.cfg.n_heads {
            let lo = h * hd;
            attend(
                &q_row[lo..lo + hd],
                qkv_rows,
                t + 1,
                3 * d,
                d + lo,
                2 * d + lo,
                scale,
                &mut sc.probs,
                &mut sc.acc,
                &mut ctx[lo..lo + hd],
            );
            if let Some((buf, seq_len)) = probs_out.as_mut() {
                let base = h * tri(*seq_len) + tri(t);
                buf[base..base + t + 1].copy_from_slice(&sc.probs);
            }
        }
    }

    fn final_logits(&self, hf: &[S], acc: &mut Vec<f64>, out: &mut [S]) {
        linear(hf, &self.t.emb, self.cfg.vocab_size, acc, out);
    }

    /// Full forward pass recording every activation needed by [`backward`](Self::backward).
    pub fn forward_trace(&self, tokens: &[TokenId]) -> Result<Trace<S>> {
        self.check_tokens(tokens, 0)?;
        let n = tokens.len();
        let d = self.cfg.d_model;
        let f = self.cfg.d_ff;
        let v = self.cfg.vocab_size;
        let z = S::zero();
        let mut sc = Scratch::new();
        let mut x = vec![z; n * d];
        for (t, &tok) in tokens.iter().enumerate() {
            self.embed(tok, t, &mut x[t * d..(t + 1) * d]);
        }
        let mut layers = Vec::with_capacity(self.cfg.n_layers);
        for l in 0..self.cfg.n_layers {
            let lo = self.layout.layers[l];
            let mut lt = LayerTrace {
                x_in: x.clone(),
                xhat1: vec![z; n * d],
                rstd1: vec![0.0; n],
                a: vec![z; n * d],
                qkv: vec![z; n * 3 * d],
                probs: vec![0.0; self.cfg.n_heads * tri(n)],
                ctx: vec![z; n * d],
                x_mid: vec![z; n * d],
                xhat2: vec![z; n * d],
                rstd2: vec![0.0; n],
                b: vec![z; n * d],
                up_pre: vec![z; n * f],
                up_act: vec![z; n * f],
            };
            for t in 0..n {
                let r = t * d..(t + 1) * d;
                lt.rstd1[t] = layer_norm(
                    &x[r.clone()],
                    self.slice(lo.ln1_g, d),
                    self.slice(lo.ln1_b, d),
                    &mut lt.xhat1[r.clone()],
                    &mut lt.a[r.clone()],
                );
                linear(&lt.a[r], self.slice(lo.qkv, 3 * d * d), 3 * d, &mut sc.acc, &mut lt.qkv[t * 3 * d..(t + 1) * 3 * d]);
            }
            for t in 0..n {
                self.attention_row(&lt.qkv[..(t + 1) * 3 * d], t, &mut lt.ctx[t * d..(t + 1) * d], Some((&mut lt.probs, n)), &mut sc);
            }
            for t in 0..n {
                let r = t * d..(t + 1) * d;
                let rf = t * f..(t + 1) * f;
                lt.rstd2[t] = self.block_tail(
                    l,
                    &lt.x_in[r.clone()],
                    &lt.ctx[r.clone()],
                    &mut lt.x_mid[r.clone()],
                    &mut lt.xhat2[r.clone()],
                    &mut lt.b[r.clone()],
                    &mut lt.up_pre[rf.clone()],
                    &mut lt.up_act[rf],
                    &mut x[r],
                    &mut sc,
                );
            }
            layers.push(lt);
        }
        let mut xhatf = vec![z; n * d];
        let mut hf = vec![z; n * d];
        let mut rstdf = vec![0.0; n];
        let mut logits = vec![z; n * v];
        for t in 0..n {
            let r = t * d..(t + 1) * d;
            rstdf[t] = layer_norm(
                &x[r.clone()],
                self.slice(self.layout.lnf_g, d),
                self.slice(self.layout.lnf_b, d),
                &mut xhatf[r.clone()],
                &mut hf[r.clone()],
            );
            self.final_logits(&hf[r], &mut sc.acc, &mut logits[t * v..(t + 1) * v]);
        }
        Ok(Trace { tokens: tokens.to_vec(), layers, xhatf, rstdf, hf, logits })
    }

    /// Logits for every position, row-major `[len × vocab]`. Position `t`
    /// depends only on tokens `0..=t`.
    pub fn forward_logits(&self, tokens: &[TokenId]) -> Result<Vec<S>> {
        Ok(self.forward_trace(tokens)?.logits)
    }

    pub fn new_cache(&self) -> KvCache<S> {
        KvCache { qkv: vec![Vec::new(); self.cfg.n_layers], len: 0 }
    }

    /// Appends `tokens` to the cache and returns the logits at the last
    /// appended position. Bit-identical to the corresponding row of
    /// [`forward_logits`](Self::forward_logits) over the whole prefix.
    pub fn extend(&self, cache: &mut KvCache<S>, tokens: &[TokenId]) -> Result<Vec<S>> {
        if tokens.is_empty() {
            return Err(Error::InvalidArgument("extend needs at least one token".into()));
        }
        self.check_tokens(tokens, cache.len)?;
        let d = self.cfg.d_model;
        let f = self.cfg.d_ff;
        let z = S::zero();
        let mut sc = Scratch::new();
        let mut x = vec![z; d];
        let mut xhat = vec![z; d];
        let mut a = vec![z; d];
        let mut ctx = vec![z; d];
        let mut x_mid = vec![z; d];
        let mut b = vec![z; d];
        let mut up_pre = vec![z; f];
        let mut up_act = vec![z; f];
        let mut x_out = vec![z; d];
        for &tok in tokens {
            let t = cache.len;
            self.embed(tok, t, &mut x);
            for l in 0..self.cfg.n_layers {
                let lo = self.layout.layers[l];
                layer_norm(&x, self.slice(lo.ln1_g, d), self.slice(lo.ln1_b, d), &mut xhat, &mut a);
                let rows = &mut cache.qkv[l];
                let start = rows.len();
                rows.resize(start + 3 * d, z);
                linear(&a, self.slice(lo.qkv, 3 * d * d), 3 * d, &mut sc.acc, &mut rows[start..]);
                self.attention_row(rows, t, &mut ctx, None, &mut sc);
                self.block_tail(l, &x, &ctx, &mut x_mid, &mut xhat, &mut b, &mut up_pre, &mut up_act, &mut x_out, &mut sc);
                std::mem::swap(&mut x, &mut x_out);
            }
            cache.len += 1;
        }
        let mut hf = vec![z; d];
        layer_norm(&x, self.slice(self.layout.lnf_g, d), self.slice(self.layout.lnf_b, d), &mut xhat, &mut hf);
        let mut logits = vec![z; self.cfg.vocab_size];
        self.final_logits(&hf, &mut sc.acc, &mut logits);
        Ok(logits)
    }

    /// Accumulates the gradient of a loss into `grads`, given the loss
    /// gradient with respect to the logits of `trace`.
    pub fn backward(&self, trace: &Trace<S>, dlogits: &[f64], grads: &mut Gradients) {
        let n = trace.tokens.len();
        let d = self.cfg.d_model;
        let f = self.cfg.d_ff;
        let v = self.cfg.vocab_size;
        let nh = self.cfg.n_heads;
        let hd = self.cfg.head_dim();
        let scale = 1.0 / (hd as f64).sqrt();
        assert_eq!(dlogits.len(), n * v, "dlogits shape");
        assert_eq!(grads.len(), self.params.len(), "gradient shape");
        let g = &mut grads.data;
        let lay = &self.layout;

        // Tied output projection.
        let mut dh = vec![0.0; n * d];
        for t in 0..n {
            let dl = &dlogits[t * v..(t + 1) * v];
            if dl.iter().all(|&x| x == 0.0) {
                continue;
            }
            let hf = &trace.hf[t * d..(t + 1) * d];
            let dht = &mut dh[t * d..(t + 1) * d];
            for (tok, &gv) in dl.iter().enumerate() {
                let off = lay.tok_emb + tok * d;
                axpy(&mut g[off..off + d], gv, hf);
                axpy(dht, gv, &self.params[off..off + d]);
            }
        }
        let mut dx = vec![0.0; n * d];
        {
            let (dgf, dbf) = g[lay.lnf_g..lay.lnf_g + 2 * d].split_at_mut(d);
            for t in 0..n {
                let r = t * d..(t + 1) * d;
                layer_norm_backward(
                    &dh[r.clone()],
                    &trace.xhatf[r.clone()],
                    self.slice(lay.lnf_g, d),
                    trace.rstdf[t],
                    dgf,
                    dbf,
                    &mut dx[r],
                );
            }
        }

        let mut d_act = vec![0.0; f];
        let mut d_b = vec![0.0; d];
        let mut dctx = vec![0.0; d];
        let mut dp = Vec::new();
        for l in (0..self.cfg.n_layers).rev() {
            let lo = lay.layers[l];
            let lt = &trace.layers[l];

            // Feed-forward sub-block; dx is the gradient at the block output.
            let mut dmid = dx.clone();
            for t in 0..n {
                let r = t * d..(t + 1) * d;
                let rf = t * f..(t + 1) * f;
                let dy = &dx[r.clone()];
                for k in 0..f {
                    let off = lo.ff_down + k * d;
                    axpy(&mut g[off..off + d], lt.up_act[rf.start + k].f64(), dy);
                }
                d_act.iter_mut().for_each(|x| *x = 0.0);
                for j in 0..d {
                    axpy(&mut d_act, dy[j], &self.t.ff_down[l][j * f..(j + 1) * f]);
                }
                for k in 0..f {
                    d_act[k] *= gelu_grad(lt.up_pre[rf.start + k].f64());
                }
                for k in 0..d {
                    let off = lo.ff_up + k * f;
                    axpy(&mut g[off..off + f], lt.b[r.start + k].f64(), &d_act);
                }
                d_b.iter_mut().for_each(|x| *x = 0.0);
                for j in 0..f {
                    axpy(&mut d_b, d_act[j], &self.t.ff_up[l][j * d..(j + 1) * d]);
                }
                let (dg2, db2) = g[lo.ln2_g..lo.ln2_g + 2 * d].split_at_mut(d);
                layer_norm_backward(
                    &d_b,
                    &lt.xhat2[r.clone()],
                    self.slice(lo.ln2_g, d),
                    lt.rstd2[t],
                    dg2,
                    db2,
                    &mut dmid[r],
                );
            }

            // Attention sub-block; dmid is the gradient at the residual midpoint.
            let mut dqkv = vec![0.0; n * 3 * d];
            for t in 0..n {
                let r = t * d..(t + 1) * d;
                let dy = &dmid[r.clone()];
                for k in 0..d {
                    let off = lo.attn_out + k * d;
                    axpy(&mut g[off..off + d], lt.ctx[r.start + k].f64(), dy);
                }
                dctx.iter_mut().for_each(|x| *x = 0.0);
                for j in 0..d {
                    axpy(&mut dctx, dy[j], &self.t.attn_out[l][j * d..(j + 1) * d]);
                }
                for h in 0..nh {
                    let hl = h * hd;
                    let probs = &lt.probs[h * tri(n) + tri(t)..h * tri(n) + tri(t) + t + 1];
                    let dc = &dctx[hl..hl + hd];
                    dp.clear();
                    let mut sum = 0.0;
                    for s in 0..=t {
                        let vrow = &lt.qkv[s * 3 * d + 2 * d + hl..s * 3 * d + 2 * d + hl + hd];
                        let mut acc = 0.0;
                        for j in 0..hd {
                            acc += dc[j] * vrow[j].f64();
                        }
                        dp.push(acc);
                        sum += probs[s] * acc;
                        let dv = s * 3 * d + 2 * d + hl;
                        for j in 0..hd {
                            dqkv[dv + j] += probs[s] * dc[j];
                        }
                    }
                    let q_off = t * 3 * d + hl;
                    for s in 0..=t {
                        let ds = probs[s] * (dp[s] - sum) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        let k_off = s * 3 * d + d + hl;
                        for j in 0..hd {
                            dqkv[q_off + j] += ds * lt.qkv[k_off + j].f64();
                            dqkv[k_off + j] += ds * lt.qkv[q_off + j].f64();
                        }
                    }
                }
            }
            let mut dnext = dmid.clone();
            let mut da = vec![0.0; d];
            for t in 0..n {
                let r = t * d..(t + 1) * d;
                let dq = &dqkv[t * 3 * d..(t + 1) * 3 * d];
                for k in 0..d {
                    let off = lo.qkv + k * 3 * d;
                    axpy(&mut g[off..off + 3 * d], lt.a[r.start + k].f64(), dq);
                }
                da.iter_mut().for_each(|x| *x = 0.0);
                for j in 0..3 * d {
                    axpy(&mut da, dq[j], &self.t.qkv[l][j * d..(j + 1) * d]);
                }
                let (dg1, db1) = g[lo.ln1_g..lo.ln1_g + 2 * d].split_at_mut(d);
                layer_norm_backward(
                    &da,
                    &lt.xhat1[r.clone()],
                    self.slice(lo.ln1_g, d),
                    lt.rstd1[t],
                    dg1,
                    db1,
                    &mut dnext[r],
                );
            }
            dx = dnext;
        }

        for (t, &tok) in trace.tokens.iter().enumerate() {
            let dxt = &dx[t * d..(t + 1) * d];
            let te = lay.tok_emb + tok as usize * d;
            for j in 0..d {
                g[te + j] += dxt[j];
            }
            let pe = lay.pos_emb + t * d;
            for j in 0..d {
                g[pe + j] += dxt[j];
            }
        }
    }

    /// Next-token loss of a full sequence with a per-token supervision mask.
    ///
    /// `mask[i]` marks whether token `i` is predicted (from the prefix
    /// `tokens[..i]`); `mask[0]` must be false. Returns the loss and adds
    /// `weight ×` its gradient into `grads`.
    pub fn sequence_loss(
        &self,
        tokens: &[TokenId],
        mask: &LossMask,
        weight: f64,
        grads: Option<&mut Gradients>,
    ) -> Result<f64> {
        if tokens.len() != mask.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} tokens but mask of length {}",
                tokens.len(),
                mask.len()
            )));
        }
        if tokens.len() < 2 {
            return Err(Error::EmptyLossMask);
        }
        if mask.as_slice()[0] {
            return Err(Error::InvalidArgument("the first token cannot be supervised".into()));
        }
        let inputs = &tokens[..tokens.len() - 1];
        let targets = &tokens[1..];
        let shifted = LossMask::new(mask.as_slice()[1..].to_vec());
        let trace = self.forward_trace(inputs)?;
        let (loss, mut dlogits) = masked_nll(&trace.logits, targets, &shifted, self.cfg.vocab_size)?;
        if let Some(grads) = grads {
            if weight != 1.0 {
                dlogits.iter_mut().for_each(|g| *g *= weight);
            }
            self.backward(&trace, &dlogits, grads);
        }
        Ok(loss)
    }

    pub fn zero_grads(&self) -> Gradients {
        Gradients::zeros(self.params.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(seed: u64) -> ModelConfig {
        ModelConfig { n_layers: 2, d_model: 8, n_heads: 2, d_ff: 16, max_context: 16, vocab_size: 11, init_seed: seed }
    }

    #[test]
    fn init_is_deterministic() {
        let a = Transformer::<f32>::init(&tiny(3)).unwrap();
        let b = Transformer::<f32>::init(&tiny(3)).unwrap();
        assert_eq!(a.params(), b.params());
        let c = Transformer::<f32>::init(&tiny(4)).unwrap();
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn init_statistics() {
        let cfg = ModelConfig::desk(100, 1);
        let m = Transformer::<f64>::init(&cfg).unwrap();
        let emb = m.layout().tensor("tok_emb").unwrap().range();
        let xs = &m.params()[emb];
        let var = xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64;
        assert!((var.sqrt() - 0.02).abs() < 0.002);
        let out = m.layout().tensor("layer0.attn.out").unwrap().range();
        let ys = &m.params()[out];
        let var = ys.iter().map(|x| x * x).sum::<f64>() / ys.len() as f64;
        assert!((var.sqrt() - 0.01).abs() < 0.001);
        let g = m.layout().tensor("ln_f.g").unwrap().range();
        assert!(m.params()[g].iter().all(|&x| x == 1.0));
    }

    #[test]
    fn output_shape() {
        let m = Transformer::<f32>::init(&tiny(0)).unwrap();
        let logits = m.forward_logits(&[1, 4, 5, 6]).unwrap();
        assert_eq!(logits.len(), 4 * 11);
        assert!(logits.iter().all(|x| x.is_finite()));
        assert!(m.forward_logits(&[]).unwrap().is_empty());
    }

    #[test]
    fn context_overflow() {
        let m = Transformer::<f32>::init(&tiny(0)).unwrap();
        let toks = vec![1; 17];
        assert!(matches!(m.forward_logits(&toks), Err(Error::ContextOverflow { len: 17, max: 16 })));
        let mut cache = m.new_cache();
        m.extend(&mut cache, &[1; 16]).unwrap();
        assert!(matches!(m.extend(&mut cache, &[1]), Err(Error::ContextOverflow { .. })));
    }

    #[test]
    fn appending_leaves_earlier_logits_unchanged() {
        let m = Transformer::<f32>::init(&tiny(9)).unwrap();
        let v = 11;
        let short = m.forward_logits(&[1, 4, 7]).unwrap();
        let long = m.forward_logits(&[1, 4, 7, 9, 2]).unwrap();
        assert_eq!(&short[..], &long[..3 * v]);
    }

    #[test]
    fn cache_matches_full_forward_bitwise() {
        let m = Transformer::<f32>::init(&tiny(2)).unwrap();
        let v = 11;
        let toks = [1, 5, 6, 7, 3, 10, 2];
        let full = m.forward_logits(&toks).unwrap();
        let mut cache = m.new_cache();
        let first = m.extend(&mut cache, &toks[..3]).unwrap();
        assert_eq!(&first[..], &full[2 * v..3 * v]);
        for t in 3..toks.len() {
            let row = m.extend(&mut cache, &toks[t..t + 1]).unwrap();
            assert_eq!(&row[..], &full[t * v..(t + 1) * v], "position {t}");
        }
    }

    #[test]
    fn perturbing_later_token_is_causal() {
        let m = Transformer::<f64>::init(&tiny(5)).unwrap();
        let v = 11;
        let a = m.forward_logits(&[1, 4, 5, 6, 7]).unwrap();
        let b = m.forward_logits(&[1, 4, 5, 9, 7]).unwrap();
        assert_eq!(&a[..3 * v], &b[..3 * v]);
        assert_ne!(&a[3 * v..], &b[3 * v..]);
    }
}
