//! Row-level kernels shared by the full and incremental forward passes.
//!
//! Both passes call these in the same order on the same inputs, which is
//! what makes cached decoding bit-identical to recomputation.

use crate::scalar::{axpy, dot, Scalar};

pub(crate) const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// `out = x · W` for a row vector `x` and row-major `W [n_in × n_out]`.
pub(crate) fn linear<S: Scalar>(x: &[S], w: &[S], n_out: usize, acc: &mut Vec<f64>, out: &mut [S]) {
    acc.clear();
    acc.resize(n_out, 0.0);
    for (k, &xk) in x.iter().enumerate() {
        axpy(acc, xk.f64(), &w[k * n_out..(k + 1) * n_out]);
    }
    for (o, &a) in out.iter_mut().zip(acc.iter()) {
        *o = S::of(a);
    }
}

/// Normalizes `x`, writing `xhat` and the affine output. Returns `1/σ`.
pub(crate) fn layer_norm<S: Scalar>(x: &[S], g: &[S], b: &[S], xhat: &mut [S], out: &mut [S]) -> f64 {
    let n = x.len() as f64;
    let mut mean = 0.0;
    for &v in x {
        mean += v.f64();
    }
    mean /= n;
    let mut var = 0.0;
    for &v in x {
        let c = v.f64() - mean;
        var += c * c;
    }
    var /= n;
    let rstd = 1.0 / (var + LN_EPS).sqrt();
    for i in 0..x.len() {
        let h = (x[i].f64() - mean) * rstd;
        xhat[i] = S::of(h);
        out[i] = S::of(h * g[i].f64() + b[i].f64());
    }
    rstd
}

/// Backward of [`layer_norm`] for one row. Accumulates into `dg`, `db` and
/// adds the input gradient into `dx`.
pub(crate) fn layer_norm_backward<S: Scalar>(
    dout: &[f64],
    xhat: &[S],
    g: &[S],
    rstd: f64,
    dg: &mut [f64],
    db: &mut [f64],
    dx: &mut [f64],
) {
    let n = dout.len() as f64;
    let mut mean_dxhat = 0.0;
    let mut mean_dxhat_xhat = 0.0;
    for i in 0..dout.len() {
        let dxh = dout[i] * g[i].f64();
        mean_dxhat += dxh;
        mean_dxhat_xhat += dxh * xhat[i].f64();
        dg[i] += dout[i] * xhat[i].f64();
        db[i] += dout[i];
    }
    mean_dxhat /= n;
    mean_dxhat_xhat /= n;
    for i in 0..dout.len() {
        let dxh = dout[i] * g[i].f64();
        dx[i] += rstd * (dxh - mean_dxhat - xhat[i].f64() * mean_dxhat_xhat);
    }
}

#[inline]
pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

#[inline]
pub(crate) fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// In-place numerically stable softmax.
pub fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in z.iter_mut() {
        *v /= total;
    }
}

/// Causal attention for a single query row and a single head.
///
/// `qkv` holds `n` rows of width `stride`; the head's keys start at column
/// `k_lo` and its values at `v_lo`. Writes the `n` attention weights into
/// `probs` and the head's context vector into `ctx`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn attend<S: Scalar>(
    q: &[S],
    qkv: &[S],
    n: usize,
    stride: usize,
    k_lo: usize,
    v_lo: usize,
    scale: f64,
    probs: &mut Vec<f64>,
    acc: &mut Vec<f64>,
    ctx: &mut [S],
) {
    let hd = q.len();
    probs.clear();
    for s in 0..n {
        let k = &qkv[s * stride + k_lo..s * stride + k_lo + hd];
        probs.push(dot(q, k) * scale);
    }
    softmax_in_place(probs);
    acc.clear();
    acc.resize(hd, 0.0);
    for s in 0..n {
        axpy(acc, probs[s], &qkv[s * stride + v_lo..s * stride + v_lo + hd]);
    }
    for (c, &a) in ctx.iter_mut().zip(acc.iter()) {
        *c = S::of(a);
    }
}
