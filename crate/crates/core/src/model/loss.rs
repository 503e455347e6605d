use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-position supervision flags; `true` means the position is scored.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LossMask(Vec<bool>);

impl LossMask {
    pub fn new(flags: Vec<bool>) -> Self {
        LossMask(flags)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&m| m).count()
    }
}

/// Mean negative log-likelihood over the unmasked positions, and its
/// gradient with respect to the logits (zero on masked rows).
///
/// `logits` is row-major `[len × vocab]`; row `t` scores `targets[t]`.
pub fn masked_nll<S: Scalar>(
    logits: &[S],
    targets: &[u32],
    mask: &LossMask,
    vocab: usize,
) -> Result<(f64, Vec<f64>)> {
    let n = targets.len();
    if logits.len() != n * vocab || mask.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "logits {} / targets {} / mask {} with vocab {vocab}",
            logits.len(),
            n,
            mask.len()
        )));
    }
    let count = mask.count();
    if count == 0 {
        return Err(Error::EmptyLossMask);
    }
    let inv = 1.0 / count as f64;
    let mut grad = vec![0.0; n * vocab];
    let mut loss = 0.0;
    for t in 0..n {
        if !mask.as_slice()[t] {
            continue;
        }
        let target = targets[t] as usize;
        if target >= vocab {
            return Err(Error::ShapeMismatch(format!("target {target} outside vocabulary {vocab}")));
        }
        let row = &logits[t * vocab..(t + 1) * vocab];
        let max = row.iter().map(|x| x.f64()).fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for &x in row {
            z += (x.f64() - max).exp();
        }
        let log_z = z.ln() + max;
        loss += log_z - row[target].f64();
        let g = &mut grad[t * vocab..(t + 1) * vocab];
        for (gv, &x) in g.iter_mut().zip(row) {
            *gv = (x.f64() - log_z).exp() * inv;
        }
        g[target] -= inv;
    }
    Ok((loss * inv, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_vocab() {
        let logits = vec![0.0f32; 3 * 8];
        let mask = LossMask::new(vec![false, true, false]);
        let (loss, grad) = masked_nll(&logits, &[0, 3, 0], &mask, 8).unwrap();
        assert!((loss - 8f64.ln()).abs() < 1e-12);
        assert!(grad[..8].iter().all(|&g| g == 0.0));
        assert!(grad[16..].iter().all(|&g| g == 0.0));
        assert!((grad[8 + 3] - (1.0 / 8.0 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn all_masked_is_an_error() {
        let logits = vec![0.0f64; 2 * 4];
        let mask = LossMask::new(vec![false, false]);
        assert!(matches!(masked_nll(&logits, &[0, 1], &mask, 4), Err(Error::EmptyLossMask)));
    }

    #[test]
    fn masked_targets_do_not_matter() {
        let logits: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin()).collect();
        let mask = LossMask::new(vec![true, false, true]);
        let a = masked_nll(&logits, &[1, 2, 3], &mask, 4).unwrap();
        let b = masked_nll(&logits, &[1, 0, 3], &mask, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gradient_rows_sum_to_zero() {
        let logits: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        let mask = LossMask::new(vec![true, true]);
        let (_, grad) = masked_nll(&logits, &[4, 0], &mask, 5).unwrap();
        for row in grad.chunks(5) {
            assert!(row.iter().sum::<f64>().abs() < 1e-12);
        }
    }
}
