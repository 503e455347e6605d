use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

/// Smallest reported p-value; anything below is clamped and flagged.
pub const P_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub p: f64,
    pub df: usize,
    pub mean_diff: f64,
    pub n: usize,
    /// True when the two-sided p fell below [`P_FLOOR`].
    pub p_clamped: bool,
}

/// Two-sided paired t-test on the differences `d_i = a_i − b_i`.
pub fn paired_t_test(diffs: &[f64]) -> Result<TTestResult> {
    let n = diffs.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let lo = diffs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = diffs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidArgument("differences must be finite".into()));
    }
    if hi - lo <= f64::EPSILON * lo.abs().max(hi.abs()) {
        return Err(Error::DegenerateVariance);
    }
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let t = mean / (sd / (n as f64).sqrt());
    let df = n - 1;
    let p = student_t_two_sided(t, df as f64);
    let p_clamped = p < P_FLOOR;
    Ok(TTestResult { t, p: if p_clamped { P_FLOOR } else { p.min(1.0) }, df, mean_diff: mean, n, p_clamped })
}

/// `P(|T| ≥ |t|)` for Student's t with `df` degrees of freedom,
/// via the regularized incomplete beta `I_{df/(df+t²)}(df/2, 1/2)`.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    let x = df / (df + t * t);
    beta_reg(df / 2.0, 0.5, x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_two_three() {
        let r = paired_t_test(&[1.0, 2.0, 3.0]).unwrap();
        assert!((r.t - 2.0 * 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.df, 2);
        assert_eq!(r.mean_diff, 2.0);
        // df = 2 has a closed form: p = 1 − t/√(t²+2).
        let closed = 1.0 - r.t / (r.t * r.t + 2.0).sqrt();
        assert!((r.p - closed).abs() < 1e-12);
        assert!(!r.p_clamped);
    }

    #[test]
    fn sign_symmetry() {
        let d = [0.3, -0.1, 0.8, 0.25, 0.4];
        let neg: Vec<f64> = d.iter().map(|x| -x).collect();
        let a = paired_t_test(&d).unwrap();
        let b = paired_t_test(&neg).unwrap();
        assert_eq!(a.t, -b.t);
        assert_eq!(a.p, b.p);
    }

    #[test]
    fn one_degree_of_freedom_is_cauchy() {
        let t: f64 = 1.7;
        let p = student_t_two_sided(t, 1.0);
        let closed = 1.0 - 2.0 * t.atan() / std::f64::consts::PI;
        assert!((p - closed).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_short() {
        assert!(matches!(paired_t_test(&[0.0, 0.0, 0.0]), Err(Error::DegenerateVariance)));
        assert!(matches!(paired_t_test(&[1.5, 1.5]), Err(Error::DegenerateVariance)));
        assert!(matches!(paired_t_test(&[1.0]), Err(Error::InsufficientSamples { .. })));
    }

    #[test]
    fn tiny_p_is_clamped() {
        let d: Vec<f64> = (0..40).map(|i| 100.0 + 1e-3 * (i % 2) as f64).collect();
        let r = paired_t_test(&d).unwrap();
        assert!(r.p_clamped);
        assert_eq!(r.p, P_FLOOR);
    }
}
