//! Scalar abstraction for the model math.
//!
//! Parameters and activations are stored in `S`; every reduction (dot
//! products, sums, norms) accumulates in `f64`, sequentially and in
//! ascending index order, then rounds back to `S`.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Size in bytes of the in-memory representation.
    const BYTES: usize;

    fn of(x: f64) -> Self;

    fn f64(self) -> f64;
}

impl Scalar for f32 {
    const BYTES: usize = 4;

    #[inline(always)]
    fn of(x: f64) -> Self {
        x as f32
    }

    #[inline(always)]
    fn f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const BYTES: usize = 8;

    #[inline(always)]
    fn of(x: f64) -> Self {
        x
    }

    #[inline(always)]
    fn f64(self) -> f64 {
        self
    }
}

/// `acc[j] += a * row[j]` for every `j`, in `f64`.
#[inline]
pub(crate) fn axpy<S: Scalar>(acc: &mut [f64], a: f64, row: &[S]) {
    debug_assert_eq!(acc.len(), row.len());
    for (o, &w) in acc.iter_mut().zip(row) {
        *o += a * w.f64();
    }
}

/// Sequential dot product with an `f64` accumulator.
#[inline]
pub(crate) fn dot<S: Scalar>(a: &[S], b: &[S]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        acc += x.f64() * y.f64();
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        assert_eq!(<f32 as Scalar>::of(0.5).f64(), 0.5);
        assert_eq!(<f64 as Scalar>::of(1e-300), 1e-300);
    }

    #[test]
    fn axpy_and_dot_accumulate_in_f64() {
        let mut acc = vec![0.0; 3];
        axpy(&mut acc, 2.0, &[1.0f32, 2.0, 3.0]);
        assert_eq!(acc, vec![2.0, 4.0, 6.0]);
        assert_eq!(dot(&[1.0f32, 2.0], &[3.0f32, 4.0]), 11.0);
    }
}
