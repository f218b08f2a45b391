use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type the models, metrics and labels are generic over.
///
/// Implemented for `f32` and `f64`. `Display` and `FromStr` are required so
/// checkpoints can be written and read back bit-exactly.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Debug + Display + FromStr + Default + Send + Sync + 'static
{
    #[inline]
    fn cast(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count is representable")
    }

    #[inline]
    fn two() -> Self {
        Self::one() + Self::one()
    }

    #[inline]
    fn half() -> Self {
        Self::cast(0.5)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[inline]
pub fn sigmoid<F: Scalar>(z: F) -> F {
    // Split on sign so exp never overflows.
    if z >= F::zero() {
        F::one() / (F::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (F::one() + e)
    }
}

/// Sum with a fixed pairwise reduction tree.
///
/// The result depends only on the order of `xs`, never on how work is split,
/// and the rounding error grows as O(log n) instead of O(n).
pub fn pairwise_sum<F: Scalar>(xs: &[F]) -> F {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().fold(F::zero(), |acc, &x| acc + x);
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0_f64), 0.5);
        assert!(sigmoid(-800.0_f64) >= 0.0);
        assert_eq!(sigmoid(800.0_f64), 1.0);
        assert!(sigmoid(-50.0_f32) > 0.0);
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 499_500.0);
        assert_eq!(pairwise_sum::<f32>(&[]), 0.0);
    }
}
