//! Arithmetic shared by the exact (rational) and floating-point paths.
//!
//! The oracle and theory code is generic over [`Scalar`] so the same
//! routine can be run with [`BigRational`] when every input is rational,
//! and with `f64` otherwise.

use std::cmp::Ordering;
use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
pub use statrs::function::gamma::ln_gamma;

pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// True for the rational path.
    const EXACT: bool;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_i64(v: i64) -> Self;
    fn to_f64(&self) -> f64;
    fn total_cmp(&self, other: &Self) -> Ordering;

    /// Lift a value known both approximately and (possibly) exactly.
    /// Returns `None` on the exact path when no exact value exists.
    fn lift(approx: f64, exact: Option<BigRational>) -> Option<Self>;

    fn is_zero(&self) -> bool {
        *self == Self::zero()
    }

    fn abs_f64(&self) -> f64 {
        self.to_f64().abs()
    }

    fn sum<I: IntoIterator<Item = Self>>(iter: I) -> Self {
        iter.into_iter().fold(Self::zero(), |acc, x| acc + x)
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;

    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }
    fn to_f64(&self) -> f64 {
        ratio_to_f64(self)
    }
    fn total_cmp(&self, other: &Self) -> Ordering {
        self.cmp(other)
    }
    fn lift(_approx: f64, exact: Option<BigRational>) -> Option<Self> {
        exact
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn abs_f64(&self) -> f64 {
        ratio_to_f64(&self.abs())
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn total_cmp(&self, other: &Self) -> Ordering {
        f64::total_cmp(self, other)
    }
    fn lift(approx: f64, _exact: Option<BigRational>) -> Option<Self> {
        Some(approx)
    }

    /// Neumaier compensated summation.
    fn sum<I: IntoIterator<Item = Self>>(iter: I) -> Self {
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for x in iter {
            let t = sum + x;
            if sum.abs() >= x.abs() {
                comp += (sum - t) + x;
            } else {
                comp += (x - t) + sum;
            }
            sum = t;
        }
        sum + comp
    }
}

/// Converts a big rational to the nearest-ish `f64`, also when numerator
/// and denominator individually overflow.
pub fn ratio_to_f64(r: &BigRational) -> f64 {
    if let (Some(n), Some(d)) = (r.numer().to_f64(), r.denom().to_f64()) {
        if n.is_finite() && d.is_finite() && d != 0.0 {
            return n / d;
        }
    }
    let nb = r.numer().bits() as i64;
    let db = r.denom().bits() as i64;
    // Rescale both to roughly 60 significant bits before dividing.
    let shift_n = (nb - 60).max(0);
    let shift_d = (db - 60).max(0);
    let n = (r.numer() >> shift_n as usize).to_f64().unwrap_or(0.0);
    let d = (r.denom() >> shift_d as usize).to_f64().unwrap_or(1.0);
    (n / d) * 2f64.powi((shift_n - shift_d) as i32)
}

/// `p/q` as a big rational.
pub fn rational(p: i64, q: i64) -> BigRational {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

/// Binomial coefficient as a big integer.
pub fn binomial_big(n: u64, k: u64) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

/// `ln k!`, from the exact product while `k!` is representable.
pub fn ln_factorial(k: usize) -> f64 {
    if k <= 170 {
        (1..=k).map(|i| i as f64).product::<f64>().ln()
    } else {
        ln_gamma(k as f64 + 1.0)
    }
}

/// `ln C(n, k)` for integers `k <= n`.
pub fn ln_binomial(n: usize, k: usize) -> f64 {
    if n <= 60 {
        return binomial_big(n as u64, k as u64).to_f64().unwrap_or(f64::INFINITY).ln();
    }
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let xs = [1.0, 1e-16, 1e-16, -1.0];
        assert_eq!(<f64 as Scalar>::sum(xs), 2e-16);
    }

    #[test]
    fn huge_rationals_convert() {
        let big = BigInt::from(3) * (BigInt::one() << 2000usize);
        let r = BigRational::new(big.clone(), big * BigInt::from(4));
        assert_eq!(ratio_to_f64(&r), 0.25);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial_big(6, 3), BigInt::from(20));
        assert_eq!(binomial_big(3, 5), BigInt::zero());
        assert!((ln_binomial(6, 3) - 20f64.ln()).abs() < 1e-12);
        assert!((ln_binomial(200, 100) - (ln_factorial(200) - 2.0 * ln_factorial(100))).abs() < 1e-9);
    }
}
