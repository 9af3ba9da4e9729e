//! Critical offspring distributions and the exact law of their partial sums.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{self, binomial_big, ln_binomial, ln_factorial, ratio_to_f64};

const MEAN_TOLERANCE: f64 = 1e-9;
const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Geometric on {0, 1, ...} with p_k = 2^-(k+1); uniform ordered trees.
    GeometricHalf,
    /// Poisson(1); uniform labelled trees.
    PoissonOne,
    /// Binomial(2, 1/2); uniform binary trees (left/right children).
    BinomialTwoHalf,
    /// p_0 = 1 - 1/r, p_r = 1/r; full r-ary trees.
    FullRary(u32),
    /// Finite table.
    Custom,
}

#[derive(Debug, Clone)]
struct Table {
    approx: Vec<f64>,
    exact: Option<Vec<BigRational>>,
    sampler: Option<WeightedIndex<f64>>,
}

/// An offspring distribution with mean 1 and finite positive variance.
///
/// Immutable after construction; sampling takes an external random source.
#[derive(Debug, Clone)]
pub struct OffspringDistribution {
    family: Family,
    name: String,
    table: Option<Table>,
    variance: f64,
    variance_exact: Option<BigRational>,
    span: u32,
    third_cumulant: Option<f64>,
}

impl OffspringDistribution {
    pub fn geometric_half() -> Self {
        Self {
            family: Family::GeometricHalf,
            name: "geometric_half".into(),
            table: None,
            variance: 2.0,
            variance_exact: Some(BigRational::from_integer(2.into())),
            span: 1,
            third_cumulant: Some(6.0),
        }
    }

    pub fn poisson_one() -> Self {
        Self {
            family: Family::PoissonOne,
            name: "poisson_one".into(),
            table: None,
            variance: 1.0,
            variance_exact: Some(BigRational::one()),
            span: 1,
            third_cumulant: Some(1.0),
        }
    }

    pub fn binomial_two_half() -> Self {
        let table = vec![rat(1, 4), rat(1, 2), rat(1, 4)];
        let mut d = Self::from_rational_table(table).expect("valid table");
        d.family = Family::BinomialTwoHalf;
        d.name = "binomial_two_half".into();
        d
    }

    pub fn full_rary(r: u32) -> Result<Self> {
        if r < 2 {
            return Err(Error::InvalidArgument(format!("full r-ary needs r >= 2, got {r}")));
        }
        let mut table = vec![BigRational::zero(); r as usize + 1];
        table[0] = rat(r as i64 - 1, r as i64);
        table[r as usize] = rat(1, r as i64);
        let mut d = Self::from_rational_table(table)?;
        d.family = Family::FullRary(r);
        d.name = format!("full_rary:{r}");
        Ok(d)
    }

    /// Builds a distribution from an exact table `p_0, p_1, ...`; all
    /// invariants are checked in exact arithmetic.
    pub fn from_rational_table(table: Vec<BigRational>) -> Result<Self> {
        if table.iter().any(|p| p.is_negative()) {
            return Err(Error::InvalidTable("negative probability".into()));
        }
        let total: BigRational = table.iter().cloned().sum();
        if !total.is_one() {
            return Err(Error::InvalidTable(format!("probabilities sum to {total}")));
        }
        let mean: BigRational = table
            .iter()
            .enumerate()
            .map(|(k, p)| p * BigRational::from_integer(k.into()))
            .sum();
        if !mean.is_one() {
            return Err(Error::NonCritical { mean: ratio_to_f64(&mean) });
        }
        let second: BigRational = table
            .iter()
            .enumerate()
            .map(|(k, p)| p * BigRational::from_integer((k * k).into()))
            .sum();
        let variance = second - BigRational::one();
        if variance.is_zero() {
            return Err(Error::ZeroVariance);
        }
        if table.first().map_or(true, |p| p.is_zero()) {
            return Err(Error::MissingZero);
        }
        let approx: Vec<f64> = table.iter().map(ratio_to_f64).collect();
        let mut d = Self::assemble(approx, Some(table))?;
        d.variance_exact = Some(variance.clone());
        d.variance = ratio_to_f64(&variance);
        Ok(d)
    }

    /// Builds a distribution from a floating-point table, checking
    /// criticality to within 1e-9.
    pub fn from_table(table: &[f64]) -> Result<Self> {
        if table.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidTable("probabilities must be finite and nonnegative".into()));
        }
        let total: f64 = <f64 as scalar::Scalar>::sum(table.iter().copied());
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidTable(format!("probabilities sum to {total}")));
        }
        let mean = <f64 as scalar::Scalar>::sum(table.iter().enumerate().map(|(k, p)| k as f64 * p));
        if (mean - 1.0).abs() > MEAN_TOLERANCE {
            return Err(Error::NonCritical { mean });
        }
        let d = Self::assemble(table.to_vec(), None)?;
        if d.variance <= 0.0 {
            return Err(Error::ZeroVariance);
        }
        if table.first().map_or(true, |p| *p == 0.0) {
            return Err(Error::MissingZero);
        }
        Ok(d)
    }

    /// Skips every invariant check. Only for exercising the sampler layer on
    /// degenerate tables.
    pub fn from_table_unchecked(table: &[f64]) -> Self {
        Self::assemble(table.to_vec(), None).unwrap_or_else(|_| Self {
            family: Family::Custom,
            name: "custom".into(),
            table: Some(Table {
                approx: table.to_vec(),
                exact: None,
                sampler: WeightedIndex::new(table).ok(),
            }),
            variance: 0.0,
            variance_exact: None,
            span: 1,
            third_cumulant: None,
        })
    }

    fn assemble(approx: Vec<f64>, exact: Option<Vec<BigRational>>) -> Result<Self> {
        let mut approx = approx;
        while approx.len() > 1 && approx.last() == Some(&0.0) {
            approx.pop();
        }
        let exact = exact.map(|mut e| {
            e.truncate(approx.len());
            e
        });
        let mean: f64 = approx.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        let variance =
            <f64 as scalar::Scalar>::sum(approx.iter().enumerate().map(|(k, p)| (k as f64 - mean).powi(2) * p));
        let third =
            <f64 as scalar::Scalar>::sum(approx.iter().enumerate().map(|(k, p)| (k as f64 - mean).powi(3) * p));
        let span = approx
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, p)| **p > 0.0)
            .fold(0u32, |g, (k, _)| g.gcd(&(k as u32)))
            .max(1);
        let sampler = WeightedIndex::new(&approx)
            .map_err(|e| Error::InvalidTable(e.to_string()))?;
        let name = format!(
            "custom:{}",
            approx
                .iter()
                .enumerate()
                .filter(|(_, p)| **p > 0.0)
                .map(|(k, p)| match &exact {
                    Some(e) => format!("{k}={}", e[k]),
                    None => format!("{k}={p}"),
                })
                .collect::<Vec<_>>()
                .join(",")
        );
        Ok(Self {
            family: Family::Custom,
            name,
            table: Some(Table { approx, exact, sampler: Some(sampler) }),
            variance,
            variance_exact: None,
            span,
            third_cumulant: Some(third),
        })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn mean(&self) -> f64 {
        1.0
    }

    /// σ² = Var ξ.
    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn variance_exact(&self) -> Option<&BigRational> {
        self.variance_exact.as_ref()
    }

    /// σ² on the requested arithmetic path.
    pub fn variance_in<S: scalar::Scalar>(&self) -> Option<S> {
        S::lift(self.variance, self.variance_exact.clone())
    }

    /// gcd of the positive support.
    pub fn span(&self) -> u32 {
        self.span
    }

    /// Reserved; no computation in this crate consumes it.
    pub fn third_cumulant(&self) -> Option<f64> {
        self.third_cumulant
    }

    /// Largest k with p_k > 0, if the support is finite.
    pub fn max_degree(&self) -> Option<usize> {
        self.table.as_ref().map(|t| t.approx.len() - 1)
    }

    /// True when every p_k is rational and known exactly.
    pub fn is_rational(&self) -> bool {
        match self.family {
            Family::GeometricHalf => true,
            Family::PoissonOne => false,
            _ => self.table.as_ref().is_some_and(|t| t.exact.is_some()),
        }
    }

    pub fn pmf(&self, k: usize) -> f64 {
        match &self.family {
            Family::GeometricHalf => 0.5f64.powi(k as i32 + 1),
            Family::PoissonOne => (-1.0 - ln_factorial(k)).exp(),
            _ => self.table.as_ref().and_then(|t| t.approx.get(k).copied()).unwrap_or(0.0),
        }
    }

    pub fn pmf_exact(&self, k: usize) -> Option<BigRational> {
        match &self.family {
            Family::GeometricHalf => {
                Some(BigRational::new(BigInt::one(), BigInt::one() << (k + 1)))
            }
            Family::PoissonOne => None,
            _ => {
                let exact = self.table.as_ref()?.exact.as_ref()?;
                Some(exact.get(k).cloned().unwrap_or_else(BigRational::zero))
            }
        }
    }

    /// p_k on the requested arithmetic path.
    pub fn pmf_in<S: scalar::Scalar>(&self, k: usize) -> Result<S> {
        let exact = if S::EXACT { self.pmf_exact(k) } else { None };
        S::lift(self.pmf(k), exact).ok_or_else(|| Error::NotRational(self.name.clone()))
    }

    /// P(S_n = m) with S_n a sum of n i.i.d. copies; `n = 0` gives the
    /// point mass at 0.
    pub fn sum_pmf(&self, n: usize, m: usize) -> f64 {
        if n == 0 {
            return if m == 0 { 1.0 } else { 0.0 };
        }
        let (nf, mf) = (n as f64, m as f64);
        match &self.family {
            Family::PoissonOne => (-nf + mf * nf.ln() - ln_factorial(m)).exp(),
            Family::BinomialTwoHalf => {
                if m > 2 * n {
                    0.0
                } else {
                    (ln_binomial(2 * n, m) - 2.0 * nf * std::f64::consts::LN_2).exp()
                }
            }
            Family::GeometricHalf => {
                (ln_binomial(n + m - 1, m) - (nf + mf) * std::f64::consts::LN_2).exp()
            }
            Family::FullRary(r) => {
                let r = *r as usize;
                if m % r != 0 || m / r > n {
                    return 0.0;
                }
                let j = m / r;
                let q = 1.0 / r as f64;
                let jf = j as f64;
                (ln_binomial(n, j) + jf * q.ln() + (nf - jf) * (1.0 - q).ln()).exp()
            }
            Family::Custom => {
                let approx = &self.table.as_ref().expect("custom has a table").approx;
                convolution_power(approx, n, m)[m]
            }
        }
    }

    /// P(S_n = m) on the requested arithmetic path.
    pub fn sum_pmf_in<S: scalar::Scalar>(&self, n: usize, m: usize) -> Result<S> {
        if !S::EXACT {
            return Ok(S::lift(self.sum_pmf(n, m), None).expect("float lift"));
        }
        let exact = self.sum_pmf_exact(n, m)?;
        Ok(S::lift(0.0, Some(exact)).expect("exact lift"))
    }

    /// P(S_n = m) in exact rational arithmetic.
    pub fn sum_pmf_exact(&self, n: usize, m: usize) -> Result<BigRational> {
        if n == 0 {
            return Ok(if m == 0 { BigRational::one() } else { BigRational::zero() });
        }
        let (n64, m64) = (n as u64, m as u64);
        match &self.family {
            Family::PoissonOne => Err(Error::NotRational(self.name.clone())),
            Family::BinomialTwoHalf => Ok(BigRational::new(
                binomial_big(2 * n64, m64),
                BigInt::one() << (2 * n),
            )),
            Family::GeometricHalf => Ok(BigRational::new(
                binomial_big(n64 + m64 - 1, m64),
                BigInt::one() << (n + m),
            )),
            Family::FullRary(r) => {
                let r = *r as u64;
                if m64 % r != 0 || m64 / r > n64 {
                    return Ok(BigRational::zero());
                }
                let j = m64 / r;
                let num = binomial_big(n64, j) * BigInt::from(r - 1).pow((n64 - j) as u32);
                Ok(BigRational::new(num, BigInt::from(r).pow(n64 as u32)))
            }
            Family::Custom => {
                let exact = self
                    .table
                    .as_ref()
                    .and_then(|t| t.exact.as_ref())
                    .ok_or_else(|| Error::NotRational(self.name.clone()))?;
                Ok(convolution_power(exact, n, m).swap_remove(m))
            }
        }
    }

    /// Draws one copy of ξ.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match &self.family {
            Family::GeometricHalf => {
                // failures before the first success of a fair coin
                let bits: u64 = rng.gen();
                if bits != 0 {
                    bits.trailing_zeros() as usize
                } else {
                    64 + self.sample(rng)
                }
            }
            Family::PoissonOne => {
                let poisson = rand_distr::Poisson::new(1.0).expect("valid rate");
                poisson.sample(rng) as usize
            }
            _ => {
                let table = self.table.as_ref().expect("table family");
                match &table.sampler {
                    Some(s) => s.sample(rng),
                    None => 0,
                }
            }
        }
    }

    /// Draws from the size-biased law P(ξ̂ = k) = k p_k.
    pub fn sample_size_biased<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match &self.family {
            // k e^-1 / k! = e^-1 / (k-1)!
            Family::PoissonOne => 1 + self.sample(rng),
            // k 2^-(k+1): one plus a negative binomial(2, 1/2)
            Family::GeometricHalf => 1 + self.sample(rng) + self.sample(rng),
            Family::FullRary(r) => *r as usize,
            _ => {
                let approx = &self.table.as_ref().expect("table family").approx;
                let biased: Vec<f64> = approx.iter().enumerate().map(|(k, p)| k as f64 * p).collect();
                WeightedIndex::new(&biased).expect("critical table").sample(rng)
            }
        }
    }
}

impl fmt::Display for OffspringDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl FromStr for OffspringDistribution {
    type Err = Error;

    /// Accepts `geometric_half`, `poisson_one`, `binomial_two_half`,
    /// `full_rary:r` and `custom:0=1/4,1=1/2,2=1/4` (decimals are read as
    /// exact rationals).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "geometric_half" => return Ok(Self::geometric_half()),
            "poisson_one" => return Ok(Self::poisson_one()),
            "binomial_two_half" => return Ok(Self::binomial_two_half()),
            _ => {}
        }
        if let Some(r) = s.strip_prefix("full_rary:").or_else(|| s.strip_prefix("full_rary")) {
            let r = r
                .trim_start_matches(['(', ':'])
                .trim_end_matches(')')
                .parse::<u32>()
                .map_err(|e| Error::Parse(format!("full_rary arity: {e}")))?;
            return Self::full_rary(r);
        }
        if let Some(body) = s.strip_prefix("custom:") {
            let mut entries = Vec::new();
            for item in body.split(',').filter(|x| !x.trim().is_empty()) {
                let (k, p) = item
                    .split_once('=')
                    .ok_or_else(|| Error::Parse(format!("expected k=p, got `{item}`")))?;
                let k: usize = k.trim().parse().map_err(|e| Error::Parse(format!("index `{k}`: {e}")))?;
                entries.push((k, p.trim().to_string()));
            }
            let len = entries.iter().map(|(k, _)| k + 1).max().unwrap_or(0);
            let exact: Option<Vec<(usize, BigRational)>> = entries
                .iter()
                .map(|(k, p)| parse_rational(p).map(|r| (*k, r)))
                .collect();
            return match exact {
                Some(pairs) => {
                    let mut table = vec![BigRational::zero(); len];
                    for (k, p) in pairs {
                        table[k] += p;
                    }
                    Self::from_rational_table(table)
                }
                None => {
                    let mut table = vec![0.0; len];
                    for (k, p) in &entries {
                        table[*k] += p
                            .parse::<f64>()
                            .map_err(|e| Error::Parse(format!("probability `{p}`: {e}")))?;
                    }
                    Self::from_table(&table)
                }
            };
        }
        Err(Error::Parse(format!("unknown distribution `{s}`")))
    }
}

fn rat(p: i64, q: i64) -> BigRational {
    crate::scalar::rational(p, q)
}

/// Parses `p/q`, an integer, or a plain decimal as an exact rational.
pub fn parse_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().ok()?;
        let q: BigInt = q.trim().parse().ok()?;
        if q.is_zero() {
            return None;
        }
        return Some(BigRational::new(p, q));
    }
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if !frac.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int}{frac}");
    let num: BigInt = digits.parse().ok()?;
    Some(BigRational::new(num, BigInt::from(10).pow(frac.len() as u32)))
}

/// Coefficients 0..=m of the n-th convolution power of `pmf`, by repeated
/// squaring with every intermediate truncated at m.
fn convolution_power<S: scalar::Scalar>(pmf: &[S], n: usize, m: usize) -> Vec<S> {
    let truncate = |v: &[S]| -> Vec<S> {
        let mut out: Vec<S> = v.iter().take(m + 1).cloned().collect();
        out.resize(m + 1, S::zero());
        out
    };
    let mul = |a: &[S], b: &[S]| -> Vec<S> {
        let mut out = vec![S::zero(); m + 1];
        for (i, x) in a.iter().enumerate() {
            if x.is_zero() {
                continue;
            }
            for (j, y) in b.iter().enumerate().take(m + 1 - i) {
                if !y.is_zero() {
                    out[i + j] = out[i + j].clone() + x.clone() * y.clone();
                }
            }
        }
        out
    };
    let mut result = vec![S::zero(); m + 1];
    result[0] = S::one();
    let mut base = truncate(pmf);
    let mut e = n;
    while e > 0 {
        if e & 1 == 1 {
            result = mul(&result, &base);
        }
        e >>= 1;
        if e > 0 {
            base = mul(&base, &base);
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn named() -> Vec<OffspringDistribution> {
        vec![
            OffspringDistribution::geometric_half(),
            OffspringDistribution::poisson_one(),
            OffspringDistribution::binomial_two_half(),
            OffspringDistribution::full_rary(2).unwrap(),
            OffspringDistribution::full_rary(3).unwrap(),
        ]
    }

    #[test]
    fn named_families() {
        let g = OffspringDistribution::geometric_half();
        assert_eq!((g.variance(), g.span()), (2.0, 1));
        let b = OffspringDistribution::binomial_two_half();
        assert_eq!((b.variance(), b.span()), (0.5, 1));
        let f2 = OffspringDistribution::full_rary(2).unwrap();
        assert_eq!((f2.variance(), f2.span()), (1.0, 2));
        let f3 = OffspringDistribution::full_rary(3).unwrap();
        assert_eq!((f3.variance(), f3.span()), (2.0, 3));
        assert_eq!(f3.third_cumulant(), Some(2.0));
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(matches!(
            OffspringDistribution::from_table(&[0.5, 0.0, 0.0, 0.5]),
            Err(Error::NonCritical { .. })
        ));
        assert!(matches!(
            "custom:1=1".parse::<OffspringDistribution>(),
            Err(Error::ZeroVariance)
        ));
        assert!(matches!(
            "custom:0=1/2,1=1/4,2=1/4".parse::<OffspringDistribution>(),
            Err(Error::NonCritical { .. })
        ));
        assert!(OffspringDistribution::full_rary(1).is_err());
    }

    #[test]
    fn zero_variance_rejected() {
        let err = OffspringDistribution::from_rational_table(vec![rat(0, 1), rat(1, 1)]).unwrap_err();
        assert_eq!(err, Error::ZeroVariance);
        assert_eq!(OffspringDistribution::from_table(&[0.0, 1.0]).unwrap_err(), Error::ZeroVariance);
        assert_eq!(
            OffspringDistribution::from_table(&[0.0, 1.0, 0.0]).unwrap_err(),
            Error::ZeroVariance
        );
    }

    #[test]
    fn parses_custom_tables_exactly() {
        let d: OffspringDistribution = "custom:0=0.25,1=0.5,2=0.25".parse().unwrap();
        assert!(d.is_rational());
        assert_eq!(d.pmf_exact(1), Some(rat(1, 2)));
        assert_eq!(d.variance_exact(), Some(&rat(1, 2)));
        let d: OffspringDistribution = "custom:0=1/3,1=1/3,2=1/3".parse().unwrap();
        assert_eq!(d.variance_exact(), Some(&rat(2, 3)));
        let d: OffspringDistribution = "custom:0=0.5,2=5e-1".parse().unwrap();
        assert!(!d.is_rational());
        assert_eq!(d.span(), 2);
        assert_eq!("full_rary:3".parse::<OffspringDistribution>().unwrap().span(), 3);
    }

    #[test]
    fn pmf_values() {
        assert_eq!(OffspringDistribution::binomial_two_half().pmf(1), 0.5);
        assert!((OffspringDistribution::poisson_one().pmf(0) - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert_eq!(OffspringDistribution::full_rary(3).unwrap().pmf(1), 0.0);
        assert_eq!(OffspringDistribution::geometric_half().pmf_exact(2), Some(rat(1, 8)));
        assert_eq!(OffspringDistribution::poisson_one().pmf_exact(0), None);
    }

    #[test]
    fn sum_pmf_examples() {
        let b = OffspringDistribution::binomial_two_half();
        assert_eq!(b.sum_pmf_exact(2, 1).unwrap(), rat(1, 4));
        assert!((b.sum_pmf(2, 1) - 0.25).abs() < 1e-15);
        for d in named() {
            for m in 0..6 {
                assert!((d.sum_pmf(1, m) - d.pmf(m)).abs() < 1e-14, "{d} {m}");
            }
        }
        let p = OffspringDistribution::poisson_one();
        let expected = (-10f64).exp() * 10f64.powi(9) / 362_880.0;
        assert!((p.sum_pmf(10, 9) - expected).abs() < 1e-15);
        assert!(matches!(p.sum_pmf_exact(2, 1), Err(Error::NotRational(_))));
    }

    #[test]
    fn sum_pmf_total_mass() {
        for d in named() {
            for n in [1usize, 2, 5, 17, 50] {
                let upper = match d.max_degree() {
                    Some(k) => k * n,
                    None => 40 * n + 200,
                };
                let total = <f64 as scalar::Scalar>::sum((0..=upper).map(|m| d.sum_pmf(n, m)));
                assert!((total - 1.0).abs() < 1e-10, "{d} n={n} total={total}");
            }
        }
    }

    #[test]
    fn full_binary_sums_are_even() {
        let d = OffspringDistribution::full_rary(2).unwrap();
        for n in 1..12 {
            for m in (1..2 * n).step_by(2) {
                assert_eq!(d.sum_pmf(n, m), 0.0);
                assert!(d.sum_pmf_exact(n, m).unwrap().is_zero());
            }
        }
    }

    #[test]
    fn closed_forms_match_brute_convolution() {
        for d in [
            OffspringDistribution::poisson_one(),
            OffspringDistribution::binomial_two_half(),
            OffspringDistribution::geometric_half(),
        ] {
            let pmf: Vec<f64> = (0..=40).map(|k| d.pmf(k)).collect();
            let mut acc = vec![0.0; 41];
            acc[0] = 1.0;
            for n in 1..=20 {
                let mut next = vec![0.0; 41];
                for (i, a) in acc.iter().enumerate() {
                    for (j, p) in pmf.iter().enumerate().take(41 - i) {
                        next[i + j] += a * p;
                    }
                }
                acc = next;
                for (m, brute) in acc.iter().enumerate() {
                    assert!((d.sum_pmf(n, m) - brute).abs() < 1e-12, "{d} n={n} m={m}");
                }
            }
        }
    }

    #[test]
    fn exact_closed_forms_match_exact_convolution() {
        for d in [
            OffspringDistribution::binomial_two_half(),
            OffspringDistribution::full_rary(3).unwrap(),
        ] {
            let table: Vec<BigRational> = (0..=d.max_degree().unwrap()).map(|k| d.pmf_exact(k).unwrap()).collect();
            for n in 1..=8 {
                for m in 0..=12 {
                    assert_eq!(convolution_power(&table, n, m)[m], d.sum_pmf_exact(n, m).unwrap());
                }
            }
        }
        let g = OffspringDistribution::geometric_half();
        let table: Vec<BigRational> = (0..=12).map(|k| g.pmf_exact(k).unwrap()).collect();
        for n in 1..=6 {
            for m in 0..=12 {
                assert_eq!(convolution_power(&table, n, m)[m], g.sum_pmf_exact(n, m).unwrap());
            }
        }
    }

    #[test]
    fn sampling_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let draws = 1_000_000;
        let d = OffspringDistribution::full_rary(2).unwrap();
        let zeros = (0..draws).filter(|_| d.sample(&mut rng) == 0).count();
        let freq = zeros as f64 / draws as f64;
        assert!((freq - 0.5).abs() < 3.0 * (0.25f64 / draws as f64).sqrt());

        let p = OffspringDistribution::poisson_one();
        let total: usize = (0..draws).map(|_| p.sample(&mut rng)).sum();
        assert!((total as f64 / draws as f64 - 1.0).abs() < 3e-3);

        let g = OffspringDistribution::geometric_half();
        let total: usize = (0..draws).map(|_| g.sample(&mut rng)).sum();
        assert!((total as f64 / draws as f64 - 1.0).abs() < 5e-3);

        let degenerate = OffspringDistribution::from_table_unchecked(&[1.0]);
        assert!((0..1000).all(|_| degenerate.sample(&mut rng) == 0));
    }

    #[test]
    fn size_biased_means() {
        // E ξ̂ = E ξ² = σ² + 1
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for d in named() {
            let draws = 200_000;
            let total: usize = (0..draws).map(|_| d.sample_size_biased(&mut rng)).sum();
            let mean = total as f64 / draws as f64;
            assert!((mean - (d.variance() + 1.0)).abs() < 0.03, "{d}: {mean}");
        }
    }
}
