//! Asymptotic constants: μ = E f(𝒯), the CLT variance γ², the subtree and
//! degree-count covariances, and the local limit constants for π_n.
//!
//! Evaluators are generic over [`Scalar`] where every input can be
//! rational; the `f64` wrappers are what the CLI and the Monte Carlo code
//! use. σ² always comes from the distribution object.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::{Coefficient, FringeData, TollFunction};
use crate::offspring::OffspringDistribution;
use crate::oracle::{self, SizeTable, TruncatedMoments, DEFAULT_CAP};
use crate::rng::{stream, Purpose};
use crate::sampler::sample_kesten_truncated;
use crate::scalar::Scalar;
use crate::stats;
use crate::tree::Tree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ClosedForm,
    Truncated(usize),
    ExactFiniteSupport,
}

/// γ^(N)² at one truncation level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationPoint {
    pub n: usize,
    pub mu: f64,
    pub gamma_sq: f64,
}

/// Monte Carlo estimate of E f(Ĥ) for a local f.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KestenEstimate {
    pub mean: f64,
    pub standard_error: f64,
    pub draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryResult {
    pub functional: String,
    pub dist: String,
    pub mu: f64,
    pub gamma_sq: f64,
    pub provenance: Provenance,
    pub truncation_error_bound: Option<f64>,
    /// Exact rational values, when available.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_exact: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_sq_exact: Option<String>,
    /// The last few truncation levels; only for truncated results.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sequence: Vec<TruncationPoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kesten_centering: Option<KestenEstimate>,
}

impl TheoryResult {
    /// |γ^(N)² − γ^(N−2)²| for truncated results.
    pub fn truncation_gap(&self) -> Option<f64> {
        match self.sequence.as_slice() {
            [.., a, b] => Some((b.gamma_sq - a.gamma_sq).abs()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryOptions {
    /// Truncation level for functionals without finite support.
    pub truncate: usize,
    pub cap: usize,
    pub kesten_draws: usize,
    pub seed: u64,
    /// `None` centers bounded local functionals on E f(Ĥ) and leaves the
    /// rest alone.
    pub center_on_kesten: Option<bool>,
}

impl Default for TheoryOptions {
    fn default() -> Self {
        Self { truncate: 12, cap: DEFAULT_CAP, kesten_draws: 100_000, seed: 0, center_on_kesten: None }
    }
}

fn sigma2<S: Scalar>(dist: &OffspringDistribution) -> Result<S> {
    dist.variance_in::<S>().ok_or_else(|| Error::NotRational(dist.name().to_string()))
}

/// 2E[f(F − |T|μ)] − Var f − μ²/σ² from truncated moments.
fn gamma_from_moments<S: Scalar>(m: &TruncatedMoments<S>, sigma2: S) -> S {
    let two = S::from_i64(2);
    two * (m.f_times_big_f.clone() - m.mu.clone() * m.size_times_f.clone())
        - m.var_f.clone()
        - m.mu.clone() * m.mu.clone() / sigma2
}

/// P(|𝒯| > N) = 1 − Σ_{s ≤ N} P(S_s = s − 1)/s.
pub fn size_tail(dist: &OffspringDistribution, n: usize) -> f64 {
    let head = <f64 as Scalar>::sum((1..=n).map(|s| dist.sum_pmf(s, s - 1) / s as f64));
    (1.0 - head).max(0.0)
}

/// μ^(N) = E f(𝒯)·1{|𝒯| ≤ N}, with the bound B·P(|𝒯| > N) on |μ − μ^(N)|
/// when |f| ≤ B.
pub fn mu_truncated_in<S: Scalar>(
    dist: &OffspringDistribution,
    f: &TollFunction,
    n: usize,
    cap: usize,
) -> Result<(S, Option<f64>)> {
    let m = oracle::gw_truncated_moments::<S>(dist, f, n, cap)?;
    let bound = match f.finite_support_bound() {
        Some(k) if k <= n => Some(0.0),
        _ => f.bound().map(|b| b * size_tail(dist, n)),
    };
    Ok((m.mu, bound))
}

pub fn mu_truncated(dist: &OffspringDistribution, f: &TollFunction, n: usize, cap: usize) -> Result<(f64, Option<f64>)> {
    mu_truncated_in::<f64>(dist, f, n, cap)
}

fn support_bound(f: &TollFunction) -> Result<usize> {
    f.finite_support_bound()
        .ok_or_else(|| Error::InvalidArgument(format!("{} does not have finite support", f.name())))
}

/// γ² for f with finite support: every expectation is a finite sum over
/// trees of size ≤ K.
pub fn gamma_sq_finite_support_in<S: Scalar>(dist: &OffspringDistribution, f: &TollFunction, cap: usize) -> Result<S> {
    let k = support_bound(f)?;
    let m = oracle::gw_truncated_moments::<S>(dist, f, k, cap)?;
    Ok(gamma_from_moments(&m, sigma2::<S>(dist)?))
}

pub fn gamma_sq_finite_support(dist: &OffspringDistribution, f: &TollFunction, cap: usize) -> Result<f64> {
    gamma_sq_finite_support_in::<f64>(dist, f, cap)
}

/// γ_{T,T} = π_T − (2|T| − 1 + σ⁻²)π_T²
pub fn gamma_subtree_in<S: Scalar>(dist: &OffspringDistribution, t: &Tree) -> Result<S> {
    let pi = t.weight_in::<S>(dist)?;
    let c = S::from_i64(2 * t.len() as i64 - 1) + S::one() / sigma2::<S>(dist)?;
    Ok(pi.clone() - c * pi.clone() * pi)
}

pub fn gamma_subtree(dist: &OffspringDistribution, t: &Tree) -> Result<f64> {
    gamma_subtree_in::<f64>(dist, t)
}

/// γ_{T₁,T₂} = n_{T₂}(T₁)π_{T₁} + n_{T₁}(T₂)π_{T₂} − (|T₁| + |T₂| − 1 + σ⁻²)π_{T₁}π_{T₂}
/// for T₁ ≠ T₂, and γ_{T,T} on the diagonal.
pub fn gamma_subtree_pair_in<S: Scalar>(dist: &OffspringDistribution, t1: &Tree, t2: &Tree) -> Result<S> {
    if t1 == t2 {
        return gamma_subtree_in(dist, t1);
    }
    let (p1, p2) = (t1.weight_in::<S>(dist)?, t2.weight_in::<S>(dist)?);
    let n21 = S::from_i64(t1.subtree_count(t2) as i64);
    let n12 = S::from_i64(t2.subtree_count(t1) as i64);
    let c = S::from_i64((t1.len() + t2.len()) as i64 - 1) + S::one() / sigma2::<S>(dist)?;
    Ok(n21 * p1.clone() + n12 * p2.clone() - c * p1 * p2)
}

pub fn gamma_subtree_pair(dist: &OffspringDistribution, t1: &Tree, t2: &Tree) -> Result<f64> {
    gamma_subtree_pair_in::<f64>(dist, t1, t2)
}

/// γ_r² = p_r(1 − p_r) − (r − 1)²p_r²/σ²
pub fn gamma_degree_in<S: Scalar>(dist: &OffspringDistribution, r: u32) -> Result<S> {
    let p = dist.pmf_in::<S>(r as usize)?;
    let rm1 = S::from_i64(r as i64 - 1);
    Ok(p.clone() * (S::one() - p.clone()) - rm1.clone() * rm1 * p.clone() * p / sigma2::<S>(dist)?)
}

pub fn gamma_degree(dist: &OffspringDistribution, r: u32) -> Result<f64> {
    gamma_degree_in::<f64>(dist, r)
}

/// γ_rs = −p_r p_s − (r − 1)(s − 1)p_r p_s/σ² for r ≠ s.
pub fn gamma_degree_pair_in<S: Scalar>(dist: &OffspringDistribution, r: u32, s: u32) -> Result<S> {
    if r == s {
        return Err(Error::InvalidArgument("gamma_degree_pair needs r != s".into()));
    }
    let pp = dist.pmf_in::<S>(r as usize)? * dist.pmf_in::<S>(s as usize)?;
    let c = S::from_i64((r as i64 - 1) * (s as i64 - 1));
    Ok(-pp.clone() - c * pp / sigma2::<S>(dist)?)
}

pub fn gamma_degree_pair(dist: &OffspringDistribution, r: u32, s: u32) -> Result<f64> {
    gamma_degree_pair_in::<f64>(dist, r, s)
}

fn centered(f: &TollFunction, center: Option<f64>) -> TollFunction {
    match center {
        Some(c) => f.clone().minus_constant(Coefficient::real(c)),
        None => f.clone(),
    }
}

/// γ^(N)² and μ^(N) for every N in `levels`, from one enumeration up to
/// the largest level. With `center`, f is replaced by f − center.
pub fn truncation_sequence(
    dist: &OffspringDistribution,
    f: &TollFunction,
    levels: &[usize],
    center: Option<f64>,
    cap: usize,
) -> Result<Vec<TruncationPoint>> {
    let top = levels.iter().copied().max().unwrap_or(0);
    let g = centered(f, center);
    let table = SizeTable::<f64>::build(dist, &g, top, cap, false)?;
    let s2 = dist.variance();
    Ok(levels
        .iter()
        .map(|&n| {
            let m = oracle::truncated_moments_prefix(&table, n);
            TruncationPoint { n, mu: m.mu, gamma_sq: gamma_from_moments(&m, s2) }
        })
        .collect())
}

/// γ^(N)² for a single level.
pub fn gamma_sq_truncated(
    dist: &OffspringDistribution,
    f: &TollFunction,
    n: usize,
    center: Option<f64>,
    cap: usize,
) -> Result<f64> {
    Ok(truncation_sequence(dist, f, &[n], center, cap)?[0].gamma_sq)
}

/// γ^(N)² in exact arithmetic, without centering.
pub fn gamma_sq_truncated_in<S: Scalar>(
    dist: &OffspringDistribution,
    f: &TollFunction,
    n: usize,
    cap: usize,
) -> Result<S> {
    let m = oracle::gw_truncated_moments::<S>(dist, f, n, cap)?;
    Ok(gamma_from_moments(&m, sigma2::<S>(dist)?))
}

const KESTEN_CHUNK: usize = 1000;

/// Estimates E f(Ĥ) = E f(Ĥ^(M)) from `draws` truncated Kesten trees, M the
/// cut-off of f. Chunks of draws use their own streams and are merged in
/// order.
pub fn kesten_mean(dist: &OffspringDistribution, f: &TollFunction, draws: usize, seed: u64) -> Result<KestenEstimate> {
    let depth = f
        .local_cutoff()
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not local", f.name())))?;
    if draws < 2 {
        return Err(Error::InvalidArgument("need at least 2 Kesten draws".into()));
    }
    let chunks = draws.div_ceil(KESTEN_CHUNK);
    let values: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, Purpose::Kesten, c as u64);
            let len = KESTEN_CHUNK.min(draws - c * KESTEN_CHUNK);
            (0..len)
                .map(|_| {
                    let t = sample_kesten_truncated(dist, depth, &mut rng)?;
                    Ok(f.eval(&FringeData::new(&t, f.needs_s1()).node(0)))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let values: Vec<f64> = values.into_iter().flatten().collect();
    let mean = stats::mean(&values);
    let standard_error = (stats::variance(&values) / draws as f64).sqrt();
    Ok(KestenEstimate { mean, standard_error, draws })
}

/// E f(𝒯_n) exactly, for a local f and an offspring law with bounded
/// support: sums P(𝒯_n^(M) = T) over all T of height ≤ M, where the part
/// of 𝒯_n below depth M is a forest of w_M(T) trees and
/// P(|forest| = m) = (w/m)·P(S_m = m − w).
pub fn local_mean_exact_in<S: Scalar>(dist: &OffspringDistribution, f: &TollFunction, n: usize) -> Result<S> {
    let depth = f
        .local_cutoff()
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not local", f.name())))?;
    let max_degree = dist
        .max_degree()
        .ok_or_else(|| Error::InvalidArgument(format!("{} has unbounded support", dist.name())))?;
    let pi_n = dist.sum_pmf_in::<S>(n, n - 1)? / S::from_i64(n as i64);
    if pi_n.is_zero() {
        return Err(Error::ZeroProbability { n });
    }
    let mut total = S::zero();
    for t in oracle::enumerate_height_bounded(max_degree, depth) {
        let value = f.eval_in::<S>(&FringeData::new(&t, f.needs_s1()).node(0)).ok_or_else(|| {
            Error::NotRational(f.name().to_string())
        })?;
        if value.is_zero() {
            continue;
        }
        let depths = t.depths();
        let width = depths.iter().filter(|&&d| d == depth).count();
        let above = t.len() - width;
        if above > n {
            continue;
        }
        let m = n - above;
        let forest = if width == 0 {
            if m == 0 { S::one() } else { S::zero() }
        } else if m < width {
            S::zero()
        } else {
            S::from_i64(width as i64) / S::from_i64(m as i64) * dist.sum_pmf_in::<S>(m, m - width)?
        };
        let mut p = S::one();
        for (&d, &level) in t.degrees().iter().zip(&depths) {
            if level < depth {
                p = p * dist.pmf_in::<S>(d as usize)?;
            }
        }
        total = total + value * p * forest;
    }
    Ok(total / pi_n)
}

/// E F(𝒯_n) = Σ_k n·P(S_{n−k} = n−k)/P(S_n = n−1)·E f_k(𝒯) for f with
/// finite support K.
pub fn exact_mean_in<S: Scalar>(dist: &OffspringDistribution, f: &TollFunction, n: usize, cap: usize) -> Result<S> {
    let k_max = support_bound(f)?.min(n);
    let table = SizeTable::<S>::build(dist, f, k_max, cap, false)?;
    let denom = dist.sum_pmf_in::<S>(n, n - 1)?;
    if denom.is_zero() {
        return Err(Error::ZeroProbability { n });
    }
    let nn = S::from_i64(n as i64);
    let mut terms = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let ratio = dist.sum_pmf_in::<S>(n - k, n - k)? / denom.clone();
        terms.push(nn.clone() * ratio * table.mean_fk(k));
    }
    Ok(S::sum(terms))
}

pub fn exact_mean(dist: &OffspringDistribution, f: &TollFunction, n: usize, cap: usize) -> Result<f64> {
    exact_mean_in::<f64>(dist, f, n, cap)
}

fn check_span(dist: &OffspringDistribution, n: usize) -> Result<()> {
    let h = dist.span();
    if n == 0 || (n - 1) % h as usize != 0 {
        return Err(Error::SpanMismatch { n, span: h });
    }
    Ok(())
}

/// h/√(2πσ²)·n^{−3/2}
pub fn pi_n_asymptotic(dist: &OffspringDistribution, n: usize) -> Result<f64> {
    check_span(dist, n)?;
    let h = dist.span() as f64;
    Ok(h / (2.0 * std::f64::consts::PI * dist.variance()).sqrt() * (n as f64).powf(-1.5))
}

/// P(S_n = n − 1)·√n·√(2πσ²)/h, which tends to 1.
pub fn llt_ratio(dist: &OffspringDistribution, n: usize) -> Result<f64> {
    check_span(dist, n)?;
    let h = dist.span() as f64;
    Ok(dist.sum_pmf(n, n - 1) * (n as f64).sqrt() * (2.0 * std::f64::consts::PI * dist.variance()).sqrt() / h)
}

/// μ and γ² for f under `dist`: closed forms for outdegree indicators,
/// exact sums for finite support, and the truncation sequence otherwise.
pub fn evaluate(dist: &OffspringDistribution, f: &TollFunction, opts: &TheoryOptions) -> Result<TheoryResult> {
    let base = TheoryResult {
        functional: f.name().to_string(),
        dist: dist.name().to_string(),
        mu: 0.0,
        gamma_sq: 0.0,
        provenance: Provenance::ClosedForm,
        truncation_error_bound: None,
        mu_exact: None,
        gamma_sq_exact: None,
        sequence: Vec::new(),
        kesten_centering: None,
    };
    let exact = dist.is_rational() && f.is_rational();
    if let Some(r) = f.degree_indicator() {
        let (mu_exact, gamma_sq_exact) = if dist.is_rational() {
            (dist.pmf_exact(r as usize).map(|p| p.to_string()), Some(gamma_degree_in::<num_rational::BigRational>(dist, r)?.to_string()))
        } else {
            (None, None)
        };
        return Ok(TheoryResult {
            mu: dist.pmf(r as usize),
            gamma_sq: gamma_degree(dist, r)?,
            mu_exact,
            gamma_sq_exact,
            ..base
        });
    }
    if let Some(k) = f.finite_support_bound() {
        if k <= opts.cap {
            let (mu, gamma_sq, mu_exact, gamma_sq_exact) = if exact {
                let m = oracle::gw_truncated_moments::<num_rational::BigRational>(dist, f, k, opts.cap)?;
                let g = gamma_from_moments(&m, sigma2(dist)?);
                (m.mu.to_f64(), g.to_f64(), Some(m.mu.to_string()), Some(g.to_string()))
            } else {
                let m = oracle::gw_truncated_moments::<f64>(dist, f, k, opts.cap)?;
                (m.mu, gamma_from_moments(&m, dist.variance()), None, None)
            };
            return Ok(TheoryResult {
                mu,
                gamma_sq,
                provenance: Provenance::ExactFiniteSupport,
                truncation_error_bound: Some(0.0),
                mu_exact,
                gamma_sq_exact,
                ..base
            });
        }
    }
    let n = opts.truncate;
    let center_default = f.local_cutoff().is_some() && f.bound().is_some();
    let kesten_centering = if opts.center_on_kesten.unwrap_or(center_default) {
        Some(kesten_mean(dist, f, opts.kesten_draws, opts.seed)?)
    } else {
        None
    };
    let levels: Vec<usize> = [n.saturating_sub(4), n.saturating_sub(2), n].into_iter().filter(|&l| l >= 1).collect();
    let sequence = truncation_sequence(dist, f, &levels, kesten_centering.map(|k| k.mean), opts.cap)?;
    let (mu, bound) = mu_truncated(dist, f, n, opts.cap)?;
    Ok(TheoryResult {
        mu,
        gamma_sq: sequence.last().map_or(0.0, |p| p.gamma_sq),
        provenance: Provenance::Truncated(n),
        truncation_error_bound: bound,
        sequence,
        kesten_centering,
        ..base
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rational;
    use num_rational::BigRational;

    type Q = BigRational;

    fn t(s: &str) -> Tree {
        s.parse().unwrap()
    }

    fn named() -> Vec<OffspringDistribution> {
        vec![
            OffspringDistribution::binomial_two_half(),
            OffspringDistribution::geometric_half(),
            OffspringDistribution::full_rary(2).unwrap(),
            OffspringDistribution::full_rary(3).unwrap(),
        ]
    }

    #[test]
    fn mu_examples() {
        let b = OffspringDistribution::binomial_two_half();
        for n in 1..=6 {
            assert_eq!(mu_truncated_in::<Q>(&b, &TollFunction::leaf(), n, DEFAULT_CAP).unwrap().0, rational(1, 4));
        }
        let zero = TollFunction::constant(Coefficient::integer(0));
        assert_eq!(mu_truncated_in::<Q>(&b, &zero, 5, DEFAULT_CAP).unwrap().0, rational(0, 1));
        // μ^(N) → p_1 for the outdegree-1 indicator, inside the tail bound
        let (mu, bound) = mu_truncated(&b, &TollFunction::outdegree(1), 12, DEFAULT_CAP).unwrap();
        let bound = bound.unwrap();
        assert!((mu - 0.5).abs() <= bound, "mu={mu} bound={bound}");
    }

    #[test]
    fn leaf_gamma_examples() {
        let g = OffspringDistribution::geometric_half();
        assert_eq!(gamma_sq_finite_support_in::<Q>(&g, &TollFunction::leaf(), DEFAULT_CAP).unwrap(), rational(1, 8));
        for dist in named() {
            let p0 = dist.pmf_exact(0).unwrap();
            let s2 = dist.variance_exact().unwrap().clone();
            let expected = p0.clone() - (rational(1, 1) + rational(1, 1) / s2) * p0.clone() * p0;
            assert_eq!(gamma_sq_finite_support_in::<Q>(&dist, &TollFunction::leaf(), DEFAULT_CAP).unwrap(), expected);
            assert_eq!(gamma_subtree_in::<Q>(&dist, &t("0")).unwrap(), expected);
            assert_eq!(gamma_degree_in::<Q>(&dist, 0).unwrap(), expected);
        }
        let p = OffspringDistribution::poisson_one();
        let e = (-1f64).exp();
        assert!((gamma_sq_finite_support(&p, &TollFunction::leaf(), DEFAULT_CAP).unwrap() - (e - 2.0 * e * e)).abs() < 1e-15);
    }

    #[test]
    fn degeneracy() {
        for r in [2u32, 3] {
            let d = OffspringDistribution::full_rary(r).unwrap();
            assert_eq!(gamma_degree_in::<Q>(&d, r).unwrap(), rational(0, 1));
            assert_eq!(gamma_sq_finite_support_in::<Q>(&d, &TollFunction::leaf(), DEFAULT_CAP).unwrap(), rational(0, 1));
        }
    }

    #[test]
    fn degree_examples() {
        let p = OffspringDistribution::poisson_one();
        let e = (-1f64).exp();
        assert!((gamma_degree(&p, 1).unwrap() - e * (1.0 - e)).abs() < 1e-15);
        assert!((gamma_degree(&p, 1).unwrap() - 0.232_544).abs() < 1e-6);
        assert!(gamma_degree_pair(&p, 0, 2).unwrap().abs() < 1e-16);
        assert_eq!(gamma_degree_pair(&p, 1, 1).unwrap_err(), Error::InvalidArgument("gamma_degree_pair needs r != s".into()));
        // degree indicators with finite support agree with the general formula
        let b = OffspringDistribution::binomial_two_half();
        let outdeg = TollFunction::outdegree(0);
        assert_eq!(gamma_sq_finite_support_in::<Q>(&b, &outdeg, DEFAULT_CAP).unwrap(), gamma_degree_in::<Q>(&b, 0).unwrap());
        // outdegree 1 lacks finite support; centered on E f(Ĥ) = 1/2 its
        // truncation sequence climbs slowly towards γ₁²
        let seq = truncation_sequence(&b, &TollFunction::outdegree(1), &[6, 8, 10, 12], Some(0.5), DEFAULT_CAP).unwrap();
        let target = gamma_degree(&b, 1).unwrap();
        assert!(seq.windows(2).all(|w| w[0].gamma_sq < w[1].gamma_sq && w[1].gamma_sq < target), "{seq:?}");
    }

    #[test]
    fn subtree_pair_values() {
        let b = OffspringDistribution::binomial_two_half();
        let (t1, t2) = (t("0"), t("1 0"));
        // n_{T2}(T1)=0, n_{T1}(T2)=1, |T1|+|T2|-1+σ⁻² = 4
        let g = gamma_subtree_pair_in::<Q>(&b, &t1, &t2).unwrap();
        assert_eq!(g, rational(1, 8) - rational(4, 1) * rational(1, 4) * rational(1, 8));
        assert_eq!(g, rational(0, 1));
        assert_eq!(g, gamma_subtree_pair_in::<Q>(&b, &t2, &t1).unwrap());
        assert_eq!(gamma_subtree_pair_in::<Q>(&b, &t2, &t2).unwrap(), gamma_subtree_in::<Q>(&b, &t2).unwrap());
    }

    #[test]
    fn subtree_formula_matches_finite_support_sums() {
        for dist in named() {
            for size in 1..=5 {
                for tree in oracle::enumerate_trees(size, DEFAULT_CAP).unwrap() {
                    let f = TollFunction::pattern(tree.clone());
                    let direct = gamma_sq_finite_support_in::<Q>(&dist, &f, DEFAULT_CAP).unwrap();
                    assert_eq!(direct, gamma_subtree_in::<Q>(&dist, &tree).unwrap(), "{dist} {tree}");
                }
            }
        }
    }

    #[test]
    fn polarization() {
        let trees: Vec<Tree> = (1..=4).flat_map(|n| oracle::enumerate_trees(n, DEFAULT_CAP).unwrap()).collect();
        let (a, b) = (rational(2, 1), rational(-3, 1));
        for dist in named() {
            for (i, t1) in trees.iter().enumerate() {
                for t2 in &trees[i + 1..] {
                    let f = TollFunction::linear(vec![
                        (Coefficient::rational(a.clone()), TollFunction::pattern(t1.clone())),
                        (Coefficient::rational(b.clone()), TollFunction::pattern(t2.clone())),
                    ]);
                    let lhs = gamma_sq_finite_support_in::<Q>(&dist, &f, DEFAULT_CAP).unwrap();
                    let rhs = a.clone() * a.clone() * gamma_subtree_in::<Q>(&dist, t1).unwrap()
                        + rational(2, 1) * a.clone() * b.clone() * gamma_subtree_pair_in::<Q>(&dist, t1, t2).unwrap()
                        + b.clone() * b.clone() * gamma_subtree_in::<Q>(&dist, t2).unwrap();
                    assert_eq!(lhs, rhs, "{dist} {t1} {t2}");
                }
            }
        }
    }

    #[test]
    fn truncation_is_exact_for_finite_support() {
        let b = OffspringDistribution::binomial_two_half();
        let f = TollFunction::pattern(t("2 0 0"));
        let exact = gamma_sq_finite_support(&b, &f, DEFAULT_CAP).unwrap();
        for n in [3, 6, 9] {
            assert!((gamma_sq_truncated(&b, &f, n, None, DEFAULT_CAP).unwrap() - exact).abs() < 1e-15);
        }
        assert_eq!(gamma_sq_truncated_in::<Q>(&b, &f, 7, DEFAULT_CAP).unwrap(), gamma_sq_finite_support_in::<Q>(&b, &f, DEFAULT_CAP).unwrap());
    }

    #[test]
    fn llt_examples() {
        for (dist, n) in [
            (OffspringDistribution::binomial_two_half(), 10_000),
            (OffspringDistribution::poisson_one(), 10_000),
            (OffspringDistribution::geometric_half(), 10_000),
            (OffspringDistribution::full_rary(2).unwrap(), 10_001),
        ] {
            let mut prev = f64::INFINITY;
            for m in [n / 100, n / 10, n] {
                let m = m - (m - 1) % dist.span() as usize;
                let err = (llt_ratio(&dist, m).unwrap() - 1.0).abs();
                assert!(err < prev);
                prev = err;
            }
            assert!(prev < 0.02, "{dist}: {prev}");
            let ratio = dist.sum_pmf(n, n - 1) / n as f64 / pi_n_asymptotic(&dist, n).unwrap();
            assert!((ratio - 1.0).abs() < 0.02);
        }
        let full = OffspringDistribution::full_rary(2).unwrap();
        assert_eq!(llt_ratio(&full, 10_000).unwrap_err(), Error::SpanMismatch { n: 10_000, span: 2 });
    }

    #[test]
    fn local_mean_matches_enumeration() {
        let b = OffspringDistribution::binomial_two_half();
        for f in [TollFunction::protected(), TollFunction::no_grandchildren(), TollFunction::leaf()] {
            for n in 1..=9 {
                let local = local_mean_exact_in::<Q>(&b, &f, n).unwrap();
                let law = oracle::exact_conditioned_law::<Q>(&b, n, DEFAULT_CAP).unwrap();
                let direct = Q::sum(law.iter().map(|(t, p)| Q::from_i64(f.eval_tree(t) as i64) * p.clone()));
                assert_eq!(local, direct, "{} n={n}", f.name());
            }
        }
        let one = TollFunction::constant(Coefficient::integer(1));
        assert_eq!(local_mean_exact_in::<Q>(&b, &one, 40).unwrap(), rational(1, 1));
    }

    #[test]
    fn exact_mean_via_size_sums() {
        let b = OffspringDistribution::binomial_two_half();
        for f in [TollFunction::leaf(), TollFunction::pattern(t("1 0"))] {
            for n in 1..=9 {
                let law = oracle::exact_F_law::<Q>(&b, n, &f, DEFAULT_CAP).unwrap();
                assert_eq!(exact_mean_in::<Q>(&b, &f, n, DEFAULT_CAP).unwrap(), law.mean);
            }
        }
        // Cayley trees: E(leaves) = n(1 − 1/n)^{n−1}
        let p = OffspringDistribution::poisson_one();
        let n = 2000.0f64;
        let expected = n * (1.0 - 1.0 / n).powf(n - 1.0);
        assert!((exact_mean(&p, &TollFunction::leaf(), 2000, DEFAULT_CAP).unwrap() - expected).abs() < 1e-8);
    }

    #[test]
    fn kesten_mean_for_protected() {
        // E f(Ĥ) = Σ k p_k (1 − p_0)^{k−1} = 7/8 for the binomial law
        let b = OffspringDistribution::binomial_two_half();
        let est = kesten_mean(&b, &TollFunction::protected(), 20_000, 3).unwrap();
        assert!((est.mean - 0.875).abs() < 4.0 * est.standard_error, "{est:?}");
        assert_eq!(est, kesten_mean(&b, &TollFunction::protected(), 20_000, 3).unwrap());
    }

    #[test]
    fn evaluate_dispatch() {
        let p = OffspringDistribution::poisson_one();
        let r = evaluate(&p, &TollFunction::leaf(), &TheoryOptions::default()).unwrap();
        assert_eq!(r.provenance, Provenance::ClosedForm);
        assert!((r.mu - 0.367_879).abs() < 1e-6 && (r.gamma_sq - 0.097_208).abs() < 1e-6);
        let b = OffspringDistribution::binomial_two_half();
        let r = evaluate(&b, &TollFunction::pattern(t("1 0")), &TheoryOptions::default()).unwrap();
        assert_eq!(r.provenance, Provenance::ExactFiniteSupport);
        assert_eq!(r.gamma_sq_exact.as_deref(), Some(gamma_subtree_in::<Q>(&b, &t("1 0")).unwrap().to_string().as_str()));
        assert!(r.gamma_sq >= 0.0);
        let opts = TheoryOptions { truncate: 8, kesten_draws: 2000, ..TheoryOptions::default() };
        let r = evaluate(&b, &TollFunction::protected(), &opts).unwrap();
        assert_eq!(r.provenance, Provenance::Truncated(8));
        assert_eq!(r.sequence.len(), 3);
        assert!(r.kesten_centering.is_some() && r.truncation_gap().is_some());
        let r = evaluate(&p, &TollFunction::wagner_log_s1(), &opts).unwrap();
        assert!(r.kesten_centering.is_none());
    }

    #[test]
    fn wagner_sequence_settles() {
        let p = OffspringDistribution::poisson_one();
        let seq = truncation_sequence(&p, &TollFunction::wagner_log_s1(), &[8, 10, 12], None, DEFAULT_CAP).unwrap();
        let d1 = (seq[1].gamma_sq - seq[0].gamma_sq).abs();
        let d2 = (seq[2].gamma_sq - seq[1].gamma_sq).abs();
        assert!(d2 < d1, "{seq:?}");
    }
}
