//! Exhaustive ground truth for small trees.
//!
//! Every ordered tree of a given size is enumerated, which gives the exact
//! law of `𝒯_n` and of any `F(𝒯_n)`. The exact expectation and covariance
//! identities for the size-restricted sums `F_k` are then checked against
//! their closed forms in terms of the partial-sum probabilities
//! `P(S_j = i)`, which come from [`OffspringDistribution::sum_pmf_in`] and
//! never from the enumeration.
//!
//! Run with `S = BigRational` the residuals are exactly zero; with `f64`
//! they are rounding noise.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::{F_by_size, FringeData, TollFunction};
use crate::offspring::OffspringDistribution;
use crate::scalar::Scalar;
use crate::tree::Tree;

pub const DEFAULT_CAP: usize = 14;

fn check_cap(n: usize, cap: usize) -> Result<()> {
    if n > cap {
        Err(Error::CapExceeded { n, cap })
    } else {
        Ok(())
    }
}

/// Calls `visit` on every degree sequence of length `n`, in increasing
/// lexicographic order.
pub fn for_each_tree(n: usize, cap: usize, mut visit: impl FnMut(&[u32])) -> Result<()> {
    check_cap(n, cap)?;
    if n == 0 {
        return Ok(());
    }
    fn rec(seq: &mut Vec<u32>, sum: usize, n: usize, visit: &mut dyn FnMut(&[u32])) {
        let i = seq.len();
        if i + 1 == n {
            seq.push((n - 1 - sum) as u32);
            visit(seq);
            seq.pop();
            return;
        }
        // prefix of length i + 1 must sum to at least i + 1
        let lo = (i + 1).saturating_sub(sum);
        for d in lo..=(n - 1 - sum) {
            seq.push(d as u32);
            rec(seq, sum + d, n, visit);
            seq.pop();
        }
    }
    let mut seq = Vec::with_capacity(n);
    rec(&mut seq, 0, n, &mut visit);
    Ok(())
}

/// All ordered trees with `n` nodes (Catalan(n - 1) of them).
pub fn enumerate_trees(n: usize, cap: usize) -> Result<Vec<Tree>> {
    let mut out = Vec::new();
    for_each_tree(n, cap, |seq| out.push(Tree::from_degrees_unchecked(seq.to_vec())))?;
    Ok(out)
}

/// All trees of height at most `depth` whose outdegrees are at most
/// `max_degree`.
pub fn enumerate_height_bounded(max_degree: usize, depth: usize) -> Vec<Tree> {
    let mut level: Vec<Vec<u32>> = vec![vec![0]];
    for _ in 0..depth {
        let mut next: Vec<Vec<u32>> = vec![vec![0]];
        for d in 1..=max_degree {
            // all d-tuples of trees from the previous level
            let mut partial: Vec<Vec<u32>> = vec![vec![d as u32]];
            for _ in 0..d {
                partial = partial
                    .iter()
                    .flat_map(|p| {
                        level.iter().map(move |c| {
                            let mut s = p.clone();
                            s.extend_from_slice(c);
                            s
                        })
                    })
                    .collect();
            }
            next.extend(partial);
        }
        level = next;
    }
    level.into_iter().map(Tree::from_degrees_unchecked).collect()
}

/// π_n = P(|𝒯| = n), by enumeration and by Otter's formula
/// `P(S_n = n - 1)/n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiN<S> {
    pub enumerated: S,
    pub otter: S,
}

impl<S: Scalar> PiN<S> {
    pub fn residual(&self) -> S {
        self.enumerated.clone() - self.otter.clone()
    }
}

pub fn exact_pi_n<S: Scalar>(dist: &OffspringDistribution, n: usize, cap: usize) -> Result<PiN<S>> {
    let pmf = pmf_table::<S>(dist, n)?;
    let mut weights = Vec::new();
    for_each_tree(n, cap, |seq| weights.push(weight_of(&pmf, seq)))?;
    let enumerated = S::sum(weights);
    let otter = dist.sum_pmf_in::<S>(n, n - 1)? / S::from_i64(n as i64);
    Ok(PiN { enumerated, otter })
}

fn pmf_table<S: Scalar>(dist: &OffspringDistribution, n: usize) -> Result<Vec<S>> {
    (0..n.max(1)).map(|k| dist.pmf_in::<S>(k)).collect()
}

fn weight_of<S: Scalar>(pmf: &[S], seq: &[u32]) -> S {
    seq.iter().fold(S::one(), |w, &d| w * pmf[d as usize].clone())
}

/// P(𝒯_n = t) for every tree of size n.
pub fn exact_conditioned_law<S: Scalar>(
    dist: &OffspringDistribution,
    n: usize,
    cap: usize,
) -> Result<Vec<(Tree, S)>> {
    let pmf = pmf_table::<S>(dist, n)?;
    let mut law = Vec::new();
    for_each_tree(n, cap, |seq| {
        law.push((Tree::from_degrees_unchecked(seq.to_vec()), weight_of(&pmf, seq)))
    })?;
    let total = S::sum(law.iter().map(|(_, w)| w.clone()));
    if total.is_zero() {
        return Err(Error::ZeroProbability { n });
    }
    Ok(law
        .into_iter()
        .filter(|(_, w)| !w.is_zero())
        .map(|(t, w)| (t, w / total.clone()))
        .collect())
}

/// Exact distribution of F(𝒯_n).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FLaw<S> {
    /// (value, probability), sorted by value.
    pub law: Vec<(S, S)>,
    pub mean: S,
    pub variance: S,
}

fn not_rational(f: &TollFunction) -> Error {
    Error::NotRational(f.name().to_string())
}

#[allow(non_snake_case)]
pub fn exact_F_law<S: Scalar>(
    dist: &OffspringDistribution,
    n: usize,
    f: &TollFunction,
    cap: usize,
) -> Result<FLaw<S>> {
    let law = exact_conditioned_law::<S>(dist, n, cap)?;
    let mut values: Vec<(S, S)> = Vec::with_capacity(law.len());
    for (t, p) in law {
        let data = FringeData::new(&t, f.needs_s1());
        let mut value = S::zero();
        for v in data.nodes() {
            value = value + f.eval_in::<S>(&v).ok_or_else(|| not_rational(f))?;
        }
        values.push((value, p));
    }
    values.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(S, S)> = Vec::new();
    for (v, p) in values {
        match merged.last_mut() {
            Some((last, q)) if *last == v => *q = q.clone() + p,
            _ => merged.push((v, p)),
        }
    }
    let mean = S::sum(merged.iter().map(|(v, p)| v.clone() * p.clone()));
    let variance = S::sum(merged.iter().map(|(v, p)| {
        let c = v.clone() - mean.clone();
        c.clone() * c * p.clone()
    }));
    Ok(FLaw { law: merged, mean, variance })
}

/// Sums over all trees of one size `s`, weighted by the unconditioned
/// probability `w(t) = P(𝒯 = t)`.
#[derive(Debug, Clone)]
struct SizeSums<S> {
    /// Σ w
    pi: S,
    /// Σ w·f(t)
    f: S,
    /// Σ w·f(t)²
    f2: S,
    /// Σ w·f(t)·F(t)
    f_big_f: S,
    /// `f_fm[m]` = Σ w·f(t)·F_m(t)
    f_fm: Vec<S>,
    /// `fk[k]` = Σ w·F_k(t)
    fk: Vec<S>,
    /// `fkfm[k][m]` = Σ w·F_k(t)·F_m(t), m ≤ k
    fkfm: Vec<Vec<S>>,
}

/// Exact weighted sums for every size 1..=max_size.
#[derive(Debug, Clone)]
pub struct SizeTable<S> {
    sizes: Vec<SizeSums<S>>,
}

impl<S: Scalar> SizeTable<S> {
    /// Enumerates every tree of size ≤ `max_size` once. The pairwise
    /// `F_k·F_m` sums are only kept when `pairs` is set.
    pub fn build(
        dist: &OffspringDistribution,
        f: &TollFunction,
        max_size: usize,
        cap: usize,
        pairs: bool,
    ) -> Result<Self> {
        check_cap(max_size, cap)?;
        let pmf = pmf_table::<S>(dist, max_size)?;
        let mut sizes = Vec::with_capacity(max_size);
        for s in 1..=max_size {
            let mut acc = SizeSums {
                pi: S::zero(),
                f: S::zero(),
                f2: S::zero(),
                f_big_f: S::zero(),
                f_fm: vec![S::zero(); s + 1],
                fk: vec![S::zero(); s + 1],
                fkfm: if pairs { (0..=s).map(|k| vec![S::zero(); k + 1]).collect() } else { Vec::new() },
            };
            let mut failure = None;
            for_each_tree(s, cap, |seq| {
                if failure.is_some() {
                    return;
                }
                let w = weight_of(&pmf, seq);
                if w.is_zero() {
                    return;
                }
                let t = Tree::from_degrees_unchecked(seq.to_vec());
                let Some(by_size) = F_by_size::<S>(&t, f) else {
                    failure = Some(not_rational(f));
                    return;
                };
                let root = by_size[s].clone();
                let total = S::sum(by_size.iter().cloned());
                acc.pi = acc.pi.clone() + w.clone();
                let wf = w.clone() * root.clone();
                acc.f = acc.f.clone() + wf.clone();
                acc.f2 = acc.f2.clone() + wf.clone() * root;
                acc.f_big_f = acc.f_big_f.clone() + wf.clone() * total;
                for (m, fm) in by_size.iter().enumerate().skip(1) {
                    if fm.is_zero() {
                        continue;
                    }
                    acc.f_fm[m] = acc.f_fm[m].clone() + wf.clone() * fm.clone();
                    let wfm = w.clone() * fm.clone();
                    acc.fk[m] = acc.fk[m].clone() + wfm.clone();
                    if pairs {
                        for (k, fk) in by_size.iter().enumerate().skip(m) {
                            if !fk.is_zero() {
                                acc.fkfm[k][m] = acc.fkfm[k][m].clone() + wfm.clone() * fk.clone();
                            }
                        }
                    }
                }
            })?;
            if let Some(e) = failure {
                return Err(e);
            }
            sizes.push(acc);
        }
        Ok(Self { sizes })
    }

    pub fn max_size(&self) -> usize {
        self.sizes.len()
    }

    fn at(&self, s: usize) -> &SizeSums<S> {
        &self.sizes[s - 1]
    }

    /// π_s = P(|𝒯| = s)
    pub fn pi(&self, s: usize) -> S {
        self.at(s).pi.clone()
    }

    /// E f_k(𝒯)
    pub fn mean_fk(&self, k: usize) -> S {
        self.at(k).f.clone()
    }

    /// E(f_k(𝒯)·F_m(𝒯))
    pub fn mean_fk_fm(&self, k: usize, m: usize) -> S {
        self.at(k).f_fm.get(m).cloned().unwrap_or_else(S::zero)
    }

    fn conditioned(&self, n: usize, sum: S) -> Result<S> {
        let pi = self.pi(n);
        if pi.is_zero() {
            return Err(Error::ZeroProbability { n });
        }
        Ok(sum / pi)
    }

    /// E F_k(𝒯_n)
    pub fn conditioned_mean(&self, n: usize, k: usize) -> Result<S> {
        self.conditioned(n, self.at(n).fk[k].clone())
    }

    /// Cov(F_k(𝒯_n), F_m(𝒯_n))
    pub fn conditioned_cov(&self, n: usize, k: usize, m: usize) -> Result<S> {
        let (k, m) = if m <= k { (k, m) } else { (m, k) };
        let row = &self.at(n).fkfm;
        if row.is_empty() {
            return Err(Error::InvalidArgument("size table built without pair sums".into()));
        }
        let joint = self.conditioned(n, row[k][m].clone())?;
        Ok(joint - self.conditioned_mean(n, k)? * self.conditioned_mean(n, m)?)
    }
}

/// Both sides of an exact identity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityCheck<S> {
    pub n: usize,
    pub k: usize,
    pub m: Option<usize>,
    pub left: S,
    pub right: S,
    pub difference: S,
}

impl<S: Scalar> IdentityCheck<S> {
    fn new(n: usize, k: usize, m: Option<usize>, left: S, right: S) -> Self {
        let difference = left.clone() - right.clone();
        Self { n, k, m, left, right, difference }
    }
}

/// P(S_j = i), zero for negative arguments.
fn sum_prob<S: Scalar>(dist: &OffspringDistribution, j: i64, i: i64) -> Result<S> {
    if j < 0 || i < 0 {
        return Ok(S::zero());
    }
    dist.sum_pmf_in::<S>(j as usize, i as usize)
}

/// n·P(S_{n-k} = n-k)/P(S_n = n-1)
fn size_ratio<S: Scalar>(dist: &OffspringDistribution, n: usize, k: usize) -> Result<S> {
    let denom = sum_prob::<S>(dist, n as i64, n as i64 - 1)?;
    if denom.is_zero() {
        return Err(Error::ZeroProbability { n });
    }
    Ok(sum_prob::<S>(dist, (n - k) as i64, (n - k) as i64)? / denom)
}

fn check_range(n: usize, k: usize, m: usize) -> Result<()> {
    if !(1 <= m && m <= k && k <= n) {
        return Err(Error::InvalidArgument(format!("need 1 <= m <= k <= n, got m={m} k={k} n={n}")));
    }
    Ok(())
}

/// E F_k(𝒯_n) = n·P(S_{n-k} = n-k)/P(S_n = n-1)·E f_k(𝒯), using a prebuilt
/// table of size ≥ n.
pub fn lefkn_from_table<S: Scalar>(
    dist: &OffspringDistribution,
    table: &SizeTable<S>,
    n: usize,
    k: usize,
) -> Result<IdentityCheck<S>> {
    check_range(n, k, 1)?;
    let left = table.conditioned_mean(n, k)?;
    let right = S::from_i64(n as i64) * size_ratio::<S>(dist, n, k)? * table.mean_fk(k);
    Ok(IdentityCheck::new(n, k, None, left, right))
}

pub fn verify_lefkn<S: Scalar>(
    dist: &OffspringDistribution,
    f: &TollFunction,
    n: usize,
    k: usize,
    cap: usize,
) -> Result<IdentityCheck<S>> {
    check_range(n, k, 1)?;
    let table = SizeTable::<S>::build(dist, f, n, cap, false)?;
    lefkn_from_table(dist, &table, n, k)
}

/// Cov(F_k(𝒯_n), F_m(𝒯_n)) against its closed form: the three-term form
/// when n ≥ k + m - 1, the two-term form otherwise.
pub fn lcov_from_table<S: Scalar>(
    dist: &OffspringDistribution,
    table: &SizeTable<S>,
    n: usize,
    k: usize,
    m: usize,
) -> Result<IdentityCheck<S>> {
    check_range(n, k, m)?;
    let left = table.conditioned_cov(n, k, m)?;
    let nn = S::from_i64(n as i64);
    let rk = size_ratio::<S>(dist, n, k)?;
    let rm = size_ratio::<S>(dist, n, m)?;
    let (efk, efm) = (table.mean_fk(k), table.mean_fk(m));
    let first = nn.clone() * rk.clone() * table.mean_fk_fm(k, m);
    let right = if n + 1 >= k + m {
        let denom = sum_prob::<S>(dist, n as i64, n as i64 - 1)?;
        let joint = sum_prob::<S>(dist, n as i64 - (k + m) as i64, n as i64 - (k + m) as i64 + 1)? / denom;
        let second = nn.clone()
            * S::from_i64((k + m - 1) as i64)
            * rk.clone()
            * rm.clone()
            * efk.clone()
            * efm.clone();
        let third = nn * S::from_i64((n + 1 - k - m) as i64) * efk * efm * (joint - rk * rm);
        first - second + third
    } else {
        first - nn.clone() * nn * rk * rm * efk * efm
    };
    Ok(IdentityCheck::new(n, k, Some(m), left, right))
}

pub fn verify_lcov<S: Scalar>(
    dist: &OffspringDistribution,
    f: &TollFunction,
    n: usize,
    k: usize,
    m: usize,
    cap: usize,
) -> Result<IdentityCheck<S>> {
    check_range(n, k, m)?;
    let table = SizeTable::<S>::build(dist, f, n, cap, true)?;
    lcov_from_table(dist, &table, n, k, m)
}

/// Expectations over the unconditioned tree restricted to |𝒯| ≤ N, i.e. of
/// f^(N) = f·1{|T| ≤ N} and its additive functional F^(N).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncatedMoments<S> {
    pub max_size: usize,
    /// μ^(N) = E f^(N)(𝒯)
    pub mu: S,
    /// E(f^(N)(𝒯)·F^(N)(𝒯))
    pub f_times_big_f: S,
    /// E(|𝒯|·f^(N)(𝒯))
    pub size_times_f: S,
    /// Var f^(N)(𝒯)
    pub var_f: S,
}

pub fn gw_truncated_moments<S: Scalar>(
    dist: &OffspringDistribution,
    f: &TollFunction,
    max_size: usize,
    cap: usize,
) -> Result<TruncatedMoments<S>> {
    let table = SizeTable::<S>::build(dist, f, max_size, cap, false)?;
    Ok(truncated_moments_from_table(&table))
}

pub fn truncated_moments_from_table<S: Scalar>(table: &SizeTable<S>) -> TruncatedMoments<S> {
    truncated_moments_prefix(table, table.max_size())
}

/// The moments for a smaller truncation level `max_size` ≤ the table size.
pub fn truncated_moments_prefix<S: Scalar>(table: &SizeTable<S>, max_size: usize) -> TruncatedMoments<S> {
    assert!(max_size <= table.max_size());
    let sizes = 1..=max_size;
    let mu = S::sum(sizes.clone().map(|s| table.at(s).f.clone()));
    let f_times_big_f = S::sum(sizes.clone().map(|s| table.at(s).f_big_f.clone()));
    let size_times_f = S::sum(sizes.clone().map(|s| S::from_i64(s as i64) * table.at(s).f.clone()));
    let f2 = S::sum(sizes.map(|s| table.at(s).f2.clone()));
    let var_f = f2 - mu.clone() * mu.clone();
    TruncatedMoments { max_size, mu, f_times_big_f, size_times_f, var_f }
}
