//! Random Galton–Watson trees: unconditioned, conditioned on size, and the
//! height-truncated size-biased (Kesten) tree.
//!
//! Conditioned trees use the cycle lemma: an i.i.d. offspring vector
//! conditioned on summing to `n - 1`, rotated to its unique valid rotation,
//! is distributed exactly as the conditioned tree `𝒯_n`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::offspring::{Family, OffspringDistribution};
use crate::scalar::Scalar;
use crate::tree::Tree;

/// Node budget for a single Kesten draw before it is discarded.
const KESTEN_NODE_CAP: usize = 10_000_000;
const KESTEN_ATTEMPTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Draw n offspring counts until they sum to n - 1.
    Rejection,
    /// Draw the conditioned offspring vector directly as a uniform
    /// allocation: multinomial for Poisson(1), uniform weak composition for
    /// Geometric(1/2), uniform coin subset for Binomial(2, 1/2) and uniform
    /// node subset for full r-ary. Other distributions use rejection.
    #[default]
    MultinomialShortcut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub method: Method,
    /// `None` uses 50·√n rounds.
    pub max_rejection_rounds: Option<u64>,
    /// For unconditioned sampling.
    pub size_cap: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { method: Method::default(), max_rejection_rounds: None, size_cap: 1_000_000 }
    }
}

impl SamplerConfig {
    pub fn rejection() -> Self {
        Self { method: Method::Rejection, ..Self::default() }
    }

    fn rounds(&self, n: usize) -> u64 {
        self.max_rejection_rounds.unwrap_or_else(|| ((50.0 * (n as f64).sqrt()).ceil() as u64).max(50)).max(1)
    }
}

fn check_span(dist: &OffspringDistribution, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("tree size must be at least 1".into()));
    }
    let h = dist.span() as usize;
    if (n - 1) % h != 0 {
        return Err(Error::SpanMismatch { n, span: dist.span() });
    }
    Ok(())
}

/// Draws `𝒯_n` exactly.
pub fn sample_conditioned<R: Rng + ?Sized>(
    dist: &OffspringDistribution,
    n: usize,
    rng: &mut R,
    cfg: &SamplerConfig,
) -> Result<Tree> {
    let mut buf = Vec::with_capacity(n);
    conditioned_degrees_into(dist, n, rng, cfg, &mut buf)?;
    Tree::from_cyclic(buf)
}

/// Fills `out` with the degree sequence of a draw of `𝒯_n`, reusing its
/// allocation.
pub fn conditioned_degrees_into<R: Rng + ?Sized>(
    dist: &OffspringDistribution,
    n: usize,
    rng: &mut R,
    cfg: &SamplerConfig,
    out: &mut Vec<u32>,
) -> Result<()> {
    check_span(dist, n)?;
    out.clear();
    let shortcut = cfg.method == Method::MultinomialShortcut;
    match dist.family() {
        Family::PoissonOne if shortcut => {
            out.resize(n, 0);
            for _ in 0..n - 1 {
                out[rng.gen_range(0..n)] += 1;
            }
        }
        Family::GeometricHalf if shortcut => {
            // n - 1 stars and n - 1 bars; ξ_i counts stars before the i-th bar
            let mut current = 0u32;
            select_subset(2 * n - 2, n - 1, rng, |is_star| {
                if is_star {
                    current += 1;
                } else {
                    out.push(current);
                    current = 0;
                }
            });
            out.push(current);
        }
        Family::BinomialTwoHalf if shortcut => {
            out.resize(n, 0);
            let mut coin = 0usize;
            select_subset(2 * n, n - 1, rng, |heads| {
                if heads {
                    out[coin / 2] += 1;
                }
                coin += 1;
            });
        }
        Family::FullRary(r) if shortcut => {
            let r = *r;
            select_subset(n, (n - 1) / r as usize, rng, |internal| out.push(if internal { r } else { 0 }));
        }
        _ => rejection_into(dist, n, rng, cfg.rounds(n), out)?,
    }
    let r = crate::tree::cycle_lemma_rotate(out)?;
    out.rotate_left(r);
    Ok(())
}

/// Selection sampling: visits `population` slots in order and reports
/// whether each belongs to a uniform random subset of size `k`.
fn select_subset<R: Rng + ?Sized>(population: usize, k: usize, rng: &mut R, mut visit: impl FnMut(bool)) {
    let mut needed = k;
    for seen in 0..population {
        let remaining = population - seen;
        let take = needed > 0 && (needed == remaining || rng.gen_range(0..remaining) < needed);
        if take {
            needed -= 1;
        }
        visit(take);
    }
}

fn rejection_into<R: Rng + ?Sized>(
    dist: &OffspringDistribution,
    n: usize,
    rng: &mut R,
    rounds: u64,
    out: &mut Vec<u32>,
) -> Result<()> {
    let target = n - 1;
    for _ in 0..rounds {
        out.clear();
        let mut sum = 0usize;
        for _ in 0..n {
            let d = dist.sample(rng);
            sum += d;
            if sum > target {
                break;
            }
            out.push(d as u32);
        }
        if sum == target && out.len() == n {
            return Ok(());
        }
    }
    Err(Error::RejectionBudgetExceeded { rounds })
}

/// Fraction of `rounds` i.i.d. offspring vectors of length `n` whose sum is
/// `n - 1`.
pub fn rejection_acceptance_rate<R: Rng + ?Sized>(
    dist: &OffspringDistribution,
    n: usize,
    rounds: u64,
    rng: &mut R,
) -> f64 {
    let target = n - 1;
    let mut accepted = 0u64;
    for _ in 0..rounds {
        let mut sum = 0usize;
        let mut i = 0;
        while i < n && sum <= target {
            sum += dist.sample(rng);
            i += 1;
        }
        if i == n && sum == target {
            accepted += 1;
        }
    }
    accepted as f64 / rounds as f64
}

/// Draws the unconditioned tree 𝒯 depth-first, giving up once it has more
/// than `size_cap` nodes.
pub fn sample_unconditioned<R: Rng + ?Sized>(
    dist: &OffspringDistribution,
    rng: &mut R,
    size_cap: usize,
) -> Result<Tree> {
    let mut degrees = Vec::new();
    let mut open: usize = 1;
    while open > 0 {
        if degrees.len() == size_cap {
            return Err(Error::Overflow { cap: size_cap });
        }
        let d = dist.sample(rng);
        degrees.push(d as u32);
        open = open - 1 + d;
    }
    Ok(Tree::from_degrees_unchecked(degrees))
}

/// Draws the first `depth` generations of the size-biased tree, with the
/// nodes at `depth` made leaves.
pub fn sample_kesten_truncated<R: Rng + ?Sized>(
    dist: &OffspringDistribution,
    depth: usize,
    rng: &mut R,
) -> Result<Tree> {
    for _ in 0..KESTEN_ATTEMPTS {
        if let Some(t) = try_kesten(dist, depth, rng) {
            return Ok(t);
        }
    }
    Err(Error::Overflow { cap: KESTEN_NODE_CAP })
}

fn try_kesten<R: Rng + ?Sized>(dist: &OffspringDistribution, depth: usize, rng: &mut R) -> Option<Tree> {
    let mut degrees = Vec::new();
    // pending nodes: (depth, on the spine)
    let mut stack = vec![(0usize, true)];
    while let Some((level, spine)) = stack.pop() {
        if degrees.len() >= KESTEN_NODE_CAP {
            return None;
        }
        if level == depth {
            degrees.push(0);
            continue;
        }
        if spine {
            let k = dist.sample_size_biased(rng);
            let heir = rng.gen_range(0..k);
            degrees.push(k as u32);
            stack.extend((0..k).rev().map(|c| (level + 1, c == heir)));
        } else {
            let k = dist.sample(rng);
            degrees.push(k as u32);
            stack.extend(std::iter::repeat((level + 1, false)).take(k));
        }
    }
    Some(Tree::from_degrees_unchecked(degrees))
}

/// P(Ĥ^(M) = t) = w_M(t)·∏_{depth(v) < M} p_{d_v}, with w_M(t) the number of
/// nodes of t at depth M.
pub fn kesten_pmf_truncated<S: Scalar>(dist: &OffspringDistribution, t: &Tree, depth: usize) -> Result<S> {
    let depths = t.depths();
    let height = depths.iter().copied().max().unwrap_or(0);
    if height > depth {
        return Err(Error::HeightExceeded { height, depth });
    }
    let width = depths.iter().filter(|&&d| d == depth).count();
    let mut p = S::from_i64(width as i64);
    for (&d, &level) in t.degrees().iter().zip(&depths) {
        if level < depth {
            p = p * dist.pmf_in::<S>(d as usize)?;
        }
    }
    Ok(p)
}
