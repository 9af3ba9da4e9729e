//! Ordered rooted trees stored as depth-first outdegree sequences.
//!
//! A sequence `(d_1, ..., d_n)` is the degree sequence of a tree iff every
//! proper prefix sum `d_1 + ... + d_j` is at least `j` and the total is
//! `n - 1`. The fringe subtree of node `i` is the contiguous slice
//! starting at `i` whose length is the subtree size.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::offspring::OffspringDistribution;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tree {
    degrees: Vec<u32>,
}

/// The fringe subtree of the node at `start` (0-based) occupies
/// `degrees[start..start + len]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct FringeSlice {
    pub start: usize,
    pub len: usize,
}

/// True iff `seq` is the depth-first degree sequence of an ordered tree.
pub fn validate(seq: &[u32]) -> bool {
    if seq.is_empty() {
        return false;
    }
    // open = number of nodes announced but not yet visited
    let mut open: i64 = 1;
    for (j, &d) in seq.iter().enumerate() {
        open += d as i64 - 1;
        if open == 0 {
            return j + 1 == seq.len();
        }
    }
    false
}

/// Index `r` such that `seq[r..] ++ seq[..r]` is a valid degree sequence.
///
/// With the walk `W_j = Σ_{i≤j} (d_i - 1)`, `W_n = -1`, the valid rotation
/// starts right after the first index where `W` attains its minimum; it is
/// the only valid rotation.
pub fn cycle_lemma_rotate(seq: &[u32]) -> Result<usize> {
    let n = seq.len();
    let sum: u64 = seq.iter().map(|&d| d as u64).sum();
    if n == 0 || sum != n as u64 - 1 {
        return Err(Error::BadSum { sum, expected: (n as u64).saturating_sub(1) });
    }
    let mut walk: i64 = 0;
    let mut min = i64::MAX;
    let mut argmin = 0;
    for (j, &d) in seq.iter().enumerate() {
        walk += d as i64 - 1;
        if walk < min {
            min = walk;
            argmin = j + 1;
        }
    }
    Ok(argmin % n)
}

impl Tree {
    pub fn new(degrees: Vec<u32>) -> Result<Self> {
        if validate(&degrees) {
            Ok(Self { degrees })
        } else {
            Err(Error::InvalidTree(format!("{degrees:?}")))
        }
    }

    /// Caller guarantees `validate(&degrees)`.
    pub fn from_degrees_unchecked(degrees: Vec<u32>) -> Self {
        debug_assert!(validate(&degrees), "{degrees:?}");
        Self { degrees }
    }

    /// Rotates a sequence with sum `n - 1` into the unique valid tree.
    pub fn from_cyclic(mut seq: Vec<u32>) -> Result<Self> {
        let r = cycle_lemma_rotate(&seq)?;
        seq.rotate_left(r);
        Ok(Self::from_degrees_unchecked(seq))
    }

    pub fn single() -> Self {
        Self { degrees: vec![0] }
    }

    pub fn degrees(&self) -> &[u32] {
        &self.degrees
    }

    pub fn into_degrees(self) -> Vec<u32> {
        self.degrees
    }

    /// Number of nodes, |T|.
    pub fn len(&self) -> usize {
        self.degrees.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn leaves(&self) -> usize {
        self.degrees.iter().filter(|&&d| d == 0).count()
    }

    /// Depth of every node, in depth-first order.
    pub fn depths(&self) -> Vec<usize> {
        let mut depths = Vec::with_capacity(self.len());
        // stack of (depth of pending children, how many remain)
        let mut stack: Vec<(usize, u32)> = Vec::new();
        for &d in &self.degrees {
            let depth = match stack.last_mut() {
                None => 0,
                Some((depth, remaining)) => {
                    let depth = *depth;
                    *remaining -= 1;
                    if *remaining == 0 {
                        stack.pop();
                    }
                    depth
                }
            };
            depths.push(depth);
            if d > 0 {
                stack.push((depth + 1, d));
            }
        }
        depths
    }

    pub fn height(&self) -> usize {
        self.depths().into_iter().max().unwrap_or(0)
    }

    /// Size of the fringe subtree rooted at every node.
    pub fn fringe_sizes(&self) -> Vec<usize> {
        let n = self.len();
        let mut sizes = vec![0usize; n];
        let mut stack: Vec<usize> = Vec::new();
        for i in (0..n).rev() {
            let d = self.degrees[i] as usize;
            let mut size = 1;
            for _ in 0..d {
                size += stack.pop().expect("valid tree");
            }
            sizes[i] = size;
            stack.push(size);
        }
        sizes
    }

    pub fn fringe_slices(&self) -> Vec<FringeSlice> {
        self.fringe_sizes()
            .into_iter()
            .enumerate()
            .map(|(start, len)| FringeSlice { start, len })
            .collect()
    }

    /// The fringe subtree at node `i`.
    pub fn fringe(&self, slice: FringeSlice) -> Tree {
        Tree::from_degrees_unchecked(self.degrees[slice.start..slice.start + slice.len].to_vec())
    }

    /// n_pattern(self): the number of fringe subtrees equal to `pattern`.
    pub fn subtree_count(&self, pattern: &Tree) -> usize {
        let k = pattern.len();
        if k > self.len() {
            return 0;
        }
        self.fringe_sizes()
            .iter()
            .enumerate()
            .filter(|&(i, &size)| size == k && self.degrees[i..i + k] == pattern.degrees[..])
            .count()
    }

    /// The tree restricted to nodes of depth at most `depth`.
    pub fn truncate(&self, depth: usize) -> Tree {
        let depths = self.depths();
        let degrees = self
            .degrees
            .iter()
            .zip(&depths)
            .filter(|(_, &dep)| dep <= depth)
            .map(|(&d, &dep)| if dep == depth { 0 } else { d })
            .collect();
        Tree::from_degrees_unchecked(degrees)
    }

    /// Number of nodes at exactly `depth`.
    pub fn width_at(&self, depth: usize) -> usize {
        self.depths().into_iter().filter(|&d| d == depth).count()
    }

    /// P(𝒯 = self) = ∏ p_{d_v} for the unconditioned Galton–Watson tree.
    pub fn weight(&self, dist: &OffspringDistribution) -> f64 {
        self.degrees.iter().map(|&d| dist.pmf(d as usize)).product()
    }

    pub fn weight_in<S: Scalar>(&self, dist: &OffspringDistribution) -> Result<S> {
        let mut w = S::one();
        for &d in &self.degrees {
            w = w * dist.pmf_in::<S>(d as usize)?;
        }
        Ok(w)
    }
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.degrees.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl FromStr for Tree {
    type Err = Error;

    /// Parses a whitespace- or comma-separated degree sequence, e.g. `2 0 0`.
    fn from_str(s: &str) -> Result<Self> {
        let degrees = s
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|x| !x.is_empty())
            .map(|x| x.trim_matches(['(', ')']).parse::<u32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse(format!("degree sequence `{s}`: {e}")))?;
        Tree::new(degrees)
    }
}

impl Serialize for Tree {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.degrees.serialize(serializer)
    }
}
