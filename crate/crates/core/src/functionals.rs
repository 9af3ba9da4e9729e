//! Toll functions and additive functionals `F(T) = Σ_v f(T_v)`.
//!
//! A toll is evaluated on a [`NodeView`]: one node of a tree together with
//! per-node data precomputed in linear time (fringe sizes and, for the
//! subtree-count toll, `s₁`). Built-in tolls therefore cost O(1) amortised
//! per node and `F` costs O(n) per tree.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_rational::BigRational;

use crate::error::{Error, Result};
use crate::offspring::parse_rational;
use crate::scalar::{ratio_to_f64, Scalar};
use crate::tree::Tree;

/// s₁ switches to the log domain above this value.
const S1_EXACT_LIMIT: u64 = 1 << 53;

/// A real coefficient, kept exact when it is rational.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient {
    pub approx: f64,
    pub exact: Option<BigRational>,
}

impl Coefficient {
    pub fn real(x: f64) -> Self {
        Self { approx: x, exact: None }
    }

    pub fn rational(r: BigRational) -> Self {
        Self { approx: ratio_to_f64(&r), exact: Some(r) }
    }

    pub fn integer(k: i64) -> Self {
        Self::rational(BigRational::from_integer(k.into()))
    }

    fn lift<S: Scalar>(&self) -> Option<S> {
        S::lift(self.approx, self.exact.clone())
    }
}

/// Number of fringe subtrees of the subtree rooted at a node, stored exactly
/// while it fits in 53 bits and as `ln s₁` beyond.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum S1 {
    Exact(u64),
    Log(f64),
}

impl S1 {
    pub fn ln(self) -> f64 {
        match self {
            S1::Exact(v) => (v as f64).ln(),
            S1::Log(l) => l,
        }
    }

    /// ln(1 + s₁)
    fn ln_one_plus(self) -> f64 {
        match self {
            S1::Exact(v) => (v as f64).ln_1p(),
            S1::Log(l) => l + (-l).exp().ln_1p(),
        }
    }

    /// ln(1 + 1/s₁)
    pub fn wagner_toll(self) -> f64 {
        match self {
            S1::Exact(v) => (1.0 / v as f64).ln_1p(),
            S1::Log(l) => (-l).exp().ln_1p(),
        }
    }
}

/// Per-node data for one tree, computed in a single backward pass.
#[derive(Debug, Clone)]
pub struct FringeData<'a> {
    degrees: &'a [u32],
    sizes: Vec<usize>,
    s1: Option<Vec<S1>>,
}

impl<'a> FringeData<'a> {
    pub fn new(tree: &'a Tree, with_s1: bool) -> Self {
        Self::from_degrees(tree.degrees(), with_s1)
    }

    /// `degrees` must be a valid degree sequence.
    pub fn from_degrees(degrees: &'a [u32], with_s1: bool) -> Self {
        let n = degrees.len();
        let mut sizes = vec![0usize; n];
        let mut s1 = if with_s1 { Some(vec![S1::Exact(1); n]) } else { None };
        let mut stack: Vec<usize> = Vec::new();
        for i in (0..n).rev() {
            let d = degrees[i] as usize;
            let mut size = 1;
            let mut exact = Some(1u64);
            let mut log = 0.0;
            for _ in 0..d {
                let child = stack.pop().expect("valid degree sequence");
                size += sizes[child];
                if let Some(s1) = &s1 {
                    let c = s1[child];
                    log += c.ln_one_plus();
                    exact = match (exact, c) {
                        (Some(acc), S1::Exact(v)) => acc.checked_mul(v + 1).filter(|&x| x <= S1_EXACT_LIMIT),
                        _ => None,
                    };
                }
            }
            sizes[i] = size;
            if let Some(s1) = &mut s1 {
                s1[i] = match exact {
                    Some(v) => S1::Exact(v),
                    None => S1::Log(log),
                };
            }
            stack.push(i);
        }
        Self { degrees, sizes, s1 }
    }

    pub fn len(&self) -> usize {
        self.degrees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degrees.is_empty()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn node(&self, index: usize) -> NodeView<'_> {
        NodeView { data: self, index }
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeView<'_>> + '_ {
        (0..self.len()).map(move |index| NodeView { data: self, index })
    }
}

/// One node of a tree, i.e. the fringe subtree rooted there.
#[derive(Debug, Clone, Copy)]
pub struct NodeView<'a> {
    data: &'a FringeData<'a>,
    index: usize,
}

impl<'a> NodeView<'a> {
    pub fn index(&self) -> usize {
        self.index
    }

    /// |T_v|
    pub fn size(&self) -> usize {
        self.data.sizes[self.index]
    }

    pub fn root_degree(&self) -> u32 {
        self.data.degrees[self.index]
    }

    /// Degree sequence of T_v.
    pub fn slice(&self) -> &'a [u32] {
        &self.data.degrees[self.index..self.index + self.size()]
    }

    pub fn children(&self) -> impl Iterator<Item = NodeView<'a>> + 'a {
        let data = self.data;
        let mut next = self.index + 1;
        (0..self.root_degree()).map(move |_| {
            let child = NodeView { data, index: next };
            next += data.sizes[next];
            child
        })
    }

    pub fn s1(&self) -> Option<S1> {
        self.data.s1.as_ref().map(|s| s[self.index])
    }

    pub fn is_protected(&self) -> bool {
        self.root_degree() > 0 && self.children().all(|c| c.root_degree() > 0)
    }

    pub fn to_tree(&self) -> Tree {
        Tree::from_degrees_unchecked(self.slice().to_vec())
    }
}

type CustomFn = Arc<dyn Fn(&NodeView<'_>) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Kind {
    Const(Coefficient),
    Leaf,
    Outdegree(u32),
    Pattern(Tree),
    Protected,
    NoGrandchildren,
    Wagner,
    SizeRange { inner: Box<TollFunction>, min: usize, max: usize },
    Linear(Vec<(Coefficient, TollFunction)>),
    Custom(CustomFn),
}

/// A real functional f on trees.
#[derive(Clone)]
pub struct TollFunction {
    kind: Kind,
    name: String,
    finite_support_bound: Option<usize>,
    local_cutoff: Option<usize>,
    bound: Option<f64>,
}

impl fmt::Debug for TollFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TollFunction")
            .field("name", &self.name)
            .field("finite_support_bound", &self.finite_support_bound)
            .field("local_cutoff", &self.local_cutoff)
            .field("bound", &self.bound)
            .finish()
    }
}

impl fmt::Display for TollFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl TollFunction {
    fn new(kind: Kind, name: impl Into<String>) -> Self {
        Self { kind, name: name.into(), finite_support_bound: None, local_cutoff: None, bound: None }
    }

    /// f ≡ c, so F(T) = c|T|.
    pub fn constant(c: Coefficient) -> Self {
        let bound = c.approx.abs();
        let name = match &c.exact {
            Some(r) => format!("const:{r}"),
            None => format!("const:{}", c.approx),
        };
        Self { local_cutoff: Some(0), bound: Some(bound), ..Self::new(Kind::Const(c), name) }
    }

    /// f(T) = 1{|T| = 1}; F counts leaves.
    pub fn leaf() -> Self {
        Self {
            finite_support_bound: Some(1),
            local_cutoff: Some(1),
            bound: Some(1.0),
            ..Self::new(Kind::Leaf, "leaf")
        }
    }

    /// f(T) = 1{root of T has outdegree r}; F counts nodes of outdegree r.
    pub fn outdegree(r: u32) -> Self {
        Self {
            finite_support_bound: (r == 0).then_some(1),
            local_cutoff: Some(1),
            bound: Some(1.0),
            ..Self::new(Kind::Outdegree(r), format!("outdeg:{r}"))
        }
    }

    /// f(T) = 1{T = pattern}; F(T) = n_pattern(T).
    pub fn pattern(pattern: Tree) -> Self {
        let name = format!("pattern:{pattern}");
        Self {
            finite_support_bound: Some(pattern.len()),
            local_cutoff: Some(pattern.height() + 1),
            bound: Some(1.0),
            ..Self::new(Kind::Pattern(pattern), name)
        }
    }

    /// f(T) = 1{root is neither a leaf nor the parent of a leaf}.
    pub fn protected() -> Self {
        Self { local_cutoff: Some(2), bound: Some(1.0), ..Self::new(Kind::Protected, "protected") }
    }

    /// f(T) = 1{T has no nodes of depth > 1}, i.e. T is a star (including
    /// the single node). Bounded, but its support is every star size.
    pub fn no_grandchildren() -> Self {
        Self {
            local_cutoff: Some(2),
            bound: Some(1.0),
            ..Self::new(Kind::NoGrandchildren, "nograndchild")
        }
    }

    /// f(T) = ln(1 + 1/s₁(T)) with s₁(T) = ∏_i (1 + s₁(T_i)) the number of
    /// subtrees of T containing the root; F(T) = ln(1 + s₁(T)).
    pub fn wagner_log_s1() -> Self {
        Self { bound: Some(std::f64::consts::LN_2), ..Self::new(Kind::Wagner, "wagner") }
    }

    pub fn custom(
        name: impl Into<String>,
        eval: impl Fn(&NodeView<'_>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::new(Kind::Custom(Arc::new(eval)), name)
    }

    /// Σ cᵢ·fᵢ
    pub fn linear(terms: Vec<(Coefficient, TollFunction)>) -> Self {
        let name = terms
            .iter()
            .map(|(c, f)| match &c.exact {
                Some(r) => format!("{r}*{f}"),
                None => format!("{}*{f}", c.approx),
            })
            .collect::<Vec<_>>()
            .join("+");
        let finite_support_bound = terms
            .iter()
            .map(|(_, f)| f.finite_support_bound)
            .try_fold(0usize, |acc, k| k.map(|k| acc.max(k)));
        let local_cutoff =
            terms.iter().map(|(_, f)| f.local_cutoff).try_fold(0usize, |acc, m| m.map(|m| acc.max(m)));
        let bound = terms
            .iter()
            .map(|(c, f)| f.bound.map(|b| b * c.approx.abs()))
            .try_fold(0.0, |acc, b| b.map(|b| acc + b));
        Self {
            finite_support_bound,
            local_cutoff,
            bound,
            ..Self::new(Kind::Linear(terms), format!("({name})"))
        }
    }

    /// f − c
    pub fn minus_constant(self, c: Coefficient) -> Self {
        let neg = Coefficient { approx: -c.approx, exact: c.exact.map(|r| -r) };
        Self::linear(vec![(Coefficient::integer(1), self), (neg, Self::constant(Coefficient::integer(1)))])
    }

    /// f·1{min ≤ |T| ≤ max}
    pub fn restricted(self, min: usize, max: usize) -> Self {
        let name = format!("{}[{min}..={max}]", self.name);
        let local_cutoff = None;
        let bound = self.bound;
        Self {
            finite_support_bound: Some(max),
            local_cutoff,
            bound,
            ..Self::new(Kind::SizeRange { inner: Box::new(self), min, max }, name)
        }
    }

    /// f_k = f·1{|T| = k}
    pub fn exact_size(self, k: usize) -> Self {
        self.restricted(k, k)
    }

    /// f^(N) = f·1{|T| ≤ N}
    pub fn truncated(self, n: usize) -> Self {
        self.restricted(1, n)
    }

    /// Some(r) when f is the indicator of root outdegree r (the leaf
    /// indicator is r = 0).
    pub fn degree_indicator(&self) -> Option<u32> {
        match &self.kind {
            Kind::Leaf => Some(0),
            Kind::Outdegree(r) => Some(*r),
            _ => None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// K with f(T) = 0 whenever |T| > K.
    pub fn finite_support_bound(&self) -> Option<usize> {
        self.finite_support_bound
    }

    /// M with f(T) = f(T^(M)).
    pub fn local_cutoff(&self) -> Option<usize> {
        self.local_cutoff
    }

    /// sup |f|, when known.
    pub fn bound(&self) -> Option<f64> {
        self.bound
    }

    pub fn needs_s1(&self) -> bool {
        match &self.kind {
            Kind::Wagner => true,
            Kind::SizeRange { inner, .. } => inner.needs_s1(),
            Kind::Linear(terms) => terms.iter().any(|(_, f)| f.needs_s1()),
            _ => false,
        }
    }

    /// True when `eval_in::<BigRational>` succeeds on every tree.
    pub fn is_rational(&self) -> bool {
        match &self.kind {
            Kind::Const(c) => c.exact.is_some(),
            Kind::Wagner | Kind::Custom(_) => false,
            Kind::SizeRange { inner, .. } => inner.is_rational(),
            Kind::Linear(terms) => terms.iter().all(|(c, f)| c.exact.is_some() && f.is_rational()),
            _ => true,
        }
    }

    fn indicator(&self, v: &NodeView<'_>) -> Option<bool> {
        Some(match &self.kind {
            Kind::Leaf => v.size() == 1,
            Kind::Outdegree(r) => v.root_degree() == *r,
            Kind::Pattern(p) => v.size() == p.len() && v.slice() == p.degrees(),
            Kind::Protected => v.is_protected(),
            Kind::NoGrandchildren => v.size() == v.root_degree() as usize + 1,
            _ => return None,
        })
    }

    pub fn eval(&self, v: &NodeView<'_>) -> f64 {
        if let Some(hit) = self.indicator(v) {
            return if hit { 1.0 } else { 0.0 };
        }
        match &self.kind {
            Kind::Const(c) => c.approx,
            Kind::Wagner => match v.s1() {
                Some(s1) => s1.wagner_toll(),
                None => wagner_toll_direct(v),
            },
            Kind::SizeRange { inner, min, max } => {
                if (*min..=*max).contains(&v.size()) {
                    inner.eval(v)
                } else {
                    0.0
                }
            }
            Kind::Linear(terms) => terms.iter().map(|(c, f)| c.approx * f.eval(v)).sum(),
            Kind::Custom(func) => func(v),
            _ => unreachable!("indicators handled above"),
        }
    }

    /// f(T_v) on the requested arithmetic path; `None` on the exact path
    /// when the value is not known to be rational.
    pub fn eval_in<S: Scalar>(&self, v: &NodeView<'_>) -> Option<S> {
        if !S::EXACT {
            return S::lift(self.eval(v), None);
        }
        if let Some(hit) = self.indicator(v) {
            return Some(S::from_i64(hit as i64));
        }
        match &self.kind {
            Kind::Const(c) => c.lift(),
            Kind::SizeRange { inner, min, max } => {
                if (*min..=*max).contains(&v.size()) {
                    inner.eval_in(v)
                } else {
                    Some(S::zero())
                }
            }
            Kind::Linear(terms) => {
                let mut acc = S::zero();
                for (c, f) in terms {
                    acc = acc + c.lift::<S>()? * f.eval_in::<S>(v)?;
                }
                Some(acc)
            }
            _ => None,
        }
    }

    /// Convenience: f(t) for a whole tree.
    pub fn eval_tree(&self, t: &Tree) -> f64 {
        let data = FringeData::new(t, self.needs_s1());
        self.eval(&data.node(0))
    }
}

/// ln(1 + 1/s₁) for one node without precomputed data.
fn wagner_toll_direct(v: &NodeView<'_>) -> f64 {
    let data = FringeData::from_degrees(v.slice(), true);
    data.node(0).s1().expect("s1 computed").wagner_toll()
}

impl FromStr for TollFunction {
    type Err = Error;

    /// `leaf`, `outdeg:r`, `pattern:2 0 0`, `protected`, `nograndchild`,
    /// `wagner`, `const:c`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "leaf" => return Ok(Self::leaf()),
            "protected" => return Ok(Self::protected()),
            "nograndchild" | "no_grandchildren" => return Ok(Self::no_grandchildren()),
            "wagner" => return Ok(Self::wagner_log_s1()),
            _ => {}
        }
        if let Some(r) = s.strip_prefix("outdeg:") {
            let r = r.trim().parse().map_err(|e| Error::Parse(format!("outdegree `{r}`: {e}")))?;
            return Ok(Self::outdegree(r));
        }
        if let Some(p) = s.strip_prefix("pattern:") {
            return Ok(Self::pattern(p.parse()?));
        }
        if let Some(c) = s.strip_prefix("const:") {
            let coef = match parse_rational(c) {
                Some(r) => Coefficient::rational(r),
                None => Coefficient::real(
                    c.trim().parse().map_err(|e| Error::Parse(format!("constant `{c}`: {e}")))?,
                ),
            };
            return Ok(Self::constant(coef));
        }
        Err(Error::Parse(format!("unknown functional `{s}`")))
    }
}

/// F(T) = Σ_v f(T_v).
#[allow(non_snake_case)]
pub fn F_additive(t: &Tree, f: &TollFunction) -> f64 {
    let data = FringeData::new(t, f.needs_s1());
    <f64 as Scalar>::sum(data.nodes().map(|v| f.eval(&v)))
}

/// F(T) on the requested arithmetic path.
#[allow(non_snake_case)]
pub fn F_additive_in<S: Scalar>(t: &Tree, f: &TollFunction) -> Option<S> {
    let data = FringeData::new(t, f.needs_s1());
    let mut acc = S::zero();
    for v in data.nodes() {
        acc = acc + f.eval_in::<S>(&v)?;
    }
    Some(acc)
}

/// `out[k] = F_k(T) = Σ_{v : |T_v| = k} f(T_v)` for k = 0..=|T|
/// (index 0 is always zero).
#[allow(non_snake_case)]
pub fn F_by_size<S: Scalar>(t: &Tree, f: &TollFunction) -> Option<Vec<S>> {
    let data = FringeData::new(t, f.needs_s1());
    let mut out = vec![S::zero(); t.len() + 1];
    for v in data.nodes() {
        let k = v.size();
        out[k] = out[k].clone() + f.eval_in::<S>(&v)?;
    }
    Some(out)
}

/// Counts n_P(T) for every pattern P with |P| ≤ k.
#[allow(non_snake_case)]
pub fn F_all_patterns(t: &Tree, k: usize) -> BTreeMap<Tree, usize> {
    let mut out = BTreeMap::new();
    let data = FringeData::new(t, false);
    for v in data.nodes().filter(|v| v.size() <= k) {
        *out.entry(v.to_tree()).or_insert(0) += 1;
    }
    out
}

/// Counts n_P(T) for a fixed list of patterns in one pass.
pub fn pattern_counts(t: &Tree, patterns: &[Tree]) -> Vec<usize> {
    let data = FringeData::new(t, false);
    let mut counts = vec![0usize; patterns.len()];
    let max = patterns.iter().map(Tree::len).max().unwrap_or(0);
    for v in data.nodes().filter(|v| v.size() <= max) {
        for (c, p) in counts.iter_mut().zip(patterns) {
            if v.size() == p.len() && v.slice() == p.degrees() {
                *c += 1;
            }
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rational;
    use proptest::prelude::*;

    fn t(s: &str) -> Tree {
        s.parse().unwrap()
    }

    /// All trees with n nodes, by brute force over sequences.
    fn all_trees(n: usize) -> Vec<Tree> {
        let mut out = Vec::new();
        let mut seq = vec![0u32; n];
        fn rec(seq: &mut Vec<u32>, i: usize, out: &mut Vec<Tree>) {
            if i == seq.len() {
                if crate::tree::validate(seq) {
                    out.push(Tree::from_degrees_unchecked(seq.clone()));
                }
                return;
            }
            for d in 0..seq.len() as u32 {
                seq[i] = d;
                rec(seq, i + 1, out);
            }
        }
        rec(&mut seq, 0, &mut out);
        out
    }

    #[test]
    fn additive_examples() {
        let one = TollFunction::constant(Coefficient::integer(1));
        assert_eq!(F_additive(&t("2 1 0 0"), &one), 4.0);
        assert_eq!(F_additive(&t("2 0 0"), &TollFunction::leaf()), 2.0);
        assert_eq!(F_additive(&t("1 1 0"), &TollFunction::pattern(t("1 0"))), 1.0);
        let x = t("2 1 0 1 0");
        assert_eq!(F_additive(&x, &TollFunction::pattern(x.clone())), 1.0);
    }

    #[test]
    fn protected_examples() {
        let p = TollFunction::protected();
        assert_eq!(p.eval_tree(&t("1 1 0")), 1.0);
        assert_eq!(p.eval_tree(&t("2 0 0")), 0.0);
        assert_eq!(p.eval_tree(&t("0")), 0.0);
        assert_eq!(F_additive(&t("2 1 1 0 1 0"), &p), 2.0);
    }

    #[test]
    fn no_grandchildren_is_star_indicator() {
        let f = TollFunction::no_grandchildren();
        assert_eq!(f.eval_tree(&t("0")), 1.0);
        assert_eq!(f.eval_tree(&t("3 0 0 0")), 1.0);
        assert_eq!(f.eval_tree(&t("1 1 0")), 0.0);
        // nodes whose children are all leaves: the two leaves and the middle node
        assert_eq!(F_additive(&t("2 0 1 0"), &f), 3.0);
    }

    #[test]
    fn wagner_examples() {
        let f = TollFunction::wagner_log_s1();
        assert!((f.eval_tree(&t("0")) - 2f64.ln()).abs() < 1e-15);
        assert!((f.eval_tree(&t("1 0")) - 1.5f64.ln()).abs() < 1e-15);
        assert!((f.eval_tree(&t("2 0 0")) - 1.25f64.ln()).abs() < 1e-15);
        // F(T) = ln(1 + s₁(T))
        let x = t("2 1 0 2 0 0");
        // s₁: leaves 1, node(1 0) 2, node(2 0 0) 4, root (1+2)(1+4) = 15
        assert!((F_additive(&x, &f) - 16f64.ln()).abs() < 1e-12);
        assert_eq!(FringeData::new(&x, true).node(0).s1(), Some(S1::Exact(15)));
    }

    #[test]
    fn wagner_log_domain_matches_exact() {
        // a star with 60 leaves has s₁ = 2^60, beyond the exact range
        let mut degrees = vec![60u32];
        degrees.extend(std::iter::repeat(0).take(60));
        let star = Tree::new(degrees).unwrap();
        let s1 = FringeData::new(&star, true).node(0).s1().unwrap();
        match s1 {
            S1::Log(l) => assert!((l - 60.0 * 2f64.ln()).abs() < 1e-12),
            S1::Exact(_) => panic!("expected log domain"),
        }
        let f = TollFunction::wagner_log_s1().eval_tree(&star);
        assert!((f - 2f64.powi(-60)).abs() < 1e-12 * f);
    }

    #[test]
    fn all_patterns_examples() {
        let counts = F_all_patterns(&t("2 0 0"), 1);
        assert_eq!(counts.into_iter().collect::<Vec<_>>(), vec![(t("0"), 2)]);
        let counts = F_all_patterns(&t("1 1 0"), 2);
        assert_eq!(counts.get(&t("0")), Some(&1));
        assert_eq!(counts.get(&t("1 0")), Some(&1));
        assert_eq!(counts.len(), 2);
        assert_eq!(pattern_counts(&t("2 1 0 0"), &[t("0"), t("1 0"), t("3 0 0 0")]), vec![2, 1, 0]);
    }

    #[test]
    fn parse_functionals() {
        for s in ["leaf", "outdeg:2", "pattern:2 0 0", "protected", "nograndchild", "wagner", "const:1"] {
            let f: TollFunction = s.parse().unwrap();
            assert_eq!(f.name(), s);
        }
        assert!("nope".parse::<TollFunction>().is_err());
        assert!("pattern:0 2 0".parse::<TollFunction>().is_err());
        let half: TollFunction = "const:1/2".parse().unwrap();
        assert_eq!(F_additive_in::<BigRational>(&t("1 0"), &half), Some(rational(1, 1)));
    }

    #[test]
    fn outdegree_zero_is_leaf_on_small_trees() {
        let (a, b) = (TollFunction::outdegree(0), TollFunction::leaf());
        for n in 1..=6 {
            for tree in all_trees(n) {
                let data = FringeData::new(&tree, false);
                for v in data.nodes() {
                    assert_eq!(a.eval(&v), b.eval(&v));
                }
            }
        }
    }

    #[test]
    fn protected_matches_parent_child_reconstruction() {
        let f = TollFunction::protected();
        for n in 1..=9 {
            for tree in all_trees(n) {
                // explicit parent array from the depth-first order
                let deg = tree.degrees();
                let mut parent = vec![usize::MAX; n];
                let mut stack: Vec<(usize, u32)> = Vec::new();
                for (i, &d) in deg.iter().enumerate() {
                    if let Some((p, left)) = stack.last_mut() {
                        parent[i] = *p;
                        *left -= 1;
                        if *left == 0 {
                            stack.pop();
                        }
                    }
                    if d > 0 {
                        stack.push((i, d));
                    }
                }
                let brute = (0..n)
                    .filter(|&v| {
                        let kids: Vec<usize> = (0..n).filter(|&c| parent[c] == v).collect();
                        !kids.is_empty() && kids.iter().all(|&c| deg[c] > 0)
                    })
                    .count();
                assert_eq!(F_additive(&tree, &f), brute as f64, "{tree}");
            }
        }
    }

    #[test]
    fn metadata_spot_checks() {
        let leaf = TollFunction::leaf();
        assert_eq!(leaf.finite_support_bound(), Some(1));
        assert_eq!(TollFunction::pattern(t("2 0 0")).finite_support_bound(), Some(3));
        assert_eq!(TollFunction::outdegree(2).local_cutoff(), Some(1));
        assert_eq!(TollFunction::protected().local_cutoff(), Some(2));
        assert!(TollFunction::wagner_log_s1().bound().is_some());
        assert!(!TollFunction::wagner_log_s1().is_rational());
    }

    fn small_tree() -> impl Strategy<Value = Tree> {
        (1usize..=40).prop_flat_map(|n| {
            proptest::collection::vec(0usize..n, n - 1).prop_map(move |cuts| {
                let mut seq = vec![0u32; n];
                for c in cuts {
                    seq[c] += 1;
                }
                Tree::from_cyclic(seq).unwrap()
            })
        })
    }

    fn battery() -> Vec<TollFunction> {
        vec![
            TollFunction::leaf(),
            TollFunction::outdegree(1),
            TollFunction::outdegree(2),
            TollFunction::pattern("1 0".parse().unwrap()),
            TollFunction::pattern("2 0 0".parse().unwrap()),
            TollFunction::protected(),
            TollFunction::no_grandchildren(),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn linearity_is_exact(tree in small_tree(), a in -5i64..5, b in 1i64..7, i in 0usize..7, j in 0usize..7) {
            let fs = battery();
            let (f, g) = (fs[i].clone(), fs[j].clone());
            let combo = TollFunction::linear(vec![
                (Coefficient::rational(rational(a, 3)), f.clone()),
                (Coefficient::rational(rational(1, b)), g.clone()),
            ]);
            let lhs: BigRational = F_additive_in(&tree, &combo).unwrap();
            let rhs = rational(a, 3) * F_additive_in::<BigRational>(&tree, &f).unwrap()
                + rational(1, b) * F_additive_in::<BigRational>(&tree, &g).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn size_decomposition_is_exact(tree in small_tree(), i in 0usize..7) {
            let f = battery()[i].clone();
            let whole: BigRational = F_additive_in(&tree, &f).unwrap();
            let by_size = F_by_size::<BigRational>(&tree, &f).unwrap();
            let parts: BigRational = (1..=tree.len())
                .map(|k| F_additive_in::<BigRational>(&tree, &f.clone().exact_size(k)).unwrap())
                .sum();
            prop_assert_eq!(&whole, &parts);
            prop_assert_eq!(whole, by_size.into_iter().sum::<BigRational>());
        }

        #[test]
        fn locality_and_support_hold(tree in small_tree(), i in 0usize..7) {
            let f = battery()[i].clone();
            let data = FringeData::new(&tree, false);
            for v in data.nodes() {
                let sub = v.to_tree();
                if let Some(m) = f.local_cutoff() {
                    prop_assert_eq!(f.eval(&v), f.eval_tree(&sub.truncate(m)));
                }
                if let Some(k) = f.finite_support_bound() {
                    if v.size() > k {
                        prop_assert_eq!(f.eval(&v), 0.0);
                    }
                }
            }
        }

        #[test]
        fn pattern_partition(tree in small_tree(), k in 1usize..6) {
            let counts = F_all_patterns(&tree, k);
            let sizes = tree.fringe_sizes();
            for size in 1..=k {
                let total: usize = counts.iter().filter(|(p, _)| p.len() == size).map(|(_, c)| c).sum();
                prop_assert_eq!(total, sizes.iter().filter(|&&s| s == size).count());
            }
            for (p, c) in &counts {
                prop_assert_eq!(*c, tree.subtree_count(p));
            }
        }

        #[test]
        fn wagner_bounds_small(tree in small_tree()) {
            let f = TollFunction::wagner_log_s1();
            let data = FringeData::new(&tree, true);
            for v in data.nodes() {
                let x = f.eval(&v);
                prop_assert!(x > 0.0 && x <= 1.0 / v.size() as f64 + 1e-15);
            }
        }
    }
}
