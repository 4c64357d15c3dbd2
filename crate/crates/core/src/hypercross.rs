//! Dyadic multi-index combinatorics.
//!
//! A multi-index `k ∈ ℕ^D` selects the dyadic frequency block
//! `ρ(k) = {s ∈ ℤ^D : 2^{k_i−1} ≤ |s_i| < 2^{k_i}}`, with the convention that a
//! zero level contributes the single frequency `s_i = 0`. The hyperbolic cross of
//! level `l` is the union of all blocks with `|k| = Σ k_i ≤ l`.
//!
//! Enumeration is lazy and canonical: multi-indices in lexicographic order, and
//! within a block the frequencies in lexicographic order.

use std::fmt;

use crate::error::{HxdError, Result};

/// Dyadic level vector `k`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        MultiIndex(entries)
    }

    pub fn zeros(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `|k| = Σ_i k_i`.
    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    /// Number of frequencies in `ρ(k)`, always `2^{|k|}`.
    pub fn block_len(&self) -> u64 {
        1u64 << self.order()
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// Signed frequency (Fourier) or translation (wavelet) vector `s`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FrequencyIndex(Vec<i64>);

impl FrequencyIndex {
    pub fn new(entries: Vec<i64>) -> Self {
        FrequencyIndex(entries)
    }

    pub fn zeros(dim: usize) -> Self {
        FrequencyIndex(vec![0; dim])
    }

    pub fn entries(&self) -> &[i64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Whether `s` lies in the Fourier block `ρ(k)`.
    pub fn in_block(&self, k: &MultiIndex) -> bool {
        self.0.len() == k.dim()
            && self
                .0
                .iter()
                .zip(k.entries())
                .all(|(&s, &ki)| level_of_frequency(s) == ki)
    }
}

impl fmt::Display for FrequencyIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// Dyadic level of a single frequency: 0 for `s = 0`, else `⌊log₂|s|⌋ + 1`.
pub fn level_of_frequency(s: i64) -> u32 {
    if s == 0 {
        0
    } else {
        64 - s.unsigned_abs().leading_zeros()
    }
}

/// Frequencies of one coordinate at level `k`, ascending.
pub fn block_frequencies_1d(k: u32) -> Vec<i64> {
    if k == 0 {
        return vec![0];
    }
    let lo = 1i64 << (k - 1);
    let hi = 1i64 << k;
    (-(hi - 1)..=-lo).chain(lo..hi).collect()
}

/// Lazily enumerates `ρ(k)` in lexicographic order.
pub fn enumerate_block(k: &MultiIndex) -> BlockIter {
    BlockIter::new(k.entries().iter().map(|&ki| block_frequencies_1d(ki)).collect())
}

/// Odometer over a cartesian product of per-coordinate value lists.
#[derive(Debug, Clone)]
pub struct BlockIter {
    axes: Vec<Vec<i64>>,
    cursor: Vec<usize>,
    done: bool,
}

impl BlockIter {
    pub(crate) fn new(axes: Vec<Vec<i64>>) -> Self {
        let done = axes.iter().any(|a| a.is_empty());
        BlockIter {
            cursor: vec![0; axes.len()],
            axes,
            done,
        }
    }
}

impl Iterator for BlockIter {
    type Item = FrequencyIndex;

    fn next(&mut self) -> Option<FrequencyIndex> {
        if self.done {
            return None;
        }
        let out = FrequencyIndex(
            self.cursor
                .iter()
                .zip(&self.axes)
                .map(|(&c, axis)| axis[c])
                .collect(),
        );
        // advance the last coordinate first so output stays lexicographic
        let mut d = self.axes.len();
        loop {
            if d == 0 {
                self.done = true;
                break;
            }
            d -= 1;
            self.cursor[d] += 1;
            if self.cursor[d] < self.axes[d].len() {
                break;
            }
            self.cursor[d] = 0;
        }
        Some(out)
    }
}

/// Lazily enumerates all `k ∈ ℕ^D` with `|k| ≤ l` in lexicographic order.
#[derive(Debug, Clone)]
pub struct MultiIndexIter {
    current: Option<Vec<u32>>,
    level: u32,
}

impl MultiIndexIter {
    pub fn new(dim: usize, level: u32) -> Self {
        MultiIndexIter {
            current: if dim == 0 { None } else { Some(vec![0; dim]) },
            level,
        }
    }
}

impl Iterator for MultiIndexIter {
    type Item = MultiIndex;

    fn next(&mut self) -> Option<MultiIndex> {
        let cur = self.current.take()?;
        let out = MultiIndex(cur.clone());
        let mut next = cur;
        let mut sum: u32 = next.iter().sum();
        let mut d = next.len();
        loop {
            if d == 0 {
                return Some(out);
            }
            d -= 1;
            if sum < self.level {
                next[d] += 1;
                self.current = Some(next);
                return Some(out);
            }
            sum -= next[d];
            next[d] = 0;
        }
    }
}

/// The hyperbolic cross `{(k, s) : |k| ≤ l, s ∈ ρ(k)}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HyperbolicCross {
    dimension: usize,
    level: u32,
}

impl HyperbolicCross {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Multi-indices of the cross in canonical order.
    pub fn multi_indices(&self) -> MultiIndexIter {
        MultiIndexIter::new(self.dimension, self.level)
    }

    /// All `(k, ρ(k))` blocks, lazily.
    pub fn blocks(&self) -> impl Iterator<Item = (MultiIndex, BlockIter)> {
        self.multi_indices().map(|k| {
            let it = enumerate_block(&k);
            (k, it)
        })
    }

    /// Flat iterator over every `(k, s)` pair.
    pub fn indices(&self) -> impl Iterator<Item = (MultiIndex, FrequencyIndex)> {
        self.multi_indices().flat_map(|k| {
            let it = enumerate_block(&k);
            it.map(move |s| (k.clone(), s))
        })
    }

    pub fn contains(&self, k: &MultiIndex, s: &FrequencyIndex) -> bool {
        k.dim() == self.dimension && k.order() <= self.level && s.in_block(k)
    }

    /// Total number of frequencies, `Σ_{i≤l} 2^i · C(i+D−1, D−1)`.
    pub fn cardinality(&self) -> u128 {
        cross_cardinality(self.dimension, self.level)
    }

    /// Number of multi-indices with `|k| ≤ l`, i.e. `C(l+D, D)`.
    pub fn block_count(&self) -> u128 {
        binomial(self.level as u64 + self.dimension as u64, self.dimension as u64)
    }
}

/// Builds the level-`l` hyperbolic cross in `D` dimensions.
pub fn enumerate_cross(dim: usize, level: u32) -> Result<HyperbolicCross> {
    if dim == 0 {
        return Err(HxdError::InvalidArgument("dimension must be at least 1".into()));
    }
    Ok(HyperbolicCross {
        dimension: dim,
        level,
    })
}

/// Number of `k ∈ ℕ^D` with `|k| = i`: `C(i+D−1, D−1)`.
pub fn count_order(dim: usize, order: u32) -> u128 {
    binomial(order as u64 + dim as u64 - 1, dim as u64 - 1)
}

/// `Σ_{i=0}^{l} 2^i · C(i+D−1, D−1)`.
pub fn cross_cardinality(dim: usize, level: u32) -> u128 {
    (0..=level)
        .map(|i| (1u128 << i) * count_order(dim, i))
        .sum()
}

/// Exact binomial coefficient.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) at every step
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Closed form of `Σ_{i=0}^{l−1} x^i C(i+D−1, D−1)`.
///
/// Built from the geometric base case `S₁ = (1 − x^l)/(1 − x)` and the
/// hockey-stick recursion `S_D = (S_{D−1} − x^l C(l+D−2, D−1)) / (1 − x)`.
pub fn geometric_binomial_sum(x: f64, l: u32, dim: usize) -> Result<f64> {
    if x == 1.0 {
        return Err(HxdError::Singular(
            "closed form is singular at x = 1; use the literal sum".into(),
        ));
    }
    if dim == 0 {
        return Err(HxdError::InvalidArgument("dimension must be at least 1".into()));
    }
    if l < 2 {
        return Err(HxdError::InvalidArgument("level must be at least 2".into()));
    }
    let xl = x.powi(l as i32);
    let mut s = (1.0 - xl) / (1.0 - x);
    for d in 2..=dim {
        let c = binomial(l as u64 + d as u64 - 2, d as u64 - 1) as f64;
        s = (s - xl * c) / (1.0 - x);
    }
    Ok(s)
}

/// Literal `Σ_{i=0}^{l−1} x^i C(i+D−1, D−1)`.
pub fn geometric_binomial_sum_literal(x: f64, l: u32, dim: usize) -> f64 {
    (0..l)
        .map(|i| x.powi(i as i32) * count_order(dim, i) as f64)
        .sum()
}

/// Exact tail `Σ_{|k| > l+D−1} 2^{−s|k|}` over `k ∈ ℕ^D`.
///
/// With `q = 2^{−s}` the tail equals `Σ_{i ≥ m} q^i C(i+D−1, D−1)` for
/// `m = l + D`, which is the full series `(1−q)^{−D}` minus the head.
pub fn tail_weight(s: f64, l: u32, dim: usize) -> Result<f64> {
    if !(s > 0.0) {
        return Err(HxdError::InvalidArgument(
            "tail sum diverges for non-positive smoothness".into(),
        ));
    }
    if dim == 0 {
        return Err(HxdError::InvalidArgument("dimension must be at least 1".into()));
    }
    let q = (-s * std::f64::consts::LN_2).exp();
    let start = l as u64 + dim as u64;
    // Direct summation of the tail: terms decay geometrically once i ≫ D/(1−q),
    // so cancellation against (1−q)^{−D} is avoided.
    let mut total = 0.0;
    let mut i = start;
    let mut term = q.powf(start as f64) * binomial(start + dim as u64 - 1, dim as u64 - 1) as f64;
    loop {
        total += term;
        // ratio term(i+1)/term(i) = q (i + D) / (i + 1)
        let ratio = q * (i as f64 + dim as f64) / (i as f64 + 1.0);
        term *= ratio;
        i += 1;
        if ratio < 1.0 && term < total * 1e-18 {
            break;
        }
        if i > start + 100_000 {
            break;
        }
    }
    Ok(total)
}
