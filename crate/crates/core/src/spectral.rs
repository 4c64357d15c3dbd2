//! Coefficient tables over a hyperbolic cross and the algebra on them:
//! mixed Sobolev norms, the Sobolev-ball integral probability metric,
//! projection of known functions and discriminator smoothing.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::ahce::SmoothingPolicy;
use crate::basis::BasisKind;
use crate::error::{HxdError, Result};
use crate::hypercross::{FrequencyIndex, MultiIndex};
use crate::quadrature::{GaussLegendre, Rule1d};

/// `(k, s)` key; ordering is lexicographic in `k`, then in `s`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BasisKey {
    pub k: MultiIndex,
    pub s: FrequencyIndex,
}

impl BasisKey {
    pub fn new(k: MultiIndex, s: FrequencyIndex) -> Self {
        BasisKey { k, s }
    }

    pub fn dc(dim: usize) -> Self {
        BasisKey {
            k: MultiIndex::zeros(dim),
            s: FrequencyIndex::zeros(dim),
        }
    }

    pub fn order(&self) -> u32 {
        self.k.order()
    }
}

/// Immutable sparse table `(k, s) → c_{k,s}` supported on a level-`l` cross.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable {
    basis: BasisKind,
    dim: usize,
    level: u32,
    coeffs: BTreeMap<BasisKey, f64>,
}

impl CoefficientTable {
    /// Builds a table, checking every key belongs to the level-`l` cross.
    pub fn new(
        basis: BasisKind,
        dim: usize,
        level: u32,
        coeffs: impl IntoIterator<Item = (BasisKey, f64)>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(HxdError::InvalidArgument("dimension must be at least 1".into()));
        }
        let mut map = BTreeMap::new();
        for (key, c) in coeffs {
            if key.k.dim() != dim || key.s.dim() != dim {
                return Err(HxdError::DimensionMismatch {
                    expected: dim,
                    found: key.k.dim(),
                });
            }
            if key.order() > level || !basis.contains(&key.k, &key.s) {
                return Err(HxdError::InvalidArgument(format!(
                    "index {} {} is outside the level-{level} {basis} cross",
                    key.k, key.s
                )));
            }
            map.insert(key, c);
        }
        Ok(CoefficientTable {
            basis,
            dim,
            level,
            coeffs: map,
        })
    }

    pub fn empty(basis: BasisKind, dim: usize, level: u32) -> Self {
        CoefficientTable {
            basis,
            dim,
            level,
            coeffs: BTreeMap::new(),
        }
    }

    /// The uniform density: a single DC coefficient equal to 1.
    pub fn constant(basis: BasisKind, dim: usize, level: u32, value: f64) -> Self {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(BasisKey::dc(dim), value);
        CoefficientTable {
            basis,
            dim,
            level,
            coeffs,
        }
    }

    pub fn basis(&self) -> BasisKind {
        self.basis
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn get(&self, key: &BasisKey) -> f64 {
        self.coeffs.get(key).copied().unwrap_or(0.0)
    }

    /// Entries in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = (&BasisKey, f64)> {
        self.coeffs.iter().map(|(k, &v)| (k, v))
    }

    fn check_compatible(&self, other: &CoefficientTable) -> Result<()> {
        if self.basis != other.basis {
            return Err(HxdError::BasisMismatch(format!(
                "{} vs {}",
                self.basis, other.basis
            )));
        }
        if self.dim != other.dim {
            return Err(HxdError::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(())
    }

    /// `self − other` over the union of supports.
    pub fn difference(&self, other: &CoefficientTable) -> Result<CoefficientTable> {
        self.check_compatible(other)?;
        let mut coeffs = self.coeffs.clone();
        for (k, v) in &other.coeffs {
            *coeffs.entry(k.clone()).or_insert(0.0) -= v;
        }
        Ok(CoefficientTable {
            basis: self.basis,
            dim: self.dim,
            level: self.level.max(other.level),
            coeffs,
        })
    }

    pub fn scaled(&self, factor: f64) -> CoefficientTable {
        CoefficientTable {
            coeffs: self.coeffs.iter().map(|(k, v)| (k.clone(), v * factor)).collect(),
            ..self.clone()
        }
    }

    /// Keeps the entries with `|k| ≤ level`.
    pub fn truncated(&self, level: u32) -> CoefficientTable {
        CoefficientTable {
            basis: self.basis,
            dim: self.dim,
            level: self.level.min(level),
            coeffs: self
                .coeffs
                .iter()
                .filter(|(k, _)| k.order() <= level)
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
        }
    }

    /// Multiplies each entry by `b(key)`, dropping entries whose multiplier is 0.
    pub fn smoothed_with(&self, mut b: impl FnMut(&BasisKey) -> f64) -> CoefficientTable {
        let coeffs = self
            .coeffs
            .iter()
            .filter_map(|(k, v)| {
                let m = b(k);
                (m != 0.0).then(|| (k.clone(), m * v))
            })
            .collect();
        CoefficientTable {
            basis: self.basis,
            dim: self.dim,
            level: self.level,
            coeffs,
        }
    }

    /// Inner product `Σ a_{k,s} b_{k,s}`, i.e. `∫ f g` by orthonormality.
    pub fn dot(&self, other: &CoefficientTable) -> Result<f64> {
        self.check_compatible(other)?;
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        Ok(small.iter().map(|(k, v)| v * large.get(k)).sum())
    }

    /// Reusable fast evaluator.
    pub fn compile(&self) -> CompiledTable {
        CompiledTable::new(self)
    }

    /// CSV layout: a `dim,level,basis` header line, a value line, then one
    /// `k_1..k_D,s_1..s_D,coeff` row per entry in canonical order.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "dim,level,basis")?;
        writeln!(w, "{},{},{}", self.dim, self.level, self.basis)?;
        for (key, c) in &self.coeffs {
            let mut fields: Vec<String> = key.k.entries().iter().map(|v| v.to_string()).collect();
            fields.extend(key.s.entries().iter().map(|v| v.to_string()));
            fields.push(format!("{c}"));
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r
            .lines()
            .enumerate()
            .filter(|(_, l)| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true));
        let bad = |n: usize, msg: &str| HxdError::Parse(format!("line {}: {msg}", n + 1));
        let (n0, header) = lines.next().ok_or_else(|| bad(0, "missing header"))?;
        if header?.trim() != "dim,level,basis" {
            return Err(bad(n0, "expected 'dim,level,basis'"));
        }
        let (n1, meta) = lines.next().ok_or_else(|| bad(1, "missing metadata"))?;
        let meta = meta?;
        let parts: Vec<&str> = meta.trim().split(',').collect();
        if parts.len() != 3 {
            return Err(bad(n1, "metadata needs dim,level,basis"));
        }
        let dim: usize = parts[0].trim().parse().map_err(|_| bad(n1, "bad dim"))?;
        let level: u32 = parts[1].trim().parse().map_err(|_| bad(n1, "bad level"))?;
        let basis: BasisKind = parts[2].parse()?;
        let mut entries = Vec::new();
        for (n, line) in lines {
            let line = line?;
            let f: Vec<&str> = line.trim().split(',').collect();
            if f.len() != 2 * dim + 1 {
                return Err(bad(n, "wrong number of fields"));
            }
            let k = f[..dim]
                .iter()
                .map(|v| v.trim().parse::<u32>().map_err(|_| bad(n, "bad level index")))
                .collect::<Result<Vec<_>>>()?;
            let s = f[dim..2 * dim]
                .iter()
                .map(|v| v.trim().parse::<i64>().map_err(|_| bad(n, "bad frequency")))
                .collect::<Result<Vec<_>>>()?;
            let c: f64 = f[2 * dim].trim().parse().map_err(|_| bad(n, "bad coefficient"))?;
            entries.push((BasisKey::new(MultiIndex::new(k), FrequencyIndex::new(s)), c));
        }
        // canonical order is part of the format
        if entries.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(HxdError::Parse("rows are not in canonical order".into()));
        }
        CoefficientTable::new(basis, dim, level, entries)
    }
}

/// Table flattened to `(coefficient, per-dimension feature offsets)`.
#[derive(Debug, Clone)]
pub struct CompiledTable {
    basis: BasisKind,
    dim: usize,
    level: u32,
    coeffs: Vec<f64>,
    offsets: Vec<u32>,
}

impl CompiledTable {
    fn new(t: &CoefficientTable) -> Self {
        let max_k = t
            .coeffs
            .keys()
            .flat_map(|k| k.k.entries().iter().copied())
            .max()
            .unwrap_or(0);
        let mut coeffs = Vec::with_capacity(t.len());
        let mut offsets = Vec::with_capacity(t.len() * t.dim);
        for (key, &c) in &t.coeffs {
            coeffs.push(c);
            for (&k, &s) in key.k.entries().iter().zip(key.s.entries()) {
                offsets.push(t.basis.offset_1d(k, s) as u32);
            }
        }
        CompiledTable {
            basis: t.basis,
            dim: t.dim,
            level: max_k,
            coeffs,
            offsets,
        }
    }

    /// Per-dimension features of `x`; reuse across tables of the same level.
    pub fn features(&self, x: &[f64]) -> Vec<Vec<f64>> {
        x.iter()
            .map(|&xi| {
                let mut v = Vec::new();
                self.basis.features_1d(self.level, xi, &mut v);
                v
            })
            .collect()
    }

    pub fn eval_features(&self, feats: &[Vec<f64>]) -> f64 {
        let mut acc = 0.0;
        for (c, offs) in self.coeffs.iter().zip(self.offsets.chunks_exact(self.dim)) {
            let mut term = *c;
            for (f, &o) in feats.iter().zip(offs) {
                term *= f[o as usize];
                if term == 0.0 {
                    break;
                }
            }
            acc += term;
        }
        acc
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        if self.coeffs.is_empty() {
            return 0.0;
        }
        self.eval_features(&self.features(x))
    }
}

/// Finite series value `Σ c_{k,s} φ_{k,s}(x)`.
pub fn eval_table(t: &CoefficientTable, x: &[f64]) -> f64 {
    t.iter().map(|(key, c)| c * t.basis.eval(&key.k, &key.s, x)).sum()
}

fn weighted_norm(t: &CoefficientTable, r: f64) -> f64 {
    t.iter()
        .map(|(key, c)| 2f64.powf(2.0 * r * key.order() as f64) * c * c)
        .sum::<f64>()
        .sqrt()
}

/// `‖f‖_{H^r_mix} = (Σ_k 2^{2r|k|} Σ_{s∈ρ(k)} c²)^{1/2}`.
pub fn mixed_sobolev_norm(t: &CoefficientTable, r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(HxdError::InvalidArgument("smoothness must be non-negative".into()));
    }
    Ok(weighted_norm(t, r))
}

/// Sobolev-ball IPM `sup_{‖f‖_{H^β_mix} ≤ L} ∫ f (a − b)`, which by
/// Cauchy–Schwarz on the weighted coefficients equals
/// `L (Σ 2^{−2β|k|} (a − b)²)^{1/2}`.
pub fn ipm_sobolev_ball(a: &CoefficientTable, b: &CoefficientTable, beta: f64, radius: f64) -> Result<f64> {
    if !(beta >= 0.0) {
        return Err(HxdError::InvalidArgument("beta must be non-negative".into()));
    }
    if !(radius > 0.0) {
        return Err(HxdError::InvalidArgument("ball radius must be positive".into()));
    }
    let diff = a.difference(b)?;
    Ok(radius * weighted_norm(&diff, -beta))
}

/// The maximizing discriminator of [`ipm_sobolev_ball`]:
/// `f = L · w ⊙ δ / ‖w^{1/2} ⊙ δ‖` with `w = 2^{−2β|k|}` and `δ = a − b`.
pub fn ipm_witness(a: &CoefficientTable, b: &CoefficientTable, beta: f64, radius: f64) -> Result<CoefficientTable> {
    let diff = a.difference(b)?;
    let norm = weighted_norm(&diff, -beta);
    if norm == 0.0 {
        return Ok(CoefficientTable::empty(diff.basis, diff.dim, diff.level));
    }
    Ok(diff.smoothed_with(|k| radius * 2f64.powf(-2.0 * beta * k.order() as f64) / norm))
}

/// Applies a smoothing policy's multipliers `b_{s,n}` to a discriminator.
pub fn smooth_function(f: &CoefficientTable, policy: &SmoothingPolicy, n: usize) -> Result<CoefficientTable> {
    let level = policy.select_level(n, f.dim())?;
    let mut err = None;
    let out = f.smoothed_with(|key| match policy.multiplier(key.order(), level, n, None) {
        Ok(m) => m,
        Err(e) => {
            err.get_or_insert(e);
            0.0
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Default per-dimension quadrature size for projections at level `l`.
pub fn default_quad_nodes(level: u32) -> usize {
    64usize.max(4 << level)
}

const MAX_GRID: usize = 1 << 26;

/// One-dimensional rule used to project onto `basis` at `level`.
fn projection_rule(basis: BasisKind, level: u32, quad_nodes: usize) -> Result<Rule1d> {
    if quad_nodes < 2 || quad_nodes < (1usize << level) {
        return Err(HxdError::Aliasing {
            nodes: quad_nodes,
            level,
        });
    }
    Ok(match basis {
        BasisKind::Fourier => GaussLegendre::new(quad_nodes).on_unit(),
        BasisKind::HaarWavelet => {
            // Haar functions are constant on the 2^{l+1} finest cells
            let cells = 1usize << (level + 1);
            let per_cell = quad_nodes.div_ceil(cells).max(2);
            GaussLegendre::new(per_cell).composite_unit(cells)
        }
    })
}

/// `P_l[f] = Σ_{|k|≤l} Σ_s φ_{k,s} ∫ f φ_{k,s}` by tensor quadrature.
pub fn project(
    f: &dyn Fn(&[f64]) -> f64,
    basis: BasisKind,
    dim: usize,
    level: u32,
    quad_nodes: usize,
) -> Result<CoefficientTable> {
    if dim == 0 {
        return Err(HxdError::InvalidArgument("dimension must be at least 1".into()));
    }
    let rule = projection_rule(basis, level, quad_nodes)?;
    let q = rule.len();
    let grid = q
        .checked_pow(dim as u32)
        .filter(|&g| g <= MAX_GRID)
        .ok_or_else(|| {
            HxdError::TooLarge(format!(
                "{q}^{dim} quadrature nodes; use the product projection for separable functions"
            ))
        })?;
    // features[node][offset]
    let feats: Vec<Vec<f64>> = rule
        .nodes
        .iter()
        .map(|&x| {
            let mut v = Vec::new();
            basis.features_1d(level, x, &mut v);
            v
        })
        .collect();
    // weighted function values on the tensor grid, last coordinate fastest
    let mut point = vec![0.0; dim];
    let mut idx = vec![0usize; dim];
    let mut values = Vec::with_capacity(grid);
    for flat in 0..grid {
        let mut rem = flat;
        for d in (0..dim).rev() {
            idx[d] = rem % q;
            rem /= q;
        }
        let mut w = 1.0;
        for d in 0..dim {
            point[d] = rule.nodes[idx[d]];
            w *= rule.weights[idx[d]];
        }
        values.push(w * f(&point));
    }
    let mut entries = Vec::new();
    for (k, s) in basis.cross(dim, level) {
        let offs: Vec<usize> = k
            .entries()
            .iter()
            .zip(s.entries())
            .map(|(&ki, &si)| basis.offset_1d(ki, si))
            .collect();
        let c = contract(&values, &feats, &offs, q, dim);
        entries.push((BasisKey::new(k, s), c));
    }
    CoefficientTable::new(basis, dim, level, entries)
}

/// `Σ_grid values[q] Π_d feats[q_d][offs[d]]`, contracting the last axis first.
fn contract(values: &[f64], feats: &[Vec<f64>], offs: &[usize], q: usize, dim: usize) -> f64 {
    let mut cur: Vec<f64> = values.to_vec();
    for d in (0..dim).rev() {
        let o = offs[d];
        let next: Vec<f64> = cur
            .chunks_exact(q)
            .map(|chunk| chunk.iter().zip(feats).map(|(v, f)| v * f[o]).sum())
            .collect();
        cur = next;
    }
    cur[0]
}

/// Separable coefficient table `c_{k,s} = Π_j c^{(j)}_{k_j,s_j}` stored as
/// per-dimension one-dimensional coefficient vectors.
///
/// This is how product densities are represented at levels where the full
/// cross is far too large to materialize.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductTable {
    basis: BasisKind,
    level: u32,
    factors: Vec<Vec<f64>>,
}

impl ProductTable {
    /// `factors[j]` uses the dense layout of [`BasisKind::offset_1d`] up to `level`.
    pub fn new(basis: BasisKind, level: u32, factors: Vec<Vec<f64>>) -> Result<Self> {
        if factors.is_empty() {
            return Err(HxdError::InvalidArgument("dimension must be at least 1".into()));
        }
        let len = basis.len_1d(level);
        if factors.iter().any(|f| f.len() != len) {
            return Err(HxdError::InvalidArgument(format!(
                "each factor needs {len} coefficients for level {level}"
            )));
        }
        Ok(ProductTable {
            basis,
            level,
            factors,
        })
    }

    /// The uniform density: every factor is the DC indicator.
    pub fn uniform(basis: BasisKind, dim: usize, level: u32) -> Self {
        let mut f = vec![0.0; basis.len_1d(level)];
        f[0] = 1.0;
        ProductTable {
            basis,
            level,
            factors: vec![f; dim],
        }
    }

    pub fn basis(&self) -> BasisKind {
        self.basis
    }

    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn factor(&self, j: usize) -> &[f64] {
        &self.factors[j]
    }

    pub fn coeff(&self, k: &MultiIndex, s: &FrequencyIndex) -> f64 {
        if k.order() > self.level {
            return 0.0;
        }
        k.entries()
            .iter()
            .zip(s.entries())
            .zip(&self.factors)
            .map(|((&ki, &si), f)| f[self.basis.offset_1d(ki, si)])
            .product()
    }

    /// Expands onto the full level-`l` cross.
    pub fn to_table(&self) -> Result<CoefficientTable> {
        let size = self.basis.cross_len(self.dim(), self.level);
        if size > 5_000_000 {
            return Err(HxdError::TooLarge(format!("{size} coefficients")));
        }
        let entries = self
            .basis
            .cross(self.dim(), self.level)
            .map(|(k, s)| {
                let c = self.coeff(&k, &s);
                (BasisKey::new(k, s), c)
            })
            .collect::<Vec<_>>();
        CoefficientTable::new(self.basis, self.dim(), self.level, entries)
    }
}

/// Projects a product function `Π_j f_j(x_j)` with one 1-D quadrature per
/// dimension (cost `D · nodes` instead of `nodes^D`).
pub fn project_product(
    factors: &[&dyn Fn(f64) -> f64],
    basis: BasisKind,
    level: u32,
    quad_nodes: usize,
) -> Result<ProductTable> {
    if factors.is_empty() {
        return Err(HxdError::InvalidArgument("dimension must be at least 1".into()));
    }
    let coeffs = factors
        .iter()
        .map(|f| project_1d(*f, basis, level, quad_nodes))
        .collect::<Result<Vec<_>>>()?;
    ProductTable::new(basis, level, coeffs)
}

/// Dense one-dimensional coefficients of `f` up to `level`.
pub fn project_1d(f: &dyn Fn(f64) -> f64, basis: BasisKind, level: u32, quad_nodes: usize) -> Result<Vec<f64>> {
    match basis {
        BasisKind::Fourier => {
            let rule = projection_rule(basis, level, quad_nodes)?;
            let work = rule.len() as u128 * basis.len_1d(level) as u128;
            if work > 2_000_000_000 {
                return Err(HxdError::TooLarge(format!("Fourier projection at level {level}")));
            }
            let mut out = vec![0.0; basis.len_1d(level)];
            let mut feats = Vec::new();
            for (x, w) in rule.iter() {
                let fx = w * f(x);
                basis.features_1d(level, x, &mut feats);
                for (o, v) in out.iter_mut().zip(&feats) {
                    *o += fx * v;
                }
            }
            Ok(out)
        }
        BasisKind::HaarWavelet => {
            let cells = 1usize << (level + 1);
            let rule = projection_rule(basis, level, quad_nodes)?;
            let per_cell = rule.len() / cells;
            // prefix[c] = ∫_0^{c / cells} f
            let mut prefix = vec![0.0; cells + 1];
            for c in 0..cells {
                let mass: f64 = (0..per_cell)
                    .map(|i| {
                        let j = c * per_cell + i;
                        rule.weights[j] * f(rule.nodes[j])
                    })
                    .sum();
                prefix[c + 1] = prefix[c] + mass;
            }
            Ok(haar_from_prefix(&prefix, level))
        }
    }
}

/// Haar coefficients from cumulative masses on `2^{l+1}` equal cells.
pub(crate) fn haar_from_prefix(prefix: &[f64], level: u32) -> Vec<f64> {
    let cells = prefix.len() - 1;
    let mass = |a: usize, b: usize| prefix[b] - prefix[a];
    let mut out = vec![0.0; 1usize << (level + 1)];
    out[0] = mass(0, cells);
    out[1] = mass(0, cells / 2) - mass(cells / 2, cells);
    for k in 1..=level {
        let n_cells = 1usize << k;
        let width = cells / n_cells;
        let scale = (n_cells as f64).sqrt();
        for s in 0..n_cells {
            let a = s * width;
            let m = a + width / 2;
            let b = a + width;
            out[n_cells + s] = scale * (mass(a, m) - mass(m, b));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn key(k: &[u32], s: &[i64]) -> BasisKey {
        BasisKey::new(MultiIndex::new(k.to_vec()), FrequencyIndex::new(s.to_vec()))
    }

    fn random_table(rng: &mut ChaCha8Rng, basis: BasisKind, dim: usize, level: u32, count: usize) -> CoefficientTable {
        let all: Vec<_> = basis.cross(dim, level).collect();
        let mut entries = Vec::new();
        for _ in 0..count {
            let (k, s) = all[rng.random_range(0..all.len())].clone();
            entries.push((BasisKey::new(k, s), rng.random_range(-1.0..1.0)));
        }
        CoefficientTable::new(basis, dim, level, entries).unwrap()
    }

    #[test]
    fn norm_examples() {
        let one = CoefficientTable::constant(BasisKind::Fourier, 2, 3, 1.0);
        for r in [0.0, 0.5, 2.0] {
            assert_eq!(mixed_sobolev_norm(&one, r).unwrap(), 1.0);
        }
        let t = CoefficientTable::new(BasisKind::Fourier, 2, 3, [(key(&[1, 1], &[1, -1]), 0.5)]).unwrap();
        assert!((mixed_sobolev_norm(&t, 1.0).unwrap() - 2.0).abs() < 1e-15);
        assert!(mixed_sobolev_norm(&t, -1.0).is_err());
    }

    #[test]
    fn norm_at_zero_is_l2_by_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_table(&mut rng, BasisKind::Fourier, 2, 4, 15);
        let rule = GaussLegendre::new(80).on_unit();
        let mut l2 = 0.0;
        for (x, wx) in rule.iter() {
            for (y, wy) in rule.iter() {
                let v = eval_table(&t, &[x, y]);
                l2 += wx * wy * v * v;
            }
        }
        assert!((l2.sqrt() - mixed_sobolev_norm(&t, 0.0).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn ipm_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_table(&mut rng, BasisKind::Fourier, 2, 3, 10);
        assert_eq!(ipm_sobolev_ball(&a, &a, 1.0, 1.0).unwrap(), 0.0);

        let b = random_table(&mut rng, BasisKind::Fourier, 2, 3, 10);
        let d = a.difference(&b).unwrap();
        let l2: f64 = d.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        assert!((ipm_sobolev_ball(&a, &b, 0.0, 1.0).unwrap() - l2).abs() < 1e-14);

        let z = CoefficientTable::empty(BasisKind::Fourier, 2, 3);
        let one = CoefficientTable::new(BasisKind::Fourier, 2, 3, [(key(&[2, 0], &[2, 0]), 0.3)]).unwrap();
        assert!((ipm_sobolev_ball(&one, &z, 1.0, 2.0).unwrap() - 0.15).abs() < 1e-15);

        let h = CoefficientTable::empty(BasisKind::HaarWavelet, 2, 3);
        assert!(matches!(ipm_sobolev_ball(&one, &h, 1.0, 1.0), Err(HxdError::BasisMismatch(_))));
    }

    #[test]
    fn ipm_witness_attains_supremum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_table(&mut rng, BasisKind::Fourier, 2, 3, 8);
        let b = random_table(&mut rng, BasisKind::Fourier, 2, 3, 8);
        let beta = 0.7;
        let w = ipm_witness(&a, &b, beta, 1.5).unwrap();
        let gap = w.dot(&a).unwrap() - w.dot(&b).unwrap();
        assert!((gap - ipm_sobolev_ball(&a, &b, beta, 1.5).unwrap()).abs() < 1e-12);
        assert!((mixed_sobolev_norm(&w, beta).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn project_examples() {
        let t = project(&|_| 1.0, BasisKind::Fourier, 2, 3, 64).unwrap();
        for (k, v) in t.iter() {
            let target = if *k == BasisKey::dc(2) { 1.0 } else { 0.0 };
            assert!((v - target).abs() < 1e-10);
        }
        let s = FrequencyIndex::new(vec![1, 0]);
        let t = project(
            &|x| crate::basis::eval_fourier(&s, x),
            BasisKind::Fourier,
            2,
            3,
            64,
        )
        .unwrap();
        for (k, v) in t.iter() {
            let target = if k.s == s { 1.0 } else { 0.0 };
            assert!((v - target).abs() < 1e-10);
        }
        assert!(matches!(
            project(&|_| 1.0, BasisKind::Fourier, 1, 8, 64),
            Err(HxdError::Aliasing { .. })
        ));
    }

    #[test]
    fn project_round_trips_tables() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for basis in [BasisKind::Fourier, BasisKind::HaarWavelet] {
            let t = random_table(&mut rng, basis, 2, 3, 12);
            let back = project(&|x| eval_table(&t, x), basis, 2, 3, 64).unwrap();
            for (k, v) in back.iter() {
                assert!((v - t.get(k)).abs() < 1e-8, "{basis} {k:?}");
            }
        }
    }

    #[test]
    fn product_projection_matches_tensor() {
        let f1 = |x: f64| 6.0 * x * (1.0 - x);
        let f2 = |x: f64| 2.0 * x;
        for basis in [BasisKind::Fourier, BasisKind::HaarWavelet] {
            let prod = project_product(&[&f1, &f2], basis, 3, 64).unwrap();
            let full = project(&|x| f1(x[0]) * f2(x[1]), basis, 2, 3, 64).unwrap();
            let expanded = prod.to_table().unwrap();
            for (k, v) in full.iter() {
                assert!((v - expanded.get(k)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn eval_matches_term_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert_eq!(eval_table(&CoefficientTable::empty(BasisKind::Fourier, 2, 2), &[0.2, 0.4]), 0.0);
        for basis in [BasisKind::Fourier, BasisKind::HaarWavelet] {
            let t = random_table(&mut rng, basis, 3, 4, 20);
            let compiled = t.compile();
            for _ in 0..50 {
                let x: Vec<f64> = (0..3).map(|_| rng.random()).collect();
                // independent oracle straight from the one-dimensional formulas
                let mut oracle = 0.0;
                for (key, c) in t.iter() {
                    let mut term = c;
                    for d in 0..3 {
                        let (k, s) = (key.k.entries()[d], key.s.entries()[d]);
                        term *= match basis {
                            BasisKind::Fourier if s == 0 => 1.0,
                            BasisKind::Fourier if s > 0 => {
                                2f64.sqrt() * (2.0 * std::f64::consts::PI * s as f64 * x[d]).cos()
                            }
                            BasisKind::Fourier => {
                                2f64.sqrt() * (2.0 * std::f64::consts::PI * (-s) as f64 * x[d]).sin()
                            }
                            BasisKind::HaarWavelet if k == 0 && s == 0 => 1.0,
                            BasisKind::HaarWavelet if k == 0 => {
                                if x[d] < 0.5 { 1.0 } else { -1.0 }
                            }
                            BasisKind::HaarWavelet => {
                                let t = (1u64 << k) as f64 * x[d] - s as f64;
                                let m = (1u64 << k) as f64;
                                m.sqrt()
                                    * if (0.0..0.5).contains(&t) {
                                        1.0
                                    } else if (0.5..1.0).contains(&t) {
                                        -1.0
                                    } else {
                                        0.0
                                    }
                            }
                        };
                    }
                    oracle += term;
                }
                assert!((eval_table(&t, &x) - oracle).abs() < 1e-12);
                assert!((compiled.eval(&x) - oracle).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn csv_round_trip_and_order_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = random_table(&mut rng, BasisKind::HaarWavelet, 2, 3, 10);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = CoefficientTable::read_csv(&buf[..]).unwrap();
        assert_eq!(t, back);

        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        if lines.len() > 3 {
            lines.swap(2, 3);
            let corrupted = lines.join("\n");
            assert!(CoefficientTable::read_csv(corrupted.as_bytes()).is_err());
        }
    }

    #[test]
    fn rejects_keys_outside_cross() {
        let bad = CoefficientTable::new(BasisKind::Fourier, 1, 2, [(key(&[3], &[5]), 1.0)]);
        assert!(bad.is_err());
        let bad = CoefficientTable::new(BasisKind::Fourier, 1, 2, [(key(&[1], &[2]), 1.0)]);
        assert!(bad.is_err());
    }
}
