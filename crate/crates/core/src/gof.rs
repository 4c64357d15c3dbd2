//! Goodness-of-fit test built on the hyperbolic-cross projection kernel
//! `H_l(x, y) = Σ_{|k|≤l} Σ_{s∈ρ(k)} φ_s(x) φ_s(y)`.
//!
//! The kernel factorizes per dimension by level: with
//! `A_j(z) = Σ_k a_j[k] z^k`, `a_j[k] = Σ_{s at level k} φ_{k,s}(x_j) φ_{k,s}(y_j)`,
//! `H_l(x, y)` is the sum of the coefficients of `Π_j A_j(z)` up to degree `l`.
//! This costs `O(D l²)` per pair regardless of the cross size.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ahce::SmoothingPolicy;
use crate::basis::BasisKind;
use crate::data::SampleMatrix;
use crate::error::{HxdError, Result};
use crate::rng::stream_rng;
use crate::spectral::{CoefficientTable, ProductTable};

/// Largest sample for which the Gram matrix is stored.
pub const PACK_LIMIT: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GofConfig {
    pub basis: BasisKind,
    /// Fixed level; `None` selects it from `alpha`.
    pub level: Option<u32>,
    pub alpha: f64,
    pub significance: f64,
    pub bootstrap_reps: usize,
    pub flip_prob: f64,
    pub seed: u64,
    /// Use the centered kernel inside the bootstrap instead of `H_l`.
    pub center_bootstrap: bool,
}

impl Default for GofConfig {
    fn default() -> Self {
        GofConfig {
            basis: BasisKind::HaarWavelet,
            level: None,
            alpha: 2.0,
            significance: 0.05,
            bootstrap_reps: 1000,
            flip_prob: 0.5,
            seed: 0,
            center_bootstrap: false,
        }
    }
}

impl GofConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.significance > 0.0 && self.significance < 1.0) {
            return Err(HxdError::InvalidArgument("significance must lie in (0, 1)".into()));
        }
        if self.bootstrap_reps == 0 {
            return Err(HxdError::InvalidArgument("at least one bootstrap replicate is needed".into()));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(HxdError::InvalidArgument("flip probability must lie in [0, 1]".into()));
        }
        if self.level.is_none() && !(self.alpha > 0.0) {
            return Err(HxdError::InvalidArgument("alpha must be positive".into()));
        }
        Ok(())
    }

    /// The fixed level, or `2^l ≈ n^{1/(2α)} (ln n)^{D(α+1/2)/(2α)}`.
    pub fn resolve_level(&self, n: usize, dim: usize) -> Result<u32> {
        match self.level {
            Some(l) => Ok(l),
            None => SmoothingPolicy::TruncationWavelet {
                alpha: self.alpha,
                nu: 0.0,
                scale_c: 1.0,
            }
            .select_level(n, dim),
        }
    }
}

/// Outcome of one test.
#[derive(Debug, Clone, PartialEq)]
pub struct GofTestRun {
    pub n: usize,
    pub dim: usize,
    pub level: u32,
    pub statistic: f64,
    pub bootstrap_stats: Vec<f64>,
    pub threshold: f64,
    pub reject: bool,
    pub z_score: f64,
    pub sigma_hat: f64,
    pub seed: u64,
}

impl GofTestRun {
    pub const CSV_HEADER: &'static str = "n,D,l,T_n,threshold,reject,z_score,sigma_hat,seed";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.n,
            self.dim,
            self.level,
            self.statistic,
            self.threshold,
            self.reject,
            self.z_score,
            self.sigma_hat,
            self.seed
        )
    }
}

/// Sum of the coefficients of degree `≤ level` of `Π_j A_j(z)`, where
/// `polys[j][..=tops[j]]` holds `A_j` (entries above `tops[j]` are zero).
fn truncated_product_sum(polys: &[Vec<f64>], tops: &[usize], level: usize, acc: &mut Vec<f64>, next: &mut Vec<f64>) -> f64 {
    acc.clear();
    acc.resize(level + 1, 0.0);
    let t0 = tops[0].min(level);
    acc[..=t0].copy_from_slice(&polys[0][..=t0]);
    let mut deg = t0;
    for (p, &top) in polys.iter().zip(tops).skip(1) {
        let top = top.min(level);
        let new_deg = (deg + top).min(level);
        next.clear();
        next.resize(level + 1, 0.0);
        for (a, &va) in acc.iter().enumerate().take(deg + 1) {
            if va == 0.0 {
                continue;
            }
            for b in 0..=top.min(new_deg - a) {
                next[a + b] += va * p[b];
            }
        }
        std::mem::swap(acc, next);
        deg = new_deg;
    }
    acc[..=deg].iter().sum()
}

/// Reusable buffers for kernel evaluation.
#[derive(Debug, Clone)]
pub struct KernelScratch {
    polys: Vec<Vec<f64>>,
    tops: Vec<usize>,
    acc: Vec<f64>,
    next: Vec<f64>,
}

impl KernelScratch {
    pub fn new(dim: usize, level: u32) -> Self {
        let len = level as usize + 1;
        KernelScratch {
            polys: vec![vec![0.0; len]; dim],
            tops: vec![0; dim],
            acc: Vec::with_capacity(len),
            next: Vec::with_capacity(len),
        }
    }
}

/// `H_l(x, y)` with caller-provided buffers.
pub fn kernel_h_with(basis: BasisKind, level: u32, x: &[f64], y: &[f64], scratch: &mut KernelScratch) -> f64 {
    for (j, (&xj, &yj)) in x.iter().zip(y).enumerate() {
        let top = basis.level_kernel_1d(level, xj, yj, &mut scratch.polys[j]);
        if scratch.polys[j][..=top].iter().all(|&v| v == 0.0) {
            return 0.0;
        }
        scratch.tops[j] = top;
    }
    truncated_product_sum(&scratch.polys, &scratch.tops, level as usize, &mut scratch.acc, &mut scratch.next)
}

/// `H_l(x, y) = Σ_{|k|≤l} Σ_{s∈ρ(k)} φ_s(x) φ_s(y)`.
pub fn kernel_h(basis: BasisKind, level: u32, x: &[f64], y: &[f64]) -> f64 {
    let mut scratch = KernelScratch::new(x.len(), level);
    kernel_h_with(basis, level, x, y, &mut scratch)
}

/// Null density coefficients as needed for centering the kernel.
pub trait NullCoefficients: Sync {
    fn basis(&self) -> BasisKind;
    fn dim(&self) -> usize;
    /// Highest level with stored coefficients.
    fn level(&self) -> u32;
    /// `E_{X∼p₀} H_l(x, X) = Σ_{|k|≤l} φ_s(x) p̂₀_s`.
    fn mean_kernel(&self, x: &[f64], level: u32) -> f64;
    /// `E_{X,Y∼p₀} H_l(X, Y) = Σ_{|k|≤l} p̂₀_s²`.
    fn kernel_mean(&self, level: u32) -> f64;
}

impl NullCoefficients for CoefficientTable {
    fn basis(&self) -> BasisKind {
        CoefficientTable::basis(self)
    }

    fn dim(&self) -> usize {
        CoefficientTable::dim(self)
    }

    fn level(&self) -> u32 {
        CoefficientTable::level(self)
    }

    fn mean_kernel(&self, x: &[f64], level: u32) -> f64 {
        let basis = CoefficientTable::basis(self);
        self.iter()
            .filter(|(k, _)| k.order() <= level)
            .map(|(k, c)| c * basis.eval(&k.k, &k.s, x))
            .sum()
    }

    fn kernel_mean(&self, level: u32) -> f64 {
        self.iter().filter(|(k, _)| k.order() <= level).map(|(_, c)| c * c).sum()
    }
}

impl ProductTable {
    /// `Σ_{s at level k} p̂_j[k, s] φ_{k,s}(x)` for `k = 0..=level`; returns the top level.
    fn level_mean_1d(&self, j: usize, level: u32, x: f64, out: &mut [f64]) -> usize {
        let basis = self.basis();
        let f = self.factor(j);
        match basis {
            BasisKind::Fourier => {
                let mut feats = Vec::new();
                basis.features_1d(level, x, &mut feats);
                out[0] = f[0];
                for k in 1..=level as usize {
                    let (a, b) = (1usize << (k - 1), 1usize << k);
                    // sign-coded frequencies a..b use offsets 2a-1 ..= 2b-2
                    out[k] = (2 * a - 1..=2 * b - 2).map(|o| f[o] * feats[o]).sum();
                }
            }
            BasisKind::HaarWavelet => {
                // one active translation per level
                out[0] = f[0] + f[1] * basis.eval_1d(0, 1, x);
                for k in 1..=level {
                    let cells = 1i64 << k;
                    let s = ((x.clamp(0.0, 1.0) * cells as f64) as i64).min(cells - 1);
                    out[k as usize] = f[basis.offset_1d(k, s)] * basis.eval_1d(k, s, x);
                }
            }
        }
        level as usize
    }

    fn level_energy_1d(&self, j: usize, level: u32) -> Vec<f64> {
        let basis = self.basis();
        let f = self.factor(j);
        (0..=level)
            .map(|k| {
                let range = match (basis, k) {
                    (BasisKind::Fourier, 0) => 0..1,
                    (BasisKind::Fourier, k) => (1usize << k) - 1..(1usize << (k + 1)) - 1,
                    (BasisKind::HaarWavelet, 0) => 0..2,
                    (BasisKind::HaarWavelet, k) => 1usize << k..1usize << (k + 1),
                };
                f[range].iter().map(|v| v * v).sum()
            })
            .collect()
    }
}

impl NullCoefficients for ProductTable {
    fn basis(&self) -> BasisKind {
        ProductTable::basis(self)
    }

    fn dim(&self) -> usize {
        ProductTable::dim(self)
    }

    fn level(&self) -> u32 {
        ProductTable::level(self)
    }

    fn mean_kernel(&self, x: &[f64], level: u32) -> f64 {
        let dim = x.len();
        let mut polys = vec![vec![0.0; level as usize + 1]; dim];
        let mut tops = vec![0; dim];
        for j in 0..dim {
            tops[j] = self.level_mean_1d(j, level, x[j], &mut polys[j]);
        }
        truncated_product_sum(&polys, &tops, level as usize, &mut Vec::new(), &mut Vec::new())
    }

    fn kernel_mean(&self, level: u32) -> f64 {
        let polys: Vec<Vec<f64>> = (0..ProductTable::dim(self)).map(|j| self.level_energy_1d(j, level)).collect();
        let tops = vec![level as usize; polys.len()];
        truncated_product_sum(&polys, &tops, level as usize, &mut Vec::new(), &mut Vec::new())
    }
}

fn check_null(p0: &dyn NullCoefficients, basis: BasisKind, dim: usize, level: u32) -> Result<()> {
    if p0.basis() != basis {
        return Err(HxdError::BasisMismatch(format!("null uses {}, test uses {basis}", p0.basis())));
    }
    if p0.dim() != dim {
        return Err(HxdError::DimensionMismatch {
            expected: dim,
            found: p0.dim(),
        });
    }
    if p0.level() < level {
        return Err(HxdError::InvalidArgument(format!(
            "null coefficients stop at level {}, test needs {level}",
            p0.level()
        )));
    }
    Ok(())
}

/// `H̃_l(x, y) = H_l(x, y) − E H_l(x, X) − E H_l(X, y) + E H_l(X, Y)` under `p₀`.
pub fn centered_kernel(basis: BasisKind, level: u32, x: &[f64], y: &[f64], p0: &dyn NullCoefficients) -> Result<f64> {
    check_null(p0, basis, x.len(), level)?;
    Ok(kernel_h(basis, level, x, y) - p0.mean_kernel(x, level) - p0.mean_kernel(y, level) + p0.kernel_mean(level))
}

/// Pairwise kernel values `H_l(X_i, X_j)`, stored as a packed strict upper
/// triangle up to [`PACK_LIMIT`] points and recomputed row by row beyond.
#[derive(Debug, Clone)]
pub struct GramMatrix<'a> {
    samples: &'a SampleMatrix,
    basis: BasisKind,
    level: u32,
    packed: Option<Vec<f64>>,
}

fn row_offset(n: usize, i: usize) -> usize {
    i * n - i * (i + 1) / 2
}

fn chunk_len(n: usize) -> usize {
    n.div_ceil(64).max(32)
}

impl<'a> GramMatrix<'a> {
    pub fn new(samples: &'a SampleMatrix, basis: BasisKind, level: u32) -> Self {
        if samples.len() <= PACK_LIMIT {
            Self::packed(samples, basis, level)
        } else {
            Self::streamed(samples, basis, level)
        }
    }

    pub fn streamed(samples: &'a SampleMatrix, basis: BasisKind, level: u32) -> Self {
        GramMatrix {
            samples,
            basis,
            level,
            packed: None,
        }
    }

    pub fn packed(samples: &'a SampleMatrix, basis: BasisKind, level: u32) -> Self {
        let mut g = Self::streamed(samples, basis, level);
        let n = samples.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map_init(
                || KernelScratch::new(samples.dim(), level),
                |scratch, i| {
                    let mut row = Vec::new();
                    g.compute_row(i, &mut row, scratch);
                    row
                },
            )
            .collect();
        g.packed = Some(rows.concat());
        g
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn is_packed(&self) -> bool {
        self.packed.is_some()
    }

    fn compute_row(&self, i: usize, out: &mut Vec<f64>, scratch: &mut KernelScratch) {
        let x = self.samples.row(i);
        out.clear();
        out.extend(
            (i + 1..self.n()).map(|j| kernel_h_with(self.basis, self.level, x, self.samples.row(j), scratch)),
        );
    }

    /// `H(X_i, X_j)` for `j > i`.
    pub fn upper_row<'s>(&'s self, i: usize, buf: &'s mut Vec<f64>, scratch: &mut KernelScratch) -> &'s [f64] {
        match &self.packed {
            Some(p) => {
                let n = self.n();
                let start = row_offset(n, i);
                &p[start..start + (n - i - 1)]
            }
            None => {
                self.compute_row(i, buf, scratch);
                buf
            }
        }
    }

    /// `H(X_i, X_j)` with a zero diagonal.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        match &self.packed {
            Some(p) => p[row_offset(self.n(), a) + (b - a - 1)],
            None => kernel_h(self.basis, self.level, self.samples.row(a), self.samples.row(b)),
        }
    }

    /// Folds every upper row in fixed-size chunks; chunk results are
    /// combined in index order, so the outcome does not depend on threading.
    fn fold_rows<T: Send>(
        &self,
        init: impl Fn() -> T + Sync + Send,
        visit: impl Fn(&mut T, usize, &[f64]) + Sync + Send,
    ) -> Vec<T> {
        let n = self.n();
        let chunk = chunk_len(n);
        let starts: Vec<usize> = (0..n).step_by(chunk).collect();
        starts
            .into_par_iter()
            .map(|start| {
                let mut acc = init();
                let mut buf = Vec::new();
                let mut scratch = KernelScratch::new(self.samples.dim(), self.level);
                for i in start..(start + chunk).min(n) {
                    let row = self.upper_row(i, &mut buf, &mut scratch);
                    visit(&mut acc, i, row);
                }
                acc
            })
            .collect()
    }

    /// `Σ_{i<j} G_ij`, `Σ_{i<j} G_ij²` and the row sums `r_i = Σ_{j≠i} G_ij`.
    pub fn moments(&self) -> (f64, f64, Vec<f64>) {
        let n = self.n();
        let parts = self.fold_rows(
            || (0.0, 0.0, vec![0.0; n]),
            |(s, sq, r), i, row| {
                for (off, &v) in row.iter().enumerate() {
                    *s += v;
                    *sq += v * v;
                    r[i] += v;
                    r[i + 1 + off] += v;
                }
            },
        );
        let mut total = (0.0, 0.0, vec![0.0; n]);
        for (s, sq, r) in parts {
            total.0 += s;
            total.1 += sq;
            for (a, b) in total.2.iter_mut().zip(r) {
                *a += b;
            }
        }
        total
    }
}

/// Per-point centering terms `g_i = E H(X_i, X)` and `c = E H(X, Y)`.
#[derive(Debug, Clone)]
pub struct Centering {
    pub g: Vec<f64>,
    pub c: f64,
}

impl Centering {
    pub fn new(samples: &SampleMatrix, p0: &dyn NullCoefficients, basis: BasisKind, level: u32) -> Result<Self> {
        check_null(p0, basis, samples.dim(), level)?;
        let g = (0..samples.len())
            .into_par_iter()
            .map(|i| p0.mean_kernel(samples.row(i), level))
            .collect();
        Ok(Centering {
            g,
            c: p0.kernel_mean(level),
        })
    }
}

fn check_n(samples: &SampleMatrix, min: usize) -> Result<()> {
    if samples.len() < min {
        return Err(HxdError::InvalidArgument(format!(
            "need at least {min} samples, got {}",
            samples.len()
        )));
    }
    Ok(())
}

/// `T_n` from a Gram matrix and centering terms.
pub fn statistic_from(gram: &GramMatrix<'_>, centering: &Centering) -> f64 {
    let (upper, _, _) = gram.moments();
    statistic_from_sum(upper, gram.n(), centering)
}

fn statistic_from_sum(upper: f64, n: usize, centering: &Centering) -> f64 {
    let nf = n as f64;
    let gsum: f64 = centering.g.iter().sum();
    let pairs = nf * (nf - 1.0);
    (2.0 * upper - 2.0 * (nf - 1.0) * gsum + pairs * centering.c) / pairs
}

/// `T_n = (1/(n(n−1))) Σ_{i≠j} H̃_l(X_i, X_j)`.
pub fn statistic_t(samples: &SampleMatrix, p0: &dyn NullCoefficients, cfg: &GofConfig) -> Result<f64> {
    cfg.validate()?;
    check_n(samples, 2)?;
    let level = cfg.resolve_level(samples.len(), samples.dim())?;
    let centering = Centering::new(samples, p0, cfg.basis, level)?;
    let gram = GramMatrix::new(samples, cfg.basis, level);
    Ok(statistic_from(&gram, &centering))
}

/// `±1` chain with `B_1 = 1` that flips sign with probability `flip_prob`.
pub fn bootstrap_chain(n: usize, flip_prob: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut b = Vec::with_capacity(n);
    let mut cur = 1.0;
    for j in 0..n {
        if j > 0 {
            let u: f64 = rng.random();
            if u < flip_prob {
                cur = -cur;
            }
        }
        b.push(cur);
    }
    b
}

/// Bootstrap replicates `A_n = (1/(n(n−1))) Σ_{i≠j} B_i B_j G_ij`; with
/// `centering`, `G` is replaced by the centered kernel.
pub fn bootstrap_from(gram: &GramMatrix<'_>, centering: Option<&Centering>, cfg: &GofConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n = gram.n();
    let reps = cfg.bootstrap_reps;
    if (n as u128) * (reps as u128) > 100_000_000 {
        return Err(HxdError::TooLarge(format!("{reps} bootstrap chains of length {n}")));
    }
    let chains: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|r| bootstrap_chain(n, cfg.flip_prob, &mut stream_rng(cfg.seed, r as u64)))
        .collect();
    let parts = gram.fold_rows(
        || vec![0.0; reps],
        |acc, i, row| {
            for (a, b) in acc.iter_mut().zip(&chains) {
                let dot: f64 = row.iter().zip(&b[i + 1..]).map(|(g, v)| g * v).sum();
                *a += b[i] * dot;
            }
        },
    );
    let mut sums = vec![0.0; reps];
    for p in parts {
        for (s, v) in sums.iter_mut().zip(p) {
            *s += v;
        }
    }
    let nf = n as f64;
    let pairs = nf * (nf - 1.0);
    Ok(sums
        .into_iter()
        .zip(&chains)
        .map(|(s, b)| {
            let mut total = 2.0 * s;
            if let Some(c) = centering {
                let sb: f64 = b.iter().sum();
                let bg: f64 = b.iter().zip(&c.g).map(|(bi, gi)| bi * gi * (sb - bi)).sum();
                total += -2.0 * bg + c.c * (sb * sb - nf);
            }
            total / pairs
        })
        .collect())
}

/// Wild-bootstrap replicates with the uncentered kernel.
pub fn wild_bootstrap(samples: &SampleMatrix, cfg: &GofConfig) -> Result<Vec<f64>> {
    check_n(samples, 2)?;
    let level = cfg.resolve_level(samples.len(), samples.dim())?;
    let gram = GramMatrix::new(samples, cfg.basis, level);
    bootstrap_from(&gram, None, cfg)
}

/// The three U-statistic terms of `σ̂²` from `Σ_{i<j} G_ij²` and the row sums.
pub fn variance_terms(n: usize, upper_sq: f64, rows: &[f64]) -> (f64, f64, f64) {
    let nf = n as f64;
    let s1 = 2.0 * upper_sq;
    let s2 = rows.iter().map(|r| r * r).sum::<f64>() - s1;
    let total: f64 = rows.iter().sum();
    let s3 = total * total - 4.0 * s2 - 2.0 * s1;
    let p2 = nf * (nf - 1.0);
    let p3 = p2 * (nf - 2.0);
    let p4 = p3 * (nf - 3.0);
    (s1 / p2, 2.0 * s2 / p3, s3 / p4)
}

fn sigma_from(n: usize, upper_sq: f64, rows: &[f64]) -> f64 {
    let (t1, t2, t3) = variance_terms(n, upper_sq, rows);
    (t1 - t2 + t3).max(0.0).sqrt()
}

/// `σ̂_n` from the three U-statistics over pairs, triples and quadruples of
/// distinct indices, reduced to `O(n²)` through row sums.
pub fn variance_estimator(samples: &SampleMatrix, cfg: &GofConfig) -> Result<f64> {
    check_n(samples, 5)?;
    let level = cfg.resolve_level(samples.len(), samples.dim())?;
    let gram = GramMatrix::new(samples, cfg.basis, level);
    let (_, sq, rows) = gram.moments();
    Ok(sigma_from(samples.len(), sq, &rows))
}

/// `⌈(1−α) B⌉`-th order statistic of the replicates.
pub fn bootstrap_threshold(stats: &[f64], significance: f64) -> f64 {
    let mut sorted = stats.to_vec();
    sorted.sort_by(f64::total_cmp);
    let b = sorted.len();
    let rank = (((1.0 - significance) * b as f64).ceil() as usize).clamp(1, b);
    sorted[rank - 1]
}

/// Runs the full test: statistic, bootstrap threshold, decision and z-score.
pub fn run_test(samples: &SampleMatrix, p0: &dyn NullCoefficients, cfg: &GofConfig) -> Result<GofTestRun> {
    cfg.validate()?;
    check_n(samples, 2)?;
    samples.check_unit_cube()?;
    let n = samples.len();
    let level = cfg.resolve_level(n, samples.dim())?;
    let centering = Centering::new(samples, p0, cfg.basis, level)?;
    let gram = GramMatrix::new(samples, cfg.basis, level);
    let (upper, sq, rows) = gram.moments();
    let statistic = statistic_from_sum(upper, n, &centering);
    let bootstrap_stats = bootstrap_from(&gram, cfg.center_bootstrap.then_some(&centering), cfg)?;
    let threshold = bootstrap_threshold(&bootstrap_stats, cfg.significance);
    let sigma_hat = if n >= 5 { sigma_from(n, sq, &rows) } else { f64::NAN };
    let z_score = n as f64 * statistic / (std::f64::consts::SQRT_2 * sigma_hat);
    Ok(GofTestRun {
        n,
        dim: samples.dim(),
        level,
        statistic,
        reject: statistic > threshold,
        bootstrap_stats,
        threshold,
        z_score,
        sigma_hat,
        seed: cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussLegendre;
    use crate::spectral::{project, project_product};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn uniform(n: usize, dim: usize, seed: u64) -> SampleMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SampleMatrix::new(dim, (0..n * dim).map(|_| rng.random()).collect()).unwrap()
    }

    fn direct_h(basis: BasisKind, level: u32, x: &[f64], y: &[f64]) -> f64 {
        basis
            .cross(x.len(), level)
            .map(|(k, s)| basis.eval(&k, &s, x) * basis.eval(&k, &s, y))
            .sum()
    }

    fn cfg(level: u32) -> GofConfig {
        GofConfig {
            level: Some(level),
            ..GofConfig::default()
        }
    }

    #[test]
    fn kernel_matches_cross_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for basis in [BasisKind::Fourier, BasisKind::HaarWavelet] {
            for (dim, level) in [(1, 3), (2, 3), (3, 2), (2, 0)] {
                for _ in 0..30 {
                    let x: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
                    let y: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
                    let a = kernel_h(basis, level, &x, &y);
                    assert!((a - direct_h(basis, level, &x, &y)).abs() < 1e-9);
                    assert_eq!(a, kernel_h(basis, level, &y, &x));
                }
            }
        }
    }

    #[test]
    fn kernel_examples() {
        // the level-0 Haar block holds the father and the mother wavelet
        assert_eq!(kernel_h(BasisKind::HaarWavelet, 0, &[0.25], &[0.25]), 2.0);
        assert_eq!(kernel_h(BasisKind::HaarWavelet, 0, &[0.25], &[0.75]), 0.0);
        assert_eq!(kernel_h(BasisKind::HaarWavelet, 1, &[0.25], &[0.25]), 4.0);
        assert_eq!(kernel_h(BasisKind::Fourier, 0, &[0.1, 0.3], &[0.8, 0.4]), 1.0);
        // full-resolution Haar kernel is 2^{l+1} on the shared cell
        assert_eq!(kernel_h(BasisKind::HaarWavelet, 3, &[0.3], &[0.31]), 16.0);
    }

    #[test]
    fn centering_uniform_null() {
        let u = CoefficientTable::constant(BasisKind::HaarWavelet, 2, 4, 1.0);
        let x = [0.3, 0.8];
        let y = [0.6, 0.1];
        let h = kernel_h(BasisKind::HaarWavelet, 3, &x, &y);
        let c = centered_kernel(BasisKind::HaarWavelet, 3, &x, &y, &u).unwrap();
        assert!((c - (h - 1.0)).abs() < 1e-14);
        let f = CoefficientTable::constant(BasisKind::Fourier, 2, 0, 1.0);
        assert_eq!(centered_kernel(BasisKind::Fourier, 0, &x, &x, &f).unwrap(), 0.0);
        assert!(centered_kernel(BasisKind::Fourier, 3, &x, &y, &u).is_err());
        assert!(centered_kernel(BasisKind::HaarWavelet, 5, &x, &y, &u).is_err());
    }

    #[test]
    fn centered_kernel_is_degenerate() {
        let f1 = |x: f64| 6.0 * x * (1.0 - x);
        let f2 = |x: f64| 30.0 * x * (1.0 - x).powi(4);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for basis in [BasisKind::Fourier, BasisKind::HaarWavelet] {
            let level = 3;
            let prod = project_product(&[&f1, &f2], basis, level, 256).unwrap();
            let table = prod.to_table().unwrap();
            let rule = match basis {
                BasisKind::Fourier => GaussLegendre::new(64).on_unit(),
                BasisKind::HaarWavelet => GaussLegendre::new(4).composite_unit(16),
            };
            for _ in 0..5 {
                let y = [rng.random::<f64>(), rng.random::<f64>()];
                for p0 in [&prod as &dyn NullCoefficients, &table] {
                    // ∫ H̃(x, y) p̂₀(x) dx with p̂₀ the projected null
                    let mut acc = 0.0;
                    for (a, wa) in rule.iter() {
                        for (b, wb) in rule.iter() {
                            let x = [a, b];
                            let dens = crate::spectral::eval_table(&table, &x);
                            acc += wa * wb * dens * centered_kernel(basis, level, &x, &y, p0).unwrap();
                        }
                    }
                    assert!(acc.abs() < 1e-8, "{basis} {acc}");
                }
            }
        }
    }

    #[test]
    fn product_null_matches_table() {
        let f1 = |x: f64| 2.0 * x;
        let f2 = |x: f64| 12.0 * x * x * (1.0 - x);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for basis in [BasisKind::Fourier, BasisKind::HaarWavelet] {
            let prod = project_product(&[&f1, &f2], basis, 4, 128).unwrap();
            let table = prod.to_table().unwrap();
            for level in 0..=4 {
                assert!((prod.kernel_mean(level) - table.kernel_mean(level)).abs() < 1e-12);
                let x = [rng.random::<f64>(), rng.random::<f64>()];
                assert!((prod.mean_kernel(&x, level) - table.mean_kernel(&x, level)).abs() < 1e-10);
            }
        }
    }

    fn brute_t(samples: &SampleMatrix, p0: &dyn NullCoefficients, basis: BasisKind, level: u32) -> f64 {
        let n = samples.len();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += centered_kernel(basis, level, samples.row(i), samples.row(j), p0).unwrap();
                }
            }
        }
        s / (n * (n - 1)) as f64
    }

    #[test]
    fn statistic_matches_brute_force() {
        let s = uniform(40, 2, 4);
        let f1 = |x: f64| 6.0 * x * (1.0 - x);
        let p0 = project_product(&[&f1, &f1], BasisKind::HaarWavelet, 4, 64).unwrap();
        let t = statistic_t(&s, &p0, &cfg(4)).unwrap();
        let b = brute_t(&s, &p0, BasisKind::HaarWavelet, 4);
        assert!((t - b).abs() < 1e-12 * b.abs().max(1.0));

        let two = uniform(2, 2, 5);
        let t2 = statistic_t(&two, &p0, &cfg(3)).unwrap();
        let h = centered_kernel(BasisKind::HaarWavelet, 3, two.row(0), two.row(1), &p0).unwrap();
        assert!((t2 - h).abs() < 1e-12);
        assert!(statistic_t(&uniform(1, 2, 5), &p0, &cfg(3)).is_err());
    }

    #[test]
    fn streamed_and_packed_agree() {
        let s = uniform(150, 3, 6);
        let packed = GramMatrix::packed(&s, BasisKind::HaarWavelet, 5);
        let streamed = GramMatrix::streamed(&s, BasisKind::HaarWavelet, 5);
        assert_eq!(packed.moments(), streamed.moments());
        let c = cfg(5);
        assert_eq!(
            bootstrap_from(&packed, None, &c).unwrap(),
            bootstrap_from(&streamed, None, &c).unwrap()
        );
        assert_eq!(packed.get(3, 7), kernel_h(BasisKind::HaarWavelet, 5, s.row(3), s.row(7)));
    }

    #[test]
    fn statistic_is_permutation_invariant() {
        let s = uniform(60, 2, 7);
        let p0 = CoefficientTable::constant(BasisKind::HaarWavelet, 2, 6, 1.0);
        let mut order: Vec<usize> = (0..60).collect();
        order.reverse();
        order.swap(3, 40);
        let a = statistic_t(&s, &p0, &cfg(6)).unwrap();
        let b = statistic_t(&s.select(&order), &p0, &cfg(6)).unwrap();
        assert!((a - b).abs() <= 1e-13 * a.abs().max(1.0));
    }

    #[test]
    fn bootstrap_examples() {
        let s = uniform(30, 2, 8);
        let c = GofConfig {
            flip_prob: 0.0,
            bootstrap_reps: 5,
            ..cfg(3)
        };
        let reps = wild_bootstrap(&s, &c).unwrap();
        let mut full = 0.0;
        for i in 0..30 {
            for j in 0..30 {
                if i != j {
                    full += kernel_h(BasisKind::HaarWavelet, 3, s.row(i), s.row(j));
                }
            }
        }
        full /= 30.0 * 29.0;
        for r in &reps {
            assert!((r - full).abs() < 1e-12);
        }

        let c = GofConfig {
            bootstrap_reps: 2000,
            seed: 9,
            ..cfg(3)
        };
        let reps = wild_bootstrap(&s, &c).unwrap();
        assert_eq!(reps.len(), 2000);
        let mean = reps.iter().sum::<f64>() / 2000.0;
        let var = reps.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / 1999.0;
        assert!(mean.abs() < 3.0 * (var / 2000.0).sqrt());
        assert_eq!(reps, wild_bootstrap(&s, &c).unwrap());
    }

    #[test]
    fn centered_bootstrap_matches_direct() {
        let s = uniform(25, 2, 10);
        let f1 = |x: f64| 2.0 * x;
        let p0 = project_product(&[&f1, &f1], BasisKind::HaarWavelet, 3, 64).unwrap();
        let c = GofConfig {
            bootstrap_reps: 3,
            seed: 4,
            center_bootstrap: true,
            ..cfg(3)
        };
        let gram = GramMatrix::new(&s, BasisKind::HaarWavelet, 3);
        let cent = Centering::new(&s, &p0, BasisKind::HaarWavelet, 3).unwrap();
        let reps = bootstrap_from(&gram, Some(&cent), &c).unwrap();
        for (r, val) in reps.iter().enumerate() {
            let b = bootstrap_chain(25, 0.5, &mut stream_rng(4, r as u64));
            let mut acc = 0.0;
            for i in 0..25 {
                for j in 0..25 {
                    if i != j {
                        acc += b[i]
                            * b[j]
                            * centered_kernel(BasisKind::HaarWavelet, 3, s.row(i), s.row(j), &p0).unwrap();
                    }
                }
            }
            assert!((acc / 600.0 - val).abs() < 1e-12);
        }
    }

    /// Literal triple and quadruple loops over distinct indices.
    pub(crate) fn brute_variance_terms(g: &[Vec<f64>]) -> (f64, f64, f64) {
        let n = g.len();
        let nf = n as f64;
        let (mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s1 += g[i][j] * g[i][j];
                }
            }
        }
        for i in 0..n {
            for j1 in 0..n {
                for j2 in 0..n {
                    if i != j1 && i != j2 && j1 != j2 {
                        s2 += g[i][j1] * g[i][j2];
                    }
                }
            }
        }
        for i1 in 0..n {
            for i2 in 0..n {
                for j1 in 0..n {
                    for j2 in 0..n {
                        let idx = [i1, i2, j1, j2];
                        let distinct = (0..4).all(|a| (a + 1..4).all(|b| idx[a] != idx[b]));
                        if distinct {
                            s3 += g[i1][j1] * g[i2][j2];
                        }
                    }
                }
            }
        }
        let p2 = nf * (nf - 1.0);
        let p3 = p2 * (nf - 2.0);
        let p4 = p3 * (nf - 3.0);
        (s1 / p2, 2.0 * s2 / p3, s3 / p4)
    }

    #[test]
    fn variance_matches_brute_force() {
        for (seed, n) in (5..=12).enumerate() {
            let s = uniform(n, 2, 100 + seed as u64);
            let gram = GramMatrix::new(&s, BasisKind::HaarWavelet, 2);
            let full: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| gram.get(i, j)).collect()).collect();
            let (_, sq, rows) = gram.moments();
            let fast = variance_terms(n, sq, &rows);
            let slow = brute_variance_terms(&full);
            for (a, b) in [(fast.0, slow.0), (fast.1, slow.1), (fast.2, slow.2)] {
                assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-300), "{a} {b}");
            }
        }
    }

    #[test]
    fn constant_kernel_has_zero_variance() {
        // Fourier level 0 kernel is identically 1
        let s = uniform(9, 2, 11);
        let c = GofConfig {
            basis: BasisKind::Fourier,
            ..cfg(0)
        };
        let gram = GramMatrix::new(&s, BasisKind::Fourier, 0);
        let (_, sq, rows) = gram.moments();
        let (t1, t2, t3) = variance_terms(9, sq, &rows);
        assert!((t1 - 1.0).abs() < 1e-12 && (t2 - 2.0).abs() < 1e-12 && (t3 - 1.0).abs() < 1e-12);
        assert_eq!(variance_estimator(&s, &c).unwrap(), 0.0);
        assert!(variance_estimator(&uniform(4, 2, 1), &c).is_err());
    }

    #[test]
    fn threshold_is_an_order_statistic() {
        let stats: Vec<f64> = (0..1000).map(|i| ((i * 37) % 1000) as f64).collect();
        assert_eq!(bootstrap_threshold(&stats, 0.05), 949.0);
        assert_eq!(bootstrap_threshold(&[3.0], 0.05), 3.0);
    }

    #[test]
    fn run_test_is_consistent() {
        let s = uniform(80, 2, 12);
        let p0 = CoefficientTable::constant(BasisKind::HaarWavelet, 2, 3, 1.0);
        let c = GofConfig {
            bootstrap_reps: 200,
            seed: 3,
            ..cfg(3)
        };
        let run = run_test(&s, &p0, &c).unwrap();
        assert_eq!(run.bootstrap_stats.len(), 200);
        assert_eq!(run.reject, run.statistic > run.threshold);
        assert!(run.bootstrap_stats.contains(&run.threshold));
        assert!(run.sigma_hat >= 0.0);
        assert_eq!(run.csv_row().split(',').count(), GofTestRun::CSV_HEADER.split(',').count());
        let full = project(&|_| 1.0, BasisKind::HaarWavelet, 2, 3, 64).unwrap();
        let run2 = run_test(&s, &full, &c).unwrap();
        assert!((run.statistic - run2.statistic).abs() < 1e-10);
    }
}
