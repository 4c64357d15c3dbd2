//! Pointwise evaluation of the tensor Fourier system, the hyperbolic-cross
//! Haar system and cardinal B-splines on `[0,1]^D`.
//!
//! Fourier functions use a real, sign-coded form:
//! `e_0 = 1`, `e_s = √2 cos(2π s x)` for `s > 0` and `e_s = √2 sin(2π|s|x)` for
//! `s < 0`.
//!
//! Haar functions follow the multiresolution layout where level 0 holds the
//! father `φ = 1` (`s = 0`) and the mother `ψ` (`s = 1`), and level `k ≥ 1` holds
//! `2^{k/2} ψ(2^k x − s)` for `s = 0, …, 2^k − 1`. Together these form a complete
//! orthonormal system of `L²[0,1]`; level `l` spans the piecewise constants on
//! `2^{l+1}` equal cells. The right endpoint `x = 1` is attached to the last
//! cell so every function is well defined on the closed cube.

use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use crate::error::{HxdError, Result};
use crate::hypercross::{self, BlockIter, FrequencyIndex, MultiIndex, MultiIndexIter};

/// Orthonormal system used to index a coefficient table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Fourier,
    HaarWavelet,
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisKind::Fourier => write!(f, "fourier"),
            BasisKind::HaarWavelet => write!(f, "haar"),
        }
    }
}

impl FromStr for BasisKind {
    type Err = HxdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fourier" => Ok(BasisKind::Fourier),
            "haar" | "haar_wavelet" | "wavelet" => Ok(BasisKind::HaarWavelet),
            other => Err(HxdError::Parse(format!("unknown basis '{other}'"))),
        }
    }
}

impl BasisKind {
    /// Indices admissible for one coordinate at level `k`, ascending.
    pub fn block_values_1d(self, k: u32) -> Vec<i64> {
        match self {
            BasisKind::Fourier => hypercross::block_frequencies_1d(k),
            BasisKind::HaarWavelet => haar_translations(k).collect(),
        }
    }

    /// Enumerates the block of multi-index `k` for this basis.
    pub fn block(self, k: &MultiIndex) -> BlockIter {
        match self {
            BasisKind::Fourier => hypercross::enumerate_block(k),
            BasisKind::HaarWavelet => BlockIter::new(
                k.entries()
                    .iter()
                    .map(|&ki| self.block_values_1d(ki))
                    .collect(),
            ),
        }
    }

    /// Whether `(k, s)` names a function of this basis.
    pub fn contains(self, k: &MultiIndex, s: &FrequencyIndex) -> bool {
        if k.dim() != s.dim() {
            return false;
        }
        match self {
            BasisKind::Fourier => s.in_block(k),
            BasisKind::HaarWavelet => k
                .entries()
                .iter()
                .zip(s.entries())
                .all(|(&ki, &si)| haar_translations(ki).contains(&si)),
        }
    }

    /// Every `(k, s)` with `|k| ≤ level`, in canonical order.
    pub fn cross(self, dim: usize, level: u32) -> impl Iterator<Item = (MultiIndex, FrequencyIndex)> {
        MultiIndexIter::new(dim, level).flat_map(move |k| {
            let it = self.block(&k);
            it.map(move |s| (k.clone(), s))
        })
    }

    /// Number of functions in the level-`l` cross.
    pub fn cross_len(self, dim: usize, level: u32) -> u128 {
        match self {
            BasisKind::Fourier => hypercross::cross_cardinality(dim, level),
            BasisKind::HaarWavelet => MultiIndexIter::new(dim, level)
                .map(|k| {
                    k.entries()
                        .iter()
                        .map(|&ki| if ki == 0 { 2u128 } else { 1u128 << ki })
                        .product::<u128>()
                })
                .sum(),
        }
    }

    /// Number of one-dimensional functions with level `≤ l`.
    pub fn len_1d(self, level: u32) -> usize {
        match self {
            BasisKind::Fourier => (1usize << (level + 1)) - 1,
            BasisKind::HaarWavelet => 1usize << (level + 1),
        }
    }

    /// Dense position of the one-dimensional function `(k, s)`.
    ///
    /// The layout does not depend on the truncation level, so feature vectors
    /// computed at level `l` can be indexed by any `(k, s)` with `k ≤ l`.
    pub fn offset_1d(self, k: u32, s: i64) -> usize {
        match self {
            BasisKind::Fourier => {
                if s == 0 {
                    0
                } else if s > 0 {
                    (2 * s - 1) as usize
                } else {
                    (2 * -s) as usize
                }
            }
            BasisKind::HaarWavelet => {
                if k == 0 {
                    s as usize
                } else {
                    (1usize << k) + s as usize
                }
            }
        }
    }

    /// Evaluates one coordinate's basis function.
    pub fn eval_1d(self, k: u32, s: i64, x: f64) -> f64 {
        match self {
            BasisKind::Fourier => fourier_1d(s, x),
            BasisKind::HaarWavelet => haar_1d(k, s, x),
        }
    }

    /// Fills `out` with every one-dimensional function of level `≤ l` at `x`,
    /// using the dense layout of [`BasisKind::offset_1d`].
    pub fn features_1d(self, level: u32, x: f64, out: &mut Vec<f64>) {
        out.clear();
        out.resize(self.len_1d(level), 0.0);
        match self {
            BasisKind::Fourier => {
                out[0] = 1.0;
                let top = 1i64 << level;
                for m in 1..top {
                    let (sn, cs) = (2.0 * PI * m as f64 * x).sin_cos();
                    out[(2 * m - 1) as usize] = SQRT_2 * cs;
                    out[(2 * m) as usize] = SQRT_2 * sn;
                }
            }
            BasisKind::HaarWavelet => {
                let u = clamp_unit(x);
                out[0] = 1.0;
                out[1] = haar_sign(u, 0);
                for k in 1..=level {
                    let scale = (1u64 << k) as f64;
                    let cell = ((u * scale) as usize).min((1usize << k) - 1);
                    out[(1usize << k) + cell] = scale.sqrt() * haar_sign(u, k);
                }
            }
        }
    }

    /// Supremum norm of the one-dimensional function `(k, s)`.
    pub fn sup_norm_1d(self, k: u32, s: i64) -> f64 {
        match self {
            BasisKind::Fourier => {
                if s == 0 {
                    1.0
                } else {
                    SQRT_2
                }
            }
            BasisKind::HaarWavelet => {
                if k == 0 {
                    1.0
                } else {
                    ((1u64 << k) as f64).sqrt()
                }
            }
        }
    }

    /// `‖φ_{k,s}‖_∞` for the tensor function.
    pub fn sup_norm(self, k: &MultiIndex, s: &FrequencyIndex) -> f64 {
        k.entries()
            .iter()
            .zip(s.entries())
            .map(|(&ki, &si)| self.sup_norm_1d(ki, si))
            .product()
    }

    /// Evaluates the tensor function `φ_{k,s}(x)`.
    pub fn eval(self, k: &MultiIndex, s: &FrequencyIndex, x: &[f64]) -> f64 {
        k.entries()
            .iter()
            .zip(s.entries())
            .zip(x)
            .map(|((&ki, &si), &xi)| self.eval_1d(ki, si, xi))
            .product()
    }

    /// Per-level one-dimensional projection kernel
    /// `a[k] = Σ_{s at level k} φ_{k,s}(x) φ_{k,s}(y)` for `k = 0..=l`.
    ///
    /// Returns the highest level with a possibly non-zero entry; entries above
    /// it are zero.
    pub fn level_kernel_1d(self, level: u32, x: f64, y: f64, out: &mut [f64]) -> usize {
        debug_assert!(out.len() > level as usize);
        match self {
            BasisKind::Fourier => {
                out[0] = 1.0;
                let mut d = x - y;
                d -= d.round();
                for k in 1..=level {
                    let a = 1i64 << (k - 1);
                    let b = (1i64 << k) - 1;
                    out[k as usize] = 2.0 * cos_range_sum(a, b, 2.0 * PI * d);
                }
                level as usize
            }
            BasisKind::HaarWavelet => {
                let (u, v) = (clamp_unit(x), clamp_unit(y));
                out[0] = 1.0 + haar_sign(u, 0) * haar_sign(v, 0);
                let mut top = 0usize;
                for k in 1..=level {
                    let scale = (1u64 << k) as f64;
                    let cu = (u * scale) as u64;
                    let cv = (v * scale) as u64;
                    if cu != cv {
                        break;
                    }
                    out[k as usize] = scale * haar_sign(u, k) * haar_sign(v, k);
                    top = k as usize;
                }
                for slot in out.iter_mut().take(level as usize + 1).skip(top + 1) {
                    *slot = 0.0;
                }
                top
            }
        }
    }
}

/// Translation range of the Haar system at level `k`.
pub fn haar_translations(k: u32) -> std::ops::Range<i64> {
    if k == 0 {
        0..2
    } else {
        0..(1i64 << k)
    }
}

fn clamp_unit(x: f64) -> f64 {
    // attach x = 1 to the last dyadic cell
    const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;
    x.clamp(0.0, BELOW_ONE)
}

/// Sign of `ψ(2^k u − ⌊2^k u⌋)`: +1 on the left half of the cell, −1 on the right.
fn haar_sign(u: f64, k: u32) -> f64 {
    let half_cell = (u * (1u64 << (k + 1)) as f64) as u64;
    if half_cell % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `Σ_{m=a}^{b} cos(mθ)` in product form.
fn cos_range_sum(a: i64, b: i64, theta: f64) -> f64 {
    let count = (b - a + 1) as f64;
    let half = 0.5 * theta;
    let den = half.sin();
    let mid = ((a + b) as f64 * half).cos();
    if den == 0.0 {
        return count * mid;
    }
    mid * (count * half).sin() / den
}

/// `e_s(x)` of the sign-coded trigonometric system.
pub fn fourier_1d(s: i64, x: f64) -> f64 {
    if s == 0 {
        1.0
    } else if s > 0 {
        SQRT_2 * (2.0 * PI * s as f64 * x).cos()
    } else {
        SQRT_2 * (2.0 * PI * (-s) as f64 * x).sin()
    }
}

/// Mother wavelet `ψ = 1_[0,1/2) − 1_[1/2,1)`.
pub fn haar_mother(t: f64) -> f64 {
    if (0.0..0.5).contains(&t) {
        1.0
    } else if (0.5..1.0).contains(&t) {
        -1.0
    } else {
        0.0
    }
}

fn haar_1d(k: u32, s: i64, x: f64) -> f64 {
    let u = clamp_unit(x);
    if k == 0 {
        return if s == 0 { 1.0 } else { haar_mother(u) };
    }
    let scale = (1u64 << k) as f64;
    scale.sqrt() * haar_mother(scale * u - s as f64)
}

/// Tensor Fourier function `φ^F_s(x)`.
pub fn eval_fourier(s: &FrequencyIndex, x: &[f64]) -> f64 {
    s.entries()
        .iter()
        .zip(x)
        .map(|(&si, &xi)| fourier_1d(si, xi))
        .product()
}

/// Tensor Haar function `φ^W_{k,s}(x)`.
pub fn eval_haar(k: &MultiIndex, s: &FrequencyIndex, x: &[f64]) -> Result<f64> {
    if k.dim() != s.dim() || k.dim() != x.len() {
        return Err(HxdError::DimensionMismatch {
            expected: k.dim(),
            found: if s.dim() != k.dim() { s.dim() } else { x.len() },
        });
    }
    for (&ki, &si) in k.entries().iter().zip(s.entries()) {
        if !haar_translations(ki).contains(&si) {
            return Err(HxdError::InvalidArgument(format!(
                "translation {si} out of range for Haar level {ki}"
            )));
        }
    }
    Ok(BasisKind::HaarWavelet.eval(k, s, x))
}

/// Tensor B-spline `M^{D,α}_{k,s}(x) = Π_j N_α(2^k x_j − s_j)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BSplineSpec {
    pub order: u32,
    pub level: u32,
    pub shift: Vec<i64>,
}

impl BSplineSpec {
    pub fn new(order: u32, level: u32, shift: Vec<i64>) -> Self {
        BSplineSpec { order, level, shift }
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    /// Closed support box `×_j [2^{−k} s_j, 2^{−k}(s_j + α + 1)]`.
    pub fn support(&self) -> Vec<(f64, f64)> {
        let h = 0.5f64.powi(self.level as i32);
        self.shift
            .iter()
            .map(|&s| (h * s as f64, h * (s + self.order as i64 + 1) as f64))
            .collect()
    }

    /// `∫ M` over ℝ^D: each factor integrates to `2^{−k}`.
    pub fn integral(&self) -> f64 {
        0.5f64.powi((self.level as usize * self.dim()) as i32)
    }
}

/// Cardinal B-spline `N_α`, the `(α+1)`-fold convolution of `1_[0,1)`.
///
/// Evaluated by the recursion
/// `N_α(x) = (x N_{α−1}(x) + (α+1−x) N_{α−1}(x−1)) / α`.
pub fn cardinal_bspline(order: u32, x: f64) -> f64 {
    let a = order as usize;
    if !(0.0..(a + 1) as f64).contains(&x) {
        return 0.0;
    }
    // vals[j] holds N_p(x − j) for the current degree p
    let mut vals = vec![0.0; a + 1];
    let cell = (x.floor() as usize).min(a);
    vals[cell] = 1.0;
    for p in 1..=a {
        let mut next = vec![0.0; a + 1];
        for (j, slot) in next.iter_mut().enumerate() {
            let t = x - j as f64;
            let left = vals[j];
            let right = if j + 1 <= a { vals[j + 1] } else { 0.0 };
            // N_p(t) = (t N_{p−1}(t) + (p+1−t) N_{p−1}(t−1)) / p
            *slot = (t * left + (p as f64 + 1.0 - t) * right) / p as f64;
        }
        vals = next;
    }
    vals[0]
}

/// Evaluates `M^{D,α}_{k,s}` at `x`.
pub fn eval_bspline(spec: &BSplineSpec, x: &[f64]) -> f64 {
    let scale = (1u64 << spec.level) as f64;
    spec.shift
        .iter()
        .zip(x)
        .map(|(&s, &xi)| cardinal_bspline(spec.order, scale * xi - s as f64))
        .product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussLegendre;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fourier_cross_1d(level: u32) -> Vec<(MultiIndex, FrequencyIndex)> {
        BasisKind::Fourier.cross(2, level).collect()
    }

    #[test]
    fn fourier_examples() {
        let zero = FrequencyIndex::zeros(2);
        assert_eq!(eval_fourier(&zero, &[0.3, 0.9]), 1.0);
        let s = FrequencyIndex::new(vec![1, 0]);
        assert!((eval_fourier(&s, &[0.0, 0.7]) - SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn fourier_gram_is_identity() {
        let rule = GaussLegendre::new(64).on_unit();
        let funcs: Vec<_> = fourier_cross_1d(3)
            .into_iter()
            .filter(|(k, _)| k.entries().iter().all(|&v| v <= 3))
            .collect();
        let mut worst: f64 = 0.0;
        for (i, (_, s)) in funcs.iter().enumerate() {
            for (_, t) in funcs.iter().skip(i) {
                let mut acc = 0.0;
                for (x, wx) in rule.iter() {
                    for (y, wy) in rule.iter() {
                        let p = [x, y];
                        acc += wx * wy * eval_fourier(s, &p) * eval_fourier(t, &p);
                    }
                }
                let target = if s == t { 1.0 } else { 0.0 };
                worst = worst.max((acc - target).abs());
            }
        }
        assert!(worst < 1e-10, "worst deviation {worst}");
    }

    #[test]
    fn haar_examples() {
        let k = MultiIndex::zeros(2);
        let s = FrequencyIndex::zeros(2);
        assert_eq!(eval_haar(&k, &s, &[0.1, 0.8]).unwrap(), 1.0);

        let k = MultiIndex::new(vec![1]);
        let s = FrequencyIndex::new(vec![0]);
        assert!((eval_haar(&k, &s, &[0.1]).unwrap() - SQRT_2).abs() < 1e-15);

        let bad = FrequencyIndex::new(vec![2]);
        assert!(eval_haar(&k, &bad, &[0.1]).is_err());
    }

    #[test]
    fn haar_values_are_quantized() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (k, s) in BasisKind::HaarWavelet.cross(2, 4) {
            let x = [rng.random::<f64>(), rng.random::<f64>()];
            let v = BasisKind::HaarWavelet.eval(&k, &s, &x);
            let mag = BasisKind::HaarWavelet.sup_norm(&k, &s);
            assert!(v == 0.0 || (v.abs() - mag).abs() < 1e-12);
        }
    }

    #[test]
    fn features_match_pointwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut buf = Vec::new();
        for kind in [BasisKind::Fourier, BasisKind::HaarWavelet] {
            for _ in 0..20 {
                let x: f64 = if rng.random_bool(0.1) { 1.0 } else { rng.random() };
                kind.features_1d(5, x, &mut buf);
                for k in 0..=5 {
                    for s in kind.block_values_1d(k) {
                        let direct = kind.eval_1d(k, s, x);
                        assert!((buf[kind.offset_1d(k, s)] - direct).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn level_kernels_match_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut out = vec![0.0; 9];
        for kind in [BasisKind::Fourier, BasisKind::HaarWavelet] {
            for _ in 0..50 {
                let x: f64 = rng.random();
                let y: f64 = if rng.random_bool(0.3) { x } else { rng.random() };
                kind.level_kernel_1d(8, x, y, &mut out);
                for k in 0..=8 {
                    let direct: f64 = kind
                        .block_values_1d(k)
                        .into_iter()
                        .map(|s| kind.eval_1d(k, s, x) * kind.eval_1d(k, s, y))
                        .sum();
                    assert!(
                        (out[k as usize] - direct).abs() < 1e-9,
                        "{kind} level {k}: {} vs {direct}",
                        out[k as usize]
                    );
                }
            }
        }
    }

    #[test]
    fn offsets_are_dense() {
        for kind in [BasisKind::Fourier, BasisKind::HaarWavelet] {
            let mut seen = vec![false; kind.len_1d(6)];
            for k in 0..=6 {
                for s in kind.block_values_1d(k) {
                    let o = kind.offset_1d(k, s);
                    assert!(!seen[o]);
                    seen[o] = true;
                }
            }
            assert!(seen.into_iter().all(|b| b));
        }
    }

    #[test]
    fn bspline_examples() {
        assert_eq!(cardinal_bspline(0, 0.3), 1.0);
        assert_eq!(cardinal_bspline(0, 1.0), 0.0);
        assert!((cardinal_bspline(1, 1.0) - 1.0).abs() < 1e-15);
        assert!((cardinal_bspline(1, 0.5) - 0.5).abs() < 1e-15);
        // quadratic: N_2(1.5) = 3/4
        assert!((cardinal_bspline(2, 1.5) - 0.75).abs() < 1e-15);
        // cubic: N_3(2) = 2/3
        assert!((cardinal_bspline(3, 2.0) - 2.0 / 3.0).abs() < 1e-15);

        let spec = BSplineSpec::new(0, 2, vec![1, 2]);
        assert_eq!(eval_bspline(&spec, &[0.3, 0.6]), 1.0);
        assert_eq!(eval_bspline(&spec, &[0.6, 0.6]), 0.0);
    }

    #[test]
    fn bspline_partition_of_unity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for order in 1..=3u32 {
            for _ in 0..100 {
                let x: f64 = rng.random_range(-5.0..5.0);
                let total: f64 = (-10..=10).map(|s| cardinal_bspline(order, x - s as f64)).sum();
                assert!((total - 1.0).abs() < 1e-12);
                assert!(cardinal_bspline(order, x) >= 0.0);
            }
        }
    }

    #[test]
    fn bspline_matches_convolution() {
        // N_α = N_{α−1} * 1_[0,1): check by midpoint quadrature of the convolution
        for order in 1..=3u32 {
            for &x in &[0.25, 0.9, 1.4, 2.2, 3.1] {
                let m = 20_000;
                let conv: f64 = (0..m)
                    .map(|i| {
                        let t = (i as f64 + 0.5) / m as f64;
                        cardinal_bspline(order - 1, x - t)
                    })
                    .sum::<f64>()
                    / m as f64;
                assert!((conv - cardinal_bspline(order, x)).abs() < 1e-6);
            }
        }
    }
}
