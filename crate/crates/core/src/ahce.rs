//! The adaptive hyperbolic cross estimator: empirical coefficients
//! `p̃_{s,n} = (1/n) Σ_i φ_s(X_i)` on a hyperbolic cross, multiplied by a
//! smoothing sequence `b_{s,n}`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BasisKind;
use crate::data::SampleMatrix;
use crate::error::{HxdError, Result};
use crate::rng::stream_rng;
use crate::spectral::{BasisKey, CoefficientTable, CompiledTable};

/// Largest cross a model may hold.
pub const MAX_COEFFICIENTS: u128 = 4_000_000;

/// How Wahba's variance constant `c` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WahbaVariance {
    /// `c_s = Var[φ_s(X)]` estimated from the sample.
    PerIndex,
    Global(f64),
}

/// Multiplier sequence `b_{s,n}` together with its truncation level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SmoothingPolicy {
    /// `b = 1` on `|k| ≤ l` with `2^l ≈ c n^{1/(2α+1)} (ln n)^{D(α+ν+1)/(2α+1)}`.
    TruncationFourier { alpha: f64, nu: f64, scale_c: f64 },
    /// `b = 1` on `|k| ≤ l` with `2^l ≈ c n^{1/(2α)} (ln n)^{D(α+ν+1/2)/(2α)}`.
    TruncationWavelet { alpha: f64, nu: f64, scale_c: f64 },
    /// `b = 1 / (1 + c 2^{2|k|α} / n)` on `|k| ≤ l` with
    /// `l = round(log₂(scale_c n^{1/(2α)})) + 1`.
    Wahba {
        alpha: f64,
        variance: WahbaVariance,
        scale_c: f64,
    },
    /// `b = 1` on `|k| ≤ level`.
    FixedLevel { level: u32 },
}

impl SmoothingPolicy {
    pub fn truncation_fourier(alpha: f64) -> Self {
        SmoothingPolicy::TruncationFourier {
            alpha,
            nu: 0.0,
            scale_c: 1.0,
        }
    }

    pub fn truncation_wavelet(alpha: f64) -> Self {
        SmoothingPolicy::TruncationWavelet {
            alpha,
            nu: 0.0,
            scale_c: 1.0,
        }
    }

    pub fn wahba(alpha: f64) -> Self {
        SmoothingPolicy::Wahba {
            alpha,
            variance: WahbaVariance::PerIndex,
            scale_c: 1.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SmoothingPolicy::TruncationFourier { .. } => "truncation_fourier",
            SmoothingPolicy::TruncationWavelet { .. } => "truncation_wavelet",
            SmoothingPolicy::Wahba { .. } => "wahba",
            SmoothingPolicy::FixedLevel { .. } => "fixed_level",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HxdError::InvalidArgument(m.to_string()));
        match *self {
            SmoothingPolicy::TruncationFourier { alpha, nu, scale_c }
            | SmoothingPolicy::TruncationWavelet { alpha, nu, scale_c } => {
                if !(alpha > 0.0) {
                    return bad("alpha must be positive");
                }
                if !(nu >= 0.0) {
                    return bad("nu must be non-negative");
                }
                if !(scale_c > 0.0) {
                    return bad("scale_c must be positive");
                }
            }
            SmoothingPolicy::Wahba {
                alpha,
                variance,
                scale_c,
            } => {
                if !(alpha > 0.0) {
                    return bad("alpha must be positive");
                }
                if !(scale_c > 0.0) {
                    return bad("scale_c must be positive");
                }
                if let WahbaVariance::Global(c) = variance {
                    if !(c >= 0.0) {
                        return bad("variance constant must be non-negative");
                    }
                }
            }
            SmoothingPolicy::FixedLevel { .. } => {}
        }
        Ok(())
    }

    /// Truncation level for `n` samples in dimension `D`.
    pub fn select_level(&self, n: usize, dim: usize) -> Result<u32> {
        self.validate()?;
        if let SmoothingPolicy::FixedLevel { level } = *self {
            return Ok(level);
        }
        if n < 2 {
            return Err(HxdError::InvalidArgument("level selection needs n >= 2".into()));
        }
        let nf = n as f64;
        let d = dim as f64;
        let (scale, e1, e2, extra) = match *self {
            SmoothingPolicy::TruncationFourier { alpha, nu, scale_c } => (
                scale_c,
                1.0 / (2.0 * alpha + 1.0),
                d * (alpha + nu + 1.0) / (2.0 * alpha + 1.0),
                0,
            ),
            SmoothingPolicy::TruncationWavelet { alpha, nu, scale_c } => (
                scale_c,
                1.0 / (2.0 * alpha),
                d * (alpha + nu + 0.5) / (2.0 * alpha),
                0,
            ),
            SmoothingPolicy::Wahba { alpha, scale_c, .. } => (scale_c, 1.0 / (2.0 * alpha), 0.0, 1),
            SmoothingPolicy::FixedLevel { .. } => unreachable!(),
        };
        let log2_target = scale.log2() + e1 * nf.log2() + e2 * nf.ln().log2();
        let level = log2_target.round().clamp(0.0, 60.0) as u32;
        Ok(level + extra)
    }

    /// `b_{s,n}` for a block of order `order`; `variance` is `Var[φ_s(X)]` for
    /// per-index Wahba smoothing.
    pub fn multiplier(&self, order: u32, level: u32, n: usize, variance: Option<f64>) -> Result<f64> {
        if order > level {
            return Ok(0.0);
        }
        match *self {
            SmoothingPolicy::Wahba {
                alpha, variance: v, ..
            } => {
                let c = match v {
                    WahbaVariance::Global(c) => c,
                    WahbaVariance::PerIndex => variance.ok_or_else(|| {
                        HxdError::InvalidArgument("per-index Wahba smoothing needs sample variances".into())
                    })?,
                };
                Ok(1.0 / (1.0 + c * 2f64.powf(2.0 * order as f64 * alpha) / n as f64))
            }
            _ => Ok(1.0),
        }
    }

    fn needs_variance(&self) -> bool {
        matches!(
            self,
            SmoothingPolicy::Wahba {
                variance: WahbaVariance::PerIndex,
                ..
            }
        )
    }
}

/// JSON sidecar describing a serialized model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub basis: BasisKind,
    pub dim: usize,
    pub level: u32,
    pub n: usize,
    pub policy: SmoothingPolicy,
    #[serde(default)]
    pub seed: Option<u64>,
    /// `b_{s,n}` for each table row, in canonical order.
    pub multipliers: Vec<f64>,
}

/// A fitted estimator `p̃_n(x) = Σ b_{s,n} p̃_{s,n} φ_s(x)`.
#[derive(Debug, Clone)]
pub struct AhceModel {
    basis: BasisKind,
    policy: SmoothingPolicy,
    level: u32,
    n: usize,
    table: CoefficientTable,
    multipliers: CoefficientTable,
    compiled: CompiledTable,
    kernel: CompiledTable,
}

impl AhceModel {
    fn assemble(
        basis: BasisKind,
        policy: SmoothingPolicy,
        level: u32,
        n: usize,
        table: CoefficientTable,
        multipliers: CoefficientTable,
    ) -> Self {
        let compiled = table.compile();
        let kernel = multipliers.compile();
        AhceModel {
            basis,
            policy,
            level,
            n,
            table,
            multipliers,
            compiled,
            kernel,
        }
    }

    pub fn basis(&self) -> BasisKind {
        self.basis
    }

    pub fn policy(&self) -> &SmoothingPolicy {
        &self.policy
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.table.dim()
    }

    /// Smoothed coefficients `b_{s,n} p̃_{s,n}`.
    pub fn table(&self) -> &CoefficientTable {
        &self.table
    }

    /// `b_{s,n}` for every retained index.
    pub fn multipliers(&self) -> &CoefficientTable {
        &self.multipliers
    }

    pub fn multiplier(&self, key: &BasisKey) -> f64 {
        self.multipliers.get(key)
    }

    /// `p̃_n(x)`; may be negative.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.compiled.eval(x)
    }

    /// `k(x, y) = Σ b_{s,n} φ_s(x) φ_s(y)`, so that
    /// `p̃_n(x) = (1/n) Σ_i k(x, X_i)`.
    pub fn kernel_form(&self, x: &[f64], y: &[f64]) -> f64 {
        let fx = self.kernel.features(x);
        let fy = self.kernel.features(y);
        let prod: Vec<Vec<f64>> = fx
            .iter()
            .zip(&fy)
            .map(|(a, b)| a.iter().zip(b).map(|(u, v)| u * v).collect())
            .collect();
        self.kernel.eval_features(&prod)
    }

    /// `f̃_n`: the discriminator smoothed by this model's multipliers.
    pub fn smooth(&self, f: &CoefficientTable) -> Result<CoefficientTable> {
        if f.basis() != self.basis {
            return Err(HxdError::BasisMismatch(format!("{} vs {}", f.basis(), self.basis)));
        }
        if f.dim() != self.dim() {
            return Err(HxdError::DimensionMismatch {
                expected: self.dim(),
                found: f.dim(),
            });
        }
        Ok(f.smoothed_with(|k| self.multiplier(k)))
    }

    /// Both sides of `E_{p̃_n} f = (1/n) Σ_i f̃_n(X_i)`: the spectral inner
    /// product `Σ b_s f̂_s p̃_{s,n}` and the sample average of the smoothed `f`.
    pub fn smoothing_identity_check(&self, f: &CoefficientTable, samples: &SampleMatrix) -> Result<(f64, f64)> {
        let smoothed = self.smooth(f)?;
        let lhs = f.iter().map(|(k, c)| c * self.table.get(k)).sum();
        if samples.dim() != self.dim() {
            return Err(HxdError::DimensionMismatch {
                expected: self.dim(),
                found: samples.dim(),
            });
        }
        let compiled = smoothed.compile();
        let rhs = samples.rows().map(|x| compiled.eval(x)).sum::<f64>() / samples.len() as f64;
        Ok((lhs, rhs))
    }

    /// Rejection bound `1 + Σ |c_{k,s}| ‖φ_{k,s}‖_∞`.
    pub fn envelope(&self) -> f64 {
        1.0 + self
            .table
            .iter()
            .map(|(k, c)| c.abs() * self.basis.sup_norm(&k.k, &k.s))
            .sum::<f64>()
    }

    /// Draws `m` points from `max(p̃_n, 0) / Z`.
    pub fn sample(&self, m: usize, seed: u64) -> Result<SampleMatrix> {
        if m == 0 {
            return Err(HxdError::InvalidArgument("sample size must be at least 1".into()));
        }
        let dim = self.dim();
        let mut rng = stream_rng(seed, 0);
        if self.table.iter().all(|(k, c)| *k == BasisKey::dc(dim) || c == 0.0) {
            if self.table.get(&BasisKey::dc(dim)) <= 0.0 {
                return Err(HxdError::ZeroMass);
            }
            let data = (0..m * dim).map(|_| rng.random::<f64>()).collect();
            return SampleMatrix::new(dim, data);
        }
        const PILOT: usize = 20_000;
        let envelope = self.envelope();
        let mut out = Vec::with_capacity(m * dim);
        let mut x = vec![0.0; dim];
        let (mut proposed, mut accepted) = (0usize, 0usize);
        while accepted < m {
            for xi in x.iter_mut() {
                *xi = rng.random::<f64>();
            }
            let u: f64 = rng.random();
            proposed += 1;
            if u * envelope < self.evaluate(&x) {
                out.extend_from_slice(&x);
                accepted += 1;
            }
            if proposed == PILOT && (accepted as f64) < 1e-3 * PILOT as f64 {
                return self.sample_grid(m, &mut rng);
            }
        }
        SampleMatrix::new(dim, out)
    }

    /// Piecewise-constant inverse-CDF fallback on `2^{10 D}` cells (`D ≤ 2`).
    fn sample_grid(&self, m: usize, rng: &mut impl Rng) -> Result<SampleMatrix> {
        let dim = self.dim();
        if dim > 2 {
            return Err(HxdError::TooLarge(
                "rejection acceptance below 1e-3 and no grid fallback above D = 2".into(),
            ));
        }
        let side = 1usize << 10;
        let cells = side.pow(dim as u32);
        let h = 1.0 / side as f64;
        let mut cdf = Vec::with_capacity(cells);
        let mut total = 0.0;
        let mut x = vec![0.0; dim];
        for c in 0..cells {
            let mut rem = c;
            for d in (0..dim).rev() {
                x[d] = ((rem % side) as f64 + 0.5) * h;
                rem /= side;
            }
            total += self.evaluate(&x).max(0.0);
            cdf.push(total);
        }
        if !(total > 0.0) {
            return Err(HxdError::ZeroMass);
        }
        let mut out = Vec::with_capacity(m * dim);
        for _ in 0..m {
            let u = rng.random::<f64>() * total;
            let c = cdf.partition_point(|&v| v <= u).min(cells - 1);
            let mut rem = c;
            let start = out.len();
            out.resize(start + dim, 0.0);
            for d in (0..dim).rev() {
                out[start + d] = ((rem % side) as f64 + rng.random::<f64>()) * h;
                rem /= side;
            }
        }
        SampleMatrix::new(dim, out)
    }

    pub fn meta(&self, seed: Option<u64>) -> ModelMeta {
        ModelMeta {
            basis: self.basis,
            dim: self.dim(),
            level: self.level,
            n: self.n,
            policy: self.policy,
            seed,
            multipliers: self.table.iter().map(|(k, _)| self.multipliers.get(k)).collect(),
        }
    }

    /// Rebuilds a model from its table and sidecar.
    pub fn from_parts(meta: ModelMeta, table: CoefficientTable) -> Result<Self> {
        if table.basis() != meta.basis {
            return Err(HxdError::BasisMismatch(format!("{} vs {}", table.basis(), meta.basis)));
        }
        if table.dim() != meta.dim {
            return Err(HxdError::DimensionMismatch {
                expected: meta.dim,
                found: table.dim(),
            });
        }
        if table.len() != meta.multipliers.len() {
            return Err(HxdError::Parse("multiplier count does not match the table".into()));
        }
        let multipliers = CoefficientTable::new(
            meta.basis,
            meta.dim,
            table.level(),
            table.iter().map(|(k, _)| k.clone()).zip(meta.multipliers.iter().copied()),
        )?;
        Ok(AhceModel::assemble(meta.basis, meta.policy, meta.level, meta.n, table, multipliers))
    }
}

/// Fits the estimator at the policy's level.
pub fn fit(samples: &SampleMatrix, basis: BasisKind, policy: &SmoothingPolicy) -> Result<AhceModel> {
    if samples.is_empty() {
        return Err(HxdError::EmptySample);
    }
    samples.check_unit_cube()?;
    let n = samples.len();
    let dim = samples.dim();
    let level = policy.select_level(n, dim)?;
    let size = basis.cross_len(dim, level);
    if size > MAX_COEFFICIENTS {
        return Err(HxdError::TooLarge(format!(
            "level {level} in dimension {dim} needs {size} coefficients"
        )));
    }
    let keys: Vec<BasisKey> = basis.cross(dim, level).map(|(k, s)| BasisKey::new(k, s)).collect();
    let len = basis.len_1d(level);
    if (n as u128) * (dim as u128) * (len as u128) > 400_000_000 {
        return Err(HxdError::TooLarge("feature cache exceeds memory budget".into()));
    }
    // feats[(i * dim + d) * len + offset]
    let mut feats = vec![0.0; n * dim * len];
    feats
        .par_chunks_mut(dim * len)
        .zip(samples.as_slice().par_chunks(dim))
        .for_each(|(slot, x)| {
            let mut buf = Vec::with_capacity(len);
            for (d, &xi) in x.iter().enumerate() {
                basis.features_1d(level, xi, &mut buf);
                slot[d * len..(d + 1) * len].copy_from_slice(&buf);
            }
        });
    let with_var = policy.needs_variance();
    let moments: Vec<(f64, f64)> = keys
        .par_iter()
        .map(|key| {
            let offs: Vec<usize> = key
                .k
                .entries()
                .iter()
                .zip(key.s.entries())
                .enumerate()
                .map(|(d, (&k, &s))| d * len + basis.offset_1d(k, s))
                .collect();
            let (mut s1, mut s2) = (0.0, 0.0);
            for row in feats.chunks_exact(dim * len) {
                let v: f64 = offs.iter().map(|&o| row[o]).product();
                s1 += v;
                if with_var {
                    s2 += v * v;
                }
            }
            (s1 / n as f64, s2 / n as f64)
        })
        .collect();
    let mut coeffs = Vec::with_capacity(keys.len());
    let mut mults = Vec::with_capacity(keys.len());
    for (key, (mean, sq)) in keys.into_iter().zip(moments) {
        let var = (sq - mean * mean).max(0.0);
        let b = policy.multiplier(key.order(), level, n, Some(var))?;
        coeffs.push((key.clone(), b * mean));
        mults.push((key, b));
    }
    let table = CoefficientTable::new(basis, dim, level, coeffs)?;
    let multipliers = CoefficientTable::new(basis, dim, level, mults)?;
    Ok(AhceModel::assemble(basis, *policy, level, n, table, multipliers))
}
