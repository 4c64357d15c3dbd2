//! Reference density estimators: product-Gaussian KDE and a product-form
//! B-spline distribution estimator (BSDE).

use serde::{Deserialize, Serialize};

use crate::data::SampleMatrix;
use crate::error::{HxdError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KdeBandwidth {
    /// `h = scale · n^{−1/(D+4)}`.
    #[default]
    Standard,
    /// `h = scale · n^{4/D}`.
    Literal,
}

#[derive(Debug, Clone)]
pub struct KdeModel {
    samples: SampleMatrix,
    bandwidth: f64,
}

impl KdeModel {
    pub fn new(samples: SampleMatrix, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(HxdError::InvalidArgument("bandwidth must be positive".into()));
        }
        if samples.is_empty() {
            return Err(HxdError::EmptySample);
        }
        Ok(KdeModel { samples, bandwidth })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// `(1/(n h^D)) Σ_i Π_j K((x_j − X_ij)/h)` with the standard normal `K`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let h = self.bandwidth;
        let dim = self.samples.dim();
        let norm = (2.0 * std::f64::consts::PI).sqrt() * h;
        let inv = 1.0 / (self.samples.len() as f64 * norm.powi(dim as i32));
        self.samples
            .rows()
            .map(|xi| {
                let q: f64 = x.iter().zip(xi).map(|(a, b)| ((a - b) / h).powi(2)).sum();
                (-0.5 * q).exp()
            })
            .sum::<f64>()
            * inv
    }
}

/// Fits a Gaussian KDE.
pub fn kde_fit(samples: &SampleMatrix, bandwidth_scale: f64, mode: KdeBandwidth) -> Result<KdeModel> {
    if samples.len() < 2 {
        return Err(HxdError::InvalidArgument("KDE needs at least 2 samples".into()));
    }
    let n = samples.len() as f64;
    let d = samples.dim() as f64;
    let h = match mode {
        KdeBandwidth::Standard => bandwidth_scale * n.powf(-1.0 / (d + 4.0)),
        KdeBandwidth::Literal => bandwidth_scale * n.powf(4.0 / d),
    };
    KdeModel::new(samples.clone(), h)
}

/// Scott-style scale: mean per-coordinate sample standard deviation.
pub fn mean_std(samples: &SampleMatrix) -> f64 {
    let n = samples.len() as f64;
    (0..samples.dim())
        .map(|j| {
            let c = samples.column(j);
            let m = c.iter().sum::<f64>() / n;
            (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        })
        .sum::<f64>()
        / samples.dim() as f64
}

/// Clamped uniform cubic spline on `[0,1]` with `intervals` pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    knots: Vec<f64>,
    coeffs: Vec<f64>,
}

const DEGREE: usize = 3;

impl CubicSpline {
    fn knot_vector(intervals: usize) -> Vec<f64> {
        let mut t = vec![0.0; DEGREE];
        t.extend((0..=intervals).map(|i| i as f64 / intervals as f64));
        t.extend(std::iter::repeat_n(1.0, DEGREE));
        t
    }

    fn intervals(&self) -> usize {
        self.knots.len() - 2 * DEGREE - 1
    }

    /// Knot span index and the `p + 1` non-zero basis values at `x`.
    fn basis(knots: &[f64], degree: usize, x: f64) -> (usize, Vec<f64>) {
        let m = knots.len() - degree - 1;
        let x = x.clamp(0.0, 1.0);
        let mut span = degree;
        while span + 1 < m && knots[span + 1] <= x {
            span += 1;
        }
        let mut n = vec![0.0; degree + 1];
        n[0] = 1.0;
        let mut left = vec![0.0; degree + 1];
        let mut right = vec![0.0; degree + 1];
        for j in 1..=degree {
            left[j] = x - knots[span + 1 - j];
            right[j] = knots[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        (span, n)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (span, n) = Self::basis(&self.knots, DEGREE, x);
        n.iter().enumerate().map(|(r, v)| v * self.coeffs[span - DEGREE + r]).sum()
    }

    /// First derivative, a quadratic spline on the inner knot vector.
    pub fn derivative(&self, x: f64) -> f64 {
        let t = &self.knots;
        let inner = &t[1..t.len() - 1];
        let (span, n) = Self::basis(inner, DEGREE - 1, x);
        n.iter()
            .enumerate()
            .map(|(r, v)| {
                let i = span - (DEGREE - 1) + r;
                let dt = t[i + DEGREE + 1] - t[i + 1];
                if dt == 0.0 {
                    0.0
                } else {
                    v * DEGREE as f64 * (self.coeffs[i + 1] - self.coeffs[i]) / dt
                }
            })
            .sum()
    }
}

/// Solves `A c = b` for symmetric positive definite `A` (row-major).
fn cholesky_solve(mut a: Vec<f64>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let m = b.len();
    for j in 0..m {
        let mut d = a[j * m + j];
        for k in 0..j {
            d -= a[j * m + k] * a[j * m + k];
        }
        if !(d > 0.0) {
            return Err(HxdError::Singular("spline normal equations".into()));
        }
        let d = d.sqrt();
        a[j * m + j] = d;
        for i in j + 1..m {
            let mut s = a[i * m + j];
            for k in 0..j {
                s -= a[i * m + k] * a[j * m + k];
            }
            a[i * m + j] = s / d;
        }
    }
    for i in 0..m {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * m + k] * b[k];
        }
        b[i] = s / a[i * m + i];
    }
    for i in (0..m).rev() {
        let mut s = b[i];
        for k in i + 1..m {
            s -= a[k * m + i] * b[k];
        }
        b[i] = s / a[i * m + i];
    }
    Ok(b)
}

/// Pool-adjacent-violators: the non-decreasing least-squares fit to `v`.
fn isotonic(v: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::new();
    for &x in v {
        blocks.push((x, 1));
        while blocks.len() > 1 {
            let (m2, c2) = blocks[blocks.len() - 1];
            let (m1, c1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let last = blocks.last_mut().unwrap();
            *last = ((m1 * c1 as f64 + m2 * c2 as f64) / (c1 + c2) as f64, c1 + c2);
        }
    }
    blocks.into_iter().flat_map(|(m, c)| std::iter::repeat_n(m, c)).collect()
}

/// Least-squares cubic spline fit of the empirical CDF of `values`, with the
/// end coefficients pinned to 0 and 1 and the rest made monotone.
pub fn fit_cdf_spline(values: &[f64], intervals: usize) -> Result<CubicSpline> {
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[n - 1] - sorted[0] <= 0.0 {
        return Err(HxdError::InvalidArgument("degenerate (constant) coordinate".into()));
    }
    let knots = CubicSpline::knot_vector(intervals);
    let ncoef = intervals + DEGREE;
    // free coefficients 1..ncoef-1; c_0 = 0 and c_last = 1 are fixed
    let m = ncoef - 2;
    let mut ata = vec![0.0; m * m];
    let mut atb = vec![0.0; m];
    for (i, &x) in sorted.iter().enumerate() {
        let y = (i as f64 + 0.5) / n as f64;
        let (span, basis) = CubicSpline::basis(&knots, DEGREE, x);
        let mut rhs = y;
        let mut idx = Vec::with_capacity(DEGREE + 1);
        for (r, &v) in basis.iter().enumerate() {
            let c = span - DEGREE + r;
            if c == ncoef - 1 {
                rhs -= v;
            } else if c > 0 {
                idx.push((c - 1, v));
            }
        }
        for &(p, vp) in &idx {
            atb[p] += vp * rhs;
            for &(q, vq) in &idx {
                ata[p * m + q] += vp * vq;
            }
        }
    }
    // light ridge towards the uniform CDF keeps empty spans well posed
    let ridge = 1e-6 * n as f64 / m as f64;
    for p in 0..m {
        ata[p * m + p] += ridge;
        let greville = (knots[p + 2] + knots[p + 3] + knots[p + 4]) / 3.0;
        atb[p] += ridge * greville;
    }
    let free = cholesky_solve(ata, atb)?;
    let mut coeffs = Vec::with_capacity(ncoef);
    coeffs.push(0.0);
    coeffs.extend(isotonic(&free).into_iter().map(|c| c.clamp(0.0, 1.0)));
    coeffs.push(1.0);
    Ok(CubicSpline { knots, coeffs })
}

#[derive(Debug, Clone)]
pub struct BsdeModel {
    splines: Vec<CubicSpline>,
}

impl BsdeModel {
    pub fn splines(&self) -> &[CubicSpline] {
        &self.splines
    }

    pub fn knots_per_dim(&self) -> usize {
        self.splines.first().map(|s| s.intervals()).unwrap_or(0)
    }

    pub fn cdf(&self, j: usize, x: f64) -> f64 {
        self.splines[j].eval(x)
    }

    /// `Π_j F̂_j'(x_j)`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.splines.iter().zip(x).map(|(s, &xi)| s.derivative(xi)).product()
    }
}

/// Default knot constant: `⌈√n⌉` intervals per coordinate.
pub const BSDE_KNOT_FACTOR: f64 = 1.0;

/// Coarser knot constant giving a sup-norm accurate derivative on flat data.
pub const BSDE_SMOOTH_KNOT_FACTOR: f64 = 0.25;

/// Fits one monotone CDF spline per coordinate with the default knot count.
pub fn bsde_fit(samples: &SampleMatrix) -> Result<BsdeModel> {
    bsde_fit_with(samples, BSDE_KNOT_FACTOR)
}

/// Fits one monotone CDF spline per coordinate on `⌈factor · √n⌉` uniform
/// intervals.
pub fn bsde_fit_with(samples: &SampleMatrix, knot_factor: f64) -> Result<BsdeModel> {
    if samples.len() < 4 {
        return Err(HxdError::InvalidArgument("BSDE needs at least 4 samples".into()));
    }
    if !(knot_factor > 0.0) {
        return Err(HxdError::InvalidArgument("knot factor must be positive".into()));
    }
    let intervals = ((knot_factor * (samples.len() as f64).sqrt()).ceil() as usize).max(1);
    let splines = (0..samples.dim())
        .map(|j| fit_cdf_spline(&samples.column(j), intervals))
        .collect::<Result<Vec<_>>>()?;
    Ok(BsdeModel { splines })
}
