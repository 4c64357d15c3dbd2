//! Reproduction harnesses: RMSE curves, GOF power tables, convergence-slope
//! fits and the empirical-measure adversarial gap.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ahce::{fit, SmoothingPolicy};
use crate::baselines::{bsde_fit_with, kde_fit, mean_std, KdeBandwidth, BSDE_KNOT_FACTOR};
use crate::basis::{eval_bspline, BSplineSpec, BasisKind};
use crate::data::SampleMatrix;
use crate::datagen::SyntheticDist;
use crate::error::{HxdError, Result};
use crate::gof::{run_test, GofConfig};
use crate::quadrature::GaussLegendre;
use crate::rng::{derive_seed, stream_rng};
use crate::spectral::{default_quad_nodes, project_product, ProductTable};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    RmseCurve,
    PowerTable,
    SlopeCheck,
    EmpiricalGap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Ahce,
    Kde,
    Bsde,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Ahce => "ahce",
            EstimatorKind::Kde => "kde",
            EstimatorKind::Bsde => "bsde",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AhceSettings {
    pub basis: BasisKind,
    pub policy: SmoothingPolicy,
}

impl Default for AhceSettings {
    fn default() -> Self {
        AhceSettings {
            basis: BasisKind::Fourier,
            policy: SmoothingPolicy::truncation_fourier(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KdeSettings {
    /// Bandwidth scale; `None` uses the mean sample standard deviation.
    pub scale: Option<f64>,
    pub mode: KdeBandwidth,
}

impl Default for KdeSettings {
    fn default() -> Self {
        KdeSettings {
            scale: None,
            mode: KdeBandwidth::Standard,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BsdeSettings {
    /// Intervals per coordinate are `⌈knot_factor · √n⌉`.
    pub knot_factor: f64,
}

impl Default for BsdeSettings {
    fn default() -> Self {
        BsdeSettings {
            knot_factor: BSDE_KNOT_FACTOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSettings {
    pub levels: Vec<u32>,
    /// Null hypothesis; must be a product distribution.
    pub null: SyntheticDist,
    #[serde(default = "default_basis")]
    pub basis: BasisKind,
    #[serde(default = "default_significance")]
    pub significance: f64,
    #[serde(default = "default_bootstrap")]
    pub bootstrap_reps: usize,
    #[serde(default = "default_flip")]
    pub flip_prob: f64,
    #[serde(default)]
    pub center_bootstrap: bool,
}

fn default_basis() -> BasisKind {
    BasisKind::HaarWavelet
}

fn default_significance() -> f64 {
    0.05
}

fn default_bootstrap() -> usize {
    1000
}

fn default_flip() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSettings {
    pub dim: usize,
    pub beta: u32,
}

fn default_replications() -> usize {
    20
}

fn default_eval_points() -> usize {
    1000
}

/// A reproducible experiment read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub schema_version: u32,
    pub id: String,
    pub kind: ExperimentKind,
    #[serde(default = "default_dist")]
    pub dist: SyntheticDist,
    #[serde(default)]
    pub estimators: Vec<EstimatorKind>,
    pub n_grid: Vec<usize>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_eval_points")]
    pub eval_points: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ahce: AhceSettings,
    #[serde(default)]
    pub kde: KdeSettings,
    #[serde(default)]
    pub bsde: BsdeSettings,
    #[serde(default)]
    pub gof: Option<PowerSettings>,
    #[serde(default)]
    pub gap: Option<GapSettings>,
}

fn default_dist() -> SyntheticDist {
    SyntheticDist::uniform(1)
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| HxdError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| HxdError::Parse(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(HxdError::Parse(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.n_grid.is_empty() || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HxdError::InvalidArgument("n_grid must be non-empty and strictly increasing".into()));
        }
        if self.replications == 0 {
            return Err(HxdError::InvalidArgument("replications must be at least 1".into()));
        }
        self.dist.validate()?;
        match self.kind {
            ExperimentKind::RmseCurve if self.estimators.is_empty() => {
                Err(HxdError::InvalidArgument("an RMSE curve needs at least one estimator".into()))
            }
            ExperimentKind::PowerTable if self.gof.is_none() => {
                Err(HxdError::InvalidArgument("a power table needs a [gof] section".into()))
            }
            ExperimentKind::EmpiricalGap if self.gap.is_none() => {
                Err(HxdError::InvalidArgument("an empirical gap run needs a [gap] section".into()))
            }
            ExperimentKind::SlopeCheck if self.n_grid.len() < 3 => {
                Err(HxdError::InvalidArgument("a slope check needs at least 3 grid points".into()))
            }
            _ => Ok(()),
        }
    }

    fn data_seed(&self, grid_index: usize, rep: usize) -> u64 {
        derive_seed(self.seed, ((grid_index as u64) << 32) | rep as u64)
    }
}

/// One aggregated measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub estimator: String,
    pub n: usize,
    pub metric: String,
    pub value: f64,
    pub stderr: f64,
}

impl ResultRow {
    pub const CSV_HEADER: &'static str = "experiment,estimator,n,metric,value,stderr";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.experiment, self.estimator, self.n, self.metric, self.value, self.stderr
        )
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m == 0 {
        return f64::NAN;
    }
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Standard error of the mean, 0 for a single value.
pub fn std_error(values: &[f64]) -> f64 {
    let m = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / m;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0) / m).sqrt()
}

/// Ordinary least squares `y = a + b x`; returns `(b, r²)`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, r2)
}

fn fit_and_eval(
    est: EstimatorKind,
    spec: &ExperimentSpec,
    samples: &SampleMatrix,
    points: &SampleMatrix,
) -> Result<Vec<f64>> {
    Ok(match est {
        EstimatorKind::Ahce => {
            let m = fit(samples, spec.ahce.basis, &spec.ahce.policy)?;
            points.rows().map(|x| m.evaluate(x)).collect()
        }
        EstimatorKind::Kde => {
            let scale = spec.kde.scale.unwrap_or_else(|| mean_std(samples));
            let m = kde_fit(samples, scale, spec.kde.mode)?;
            points.rows().map(|x| m.eval(x)).collect()
        }
        EstimatorKind::Bsde => {
            let m = bsde_fit_with(samples, spec.bsde.knot_factor)?;
            points.rows().map(|x| m.eval(x)).collect()
        }
    })
}

/// RMSE at uniform random points against the true density; one row per
/// `(estimator, n)` with the median over replications.
pub fn run_rmse(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    let truth = spec.dist.density_fn()?;
    let dim = spec.dist.dim();
    let mut rows = Vec::new();
    for (gi, &n) in spec.n_grid.iter().enumerate() {
        let per_rep: Vec<Vec<f64>> = (0..spec.replications)
            .into_par_iter()
            .map(|r| {
                let seed = spec.data_seed(gi, r);
                let samples = spec.dist.draw(n, seed)?;
                let points = SyntheticDist::uniform(dim).draw(spec.eval_points, derive_seed(seed, 1))?;
                let exact: Vec<f64> = points.rows().map(&truth).collect();
                spec.estimators
                    .iter()
                    .map(|&est| {
                        let est_vals = fit_and_eval(est, spec, &samples, &points)?;
                        let mse = est_vals.iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
                            / exact.len() as f64;
                        Ok(mse.sqrt())
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        for (ei, est) in spec.estimators.iter().enumerate() {
            let vals: Vec<f64> = per_rep.iter().map(|v| v[ei]).collect();
            rows.push(ResultRow {
                experiment: spec.id.clone(),
                estimator: est.name().into(),
                n,
                metric: "rmse".into(),
                value: median(&vals),
                stderr: std_error(&vals),
            });
        }
    }
    Ok(rows)
}

/// Projects a product distribution's density onto `basis` at `level`.
pub fn product_null(dist: &SyntheticDist, basis: BasisKind, level: u32) -> Result<ProductTable> {
    let marginals = dist.marginals()?;
    let closures: Vec<Box<dyn Fn(f64) -> f64 + '_>> = marginals
        .iter()
        .map(|m| Box::new(move |x: f64| m.pdf(x)) as Box<dyn Fn(f64) -> f64>)
        .collect();
    let refs: Vec<&dyn Fn(f64) -> f64> = closures.iter().map(|b| b.as_ref()).collect();
    project_product(&refs, basis, level, default_quad_nodes(level))
}

/// Rejection rates of the GOF test for samples from `spec.dist` against
/// `gof.null`, one row per `(level, n)`.
pub fn run_power_table(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    let gof = spec
        .gof
        .as_ref()
        .ok_or_else(|| HxdError::InvalidArgument("missing [gof] section".into()))?;
    if gof.null.dim() != spec.dist.dim() {
        return Err(HxdError::DimensionMismatch {
            expected: spec.dist.dim(),
            found: gof.null.dim(),
        });
    }
    let top = gof.levels.iter().copied().max().unwrap_or(0);
    let null = product_null(&gof.null, gof.basis, top)?;
    let mut rows = Vec::new();
    for &level in &gof.levels {
        for (gi, &n) in spec.n_grid.iter().enumerate() {
            let rejections: Vec<f64> = (0..spec.replications)
                .into_par_iter()
                .map(|r| {
                    let seed = spec.data_seed(gi, r);
                    let samples = spec.dist.draw(n, seed)?;
                    let cfg = GofConfig {
                        basis: gof.basis,
                        level: Some(level),
                        alpha: 2.0,
                        significance: gof.significance,
                        bootstrap_reps: gof.bootstrap_reps,
                        flip_prob: gof.flip_prob,
                        seed: derive_seed(seed, 2),
                        center_bootstrap: gof.center_bootstrap,
                    };
                    Ok(if run_test(&samples, &null, &cfg)?.reject { 1.0 } else { 0.0 })
                })
                .collect::<Result<Vec<_>>>()?;
            let m = rejections.len() as f64;
            let p = rejections.iter().sum::<f64>() / m;
            rows.push(ResultRow {
                experiment: spec.id.clone(),
                estimator: format!("gof_l{level}"),
                n,
                metric: "power".into(),
                value: p,
                stderr: (p * (1.0 - p) / m).sqrt(),
            });
        }
    }
    Ok(rows)
}

/// `‖p̃ − p‖₂` for a product truth, computed from coefficients:
/// `Σ_s (c_s − p̂_s)² + (∫ p² − Σ_s p̂_s²)` over the model's cross.
pub fn l2_error_product(model: &crate::ahce::AhceModel, truth: &SyntheticDist) -> Result<f64> {
    let level = model.level();
    let proj = product_null(truth, model.basis(), level)?;
    let marginals = truth.marginals()?;
    let rule = GaussLegendre::new(16).composite_unit(256);
    let norm_sq: f64 = marginals.iter().map(|m| rule.integrate(|x| m.pdf(x).powi(2))).product();
    let mut fitted_err = 0.0;
    let mut captured = 0.0;
    for (key, c) in model.table().iter() {
        let p = proj.coeff(&key.k, &key.s);
        fitted_err += (c - p).powi(2);
        captured += p * p;
    }
    // coefficients of p inside the cross but absent from the table
    let total_captured: f64 = crate::gof::NullCoefficients::kernel_mean(&proj, level);
    let missing = total_captured - captured;
    Ok((fitted_err + missing + (norm_sq - total_captured).max(0.0)).max(0.0).sqrt())
}

/// Slope check output: per-n median L² errors and the log-log fit.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub rows: Vec<ResultRow>,
    pub slope: f64,
    pub r_squared: f64,
}

/// Least-squares slope of `ln(median L² error)` against `ln n` for AHCE.
pub fn run_slope_check(spec: &ExperimentSpec) -> Result<SlopeFit> {
    if spec.n_grid.len() < 3 {
        return Err(HxdError::InvalidArgument("a slope check needs at least 3 grid points".into()));
    }
    let mut rows = Vec::new();
    for (gi, &n) in spec.n_grid.iter().enumerate() {
        let errs: Vec<f64> = (0..spec.replications)
            .into_par_iter()
            .map(|r| {
                let samples = spec.dist.draw(n, spec.data_seed(gi, r))?;
                let model = fit(&samples, spec.ahce.basis, &spec.ahce.policy)?;
                l2_error_product(&model, &spec.dist)
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(ResultRow {
            experiment: spec.id.clone(),
            estimator: "ahce".into(),
            n,
            metric: "l2_error".into(),
            value: median(&errs),
            stderr: std_error(&errs),
        });
    }
    let x: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.value.ln()).collect();
    let (slope, r_squared) = ols_slope(&x, &y);
    Ok(SlopeFit { rows, slope, r_squared })
}

/// One empirical-gap replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct GapReplicate {
    pub n: usize,
    pub level: u32,
    pub family: usize,
    pub kept: usize,
    /// `∫ f*`.
    pub integral: f64,
    /// `(1/n) Σ_i f*(X_i)`, zero by construction.
    pub empirical: f64,
}

impl GapReplicate {
    pub fn gap(&self) -> f64 {
        self.integral - self.empirical
    }
}

/// `k*` with `2^{(k*−1)D} ≤ 2n < 2^{k* D}`.
pub fn gap_level(n: usize, dim: usize) -> Result<u32> {
    let target = 2 * n as u128;
    let mut k = 1u32;
    while (1u128 << (k as usize * dim).min(127)) <= target {
        k += 1;
        if k as usize * dim >= 127 {
            return Err(HxdError::TooLarge("gap level overflow".into()));
        }
    }
    Ok(k)
}

/// Builds the disjoint B-spline family at `k*`, keeps the members vanishing
/// on every sample and measures `∫ f* − (1/n) Σ f*(X_i)` for
/// `f* = 2^{−βk*} Σ_kept M_{k*,s}`.
pub fn empirical_gap_once(samples: &SampleMatrix, beta: u32) -> Result<GapReplicate> {
    let n = samples.len();
    let dim = samples.dim();
    if n == 0 {
        return Err(HxdError::EmptySample);
    }
    let k = gap_level(n, dim)?;
    let width = beta as i64 + 1;
    let per_axis = (1i64 << k) / width;
    if per_axis < 1 {
        return Err(HxdError::InvalidArgument("n too small for the spline family".into()));
    }
    let family = (per_axis as usize).pow(dim as u32);
    // a sample can only touch the member whose support box contains it
    let mut touched = vec![false; family];
    let scale = (1u64 << k) as f64;
    for x in samples.rows() {
        let mut idx = 0usize;
        let mut inside = true;
        for &xj in x {
            let cell = (scale * xj / width as f64).floor() as i64;
            if !(0..per_axis).contains(&cell) {
                inside = false;
                break;
            }
            idx = idx * per_axis as usize + cell as usize;
        }
        if inside {
            touched[idx] = true;
        }
    }
    let kept: Vec<BSplineSpec> = (0..family)
        .filter(|&i| !touched[i])
        .map(|i| {
            let mut rem = i;
            let mut shift = vec![0i64; dim];
            for d in (0..dim).rev() {
                shift[d] = (rem % per_axis as usize) as i64 * width;
                rem /= per_axis as usize;
            }
            BSplineSpec::new(beta, k, shift)
        })
        .collect();
    let amp = 0.5f64.powi((beta * k) as i32);
    let integral = amp * kept.iter().map(|s| s.integral()).sum::<f64>();
    let empirical = samples
        .rows()
        .map(|x| amp * kept.iter().map(|s| eval_bspline(s, x)).sum::<f64>())
        .sum::<f64>()
        / n as f64;
    Ok(GapReplicate {
        n,
        level: k,
        family,
        kept: kept.len(),
        integral,
        empirical,
    })
}

/// Output of [`run_empirical_gap`].
#[derive(Debug, Clone, PartialEq)]
pub struct GapRun {
    pub rows: Vec<ResultRow>,
    pub replicates: Vec<GapReplicate>,
    pub slope: f64,
    pub r_squared: f64,
}

/// Gap between `∫ f*` and the empirical mean for uniform samples over a grid
/// of sample sizes, with the log-log slope of the mean gap against `n`.
pub fn run_empirical_gap(dim: usize, beta: u32, n_grid: &[usize], replications: usize, seed: u64) -> Result<GapRun> {
    if dim == 0 {
        return Err(HxdError::InvalidArgument("dimension must be at least 1".into()));
    }
    let mut rows = Vec::new();
    let mut replicates = Vec::new();
    for (gi, &n) in n_grid.iter().enumerate() {
        let reps: Vec<GapReplicate> = (0..replications.max(1))
            .into_par_iter()
            .map(|r| {
                let s = derive_seed(seed, ((gi as u64) << 32) | r as u64);
                let samples = SyntheticDist::uniform(dim).draw(n, s)?;
                empirical_gap_once(&samples, beta)
            })
            .collect::<Result<Vec<_>>>()?;
        let gaps: Vec<f64> = reps.iter().map(|r| r.gap()).collect();
        let emp: Vec<f64> = reps.iter().map(|r| r.empirical).collect();
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        rows.push(ResultRow {
            experiment: "empirical_gap".into(),
            estimator: "empirical".into(),
            n,
            metric: "gap".into(),
            value: mean,
            stderr: std_error(&gaps),
        });
        rows.push(ResultRow {
            experiment: "empirical_gap".into(),
            estimator: "empirical".into(),
            n,
            metric: "empirical_term".into(),
            value: emp.iter().copied().fold(0.0, |a: f64, b| a.max(b.abs())),
            stderr: 0.0,
        });
        replicates.extend(reps);
    }
    let gap_rows: Vec<&ResultRow> = rows.iter().filter(|r| r.metric == "gap").collect();
    let x: Vec<f64> = gap_rows.iter().map(|r| (r.n as f64).ln()).collect();
    let y: Vec<f64> = gap_rows.iter().map(|r| r.value.ln()).collect();
    let (slope, r_squared) = if x.len() >= 2 { ols_slope(&x, &y) } else { (f64::NAN, f64::NAN) };
    Ok(GapRun {
        rows,
        replicates,
        slope,
        r_squared,
    })
}

/// Everything an experiment run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    /// Fitted `(slope, r²)` for slope checks and gap runs.
    pub fit: Option<(f64, f64)>,
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    Ok(match spec.kind {
        ExperimentKind::RmseCurve => ExperimentOutput {
            rows: run_rmse(spec)?,
            fit: None,
        },
        ExperimentKind::PowerTable => ExperimentOutput {
            rows: run_power_table(spec)?,
            fit: None,
        },
        ExperimentKind::SlopeCheck => {
            let s = run_slope_check(spec)?;
            ExperimentOutput {
                rows: s.rows,
                fit: Some((s.slope, s.r_squared)),
            }
        }
        ExperimentKind::EmpiricalGap => {
            let gap = spec.gap.as_ref().expect("validated");
            let g = run_empirical_gap(gap.dim, gap.beta, &spec.n_grid, spec.replications, spec.seed)?;
            let rows = g
                .rows
                .into_iter()
                .map(|mut r| {
                    r.experiment = spec.id.clone();
                    r
                })
                .collect();
            ExperimentOutput {
                rows,
                fit: Some((g.slope, g.r_squared)),
            }
        }
    })
}

pub fn write_results_csv<W: Write>(rows: &[ResultRow], mut w: W) -> Result<()> {
    writeln!(w, "{}", ResultRow::CSV_HEADER)?;
    for r in rows {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

/// Plot-ready `(x, y, stderr)` series keyed by `estimator_metric`.
pub fn series(rows: &[ResultRow]) -> BTreeMap<String, String> {
    let mut out: BTreeMap<String, String> = BTreeMap::new();
    for r in rows {
        let body = out
            .entry(format!("{}_{}", r.estimator, r.metric))
            .or_insert_with(|| "x,y,stderr\n".to_string());
        let _ = writeln!(body, "{},{},{}", r.n, r.value, r.stderr);
    }
    out
}

/// Human-readable summary.
pub fn summary(spec: &ExperimentSpec, out: &ExperimentOutput) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "experiment {} ({:?}, dist {})", spec.id, spec.kind, spec.dist.label());
    for r in &out.rows {
        let _ = writeln!(
            s,
            "  {:<14} n={:<7} {:<15} {:.6} ± {:.6}",
            r.estimator, r.n, r.metric, r.value, r.stderr
        );
    }
    if let Some((slope, r2)) = out.fit {
        let _ = writeln!(s, "  log-log slope {slope:.4}, r² {r2:.4}");
    }
    s
}

/// Uniform random evaluation points (exposed for harness reuse).
pub fn uniform_points(dim: usize, m: usize, seed: u64) -> SampleMatrix {
    let mut rng = stream_rng(seed, 0);
    SampleMatrix::new(dim, (0..dim * m).map(|_| rng.random::<f64>()).collect()).expect("shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rmse_spec(dist: SyntheticDist, estimators: Vec<EstimatorKind>) -> ExperimentSpec {
        ExperimentSpec {
            schema_version: 1,
            id: "t".into(),
            kind: ExperimentKind::RmseCurve,
            dist,
            estimators,
            n_grid: vec![500, 2000],
            replications: 3,
            eval_points: 300,
            seed: 5,
            ahce: AhceSettings::default(),
            kde: KdeSettings::default(),
            bsde: BsdeSettings::default(),
            gof: None,
            gap: None,
        }
    }

    #[test]
    fn toml_round_trip_and_validation() {
        let text = r#"
schema_version = 1
id = "power"
kind = "power_table"
n_grid = [50, 100]
replications = 4
seed = 9

[dist]
kind = "beta_plus_uniform"
a = [2.0, 2.0]
b = [2.0, 5.0]
shift = 0.2

[gof]
levels = [4]
bootstrap_reps = 50

[gof.null]
kind = "product_beta"
a = [2.0, 2.0]
b = [2.0, 5.0]
"#;
        let spec = ExperimentSpec::from_toml(text).unwrap();
        assert_eq!(spec.gof.as_ref().unwrap().basis, BasisKind::HaarWavelet);
        let back = ExperimentSpec::from_toml(&spec.to_toml().unwrap()).unwrap();
        assert_eq!(back, spec);
        assert!(ExperimentSpec::from_toml(&text.replace("schema_version = 1", "schema_version = 2")).is_err());
        assert!(ExperimentSpec::from_toml(&text.replace("[50, 100]", "[100, 50]")).is_err());
        assert!(ExperimentSpec::from_toml(&text.replace("schema_version = 1\n", "")).is_err());
    }

    #[test]
    fn ols_recovers_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let (b, r2) = ols_slope(&x, &y);
        assert!((b + 0.5).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn rmse_uniform_truth_is_small_and_deterministic() {
        let mut spec = rmse_spec(SyntheticDist::uniform(2), vec![EstimatorKind::Ahce, EstimatorKind::Bsde]);
        spec.ahce.policy = SmoothingPolicy::FixedLevel { level: 3 };
        let rows = run_rmse(&spec).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows[2].value < rows[0].value, "{rows:?}");
        assert!(rows[2].value < 0.5, "{}", rows[2].value);
        assert_eq!(rows, run_rmse(&spec).unwrap());
    }

    #[test]
    fn l2_error_matches_quadrature() {
        let dist = SyntheticDist::product_beta(vec![2.0], vec![5.0]);
        let s = dist.draw(400, 3).unwrap();
        let m = fit(&s, BasisKind::Fourier, &SmoothingPolicy::FixedLevel { level: 4 }).unwrap();
        let spectral = l2_error_product(&m, &dist).unwrap();
        let f = dist.density_fn().unwrap();
        let rule = GaussLegendre::new(16).composite_unit(200);
        let quad = rule.integrate(|x| (m.evaluate(&[x]) - f(&[x])).powi(2)).sqrt();
        assert!((spectral - quad).abs() < 1e-6, "{spectral} {quad}");
    }

    #[test]
    fn gap_level_bounds() {
        for dim in 1..4 {
            for n in [1usize, 5, 64, 100, 4096] {
                let k = gap_level(n, dim).unwrap() as usize;
                assert!(1u128 << ((k - 1) * dim) <= 2 * n as u128);
                assert!(2 * (n as u128) < 1u128 << (k * dim));
            }
        }
    }

    #[test]
    fn gap_replicate_invariants() {
        let s = SyntheticDist::uniform(2).draw(256, 1).unwrap();
        let r = empirical_gap_once(&s, 1).unwrap();
        assert_eq!(r.empirical, 0.0);
        assert!(r.gap() > 0.0);
        assert!(r.kept <= r.family);
        // brute-force check that kept splines vanish on the sample
        let k = r.level;
        let per_axis = (1i64 << k) / 2;
        let mut vanishing = 0;
        for a in 0..per_axis {
            for b in 0..per_axis {
                let spec = BSplineSpec::new(1, k, vec![2 * a, 2 * b]);
                if s.rows().all(|x| eval_bspline(&spec, x) == 0.0) {
                    vanishing += 1;
                }
            }
        }
        assert_eq!(vanishing, r.kept);
    }

    #[test]
    fn series_and_csv() {
        let rows = vec![ResultRow {
            experiment: "e".into(),
            estimator: "ahce".into(),
            n: 10,
            metric: "rmse".into(),
            value: 0.5,
            stderr: 0.1,
        }];
        let mut buf = Vec::new();
        write_results_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "experiment,estimator,n,metric,value,stderr\ne,ahce,10,rmse,0.5,0.1\n");
        assert_eq!(series(&rows)["ahce_rmse"], "x,y,stderr\n10,0.5,0.1\n");
    }
}
