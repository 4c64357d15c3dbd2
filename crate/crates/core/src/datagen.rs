//! Synthetic distributions on `[0,1]^D` with analytic densities.

use rand::Rng;
use rand_distr::{Beta as BetaSampler, Distribution, StudentT as StudentSampler};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, Continuous, ContinuousCDF, StudentsT};

use crate::data::SampleMatrix;
use crate::error::{HxdError, Result};
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticDist {
    /// Independent `Beta(a_i, b_i)` coordinates.
    ProductBeta { a: Vec<f64>, b: Vec<f64> },
    /// Student-t coordinates pushed through their own CDF ("t-mapped"); the
    /// result is uniform on the cube.
    StudentTMapped { dof: f64, dim: usize },
    /// `X = X₀ + shift·U` with `X₀ ∼ Beta(a, b)`, `U ∼ Unif([0,1]^D)`,
    /// truncated to the unit cube.
    BetaPlusUniform { a: Vec<f64>, b: Vec<f64>, shift: f64 },
    Uniform { dim: usize },
}

fn check_beta(a: &[f64], b: &[f64]) -> Result<()> {
    if a.is_empty() || a.len() != b.len() {
        return Err(HxdError::InvalidArgument(
            "Beta parameters need matching non-empty a and b".into(),
        ));
    }
    if a.iter().chain(b).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(HxdError::InvalidArgument("Beta parameters must be positive".into()));
    }
    Ok(())
}

/// `∫_0^x F_{a,b}(t) dt = x F_{a,b}(x) − a/(a+b) F_{a+1,b}(x)`, zero for `x ≤ 0`.
fn integrated_cdf(beta: &Beta, upper: &Beta, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let (a, b) = (beta.shape_a(), beta.shape_b());
    let x = x.min(1.0);
    x * beta.cdf(x) - a / (a + b) * upper.cdf(x)
}

impl SyntheticDist {
    pub fn uniform(dim: usize) -> Self {
        SyntheticDist::Uniform { dim }
    }

    pub fn product_beta(a: Vec<f64>, b: Vec<f64>) -> Self {
        SyntheticDist::ProductBeta { a, b }
    }

    pub fn dim(&self) -> usize {
        match self {
            SyntheticDist::ProductBeta { a, .. } | SyntheticDist::BetaPlusUniform { a, .. } => a.len(),
            SyntheticDist::StudentTMapped { dim, .. } | SyntheticDist::Uniform { dim } => *dim,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SyntheticDist::ProductBeta { .. } => "product_beta",
            SyntheticDist::StudentTMapped { .. } => "t-mapped",
            SyntheticDist::BetaPlusUniform { .. } => "beta_plus_uniform",
            SyntheticDist::Uniform { .. } => "uniform",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SyntheticDist::ProductBeta { a, b } => check_beta(a, b),
            SyntheticDist::BetaPlusUniform { a, b, shift } => {
                check_beta(a, b)?;
                if !(*shift > 0.0 && shift.is_finite()) {
                    return Err(HxdError::InvalidArgument("shift must be positive".into()));
                }
                Ok(())
            }
            SyntheticDist::StudentTMapped { dof, dim } => {
                if !(*dof > 0.0) {
                    return Err(HxdError::InvalidArgument("degrees of freedom must be positive".into()));
                }
                if *dim == 0 {
                    return Err(HxdError::InvalidArgument("dimension must be at least 1".into()));
                }
                Ok(())
            }
            SyntheticDist::Uniform { dim } => {
                if *dim == 0 {
                    return Err(HxdError::InvalidArgument("dimension must be at least 1".into()));
                }
                Ok(())
            }
        }
    }

    /// Per-coordinate marginals; every variant is a product distribution.
    pub fn marginals(&self) -> Result<Vec<Marginal>> {
        self.validate()?;
        Ok(match self {
            SyntheticDist::ProductBeta { a, b } => a
                .iter()
                .zip(b)
                .map(|(&a, &b)| Marginal::Beta(Beta::new(a, b).expect("validated")))
                .collect(),
            SyntheticDist::BetaPlusUniform { a, b, shift } => a
                .iter()
                .zip(b)
                .map(|(&a, &b)| {
                    let beta = Beta::new(a, b).expect("validated");
                    let upper = Beta::new(a + 1.0, b).expect("validated");
                    let mut m = Marginal::Shifted {
                        beta,
                        upper,
                        shift: *shift,
                        mass: 1.0,
                    };
                    let mass = m.cdf(1.0);
                    if let Marginal::Shifted { mass: slot, .. } = &mut m {
                        *slot = mass;
                    }
                    m
                })
                .collect(),
            SyntheticDist::StudentTMapped { dim, .. } | SyntheticDist::Uniform { dim } => {
                vec![Marginal::Uniform; *dim]
            }
        })
    }

    /// `n` draws, deterministic in `seed`.
    pub fn draw(&self, n: usize, seed: u64) -> Result<SampleMatrix> {
        if n == 0 {
            return Err(HxdError::InvalidArgument("sample size must be at least 1".into()));
        }
        self.validate()?;
        let dim = self.dim();
        let mut rng = stream_rng(seed, 0);
        let mut data = Vec::with_capacity(n * dim);
        match self {
            SyntheticDist::Uniform { .. } => {
                data.extend((0..n * dim).map(|_| rng.random::<f64>()));
            }
            SyntheticDist::ProductBeta { a, b } => {
                let samplers = beta_samplers(a, b)?;
                for _ in 0..n {
                    for s in &samplers {
                        data.push(s.sample(&mut rng));
                    }
                }
            }
            SyntheticDist::BetaPlusUniform { a, b, shift } => {
                let samplers = beta_samplers(a, b)?;
                for _ in 0..n {
                    for s in &samplers {
                        // coordinates are independent, so per-coordinate
                        // rejection is the same as truncating the joint law
                        let v = loop {
                            let v = s.sample(&mut rng) + shift * rng.random::<f64>();
                            if v <= 1.0 {
                                break v;
                            }
                        };
                        data.push(v);
                    }
                }
            }
            SyntheticDist::StudentTMapped { dof, .. } => {
                let sampler = StudentSampler::new(*dof)
                    .map_err(|e| HxdError::InvalidArgument(format!("Student-t: {e}")))?;
                let cdf = StudentsT::new(0.0, 1.0, *dof)
                    .map_err(|e| HxdError::InvalidArgument(format!("Student-t: {e}")))?;
                for _ in 0..n * dim {
                    let t: f64 = sampler.sample(&mut rng);
                    data.push(cdf.cdf(t).clamp(0.0, 1.0));
                }
            }
        }
        SampleMatrix::new(dim, data)
    }

    /// Analytic density at `x`; zero outside the cube.
    pub fn density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(HxdError::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(self.marginals()?.iter().zip(x).map(|(m, &xi)| m.pdf(xi)).product())
    }

    /// Reusable evaluator that avoids rebuilding marginals.
    pub fn density_fn(&self) -> Result<impl Fn(&[f64]) -> f64 + Sync + Send> {
        let marginals = self.marginals()?;
        Ok(move |x: &[f64]| marginals.iter().zip(x).map(|(m, &xi)| m.pdf(xi)).product())
    }
}

fn beta_samplers(a: &[f64], b: &[f64]) -> Result<Vec<BetaSampler<f64>>> {
    a.iter()
        .zip(b)
        .map(|(&a, &b)| BetaSampler::new(a, b).map_err(|e| HxdError::InvalidArgument(format!("Beta: {e}"))))
        .collect()
}

/// One coordinate's law on `[0,1]`.
#[derive(Debug, Clone)]
pub enum Marginal {
    Uniform,
    Beta(Beta),
    /// `Beta + shift·Unif` truncated to `[0,1]`; `mass` is the kept probability.
    Shifted {
        beta: Beta,
        /// `Beta(a + 1, b)`, used for the integrated CDF.
        upper: Beta,
        shift: f64,
        mass: f64,
    },
}

impl Marginal {
    pub fn pdf(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        match self {
            Marginal::Uniform => 1.0,
            Marginal::Beta(b) => b.pdf(x),
            Marginal::Shifted { beta, shift, mass, .. } => (beta.cdf(x) - beta.cdf(x - shift)) / (shift * mass),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match self {
            Marginal::Uniform => x,
            Marginal::Beta(b) => b.cdf(x),
            Marginal::Shifted {
                beta,
                upper,
                shift,
                mass,
            } => {
                // F_X(x) = (1/h) ∫_0^x (F(t) − F(t − h)) dt
                let g = |t: f64| integrated_cdf(beta, upper, t);
                (g(x) - g(x - shift)) / (shift * mass)
            }
        }
    }
}
