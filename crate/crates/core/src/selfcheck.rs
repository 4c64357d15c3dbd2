//! Fast invariant battery behind `hxd selfcheck`.

use rand::Rng;

use crate::ahce::{fit, SmoothingPolicy};
use crate::basis::BasisKind;
use crate::datagen::SyntheticDist;
use crate::gof::{variance_terms, GramMatrix};
use crate::hypercross::{
    binomial, cross_cardinality, enumerate_block, geometric_binomial_sum, geometric_binomial_sum_literal,
    MultiIndex, MultiIndexIter,
};
use crate::quadrature::GaussLegendre;
use crate::rng::stream_rng;
use crate::spectral::{BasisKey, CoefficientTable};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, pass: bool, detail: String) -> Self {
        CheckResult { name, pass, detail }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// Test hooks that deliberately break an invariant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Fixture {
    /// Swap two entries of the enumerated coefficient order.
    pub corrupt_order: bool,
}

pub fn run_all(fixture: Fixture) -> Vec<CheckResult> {
    vec![
        lemma_closed_form(),
        block_cardinality(),
        binomial_sum(),
        cross_count(),
        coefficient_order(fixture),
        fourier_orthonormality(),
        haar_orthonormality(),
        smoothing_identity(),
        sigma_oracle(),
    ]
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

pub fn lemma_closed_form() -> CheckResult {
    let mut worst = 0.0f64;
    for dim in 1..=5 {
        for l in 2..=12 {
            for x in [0.1, 0.25, 0.5, 0.75, 0.9, -0.5, 1.5] {
                let closed = match geometric_binomial_sum(x, l, dim) {
                    Ok(v) => v,
                    Err(e) => return CheckResult::new("lemma_closed_form", false, e.to_string()),
                };
                worst = worst.max(rel_err(closed, geometric_binomial_sum_literal(x, l, dim)));
            }
        }
    }
    CheckResult::new("lemma_closed_form", worst < 1e-12, format!("max rel err {worst:.2e}"))
}

pub fn block_cardinality() -> CheckResult {
    let mut checked = 0;
    for dim in 1..=4 {
        for k in MultiIndexIter::new(dim, 6) {
            let count = enumerate_block(&k).count() as u64;
            if count != 1 << k.order() || count != k.block_len() {
                return CheckResult::new("block_cardinality", false, format!("|ρ({k})| = {count}"));
            }
            checked += 1;
        }
    }
    CheckResult::new("block_cardinality", true, format!("{checked} blocks, D ≤ 4, |k| ≤ 6"))
}

pub fn binomial_sum() -> CheckResult {
    for dim in 1..=5u64 {
        for l in dim..=20 {
            let lhs: u128 = (dim..=l).map(|i| binomial(i - 1, dim - 1)).sum();
            if lhs != binomial(l, dim) {
                return CheckResult::new("binomial_sum", false, format!("D={dim} l={l}"));
            }
        }
    }
    CheckResult::new("binomial_sum", true, "l ≤ 20, D ≤ 5".into())
}

pub fn cross_count() -> CheckResult {
    for dim in 1..=3 {
        for level in 0..=6 {
            let n = BasisKind::Fourier.cross(dim, level).count() as u128;
            if n != cross_cardinality(dim, level) {
                return CheckResult::new("cross_cardinality", false, format!("D={dim} l={level}: {n}"));
            }
        }
    }
    CheckResult::new("cross_cardinality", true, "D ≤ 3, l ≤ 6".into())
}

/// Enumeration order must be canonical and agree with the table order.
pub fn coefficient_order(fixture: Fixture) -> CheckResult {
    for basis in [BasisKind::Fourier, BasisKind::HaarWavelet] {
        let mut keys: Vec<BasisKey> = basis.cross(2, 4).map(|(k, s)| BasisKey::new(k, s)).collect();
        if fixture.corrupt_order && keys.len() > 2 {
            keys.swap(1, 2);
        }
        if let Some(i) = keys.windows(2).position(|w| w[0] >= w[1]) {
            return CheckResult::new(
                "coefficient_order",
                false,
                format!("{basis}: entries {i} and {} out of order", i + 1),
            );
        }
        let table = random_table(basis, 2, 4, 0);
        if !table.iter().map(|(k, _)| k).eq(keys.iter()) {
            return CheckResult::new("coefficient_order", false, format!("{basis}: table order differs"));
        }
    }
    CheckResult::new("coefficient_order", true, "canonical for both bases".into())
}

fn gram_deviation(basis: BasisKind, dim: usize, level: u32, nodes_1d: &[(f64, f64)]) -> f64 {
    let keys: Vec<(MultiIndex, _)> = basis.cross(dim, level).collect();
    // tensor nodes
    let mut points: Vec<(Vec<f64>, f64)> = vec![(Vec::new(), 1.0)];
    for _ in 0..dim {
        points = points
            .iter()
            .flat_map(|(p, w)| {
                nodes_1d.iter().map(move |&(x, v)| {
                    let mut q = p.clone();
                    q.push(x);
                    (q, w * v)
                })
            })
            .collect();
    }
    let vals: Vec<Vec<f64>> = keys
        .iter()
        .map(|(k, s)| points.iter().map(|(p, _)| basis.eval(k, s, p)).collect())
        .collect();
    let mut worst = 0.0f64;
    for a in 0..keys.len() {
        for b in a..keys.len() {
            let g: f64 = points.iter().enumerate().map(|(i, (_, w))| w * vals[a][i] * vals[b][i]).sum();
            let target = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((g - target).abs());
        }
    }
    worst
}

/// Maximum Gram deviation of the Fourier system, `D ≤ 2`, `|k| ≤ 3`.
pub fn fourier_gram_deviation() -> f64 {
    let rule = GaussLegendre::new(16).composite_unit(16);
    let nodes: Vec<(f64, f64)> = rule.iter().collect();
    (1..=2).map(|d| gram_deviation(BasisKind::Fourier, d, 3, &nodes)).fold(0.0, f64::max)
}

/// Maximum Gram deviation of the Haar system, `D ≤ 2`, `|k| ≤ 3`, integrating
/// exactly with cell midpoints on the dyadic grid of width `2^{-4}`.
pub fn haar_gram_deviation() -> f64 {
    let cells = 16;
    let nodes: Vec<(f64, f64)> = (0..cells)
        .map(|c| ((c as f64 + 0.5) / cells as f64, 1.0 / cells as f64))
        .collect();
    (1..=2).map(|d| gram_deviation(BasisKind::HaarWavelet, d, 3, &nodes)).fold(0.0, f64::max)
}

pub fn fourier_orthonormality() -> CheckResult {
    let dev = fourier_gram_deviation();
    CheckResult::new("fourier_orthonormality", dev < 1e-8, format!("max Gram deviation {dev:.2e}"))
}

pub fn haar_orthonormality() -> CheckResult {
    let dev = haar_gram_deviation();
    CheckResult::new("haar_orthonormality", dev < 1e-12, format!("max Gram deviation {dev:.2e}"))
}

/// Random table over the full cross with uniform(−1, 1) entries.
pub fn random_table(basis: BasisKind, dim: usize, level: u32, seed: u64) -> CoefficientTable {
    let mut rng = stream_rng(seed, 0);
    let coeffs: Vec<(BasisKey, f64)> = basis
        .cross(dim, level)
        .map(|(k, s)| (BasisKey::new(k, s), rng.random_range(-1.0..1.0)))
        .collect();
    CoefficientTable::new(basis, dim, level, coeffs).expect("keys come from the cross")
}

/// Worst relative disagreement of the smoothing identity over `trials`
/// random (model, f, sample) triples cycling through policies and bases.
pub fn smoothing_identity_worst(trials: usize, seed: u64) -> crate::Result<f64> {
    let policies = [
        SmoothingPolicy::truncation_fourier(1.0),
        SmoothingPolicy::truncation_wavelet(1.0),
        SmoothingPolicy::wahba(1.0),
    ];
    let mut worst = 0.0f64;
    for t in 0..trials {
        let mut rng = stream_rng(seed, t as u64);
        let basis = if t % 2 == 0 { BasisKind::Fourier } else { BasisKind::HaarWavelet };
        let policy = policies[(t / 2) % 3];
        let dim = rng.random_range(1..=3);
        let n = rng.random_range(20..=60);
        let samples = SyntheticDist::uniform(dim).draw(n, rng.random())?;
        let model = fit(&samples, basis, &policy)?;
        let f = random_table(basis, dim, rng.random_range(0..=model.level() + 1), rng.random());
        let (lhs, rhs) = model.smoothing_identity_check(&f, &samples)?;
        worst = worst.max(rel_err(lhs, rhs));
    }
    Ok(worst)
}

pub fn smoothing_identity() -> CheckResult {
    match smoothing_identity_worst(30, 11) {
        Ok(w) => CheckResult::new("smoothing_identity", w < 1e-10, format!("max rel err {w:.2e} over 30 triples")),
        Err(e) => CheckResult::new("smoothing_identity", false, e.to_string()),
    }
}

/// Literal `O(n⁴)` evaluation of the three `σ̂²` terms from a full Gram matrix.
pub fn brute_sigma_sq(g: &[Vec<f64>]) -> f64 {
    let n = g.len();
    let nf = n as f64;
    let (mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            s1 += g[i][j] * g[i][j];
            for k in 0..n {
                if k == i || k == j {
                    continue;
                }
                s2 += g[i][j] * g[i][k];
                for m in 0..n {
                    if m != i && m != j && m != k {
                        s3 += g[i][k] * g[j][m];
                    }
                }
            }
        }
    }
    let p2 = nf * (nf - 1.0);
    let p3 = p2 * (nf - 2.0);
    let p4 = p3 * (nf - 3.0);
    s1 / p2 - 2.0 * s2 / p3 + s3 / p4
}

pub fn sigma_oracle() -> CheckResult {
    let samples = match SyntheticDist::uniform(2).draw(8, 3) {
        Ok(s) => s,
        Err(e) => return CheckResult::new("sigma_oracle", false, e.to_string()),
    };
    let gram = GramMatrix::new(&samples, BasisKind::HaarWavelet, 3);
    let n = samples.len();
    let full: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 0.0 } else { gram.get(i, j) }).collect())
        .collect();
    let (_, sq, rows) = gram.moments();
    let (t1, t2, t3) = variance_terms(n, sq, &rows);
    let fast = t1 - t2 + t3;
    let slow = brute_sigma_sq(&full);
    let err = rel_err(fast, slow);
    CheckResult::new("sigma_oracle", err < 1e-10, format!("n=8 rel err {err:.2e}"))
}
