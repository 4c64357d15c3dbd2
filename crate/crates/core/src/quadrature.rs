//! Gauss–Legendre rules.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[−1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Computes an `n`-point rule by Newton iteration on `P_n`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "a quadrature rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = (n + 1) / 2;
        for i in 0..m {
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, z);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Maps the rule to `[0, 1]`.
    pub fn on_unit(&self) -> Rule1d {
        self.on_interval(0.0, 1.0)
    }

    pub fn on_interval(&self, a: f64, b: f64) -> Rule1d {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        Rule1d {
            nodes: self.nodes.iter().map(|&t| mid + half * t).collect(),
            weights: self.weights.iter().map(|&w| half * w).collect(),
        }
    }

    /// Composite rule: this rule replicated on `cells` equal subintervals of `[0,1]`.
    pub fn composite_unit(&self, cells: usize) -> Rule1d {
        let mut nodes = Vec::with_capacity(cells * self.len());
        let mut weights = Vec::with_capacity(cells * self.len());
        for c in 0..cells {
            let r = self.on_interval(c as f64 / cells as f64, (c + 1) as f64 / cells as f64);
            nodes.extend(r.nodes);
            weights.extend(r.weights);
        }
        Rule1d { nodes, weights }
    }
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for j in 2..=n {
        let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// One-dimensional nodes and weights on a fixed interval.
#[derive(Debug, Clone)]
pub struct Rule1d {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1d {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.iter().map(|(x, w)| w * f(x)).sum()
    }
}
