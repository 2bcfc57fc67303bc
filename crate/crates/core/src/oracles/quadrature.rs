//! Gauss-Hermite rule for expectations against the standard normal law.

use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights with `Σ w_i g(x_i) ≈ E g(ξ)`, `ξ ~ N(0, 1)`, exact for
/// polynomials of degree below `2 n`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Golub-Welsch: eigen-decomposition of the Jacobi matrix of the
    /// probabilists' Hermite polynomials.
    pub fn new(n: usize) -> Self {
        let mut j = DMatrix::zeros(n, n);
        for k in 1..n {
            let b = (k as f64).sqrt();
            j[(k - 1, k)] = b;
            j[(k, k - 1)] = b;
        }
        let eig = SymmetricEigen::new(j);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self { nodes: pairs.iter().map(|p| p.0).collect(), weights: pairs.iter().map(|p| p.1).collect() }
    }

    /// `E g(m + s ξ)`.
    pub fn expect(&self, m: f64, s: f64, g: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * g(m + s * x)).sum()
    }
}
