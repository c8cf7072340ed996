//! Automatic Riesz representer for the plug-in functional of category `k`.

use nalgebra::{DMatrix, DVector};

use super::basis::InteractedDesign;
use crate::data::AggregateTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct RieszFit {
    pub category: usize,
    pub lambda: f64,
    pub coefficients: DVector<f64>,
    /// Realized weights `α_k(g)`.
    pub weights: Vec<f64>,
    /// Empirical functional of each basis column, `M̂`.
    pub moments: DVector<f64>,
}

impl RieszFit {
    /// `max_j |mean_g(α(g)·b_j(g)) − M̂_j|` on the design the fit came from.
    pub fn moment_residual(&self, design: &InteractedDesign) -> f64 {
        let g = design.matrix.nrows() as f64;
        let alpha = DVector::from_column_slice(&self.weights);
        let lhs = design.matrix.transpose() * alpha / g;
        (lhs - &self.moments).amax()
    }
}

/// Relative weights `ω_gk = N_gk / mean_g(N_gk)`.
pub fn category_weights(table: &AggregateTable, k: usize) -> Result<Vec<f64>> {
    let counts = table.category_counts();
    let mean = counts.column(k).mean();
    if mean <= 0.0 {
        return Err(Error::EmptyCategory(k));
    }
    Ok(counts.column(k).iter().map(|n| n / mean).collect())
}

/// `ρ = (BᵀB/G + λI)⁻¹ M̂` with `M̂_j = mean_g[b_j(e_k, z_g)·ω_gk]`.
pub fn riesz_fit(design: &InteractedDesign, table: &AggregateTable, k: usize, lambda: f64) -> Result<RieszFit> {
    let b = &design.matrix;
    let (g_count, q) = b.shape();
    let gf = g_count as f64;
    let omega = category_weights(table, k)?;
    let d = design.dim();
    let mut moments = DVector::zeros(q);
    for l in 0..d {
        moments[k * d + l] = (0..g_count).map(|g| design.phi[(g, l)] * omega[g]).sum::<f64>() / gf;
    }
    let mut gram: DMatrix<f64> = b.transpose() * b / gf;
    for i in 0..q {
        gram[(i, i)] += lambda;
    }
    let coefficients = if lambda > 0.0 {
        gram.cholesky().map(|c| c.solve(&moments))
    } else {
        gram.clone().cholesky().filter(|c| c.l().diagonal().min() > 1e-10 * gram.diagonal().amax().sqrt()).map(|c| c.solve(&moments))
    }
    .ok_or(Error::SingularGram)?;
    let weights = (b * &coefficients).iter().copied().collect();
    Ok(RieszFit { category: k, lambda, coefficients, weights, moments })
}
