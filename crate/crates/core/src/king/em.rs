//! EM for the untruncated random-coefficient model `B_g ~ N(β, Σ)`,
//! `ȳ_g = x̄_gᵀB_g`, in any number of categories.

use nalgebra::{DMatrix, DVector};

use crate::data::AggregateTable;
use crate::error::{Error, Result};
use crate::goodman::{goodman_fit, GoodmanOptions};
use crate::linalg::spd_inverse;

#[derive(Debug, Clone)]
pub struct EmFit {
    pub beta: DVector<f64>,
    pub se: DVector<f64>,
    pub sigma: DMatrix<f64>,
    /// `B̂_g = β̂ + Σ̂x̄_g(x̄_gᵀΣ̂x̄_g)⁻¹(ȳ_g − x̄_gᵀβ̂)`.
    pub local: Vec<DVector<f64>>,
    pub iterations: usize,
    pub converged: bool,
    /// A ridge was added to keep `Σ̂` positive definite.
    pub ridged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct EmOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 50_000 }
    }
}

/// Local update for one geography given `(β, Σ)`.
pub fn local_update(beta: &DVector<f64>, sigma: &DMatrix<f64>, x: &DVector<f64>, y: f64) -> (DVector<f64>, DMatrix<f64>) {
    let sx = sigma * x;
    let v = x.dot(&sx);
    let m = beta + &sx * ((y - x.dot(beta)) / v);
    let cov = sigma - &sx * sx.transpose() / v;
    (m, cov)
}

pub fn untruncated_em(table: &AggregateTable, j: usize, opts: EmOptions) -> Result<EmFit> {
    let (g_count, kk) = table.shares().shape();
    if g_count < 2 {
        return Err(Error::InvalidData("EM needs at least 2 geographies".into()));
    }
    let xs: Vec<DVector<f64>> = (0..g_count).map(|g| table.shares().row(g).transpose()).collect();
    let ys = table.outcome(j);
    let mut beta = match goodman_fit(table, GoodmanOptions::default()) {
        Ok(e) => DVector::from_fn(kk, |k, _| e.beta[(j, k)]),
        Err(_) => DVector::from_element(kk, ys.iter().sum::<f64>() / g_count as f64),
    };
    let mut sigma = DMatrix::identity(kk, kk) * 0.01;
    let mut ridged = false;
    let mut converged = false;
    let mut iterations = 0;
    let gf = g_count as f64;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut sum_m = DVector::zeros(kk);
        let mut moments = Vec::with_capacity(g_count);
        for g in 0..g_count {
            let (m, v) = local_update(&beta, &sigma, &xs[g], ys[g]);
            sum_m += &m;
            moments.push((m, v));
        }
        let new_beta = sum_m / gf;
        let mut new_sigma = DMatrix::zeros(kk, kk);
        for (m, v) in &moments {
            let d = m - &new_beta;
            new_sigma += &d * d.transpose() + v;
        }
        new_sigma /= gf;
        new_sigma = (&new_sigma + new_sigma.transpose()) * 0.5;
        let floor = 1e-12 * new_sigma.trace().max(1e-300);
        if new_sigma.clone().symmetric_eigenvalues().min() < floor {
            new_sigma += DMatrix::identity(kk, kk) * floor;
            ridged = true;
        }
        let change = (&new_beta - &beta).amax().max((&new_sigma - &sigma).amax());
        beta = new_beta;
        sigma = new_sigma;
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    let local = (0..g_count).map(|g| local_update(&beta, &sigma, &xs[g], ys[g]).0).collect();
    let mut info = DMatrix::zeros(kk, kk);
    for x in &xs {
        info += x * x.transpose() / x.dot(&(&sigma * x));
    }
    let se = match spd_inverse(&info) {
        Some(c) => DVector::from_fn(kk, |k, _| c[(k, k)].max(0.0).sqrt()),
        None => DVector::from_element(kk, f64::NAN),
    };
    Ok(EmFit { beta, se, sigma, local, iterations, converged, ridged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{TableParts, EXACT_TOLERANCE};
    use approx::assert_relative_eq;

    fn table(x1: &[f64], y: &[f64]) -> AggregateTable {
        let g = x1.len();
        AggregateTable::from_parts(
            TableParts {
                geos: (0..g).map(|i| format!("g{i}")).collect(),
                category_names: vec!["a".into(), "b".into()],
                outcome_names: vec!["y".into()],
                shares: Some(DMatrix::from_fn(g, 2, |r, c| if c == 0 { x1[r] } else { 1.0 - x1[r] })),
                outcomes: Some(DMatrix::from_fn(g, 1, |r, _| y[r])),
                population: vec![100.0; g],
                ..Default::default()
            },
            EXACT_TOLERANCE,
        )
        .unwrap()
    }

    #[test]
    fn locals_reproduce_outcomes() {
        let x = [0.1, 0.25, 0.4, 0.55, 0.7, 0.85, 0.3, 0.6];
        let y = [0.3, 0.42, 0.39, 0.6, 0.55, 0.8, 0.33, 0.62];
        let fit = untruncated_em(&table(&x, &y), 0, EmOptions::default()).unwrap();
        for g in 0..x.len() {
            let b = &fit.local[g];
            assert!((x[g] * b[0] + (1.0 - x[g]) * b[1] - y[g]).abs() <= 1e-10);
        }
    }

    #[test]
    fn zero_residual_locals_equal_global() {
        let x = [0.1, 0.3, 0.5, 0.7, 0.9];
        let y: Vec<f64> = x.iter().map(|v| 0.6 * v + 0.25 * (1.0 - v)).collect();
        let fit = untruncated_em(&table(&x, &y), 0, EmOptions::default()).unwrap();
        assert_relative_eq!(fit.beta[0], 0.6, epsilon = 1e-8);
        for b in &fit.local {
            assert_relative_eq!(b[0], fit.beta[0], epsilon = 1e-8);
            assert_relative_eq!(b[1], fit.beta[1], epsilon = 1e-8);
        }
    }
}
