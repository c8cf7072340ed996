//! The 2×2 truncated bivariate normal model and the untruncated
//! random-coefficient EM.

pub mod em;
pub mod likelihood;
pub mod mle;
pub mod sampler;
pub mod tomography;

use nalgebra::DMatrix;

pub use em::{untruncated_em, EmFit, EmOptions};
pub use likelihood::{log_normalizing_constant, normalizing_constant, truncated_mean, TruncNormParams};
pub use mle::{king_mle, KingFit};
pub use sampler::{king_local_sample, posterior_means, DEFAULT_BURNIN, DEFAULT_DRAWS};
pub use tomography::TomographyLine;

use crate::data::AggregateTable;
use crate::error::Result;
use crate::estimate::EstimateSet;

#[derive(Debug, Clone, Copy)]
pub struct KingOptions {
    pub draws: usize,
    pub burnin: usize,
    pub seed: u64,
    /// Draw local posteriors and report their `N_gk`-weighted average.
    pub local: bool,
}

impl Default for KingOptions {
    fn default() -> Self {
        Self { draws: DEFAULT_DRAWS, burnin: DEFAULT_BURNIN, seed: 0, local: true }
    }
}

/// Truncated-normal fit of every outcome column. `beta` is the fitted
/// truncated mean; local posterior means are attached when requested.
pub fn king_estimate(table: &AggregateTable, opts: KingOptions) -> Result<(EstimateSet, Vec<KingFit>)> {
    let jj = table.n_outcomes();
    let mut beta = DMatrix::zeros(jj, 2);
    let mut se = DMatrix::zeros(jj, 2);
    let mut fits = Vec::with_capacity(jj);
    let mut locals: Vec<DMatrix<f64>> = vec![DMatrix::zeros(jj, 2); table.n_geos()];
    let mut notes = Vec::new();
    for j in 0..jj {
        let fit = king_mle(table, j)?;
        beta[(j, 0)] = fit.beta[0];
        beta[(j, 1)] = fit.beta[1];
        se[(j, 0)] = fit.se[0];
        se[(j, 1)] = fit.se[1];
        notes.extend(fit.warnings.iter().cloned());
        if opts.local {
            let lines = mle::lines(table, j)?;
            let means = posterior_means(&fit.params, &lines, opts.draws, opts.burnin, opts.seed.wrapping_add(j as u64));
            for (g, m) in means.iter().enumerate() {
                locals[g][(j, 0)] = m[0];
                locals[g][(j, 1)] = m[1];
            }
        }
        fits.push(fit);
    }
    let mut est = EstimateSet::new("king", table.outcome_names().to_vec(), table.category_names().to_vec(), beta, se);
    est.warnings = notes;
    if opts.local {
        est.local = Some(locals);
    }
    Ok((est, fits))
}

/// `N_gk`-weighted average of local estimates (the finite-sample analogue of `β`).
pub fn weighted_local_mean(table: &AggregateTable, local: &[DMatrix<f64>]) -> DMatrix<f64> {
    let counts = table.category_counts();
    let (jj, kk) = local[0].shape();
    DMatrix::from_fn(jj, kk, |j, k| {
        let total: f64 = counts.column(k).sum();
        local.iter().enumerate().map(|(g, b)| counts[(g, k)] * b[(j, k)]).sum::<f64>() / total
    })
}

/// Untruncated EM for every outcome column, with EM locals attached.
pub fn king_em_estimate(table: &AggregateTable, opts: EmOptions) -> Result<(EstimateSet, Vec<EmFit>)> {
    let (jj, kk) = (table.n_outcomes(), table.n_categories());
    let mut beta = DMatrix::zeros(jj, kk);
    let mut se = DMatrix::zeros(jj, kk);
    let mut locals: Vec<DMatrix<f64>> = vec![DMatrix::zeros(jj, kk); table.n_geos()];
    let mut fits = Vec::with_capacity(jj);
    let mut notes = Vec::new();
    for j in 0..jj {
        let fit = untruncated_em(table, j, opts)?;
        for k in 0..kk {
            beta[(j, k)] = fit.beta[k];
            se[(j, k)] = fit.se[k];
        }
        for (g, b) in fit.local.iter().enumerate() {
            for k in 0..kk {
                locals[g][(j, k)] = b[k];
            }
        }
        if !fit.converged {
            notes.push(format!("EM for {} stopped after {} iterations", table.outcome_names()[j], fit.iterations));
        }
        if fit.ridged {
            notes.push(format!("EM for {} ridged a singular covariance", table.outcome_names()[j]));
        }
        fits.push(fit);
    }
    let mut est = EstimateSet::new("king-em", table.outcome_names().to_vec(), table.category_names().to_vec(), beta, se);
    est.local = Some(locals);
    est.warnings = notes;
    Ok((est, fits))
}
