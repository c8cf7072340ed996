//! Debiased estimator combining the ridge plug-in with a Riesz-weighted
//! residual correction.

use nalgebra::{DMatrix, DVector};

use super::basis::{expand_basis, BasisSpec, InteractedDesign};
use super::ridge::{counterfactuals, default_lambda_grid, ridge_fit, RidgeFit};
use super::riesz::{category_weights, riesz_fit, RieszFit};
use crate::data::AggregateTable;
use crate::error::Result;
use crate::estimate::EstimateSet;
use crate::linalg::{mean, sd};

/// Number of points in the default penalty grid.
pub const GRID_POINTS: usize = 50;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DmlOptions {
    /// Fixed ridge penalty; chosen by leave-one-out when `None`.
    pub lambda: Option<f64>,
    /// Riesz penalty; `λ / G` when `None`.
    pub riesz_lambda: Option<f64>,
    /// Constrain counterfactual predictions to `[0, 1]`.
    pub bounded: bool,
}

#[derive(Debug, Clone)]
pub struct DmlResult {
    pub outcome: usize,
    pub category: usize,
    pub point: f64,
    pub se: f64,
    pub scores: Vec<f64>,
    /// Mean of the plug-in term alone.
    pub plugin: f64,
    /// `mean(α(g)·ȳ_g)`: the weighting-only estimator.
    pub riesz_only: f64,
    pub ridge: RidgeFit,
    pub riesz: RieszFit,
}

/// Ridge first stage for outcome `j`.
pub fn fit_outcome(design: &InteractedDesign, table: &AggregateTable, j: usize, opts: &DmlOptions) -> Result<RidgeFit> {
    let y = DVector::from_vec(table.outcome(j));
    let grid = match opts.lambda {
        Some(l) => vec![l],
        None => default_lambda_grid(&design.matrix, GRID_POINTS),
    };
    ridge_fit(design, &y, &grid, opts.bounded)
}

/// `N_gk`-weighted average of the fitted counterfactuals `f̂_k(z_g)`.
pub fn plugin_value(design: &InteractedDesign, table: &AggregateTable, fit: &RidgeFit, k: usize) -> Result<f64> {
    let omega = category_weights(table, k)?;
    let f = counterfactuals(design, &fit.coefficients, k);
    Ok(f.iter().zip(&omega).map(|(a, b)| a * b).sum::<f64>() / f.len() as f64)
}

/// Scores `s_g = f̂_k(z_g)·ω_gk + α_k(g)·(ȳ_g − ŷ_g)` from already fitted nuisances.
pub fn combine(
    outcome_design: &InteractedDesign,
    table: &AggregateTable,
    j: usize,
    k: usize,
    ridge: RidgeFit,
    riesz: RieszFit,
) -> Result<DmlResult> {
    let omega = category_weights(table, k)?;
    let f = counterfactuals(outcome_design, &ridge.coefficients, k);
    let y = table.outcome(j);
    let scores: Vec<f64> = (0..y.len()).map(|g| f[g] * omega[g] + riesz.weights[g] * ridge.residuals[g]).collect();
    let plugin = mean(&f.iter().zip(&omega).map(|(a, b)| a * b).collect::<Vec<_>>());
    let riesz_only = mean(&riesz.weights.iter().zip(&y).map(|(a, b)| a * b).collect::<Vec<_>>());
    let point = mean(&scores);
    let se = sd(&scores) / (scores.len() as f64).sqrt();
    Ok(DmlResult { outcome: j, category: k, point, se, scores, plugin, riesz_only, ridge, riesz })
}

/// Debiased estimate of `β_jk`. The outcome regression and the Riesz
/// representer may use different bases.
pub fn dml_estimate(
    table: &AggregateTable,
    outcome_spec: &BasisSpec,
    riesz_spec: &BasisSpec,
    j: usize,
    k: usize,
    opts: &DmlOptions,
) -> Result<DmlResult> {
    category_weights(table, k)?;
    let od = expand_basis(table, outcome_spec)?;
    let rd = if riesz_spec == outcome_spec { od.clone() } else { expand_basis(table, riesz_spec)? };
    let ridge = fit_outcome(&od, table, j, opts)?;
    let rl = opts.riesz_lambda.unwrap_or(ridge.lambda / table.n_geos() as f64);
    let riesz = riesz_fit(&rd, table, k, rl)?;
    combine(&od, table, j, k, ridge, riesz)
}

/// Debiased estimates of every cell, sharing one basis for both nuisances.
pub fn dml_estimate_all(table: &AggregateTable, spec: &BasisSpec, opts: &DmlOptions) -> Result<(EstimateSet, Vec<DmlResult>)> {
    let (jj, kk) = (table.n_outcomes(), table.n_categories());
    for k in 0..kk {
        category_weights(table, k)?;
    }
    let design = expand_basis(table, spec)?;
    let mut beta = DMatrix::zeros(jj, kk);
    let mut se = DMatrix::zeros(jj, kk);
    let mut results = Vec::with_capacity(jj * kk);
    for j in 0..jj {
        let ridge = fit_outcome(&design, table, j, opts)?;
        for k in 0..kk {
            let rl = opts.riesz_lambda.unwrap_or(ridge.lambda / table.n_geos() as f64);
            let riesz = riesz_fit(&design, table, k, rl)?;
            let r = combine(&design, table, j, k, ridge.clone(), riesz)?;
            beta[(j, k)] = r.point;
            se[(j, k)] = r.se;
            results.push(r);
        }
    }
    let method = if opts.bounded { "dml-bounded" } else { "dml" };
    let mut est = EstimateSet::new(method, table.outcome_names().to_vec(), table.category_names().to_vec(), beta, se);
    for j in 0..jj {
        for k in 0..kk {
            if !est.feasible(j, k) {
                est.warnings.push(format!("estimate for {} / {} is outside [0, 1]", est.outcome_names[j], est.category_names[k]));
            }
        }
    }
    Ok((est, results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{TableParts, EXACT_TOLERANCE};
    use crate::goodman::{goodman_fit, GoodmanOptions};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table(seed: u64, g: usize, noise: f64) -> AggregateTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x1: Vec<f64> = (0..g).map(|_| rng.random_range(0.1..0.9)).collect();
        let z: Vec<f64> = (0..g).map(|_| rng.random_range(0.0..1.0)).collect();
        let n: Vec<f64> = (0..g).map(|_| rng.random_range(200.0..800.0_f64).round()).collect();
        let y: Vec<f64> = (0..g).map(|i| 0.7 * x1[i] + 0.2 * (1.0 - x1[i]) + noise * rng.random_range(-1.0..1.0)).collect();
        AggregateTable::from_parts(
            TableParts {
                geos: (0..g).map(|i| format!("g{i}")).collect(),
                category_names: vec!["a".into(), "b".into()],
                outcome_names: vec!["y".into()],
                covariate_names: vec!["z".into()],
                shares: Some(DMatrix::from_fn(g, 2, |r, c| if c == 0 { x1[r] } else { 1.0 - x1[r] })),
                outcomes: Some(DMatrix::from_fn(g, 1, |r, _| y[r])),
                population: n,
                covariates: Some(DMatrix::from_fn(g, 1, |r, _| z[r])),
                ..Default::default()
            },
            EXACT_TOLERANCE,
        )
        .unwrap()
    }

    #[test]
    fn noiseless_ccar_matches_goodman() {
        let t = table(1, 50, 0.0);
        let spec = BasisSpec::parse("z").unwrap();
        let g = goodman_fit(&t, GoodmanOptions::default()).unwrap();
        for k in 0..2 {
            let r = dml_estimate(&t, &spec, &spec, 0, k, &DmlOptions::default()).unwrap();
            assert_relative_eq!(r.point, g.beta[(0, k)], epsilon = 1e-8);
            // The residual term vanishes: the spread is that of β_k·ω_gk.
            let omega = category_weights(&t, k).unwrap();
            assert_relative_eq!(r.se, g.beta[(0, k)] * sd(&omega) / 50f64.sqrt(), epsilon = 1e-8);
        }
    }

    #[test]
    fn se_is_recomputable_from_scores() {
        let t = table(2, 80, 0.05);
        let spec = BasisSpec::parse("z:spline(2)").unwrap();
        let r = dml_estimate(&t, &spec, &spec, 0, 1, &DmlOptions::default()).unwrap();
        assert_eq!(r.point, mean(&r.scores));
        assert_eq!(r.se, sd(&r.scores) / (r.scores.len() as f64).sqrt());
    }

    #[test]
    fn zero_penalty_debiased_point_equals_plugin() {
        let t = table(3, 60, 0.05);
        let spec = BasisSpec::parse("z:poly(2)").unwrap();
        let opts = DmlOptions { lambda: Some(0.0), riesz_lambda: Some(0.0), bounded: false };
        let r = dml_estimate(&t, &spec, &spec, 0, 0, &opts).unwrap();
        assert_relative_eq!(r.point, r.plugin, epsilon = 1e-8);
    }
}
