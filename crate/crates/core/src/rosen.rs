//! Multinomial-Dirichlet R×C count model fitted by Gibbs sampling with
//! latent cell counts.
//!
//! Outcome counts follow `M_g ~ Multinomial(N_g, β_gᵀx̄_g)`; each category
//! column of `β_g` (a distribution over outcomes) is `Dirichlet(α_·k)` and the
//! concentrations carry independent Gamma priors.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Gamma};
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::data::AggregateTable;
use crate::error::{Error, Result};
use crate::estimate::{CellQuantile, EstimateSet};
use crate::linalg::quantile;

pub const QUANTILES: [f64; 4] = [0.025, 0.25, 0.75, 0.975];

#[derive(Debug, Clone, Copy)]
pub struct RosenOptions {
    pub iters: usize,
    pub burnin: usize,
    pub chains: usize,
    pub seed: u64,
    /// Gamma hyperprior on each `α_jk`: shape and rate.
    pub prior_shape: f64,
    pub prior_rate: f64,
}

impl Default for RosenOptions {
    fn default() -> Self {
        Self { iters: 5000, burnin: 1000, chains: 4, seed: 0, prior_shape: 4.0, prior_rate: 2.0 }
    }
}

/// Sampler state for one chain.
#[derive(Debug, Clone)]
pub struct RxcState {
    /// `[g][j·K + k]`
    pub latent: Vec<Vec<u64>>,
    /// `[g][j·K + k]`; each category column sums to one over `j`.
    pub beta: Vec<Vec<f64>>,
    /// `[j·K + k]`
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    /// Saved draws of the global `J × K` matrix, flattened `j·K + k`.
    pub global: Vec<Vec<f64>>,
    pub alpha_mean: Vec<f64>,
    /// Metropolis acceptance rate after burn-in, per `α_jk`.
    pub acceptance: Vec<f64>,
    pub final_state: RxcState,
}

#[derive(Debug, Clone)]
pub struct RosenFit {
    pub estimate: EstimateSet,
    pub chains: Vec<ChainOutput>,
    /// Potential scale reduction per cell (`NaN` with a single chain).
    pub rhat: DMatrix<f64>,
}

struct Data {
    counts: Vec<Vec<u64>>,
    shares: DMatrix<f64>,
    /// Global-summary weights `N_gk` (integers).
    weights: DMatrix<f64>,
    j: usize,
    k: usize,
}

fn prepare(table: &AggregateTable) -> Result<Data> {
    let counts = table
        .counts()
        .ok_or_else(|| Error::InvalidData("the count model needs outcome counts (m_ columns)".into()))?
        .to_vec();
    let (g_count, kk) = table.shares().shape();
    let jj = table.n_outcomes();
    if jj < 2 {
        return Err(Error::InvalidData("the count model needs at least 2 outcome categories".into()));
    }
    let weights = table.category_counts();
    for g in 0..g_count {
        for k in 0..kk {
            let w = weights[(g, k)];
            if (w - w.round()).abs() > 1e-6 || w < 0.0 {
                return Err(Error::InvalidGeography { geo: table.geos()[g].clone(), reason: format!("non-integer category count {w}") });
            }
        }
        let total: u64 = counts[g].iter().sum();
        if (total as f64 - table.population()[g]).abs() > 1e-6 {
            return Err(Error::InvalidGeography {
                geo: table.geos()[g].clone(),
                reason: format!("outcome counts sum to {total}, population is {}", table.population()[g]),
            });
        }
    }
    for j in 0..jj {
        if counts.iter().all(|c| c[j] == 0) {
            return Err(Error::EmptyOutcome(j));
        }
    }
    Ok(Data { counts, shares: table.shares().clone(), weights: weights.map(f64::round), j: jj, k: kk })
}

/// Dirichlet draw computed in log space so that tiny concentrations do not underflow.
fn dirichlet<R: Rng>(conc: &[f64], rng: &mut R, out: &mut [f64]) {
    let mut logs: Vec<f64> = conc
        .iter()
        .map(|&a| {
            let g: f64 = Gamma::new(a + 1.0, 1.0).expect("positive shape").sample(rng);
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            g.ln() + u.ln() / a
        })
        .collect();
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for l in logs.iter_mut() {
        *l = (*l - m).exp();
        s += *l;
    }
    for (o, l) in out.iter_mut().zip(&logs) {
        *o = l / s;
    }
}

/// Multinomial draw by sequential binomials.
fn multinomial<R: Rng>(n: u64, probs: &[f64], rng: &mut R, out: &mut [u64]) {
    let total: f64 = probs.iter().sum();
    let mut left = n;
    let mut mass = total;
    for (i, &p) in probs.iter().enumerate() {
        if i + 1 == probs.len() || left == 0 {
            out[i] = if i + 1 == probs.len() { left } else { 0 };
            continue;
        }
        let q = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let draw = Binomial::new(left, q).expect("probability in [0, 1]").sample(rng);
        out[i] = draw;
        left -= draw;
        mass -= p;
    }
}

fn log_dirichlet_column(alpha_col: &[f64], log_beta_sum: &[f64], g_count: f64) -> f64 {
    let a0: f64 = alpha_col.iter().sum();
    g_count * (ln_gamma(a0) - alpha_col.iter().map(|a| ln_gamma(*a)).sum::<f64>())
        + alpha_col.iter().zip(log_beta_sum).map(|(a, lb)| (a - 1.0) * lb).sum::<f64>()
}

/// Log of `p(c_g | α, x̄_g)` with `β_g` integrated out, up to terms fixed by the row sums.
fn collapsed_cell(c: u64, alpha: f64, log_share: f64) -> f64 {
    let c = c as f64;
    let tilt = if c > 0.0 { c * log_share } else { 0.0 };
    ln_gamma(alpha + c) - ln_gamma(c + 1.0) + tilt
}

/// Metropolis moves on one geography's latent counts under the Dirichlet-multinomial
/// marginal. Swaps keep both margins; shifts move counts between categories within an
/// outcome. Returns accepted moves per kind.
#[allow(clippy::too_many_arguments)]
fn collapsed_moves<R: Rng>(
    latent: &mut [u64],
    alpha: &[f64],
    log_shares: &[f64],
    jj: usize,
    kk: usize,
    scale: [f64; 2],
    rng: &mut R,
    tried: &mut [usize; 2],
    accepted: &mut [usize; 2],
) {
    if kk < 2 {
        return;
    }
    let col_total = |latent: &[u64], k: usize| (0..jj).map(|j| latent[j * kk + k]).sum::<u64>() as f64;
    let col_alpha = |k: usize| (0..jj).map(|j| alpha[j * kk + k]).sum::<f64>();
    for _ in 0..jj * kk {
        let kind = if jj >= 2 && rng.random::<bool>() { 0 } else { 1 };
        let k1 = rng.random_range(0..kk);
        let k2 = (k1 + rng.random_range(1..kk)) % kk;
        let step = (scale[kind] * rng.sample::<f64, _>(rand_distr::StandardNormal)).round() as i64;
        if step == 0 {
            continue;
        }
        tried[kind] += 1;
        // (cell, delta) pairs.
        let mut moves: [(usize, i64); 4] = [(0, 0); 4];
        let used = if kind == 0 {
            let j1 = rng.random_range(0..jj);
            let j2 = (j1 + rng.random_range(1..jj)) % jj;
            moves = [(j1 * kk + k1, step), (j2 * kk + k2, step), (j1 * kk + k2, -step), (j2 * kk + k1, -step)];
            4
        } else {
            let j = rng.random_range(0..jj);
            moves[0] = (j * kk + k1, step);
            moves[1] = (j * kk + k2, -step);
            2
        };
        if moves[..used].iter().any(|&(i, d)| (latent[i] as i64) + d < 0) {
            continue;
        }
        let mut delta = 0.0;
        for &(i, d) in &moves[..used] {
            let k = i % kk;
            delta += collapsed_cell((latent[i] as i64 + d) as u64, alpha[i], log_shares[k]) - collapsed_cell(latent[i], alpha[i], log_shares[k]);
        }
        if kind == 1 {
            for (k, d) in [(k1, step), (k2, -step)] {
                let a = col_alpha(k);
                let t = col_total(latent, k);
                delta -= ln_gamma(a + t + d as f64) - ln_gamma(a + t);
            }
        }
        if delta.is_nan() {
            continue;
        }
        if delta >= 0.0 || rng.random::<f64>().ln() < delta {
            for &(i, d) in &moves[..used] {
                latent[i] = (latent[i] as i64 + d) as u64;
            }
            accepted[kind] += 1;
        }
    }
}

fn run_chain(data: &Data, opts: &RosenOptions, chain: usize) -> ChainOutput {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(chain as u64);
    let (g_count, jj, kk) = (data.counts.len(), data.j, data.k);
    let mut state = RxcState {
        latent: vec![vec![0; jj * kk]; g_count],
        beta: vec![vec![1.0 / jj as f64; jj * kk]; g_count],
        alpha: vec![1.0; jj * kk],
    };
    let mut log_step = vec![0.5_f64.ln(); jj * kk];
    let mut accepted = vec![0usize; jj * kk];
    let mut window = vec![0usize; jj * kk];
    let mut post_accepted = vec![0usize; jj * kk];
    let mut global_draws = Vec::with_capacity(opts.iters);
    let mut alpha_sum = vec![0.0; jj * kk];
    let mut probs = vec![0.0; kk];
    let mut cell = vec![0u64; kk];
    let mut conc = vec![0.0; jj];
    let mut col = vec![0.0; jj];
    let gf = g_count as f64;
    let log_shares: Vec<Vec<f64>> = (0..g_count).map(|g| (0..kk).map(|k| data.shares[(g, k)].ln()).collect()).collect();
    let mut move_scale = [0.5, 0.5];

    for it in 0..opts.burnin + opts.iters {
        let mut tried = [0usize; 2];
        let mut moved = [0usize; 2];
        for g in 0..g_count {
            // Latent allocation of each outcome count across categories.
            for j in 0..jj {
                for k in 0..kk {
                    probs[k] = data.shares[(g, k)] * state.beta[g][j * kk + k];
                }
                multinomial(data.counts[g][j], &probs, &mut rng, &mut cell);
                for k in 0..kk {
                    state.latent[g][j * kk + k] = cell[k];
                }
            }
            let size = (data.counts[g].iter().sum::<u64>() as f64).sqrt();
            collapsed_moves(
                &mut state.latent[g],
                &state.alpha,
                &log_shares[g],
                jj,
                kk,
                [move_scale[0] * size, move_scale[1] * size],
                &mut rng,
                &mut tried,
                &mut moved,
            );
            // Category columns of β_g.
            for k in 0..kk {
                for j in 0..jj {
                    conc[j] = state.alpha[j * kk + k] + state.latent[g][j * kk + k] as f64;
                }
                dirichlet(&conc, &mut rng, &mut col);
                for j in 0..jj {
                    state.beta[g][j * kk + k] = col[j];
                }
            }
        }
        if it < opts.burnin {
            for kind in 0..2 {
                if tried[kind] > 0 {
                    let rate = moved[kind] as f64 / tried[kind] as f64;
                    move_scale[kind] *= if rate < 0.2 { 0.9 } else if rate > 0.4 { 1.1 } else { 1.0 };
                    move_scale[kind] = move_scale[kind].clamp(1e-3, 1e3);
                }
            }
        }
        // Concentrations: random-walk Metropolis on ln α, one entry at a time.
        for k in 0..kk {
            let log_beta_sum: Vec<f64> =
                (0..jj).map(|j| (0..g_count).map(|g| state.beta[g][j * kk + k].max(1e-300).ln()).sum()).collect();
            for j in 0..jj {
                let idx = j * kk + k;
                let current: Vec<f64> = (0..jj).map(|i| state.alpha[i * kk + k]).collect();
                let mut proposal = current.clone();
                let step = log_step[idx].exp();
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                proposal[j] = current[j] * (step * z).exp();
                let log_prior = |a: f64| (opts.prior_shape - 1.0) * a.ln() - opts.prior_rate * a + a.ln();
                let ratio = log_dirichlet_column(&proposal, &log_beta_sum, gf) + log_prior(proposal[j])
                    - log_dirichlet_column(&current, &log_beta_sum, gf)
                    - log_prior(current[j]);
                let accept = ratio >= 0.0 || rng.random::<f64>().ln() < ratio;
                if accept {
                    state.alpha[idx] = proposal[j];
                }
                if it < opts.burnin {
                    accepted[idx] += accept as usize;
                    window[idx] += 1;
                    if window[idx] == 50 {
                        let rate = accepted[idx] as f64 / 50.0;
                        if rate < 0.2 {
                            log_step[idx] -= 0.2;
                        } else if rate > 0.4 {
                            log_step[idx] += 0.2;
                        }
                        accepted[idx] = 0;
                        window[idx] = 0;
                    }
                } else {
                    post_accepted[idx] += accept as usize;
                }
            }
        }
        if it >= opts.burnin {
            global_draws.push(global_summary(data, &state));
            for (s, a) in alpha_sum.iter_mut().zip(&state.alpha) {
                *s += a;
            }
        }
    }
    let n = opts.iters.max(1) as f64;
    ChainOutput {
        global: global_draws,
        alpha_mean: alpha_sum.iter().map(|s| s / n).collect(),
        acceptance: post_accepted.iter().map(|a| *a as f64 / n).collect(),
        final_state: state,
    }
}

/// `N_gk`-weighted average of local `β_g`; unweighted for a category with no members.
fn global_summary(data: &Data, state: &RxcState) -> Vec<f64> {
    let (g_count, jj, kk) = (data.counts.len(), data.j, data.k);
    let mut out = vec![0.0; jj * kk];
    for k in 0..kk {
        let total: f64 = data.weights.column(k).sum();
        for j in 0..jj {
            let idx = j * kk + k;
            out[idx] = if total > 0.0 {
                (0..g_count).map(|g| data.weights[(g, k)] * state.beta[g][idx]).sum::<f64>() / total
            } else {
                (0..g_count).map(|g| state.beta[g][idx]).sum::<f64>() / g_count as f64
            };
        }
    }
    out
}

fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| {
            let h = c.len() / 2;
            [&c[..h], &c[h..2 * h]]
        })
        .collect();
    let m = halves.len() as f64;
    let n = halves[0].len() as f64;
    if m < 2.0 || n < 2.0 {
        return f64::NAN;
    }
    let means: Vec<f64> = halves.iter().map(|h| h.iter().sum::<f64>() / n).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = halves.iter().zip(&means).map(|(h, mu)| h.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0)).sum::<f64>() / m;
    if w == 0.0 {
        return 1.0;
    }
    (((n - 1.0) / n * w + b / n) / w).sqrt()
}

pub fn rosen_gibbs(table: &AggregateTable, opts: RosenOptions) -> Result<RosenFit> {
    if opts.iters == 0 || opts.chains == 0 {
        return Err(Error::InvalidData("need at least one chain and one saved iteration".into()));
    }
    let data = prepare(table)?;
    let chains: Vec<ChainOutput> = (0..opts.chains).into_par_iter().map(|c| run_chain(&data, &opts, c)).collect();
    let (jj, kk) = (data.j, data.k);
    let cell_draws = |idx: usize| -> Vec<f64> { chains.iter().flat_map(|c| c.global.iter().map(move |d| d[idx])).collect() };
    let mut beta = DMatrix::zeros(jj, kk);
    let mut se = DMatrix::zeros(jj, kk);
    let mut qs: Vec<DMatrix<f64>> = vec![DMatrix::zeros(jj, kk); QUANTILES.len()];
    let mut rhat = DMatrix::zeros(jj, kk);
    for j in 0..jj {
        for k in 0..kk {
            let idx = j * kk + k;
            let d = cell_draws(idx);
            let n = d.len() as f64;
            let m = d.iter().sum::<f64>() / n;
            beta[(j, k)] = m;
            se[(j, k)] = (d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
            for (q, p) in qs.iter_mut().zip(QUANTILES) {
                q[(j, k)] = quantile(&d, p);
            }
            let per_chain: Vec<Vec<f64>> = chains.iter().map(|c| c.global.iter().map(|d| d[idx]).collect()).collect();
            rhat[(j, k)] = if opts.chains > 1 { split_rhat(&per_chain) } else { f64::NAN };
        }
    }
    let mut est = EstimateSet::new("rosen", table.outcome_names().to_vec(), table.category_names().to_vec(), beta, se);
    est.intervals = Some((qs[0].clone(), qs[3].clone()));
    est.quantiles = QUANTILES.iter().zip(qs).map(|(&prob, values)| CellQuantile { prob, values }).collect();
    for k in 0..kk {
        if data.weights.column(k).sum() == 0.0 {
            est.warnings.push(format!("category {} has no members; its column reflects the prior", table.category_names()[k]));
        }
    }
    for idx in 0..jj * kk {
        let r = rhat[(idx / kk, idx % kk)];
        if r > 1.1 {
            est.warnings.push(format!("cell {idx}: split R-hat {r:.3} above 1.1"));
        }
    }
    Ok(RosenFit { estimate: est, chains, rhat })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{TableParts, EXACT_TOLERANCE};

    fn table(n_k: &[[u64; 2]], m: &[[u64; 2]]) -> AggregateTable {
        let g = n_k.len();
        let n: Vec<f64> = n_k.iter().map(|r| (r[0] + r[1]) as f64).collect();
        AggregateTable::from_parts(
            TableParts {
                geos: (0..g).map(|i| format!("g{i}")).collect(),
                category_names: vec!["a".into(), "b".into()],
                outcome_names: vec!["yes".into(), "no".into()],
                shares: Some(DMatrix::from_fn(g, 2, |r, c| n_k[r][c] as f64 / n[r])),
                counts: Some(m.iter().map(|r| r.to_vec()).collect()),
                category_counts: Some(DMatrix::from_fn(g, 2, |r, c| n_k[r][c] as f64)),
                population: n,
                ..Default::default()
            },
            EXACT_TOLERANCE,
        )
        .unwrap()
    }

    fn quick() -> RosenOptions {
        RosenOptions { iters: 600, burnin: 300, chains: 2, seed: 11, ..Default::default() }
    }

    #[test]
    fn homogeneous_geographies_identify_the_present_category() {
        let t = table(&[[100, 0], [200, 0], [150, 0]], &[[60, 40], [130, 70], [90, 60]]);
        let fit = rosen_gibbs(&t, quick()).unwrap();
        let pooled = 280.0 / 450.0;
        assert!((fit.estimate.beta[(0, 0)] - pooled).abs() < 0.01, "{}", fit.estimate.beta[(0, 0)]);
        // The empty category returns the prior: symmetric concentrations give mean 1/2.
        assert!((fit.estimate.beta[(0, 1)] - 0.5).abs() < 0.1);
        assert!(!fit.estimate.warnings.is_empty());
    }

    #[test]
    fn draws_respect_constraints() {
        let t = table(&[[30, 70], [60, 40], [80, 20], [10, 90]], &[[40, 60], [50, 50], [70, 30], [25, 75]]);
        let fit = rosen_gibbs(&t, quick()).unwrap();
        for c in &fit.chains {
            let s = &c.final_state;
            for g in 0..4 {
                let m = &t.counts().unwrap()[g];
                for j in 0..2 {
                    assert_eq!(s.latent[g][j * 2] + s.latent[g][j * 2 + 1], m[j]);
                }
                for k in 0..2 {
                    let sum = s.beta[g][k] + s.beta[g][2 + k];
                    assert!((sum - 1.0).abs() < 1e-12);
                }
            }
        }
        for j in 0..2 {
            for k in 0..2 {
                assert!((0.0..=1.0).contains(&fit.estimate.beta[(j, k)]));
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let t = table(&[[30, 70], [60, 40], [80, 20]], &[[40, 60], [50, 50], [70, 30]]);
        assert_eq!(rosen_gibbs(&t, quick()).unwrap().estimate.beta, rosen_gibbs(&t, quick()).unwrap().estimate.beta);
    }

    #[test]
    fn empty_outcome_is_an_error() {
        let t = table(&[[30, 70], [60, 40]], &[[0, 100], [0, 100]]);
        assert!(matches!(rosen_gibbs(&t, quick()), Err(Error::EmptyOutcome(0))));
    }

    #[test]
    fn dirichlet_covariance_matches_theory() {
        let alpha = [2.0, 3.0, 5.0];
        let a0: f64 = alpha.iter().sum();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        let mut out = [0.0; 3];
        let (mut s0, mut s1, mut s01) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            dirichlet(&alpha, &mut rng, &mut out);
            s0 += out[0];
            s1 += out[1];
            s01 += out[0] * out[1];
        }
        let nf = n as f64;
        let cov = s01 / nf - (s0 / nf) * (s1 / nf);
        let expected = -(alpha[0] / a0) * (alpha[1] / a0) / (a0 + 1.0);
        assert!(cov < 0.0);
        // Sampling sd of the covariance estimate is about 4e-5 here.
        assert!((cov - expected).abs() < 2e-4, "{cov} vs {expected}");
    }

    #[test]
    fn multinomial_preserves_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut out = [0u64; 4];
        for n in [0u64, 1, 17, 1000] {
            multinomial(n, &[0.1, 0.0, 0.5, 0.4], &mut rng, &mut out);
            assert_eq!(out.iter().sum::<u64>(), n);
            assert_eq!(out[1], 0);
        }
    }
}
