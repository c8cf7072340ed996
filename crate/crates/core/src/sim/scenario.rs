//! Synthetic aggregate data with known local and global truth.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{AggregateTable, CellMeans, GroundTruth, TableParts, EXACT_TOLERANCE};
use crate::error::{Error, Result};

/// Category-share centre and sd of the composition draw in scenarios A and B.
pub const SHARE_MEAN: f64 = 0.2;
pub const SHARE_SD: f64 = 0.08;
/// Location, sd and correlation of the truncated normal local means.
pub const LOCAL_MEAN: [f64; 2] = [0.5, 0.2];
pub const LOCAL_SD: f64 = 0.02;
pub const LOCAL_CORRELATION: f64 = 0.3;
pub const POPULATION: u64 = 1000;
/// Seed at which scenario A's Goodman estimate of `β₁` sits at 0.509 ± 0.01.
pub const REFERENCE_SEED: u64 = 191;
/// Shares and local means of the injected point in scenario B.
pub const OUTLIER_SHARE: f64 = 0.9;
pub const OUTLIER_LOCAL: [f64; 2] = [1.0, 0.0];
pub const OUTLIER_COVARIATE_SD: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioKind {
    /// Local means independent of composition.
    A,
    /// `A` plus one high-leverage geography.
    B,
    /// Local means and composition both driven by an observed covariate.
    C,
    /// `C` with the covariate withheld.
    D,
}

impl std::str::FromStr for ScenarioKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "A" => Ok(Self::A),
            "B" => Ok(Self::B),
            "C" => Ok(Self::C),
            "D" => Ok(Self::D),
            other => Err(Error::InvalidData(format!("unknown scenario `{other}`"))),
        }
    }
}

/// Shape of `f_k(z)` in scenarios C and D.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Confounding {
    #[default]
    Logistic,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    /// Number of geographies (before the injected point in `B`).
    pub geographies: usize,
    pub seed: u64,
    pub confounding: Confounding,
    /// Sd of geography-level deviations of the local means from `f_k(z)` in C/D.
    pub local_noise: f64,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, geographies: usize, seed: u64) -> Self {
        Self { kind, geographies, seed, confounding: Confounding::Logistic, local_noise: 0.03 }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub table: AggregateTable,
    pub truth: GroundTruth,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Local means `f_k(z)` of scenarios C and D; category 0 is the minority group.
pub fn confounded_mean(confounding: Confounding, k: usize, z: f64) -> f64 {
    let (lo, hi) = if k == 0 { (0.70, 0.92) } else { (0.25, 0.65) };
    match confounding {
        Confounding::Logistic => lo + (hi - lo) * logistic(8.0 * (z - 0.5)),
        Confounding::Linear => lo + (hi - lo) * z,
    }
}

/// Minority share as a function of the covariate, before noise.
pub fn confounded_share(z: f64, noise: f64) -> f64 {
    logistic(-2.5 + 3.5 * z + noise)
}

pub fn generate(spec: &ScenarioSpec) -> Result<Scenario> {
    if spec.geographies < 3 {
        return Err(Error::InvalidData("a scenario needs at least 3 geographies".into()));
    }
    if !(0.0..0.5).contains(&spec.local_noise) {
        return Err(Error::InvalidData(format!("local noise {} is outside [0, 0.5)", spec.local_noise)));
    }
    match spec.kind {
        ScenarioKind::A | ScenarioKind::B => ccar(spec),
        ScenarioKind::C | ScenarioKind::D => confounded(spec),
    }
}

/// Draws from `N(LOCAL_MEAN, Σ)` truncated to the unit square by rejection.
fn local_means<R: Rng>(rng: &mut R) -> [f64; 2] {
    let rho = LOCAL_CORRELATION;
    loop {
        let e1: f64 = rng.sample(StandardNormal);
        let e2: f64 = rng.sample(StandardNormal);
        let b = [LOCAL_MEAN[0] + LOCAL_SD * e1, LOCAL_MEAN[1] + LOCAL_SD * (rho * e1 + (1.0 - rho * rho).sqrt() * e2)];
        if b.iter().all(|v| (0.0..=1.0).contains(v)) {
            return b;
        }
    }
}

fn ccar(spec: &ScenarioSpec) -> Result<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let share = Normal::new(SHARE_MEAN, SHARE_SD).expect("valid normal");
    let mut n_k: Vec<[f64; 2]> = Vec::new();
    let mut local: Vec<[f64; 2]> = Vec::new();
    for _ in 0..spec.geographies {
        let n1 = loop {
            let x: f64 = share.sample(&mut rng);
            let n1 = (x * POPULATION as f64).round();
            if x > 0.0 && x < 1.0 && n1 > 0.0 && n1 < POPULATION as f64 {
                break n1;
            }
        };
        n_k.push([n1, POPULATION as f64 - n1]);
        local.push(local_means(&mut rng));
    }
    let mut z: Vec<f64> = Vec::new();
    if spec.kind == ScenarioKind::B {
        let cov = Normal::new(0.0, OUTLIER_COVARIATE_SD).expect("valid normal");
        z = (0..spec.geographies).map(|_| cov.sample(&mut rng)).collect();
        // Same category-0 count as an average geography, composition fixed at 0.9.
        let mean_n1 = n_k.iter().map(|r| r[0]).sum::<f64>() / n_k.len() as f64;
        let unit = (mean_n1 / (OUTLIER_SHARE * 10.0)).round().max(1.0);
        n_k.push([9.0 * unit, unit]);
        local.push(OUTLIER_LOCAL);
        z.push(1.0);
    }
    let g = n_k.len();
    let pop: Vec<f64> = n_k.iter().map(|r| r[0] + r[1]).collect();
    let shares = DMatrix::from_fn(g, 2, |r, c| n_k[r][c] / pop[r]);
    let outcomes = DMatrix::from_fn(g, 1, |r, _| shares[(r, 0)] * local[r][0] + shares[(r, 1)] * local[r][1]);
    let category_counts = DMatrix::from_fn(g, 2, |r, c| n_k[r][c]);
    let table = AggregateTable::from_parts(
        TableParts {
            geos: (0..g).map(|i| format!("g{:04}", i + 1)).collect(),
            category_names: vec!["grp1".into(), "grp2".into()],
            outcome_names: vec!["y".into()],
            covariate_names: if z.is_empty() { vec![] } else { vec!["z".into()] },
            shares: Some(shares),
            outcomes: Some(outcomes),
            counts: None,
            population: pop,
            category_counts: Some(category_counts.clone()),
            covariates: if z.is_empty() { None } else { Some(DMatrix::from_fn(g, 1, |r, _| z[r])) },
        },
        EXACT_TOLERANCE,
    )?;
    let truth = truth_from_locals(&category_counts, &local.iter().map(|b| vec![vec![b[0]], vec![b[1]]]).collect::<Vec<_>>());
    Ok(Scenario { table, truth })
}

/// Ground truth from per-geography local means `[g][k][j]`.
fn truth_from_locals(counts: &DMatrix<f64>, local: &[Vec<Vec<f64>>]) -> GroundTruth {
    let (g_count, kk) = counts.shape();
    let jj = local[0][0].len();
    let locals: Vec<CellMeans> = (0..g_count)
        .map(|g| CellMeans::new((0..kk).map(|k| (counts[(g, k)] > 0.0).then(|| local[g][k].clone())).collect()))
        .collect();
    let totals: Vec<f64> = (0..kk).map(|k| counts.column(k).sum()).collect();
    let global = CellMeans::new(
        (0..kk)
            .map(|k| {
                (totals[k] > 0.0).then(|| {
                    (0..jj)
                        .map(|j| (0..g_count).map(|g| counts[(g, k)] * local[g][k][j]).sum::<f64>() / totals[k])
                        .collect()
                })
            })
            .collect(),
    );
    GroundTruth { global, local: locals, category_totals: totals }
}

fn confounded(spec: &ScenarioSpec) -> Result<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let g = spec.geographies;
    let mut z = Vec::with_capacity(g);
    let mut pop = Vec::with_capacity(g);
    let mut n_k: Vec<[u64; 2]> = Vec::with_capacity(g);
    let mut m_k: Vec<[u64; 2]> = Vec::with_capacity(g);
    for _ in 0..g {
        let zg: f64 = rng.random_range(0.0..1.0);
        let noise: f64 = rng.sample::<f64, _>(StandardNormal) * 0.5;
        let x = confounded_share(zg, noise);
        let n: u64 = rng.random_range(500..=1500);
        let n1 = Binomial::new(n, x).expect("valid binomial").sample(&mut rng);
        let mut m = [0u64; 2];
        let counts = [n1, n - n1];
        for k in 0..2 {
            let dev: f64 = rng.sample::<f64, _>(StandardNormal) * spec.local_noise;
            let p = (confounded_mean(spec.confounding, k, zg) + dev).clamp(0.01, 0.99);
            m[k] = Binomial::new(counts[k], p).expect("valid binomial").sample(&mut rng);
        }
        z.push(zg);
        pop.push(n as f64);
        n_k.push(counts);
        m_k.push(m);
    }
    let shares = DMatrix::from_fn(g, 2, |r, c| n_k[r][c] as f64 / pop[r]);
    let category_counts = DMatrix::from_fn(g, 2, |r, c| n_k[r][c] as f64);
    let yes: Vec<u64> = m_k.iter().map(|m| m[0] + m[1]).collect();
    let outcome_counts: Vec<Vec<u64>> = (0..g).map(|r| vec![yes[r], pop[r] as u64 - yes[r]]).collect();
    let with_z = spec.kind == ScenarioKind::C;
    let table = AggregateTable::from_parts(
        TableParts {
            geos: (0..g).map(|i| format!("g{:04}", i + 1)).collect(),
            category_names: vec!["minority".into(), "majority".into()],
            outcome_names: vec!["yes".into(), "no".into()],
            covariate_names: if with_z { vec!["z".into()] } else { vec![] },
            shares: Some(shares),
            outcomes: None,
            counts: Some(outcome_counts),
            population: pop,
            category_counts: Some(category_counts.clone()),
            covariates: with_z.then(|| DMatrix::from_fn(g, 1, |r, _| z[r])),
        },
        EXACT_TOLERANCE,
    )?;
    // Finite-sample local means: realized counts over category size, undefined when empty.
    let local: Vec<Vec<Vec<f64>>> = (0..g)
        .map(|r| {
            (0..2)
                .map(|k| {
                    let n = n_k[r][k] as f64;
                    let p = if n > 0.0 { m_k[r][k] as f64 / n } else { 0.0 };
                    vec![p, 1.0 - p]
                })
                .collect()
        })
        .collect();
    Ok(Scenario { table, truth: truth_from_locals(&category_counts, &local) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::identity_residual;

    #[test]
    fn deterministic_given_seed() {
        for kind in [ScenarioKind::A, ScenarioKind::B, ScenarioKind::C, ScenarioKind::D] {
            let a = generate(&ScenarioSpec::new(kind, 30, 4)).unwrap();
            let b = generate(&ScenarioSpec::new(kind, 30, 4)).unwrap();
            assert_eq!(a.table, b.table);
            assert_eq!(a.truth, b.truth);
        }
    }

    #[test]
    fn truth_satisfies_identities() {
        for kind in [ScenarioKind::A, ScenarioKind::B, ScenarioKind::C] {
            let s = generate(&ScenarioSpec::new(kind, 50, 9)).unwrap();
            assert!(identity_residual(&s.table, &s.truth) <= 1e-12);
            let again = s.truth.weighted_local_average(&s.table.category_counts());
            for k in 0..2 {
                for j in 0..s.table.n_outcomes() {
                    assert!((again.get(j, k).unwrap() - s.truth.global.get(j, k).unwrap()).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn injected_point() {
        let s = generate(&ScenarioSpec::new(ScenarioKind::B, 20, REFERENCE_SEED)).unwrap();
        let t = &s.table;
        assert_eq!(t.n_geos(), 21);
        assert!((t.shares()[(20, 0)] - 0.9).abs() < 1e-15);
        assert!((t.outcomes()[(20, 0)] - 0.9).abs() < 1e-15);
        assert_eq!(t.covariates()[(20, 0)], 1.0);
        let b1 = s.truth.global.get(0, 0).unwrap();
        assert!((b1 - 0.53).abs() < 0.01, "{b1}");
    }

    #[test]
    fn withheld_covariate() {
        let c = generate(&ScenarioSpec::new(ScenarioKind::C, 40, 2)).unwrap();
        let d = generate(&ScenarioSpec::new(ScenarioKind::D, 40, 2)).unwrap();
        assert_eq!(c.table.n_covariates(), 1);
        assert_eq!(d.table.n_covariates(), 0);
        assert_eq!(c.table.outcomes(), d.table.outcomes());
        assert_eq!(c.truth, d.truth);
    }
}
