//! Running estimators against known truth.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{AggregateTable, GroundTruth};
use crate::error::{Error, Result};
use crate::estimate::EstimateSet;
use crate::goodman::{extended_goodman_fit, goodman_fit, GoodmanOptions};
use crate::king::{king_em_estimate, king_estimate, EmOptions, KingOptions};
use crate::rosen::{rosen_gibbs, RosenOptions};
use crate::semiparametric::{dml_estimate_all, BasisSpec, DmlOptions};

/// Anything that turns an aggregate table into global estimates.
pub trait Estimator: Sync {
    fn name(&self) -> String;
    fn estimate(&self, table: &AggregateTable) -> Result<EstimateSet>;
}

/// The estimators shipped with the crate.
#[derive(Debug, Clone)]
pub enum Method {
    Goodman,
    /// Covariate-interacted regression; all table covariates when empty.
    GoodmanZ(Vec<String>),
    Dml { basis: BasisSpec, bounded: bool },
    King(KingOptions),
    KingEm,
    Rosen(RosenOptions),
}

impl Method {
    /// Parses a method name with default options. `dml` uses a linear basis
    /// in every table covariate when no basis is supplied.
    pub fn from_name(name: &str, basis: Option<&BasisSpec>, seed: u64) -> Result<Self> {
        Ok(match name {
            "goodman" => Self::Goodman,
            "goodman-z" => Self::GoodmanZ(Vec::new()),
            "dml" | "dml-bounded" => Self::Dml { basis: basis.cloned().unwrap_or_default(), bounded: name == "dml-bounded" },
            "king" => Self::King(KingOptions { seed, ..Default::default() }),
            "king-em" => Self::KingEm,
            "rosen" => Self::Rosen(RosenOptions { seed, ..Default::default() }),
            other => return Err(Error::Unsupported(format!("unknown method `{other}`"))),
        })
    }
}

impl Estimator for Method {
    fn name(&self) -> String {
        match self {
            Self::Goodman => "goodman".into(),
            Self::GoodmanZ(_) => "goodman-z".into(),
            Self::Dml { bounded: false, .. } => "dml".into(),
            Self::Dml { bounded: true, .. } => "dml-bounded".into(),
            Self::King(_) => "king".into(),
            Self::KingEm => "king-em".into(),
            Self::Rosen(_) => "rosen".into(),
        }
    }

    fn estimate(&self, table: &AggregateTable) -> Result<EstimateSet> {
        match self {
            Self::Goodman => goodman_fit(table, GoodmanOptions::default()),
            Self::GoodmanZ(names) => {
                let names: Vec<&str> = if names.is_empty() {
                    table.covariate_names().iter().map(String::as_str).collect()
                } else {
                    names.iter().map(String::as_str).collect()
                };
                extended_goodman_fit(table, &names, GoodmanOptions::default())
            }
            Self::Dml { basis, bounded } => {
                let spec = if basis.terms.is_empty() {
                    let names: Vec<&str> = table.covariate_names().iter().map(String::as_str).collect();
                    BasisSpec::linear(&names)
                } else {
                    basis.clone()
                };
                dml_estimate_all(table, &spec, &DmlOptions { bounded: *bounded, ..Default::default() }).map(|r| r.0)
            }
            Self::King(opts) => king_estimate(table, *opts).map(|r| r.0),
            Self::KingEm => king_em_estimate(table, EmOptions::default()).map(|r| r.0),
            Self::Rosen(opts) => rosen_gibbs(table, *opts).map(|r| r.estimate),
        }
    }
}

/// Error summary of one method on one cell, possibly pooled over replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetric {
    pub method: String,
    pub outcome: String,
    pub category: String,
    /// Mean of `β̂ − β`.
    pub me: f64,
    /// Mean of `|β̂ − β|`.
    pub mae: f64,
    /// Fraction of replicates whose interval contained the truth.
    pub coverage: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodFailure {
    pub method: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub cells: Vec<CellMetric>,
    pub failures: Vec<MethodFailure>,
}

impl MetricReport {
    /// Cell-average ME, MAE and coverage of `method`, if it produced any cells.
    pub fn summary(&self, method: &str) -> Option<(f64, f64, f64)> {
        let rows: Vec<&CellMetric> = self.cells.iter().filter(|c| c.method == method).collect();
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        Some((
            rows.iter().map(|c| c.me).sum::<f64>() / n,
            rows.iter().map(|c| c.mae).sum::<f64>() / n,
            rows.iter().map(|c| c.coverage).sum::<f64>() / n,
        ))
    }

    pub fn cell(&self, method: &str, outcome: &str, category: &str) -> Option<&CellMetric> {
        self.cells.iter().find(|c| c.method == method && c.outcome == outcome && c.category == category)
    }

    /// Pools per-replicate reports cell by cell, weighting by replicate count.
    pub fn pool(reports: &[MetricReport]) -> MetricReport {
        let mut acc: BTreeMap<(String, String, String), (f64, f64, f64, usize)> = BTreeMap::new();
        let mut order = Vec::new();
        let mut failures = Vec::new();
        for r in reports {
            for c in &r.cells {
                let key = (c.method.clone(), c.outcome.clone(), c.category.clone());
                let n = c.replicates as f64;
                let e = acc.entry(key.clone()).or_insert_with(|| {
                    order.push(key);
                    (0.0, 0.0, 0.0, 0)
                });
                e.0 += c.me * n;
                e.1 += c.mae * n;
                e.2 += c.coverage * n;
                e.3 += c.replicates;
            }
            failures.extend(r.failures.iter().cloned());
        }
        let cells = order
            .into_iter()
            .map(|key| {
                let (me, mae, cov, n) = acc[&key];
                let nf = n as f64;
                CellMetric { method: key.0, outcome: key.1, category: key.2, me: me / nf, mae: mae / nf, coverage: cov / nf, replicates: n }
            })
            .collect();
        MetricReport { cells, failures }
    }
}

/// Scores an estimate against the global truth; cells with undefined truth are skipped.
pub fn score(est: &EstimateSet, truth: &GroundTruth) -> Vec<CellMetric> {
    let mut out = Vec::new();
    for k in 0..est.n_categories() {
        for j in 0..est.n_outcomes() {
            let Some(t) = truth.global.get(j, k) else { continue };
            let err = est.beta[(j, k)] - t;
            out.push(CellMetric {
                method: est.method.clone(),
                outcome: est.outcome_names[j].clone(),
                category: est.category_names[k].clone(),
                me: err,
                mae: err.abs(),
                coverage: if est.interval(j, k).contains(t) { 1.0 } else { 0.0 },
                replicates: 1,
            });
        }
    }
    out
}

/// Runs every method on `table`; a failing method is recorded and skipped.
pub fn evaluate(methods: &[&dyn Estimator], table: &AggregateTable, truth: &GroundTruth) -> MetricReport {
    let mut report = MetricReport::default();
    for m in methods {
        match m.estimate(table) {
            Ok(mut est) => {
                est.method = m.name();
                report.cells.extend(score(&est, truth));
            }
            Err(e) => report.failures.push(MethodFailure { method: m.name(), message: e.to_string() }),
        }
    }
    report
}
