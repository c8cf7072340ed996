//! Aggregate and individual-level data model.
//!
//! [`MicroData`] holds individual records and is the ground-truth source for
//! every validation in the crate: [`aggregate`] collapses it into an
//! [`AggregateTable`] together with the exact local and global conditional
//! means ([`GroundTruth`]). Ingested aggregate tables carry rounding, so they
//! are validated at a looser tolerance ([`INGEST_TOLERANCE`]).

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Share-sum tolerance for tables built from integer counts.
pub const EXACT_TOLERANCE: f64 = 1e-10;
/// Share-sum tolerance for tables read from disk.
pub const INGEST_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeKind {
    /// One-hot indicator over `J` outcome levels.
    Categorical,
    /// Real-valued outcome(s); bounded in `[0, 1]` when used with bounds or King's model.
    Continuous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroRecord {
    pub geo: String,
    pub category: usize,
    pub outcome: Vec<f64>,
}

/// Individual-level records: geography, category of the grouping variable and outcome.
#[derive(Debug, Clone)]
pub struct MicroData {
    category_names: Vec<String>,
    outcome_names: Vec<String>,
    kind: OutcomeKind,
    geographies: Vec<String>,
    records: Vec<MicroRecord>,
}

impl MicroData {
    /// Builds micro-data whose geographies are those appearing in `records`, in first-seen order.
    pub fn new(
        category_names: Vec<String>,
        outcome_names: Vec<String>,
        kind: OutcomeKind,
        records: Vec<MicroRecord>,
    ) -> Result<Self> {
        let mut geographies: Vec<String> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for r in &records {
            if seen.insert(r.geo.as_str()) {
                geographies.push(r.geo.clone());
            }
        }
        Self::with_geographies(category_names, outcome_names, kind, geographies, records)
    }

    /// Builds micro-data over a declared list of geographies. Every declared geography
    /// must have at least one record and every record must name a declared geography.
    pub fn with_geographies(
        category_names: Vec<String>,
        outcome_names: Vec<String>,
        kind: OutcomeKind,
        geographies: Vec<String>,
        records: Vec<MicroRecord>,
    ) -> Result<Self> {
        let k = category_names.len();
        let j = outcome_names.len();
        if k == 0 || j == 0 {
            return Err(Error::InvalidData("need at least one category and one outcome".into()));
        }
        let index: std::collections::HashMap<&str, usize> =
            geographies.iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect();
        let mut populated = vec![false; geographies.len()];
        for (row, r) in records.iter().enumerate() {
            if r.category >= k {
                return Err(Error::CategoryOutOfRange { row, index: r.category, k });
            }
            if r.outcome.len() != j {
                return Err(Error::InvalidData(format!(
                    "record {row}: outcome has length {}, expected {j}",
                    r.outcome.len()
                )));
            }
            if r.outcome.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!("record {row}: non-finite outcome")));
            }
            if kind == OutcomeKind::Categorical {
                let ones = r.outcome.iter().filter(|&&v| v == 1.0).count();
                let zeros = r.outcome.iter().filter(|&&v| v == 0.0).count();
                if ones != 1 || ones + zeros != j {
                    return Err(Error::NotOneHot { row });
                }
            }
            match index.get(r.geo.as_str()) {
                Some(&g) => populated[g] = true,
                None => {
                    return Err(Error::InvalidData(format!(
                        "record {row}: undeclared geography `{}`",
                        r.geo
                    )))
                }
            }
        }
        if let Some(g) = populated.iter().position(|p| !p) {
            return Err(Error::EmptyGeography(geographies[g].clone()));
        }
        Ok(Self { category_names, outcome_names, kind, geographies, records })
    }

    pub fn n_categories(&self) -> usize {
        self.category_names.len()
    }

    pub fn n_outcomes(&self) -> usize {
        self.outcome_names.len()
    }

    pub fn kind(&self) -> OutcomeKind {
        self.kind
    }

    pub fn geographies(&self) -> &[String] {
        &self.geographies
    }

    pub fn records(&self) -> &[MicroRecord] {
        &self.records
    }

    pub fn category_names(&self) -> &[String] {
        &self.category_names
    }

    pub fn outcome_names(&self) -> &[String] {
        &self.outcome_names
    }
}

/// A `J × K` matrix of conditional means whose columns may be undefined.
///
/// A column is `None` when the corresponding category has no members, so
/// weighted averages must skip it rather than treat it as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMeans {
    columns: Vec<Option<Vec<f64>>>,
}

impl CellMeans {
    pub fn new(columns: Vec<Option<Vec<f64>>>) -> Self {
        Self { columns }
    }

    pub fn n_categories(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, k: usize) -> Option<&[f64]> {
        self.columns[k].as_deref()
    }

    pub fn get(&self, j: usize, k: usize) -> Option<f64> {
        self.columns[k].as_ref().map(|c| c[j])
    }

    pub fn columns(&self) -> &[Option<Vec<f64>>] {
        &self.columns
    }
}

/// Exact local (`B_gk`) and global (`B_k`) conditional means.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub global: CellMeans,
    pub local: Vec<CellMeans>,
    /// Category totals `N_k`.
    pub category_totals: Vec<f64>,
}

impl GroundTruth {
    /// Recomputes the global means as the `N_gk`-weighted average of the local means,
    /// skipping undefined cells.
    pub fn weighted_local_average(&self, category_counts: &DMatrix<f64>) -> CellMeans {
        let k_count = self.global.n_categories();
        let columns = (0..k_count)
            .map(|k| {
                let mut total = 0.0;
                let mut acc: Option<Vec<f64>> = None;
                for (g, local) in self.local.iter().enumerate() {
                    if let Some(col) = local.column(k) {
                        let w = category_counts[(g, k)];
                        let a = acc.get_or_insert_with(|| vec![0.0; col.len()]);
                        for (aj, cj) in a.iter_mut().zip(col) {
                            *aj += w * cj;
                        }
                        total += w;
                    }
                }
                acc.filter(|_| total > 0.0).map(|a| a.into_iter().map(|v| v / total).collect())
            })
            .collect();
        CellMeans::new(columns)
    }
}

/// Per-geography aggregates: category shares, outcome means or counts,
/// population counts and covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateTable {
    geos: Vec<String>,
    category_names: Vec<String>,
    outcome_names: Vec<String>,
    covariate_names: Vec<String>,
    shares: DMatrix<f64>,
    outcomes: DMatrix<f64>,
    counts: Option<Vec<Vec<u64>>>,
    population: Vec<f64>,
    category_counts: Option<DMatrix<f64>>,
    covariates: DMatrix<f64>,
}

/// Unvalidated pieces of an [`AggregateTable`].
#[derive(Debug, Clone, Default)]
pub struct TableParts {
    pub geos: Vec<String>,
    pub category_names: Vec<String>,
    pub outcome_names: Vec<String>,
    pub covariate_names: Vec<String>,
    /// `G × K` shares.
    pub shares: Option<DMatrix<f64>>,
    /// `G × J` outcome means; derived from `counts / population` when absent.
    pub outcomes: Option<DMatrix<f64>>,
    /// `G × J` outcome counts.
    pub counts: Option<Vec<Vec<u64>>>,
    pub population: Vec<f64>,
    /// `G × K` category counts.
    pub category_counts: Option<DMatrix<f64>>,
    /// `G × p` covariates.
    pub covariates: Option<DMatrix<f64>>,
}

impl AggregateTable {
    /// Validates `parts` with share-sum tolerance `tol`.
    pub fn from_parts(parts: TableParts, tol: f64) -> Result<Self> {
        let TableParts {
            geos,
            category_names,
            outcome_names,
            covariate_names,
            shares,
            outcomes,
            counts,
            population,
            category_counts,
            covariates,
        } = parts;
        let g_count = geos.len();
        let k = category_names.len();
        let j = outcome_names.len();
        let p = covariate_names.len();
        if g_count == 0 {
            return Err(Error::InvalidData("table has no geographies".into()));
        }
        if k == 0 || j == 0 {
            return Err(Error::InvalidData("need at least one category and one outcome".into()));
        }
        if population.len() != g_count {
            return Err(Error::InvalidData("population length does not match geographies".into()));
        }
        let shares = match (shares, &category_counts) {
            (Some(s), _) => s,
            (None, Some(c)) => DMatrix::from_fn(g_count, k, |g, kk| c[(g, kk)] / population[g]),
            (None, None) => return Err(Error::MissingColumn("x_<category>".into())),
        };
        check_dims(&shares, g_count, k, "shares")?;
        let bad = |g: usize, reason: String| Error::InvalidGeography { geo: geos[g].clone(), reason };
        for g in 0..g_count {
            let n = population[g];
            if !(n.is_finite() && n > 0.0) {
                return Err(bad(g, format!("population must be positive, got {n}")));
            }
            let row = shares.row(g);
            if row.iter().any(|&x| !x.is_finite() || x < -tol) {
                return Err(bad(g, "shares must be finite and nonnegative".into()));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > tol {
                return Err(bad(g, format!("shares sum to {sum}, not 1")));
            }
        }
        if let Some(c) = &category_counts {
            check_dims(c, g_count, k, "category counts")?;
            for g in 0..g_count {
                let n = population[g];
                let sum: f64 = c.row(g).iter().sum();
                if c.row(g).iter().any(|&v| !v.is_finite() || v < 0.0) {
                    return Err(bad(g, "category counts must be nonnegative".into()));
                }
                if (sum - n).abs() > tol * n.max(1.0) {
                    return Err(bad(g, format!("category counts sum to {sum}, population is {n}")));
                }
                for kk in 0..k {
                    if (c[(g, kk)] / n - shares[(g, kk)]).abs() > tol {
                        return Err(bad(g, format!("share of category {kk} disagrees with its count")));
                    }
                }
            }
        }
        if let Some(m) = &counts {
            if m.len() != g_count || m.iter().any(|row| row.len() != j) {
                return Err(Error::InvalidData("counts must be G x J".into()));
            }
        }
        let outcomes = match (outcomes, &counts) {
            (Some(y), _) => y,
            (None, Some(m)) => DMatrix::from_fn(g_count, j, |g, jj| m[g][jj] as f64 / population[g]),
            (None, None) => return Err(Error::MissingColumn("y_<outcome> or m_<outcome>".into())),
        };
        check_dims(&outcomes, g_count, j, "outcomes")?;
        if outcomes.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("outcome means must be finite".into()));
        }
        if let Some(m) = &counts {
            for g in 0..g_count {
                for jj in 0..j {
                    let implied = m[g][jj] as f64 / population[g];
                    if (implied - outcomes[(g, jj)]).abs() > tol {
                        return Err(bad(g, format!("mean of outcome {jj} disagrees with its count")));
                    }
                }
            }
        }
        let covariates = covariates.unwrap_or_else(|| DMatrix::zeros(g_count, 0));
        check_dims(&covariates, g_count, p, "covariates")?;
        if covariates.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("covariates must be finite and complete".into()));
        }
        Ok(Self {
            geos,
            category_names,
            outcome_names,
            covariate_names,
            shares,
            outcomes,
            counts,
            population,
            category_counts,
            covariates,
        })
    }

    pub fn n_geos(&self) -> usize {
        self.geos.len()
    }

    pub fn n_categories(&self) -> usize {
        self.category_names.len()
    }

    pub fn n_outcomes(&self) -> usize {
        self.outcome_names.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn geos(&self) -> &[String] {
        &self.geos
    }

    pub fn category_names(&self) -> &[String] {
        &self.category_names
    }

    pub fn outcome_names(&self) -> &[String] {
        &self.outcome_names
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// `G × K` shares `x̄_gk`.
    pub fn shares(&self) -> &DMatrix<f64> {
        &self.shares
    }

    /// `G × J` outcome means `ȳ_gj`.
    pub fn outcomes(&self) -> &DMatrix<f64> {
        &self.outcomes
    }

    pub fn outcome(&self, j: usize) -> Vec<f64> {
        self.outcomes.column(j).iter().copied().collect()
    }

    pub fn counts(&self) -> Option<&[Vec<u64>]> {
        self.counts.as_deref()
    }

    /// Population `N_g`.
    pub fn population(&self) -> &[f64] {
        &self.population
    }

    /// Category counts `N_gk`, either as given or implied by `x̄_gk · N_g`.
    pub fn category_counts(&self) -> DMatrix<f64> {
        match &self.category_counts {
            Some(c) => c.clone(),
            None => DMatrix::from_fn(self.n_geos(), self.n_categories(), |g, k| {
                self.shares[(g, k)] * self.population[g]
            }),
        }
    }

    pub fn has_category_counts(&self) -> bool {
        self.category_counts.is_some()
    }

    /// `G × p` covariates.
    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    pub fn covariate_index(&self, name: &str) -> Result<usize> {
        self.covariate_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::MissingCovariate(name.to_string()))
    }

    pub fn covariate(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.covariate_index(name)?;
        Ok(self.covariates.column(i).iter().copied().collect())
    }

    /// Returns a copy keeping only the named covariates, in the given order.
    pub fn select_covariates(&self, names: &[&str]) -> Result<Self> {
        let idx = names.iter().map(|n| self.covariate_index(n)).collect::<Result<Vec<_>>>()?;
        let mut out = self.clone();
        out.covariate_names = names.iter().map(|s| s.to_string()).collect();
        out.covariates = DMatrix::from_fn(self.n_geos(), idx.len(), |g, c| self.covariates[(g, idx[c])]);
        Ok(out)
    }

    /// Returns a copy with every covariate dropped.
    pub fn without_covariates(&self) -> Self {
        let mut out = self.clone();
        out.covariate_names.clear();
        out.covariates = DMatrix::zeros(self.n_geos(), 0);
        out
    }

    /// Returns a copy with covariate `name` set to `values`, appending it if new.
    pub fn with_covariate(&self, name: &str, values: &[f64]) -> Result<Self> {
        if values.len() != self.n_geos() {
            return Err(Error::InvalidData(format!("covariate `{name}` has wrong length")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("covariate `{name}` has non-finite entries")));
        }
        let mut out = self.clone();
        if let Some(p) = self.covariate_names.iter().position(|n| n == name) {
            for (g, &v) in values.iter().enumerate() {
                out.covariates[(g, p)] = v;
            }
            return Ok(out);
        }
        let p = self.n_covariates();
        out.covariates = self.covariates.clone().insert_column(p, 0.0);
        for (g, &v) in values.iter().enumerate() {
            out.covariates[(g, p)] = v;
        }
        out.covariate_names.push(name.to_string());
        Ok(out)
    }

    /// Returns a copy with outcomes scaled by `c` (counts are dropped).
    pub fn scale_outcomes(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.outcomes *= c;
        out.counts = None;
        out
    }

    /// Returns a copy with the geography rows duplicated `times` times.
    pub fn replicate(&self, times: usize) -> Self {
        let g_count = self.n_geos();
        let pick = |m: &DMatrix<f64>| DMatrix::from_fn(g_count * times, m.ncols(), |r, c| m[(r % g_count, c)]);
        Self {
            geos: (0..g_count * times).map(|r| format!("{}#{}", self.geos[r % g_count], r / g_count)).collect(),
            category_names: self.category_names.clone(),
            outcome_names: self.outcome_names.clone(),
            covariate_names: self.covariate_names.clone(),
            shares: pick(&self.shares),
            outcomes: pick(&self.outcomes),
            counts: self.counts.as_ref().map(|m| (0..g_count * times).map(|r| m[r % g_count].clone()).collect()),
            population: (0..g_count * times).map(|r| self.population[r % g_count]).collect(),
            category_counts: self.category_counts.as_ref().map(pick),
            covariates: pick(&self.covariates),
        }
    }

    /// Returns a copy whose outcome categories `from` are summed into `into` (counts required).
    pub fn merge_outcomes(&self, from: usize, into: usize) -> Result<Self> {
        let counts = self
            .counts
            .as_ref()
            .ok_or_else(|| Error::Unsupported("merging outcomes requires counts".into()))?;
        if from == into || from >= self.n_outcomes() || into >= self.n_outcomes() {
            return Err(Error::InvalidData("invalid outcome indices for merge".into()));
        }
        let merged: Vec<Vec<u64>> = counts
            .iter()
            .map(|row| {
                let mut r = row.clone();
                r[into] += r[from];
                r.remove(from);
                r
            })
            .collect();
        let mut names = self.outcome_names.clone();
        names.remove(from);
        Self::from_parts(
            TableParts {
                geos: self.geos.clone(),
                category_names: self.category_names.clone(),
                outcome_names: names,
                covariate_names: self.covariate_names.clone(),
                shares: Some(self.shares.clone()),
                outcomes: None,
                counts: Some(merged),
                population: self.population.clone(),
                category_counts: self.category_counts.clone(),
                covariates: Some(self.covariates.clone()),
            },
            INGEST_TOLERANCE,
        )
    }
}

fn check_dims(m: &DMatrix<f64>, rows: usize, cols: usize, what: &str) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::InvalidData(format!(
            "{what} is {}x{}, expected {rows}x{cols}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Collapses individual records into per-geography aggregates and the exact
/// local and global conditional means.
pub fn aggregate(micro: &MicroData) -> Result<(AggregateTable, GroundTruth)> {
    let k = micro.n_categories();
    let j = micro.n_outcomes();
    if k < 2 {
        return Err(Error::InvalidData("aggregation needs at least two categories".into()));
    }
    let g_count = micro.geographies.len();
    let index: std::collections::HashMap<&str, usize> =
        micro.geographies.iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect();

    let mut n_gk = vec![vec![0u64; k]; g_count];
    // sums[g][k][j]
    let mut sums = vec![vec![vec![0.0f64; j]; k]; g_count];
    for r in &micro.records {
        let g = index[r.geo.as_str()];
        n_gk[g][r.category] += 1;
        for (s, y) in sums[g][r.category].iter_mut().zip(&r.outcome) {
            *s += y;
        }
    }

    let population: Vec<f64> = n_gk.iter().map(|row| row.iter().sum::<u64>() as f64).collect();
    let category_counts = DMatrix::from_fn(g_count, k, |g, kk| n_gk[g][kk] as f64);
    let shares = DMatrix::from_fn(g_count, k, |g, kk| n_gk[g][kk] as f64 / population[g]);
    let outcomes = DMatrix::from_fn(g_count, j, |g, jj| {
        (0..k).map(|kk| sums[g][kk][jj]).sum::<f64>() / population[g]
    });
    let counts = (micro.kind == OutcomeKind::Categorical).then(|| {
        (0..g_count)
            .map(|g| (0..j).map(|jj| (0..k).map(|kk| sums[g][kk][jj]).sum::<f64>().round() as u64).collect())
            .collect()
    });

    let local: Vec<CellMeans> = (0..g_count)
        .map(|g| {
            CellMeans::new(
                (0..k)
                    .map(|kk| {
                        (n_gk[g][kk] > 0)
                            .then(|| sums[g][kk].iter().map(|s| s / n_gk[g][kk] as f64).collect())
                    })
                    .collect(),
            )
        })
        .collect();
    let category_totals: Vec<f64> =
        (0..k).map(|kk| (0..g_count).map(|g| n_gk[g][kk] as f64).sum()).collect();
    let global = CellMeans::new(
        (0..k)
            .map(|kk| {
                (category_totals[kk] > 0.0).then(|| {
                    (0..j)
                        .map(|jj| (0..g_count).map(|g| sums[g][kk][jj]).sum::<f64>() / category_totals[kk])
                        .collect()
                })
            })
            .collect(),
    );

    let table = AggregateTable::from_parts(
        TableParts {
            geos: micro.geographies.clone(),
            category_names: micro.category_names.clone(),
            outcome_names: micro.outcome_names.clone(),
            covariate_names: Vec::new(),
            shares: Some(shares),
            outcomes: Some(outcomes),
            counts,
            population,
            category_counts: Some(category_counts),
            covariates: None,
        },
        EXACT_TOLERANCE,
    )?;
    Ok((table, GroundTruth { global, local, category_totals }))
}

/// Largest `|ȳ_gj − Σ_k x̄_gk B_gjk|` over geographies and outcomes, skipping
/// undefined cells (whose share is zero).
pub fn identity_residual(table: &AggregateTable, truth: &GroundTruth) -> f64 {
    let mut worst: f64 = 0.0;
    for g in 0..table.n_geos() {
        for j in 0..table.n_outcomes() {
            let fitted: f64 = (0..table.n_categories())
                .filter_map(|k| truth.local[g].get(j, k).map(|b| table.shares()[(g, k)] * b))
                .sum();
            worst = worst.max((table.outcomes()[(g, j)] - fitted).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(geo: &str, category: usize, outcome: Vec<f64>) -> MicroRecord {
        MicroRecord { geo: geo.into(), category, outcome }
    }

    fn names(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn two_point_geography() {
        let micro = MicroData::new(
            names("c", 2),
            vec!["y".into()],
            OutcomeKind::Continuous,
            vec![rec("a", 0, vec![1.0]), rec("a", 1, vec![0.0])],
        )
        .unwrap();
        let (table, truth) = aggregate(&micro).unwrap();
        assert_eq!(table.shares().row(0).iter().copied().collect::<Vec<_>>(), vec![0.5, 0.5]);
        assert_eq!(table.outcomes()[(0, 0)], 0.5);
        assert_eq!(truth.local[0].get(0, 0), Some(1.0));
        assert_eq!(truth.local[0].get(0, 1), Some(0.0));
    }

    #[test]
    fn homogeneous_geography_pins_local_mean() {
        let micro = MicroData::new(
            names("c", 3),
            vec!["y".into()],
            OutcomeKind::Continuous,
            vec![rec("a", 1, vec![0.2]), rec("a", 1, vec![0.6]), rec("b", 0, vec![1.0])],
        )
        .unwrap();
        let (table, truth) = aggregate(&micro).unwrap();
        assert_eq!(table.shares()[(0, 1)], 1.0);
        assert_eq!(truth.local[0].get(0, 1), Some(table.outcomes()[(0, 0)]));
        assert_eq!(truth.local[0].column(0), None);
        assert_eq!(truth.local[0].column(2), None);
    }

    #[test]
    fn empty_declared_geography_is_rejected() {
        let err = MicroData::with_geographies(
            names("c", 2),
            vec!["y".into()],
            OutcomeKind::Continuous,
            vec!["a".into(), "ghost".into()],
            vec![rec("a", 0, vec![1.0])],
        )
        .unwrap_err();
        assert!(matches!(err, Error::EmptyGeography(ref g) if g == "ghost"));
    }

    #[test]
    fn non_one_hot_is_rejected() {
        let err = MicroData::new(
            names("c", 2),
            names("y", 2),
            OutcomeKind::Categorical,
            vec![rec("a", 0, vec![1.0, 1.0])],
        )
        .unwrap_err();
        assert!(matches!(err, Error::NotOneHot { row: 0 }));
    }

    #[test]
    fn category_out_of_range_names_row() {
        let err = MicroData::new(
            names("c", 2),
            vec!["y".into()],
            OutcomeKind::Continuous,
            vec![rec("a", 0, vec![1.0]), rec("a", 2, vec![0.0])],
        )
        .unwrap_err();
        assert!(matches!(err, Error::CategoryOutOfRange { row: 1, index: 2, k: 2 }));
    }

    #[test]
    fn categorical_counts_are_carried() {
        let micro = MicroData::new(
            names("c", 2),
            names("y", 2),
            OutcomeKind::Categorical,
            vec![rec("a", 0, vec![1.0, 0.0]), rec("a", 1, vec![0.0, 1.0]), rec("a", 1, vec![1.0, 0.0])],
        )
        .unwrap();
        let (table, _) = aggregate(&micro).unwrap();
        assert_eq!(table.counts().unwrap()[0], vec![2, 1]);
    }

    #[test]
    fn shares_must_sum_to_one() {
        let err = AggregateTable::from_parts(
            TableParts {
                geos: vec!["g1".into()],
                category_names: names("c", 2),
                outcome_names: vec!["y".into()],
                shares: Some(DMatrix::from_row_slice(1, 2, &[0.5, 0.502])),
                outcomes: Some(DMatrix::from_row_slice(1, 1, &[0.4])),
                population: vec![100.0],
                ..Default::default()
            },
            INGEST_TOLERANCE,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidGeography { ref geo, .. } if geo == "g1"));
    }
}
