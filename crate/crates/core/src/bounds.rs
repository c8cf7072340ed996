//! Duncan–Davis deterministic bounds on local and global conditional means.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::data::AggregateTable;
use crate::error::{Error, Result};
use crate::estimate::Interval;

/// Slack allowed when the outcome sits marginally outside the attainable range.
const FEASIBILITY_SLACK: f64 = 1e-9;

/// Bound on one local cell `B_gjk`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellBounds {
    pub lo: f64,
    pub hi: f64,
    /// The category is absent from the geography (`x̄_gk = 0`), so the data say nothing.
    pub vacuous: bool,
}

/// Local bounds for every geography and cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsSet {
    n_outcomes: usize,
    n_categories: usize,
    /// `[g][j * K + k]`
    cells: Vec<Vec<CellBounds>>,
}

impl BoundsSet {
    pub fn n_geos(&self) -> usize {
        self.cells.len()
    }

    pub fn n_outcomes(&self) -> usize {
        self.n_outcomes
    }

    pub fn n_categories(&self) -> usize {
        self.n_categories
    }

    pub fn get(&self, g: usize, j: usize, k: usize) -> CellBounds {
        self.cells[g][j * self.n_categories + k]
    }
}

/// How the per-cell global interval is formed from the local problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GlobalMethod {
    /// `N_gk`-weighted average of local endpoints.
    #[default]
    WeightedAverage,
    /// Optimize the weighted-mean functional over all local matrices jointly.
    Stacked,
}

/// Closed-form bounds on `b_k` given `Σ x_i b_i = y` and `b_i ∈ [lo, hi]`.
///
/// Valid for any number of categories: the remaining categories can jointly
/// contribute anything in `(1 − x_k)·[lo, hi]`.
pub fn closed_form(x_k: f64, y: f64, lo: f64, hi: f64) -> CellBounds {
    if x_k <= 0.0 {
        return CellBounds { lo, hi, vacuous: true };
    }
    let rest = 1.0 - x_k;
    let a = ((y - rest * hi) / x_k).max(lo);
    let b = ((y - rest * lo) / x_k).min(hi);
    CellBounds { lo: a.min(b), hi: b.max(a), vacuous: false }
}

/// Extreme values of `b_k` over `{b ∈ [lo, hi]^K : Σ x_i b_i = y}` by
/// enumerating the vertices of the polytope. Returns `None` when it is empty.
pub fn vertex_bounds(x: &[f64], y: f64, k: usize, lo: f64, hi: f64) -> Option<CellBounds> {
    if x[k] <= 0.0 {
        return Some(CellBounds { lo, hi, vacuous: true });
    }
    let active: Vec<usize> = (0..x.len()).filter(|&i| x[i] > 0.0).collect();
    let mut best: Option<(f64, f64)> = None;
    let mut record = |v: f64| {
        best = Some(match best {
            None => (v, v),
            Some((a, b)) => (a.min(v), b.max(v)),
        });
    };
    let m = active.len();
    let slack = FEASIBILITY_SLACK * (hi - lo).max(1.0);
    for (fi, &free) in active.iter().enumerate() {
        let others: Vec<usize> = active.iter().enumerate().filter(|(i, _)| *i != fi).map(|(_, &a)| a).collect();
        for mask in 0u64..(1u64 << (m - 1)) {
            let mut sum = 0.0;
            let mut value_k = None;
            for (bit, &i) in others.iter().enumerate() {
                let v = if mask >> bit & 1 == 1 { hi } else { lo };
                sum += x[i] * v;
                if i == k {
                    value_k = Some(v);
                }
            }
            let b_free = (y - sum) / x[free];
            if b_free < lo - slack || b_free > hi + slack {
                continue;
            }
            let b_free = b_free.clamp(lo, hi);
            record(if free == k { b_free } else { value_k.expect("k is active") });
        }
    }
    best.map(|(a, b)| CellBounds { lo: a, hi: b, vacuous: false })
}

fn outcome_range_check(table: &AggregateTable, g: usize, j: usize, lo: f64, hi: f64) -> Result<f64> {
    let y = table.outcomes()[(g, j)];
    let slack = FEASIBILITY_SLACK * (hi - lo).max(1.0);
    if y < lo - slack || y > hi + slack || !y.is_finite() {
        return Err(Error::InvalidGeography {
            geo: table.geos()[g].clone(),
            reason: format!("outcome {y} lies outside the range [{lo}, {hi}]"),
        });
    }
    Ok(y.clamp(lo, hi))
}

/// Local bounds for outcomes in `[0, 1]`.
pub fn local_bounds(table: &AggregateTable) -> Result<BoundsSet> {
    local_bounds_in(table, 0.0, 1.0)
}

/// Local bounds for outcomes known to lie in `[lo, hi]`. Uses the closed form
/// for two categories and vertex enumeration otherwise.
pub fn local_bounds_in(table: &AggregateTable, lo: f64, hi: f64) -> Result<BoundsSet> {
    let (kk, jj) = (table.n_categories(), table.n_outcomes());
    if kk > 20 {
        return Err(Error::Unsupported(format!("vertex enumeration with {kk} categories")));
    }
    let shares = table.shares();
    let cells = (0..table.n_geos())
        .into_par_iter()
        .map(|g| {
            let x: Vec<f64> = (0..kk).map(|k| shares[(g, k)]).collect();
            let mut row = Vec::with_capacity(jj * kk);
            for j in 0..jj {
                let y = outcome_range_check(table, g, j, lo, hi)?;
                for k in 0..kk {
                    let cell = if kk == 2 {
                        closed_form(x[k], y, lo, hi)
                    } else {
                        vertex_bounds(&x, y, k, lo, hi).ok_or_else(|| Error::InvalidGeography {
                            geo: table.geos()[g].clone(),
                            reason: "accounting identity has no solution inside the outcome range".into(),
                        })?
                    };
                    row.push(cell);
                }
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundsSet { n_outcomes: jj, n_categories: kk, cells })
}

/// Per-cell interval for the global mean `B_jk`, returned as `J × K` lower and upper matrices.
pub fn global_bounds(table: &AggregateTable, local: &BoundsSet, method: GlobalMethod) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (kk, jj) = (local.n_categories(), local.n_outcomes());
    let counts = table.category_counts();
    let mut lo = DMatrix::zeros(jj, kk);
    let mut hi = DMatrix::zeros(jj, kk);
    for k in 0..kk {
        let total: f64 = counts.column(k).sum();
        if total <= 0.0 {
            return Err(Error::EmptyCategory(k));
        }
        for j in 0..jj {
            let (mut a, mut b) = (0.0, 0.0);
            for g in 0..local.n_geos() {
                let w = counts[(g, k)];
                if w == 0.0 {
                    continue;
                }
                let cell = match method {
                    GlobalMethod::WeightedAverage => local.get(g, j, k),
                    GlobalMethod::Stacked => {
                        // The joint problem has no constraints linking geographies, so its
                        // optimum is attained geography by geography.
                        let x: Vec<f64> = (0..kk).map(|i| table.shares()[(g, i)]).collect();
                        let y = table.outcomes()[(g, j)].clamp(0.0, 1.0);
                        vertex_bounds(&x, y, k, 0.0, 1.0).unwrap_or(local.get(g, j, k))
                    }
                };
                a += w * cell.lo;
                b += w * cell.hi;
            }
            lo[(j, k)] = a / total;
            hi[(j, k)] = b / total;
        }
    }
    Ok((lo, hi))
}

/// Convenience accessor for the global interval of one cell.
pub fn global_interval(lo: &DMatrix<f64>, hi: &DMatrix<f64>, j: usize, k: usize) -> Interval {
    Interval::new(lo[(j, k)], hi[(j, k)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{TableParts, EXACT_TOLERANCE};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn table(shares: &[&[f64]], y: &[f64], n: &[f64]) -> AggregateTable {
        let g = shares.len();
        let k = shares[0].len();
        AggregateTable::from_parts(
            TableParts {
                geos: (0..g).map(|i| format!("g{i}")).collect(),
                category_names: (0..k).map(|i| format!("c{i}")).collect(),
                outcome_names: vec!["y".into()],
                shares: Some(DMatrix::from_fn(g, k, |r, c| shares[r][c])),
                outcomes: Some(DMatrix::from_fn(g, 1, |r, _| y[r])),
                population: n.to_vec(),
                ..Default::default()
            },
            EXACT_TOLERANCE,
        )
        .unwrap()
    }

    #[test]
    fn homogeneous_geography_is_exact() {
        let b = local_bounds(&table(&[&[1.0, 0.0]], &[0.7], &[10.0])).unwrap();
        let c0 = b.get(0, 0, 0);
        assert_relative_eq!(c0.lo, 0.7);
        assert_relative_eq!(c0.hi, 0.7);
        assert!(!c0.vacuous);
        let c1 = b.get(0, 0, 1);
        assert!(c1.vacuous);
        assert_eq!((c1.lo, c1.hi), (0.0, 1.0));
    }

    #[test]
    fn symmetric_point_is_uninformative() {
        let b = local_bounds(&table(&[&[0.5, 0.5]], &[0.5], &[10.0])).unwrap();
        for k in 0..2 {
            assert_eq!((b.get(0, 0, k).lo, b.get(0, 0, k).hi), (0.0, 1.0));
        }
    }

    #[test]
    fn matches_grid_search() {
        // Brute force over feasible (b1, b2) pairs at step 1e-4.
        let (x1, y) = (0.8, 0.9);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..=10_000 {
            let b2 = i as f64 * 1e-4;
            let b1 = (y - (1.0 - x1) * b2) / x1;
            if (0.0..=1.0).contains(&b1) {
                lo = lo.min(b1);
                hi = hi.max(b1);
            }
        }
        let b = local_bounds(&table(&[&[x1, 1.0 - x1]], &[y], &[10.0])).unwrap();
        assert_relative_eq!(lo, 0.875, epsilon = 1e-12);
        assert_relative_eq!(b.get(0, 0, 0).lo, lo, epsilon = 1e-9);
        assert_relative_eq!(b.get(0, 0, 0).hi, hi, epsilon = 1e-9);
        assert_relative_eq!(b.get(0, 0, 1).lo, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn global_is_weighted_average() {
        let t = table(&[&[0.5, 0.5], &[1.0, 0.0]], &[0.5, 0.5], &[10.0, 5.0]);
        let local = local_bounds(&t).unwrap();
        let (lo, hi) = global_bounds(&t, &local, GlobalMethod::WeightedAverage).unwrap();
        // Equal N_g0 = 5 in both geographies: [0,1] and [0.5,0.5].
        assert_relative_eq!(lo[(0, 0)], 0.25);
        assert_relative_eq!(hi[(0, 0)], 0.75);
        // Single geography: global equals local.
        let t = table(&[&[0.3, 0.7]], &[0.4], &[10.0]);
        let local = local_bounds(&t).unwrap();
        let (lo, hi) = global_bounds(&t, &local, GlobalMethod::WeightedAverage).unwrap();
        assert_relative_eq!(lo[(0, 1)], local.get(0, 0, 1).lo);
        assert_relative_eq!(hi[(0, 1)], local.get(0, 0, 1).hi);
    }

    #[test]
    fn empty_category_is_an_error() {
        let t = table(&[&[1.0, 0.0], &[1.0, 0.0]], &[0.5, 0.4], &[10.0, 5.0]);
        let local = local_bounds(&t).unwrap();
        assert!(matches!(global_bounds(&t, &local, GlobalMethod::WeightedAverage), Err(Error::EmptyCategory(1))));
    }

    #[test]
    fn outcome_outside_range_is_rejected() {
        let t = table(&[&[0.5, 0.5]], &[0.5], &[10.0]);
        assert!(local_bounds_in(&t, 0.6, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn two_category_closed_form_equals_vertex_lp(x1 in 0.0f64..=1.0, t in 0.0f64..=1.0) {
            let x = [x1, 1.0 - x1];
            for k in 0..2 {
                let c = closed_form(x[k], t, 0.0, 1.0);
                let v = vertex_bounds(&x, t, k, 0.0, 1.0).unwrap();
                prop_assert!((c.lo - v.lo).abs() < 1e-9 && (c.hi - v.hi).abs() < 1e-9);
            }
        }

        #[test]
        fn widening_the_range_widens_bounds(
            raw in proptest::collection::vec(0.01f64..1.0, 3),
            b in proptest::collection::vec(0.2f64..0.8, 3),
            widen in 0.0f64..0.2,
        ) {
            let s: f64 = raw.iter().sum();
            let x: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let y: f64 = x.iter().zip(&b).map(|(a, c)| a * c).sum();
            for k in 0..3 {
                let narrow = vertex_bounds(&x, y, k, 0.2, 0.8).unwrap();
                let wide = vertex_bounds(&x, y, k, 0.2 - widen, 0.8 + widen).unwrap();
                prop_assert!(wide.lo <= narrow.lo + 1e-12 && wide.hi >= narrow.hi - 1e-12);
                prop_assert!(narrow.lo <= b[k] + 1e-12 && b[k] <= narrow.hi + 1e-12);
            }
        }
    }
}
