//! Covariate basis expansion and its full interaction with category shares.
//!
//! Grammar: comma-separated terms, each one of
//!
//! - `z` or `z:identity`: the covariate itself
//! - `z:poly(d)` / `z:polynomial(d)`: `z, z², …, z^d`
//! - `z:spline(n)`: cubic truncated-power spline with `n` interior quantile knots
//! - `z:spline(0.2;0.5)`: the same with explicit knots
//! - `z:bins(n)`: indicators of quantile bins `2..n` (bin 1 is absorbed by the constant)
//! - `a*b`: the product of two covariates
//!
//! A constant column is always the first basis function.

use nalgebra::DMatrix;

use crate::data::AggregateTable;
use crate::error::{Error, Result};
use crate::linalg::quantile;

#[derive(Debug, Clone, PartialEq)]
pub enum Transform {
    Identity,
    Polynomial(usize),
    SplineCount(usize),
    SplineKnots(Vec<f64>),
    Bins(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Covariate { name: String, transform: Transform },
    Interaction(String, String),
}

/// Parsed basis specification, not yet tied to data.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BasisSpec {
    pub terms: Vec<Term>,
}

fn syntax(spec: &str, reason: impl Into<String>) -> Error {
    Error::BasisSyntax { spec: spec.to_string(), reason: reason.into() }
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '.' || c == '-')
}

impl BasisSpec {
    /// The constant-only basis.
    pub fn constant() -> Self {
        Self::default()
    }

    /// `identity` on each named covariate.
    pub fn linear(names: &[&str]) -> Self {
        Self {
            terms: names
                .iter()
                .map(|n| Term::Covariate { name: n.to_string(), transform: Transform::Identity })
                .collect(),
        }
    }

    pub fn parse(spec: &str) -> Result<Self> {
        let mut terms = Vec::new();
        let trimmed = spec.trim();
        if trimmed.is_empty() {
            return Ok(Self::default());
        }
        for raw in trimmed.split(',') {
            let term = raw.trim();
            if term.is_empty() {
                return Err(syntax(spec, "empty term"));
            }
            if let Some((a, b)) = term.split_once('*') {
                let (a, b) = (a.trim(), b.trim());
                if !valid_name(a) || !valid_name(b) {
                    return Err(syntax(spec, format!("bad interaction `{term}`")));
                }
                terms.push(Term::Interaction(a.to_string(), b.to_string()));
                continue;
            }
            let (name, transform) = match term.split_once(':') {
                None => (term, Transform::Identity),
                Some((name, t)) => (name.trim(), parse_transform(spec, t.trim())?),
            };
            if !valid_name(name) {
                return Err(syntax(spec, format!("bad covariate name `{name}`")));
            }
            terms.push(Term::Covariate { name: name.to_string(), transform });
        }
        Ok(Self { terms })
    }

    /// Covariates the spec refers to, in order of first use.
    pub fn covariates(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut push = |n: &str| {
            if !out.iter().any(|o| o == n) {
                out.push(n.to_string());
            }
        };
        for t in &self.terms {
            match t {
                Term::Covariate { name, .. } => push(name),
                Term::Interaction(a, b) => {
                    push(a);
                    push(b);
                }
            }
        }
        out
    }
}

fn parse_transform(spec: &str, t: &str) -> Result<Transform> {
    if t == "identity" || t == "linear" {
        return Ok(Transform::Identity);
    }
    let (head, arg) = t
        .strip_suffix(')')
        .and_then(|s| s.split_once('('))
        .ok_or_else(|| syntax(spec, format!("expected `name(arg)`, found `{t}`")))?;
    let arg = arg.trim();
    let count = || -> Result<usize> {
        match arg.parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(syntax(spec, format!("`{head}` needs a positive integer, found `{arg}`"))),
        }
    };
    match head.trim() {
        "poly" | "polynomial" => Ok(Transform::Polynomial(count()?)),
        "bins" => {
            let n = count()?;
            if n < 2 {
                return Err(syntax(spec, "bins needs at least 2 bins"));
            }
            Ok(Transform::Bins(n))
        }
        "spline" => {
            if !arg.contains(';') && !arg.contains('.') {
                return Ok(Transform::SplineCount(count()?));
            }
            let knots = arg
                .split(';')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| syntax(spec, format!("bad knot list `{arg}`")))?;
            if knots.iter().any(|k| !k.is_finite()) {
                return Err(syntax(spec, "knots must be finite"));
            }
            Ok(Transform::SplineKnots(knots))
        }
        other => Err(syntax(spec, format!("unknown transform `{other}`"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Resolved {
    Power { cov: usize, power: i32 },
    Hinge { cov: usize, knot: f64 },
    Bin { cov: usize, lo: f64, hi: f64, last: bool },
    Product(usize, usize),
}

/// A basis specification resolved against data: knots and bin edges fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    /// Covariate names in the order [`Basis::evaluate`] expects them.
    pub covariates: Vec<String>,
    pub labels: Vec<String>,
    functions: Vec<Resolved>,
}

impl Basis {
    pub fn resolve(spec: &BasisSpec, table: &AggregateTable) -> Result<Self> {
        let covariates = spec.covariates();
        let data: Vec<Vec<f64>> = covariates.iter().map(|n| table.covariate(n)).collect::<Result<_>>()?;
        let mut labels = vec!["1".to_string()];
        let mut functions = Vec::new();
        let index = |n: &str| covariates.iter().position(|c| c == n).expect("collected above");
        for term in &spec.terms {
            match term {
                Term::Interaction(a, b) => {
                    functions.push(Resolved::Product(index(a), index(b)));
                    labels.push(format!("{a}*{b}"));
                }
                Term::Covariate { name, transform } => {
                    let cov = index(name);
                    let z = &data[cov];
                    let lo = z.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    match transform {
                        Transform::Identity => {
                            functions.push(Resolved::Power { cov, power: 1 });
                            labels.push(name.clone());
                        }
                        Transform::Polynomial(d) => {
                            for p in 1..=*d as i32 {
                                functions.push(Resolved::Power { cov, power: p });
                                labels.push(if p == 1 { name.clone() } else { format!("{name}^{p}") });
                            }
                        }
                        Transform::SplineCount(_) | Transform::SplineKnots(_) => {
                            let knots = match transform {
                                Transform::SplineCount(n) => {
                                    (1..=*n).map(|i| quantile(z, i as f64 / (*n + 1) as f64)).collect()
                                }
                                Transform::SplineKnots(k) => k.clone(),
                                _ => unreachable!(),
                            };
                            for &knot in &knots {
                                if !(knot > lo && knot < hi) {
                                    return Err(Error::KnotOutOfRange { covariate: name.clone(), knot, lo, hi });
                                }
                            }
                            for p in 1..=3 {
                                functions.push(Resolved::Power { cov, power: p });
                                labels.push(if p == 1 { name.clone() } else { format!("{name}^{p}") });
                            }
                            for (i, &knot) in knots.iter().enumerate() {
                                functions.push(Resolved::Hinge { cov, knot });
                                labels.push(format!("{name}:knot{}", i + 1));
                            }
                        }
                        Transform::Bins(n) => {
                            let edges: Vec<f64> = (0..=*n).map(|i| quantile(z, i as f64 / *n as f64)).collect();
                            for b in 1..*n {
                                functions.push(Resolved::Bin { cov, lo: edges[b], hi: edges[b + 1], last: b + 1 == *n });
                                labels.push(format!("{name}:bin{}", b + 1));
                            }
                        }
                    }
                }
            }
        }
        Ok(Self { covariates, labels, functions })
    }

    /// Number of basis functions `d`, including the constant.
    pub fn dim(&self) -> usize {
        self.functions.len() + 1
    }

    /// Basis functions at covariate values `z` (ordered as [`Basis::covariates`]).
    pub fn evaluate(&self, z: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        out.push(1.0);
        for f in &self.functions {
            out.push(match *f {
                Resolved::Power { cov, power } => z[cov].powi(power),
                Resolved::Hinge { cov, knot } => (z[cov] - knot).max(0.0).powi(3),
                Resolved::Bin { cov, lo, hi, last } => {
                    if z[cov] >= lo && (z[cov] < hi || last) {
                        1.0
                    } else {
                        0.0
                    }
                }
                Resolved::Product(a, b) => z[a] * z[b],
            });
        }
        out
    }

    /// The `G × d` matrix `Φ(Z)`.
    pub fn matrix(&self, table: &AggregateTable) -> Result<DMatrix<f64>> {
        let idx: Vec<usize> = self.covariates.iter().map(|n| table.covariate_index(n)).collect::<Result<_>>()?;
        let z = table.covariates();
        let rows: Vec<Vec<f64>> = (0..table.n_geos())
            .map(|g| {
                let zg: Vec<f64> = idx.iter().map(|&i| z[(g, i)]).collect();
                self.evaluate(&zg)
            })
            .collect();
        Ok(DMatrix::from_fn(table.n_geos(), self.dim(), |g, c| rows[g][c]))
    }
}

/// Shares fully interacted with the basis: column `k·d + l` is `x̄_k · φ_l(z)`.
#[derive(Debug, Clone)]
pub struct InteractedDesign {
    pub basis: Basis,
    /// `G × d` basis matrix.
    pub phi: DMatrix<f64>,
    /// `G × K·d` design.
    pub matrix: DMatrix<f64>,
    pub labels: Vec<String>,
    pub n_categories: usize,
}

impl InteractedDesign {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Column mask, `true` for penalized columns: everything except the bare shares.
    pub fn penalty_mask(&self) -> Vec<bool> {
        let d = self.dim();
        (0..self.matrix.ncols()).map(|c| c % d != 0).collect()
    }

    /// Design row of geography `g` with its shares replaced by the one-hot vector of `k`.
    pub fn counterfactual_row(&self, g: usize, k: usize) -> Vec<f64> {
        let d = self.dim();
        let mut row = vec![0.0; self.matrix.ncols()];
        for l in 0..d {
            row[k * d + l] = self.phi[(g, l)];
        }
        row
    }

    /// `G × K·d` matrix of counterfactual rows for category `k`.
    pub fn counterfactual_matrix(&self, k: usize) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(self.phi.nrows(), self.matrix.ncols(), |g, c| if c / d == k { self.phi[(g, c % d)] } else { 0.0 })
    }
}

pub fn expand_basis(table: &AggregateTable, spec: &BasisSpec) -> Result<InteractedDesign> {
    let basis = Basis::resolve(spec, table)?;
    let phi = basis.matrix(table)?;
    let (g_count, d) = phi.shape();
    let kk = table.n_categories();
    let shares = table.shares();
    let matrix = DMatrix::from_fn(g_count, kk * d, |g, c| shares[(g, c / d)] * phi[(g, c % d)]);
    let mut labels = Vec::with_capacity(kk * d);
    for cat in table.category_names() {
        for l in &basis.labels {
            labels.push(if l == "1" { format!("x_{cat}") } else { format!("x_{cat}:{l}") });
        }
    }
    Ok(InteractedDesign { basis, phi, matrix, labels, n_categories: kk })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{TableParts, EXACT_TOLERANCE};

    fn table(kk: usize, p: usize) -> AggregateTable {
        let g = 30;
        AggregateTable::from_parts(
            TableParts {
                geos: (0..g).map(|i| format!("g{i}")).collect(),
                category_names: (0..kk).map(|i| format!("c{i}")).collect(),
                outcome_names: vec!["y".into()],
                covariate_names: (1..=p).map(|i| format!("z{i}")).collect(),
                shares: Some(DMatrix::from_fn(g, kk, |_, _| 1.0 / kk as f64)),
                outcomes: Some(DMatrix::from_element(g, 1, 0.5)),
                population: vec![100.0; g],
                covariates: Some(DMatrix::from_fn(g, p, |r, c| ((r * 7 + c * 3) % 30) as f64 / 29.0)),
                ..Default::default()
            },
            EXACT_TOLERANCE,
        )
        .unwrap()
    }

    #[test]
    fn column_counts() {
        let d = expand_basis(&table(2, 1), &BasisSpec::parse("z1").unwrap()).unwrap();
        assert_eq!(d.labels, vec!["x_c0", "x_c0:z1", "x_c1", "x_c1:z1"]);
        let d = expand_basis(&table(2, 1), &BasisSpec::parse("z1:bins(5)").unwrap()).unwrap();
        assert_eq!(d.matrix.ncols(), 10);
        let d = expand_basis(&table(3, 2), &BasisSpec::parse("z1:poly(2),z2:poly(2)").unwrap()).unwrap();
        assert_eq!(d.matrix.ncols(), 15);
        let d = expand_basis(&table(2, 2), &BasisSpec::parse("z1:spline(3), z1*z2").unwrap()).unwrap();
        assert_eq!(d.dim(), 1 + 3 + 3 + 1);
    }

    #[test]
    fn bins_partition_the_data() {
        let t = table(2, 1);
        let d = expand_basis(&t, &BasisSpec::parse("z1:bins(5)").unwrap()).unwrap();
        let counts: Vec<f64> = (1..5).map(|c| d.phi.column(c).sum()).collect();
        for row in 0..30 {
            assert!(d.phi.row(row).iter().skip(1).sum::<f64>() <= 1.0);
        }
        assert_eq!(counts.iter().sum::<f64>(), 24.0);
    }

    #[test]
    fn grammar_errors() {
        for bad in ["z1:spline", "z1:bins(x)", "z1:foo(3)", "z1,,z2", "z1:poly(0)", "*z2", "z1:bins(1)"] {
            assert!(matches!(BasisSpec::parse(bad), Err(Error::BasisSyntax { .. })), "{bad}");
        }
        let spec = BasisSpec::parse("z1:spline(0.2;0.5)").unwrap();
        assert_eq!(spec.terms[0], Term::Covariate { name: "z1".into(), transform: Transform::SplineKnots(vec![0.2, 0.5]) });
    }

    #[test]
    fn knot_outside_range() {
        let spec = BasisSpec::parse("z1:spline(0.5;1.5)").unwrap();
        assert!(matches!(expand_basis(&table(2, 1), &spec), Err(Error::KnotOutOfRange { .. })));
    }

    #[test]
    fn unknown_covariate() {
        let spec = BasisSpec::parse("z9:bins(5)").unwrap();
        assert!(matches!(expand_basis(&table(2, 1), &spec), Err(Error::MissingCovariate(_))));
    }
}
