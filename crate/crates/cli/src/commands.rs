use std::fs::File;
use std::path::Path;

use serde::Serialize;

use ecoinf::bounds::{global_bounds, local_bounds, GlobalMethod};
use ecoinf::goodman::{diagnostics, extended_goodman_fit, fit_interacted, fit_shares, goodman_fit, GoodmanOptions};
use ecoinf::io::{read_aggregate, read_truth, write_aggregate, write_truth};
use ecoinf::king::{king_em_estimate, king_estimate, EmOptions, KingOptions, DEFAULT_BURNIN};
use ecoinf::rosen::{rosen_gibbs, RosenOptions};
use ecoinf::semiparametric::{dml_estimate_all, BasisSpec, DmlOptions, DmlResult};
use ecoinf::sim::{generate, score, Confounding, Estimator, Method, MethodFailure, MetricReport, ScenarioKind, ScenarioSpec};
use ecoinf::{AggregateTable, EstimateSet};

use crate::args::*;
use crate::error::CliError;
use crate::output::Run;

fn load(path: &Path) -> Result<AggregateTable, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(read_aggregate(file)?)
}

fn parse_basis(spec: Option<&str>, table: &AggregateTable) -> Result<BasisSpec, CliError> {
    let spec = match spec {
        Some(s) => BasisSpec::parse(s)?,
        None => {
            let names: Vec<&str> = table.covariate_names().iter().map(String::as_str).collect();
            BasisSpec::linear(&names)
        }
    };
    for name in spec.covariates() {
        table.covariate_index(&name)?;
    }
    Ok(spec)
}

#[derive(Serialize)]
struct EstimateRow<'a> {
    predictor: &'a str,
    outcome: &'a str,
    estimate: f64,
    se: f64,
    ci_lo: f64,
    ci_hi: f64,
}

#[derive(Serialize)]
struct QuantileRow<'a> {
    predictor: &'a str,
    outcome: &'a str,
    prob: f64,
    value: f64,
}

#[derive(Serialize)]
struct LocalRow<'a> {
    geo: &'a str,
    predictor: &'a str,
    outcome: &'a str,
    estimate: f64,
}

#[derive(Serialize)]
struct ScoreRow<'a> {
    geo: &'a str,
    predictor: &'a str,
    outcome: &'a str,
    score: f64,
}

fn estimate_rows(est: &EstimateSet) -> Vec<EstimateRow<'_>> {
    let mut rows = Vec::new();
    for k in 0..est.n_categories() {
        for j in 0..est.n_outcomes() {
            let ci = est.interval(j, k);
            rows.push(EstimateRow {
                predictor: &est.category_names[k],
                outcome: &est.outcome_names[j],
                estimate: est.beta[(j, k)],
                se: est.se[(j, k)],
                ci_lo: ci.lo,
                ci_hi: ci.hi,
            });
        }
    }
    rows
}

pub fn estimate(args: &EstimateArgs) -> Result<(), CliError> {
    let table = load(&args.common.data)?;
    let gopts = GoodmanOptions { weighted: args.weighted };
    let mut dml_results: Vec<DmlResult> = Vec::new();
    let est = match args.method {
        MethodName::Goodman => goodman_fit(&table, gopts)?,
        MethodName::GoodmanZ => {
            let names: Vec<&str> = if args.covariates.is_empty() {
                table.covariate_names().iter().map(String::as_str).collect()
            } else {
                args.covariates.iter().map(String::as_str).collect()
            };
            extended_goodman_fit(&table, &names, gopts)?
        }
        MethodName::Dml => {
            let spec = parse_basis(args.basis.as_deref(), &table)?;
            let bounded = match args.bounds.as_deref() {
                None => false,
                Some(b) if b.replace(' ', "") == "0,1" => true,
                Some(b) => return Err(CliError::usage(format!("--bounds accepts only `0,1`, got `{b}`"))),
            };
            let lambda = match args.lambda.as_str() {
                "auto" => None,
                v => Some(v.parse::<f64>().ok().filter(|l| *l >= 0.0).ok_or_else(|| CliError::usage(format!("--lambda must be `auto` or a non-negative number, got `{v}`")))?),
            };
            let (est, results) = dml_estimate_all(&table, &spec, &DmlOptions { lambda, riesz_lambda: None, bounded })?;
            dml_results = results;
            est
        }
        MethodName::King => {
            let opts = KingOptions { draws: args.draws, burnin: args.burnin.unwrap_or(DEFAULT_BURNIN), seed: args.seed, local: args.local };
            king_estimate(&table, opts)?.0
        }
        MethodName::KingEm => king_em_estimate(&table, EmOptions::default())?.0,
        MethodName::Rosen => {
            let opts = RosenOptions { iters: args.iters, burnin: args.burnin.unwrap_or(1000), chains: args.chains, seed: args.seed, ..Default::default() };
            rosen_gibbs(&table, opts)?.estimate
        }
    };
    for w in &est.warnings {
        log::warn!("{w}");
    }
    let mut run = Run::new(&args.common.out, args.common.format, args.seed, &serde_json::json!({ "command": "estimate", "args": args }))?;
    run.table("estimates", &estimate_rows(&est))?;
    if !est.quantiles.is_empty() {
        let mut rows = Vec::new();
        for k in 0..est.n_categories() {
            for j in 0..est.n_outcomes() {
                for q in &est.quantiles {
                    rows.push(QuantileRow { predictor: &est.category_names[k], outcome: &est.outcome_names[j], prob: q.prob, value: q.values[(j, k)] });
                }
            }
        }
        run.table("quantiles", &rows)?;
    }
    if args.local {
        if let Some(local) = &est.local {
            let mut rows = Vec::new();
            for (g, m) in local.iter().enumerate() {
                for k in 0..est.n_categories() {
                    for j in 0..est.n_outcomes() {
                        rows.push(LocalRow { geo: &table.geos()[g], predictor: &est.category_names[k], outcome: &est.outcome_names[j], estimate: m[(j, k)] });
                    }
                }
            }
            run.table("local", &rows)?;
        } else {
            log::warn!("method {:?} has no per-geography estimates", args.method);
        }
    }
    if args.scores && !dml_results.is_empty() {
        let mut rows = Vec::new();
        for r in &dml_results {
            for (g, s) in r.scores.iter().enumerate() {
                rows.push(ScoreRow { geo: &table.geos()[g], predictor: &est.category_names[r.category], outcome: &est.outcome_names[r.outcome], score: *s });
            }
        }
        run.table("scores", &rows)?;
    }
    run.commit()?;
    Ok(())
}

#[derive(Serialize)]
struct BoundsRow<'a> {
    geo: &'a str,
    outcome: &'a str,
    category: &'a str,
    lo: f64,
    hi: f64,
    vacuous_flag: bool,
}

#[derive(Serialize)]
struct GlobalBoundsRow<'a> {
    outcome: &'a str,
    category: &'a str,
    lo: f64,
    hi: f64,
}

pub fn bounds(args: &BoundsArgs) -> Result<(), CliError> {
    let table = load(&args.common.data)?;
    let local = local_bounds(&table)?;
    let method = match args.global {
        GlobalBounds::Weighted => GlobalMethod::WeightedAverage,
        GlobalBounds::Stacked => GlobalMethod::Stacked,
    };
    let global = match global_bounds(&table, &local, method) {
        Ok(b) => Some(b),
        Err(e) => {
            log::warn!("global bounds skipped: {e}");
            None
        }
    };
    let mut rows = Vec::new();
    for g in 0..table.n_geos() {
        for k in 0..table.n_categories() {
            for j in 0..table.n_outcomes() {
                let c = local.get(g, j, k);
                rows.push(BoundsRow {
                    geo: &table.geos()[g],
                    outcome: &table.outcome_names()[j],
                    category: &table.category_names()[k],
                    lo: c.lo,
                    hi: c.hi,
                    vacuous_flag: c.vacuous,
                });
            }
        }
    }
    let mut run = Run::new(&args.common.out, args.common.format, 0, &serde_json::json!({ "command": "bounds", "data": args.common.data, "global": args.global, "format": args.common.format }))?;
    run.table("bounds", &rows)?;
    if let Some((lo, hi)) = &global {
        let mut grows = Vec::new();
        for k in 0..table.n_categories() {
            for j in 0..table.n_outcomes() {
                if lo[(j, k)].is_finite() {
                    grows.push(GlobalBoundsRow { outcome: &table.outcome_names()[j], category: &table.category_names()[k], lo: lo[(j, k)], hi: hi[(j, k)] });
                }
            }
        }
        run.table("global_bounds", &grows)?;
    }
    run.commit()?;
    Ok(())
}

#[derive(Serialize)]
struct DiagnosticRow<'a> {
    geo: &'a str,
    outcome: &'a str,
    leverage: f64,
    studentized_residual: f64,
    cooks_distance: f64,
}

#[derive(Serialize)]
struct GapRow<'a> {
    category: &'a str,
    max_share: f64,
    extrapolation_gap: f64,
}

pub fn diagnose(args: &DiagnoseArgs) -> Result<(), CliError> {
    let table = load(&args.common.data)?;
    let opts = GoodmanOptions { weighted: args.weighted };
    let fit = if args.covariates.is_empty() {
        fit_shares(&table, opts)?
    } else {
        let names: Vec<&str> = args.covariates.iter().map(String::as_str).collect();
        fit_interacted(&table, &names, opts)?
    };
    let mut rows = Vec::new();
    let mut gaps = Vec::new();
    for j in 0..table.n_outcomes() {
        let d = diagnostics(&fit, &table, j);
        for g in 0..table.n_geos() {
            rows.push(DiagnosticRow {
                geo: &table.geos()[g],
                outcome: &table.outcome_names()[j],
                leverage: d.leverage[g],
                studentized_residual: d.studentized_residual[g],
                cooks_distance: d.cooks_distance[g],
            });
        }
        if j == 0 {
            for (k, gap) in d.extrapolation_gap.iter().enumerate() {
                gaps.push(GapRow { category: &table.category_names()[k], max_share: 1.0 - gap, extrapolation_gap: *gap });
            }
        }
    }
    let mut run = Run::new(
        &args.common.out,
        args.common.format,
        0,
        &serde_json::json!({ "command": "diagnose", "data": args.common.data, "covariates": args.covariates, "weighted": args.weighted, "format": args.common.format }),
    )?;
    run.table("diagnostics", &rows)?;
    run.table("extrapolation", &gaps)?;
    run.commit()?;
    Ok(())
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let kind = match args.scenario {
        ScenarioName::A => ScenarioKind::A,
        ScenarioName::B => ScenarioKind::B,
        ScenarioName::C => ScenarioKind::C,
        ScenarioName::D => ScenarioKind::D,
    };
    let spec = ScenarioSpec {
        kind,
        geographies: args.geographies,
        seed: args.seed,
        confounding: match args.confounding {
            ConfoundingName::Logistic => Confounding::Logistic,
            ConfoundingName::Linear => Confounding::Linear,
        },
        local_noise: args.noise,
    };
    let s = generate(&spec)?;
    let mut data = Vec::new();
    write_aggregate(&s.table, &mut data)?;
    let mut truth = Vec::new();
    write_truth(&s.table, &s.truth, &mut truth)?;
    let mut run = Run::new(&args.out, Format::Csv, args.seed, &serde_json::json!({ "command": "simulate", "spec": spec }))?;
    run.raw_csv("data.csv", data);
    run.raw_csv("truth.csv", truth);
    run.commit()?;
    Ok(())
}

#[derive(Serialize)]
struct LongRow<'a> {
    method: &'a str,
    outcome: &'a str,
    category: &'a str,
    estimate: f64,
    truth: f64,
    ci_lo: f64,
    ci_hi: f64,
}

pub fn validate(args: &ValidateArgs) -> Result<(), CliError> {
    let table = load(&args.common.data)?;
    let truth = {
        let file = File::open(&args.truth).map_err(|e| CliError::io(&args.truth, e))?;
        read_truth(&table, file)?
    };
    let basis = match &args.basis {
        Some(b) => Some(parse_basis(Some(b), &table)?),
        None => None,
    };
    let methods: Vec<Method> = args
        .methods
        .iter()
        .map(|m| {
            let name = serde_json::to_value(m).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            Method::from_name(&name, basis.as_ref(), args.seed)
        })
        .collect::<Result<_, _>>()?;
    let mut report = MetricReport::default();
    let mut estimates: Vec<(String, EstimateSet)> = Vec::new();
    for m in &methods {
        match m.estimate(&table) {
            Ok(est) => {
                report.cells.extend(score(&est, &truth));
                estimates.push((m.name(), est));
            }
            Err(e) => {
                log::warn!("method {} failed: {e}", m.name());
                report.failures.push(MethodFailure { method: m.name(), message: e.to_string() });
            }
        }
    }
    let mut long = Vec::new();
    for (name, est) in &estimates {
        for k in 0..est.n_categories() {
            for j in 0..est.n_outcomes() {
                let Some(t) = truth.global.get(j, k) else { continue };
                let ci = est.interval(j, k);
                long.push(LongRow {
                    method: name,
                    outcome: &est.outcome_names[j],
                    category: &est.category_names[k],
                    estimate: est.beta[(j, k)],
                    truth: t,
                    ci_lo: ci.lo,
                    ci_hi: ci.hi,
                });
            }
        }
    }
    let mut run = Run::new(
        &args.common.out,
        args.common.format,
        args.seed,
        &serde_json::json!({ "command": "validate", "data": args.common.data, "truth": args.truth, "methods": args.methods, "basis": args.basis, "format": args.common.format }),
    )?;
    run.table("metrics", &report.cells)?;
    run.table("estimates_long", &long)?;
    run.table("failures", &report.failures)?;
    run.commit()?;
    Ok(())
}
