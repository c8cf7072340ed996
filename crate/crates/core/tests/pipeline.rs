use ecoinf::bounds::local_bounds;
use ecoinf::goodman::{extended_goodman_fit, goodman_fit, GoodmanOptions};
use ecoinf::io::{read_aggregate, read_truth, write_aggregate, write_truth};
use ecoinf::semiparametric::{dml_estimate_all, BasisSpec, DmlOptions};
use ecoinf::sim::{evaluate, generate, Confounding, Method, ScenarioKind, ScenarioSpec};

#[test]
fn csv_round_trip_preserves_estimates() {
    let s = generate(&ScenarioSpec::new(ScenarioKind::C, 300, 11)).unwrap();
    let mut data = Vec::new();
    write_aggregate(&s.table, &mut data).unwrap();
    let back = read_aggregate(data.as_slice()).unwrap();
    let mut truth = Vec::new();
    write_truth(&s.table, &s.truth, &mut truth).unwrap();
    let truth_back = read_truth(&back, truth.as_slice()).unwrap();
    let a = goodman_fit(&s.table, GoodmanOptions::default()).unwrap();
    let b = goodman_fit(&back, GoodmanOptions::default()).unwrap();
    assert!((a.beta.clone() - b.beta).abs().max() < 1e-12);
    for j in 0..2 {
        for k in 0..2 {
            let (x, y) = (s.truth.global.get(j, k).unwrap(), truth_back.global.get(j, k).unwrap());
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn truth_lies_inside_bounds() {
    let s = generate(&ScenarioSpec::new(ScenarioKind::C, 200, 3)).unwrap();
    let b = local_bounds(&s.table).unwrap();
    for (g, local) in s.truth.local.iter().enumerate() {
        for j in 0..2 {
            for k in 0..2 {
                let v = local.get(j, k).unwrap();
                let c = b.get(g, j, k);
                assert!(c.lo - 1e-9 <= v && v <= c.hi + 1e-9, "g{g} ({j},{k}): {v} not in [{}, {}]", c.lo, c.hi);
            }
        }
    }
}

#[test]
fn covariate_adjustment_beats_goodman_under_confounding() {
    let mut spec = ScenarioSpec::new(ScenarioKind::C, 1000, 5);
    spec.confounding = Confounding::Linear;
    let s = generate(&spec).unwrap();
    let truth = s.truth.global.get(0, 0).unwrap();
    let naive = goodman_fit(&s.table, GoodmanOptions::default()).unwrap().beta[(0, 0)];
    let adjusted = extended_goodman_fit(&s.table, &["z"], GoodmanOptions::default()).unwrap().beta[(0, 0)];
    let (dml, _) = dml_estimate_all(&s.table, &BasisSpec::parse("z:spline(3)").unwrap(), &DmlOptions::default()).unwrap();
    assert!((naive - truth).abs() > 5.0 * (adjusted - truth).abs());
    assert!((dml.beta[(0, 0)] - truth).abs() < 0.02);
}

#[test]
fn evaluate_ranks_methods_on_confounded_data() {
    let s = generate(&ScenarioSpec::new(ScenarioKind::C, 500, 8)).unwrap();
    let methods = [Method::Goodman, Method::GoodmanZ(vec![]), Method::KingEm];
    let refs: Vec<&dyn ecoinf::sim::Estimator> = methods.iter().map(|m| m as &dyn ecoinf::sim::Estimator).collect();
    let report = evaluate(&refs, &s.table, &s.truth);
    assert!(report.failures.is_empty());
    let mae = |name: &str| report.summary(name).unwrap().1;
    assert!(mae("goodman-z") < mae("goodman"));
}
