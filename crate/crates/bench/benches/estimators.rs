use criterion::{criterion_group, criterion_main, Criterion};
use ecoinf::bounds::{global_bounds, local_bounds, GlobalMethod};
use ecoinf::goodman::{goodman_fit, GoodmanOptions};
use ecoinf::king::{king_mle, untruncated_em, EmOptions};
use ecoinf::rosen::{rosen_gibbs, RosenOptions};
use ecoinf::semiparametric::{dml_estimate_all, BasisSpec, DmlOptions};
use ecoinf::sim::{generate, ScenarioKind, ScenarioSpec, REFERENCE_SEED};
use ecoinf::AggregateTable;

fn table(kind: ScenarioKind, g: usize) -> AggregateTable {
    generate(&ScenarioSpec::new(kind, g, REFERENCE_SEED)).unwrap().table
}

fn goodman(c: &mut Criterion) {
    let t = table(ScenarioKind::A, 1000);
    c.bench_function("goodman/A/1000", |b| b.iter(|| goodman_fit(&t, GoodmanOptions::default()).unwrap()));
}

fn bounds(c: &mut Criterion) {
    let t = table(ScenarioKind::C, 1000);
    c.bench_function("bounds/local/C/1000", |b| b.iter(|| local_bounds(&t).unwrap()));
    let local = local_bounds(&t).unwrap();
    c.bench_function("bounds/global/C/1000", |b| b.iter(|| global_bounds(&t, &local, GlobalMethod::WeightedAverage).unwrap()));
}

fn dml(c: &mut Criterion) {
    let t = table(ScenarioKind::C, 1000);
    let spec = BasisSpec::parse("z1:spline(5)").unwrap();
    c.bench_function("dml/C/1000/spline5", |b| b.iter(|| dml_estimate_all(&t, &spec, &DmlOptions::default()).unwrap()));
}

fn king(c: &mut Criterion) {
    let mut g = c.benchmark_group("king");
    g.sample_size(10);
    let t = table(ScenarioKind::A, 200);
    g.bench_function("mle/A/200", |b| b.iter(|| king_mle(&t, 0).unwrap()));
    let c_table = table(ScenarioKind::C, 200);
    g.bench_function("em/C/200", |b| b.iter(|| untruncated_em(&c_table, 0, EmOptions::default()).unwrap()));
    g.finish();
}

fn rosen(c: &mut Criterion) {
    let mut g = c.benchmark_group("rosen");
    g.sample_size(10);
    let t = table(ScenarioKind::C, 200);
    let opts = RosenOptions { iters: 500, burnin: 100, chains: 1, ..RosenOptions::default() };
    g.bench_function("gibbs/C/200/600", |b| b.iter(|| rosen_gibbs(&t, opts).unwrap()));
    g.finish();
}

criterion_group!(benches, goodman, bounds, dml, king, rosen);
criterion_main!(benches);
