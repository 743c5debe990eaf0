use criterion::{criterion_group, criterion_main, Criterion};
use nicert_core::abstract_sem::explore;
use nicert_core::gen;
use nicert_core::oracle::{brute_force_ni, InputDomain};
use nicert_core::par;
use nicert_core::syntax::{extract_policy, parse, NIPolicy, Program};

fn batch() -> Vec<(Program, NIPolicy)> {
    gen::corpus(0, 64)
        .into_iter()
        .map(|(_, src)| {
            let p = parse(&src).unwrap();
            let pol = extract_policy(&p).unwrap();
            (p, pol)
        })
        .collect()
}

fn explore_states(b: &[(Program, NIPolicy)], parallel: bool) -> usize {
    let f = |(p, pol): &(Program, NIPolicy)| explore(p, pol).unwrap().0.nodes.len();
    let v = if parallel { par::map(b, f) } else { par::map_seq(b, f) };
    v.into_iter().sum()
}

fn oracle_runs(b: &[(Program, NIPolicy)], parallel: bool) -> usize {
    let f = |(p, pol): &(Program, NIPolicy)| brute_force_ni(p, pol, &InputDomain::int_range(p, -4, 5)).unwrap().runs;
    let v = if parallel { par::map(b, f) } else { par::map_seq(b, f) };
    v.into_iter().sum()
}

fn bench(c: &mut Criterion) {
    let b = batch();
    // the sequential variant also pins nested parallel loops to one thread
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let mut g = c.benchmark_group("explore_batch");
    g.bench_function("sequential", |x| x.iter(|| single.install(|| explore_states(&b, false))));
    g.bench_function("parallel", |x| x.iter(|| explore_states(&b, true)));
    g.finish();
    let mut g = c.benchmark_group("oracle_batch");
    g.bench_function("sequential", |x| x.iter(|| single.install(|| oracle_runs(&b, false))));
    g.bench_function("parallel", |x| x.iter(|| oracle_runs(&b, true)));
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
