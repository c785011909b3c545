//! Criterion benchmarks for the sampler's hot paths.

use std::hint::black_box;

use criterion::{BenchmarkId, Criterion, Throughput};
use qpyramid::likelihood::{factorized_log_lik, log_lik};
use qpyramid::prior::{log_prior_density, sample_prior};
use qpyramid::sampler::{chain_rng, empirical_init, mh_sweep, ChainState};
use qpyramid::{Dataset, LikelihoodKind, PriorSpec, Reference};

fn data(n: usize) -> Dataset {
    Dataset::new(Reference::Square.sample_n(n, &mut chain_rng(1, 0))).unwrap()
}

pub fn sweep(c: &mut Criterion) {
    let mut g = c.benchmark_group("mh_sweep");
    let d = data(2000);
    for m in [3u32, 5, 7] {
        let spec = PriorSpec::parse("beta:c=2.5", m).unwrap();
        for kind in [LikelihoodKind::Interp, LikelihoodKind::Substitute] {
            let q = empirical_init(&d, m).unwrap();
            let mut state = ChainState::new(&q, &d, &spec, kind).unwrap();
            let mut rng = chain_rng(2, 0);
            g.throughput(Throughput::Elements((1u64 << m) - 1));
            g.bench_function(BenchmarkId::new(kind.to_string(), 1usize << m), |b| {
                b.iter(|| mh_sweep(&mut state, &d, &spec, kind, &mut rng))
            });
        }
    }
    g.finish();
}

pub fn likelihood(c: &mut Criterion) {
    let mut g = c.benchmark_group("likelihood");
    let spec = PriorSpec::parse("beta:c=2.5", 6).unwrap();
    let q = sample_prior(&spec, &mut chain_rng(3, 0)).unwrap();
    for n in [100usize, 10_000] {
        let d = data(n);
        g.throughput(Throughput::Elements(n as u64));
        for kind in [LikelihoodKind::Interp, LikelihoodKind::Substitute] {
            g.bench_function(BenchmarkId::new(format!("direct/{kind}"), n), |b| {
                b.iter(|| log_lik(black_box(&d), black_box(&q), kind).unwrap())
            });
            g.bench_function(BenchmarkId::new(format!("factorized/{kind}"), n), |b| {
                b.iter(|| factorized_log_lik(black_box(&d), black_box(&q), kind).unwrap())
            });
        }
    }
    g.finish();
}

pub fn prior(c: &mut Criterion) {
    let mut g = c.benchmark_group("prior");
    for s in ["beta:c=2.5", "md:c=1", "md-adaptive:b=1", "beta:c=2.5,center=ysquared"] {
        let spec = PriorSpec::parse(s, 6).unwrap();
        let mut rng = chain_rng(4, 0);
        g.bench_function(BenchmarkId::new("sample", s), |b| {
            b.iter(|| sample_prior(&spec, &mut rng).unwrap())
        });
        let q = sample_prior(&spec, &mut rng).unwrap();
        g.bench_function(BenchmarkId::new("log_density", s), |b| {
            b.iter(|| log_prior_density(&spec, black_box(&q)).unwrap())
        });
    }
    g.finish();
}
