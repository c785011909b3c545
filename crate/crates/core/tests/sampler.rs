use qpyramid::likelihood::log_lik_semiparam;
use qpyramid::quadrature::adaptive_simpson;
use qpyramid::sampler::{chain_rng, run_chain, run_chain_semiparam, run_chains};
use qpyramid::special::ln_factorial;
use qpyramid::{ChainConfig, Dataset, DyadicQuantileVector, LikelihoodKind, PriorSpec, Reference, SemiparamConfig};
use rand::Rng;
use rand_distr::StandardNormal;

fn small_sample(n: usize, seed: u64) -> Dataset {
    let mut rng = chain_rng(seed, 0);
    Dataset::new(Reference::Square.sample_n(n, &mut rng)).unwrap()
}

/// Posterior mean of the median under a uniform prior on `q`, where the
/// posterior is `∝ w_i(q)` on each data spacing `(x_(i), x_(i+1)]`.
fn k2_posterior_mean(data: &Dataset, log_w: impl Fn(usize, f64) -> f64) -> f64 {
    let mut edges = vec![0.0];
    edges.extend_from_slice(data.values());
    edges.push(1.0);
    let scale = (0..=data.len())
        .map(|i| log_w(i, 0.5 * (edges[i] + edges[i + 1])))
        .fold(f64::NEG_INFINITY, f64::max);
    let (mut mass, mut first) = (0.0, 0.0);
    for i in 0..=data.len() {
        let (a, b) = (edges[i], edges[i + 1]);
        if b <= a {
            continue;
        }
        let f = |q: f64| (log_w(i, q) - scale).exp();
        mass += adaptive_simpson(f, a, b, 1e-13);
        first += adaptive_simpson(|q| q * f(q), a, b, 1e-13);
    }
    first / mass
}

fn chain_mean(data: &Dataset, kind: LikelihoodKind, seed: u64) -> (f64, f64) {
    let cfg = ChainConfig::new(60_000, seed, kind);
    let run = run_chain(&cfg, data, &PriorSpec::uniform(1)).unwrap();
    let v: Vec<f64> = run.draws.iter().map(|d| d.q.values()[0]).collect();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
    (mean, sd)
}

#[test]
fn two_cell_substitute_posterior_matches_closed_form() {
    let data = small_sample(20, 808);
    let n = data.len();
    let oracle = k2_posterior_mean(&data, |i, _| {
        ln_factorial(n as u64) - ln_factorial(i as u64) - ln_factorial((n - i) as u64)
    });
    let (mean, sd) = chain_mean(&data, LikelihoodKind::Substitute, 1);
    assert!(
        (mean - oracle).abs() <= 0.1 * sd,
        "chain {mean}, exact {oracle}, sd {sd}"
    );
}

#[test]
fn two_cell_interp_posterior_matches_quadrature() {
    let data = small_sample(20, 809);
    let n = data.len();
    let term = |c: usize, gap: f64| if c == 0 { 0.0 } else { -(c as f64) * (2.0 * gap).ln() };
    let oracle = k2_posterior_mean(&data, |i, q| term(i, q) + term(n - i, 1.0 - q));
    let (mean, sd) = chain_mean(&data, LikelihoodKind::Interp, 2);
    assert!(
        (mean - oracle).abs() <= 0.1 * sd,
        "chain {mean}, exact {oracle}, sd {sd}"
    );
}

#[test]
fn draws_stay_ordered_and_traces_do_not_drift() {
    let data = small_sample(300, 810);
    for (spec, kind) in [
        ("beta:c=2.5", LikelihoodKind::Interp),
        ("md:c=1", LikelihoodKind::Substitute),
        ("md-adaptive:b=1", LikelihoodKind::Interp),
        ("uniform,center=ysquared,mode=transform", LikelihoodKind::Substitute),
    ] {
        let spec = PriorSpec::parse(spec, 4).unwrap();
        let chains = run_chains(&ChainConfig::new(3000, 3, kind), &data, &spec, 2).unwrap();
        for c in &chains {
            assert!(c.max_trace_drift < 1e-8, "drift {}", c.max_trace_drift);
            for d in &c.draws {
                let k = d.q.knots();
                assert!(k.windows(2).all(|w| w[1] > w[0]));
            }
        }
    }
}

#[test]
fn semiparametric_location_is_recovered() {
    let mut rng = chain_rng(811, 0);
    let (mu, sigma) = (3.0, 2.0);
    let raw: Vec<f64> = (0..500)
        .map(|_| mu + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let cfg = SemiparamConfig::new(ChainConfig::new(6000, 4, LikelihoodKind::Interp));
    let run = run_chain_semiparam(&cfg, &raw, &PriorSpec::parse("beta:c=2.5", 3).unwrap()).unwrap();
    let mus: Vec<f64> = run.draws.iter().map(|d| d.mu.unwrap()).collect();
    let m = mus.iter().sum::<f64>() / mus.len() as f64;
    let sd = (mus.iter().map(|x| (x - m).powi(2)).sum::<f64>() / mus.len() as f64).sqrt();
    assert!((m - mu).abs() <= 3.0 * sd, "posterior mean {m}, sd {sd}");
}

#[test]
fn frozen_quantiles_reduce_to_parametric_metropolis() {
    let mut rng = chain_rng(812, 0);
    let raw: Vec<f64> = (0..200)
        .map(|_| 1.0 + 0.5 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut cfg = SemiparamConfig::new(ChainConfig::new(400, 9, LikelihoodKind::Interp));
    cfg.freeze_q = true;
    cfg.chain.burn_in = 0;
    let spec = PriorSpec::uniform(3);
    let run = run_chain_semiparam(&cfg, &raw, &spec).unwrap();

    let mut sorted = raw.clone();
    sorted.sort_by(f64::total_cmp);
    let q = DyadicQuantileVector::identity(3);
    let n = sorted.len() as f64;
    let mut mu = sorted.iter().sum::<f64>() / n;
    let mut sigma = (sorted.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let ln_norm = |x: f64, m: f64, s: f64| -0.5 * ((x - m) / s).powi(2) - s.ln();
    let log_post = |m: f64, s: f64| {
        log_lik_semiparam(m, s, &q, &sorted).unwrap() + ln_norm(m, 0.0, 100.0) + ln_norm(s.ln(), 0.0, 10.0)
    };
    let mut rng = chain_rng(9, 0);
    for d in &run.draws {
        let step: f64 = rng.sample(StandardNormal);
        let prop = mu + 0.1 * step;
        let u: f64 = rng.random();
        let r = log_post(prop, sigma) - log_post(mu, sigma);
        if r >= 0.0 || u.ln() < r {
            mu = prop;
        }
        let step: f64 = rng.sample(StandardNormal);
        let prop = (sigma.ln() + 0.1 * step).exp();
        let u: f64 = rng.random();
        let r = log_post(mu, prop) - log_post(mu, sigma);
        if r >= 0.0 || u.ln() < r {
            sigma = prop;
        }
        assert_eq!(d.q, q);
        assert!(
            (d.mu.unwrap() - mu).abs() < 1e-12,
            "sweep {}: {} vs {mu}",
            d.sweep,
            d.mu.unwrap()
        );
        assert!((d.sigma.unwrap() - sigma).abs() < 1e-12, "sweep {}", d.sweep);
    }
}
