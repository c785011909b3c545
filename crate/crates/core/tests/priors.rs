use qpyramid::lab::{delta_decay_experiment, DeltaDecayConfig};
use qpyramid::prior::{log_prior_density, md_sample, sample_prior, tau2};
use qpyramid::sampler::chain_rng;
use qpyramid::{DyadicQuantileVector, PriorSpec};

/// Gauss–Legendre nodes and weights on [0, 1].
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 + x), 0.5 * w));
    }
    out
}

/// Gauss–Legendre after the substitution `s = 35t⁴ − 84t⁵ + 70t⁶ − 20t⁷`,
/// which flattens algebraic endpoint behaviour.
fn smoothed_rule(n: usize) -> Vec<(f64, f64)> {
    gauss_legendre(n)
        .into_iter()
        .map(|(t, w)| {
            let s = t.powi(4) * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t.powi(3));
            let ds = 140.0 * (t * (1.0 - t)).powi(3);
            (s, w * ds)
        })
        .collect()
}

/// Integrates the level-2 prior density over `0 < q1 < q2 < q3 < 1`.
fn level2_mass(spec: &PriorSpec) -> f64 {
    let gl = smoothed_rule(48);
    let mut total = 0.0;
    for &(s2, w2) in &gl {
        let q2 = s2;
        for &(s1, w1) in &gl {
            let q1 = q2 * s1;
            for &(s3, w3) in &gl {
                let q3 = q2 + (1.0 - q2) * s3;
                // gaps under the minimum only occur where the smoothed weight is negligible
                let Ok(q) = DyadicQuantileVector::new(2, vec![q1, q2, q3]) else {
                    continue;
                };
                let p = log_prior_density(spec, &q).unwrap().exp();
                total += w2 * w1 * w3 * q2 * (1.0 - q2) * p;
            }
        }
    }
    total
}

#[test]
fn level2_prior_density_is_normalised() {
    for s in [
        "beta:c=2.5",
        "beta-const:a=3",
        "uniform",
        "beta:c=2.5,center=linear",
        "md:c=1",
        "uniform,center=linear,mode=transform",
    ] {
        let spec = PriorSpec::parse(s, 2).unwrap();
        let mass = level2_mass(&spec);
        assert!((mass - 1.0).abs() < 1e-6, "{s}: {mass}");
    }
}

#[test]
fn symmetric_laws_have_identity_mean() {
    for (i, s) in ["beta:c=2.5", "uniform", "md:c=1"].iter().enumerate() {
        let spec = PriorSpec::parse(s, 3).unwrap();
        let mut rng = chain_rng(31, i as u64);
        let n = 20000;
        let mut sum = [0.0; 7];
        let mut sum2 = [0.0; 7];
        for _ in 0..n {
            let q = sample_prior(&spec, &mut rng).unwrap();
            for (j, &x) in q.values().iter().enumerate() {
                sum[j] += x;
                sum2[j] += x * x;
            }
        }
        for j in 0..7 {
            let mean = sum[j] / n as f64;
            let se = ((sum2[j] / n as f64 - mean * mean) / n as f64).sqrt();
            let y = (j + 1) as f64 / 8.0;
            assert!((mean - y).abs() <= 3.0 * se, "{s} at y={y}: {mean} (se {se})");
        }
    }
}

#[test]
fn max_increment_upper_quantile_decreases() {
    let cfg = DeltaDecayConfig {
        levels: (3..=9).collect(),
        replicates: 2000,
        eps: 0.5,
        seed: 5,
    };
    let rep = delta_decay_experiment(&cfg, &PriorSpec::parse("beta:c=2.5", 3).unwrap()).unwrap();
    let p95: Vec<f64> = rep.rows.iter().map(|r| r["p95"].as_f64().unwrap()).collect();
    assert!(p95.windows(2).all(|w| w[1] < w[0]), "{p95:?}");
}

#[test]
fn constant_weights_give_geometric_quantile_density_growth() {
    let spec = PriorSpec::parse("beta-const:a=2", 3).unwrap();
    let mut medians = Vec::new();
    for m in 3..=9u32 {
        let s = spec.with_level(m).unwrap();
        let mut rng = chain_rng(77, u64::from(m));
        let mut v: Vec<f64> = (0..4000)
            .map(|_| sample_prior(&s, &mut rng).unwrap().max_increment() * f64::from(1u32 << m))
            .collect();
        v.sort_by(f64::total_cmp);
        let med = v[v.len() / 2];
        let ratio = med / 1.5f64.powi(m as i32);
        assert!((0.85..=1.15).contains(&ratio), "m={m}: median {med}");
        medians.push(med);
    }
    for w in medians.windows(2) {
        assert!((1.4..=1.65).contains(&(w[1] / w[0])), "{medians:?}");
    }
}

#[test]
fn md_variance_matches_tau2() {
    let a = 10.0;
    let mut rng = chain_rng(10, 0);
    let n = 50000;
    let x: Vec<f64> = (0..n).map(|_| md_sample(a, &mut rng)).collect();
    let mean = x.iter().sum::<f64>() / n as f64;
    let dev2: Vec<f64> = x.iter().map(|v| (v - mean).powi(2)).collect();
    let var = dev2.iter().sum::<f64>() / (n - 1) as f64;
    let se = (dev2.iter().map(|d| (d - var).powi(2)).sum::<f64>() / (n - 1) as f64 / n as f64).sqrt();
    assert!((var - tau2(a)).abs() <= 3.0 * se, "var {var} tau2 {} se {se}", tau2(a));
}
