//! Simulation rigs for the large-sample behaviour of pyramid posteriors:
//! maximal-gap decay under the prior, prior centering, Hellinger
//! consistency and posterior normality of the quantile process.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{config, domain, Error, Result};
use crate::likelihood::{Dataset, LikelihoodKind};
use crate::prior::{sample_prior, Centering, Family, PriorSpec};
use crate::quantile::PiecewiseConstant;
use crate::reference::Reference;
use crate::sampler::{chain_rng, run_chain_indexed, ChainConfig};

/// RNG stream reserved for simulated data; chains use streams `0, 1, …`.
pub const DATA_STREAM: u64 = 1 << 32;

/// Covariance of the limiting quantile process at `j/k`, `j = 1..k−1`.
#[derive(Clone, Debug, PartialEq)]
pub struct BridgeCovariance {
    pub k: usize,
    pub matrix: Vec<Vec<f64>>,
    kind: CovKind,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum CovKind {
    Bridge,
    Multinomial,
}

impl BridgeCovariance {
    fn check_k(k: usize) -> Result<()> {
        if k < 2 {
            return domain(format!("covariance needs k >= 2, got {k}"));
        }
        Ok(())
    }

    /// Brownian bridge: `Σ[i][j] = (i/k)(1 − j/k)` for `i ≤ j`.
    pub fn bridge(k: usize) -> Result<Self> {
        Self::check_k(k)?;
        let kf = k as f64;
        let matrix = (1..k)
            .map(|i| {
                (1..k)
                    .map(|j| {
                        let (a, b) = (i.min(j) as f64, i.max(j) as f64);
                        (a / kf) * (1.0 - b / kf)
                    })
                    .collect()
            })
            .collect();
        Ok(BridgeCovariance {
            k,
            matrix,
            kind: CovKind::Bridge,
        })
    }

    /// Increments of the bridge over the first `k − 1` cells:
    /// `(1/k)(δ_ij − 1/k)`.
    pub fn multinomial(k: usize) -> Result<Self> {
        Self::check_k(k)?;
        let kf = k as f64;
        let matrix = (1..k)
            .map(|i| {
                (1..k)
                    .map(|j| (if i == j { 1.0 } else { 0.0 } - 1.0 / kf) / kf)
                    .collect()
            })
            .collect();
        Ok(BridgeCovariance {
            k,
            matrix,
            kind: CovKind::Multinomial,
        })
    }

    pub fn dim(&self) -> usize {
        self.k - 1
    }

    /// Closed-form inverse: tridiagonal `(2k, −k)` for the bridge, `2k` on
    /// the diagonal and `k` elsewhere for the multinomial form.
    pub fn inverse(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        let kf = self.k as f64;
        (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| match self.kind {
                        CovKind::Bridge if i == j => 2.0 * kf,
                        CovKind::Bridge if i.abs_diff(j) == 1 => -kf,
                        CovKind::Bridge => 0.0,
                        CovKind::Multinomial if i == j => 2.0 * kf,
                        CovKind::Multinomial => kf,
                    })
                    .collect()
            })
            .collect()
    }

    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        self.matrix[i - 1][j - 1] / (self.matrix[i - 1][i - 1] * self.matrix[j - 1][j - 1]).sqrt()
    }

    /// Lower Cholesky factor; fails unless positive definite.
    pub fn cholesky(&self) -> Result<Vec<Vec<f64>>> {
        let d = self.dim();
        let mut l = vec![vec![0.0; d]; d];
        for i in 0..d {
            for j in 0..=i {
                let s: f64 = (0..j).map(|p| l[i][p] * l[j][p]).sum();
                if i == j {
                    let v = self.matrix[i][i] - s;
                    if !(v > 0.0) {
                        return Err(Error::Numeric("covariance is not positive definite".into()));
                    }
                    l[i][i] = v.sqrt();
                } else {
                    l[i][j] = (self.matrix[i][j] - s) / l[j][j];
                }
            }
        }
        Ok(l)
    }
}

/// `∫₀¹ q log(q/q₀) dy` over the common refinement.
pub fn kl_quantile_divergence(q: &PiecewiseConstant, q0: &PiecewiseConstant) -> Result<f64> {
    let mut total = 0.0;
    for (w, a, b) in q.merged(q0) {
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::Numeric("divergence undefined: zero quantile density".into()));
        }
        total += w * a * (a / b).ln();
    }
    if !total.is_finite() {
        return Err(Error::Numeric("divergence is not finite".into()));
    }
    Ok(total)
}

fn check_normalised(f: &PiecewiseConstant) -> Result<()> {
    let total = f.integral();
    if (total - 1.0).abs() > 1e-9 {
        return domain(format!("density integrates to {total}, not 1"));
    }
    Ok(())
}

/// Hellinger distance `{1 − ∫√(fg)}^{1/2}` between piecewise-constant densities.
pub fn hellinger(f: &PiecewiseConstant, g: &PiecewiseConstant) -> Result<f64> {
    check_normalised(f)?;
    check_normalised(g)?;
    let affinity: f64 = f.merged(g).map(|(w, a, b)| w * (a * b).sqrt()).sum();
    Ok((1.0 - affinity).max(0.0).sqrt())
}

/// Hellinger distance from a piecewise-constant density to a reference law.
pub fn hellinger_to_reference(f: &PiecewiseConstant, f0: &Reference) -> Result<f64> {
    check_normalised(f)?;
    let affinity: f64 = f
        .values
        .iter()
        .zip(f.breaks.windows(2))
        .filter(|(v, _)| **v > 0.0)
        .map(|(v, w)| v.sqrt() * f0.sqrt_density_integral(w[0], w[1]))
        .sum();
    Ok((1.0 - affinity).max(0.0).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn within(name: impl Into<String>, value: f64, target: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            target,
            tolerance,
            pass: (value - target).abs() <= tolerance,
        }
    }

    fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check {
            name: name.into(),
            value,
            target: bound,
            tolerance: 0.0,
            pass: value <= bound,
        }
    }

    fn flag(name: impl Into<String>, ok: bool) -> Self {
        let v = if ok { 1.0 } else { 0.0 };
        Check {
            name: name.into(),
            value: v,
            target: 1.0,
            tolerance: 0.0,
            pass: ok,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub parameters: Value,
    pub seeds: Vec<u64>,
    pub rows: Vec<Value>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl ExperimentReport {
    fn new(experiment: &str, parameters: Value, seeds: Vec<u64>, rows: Vec<Value>, checks: Vec<Check>) -> Self {
        let passed = checks.iter().all(|c| c.pass);
        ExperimentReport {
            experiment: experiment.into(),
            parameters,
            seeds,
            rows,
            checks,
            passed,
        }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn simulate(f0: &Reference, n: usize, seed: u64) -> Result<Dataset> {
    let mut rng = chain_rng(seed, DATA_STREAM);
    Dataset::new(f0.sample_n(n, &mut rng))
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    crate::summary::sample_quantile(&v, 0.5)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BvmConfig {
    pub f0: Reference,
    pub n: usize,
    pub level: u32,
    pub iterations: usize,
    pub chains: usize,
    pub seed: u64,
    pub sd_rel_tol: f64,
    pub mean_tol: f64,
    pub corr_tol: f64,
}

impl BvmConfig {
    pub fn new(f0: Reference, n: usize, level: u32, seed: u64) -> Self {
        BvmConfig {
            f0,
            n,
            level,
            iterations: 20000,
            chains: 4,
            seed,
            sd_rel_tol: 0.25,
            mean_tol: 0.1,
            corr_tol: 0.15,
        }
    }
}

/// Posterior of `C_{n,j} = √n(q_j − F_n⁻¹(j/k))` under the substitute
/// likelihood against its Gaussian limit with bridge covariance.
pub fn bvm_experiment(cfg: &BvmConfig, prior: &PriorSpec) -> Result<ExperimentReport> {
    if prior.level() != cfg.level {
        return config("prior level must match the experiment level");
    }
    let data = simulate(&cfg.f0, cfg.n, cfg.seed)?;
    let chain = ChainConfig::new(cfg.iterations, cfg.seed, LikelihoodKind::Substitute);
    let runs = (0..cfg.chains as u64)
        .into_par_iter()
        .map(|c| run_chain_indexed(&chain, &data, prior, c))
        .collect::<Result<Vec<_>>>()?;
    let k = 1usize << cfg.level;
    let kf = k as f64;
    let root_n = (cfg.n as f64).sqrt();
    let centres: Vec<f64> = (1..k)
        .map(|j| data.empirical_quantile(j as f64 / kf).unwrap_or(f64::NAN))
        .collect();
    let cols: Vec<Vec<f64>> = (1..k)
        .map(|j| {
            runs.iter()
                .flat_map(|r| r.draws.iter())
                .map(|d| root_n * (d.q.knot(j) - centres[j - 1]))
                .collect()
        })
        .collect();
    if cols[0].len() < 2 {
        return Err(Error::Degenerate("too few posterior draws".into()));
    }
    let cov = BridgeCovariance::bridge(k)?;
    let stats: Vec<(f64, f64)> = cols.iter().map(|c| mean_sd(c)).collect();
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for j in 1..k {
        let p = j as f64 / kf;
        let target = cfg.f0.quantile_density(p) * (p * (1.0 - p)).sqrt();
        let (m, sd) = stats[j - 1];
        rows.push(json!({"j": j, "mean": m, "sd": sd, "target_sd": target}));
        checks.push(Check::within(format!("mean_{j}"), m, 0.0, cfg.mean_tol));
        checks.push(Check::within(format!("sd_{j}"), sd / target, 1.0, cfg.sd_rel_tol));
    }
    for i in 1..k {
        for j in i + 1..k {
            let (mi, si) = stats[i - 1];
            let (mj, sj) = stats[j - 1];
            let c: f64 = cols[i - 1]
                .iter()
                .zip(&cols[j - 1])
                .map(|(a, b)| (a - mi) * (b - mj))
                .sum::<f64>()
                / (cols[0].len() as f64 - 1.0);
            let r = c / (si * sj);
            let target = cov.correlation(i, j);
            rows.push(json!({"i": i, "j": j, "corr": r, "target_corr": target}));
            checks.push(Check::within(format!("corr_{i}_{j}"), r, target, cfg.corr_tol));
        }
    }
    let acceptance: Vec<f64> = runs.iter().map(|r| r.acceptance_rate()).collect();
    let params = json!({
        "f0": cfg.f0.name(), "n": cfg.n, "k": k, "iterations": cfg.iterations,
        "chains": cfg.chains, "draws": cols[0].len(), "acceptance": acceptance,
    });
    Ok(ExperimentReport::new("bvm", params, vec![cfg.seed], rows, checks))
}

/// Number of cells as a function of the sample size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum KRule {
    /// `k_n = 2^⌈log₂ n^e⌉`.
    Power {
        exponent: f64,
    },
    Constant {
        k: usize,
    },
}

impl KRule {
    pub fn sqrt() -> Self {
        KRule::Power { exponent: 0.5 }
    }

    /// Level `m_n` with `k_n = 2^{m_n}` (at least 1).
    pub fn level(&self, n: usize) -> u32 {
        match self {
            KRule::Power { exponent } => ((n as f64).powf(*exponent).log2().ceil().max(1.0)) as u32,
            KRule::Constant { k } => (k.max(&2).next_power_of_two()).trailing_zeros(),
        }
    }

    /// Requires `k_n → ∞` and `k_n/n → 0`, and `k_n < n` on the grid.
    pub fn validate(&self, ns: &[usize]) -> Result<()> {
        match self {
            KRule::Power { exponent } if *exponent > 0.0 && *exponent < 1.0 => {}
            KRule::Power { exponent } => return config(format!("cell rule n^{exponent} needs 0 < exponent < 1")),
            KRule::Constant { .. } => return config("a constant cell count does not grow with n"),
        }
        for &n in ns {
            if (1usize << self.level(n)) >= n {
                return config(format!("k_n = {} is not below n = {n}", 1usize << self.level(n)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyConfig {
    pub f0: Reference,
    pub ns: Vec<usize>,
    pub k_rule: KRule,
    pub iterations: usize,
    pub seeds: Vec<u64>,
}

/// Median posterior Hellinger distance between the draw densities and `f0`
/// along an increasing sample-size grid, interpolation likelihood.
pub fn consistency_experiment(cfg: &ConsistencyConfig, prior: &PriorSpec) -> Result<ExperimentReport> {
    cfg.k_rule.validate(&cfg.ns)?;
    if cfg.ns.windows(2).any(|w| w[1] <= w[0]) {
        return config("sample sizes must be strictly increasing");
    }
    let jobs: Vec<(u64, usize)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| cfg.ns.iter().map(move |&n| (s, n)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(seed, n)| {
            let m = cfg.k_rule.level(n);
            let spec = prior.with_level(m)?;
            let data = simulate(&cfg.f0, n, seed.wrapping_add(n as u64))?;
            let chain = ChainConfig::new(cfg.iterations, seed, LikelihoodKind::Interp);
            let run = run_chain_indexed(&chain, &data, &spec, 0)?;
            let dists = run
                .draws
                .iter()
                .map(|d| hellinger_to_reference(&d.q.density(), &cfg.f0))
                .collect::<Result<Vec<f64>>>()?;
            if dists.is_empty() {
                return Err(Error::Degenerate("no posterior draws".into()));
            }
            let mean = dists.iter().sum::<f64>() / dists.len() as f64;
            Ok((seed, n, m, median(dists), mean))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = results
        .iter()
        .map(|&(seed, n, m, med, mean)| {
            json!({"seed": seed, "n": n, "k": 1usize << m, "median_hellinger": med, "mean_hellinger": mean})
        })
        .collect();
    let checks = cfg
        .seeds
        .iter()
        .map(|&s| {
            let meds: Vec<f64> = results.iter().filter(|r| r.0 == s).map(|r| r.3).collect();
            Check::flag(format!("decreasing_seed_{s}"), meds.windows(2).all(|w| w[1] < w[0]))
        })
        .collect();
    let params = json!({
        "f0": cfg.f0.name(), "ns": cfg.ns, "k_rule": cfg.k_rule, "iterations": cfg.iterations,
    });
    Ok(ExperimentReport::new(
        "consistency",
        params,
        cfg.seeds.clone(),
        rows,
        checks,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaDecayConfig {
    pub levels: Vec<u32>,
    pub replicates: usize,
    pub eps: f64,
    pub seed: u64,
}

/// Largest `max(E V², E(1−V)²)` over the pyramid nodes, if the weight laws
/// do not depend on the realised gaps.
fn moment_constant(spec: &PriorSpec) -> Option<f64> {
    if matches!(spec.family(), Family::MdAdaptive(_)) {
        return None;
    }
    let mut c: f64 = 0.0;
    for l in 1..=spec.level() {
        let nodes = if matches!(spec.centering(), Centering::Mean(_)) {
            1usize << (l - 1)
        } else {
            1
        };
        for i in 0..nodes {
            c = c.max(spec.node_law(l, i, 1.0).max_second_moment());
        }
    }
    Some(c)
}

/// Monte-Carlo tail `Pr{Δ_m ≥ ε}` of the largest cell width against the
/// moment bound `ε⁻²(2c)^m`.
pub fn delta_decay_experiment(cfg: &DeltaDecayConfig, prior: &PriorSpec) -> Result<ExperimentReport> {
    if cfg.replicates < 100 {
        return config("delta-decay needs at least 100 replicates");
    }
    if !(cfg.eps > 0.0) {
        return config("eps must be positive");
    }
    let results = cfg
        .levels
        .par_iter()
        .map(|&m| {
            let spec = prior.with_level(m)?;
            let mut rng = chain_rng(cfg.seed, u64::from(m));
            let mut deltas = (0..cfg.replicates)
                .map(|_| sample_prior(&spec, &mut rng).map(|q| q.max_increment()))
                .collect::<Result<Vec<f64>>>()?;
            deltas.sort_by(f64::total_cmp);
            let r = cfg.replicates as f64;
            let tail = deltas.iter().filter(|&&d| d >= cfg.eps).count() as f64 / r;
            let se = (tail * (1.0 - tail) / r).sqrt();
            let bound = moment_constant(&spec).map(|c| (2.0 * c).powi(m as i32) / (cfg.eps * cfg.eps));
            let p95 = crate::summary::sample_quantile(&deltas, 0.95);
            Ok((m, tail, se, bound, p95, deltas[deltas.len() / 2]))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for &(m, tail, se, bound, p95, med) in &results {
        rows.push(json!({"m": m, "tail": tail, "se": se, "bound": bound, "p95": p95, "median": med}));
        if let Some(b) = bound {
            checks.push(Check::at_most(format!("bound_m{m}"), tail, b + 3.0 * se));
        }
    }
    let tails: Vec<f64> = results.iter().map(|r| r.1).collect();
    let p95s: Vec<f64> = results.iter().map(|r| r.4).collect();
    let stats = json!({
        "tail_nonincreasing": tails.windows(2).all(|w| w[1] <= w[0]),
        "p95_decreasing": p95s.windows(2).all(|w| w[1] < w[0]),
    });
    let params = json!({
        "levels": cfg.levels, "replicates": cfg.replicates, "eps": cfg.eps, "trend": stats,
    });
    Ok(ExperimentReport::new(
        "delta-decay",
        params,
        vec![cfg.seed],
        rows,
        checks,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorMeanConfig {
    pub draws: usize,
    pub seed: u64,
    /// Allowed deviation in standard errors.
    pub z: f64,
}

/// Monte-Carlo mean of `Q_m(j/2^m)` against its target: `y` for uncentered
/// symmetric laws, `Q_null(y)` under mean centering.
pub fn prior_mean_experiment(cfg: &PriorMeanConfig, prior: &PriorSpec) -> Result<ExperimentReport> {
    if cfg.draws < 2 {
        return config("prior-mean needs at least 2 draws");
    }
    let target: Box<dyn Fn(f64) -> f64> = match prior.centering() {
        Centering::None => {
            let symmetric = (1..=prior.level()).all(|l| (prior.node_law(l, 0, 1.0).mean() - 0.5).abs() < 1e-15)
                && !matches!(prior.family(), Family::Fixed(_));
            if !symmetric {
                return config("uncentered prior-mean check needs weight laws with mean 1/2");
            }
            Box::new(|y| y)
        }
        Centering::Mean(r) => {
            let r = r.clone();
            Box::new(move |y| r.quantile(y))
        }
        Centering::Transform(_) => return config("prior-mean check does not cover transform centering"),
    };
    let mut rng = chain_rng(cfg.seed, 0);
    let k = 1usize << prior.level();
    let mut sum = vec![0.0; k - 1];
    let mut sum2 = vec![0.0; k - 1];
    for _ in 0..cfg.draws {
        let q = sample_prior(prior, &mut rng)?;
        for (j, &x) in q.values().iter().enumerate() {
            sum[j] += x;
            sum2[j] += x * x;
        }
    }
    let n = cfg.draws as f64;
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for j in 0..k - 1 {
        let mean = sum[j] / n;
        let var = ((sum2[j] - n * mean * mean) / (n - 1.0)).max(0.0);
        let se = (var / n).sqrt();
        let y = (j + 1) as f64 / k as f64;
        let t = target(y);
        let z = if se > 0.0 { (mean - t).abs() / se } else { 0.0 };
        worst = worst.max(z);
        rows.push(json!({"y": y, "mean": mean, "target": t, "se": se, "z": z}));
    }
    let checks = vec![Check::at_most("max_z", worst, cfg.z)];
    let params = json!({"level": prior.level(), "draws": cfg.draws});
    Ok(ExperimentReport::new(
        "prior-mean",
        params,
        vec![cfg.seed],
        rows,
        checks,
    ))
}
