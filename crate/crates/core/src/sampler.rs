//! Metropolis–Hastings samplers over quantile vectors.
//!
//! Each sweep visits `j = 1, …, k−1` in order and proposes
//! `q'_j ~ Uniform(q_{j−1}, q_{j+1})` using the current neighbours. The
//! proposal is symmetric at fixed neighbours, so only the prior and
//! likelihood ratios enter. Cell counts are tracked through the ranks
//! `#{x_i ≤ q_j}` so a site move costs one binary search.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::likelihood::{log_lik, semiparam_from_knots, semiparam_knots, Dataset, LikelihoodKind};
use crate::prior::{log_prior_density, sample_prior, PriorSpec};
use crate::quantile::DyadicQuantileVector;
use crate::special::ln_factorial;

/// Sweeps between full recomputations of the log-prior and log-likelihood.
pub const RESYNC_EVERY: usize = 1000;

/// Spacing used to separate tied empirical quantiles.
pub const INIT_NUDGE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    PriorDraw,
    EmpiricalQuantiles,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub init: InitMode,
    pub likelihood: LikelihoodKind,
}

impl ChainConfig {
    /// Burn-in `iterations / 10`, no thinning, empirical-quantile start.
    pub fn new(iterations: usize, seed: u64, likelihood: LikelihoodKind) -> Self {
        ChainConfig {
            iterations,
            burn_in: iterations / 10,
            thin: 1,
            seed,
            init: InitMode::EmpiricalQuantiles,
            likelihood,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in > self.iterations {
            return config(format!(
                "burn-in {} exceeds iterations {}",
                self.burn_in, self.iterations
            ));
        }
        if self.thin == 0 {
            return config("thin must be at least 1");
        }
        Ok(())
    }

    fn keeps(&self, sweep: usize) -> bool {
        sweep > self.burn_in && (sweep - self.burn_in).is_multiple_of(self.thin)
    }
}

/// RNG for chain `chain` of a run seeded with `seed`.
pub fn chain_rng(seed: u64, chain: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain);
    rng
}

#[derive(Clone, Debug, PartialEq)]
pub struct Draw {
    pub sweep: usize,
    pub q: DyadicQuantileVector,
    pub log_prior: f64,
    pub log_lik: f64,
    pub accepted: usize,
    /// Location and scale, for semiparametric chains.
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DrawMatrix {
    pub chain: u64,
    pub draws: Vec<Draw>,
    /// Largest gap seen between incrementally tracked and recomputed
    /// log-prior/log-likelihood values.
    pub max_trace_drift: f64,
    pub accepted: usize,
    pub proposed: usize,
}

impl DrawMatrix {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }
}

/// Mutable chain state: knots `q_0 = 0, …, q_k = 1`, ranks `#{x ≤ q_j}`
/// and the running log-prior/log-likelihood.
#[derive(Clone, Debug)]
pub struct ChainState {
    knots: Vec<f64>,
    ranks: Vec<usize>,
    log_prior: f64,
    log_lik: f64,
    ln_k: f64,
    ln_fact: Vec<f64>,
}

impl ChainState {
    pub fn new(q: &DyadicQuantileVector, data: &Dataset, spec: &PriorSpec, kind: LikelihoodKind) -> Result<Self> {
        let knots = q.knots();
        let k = q.cells();
        let ranks = (0..=k)
            .map(|j| match j {
                0 => 0,
                j if j == k => data.len(),
                j => data.rank(knots[j]),
            })
            .collect();
        Ok(ChainState {
            knots,
            ranks,
            log_prior: log_prior_density(spec, q)?,
            log_lik: log_lik(data, q, kind)?,
            ln_k: (k as f64).ln(),
            ln_fact: (0..=data.len() as u64).map(ln_factorial).collect(),
        })
    }

    pub fn q(&self) -> DyadicQuantileVector {
        let k = self.knots.len() - 1;
        DyadicQuantileVector::with_positive_gaps(k.trailing_zeros(), self.knots[1..k].to_vec())
            .expect("chain keeps strictly increasing knots")
    }

    pub fn log_prior(&self) -> f64 {
        self.log_prior
    }

    pub fn log_lik(&self) -> f64 {
        self.log_lik
    }

    fn cell_term(&self, kind: LikelihoodKind, count: usize, gap: f64) -> f64 {
        match kind {
            LikelihoodKind::Interp if count > 0 => count as f64 * (-self.ln_k - gap.ln()),
            LikelihoodKind::Interp => 0.0,
            LikelihoodKind::Substitute => -self.ln_fact[count],
        }
    }

    /// Log-likelihood change from moving knot `j` to `x`, whose rank is `r`.
    fn delta_lik(&self, kind: LikelihoodKind, j: usize, x: f64, r: usize) -> f64 {
        let (lo, hi, cur) = (self.knots[j - 1], self.knots[j + 1], self.knots[j]);
        let (r_lo, r_hi, r_cur) = (self.ranks[j - 1], self.ranks[j + 1], self.ranks[j]);
        let old = self.cell_term(kind, r_cur - r_lo, cur - lo) + self.cell_term(kind, r_hi - r_cur, hi - cur);
        let new = self.cell_term(kind, r - r_lo, x - lo) + self.cell_term(kind, r_hi - r, hi - x);
        new - old
    }

    fn delta_prior(&mut self, spec: &PriorSpec, j: usize, x: f64) -> f64 {
        let before = spec.local_log_density(&self.knots, j);
        let cur = std::mem::replace(&mut self.knots[j], x);
        let after = spec.local_log_density(&self.knots, j);
        self.knots[j] = cur;
        after - before
    }

    /// Recomputes both traces from scratch and returns the larger drift.
    fn resync(&mut self, data: &Dataset, spec: &PriorSpec, kind: LikelihoodKind) -> Result<f64> {
        let q = self.q();
        let lp = log_prior_density(spec, &q)?;
        let ll = log_lik(data, &q, kind)?;
        let drift = (lp - self.log_prior).abs().max((ll - self.log_lik).abs());
        self.log_prior = lp;
        self.log_lik = ll;
        Ok(if drift.is_nan() { f64::INFINITY } else { drift })
    }
}

/// Log MH ratio for moving knot `j` (1-based) of the current state to `proposal`.
pub fn log_accept_ratio(
    state: &ChainState,
    data: &Dataset,
    spec: &PriorSpec,
    kind: LikelihoodKind,
    j: usize,
    proposal: f64,
) -> f64 {
    let mut scratch = state.clone();
    let r = data.rank(proposal);
    scratch.delta_lik(kind, j, proposal, r) + scratch.delta_prior(spec, j, proposal)
}

/// Uniform draw strictly inside `(lo, hi)`, or `None` if no float fits.
fn propose<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> Option<f64> {
    let mid = 0.5 * (lo + hi);
    if !(mid > lo && mid < hi) {
        return None;
    }
    loop {
        let u: f64 = rng.random();
        let x = lo + (hi - lo) * u;
        if x > lo && x < hi {
            return Some(x);
        }
    }
}

fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    let u: f64 = rng.random();
    !log_ratio.is_nan() && (log_ratio >= 0.0 || u.ln() < log_ratio)
}

/// One sequential-scan sweep. Returns the number of accepted moves.
pub fn mh_sweep<R: Rng + ?Sized>(
    state: &mut ChainState,
    data: &Dataset,
    spec: &PriorSpec,
    kind: LikelihoodKind,
    rng: &mut R,
) -> usize {
    let k = state.knots.len() - 1;
    let mut accepted = 0;
    for j in 1..k {
        let Some(x) = propose(state.knots[j - 1], state.knots[j + 1], rng) else {
            continue;
        };
        let r = data.rank(x);
        let d_lik = state.delta_lik(kind, j, x, r);
        let d_prior = state.delta_prior(spec, j, x);
        if accept(d_lik + d_prior, rng) {
            state.knots[j] = x;
            state.ranks[j] = r;
            state.log_lik += d_lik;
            state.log_prior += d_prior;
            accepted += 1;
        }
    }
    accepted
}

/// `q_j = F_n⁻¹(j/k)`, separated by [`INIT_NUDGE`] where tied and kept
/// strictly inside `(0, 1)`.
pub fn empirical_init(data: &Dataset, level: u32) -> Result<DyadicQuantileVector> {
    if data.is_empty() {
        return config("empirical-quantile initialisation needs data");
    }
    let k = 1usize << level;
    let mut v: Vec<f64> = (1..k)
        .map(|j| data.empirical_quantile(j as f64 / k as f64).unwrap())
        .collect();
    let mut prev = 0.0;
    for x in v.iter_mut() {
        if *x <= prev {
            *x = prev + INIT_NUDGE;
        }
        prev = *x;
    }
    let mut next = 1.0;
    for x in v.iter_mut().rev() {
        if *x >= next {
            *x = next - INIT_NUDGE;
        }
        next = *x;
    }
    DyadicQuantileVector::with_positive_gaps(level, v)
}

fn initial_state<R: Rng + ?Sized>(
    cfg: &ChainConfig,
    data: &Dataset,
    spec: &PriorSpec,
    rng: &mut R,
) -> Result<DyadicQuantileVector> {
    match cfg.init {
        InitMode::EmpiricalQuantiles => empirical_init(data, spec.level()),
        InitMode::PriorDraw => sample_prior(spec, rng),
    }
}

/// Runs chain `chain` of a seeded run.
pub fn run_chain_indexed(cfg: &ChainConfig, data: &Dataset, spec: &PriorSpec, chain: u64) -> Result<DrawMatrix> {
    cfg.validate()?;
    let mut rng = chain_rng(cfg.seed, chain);
    let q0 = initial_state(cfg, data, spec, &mut rng)?;
    let mut state = ChainState::new(&q0, data, spec, cfg.likelihood)?;
    let mut out = DrawMatrix {
        chain,
        draws: Vec::with_capacity((cfg.iterations - cfg.burn_in) / cfg.thin),
        max_trace_drift: 0.0,
        accepted: 0,
        proposed: 0,
    };
    let sites = q0.cells() - 1;
    for sweep in 1..=cfg.iterations {
        let acc = mh_sweep(&mut state, data, spec, cfg.likelihood, &mut rng);
        out.accepted += acc;
        out.proposed += sites;
        if sweep % RESYNC_EVERY == 0 {
            let drift = state.resync(data, spec, cfg.likelihood)?;
            out.max_trace_drift = out.max_trace_drift.max(drift);
        }
        if cfg.keeps(sweep) {
            out.draws.push(Draw {
                sweep,
                q: state.q(),
                log_prior: state.log_prior,
                log_lik: state.log_lik,
                accepted: acc,
                mu: None,
                sigma: None,
            });
        }
    }
    Ok(out)
}

pub fn run_chain(cfg: &ChainConfig, data: &Dataset, spec: &PriorSpec) -> Result<DrawMatrix> {
    run_chain_indexed(cfg, data, spec, 0)
}

/// Runs `chains` independent chains on the current rayon pool, chain `c`
/// using RNG stream `c`.
pub fn run_chains(cfg: &ChainConfig, data: &Dataset, spec: &PriorSpec, chains: usize) -> Result<Vec<DrawMatrix>> {
    if chains == 0 {
        return config("need at least one chain");
    }
    (0..chains as u64)
        .into_par_iter()
        .map(|c| run_chain_indexed(cfg, data, spec, c))
        .collect()
}

/// Gaussian prior `N(mean, sd²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrior {
    pub mean: f64,
    pub sd: f64,
}

impl GaussianPrior {
    fn ln_pdf(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.sd;
        -0.5 * z * z - self.sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemiparamConfig {
    pub chain: ChainConfig,
    pub mu_prior: GaussianPrior,
    /// Prior on `log σ`.
    pub log_sigma_prior: GaussianPrior,
    pub mu_step: f64,
    pub log_sigma_step: f64,
    /// Keep `q_unif` at its initial value (identity knots unless drawn from the prior).
    pub freeze_q: bool,
}

impl SemiparamConfig {
    pub fn new(chain: ChainConfig) -> Self {
        SemiparamConfig {
            chain,
            mu_prior: GaussianPrior { mean: 0.0, sd: 100.0 },
            log_sigma_prior: GaussianPrior { mean: 0.0, sd: 10.0 },
            mu_step: 0.1,
            log_sigma_step: 0.1,
            freeze_q: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.chain.validate()?;
        for (name, p) in [("mu", self.mu_prior), ("log-sigma", self.log_sigma_prior)] {
            if !(p.sd > 0.0 && p.sd.is_finite() && p.mean.is_finite()) {
                return config(format!("{name} prior needs finite mean and sd > 0"));
            }
        }
        if !(self.mu_step >= 0.0 && self.log_sigma_step >= 0.0) {
            return config("random-walk steps must be nonnegative");
        }
        Ok(())
    }
}

struct SemiState {
    z: Vec<f64>,
    u: Vec<f64>,
    mu: f64,
    sigma: f64,
    log_prior_q: f64,
    log_lik: f64,
}

impl SemiState {
    fn ll(&self, mu: f64, sigma: f64, raw: &[f64]) -> f64 {
        if self.z.windows(2).any(|w| !(w[1] > w[0])) {
            return f64::NEG_INFINITY;
        }
        semiparam_from_knots(mu, sigma, &self.z, raw)
    }
}

/// Semiparametric chain: `μ + σΦ⁻¹(Q_unif)` with a pyramid prior on
/// `Q_unif` and Gaussian priors on `μ` and `log σ`. `raw` need not be sorted.
pub fn run_chain_semiparam(cfg: &SemiparamConfig, raw: &[f64], spec: &PriorSpec) -> Result<DrawMatrix> {
    run_chain_semiparam_indexed(cfg, raw, spec, 0)
}

pub fn run_chain_semiparam_indexed(
    cfg: &SemiparamConfig,
    raw: &[f64],
    spec: &PriorSpec,
    chain: u64,
) -> Result<DrawMatrix> {
    cfg.validate()?;
    let mut raw = raw.to_vec();
    if raw.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("non-finite observation".into()));
    }
    raw.sort_by(f64::total_cmp);
    let n = raw.len();
    let mut rng = chain_rng(cfg.chain.seed, chain);
    let q0 = match cfg.chain.init {
        InitMode::PriorDraw => sample_prior(spec, &mut rng)?,
        InitMode::EmpiricalQuantiles => DyadicQuantileVector::identity(spec.level()),
    };
    let (mu0, sigma0) = if n >= 2 {
        let mean = raw.iter().sum::<f64>() / n as f64;
        let var = raw.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        if var > 0.0 {
            (mean, var.sqrt())
        } else {
            (mean, cfg.log_sigma_prior.mean.exp())
        }
    } else {
        (cfg.mu_prior.mean, cfg.log_sigma_prior.mean.exp())
    };
    let mut st = SemiState {
        z: semiparam_knots(&q0),
        u: q0.knots(),
        mu: mu0,
        sigma: sigma0,
        log_prior_q: log_prior_density(spec, &q0)?,
        log_lik: 0.0,
    };
    st.log_lik = st.ll(st.mu, st.sigma, &raw);
    let k = q0.cells();
    let hyper = |mu: f64, sigma: f64| cfg.mu_prior.ln_pdf(mu) + cfg.log_sigma_prior.ln_pdf(sigma.ln());
    let mut out = DrawMatrix {
        chain,
        draws: Vec::new(),
        max_trace_drift: 0.0,
        accepted: 0,
        proposed: 0,
    };
    for sweep in 1..=cfg.chain.iterations {
        let mut acc = 0;
        if !cfg.freeze_q {
            for j in 1..k {
                out.proposed += 1;
                let Some(x) = propose(st.u[j - 1], st.u[j + 1], &mut rng) else {
                    continue;
                };
                let before = spec.local_log_density(&st.u, j);
                let (old_u, old_z) = (st.u[j], st.z[j]);
                st.u[j] = x;
                st.z[j] = crate::special::normal_quantile(x);
                let after = spec.local_log_density(&st.u, j);
                let ll = st.ll(st.mu, st.sigma, &raw);
                if accept(ll - st.log_lik + after - before, &mut rng) {
                    st.log_lik = ll;
                    st.log_prior_q += after - before;
                    acc += 1;
                } else {
                    st.u[j] = old_u;
                    st.z[j] = old_z;
                }
            }
        }
        let step: f64 = rng.sample(StandardNormal);
        let mu_new = st.mu + cfg.mu_step * step;
        let ll = st.ll(mu_new, st.sigma, &raw);
        out.proposed += 1;
        if accept(
            ll - st.log_lik + hyper(mu_new, st.sigma) - hyper(st.mu, st.sigma),
            &mut rng,
        ) {
            st.mu = mu_new;
            st.log_lik = ll;
            acc += 1;
        }
        let step: f64 = rng.sample(StandardNormal);
        let sigma_new = (st.sigma.ln() + cfg.log_sigma_step * step).exp();
        let ll = st.ll(st.mu, sigma_new, &raw);
        out.proposed += 1;
        if sigma_new > 0.0
            && accept(
                ll - st.log_lik + hyper(st.mu, sigma_new) - hyper(st.mu, st.sigma),
                &mut rng,
            )
        {
            st.sigma = sigma_new;
            st.log_lik = ll;
            acc += 1;
        }
        out.accepted += acc;
        let q = DyadicQuantileVector::with_positive_gaps(spec.level(), st.u[1..k].to_vec())?;
        if sweep % RESYNC_EVERY == 0 {
            let lp = log_prior_density(spec, &q)?;
            let ll = st.ll(st.mu, st.sigma, &raw);
            let drift = (lp - st.log_prior_q).abs().max((ll - st.log_lik).abs());
            out.max_trace_drift = out
                .max_trace_drift
                .max(if drift.is_nan() { f64::INFINITY } else { drift });
            st.log_prior_q = lp;
            st.log_lik = ll;
        }
        if cfg.chain.keeps(sweep) {
            out.draws.push(Draw {
                sweep,
                q,
                log_prior: st.log_prior_q + hyper(st.mu, st.sigma),
                log_lik: st.log_lik,
                accepted: acc,
                mu: Some(st.mu),
                sigma: Some(st.sigma),
            });
        }
    }
    Ok(out)
}

pub fn run_chains_semiparam(
    cfg: &SemiparamConfig,
    raw: &[f64],
    spec: &PriorSpec,
    chains: usize,
) -> Result<Vec<DrawMatrix>> {
    if chains == 0 {
        return config("need at least one chain");
    }
    (0..chains as u64)
        .into_par_iter()
        .map(|c| run_chain_semiparam_indexed(cfg, raw, spec, c))
        .collect()
}
