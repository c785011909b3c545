//! The `fit` command: ingest, sample, summarise, write.

use std::path::{Path, PathBuf};

use qpyramid::io::{write_draws, write_grid};
use qpyramid::likelihood::SEMIPARAM_CLIP;
use qpyramid::sampler::{run_chains, run_chains_semiparam, GaussianPrior};
use qpyramid::special::normal_quantile;
use qpyramid::summary::{default_grid, functionals, gini, summarize_curves};
use qpyramid::{
    ChainConfig, DrawMatrix, DyadicQuantileVector, InitMode, LikelihoodKind, PriorSpec, Reference, SemiparamConfig,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::args::{FitArgs, FitLikelihood, InitArg};
use crate::error::{CliError, CliResult};
use crate::ingest::{ingest, parse_values, read_file, Ingested};
use crate::output::{write_json, write_with};

/// Deepest pyramid accepted from the command line (about a million cells).
const MAX_LEVEL: u32 = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemiparamSettings {
    pub mu_prior: GaussianPrior,
    pub log_sigma_prior: GaussianPrior,
    pub mu_step: f64,
    pub log_sigma_step: f64,
}

/// Every setting of a fit, defaults filled in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub data: PathBuf,
    pub bounds: Option<(f64, f64)>,
    pub level: u32,
    pub prior: String,
    pub likelihood: FitLikelihood,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
    pub init: InitMode,
    pub alpha: f64,
    pub grid_points: usize,
    pub semiparam: Option<SemiparamSettings>,
}

/// A `center=` value is a built-in reference name or a file of interior
/// quantiles at equispaced probabilities.
pub fn resolve_center(s: &str) -> qpyramid::Result<Reference> {
    match Reference::parse(s) {
        Ok(r) => Ok(r),
        Err(e) if !Path::new(s).is_file() => Err(e),
        Err(_) => {
            let (text, _) = read_file(Path::new(s)).map_err(|e| qpyramid::Error::Config(e.to_string()))?;
            let values = parse_values(&text).map_err(|e| qpyramid::Error::Config(format!("{s}: {e}")))?;
            Reference::from_interior_quantiles(&values)
        }
    }
}

pub fn parse_prior(s: &str, level: u32) -> CliResult<PriorSpec> {
    PriorSpec::parse_with(s, level, resolve_center).map_err(|e| CliError::Usage(format!("--prior '{s}': {e}")))
}

impl FitConfig {
    pub fn from_args(a: &FitArgs) -> CliResult<Self> {
        let usage = |m: String| Err(CliError::Usage(m));
        if !(1..=MAX_LEVEL).contains(&a.level) {
            return usage(format!("--level must be in 1..={MAX_LEVEL}"));
        }
        if a.iters == 0 {
            return usage("--iters must be positive".into());
        }
        let burn_in = a.burnin.unwrap_or(a.iters / 10);
        if burn_in >= a.iters {
            return usage(format!(
                "--burnin {burn_in} leaves no draws from {} iterations",
                a.iters
            ));
        }
        if a.thin == 0 || a.chains == 0 || a.grid_points == 0 {
            return usage("--thin, --chains and --grid-points must be positive".into());
        }
        if !(a.alpha > 0.0 && a.alpha < 1.0) {
            return usage(format!("--alpha must lie in (0, 1), got {}", a.alpha));
        }
        if !(a.mu_step >= 0.0 && a.log_sigma_step >= 0.0) {
            return usage("random-walk steps must be nonnegative".into());
        }
        let semiparam = (a.likelihood == FitLikelihood::Semiparam).then(|| {
            let d = SemiparamConfig::new(ChainConfig::new(1, 0, LikelihoodKind::Interp));
            SemiparamSettings {
                mu_prior: d.mu_prior,
                log_sigma_prior: d.log_sigma_prior,
                mu_step: a.mu_step,
                log_sigma_step: a.log_sigma_step,
            }
        });
        let data = a
            .data
            .canonicalize()
            .map_err(|e| CliError::Data(format!("{}: {e}", a.data.display())))?;
        let cfg = FitConfig {
            data,
            bounds: a.bounds,
            level: a.level,
            prior: a.prior.clone(),
            likelihood: a.likelihood,
            iterations: a.iters,
            burn_in,
            thin: a.thin,
            chains: a.chains,
            seed: a.seed,
            init: match a.init {
                InitArg::Empirical => InitMode::EmpiricalQuantiles,
                InitArg::Prior => InitMode::PriorDraw,
            },
            alpha: a.alpha,
            grid_points: a.grid_points,
            semiparam,
        };
        parse_prior(&cfg.prior, cfg.level)?;
        Ok(cfg)
    }

    fn chain_config(&self) -> ChainConfig {
        let kind = match self.likelihood {
            FitLikelihood::Substitute => LikelihoodKind::Substitute,
            _ => LikelihoodKind::Interp,
        };
        ChainConfig {
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            seed: self.seed,
            init: self.init,
            likelihood: kind,
        }
    }
}

pub struct FitOutcome {
    pub chains: Vec<DrawMatrix>,
    pub data_len: usize,
    pub sha256: String,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Gini on the raw scale. The mean difference scales with the bound width
/// and ignores the shift, so `G_raw = G_unit · wμ / (lo + wμ)` with `μ` the
/// unit-scale mean. Null when some draw has a nonpositive raw mean.
fn raw_gini(qs: &[DyadicQuantileVector], affine: &qpyramid::UnitAffineMap) -> CliResult<serde_json::Value> {
    let w = affine.hi - affine.lo;
    let mut g = Vec::with_capacity(qs.len());
    for q in qs {
        let k = q.knots();
        let mu = k.windows(2).map(|p| p[0] + p[1]).sum::<f64>() / (2.0 * q.cells() as f64);
        let raw_mean = affine.lo + w * mu;
        if raw_mean <= 0.0 || raw_mean.is_nan() {
            return Ok(serde_json::Value::Null);
        }
        g.push(gini(q)?.standard * w * mu / raw_mean);
    }
    let (m, sd) = mean_sd(&g);
    Ok(json!({"gini_standard_mean": m, "gini_standard_sd": sd, "gini_area_mean": 1.0 + m, "gini_area_sd": sd}))
}

/// Runs the fit and writes `draws.csv`, `grid.csv` and `functionals.json`
/// into `out`, which must already exist.
pub fn run(cfg: &FitConfig, out: &Path) -> CliResult<FitOutcome> {
    let spec = parse_prior(&cfg.prior, cfg.level)?;
    let Ingested { raw, dataset, sha256 } = ingest(&cfg.data, cfg.bounds)?;
    let chain = cfg.chain_config();
    let chains = match &cfg.semiparam {
        None => run_chains(&chain, &dataset, &spec, cfg.chains)?,
        Some(s) => {
            let sp = SemiparamConfig {
                chain,
                mu_prior: s.mu_prior,
                log_sigma_prior: s.log_sigma_prior,
                mu_step: s.mu_step,
                log_sigma_step: s.log_sigma_step,
                freeze_q: false,
            };
            run_chains_semiparam(&sp, &raw, &spec, cfg.chains)?
        }
    };
    write_with(&out.join("draws.csv"), |w| Ok(write_draws(w, &chains)?))?;

    let draws: Vec<&qpyramid::Draw> = chains.iter().flat_map(|c| &c.draws).collect();
    let qs: Vec<DyadicQuantileVector> = draws.iter().map(|d| d.q.clone()).collect();
    let ys = default_grid(cfg.grid_points);
    let affine = *dataset.affine();
    let grid = if cfg.semiparam.is_some() {
        summarize_curves(&ys, qs.len(), cfg.alpha, |d, y| {
            let u = qs[d].quantile_at(y)?.clamp(SEMIPARAM_CLIP, 1.0 - SEMIPARAM_CLIP);
            Ok(draws[d].mu.unwrap_or(0.0) + draws[d].sigma.unwrap_or(1.0) * normal_quantile(u))
        })?
    } else {
        summarize_curves(&ys, qs.len(), cfg.alpha, |d, y| {
            Ok(affine.inverse(qs[d].quantile_at(y)?))
        })?
    };
    write_with(&out.join("grid.csv"), |w| Ok(write_grid(w, &grid)?))?;

    let diagnostics: Vec<_> = chains
        .iter()
        .map(|c| {
            json!({
                "chain": c.chain,
                "draws": c.len(),
                "acceptance_rate": c.acceptance_rate(),
                "max_trace_drift": c.max_trace_drift,
            })
        })
        .collect();
    let mut report = json!({ "draws": qs.len(), "alpha": cfg.alpha, "chains": diagnostics });
    if cfg.semiparam.is_some() {
        let (mu_mean, mu_sd) = mean_sd(&draws.iter().map(|d| d.mu.unwrap_or(f64::NAN)).collect::<Vec<_>>());
        let (s_mean, s_sd) = mean_sd(&draws.iter().map(|d| d.sigma.unwrap_or(f64::NAN)).collect::<Vec<_>>());
        report["mu"] = json!({"mean": mu_mean, "sd": mu_sd});
        report["sigma"] = json!({"mean": s_mean, "sd": s_sd});
    } else {
        report["gini_unit"] = serde_json::to_value(functionals(&qs)?)?;
        report["gini_raw"] = raw_gini(&qs, &affine)?;
    }
    write_json(&out.join("functionals.json"), &report)?;
    Ok(FitOutcome {
        chains,
        data_len: raw.len(),
        sha256,
    })
}
