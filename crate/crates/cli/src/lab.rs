//! The `lab` command.

use std::path::Path;

use qpyramid::lab::{
    bvm_experiment, consistency_experiment, delta_decay_experiment, prior_mean_experiment, BvmConfig,
    ConsistencyConfig, DeltaDecayConfig, KRule, PriorMeanConfig,
};
use qpyramid::{ExperimentReport, Reference};
use serde::{Deserialize, Serialize};

use crate::args::{parse_levels, Experiment, LabArgs};
use crate::error::{CliError, CliResult};
use crate::fit::parse_prior;
use crate::output::write_json;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum LabConfig {
    Bvm {
        prior: String,
        config: BvmConfig,
    },
    Consistency {
        prior: String,
        config: ConsistencyConfig,
    },
    DeltaDecay {
        prior: String,
        config: DeltaDecayConfig,
    },
    PriorMean {
        prior: String,
        level: u32,
        config: PriorMeanConfig,
    },
}

fn usage<T>(m: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(m.into()))
}

fn levels(a: &LabArgs, default: &str) -> CliResult<Vec<u32>> {
    let v = parse_levels(a.m.as_deref().unwrap_or(default)).map_err(CliError::Usage)?;
    if v.iter().any(|&m| !(1..=20).contains(&m)) {
        return usage("levels must be in 1..=20");
    }
    Ok(v)
}

impl LabConfig {
    pub fn from_args(a: &LabArgs) -> CliResult<Self> {
        let f0 = Reference::parse(&a.f0).map_err(|e| CliError::Usage(format!("--f0: {e}")))?;
        let prior = a.prior.clone();
        let cfg = match a.experiment {
            Experiment::Bvm => {
                let n = match a.n.as_slice() {
                    [] => 2000,
                    [n] => *n,
                    _ => return usage("bvm takes a single --n"),
                };
                let k = a.k.unwrap_or(4);
                if !k.is_power_of_two() || k < 2 {
                    return usage(format!("--k must be a power of two >= 2, got {k}"));
                }
                let mut c = BvmConfig::new(f0, n, k.trailing_zeros(), a.seed);
                c.chains = a.chains;
                if let Some(i) = a.iters {
                    c.iterations = i;
                }
                c.sd_rel_tol = a.sd_tol.unwrap_or(c.sd_rel_tol);
                c.mean_tol = a.mean_tol.unwrap_or(c.mean_tol);
                c.corr_tol = a.corr_tol.unwrap_or(c.corr_tol);
                if c.chains == 0 || c.iterations == 0 {
                    return usage("--chains and --iters must be positive");
                }
                LabConfig::Bvm { prior, config: c }
            }
            Experiment::Consistency => {
                let ns = if a.n.is_empty() {
                    vec![100, 400, 1600]
                } else {
                    a.n.clone()
                };
                let seeds = if a.seeds.is_empty() {
                    vec![a.seed]
                } else {
                    a.seeds.clone()
                };
                LabConfig::Consistency {
                    prior,
                    config: ConsistencyConfig {
                        f0,
                        ns,
                        k_rule: KRule::Power { exponent: a.k_exponent },
                        iterations: a.iters.unwrap_or(2000),
                        seeds,
                    },
                }
            }
            Experiment::DeltaDecay => LabConfig::DeltaDecay {
                prior,
                config: DeltaDecayConfig {
                    levels: levels(a, "3..9")?,
                    replicates: a.replicates,
                    eps: a.eps,
                    seed: a.seed,
                },
            },
            Experiment::PriorMean => {
                let l = levels(a, "3")?;
                let [level] = l[..] else {
                    return usage("prior-mean takes a single --m");
                };
                LabConfig::PriorMean {
                    prior,
                    level,
                    config: PriorMeanConfig {
                        draws: a.draws,
                        seed: a.seed,
                        z: a.z,
                    },
                }
            }
        };
        cfg.prior_spec()?;
        Ok(cfg)
    }

    fn prior_spec(&self) -> CliResult<qpyramid::PriorSpec> {
        match self {
            LabConfig::Bvm { prior, config } => parse_prior(prior, config.level),
            LabConfig::Consistency { prior, .. } => parse_prior(prior, 1),
            LabConfig::DeltaDecay { prior, config } => parse_prior(prior, config.levels.first().copied().unwrap_or(1)),
            LabConfig::PriorMean { prior, level, .. } => parse_prior(prior, *level),
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        match self {
            LabConfig::Bvm { config, .. } => vec![config.seed],
            LabConfig::Consistency { config, .. } => config.seeds.clone(),
            LabConfig::DeltaDecay { config, .. } => vec![config.seed],
            LabConfig::PriorMean { config, .. } => vec![config.seed],
        }
    }
}

/// Runs the experiment and writes `report.json` into `out`.
pub fn run(cfg: &LabConfig, out: &Path) -> CliResult<ExperimentReport> {
    let spec = cfg.prior_spec()?;
    let report = match cfg {
        LabConfig::Bvm { config, .. } => bvm_experiment(config, &spec)?,
        LabConfig::Consistency { config, .. } => consistency_experiment(config, &spec)?,
        LabConfig::DeltaDecay { config, .. } => delta_decay_experiment(config, &spec)?,
        LabConfig::PriorMean { config, .. } => prior_mean_experiment(config, &spec)?,
    };
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}
