use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "qpyramid",
    version,
    about = "Quantile-pyramid posterior sampling and asymptotics experiments"
)]
pub struct Cli {
    /// Worker threads for chains and grid evaluation.
    #[arg(long, env = "QPYRAMID_WORKERS", global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the posterior of a data set and write draws and summaries.
    Fit(FitArgs),
    /// Run an asymptotics experiment and write report.json.
    Lab(LabArgs),
    /// Re-run a previous fit or lab run from its manifest.json.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitLikelihood {
    Interp,
    Substitute,
    Semiparam,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Empirical,
    Prior,
}

fn parse_bounds(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo: f64 = a.trim().parse().map_err(|_| format!("'{a}' is not a number"))?;
    let hi: f64 = b.trim().parse().map_err(|_| format!("'{b}' is not a number"))?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(format!("need finite lo < hi, got {lo},{hi}"));
    }
    Ok((lo, hi))
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// One observation per line; lines starting with '#' are ignored.
    #[arg(long)]
    pub data: PathBuf,
    /// Raw-scale support lo,hi mapped onto [0,1]. Defaults to the data range padded by 0.1%.
    #[arg(long, value_parser = parse_bounds, allow_hyphen_values = true)]
    pub bounds: Option<(f64, f64)>,
    /// Pyramid depth m; the posterior has 2^m cells.
    #[arg(long, default_value_t = 5)]
    pub level: u32,
    /// e.g. uniform, beta:c=2.5, beta-const:a=2, md:c=1, md-adaptive:b=1,
    /// optionally with center=<reference|file>[,mode=mean|transform].
    #[arg(long, default_value = "uniform")]
    pub prior: String,
    #[arg(long, value_enum, default_value_t = FitLikelihood::Substitute)]
    pub likelihood: FitLikelihood,
    #[arg(long, default_value_t = 5000)]
    pub iters: usize,
    /// Defaults to iters/10.
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = InitArg::Empirical)]
    pub init: InitArg,
    /// Credible bands cover 1 - alpha.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 512)]
    pub grid_points: usize,
    /// Random-walk step for mu (semiparam only).
    #[arg(long, default_value_t = 0.1)]
    pub mu_step: f64,
    /// Random-walk step for log sigma (semiparam only).
    #[arg(long, default_value_t = 0.1)]
    pub log_sigma_step: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Overwrite a non-empty output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Bvm,
    Consistency,
    DeltaDecay,
    PriorMean,
}

#[derive(Debug, Args)]
pub struct LabArgs {
    #[arg(value_enum)]
    pub experiment: Experiment,
    /// Prior family; its level is set by the experiment.
    #[arg(long, default_value = "beta:c=2.5")]
    pub prior: String,
    /// True distribution: uniform, ysquared, linear.
    #[arg(long, default_value = "uniform")]
    pub f0: String,
    /// Sample size(s), comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
    /// Number of cells (power of two) for bvm.
    #[arg(long)]
    pub k: Option<usize>,
    /// Level or level range, e.g. 3..9 or 3,5,7.
    #[arg(long)]
    pub m: Option<String>,
    /// Cells grow as n^e in the consistency experiment.
    #[arg(long, default_value_t = 0.5)]
    pub k_exponent: f64,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub chains: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Replicate seeds for consistency, comma separated. Defaults to --seed.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 1000)]
    pub replicates: usize,
    #[arg(long, default_value_t = 0.5)]
    pub eps: f64,
    #[arg(long, default_value_t = 20000)]
    pub draws: usize,
    /// Allowed deviation in standard errors for prior-mean.
    #[arg(long, default_value_t = 3.0)]
    pub z: f64,
    #[arg(long)]
    pub sd_tol: Option<f64>,
    #[arg(long)]
    pub mean_tol: Option<f64>,
    #[arg(long)]
    pub corr_tol: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

/// Parses `3..9` (inclusive), `3,5,7` or `5`.
pub fn parse_levels(s: &str) -> Result<Vec<u32>, String> {
    let bad = || format!("'{s}' is not a level list or range");
    if let Some((a, b)) = s.split_once("..") {
        let a: u32 = a.trim().parse().map_err(|_| bad())?;
        let b: u32 = b.trim_start_matches('=').trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_ranges() {
        assert_eq!(parse_levels("3..6").unwrap(), vec![3, 4, 5, 6]);
        assert_eq!(parse_levels("2,4").unwrap(), vec![2, 4]);
        assert_eq!(parse_levels("5").unwrap(), vec![5]);
        assert!(parse_levels("6..3").is_err());
    }

    #[test]
    fn bounds() {
        assert_eq!(parse_bounds("-1,2.5").unwrap(), (-1.0, 2.5));
        assert!(parse_bounds("1,1").is_err());
    }
}
