//! Fixed reference distributions on `[0, 1]`, used as true data-generating
//! laws, as centering targets for priors, and as Hellinger/KL baselines.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::quadrature::adaptive_simpson;
use crate::special::{normal_cdf, normal_pdf, normal_quantile};

/// A continuous distribution on `[0, 1]` with strictly increasing quantile
/// function, `Q(0) = 0` and `Q(1) = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Reference {
    /// `Q(y) = y`.
    Uniform,
    /// `Q(y) = y²`, density `1/(2√x)` (unbounded at 0).
    Square,
    /// Density `1/2 + x`.
    Linear,
    /// Normal(`mean`, `sd`²) truncated to `[0, 1]`.
    TruncatedNormal { mean: f64, sd: f64 },
    /// Piecewise-linear quantile function through `knots` at equispaced
    /// `y = i/(len−1)`; `knots` starts at 0 and ends at 1.
    Table { knots: Vec<f64> },
}

impl Reference {
    /// Parses `uniform`, `ysquared`, `linear` or `normal:mean=<f>,sd=<f>`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "uniform" => return Ok(Reference::Uniform),
            "ysquared" | "square" => return Ok(Reference::Square),
            "linear" => return Ok(Reference::Linear),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("normal:") {
            let mut mean = None;
            let mut sd = None;
            for kv in rest.split(',') {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| crate::Error::Config(format!("bad parameter '{kv}'")))?;
                let v: f64 = v
                    .parse()
                    .map_err(|_| crate::Error::Config(format!("bad number '{v}'")))?;
                match k {
                    "mean" => mean = Some(v),
                    "sd" => sd = Some(v),
                    _ => return crate::error::config(format!("unknown parameter '{k}'")),
                }
            }
            let r = Reference::TruncatedNormal {
                mean: mean.unwrap_or(0.5),
                sd: sd.unwrap_or(0.25),
            };
            r.validate()?;
            return Ok(r);
        }
        crate::error::config(format!("unknown reference distribution '{s}'"))
    }

    /// Builds a tabulated reference from interior quantiles at equispaced
    /// `y = i/(len+1)`.
    pub fn from_interior_quantiles(values: &[f64]) -> Result<Self> {
        let mut knots = Vec::with_capacity(values.len() + 2);
        knots.push(0.0);
        knots.extend_from_slice(values);
        knots.push(1.0);
        let r = Reference::Table { knots };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Reference::TruncatedNormal { mean, sd } => {
                if !(mean.is_finite() && *sd > 0.0 && sd.is_finite()) {
                    return domain("truncated normal needs finite mean and sd > 0");
                }
            }
            Reference::Table { knots } => {
                if knots.len() < 2 || knots[0] != 0.0 || *knots.last().unwrap() != 1.0 {
                    return domain("quantile table must run from 0 to 1");
                }
                if knots.windows(2).any(|w| !(w[1] > w[0])) {
                    return domain("quantile table must be strictly increasing");
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn name(&self) -> String {
        match self {
            Reference::Uniform => "uniform".into(),
            Reference::Square => "ysquared".into(),
            Reference::Linear => "linear".into(),
            Reference::TruncatedNormal { mean, sd } => format!("normal:mean={mean},sd={sd}"),
            Reference::Table { knots } => format!("table[{}]", knots.len()),
        }
    }

    fn normal_bounds(mean: f64, sd: f64) -> (f64, f64) {
        (normal_cdf(-mean / sd), normal_cdf((1.0 - mean) / sd))
    }

    pub fn quantile(&self, y: f64) -> f64 {
        let y = y.clamp(0.0, 1.0);
        match self {
            Reference::Uniform => y,
            Reference::Square => y * y,
            Reference::Linear => 0.5 * ((1.0 + 8.0 * y).sqrt() - 1.0),
            Reference::TruncatedNormal { mean, sd } => {
                let (a, b) = Self::normal_bounds(*mean, *sd);
                (mean + sd * normal_quantile(a + y * (b - a))).clamp(0.0, 1.0)
            }
            Reference::Table { knots } => {
                let segs = knots.len() - 1;
                let t = y * segs as f64;
                let i = (t.floor() as usize).min(segs - 1);
                knots[i] + (t - i as f64) * (knots[i + 1] - knots[i])
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match self {
            Reference::Uniform => x,
            Reference::Square => x.sqrt(),
            Reference::Linear => 0.5 * x + 0.5 * x * x,
            Reference::TruncatedNormal { mean, sd } => {
                let (a, b) = Self::normal_bounds(*mean, *sd);
                ((normal_cdf((x - mean) / sd) - a) / (b - a)).clamp(0.0, 1.0)
            }
            Reference::Table { knots } => {
                let segs = knots.len() - 1;
                let i = knots.partition_point(|&k| k < x).clamp(1, segs);
                let frac = (x - knots[i - 1]) / (knots[i] - knots[i - 1]);
                ((i - 1) as f64 + frac) / segs as f64
            }
        }
    }

    /// Probability of the half-open interval `(a, b]`.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        self.cdf(b) - self.cdf(a)
    }

    pub fn density(&self, x: f64) -> f64 {
        match self {
            Reference::Uniform => 1.0,
            Reference::Square => 0.5 / x.sqrt(),
            Reference::Linear => 0.5 + x,
            Reference::TruncatedNormal { mean, sd } => {
                let (a, b) = Self::normal_bounds(*mean, *sd);
                normal_pdf((x - mean) / sd) / (sd * (b - a))
            }
            Reference::Table { knots } => {
                let segs = knots.len() - 1;
                let i = knots.partition_point(|&k| k < x).clamp(1, segs);
                1.0 / (segs as f64 * (knots[i] - knots[i - 1]))
            }
        }
    }

    /// Quantile density `Q'(y) = 1 / f(Q(y))`.
    pub fn quantile_density(&self, y: f64) -> f64 {
        match self {
            Reference::Uniform => 1.0,
            Reference::Square => 2.0 * y,
            Reference::Linear => 2.0 / (1.0 + 8.0 * y).sqrt(),
            Reference::TruncatedNormal { .. } => 1.0 / self.density(self.quantile(y)),
            Reference::Table { knots } => {
                let segs = knots.len() - 1;
                let i = ((y * segs as f64).ceil() as usize).clamp(1, segs);
                segs as f64 * (knots[i] - knots[i - 1])
            }
        }
    }

    /// `∫_a^b √f(x) dx`, closed form where available.
    pub fn sqrt_density_integral(&self, a: f64, b: f64) -> f64 {
        match self {
            Reference::Uniform => b - a,
            Reference::Square => std::f64::consts::FRAC_1_SQRT_2 * (4.0 / 3.0) * (b.powf(0.75) - a.powf(0.75)),
            Reference::Linear => (2.0 / 3.0) * ((0.5 + b).powf(1.5) - (0.5 + a).powf(1.5)),
            Reference::TruncatedNormal { .. } => adaptive_simpson(|x| self.density(x).sqrt(), a, b, 1e-12),
            Reference::Table { knots } => {
                let segs = knots.len() - 1;
                let mut total = 0.0;
                for i in 1..=segs {
                    let lo = knots[i - 1].max(a);
                    let hi = knots[i].min(b);
                    if hi > lo {
                        let f = 1.0 / (segs as f64 * (knots[i] - knots[i - 1]));
                        total += f.sqrt() * (hi - lo);
                    }
                }
                total
            }
        }
    }

    /// Draws one observation by inversion.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.quantile(u)
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}
