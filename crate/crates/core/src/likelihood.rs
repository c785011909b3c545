//! Likelihoods of a quantile vector: the exact random-histogram
//! (linear-interpolation) likelihood, the multinomial substitute likelihood,
//! their node-by-node factorizations, limiting distance functions and the
//! normal-location-scale semiparametric variant.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::quantile::{DyadicQuantileVector, UnitAffineMap};
use crate::special::{ln_binomial, ln_factorial, normal_quantile};

/// Lower clip used in place of `Φ⁻¹(0)` for the outer semiparametric cells.
pub const SEMIPARAM_CLIP: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LikelihoodKind {
    Interp,
    Substitute,
}

impl std::str::FromStr for LikelihoodKind {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interp" => Ok(LikelihoodKind::Interp),
            "substitute" => Ok(LikelihoodKind::Substitute),
            _ => crate::error::config(format!("unknown likelihood '{s}'")),
        }
    }
}

impl std::fmt::Display for LikelihoodKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LikelihoodKind::Interp => "interp",
            LikelihoodKind::Substitute => "substitute",
        })
    }
}

/// A sorted sample on `[0, 1]` together with the map back to raw scale.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
    affine: UnitAffineMap,
    ties: bool,
}

impl Dataset {
    /// Data already on the unit scale.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::with_map(values, UnitAffineMap::identity())
    }

    /// Maps raw observations through `affine` onto `[0, 1]`.
    pub fn from_raw(raw: &[f64], affine: UnitAffineMap) -> Result<Self> {
        Self::with_map(raw.iter().map(|&x| affine.forward(x)).collect(), affine)
    }

    fn with_map(mut values: Vec<f64>, affine: UnitAffineMap) -> Result<Self> {
        if let Some(x) = values.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return domain(format!("observation {x} lies outside [0, 1]"));
        }
        values.sort_by(f64::total_cmp);
        let ties = values.windows(2).any(|w| w[0] == w[1]);
        Ok(Dataset { values, affine, ties })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn has_ties(&self) -> bool {
        self.ties
    }

    pub fn affine(&self) -> &UnitAffineMap {
        &self.affine
    }

    /// Number of observations `≤ t`, with `t ≤ 0` counting nothing so that
    /// points at 0 land in the first cell.
    pub fn rank(&self, t: f64) -> usize {
        if t <= 0.0 {
            0
        } else {
            self.values.partition_point(|&x| x <= t)
        }
    }

    /// `M_n(a, b)`: observations in `(a, b]`.
    pub fn count_in(&self, a: f64, b: f64) -> usize {
        self.rank(b).saturating_sub(self.rank(a))
    }

    /// `F_n⁻¹(p) = x_(⌈np⌉)`.
    pub fn empirical_quantile(&self, p: f64) -> Option<f64> {
        let n = self.values.len();
        if n == 0 {
            return None;
        }
        let i = ((p * n as f64).ceil() as usize).clamp(1, n);
        Some(self.values[i - 1])
    }
}

/// Counts per cell `(q_{j−1}, q_j]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellCounts(pub Vec<usize>);

impl CellCounts {
    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }
}

pub fn cell_counts(data: &Dataset, q: &DyadicQuantileVector) -> CellCounts {
    let k = q.cells();
    let mut prev = 0;
    let mut out = Vec::with_capacity(k);
    for j in 1..=k {
        let r = if j == k { data.len() } else { data.rank(q.knot(j)) };
        out.push(r - prev);
        prev = r;
    }
    CellCounts(out)
}

fn check_gaps(q: &DyadicQuantileVector) -> Result<()> {
    match (1..=q.cells()).find(|&j| !(q.gap(j) > 0.0)) {
        Some(j) => domain(format!("nonpositive gap at cell {j}")),
        None => Ok(()),
    }
}

/// `Σ_j N_j [−log k − log(q_j − q_{j−1})]`.
pub fn log_lik_interp(data: &Dataset, q: &DyadicQuantileVector) -> Result<f64> {
    check_gaps(q)?;
    let ln_k = (q.cells() as f64).ln();
    let counts = cell_counts(data, q);
    Ok(counts
        .0
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, &c)| c as f64 * (-ln_k - q.gap(i + 1).ln()))
        .sum())
}

/// `log n! − Σ log N_j! − n log k`.
pub fn log_lik_substitute(data: &Dataset, q: &DyadicQuantileVector) -> f64 {
    let counts = cell_counts(data, q);
    substitute_from_counts(&counts.0, q.cells())
}

pub(crate) fn substitute_from_counts(counts: &[usize], k: usize) -> f64 {
    let n: usize = counts.iter().sum();
    ln_factorial(n as u64) - counts.iter().map(|&c| ln_factorial(c as u64)).sum::<f64>() - n as f64 * (k as f64).ln()
}

fn check_inside(q: f64, a: f64, b: f64) -> Result<()> {
    if a < q && q < b {
        Ok(())
    } else {
        domain(format!("{q} is not inside ({a}, {b})"))
    }
}

/// Log of `[½(b−a)/(q−a)]^{M(a,q)} [½(b−a)/(b−q)]^{M(q,b)}`.
pub fn kappa_bar(data: &Dataset, q: f64, a: f64, b: f64) -> Result<f64> {
    check_inside(q, a, b)?;
    let left = data.count_in(a, q) as f64;
    let right = data.count_in(q, b) as f64;
    let half = 0.5 * (b - a);
    let mut out = 0.0;
    if left > 0.0 {
        out += left * (half / (q - a)).ln();
    }
    if right > 0.0 {
        out += right * (half / (b - q)).ln();
    }
    Ok(out)
}

/// Log of the symmetric binomial probability `C(M(a,b), M(a,q)) 2^{−M(a,b)}`.
pub fn kappa_sub(data: &Dataset, q: f64, a: f64, b: f64) -> Result<f64> {
    check_inside(q, a, b)?;
    let total = data.count_in(a, b) as u64;
    let left = data.count_in(a, q) as u64;
    Ok(ln_binomial(total, left) - total as f64 * std::f64::consts::LN_2)
}

/// Sum of node factors over the pyramid, each node on its parent interval.
pub fn factorized_log_lik(data: &Dataset, q: &DyadicQuantileVector, kind: LikelihoodKind) -> Result<f64> {
    let k = q.cells();
    let mut total = 0.0;
    for g in 1..k {
        let step = 1usize << g.trailing_zeros();
        let (a, x, b) = (q.knot(g - step), q.knot(g), q.knot(g + step));
        total += match kind {
            LikelihoodKind::Interp => kappa_bar(data, x, a, b)?,
            LikelihoodKind::Substitute => kappa_sub(data, x, a, b)?,
        };
    }
    Ok(total)
}

pub fn log_lik(data: &Dataset, q: &DyadicQuantileVector, kind: LikelihoodKind) -> Result<f64> {
    match kind {
        LikelihoodKind::Interp => log_lik_interp(data, q),
        LikelihoodKind::Substitute => Ok(log_lik_substitute(data, q)),
    }
}

fn cell_masses<F: Fn(f64) -> f64>(q: &DyadicQuantileVector, cdf: F) -> Vec<f64> {
    let knots = q.knots();
    knots.windows(2).map(|w| cdf(w[1]) - cdf(w[0])).collect()
}

/// `λ̄(q) = Σ F0(q_{j−1}, q_j] log{(q_j − q_{j−1}) k}`.
pub fn lambda_bar<F: Fn(f64) -> f64>(q: &DyadicQuantileVector, cdf: F) -> f64 {
    let k = q.cells() as f64;
    cell_masses(q, cdf)
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(i, &p)| p * (q.gap(i + 1) * k).ln())
        .sum()
}

/// `λ(q) = Σ p_j log(p_j k)` with `p_j = F0(q_{j−1}, q_j]`.
pub fn lambda_kl<F: Fn(f64) -> f64>(q: &DyadicQuantileVector, cdf: F) -> f64 {
    let k = q.cells() as f64;
    cell_masses(q, cdf)
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * (p * k).ln())
        .sum()
}

/// Quadratic expansion `−½nkΣ(p̃_j − 1/k)² + ½Σ log p̃_j` of the substitute
/// log-likelihood, up to a `q`-free constant.
pub fn approx_log_lik_substitute(data: &Dataset, q: &DyadicQuantileVector) -> Result<f64> {
    let counts = cell_counts(data, q);
    approx_from_counts(&counts.0)
}

pub(crate) fn approx_from_counts(counts: &[usize]) -> Result<f64> {
    if let Some(j) = counts.iter().position(|&c| c == 0) {
        return domain(format!("cell {} is empty", j + 1));
    }
    let n: usize = counts.iter().sum();
    let k = counts.len() as f64;
    let n_f = n as f64;
    let mut quad = 0.0;
    let mut logs = 0.0;
    for &c in counts {
        let p = c as f64 / n_f;
        quad += (p - 1.0 / k).powi(2);
        logs += p.ln();
    }
    Ok(-0.5 * n_f * k * quad + 0.5 * logs)
}

/// Standard-normal knots `z_0..z_k` of a uniform-scale quantile vector, the
/// outer two clipped at `Φ⁻¹(1e-8)` and `Φ⁻¹(1 − 1e-8)`.
pub fn semiparam_knots(q_unif: &DyadicQuantileVector) -> Vec<f64> {
    let k = q_unif.cells();
    let mut z = Vec::with_capacity(k + 1);
    z.push(normal_quantile(SEMIPARAM_CLIP));
    z.extend(q_unif.values().iter().map(|&u| normal_quantile(u)));
    z.push(normal_quantile(1.0 - SEMIPARAM_CLIP));
    z
}

/// Random-histogram log-likelihood for the location-scale family
/// `μ + σΦ⁻¹(Q_unif)`. `raw` must be sorted ascending. Counting uses
/// `(μ + σz_{j−1}, μ + σz_j]` with the outer boundaries at ∓∞.
pub fn log_lik_semiparam(mu: f64, sigma: f64, q_unif: &DyadicQuantileVector, raw: &[f64]) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return domain(format!("sigma must be positive, got {sigma}"));
    }
    if raw.windows(2).any(|w| w[1] < w[0]) {
        return domain("raw data must be sorted");
    }
    if !q_unif.values().iter().all(|&u| u > 0.0 && u < 1.0) {
        return domain("semiparametric quantiles must lie strictly inside (0, 1)");
    }
    let z = semiparam_knots(q_unif);
    Ok(semiparam_from_knots(mu, sigma, &z, raw))
}

pub(crate) fn semiparam_from_knots(mu: f64, sigma: f64, z: &[f64], raw: &[f64]) -> f64 {
    let n = raw.len();
    if n == 0 {
        return 0.0;
    }
    let k = z.len() - 1;
    let ln_k = (k as f64).ln();
    let mut prev = 0;
    let mut total = -(n as f64) * sigma.ln();
    for j in 1..=k {
        let r = if j == k {
            n
        } else {
            let t = mu + sigma * z[j];
            raw.partition_point(|&x| x <= t)
        };
        let c = r - prev;
        if c > 0 {
            total += c as f64 * (-ln_k - (z[j] - z[j - 1]).ln());
        }
        prev = r;
    }
    total
}
