//! Posterior functionals of quantile-function draws.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::quantile::DyadicQuantileVector;

pub const DEFAULT_GRID_POINTS: usize = 512;

/// `points` equispaced values `i/(points+1)`, `i = 1..=points`.
pub fn default_grid(points: usize) -> Vec<f64> {
    (1..=points).map(|i| i as f64 / (points + 1) as f64).collect()
}

/// Pointwise posterior summaries over a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryGrid {
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub median: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub alpha: f64,
}

impl SummaryGrid {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Linear-interpolation sample quantile of sorted `v` at level `p`.
pub fn sample_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let i = h.floor() as usize;
    if i + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[i] + (h - i as f64) * (sorted[i + 1] - sorted[i])
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        domain(format!("alpha must lie in (0, 1), got {alpha}"))
    }
}

/// Summarises `eval(draw, x)` over `draws` draws at each grid point.
pub fn summarize_curves<F>(xs: &[f64], draws: usize, alpha: f64, eval: F) -> Result<SummaryGrid>
where
    F: Fn(usize, f64) -> Result<f64> + Sync,
{
    if draws == 0 {
        return Err(Error::Degenerate("no posterior draws to summarise".into()));
    }
    check_alpha(alpha)?;
    let rows: Vec<(f64, f64, f64, f64)> = xs
        .par_iter()
        .map(|&x| {
            let mut v = (0..draws).map(|d| eval(d, x)).collect::<Result<Vec<f64>>>()?;
            let mean = v.iter().sum::<f64>() / draws as f64;
            v.sort_by(f64::total_cmp);
            Ok((
                mean,
                sample_quantile(&v, 0.5),
                sample_quantile(&v, 0.5 * alpha),
                sample_quantile(&v, 1.0 - 0.5 * alpha),
            ))
        })
        .collect::<Result<_>>()?;
    Ok(SummaryGrid {
        x: xs.to_vec(),
        mean: rows.iter().map(|r| r.0).collect(),
        median: rows.iter().map(|r| r.1).collect(),
        lo: rows.iter().map(|r| r.2).collect(),
        hi: rows.iter().map(|r| r.3).collect(),
        alpha,
    })
}

/// Posterior mean, median and `1 − α` equal-tailed band of `Q(y)`.
pub fn posterior_summary(draws: &[DyadicQuantileVector], ys: &[f64], alpha: f64) -> Result<SummaryGrid> {
    summarize_curves(ys, draws.len(), alpha, |d, y| draws[d].quantile_at(y))
}

/// `∫₀^y Q(u) du` for the piecewise-linear `Q`.
fn partial_integral(q: &DyadicQuantileVector, y: f64) -> f64 {
    let k = q.cells();
    let h = 1.0 / k as f64;
    let mut total = 0.0;
    for j in 1..=k {
        let a = (j - 1) as f64 * h;
        if y <= a {
            break;
        }
        let (q0, q1) = (q.knot(j - 1), q.knot(j));
        if y >= a + h && j < k || j == k && y >= 1.0 {
            total += 0.5 * h * (q0 + q1);
        } else {
            let t = y - a;
            total += t * q0 + 0.5 * (q1 - q0) / h * t * t;
            break;
        }
    }
    total
}

/// Lorenz curve `L(y) = ∫₀^y Q / ∫₀¹ Q`.
pub fn lorenz(q: &DyadicQuantileVector, y: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&y) {
        return domain(format!("lorenz needs y in [0, 1], got {y}"));
    }
    let total = partial_integral(q, 1.0);
    if !(total > 0.0) {
        return Err(Error::Degenerate("quantile function integrates to zero".into()));
    }
    if y == 1.0 {
        return Ok(1.0);
    }
    Ok(partial_integral(q, y) / total)
}

/// Both Gini variants: `area = 2∫(1 − L)` and `standard = 2∫(y − L)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gini {
    pub area: f64,
    pub standard: f64,
}

/// `2∫₀¹ L(y) dy`, rounded to a multiple of 2⁻⁵² so both Gini variants are
/// exact in floating point.
fn twice_lorenz_area(q: &DyadicQuantileVector) -> Result<f64> {
    let k = q.cells();
    let h = 1.0 / k as f64;
    let total = partial_integral(q, 1.0);
    if !(total > 0.0) {
        return Err(Error::Degenerate("quantile function integrates to zero".into()));
    }
    // ∫₀¹ L = ∫₀¹ (1 − u) Q(u) du / ∫₀¹ Q
    let mut weighted = 0.0;
    for j in 1..=k {
        let a = (j - 1) as f64 * h;
        let (q0, q1) = (q.knot(j - 1), q.knot(j));
        let d = q1 - q0;
        weighted += h * ((1.0 - a) * (q0 + 0.5 * d) - h * (0.5 * q0 + d / 3.0));
    }
    let scale = 2f64.powi(52);
    Ok(((2.0 * weighted / total) * scale).round() / scale)
}

pub fn gini(q: &DyadicQuantileVector) -> Result<Gini> {
    let t = twice_lorenz_area(q)?;
    Ok(Gini {
        area: 2.0 - t,
        standard: 1.0 - t,
    })
}

/// Posterior mean and SD of both Gini variants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Functionals {
    pub draws: usize,
    pub gini_area_mean: f64,
    pub gini_area_sd: f64,
    pub gini_standard_mean: f64,
    pub gini_standard_sd: f64,
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

pub fn functionals(draws: &[DyadicQuantileVector]) -> Result<Functionals> {
    if draws.is_empty() {
        return Err(Error::Degenerate("no posterior draws to summarise".into()));
    }
    let g = draws.iter().map(gini).collect::<Result<Vec<_>>>()?;
    let (pm, ps) = mean_sd(&g.iter().map(|g| g.area).collect::<Vec<_>>());
    let (sm, ss) = mean_sd(&g.iter().map(|g| g.standard).collect::<Vec<_>>());
    Ok(Functionals {
        draws: draws.len(),
        gini_area_mean: pm,
        gini_area_sd: ps,
        gini_standard_mean: sm,
        gini_standard_sd: ss,
    })
}

/// Band for the shift function `D(x) = Q₂(F₁(x)) − x`, pairing draws by index.
pub fn doksum_shift(
    q1: &[DyadicQuantileVector],
    q2: &[DyadicQuantileVector],
    xs: &[f64],
    alpha: f64,
) -> Result<SummaryGrid> {
    let n = q1.len().min(q2.len());
    summarize_curves(xs, n, alpha, |d, x| Ok(q2[d].quantile_at(q1[d].cdf_at(x)?)? - x))
}

/// Band for the comparison distribution `π(y) = F₂(Q₁(y))`, pairing draws by index.
pub fn parzen_comparison(
    q1: &[DyadicQuantileVector],
    q2: &[DyadicQuantileVector],
    ys: &[f64],
    alpha: f64,
) -> Result<SummaryGrid> {
    let n = q1.len().min(q2.len());
    summarize_curves(ys, n, alpha, |d, y| q2[d].cdf_at(q1[d].quantile_at(y)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::{sample_prior, PriorSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn squared(m: u32) -> DyadicQuantileVector {
        let k = 1usize << m;
        DyadicQuantileVector::new(m, (1..k).map(|j| (j as f64 / k as f64).powi(2)).collect()).unwrap()
    }

    #[test]
    fn single_draw_has_zero_width_band() {
        let q = DyadicQuantileVector::new(2, vec![0.1, 0.3, 0.7]).unwrap();
        let s = posterior_summary(std::slice::from_ref(&q), &default_grid(9), 0.1).unwrap();
        for i in 0..9 {
            let want = q.quantile_at(s.x[i]).unwrap();
            assert_eq!(s.mean[i], want);
            assert_eq!(s.lo[i], s.hi[i]);
        }
        assert!(posterior_summary(&[], &default_grid(3), 0.1).is_err());
    }

    #[test]
    fn bands_are_nested() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = PriorSpec::parse("beta:c=1", 4).unwrap();
        let draws: Vec<_> = (0..200).map(|_| sample_prior(&spec, &mut rng).unwrap()).collect();
        let s = posterior_summary(&draws, &default_grid(64), 0.05).unwrap();
        for i in 0..s.len() {
            assert!(s.lo[i] <= s.median[i] && s.median[i] <= s.hi[i]);
            assert!((0.0..=1.0).contains(&s.mean[i]));
        }
    }

    #[test]
    fn lorenz_examples() {
        let id = DyadicQuantileVector::identity(3);
        assert!((lorenz(&id, 0.5).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(lorenz(&id, 1.0).unwrap(), 1.0);
        assert_eq!(lorenz(&id, 0.0).unwrap(), 0.0);
        let sq = squared(10);
        assert!((lorenz(&sq, 0.5).unwrap() - 0.125).abs() < 1e-5);
        assert!(lorenz(&id, 1.5).is_err());
    }

    #[test]
    fn lorenz_is_convex_and_below_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = PriorSpec::parse("beta-const:a=2", 5).unwrap();
        let ys: Vec<f64> = (0..=512).map(|i| i as f64 / 512.0).collect();
        for _ in 0..50 {
            let q = sample_prior(&spec, &mut rng).unwrap();
            let l: Vec<f64> = ys.iter().map(|&y| lorenz(&q, y).unwrap()).collect();
            for (i, w) in l.windows(3).enumerate() {
                assert!(w[2] - w[1] >= w[1] - w[0] - 1e-14, "at {i}");
            }
            assert!(ys.iter().zip(&l).all(|(y, l)| *l <= y + 1e-15));
        }
    }

    #[test]
    fn gini_examples() {
        let g = gini(&DyadicQuantileVector::identity(4)).unwrap();
        assert!((g.standard - 1.0 / 3.0).abs() < 1e-12);
        assert!((g.area - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(g.area - g.standard, 1.0);
        // nearly all mass at the top: extreme inequality
        let v: Vec<f64> = (1..256).map(|j| j as f64 * 1e-9).collect();
        let g = gini(&DyadicQuantileVector::with_positive_gaps(8, v).unwrap()).unwrap();
        assert!(g.standard > 0.99 && g.standard < 1.0);
        // nearly flat quantile function: near equality
        let v: Vec<f64> = (1..256).map(|j| 0.999 + j as f64 * 1e-6 / 256.0).collect();
        let g = gini(&DyadicQuantileVector::with_positive_gaps(8, v).unwrap()).unwrap();
        assert!(g.standard < 0.01 && g.standard >= 0.0);
    }

    #[test]
    fn gini_identity_holds_on_prior_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = PriorSpec::parse("uniform", 6).unwrap();
        for _ in 0..500 {
            let g = gini(&sample_prior(&spec, &mut rng).unwrap()).unwrap();
            assert_eq!(g.area - g.standard, 1.0);
            assert!((0.0..1.0).contains(&g.standard));
        }
    }

    #[test]
    fn doksum_examples() {
        let id = vec![DyadicQuantileVector::identity(3)];
        let xs = default_grid(15);
        let d = doksum_shift(&id, &id, &xs, 0.1).unwrap();
        assert!(d.mean.iter().all(|v| v.abs() < 1e-15));
        let sq = vec![squared(3)];
        let d = doksum_shift(&id, &sq, &[0.5], 0.1).unwrap();
        assert!((d.mean[0] + 0.25).abs() < 1e-15);
        let shifted = vec![DyadicQuantileVector::new(2, vec![0.35, 0.6, 0.85]).unwrap()];
        let base = vec![DyadicQuantileVector::new(2, vec![0.25, 0.5, 0.75]).unwrap()];
        let d = doksum_shift(&base, &shifted, &[0.3, 0.5, 0.7], 0.1).unwrap();
        assert!(d.mean.iter().all(|v| (v - 0.1).abs() < 1e-12));
    }

    #[test]
    fn parzen_examples() {
        let id = vec![DyadicQuantileVector::identity(3)];
        let p = parzen_comparison(&id, &id, &[0.3], 0.1).unwrap();
        assert!((p.mean[0] - 0.3).abs() < 1e-15);
        let sq = vec![squared(8)];
        let p = parzen_comparison(&id, &sq, &[0.25], 0.1).unwrap();
        assert!((p.mean[0] - 0.5).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = PriorSpec::parse("uniform", 4).unwrap();
        let a: Vec<_> = (0..20).map(|_| sample_prior(&spec, &mut rng).unwrap()).collect();
        let b: Vec<_> = (0..20).map(|_| sample_prior(&spec, &mut rng).unwrap()).collect();
        let ys = default_grid(100);
        for d in 0..20 {
            let s = parzen_comparison(&a[d..=d], &b[d..=d], &ys, 0.1).unwrap();
            assert!(s.mean.windows(2).all(|w| w[1] >= w[0]));
        }
    }
}
