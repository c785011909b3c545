//! Quantile-pyramid priors.
//!
//! At level `l` every new quantile is placed inside its parent interval
//! `[left, right]` as `left·(1 − V) + right·V`, with the interpolation
//! weight `V` drawn from a [`VLaw`]. A [`PriorSpec`] assigns one law to each
//! of the `2^m − 1` nodes down to level `m`.

use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{config, domain, Error, Result};
use crate::quadrature::adaptive_simpson;
use crate::quantile::DyadicQuantileVector;
use crate::reference::Reference;
use crate::special::{beta_inc, ln_beta, ln_gamma};

/// Samplers clamp weights to `[W_CLAMP, 1 − W_CLAMP]`.
pub const W_CLAMP: f64 = 1e-12;

/// Bisection tolerance for median-Dirichlet inversion.
pub const MD_BISECTION_TOL: f64 = 1e-10;

/// Law of a single interpolation weight `V ∈ (0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum VLaw {
    /// Beta(a/2, a/2).
    SymmetricBeta {
        a: f64,
    },
    /// Beta(alpha, beta).
    AsymmetricBeta {
        alpha: f64,
        beta: f64,
    },
    /// Median of a Dirichlet process with concentration `a` and uniform base.
    MedianDirichlet {
        a: f64,
    },
    Uniform,
    /// Point mass; its "density" is 0 at `value` and −∞ elsewhere.
    Degenerate {
        value: f64,
    },
}

impl VLaw {
    fn beta_params(&self) -> Option<(f64, f64)> {
        match *self {
            VLaw::SymmetricBeta { a } => Some((0.5 * a, 0.5 * a)),
            VLaw::AsymmetricBeta { alpha, beta } => Some((alpha, beta)),
            VLaw::Uniform => Some((1.0, 1.0)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            VLaw::SymmetricBeta { a } | VLaw::MedianDirichlet { a } => a > 0.0 && a.is_finite(),
            VLaw::AsymmetricBeta { alpha, beta } => alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite(),
            VLaw::Uniform => true,
            VLaw::Degenerate { value } => value > 0.0 && value < 1.0,
        };
        if ok {
            Ok(())
        } else {
            domain(format!("invalid weight law {self:?}"))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let v = match *self {
            VLaw::Uniform => rng.random::<f64>(),
            VLaw::SymmetricBeta { .. } | VLaw::AsymmetricBeta { .. } => {
                let (a, b) = self.beta_params().unwrap();
                Beta::new(a, b).expect("validated beta parameters").sample(rng)
            }
            VLaw::MedianDirichlet { a } => md_sample(a, rng),
            VLaw::Degenerate { value } => value,
        };
        v.clamp(W_CLAMP, 1.0 - W_CLAMP)
    }

    pub fn log_density(&self, v: f64) -> f64 {
        if !(v > 0.0 && v < 1.0) {
            return f64::NEG_INFINITY;
        }
        match *self {
            VLaw::Uniform => 0.0,
            VLaw::SymmetricBeta { .. } | VLaw::AsymmetricBeta { .. } => {
                let (a, b) = self.beta_params().unwrap();
                (a - 1.0) * v.ln() + (b - 1.0) * (-v).ln_1p() - ln_beta(a, b)
            }
            VLaw::MedianDirichlet { a } => md_density(a, v).ln(),
            VLaw::Degenerate { value } => {
                if (v - value).abs() <= 1e-9 {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            VLaw::AsymmetricBeta { alpha, beta } => alpha / (alpha + beta),
            VLaw::Degenerate { value } => value,
            _ => 0.5,
        }
    }

    /// `max(E V², E (1−V)²)`.
    pub fn max_second_moment(&self) -> f64 {
        match *self {
            VLaw::Degenerate { value } => value.max(1.0 - value).powi(2),
            VLaw::MedianDirichlet { a } => tau2(a) + 0.25,
            _ => {
                let (a, b) = self.beta_params().unwrap();
                let var = a * b / ((a + b).powi(2) * (a + b + 1.0));
                let m = a / (a + b);
                var + m.max(1.0 - m).powi(2)
            }
        }
    }
}

/// Rule mapping a level `m ≥ 1` to a concentration `a_m > 0`.
#[derive(Clone, Debug, PartialEq)]
pub enum LevelSchedule {
    Constant(f64),
    /// `a_m = c · m³`.
    Cubic(f64),
    /// `a_m = table[m − 1]`.
    Table(Vec<f64>),
}

impl LevelSchedule {
    pub fn at(&self, m: u32) -> f64 {
        match self {
            LevelSchedule::Constant(a) => *a,
            LevelSchedule::Cubic(c) => c * f64::from(m).powi(3),
            LevelSchedule::Table(t) => t[(m as usize - 1).min(t.len() - 1)],
        }
    }

    pub fn validate(&self, levels: u32) -> Result<()> {
        if let LevelSchedule::Table(t) = self {
            if t.len() < levels as usize {
                return config(format!("schedule table covers {} of {levels} levels", t.len()));
            }
        }
        for m in 1..=levels {
            let a = self.at(m);
            if !(a > 0.0 && a.is_finite()) {
                return config(format!("schedule gives a_{m} = {a}, need a positive value"));
            }
        }
        Ok(())
    }
}

/// Which weight law the pyramid uses at each node.
#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    /// Symmetric Beta(a_m/2, a_m/2).
    Beta(LevelSchedule),
    Uniform,
    /// MD(a_m).
    MedianDirichlet(LevelSchedule),
    /// MD(b_m / parent gap), adapting to the realised previous level.
    MdAdaptive(LevelSchedule),
    /// Every weight fixed at the given value.
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Centering {
    None,
    /// Weight means chosen so that `E Q_m(j/2^m) = Q_null(j/2^m)`.
    Mean(Reference),
    /// `Q = Q_null ∘ Q_unif` with an uncentered pyramid `Q_unif`.
    Transform(Reference),
}

/// A fully specified pyramid prior down to `level`.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorSpec {
    level: u32,
    family: Family,
    centering: Centering,
    means: Option<Vec<Vec<f64>>>,
}

impl PriorSpec {
    pub fn new(level: u32, family: Family, centering: Centering) -> Result<Self> {
        if level == 0 || level > crate::quantile::MAX_LEVEL {
            return config(format!("level {level} out of range"));
        }
        match &family {
            Family::Beta(s) | Family::MedianDirichlet(s) | Family::MdAdaptive(s) => s.validate(level)?,
            Family::Fixed(v) => VLaw::Degenerate { value: *v }.validate()?,
            Family::Uniform => {}
        }
        let means = match &centering {
            Centering::Mean(r) => {
                if !matches!(family, Family::Beta(_) | Family::Uniform) {
                    return config("mean centering needs a beta or uniform family");
                }
                Some(centering_means(r, level)?)
            }
            Centering::Transform(r) => {
                r.validate()?;
                None
            }
            Centering::None => None,
        };
        Ok(PriorSpec {
            level,
            family,
            centering,
            means,
        })
    }

    /// All weights uniform, no centering.
    pub fn uniform(level: u32) -> Self {
        PriorSpec::new(level, Family::Uniform, Centering::None).expect("valid uniform prior")
    }

    /// Parses the prior grammar, e.g. `beta:c=2.5`, `beta-const:a=2`,
    /// `uniform`, `md:c=1`, `md-adaptive:b=0.5`, `fixed:v=0.5`, each
    /// optionally followed by `center=<name>` and `mode=mean|transform`.
    pub fn parse(s: &str, level: u32) -> Result<Self> {
        Self::parse_with(s, level, Reference::parse)
    }

    /// Like [`parse`](Self::parse) with a custom resolver for `center=` values.
    pub fn parse_with<F>(s: &str, level: u32, resolve: F) -> Result<Self>
    where
        F: Fn(&str) -> Result<Reference>,
    {
        let s = s.trim();
        let (name, params) = match s.split_once(':') {
            Some((n, p)) => (n, p),
            None => match s.split_once(',') {
                Some((n, p)) => (n, p),
                None => (s, ""),
            },
        };
        let mut kv = Vec::new();
        for item in params.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("prior parameter '{item}' is not key=value")))?;
            kv.push((k.trim(), v.trim()));
        }
        let num = |key: &str| -> Result<Option<f64>> {
            kv.iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| {
                    v.parse::<f64>()
                        .map_err(|_| Error::Config(format!("prior parameter {key}='{v}' is not a number")))
                })
                .transpose()
        };
        let need = |key: &str| -> Result<f64> {
            num(key)?.ok_or_else(|| Error::Config(format!("prior '{name}' needs {key}=<float>")))
        };
        let family = match name {
            "beta" => Family::Beta(LevelSchedule::Cubic(need("c")?)),
            "beta-const" => Family::Beta(LevelSchedule::Constant(need("a")?)),
            "uniform" => Family::Uniform,
            "md" => Family::MedianDirichlet(LevelSchedule::Cubic(need("c")?)),
            "md-adaptive" => Family::MdAdaptive(LevelSchedule::Cubic(need("b")?)),
            "fixed" => Family::Fixed(num("v")?.unwrap_or(0.5)),
            other => return config(format!("unknown prior family '{other}'")),
        };
        let allowed: &[&str] = match name {
            "beta" | "md" => &["c", "center", "mode"],
            "beta-const" => &["a", "center", "mode"],
            "md-adaptive" => &["b", "center", "mode"],
            "fixed" => &["v", "center", "mode"],
            _ => &["center", "mode"],
        };
        if let Some((k, _)) = kv.iter().find(|(k, _)| !allowed.contains(k)) {
            return config(format!("prior '{name}' does not take parameter '{k}'"));
        }
        let center = kv.iter().find(|(k, _)| *k == "center").map(|(_, v)| *v);
        let mode = kv.iter().find(|(k, _)| *k == "mode").map(|(_, v)| *v);
        let centering = match (center, mode) {
            (None, None) => Centering::None,
            (None, Some(_)) => return config("mode= needs center="),
            (Some(c), None | Some("mean")) => Centering::Mean(resolve(c)?),
            (Some(c), Some("transform")) => Centering::Transform(resolve(c)?),
            (Some(_), Some(m)) => return config(format!("unknown centering mode '{m}'")),
        };
        PriorSpec::new(level, family, centering)
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn centering(&self) -> &Centering {
        &self.centering
    }

    /// Same law at a different depth.
    pub fn with_level(&self, level: u32) -> Result<Self> {
        PriorSpec::new(level, self.family.clone(), self.centering.clone())
    }

    /// Law of node `index` (0-based, left to right) at pyramid level `l`,
    /// given the width of its parent interval.
    pub fn node_law(&self, l: u32, index: usize, parent_gap: f64) -> VLaw {
        let mean = self.means.as_ref().map(|m| m[l as usize - 1][index]);
        match (&self.family, mean) {
            (Family::Beta(s), None) => VLaw::SymmetricBeta { a: s.at(l) },
            (Family::Beta(s), Some(mu)) => {
                let a = s.at(l);
                VLaw::AsymmetricBeta {
                    alpha: a * mu,
                    beta: a * (1.0 - mu),
                }
            }
            (Family::Uniform, None) => VLaw::Uniform,
            (Family::Uniform, Some(mu)) => VLaw::AsymmetricBeta {
                alpha: 2.0 * mu,
                beta: 2.0 * (1.0 - mu),
            },
            (Family::MedianDirichlet(s), _) => VLaw::MedianDirichlet { a: s.at(l) },
            (Family::MdAdaptive(s), _) => VLaw::MedianDirichlet {
                a: s.at(l) / parent_gap,
            },
            (Family::Fixed(v), _) => VLaw::Degenerate { value: *v },
        }
    }

    /// Log-density contribution of the node at global knot `g` of a level-m
    /// vector whose knots are given by `knot`.
    pub(crate) fn node_term(&self, knot: &impl Fn(usize) -> f64, g: usize) -> f64 {
        let tz = g.trailing_zeros();
        let step = 1usize << tz;
        let l = self.level - tz;
        let index = (g / step - 1) / 2;
        let left = knot(g - step);
        let right = knot(g + step);
        let gap = right - left;
        if !(gap > 0.0) {
            return f64::NEG_INFINITY;
        }
        let v = (knot(g) - left) / gap;
        self.node_law(l, index, gap).log_density(v) - gap.ln()
    }

    /// Nodes whose prior term involves knot `g`: the node itself plus every
    /// descendant having `g` as a parent endpoint.
    pub(crate) fn nodes_touching(&self, g: usize) -> impl Iterator<Item = usize> {
        let step = 1usize << g.trailing_zeros();
        let below = (0..g.trailing_zeros()).map(|t| 1usize << t);
        std::iter::once(g).chain(below.flat_map(move |d| {
            debug_assert!(d < step);
            [g - d, g + d]
        }))
    }

    /// Prior log-density contributions that change when knot `g` moves.
    /// `knots` holds `q_0 = 0, q_1, …, q_k = 1`.
    pub(crate) fn local_log_density(&self, knots: &[f64], g: usize) -> f64 {
        match &self.centering {
            Centering::Transform(r) => {
                let u = |j: usize| r.cdf(knots[j]);
                let nodes: f64 = self.nodes_touching(g).map(|n| self.node_term(&u, n)).sum();
                nodes + r.density(knots[g]).ln()
            }
            _ => {
                let knot = |j: usize| knots[j];
                self.nodes_touching(g).map(|n| self.node_term(&knot, n)).sum()
            }
        }
    }
}

/// Draws a pyramid top-down. Weights too small to move a knot in floating
/// point are nudged one ulp inward; a gap with no interior float left fails
/// with [`Error::Numeric`], which only very U-shaped laws reach.
pub fn sample_prior<R: Rng + ?Sized>(spec: &PriorSpec, rng: &mut R) -> Result<DyadicQuantileVector> {
    let mut knots = vec![0.0, 1.0];
    for l in 1..=spec.level {
        let mut next = Vec::with_capacity(2 * knots.len() - 1);
        next.push(0.0);
        for i in 0..knots.len() - 1 {
            let (lo, hi) = (knots[i], knots[i + 1]);
            let v = spec.node_law(l, i, hi - lo).sample(rng);
            let mut x = lo * (1.0 - v) + hi * v;
            if !(x > lo && x < hi) {
                // the weight is below the float resolution of this gap
                x = if v < 0.5 { lo.next_up() } else { hi.next_down() };
                if !(x > lo && x < hi) {
                    return Err(Error::Numeric(format!(
                        "gap [{lo}, {hi}] is too narrow to split at level {l}"
                    )));
                }
            }
            next.push(x);
            next.push(hi);
        }
        knots = next;
    }
    if let Centering::Transform(r) = &spec.centering {
        for x in knots.iter_mut() {
            *x = r.quantile(*x);
        }
    }
    DyadicQuantileVector::with_positive_gaps(spec.level, knots[1..knots.len() - 1].to_vec())
}

/// Log prior density of `q` under the pyramid: for every node,
/// `log g(v) − log(parent gap)` with `v` its relative position.
pub fn log_prior_density(spec: &PriorSpec, q: &DyadicQuantileVector) -> Result<f64> {
    if q.level() != spec.level {
        return domain(format!(
            "prior is at level {}, vector at level {}",
            spec.level,
            q.level()
        ));
    }
    if let Some(j) = (1..=q.cells()).find(|&j| !(q.gap(j) > 0.0)) {
        return domain(format!("nonpositive gap at cell {j}"));
    }
    let k = q.cells();
    let total = match &spec.centering {
        Centering::Transform(r) => {
            let u = |j: usize| r.cdf(q.knot(j));
            let nodes: f64 = (1..k).map(|g| spec.node_term(&u, g)).sum();
            let jac: f64 = q.values().iter().map(|&x| r.density(x).ln()).sum();
            nodes + jac
        }
        _ => {
            let knot = |j: usize| q.knot(j);
            (1..k).map(|g| spec.node_term(&knot, g)).sum()
        }
    };
    Ok(total)
}

/// Weight means that centre the pyramid at `q_null`: for node `j` (odd) at
/// level `l`, `(Q(j/2^l) − Q((j−1)/2^l)) / (Q((j+1)/2^l) − Q((j−1)/2^l))`.
/// Returned as `out[l − 1][i]` for node `j = 2i + 1`.
pub fn centering_means(q_null: &Reference, m: u32) -> Result<Vec<Vec<f64>>> {
    q_null.validate()?;
    let k = 1usize << m;
    let grid: Vec<f64> = (0..=k).map(|j| q_null.quantile(j as f64 / k as f64)).collect();
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return domain("centering quantile function is not strictly increasing");
    }
    let mut out = Vec::with_capacity(m as usize);
    for l in 1..=m {
        let step = 1usize << (m - l);
        let nodes = 1usize << (l - 1);
        let row = (0..nodes)
            .map(|i| {
                let g = (2 * i + 1) * step;
                (grid[g] - grid[g - step]) / (grid[g + step] - grid[g - step])
            })
            .collect();
        out.push(row);
    }
    Ok(out)
}

/// `Q(y) = Q_null(Q_unif(y))`.
#[derive(Clone, Debug)]
pub struct TransformCentered {
    pub unif: DyadicQuantileVector,
    pub null: Reference,
}

impl TransformCentered {
    pub fn quantile_at(&self, y: f64) -> Result<f64> {
        Ok(self.null.quantile(self.unif.quantile_at(y)?))
    }
}

pub fn transform_center(q_unif: DyadicQuantileVector, q_null: Reference) -> TransformCentered {
    TransformCentered {
        unif: q_unif,
        null: q_null,
    }
}

/// Median-Dirichlet cdf `H_a(x) = P{Beta(ax, a(1−x)) ≥ 1/2} = I_{1/2}(a(1−x), ax)`.
pub fn md_cdf(a: f64, x: f64) -> Result<f64> {
    if !(a > 0.0 && a.is_finite()) {
        return domain(format!("md_cdf needs a > 0, got {a}"));
    }
    Ok(md_cdf_unchecked(a, x))
}

fn md_cdf_unchecked(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        beta_inc(a * (1.0 - x), a * x, 0.5)
    }
}

/// MD(a) density by a five-point central difference of [`md_cdf`].
pub fn md_density(a: f64, x: f64) -> f64 {
    if !(x > 0.0 && x < 1.0) {
        return 0.0;
    }
    let h = (1e-3f64).min(0.25 * x).min(0.25 * (1.0 - x));
    let f = |t: f64| md_cdf_unchecked(a, t);
    let d = (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h);
    d.max(0.0)
}

/// Solves `H_a(x) = u` by bisection to [`MD_BISECTION_TOL`].
pub fn md_quantile(a: f64, u: f64) -> f64 {
    if u <= 0.0 {
        return 0.0;
    }
    if u >= 1.0 {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > MD_BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if md_cdf_unchecked(a, mid) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn md_sample<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    md_quantile(a, rng.random::<f64>())
}

/// Mean of `V | V ≥ 1/2` for `V ~ Beta(b, b)`:
/// `Γ(2b)/Γ(b)² (1/4)^b {1/b + Γ(1/2)Γ(b)/Γ(b + 1/2)}`.
pub fn xi(b: f64) -> Result<f64> {
    if !(b > 0.0 && b.is_finite()) {
        return domain(format!("xi needs b > 0, got {b}"));
    }
    let ln_front = ln_gamma(2.0 * b) - 2.0 * ln_gamma(b) + b * 0.25f64.ln();
    let ln_ratio = ln_gamma(0.5) + ln_gamma(b) - ln_gamma(b + 0.5);
    Ok((ln_front - b.ln()).exp() + (ln_front + ln_ratio).exp())
}

/// `E max_y q_m(y) = ∏_{l=1}^m 2ξ(a_l/2)` for level-homogeneous symmetric
/// Beta weights.
pub fn expected_max_qdensity(schedule: &LevelSchedule, m: u32) -> Result<f64> {
    let mut prod = 1.0;
    for l in 1..=m {
        prod *= 2.0 * xi(0.5 * schedule.at(l))?;
    }
    Ok(prod)
}

/// Variance of MD(a): `∫₀¹ I_{1/2}(a√x, a(1−√x)) dx − 1/4`.
pub fn tau2(a: f64) -> f64 {
    let integrand = |x: f64| {
        if x <= 0.0 {
            1.0
        } else if x >= 1.0 {
            0.0
        } else {
            let s = x.sqrt();
            beta_inc(a * s, a * (1.0 - s), 0.5)
        }
    };
    adaptive_simpson(integrand, 0.0, 1.0, 1e-8) - 0.25
}

/// `ρ(a) = 4(a + 1)τ²(a)`.
pub fn rho(a: f64) -> f64 {
    4.0 * (a + 1.0) * tau2(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fixed_half_prior_gives_identity() {
        let spec = PriorSpec::new(3, Family::Fixed(0.5), Centering::None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            sample_prior(&spec, &mut rng).unwrap(),
            DyadicQuantileVector::identity(3)
        );
    }

    #[test]
    fn uniform_log_prior_examples() {
        let spec = PriorSpec::uniform(2);
        let q = DyadicQuantileVector::new(2, vec![0.2, 0.5, 0.9]).unwrap();
        assert!((log_prior_density(&spec, &q).unwrap() - 4f64.ln()).abs() < 1e-12);
        let spec = PriorSpec::uniform(1);
        for x in [0.01, 0.5, 0.93] {
            let q = DyadicQuantileVector::new(1, vec![x]).unwrap();
            assert_eq!(log_prior_density(&spec, &q).unwrap(), 0.0);
        }
        let q = DyadicQuantileVector::new(1, vec![0.5]).unwrap();
        assert!(log_prior_density(&PriorSpec::uniform(2), &q).is_err());
    }

    #[test]
    fn level5_prior_matches_hand_expansion() {
        // Π₅ with per-level densities g_l, expanded node by node
        let spec = PriorSpec::new(5, Family::Beta(LevelSchedule::Cubic(2.5)), Centering::None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = sample_prior(&spec, &mut rng).unwrap();
        let g = |l: u32, v: f64| {
            VLaw::SymmetricBeta {
                a: 2.5 * f64::from(l).powi(3),
            }
            .log_density(v)
        };
        let k = |j: usize| q.knot(j);
        let mut want = g(1, k(16));
        for (l, half) in [(2u32, 8usize), (3, 4), (4, 2), (5, 1)] {
            let mut j = half;
            while j < 32 {
                let (lo, hi) = (k(j - half), k(j + half));
                want += g(l, (k(j) - lo) / (hi - lo)) - (hi - lo).ln();
                j += 2 * half;
            }
        }
        assert!((log_prior_density(&spec, &q).unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn local_terms_account_for_all_changes() {
        let spec = PriorSpec::new(
            4,
            Family::Beta(LevelSchedule::Cubic(1.0)),
            Centering::Mean(Reference::Square),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let q = sample_prior(&spec, &mut rng).unwrap();
        for g in 1..16 {
            let mut q2 = q.clone();
            let lo = q.knot(g - 1);
            let hi = q.knot(g + 1);
            q2.set(g, lo + 0.37 * (hi - lo));
            let full = log_prior_density(&spec, &q2).unwrap() - log_prior_density(&spec, &q).unwrap();
            let local = spec.local_log_density(&q2.knots(), g) - spec.local_log_density(&q.knots(), g);
            assert!((full - local).abs() < 1e-10, "g={g}");
        }
    }

    #[test]
    fn centering_means_examples() {
        let id = centering_means(&Reference::Uniform, 4).unwrap();
        assert!(id.iter().flatten().all(|&m| (m - 0.5).abs() < 1e-15));
        let sq = centering_means(&Reference::Square, 2).unwrap();
        assert!((sq[0][0] - 0.25).abs() < 1e-15);
        assert!((sq[1][1] - 5.0 / 12.0).abs() < 1e-15);
        let bad = Reference::Table {
            knots: vec![0.0, 0.6, 0.4, 1.0],
        };
        assert!(centering_means(&bad, 2).is_err());
    }

    #[test]
    fn transform_center_examples() {
        let t = transform_center(DyadicQuantileVector::identity(3), Reference::Square);
        assert!((t.quantile_at(0.3).unwrap() - 0.09).abs() < 1e-15);
        let u = DyadicQuantileVector::new(1, vec![0.3]).unwrap();
        let t = transform_center(u, Reference::Square);
        assert!((t.quantile_at(0.5).unwrap() - 0.09).abs() < 1e-15);
        let t = transform_center(
            DyadicQuantileVector::new(2, vec![0.2, 0.5, 0.6]).unwrap(),
            Reference::TruncatedNormal { mean: 0.5, sd: 0.2 },
        );
        let vals: Vec<f64> = (0..=100).map(|i| t.quantile_at(i as f64 / 100.0).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn md_cdf_examples() {
        for a in [0.1, 1.0, 4.0, 50.0] {
            assert!((md_cdf(a, 0.5).unwrap() - 0.5).abs() < 1e-10);
        }
        assert_eq!(md_cdf(3.0, 0.0).unwrap(), 0.0);
        assert_eq!(md_cdf(3.0, 1.0).unwrap(), 1.0);
        // I_{1/2}(3, 1) = 1/8
        assert!((md_cdf(4.0, 0.25).unwrap() - 0.125).abs() < 1e-13);
        // vanishing concentration gives the uniform law
        assert!((md_cdf(1e-6, 0.3).unwrap() - 0.3).abs() < 1e-5);
        assert!(md_cdf(0.0, 0.3).is_err());
    }

    #[test]
    fn md_cdf_is_monotone() {
        for a in [0.5, 2.0, 20.0] {
            let vals: Vec<f64> = (0..=1000).map(|i| md_cdf(a, i as f64 / 1000.0).unwrap()).collect();
            assert!(vals.windows(2).all(|w| w[1] >= w[0]), "a={a}");
        }
    }

    #[test]
    fn md_quantile_inverts() {
        assert!((md_quantile(7.0, 0.5) - 0.5).abs() < 1e-10);
        for u in [0.01, 0.3, 0.8] {
            let x = md_quantile(3.0, u);
            assert!((md_cdf(3.0, x).unwrap() - u).abs() < 1e-8);
        }
    }

    #[test]
    fn xi_examples() {
        assert!((xi(1.0).unwrap() - 0.75).abs() < 1e-12);
        let approx = 0.5 + 0.5 * (2.0 / std::f64::consts::PI).sqrt() / 101f64.sqrt();
        assert!((xi(50.0).unwrap() - approx).abs() < 1e-3);
        assert!(xi(0.0).is_err());
        for b in [0.05, 0.5, 3.0, 1e4] {
            let v = xi(b).unwrap();
            assert!(v > 0.5 && v < 1.0, "b={b}: {v}");
        }
    }

    #[test]
    fn xi_matches_quadrature() {
        for b in [1.5, 2.0, 9.5] {
            let num = adaptive_simpson(
                |v| 2.0 * v * VLaw::AsymmetricBeta { alpha: b, beta: b }.log_density(v).exp(),
                0.5,
                1.0 - 1e-15,
                1e-12,
            );
            assert!((xi(b).unwrap() - num).abs() < 1e-8, "b={b}");
        }
    }

    #[test]
    fn expected_max_qdensity_examples() {
        let uni = LevelSchedule::Constant(2.0);
        assert!((expected_max_qdensity(&uni, 3).unwrap() - 3.375).abs() < 1e-12);
        assert_eq!(expected_max_qdensity(&uni, 0).unwrap(), 1.0);
        let cubic = LevelSchedule::Cubic(2.5);
        let vals: Vec<f64> = (1..=20).map(|m| expected_max_qdensity(&cubic, m).unwrap()).collect();
        assert!(vals[19].is_finite());
        let ratios: Vec<f64> = vals.windows(2).map(|w| w[1] / w[0]).collect();
        assert!(ratios.windows(2).all(|r| r[1] < r[0]));
        assert!(ratios.last().unwrap() - 1.0 < 0.01);
    }

    #[test]
    fn tau2_limits_and_rho_range() {
        assert!((tau2(1e-4) - 1.0 / 12.0).abs() < 1e-3);
        let mut prev = 0.0;
        for a in [0.01, 0.1, 1.0, 10.0, 100.0] {
            let r = rho(a);
            assert!((1.0 / 3.0 - 1e-6..=1.0).contains(&r), "a={a}: {r}");
            assert!(r >= prev);
            prev = r;
        }
    }

    #[test]
    fn vlaw_densities_integrate_to_one() {
        let laws = [
            VLaw::SymmetricBeta { a: 5.0 },
            VLaw::AsymmetricBeta { alpha: 2.0, beta: 3.5 },
            VLaw::Uniform,
            VLaw::MedianDirichlet { a: 3.0 },
            VLaw::MedianDirichlet { a: 25.0 },
        ];
        for law in laws {
            let total = adaptive_simpson(|v| law.log_density(v).exp(), 0.0, 1.0, 1e-10);
            assert!((total - 1.0).abs() < 1e-6, "{law:?}: {total}");
            assert!(law.mean() > 0.0 && law.mean() < 1.0);
        }
    }

    #[test]
    fn parse_grammar() {
        let p = PriorSpec::parse("beta:c=2.5", 4).unwrap();
        assert_eq!(p.family(), &Family::Beta(LevelSchedule::Cubic(2.5)));
        let p = PriorSpec::parse("uniform", 2).unwrap();
        assert_eq!(p.family(), &Family::Uniform);
        let p = PriorSpec::parse("beta-const:a=2,center=ysquared", 3).unwrap();
        assert_eq!(p.centering(), &Centering::Mean(Reference::Square));
        let p = PriorSpec::parse("md:c=1,center=linear,mode=transform", 3).unwrap();
        assert_eq!(p.centering(), &Centering::Transform(Reference::Linear));
        let p = PriorSpec::parse("uniform,center=ysquared", 3).unwrap();
        assert_eq!(p.centering(), &Centering::Mean(Reference::Square));
        assert!(PriorSpec::parse("md-adaptive:b=0.5", 5).is_ok());
        assert!(PriorSpec::parse("beta", 3).is_err());
        assert!(PriorSpec::parse("beta:c=abc", 3).is_err());
        assert!(PriorSpec::parse("beta:c=-1", 3).is_err());
        assert!(PriorSpec::parse("beta:a=1", 3).is_err());
        assert!(PriorSpec::parse("gamma:c=1", 3).is_err());
        assert!(PriorSpec::parse("md:c=1,center=ysquared", 3).is_err());
    }

    #[test]
    fn md_adaptive_concentration_tracks_parent_gap() {
        let spec = PriorSpec::parse("md-adaptive:b=0.5", 3).unwrap();
        assert_eq!(spec.node_law(2, 0, 0.25), VLaw::MedianDirichlet { a: 0.5 * 8.0 / 0.25 });
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = sample_prior(&spec, &mut rng).unwrap();
        assert!(log_prior_density(&spec, &q).unwrap().is_finite());
    }

    #[test]
    fn transform_centered_prior_density_has_jacobian() {
        // Q = Q_null(U) with U from a uniform pyramid: density = p_u(F(q)) ∏ f(q_j)
        let spec = PriorSpec::new(2, Family::Uniform, Centering::Transform(Reference::Square)).unwrap();
        let q = DyadicQuantileVector::new(2, vec![0.04, 0.25, 0.81]).unwrap();
        let u = DyadicQuantileVector::new(2, vec![0.2, 0.5, 0.9]).unwrap();
        let want = log_prior_density(&PriorSpec::uniform(2), &u).unwrap()
            + q.values()
                .iter()
                .map(|&x| Reference::Square.density(x).ln())
                .sum::<f64>();
        assert!((log_prior_density(&spec, &q).unwrap() - want).abs() < 1e-12);
    }
}
