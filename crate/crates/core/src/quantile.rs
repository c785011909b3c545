//! Piecewise-linear quantile functions at dyadic resolution.
//!
//! A [`DyadicQuantileVector`] at level `m` holds the interior quantiles
//! `q_j = Q(j/k)`, `j = 1..k−1`, `k = 2^m`, with the implicit endpoints
//! `q_0 = 0` and `q_k = 1`. Viewed as a function it is the linear
//! interpolant through those knots; its inverse is a random-histogram
//! distribution putting mass `1/k` on each cell `(q_{j−1}, q_j]`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Smallest admissible gap between adjacent knots of a user-supplied vector.
pub const MIN_GAP: f64 = 1e-12;

/// Largest supported pyramid level.
pub const MAX_LEVEL: u32 = 24;

/// Interior quantiles of a piecewise-linear quantile function on `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DyadicQuantileVector {
    level: u32,
    values: Vec<f64>,
}

impl DyadicQuantileVector {
    /// Builds a vector at `level` from its `2^level − 1` interior quantiles.
    ///
    /// Rejects any adjacent gap (including the boundary cells) below
    /// [`MIN_GAP`].
    pub fn new(level: u32, values: Vec<f64>) -> Result<Self> {
        let v = Self::with_positive_gaps(level, values)?;
        if let Some(j) = (1..=v.cells()).find(|&j| v.gap(j) < MIN_GAP) {
            return domain(format!("gap of cell {j} is below {MIN_GAP:e}"));
        }
        Ok(v)
    }

    /// Like [`new`](Self::new) but only requires strictly positive gaps.
    pub(crate) fn with_positive_gaps(level: u32, values: Vec<f64>) -> Result<Self> {
        if level == 0 || level > MAX_LEVEL {
            return domain(format!("level must lie in 1..={MAX_LEVEL}, got {level}"));
        }
        let expected = (1usize << level) - 1;
        if values.len() != expected {
            return domain(format!(
                "level {level} needs {expected} quantiles, got {}",
                values.len()
            ));
        }
        let v = DyadicQuantileVector { level, values };
        for j in 1..=v.cells() {
            let g = v.gap(j);
            if !(g > 0.0) {
                return domain(format!("quantiles not strictly increasing at cell {j}"));
            }
        }
        Ok(v)
    }

    /// The identity quantile function `Q(y) = y` at `level`.
    pub fn identity(level: u32) -> Self {
        let k = 1usize << level;
        let values = (1..k).map(|j| j as f64 / k as f64).collect();
        DyadicQuantileVector { level, values }
    }

    /// Builds a pyramid from per-level interpolation weights; `weights[l]`
    /// holds the `2^l` weights used when refining level `l` to `l + 1`.
    pub fn from_weights(weights: &[Vec<f64>]) -> Result<Self> {
        let mut knots = vec![0.0, 1.0];
        for (l, w) in weights.iter().enumerate() {
            knots = refine_knots(&knots, w).map_err(|e| match e {
                Error::Domain(msg) => Error::Domain(format!("level {}: {msg}", l + 1)),
                other => other,
            })?;
        }
        let level = weights.len() as u32;
        Self::with_positive_gaps(level, knots[1..knots.len() - 1].to_vec())
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Number of cells `k = 2^level`.
    pub fn cells(&self) -> usize {
        1usize << self.level
    }

    /// Interior quantiles `q_1..q_{k−1}`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Knot `q_j` for `j` in `0..=k`, including the fixed endpoints.
    #[inline]
    pub fn knot(&self, j: usize) -> f64 {
        if j == 0 {
            0.0
        } else if j == self.cells() {
            1.0
        } else {
            self.values[j - 1]
        }
    }

    /// All `k + 1` knots, endpoints included.
    pub fn knots(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.cells() + 1);
        out.push(0.0);
        out.extend_from_slice(&self.values);
        out.push(1.0);
        out
    }

    /// Width `q_j − q_{j−1}` of cell `j` (1-based).
    #[inline]
    pub fn gap(&self, j: usize) -> f64 {
        self.knot(j) - self.knot(j - 1)
    }

    pub fn gaps(&self) -> Vec<f64> {
        (1..=self.cells()).map(|j| self.gap(j)).collect()
    }

    #[cfg(test)]
    pub(crate) fn set(&mut self, j: usize, v: f64) {
        self.values[j - 1] = v;
    }

    /// `Q(y)` by linear interpolation between dyadic knots; exact at knots.
    pub fn quantile_at(&self, y: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&y) {
            return domain(format!("quantile_at: y = {y} outside [0, 1]"));
        }
        let k = self.cells();
        let t = y * k as f64;
        let j = (t.floor() as usize).min(k - 1);
        let lo = self.knot(j);
        let hi = self.knot(j + 1);
        Ok((lo + (t - j as f64) * (hi - lo)).clamp(0.0, 1.0))
    }

    /// The piecewise-linear cdf `F(x) = sup{y : Q(y) ≤ x}`.
    pub fn cdf_at(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return domain(format!("cdf_at: x = {x} outside [0, 1]"));
        }
        if x == 0.0 {
            return Ok(0.0);
        }
        let j = self.cell_of(x);
        let lo = self.knot(j - 1);
        let frac = (x - lo) / self.gap(j);
        let k = self.cells() as f64;
        Ok(((j - 1) as f64 + frac) / k)
    }

    /// Density of the random-histogram distribution: `1 / (k · gap_j)` on
    /// the cell `(q_{j−1}, q_j]`; `x = 0` belongs to the first cell.
    pub fn density_at(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return domain(format!("density_at: x = {x} outside [0, 1]"));
        }
        let j = self.cell_of(x);
        Ok(1.0 / (self.cells() as f64 * self.gap(j)))
    }

    /// Quantile density `q_m(y) = k · (q_j − q_{j−1})` on `((j−1)/k, j/k]`.
    pub fn quantile_density(&self, y: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&y) {
            return domain(format!("quantile_density: y = {y} outside [0, 1]"));
        }
        let k = self.cells();
        let j = ((y * k as f64).ceil() as usize).clamp(1, k);
        Ok(k as f64 * self.gap(j))
    }

    /// Index `j` of the cell `(q_{j−1}, q_j]` containing `x`, with 0 in cell 1.
    pub fn cell_of(&self, x: f64) -> usize {
        // number of interior knots strictly below x
        let below = self.values.partition_point(|&q| q < x);
        below + 1
    }

    /// Inserts the next level's quantiles with interpolation weights
    /// `weights[i]` for the parent cell `i`; even knots are kept as-is.
    pub fn refine(&self, weights: &[f64]) -> Result<Self> {
        let knots = refine_knots(&self.knots(), weights)?;
        Self::with_positive_gaps(self.level + 1, knots[1..knots.len() - 1].to_vec())
    }

    /// Largest cell width `Δ_m`, boundary cells included.
    pub fn max_increment(&self) -> f64 {
        (1..=self.cells()).map(|j| self.gap(j)).fold(0.0, f64::max)
    }

    /// The random-histogram density as a piecewise-constant function of x.
    pub fn density(&self) -> PiecewiseConstant {
        let k = self.cells() as f64;
        PiecewiseConstant {
            breaks: self.knots(),
            values: self.gaps().iter().map(|g| 1.0 / (k * g)).collect(),
        }
    }

    /// The quantile density as a piecewise-constant function of y.
    pub fn quantile_density_fn(&self) -> PiecewiseConstant {
        let k = self.cells();
        PiecewiseConstant {
            breaks: (0..=k).map(|j| j as f64 / k as f64).collect(),
            values: self.gaps().iter().map(|g| k as f64 * g).collect(),
        }
    }
}

fn refine_knots(knots: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    let parents = knots.len() - 1;
    if weights.len() != parents {
        return domain(format!("refine needs {parents} weights, got {}", weights.len()));
    }
    let mut out = Vec::with_capacity(2 * parents + 1);
    out.push(knots[0]);
    for (i, &v) in weights.iter().enumerate() {
        if !(v > 0.0 && v < 1.0) {
            return domain(format!("interpolation weight {v} outside (0, 1)"));
        }
        let (lo, hi) = (knots[i], knots[i + 1]);
        out.push(lo * (1.0 - v) + hi * v);
        out.push(hi);
    }
    Ok(out)
}

/// A piecewise-constant function on `[0, 1]`: `values[i]` on
/// `(breaks[i], breaks[i+1]]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseConstant {
    pub breaks: Vec<f64>,
    pub values: Vec<f64>,
}

impl PiecewiseConstant {
    pub fn new(breaks: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breaks.len() != values.len() + 1 || values.is_empty() {
            return domain("piecewise-constant: need one more break than values");
        }
        if breaks.windows(2).any(|w| !(w[1] > w[0])) {
            return domain("piecewise-constant: breaks must be strictly increasing");
        }
        Ok(PiecewiseConstant { breaks, values })
    }

    /// The constant function 1 on `[0, 1]`.
    pub fn unit() -> Self {
        PiecewiseConstant {
            breaks: vec![0.0, 1.0],
            values: vec![1.0],
        }
    }

    pub fn integral(&self) -> f64 {
        self.values
            .iter()
            .zip(self.breaks.windows(2))
            .map(|(v, w)| v * (w[1] - w[0]))
            .sum()
    }

    /// Walks the common refinement of two partitions, yielding
    /// `(width, self_value, other_value)` for every merged cell.
    pub fn merged<'a>(&'a self, other: &'a Self) -> impl Iterator<Item = (f64, f64, f64)> + 'a {
        let mut i = 0;
        let mut j = 0;
        let mut left = self.breaks[0].max(other.breaks[0]);
        std::iter::from_fn(move || {
            while i < self.values.len() && j < other.values.len() {
                let right = self.breaks[i + 1].min(other.breaks[j + 1]);
                let item = (right - left, self.values[i], other.values[j]);
                if self.breaks[i + 1] <= right {
                    i += 1;
                }
                if other.breaks[j + 1] <= right {
                    j += 1;
                }
                left = right;
                if item.0 > 0.0 {
                    return Some(item);
                }
            }
            None
        })
    }
}

/// Affine map from a raw data range `[lo, hi]` onto `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitAffineMap {
    pub lo: f64,
    pub hi: f64,
}

impl UnitAffineMap {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return domain(format!("affine bounds need lo < hi, got ({lo}, {hi})"));
        }
        Ok(UnitAffineMap { lo, hi })
    }

    pub fn identity() -> Self {
        UnitAffineMap { lo: 0.0, hi: 1.0 }
    }

    /// Fits bounds to the data range widened by `pad` times its width on
    /// each side.
    pub fn fit_padded(values: &[f64], pad: f64) -> Result<Self> {
        let (min, max) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        if values.is_empty() {
            return Err(Error::Degenerate("no data to fit bounds".into()));
        }
        let width = max - min;
        if !(width > 0.0) {
            return Err(Error::Degenerate("all values are equal".into()));
        }
        Self::new(min - pad * width, max + pad * width)
    }

    #[inline]
    pub fn forward(&self, x: f64) -> f64 {
        (x - self.lo) / (self.hi - self.lo)
    }

    #[inline]
    pub fn inverse(&self, u: f64) -> f64 {
        self.lo + u * (self.hi - self.lo)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q03() -> DyadicQuantileVector {
        DyadicQuantileVector::new(1, vec![0.3]).unwrap()
    }

    #[test]
    fn quantile_at_examples() {
        let q = q03();
        assert_eq!(q.quantile_at(0.5).unwrap(), 0.3);
        assert!((q.quantile_at(0.25).unwrap() - 0.15).abs() < 1e-15);
        let id = DyadicQuantileVector::identity(5);
        assert!((id.quantile_at(0.37).unwrap() - 0.37).abs() < 1e-15);
        assert!(q.quantile_at(1.2).is_err());
        assert!(q.quantile_at(-0.1).is_err());
    }

    #[test]
    fn cdf_at_examples() {
        let q = q03();
        assert!((q.cdf_at(0.3).unwrap() - 0.5).abs() < 1e-15);
        assert!((q.cdf_at(0.15).unwrap() - 0.25).abs() < 1e-15);
        let id = DyadicQuantileVector::identity(3);
        assert!((id.cdf_at(0.9).unwrap() - 0.9).abs() < 1e-15);
        assert_eq!(q.cdf_at(1.0).unwrap(), 1.0);
    }

    #[test]
    fn density_examples() {
        let q = q03();
        assert!((q.density_at(0.1).unwrap() - 1.0 / 0.6).abs() < 1e-12);
        assert!((q.density_at(0.8).unwrap() - 1.0 / 1.4).abs() < 1e-12);
        // a knot belongs to the right-closed cell on its left
        assert!((q.density_at(0.3).unwrap() - 1.0 / 0.6).abs() < 1e-12);
        let id = DyadicQuantileVector::identity(4);
        assert!((id.density_at(0.42).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantile_density_examples() {
        let q = q03();
        assert!((q.quantile_density(0.2).unwrap() - 0.6).abs() < 1e-15);
        // y = 1/2 is assigned to the left cell
        assert!((q.quantile_density(0.5).unwrap() - 0.6).abs() < 1e-15);
        let id = DyadicQuantileVector::identity(3);
        assert!((id.quantile_density(0.7).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn refine_examples() {
        let half = DyadicQuantileVector::new(1, vec![0.5]).unwrap();
        assert_eq!(half.refine(&[0.5, 0.5]).unwrap().values(), &[0.25, 0.5, 0.75]);
        let r = q03().refine(&[0.4, 0.2]).unwrap();
        let want = [0.12, 0.3, 0.44];
        for (a, b) in r.values().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        let mut q = half;
        for _ in 0..5 {
            let w = vec![0.5; q.cells()];
            q = q.refine(&w).unwrap();
        }
        assert_eq!(q, DyadicQuantileVector::identity(6));
        assert!(q03().refine(&[0.0, 0.5]).is_err());
        assert!(q03().refine(&[0.5, 1.0]).is_err());
        assert!(q03().refine(&[0.5]).is_err());
    }

    #[test]
    fn max_increment_examples() {
        assert_eq!(DyadicQuantileVector::identity(4).max_increment(), 1.0 / 16.0);
        assert!((q03().max_increment() - 0.7).abs() < 1e-15);
        let q = DyadicQuantileVector::new(2, vec![0.12, 0.3, 0.44]).unwrap();
        assert!((q.max_increment() - 0.56).abs() < 1e-15);
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(DyadicQuantileVector::new(2, vec![0.1, 0.2]).is_err());
        assert!(DyadicQuantileVector::new(1, vec![0.0]).is_err());
        assert!(DyadicQuantileVector::new(2, vec![0.1, 0.1, 0.2]).is_err());
        assert!(DyadicQuantileVector::new(2, vec![0.1, 0.1 + 1e-13, 0.2]).is_err());
        assert!(DyadicQuantileVector::new(0, vec![]).is_err());
    }

    #[test]
    fn eq5_quantile_density_products() {
        // level-3 quantile density is 8 times a product of one weight per level
        let (v11, v21, v23) = (0.37, 0.61, 0.22);
        let (v31, v33, v35, v37) = (0.15, 0.83, 0.47, 0.71);
        let q = DyadicQuantileVector::from_weights(&[vec![v11], vec![v21, v23], vec![v31, v33, v35, v37]]).unwrap();
        let want = [
            8.0 * v11 * v21 * v31,
            8.0 * v11 * v21 * (1.0 - v31),
            8.0 * v11 * (1.0 - v21) * v33,
            8.0 * v11 * (1.0 - v21) * (1.0 - v33),
            8.0 * (1.0 - v11) * v23 * v35,
            8.0 * (1.0 - v11) * v23 * (1.0 - v35),
            8.0 * (1.0 - v11) * (1.0 - v23) * v37,
            8.0 * (1.0 - v11) * (1.0 - v23) * (1.0 - v37),
        ];
        for (cell, w) in want.iter().enumerate() {
            let y = (cell as f64 + 0.5) / 8.0;
            assert!((q.quantile_density(y).unwrap() - w).abs() < 1e-12);
        }
        // all three weights equal v on the first cell: 8 v³
        let v: f64 = 0.3;
        let q = DyadicQuantileVector::from_weights(&[vec![v], vec![v; 2], vec![v; 4]]).unwrap();
        assert!((q.quantile_density(0.05).unwrap() - 8.0 * v.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn unit_affine_map() {
        let m = UnitAffineMap::fit_padded(&[12.0, 20.0], 0.001).unwrap();
        let (a, b) = (m.forward(12.0), m.forward(20.0));
        assert!(a > 0.0 && a < 1.0 && b > 0.0 && b < 1.0);
        assert!((a - 0.008 / 8.016).abs() < 1e-12);
        assert!(UnitAffineMap::fit_padded(&[3.0, 3.0], 0.001).is_err());
        assert!(UnitAffineMap::new(1.0, 1.0).is_err());
    }

    #[test]
    fn merged_partition_widths() {
        let a = PiecewiseConstant::new(vec![0.0, 0.3, 1.0], vec![1.0, 2.0]).unwrap();
        let b = PiecewiseConstant::new(vec![0.0, 0.5, 1.0], vec![3.0, 4.0]).unwrap();
        let cells: Vec<_> = a.merged(&b).collect();
        assert_eq!(cells.len(), 3);
        assert!((cells[0].0 - 0.3).abs() < 1e-15 && cells[0].1 == 1.0 && cells[0].2 == 3.0);
        assert!((cells[1].0 - 0.2).abs() < 1e-15 && cells[1].1 == 2.0 && cells[1].2 == 3.0);
        assert!((cells[2].0 - 0.5).abs() < 1e-15 && cells[2].1 == 2.0 && cells[2].2 == 4.0);
    }

    fn arb_pyramid() -> impl Strategy<Value = DyadicQuantileVector> {
        (1u32..=6).prop_flat_map(|m| {
            let weights: Vec<_> = (0..m)
                .map(|l| proptest::collection::vec(0.05f64..0.95, 1usize << l))
                .collect();
            weights.prop_map(|w| DyadicQuantileVector::from_weights(&w).unwrap())
        })
    }

    proptest! {
        #[test]
        fn cdf_inverts_quantile(q in arb_pyramid(), y in 0.0f64..=1.0) {
            let x = q.quantile_at(y).unwrap();
            prop_assert!((q.cdf_at(x).unwrap() - y).abs() < 1e-12);
        }

        #[test]
        fn density_times_quantile_density_is_one(q in arb_pyramid(), u in 0.01f64..0.99) {
            let k = q.cells() as f64;
            let cell = (u * k).floor();
            let y = (cell + 0.5) / k;
            let x = q.quantile_at(y).unwrap();
            let prod = q.quantile_density(y).unwrap() * q.density_at(x).unwrap();
            prop_assert!((prod - 1.0).abs() < 1e-12);
        }

        #[test]
        fn density_integrates_to_one(q in arb_pyramid()) {
            prop_assert!((q.density().integral() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn refine_keeps_parent_knots(q in arb_pyramid(), seed in proptest::collection::vec(0.01f64..0.99, 64)) {
            let w: Vec<f64> = seed.iter().cycle().take(q.cells()).copied().collect();
            let r = q.refine(&w).unwrap();
            for j in 1..q.cells() {
                prop_assert_eq!(r.knot(2 * j), q.knot(j));
            }
        }

        #[test]
        fn affine_round_trip(lo in -1e3f64..1e3, w in 1e-3f64..1e3, u in 0.0f64..=1.0) {
            let m = UnitAffineMap::new(lo, lo + w).unwrap();
            let x = m.inverse(u);
            prop_assert!((m.forward(x) - u).abs() < 1e-9);
        }
    }
}
