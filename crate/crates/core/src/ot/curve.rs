use serde::{Deserialize, Serialize};

use super::grid::LevelGrid;
use crate::error::{Error, Result};

/// Quantile function of a distribution on `[domain_lo, domain_hi]`, sampled on a
/// [`LevelGrid`]. Values are nondecreasing and stay inside the domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCurve", deny_unknown_fields)]
pub struct QuantileCurve {
    grid: LevelGrid,
    values: Vec<f64>,
    domain_lo: f64,
    domain_hi: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCurve {
    grid: LevelGrid,
    values: Vec<f64>,
    domain_lo: f64,
    domain_hi: f64,
}

impl TryFrom<RawCurve> for QuantileCurve {
    type Error = Error;

    fn try_from(raw: RawCurve) -> Result<Self> {
        QuantileCurve::new(raw.grid, raw.values, (raw.domain_lo, raw.domain_hi))
    }
}

impl QuantileCurve {
    pub fn new(grid: LevelGrid, values: Vec<f64>, bounds: (f64, f64)) -> Result<Self> {
        let (lo, hi) = bounds;
        if !(lo <= hi) {
            return Err(Error::InvalidArgument(format!("empty domain [{lo}, {hi}]")));
        }
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(values.len(), grid.len()));
        }
        for &v in &values {
            if !(lo..=hi).contains(&v) {
                return Err(Error::DomainViolation { value: v, lo, hi });
            }
        }
        if let Some(j) = values.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument(format!(
                "quantile values decrease between levels {} and {}",
                j,
                j + 1
            )));
        }
        Ok(Self { grid, values, domain_lo: lo, domain_hi: hi })
    }

    /// Builds a curve from arbitrary values by isotonic projection followed by
    /// clamping to the domain. Returns the curve and whether clamping was active.
    pub fn project(grid: LevelGrid, values: &[f64], bounds: (f64, f64)) -> Result<(Self, bool)> {
        let mut projected = super::isotonic_project(values);
        let mut clamped = false;
        for v in &mut projected {
            let c = v.clamp(bounds.0, bounds.1);
            if c != *v {
                clamped = true;
                *v = c;
            }
        }
        Ok((Self::new(grid, projected, bounds)?, clamped))
    }

    /// Constant curve: the quantile function of a point mass.
    pub fn dirac(grid: LevelGrid, at: f64, bounds: (f64, f64)) -> Result<Self> {
        let m = grid.len();
        Self::new(grid, vec![at; m], bounds)
    }

    /// Quantile function of the uniform law on the domain.
    pub fn uniform(grid: LevelGrid, bounds: (f64, f64)) -> Result<Self> {
        let values = grid
            .levels()
            .iter()
            .map(|u| bounds.0 + u * (bounds.1 - bounds.0))
            .collect();
        Self::new(grid, values, bounds)
    }

    pub fn grid(&self) -> &LevelGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.domain_lo, self.domain_hi)
    }

    /// Quantile at an arbitrary level by monotone piecewise-linear interpolation.
    pub fn quantile_at(&self, u: f64) -> f64 {
        self.grid.interpolate(&self.values, u)
    }

    /// Mean of the distribution under the flat grid quadrature.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.weight()
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.values.windows(2).all(|w| w[0] < w[1])
    }
}

/// Empirical quantile `inf{z : F(z) >= u}` of a sample, i.e. the `ceil(k u)`-th
/// order statistic.
pub fn empirical_quantile(samples: &[f64], grid: &LevelGrid, bounds: (f64, f64)) -> Result<QuantileCurve> {
    let sorted = sorted_within(samples, bounds)?;
    let values = grid
        .levels()
        .iter()
        .map(|&u| sorted[order_index(sorted.len(), u)])
        .collect();
    QuantileCurve::new(grid.clone(), values, bounds)
}

/// Empirical quantile at a single level.
pub fn empirical_quantile_at(samples: &[f64], u: f64) -> Result<f64> {
    let sorted = sorted_within(samples, (f64::NEG_INFINITY, f64::INFINITY))?;
    Ok(sorted[order_index(sorted.len(), u)])
}

fn sorted_within(samples: &[f64], (lo, hi): (f64, f64)) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("empty sample set".into()));
    }
    if let Some(&bad) = samples.iter().find(|v| !(lo..=hi).contains(*v)) {
        return Err(Error::DomainViolation { value: bad, lo, hi });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted)
}

/// Zero-based index of the `ceil(k u)`-th order statistic.
fn order_index(k: usize, u: f64) -> usize {
    // Guard products like 3 * (1/3) that land a hair above an integer.
    let rank = (k as f64 * u - 1e-9).ceil();
    (rank.max(1.0) as usize).min(k) - 1
}

/// Generalized inverse of the interpolated quantile curve: right-continuous,
/// clamped to `[u_1, u_M]`.
pub fn cdf_eval(curve: &QuantileCurve, t: f64) -> f64 {
    let grid = curve.grid();
    let v = curve.values();
    let p = v.partition_point(|&x| x <= t);
    if p == 0 {
        return grid.first();
    }
    if p == v.len() {
        return grid.last();
    }
    let (u0, u1) = (grid.level(p - 1), grid.level(p));
    let (v0, v1) = (v[p - 1], v[p]);
    u0 + (t - v0) / (v1 - v0) * (u1 - u0)
}

/// Step CDF with finitely many atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct StepCdf {
    atoms: Vec<f64>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl StepCdf {
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InsufficientData("step cdf without atoms".into()));
        }
        if atoms.len() != weights.len() {
            return Err(Error::InvalidArgument("atoms and weights differ in length".into()));
        }
        if !atoms.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument("atoms must be strictly increasing".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidArgument("negative weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
        }
        let cumulative = weights
            .iter()
            .scan(0.0, |acc, w| {
                *acc += w;
                Some(*acc)
            })
            .collect();
        Ok(Self { atoms, weights, cumulative })
    }

    /// Empirical CDF of a sample; tied observations accumulate weight.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let sorted = sorted_within(samples, (f64::NEG_INFINITY, f64::INFINITY))?;
        let k = sorted.len() as f64;
        let mut atoms: Vec<f64> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for x in sorted {
            match atoms.last() {
                Some(&last) if last == x => *counts.last_mut().unwrap() += 1,
                _ => {
                    atoms.push(x);
                    counts.push(1);
                }
            }
        }
        let mut weights: Vec<f64> = counts.iter().map(|&c| c as f64 / k).collect();
        // Absorb the rounding residue so the total is 1 to machine precision.
        let residue = 1.0 - weights.iter().sum::<f64>();
        *weights.last_mut().unwrap() += residue;
        Self::new(atoms, weights)
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// A univariate law exposing its CDF and quantile function.
pub trait Distribution1d {
    fn cdf(&self, t: f64) -> f64;
    fn quantile(&self, u: f64) -> f64;
    /// Interval on which evaluation is defined.
    fn support(&self) -> (f64, f64);
}

impl Distribution1d for QuantileCurve {
    fn cdf(&self, t: f64) -> f64 {
        cdf_eval(self, t)
    }

    fn quantile(&self, u: f64) -> f64 {
        self.quantile_at(u)
    }

    fn support(&self) -> (f64, f64) {
        self.bounds()
    }
}

impl Distribution1d for StepCdf {
    fn cdf(&self, t: f64) -> f64 {
        let p = self.atoms.partition_point(|&a| a <= t);
        if p == 0 {
            0.0
        } else {
            self.cumulative[p - 1].min(1.0)
        }
    }

    fn quantile(&self, u: f64) -> f64 {
        let p = self.cumulative.partition_point(|&c| c < u - 1e-12);
        self.atoms[p.min(self.atoms.len() - 1)]
    }

    fn support(&self) -> (f64, f64) {
        (self.atoms[0], self.atoms[self.atoms.len() - 1])
    }
}
