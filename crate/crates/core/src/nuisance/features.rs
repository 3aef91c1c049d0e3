use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Default number of interior knots for the data-adaptive spline basis.
pub const DEFAULT_INTERIOR_KNOTS: usize = 10;

/// Configuration-level description of a covariate feature map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum FeatureSpec {
    Identity,
    Square,
    Sine,
    /// Cubic B-splines with interior knots at covariate quantiles.
    Bspline { interior_knots: usize },
}

impl FeatureSpec {
    pub fn bspline() -> Self {
        FeatureSpec::Bspline { interior_knots: DEFAULT_INTERIOR_KNOTS }
    }

    /// Realizes the map, placing spline knots at quantiles of `covariates`.
    pub fn build(&self, covariates: &[&[f64]]) -> Result<FeatureMap> {
        Ok(match *self {
            FeatureSpec::Identity => FeatureMap::Identity,
            FeatureSpec::Square => FeatureMap::Square,
            FeatureSpec::Sine => FeatureMap::Sine,
            FeatureSpec::Bspline { interior_knots } => {
                FeatureMap::Bspline(AdditiveSplines::from_data(covariates, interior_knots, 3)?)
            }
        })
    }
}

impl fmt::Display for FeatureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureSpec::Identity => write!(f, "identity"),
            FeatureSpec::Square => write!(f, "square"),
            FeatureSpec::Sine => write!(f, "sine"),
            FeatureSpec::Bspline { interior_knots } => write!(f, "bspline:{interior_knots}"),
        }
    }
}

impl FromStr for FeatureSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "identity" | "linear" | "x" => Ok(FeatureSpec::Identity),
            "square" | "x2" => Ok(FeatureSpec::Square),
            "sine" | "sin" => Ok(FeatureSpec::Sine),
            "bspline" | "spline" => Ok(FeatureSpec::bspline()),
            other => match other.strip_prefix("bspline:") {
                Some(k) => k
                    .parse()
                    .map(|interior_knots| FeatureSpec::Bspline { interior_knots })
                    .map_err(|_| Error::Usage(format!("bad knot count in `{s}`"))),
                None => Err(Error::Usage(format!(
                    "unknown feature spec `{s}` (identity|square|sine|bspline[:K])"
                ))),
            },
        }
    }
}

/// Map from a covariate vector to regression features. The intercept is added
/// by the design builders, never by the map itself.
#[derive(Clone)]
pub enum FeatureMap {
    Identity,
    Square,
    /// `sin(pi x)` per covariate.
    Sine,
    Bspline(AdditiveSplines),
    Custom {
        dim: usize,
        map: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
    },
}

impl fmt::Debug for FeatureMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureMap::Identity => write!(f, "Identity"),
            FeatureMap::Square => write!(f, "Square"),
            FeatureMap::Sine => write!(f, "Sine"),
            FeatureMap::Bspline(s) => f.debug_tuple("Bspline").field(s).finish(),
            FeatureMap::Custom { dim, .. } => write!(f, "Custom({dim})"),
        }
    }
}

impl FeatureMap {
    pub fn custom(dim: usize, map: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        FeatureMap::Custom { dim, map: Arc::new(map) }
    }

    /// Number of features for covariates of dimension `d`.
    pub fn dim(&self, d: usize) -> usize {
        match self {
            FeatureMap::Identity | FeatureMap::Square | FeatureMap::Sine => d,
            FeatureMap::Bspline(s) => s.dim(),
            FeatureMap::Custom { dim, .. } => *dim,
        }
    }

    pub fn apply_into(&self, x: &[f64], out: &mut Vec<f64>) {
        match self {
            FeatureMap::Identity => out.extend_from_slice(x),
            FeatureMap::Square => out.extend(x.iter().map(|v| v * v)),
            FeatureMap::Sine => out.extend(x.iter().map(|v| (std::f64::consts::PI * v).sin())),
            FeatureMap::Bspline(s) => s.apply_into(x, out),
            FeatureMap::Custom { dim, map } => {
                let f = map(x);
                debug_assert_eq!(f.len(), *dim);
                out.extend(f);
            }
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::new();
        self.apply_into(x, &mut out);
        out
    }
}

/// One univariate basis per covariate. Covariates with at most two distinct
/// values (indicators) enter linearly.
#[derive(Clone, Debug, PartialEq)]
pub struct AdditiveSplines {
    components: Vec<Component>,
}

#[derive(Clone, Debug, PartialEq)]
enum Component {
    Linear,
    Spline(BsplineBasis),
}

impl AdditiveSplines {
    pub fn from_data(covariates: &[&[f64]], interior_knots: usize, degree: usize) -> Result<Self> {
        let d = covariates.first().map_or(0, |x| x.len());
        let mut components = Vec::with_capacity(d);
        for c in 0..d {
            let mut col: Vec<f64> = covariates.iter().map(|x| x[c]).collect();
            col.sort_by(f64::total_cmp);
            col.dedup();
            if col.len() <= 2 {
                components.push(Component::Linear);
            } else {
                components.push(Component::Spline(BsplineBasis::at_quantiles(&col, interior_knots, degree)?));
            }
        }
        Ok(Self { components })
    }

    pub fn dim(&self) -> usize {
        self.components
            .iter()
            .map(|c| match c {
                Component::Linear => 1,
                Component::Spline(b) => b.dim(),
            })
            .sum()
    }

    fn apply_into(&self, x: &[f64], out: &mut Vec<f64>) {
        for (c, &v) in self.components.iter().zip(x) {
            match c {
                Component::Linear => out.push(v),
                Component::Spline(b) => b.apply_into(v, out),
            }
        }
    }
}

/// Clamped B-spline basis on `[lo, hi]` with the first function dropped, so the
/// remaining columns are linearly independent of an intercept.
#[derive(Clone, Debug, PartialEq)]
pub struct BsplineBasis {
    knots: Vec<f64>,
    degree: usize,
}

impl BsplineBasis {
    /// `sorted_unique` must be sorted; interior knots sit at its empirical quantiles.
    pub fn at_quantiles(sorted_unique: &[f64], interior: usize, degree: usize) -> Result<Self> {
        let n = sorted_unique.len();
        if n < 2 {
            return Err(Error::InsufficientData("spline basis needs two distinct covariate values".into()));
        }
        let (lo, hi) = (sorted_unique[0], sorted_unique[n - 1]);
        let mut inner: Vec<f64> = (1..=interior)
            .map(|i| {
                let p = i as f64 / (interior + 1) as f64 * (n - 1) as f64;
                let k = p.floor() as usize;
                let frac = p - k as f64;
                if k + 1 < n {
                    sorted_unique[k] + frac * (sorted_unique[k + 1] - sorted_unique[k])
                } else {
                    sorted_unique[n - 1]
                }
            })
            .filter(|&t| t > lo && t < hi)
            .collect();
        inner.dedup();
        let mut knots = vec![lo; degree + 1];
        knots.extend(inner);
        knots.extend(std::iter::repeat_n(hi, degree + 1));
        Ok(Self { knots, degree })
    }

    fn n_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn dim(&self) -> usize {
        self.n_basis() - 1
    }

    /// All basis values at `x` (clamped into the knot range), Cox-de Boor recursion.
    pub fn eval(&self, x: f64) -> Vec<f64> {
        let t = &self.knots;
        let p = self.degree;
        let nb = self.n_basis();
        let lo = t[0];
        let hi = t[t.len() - 1];
        let x = x.clamp(lo, hi);
        // knot span index s with t[s] <= x < t[s+1], last nonempty span at hi
        let mut s = t.partition_point(|&k| k <= x).saturating_sub(1);
        if s >= nb {
            s = nb - 1;
        }
        while s > p && t[s] == t[s + 1] {
            s -= 1;
        }
        let mut n = vec![0.0; p + 1];
        n[0] = 1.0;
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        for j in 1..=p {
            left[j] = x - t[s + 1 - j];
            right[j] = t[s + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom > 0.0 { n[r] / denom } else { 0.0 };
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        let mut all = vec![0.0; nb];
        for (r, v) in n.into_iter().enumerate() {
            all[s - p + r] = v;
        }
        all
    }

    fn apply_into(&self, x: f64, out: &mut Vec<f64>) {
        out.extend(self.eval(x).into_iter().skip(1));
    }
}
