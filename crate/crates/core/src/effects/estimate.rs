use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::nuisance::{common_bounds, common_grid, OutcomeModel, PropensityModel, Subject};
use crate::ot::{LevelGrid, QuantileCurve};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Or,
    Ipw,
    Dr,
    Cf,
    Cfmed,
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EstimatorKind::Or => "or",
            EstimatorKind::Ipw => "ipw",
            EstimatorKind::Dr => "dr",
            EstimatorKind::Cf => "cf",
            EstimatorKind::Cfmed => "cfmed",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "or" => Ok(EstimatorKind::Or),
            "ipw" => Ok(EstimatorKind::Ipw),
            "dr" => Ok(EstimatorKind::Dr),
            "cf" => Ok(EstimatorKind::Cf),
            "cfmed" => Ok(EstimatorKind::Cfmed),
            other => Err(Error::Usage(format!("unknown estimator `{other}` (or|ipw|dr|cf|cfmed)"))),
        }
    }
}

/// Which distribution parametrizes the effect map on the outcome axis.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "name")]
pub enum ReferenceKind {
    Uniform,
    Bary0,
    Bary1,
    Subject(String),
    External(String),
}

impl fmt::Display for ReferenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReferenceKind::Uniform => f.write_str("uniform"),
            ReferenceKind::Bary0 => f.write_str("bary0"),
            ReferenceKind::Bary1 => f.write_str("bary1"),
            ReferenceKind::Subject(id) => write!(f, "subject:{id}"),
            ReferenceKind::External(label) => write!(f, "file:{label}"),
        }
    }
}

/// Estimated causal effect in probability-level coordinates.
///
/// `effect[j] = mu1_raw[j] - mu0_raw[j]` holds exactly. The raw barycentre
/// curves may be non-monotone at finite `n`; `mu1`/`mu0` are their isotonic
/// projections, used wherever a curve has to act as a quantile function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectEstimate {
    pub grid: LevelGrid,
    pub estimator: EstimatorKind,
    pub reference: ReferenceKind,
    pub n: usize,
    pub effect: Vec<f64>,
    pub mu1_raw: Vec<f64>,
    pub mu0_raw: Vec<f64>,
    pub mu1: QuantileCurve,
    pub mu0: QuantileCurve,
    /// Per-repetition effect curves of the median cross-fitting estimator.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub repetitions: Vec<Vec<f64>>,
}

impl EffectEstimate {
    pub fn from_barycentres(
        grid: LevelGrid,
        estimator: EstimatorKind,
        n: usize,
        mu1_raw: Vec<f64>,
        mu0_raw: Vec<f64>,
        bounds: (f64, f64),
    ) -> Result<Self> {
        if mu1_raw.len() != grid.len() || mu0_raw.len() != grid.len() {
            return Err(Error::GridMismatch(mu1_raw.len().max(mu0_raw.len()), grid.len()));
        }
        if mu1_raw.iter().chain(&mu0_raw).any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("{estimator} produced a non-finite barycentre")));
        }
        let effect = mu1_raw.iter().zip(&mu0_raw).map(|(a, b)| a - b).collect();
        let (mu1, _) = QuantileCurve::project(grid.clone(), &mu1_raw, bounds)?;
        let (mu0, _) = QuantileCurve::project(grid.clone(), &mu0_raw, bounds)?;
        Ok(Self {
            grid,
            estimator,
            reference: ReferenceKind::Uniform,
            n,
            effect,
            mu1_raw,
            mu0_raw,
            mu1,
            mu0,
            repetitions: Vec::new(),
        })
    }

    pub fn with_reference(mut self, reference: ReferenceKind) -> Self {
        self.reference = reference;
        self
    }

    /// Effect at an arbitrary level by linear interpolation.
    pub fn effect_at(&self, u: f64) -> f64 {
        self.grid.interpolate(&self.effect, u)
    }
}

/// Per-subject DR summands for both arms, level by level:
/// `t_a,i = m_a(X_i) + I(A_i = a) (Z_i - m_a(X_i)) / f(a | X_i)`.
pub(crate) struct ArmTerms {
    pub treated: Vec<Vec<f64>>,
    pub control: Vec<Vec<f64>>,
}

pub(crate) fn dr_terms(subjects: &[&Subject], outcome: &dyn OutcomeModel, propensity: &dyn PropensityModel) -> ArmTerms {
    let mut treated = Vec::with_capacity(subjects.len());
    let mut control = Vec::with_capacity(subjects.len());
    for s in subjects {
        let z = s.lifted().values();
        let x = &s.covariates;
        for (arm, out) in [(1u8, &mut treated), (0u8, &mut control)] {
            let m = outcome.predict_curve(arm, x);
            let row: Vec<f64> = if s.treatment() == arm {
                let f = propensity.arm_probability(arm, x);
                m.iter().zip(z).map(|(mj, zj)| mj + (zj - mj) / f).collect()
            } else {
                m
            };
            out.push(row);
        }
    }
    ArmTerms { treated, control }
}

/// Pointwise mean of equal-length rows, summed in row order.
pub(crate) fn row_mean(rows: &[Vec<f64>]) -> Vec<f64> {
    let m = rows.first().map_or(0, |r| r.len());
    let mut acc = vec![0.0; m];
    for r in rows {
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
    }
    let n = rows.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

fn prepare(subjects: &[Subject]) -> Result<(LevelGrid, (f64, f64))> {
    let grid = common_grid(subjects)?;
    Ok((grid, common_bounds(subjects)))
}

/// Outcome-regression estimator: `mu_a = P_n m_a(X)`.
pub fn estimate_or(subjects: &[Subject], outcome: &dyn OutcomeModel) -> Result<EffectEstimate> {
    let (grid, bounds) = prepare(subjects)?;
    let (t1, t0): (Vec<_>, Vec<_>) = subjects
        .iter()
        .map(|s| (outcome.predict_curve(1, &s.covariates), outcome.predict_curve(0, &s.covariates)))
        .unzip();
    EffectEstimate::from_barycentres(grid, EstimatorKind::Or, subjects.len(), row_mean(&t1), row_mean(&t0), bounds)
}

/// Inverse-probability-weighted estimator: `mu_a = P_n I(A = a) Z / f(a | X)`.
pub fn estimate_ipw(subjects: &[Subject], propensity: &dyn PropensityModel) -> Result<EffectEstimate> {
    let (grid, bounds) = prepare(subjects)?;
    let m = grid.len();
    let mut t1 = Vec::with_capacity(subjects.len());
    let mut t0 = Vec::with_capacity(subjects.len());
    for s in subjects {
        let f = propensity.arm_probability(s.treatment(), &s.covariates);
        let w: Vec<f64> = s.lifted().values().iter().map(|z| z / f).collect();
        if s.is_treated() {
            t1.push(w);
            t0.push(vec![0.0; m]);
        } else {
            t1.push(vec![0.0; m]);
            t0.push(w);
        }
    }
    EffectEstimate::from_barycentres(grid, EstimatorKind::Ipw, subjects.len(), row_mean(&t1), row_mean(&t0), bounds)
}

/// Doubly robust estimator combining the outcome regression with inverse
/// probability weighting of its residuals.
pub fn estimate_dr(
    subjects: &[Subject],
    outcome: &dyn OutcomeModel,
    propensity: &dyn PropensityModel,
) -> Result<EffectEstimate> {
    let (grid, bounds) = prepare(subjects)?;
    let refs: Vec<&Subject> = subjects.iter().collect();
    let terms = dr_terms(&refs, outcome, propensity);
    EffectEstimate::from_barycentres(
        grid,
        EstimatorKind::Dr,
        subjects.len(),
        row_mean(&terms.treated),
        row_mean(&terms.control),
        bounds,
    )
}
