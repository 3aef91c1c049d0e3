use serde::{Deserialize, Serialize};

use super::estimate::{EffectEstimate, ReferenceKind};
use crate::error::{Error, Result};
use crate::nuisance::{common_bounds, Subject};
use crate::ot::{cdf_eval, QuantileCurve};

/// `W2(mu1, mu0)`: the flat-weight L2 norm of the level-coordinate effect.
pub fn effect_w2_norm(estimate: &EffectEstimate) -> f64 {
    estimate.grid.l2_norm(&estimate.effect)
}

/// Reference distribution as a quantile curve on the estimate's grid.
pub fn reference_curve(
    reference: &ReferenceKind,
    estimate: &EffectEstimate,
    subjects: &[Subject],
    external: Option<&QuantileCurve>,
) -> Result<QuantileCurve> {
    match reference {
        ReferenceKind::Uniform => QuantileCurve::uniform(estimate.grid.clone(), common_bounds(subjects)),
        ReferenceKind::Bary0 => Ok(estimate.mu0.clone()),
        ReferenceKind::Bary1 => Ok(estimate.mu1.clone()),
        ReferenceKind::Subject(id) => subjects
            .iter()
            .find(|s| &s.id == id)
            .map(|s| s.lifted().clone())
            .ok_or_else(|| Error::NotFound(format!("subject `{id}`"))),
        ReferenceKind::External(label) => external
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("external reference `{label}` was not loaded"))),
    }
}

/// Effect map on the reference's outcome axis: pairs `(lambda^{-1}(u_j), D(u_j))`.
pub fn render_effect_map(estimate: &EffectEstimate, reference: &QuantileCurve) -> Result<Vec<(f64, f64)>> {
    estimate.grid.check_same(reference.grid())?;
    Ok(reference.values().iter().copied().zip(estimate.effect.iter().copied()).collect())
}

/// Counterfactual outcome distribution of one subject.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Counterfactual {
    pub subject: String,
    pub observed_arm: u8,
    pub observed: QuantileCurve,
    pub counterfactual: QuantileCurve,
    /// Pairs `(s, T_i(s))` of the individual transport map at the observed quantiles.
    pub transport: Vec<(f64, f64)>,
    /// Mean of the counterfactual minus mean of the observed distribution.
    pub mean_shift: f64,
    /// Some shifted quantile left the outcome interval and was clamped.
    pub clamped: bool,
}

/// Shifts a subject's quantile curve by the average effect map taken at the
/// subject's own distribution: control units move by `+D`, treated by `-D`.
pub fn counterfactual_subject(subject: &Subject, estimate: &EffectEstimate) -> Result<Counterfactual> {
    let observed = subject.lifted();
    observed.grid().check_same(&estimate.grid)?;
    let sign = if subject.is_treated() { -1.0 } else { 1.0 };
    let shifted: Vec<f64> = observed
        .values()
        .iter()
        .zip(&estimate.effect)
        .map(|(y, d)| y + sign * d)
        .collect();
    let (counterfactual, clamped) = QuantileCurve::project(observed.grid().clone(), &shifted, observed.bounds())?;
    let transport = observed
        .values()
        .iter()
        .copied()
        .zip(counterfactual.values().iter().copied())
        .collect();
    let mean_shift = counterfactual.mean() - observed.mean();
    Ok(Counterfactual {
        subject: subject.id.clone(),
        observed_arm: subject.treatment(),
        observed: observed.clone(),
        counterfactual,
        transport,
        mean_shift,
        clamped,
    })
}

/// Population transport map `T(s) = s + D(mu0(s))` from the control barycentre.
///
/// This is the map between barycentres; it is generally not the average of
/// the individual transport maps.
pub fn population_transport_map(estimate: &EffectEstimate, eval_points: &[f64]) -> Result<Vec<(f64, f64)>> {
    let mu0 = &estimate.mu0;
    let v = mu0.values();
    let (lo, hi) = (v[0], v[v.len() - 1]);
    eval_points
        .iter()
        .map(|&s| {
            if !(lo..=hi).contains(&s) {
                return Err(Error::DomainViolation { value: s, lo, hi });
            }
            Ok((s, s + estimate.effect_at(cdf_eval(mu0, s))))
        })
        .collect()
}
