//! Nuisance models: the function-valued outcome regression `m_a(X)` and the
//! propensity score `pi(X)`, each with a configurable covariate feature map.

mod features;
mod linalg;
mod outcome;
mod propensity;
mod subject;

pub use features::{AdditiveSplines, BsplineBasis, FeatureMap, FeatureSpec, DEFAULT_INTERIOR_KNOTS};
pub use outcome::{fit_outcome, fit_outcome_with, select_ridge_cv, OutcomeFit, OutcomeMode};
pub use propensity::{expit, fit_propensity, fit_propensity_penalized, PropensityFit, DEFAULT_CLIP};
pub use subject::{common_bounds, common_grid, Subject};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Penalty candidates searched by the data-adaptive outcome model.
pub const DEFAULT_RIDGE_GRID: [f64; 7] = [0.0, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RidgeChoice {
    Fixed(f64),
    CrossValidated { folds: usize, candidates: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpec {
    pub features: FeatureSpec,
    pub ridge: RidgeChoice,
    #[serde(default)]
    pub mode: OutcomeMode,
}

impl OutcomeSpec {
    pub fn linear(features: FeatureSpec) -> Self {
        Self { features, ridge: RidgeChoice::Fixed(0.0), mode: OutcomeMode::Joint }
    }

    /// Cubic B-splines with the penalty chosen by 5-fold cross-validation.
    pub fn adaptive() -> Self {
        Self {
            features: FeatureSpec::bspline(),
            ridge: RidgeChoice::CrossValidated { folds: 5, candidates: DEFAULT_RIDGE_GRID.to_vec() },
            mode: OutcomeMode::Joint,
        }
    }

    pub fn fit(&self, subjects: &[Subject]) -> Result<OutcomeFit> {
        let covs: Vec<&[f64]> = subjects.iter().map(|s| s.covariates.as_slice()).collect();
        let map = self.features.build(&covs)?;
        let ridge = match &self.ridge {
            RidgeChoice::Fixed(r) => *r,
            RidgeChoice::CrossValidated { folds, candidates } => select_ridge_cv(subjects, &map, *folds, candidates)?,
        };
        fit_outcome_with(subjects, &map, ridge, self.mode)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropensitySpec {
    pub features: FeatureSpec,
    pub clip: f64,
    #[serde(default)]
    pub ridge: f64,
}

/// Fixed logistic penalty used with spline propensity features.
pub const ADAPTIVE_PROPENSITY_RIDGE: f64 = 1.0;

impl PropensitySpec {
    pub fn logistic(features: FeatureSpec) -> Self {
        Self { features, clip: DEFAULT_CLIP, ridge: 0.0 }
    }

    pub fn adaptive() -> Self {
        Self { features: FeatureSpec::bspline(), clip: DEFAULT_CLIP, ridge: ADAPTIVE_PROPENSITY_RIDGE }
    }

    pub fn fit(&self, subjects: &[Subject]) -> Result<PropensityFit> {
        let covs: Vec<&[f64]> = subjects.iter().map(|s| s.covariates.as_slice()).collect();
        let map = self.features.build(&covs)?;
        fit_propensity_penalized(subjects, &map, self.clip, self.ridge)
    }
}

/// Both nuisance specifications.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NuisanceConfig {
    pub outcome: OutcomeSpec,
    pub propensity: PropensitySpec,
}

impl NuisanceConfig {
    pub fn linear(outcome: FeatureSpec, propensity: FeatureSpec) -> Self {
        Self { outcome: OutcomeSpec::linear(outcome), propensity: PropensitySpec::logistic(propensity) }
    }

    pub fn fit(&self, subjects: &[Subject]) -> Result<Nuisances> {
        Ok(Nuisances { outcome: self.outcome.fit(subjects)?, propensity: self.propensity.fit(subjects)? })
    }
}

#[derive(Clone, Debug)]
pub struct Nuisances {
    pub outcome: OutcomeFit,
    pub propensity: PropensityFit,
}

/// Anything that predicts the level-coordinate outcome curve `m_a(x)`.
pub trait OutcomeModel: Sync {
    fn predict_curve(&self, a: u8, x: &[f64]) -> Vec<f64>;
}

/// Anything that predicts `P(A = 1 | x)`.
pub trait PropensityModel: Sync {
    fn propensity(&self, x: &[f64]) -> f64;

    /// `f(a | x)`.
    fn arm_probability(&self, a: u8, x: &[f64]) -> f64 {
        let p = self.propensity(x);
        if a == 1 {
            p
        } else {
            1.0 - p
        }
    }
}

impl OutcomeModel for OutcomeFit {
    fn predict_curve(&self, a: u8, x: &[f64]) -> Vec<f64> {
        self.predict(a, x)
    }
}

impl PropensityModel for PropensityFit {
    fn propensity(&self, x: &[f64]) -> f64 {
        self.predict(x)
    }
}

/// Outcome model backed by a closure, e.g. a known data-generating mean.
pub struct FnOutcome<F>(pub F);

impl<F: Fn(u8, &[f64]) -> Vec<f64> + Sync> OutcomeModel for FnOutcome<F> {
    fn predict_curve(&self, a: u8, x: &[f64]) -> Vec<f64> {
        (self.0)(a, x)
    }
}

/// Propensity model backed by a closure.
pub struct FnPropensity<F>(pub F);

impl<F: Fn(&[f64]) -> f64 + Sync> PropensityModel for FnPropensity<F> {
    fn propensity(&self, x: &[f64]) -> f64 {
        (self.0)(x)
    }
}
