use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::FeatureMap;
use super::linalg::factor_gram;
use super::subject::Subject;
use crate::error::{Error, Result};
use crate::ot::LevelGrid;

/// How treatment enters the outcome regression.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeMode {
    /// One model with design `(1, A, phi(X))`.
    #[default]
    Joint,
    /// Separate `(1, phi(X))` models in each arm.
    PerArm,
}

/// Per-level least-squares fit sharing one design.
#[derive(Clone, Debug)]
struct LevelModel {
    /// `p x M` coefficient table, column `j` for level `u_j`.
    coef: DMatrix<f64>,
    /// Residual variance per level, `RSS / (n - p)`.
    sigma2: Vec<f64>,
    /// Diagonal of `G^{-1} X'X G^{-1}` with `G = X'X + penalty`.
    sandwich_diag: Vec<f64>,
    df: f64,
}

/// Function-valued outcome regression `m_a(X)` on the level grid.
#[derive(Clone, Debug)]
pub struct OutcomeFit {
    features: FeatureMap,
    mode: OutcomeMode,
    ridge: f64,
    grid: LevelGrid,
    models: Vec<LevelModel>,
}

impl OutcomeFit {
    pub fn grid(&self) -> &LevelGrid {
        &self.grid
    }

    pub fn mode(&self) -> OutcomeMode {
        self.mode
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// Per-level linear predictor at features `(1, a, phi(x))`.
    pub fn predict(&self, a: u8, x: &[f64]) -> Vec<f64> {
        let (model, row) = match self.mode {
            OutcomeMode::Joint => (&self.models[0], design_row(&self.features, Some(a), x)),
            OutcomeMode::PerArm => (&self.models[a.min(1) as usize], design_row(&self.features, None, x)),
        };
        let m = self.grid.len();
        (0..m)
            .map(|j| row.iter().enumerate().map(|(k, r)| r * model.coef[(k, j)]).sum())
            .collect()
    }

    /// Coefficient curve `k` of the joint model (0 intercept, 1 treatment, then features).
    pub fn coefficient_curve(&self, k: usize) -> Option<Vec<f64>> {
        let model = self.joint()?;
        (k < model.coef.nrows()).then(|| model.coef.row(k).iter().copied().collect())
    }

    /// Standard error curve of coefficient `k` of the joint model, per level.
    pub fn coefficient_se(&self, k: usize) -> Option<Vec<f64>> {
        let model = self.joint()?;
        (k < model.coef.nrows()).then(|| model.sigma2.iter().map(|s| (s * model.sandwich_diag[k]).sqrt()).collect())
    }

    /// Residual degrees of freedom of the joint model.
    pub fn residual_df(&self) -> Option<f64> {
        self.joint().map(|m| m.df)
    }

    fn joint(&self) -> Option<&LevelModel> {
        match self.mode {
            OutcomeMode::Joint => self.models.first(),
            OutcomeMode::PerArm => None,
        }
    }
}

fn design_row(features: &FeatureMap, arm: Option<u8>, x: &[f64]) -> Vec<f64> {
    let mut row = Vec::with_capacity(2 + features.dim(x.len()));
    row.push(1.0);
    if let Some(a) = arm {
        row.push(a as f64);
    }
    features.apply_into(x, &mut row);
    row
}

/// Joint fit with treatment as a regressor.
pub fn fit_outcome(subjects: &[Subject], features: &FeatureMap, ridge: f64) -> Result<OutcomeFit> {
    fit_outcome_with(subjects, features, ridge, OutcomeMode::Joint)
}

pub fn fit_outcome_with(subjects: &[Subject], features: &FeatureMap, ridge: f64, mode: OutcomeMode) -> Result<OutcomeFit> {
    let refs: Vec<&Subject> = subjects.iter().collect();
    fit_outcome_refs(&refs, features, ridge, mode)
}

pub(crate) fn fit_outcome_refs(
    subjects: &[&Subject],
    features: &FeatureMap,
    ridge: f64,
    mode: OutcomeMode,
) -> Result<OutcomeFit> {
    if !(ridge >= 0.0) {
        return Err(Error::InvalidArgument(format!("ridge penalty {ridge} must be nonnegative")));
    }
    let first = subjects.first().ok_or_else(|| Error::InsufficientData("no subjects".into()))?;
    let grid = first.lifted().grid().clone();
    for s in subjects {
        grid.check_same(s.lifted().grid())?;
    }
    let models = match mode {
        OutcomeMode::Joint => vec![fit_levels(subjects, features, ridge, true)?],
        OutcomeMode::PerArm => {
            let mut models = Vec::with_capacity(2);
            for arm in 0..=1u8 {
                let part: Vec<&Subject> = subjects.iter().copied().filter(|s| s.treatment() == arm).collect();
                if part.is_empty() {
                    return Err(Error::InsufficientData(format!("arm {arm} has no subjects")));
                }
                models.push(fit_levels(&part, features, ridge, false)?);
            }
            models
        }
    };
    Ok(OutcomeFit { features: features.clone(), mode, ridge, grid, models })
}

fn fit_levels(subjects: &[&Subject], features: &FeatureMap, ridge: f64, with_arm: bool) -> Result<LevelModel> {
    let n = subjects.len();
    let m = subjects[0].lifted().grid().len();
    let rows: Vec<Vec<f64>> = subjects
        .iter()
        .map(|s| design_row(features, with_arm.then(|| s.treatment()), &s.covariates))
        .collect();
    let p = rows[0].len();
    let x = DMatrix::from_fn(n, p, |i, k| rows[i][k]);
    let z = DMatrix::from_fn(n, m, |i, j| subjects[i].lifted().values()[j]);
    let xtx = x.transpose() * &x;
    let mut gram = xtx.clone();
    let first_penalized = if with_arm { 2 } else { 1 };
    for k in first_penalized..p {
        gram[(k, k)] += ridge;
    }
    let chol = factor_gram(gram, "outcome design")?;
    let coef = solve_levels(&chol, &(x.transpose() * &z));
    let inv = chol.inverse();
    let sandwich = &inv * xtx * &inv;
    let sandwich_diag = (0..p).map(|k| sandwich[(k, k)]).collect();
    let resid = z - &x * &coef;
    let df = (n as f64 - p as f64).max(1.0);
    let sigma2 = (0..m)
        .map(|j| resid.column(j).norm_squared() / df)
        .collect();
    Ok(LevelModel { coef, sigma2, sandwich_diag, df })
}

/// Solves every level against the shared factorization.
pub(crate) fn solve_levels(chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>, xtz: &DMatrix<f64>) -> DMatrix<f64> {
    chol.solve(xtz)
}

/// Picks the penalty minimizing fold-averaged integrated squared prediction
/// error of the lifted curves; ties go to the larger penalty. Subject `i`
/// belongs to fold `i mod folds`.
pub fn select_ridge_cv(subjects: &[Subject], features: &FeatureMap, folds: usize, candidates: &[f64]) -> Result<f64> {
    if folds < 2 {
        return Err(Error::InvalidArgument("cross-validation needs at least two folds".into()));
    }
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidate penalties".into()));
    }
    if candidates.len() == 1 {
        return Ok(candidates[0]);
    }
    let errors: Vec<f64> = candidates
        .par_iter()
        .map(|&ridge| cv_error(subjects, features, folds, ridge))
        .collect();
    let mut best = (f64::INFINITY, f64::NEG_INFINITY);
    for (&err, &ridge) in errors.iter().zip(candidates) {
        let tie = (err - best.0).abs() <= 1e-12 * best.0.abs();
        if err < best.0 && !tie || tie && ridge > best.1 {
            best = (err, ridge);
        }
    }
    if best.0.is_finite() {
        Ok(best.1)
    } else {
        Err(Error::SingularDesign("every candidate penalty failed in some fold".into()))
    }
}

fn cv_error(subjects: &[Subject], features: &FeatureMap, folds: usize, ridge: f64) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for k in 0..folds {
        let train: Vec<&Subject> = subjects
            .iter()
            .enumerate()
            .filter(|(i, _)| i % folds != k)
            .map(|(_, s)| s)
            .collect();
        let fit = match fit_outcome_refs(&train, features, ridge, OutcomeMode::Joint) {
            Ok(f) => f,
            Err(_) => return f64::INFINITY,
        };
        for s in subjects.iter().skip(k).step_by(folds) {
            let pred = fit.predict(s.treatment(), &s.covariates);
            let ise: f64 = pred
                .iter()
                .zip(s.lifted().values())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                * fit.grid().weight();
            total += ise;
            count += 1;
        }
    }
    total / count as f64
}
