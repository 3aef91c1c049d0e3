use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::estimate::{dr_terms, row_mean, EffectEstimate, EstimatorKind, ReferenceKind};
use crate::error::{Error, Result};
use crate::nuisance::{common_bounds, common_grid, NuisanceConfig, Subject};
use crate::ot::{cdf_eval, mean_curve, QuantileCurve};
use crate::rng::{mix, rng_from_seed};

/// Random partition of `0..n` into `k` folds whose sizes differ by at most one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldPlan {
    k: usize,
    assignment: Vec<usize>,
    seed: u64,
}

impl FoldPlan {
    pub fn random(n: usize, k: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::Usage(format!("cross-fitting needs at least 2 folds, got {k}")));
        }
        if n < k {
            return Err(Error::InsufficientData(format!("{n} subjects cannot fill {k} folds")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng_from_seed(seed));
        let mut assignment = vec![0; n];
        for (pos, &i) in order.iter().enumerate() {
            assignment[i] = pos % k;
        }
        Ok(Self { k, assignment, seed })
    }

    /// Degenerate one-fold plan: nuisances are trained on all data and
    /// evaluated on all data.
    pub fn single(n: usize) -> Self {
        Self { k: 1, assignment: vec![0; n], seed: 0 }
    }

    pub fn folds(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == fold).collect()
    }

    /// Training complement of `fold` (everything, for the one-fold plan).
    pub fn complement(&self, fold: usize) -> Vec<usize> {
        if self.k == 1 {
            return (0..self.assignment.len()).collect();
        }
        (0..self.assignment.len()).filter(|&i| self.assignment[i] != fold).collect()
    }
}

/// One cross-fitted estimate together with its per-subject influence curves.
#[derive(Clone, Debug)]
pub struct CrossFitRun {
    pub estimate: EffectEstimate,
    /// `V_i` for every subject, in input order, from its out-of-fold nuisances.
    pub influence: Vec<Vec<f64>>,
    pub plan: FoldPlan,
}

fn is_estimated(reference: &ReferenceKind) -> Option<u8> {
    match reference {
        ReferenceKind::Bary0 => Some(0),
        ReferenceKind::Bary1 => Some(1),
        _ => None,
    }
}

fn arm_barycentre(subjects: &[Subject], idx: &[usize], arm: u8) -> Result<QuantileCurve> {
    let curves: Vec<QuantileCurve> = idx
        .iter()
        .map(|&i| &subjects[i])
        .filter(|s| s.treatment() == arm)
        .map(|s| s.lifted().clone())
        .collect();
    mean_curve(&curves)
}

/// Carries a fold curve stored in the level coordinates of its own reference
/// `fold_ref` to the common reference `common`: the composition
/// `g o fold_ref^{-1} o common` evaluated at `common^{-1}(u_j)`. Both
/// inversions are the identity for strictly increasing references.
pub fn transport_between_references(g: &[f64], fold_ref: &QuantileCurve, common: &QuantileCurve) -> Result<Vec<f64>> {
    fold_ref.grid().check_same(common.grid())?;
    let grid = common.grid();
    Ok(common
        .values()
        .iter()
        .map(|&t| {
            let level = cdf_eval(common, t);
            let s = fold_ref.quantile_at(level);
            grid.interpolate(g, cdf_eval(fold_ref, s))
        })
        .collect())
}

/// Cross-fitted DR estimate over an explicit fold plan.
pub fn cross_fit(
    subjects: &[Subject],
    plan: &FoldPlan,
    nuisance: &NuisanceConfig,
    reference: &ReferenceKind,
) -> Result<CrossFitRun> {
    let grid = common_grid(subjects)?;
    let bounds = common_bounds(subjects);
    let n = subjects.len();
    if plan.assignment().len() != n {
        return Err(Error::InvalidArgument("fold plan does not cover the subjects".into()));
    }
    let estimated = is_estimated(reference);
    let common = match estimated {
        Some(arm) => Some(arm_barycentre(subjects, &(0..n).collect::<Vec<_>>(), arm)?),
        None => None,
    };

    struct FoldOut {
        members: Vec<usize>,
        mu1: Vec<f64>,
        mu0: Vec<f64>,
        influence: Vec<Vec<f64>>,
    }

    let folds: Vec<FoldOut> = (0..plan.folds())
        .into_par_iter()
        .map(|k| -> Result<FoldOut> {
            let members = plan.members(k);
            let train_idx = plan.complement(k);
            let train: Vec<Subject> = train_idx.iter().map(|&i| subjects[i].clone()).collect();
            let treated = train.iter().filter(|s| s.is_treated()).count();
            if treated == 0 || treated == train.len() {
                return Err(Error::FoldDegenerate { fold: k });
            }
            let fits = nuisance.fit(&train)?;
            let test: Vec<&Subject> = members.iter().map(|&i| &subjects[i]).collect();
            let terms = dr_terms(&test, &fits.outcome, &fits.propensity);
            let mut mu1 = row_mean(&terms.treated);
            let mut mu0 = row_mean(&terms.control);
            if let (Some(arm), Some(common)) = (estimated, common.as_ref()) {
                let fold_ref = arm_barycentre(subjects, &train_idx, arm)?;
                mu1 = transport_between_references(&mu1, &fold_ref, common)?;
                mu0 = transport_between_references(&mu0, &fold_ref, common)?;
            }
            let influence = terms
                .treated
                .iter()
                .zip(&terms.control)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
                .collect();
            Ok(FoldOut { members, mu1, mu0, influence })
        })
        .collect::<Result<_>>()?;

    let m = grid.len();
    let mut mu1 = vec![0.0; m];
    let mut mu0 = vec![0.0; m];
    let mut influence = vec![Vec::new(); n];
    for f in folds {
        let w = f.members.len() as f64 / n as f64;
        for j in 0..m {
            mu1[j] += w * f.mu1[j];
            mu0[j] += w * f.mu0[j];
        }
        for (i, v) in f.members.into_iter().zip(f.influence) {
            influence[i] = v;
        }
    }
    let estimate = EffectEstimate::from_barycentres(grid, EstimatorKind::Cf, n, mu1, mu0, bounds)?
        .with_reference(reference.clone());
    Ok(CrossFitRun { estimate, influence, plan: plan.clone() })
}

/// K-fold cross-fitted DR estimator on a random partition.
pub fn estimate_cf(
    subjects: &[Subject],
    folds: usize,
    nuisance: &NuisanceConfig,
    reference: &ReferenceKind,
    seed: u64,
) -> Result<CrossFitRun> {
    let plan = FoldPlan::random(subjects.len(), folds, seed)?;
    cross_fit(subjects, &plan, nuisance, reference)
}

/// Median cross-fitting result with every repetition retained.
#[derive(Clone, Debug)]
pub struct MedianCrossFit {
    pub estimate: EffectEstimate,
    pub runs: Vec<CrossFitRun>,
}

/// Pointwise median over `repeats` independent partitions.
pub fn estimate_cf_median(
    subjects: &[Subject],
    folds: usize,
    repeats: usize,
    nuisance: &NuisanceConfig,
    reference: &ReferenceKind,
    seed: u64,
) -> Result<MedianCrossFit> {
    if repeats == 0 {
        return Err(Error::Usage("median cross-fitting needs at least one repetition".into()));
    }
    let runs: Vec<CrossFitRun> = (0..repeats as u64)
        .into_par_iter()
        .map(|r| estimate_cf(subjects, folds, nuisance, reference, mix(seed, r)))
        .collect::<Result<_>>()?;
    let estimates: Vec<&EffectEstimate> = runs.iter().map(|r| &r.estimate).collect();
    let estimate = median_combine(&estimates, common_bounds(subjects))?;
    Ok(MedianCrossFit { estimate, runs })
}

/// Index of the lower median (rank `ceil(R/2)`) of `values`.
pub fn lower_median_index(values: &[f64]) -> usize {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    idx[(values.len() - 1) / 2]
}

/// Pointwise median of effect curves. At each node the barycentre values are
/// taken from the repetition attaining the median effect, so the combined
/// estimate keeps `effect = mu1 - mu0` exactly.
pub fn median_combine(estimates: &[&EffectEstimate], bounds: (f64, f64)) -> Result<EffectEstimate> {
    let first = estimates
        .first()
        .ok_or_else(|| Error::InsufficientData("no repetitions to combine".into()))?;
    let m = first.grid.len();
    let mut mu1 = vec![0.0; m];
    let mut mu0 = vec![0.0; m];
    let mut column = Vec::with_capacity(estimates.len());
    for j in 0..m {
        column.clear();
        column.extend(estimates.iter().map(|e| e.effect[j]));
        let r = lower_median_index(&column);
        mu1[j] = estimates[r].mu1_raw[j];
        mu0[j] = estimates[r].mu0_raw[j];
    }
    let mut out = EffectEstimate::from_barycentres(first.grid.clone(), EstimatorKind::Cfmed, first.n, mu1, mu0, bounds)?
        .with_reference(first.reference.clone());
    out.repetitions = estimates.iter().map(|e| e.effect.clone()).collect();
    Ok(out)
}
