//! Causal effect estimators in probability-level coordinates.
//!
//! For a reference distribution `lambda`, the effect map at level `u` equals
//! `mu1^{-1}(u) - mu0^{-1}(u)` whatever `lambda` is, so every estimator works
//! on level-indexed curves and the reference only enters when the map is
//! rendered on the outcome axis or when cross-fitting folds carry their own
//! estimated references.

mod crossfit;
mod estimate;
mod interpret;

pub use crossfit::{
    cross_fit, estimate_cf, estimate_cf_median, lower_median_index, median_combine, transport_between_references,
    CrossFitRun, FoldPlan, MedianCrossFit,
};
pub use estimate::{estimate_dr, estimate_ipw, estimate_or, EffectEstimate, EstimatorKind, ReferenceKind};
pub use interpret::{
    counterfactual_subject, effect_w2_norm, population_transport_map, reference_curve, render_effect_map,
    Counterfactual,
};

pub(crate) use estimate::{dr_terms, row_mean};
