mod common;

use common::{grid, oracle_outcome, oracle_propensity, sample};
use distcausal::effects::{
    counterfactual_subject, cross_fit, effect_w2_norm, estimate_cf, estimate_cf_median, estimate_dr, estimate_ipw,
    estimate_or, population_transport_map, EstimatorKind, FoldPlan, ReferenceKind,
};
use distcausal::inference::influence_curves;
use distcausal::nuisance::{FeatureSpec, NuisanceConfig, Subject};
use distcausal::ot::{mean_curve, w2_distance, QuantileCurve};
use distcausal::simlab::{observed, true_effect, Scenario};
use std::f64::consts::PI;

#[test]
fn average_of_individual_effects_matches_barycentre_difference() {
    let sim = sample(300, Scenario::Linear, 7);
    let p1: Vec<QuantileCurve> = sim.iter().map(|s| s.potential[1].clone()).collect();
    let p0: Vec<QuantileCurve> = sim.iter().map(|s| s.potential[0].clone()).collect();
    let (b1, b0) = (mean_curve(&p1).unwrap(), mean_curve(&p0).unwrap());
    let n = sim.len() as f64;
    for j in 0..grid().len() {
        let mean_individual: f64 = sim.iter().map(|s| s.potential[1].values()[j] - s.potential[0].values()[j]).sum::<f64>() / n;
        let diff = b1.values()[j] - b0.values()[j];
        // summation and subtraction do not commute in floating point
        assert!((mean_individual - diff).abs() <= 4.0 * n * f64::EPSILON, "node {j}");
        assert!((diff - true_effect(&grid())[j]).abs() <= 1e-14);
    }
}

#[test]
fn influence_mean_is_the_dr_effect_bitwise() {
    let subjects = observed(&sample(200, Scenario::Linear, 8));
    let fits = NuisanceConfig::linear(FeatureSpec::Identity, FeatureSpec::Identity).fit(&subjects).unwrap();
    let est = estimate_dr(&subjects, &fits.outcome, &fits.propensity).unwrap();
    let infl = influence_curves(&subjects, &fits.outcome, &fits.propensity);
    assert_eq!(infl.mean(), est.effect);
    let plain: Vec<f64> = {
        let curves = infl.curves();
        (0..est.grid.len()).map(|j| curves.iter().map(|v| v[j]).sum::<f64>() / curves.len() as f64).collect()
    };
    for (a, b) in plain.iter().zip(&est.effect) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn effect_norm_equals_w2_between_barycentres_bitwise() {
    let subjects = observed(&sample(200, Scenario::Linear, 9));
    let fits = NuisanceConfig::linear(FeatureSpec::Identity, FeatureSpec::Identity).fit(&subjects).unwrap();
    for est in [
        estimate_or(&subjects, &fits.outcome).unwrap(),
        estimate_dr(&subjects, &fits.outcome, &fits.propensity).unwrap(),
    ] {
        let mu1 = QuantileCurve::new(est.grid.clone(), est.mu1_raw.clone(), (f64::MIN, f64::MAX)).unwrap();
        let mu0 = QuantileCurve::new(est.grid.clone(), est.mu0_raw.clone(), (f64::MIN, f64::MAX)).unwrap();
        assert_eq!(effect_w2_norm(&est).to_bits(), w2_distance(&mu1, &mu0).unwrap().to_bits());
    }
}

#[test]
fn oracle_nuisances_recover_the_median_effect() {
    let subjects = observed(&sample(2000, Scenario::Linear, 10));
    let (m, p) = (oracle_outcome(Scenario::Linear), oracle_propensity(Scenario::Linear));
    let dr = estimate_dr(&subjects, &m, &p).unwrap();
    let or = estimate_or(&subjects, &m).unwrap();
    let ipw = estimate_ipw(&subjects, &p).unwrap();
    assert!((or.effect_at(0.5) - 0.125).abs() < 1e-12);
    // Monte Carlo error of order n^{-1/2}
    assert!((dr.effect_at(0.5) - 0.125).abs() < 0.01, "{}", dr.effect_at(0.5));
    assert!((ipw.effect_at(0.5) - 0.125).abs() < 0.05, "{}", ipw.effect_at(0.5));
}

#[test]
fn single_fold_cross_fit_reduces_to_dr() {
    let subjects = observed(&sample(150, Scenario::Linear, 11));
    let config = NuisanceConfig::linear(FeatureSpec::Identity, FeatureSpec::Identity);
    let fits = config.fit(&subjects).unwrap();
    let dr = estimate_dr(&subjects, &fits.outcome, &fits.propensity).unwrap();
    let cf = cross_fit(&subjects, &FoldPlan::single(subjects.len()), &config, &ReferenceKind::Uniform).unwrap();
    assert_eq!(cf.estimate.effect, dr.effect);
    assert_eq!(cf.estimate.estimator, EstimatorKind::Cf);
}

#[test]
fn constant_shift_leaves_effect_unchanged() {
    let sim = sample(200, Scenario::Linear, 12);
    let subjects = observed(&sim);
    let shifted: Vec<Subject> = subjects
        .iter()
        .map(|s| {
            let vals: Vec<f64> = s.lifted().values().iter().map(|v| v + 3.0).collect();
            let c = QuantileCurve::new(s.lifted().grid().clone(), vals, (3.0, 4.0)).unwrap();
            Subject::from_curve(s.id.clone(), s.treatment(), s.covariates.clone(), c).unwrap()
        })
        .collect();
    let config = NuisanceConfig::linear(FeatureSpec::Identity, FeatureSpec::Identity);
    let (f, g) = (config.fit(&subjects).unwrap(), config.fit(&shifted).unwrap());
    let a = estimate_dr(&subjects, &f.outcome, &f.propensity).unwrap();
    let b = estimate_dr(&shifted, &g.outcome, &g.propensity).unwrap();
    for j in 0..a.grid.len() {
        assert!((a.effect[j] - b.effect[j]).abs() < 1e-10);
        assert!((b.mu0_raw[j] - a.mu0_raw[j] - 3.0).abs() < 1e-10);
    }
}

#[test]
fn counterfactual_of_control_adds_the_effect() {
    let sim = sample(1000, Scenario::Linear, 13);
    let subjects = observed(&sim);
    let config = NuisanceConfig::linear(FeatureSpec::Identity, FeatureSpec::Identity);
    let fits = config.fit(&subjects).unwrap();
    let est = estimate_dr(&subjects, &fits.outcome, &fits.propensity).unwrap();
    let control = subjects.iter().find(|s| !s.is_treated()).unwrap();
    let cf = counterfactual_subject(control, &est).unwrap();
    let gap = cf
        .counterfactual
        .values()
        .iter()
        .zip(control.lifted().values())
        .zip(grid().levels())
        .map(|((c, o), u)| (c - o - (PI * u).sin() / 8.0).abs())
        .fold(0.0, f64::max);
    assert!(gap <= 0.02, "sup gap {gap}");
    let map = population_transport_map(&est, &[est.mu0.values()[100]]).unwrap();
    assert!((map[0].1 - map[0].0 - est.effect[100]).abs() < 0.01);
}

#[test]
fn seeded_estimators_are_reproducible() {
    let subjects = observed(&sample(120, Scenario::Linear, 14));
    let config = NuisanceConfig::linear(FeatureSpec::Identity, FeatureSpec::Identity);
    let a = estimate_cf(&subjects, 4, &config, &ReferenceKind::Bary0, 3).unwrap();
    let b = estimate_cf(&subjects, 4, &config, &ReferenceKind::Bary0, 3).unwrap();
    assert_eq!(a.estimate, b.estimate);
    let c = estimate_cf_median(&subjects, 3, 4, &config, &ReferenceKind::Uniform, 5).unwrap();
    let d = estimate_cf_median(&subjects, 3, 4, &config, &ReferenceKind::Uniform, 5).unwrap();
    assert_eq!(serde_json::to_string(&c.estimate).unwrap(), serde_json::to_string(&d.estimate).unwrap());
    assert_eq!(sample(30, Scenario::Sine, 1)[7].subject, sample(30, Scenario::Sine, 1)[7].subject);
}
