use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dgp::{dgp_sample, metric_bias_median, metric_rmise, observed, true_effect, Scenario};
use crate::effects::{
    estimate_cf, estimate_cf_median, estimate_dr, estimate_ipw, estimate_or, EffectEstimate, EstimatorKind,
    ReferenceKind,
};
use crate::error::{Error, Result};
use crate::inference::{cf_median_covariance, covariance_kernel, influence_curves, scb, CovKernel};
use crate::io::format_f64;
use crate::nuisance::{
    FeatureSpec, NuisanceConfig, OutcomeFit, OutcomeSpec, PropensityFit, PropensitySpec, Subject,
};
use crate::ot::LevelGrid;
use crate::rng::mix;

/// How a nuisance model relates to the data-generating process.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelSpec {
    /// The working model contains the truth.
    Correct,
    /// The confounder enters as `X^2` instead.
    #[serde(alias = "square-misspecified")]
    Square,
    /// Additive B-splines with a data-driven penalty.
    Adaptive,
}

impl ModelSpec {
    fn features(self, scenario: Scenario) -> FeatureSpec {
        match (self, scenario) {
            (ModelSpec::Correct, Scenario::Linear) => FeatureSpec::Identity,
            (ModelSpec::Correct, Scenario::Sine) => FeatureSpec::Sine,
            (ModelSpec::Square, _) => FeatureSpec::Square,
            (ModelSpec::Adaptive, _) => FeatureSpec::bspline(),
        }
    }

    pub fn outcome(self, scenario: Scenario) -> OutcomeSpec {
        match self {
            ModelSpec::Adaptive => OutcomeSpec::adaptive(),
            _ => OutcomeSpec::linear(self.features(scenario)),
        }
    }

    pub fn propensity(self, scenario: Scenario) -> PropensitySpec {
        match self {
            ModelSpec::Adaptive => PropensitySpec::adaptive(),
            _ => PropensitySpec::logistic(self.features(scenario)),
        }
    }

    fn label(spec: Option<Self>) -> &'static str {
        match spec {
            None => "-",
            Some(ModelSpec::Correct) => "correct",
            Some(ModelSpec::Square) => "square",
            Some(ModelSpec::Adaptive) => "adaptive",
        }
    }
}

/// One row of the simulation table: an estimator with its nuisance models.
/// OR ignores the propensity model and IPW ignores the outcome model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cell {
    pub estimator: EstimatorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ps: Option<ModelSpec>,
    #[serde(default, rename = "or", skip_serializing_if = "Option::is_none")]
    pub or: Option<ModelSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageSpec {
    pub alpha: f64,
    pub resamples: usize,
    /// Multiplies the estimated kernel before resampling.
    #[serde(default = "one")]
    pub kernel_scale: f64,
}

fn one() -> f64 {
    1.0
}

fn default_k_obs() -> usize {
    1001
}

fn default_grid() -> usize {
    201
}

fn default_folds() -> usize {
    5
}

fn default_repeats() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    #[serde(default = "default_k_obs")]
    pub k_obs: usize,
    pub replicates: usize,
    #[serde(default)]
    pub scenario: Scenario,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    pub base_seed: u64,
    pub cells: Vec<Cell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<CoverageSpec>,
}

fn config_error(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config { path: path.into(), message: message.into() }
}

impl SimConfig {
    /// Parses a TOML config; errors carry the offending field path.
    pub fn from_toml_str(raw: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(raw).map_err(|e| config_error("", e.message().to_string()))?;
        let cfg: SimConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_error(path, e.into_inner().message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("n", self.n), ("k_obs", self.k_obs), ("replicates", self.replicates), ("grid", self.grid)] {
            if v == 0 {
                return Err(config_error(name, "must be positive"));
            }
        }
        if self.cells.is_empty() {
            return Err(config_error("cells", "at least one cell required"));
        }
        for (i, c) in self.cells.iter().enumerate() {
            let at = |f: &str| format!("cells[{i}].{f}");
            let (needs_ps, needs_or) = match c.estimator {
                EstimatorKind::Or => (false, true),
                EstimatorKind::Ipw => (true, false),
                _ => (true, true),
            };
            if needs_ps != c.ps.is_some() {
                return Err(config_error(at("ps"), if needs_ps { "required" } else { "not used by this estimator" }));
            }
            if needs_or != c.or.is_some() {
                return Err(config_error(at("or"), if needs_or { "required" } else { "not used by this estimator" }));
            }
            if matches!(c.estimator, EstimatorKind::Cf | EstimatorKind::Cfmed) && self.folds < 2 {
                return Err(config_error("folds", "cross-fitting needs at least 2 folds"));
            }
            if c.estimator == EstimatorKind::Cfmed && self.repeats == 0 {
                return Err(config_error("repeats", "must be positive"));
            }
        }
        if let Some(cov) = &self.coverage {
            if !(cov.alpha > 0.0 && cov.alpha <= 1.0) {
                return Err(config_error("coverage.alpha", "must lie in (0, 1]"));
            }
            if cov.resamples == 0 {
                return Err(config_error("coverage.resamples", "must be positive"));
            }
            if !(cov.kernel_scale >= 0.0 && cov.kernel_scale.is_finite()) {
                return Err(config_error("coverage.kernel_scale", "must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

/// Mean over replicates with its Monte Carlo standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanSe {
    pub mean: Option<f64>,
    /// Sample SD over `sqrt(replicates)`; absent with fewer than two replicates.
    pub se: Option<f64>,
}

impl MeanSe {
    pub fn of(values: &[f64]) -> Self {
        let k = values.len();
        if k == 0 {
            return Self { mean: None, se: None };
        }
        let mean = values.iter().sum::<f64>() / k as f64;
        let se = (k > 1).then(|| {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
            (var / k as f64).sqrt()
        });
        Self { mean: Some(mean), se }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSummary {
    pub cell: Cell,
    pub n: usize,
    /// Replicates that produced an estimate.
    pub replicates: usize,
    pub failures: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_failure: Option<String>,
    pub bias: MeanSe,
    pub rmise: MeanSe,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MCResult {
    pub config: SimConfig,
    pub cells: Vec<CellSummary>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReplicateMetrics {
    pub bias: f64,
    pub rmise: f64,
    pub covered: Option<bool>,
}

struct Fits {
    outcome: HashMap<ModelSpec, std::result::Result<OutcomeFit, String>>,
    propensity: HashMap<ModelSpec, std::result::Result<PropensityFit, String>>,
}

impl Fits {
    fn new(config: &SimConfig, subjects: &[Subject]) -> Self {
        let mut outcome = HashMap::new();
        let mut propensity = HashMap::new();
        let plain = |c: &Cell| !matches!(c.estimator, EstimatorKind::Cf | EstimatorKind::Cfmed);
        for c in config.cells.iter().filter(|c| plain(c)) {
            if let Some(s) = c.or {
                outcome
                    .entry(s)
                    .or_insert_with(|| s.outcome(config.scenario).fit(subjects).map_err(|e| e.to_string()));
            }
            if let Some(s) = c.ps {
                propensity
                    .entry(s)
                    .or_insert_with(|| s.propensity(config.scenario).fit(subjects).map_err(|e| e.to_string()));
            }
        }
        Self { outcome, propensity }
    }

    fn outcome(&self, s: ModelSpec) -> std::result::Result<&OutcomeFit, String> {
        self.outcome[&s].as_ref().map_err(Clone::clone)
    }

    fn propensity(&self, s: ModelSpec) -> std::result::Result<&PropensityFit, String> {
        self.propensity[&s].as_ref().map_err(Clone::clone)
    }
}

/// Seeds for replicate `r`: data, fold partitions, band resampling.
pub fn replicate_seed(base: u64, r: usize) -> u64 {
    base ^ r as u64
}

fn run_cell(
    config: &SimConfig,
    cell: &Cell,
    subjects: &[Subject],
    fits: &Fits,
    seed: u64,
) -> std::result::Result<ReplicateMetrics, String> {
    let scen = config.scenario;
    let nuisance = || NuisanceConfig {
        outcome: cell.or.expect("validated").outcome(scen),
        propensity: cell.ps.expect("validated").propensity(scen),
    };
    let coverage = config.coverage.as_ref();
    let fold_seed = mix(seed, 1);
    let band_seed = mix(seed, 2);
    let err = |e: Error| e.to_string();
    let (est, kernel): (EffectEstimate, Option<CovKernel>) = match cell.estimator {
        EstimatorKind::Or => (estimate_or(subjects, fits.outcome(cell.or.unwrap())?).map_err(err)?, None),
        EstimatorKind::Ipw => (estimate_ipw(subjects, fits.propensity(cell.ps.unwrap())?).map_err(err)?, None),
        EstimatorKind::Dr => {
            let om = fits.outcome(cell.or.unwrap())?;
            let pm = fits.propensity(cell.ps.unwrap())?;
            let est = estimate_dr(subjects, om, pm).map_err(err)?;
            let kernel = match coverage {
                Some(_) => Some(covariance_kernel(&influence_curves(subjects, om, pm).curves(), &est.grid).map_err(err)?),
                None => None,
            };
            (est, kernel)
        }
        EstimatorKind::Cf => {
            let run = estimate_cf(subjects, config.folds, &nuisance(), &ReferenceKind::Uniform, fold_seed).map_err(err)?;
            let kernel = match coverage {
                Some(_) => Some(covariance_kernel(&run.influence, &run.estimate.grid).map_err(err)?),
                None => None,
            };
            (run.estimate, kernel)
        }
        EstimatorKind::Cfmed => {
            let med = estimate_cf_median(subjects, config.folds, config.repeats, &nuisance(), &ReferenceKind::Uniform, fold_seed)
                .map_err(err)?;
            let kernel = match coverage {
                Some(_) => {
                    let kernels: Vec<CovKernel> = med
                        .runs
                        .iter()
                        .map(|r| covariance_kernel(&r.influence, &r.estimate.grid))
                        .collect::<Result<_>>()
                        .map_err(err)?;
                    let effects: Vec<Vec<f64>> = med.runs.iter().map(|r| r.estimate.effect.clone()).collect();
                    Some(cf_median_covariance(&effects, &kernels, &med.estimate.effect).map_err(err)?)
                }
                None => None,
            };
            (med.estimate, kernel)
        }
    };
    let covered = match (coverage, kernel) {
        (Some(spec), Some(k)) => {
            let band = scb(&est, &k.scaled(spec.kernel_scale), spec.alpha, spec.resamples, band_seed).map_err(err)?;
            Some(band.contains(&true_effect(&est.grid)))
        }
        _ => None,
    };
    Ok(ReplicateMetrics { bias: metric_bias_median(&est), rmise: metric_rmise(&est), covered })
}

/// All cells on replicate `r`.
pub fn run_replicate(config: &SimConfig, r: usize) -> Result<Vec<std::result::Result<ReplicateMetrics, String>>> {
    let seed = replicate_seed(config.base_seed, r);
    let grid = LevelGrid::new(config.grid)?;
    let sample = dgp_sample(config.n, config.k_obs, config.scenario, &grid, seed)?;
    let subjects = observed(&sample);
    let fits = Fits::new(config, &subjects);
    Ok(config.cells.iter().map(|c| run_cell(config, c, &subjects, &fits, seed)).collect())
}

/// Monte Carlo study: replicates run in parallel and are aggregated in
/// replicate order, so the result is a pure function of the config.
pub fn run_mc(config: &SimConfig) -> Result<MCResult> {
    config.validate()?;
    let per_rep: Vec<_> = (0..config.replicates)
        .into_par_iter()
        .map(|r| run_replicate(config, r))
        .collect::<Result<_>>()?;
    let cells = config
        .cells
        .iter()
        .enumerate()
        .map(|(ci, cell)| {
            let mut bias = Vec::new();
            let mut rmise = Vec::new();
            let mut covered = Vec::new();
            let mut failures = 0;
            let mut first_failure = None;
            for rep in &per_rep {
                match &rep[ci] {
                    Ok(m) => {
                        bias.push(m.bias);
                        rmise.push(m.rmise);
                        covered.extend(m.covered);
                    }
                    Err(msg) => {
                        failures += 1;
                        first_failure.get_or_insert_with(|| msg.clone());
                    }
                }
            }
            let coverage = (!covered.is_empty())
                .then(|| covered.iter().filter(|&&c| c).count() as f64 / covered.len() as f64);
            CellSummary {
                cell: *cell,
                n: config.n,
                replicates: bias.len(),
                failures,
                first_failure,
                bias: MeanSe::of(&bias),
                rmise: MeanSe::of(&rmise),
                coverage,
            }
        })
        .collect();
    Ok(MCResult { config: config.clone(), cells })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageRate {
    pub cell: Cell,
    pub coverage: f64,
    pub replicates: usize,
    pub failures: usize,
}

/// Fraction of replicates whose simultaneous band contains the true effect
/// at every node. Every cell must use correctly specified nuisances and an
/// estimator with an influence-function kernel.
pub fn coverage_experiment(config: &SimConfig, alpha: f64, resamples: usize) -> Result<Vec<CoverageRate>> {
    for (i, c) in config.cells.iter().enumerate() {
        if !matches!(c.estimator, EstimatorKind::Dr | EstimatorKind::Cf | EstimatorKind::Cfmed) {
            return Err(config_error(format!("cells[{i}].estimator"), "coverage needs dr, cf or cfmed"));
        }
        if c.ps != Some(ModelSpec::Correct) || c.or != Some(ModelSpec::Correct) {
            return Err(config_error(format!("cells[{i}]"), "coverage needs both nuisance models correct"));
        }
    }
    let scale = config.coverage.as_ref().map_or(1.0, |c| c.kernel_scale);
    let mut cfg = config.clone();
    cfg.coverage = Some(CoverageSpec { alpha, resamples, kernel_scale: scale });
    let result = run_mc(&cfg)?;
    Ok(result
        .cells
        .into_iter()
        .map(|c| CoverageRate {
            cell: c.cell,
            coverage: c.coverage.unwrap_or(f64::NAN),
            replicates: c.replicates,
            failures: c.failures,
        })
        .collect())
}

impl MCResult {
    /// Table with one row per cell; metric columns are scaled by 100.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("estimator,ps,or,n,bias_x100,bias_se_x100,rmise_x100,rmise_se_x100\n");
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format_f64(100.0 * x));
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                c.cell.estimator,
                ModelSpec::label(c.cell.ps),
                ModelSpec::label(c.cell.or),
                c.n,
                cell(c.bias.mean),
                cell(c.bias.se),
                cell(c.rmise.mean),
                cell(c.rmise.se)
            );
        }
        out
    }

    pub fn cell(&self, estimator: EstimatorKind, ps: Option<ModelSpec>, or: Option<ModelSpec>) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.cell == Cell { estimator, ps, or })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(cells: Vec<Cell>) -> SimConfig {
        SimConfig {
            n: 60,
            k_obs: 51,
            replicates: 3,
            scenario: Scenario::Linear,
            grid: 21,
            folds: 2,
            repeats: 3,
            base_seed: 11,
            cells,
            coverage: None,
        }
    }

    fn dr() -> Cell {
        Cell { estimator: EstimatorKind::Dr, ps: Some(ModelSpec::Correct), or: Some(ModelSpec::Correct) }
    }

    #[test]
    fn mean_se_conventions() {
        let single = MeanSe::of(&[0.25]);
        assert_eq!(single.mean, Some(0.25));
        assert_eq!(single.se, None);
        let pair = MeanSe::of(&[1.0, 3.0]);
        assert_eq!(pair.mean, Some(2.0));
        assert!((pair.se.unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(MeanSe::of(&[]).mean, None);
    }

    #[test]
    fn single_replicate_matches_direct_run() {
        let mut cfg = small(vec![dr()]);
        cfg.replicates = 1;
        let res = run_mc(&cfg).unwrap();
        let direct = run_replicate(&cfg, 0).unwrap()[0].clone().unwrap();
        assert_eq!(res.cells[0].bias.mean, Some(direct.bias));
        assert_eq!(res.cells[0].rmise.mean, Some(direct.rmise));
        assert_eq!(res.cells[0].bias.se, None);
    }

    #[test]
    fn rerun_is_identical() {
        let cfg = small(vec![dr(), Cell { estimator: EstimatorKind::Cfmed, ..dr() }]);
        assert_eq!(run_mc(&cfg).unwrap(), run_mc(&cfg).unwrap());
    }

    #[test]
    fn validation_reports_field_paths() {
        let bad = small(vec![Cell { estimator: EstimatorKind::Or, ps: Some(ModelSpec::Correct), or: Some(ModelSpec::Correct) }]);
        match bad.validate() {
            Err(Error::Config { path, .. }) => assert_eq!(path, "cells[0].ps"),
            other => panic!("{other:?}"),
        }
        let raw = "n = 10\nreplicates = 1\nbase_seed = 1\n[[cells]]\nestimator = \"dr\"\nps = \"correct\"\nor = \"wrong\"\n";
        match SimConfig::from_toml_str(raw) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "cells[0].or"),
            other => panic!("{other:?}"),
        }
        let zero = "n = 0\nreplicates = 1\nbase_seed = 1\n[[cells]]\nestimator = \"or\"\nor = \"correct\"\n";
        assert!(matches!(SimConfig::from_toml_str(zero), Err(Error::Config { path, .. }) if path == "n"));
    }

    #[test]
    fn kernel_scale_extremes() {
        let mut cfg = small(vec![dr()]);
        cfg.coverage = Some(CoverageSpec { alpha: 0.05, resamples: 50, kernel_scale: 1e8 });
        let wide = coverage_experiment(&cfg, 0.05, 50).unwrap();
        assert_eq!(wide[0].coverage, 1.0);
        cfg.coverage.as_mut().unwrap().kernel_scale = 0.0;
        let zero = coverage_experiment(&cfg, 0.05, 50).unwrap();
        assert_eq!(zero[0].coverage, 0.0);
    }

    #[test]
    fn coverage_requires_correct_models() {
        let cfg = small(vec![Cell { ps: Some(ModelSpec::Square), ..dr() }]);
        assert!(coverage_experiment(&cfg, 0.05, 10).is_err());
    }

    #[test]
    fn csv_marks_unused_models() {
        let cfg = small(vec![Cell { estimator: EstimatorKind::Or, ps: None, or: Some(ModelSpec::Square) }]);
        let csv = run_mc(&cfg).unwrap().to_csv();
        let row = csv.lines().nth(1).unwrap();
        assert!(row.starts_with("or,-,square,60,"));
    }
}
