use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use super::dataset::{flat_csv_path, parse_dataset, read_reference_curve, Dataset, DatasetOptions, InputFormat};
use super::document::{ResultDocument, Seeds, TestDecisions, SCHEMA_VERSION};
use super::format::{format_f64, to_json_string, write_atomic};
use crate::effects::{
    counterfactual_subject, effect_w2_norm, estimate_cf, estimate_cf_median, estimate_dr, estimate_ipw, estimate_or,
    reference_curve, EffectEstimate, EstimatorKind, ReferenceKind,
};
use crate::error::{Error, Result};
use crate::inference::{
    cf_median_covariance, covariance_kernel, influence_curves, norm_test, or_pointwise_interval, scb,
    test_null_zero_band, CovKernel,
};
use crate::nuisance::{
    FeatureSpec, NuisanceConfig, OutcomeSpec, PropensitySpec, RidgeChoice, ADAPTIVE_PROPENSITY_RIDGE,
    DEFAULT_RIDGE_GRID,
};
use crate::rng::mix;
use crate::simlab::{fixture_nhanes_like, run_mc, FixtureConfig, SimConfig};

/// Cross-fitting defaults when the flags are omitted.
pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_REPEATS: usize = 20;

#[derive(Parser, Debug)]
#[command(name = "distcausal", version, about = "Causal effects on distribution-valued outcomes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Estimate the effect map and its simultaneous band.
    Estimate(EstimateArgs),
    /// Counterfactual distribution of one subject under the other arm.
    Counterfactual(CounterfactualArgs),
    /// Run a Monte Carlo study from a TOML config.
    Simulate(SimulateArgs),
    /// Write the synthetic accelerometer-style cohort as long-format CSV.
    Fixture(FixtureArgs),
}

fn parse_bounds(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected LO,HI")?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad lower bound `{lo}`"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad upper bound `{hi}`"))?;
    if !(lo < hi) {
        return Err("need LO < HI".into());
    }
    Ok((lo, hi))
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "treatment")]
    pub treatment: String,
    /// Comma-separated covariate columns.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    /// Outcome interval `LO,HI`; values outside are dropped.
    #[arg(long, value_parser = parse_bounds, allow_hyphen_values = true)]
    pub bounds: (f64, f64),
    #[arg(long, default_value_t = crate::ot::DEFAULT_LEVELS)]
    pub grid: usize,
    #[arg(long, default_value = "dr")]
    pub estimator: EstimatorKind,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
    /// uniform | bary0 | bary1 | subject:ID | file:PATH
    #[arg(long, default_value = "uniform")]
    pub reference: String,
    #[arg(long, default_value = "identity")]
    pub ps_features: FeatureSpec,
    #[arg(long, default_value = "identity")]
    pub or_features: FeatureSpec,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1000)]
    pub resamples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub min_obs: usize,
    /// Drop observations equal to zero before lifting.
    #[arg(long)]
    pub drop_zeros: bool,
    #[arg(long, value_enum, default_value_t = InputFormat::Long)]
    pub format: InputFormat,
    #[arg(long, default_value = "subject_id")]
    pub subject_column: String,
    #[arg(long, default_value = "value")]
    pub value_column: String,
    /// JSON output; a flat CSV is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug)]
pub struct CounterfactualArgs {
    #[arg(long)]
    pub subject: String,
    #[command(flatten)]
    pub estimate: EstimateArgs,
}

#[derive(Args, Clone, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone, Debug)]
pub struct FixtureArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20.0)]
    pub shift: f64,
    #[arg(long, default_value_t = 0)]
    pub short_subjects: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `uniform | bary0 | bary1 | subject:ID | file:PATH`.
pub fn parse_reference(s: &str) -> Result<ReferenceKind> {
    match s {
        "uniform" => Ok(ReferenceKind::Uniform),
        "bary0" => Ok(ReferenceKind::Bary0),
        "bary1" => Ok(ReferenceKind::Bary1),
        other => {
            if let Some(id) = other.strip_prefix("subject:").filter(|id| !id.is_empty()) {
                Ok(ReferenceKind::Subject(id.to_string()))
            } else if let Some(p) = other.strip_prefix("file:").filter(|p| !p.is_empty()) {
                Ok(ReferenceKind::External(p.to_string()))
            } else {
                Err(Error::Usage(format!(
                    "unknown reference `{other}` (uniform|bary0|bary1|subject:ID|file:PATH)"
                )))
            }
        }
    }
}

impl EstimateArgs {
    /// Rejects flag combinations that have no meaning.
    pub fn validate(&self) -> Result<()> {
        let cross = matches!(self.estimator, EstimatorKind::Cf | EstimatorKind::Cfmed);
        if self.repeats.is_some() && self.estimator != EstimatorKind::Cfmed {
            return Err(Error::Usage("--repeats requires --estimator cfmed".into()));
        }
        if self.folds.is_some() && !cross {
            return Err(Error::Usage("--folds requires --estimator cf or cfmed".into()));
        }
        if cross && self.folds.unwrap_or(DEFAULT_FOLDS) < 2 {
            return Err(Error::Usage("cross-fitting needs --folds K with K >= 2".into()));
        }
        if self.repeats == Some(0) {
            return Err(Error::Usage("--repeats must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Usage(format!("--alpha {} outside (0, 1)", self.alpha)));
        }
        if self.resamples == 0 {
            return Err(Error::Usage("--resamples must be positive".into()));
        }
        if self.grid == 0 {
            return Err(Error::Usage("--grid must be positive".into()));
        }
        parse_reference(&self.reference)?;
        Ok(())
    }

    pub fn dataset_options(&self) -> DatasetOptions {
        DatasetOptions {
            treatment: self.treatment.clone(),
            covariates: self.covariates.clone(),
            subject_column: self.subject_column.clone(),
            value_column: self.value_column.clone(),
            bounds: self.bounds,
            grid: self.grid,
            min_obs: self.min_obs,
            drop_zeros: self.drop_zeros,
            format: self.format,
        }
    }

    /// Spline features switch on the penalized, data-adaptive fits.
    pub fn nuisance(&self) -> NuisanceConfig {
        let outcome = match self.or_features {
            FeatureSpec::Bspline { .. } => OutcomeSpec {
                features: self.or_features,
                ridge: RidgeChoice::CrossValidated { folds: 5, candidates: DEFAULT_RIDGE_GRID.to_vec() },
                mode: Default::default(),
            },
            f => OutcomeSpec::linear(f),
        };
        let mut propensity = PropensitySpec::logistic(self.ps_features);
        if matches!(self.ps_features, FeatureSpec::Bspline { .. }) {
            propensity.ridge = ADAPTIVE_PROPENSITY_RIDGE;
        }
        NuisanceConfig { outcome, propensity }
    }

    fn seeds(&self) -> Seeds {
        let cross = matches!(self.estimator, EstimatorKind::Cf | EstimatorKind::Cfmed);
        Seeds {
            seed: self.seed,
            folds: cross.then(|| mix(self.seed, 1)),
            band: mix(self.seed, 2),
            norm: mix(self.seed, 3),
        }
    }
}

struct Clock {
    start: Instant,
    last: Instant,
    phases: BTreeMap<String, f64>,
}

impl Clock {
    fn new() -> Self {
        let now = Instant::now();
        Self { start: now, last: now, phases: BTreeMap::new() }
    }

    fn lap(&mut self, name: &str) {
        let now = Instant::now();
        self.phases.insert(name.into(), (now - self.last).as_secs_f64() * 1e3);
        self.last = now;
    }

    fn finish(mut self) -> BTreeMap<String, f64> {
        self.phases.insert("total".into(), self.start.elapsed().as_secs_f64() * 1e3);
        self.phases
    }
}

/// Estimation without writing anything; returns the document and the data.
pub fn run_estimate(args: &EstimateArgs) -> Result<(ResultDocument, Dataset)> {
    args.validate()?;
    let reference = parse_reference(&args.reference)?;
    let mut clock = Clock::new();
    let data = parse_dataset(&args.data, &args.dataset_options())?;
    clock.lap("parse");
    let subjects = &data.subjects;
    let grid = crate::ot::LevelGrid::new(args.grid)?;
    let external = match &reference {
        ReferenceKind::External(p) => Some(read_reference_curve(Path::new(p), &grid, args.bounds)?),
        _ => None,
    };
    if let ReferenceKind::Subject(id) = &reference {
        if !subjects.iter().any(|s| &s.id == id) {
            return Err(Error::NotFound(format!("reference subject `{id}`")));
        }
    }
    let seeds = args.seeds();
    let nuisance = args.nuisance();
    let folds = args.folds.unwrap_or(DEFAULT_FOLDS);
    let mut pointwise = None;
    let (estimate, kernel): (EffectEstimate, Option<CovKernel>) = match args.estimator {
        EstimatorKind::Or => {
            let fit = nuisance.outcome.fit(subjects)?;
            pointwise = Some(or_pointwise_interval(&fit, args.alpha)?);
            (estimate_or(subjects, &fit)?, None)
        }
        EstimatorKind::Ipw => (estimate_ipw(subjects, &nuisance.propensity.fit(subjects)?)?, None),
        EstimatorKind::Dr => {
            let fits = nuisance.fit(subjects)?;
            let est = estimate_dr(subjects, &fits.outcome, &fits.propensity)?;
            let v = influence_curves(subjects, &fits.outcome, &fits.propensity);
            let kernel = covariance_kernel(&v.curves(), &est.grid)?;
            (est, Some(kernel))
        }
        EstimatorKind::Cf => {
            let run = estimate_cf(subjects, folds, &nuisance, &reference, seeds.folds.unwrap())?;
            let kernel = covariance_kernel(&run.influence, &run.estimate.grid)?;
            (run.estimate, Some(kernel))
        }
        EstimatorKind::Cfmed => {
            let repeats = args.repeats.unwrap_or(DEFAULT_REPEATS);
            let med = estimate_cf_median(subjects, folds, repeats, &nuisance, &reference, seeds.folds.unwrap())?;
            let kernels: Vec<CovKernel> = med
                .runs
                .iter()
                .map(|r| covariance_kernel(&r.influence, &r.estimate.grid))
                .collect::<Result<_>>()?;
            let effects: Vec<Vec<f64>> = med.runs.iter().map(|r| r.estimate.effect.clone()).collect();
            let kernel = cf_median_covariance(&effects, &kernels, &med.estimate.effect)?;
            (med.estimate, Some(kernel))
        }
    };
    let estimate = estimate.with_reference(reference.clone());
    clock.lap("estimate");
    let (band, tests) = match &kernel {
        Some(k) => {
            let band = scb(&estimate, k, args.alpha, args.resamples, seeds.band)?;
            let norm = norm_test(&estimate, k, args.resamples, args.alpha, seeds.norm)?;
            let tests = TestDecisions { band_null: test_null_zero_band(&band), norm };
            (Some(band), Some(tests))
        }
        None => (None, None),
    };
    clock.lap("inference");
    let reference_curve = reference_curve(&reference, &estimate, subjects, external.as_ref())?;
    let doc = ResultDocument {
        schema_version: SCHEMA_VERSION,
        command: "estimate".into(),
        config: args.clone(),
        dataset: data.provenance.clone(),
        n_treated: subjects.iter().filter(|s| s.is_treated()).count(),
        w2_effect: effect_w2_norm(&estimate),
        estimate,
        reference_curve,
        band,
        pointwise,
        tests,
        counterfactual: None,
        seeds,
        timings: clock.finish(),
    };
    Ok((doc, data))
}

fn optional(v: Option<f64>) -> String {
    v.map(format_f64).unwrap_or_default()
}

/// `level, t, effect, lower, upper`; `t` is the reference quantile at the level.
fn flat_table(doc: &ResultDocument) -> String {
    let mut out = String::from("level,t,effect,lower,upper\n");
    let est = &doc.estimate;
    let (lower, upper) = match (&doc.band, &doc.pointwise) {
        (Some(b), _) => (Some(&b.lower), Some(&b.upper)),
        (None, Some(p)) => (Some(&p.lower), Some(&p.upper)),
        _ => (None, None),
    };
    for j in 0..est.grid.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            format_f64(est.grid.level(j)),
            format_f64(doc.reference_curve.values()[j]),
            format_f64(est.effect[j]),
            optional(lower.map(|l| l[j])),
            optional(upper.map(|u| u[j]))
        );
    }
    out
}

pub fn cmd_estimate(args: &EstimateArgs) -> Result<ResultDocument> {
    let (doc, _) = run_estimate(args)?;
    doc.write(&args.out)?;
    write_atomic(&flat_csv_path(&args.out), flat_table(&doc).as_bytes())?;
    Ok(doc)
}

/// Estimate, then carry one subject to the other arm. The plotting table
/// holds `level, observed, counterfactual`.
pub fn cmd_counterfactual(args: &CounterfactualArgs) -> Result<ResultDocument> {
    let (mut doc, data) = run_estimate(&args.estimate)?;
    let subject = data
        .subjects
        .iter()
        .find(|s| s.id == args.subject)
        .ok_or_else(|| Error::NotFound(format!("subject `{}`", args.subject)))?;
    let cf = counterfactual_subject(subject, &doc.estimate)?;
    let mut table = String::from("level,observed,counterfactual\n");
    for (j, u) in doc.estimate.grid.levels().iter().enumerate() {
        let _ = writeln!(
            table,
            "{},{},{}",
            format_f64(*u),
            format_f64(cf.observed.values()[j]),
            format_f64(cf.counterfactual.values()[j])
        );
    }
    doc.command = "counterfactual".into();
    doc.counterfactual = Some(cf);
    doc.write(&args.estimate.out)?;
    write_atomic(&flat_csv_path(&args.estimate.out), table.as_bytes())?;
    Ok(doc)
}

/// Runs a study config and writes `<stem>.json` and `<stem>.csv` into the
/// output directory.
pub fn cmd_simulate(args: &SimulateArgs) -> Result<crate::simlab::MCResult> {
    let path = args.config.display().to_string();
    let raw = std::fs::read_to_string(&args.config)
        .map_err(|e| Error::Config { path: path.clone(), message: e.to_string() })?;
    let config = SimConfig::from_toml_str(&raw)?;
    let result = run_mc(&config)?;
    std::fs::create_dir_all(&args.out)?;
    let stem = args.config.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or("simulation".into());
    write_atomic(&args.out.join(format!("{stem}.json")), to_json_string(&result)?.as_bytes())?;
    write_atomic(&args.out.join(format!("{stem}.csv")), result.to_csv().as_bytes())?;
    Ok(result)
}

pub fn cmd_fixture(args: &FixtureArgs) -> Result<()> {
    let cfg = FixtureConfig::new(args.n, args.seed)
        .with_shift(args.shift)
        .with_short_subjects(args.short_subjects);
    fixture_nhanes_like(cfg)?.write_csv(&args.out)
}

/// Dispatches a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Estimate(a) => cmd_estimate(a).map(|_| ()),
        Command::Counterfactual(a) => cmd_counterfactual(a).map(|_| ()),
        Command::Simulate(a) => cmd_simulate(a).map(|_| ()),
        Command::Fixture(a) => cmd_fixture(a),
    }
}
