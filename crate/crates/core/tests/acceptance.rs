//! End-to-end acceptance checks. Runs every criterion at its stated tolerance
//! and prints one PASS/FAIL line each; exits nonzero if any fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use distcausal::effects::{effect_w2_norm, estimate_dr, estimate_or, transport_between_references, EstimatorKind};
use distcausal::inference::{dr_kernel, influence_curves, norm_test, Decision};
use distcausal::io::{cmd_counterfactual, cmd_estimate, Cli, Command, ResultDocument};
use distcausal::nuisance::{FeatureSpec, NuisanceConfig};
use distcausal::ot::{mean_curve, w2_distance, LevelGrid, QuantileCurve};
use distcausal::simlab::{
    coverage_experiment, fixture_nhanes_like, observed, run_mc, FixtureConfig, MCResult, ModelSpec,
    Scenario, SimConfig,
};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn config(toml: &str) -> SimConfig {
    SimConfig::from_toml_str(toml).expect("valid acceptance config")
}

fn metric(result: &MCResult, est: EstimatorKind, ps: Option<ModelSpec>, or: Option<ModelSpec>) -> (f64, f64, usize) {
    let c = result.cell(est, ps, or).expect("cell present");
    (100.0 * c.bias.mean.unwrap_or(f64::NAN), 100.0 * c.rmise.mean.unwrap_or(f64::NAN), c.failures)
}

const TABLE_CELLS: &str = r#"
n = 200
replicates = 500
base_seed = 20240601
[[cells]]
estimator = "or"
or = "correct"
[[cells]]
estimator = "or"
or = "square"
[[cells]]
estimator = "ipw"
ps = "correct"
[[cells]]
estimator = "ipw"
ps = "square"
[[cells]]
estimator = "dr"
ps = "correct"
or = "correct"
[[cells]]
estimator = "dr"
ps = "correct"
or = "square"
[[cells]]
estimator = "dr"
ps = "square"
or = "correct"
[[cells]]
estimator = "dr"
ps = "square"
or = "square"
"#;

fn double_robustness(table: &MCResult) -> Outcome {
    use ModelSpec::{Correct as C, Square as S};
    let dr = |ps, or| metric(table, EstimatorKind::Dr, Some(ps), Some(or)).0;
    let robust = [dr(C, C), dr(C, S), dr(S, C)];
    let both_wrong = dr(S, S);
    let or_wrong = metric(table, EstimatorKind::Or, None, Some(S)).0;
    let ipw_wrong = metric(table, EstimatorKind::Ipw, Some(S), None).0;
    let failures: usize = table.cells.iter().map(|c| c.failures).sum();
    let ok = robust.iter().all(|b| b.abs() <= 0.15)
        && (3.2..=4.2).contains(&both_wrong)
        && (3.3..=4.3).contains(&or_wrong)
        && (3.2..=4.2).contains(&ipw_wrong)
        && failures * 100 < table.config.replicates * table.cells.len();
    check(
        ok,
        format!(
            "DR bias x100 {:.3}/{:.3}/{:.3}, both wrong {both_wrong:.3}, OR wrong {or_wrong:.3}, IPW wrong {ipw_wrong:.3}, failures {failures}",
            robust[0], robust[1], robust[2]
        ),
    )
}

fn efficiency_ordering(table: &MCResult) -> Outcome {
    let c = Some(ModelSpec::Correct);
    let or = metric(table, EstimatorKind::Or, None, c).1;
    let ipw = metric(table, EstimatorKind::Ipw, c, None).1;
    let dr = metric(table, EstimatorKind::Dr, c, c).1;
    let near = |v: f64, reported: f64| (v / reported - 1.0).abs() <= 0.30;
    let ok = or <= dr && dr <= ipw && near(or, 0.339) && near(dr, 0.348) && near(ipw, 0.981);
    check(ok, format!("RMISE x100 OR {or:.3} <= DR {dr:.3} <= IPW {ipw:.3}"))
}

fn cf_parity() -> Outcome {
    let cfg = config(
        r#"
        n = 200
        replicates = 500
        base_seed = 5
        folds = 5
        repeats = 20
        [[cells]]
        estimator = "cfmed"
        ps = "correct"
        or = "correct"
        "#,
    );
    let result = run_mc(&cfg).map_err(|e| e.to_string())?;
    let c = Some(ModelSpec::Correct);
    let (bias, _, failures) = metric(&result, EstimatorKind::Cfmed, c, c);
    check(bias.abs() <= 0.15 && failures == 0, format!("median CF bias x100 {bias:.3}, failures {failures}"))
}

fn band_coverage() -> Outcome {
    let cfg = config(
        r#"
        n = 200
        replicates = 300
        base_seed = 6
        [[cells]]
        estimator = "dr"
        ps = "correct"
        or = "correct"
        "#,
    );
    let rates = coverage_experiment(&cfg, 0.05, 500).map_err(|e| e.to_string())?;
    let pct = 100.0 * rates[0].coverage;
    check((87.0..=95.0).contains(&pct), format!("DR 95% band coverage {pct:.1}% over {} replicates", rates[0].replicates))
}

fn adaptive_consistency() -> Outcome {
    let rmise = |n: usize| -> Result<f64, String> {
        let cfg = config(&format!(
            r#"
            n = {n}
            replicates = 100
            scenario = "sine"
            base_seed = 99
            [[cells]]
            estimator = "dr"
            ps = "adaptive"
            or = "adaptive"
            "#
        ));
        let result = run_mc(&cfg).map_err(|e| e.to_string())?;
        let a = Some(ModelSpec::Adaptive);
        Ok(metric(&result, EstimatorKind::Dr, a, a).1)
    };
    let (small, large) = (rmise(200)?, rmise(1000)?);
    check(large < 0.5 * small, format!("adaptive DR RMISE x100 n=200 {small:.3}, n=1000 {large:.3}"))
}

fn property_suites() -> Outcome {
    let mut notes = Vec::new();
    // W2 against the min-cost-flow oracle
    let corpus = common::corpus();
    let curves: Vec<_> = corpus.iter().map(|m| m.curve()).collect();
    let mut worst = 0.0f64;
    for (i, a) in corpus.iter().enumerate() {
        for (j, b) in corpus.iter().enumerate() {
            let oracle = common::w2_squared_by_flow(a, b).sqrt();
            let ours = w2_distance(&curves[i], &curves[j]).map_err(|e| e.to_string())?;
            if oracle > 0.0 {
                worst = worst.max((ours - oracle).abs() / oracle);
            } else if ours != 0.0 {
                worst = f64::INFINITY;
            }
        }
    }
    if worst > 1e-9 {
        return Err(format!("W2 relative error {worst:e}"));
    }
    notes.push(format!("W2 rel err {worst:.1e}"));

    // barycentre and Dirac degeneracy
    let bary = mean_curve(&curves).map_err(|e| e.to_string())?;
    let w = 1.0 / curves.len() as f64;
    for j in 0..common::UNITS {
        let mut acc = 0.0;
        for c in &curves {
            acc += w * c.values()[j];
        }
        if bary.values()[j] != acc {
            return Err(format!("barycentre differs from pointwise mean at node {j}"));
        }
    }
    let g = common::grid();
    let diracs: Vec<_> = [0.2, 0.6].iter().map(|&a| QuantileCurve::dirac(g.clone(), a, (0.0, 1.0)).unwrap()).collect();
    if mean_curve(&diracs).unwrap().values().iter().any(|&v| v != 0.4) {
        return Err("Dirac barycentre is not a Dirac".into());
    }

    // effect norm vs W2 between barycentres, and the influence-mean identity
    let sim = common::sample(200, Scenario::Linear, 314);
    let subjects = observed(&sim);
    let fits = NuisanceConfig::linear(FeatureSpec::Identity, FeatureSpec::Identity)
        .fit(&subjects)
        .map_err(|e| e.to_string())?;
    let or = estimate_or(&subjects, &fits.outcome).map_err(|e| e.to_string())?;
    let mu1 = QuantileCurve::new(g.clone(), or.mu1_raw.clone(), (f64::MIN, f64::MAX)).map_err(|e| e.to_string())?;
    let mu0 = QuantileCurve::new(g.clone(), or.mu0_raw.clone(), (f64::MIN, f64::MAX)).map_err(|e| e.to_string())?;
    if effect_w2_norm(&or).to_bits() != w2_distance(&mu1, &mu0).unwrap().to_bits() {
        return Err("effect norm differs from W2 between barycentres".into());
    }
    let dr = estimate_dr(&subjects, &fits.outcome, &fits.propensity).map_err(|e| e.to_string())?;
    if influence_curves(&subjects, &fits.outcome, &fits.propensity).mean() != dr.effect {
        return Err("influence mean differs from the DR effect".into());
    }

    // average of individual effects
    let p1: Vec<_> = sim.iter().map(|s| s.potential[1].clone()).collect();
    let p0: Vec<_> = sim.iter().map(|s| s.potential[0].clone()).collect();
    let (b1, b0) = (mean_curve(&p1).unwrap(), mean_curve(&p0).unwrap());
    let n = sim.len() as f64;
    let mut gap = 0.0f64;
    for j in 0..g.len() {
        let individual: f64 = sim.iter().map(|s| s.potential[1].values()[j] - s.potential[0].values()[j]).sum::<f64>() / n;
        gap = gap.max((individual - (b1.values()[j] - b0.values()[j])).abs());
    }
    if gap > 4.0 * n * f64::EPSILON {
        return Err(format!("individual-effect average off by {gap:e}"));
    }
    notes.push(format!("individual-effect gap {gap:.1e}"));

    // transport between matching references
    let reference = QuantileCurve::new(g.clone(), g.levels().iter().map(|u| u * u + 0.2 * u).collect(), (0.0, 2.0)).unwrap();
    let curve: Vec<f64> = g.levels().iter().map(|u| (2.0 * u).cos()).collect();
    let moved = transport_between_references(&curve, &reference, &reference).map_err(|e| e.to_string())?;
    let tau = moved.iter().zip(&curve).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if tau > 1e-12 {
        return Err(format!("reference transport off by {tau:e}"));
    }

    // determinism
    let again = observed(&common::sample(200, Scenario::Linear, 314));
    let fits2 = NuisanceConfig::linear(FeatureSpec::Identity, FeatureSpec::Identity).fit(&again).unwrap();
    let dr2 = estimate_dr(&again, &fits2.outcome, &fits2.propensity).unwrap();
    if serde_json::to_string(&dr).unwrap() != serde_json::to_string(&dr2).unwrap() {
        return Err("seeded DR pipeline is not reproducible".into());
    }
    Ok(notes.join(", "))
}

fn estimate_cli(argv: &[&str]) -> distcausal::io::EstimateArgs {
    match Cli::try_parse_from(argv).expect("valid flags").command {
        Command::Estimate(a) => a,
        _ => unreachable!(),
    }
}

fn cli_pipeline() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = dir.path().join("cohort.csv");
    let fixture = fixture_nhanes_like(FixtureConfig::new(2000, 2026)).map_err(|e| e.to_string())?;
    fixture.write_csv(&data).map_err(|e| e.to_string())?;
    let out = dir.path().join("estimate.json");
    let (d, o) = (data.to_str().unwrap(), out.to_str().unwrap());
    let base = [
        "distcausal", "estimate", "--data", d, "--covariates", "age,gender", "--bounds", "1,1000", "--min-obs", "100",
        "--seed", "1", "--out", o,
    ];
    let args = estimate_cli(&base);
    cmd_estimate(&args).map_err(|e| e.to_string())?;
    let doc = ResultDocument::read(&out).map_err(|e| format!("estimate document: {e}"))?;
    let median = doc.estimate.effect_at(0.5);

    let control = fixture.subjects.iter().find(|s| s.treatment == 0).expect("a control subject");
    let cf_out = dir.path().join("counterfactual.json");
    let cf_args = distcausal::io::CounterfactualArgs {
        subject: control.id.clone(),
        estimate: distcausal::io::EstimateArgs { out: cf_out.clone(), ..args },
    };
    cmd_counterfactual(&cf_args).map_err(|e| e.to_string())?;
    let cf_doc = ResultDocument::read(&cf_out).map_err(|e| format!("counterfactual document: {e}"))?;
    let shift = cf_doc.counterfactual.as_ref().map_or(f64::NAN, |c| c.mean_shift);

    // size of the norm test on null cohorts
    let runs = 200;
    let alpha = 0.05;
    let grid = LevelGrid::new(201).unwrap();
    let config = NuisanceConfig::linear(FeatureSpec::Identity, FeatureSpec::Identity);
    let mut rejections = 0;
    for r in 0..runs {
        let null = fixture_nhanes_like(FixtureConfig::new(500, 7000 + r).with_shift(0.0)).map_err(|e| e.to_string())?;
        let subjects = null.to_subjects(&grid, 100).map_err(|e| e.to_string())?;
        let fits = config.fit(&subjects).map_err(|e| e.to_string())?;
        let est = estimate_dr(&subjects, &fits.outcome, &fits.propensity).map_err(|e| e.to_string())?;
        let k = dr_kernel(&subjects, &fits.outcome, &fits.propensity).map_err(|e| e.to_string())?;
        if norm_test(&est, &k, 500, alpha, r).map_err(|e| e.to_string())?.decision == Decision::Reject {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / runs as f64;
    let ok = (10.0..=30.0).contains(&median) && (10.0..=30.0).contains(&shift) && (rate - alpha).abs() <= 0.03;
    check(ok, format!("median effect {median:.2}, control mean shift {shift:.2}, null rejection rate {rate:.3}"))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let table = run_mc(&config(TABLE_CELLS));
    let mut criteria: Vec<(&str, Box<dyn FnOnce() -> Outcome>)> = Vec::new();
    match &table {
        Ok(t) => {
            criteria.push(("double robustness", Box::new(|| double_robustness(t))));
            criteria.push(("efficiency ordering", Box::new(|| efficiency_ordering(t))));
        }
        Err(e) => {
            let msg = e.to_string();
            let msg2 = msg.clone();
            criteria.push(("double robustness", Box::new(move || Err(msg))));
            criteria.push(("efficiency ordering", Box::new(move || Err(msg2))));
        }
    }
    criteria.push(("cross-fitting parity", Box::new(cf_parity)));
    criteria.push(("band coverage", Box::new(band_coverage)));
    criteria.push(("adaptive consistency", Box::new(adaptive_consistency)));
    criteria.push(("property suites", Box::new(property_suites)));
    criteria.push(("cli pipeline", Box::new(cli_pipeline)));

    let mut failed = 0;
    for (i, (name, f)) in criteria.into_iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name}: {detail} ({secs:.1}s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {}: {name}: {detail} ({secs:.1}s)", i + 1);
            }
        }
    }
    println!("acceptance: {} failed, total {:.1}s", failed, start.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
