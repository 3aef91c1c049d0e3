//! Writes the synthetic cohort as CSV, then estimates and moves one subject
//! through the same path the command-line tool takes.
//!
//! cargo run --release --example fixture_pipeline -- [n]

use clap::Parser;
use distcausal::io::{cmd_counterfactual, cmd_estimate, Cli, Command, CounterfactualArgs};
use distcausal::simlab::{fixture_nhanes_like, FixtureConfig};

fn main() -> distcausal::Result<()> {
    let n: usize = std::env::args().nth(1).map_or(500, |s| s.parse().expect("cohort size"));
    let dir = std::env::temp_dir().join(format!("distcausal-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let data = dir.join("cohort.csv");
    let fixture = fixture_nhanes_like(FixtureConfig::new(n, 1).with_short_subjects(10))?;
    fixture.write_csv(&data)?;

    let out = dir.join("estimate.json");
    let argv = [
        "distcausal", "estimate", "--data", data.to_str().unwrap(), "--covariates", "age,gender", "--bounds",
        "1,1000", "--min-obs", "100", "--reference", "bary0", "--out", out.to_str().unwrap(),
    ];
    let Command::Estimate(args) = Cli::parse_from(argv).command else { unreachable!() };
    let doc = cmd_estimate(&args)?;
    println!(
        "kept {} of {} subjects; median effect {:.2}; W2 {:.2}",
        doc.dataset.subjects_kept,
        doc.dataset.subjects_read,
        doc.estimate.effect_at(0.5),
        doc.w2_effect
    );
    if let Some(t) = &doc.tests {
        println!("band test {:?}, norm test {:?}", t.band_null, t.norm.decision);
    }

    let subject = fixture.subjects.iter().find(|s| s.treatment == 0 && s.values.len() >= 100).unwrap();
    let cf = cmd_counterfactual(&CounterfactualArgs {
        subject: subject.id.clone(),
        estimate: distcausal::io::EstimateArgs { out: dir.join("counterfactual.json"), ..args },
    })?;
    let c = cf.counterfactual.expect("counterfactual present");
    println!("subject {}: mean shift {:.2}", c.subject, c.mean_shift);
    println!("outputs in {}", dir.display());
    Ok(())
}
