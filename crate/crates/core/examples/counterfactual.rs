//! Individual counterfactual distribution and the population transport map.
//!
//! cargo run --release --example counterfactual

use distcausal::effects::{counterfactual_subject, estimate_dr, population_transport_map};
use distcausal::nuisance::{FeatureSpec, NuisanceConfig};
use distcausal::ot::LevelGrid;
use distcausal::simlab::{dgp_sample, observed, Scenario};

fn main() -> distcausal::Result<()> {
    let grid = LevelGrid::new(201)?;
    let subjects = observed(&dgp_sample(1000, 1001, Scenario::Linear, &grid, 13)?);
    let fits = NuisanceConfig::linear(FeatureSpec::Identity, FeatureSpec::Identity).fit(&subjects)?;
    let est = estimate_dr(&subjects, &fits.outcome, &fits.propensity)?;

    let control = subjects.iter().find(|s| !s.is_treated()).expect("a control subject");
    let cf = counterfactual_subject(control, &est)?;
    println!("subject {} (control): mean shift under treatment {:+.4}, clamped {}", cf.subject, cf.mean_shift, cf.clamped);
    for j in (0..grid.len()).step_by(40) {
        println!(
            "  u={:.3}  observed {:.4}  counterfactual {:.4}",
            grid.level(j),
            cf.observed.values()[j],
            cf.counterfactual.values()[j]
        );
    }
    let points: Vec<f64> = [0.25, 0.5, 0.75].iter().map(|&u| est.mu0.quantile_at(u)).collect();
    for (s, t) in population_transport_map(&est, &points)? {
        println!("T({s:.4}) = {t:.4}");
    }
    Ok(())
}
