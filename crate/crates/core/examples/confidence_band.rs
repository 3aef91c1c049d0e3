//! Simultaneous band, zero-effect test and W2-norm test for a DR estimate.
//!
//! cargo run --release --example confidence_band -- [n]

use distcausal::effects::estimate_dr;
use distcausal::inference::{dr_kernel, norm_test, scb, test_null_zero_band};
use distcausal::nuisance::{FeatureSpec, NuisanceConfig};
use distcausal::ot::LevelGrid;
use distcausal::simlab::{dgp_sample, observed, true_effect, Scenario};

fn main() -> distcausal::Result<()> {
    let n: usize = std::env::args().nth(1).map_or(200, |s| s.parse().expect("sample size"));
    let grid = LevelGrid::new(201)?;
    let subjects = observed(&dgp_sample(n, 1001, Scenario::Linear, &grid, 8)?);
    let fits = NuisanceConfig::linear(FeatureSpec::Identity, FeatureSpec::Identity).fit(&subjects)?;
    let est = estimate_dr(&subjects, &fits.outcome, &fits.propensity)?;
    let kernel = dr_kernel(&subjects, &fits.outcome, &fits.propensity)?;

    let band = scb(&est, &kernel, 0.05, 1000, 1)?;
    println!("critical {:.4}, half width {:.4}", band.critical, band.half_width());
    println!("covers true effect: {}", band.contains(&true_effect(&grid)));
    println!("zero-effect band test: {:?}", test_null_zero_band(&band));
    let t = norm_test(&est, &kernel, 1000, 0.05, 2)?;
    println!("norm test: statistic {:.3}, critical {:.3}, p {:.3}, {:?}", t.statistic, t.critical, t.p_value, t.decision);
    for j in (0..grid.len()).step_by(25) {
        println!("  u={:.3}  [{:+.4}, {:+.4}]", grid.level(j), band.lower[j], band.upper[j]);
    }
    Ok(())
}
