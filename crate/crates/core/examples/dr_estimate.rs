//! Outcome regression, IPW and doubly robust estimates on simulated data.
//!
//! cargo run --release --example dr_estimate -- [n] [seed]

use distcausal::effects::{effect_w2_norm, estimate_dr, estimate_ipw, estimate_or};
use distcausal::nuisance::{FeatureSpec, NuisanceConfig};
use distcausal::ot::LevelGrid;
use distcausal::simlab::{dgp_sample, metric_bias_median, metric_rmise, observed, Scenario};

fn main() -> distcausal::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(500, |s| s.parse().expect("sample size"));
    let seed: u64 = args.next().map_or(1, |s| s.parse().expect("seed"));
    let grid = LevelGrid::new(201)?;
    let subjects = observed(&dgp_sample(n, 1001, Scenario::Linear, &grid, seed)?);

    for (label, ps, or) in [
        ("both correct", FeatureSpec::Identity, FeatureSpec::Identity),
        ("outcome wrong", FeatureSpec::Identity, FeatureSpec::Square),
        ("propensity wrong", FeatureSpec::Square, FeatureSpec::Identity),
    ] {
        let fits = NuisanceConfig::linear(or, ps).fit(&subjects)?;
        let estimates = [
            estimate_or(&subjects, &fits.outcome)?,
            estimate_ipw(&subjects, &fits.propensity)?,
            estimate_dr(&subjects, &fits.outcome, &fits.propensity)?,
        ];
        println!("{label}:");
        for e in &estimates {
            println!(
                "  {:<4} median effect {:.4}  bias x100 {:+.3}  rmise x100 {:.3}  W2 {:.4}",
                e.estimator.to_string(),
                e.effect_at(0.5),
                100.0 * metric_bias_median(e),
                100.0 * metric_rmise(e),
                effect_w2_norm(e)
            );
        }
    }
    Ok(())
}
