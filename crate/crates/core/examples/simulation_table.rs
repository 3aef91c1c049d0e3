//! Runs a Monte Carlo study config and prints the table.
//!
//! cargo run --release --example simulation_table -- configs/smoke.cfg [replicates]

use distcausal::simlab::{run_mc, SimConfig};

fn main() -> distcausal::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "configs/smoke.cfg".into());
    let mut config = SimConfig::from_toml_str(&std::fs::read_to_string(&path)?)?;
    if let Some(r) = args.next() {
        config.replicates = r.parse().expect("replicate count");
    }
    let start = std::time::Instant::now();
    let result = run_mc(&config)?;
    println!("{:<6} {:>8} {:>8} {:>10} {:>8} {:>10} {:>8} {:>6} {:>8}", "est", "ps", "or", "bias", "se", "rmise", "se", "fail", "cover");
    for c in &result.cells {
        let show = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.3}", 100.0 * x));
        let label = |m: Option<distcausal::simlab::ModelSpec>| m.map_or("-".to_string(), |m| format!("{m:?}").to_lowercase());
        println!(
            "{:<6} {:>8} {:>8} {:>10} {:>8} {:>10} {:>8} {:>6} {:>8}",
            c.cell.estimator.to_string(),
            label(c.cell.ps),
            label(c.cell.or),
            show(c.bias.mean),
            show(c.bias.se),
            show(c.rmise.mean),
            show(c.rmise.se),
            c.failures,
            c.coverage.map_or("-".to_string(), |v| format!("{:.1}%", 100.0 * v))
        );
    }
    eprintln!("{} replicates in {:.1?}", config.replicates, start.elapsed());
    Ok(())
}
