//! Quantile curves, W2 distance, barycentres and transport maps.
//!
//! cargo run --example ot_primitives

use distcausal::ot::{barycentre, empirical_quantile, transport_map, w2_distance, LevelGrid, QuantileCurve};

fn main() -> distcausal::Result<()> {
    let grid = LevelGrid::new(101)?;
    let a = empirical_quantile(&[0.1, 0.2, 0.2, 0.4, 0.9], &grid, (0.0, 1.0))?;
    let b = QuantileCurve::uniform(grid.clone(), (0.0, 1.0))?;
    let c = QuantileCurve::dirac(grid.clone(), 0.5, (0.0, 1.0))?;

    println!("W2(a, uniform) = {:.6}", w2_distance(&a, &b)?);
    println!("W2(uniform, dirac 0.5) = {:.6} (continuum 1/sqrt(12) = 0.288675)", w2_distance(&b, &c)?);

    let bary = barycentre(&[a.clone(), b.clone(), c], &[0.5, 0.25, 0.25])?;
    println!("barycentre median = {:.4}, mean = {:.4}", bary.quantile_at(0.5), bary.mean());

    let points = [0.1, 0.5, 0.9];
    let t = transport_map(&b, &bary, &points)?;
    for (s, ts) in points.iter().zip(&t) {
        println!("T({s}) = {ts:.4}");
    }
    Ok(())
}
