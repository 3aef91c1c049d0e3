use super::curve::{cdf_eval, Distribution1d, QuantileCurve};
use crate::error::{Error, Result};

/// 2-Wasserstein distance: the flat-weight L2 distance between quantile curves.
pub fn w2_distance(a: &QuantileCurve, b: &QuantileCurve) -> Result<f64> {
    a.grid().check_same(b.grid())?;
    let sq: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok((sq * a.grid().weight()).sqrt())
}

/// Weighted Wasserstein barycentre. In one dimension its quantile function is
/// the weighted mean of the input quantile functions.
pub fn barycentre(curves: &[QuantileCurve], weights: &[f64]) -> Result<QuantileCurve> {
    let first = curves
        .first()
        .ok_or_else(|| Error::InsufficientData("barycentre of an empty set".into()))?;
    if curves.len() != weights.len() {
        return Err(Error::InvalidArgument("one weight per curve required".into()));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::InvalidArgument("negative barycentre weight".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
    }
    let (mut lo, mut hi) = first.bounds();
    for c in curves {
        first.grid().check_same(c.grid())?;
        lo = lo.min(c.bounds().0);
        hi = hi.max(c.bounds().1);
    }
    let mut values = vec![0.0; first.grid().len()];
    for (c, &w) in curves.iter().zip(weights) {
        for (acc, v) in values.iter_mut().zip(c.values()) {
            *acc += w * v;
        }
    }
    // A convex combination of in-domain values may drift out by an ulp.
    for v in &mut values {
        *v = v.clamp(lo, hi);
    }
    QuantileCurve::new(first.grid().clone(), values, (lo, hi))
}

/// Equal-weight barycentre.
pub fn mean_curve(curves: &[QuantileCurve]) -> Result<QuantileCurve> {
    if curves.is_empty() {
        return Err(Error::InsufficientData("barycentre of an empty set".into()));
    }
    let w = vec![1.0 / curves.len() as f64; curves.len()];
    barycentre(curves, &w)
}

/// Monotone optimal transport map `T(s) = dst^{-1}(src(s))`.
pub fn transport_map<S, D>(src: &S, dst: &D, eval_points: &[f64]) -> Result<Vec<f64>>
where
    S: Distribution1d + ?Sized,
    D: Distribution1d + ?Sized,
{
    let (lo, hi) = src.support();
    eval_points
        .iter()
        .map(|&s| {
            if !(lo..=hi).contains(&s) {
                return Err(Error::DomainViolation { value: s, lo, hi });
            }
            Ok(dst.quantile(src.cdf(s)))
        })
        .collect()
}

/// Re-expresses a level-coordinate curve `g` referenced to `src` in the level
/// coordinates of `dst`: the output at `u_j` is `g` at level `src(dst^{-1}(u_j))`.
pub fn pushforward_compose(g: &[f64], src: &QuantileCurve, dst: &QuantileCurve) -> Result<Vec<f64>> {
    src.grid().check_same(dst.grid())?;
    if g.len() != src.grid().len() {
        return Err(Error::GridMismatch(g.len(), src.grid().len()));
    }
    let grid = src.grid();
    Ok(dst
        .values()
        .iter()
        .map(|&t| grid.interpolate(g, cdf_eval(src, t)))
        .collect())
}
