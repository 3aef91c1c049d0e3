//! Uncertainty quantification for effect curves: influence-function
//! covariance, simultaneous confidence bands by Gaussian-process resampling of
//! the sup-norm, the Wasserstein-norm null test, and covariance selection for
//! the median cross-fitting estimator.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::effects::{dr_terms, effect_w2_norm, lower_median_index, row_mean, EffectEstimate};
use crate::error::{Error, Result};
use crate::nuisance::{common_grid, OutcomeFit, OutcomeModel, PropensityModel, Subject};
use crate::ot::LevelGrid;
use crate::rng::stream;

/// Plug-in influence values `V_i` of the DR estimator, kept split by arm:
/// `V_i = t1_i - t0_i` with `t_a,i` the DR summand of arm `a`.
#[derive(Clone, Debug)]
pub struct InfluenceCurves {
    treated: Vec<Vec<f64>>,
    control: Vec<Vec<f64>>,
}

impl InfluenceCurves {
    pub fn len(&self) -> usize {
        self.treated.len()
    }

    pub fn is_empty(&self) -> bool {
        self.treated.is_empty()
    }

    /// `V_i` for every subject.
    pub fn curves(&self) -> Vec<Vec<f64>> {
        self.treated
            .iter()
            .zip(&self.control)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect()
    }

    /// Sample mean of `V_i`, evaluated arm by arm. This is literally the DR
    /// effect curve: `P_n t1 - P_n t0`.
    pub fn mean(&self) -> Vec<f64> {
        let m1 = row_mean(&self.treated);
        let m0 = row_mean(&self.control);
        m1.iter().zip(&m0).map(|(a, b)| a - b).collect()
    }
}

/// Influence values of the DR estimator at plug-in nuisances.
pub fn influence_curves(
    subjects: &[Subject],
    outcome: &dyn OutcomeModel,
    propensity: &dyn PropensityModel,
) -> InfluenceCurves {
    let refs: Vec<&Subject> = subjects.iter().collect();
    let terms = dr_terms(&refs, outcome, propensity);
    InfluenceCurves { treated: terms.treated, control: terms.control }
}

/// Discretized covariance function `C(u_i, u_j)` on the level grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CovKernel {
    grid: LevelGrid,
    matrix: DMatrix<f64>,
}

impl CovKernel {
    pub fn new(grid: LevelGrid, matrix: DMatrix<f64>) -> Result<Self> {
        let m = grid.len();
        if matrix.nrows() != m || matrix.ncols() != m {
            return Err(Error::GridMismatch(matrix.nrows(), m));
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        Ok(Self { grid, matrix: sym })
    }

    pub fn grid(&self) -> &LevelGrid {
        &self.grid
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { grid: self.grid.clone(), matrix: &self.matrix * factor }
    }

    fn check_finite(&self) -> Result<()> {
        if self.matrix.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Numerical("covariance kernel has non-finite entries".into()))
        }
    }

    /// Largest eigenvalue of the kernel as an integral operator under the
    /// flat `1/M` quadrature.
    pub fn operator_norm(&self) -> Result<f64> {
        self.check_finite()?;
        let eig = SymmetricEigen::new(&self.matrix * self.grid.weight());
        Ok(eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max))
    }

    /// Kernel rebuilt from its eigendecomposition with negative eigenvalues set to zero.
    pub fn clipped(&self) -> Result<DMatrix<f64>> {
        self.check_finite()?;
        let eig = SymmetricEigen::new(self.matrix.clone());
        let vals = eig.eigenvalues.map(|l| l.max(0.0));
        Ok(&eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose())
    }
}

/// Sample covariance of curves with divisor `n`.
pub fn covariance_kernel(curves: &[Vec<f64>], grid: &LevelGrid) -> Result<CovKernel> {
    let n = curves.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("covariance needs at least 2 curves, got {n}")));
    }
    let m = grid.len();
    if let Some(bad) = curves.iter().find(|c| c.len() != m) {
        return Err(Error::GridMismatch(bad.len(), m));
    }
    let mean = row_mean(curves);
    let centered = DMatrix::from_fn(n, m, |i, j| curves[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / n as f64;
    CovKernel::new(grid.clone(), cov)
}

/// Draws from the centred Gaussian process with a given kernel, via the
/// clipped symmetric eigendecomposition `G = sum_r sqrt(l_r) xi_r v_r`.
/// Draw `b` under seed `s` always uses the same normal stream.
pub struct GaussianSampler {
    /// `M x r` loadings `v_r sqrt(l_r)` for the positive eigenvalues.
    loadings: DMatrix<f64>,
    grid: LevelGrid,
}

impl GaussianSampler {
    pub fn new(kernel: &CovKernel) -> Result<Self> {
        kernel.check_finite()?;
        let m = kernel.grid.len();
        let eig = SymmetricEigen::new(kernel.matrix.clone());
        let keep: Vec<usize> = (0..m).filter(|&r| eig.eigenvalues[r] > 0.0).collect();
        let loadings = DMatrix::from_fn(m, keep.len(), |j, c| {
            let r = keep[c];
            eig.eigenvectors[(j, r)] * eig.eigenvalues[r].sqrt()
        });
        Ok(Self { loadings, grid: kernel.grid.clone() })
    }

    pub fn rank(&self) -> usize {
        self.loadings.ncols()
    }

    pub fn draw(&self, seed: u64, index: u64) -> Vec<f64> {
        let r = self.rank();
        if r == 0 {
            return vec![0.0; self.grid.len()];
        }
        let mut rng = stream(seed, index);
        let xi = DVector::from_fn(r, |_, _| StandardNormal.sample(&mut rng));
        (&self.loadings * xi).iter().copied().collect()
    }

    fn statistics(&self, b: usize, seed: u64, stat: impl Fn(&[f64]) -> f64 + Sync) -> Vec<f64> {
        (0..b as u64)
            .into_par_iter()
            .map(|i| stat(&self.draw(seed, i)))
            .collect()
    }

    /// `sup_j |G(u_j)|` for `b` draws.
    pub fn sup_norms(&self, b: usize, seed: u64) -> Vec<f64> {
        self.statistics(b, seed, |g| g.iter().fold(0.0f64, |m, v| m.max(v.abs())))
    }

    /// Flat-weight L2 norms for `b` draws.
    pub fn l2_norms(&self, b: usize, seed: u64) -> Vec<f64> {
        let grid = self.grid.clone();
        self.statistics(b, seed, move |g| grid.l2_norm(g))
    }
}

pub fn gp_supnorm_samples(kernel: &CovKernel, b: usize, seed: u64) -> Result<Vec<f64>> {
    if b == 0 {
        return Err(Error::InvalidArgument("need at least one resample".into()));
    }
    Ok(GaussianSampler::new(kernel)?.sup_norms(b, seed))
}

/// Empirical `p`-quantile: the `ceil(B p)`-th order statistic.
pub fn empirical_level_quantile(samples: &[f64], p: f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let rank = (s.len() as f64 * p - 1e-9).ceil().max(1.0) as usize;
    s[rank.min(s.len()) - 1]
}

/// Simultaneous confidence band `center +- critical / sqrt(n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Band {
    pub center: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub critical: f64,
    pub alpha: f64,
    pub n: usize,
    pub resamples: usize,
}

impl Band {
    pub fn from_critical(center: &[f64], critical: f64, alpha: f64, n: usize, resamples: usize) -> Self {
        let half = critical / (n as f64).sqrt();
        Self {
            center: center.to_vec(),
            lower: center.iter().map(|c| c - half).collect(),
            upper: center.iter().map(|c| c + half).collect(),
            critical,
            alpha,
            n,
            resamples,
        }
    }

    pub fn half_width(&self) -> f64 {
        self.critical / (self.n as f64).sqrt()
    }

    pub fn contains(&self, curve: &[f64]) -> bool {
        curve
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| l <= v && v <= u)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha {alpha} outside (0, 1]")))
    }
}

/// Which empirical quantile of the resampled sup-norms becomes the critical value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriticalRule {
    /// The `1 - alpha` quantile: the band covers the whole curve with
    /// asymptotic probability `1 - alpha`.
    #[default]
    Nominal,
    /// The `1 - alpha/2` quantile, a band of nominal level `1 - alpha/2`.
    HalfAlpha,
}

impl CriticalRule {
    pub fn level(self, alpha: f64) -> f64 {
        match self {
            CriticalRule::Nominal => 1.0 - alpha,
            CriticalRule::HalfAlpha => 1.0 - alpha / 2.0,
        }
    }
}

/// Simultaneous `1 - alpha` band from Gaussian sup-norm resampling.
pub fn scb(estimate: &EffectEstimate, kernel: &CovKernel, alpha: f64, b: usize, seed: u64) -> Result<Band> {
    scb_with_rule(estimate, kernel, alpha, b, seed, CriticalRule::Nominal)
}

pub fn scb_with_rule(
    estimate: &EffectEstimate,
    kernel: &CovKernel,
    alpha: f64,
    b: usize,
    seed: u64,
    rule: CriticalRule,
) -> Result<Band> {
    check_alpha(alpha)?;
    estimate.grid.check_same(kernel.grid())?;
    let sups = gp_supnorm_samples(kernel, b, seed)?;
    let critical = empirical_level_quantile(&sups, rule.level(alpha));
    Ok(Band::from_critical(&estimate.effect, critical, alpha, estimate.n, b))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Reject,
    FailToReject,
}

/// Rejects `effect = 0` when some node's interval excludes zero.
pub fn test_null_zero_band(band: &Band) -> Decision {
    if band.lower.iter().zip(&band.upper).any(|(l, u)| *l > 0.0 || *u < 0.0) {
        Decision::Reject
    } else {
        Decision::FailToReject
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormTest {
    /// `sqrt(n) * W2(mu1, mu0)`.
    pub statistic: f64,
    /// Empirical `1 - alpha` quantile of the resampled norms.
    pub critical: f64,
    /// Fraction of resampled norms at least as large as the statistic.
    pub p_value: f64,
    pub alpha: f64,
    pub decision: Decision,
}

/// Test of `W2(mu1, mu0) = 0` through the L2 norm of the effect map.
pub fn norm_test(estimate: &EffectEstimate, kernel: &CovKernel, b: usize, alpha: f64, seed: u64) -> Result<NormTest> {
    check_alpha(alpha)?;
    estimate.grid.check_same(kernel.grid())?;
    if b == 0 {
        return Err(Error::InvalidArgument("need at least one resample".into()));
    }
    let norms = GaussianSampler::new(kernel)?.l2_norms(b, seed);
    let statistic = (estimate.n as f64).sqrt() * effect_w2_norm(estimate);
    let critical = empirical_level_quantile(&norms, 1.0 - alpha);
    let p_value = norms.iter().filter(|&&g| g >= statistic).count() as f64 / b as f64;
    let decision = if statistic > critical { Decision::Reject } else { Decision::FailToReject };
    Ok(NormTest { statistic, critical, p_value, alpha, decision })
}

/// Covariance for the median cross-fitting estimator: each repetition's kernel
/// is inflated by the outer product of its deviation from the median curve, and
/// the inflated kernel with the (lower) median operator norm is returned.
pub fn cf_median_covariance(repetitions: &[Vec<f64>], kernels: &[CovKernel], median: &[f64]) -> Result<CovKernel> {
    if repetitions.is_empty() || repetitions.len() != kernels.len() {
        return Err(Error::InvalidArgument("one kernel per repetition required".into()));
    }
    let inflated: Vec<CovKernel> = repetitions
        .iter()
        .zip(kernels)
        .map(|(d, k)| {
            let dev = DVector::from_iterator(d.len(), d.iter().zip(median).map(|(a, b)| a - b));
            CovKernel::new(k.grid.clone(), &k.matrix + &dev * dev.transpose())
        })
        .collect::<Result<_>>()?;
    let norms: Vec<f64> = inflated.iter().map(|k| k.operator_norm()).collect::<Result<_>>()?;
    let pick = lower_median_index(&norms);
    Ok(inflated.into_iter().nth(pick).expect("index in range"))
}

/// Pointwise (per level, not simultaneous) t-interval for the treatment
/// coefficient of a joint outcome regression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointwiseInterval {
    pub center: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub alpha: f64,
    pub pointwise: bool,
}

pub fn or_pointwise_interval(fit: &OutcomeFit, alpha: f64) -> Result<PointwiseInterval> {
    check_alpha(alpha)?;
    let center = fit
        .coefficient_curve(1)
        .ok_or_else(|| Error::InvalidArgument("pointwise interval needs a joint outcome model".into()))?;
    let se = fit.coefficient_se(1).expect("joint model");
    let df = fit.residual_df().expect("joint model");
    let t = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::Numerical(e.to_string()))?
        .inverse_cdf(1.0 - alpha / 2.0);
    Ok(PointwiseInterval {
        lower: center.iter().zip(&se).map(|(c, s)| c - t * s).collect(),
        upper: center.iter().zip(&se).map(|(c, s)| c + t * s).collect(),
        center,
        alpha,
        pointwise: true,
    })
}

/// DR influence curves and their kernel in one pass.
pub fn dr_kernel(
    subjects: &[Subject],
    outcome: &dyn OutcomeModel,
    propensity: &dyn PropensityModel,
) -> Result<CovKernel> {
    let grid = common_grid(subjects)?;
    covariance_kernel(&influence_curves(subjects, outcome, propensity).curves(), &grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effects::EstimatorKind;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn grid(m: usize) -> LevelGrid {
        LevelGrid::new(m).unwrap()
    }

    #[test]
    fn identical_curves_have_zero_covariance() {
        let g = grid(7);
        let c = vec![vec![0.3; 7]; 5];
        let k = covariance_kernel(&c, &g).unwrap();
        assert!(k.matrix().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn antipodal_pair_gives_outer_product() {
        let g = grid(6);
        let v: Vec<f64> = (0..6).map(|j| j as f64 * 0.5 - 1.0).collect();
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let k = covariance_kernel(&[v.clone(), neg], &g).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert!((k.matrix()[(i, j)] - v[i] * v[j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn covariance_matches_double_loop() {
        let g = grid(9);
        let mut rng = rng_from_seed(3);
        let curves: Vec<Vec<f64>> = (0..15).map(|_| (0..9).map(|_| rng.random::<f64>()).collect()).collect();
        let k = covariance_kernel(&curves, &g).unwrap();
        let n = curves.len() as f64;
        for s in 0..9 {
            for t in 0..9 {
                let ms = curves.iter().map(|c| c[s]).sum::<f64>() / n;
                let mt = curves.iter().map(|c| c[t]).sum::<f64>() / n;
                let naive = curves.iter().map(|c| (c[s] - ms) * (c[t] - mt)).sum::<f64>() / n;
                assert!((k.matrix()[(s, t)] - naive).abs() < 1e-12);
            }
        }
        assert!(covariance_kernel(&curves[..1], &g).is_err());
    }

    #[test]
    fn zero_kernel_collapses_band() {
        let g = grid(11);
        let k = CovKernel::new(g.clone(), DMatrix::zeros(11, 11)).unwrap();
        assert!(gp_supnorm_samples(&k, 20, 1).unwrap().iter().all(|&s| s == 0.0));
        let est = EffectEstimate::from_barycentres(g, EstimatorKind::Dr, 50, vec![0.6; 11], vec![0.5; 11], (0.0, 1.0)).unwrap();
        let band = scb(&est, &k, 0.05, 50, 2).unwrap();
        assert_eq!(band.lower, band.center);
        assert_eq!(band.upper, band.center);
        assert_eq!(test_null_zero_band(&band), Decision::Reject);
    }

    #[test]
    fn non_finite_kernel_is_rejected() {
        let g = grid(3);
        let mut m = DMatrix::identity(3, 3);
        m[(1, 1)] = f64::NAN;
        let k = CovKernel::new(g, m).unwrap();
        assert!(matches!(gp_supnorm_samples(&k, 3, 0), Err(Error::Numerical(_))));
    }

    #[test]
    fn null_band_decisions() {
        let above = Band { center: vec![1.0; 3], lower: vec![0.5; 3], upper: vec![1.5; 3], critical: 1.0, alpha: 0.05, n: 4, resamples: 1 };
        assert_eq!(test_null_zero_band(&above), Decision::Reject);
        let around = Band { center: vec![0.0; 3], lower: vec![-0.5; 3], upper: vec![0.5; 3], ..above };
        assert_eq!(test_null_zero_band(&around), Decision::FailToReject);
    }

    #[test]
    fn resampling_is_deterministic_and_alpha_monotone() {
        let g = grid(21);
        let m = DMatrix::from_fn(21, 21, |i, j| (-((i as f64 - j as f64) / 5.0).powi(2)).exp());
        let k = CovKernel::new(g.clone(), m).unwrap();
        assert_eq!(gp_supnorm_samples(&k, 100, 9).unwrap(), gp_supnorm_samples(&k, 100, 9).unwrap());
        let est = EffectEstimate::from_barycentres(g, EstimatorKind::Dr, 50, vec![0.6; 21], vec![0.5; 21], (0.0, 1.0)).unwrap();
        let mut last = f64::INFINITY;
        for alpha in [0.01, 0.05, 0.1, 0.3, 0.7, 1.0] {
            let b = scb(&est, &k, alpha, 300, 4).unwrap();
            assert!(b.critical <= last);
            last = b.critical;
            let half = scb_with_rule(&est, &k, alpha, 300, 4, CriticalRule::HalfAlpha).unwrap();
            assert!(half.critical >= b.critical);
            for j in 0..21 {
                assert_eq!(b.lower[j], b.center[j] - b.half_width());
                assert_eq!(b.upper[j], b.center[j] + b.half_width());
            }
        }
    }

    #[test]
    fn eigen_clipping_error_bounded_by_negative_mass() {
        let g = grid(4);
        let m = DMatrix::from_row_slice(4, 4, &[2.0, 1.9, 0.0, 0.0, 1.9, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.2, 0.0, 0.0, 0.2, -0.1]);
        let k = CovKernel::new(g, m.clone()).unwrap();
        let most_negative = SymmetricEigen::new(m.clone()).eigenvalues.iter().cloned().fold(0.0f64, f64::min);
        assert!(most_negative < 0.0);
        let diff = k.clipped().unwrap() - m;
        let op = SymmetricEigen::new(diff).eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(op <= most_negative.abs() + 1e-12);
    }

    #[test]
    fn median_covariance_selection() {
        let g = grid(3);
        let mk = |s: f64| CovKernel::new(g.clone(), DMatrix::identity(3, 3) * s * 3.0).unwrap();
        // operator norms under 1/M weighting: 1, 5, 100
        let kernels = vec![mk(100.0), mk(1.0), mk(5.0)];
        let reps = vec![vec![0.0; 3]; 3];
        let chosen = cf_median_covariance(&reps, &kernels, &[0.0; 3]).unwrap();
        assert!((chosen.operator_norm().unwrap() - 5.0).abs() < 1e-12);
        let single = cf_median_covariance(&reps[..1], &kernels[..1], &[0.0; 3]).unwrap();
        assert_eq!(single, kernels[0]);
    }
}
