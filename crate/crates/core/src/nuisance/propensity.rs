use nalgebra::{DMatrix, DVector};

use super::features::FeatureMap;
use super::linalg::factor_gram;
use super::subject::Subject;
use crate::error::{Error, Result};

pub const DEFAULT_CLIP: f64 = 0.01;
const MAX_ITER: usize = 100;
const GRAD_TOL: f64 = 1e-8;
const DIVERGENCE_NORM: f64 = 1e6;

pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Logistic propensity model `P(A = 1 | X) = expit(b0 + phi(X)' b)`.
#[derive(Clone, Debug)]
pub struct PropensityFit {
    features: FeatureMap,
    coef: Vec<f64>,
    clip: f64,
    iterations: usize,
    gradient_max: f64,
}

impl PropensityFit {
    /// Builds a fit from known coefficients (intercept first).
    pub fn from_coefficients(features: FeatureMap, coef: Vec<f64>, clip: f64) -> Result<Self> {
        check_clip(clip)?;
        Ok(Self { features, coef, clip, iterations: 0, gradient_max: f64::NAN })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coef
    }

    pub fn clip(&self) -> f64 {
        self.clip
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Max-norm of the mean log-likelihood gradient at the returned coefficients.
    pub fn gradient_max(&self) -> f64 {
        self.gradient_max
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }

    fn linear_predictor(&self, x: &[f64]) -> f64 {
        let f = self.features.apply(x);
        self.coef[0] + f.iter().zip(&self.coef[1..]).map(|(a, b)| a * b).sum::<f64>()
    }

    /// `P(A = 1 | x)` clipped to `[clip, 1 - clip]`.
    pub fn predict(&self, x: &[f64]) -> f64 {
        expit(self.linear_predictor(x)).clamp(self.clip, 1.0 - self.clip)
    }

    /// `f(a | x)` for the observed arm.
    pub fn arm_probability(&self, a: u8, x: &[f64]) -> f64 {
        let p = self.predict(x);
        if a == 1 {
            p
        } else {
            1.0 - p
        }
    }
}

fn check_clip(clip: f64) -> Result<()> {
    if (0.0..0.5).contains(&clip) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("clip epsilon {clip} outside [0, 0.5)")))
    }
}

/// Maximum-likelihood logistic fit by damped Newton iterations.
pub fn fit_propensity(subjects: &[Subject], features: &FeatureMap, clip: f64) -> Result<PropensityFit> {
    fit_propensity_penalized(subjects, features, clip, 0.0)
}

/// As [`fit_propensity`] with a ridge penalty `ridge/2 * |b|^2` on the
/// non-intercept coefficients.
pub fn fit_propensity_penalized(
    subjects: &[Subject],
    features: &FeatureMap,
    clip: f64,
    ridge: f64,
) -> Result<PropensityFit> {
    check_clip(clip)?;
    let n = subjects.len();
    let treated = subjects.iter().filter(|s| s.is_treated()).count();
    if treated == 0 || treated == n {
        return Err(Error::Separation("one treatment arm is empty".into()));
    }
    let d = subjects[0].covariates.len();
    let p = 1 + features.dim(d);
    let mut x = DMatrix::<f64>::zeros(n, p);
    let mut row = Vec::with_capacity(p);
    for (i, s) in subjects.iter().enumerate() {
        row.clear();
        row.push(1.0);
        features.apply_into(&s.covariates, &mut row);
        for (j, v) in row.iter().enumerate() {
            x[(i, j)] = *v;
        }
    }
    let y = DVector::from_iterator(n, subjects.iter().map(|s| s.treatment() as f64));
    // rank check on the raw design
    factor_gram(x.transpose() * &x + penalty(p, ridge), "propensity design")?;

    let objective = |beta: &DVector<f64>| -> f64 {
        let eta = &x * beta;
        let ll: f64 = eta
            .iter()
            .zip(y.iter())
            .map(|(&e, &yi)| yi * e - softplus(e))
            .sum();
        ll - 0.5 * ridge * beta.rows(1, p - 1).norm_squared()
    };

    let mut beta = DVector::<f64>::zeros(p);
    let mut current = objective(&beta);
    let mut iterations = 0;
    let mut grad_max;
    loop {
        let eta = &x * &beta;
        let mu = eta.map(expit);
        let mut grad = x.transpose() * (&y - &mu);
        for j in 1..p {
            grad[j] -= ridge * beta[j];
        }
        grad_max = grad.amax() / n as f64;
        if grad_max <= GRAD_TOL || iterations >= MAX_ITER {
            break;
        }
        let w = mu.map(|m| m * (1.0 - m));
        let mut xw = x.clone();
        for (i, mut r) in xw.row_iter_mut().enumerate() {
            r *= w[i];
        }
        let hess = x.transpose() * xw + penalty(p, ridge);
        let step = match hess.cholesky() {
            Some(c) => c.solve(&grad),
            None => return Err(Error::Separation("information matrix lost rank".into())),
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &beta + &step * t;
            let val = objective(&cand);
            if val.is_finite() && val >= current - 1e-12 * current.abs() {
                beta = cand;
                current = val;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        if !accepted {
            break;
        }
        if beta.norm() > DIVERGENCE_NORM {
            return Err(Error::Separation(format!("coefficient norm {:.3e}", beta.norm())));
        }
    }
    // An unpenalized MLE that classifies every unit correctly can only arise
    // from separable data, where the likelihood has no maximizer.
    let eta = &x * &beta;
    let separated = ridge == 0.0
        && eta
            .iter()
            .zip(y.iter())
            .all(|(&e, &yi)| if yi == 1.0 { e > 0.0 } else { e < 0.0 });
    if separated || beta.norm() > DIVERGENCE_NORM {
        return Err(Error::Separation("fitted probabilities reach 0 or 1 for every unit".into()));
    }
    Ok(PropensityFit {
        features: features.clone(),
        coef: beta.iter().copied().collect(),
        clip,
        iterations,
        gradient_max: grad_max,
    })
}

fn penalty(p: usize, ridge: f64) -> DMatrix<f64> {
    let mut m = DMatrix::<f64>::zeros(p, p);
    for j in 1..p {
        m[(j, j)] = ridge;
    }
    m
}

fn softplus(e: f64) -> f64 {
    if e > 0.0 {
        e + (-e).exp().ln_1p()
    } else {
        e.exp().ln_1p()
    }
}
