use std::f64::consts::PI;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::effects::EffectEstimate;
use crate::error::{Error, Result};
use crate::nuisance::{expit, Subject};
use crate::ot::{empirical_quantile, LevelGrid, QuantileCurve};
use crate::rng::stream;

/// Shape of the confounder's effect on both treatment and outcome.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// `X` enters both models linearly.
    #[default]
    Linear,
    /// `X` is replaced by `sin(pi X)` in both models.
    Sine,
}

impl Scenario {
    pub fn signal(self, x: f64) -> f64 {
        match self {
            Scenario::Linear => x,
            Scenario::Sine => (PI * x).sin(),
        }
    }

    pub fn propensity(self, x: f64) -> f64 {
        expit(1.0 + self.signal(x))
    }

    /// `E(A) = int_{-1}^{1} expit(1 + s(x)) / 2 dx`, by composite Simpson.
    pub fn treated_share(self) -> f64 {
        const INTERVALS: usize = 1 << 14;
        let h = 2.0 / INTERVALS as f64;
        let f = |i: usize| self.propensity(-1.0 + i as f64 * h);
        let mut acc = f(0) + f(INTERVALS);
        for i in 1..INTERVALS {
            acc += if i % 2 == 1 { 4.0 * f(i) } else { 2.0 * f(i) };
        }
        acc * h / 3.0 / 2.0
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Scenario::Linear),
            "sine" => Ok(Scenario::Sine),
            other => Err(Error::InvalidArgument(format!("unknown scenario `{other}`"))),
        }
    }
}

/// Subject-level quantile function
/// `Y^{-1}(alpha) = (-E(A) + a + s(x) + eps) sin(pi alpha) / 8 + alpha`.
pub fn dgp_quantile(scenario: Scenario, treated_share: f64, a: u8, x: f64, eps: f64, alpha: f64) -> f64 {
    (-treated_share + a as f64 + scenario.signal(x) + eps) * (PI * alpha).sin() / 8.0 + alpha
}

/// One generated subject together with the values that produced it.
#[derive(Clone, Debug)]
pub struct SimSubject {
    pub subject: Subject,
    pub x: f64,
    pub eps: f64,
    /// Exact potential quantile curves `Y(0)^{-1}`, `Y(1)^{-1}` on the grid.
    pub potential: [QuantileCurve; 2],
}

impl SimSubject {
    pub fn treatment(&self) -> u8 {
        self.subject.treatment()
    }
}

/// Draws `n` subjects; each subject's outcome is lifted from `k_obs`
/// inverse-transform draws. Subject `i` uses its own random stream, so the
/// sample does not depend on thread scheduling.
pub fn dgp_sample(n: usize, k_obs: usize, scenario: Scenario, grid: &LevelGrid, seed: u64) -> Result<Vec<SimSubject>> {
    if n == 0 || k_obs == 0 {
        return Err(Error::InvalidArgument("n and k_obs must be positive".into()));
    }
    let ea = scenario.treated_share();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            let x: f64 = rng.random_range(-1.0..=1.0);
            let a = rng.random_bool(scenario.propensity(x)) as u8;
            let eps: f64 = rng.random_range(-0.5..=0.5);
            let mut draws: Vec<f64> = (0..k_obs)
                .map(|_| dgp_quantile(scenario, ea, a, x, eps, rng.random::<f64>()))
                .collect();
            draws.sort_by(f64::total_cmp);
            let lifted = empirical_quantile(&draws, grid, (0.0, 1.0))?;
            let potential = [0u8, 1].map(|arm| {
                let vals = grid.levels().iter().map(|&u| dgp_quantile(scenario, ea, arm, x, eps, u)).collect();
                QuantileCurve::new(grid.clone(), vals, (0.0, 1.0))
            });
            let [p0, p1] = potential;
            let mut subject = Subject::from_curve(i.to_string(), a, vec![x], lifted)?;
            subject.observations = Some(draws);
            Ok(SimSubject { subject, x, eps, potential: [p0?, p1?] })
        })
        .collect()
}

/// Plain subjects, dropping the oracle metadata.
pub fn observed(sample: &[SimSubject]) -> Vec<Subject> {
    sample.iter().map(|s| s.subject.clone()).collect()
}

/// True effect curve `sin(pi u) / 8` at the grid levels.
pub fn true_effect(grid: &LevelGrid) -> Vec<f64> {
    grid.levels().iter().map(|&u| (PI * u).sin() / 8.0).collect()
}

/// Estimated difference in medians minus the true value `1/8`.
pub fn metric_bias_median(estimate: &EffectEstimate) -> f64 {
    estimate.effect_at(0.5) - 0.125
}

/// Grid L2 distance between the estimated and true effect curves.
pub fn metric_rmise(estimate: &EffectEstimate) -> f64 {
    let truth = true_effect(&estimate.grid);
    let diff: Vec<f64> = estimate.effect.iter().zip(&truth).map(|(a, b)| a - b).collect();
    estimate.grid.l2_norm(&diff)
}
