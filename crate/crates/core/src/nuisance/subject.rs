use crate::error::{Error, Result};
use crate::ot::{empirical_quantile, LevelGrid, QuantileCurve};

/// One observational unit: treatment indicator, covariates, and the subject's
/// outcome distribution lifted to a quantile curve.
#[derive(Clone, Debug, PartialEq)]
pub struct Subject {
    pub id: String,
    treatment: u8,
    pub covariates: Vec<f64>,
    pub observations: Option<Vec<f64>>,
    lifted: QuantileCurve,
}

impl Subject {
    pub fn from_curve(id: impl Into<String>, treatment: u8, covariates: Vec<f64>, lifted: QuantileCurve) -> Result<Self> {
        if treatment > 1 {
            return Err(Error::Schema(format!("treatment must be 0 or 1, got {treatment}")));
        }
        Ok(Self { id: id.into(), treatment, covariates, observations: None, lifted })
    }

    /// Lifts raw observations through their empirical quantile function.
    pub fn from_samples(
        id: impl Into<String>,
        treatment: u8,
        covariates: Vec<f64>,
        samples: Vec<f64>,
        grid: &LevelGrid,
        bounds: (f64, f64),
    ) -> Result<Self> {
        let lifted = empirical_quantile(&samples, grid, bounds)?;
        let mut s = Self::from_curve(id, treatment, covariates, lifted)?;
        s.observations = Some(samples);
        Ok(s)
    }

    pub fn treatment(&self) -> u8 {
        self.treatment
    }

    pub fn is_treated(&self) -> bool {
        self.treatment == 1
    }

    pub fn lifted(&self) -> &QuantileCurve {
        &self.lifted
    }
}

/// Shared grid of a subject set, checking that every curve agrees.
pub fn common_grid(subjects: &[Subject]) -> Result<LevelGrid> {
    let first = subjects
        .first()
        .ok_or_else(|| Error::InsufficientData("no subjects".into()))?;
    let grid = first.lifted().grid().clone();
    for s in subjects {
        grid.check_same(s.lifted().grid())?;
    }
    Ok(grid)
}

/// Smallest interval containing every subject's outcome domain.
pub fn common_bounds(subjects: &[Subject]) -> (f64, f64) {
    subjects.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
        let (a, b) = s.lifted().bounds();
        (lo.min(a), hi.max(b))
    })
}
