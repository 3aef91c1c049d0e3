use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::nuisance::{expit, Subject};
use crate::ot::LevelGrid;
use crate::rng::stream;

/// Upper end of the intensity scale.
pub const INTENSITY_MAX: f64 = 1000.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureConfig {
    pub n: usize,
    pub seed: u64,
    /// Additive exposure effect on every intensity value.
    pub shift: f64,
    /// Extra subjects with fewer than 100 observations, for filter tests.
    pub short_subjects: usize,
    pub min_count: usize,
    pub max_count: usize,
}

impl FixtureConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        Self { n, seed, shift: 20.0, short_subjects: 0, min_count: 100, max_count: 5000 }
    }

    pub fn with_shift(mut self, shift: f64) -> Self {
        self.shift = shift;
        self
    }

    pub fn with_short_subjects(mut self, k: usize) -> Self {
        self.short_subjects = k;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixtureSubject {
    pub id: String,
    pub treatment: u8,
    pub age: f64,
    pub gender: f64,
    pub values: Vec<f64>,
}

/// Synthetic accelerometer-style cohort: binary exposure confounded by age
/// and gender, per-subject intensity samples on `[1, 1000]`. Exposed
/// subjects' intensities are shifted by exactly `shift`, so the level-wise
/// effect is the constant `shift`. Intensities are whole counts per minute.
#[derive(Clone, Debug, PartialEq)]
pub struct Fixture {
    pub config: FixtureConfig,
    pub subjects: Vec<FixtureSubject>,
}

pub fn fixture_nhanes_like(config: FixtureConfig) -> Result<Fixture> {
    if !(0.0..INTENSITY_MAX - 1.0).contains(&config.shift) {
        return Err(Error::InvalidArgument(format!("shift {} outside [0, 999)", config.shift)));
    }
    if config.min_count == 0 || config.min_count > config.max_count {
        return Err(Error::InvalidArgument("invalid observation count range".into()));
    }
    let total = config.n + config.short_subjects;
    let subjects = (0..total)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(config.seed, i as u64);
            let age = rng.random_range(18..=80) as f64;
            let gender = rng.random_bool(0.5) as u8 as f64;
            let p = expit(-0.3 + 0.04 * (age - 45.0) + 0.4 * gender);
            let treatment = rng.random_bool(p) as u8;
            let frailty: f64 = StandardNormal.sample(&mut rng);
            let location = 4.0 - 0.01 * (age - 45.0) - 0.25 * gender + 0.3 * frailty;
            let count = if i < config.n {
                rng.random_range(config.min_count..=config.max_count)
            } else {
                rng.random_range(5..config.min_count.max(6))
            };
            let ceiling = INTENSITY_MAX - config.shift;
            let values = (0..count)
                .map(|_| loop {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let v = (location + 0.7 * z).exp().round();
                    if (1.0..=ceiling).contains(&v) {
                        break v + config.shift * treatment as f64;
                    }
                })
                .collect();
            FixtureSubject { id: (30000 + i).to_string(), treatment, age, gender, values }
        })
        .collect();
    Ok(Fixture { config, subjects })
}

impl Fixture {
    /// Subjects generated below the minimum observation count.
    pub fn short_count(&self) -> usize {
        self.subjects.iter().filter(|s| s.values.len() < self.config.min_count).count()
    }

    /// Lifts every subject with at least `min_obs` observations.
    pub fn to_subjects(&self, grid: &LevelGrid, min_obs: usize) -> Result<Vec<Subject>> {
        self.subjects
            .par_iter()
            .filter(|s| s.values.len() >= min_obs)
            .map(|s| {
                Subject::from_samples(
                    s.id.clone(),
                    s.treatment,
                    vec![s.age, s.gender],
                    s.values.clone(),
                    grid,
                    (1.0, INTENSITY_MAX),
                )
            })
            .collect()
    }

    /// Long format: one row per observation.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("subject_id,treatment,age,gender,value\n");
        for s in &self.subjects {
            // shortest round-trip form; the values are small integers
            let prefix = format!("{},{},{},{},", s.id, s.treatment, s.age, s.gender);
            for v in &s.values {
                out.push_str(&prefix);
                out.push_str(&v.to_string());
                out.push('\n');
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}
