use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cli::EstimateArgs;
use super::dataset::Provenance;
use super::format::{to_json_string, write_atomic};
use crate::effects::{Counterfactual, EffectEstimate};
use crate::error::{Error, Result};
use crate::inference::{Band, Decision, NormTest, PointwiseInterval};
use crate::ot::QuantileCurve;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestDecisions {
    /// Decision of the band-based test of a zero effect.
    pub band_null: Decision,
    pub norm: NormTest,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub folds: Option<u64>,
    pub band: u64,
    pub norm: u64,
}

/// Everything one estimation run produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultDocument {
    pub schema_version: u32,
    pub command: String,
    pub config: EstimateArgs,
    pub dataset: Provenance,
    pub n_treated: usize,
    /// Grid, effect curve, raw and projected barycentres, reference descriptor.
    pub estimate: EffectEstimate,
    pub reference_curve: QuantileCurve,
    /// `W2(mu1, mu0)`.
    pub w2_effect: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub band: Option<Band>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pointwise: Option<PointwiseInterval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tests: Option<TestDecisions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterfactual: Option<Counterfactual>,
    pub seeds: Seeds,
    /// Wall-clock milliseconds per phase; the only non-deterministic field.
    pub timings: BTreeMap<String, f64>,
}

impl ResultDocument {
    pub fn to_json(&self) -> Result<String> {
        to_json_string(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ResultDocument = serde_json::from_str(text)?;
        if doc.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "schema version {} (expected {SCHEMA_VERSION})",
                doc.schema_version
            )));
        }
        Ok(doc)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Copy with the timings cleared, for reproducibility comparisons.
    pub fn without_timings(&self) -> Self {
        Self { timings: BTreeMap::new(), ..self.clone() }
    }
}
