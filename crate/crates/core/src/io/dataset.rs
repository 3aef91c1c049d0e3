use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nuisance::Subject;
use crate::ot::{LevelGrid, QuantileCurve};

/// Layout of the input table.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    /// One row per observation: `subject_id, treatment, covariates..., value`.
    #[default]
    Long,
    /// One row per subject with precomputed quantiles `q_1..q_M` at the grid levels.
    Quantiles,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetOptions {
    pub treatment: String,
    pub covariates: Vec<String>,
    pub subject_column: String,
    pub value_column: String,
    pub bounds: (f64, f64),
    pub grid: usize,
    /// Subjects with fewer observations left after filtering are excluded.
    pub min_obs: usize,
    /// Drop observations exactly equal to zero.
    pub drop_zeros: bool,
    pub format: InputFormat,
}

impl DatasetOptions {
    pub fn new(treatment: &str, covariates: &[&str], bounds: (f64, f64)) -> Self {
        Self {
            treatment: treatment.into(),
            covariates: covariates.iter().map(|c| c.to_string()).collect(),
            subject_column: "subject_id".into(),
            value_column: "value".into(),
            bounds,
            grid: crate::ot::DEFAULT_LEVELS,
            min_obs: 1,
            drop_zeros: false,
            format: InputFormat::Long,
        }
    }
}

/// Where the data came from and what the filters removed.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub file: String,
    pub rows: usize,
    pub rows_missing_treatment: usize,
    pub rows_out_of_bounds: usize,
    pub rows_zero: usize,
    pub subjects_read: usize,
    pub subjects_below_min_obs: usize,
    pub subjects_kept: usize,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub subjects: Vec<Subject>,
    pub covariate_names: Vec<String>,
    pub treatment_column: String,
    pub bounds: (f64, f64),
    pub provenance: Provenance,
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
}

fn parse_number(raw: &str, what: &str, row: usize) -> Result<f64> {
    raw.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Schema(format!("row {row}: {what} `{raw}` is not a finite number")))
}

fn parse_treatment(raw: &str, row: usize) -> Result<Option<u8>> {
    match raw.trim() {
        "" | "NA" | "NaN" | "nan" => Ok(None),
        "0" | "0.0" => Ok(Some(0)),
        "1" | "1.0" => Ok(Some(1)),
        other => Err(Error::Schema(format!("row {row}: treatment `{other}` is not 0 or 1"))),
    }
}

fn check_bounds(bounds: (f64, f64)) -> Result<()> {
    if bounds.0.is_finite() && bounds.1.is_finite() && bounds.0 < bounds.1 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("bounds {:?} must satisfy lo < hi", bounds)))
    }
}

struct Pending {
    id: String,
    treatment: u8,
    covariates: Vec<f64>,
    values: Vec<f64>,
}

/// Reads a dataset and lifts every subject to a quantile curve.
pub fn parse_dataset(path: &Path, opts: &DatasetOptions) -> Result<Dataset> {
    check_bounds(opts.bounds)?;
    let grid = LevelGrid::new(opts.grid)?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = reader.headers()?.clone();
    let id_col = column(&headers, &opts.subject_column)?;
    let a_col = column(&headers, &opts.treatment)?;
    let x_cols: Vec<usize> = opts.covariates.iter().map(|c| column(&headers, c)).collect::<Result<_>>()?;
    let mut prov = Provenance { file: path.display().to_string(), ..Provenance::default() };

    let subjects = match opts.format {
        InputFormat::Long => {
            let v_col = column(&headers, &opts.value_column)?;
            read_long(&mut reader, id_col, a_col, &x_cols, v_col, opts, &grid, &mut prov)?
        }
        InputFormat::Quantiles => {
            let q_cols: Vec<usize> =
                (1..=grid.len()).map(|j| column(&headers, &format!("q_{j}"))).collect::<Result<_>>()?;
            read_quantiles(&mut reader, id_col, a_col, &x_cols, &q_cols, opts, &grid, &mut prov)?
        }
    };
    prov.subjects_kept = subjects.len();
    if subjects.is_empty() {
        return Err(Error::InsufficientData("no subject survived the filters".into()));
    }
    Ok(Dataset {
        subjects,
        covariate_names: opts.covariates.clone(),
        treatment_column: opts.treatment.clone(),
        bounds: opts.bounds,
        provenance: prov,
    })
}

#[allow(clippy::too_many_arguments)]
fn read_long(
    reader: &mut csv::Reader<std::fs::File>,
    id_col: usize,
    a_col: usize,
    x_cols: &[usize],
    v_col: usize,
    opts: &DatasetOptions,
    grid: &LevelGrid,
    prov: &mut Provenance,
) -> Result<Vec<Subject>> {
    let mut order: Vec<Pending> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let (lo, hi) = opts.bounds;
    for (r, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = r + 2;
        prov.rows += 1;
        let Some(a) = parse_treatment(&rec[a_col], row)? else {
            prov.rows_missing_treatment += 1;
            continue;
        };
        let id = rec[id_col].to_string();
        let covs: Vec<f64> = x_cols
            .iter()
            .zip(&opts.covariates)
            .map(|(&c, name)| parse_number(&rec[c], name, row))
            .collect::<Result<_>>()?;
        let value = parse_number(&rec[v_col], "value", row)?;
        let slot = match index.get(&id) {
            Some(&k) => {
                let p = &order[k];
                if p.treatment != a || p.covariates != covs {
                    return Err(Error::Schema(format!(
                        "row {row}: subject `{id}` changes treatment or covariates between rows"
                    )));
                }
                k
            }
            None => {
                index.insert(id.clone(), order.len());
                order.push(Pending { id, treatment: a, covariates: covs, values: Vec::new() });
                order.len() - 1
            }
        };
        if opts.drop_zeros && value == 0.0 {
            prov.rows_zero += 1;
            continue;
        }
        if !(lo..=hi).contains(&value) {
            prov.rows_out_of_bounds += 1;
            continue;
        }
        order[slot].values.push(value);
    }
    prov.subjects_read = order.len();
    let min_obs = opts.min_obs.max(1);
    let mut out = Vec::with_capacity(order.len());
    for p in order {
        if p.values.len() < min_obs {
            prov.subjects_below_min_obs += 1;
            continue;
        }
        out.push(Subject::from_samples(p.id, p.treatment, p.covariates, p.values, grid, opts.bounds)?);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn read_quantiles(
    reader: &mut csv::Reader<std::fs::File>,
    id_col: usize,
    a_col: usize,
    x_cols: &[usize],
    q_cols: &[usize],
    opts: &DatasetOptions,
    grid: &LevelGrid,
    prov: &mut Provenance,
) -> Result<Vec<Subject>> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = r + 2;
        prov.rows += 1;
        let Some(a) = parse_treatment(&rec[a_col], row)? else {
            prov.rows_missing_treatment += 1;
            continue;
        };
        let id = rec[id_col].to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::Schema(format!("row {row}: subject `{id}` appears twice")));
        }
        prov.subjects_read += 1;
        let covs: Vec<f64> = x_cols
            .iter()
            .zip(&opts.covariates)
            .map(|(&c, name)| parse_number(&rec[c], name, row))
            .collect::<Result<_>>()?;
        let q: Vec<f64> = q_cols
            .iter()
            .map(|&c| parse_number(&rec[c], "quantile", row))
            .collect::<Result<_>>()?;
        let curve = QuantileCurve::new(grid.clone(), q, opts.bounds)
            .map_err(|e| Error::Schema(format!("row {row}: subject `{id}`: {e}")))?;
        out.push(Subject::from_curve(id, a, covs, curve)?);
    }
    Ok(out)
}

/// Loads a reference quantile curve: a JSON curve document, or a one-column
/// CSV (header `quantile`) with one value per grid level.
pub fn read_reference_curve(path: &Path, grid: &LevelGrid, bounds: (f64, f64)) -> Result<QuantileCurve> {
    let is_json = path.extension().is_some_and(|e| e == "json");
    let curve = if is_json {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str::<QuantileCurve>(&text)?
    } else {
        let mut reader = csv::Reader::from_path(path)?;
        let col = column(&reader.headers()?.clone(), "quantile")?;
        let mut vals = Vec::new();
        for (r, rec) in reader.records().enumerate() {
            vals.push(parse_number(&rec?[col], "quantile", r + 2)?);
        }
        if vals.len() != grid.len() {
            return Err(Error::GridMismatch(vals.len(), grid.len()));
        }
        QuantileCurve::new(grid.clone(), vals, bounds)?
    };
    curve.grid().check_same(grid)?;
    Ok(curve)
}

/// Path of the flat plotting table written next to a JSON document.
pub fn flat_csv_path(json: &Path) -> PathBuf {
    json.with_extension("csv")
}
