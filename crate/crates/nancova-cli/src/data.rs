//! CSV ingestion: header-based column roles, strict numeric parsing and a
//! canonical row order so results do not depend on how the file is sorted.

use std::collections::BTreeMap;
use std::path::Path;

use nancova::Dataset;

use crate::errors::CliError;

/// Read a dataset from a CSV file with a header row.
///
/// `group` selects the categorical group column (labels taken verbatim),
/// `outcome` the numeric outcome and `covariates` the ordered numeric
/// covariate columns. Groups are ordered by label and rows within a group
/// canonically by value, so any row order of the input produces the identical
/// dataset.
pub fn read_dataset(
    path: &Path,
    group: &str,
    outcome: &str,
    covariates: &[String],
) -> Result<Dataset, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| {
        CliError::Data(format!("cannot read '{}': {e}", path.display()))
    })?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Data(format!("cannot read CSV header: {e}")))?
        .clone();

    let find = |name: &str| -> Result<usize, CliError> {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::Data(format!(
                "column '{name}' not found in header ({})",
                headers.iter().collect::<Vec<_>>().join(", ")
            ))
        })
    };
    let group_idx = find(group)?;
    let outcome_idx = find(outcome)?;
    let covariate_idx: Vec<(usize, &String)> = covariates
        .iter()
        .map(|c| find(c).map(|i| (i, c)))
        .collect::<Result<_, _>>()?;

    let mut groups: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for (row_number, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| CliError::Data(format!("row {}: {e}", row_number + 2)))?;
        let cell = |idx: usize, name: &str| -> Result<f64, CliError> {
            let raw = record.get(idx).unwrap_or("");
            raw.trim().parse::<f64>().map_err(|_| {
                CliError::Data(format!(
                    "row {}, column '{name}': cannot parse '{raw}' as a number",
                    row_number + 2
                ))
            })
        };
        let mut row = Vec::with_capacity(covariate_idx.len() + 1);
        row.push(cell(outcome_idx, outcome)?);
        for &(idx, name) in &covariate_idx {
            row.push(cell(idx, name)?);
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Data(format!(
                "row {}: non-finite value",
                row_number + 2
            )));
        }
        let label = record.get(group_idx).unwrap_or("").to_string();
        groups.entry(label).or_default().push(row);
    }

    for rows in groups.values_mut() {
        rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }
    Dataset::new(groups.into_iter().collect()).map_err(CliError::from)
}
