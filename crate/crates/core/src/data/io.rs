//! Delimited-text ingestion and export.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Category, FlowRecord};
use crate::error::{Error, Result};

/// Maps file columns onto record fields. Feature position `i` is read from the
/// column named `features[i]`; other columns in the file are ignored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub label_column: String,
    pub features: Vec<String>,
}

impl ColumnSpec {
    /// `feature_00 .. feature_{n-1}` plus a `label` column.
    pub fn numbered(n: usize) -> Self {
        ColumnSpec {
            label_column: "label".into(),
            features: (0..n).map(|i| format!("feature_{i:02}")).collect(),
        }
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(toml::from_str(&text)?)
    }
}

fn is_missing(field: &str) -> bool {
    matches!(
        field.trim(),
        "" | "NA" | "N/A" | "na" | "NaN" | "nan" | "null" | "NULL" | "None"
    )
}

/// Reads one [`FlowRecord`] per data row. Missing values (`""`, `NA`, `NaN`, ...)
/// load as NaN so that [`super::clean`] can drop the row; any other unparsable
/// numeric is an error naming the row (1-based file line) and column.
pub fn load_records(path: &Path, spec: &ColumnSpec, delimiter: u8) -> Result<Vec<FlowRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Data(format!("{}: {other:?}", path.display())),
        })?;
    let headers = reader.headers()?.clone();
    let position: HashMap<&str, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim(), i))
        .collect();
    let lookup = |name: &str| {
        position.get(name).copied().ok_or_else(|| Error::Load {
            row: 1,
            column: name.to_string(),
            message: "column missing from header".into(),
        })
    };
    let label_col = lookup(&spec.label_column)?;
    let feature_cols = spec
        .features
        .iter()
        .map(|n| lookup(n))
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    let mut unknown = BTreeSet::new();
    let mut next_index: HashMap<String, usize> = HashMap::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        let row = row?;
        let label = row.get(label_col).unwrap_or("").trim().to_string();
        let Some(category) = Category::from_sub_attack(&label) else {
            unknown.insert(label);
            continue;
        };
        let mut features = Vec::with_capacity(feature_cols.len());
        for (&c, name) in feature_cols.iter().zip(&spec.features) {
            let field = row.get(c).unwrap_or("");
            let v = if is_missing(field) {
                f64::NAN
            } else {
                field.trim().parse::<f64>().map_err(|e| Error::Load {
                    row: line,
                    column: name.clone(),
                    message: format!("cannot parse `{field}` as a number ({e})"),
                })?
            };
            features.push(v);
        }
        let slot = next_index.entry(label.clone()).or_insert(0);
        records.push(FlowRecord {
            features,
            sub_attack: label,
            category,
            order_index: *slot,
        });
        *slot += 1;
    }
    if !unknown.is_empty() {
        return Err(Error::UnknownLabels(unknown.into_iter().collect()));
    }
    Ok(records)
}

/// Writes records in the format read by [`load_records`].
pub fn write_records(
    path: &Path,
    records: &[FlowRecord],
    spec: &ColumnSpec,
    delimiter: u8,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Data(format!("{}: {other:?}", path.display())),
        })?;
    let mut header: Vec<&str> = spec.features.iter().map(String::as_str).collect();
    header.push(&spec.label_column);
    w.write_record(&header)?;
    for r in records {
        if r.features.len() != spec.features.len() {
            return Err(Error::Data(format!(
                "record has {} features but the column spec names {}",
                r.features.len(),
                spec.features.len()
            )));
        }
        let mut fields: Vec<String> = r.features.iter().map(|v| v.to_string()).collect();
        fields.push(r.sub_attack.clone());
        w.write_record(&fields)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
