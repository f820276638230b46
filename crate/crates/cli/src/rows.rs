//! Unlabeled pair-row input for `predict`: a CSV with `left_<attr>` /
//! `right_<attr>` columns (attribute order taken from the `left_` header
//! order) and an optional `label` column, which is parsed when present and
//! ignored by prediction.

use std::path::Path;

use tinymatch_core::data::{normalize_missing, MatchLabel, Record};

use crate::CliError;

pub struct PairRows {
    pub attributes: Vec<String>,
    pub pairs: Vec<(Record, Record)>,
    /// Per-row label when the file carries a `label` column.
    pub labels: Vec<Option<MatchLabel>>,
}

pub fn load_pair_rows(path: &Path) -> Result<PairRows, CliError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    // A completely empty file is an empty input, not a schema error.
    if raw.trim().is_empty() {
        return Ok(PairRows {
            attributes: Vec::new(),
            pairs: Vec::new(),
            labels: Vec::new(),
        });
    }

    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(raw.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?
        .clone();

    let norm = |h: &str| h.trim().to_ascii_lowercase();
    let mut attributes = Vec::new();
    let mut left_cols = Vec::new();
    let mut label_col = None;
    for (i, header) in headers.iter().enumerate() {
        let name = norm(header);
        if let Some(attr) = name.strip_prefix("left_") {
            attributes.push(attr.to_string());
            left_cols.push(i);
        } else if name == "label" {
            label_col = Some(i);
        }
    }
    if attributes.is_empty() {
        return Err(CliError::validation(format!(
            "{}: no left_<attr> columns in header",
            path.display()
        )));
    }
    let mut right_cols = Vec::with_capacity(attributes.len());
    for attr in &attributes {
        let want = format!("right_{attr}");
        match headers.iter().position(|h| norm(h) == want) {
            Some(i) => right_cols.push(i),
            None => {
                return Err(CliError::validation(format!(
                    "{}: column left_{attr} has no matching {want}",
                    path.display()
                )))
            }
        }
    }

    let mut pairs = Vec::new();
    let mut labels = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row =
            row.map_err(|e| CliError::validation(format!("{} row {row_no}: {e}", path.display())))?;
        if row.len() != headers.len() {
            return Err(CliError::validation(format!(
                "{} row {row_no}: expected {} fields, found {}",
                path.display(),
                headers.len(),
                row.len()
            )));
        }
        let take = |cols: &[usize]| {
            Record::new(cols.iter().map(|&c| normalize_missing(&row[c])).collect())
        };
        pairs.push((take(&left_cols), take(&right_cols)));
        labels.push(match label_col {
            Some(c) => match &row[c] {
                "0" => Some(MatchLabel::NonMatch),
                "1" => Some(MatchLabel::Match),
                "" => None,
                other => {
                    return Err(CliError::validation(format!(
                        "{} row {row_no}: label must be \"0\" or \"1\", found {other:?}",
                        path.display()
                    )))
                }
            },
            None => None,
        });
    }
    Ok(PairRows {
        attributes,
        pairs,
        labels,
    })
}
