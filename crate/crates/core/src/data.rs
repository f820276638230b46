//! Labeled record pairs and dataset directory I/O.
//!
//! A dataset lives in a directory: `manifest.json` names the dataset, its
//! attribute schema, and a free-form domain tag; `train.csv`, `valid.csv`,
//! and `test.csv` hold one labeled record pair per row with `left_<attr>` /
//! `right_<attr>` value columns and a strict 0/1 `label` column.
//!
//! Loading normalizes the missing-value spellings `""`, `"null"`, `"nan"`
//! (case-insensitive) to [`None`] and validates the whole directory: schema
//! agreement between manifest and CSV headers, rectangular rows, strict
//! labels, and pairwise-disjoint splits.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ErrorClass, Fallible};

/// Ground-truth match decision for a record pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MatchLabel {
    NonMatch,
    Match,
}

impl MatchLabel {
    pub fn as_u8(self) -> u8 {
        match self {
            MatchLabel::NonMatch => 0,
            MatchLabel::Match => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(MatchLabel::NonMatch),
            1 => Some(MatchLabel::Match),
            _ => None,
        }
    }

    pub fn is_match(self) -> bool {
        matches!(self, MatchLabel::Match)
    }
}

impl fmt::Display for MatchLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

// On the wire (corpus JSONL, prediction output) labels are the integers 0/1.
impl Serialize for MatchLabel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.as_u8())
    }
}

impl<'de> Deserialize<'de> for MatchLabel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = u8::deserialize(deserializer)?;
        MatchLabel::from_u8(v)
            .ok_or_else(|| serde::de::Error::custom(format!("label must be 0 or 1, got {v}")))
    }
}

/// One tabular entity: attribute values in schema order, `None` = missing.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Record {
    pub values: Vec<Option<String>>,
}

impl Record {
    pub fn new(values: Vec<Option<String>>) -> Self {
        Record { values }
    }

    /// Convenience for building records from plain strings in tests and
    /// fixtures; empty strings stay `Some("")` — use [`normalize_missing`]
    /// when loading untrusted cells.
    pub fn from_strs(values: &[&str]) -> Self {
        Record {
            values: values.iter().map(|v| Some((*v).to_string())).collect(),
        }
    }
}

/// A labeled pair of records drawn from the same schema.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabeledPair {
    pub left: Record,
    pub right: Record,
    pub label: MatchLabel,
}

impl LabeledPair {
    pub fn new(left: Record, right: Record, label: MatchLabel) -> Self {
        LabeledPair { left, right, label }
    }
}

/// A complete dataset: identity, schema, and the three fixed splits.
///
/// Invariants upheld by [`load_dataset`] and expected of hand-built values:
/// every record has exactly `attributes.len()` values, and no pair identity
/// `(left values, right values, label)` appears in more than one split.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDataset {
    pub name: String,
    pub domain: String,
    pub attributes: Vec<String>,
    pub train: Vec<LabeledPair>,
    pub valid: Vec<LabeledPair>,
    pub test: Vec<LabeledPair>,
}

impl PairDataset {
    pub fn splits(&self) -> [(&'static str, &[LabeledPair]); 3] {
        [
            ("train", self.train.as_slice()),
            ("valid", self.valid.as_slice()),
            ("test", self.test.as_slice()),
        ]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestFile {
    name: String,
    attributes: Vec<String>,
    domain: String,
}

/// Row counts and class balance per split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitStats {
    pub rows: usize,
    pub positives: usize,
    pub negatives: usize,
}

/// Summary of a dataset as loaded; counts always equal the materialized data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DatasetStats {
    pub name: String,
    pub domain: String,
    pub attributes: Vec<String>,
    pub splits: BTreeMap<String, SplitStats>,
    pub total_rows: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: invalid manifest: {message}")]
    BadManifest { path: PathBuf, message: String },
    #[error("dataset {dataset:?}: attribute list is empty")]
    EmptyAttributes { dataset: String },
    #[error("dataset {dataset:?}: duplicate attribute {attribute:?} after normalization")]
    DuplicateAttribute { dataset: String, attribute: String },
    #[error("manifest {path}: dataset name is empty")]
    EmptyName { path: PathBuf },
    #[error("dataset {dataset:?}: missing split file {path}")]
    MissingSplit { dataset: String, path: PathBuf },
    #[error("{split}.csv: missing required column {column:?}")]
    MissingColumn { split: String, column: String },
    #[error("{split}.csv: duplicate column {column:?}")]
    DuplicateColumn { split: String, column: String },
    #[error("{split}.csv: unknown column {column:?} (strict mode)")]
    UnknownColumn { split: String, column: String },
    #[error("{split}.csv row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        split: String,
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("{split}.csv row {row}: label must be \"0\" or \"1\", found {value:?}")]
    BadLabel {
        split: String,
        row: usize,
        value: String,
    },
    #[error("pair at {second}.csv row {row} already appears in {first}.csv: splits must be disjoint")]
    SplitOverlap {
        first: String,
        second: String,
        row: usize,
    },
    #[error("{split}.csv: {source}")]
    Csv {
        split: String,
        #[source]
        source: csv::Error,
    },
}

impl Fallible for DataError {
    fn class(&self) -> ErrorClass {
        match self {
            DataError::Io { .. } => ErrorClass::Runtime,
            _ => ErrorClass::Validation,
        }
    }
}

/// Loader behavior switches.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Reject CSV columns that are neither `label` nor a declared
    /// `left_`/`right_` attribute column. Default: ignore them.
    pub strict: bool,
}

/// Map a raw CSV cell to an attribute value. The spellings `""`, `"null"`,
/// and `"nan"` (case-insensitive, no trimming) denote a missing value.
pub fn normalize_missing(raw: &str) -> Option<String> {
    if raw.is_empty() || raw.eq_ignore_ascii_case("null") || raw.eq_ignore_ascii_case("nan") {
        None
    } else {
        Some(raw.to_string())
    }
}

pub(crate) fn normalize_attribute(raw: &str) -> String {
    raw.trim().to_ascii_lowercase()
}

/// Load a dataset directory with default options.
pub fn load_dataset(dir: &Path) -> Result<PairDataset, DataError> {
    load_dataset_with(dir, LoadOptions::default())
}

/// Load a dataset directory: `manifest.json` plus `train.csv`, `valid.csv`,
/// `test.csv`. Row order within each split is preserved.
pub fn load_dataset_with(dir: &Path, opts: LoadOptions) -> Result<PairDataset, DataError> {
    let manifest_path = dir.join("manifest.json");
    let manifest_raw = fs::read_to_string(&manifest_path).map_err(|source| {
        if source.kind() == io::ErrorKind::NotFound {
            DataError::BadManifest {
                path: manifest_path.clone(),
                message: "file not found".into(),
            }
        } else {
            DataError::Io {
                path: manifest_path.clone(),
                source,
            }
        }
    })?;
    let manifest: ManifestFile =
        serde_json::from_str(&manifest_raw).map_err(|e| DataError::BadManifest {
            path: manifest_path.clone(),
            message: e.to_string(),
        })?;

    if manifest.name.trim().is_empty() {
        return Err(DataError::EmptyName {
            path: manifest_path,
        });
    }
    if manifest.attributes.is_empty() {
        return Err(DataError::EmptyAttributes {
            dataset: manifest.name,
        });
    }
    let attributes: Vec<String> = manifest
        .attributes
        .iter()
        .map(|a| normalize_attribute(a))
        .collect();
    {
        let mut seen = HashSet::new();
        for a in &attributes {
            if !seen.insert(a.as_str()) {
                return Err(DataError::DuplicateAttribute {
                    dataset: manifest.name,
                    attribute: a.clone(),
                });
            }
        }
    }

    let mut splits: Vec<Vec<LabeledPair>> = Vec::with_capacity(3);
    for split in ["train", "valid", "test"] {
        let path = dir.join(format!("{split}.csv"));
        if !path.is_file() {
            return Err(DataError::MissingSplit {
                dataset: manifest.name,
                path,
            });
        }
        splits.push(load_split(&path, split, &attributes, opts)?);
    }
    let test = splits.pop().expect("three splits");
    let valid = splits.pop().expect("two splits");
    let train = splits.pop().expect("one split");

    let dataset = PairDataset {
        name: manifest.name,
        domain: manifest.domain,
        attributes,
        train,
        valid,
        test,
    };
    check_split_disjointness(&dataset)?;
    Ok(dataset)
}

fn load_split(
    path: &Path,
    split: &str,
    attributes: &[String],
    opts: LoadOptions,
) -> Result<Vec<LabeledPair>, DataError> {
    let file = fs::File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(io::BufReader::new(file));

    let headers = reader
        .headers()
        .map_err(|source| DataError::Csv {
            split: split.to_string(),
            source,
        })?
        .clone();

    // Header name -> column index, with duplicate detection.
    let mut index_of: HashMap<String, usize> = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        let name = normalize_attribute(h);
        if index_of.insert(name, i).is_some() {
            return Err(DataError::DuplicateColumn {
                split: split.to_string(),
                column: normalize_attribute(h),
            });
        }
    }

    let label_col = *index_of
        .get("label")
        .ok_or_else(|| DataError::MissingColumn {
            split: split.to_string(),
            column: "label".into(),
        })?;
    let mut left_cols = Vec::with_capacity(attributes.len());
    let mut right_cols = Vec::with_capacity(attributes.len());
    for attr in attributes {
        for (side, cols) in [("left", &mut left_cols), ("right", &mut right_cols)] {
            let column = format!("{side}_{attr}");
            match index_of.get(&column) {
                Some(&i) => cols.push(i),
                None => {
                    return Err(DataError::MissingColumn {
                        split: split.to_string(),
                        column,
                    })
                }
            }
        }
    }

    if opts.strict {
        let mut expected: HashSet<String> = HashSet::new();
        expected.insert("label".into());
        for attr in attributes {
            expected.insert(format!("left_{attr}"));
            expected.insert(format!("right_{attr}"));
        }
        for h in headers.iter() {
            let name = normalize_attribute(h);
            if !expected.contains(&name) {
                return Err(DataError::UnknownColumn {
                    split: split.to_string(),
                    column: name,
                });
            }
        }
    }

    let mut pairs = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let record = row.map_err(|source| DataError::Csv {
            split: split.to_string(),
            source,
        })?;
        if record.len() != headers.len() {
            return Err(DataError::RaggedRow {
                split: split.to_string(),
                row: row_no,
                expected: headers.len(),
                found: record.len(),
            });
        }
        let label_raw = &record[label_col];
        let label = match label_raw {
            "0" => MatchLabel::NonMatch,
            "1" => MatchLabel::Match,
            other => {
                return Err(DataError::BadLabel {
                    split: split.to_string(),
                    row: row_no,
                    value: other.to_string(),
                })
            }
        };
        let left = Record::new(
            left_cols
                .iter()
                .map(|&c| normalize_missing(&record[c]))
                .collect(),
        );
        let right = Record::new(
            right_cols
                .iter()
                .map(|&c| normalize_missing(&record[c]))
                .collect(),
        );
        pairs.push(LabeledPair::new(left, right, label));
    }
    Ok(pairs)
}

fn check_split_disjointness(dataset: &PairDataset) -> Result<(), DataError> {
    type Identity<'a> = (&'a [Option<String>], &'a [Option<String>], u8);
    let mut seen: HashMap<Identity<'_>, &'static str> = HashMap::new();
    for (split, pairs) in dataset.splits() {
        for (i, pair) in pairs.iter().enumerate() {
            let key = (
                pair.left.values.as_slice(),
                pair.right.values.as_slice(),
                pair.label.as_u8(),
            );
            match seen.get(&key) {
                Some(&first) if first != split => {
                    return Err(DataError::SplitOverlap {
                        first: first.to_string(),
                        second: split.to_string(),
                        row: i + 1,
                    });
                }
                // Duplicates inside one split are tolerated; they occur in
                // real blocking output.
                _ => {
                    seen.entry(key).or_insert(split);
                }
            }
        }
    }
    Ok(())
}

/// Write a dataset as a loadable directory: `manifest.json` plus the three
/// split CSVs. Missing values become empty cells; attribute names are written
/// in normalized form so the directory always loads back.
pub fn write_dataset(dataset: &PairDataset, dir: &Path) -> Result<(), DataError> {
    fs::create_dir_all(dir).map_err(|source| DataError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let attributes: Vec<String> = dataset
        .attributes
        .iter()
        .map(|a| normalize_attribute(a))
        .collect();
    let manifest = ManifestFile {
        name: dataset.name.clone(),
        attributes: attributes.clone(),
        domain: dataset.domain.clone(),
    };
    let manifest_path = dir.join("manifest.json");
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, body).map_err(|source| DataError::Io {
        path: manifest_path,
        source,
    })?;

    for (split, pairs) in dataset.splits() {
        let path = dir.join(format!("{split}.csv"));
        let file = fs::File::create(&path).map_err(|source| DataError::Io {
            path: path.clone(),
            source,
        })?;
        let mut writer = csv::Writer::from_writer(io::BufWriter::new(file));
        let mut header = Vec::with_capacity(attributes.len() * 2 + 1);
        for attr in &attributes {
            header.push(format!("left_{attr}"));
            header.push(format!("right_{attr}"));
        }
        header.push("label".into());
        writer
            .write_record(&header)
            .map_err(|source| DataError::Csv {
                split: split.to_string(),
                source,
            })?;
        for pair in pairs {
            let mut row: Vec<&str> = Vec::with_capacity(header.len());
            for i in 0..dataset.attributes.len() {
                row.push(pair.left.values[i].as_deref().unwrap_or(""));
                row.push(pair.right.values[i].as_deref().unwrap_or(""));
            }
            let label = if pair.label.is_match() { "1" } else { "0" };
            row.push(label);
            writer.write_record(&row).map_err(|source| DataError::Csv {
                split: split.to_string(),
                source,
            })?;
        }
        writer.flush().map_err(|source| DataError::Io {
            path: path.clone(),
            source,
        })?;
    }
    Ok(())
}

/// Count rows and class balance per split.
pub fn dataset_stats(dataset: &PairDataset) -> DatasetStats {
    let mut splits = BTreeMap::new();
    let mut total = 0;
    for (split, pairs) in dataset.splits() {
        let positives = pairs.iter().filter(|p| p.label.is_match()).count();
        splits.insert(
            split.to_string(),
            SplitStats {
                rows: pairs.len(),
                positives,
                negatives: pairs.len() - positives,
            },
        );
        total += pairs.len();
    }
    DatasetStats {
        name: dataset.name.clone(),
        domain: dataset.domain.clone(),
        attributes: dataset.attributes.clone(),
        splits,
        total_rows: total,
    }
}
