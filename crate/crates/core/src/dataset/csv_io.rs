use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use super::Dataset;
use crate::error::{KknnError, Result};

/// Selects the label column of a CSV file.
#[derive(Clone, Debug, PartialEq, Eq)]
#[derive(Default)]
pub enum LabelColumn {
    /// Header name.
    Name(String),
    /// 0-based column index.
    Index(usize),
    /// Right-most column.
    #[default]
    Last,
}


impl FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    /// Integers select by index; `last` (case-insensitive) selects the
    /// right-most column; anything else is a header name.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("last") {
            Ok(LabelColumn::Last)
        } else if let Ok(i) = s.parse() {
            Ok(LabelColumn::Index(i))
        } else {
            Ok(LabelColumn::Name(s.to_string()))
        }
    }
}

impl fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelColumn::Name(s) => write!(f, "{s}"),
            LabelColumn::Index(i) => write!(f, "{i}"),
            LabelColumn::Last => write!(f, "last"),
        }
    }
}

/// Reads a comma-separated file with numeric feature columns and one
/// categorical label column.
pub fn load_csv(path: impl AsRef<Path>, label: &LabelColumn, has_header: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| KknnError::io(path, e))?;
    read_csv(file, label, has_header)
}

pub(crate) fn read_csv<R: Read>(reader: R, label: &LabelColumn, has_header: bool) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut header: Option<Vec<String>> = if has_header {
        Some(rdr.headers()?.iter().map(str::to_string).collect())
    } else {
        None
    };

    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        records.push(rec);
    }
    let width = records
        .first()
        .map(|r| r.len())
        .ok_or_else(|| KknnError::Empty("no data rows".into()))?;
    let names = header
        .take()
        .filter(|h| h.len() == width)
        .unwrap_or_else(|| (0..width).map(|j| j.to_string()).collect());

    let label_idx = match label {
        LabelColumn::Last => width - 1,
        LabelColumn::Index(i) if *i < width => *i,
        LabelColumn::Name(s) => names
            .iter()
            .position(|n| n == s)
            .ok_or_else(|| KknnError::MissingLabelColumn(s.clone()))?,
        other => return Err(KknnError::MissingLabelColumn(other.to_string())),
    };
    if width < 2 {
        return Err(KknnError::InvalidDataset("need a label and at least one feature".into()));
    }
    let feature_cols: Vec<usize> = (0..width).filter(|&j| j != label_idx).collect();

    let mut features = Vec::with_capacity(records.len() * feature_cols.len());
    let mut labels = Vec::with_capacity(records.len());
    let mut class_names: Vec<String> = Vec::new();
    let mut class_ids: HashMap<String, usize> = HashMap::new();

    for (r, rec) in records.iter().enumerate() {
        let row = r + 1;
        if rec.len() != width {
            return Err(KknnError::InvalidDataset(format!(
                "row {row} has {} fields, expected {width}",
                rec.len()
            )));
        }
        for &j in &feature_cols {
            features.push(parse_cell(&rec[j], row, &names[j])?);
        }
        let cat = &rec[label_idx];
        let id = *class_ids.entry(cat.to_string()).or_insert_with(|| {
            class_names.push(cat.to_string());
            class_names.len() - 1
        });
        labels.push(id);
    }

    let feature_names = feature_cols.iter().map(|&j| names[j].clone()).collect();
    Dataset::with_names(features, feature_cols.len(), labels, class_names, feature_names)
}

/// Feature rows read for prediction; an optional label column is split off
/// and kept verbatim.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryTable {
    pub features: Vec<f64>,
    pub n_features: usize,
    pub feature_names: Vec<String>,
    pub labels: Option<Vec<String>>,
}

impl QueryTable {
    pub fn len(&self) -> usize {
        self.features.len() / self.n_features.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Reads query rows. Every column is a feature unless `label` names one to
/// set aside.
pub fn load_queries(
    path: impl AsRef<Path>,
    label: Option<&LabelColumn>,
    has_header: bool,
) -> Result<QueryTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| KknnError::io(path, e))?;
    read_queries(file, label, has_header)
}

pub(crate) fn read_queries<R: Read>(
    reader: R,
    label: Option<&LabelColumn>,
    has_header: bool,
) -> Result<QueryTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Option<Vec<String>> = if has_header {
        Some(rdr.headers()?.iter().map(str::to_string).collect())
    } else {
        None
    };
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if !rec.iter().all(str::is_empty) {
            records.push(rec);
        }
    }
    let width = records
        .first()
        .map(|r| r.len())
        .ok_or_else(|| KknnError::Empty("no data rows".into()))?;
    let names = header
        .filter(|h| h.len() == width)
        .unwrap_or_else(|| (0..width).map(|j| j.to_string()).collect());
    let label_idx = match label {
        None => None,
        Some(LabelColumn::Last) => Some(width - 1),
        Some(LabelColumn::Index(i)) if *i < width => Some(*i),
        Some(LabelColumn::Name(s)) => Some(
            names
                .iter()
                .position(|n| n == s)
                .ok_or_else(|| KknnError::MissingLabelColumn(s.clone()))?,
        ),
        Some(other) => return Err(KknnError::MissingLabelColumn(other.to_string())),
    };
    let feature_cols: Vec<usize> = (0..width).filter(|&j| Some(j) != label_idx).collect();
    if feature_cols.is_empty() {
        return Err(KknnError::InvalidDataset("no feature columns".into()));
    }
    let mut features = Vec::with_capacity(records.len() * feature_cols.len());
    let mut labels = label_idx.map(|_| Vec::with_capacity(records.len()));
    for (r, rec) in records.iter().enumerate() {
        let row = r + 1;
        if rec.len() != width {
            return Err(KknnError::InvalidDataset(format!(
                "row {row} has {} fields, expected {width}",
                rec.len()
            )));
        }
        for &j in &feature_cols {
            features.push(parse_cell(&rec[j], row, &names[j])?);
        }
        if let (Some(l), Some(j)) = (labels.as_mut(), label_idx) {
            l.push(rec[j].to_string());
        }
    }
    Ok(QueryTable {
        features,
        n_features: feature_cols.len(),
        feature_names: feature_cols.iter().map(|&j| names[j].clone()).collect(),
        labels,
    })
}

fn parse_cell(cell: &str, row: usize, column: &str) -> Result<f64> {
    let v: f64 = cell.parse().map_err(|_| KknnError::NonNumeric {
        row,
        column: column.to_string(),
        value: cell.to_string(),
    })?;
    if !v.is_finite() {
        return Err(KknnError::NonFinite {
            row,
            column: column.to_string(),
        });
    }
    Ok(v)
}

/// Writes `d` as CSV with a header row; the label column is last and holds
/// the original class names.
pub fn write_csv<W: Write>(d: &Dataset, label_name: &str, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = d.feature_names().iter().map(String::as_str).collect();
    header.push(label_name);
    w.write_record(&header)?;
    for i in 0..d.n() {
        let mut rec: Vec<String> = d.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(d.class_names()[d.label(i)].clone());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| KknnError::io("<csv writer>", e))?;
    Ok(())
}
