//! CSV ingestion and output.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::{GroupInput, GroupedDesign};
use crate::error::{Error, Result};

/// Column roles for loading a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// CSV file, relative to the config file.
    #[serde(default)]
    pub path: Option<String>,
    pub outcome: String,
    #[serde(default)]
    pub fixed_effects: Vec<String>,
    #[serde(default = "default_true")]
    pub intercept: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    pub name: String,
    pub columns: Vec<String>,
}

/// A loaded and validated dataset.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub design: GroupedDesign,
    pub y: DVector<f64>,
    /// Rows removed for missing values.
    pub dropped: usize,
}

/// Header plus numeric cells; `None` marks a missing value.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl RawTable {
    fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

fn parse_cell(cell: &str, column: &str, row: usize) -> Result<Option<f64>> {
    let cell = cell.trim();
    if cell.is_empty() || cell == "NA" {
        return Ok(None);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(Error::Data(format!(
            "non-numeric cell '{cell}' in column '{column}' (data row {row})"
        ))),
    }
}

/// Parses a headered CSV. Non-numeric cells are reported only for the
/// columns in `numeric`.
pub fn read_table<R: Read>(reader: R, numeric: &HashSet<String>) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut seen = HashSet::new();
    for h in &header {
        if !seen.insert(h) {
            return Err(Error::Data(format!("duplicate column '{h}' in header")));
        }
    }
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = header
            .iter()
            .zip(record.iter())
            .map(|(h, cell)| {
                if numeric.contains(h) {
                    parse_cell(cell, h, i + 1)
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(RawTable { header, rows })
}

/// Builds a design from a parsed table, dropping rows with a missing value
/// in any used column.
pub fn design_from_table(table: &RawTable, data: &DataConfig, groups: &[GroupConfig]) -> Result<LoadedData> {
    if groups.is_empty() {
        return Err(Error::Config("at least one [[groups]] entry is required".into()));
    }
    let lookup = |name: &str, role: &str| {
        table
            .column(name)
            .ok_or_else(|| Error::Config(format!("{role} column '{name}' is not in the CSV header")))
    };
    let y_col = lookup(&data.outcome, "outcome")?;
    let x_cols = data
        .fixed_effects
        .iter()
        .map(|c| lookup(c, "fixed-effect"))
        .collect::<Result<Vec<_>>>()?;
    let mut owner: HashMap<&str, &str> = HashMap::new();
    let mut group_cols = Vec::with_capacity(groups.len());
    for g in groups {
        if g.columns.is_empty() {
            return Err(Error::Config(format!("group '{}' has no columns", g.name)));
        }
        for c in &g.columns {
            if let Some(prev) = owner.insert(c, &g.name) {
                return Err(Error::Config(format!(
                    "column '{c}' is assigned to groups '{prev}' and '{}'",
                    g.name
                )));
            }
            if *c == data.outcome || data.fixed_effects.contains(c) {
                return Err(Error::Config(format!(
                    "column '{c}' of group '{}' is also the outcome or a fixed effect",
                    g.name
                )));
            }
        }
        group_cols.push(
            g.columns
                .iter()
                .map(|c| lookup(c, &format!("group '{}'", g.name)))
                .collect::<Result<Vec<_>>>()?,
        );
    }

    let mut used: Vec<usize> = vec![y_col];
    used.extend(&x_cols);
    used.extend(group_cols.iter().flatten());
    let keep: Vec<&Vec<Option<f64>>> = table
        .rows
        .iter()
        .filter(|r| used.iter().all(|&c| r.get(c).copied().flatten().is_some()))
        .collect();
    let dropped = table.rows.len() - keep.len();
    if dropped > 0 {
        log::info!("dropped {dropped} rows with missing values");
    }
    let n = keep.len();
    if n < 2 {
        return Err(Error::Data(format!("only {n} complete rows")));
    }
    let cell = |r: &Vec<Option<f64>>, c: usize| r[c].expect("complete row");

    let y = DVector::from_iterator(n, keep.iter().map(|r| cell(r, y_col)));
    let mut x_names = Vec::new();
    let mut x_columns: Vec<Vec<f64>> = Vec::new();
    if data.intercept {
        x_names.push("intercept".to_string());
        x_columns.push(vec![1.0; n]);
    }
    for (name, &c) in data.fixed_effects.iter().zip(&x_cols) {
        x_names.push(name.clone());
        x_columns.push(keep.iter().map(|r| cell(r, c)).collect());
    }
    let x = DMatrix::from_fn(n, x_columns.len(), |i, j| x_columns[j][i]);
    let inputs: Vec<GroupInput> = groups
        .iter()
        .zip(&group_cols)
        .map(|(g, cols)| {
            let m = DMatrix::from_fn(n, cols.len(), |i, j| cell(keep[i], cols[j]));
            (g.name.clone(), g.columns.clone(), m)
        })
        .collect();
    let design = GroupedDesign::new(x, x_names, inputs)?;
    Ok(LoadedData { design, y, dropped })
}

fn numeric_columns(data: &DataConfig, groups: &[GroupConfig]) -> HashSet<String> {
    let mut s: HashSet<String> = data.fixed_effects.iter().cloned().collect();
    s.insert(data.outcome.clone());
    for g in groups {
        s.extend(g.columns.iter().cloned());
    }
    s
}

/// Reads `path` and builds the design described by `data` and `groups`.
pub fn load_dataset(path: &Path, data: &DataConfig, groups: &[GroupConfig]) -> Result<LoadedData> {
    let file = fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let table = read_table(file, &numeric_columns(data, groups))?;
    design_from_table(&table, data, groups)
}

/// Formats with 17 significant digits, enough to round-trip any `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV text for named numeric columns of equal length.
pub fn columns_to_csv(columns: &[(&str, &[f64])]) -> Result<String> {
    let n = columns.first().map(|c| c.1.len()).unwrap_or(0);
    if columns.iter().any(|c| c.1.len() != n) {
        return Err(Error::DimensionMismatch("columns differ in length".into()));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(columns.iter().map(|c| c.0))?;
    for i in 0..n {
        w.write_record(columns.iter().map(|c| format_f64(c.1[i])))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes `contents` to a temporary sibling of `path`, then renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("output path {} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, contents)?;
    if let Err(e) = fs::rename(&tmp, path) {
        let _ = fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(())
}
