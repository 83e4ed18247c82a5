//! Delimited text IO for views and responses. Each file has a header row
//! whose first column holds subject ids; empty cells and `NA` are missing.

use std::fs;
use std::path::{Path, PathBuf};

use jafar_core::data::{MultiviewDataset, View};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DATASET_FILE: &str = "dataset.json";

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c == "NA"
}

/// A table of optional values with row ids and column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub ids: Vec<String>,
    pub columns: Vec<String>,
    /// Row-major, `None` for missing cells.
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows.len(), self.columns.len(), |i, j| self.rows[i][j].unwrap_or(f64::NAN))
    }
}

pub fn read_table(path: &Path, delimiter: u8) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.len() < 2 {
        return Err(Error::parse(path, "expected an id column and at least one value column"));
    }
    let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let (mut ids, mut rows) = (Vec::new(), Vec::new());
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        ids.push(rec[0].to_string());
        let mut row = Vec::with_capacity(columns.len());
        for (j, cell) in rec.iter().skip(1).enumerate() {
            if is_missing(cell) {
                row.push(None);
                continue;
            }
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::parse(path, format!("row {}, column `{}`: cannot parse `{cell}`", line + 2, columns[j]))
            })?;
            row.push(Some(v));
        }
        rows.push(row);
    }
    Ok(Table { ids, columns, rows })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::parse(path, format!("{other:?}")),
    }
}

fn fmt_cell(v: f64) -> String {
    if v.is_nan() {
        "NA".to_string()
    } else {
        format!("{v}")
    }
}

pub fn write_table(path: &Path, id_header: &str, ids: &[String], columns: &[String], values: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let header: Vec<&str> = std::iter::once(id_header).chain(columns.iter().map(String::as_str)).collect();
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (i, id) in ids.iter().enumerate() {
        let row: Vec<String> =
            std::iter::once(id.clone()).chain((0..values.ncols()).map(|j| fmt_cell(values[(i, j)]))).collect();
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Lists the files that make up a dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetLayout {
    /// View files in order, relative to the directory.
    pub views: Vec<String>,
    pub response: Option<String>,
}

impl DatasetLayout {
    /// Reads `dataset.json`, or falls back to every `*.csv` except `response.csv`
    /// in name order.
    pub fn discover(dir: &Path) -> Result<Self> {
        let manifest = dir.join(DATASET_FILE);
        if manifest.exists() {
            let text = fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
            return serde_json::from_str(&text).map_err(|e| Error::parse(&manifest, e));
        }
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut views = Vec::new();
        let mut response = None;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name == "response.csv" {
                response = Some(name);
            } else if name.ends_with(".csv") {
                views.push(name);
            }
        }
        views.sort();
        if views.is_empty() {
            return Err(Error::parse(dir, "no view files found"));
        }
        Ok(Self { views, response })
    }
}

fn view_name(file: &str) -> String {
    file.strip_suffix(".csv").unwrap_or(file).to_string()
}

pub fn read_dataset(dir: &Path, delimiter: u8) -> Result<MultiviewDataset> {
    if !dir.is_dir() {
        return Err(Error::io(dir, std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found")));
    }
    let layout = DatasetLayout::discover(dir)?;
    let mut ids: Option<(PathBuf, Vec<String>)> = None;
    let mut views = Vec::with_capacity(layout.views.len());
    for file in &layout.views {
        let path = dir.join(file);
        let t = read_table(&path, delimiter)?;
        match &ids {
            Some((first, known)) if *known != t.ids => {
                return Err(Error::parse(&path, format!("subject ids differ from {}", first.display())))
            }
            None => ids = Some((path.clone(), t.ids.clone())),
            _ => {}
        }
        let view = View::from_values(view_name(file), t.to_matrix(), t.columns.clone())?;
        views.push(view);
    }
    let (_, ids) = ids.expect("at least one view");
    let response = match &layout.response {
        Some(file) => {
            let path = dir.join(file);
            let t = read_table(&path, delimiter)?;
            if t.ids != ids {
                return Err(Error::parse(&path, "subject ids differ from the views"));
            }
            Some(DVector::from_iterator(t.rows.len(), t.rows.iter().map(|r| r[0].unwrap_or(f64::NAN))))
        }
        None => None,
    };
    Ok(MultiviewDataset::new(views, response, Some(ids))?)
}

pub fn write_dataset(dir: &Path, data: &MultiviewDataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut layout = DatasetLayout { views: Vec::new(), response: None };
    for v in &data.views {
        let file = format!("{}.csv", v.name);
        write_table(&dir.join(&file), "id", &data.subject_ids, &v.feature_names, &v.values)?;
        layout.views.push(file);
    }
    if let Some(y) = &data.response {
        let file = "response.csv".to_string();
        let m = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
        write_table(&dir.join(&file), "id", &data.subject_ids, &["y".to_string()], &m)?;
        layout.response = Some(file);
    }
    write_json(&dir.join(DATASET_FILE), &layout)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::parse(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
}
