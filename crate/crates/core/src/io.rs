//! On-disk formats: headed matrix CSVs and the region-series manifest.
//!
//! The region CSV has one column per region (`region_1 … region_R`) and one row
//! per scan. Its manifest is a list of `key = value` lines:
//!
//! ```text
//! regions = 20
//! scans = 1940
//! tr_seconds = 0.72
//! task = emotion 1-176
//! task = gambling 177-429
//! ```
//!
//! Task ranges are 1-based and inclusive.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::signal::{RegionTimeSeries, TaskSpan};
use crate::{Error, Result};

/// Shortest round-trip representation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

/// Writes `matrix` with one CSV row per matrix row.
pub fn write_matrix_csv(path: &Path, header: &[String], matrix: ArrayView2<f64>) -> Result<()> {
    if header.len() != matrix.ncols() {
        return Err(Error::LengthMismatch {
            context: format!("header of {}", path.display()),
            expected: matrix.ncols(),
            found: header.len(),
        });
    }
    let mut body = header.join(",");
    body.push('\n');
    for row in matrix.rows() {
        let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        body.push_str(&cells.join(","));
        body.push('\n');
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn read_matrix_csv(path: &Path) -> Result<(Vec<String>, Array2<f64>)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::csv(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut values = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        for cell in record.iter() {
            values.push(
                cell.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::format("matrix", path, format!("row {}: bad number {cell:?}", rows + 1)))?,
            );
        }
        rows += 1;
    }
    let data = Array2::from_shape_vec((rows, header.len()), values)
        .map_err(|e| Error::format("matrix", path, e.to_string()))?;
    Ok((header, data))
}

/// Writes the region CSV (scans as rows) and its manifest.
pub fn write_region_series(series: &RegionTimeSeries, tr_seconds: f64, csv_path: &Path, manifest_path: &Path) -> Result<()> {
    write_matrix_csv(csv_path, series.region_ids(), series.data().t())?;
    let mut manifest = format!(
        "regions = {}\nscans = {}\ntr_seconds = {}\n",
        series.regions(),
        series.scans(),
        tr_seconds
    );
    for task in series.tasks() {
        manifest.push_str(&format!("task = {} {}-{}\n", task.name, task.scans.start + 1, task.scans.end));
    }
    fs::write(manifest_path, manifest).map_err(|e| Error::io(manifest_path, e))
}

/// Session layout read from a manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesManifest {
    pub regions: usize,
    pub scans: usize,
    pub tr_seconds: f64,
    pub tasks: Vec<TaskSpan>,
}

pub fn read_series_manifest(path: &Path) -> Result<SeriesManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |detail: String| Error::format("series manifest", path, detail);
    let mut regions = None;
    let mut scans = None;
    let mut tr_seconds = 0.0;
    let mut tasks = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| bad(format!("line {}: expected key = value", n + 1)))?;
        let number = |v: &str| v.parse::<usize>().map_err(|_| bad(format!("line {}: bad {key} {v:?}", n + 1)));
        match key {
            "regions" => regions = Some(number(value)?),
            "scans" => scans = Some(number(value)?),
            "tr_seconds" => {
                tr_seconds = value.parse().map_err(|_| bad(format!("line {}: bad tr_seconds", n + 1)))?
            }
            "task" => {
                let (name, range) = value
                    .rsplit_once(' ')
                    .ok_or_else(|| bad(format!("line {}: expected `task = name start-end`", n + 1)))?;
                let (start, end) = range
                    .split_once('-')
                    .ok_or_else(|| bad(format!("line {}: bad range {range:?}", n + 1)))?;
                let (start, end) = (number(start)?, number(end)?);
                if start == 0 || end < start {
                    return Err(bad(format!("line {}: empty or 0-based range {range:?}", n + 1)));
                }
                tasks.push(TaskSpan::new(name.trim(), start - 1..end));
            }
            other => return Err(bad(format!("line {}: unknown key {other:?}", n + 1))),
        }
    }
    Ok(SeriesManifest {
        regions: regions.ok_or_else(|| bad("missing regions".into()))?,
        scans: scans.ok_or_else(|| bad("missing scans".into()))?,
        tr_seconds,
        tasks,
    })
}

/// Reads a region CSV and manifest pair, checking that they agree.
pub fn read_region_series(csv_path: &Path, manifest_path: &Path) -> Result<(RegionTimeSeries, f64)> {
    let manifest = read_series_manifest(manifest_path)?;
    let (ids, data) = read_matrix_csv(csv_path)?;
    if data.ncols() != manifest.regions {
        return Err(Error::LengthMismatch {
            context: format!("region columns of {}", csv_path.display()),
            expected: manifest.regions,
            found: data.ncols(),
        });
    }
    if data.nrows() != manifest.scans {
        return Err(Error::LengthMismatch {
            context: format!("scan rows of {}", csv_path.display()),
            expected: manifest.scans,
            found: data.nrows(),
        });
    }
    let series = RegionTimeSeries::new(data.t().to_owned(), ids, manifest.tasks)?;
    Ok((series, manifest.tr_seconds))
}
