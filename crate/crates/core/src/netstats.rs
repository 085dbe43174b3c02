//! Cross-subject edge statistics, sparsity pruning and edge-list export.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::io::fmt_f64;
use crate::{Error, Result};

pub const DEFAULT_SPARSITY: f64 = 0.01;

/// Precision of one edge across subjects.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgePrecision {
    Finite(f64),
    /// Zero variance across subjects.
    Infinite,
}

impl EdgePrecision {
    pub fn is_infinite(self) -> bool {
        matches!(self, EdgePrecision::Infinite)
    }

    pub fn flag(self) -> &'static str {
        match self {
            EdgePrecision::Finite(_) => "finite",
            EdgePrecision::Infinite => "infinite",
        }
    }
}

/// Per-edge mean and precision (inverse sample variance) over subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionNetwork {
    pub mean: Array2<f64>,
    pub precision: Array2<EdgePrecision>,
    pub subject_count: usize,
}

impl PrecisionNetwork {
    /// Keeps the `⌈f·R(R−1)⌉` most precise off-diagonal edges. Infinite
    /// precision ranks first; edges whose mean is exactly zero (absent in every
    /// subject) are never kept. Returns the kept mean weights.
    pub fn prune_by_precision(&self, target_fraction: f64) -> Result<Array2<f64>> {
        let r = self.mean.nrows();
        let keep = surviving_edge_count(r, target_fraction)?;
        let mut edges: Vec<(usize, usize)> = off_diagonal(r)
            .filter(|&(i, j)| self.mean[[i, j]] != 0.0)
            .collect();
        let key = |p: EdgePrecision| match p {
            EdgePrecision::Infinite => f64::INFINITY,
            EdgePrecision::Finite(v) => v,
        };
        edges.sort_by(|a, b| key(self.precision[*b]).total_cmp(&key(self.precision[*a])).then(a.cmp(b)));
        let mut out = Array2::zeros((r, r));
        for &(i, j) in edges.iter().take(keep) {
            out[[i, j]] = self.mean[[i, j]];
        }
        Ok(out)
    }

    /// Writes `source_region,target_region,precision,flag` for the edges that
    /// are non-zero in `support`, most precise first. Infinite precisions
    /// leave the value column empty.
    pub fn export(&self, support: ArrayView2<f64>, region_ids: &[String], path: &Path) -> Result<()> {
        let r = self.mean.nrows();
        check_ids(region_ids, r)?;
        let key = |p: EdgePrecision| match p {
            EdgePrecision::Infinite => f64::INFINITY,
            EdgePrecision::Finite(v) => v,
        };
        let mut edges: Vec<(usize, usize)> = off_diagonal(r).filter(|&(i, j)| support[[i, j]] != 0.0).collect();
        edges.sort_by(|a, b| key(self.precision[*b]).total_cmp(&key(self.precision[*a])).then(a.cmp(b)));
        let mut w = create(path)?;
        let mut body = String::from("source_region,target_region,precision,flag\n");
        for (i, j) in edges {
            let p = self.precision[[i, j]];
            let value = match p {
                EdgePrecision::Finite(v) => fmt_f64(v),
                EdgePrecision::Infinite => String::new(),
            };
            body.push_str(&format!("{},{},{},{}\n", region_ids[i], region_ids[j], value, p.flag()));
        }
        w.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

fn off_diagonal(r: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..r).flat_map(move |i| (0..r).filter(move |&j| j != i).map(move |j| (i, j)))
}

/// Sample variance (denominator `n − 1`) of every edge, inverted.
pub fn edge_precision(networks: &[ArrayView2<f64>]) -> Result<PrecisionNetwork> {
    if networks.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "precision needs at least 2 networks, got {}",
            networks.len()
        )));
    }
    let dim = networks[0].dim();
    if let Some(bad) = networks.iter().find(|n| n.dim() != dim) {
        return Err(Error::Shape(format!("networks {:?} and {:?} differ", dim, bad.dim())));
    }
    let n = networks.len() as f64;
    let mut mean = Array2::<f64>::zeros(dim);
    for net in networks {
        mean += net;
    }
    mean /= n;
    // Welford over subjects keeps the variance exact for identical inputs
    let mut m = Array2::<f64>::zeros(dim);
    let mut m2 = Array2::<f64>::zeros(dim);
    for (k, net) in networks.iter().enumerate() {
        let count = (k + 1) as f64;
        ndarray::Zip::from(&mut m).and(&mut m2).and(net).for_each(|m, m2, &x| {
            let delta = x - *m;
            *m += delta / count;
            *m2 += delta * (x - *m);
        });
    }
    let precision = m2.mapv(|s| {
        let var = s / (n - 1.0);
        if var > 0.0 {
            EdgePrecision::Finite(1.0 / var)
        } else {
            EdgePrecision::Infinite
        }
    });
    Ok(PrecisionNetwork {
        mean,
        precision,
        subject_count: networks.len(),
    })
}

/// `⌈f · R(R−1)⌉`, robust to representation error in `f · R(R−1)`.
pub fn surviving_edge_count(regions: usize, target_fraction: f64) -> Result<usize> {
    if !(target_fraction > 0.0 && target_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "target fraction {target_fraction} not in (0, 1]"
        )));
    }
    let total = regions * regions.saturating_sub(1);
    let x = target_fraction * total as f64;
    let nearest = x.round();
    let count = if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        x.ceil()
    };
    Ok((count as usize).min(total))
}

/// Keeps the `⌈f·R(R−1)⌉` off-diagonal entries of largest magnitude; ties at
/// the threshold resolve in (row, column) order.
pub fn prune_to_sparsity(network: ArrayView2<f64>, target_fraction: f64) -> Result<Array2<f64>> {
    let r = network.nrows();
    if r != network.ncols() {
        return Err(Error::Shape(format!("network is {:?}", network.dim())));
    }
    let keep = surviving_edge_count(r, target_fraction)?;
    let mut edges: Vec<(usize, usize)> = off_diagonal(r).collect();
    edges.sort_by(|a, b| network[*b].abs().total_cmp(&network[*a].abs()).then(a.cmp(b)));
    let mut out = Array2::zeros((r, r));
    for &(i, j) in edges.iter().take(keep) {
        out[[i, j]] = network[[i, j]];
    }
    Ok(out)
}

fn check_ids(region_ids: &[String], r: usize) -> Result<()> {
    if region_ids.len() != r {
        return Err(Error::LengthMismatch {
            context: "region ids".into(),
            expected: r,
            found: region_ids.len(),
        });
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Writes the non-zero off-diagonal edges as
/// `source_region,target_region,weight`, largest magnitude first.
pub fn export_edge_list(network: ArrayView2<f64>, region_ids: &[String], path: &Path) -> Result<()> {
    let r = network.nrows();
    check_ids(region_ids, r)?;
    let mut edges: Vec<(usize, usize)> = off_diagonal(r).filter(|&(i, j)| network[[i, j]] != 0.0).collect();
    edges.sort_by(|a, b| network[*b].abs().total_cmp(&network[*a].abs()).then(a.cmp(b)));
    let mut body = String::from("source_region,target_region,weight\n");
    for (i, j) in edges {
        body.push_str(&format!("{},{},{}\n", region_ids[i], region_ids[j], fmt_f64(network[[i, j]])));
    }
    create(path)?.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Reads an edge list written by [`export_edge_list`] back into a matrix.
pub fn import_edge_list(path: &Path, region_ids: &[String]) -> Result<Array2<f64>> {
    let r = region_ids.len();
    let index = |name: &str| {
        region_ids
            .iter()
            .position(|id| id == name)
            .ok_or_else(|| Error::format("edge list", path, format!("unknown region {name:?}")))
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut out = Array2::zeros((r, r));
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        if record.len() < 3 {
            return Err(Error::format("edge list", path, "expected 3 columns"));
        }
        let i = index(&record[0])?;
        let j = index(&record[1])?;
        out[[i, j]] = record[2]
            .parse()
            .map_err(|_| Error::format("edge list", path, format!("bad weight {:?}", &record[2])))?;
    }
    Ok(out)
}
