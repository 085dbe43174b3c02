//! Session data, region averaging, windowing and window labels.

use std::ops::Range;

use ndarray::{s, Array2, ArrayView2};

use crate::{Error, Result};

/// Scan counts per task of the reference session layout, in acquisition order.
pub const REFERENCE_TASKS: [(&str, usize); 7] = [
    ("emotion", 176),
    ("gambling", 253),
    ("language", 316),
    ("motor", 284),
    ("relational", 232),
    ("social", 274),
    ("wm", 405),
];

/// Default window length in scans.
pub const DEFAULT_WINDOW_LEN: usize = 30;

/// A contiguous block of scans belonging to one task. `scans` is 0-based and
/// half-open.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSpan {
    pub name: String,
    pub scans: Range<usize>,
}

impl TaskSpan {
    pub fn new(name: impl Into<String>, scans: Range<usize>) -> Self {
        Self {
            name: name.into(),
            scans,
        }
    }

    pub fn len(&self) -> usize {
        self.scans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scans.is_empty()
    }
}

/// Lays out consecutive task blocks starting at scan 0.
pub fn layout_tasks<S: AsRef<str>>(blocks: &[(S, usize)]) -> Vec<TaskSpan> {
    let mut start = 0;
    blocks
        .iter()
        .map(|(name, count)| {
            let span = TaskSpan::new(name.as_ref(), start..start + count);
            start += count;
            span
        })
        .collect()
}

/// Voxel-level signals of one region.
#[derive(Debug, Clone)]
pub struct RegionVoxels {
    pub id: String,
    pub voxels: Vec<Vec<f64>>,
}

/// Voxel signals grouped by region, prior to averaging.
#[derive(Debug, Clone)]
pub struct ScanSession {
    pub regions: Vec<RegionVoxels>,
    pub scan_count: usize,
    /// Repetition time in seconds; informational only.
    pub tr_seconds: f64,
    pub tasks: Vec<TaskSpan>,
}

/// `R × T` matrix of region-representative signals with its task layout.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionTimeSeries {
    data: Array2<f64>,
    region_ids: Vec<String>,
    tasks: Vec<TaskSpan>,
}

impl RegionTimeSeries {
    /// Validates `R ≥ 2`, one id per row, and that the task spans tile
    /// `[0, T)` in order.
    pub fn new(data: Array2<f64>, region_ids: Vec<String>, tasks: Vec<TaskSpan>) -> Result<Self> {
        let (regions, scans) = data.dim();
        if regions < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 regions, got {regions}"
            )));
        }
        if region_ids.len() != regions {
            return Err(Error::LengthMismatch {
                context: "region ids".into(),
                expected: regions,
                found: region_ids.len(),
            });
        }
        validate_task_cover(&tasks, scans)?;
        Ok(Self {
            data,
            region_ids,
            tasks,
        })
    }

    /// Default region labels `region_1 … region_R`.
    pub fn default_ids(regions: usize) -> Vec<String> {
        (1..=regions).map(|r| format!("region_{r}")).collect()
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn region_ids(&self) -> &[String] {
        &self.region_ids
    }

    pub fn tasks(&self) -> &[TaskSpan] {
        &self.tasks
    }

    pub fn regions(&self) -> usize {
        self.data.nrows()
    }

    pub fn scans(&self) -> usize {
        self.data.ncols()
    }

    pub fn windows(&self, window_len: usize) -> Result<Vec<Window>> {
        partition_windows(self.data.view(), window_len)
    }

    /// Majority task label of every window of length `window_len`.
    pub fn window_labels(&self, window_len: usize) -> Result<Vec<String>> {
        window_ranges(self.scans(), window_len)?
            .into_iter()
            .map(|range| window_majority_label(&range, &self.tasks).map(str::to_owned))
            .collect()
    }
}

fn validate_task_cover(tasks: &[TaskSpan], scans: usize) -> Result<()> {
    let mut next = 0;
    for task in tasks {
        if task.scans.start != next || task.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "task spans must be non-empty and contiguous; {:?} starts at scan {} (expected {next})",
                task.name, task.scans.start
            )));
        }
        next = task.scans.end;
    }
    if next != scans {
        return Err(Error::LengthMismatch {
            context: "task spans".into(),
            expected: scans,
            found: next,
        });
    }
    Ok(())
}

/// One non-overlapping block of scans.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// 0-based position in scan order.
    pub index: usize,
    pub scans: Range<usize>,
    /// `R × w` slice of the source matrix.
    pub data: Array2<f64>,
}

/// Averages each region's voxel series scan by scan.
pub fn average_region_signals(session: &ScanSession) -> Result<RegionTimeSeries> {
    let scans = session.scan_count;
    if session.regions.is_empty() || scans == 0 {
        return Err(Error::InvalidArgument("session has no regions or no scans".into()));
    }
    let mut data = Array2::<f64>::zeros((session.regions.len(), scans));
    for (r, region) in session.regions.iter().enumerate() {
        if region.voxels.is_empty() {
            return Err(Error::EmptyRegion {
                region: region.id.clone(),
            });
        }
        for voxel in &region.voxels {
            if voxel.len() != scans {
                return Err(Error::LengthMismatch {
                    context: format!("voxel series of region {:?}", region.id),
                    expected: scans,
                    found: voxel.len(),
                });
            }
        }
        let n = region.voxels.len() as f64;
        for t in 0..scans {
            let sum: f64 = region.voxels.iter().map(|v| v[t]).sum();
            data[[r, t]] = sum / n;
        }
    }
    let ids = session.regions.iter().map(|r| r.id.clone()).collect();
    RegionTimeSeries::new(data, ids, session.tasks.clone())
}

/// Scan ranges of the `⌊T / w⌋` windows; trailing scans are dropped.
pub fn window_ranges(scans: usize, window_len: usize) -> Result<Vec<Range<usize>>> {
    if window_len == 0 {
        return Err(Error::InvalidArgument("window length must be positive".into()));
    }
    if window_len > scans {
        return Err(Error::WindowTooLong { window_len, scans });
    }
    Ok((0..scans / window_len)
        .map(|i| i * window_len..(i + 1) * window_len)
        .collect())
}

/// Cuts an `R × T` matrix into consecutive non-overlapping windows.
pub fn partition_windows(data: ArrayView2<f64>, window_len: usize) -> Result<Vec<Window>> {
    Ok(window_ranges(data.ncols(), window_len)?
        .into_iter()
        .enumerate()
        .map(|(index, scans)| Window {
            index,
            data: data.slice(s![.., scans.clone()]).to_owned(),
            scans,
        })
        .collect())
}

/// The task covering most scans of `scans`; ties go to the task with the
/// earlier onset.
pub fn window_majority_label<'a>(scans: &Range<usize>, tasks: &'a [TaskSpan]) -> Result<&'a str> {
    let mut covered = 0;
    let mut best: Option<(&TaskSpan, usize)> = None;
    for task in tasks {
        let lo = task.scans.start.max(scans.start);
        let hi = task.scans.end.min(scans.end);
        let overlap = hi.saturating_sub(lo);
        covered += overlap;
        if overlap == 0 {
            continue;
        }
        best = match best {
            Some((b, n)) if n > overlap || (n == overlap && b.scans.start < task.scans.start) => {
                Some((b, n))
            }
            _ => Some((task, overlap)),
        };
    }
    if covered < scans.len() {
        let scan = (scans.start..scans.end)
            .find(|t| !tasks.iter().any(|task| task.scans.contains(t)))
            .unwrap_or(scans.start);
        return Err(Error::UncoveredScan { scan });
    }
    best.map(|(t, _)| t.name.as_str())
        .ok_or(Error::UncoveredScan { scan: scans.start })
}
