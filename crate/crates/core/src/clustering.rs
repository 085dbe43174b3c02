//! Correlation distances, agglomerative clustering and medoids.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};

use crate::mesh::pearson;
use crate::{Error, Result};

pub const DEFAULT_CLUSTERS: usize = 7;

/// Symmetric `W × W` matrix of `1 − corr²` between feature rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub data: Array2<f64>,
    /// Rows with zero variance; their correlations were taken as 0.
    pub constant_rows: Vec<usize>,
}

impl DistanceMatrix {
    /// Wraps a precomputed dissimilarity matrix after checking it is square,
    /// symmetric and zero on the diagonal.
    pub fn from_matrix(data: Array2<f64>) -> Result<Self> {
        let n = data.nrows();
        if n != data.ncols() {
            return Err(Error::Shape(format!("distance matrix is {:?}", data.dim())));
        }
        for i in 0..n {
            if data[[i, i]] != 0.0 {
                return Err(Error::InvalidArgument(format!("non-zero diagonal at {i}")));
            }
            for j in 0..i {
                if data[[i, j]] != data[[j, i]] || !data[[i, j]].is_finite() {
                    return Err(Error::InvalidArgument(format!("asymmetric or non-finite entry ({i}, {j})")));
                }
            }
        }
        Ok(Self {
            data,
            constant_rows: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }
}

/// `1 − corr(y_i, y_j)²` over all feature columns jointly.
pub fn correlation_distance(features: ArrayView2<f64>) -> Result<DistanceMatrix> {
    let n = features.nrows();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 rows, got {n}")));
    }
    if features.ncols() < 2 {
        return Err(Error::InvalidArgument("correlation needs at least 2 feature columns".into()));
    }
    let constant_rows: Vec<usize> = (0..n)
        .filter(|&i| {
            let row = features.row(i);
            row.iter().all(|&v| v == row[0])
        })
        .collect();
    if !constant_rows.is_empty() {
        log::warn!("constant feature rows {constant_rows:?}: correlation taken as 0");
    }
    let mut data = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..i {
            let c = pearson(features.row(i), features.row(j));
            let d = (1.0 - c * c).clamp(0.0, 1.0);
            data[[i, j]] = d;
            data[[j, i]] = d;
        }
    }
    Ok(DistanceMatrix { data, constant_rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Linkage {
    #[default]
    Average,
    Complete,
    Single,
}

impl Linkage {
    /// Lance–Williams update for the distance from `k` to the union of `i`
    /// (size `ni`) and `j` (size `nj`).
    fn update(self, dki: f64, dkj: f64, ni: usize, nj: usize) -> f64 {
        match self {
            Linkage::Average => (ni as f64 * dki + nj as f64 * dkj) / (ni + nj) as f64,
            Linkage::Complete => dki.max(dkj),
            Linkage::Single => dki.min(dkj),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Linkage::Average => "average",
            Linkage::Complete => "complete",
            Linkage::Single => "single",
        }
    }
}

impl fmt::Display for Linkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Linkage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "average" => Ok(Linkage::Average),
            "complete" => Ok(Linkage::Complete),
            "single" => Ok(Linkage::Single),
            other => Err(Error::InvalidArgument(format!(
                "unknown linkage {other:?} (expected average, complete or single)"
            ))),
        }
    }
}

/// One agglomeration step. Leaves are nodes `0..W`; step `s` creates node
/// `W + s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

/// Full merge sequence of an agglomerative run.
#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub points: usize,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// Labels in `1..=k` after applying the first `W − k` merges; clusters are
    /// numbered in order of their lowest member index.
    pub fn cut(&self, k: usize) -> Result<Vec<usize>> {
        let n = self.points;
        if k == 0 || k > n {
            return Err(Error::InvalidClusterCount { k, points: n });
        }
        let mut parent: Vec<usize> = (0..2 * n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for (step, m) in self.merges.iter().take(n - k).enumerate() {
            let node = n + step;
            let a = find(&mut parent, m.left);
            let b = find(&mut parent, m.right);
            parent[a] = node;
            parent[b] = node;
        }
        let mut label_of_root = std::collections::HashMap::new();
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let root = find(&mut parent, i);
            let next = label_of_root.len() + 1;
            labels.push(*label_of_root.entry(root).or_insert(next));
        }
        Ok(labels)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// Cluster id in `1..=k` per point.
    pub labels: Vec<usize>,
    pub k: usize,
    pub dendrogram: Dendrogram,
}

impl ClusterAssignment {
    /// Member indices of each cluster, in label order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l - 1].push(i);
        }
        out
    }
}

/// Agglomerates all points and returns the full dendrogram.
///
/// At each step the closest pair of clusters merges; equal distances are
/// resolved by the lowest member indices of the two clusters, compared
/// lexicographically.
pub fn agglomerate(distances: &DistanceMatrix, linkage: Linkage) -> Dendrogram {
    let n = distances.len();
    // slot s holds the cluster whose lowest member is s
    let mut d = distances.data.clone();
    let mut active: Vec<bool> = vec![true; n];
    let mut node: Vec<usize> = (0..n).collect();
    let mut size: Vec<usize> = vec![1; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for step in 0..n.saturating_sub(1) {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in i + 1..n {
                if !active[j] {
                    continue;
                }
                let v = d[[i, j]];
                if best.is_none_or(|(b, _, _)| v < b) {
                    best = Some((v, i, j));
                }
            }
        }
        let (height, i, j) = best.expect("at least two active clusters");
        for k in 0..n {
            if active[k] && k != i && k != j {
                let v = linkage.update(d[[k, i]], d[[k, j]], size[i], size[j]);
                d[[k, i]] = v;
                d[[i, k]] = v;
            }
        }
        merges.push(Merge {
            left: node[i],
            right: node[j],
            height,
            size: size[i] + size[j],
        });
        active[j] = false;
        size[i] += size[j];
        node[i] = n + step;
    }
    Dendrogram { points: n, merges }
}

/// Clusters into exactly `k` groups by cutting the dendrogram.
pub fn hierarchical_cluster(distances: &DistanceMatrix, k: usize, linkage: Linkage) -> Result<ClusterAssignment> {
    let n = distances.len();
    if k == 0 || k > n {
        return Err(Error::InvalidClusterCount { k, points: n });
    }
    let dendrogram = agglomerate(distances, linkage);
    let labels = dendrogram.cut(k)?;
    Ok(ClusterAssignment { labels, k, dendrogram })
}

/// Member minimising the summed distance to the other members; ties go to the
/// lowest index.
pub fn cluster_medoid(members: &[usize], distances: &DistanceMatrix) -> Result<usize> {
    let mut best: Option<(f64, usize)> = None;
    for &m in members {
        let total: f64 = members.iter().map(|&o| distances.data[[m, o]]).sum();
        best = match best {
            Some((b, bi)) if b < total || (b == total && bi < m) => Some((b, bi)),
            _ => Some((total, m)),
        };
    }
    best.map(|(_, m)| m).ok_or(Error::EmptyCluster)
}

/// `V = Σ_k Σ_{j ∈ c_k} dis(y_j, medoid_k)`.
pub fn cluster_cost(assignment: &ClusterAssignment, distances: &DistanceMatrix) -> Result<f64> {
    let mut total = 0.0;
    for members in assignment.members() {
        let medoid = cluster_medoid(&members, distances)?;
        total += members.iter().map(|&m| distances.data[[m, medoid]]).sum::<f64>();
    }
    Ok(total)
}
