//! Local mesh networks and mesh arc descriptor (MAD) embeddings.
//!
//! For every region of a window, the `p` regions with the largest Pearson
//! correlation are selected and the region's signal is ridge-regressed onto
//! them:
//!
//! ```text
//! a_r = argmin_a ‖x_r − X a‖² + λ ‖a‖²   ⇔   (XᵀX + λI) a = Xᵀ x_r
//! ```
//!
//! The fitted weights of all regions form the rows of an `R × R` arc matrix.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::linalg::{cholesky, cholesky_solve};
use crate::signal::partition_windows;
use crate::wavelet::{Subband, SubbandStack};
use crate::{Error, Result};

pub const DEFAULT_NEIGHBORS: usize = 40;
pub const DEFAULT_LAMBDA: f64 = 32.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MeshConfig {
    /// Neighbour count `p`.
    pub neighbors: usize,
    /// Ridge penalty, applied unnormalised.
    pub lambda: f64,
    /// Rank neighbours by `|corr|` instead of signed correlation.
    pub abs_corr: bool,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            neighbors: DEFAULT_NEIGHBORS,
            lambda: DEFAULT_LAMBDA,
            abs_corr: false,
        }
    }
}

impl MeshConfig {
    pub fn validate(&self, regions: usize) -> Result<()> {
        if self.neighbors == 0 || self.neighbors + 1 > regions {
            return Err(Error::InvalidArgument(format!(
                "neighbour count p={} must be in 1..={} for {regions} regions",
                self.neighbors,
                regions.saturating_sub(1)
            )));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "ridge penalty must be finite and non-negative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Pearson correlation; 0 when either series has zero variance.
pub fn pearson(x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    let n = x.len() as f64;
    let mx = x.sum() / n;
    let my = y.sum() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y.iter()) {
        let da = a - mx;
        let db = b - my;
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}

/// The `p` regions most correlated with `region` over the window, in
/// descending order; ties go to the lower region index.
pub fn nearest_neighbors(region: usize, window: ArrayView2<f64>, p: usize, abs_corr: bool) -> Result<Vec<usize>> {
    let (regions, len) = window.dim();
    if len < 3 {
        return Err(Error::InvalidArgument(format!(
            "window must contain at least 3 scans, got {len}"
        )));
    }
    if region >= regions || p == 0 || p >= regions {
        return Err(Error::InvalidArgument(format!(
            "need region < {regions} and 1 <= p <= {}, got region {region}, p {p}",
            regions - 1
        )));
    }
    let target = window.row(region);
    let mut scored: Vec<(f64, usize)> = (0..regions)
        .filter(|&other| other != region)
        .map(|other| {
            let c = pearson(target, window.row(other));
            (if abs_corr { c.abs() } else { c }, other)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(scored.into_iter().take(p).map(|(_, r)| r).collect())
}

/// Closed-form ridge weights of `region` on its `neighbors` over the window.
pub fn fit_local_mesh(region: usize, neighbors: &[usize], window: ArrayView2<f64>, lambda: f64) -> Result<Vec<f64>> {
    let regions = window.nrows();
    if region >= regions || neighbors.iter().any(|&n| n >= regions || n == region) {
        return Err(Error::InvalidArgument(format!(
            "neighbour set {neighbors:?} invalid for region {region} of {regions}"
        )));
    }
    let mut sorted = neighbors.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != neighbors.len() {
        return Err(Error::InvalidArgument(format!("duplicate neighbours in {neighbors:?}")));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
    }
    let (gram, rhs) = normal_equations(region, neighbors, window, lambda);
    let l = cholesky(gram.view()).ok_or(Error::SingularSystem { region })?;
    Ok(cholesky_solve(l.view(), rhs.view()).to_vec())
}

/// `(XᵀX + λI, Xᵀ x_r)` with the neighbour signals as the columns of `X`.
pub fn normal_equations(
    region: usize,
    neighbors: &[usize],
    window: ArrayView2<f64>,
    lambda: f64,
) -> (Array2<f64>, Array1<f64>) {
    let p = neighbors.len();
    let target = window.row(region);
    let mut gram = Array2::<f64>::zeros((p, p));
    let mut rhs = Array1::<f64>::zeros(p);
    for (i, &ni) in neighbors.iter().enumerate() {
        let xi = window.row(ni);
        rhs[i] = xi.dot(&target);
        for (j, &nj) in neighbors.iter().enumerate().take(i + 1) {
            let v = xi.dot(&window.row(nj));
            gram[[i, j]] = v;
            gram[[j, i]] = v;
        }
        gram[[i, i]] += lambda;
    }
    (gram, rhs)
}

/// `R × R` arc weights of one (window, sub-band) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshNetwork {
    /// Row `r` holds region `r`'s fitted arcs; zero outside its neighbour set.
    pub weights: Array2<f64>,
    pub window_index: usize,
    pub subband: Subband,
    pub neighbor_sets: Vec<Vec<usize>>,
}

impl MeshNetwork {
    /// Row-major flattening: entry `(r, r')` lands at `r·R + r'`.
    pub fn flatten(&self) -> Array1<f64> {
        Array1::from_iter(self.weights.iter().copied())
    }

    pub fn regions(&self) -> usize {
        self.weights.nrows()
    }
}

/// Inverse of [`MeshNetwork::flatten`].
pub fn unflatten(row: ArrayView1<f64>) -> Result<Array2<f64>> {
    let regions = (row.len() as f64).sqrt().round() as usize;
    if regions * regions != row.len() {
        return Err(Error::Shape(format!("{} is not a square length", row.len())));
    }
    Ok(Array2::from_shape_vec((regions, regions), row.to_vec()).expect("square shape"))
}

/// Fits every region's local mesh independently and assembles the network.
pub fn build_mesh_network(
    window: ArrayView2<f64>,
    window_index: usize,
    subband: Subband,
    config: &MeshConfig,
) -> Result<MeshNetwork> {
    let regions = window.nrows();
    config.validate(regions)?;
    let mut weights = Array2::<f64>::zeros((regions, regions));
    let mut neighbor_sets = Vec::with_capacity(regions);
    for r in 0..regions {
        let neighbors = nearest_neighbors(r, window, config.neighbors, config.abs_corr)?;
        let arcs = fit_local_mesh(r, &neighbors, window, config.lambda)?;
        for (&n, &a) in neighbors.iter().zip(&arcs) {
            weights[[r, n]] = a;
        }
        neighbor_sets.push(neighbors);
    }
    Ok(MeshNetwork {
        weights,
        window_index,
        subband,
        neighbor_sets,
    })
}

/// `W × R²` matrix of flattened mesh networks for one sub-band.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub data: Array2<f64>,
    pub subband: Subband,
    pub subject_id: String,
}

impl EmbeddingMatrix {
    /// Mesh weights of window `i`.
    pub fn network(&self, i: usize) -> Result<Array2<f64>> {
        if i >= self.data.nrows() {
            return Err(Error::InvalidArgument(format!(
                "window {i} out of range for {} windows",
                self.data.nrows()
            )));
        }
        unflatten(self.data.row(i))
    }
}

/// Mesh networks of every window of one sub-band matrix (`R × T`).
pub fn mesh_networks(signal: ArrayView2<f64>, window_len: usize, subband: Subband, config: &MeshConfig) -> Result<Vec<MeshNetwork>> {
    partition_windows(signal, window_len)?
        .iter()
        .map(|w| build_mesh_network(w.data.view(), w.index, subband, config))
        .collect()
}

pub fn build_embedding_matrix(
    stack: &SubbandStack,
    window_len: usize,
    subband: Subband,
    config: &MeshConfig,
    subject_id: &str,
) -> Result<EmbeddingMatrix> {
    let signal = stack.get(subband)?;
    let networks = mesh_networks(signal.view(), window_len, subband, config)?;
    let regions = signal.nrows();
    let mut data = Array2::<f64>::zeros((networks.len(), regions * regions));
    for (i, net) in networks.iter().enumerate() {
        data.row_mut(i).assign(&net.flatten());
    }
    Ok(EmbeddingMatrix {
        data,
        subband,
        subject_id: subject_id.to_owned(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::{decompose_all_subbands, WaveletFamily};
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_window(regions: usize, len: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((regions, len), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn duplicate_region_is_nearest() {
        let mut w = random_window(4, 10, 1);
        let row = w.row(0).to_owned();
        w.row_mut(2).assign(&row);
        assert_eq!(nearest_neighbors(0, w.view(), 1, false).unwrap(), vec![2]);
    }

    #[test]
    fn hand_correlation_ordering() {
        let w = array![[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [3.0, 2.0, 1.0]];
        assert!((pearson(w.row(0), w.row(1)) - 1.0).abs() < 1e-15);
        assert!((pearson(w.row(0), w.row(2)) + 1.0).abs() < 1e-15);
        assert_eq!(nearest_neighbors(0, w.view(), 2, false).unwrap(), vec![1, 2]);
    }

    #[test]
    fn neighbors_match_sort_all_oracle() {
        for seed in 0..20 {
            let w = random_window(12, 30, seed);
            for r in 0..12 {
                // oracle: explicit mean-centred formula, full sort
                let n = 30.0;
                let corr = |a: usize, b: usize| {
                    let ma: f64 = w.row(a).iter().sum::<f64>() / n;
                    let mb: f64 = w.row(b).iter().sum::<f64>() / n;
                    let cov: f64 = (0..30).map(|t| (w[[a, t]] - ma) * (w[[b, t]] - mb)).sum();
                    let va: f64 = (0..30).map(|t| (w[[a, t]] - ma).powi(2)).sum();
                    let vb: f64 = (0..30).map(|t| (w[[b, t]] - mb).powi(2)).sum();
                    cov / (va * vb).sqrt()
                };
                let mut all: Vec<(f64, usize)> = (0..12).filter(|&o| o != r).map(|o| (corr(r, o), o)).collect();
                all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
                let oracle: Vec<usize> = all.iter().take(5).map(|x| x.1).collect();
                assert_eq!(nearest_neighbors(r, w.view(), 5, false).unwrap(), oracle);
            }
        }
    }

    #[test]
    fn constant_rows_rank_as_zero_correlation() {
        let w = array![[1.0, 2.0, 3.0, 4.0], [5.0, 5.0, 5.0, 5.0], [4.0, 3.0, 2.0, 1.0], [1.0, 3.0, 2.0, 4.0]];
        // corr with the constant row is 0, which beats the anti-correlated row
        assert_eq!(nearest_neighbors(0, w.view(), 3, false).unwrap(), vec![3, 1, 2]);
        assert_eq!(nearest_neighbors(0, w.view(), 3, true).unwrap(), vec![2, 3, 1]);
        assert!(nearest_neighbors(0, w.view().slice(ndarray::s![.., 0..2]), 1, false).is_err());
    }

    #[test]
    fn exact_fit_and_shrinkage() {
        let mut w = random_window(3, 20, 3);
        let row = w.row(1).to_owned();
        w.row_mut(0).assign(&row);
        let a = fit_local_mesh(0, &[1], w.view(), 0.0).unwrap();
        assert!((a[0] - 1.0).abs() < 1e-12);

        let w = random_window(6, 30, 4);
        let a = fit_local_mesh(0, &[1, 2, 3, 4, 5], w.view(), 1e9).unwrap();
        assert!(a.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn singular_without_penalty() {
        let mut w = random_window(3, 10, 5);
        let row = w.row(1).to_owned();
        w.row_mut(2).assign(&row);
        assert!(matches!(
            fit_local_mesh(0, &[1, 2], w.view(), 0.0),
            Err(Error::SingularSystem { region: 0 })
        ));
        assert!(fit_local_mesh(0, &[1, 2], w.view(), 1.0).is_ok());
        assert!(fit_local_mesh(0, &[1, 1], w.view(), 1.0).is_err());
        assert!(fit_local_mesh(0, &[0, 1], w.view(), 1.0).is_err());
    }

    #[test]
    fn structural_properties() {
        let w = random_window(5, 30, 6);
        let net = build_mesh_network(w.view(), 0, Subband::Original, &MeshConfig { neighbors: 2, ..Default::default() }).unwrap();
        for r in 0..5 {
            assert_eq!(net.weights[[r, r]], 0.0);
            assert_eq!(net.neighbor_sets[r].len(), 2);
            let nonzero = net.weights.row(r).iter().filter(|v| **v != 0.0).count();
            assert!(nonzero <= 2);
        }
        let cfg = MeshConfig { neighbors: 5, ..Default::default() };
        assert!(build_mesh_network(w.view(), 0, Subband::Original, &cfg).is_err());
    }

    #[test]
    fn identical_rows_are_deterministic() {
        let base = random_window(1, 30, 7);
        let w = Array2::from_shape_fn((6, 30), |(_, t)| base[[0, t]]);
        let cfg = MeshConfig { neighbors: 3, lambda: 1.0, abs_corr: false };
        let a = build_mesh_network(w.view(), 0, Subband::Original, &cfg).unwrap();
        let b = build_mesh_network(w.view(), 0, Subband::Original, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.neighbor_sets[0], vec![1, 2, 3]);
        assert_eq!(a.neighbor_sets[4], vec![0, 1, 2]);
    }

    #[test]
    fn network_is_region_by_region_composition() {
        let w = random_window(8, 30, 8);
        let cfg = MeshConfig { neighbors: 4, lambda: 32.0, abs_corr: false };
        let net = build_mesh_network(w.view(), 3, Subband::Detail(2), &cfg).unwrap();
        for r in 0..8 {
            let nb = nearest_neighbors(r, w.view(), 4, false).unwrap();
            let arcs = fit_local_mesh(r, &nb, w.view(), 32.0).unwrap();
            let mut row = vec![0.0; 8];
            for (n, a) in nb.iter().zip(arcs) {
                row[*n] = a;
            }
            assert_eq!(net.weights.row(r).to_vec(), row);
        }
    }

    #[test]
    fn embedding_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let series = Array2::from_shape_fn((3, 64), |_| rng.random_range(-1.0..1.0));
        let stack = decompose_all_subbands(series.view(), 2, WaveletFamily::Haar).unwrap();
        let cfg = MeshConfig { neighbors: 2, lambda: 0.5, abs_corr: false };
        let f = build_embedding_matrix(&stack, 30, Subband::Original, &cfg, "s1").unwrap();
        assert_eq!(f.data.dim(), (2, 9));
        let nets = mesh_networks(series.view(), 30, Subband::Original, &cfg).unwrap();
        for (i, net) in nets.iter().enumerate() {
            assert_eq!(f.network(i).unwrap(), net.weights);
            for r in 0..3 {
                for c in 0..3 {
                    assert_eq!(f.data[[i, r * 3 + c]], net.weights[[r, c]]);
                }
            }
        }
        assert!(unflatten(f.data.row(0).slice(ndarray::s![0..8])).is_err());
    }
}
