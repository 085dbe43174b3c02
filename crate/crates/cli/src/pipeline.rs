//! In-memory pipeline steps for one subject. The stage runner wraps these
//! with file I/O; the sweep and the acceptance suite call them directly.

use ndarray::{concatenate, Array2, ArrayView2, Axis};

use brainmesh::clustering::{correlation_distance, hierarchical_cluster, ClusterAssignment, DistanceMatrix};
use brainmesh::datagen::{generate_session, SynthSpec};
use brainmesh::encoder::{encode_features, train, SdaeConfig, TrainOutcome};
use brainmesh::mesh::{build_embedding_matrix, MeshConfig};
use brainmesh::metrics::{adjusted_rand_index, rand_index};
use brainmesh::signal::{partition_windows, RegionTimeSeries};
use brainmesh::wavelet::{decompose_all_subbands, Subband, SubbandStack};

use crate::config::{Config, Representation};
use crate::Result;

/// Features of one representation, one matrix per sub-band, in sub-band order.
pub type BandFeatures = Vec<(Subband, Array2<f64>)>;

pub fn synth_subject(config: &Config, subject: usize) -> Result<RegionTimeSeries> {
    let mut spec = SynthSpec::planted(config.synth.regions, config.synth.structure_seed, config.subject_seed(subject));
    spec.noise_sigma = config.synth.noise_sigma;
    spec.driver_smoothing = config.synth.driver_smoothing;
    spec.tr_seconds = config.synth.tr_seconds;
    Ok(generate_session(&spec)?)
}

pub fn decompose(config: &Config, series: &RegionTimeSeries) -> Result<SubbandStack> {
    Ok(decompose_all_subbands(
        series.data().view(),
        config.decompose.levels,
        config.decompose.family,
    )?)
}

/// Flattened windows (`R·w` values, region-major) of every sub-band.
pub fn raw_features(stack: &SubbandStack, window: usize) -> Result<BandFeatures> {
    stack
        .subbands()
        .into_iter()
        .map(|band| {
            let windows = partition_windows(stack.get(band)?.view(), window)?;
            let width = windows.first().map_or(0, |w| w.data.len());
            let mut out = Array2::zeros((windows.len(), width));
            for (mut row, w) in out.rows_mut().into_iter().zip(&windows) {
                row.assign(&ndarray::Array1::from_iter(w.data.iter().copied()));
            }
            Ok((band, out))
        })
        .collect()
}

/// MAD embedding matrix of every sub-band.
pub fn mad_features(stack: &SubbandStack, window: usize, mesh: &MeshConfig, subject_id: &str) -> Result<BandFeatures> {
    stack
        .subbands()
        .into_iter()
        .map(|band| Ok((band, build_embedding_matrix(stack, window, band, mesh, subject_id)?.data)))
        .collect()
}

/// Seed of the autoencoder for one (subject, sub-band) pair.
pub fn sdae_seed(config: &Config, subject: usize, band: Subband) -> u64 {
    let band_index = band.index(config.decompose.levels) as u64;
    config
        .seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((subject as u64) << 16)
        .wrapping_add(band_index)
}

pub struct EncodedBand {
    pub band: Subband,
    pub outcome: TrainOutcome,
    pub codes: Array2<f64>,
}

pub fn encode_band(sdae: &SdaeConfig, band: Subband, mad: ArrayView2<f64>) -> Result<EncodedBand> {
    let outcome = train(mad, sdae)?;
    let codes = encode_features(&outcome.params, mad)?;
    Ok(EncodedBand { band, outcome, codes })
}

pub fn encode_subject(config: &Config, subject: usize, mad: &BandFeatures) -> Result<Vec<EncodedBand>> {
    mad.iter()
        .map(|(band, f)| {
            let sdae = config.sdae_config(f.ncols(), sdae_seed(config, subject, *band));
            encode_band(&sdae, *band, f.view())
        })
        .collect()
}

/// `"all"` followed by every single sub-band label.
pub fn subband_sets(levels: usize) -> Vec<String> {
    std::iter::once("all".to_string())
        .chain(Subband::all(levels).into_iter().map(|b| b.label()))
        .collect()
}

/// Features of a sub-band set, concatenated column-wise in sub-band order.
pub fn select(features: &BandFeatures, set: &str) -> Result<Array2<f64>> {
    let views: Vec<ArrayView2<f64>> = features
        .iter()
        .filter(|(band, _)| set == "all" || band.label() == set)
        .map(|(_, f)| f.view())
        .collect();
    if views.is_empty() {
        return Err(brainmesh::Error::InvalidArgument(format!("no features for sub-band set {set:?}")).into());
    }
    concatenate(Axis(1), &views).map_err(|e| brainmesh::Error::Shape(e.to_string()).into())
}

pub fn distances(features: ArrayView2<f64>) -> Result<DistanceMatrix> {
    Ok(correlation_distance(features)?)
}

pub fn cluster(config: &Config, features: ArrayView2<f64>) -> Result<ClusterAssignment> {
    let d = distances(features)?;
    Ok(hierarchical_cluster(&d, config.cluster.k, config.cluster.linkage)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub ri: f64,
    pub ari: f64,
}

pub fn score(labels: &[usize], truth: &[String]) -> Result<Score> {
    Ok(Score {
        ri: rand_index(labels, truth)?,
        ari: adjusted_rand_index(labels, truth)?,
    })
}

/// Every representation of one subject, computed in memory.
pub struct SubjectFeatures {
    pub series: RegionTimeSeries,
    pub truth: Vec<String>,
    pub raw: BandFeatures,
    pub mad: BandFeatures,
    pub sdae: Option<BandFeatures>,
}

impl SubjectFeatures {
    pub fn compute(config: &Config, subject: usize, with_sdae: bool) -> Result<Self> {
        let series = synth_subject(config, subject)?;
        let truth = series.window_labels(config.mesh.window)?;
        let stack = decompose(config, &series)?;
        let raw = raw_features(&stack, config.mesh.window)?;
        let mesh = config.mesh_config(series.regions());
        let mad = mad_features(&stack, config.mesh.window, &mesh, &format!("subject_{subject}"))?;
        let sdae = if with_sdae {
            Some(
                encode_subject(config, subject, &mad)?
                    .into_iter()
                    .map(|e| (e.band, e.codes))
                    .collect(),
            )
        } else {
            None
        };
        Ok(Self {
            series,
            truth,
            raw,
            mad,
            sdae,
        })
    }

    pub fn get(&self, rep: Representation) -> Option<&BandFeatures> {
        match rep {
            Representation::Raw => Some(&self.raw),
            Representation::Mad => Some(&self.mad),
            Representation::Sdae => self.sdae.as_ref(),
        }
    }

    pub fn evaluate(&self, config: &Config, rep: Representation, set: &str) -> Result<Score> {
        let features = self
            .get(rep)
            .ok_or_else(|| brainmesh::Error::InvalidArgument(format!("{} features were not computed", rep.name())))?;
        let assignment = cluster(config, select(features, set)?.view())?;
        score(&assignment.labels, &self.truth)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_rows_flatten_region_major() {
        let config = Config::default();
        let series = synth_subject(&config, 0).unwrap();
        let stack = decompose(&config, &series).unwrap();
        let raw = raw_features(&stack, 30).unwrap();
        let (band, a0) = &raw[0];
        assert_eq!(*band, Subband::Original);
        assert_eq!(a0.dim(), (64, 20 * 30));
        assert_eq!(a0[[1, 30 + 2]], series.data()[[1, 30 + 2]]);
    }

    #[test]
    fn sets_and_selection() {
        assert_eq!(subband_sets(2), vec!["all", "A0", "A1", "A2", "D1", "D2"]);
        let f: BandFeatures = vec![
            (Subband::Original, Array2::from_elem((3, 2), 1.0)),
            (Subband::Approx(1), Array2::from_elem((3, 1), 2.0)),
        ];
        assert_eq!(select(&f, "all").unwrap().dim(), (3, 3));
        assert_eq!(select(&f, "A1").unwrap(), Array2::from_elem((3, 1), 2.0));
        assert!(select(&f, "D4").is_err());
    }

    #[test]
    fn sdae_seeds_are_distinct() {
        let config = Config::default();
        let mut seen = std::collections::HashSet::new();
        for s in 0..4 {
            for b in Subband::all(4) {
                assert!(seen.insert(sdae_seed(&config, s, b)));
            }
        }
    }
}
