//! Synthetic sessions with a planted mesh per task.
//!
//! Within a task block the signals satisfy `x = G x + m ⊙ d` exactly, where
//! `m` marks the source regions (all-zero generator rows) and `d` is a smoothed
//! latent driver. Every other region is therefore an exact linear combination
//! of its generator row's regions before observation noise is added.

use ndarray::{s, Array2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{lu_solve, spectral_radius_bound};
use crate::signal::{layout_tasks, RegionTimeSeries, REFERENCE_TASKS};
use crate::{Error, Result};

pub const DEFAULT_REGIONS: usize = 20;
pub const DEFAULT_NOISE_SIGMA: f64 = 0.5;
pub const DEFAULT_DRIVER_SMOOTHING: usize = 4;
const SPECTRAL_SQUARINGS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub regions: usize,
    pub tasks: Vec<(String, usize)>,
    /// One `R × R` generator per task; zero rows mark source regions.
    pub generators: Vec<Array2<f64>>,
    pub noise_sigma: f64,
    /// Moving-average length applied to the white latent drivers.
    pub driver_smoothing: usize,
    pub seed: u64,
    pub tr_seconds: f64,
}

impl SynthSpec {
    /// Reference task layout with planted generators drawn from
    /// `structure_seed`. Subjects sharing a structure seed share task meshes
    /// and differ only in drivers and noise.
    pub fn planted(regions: usize, structure_seed: u64, seed: u64) -> Self {
        let tasks: Vec<(String, usize)> = REFERENCE_TASKS.iter().map(|(n, c)| (n.to_string(), *c)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(structure_seed);
        let generators = tasks.iter().map(|_| planted_generator(regions, &mut rng)).collect();
        Self {
            regions,
            tasks,
            generators,
            noise_sigma: DEFAULT_NOISE_SIGMA,
            driver_smoothing: DEFAULT_DRIVER_SMOOTHING,
            seed,
            tr_seconds: 0.72,
        }
    }

    pub fn scans(&self) -> usize {
        self.tasks.iter().map(|(_, n)| n).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.regions < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 regions, got {}", self.regions)));
        }
        if self.tasks.is_empty() || self.tasks.iter().any(|(_, n)| *n == 0) {
            return Err(Error::InvalidArgument("every task block needs a positive scan count".into()));
        }
        if self.generators.len() != self.tasks.len() {
            return Err(Error::LengthMismatch {
                context: "generators per task".into(),
                expected: self.tasks.len(),
                found: self.generators.len(),
            });
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise sigma {} must be >= 0", self.noise_sigma)));
        }
        if self.driver_smoothing == 0 {
            return Err(Error::InvalidArgument("driver smoothing must be >= 1".into()));
        }
        for ((name, _), g) in self.tasks.iter().zip(&self.generators) {
            if g.dim() != (self.regions, self.regions) {
                return Err(Error::Shape(format!("generator for {name:?} is {:?}", g.dim())));
            }
            let bound = spectral_radius_bound(g.view(), SPECTRAL_SQUARINGS);
            if !(bound < 1.0) {
                return Err(Error::UnstableGenerator { task: name.clone(), bound });
            }
            if source_mask(g).iter().all(|&m| m == 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "generator for {name:?} has no source region (all-zero row)"
                )));
            }
        }
        Ok(())
    }
}

/// Roughly a third of the regions are sources; each remaining region reads
/// from two or three of them with weights `±U(0.4, 1.0)`.
pub fn planted_generator(regions: usize, rng: &mut impl Rng) -> Array2<f64> {
    let n_sources = (regions / 3).max(1).min(regions - 1);
    let sources = sample(rng, regions, n_sources).into_vec();
    let mut g = Array2::zeros((regions, regions));
    for r in (0..regions).filter(|r| !sources.contains(r)) {
        let fan_in = rng.random_range(2..=3).min(n_sources);
        for k in sample(rng, n_sources, fan_in) {
            let magnitude = rng.random_range(0.4..1.0);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            g[[r, sources[k]]] = sign * magnitude;
        }
    }
    g
}

fn source_mask(g: &Array2<f64>) -> Vec<f64> {
    g.rows()
        .into_iter()
        .map(|row| if row.iter().all(|v| *v == 0.0) { 1.0 } else { 0.0 })
        .collect()
}

/// Unit-variance moving average of white noise, one row per region.
fn smoothed_drivers(regions: usize, scans: usize, smoothing: usize, rng: &mut impl Rng) -> Array2<f64> {
    let white = Array2::from_shape_simple_fn((regions, scans + smoothing - 1), || rng.sample::<f64, _>(StandardNormal));
    let mut out = Array2::zeros((regions, scans));
    for r in 0..regions {
        let mut acc: f64 = white.slice(s![r, ..smoothing]).sum();
        for t in 0..scans {
            if t > 0 {
                acc += white[[r, t + smoothing - 1]] - white[[r, t - 1]];
            }
            out[[r, t]] = acc;
        }
        let mut row = out.row_mut(r);
        let mean = row.mean().unwrap_or(0.0);
        row -= mean;
        let sd = (row.iter().map(|v| v * v).sum::<f64>() / scans as f64).sqrt();
        if sd > 0.0 {
            row /= sd;
        }
    }
    out
}

/// Generates one session. Drivers run continuously across task boundaries.
pub fn generate_session(spec: &SynthSpec) -> Result<RegionTimeSeries> {
    spec.validate()?;
    let r = spec.regions;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let drivers = smoothed_drivers(r, spec.scans(), spec.driver_smoothing, &mut rng);
    let mut data = Array2::zeros((r, spec.scans()));
    let spans = layout_tasks(&spec.tasks);
    for (span, g) in spans.iter().zip(&spec.generators) {
        let mask = source_mask(g);
        let mut rhs = drivers.slice(s![.., span.scans.clone()]).to_owned();
        for (mut row, m) in rhs.rows_mut().into_iter().zip(&mask) {
            row *= *m;
        }
        let system = Array2::eye(r) - g;
        let clean = lu_solve(system.view(), rhs.view()).ok_or_else(|| Error::UnstableGenerator {
            task: span.name.clone(),
            bound: spectral_radius_bound(g.view(), SPECTRAL_SQUARINGS),
        })?;
        data.slice_mut(s![.., span.scans.clone()]).assign(&clean);
    }
    if spec.noise_sigma > 0.0 {
        data.mapv_inplace(|v| v + spec.noise_sigma * rng.sample::<f64, _>(StandardNormal));
    }
    RegionTimeSeries::new(data, RegionTimeSeries::default_ids(r), spans)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::fit_local_mesh;
    use ndarray::array;

    #[test]
    fn default_layout_matches_reference_counts() {
        let spec = SynthSpec::planted(DEFAULT_REGIONS, 1, 2);
        let session = generate_session(&spec).unwrap();
        assert_eq!(session.scans(), 1940);
        assert_eq!(session.tasks().len(), 7);
        for (span, (name, count)) in session.tasks().iter().zip(REFERENCE_TASKS) {
            assert_eq!(span.name, name);
            assert_eq!(span.len(), count);
        }
        assert!(session.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn noiseless_rows_are_recovered() {
        let mut spec = SynthSpec::planted(12, 5, 6);
        spec.tasks = vec![("only".into(), 200)];
        spec.generators.truncate(1);
        spec.noise_sigma = 0.0;
        let session = generate_session(&spec).unwrap();
        let g = &spec.generators[0];
        for r in 0..12 {
            let support: Vec<usize> = (0..12).filter(|&c| g[[r, c]] != 0.0).collect();
            if support.is_empty() {
                continue;
            }
            let fitted = fit_local_mesh(r, &support, session.data().view(), 0.0).unwrap();
            for (k, &c) in support.iter().enumerate() {
                assert!((fitted[k] - g[[r, c]]).abs() < 1e-6, "row {r} col {c}");
            }
        }
    }

    #[test]
    fn seeds_control_the_data() {
        let a = generate_session(&SynthSpec::planted(8, 1, 10)).unwrap();
        let b = generate_session(&SynthSpec::planted(8, 1, 10)).unwrap();
        let c = generate_session(&SynthSpec::planted(8, 1, 11)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn unstable_generator_is_rejected() {
        let mut spec = SynthSpec::planted(3, 1, 1);
        spec.tasks = vec![("t".into(), 10)];
        // source in row 0, a 2-cycle with gain 1.2 between regions 1 and 2
        spec.generators = vec![array![[0.0, 0.0, 0.0], [0.5, 0.0, 1.2], [0.0, 1.2, 0.0]]];
        assert!(matches!(generate_session(&spec), Err(Error::UnstableGenerator { .. })));
    }

    #[test]
    fn drivers_are_standardised() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = smoothed_drivers(4, 500, 4, &mut rng);
        for row in d.rows() {
            assert!(row.mean().unwrap().abs() < 1e-12);
            let var = row.iter().map(|v| v * v).sum::<f64>() / 500.0;
            assert!((var - 1.0).abs() < 1e-12);
        }
    }
}
