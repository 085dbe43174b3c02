//! Run configuration: a TOML file with one section per stage.
//!
//! Every key is optional; missing keys take the defaults below. Validation
//! reports every unknown or invalid key at once.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use brainmesh::clustering::Linkage;
use brainmesh::encoder::{self, NoiseMode, SdaeConfig};
use brainmesh::mesh::{self, MeshConfig};
use brainmesh::signal::DEFAULT_WINDOW_LEN;
use brainmesh::wavelet::{Subband, WaveletFamily};
use brainmesh::{datagen, netstats};
use toml::{Table, Value};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSection {
    pub regions: usize,
    pub subjects: usize,
    /// Seeds the planted task meshes shared by all subjects.
    pub structure_seed: u64,
    pub noise_sigma: f64,
    pub driver_smoothing: usize,
    pub tr_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecomposeSection {
    pub levels: usize,
    pub family: WaveletFamily,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshSection {
    pub window: usize,
    pub neighbors: usize,
    pub lambda: f64,
    pub abs_corr: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodeSection {
    /// Hidden and code sizes; the input size is `R²`.
    pub hidden: Vec<usize>,
    pub rho: f64,
    pub lambda2: f64,
    pub corruption_rate: f64,
    pub sparsity_weight: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub noise_mode: NoiseMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSection {
    pub k: usize,
    pub linkage: Linkage,
}

/// Which features to cluster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Representation {
    Raw,
    Mad,
    Sdae,
}

impl Representation {
    pub const ALL: [Representation; 3] = [Representation::Raw, Representation::Mad, Representation::Sdae];

    pub fn name(self) -> &'static str {
        match self {
            Representation::Raw => "raw",
            Representation::Mad => "mad",
            Representation::Sdae => "sdae",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateSection {
    pub representations: Vec<Representation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PruneBy {
    Weight,
    Precision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetstatsSection {
    pub target_fraction: f64,
    pub prune_by: PruneBy,
    /// Sub-band whose mesh networks are summarised.
    pub subband: Subband,
    /// Clustering whose medoids are exported.
    pub representation: Representation,
    /// `"all"` or a single sub-band label.
    pub subband_set: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSection {
    pub neighbors: Vec<usize>,
    pub lambda: Vec<f64>,
    pub rho: Vec<f64>,
    pub lambda2: Vec<f64>,
    /// Sub-band set scored by the encoder part of the sweep.
    pub subband_set: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub synth: SynthSection,
    pub decompose: DecomposeSection,
    pub mesh: MeshSection,
    pub encode: EncodeSection,
    pub cluster: ClusterSection,
    pub evaluate: EvaluateSection,
    pub netstats: NetstatsSection,
    pub sweep: SweepSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            synth: SynthSection {
                regions: datagen::DEFAULT_REGIONS,
                subjects: 3,
                structure_seed: 7,
                noise_sigma: datagen::DEFAULT_NOISE_SIGMA,
                driver_smoothing: datagen::DEFAULT_DRIVER_SMOOTHING,
                tr_seconds: 0.72,
            },
            decompose: DecomposeSection {
                levels: 4,
                family: WaveletFamily::Db4,
            },
            mesh: MeshSection {
                window: DEFAULT_WINDOW_LEN,
                neighbors: mesh::DEFAULT_NEIGHBORS,
                lambda: mesh::DEFAULT_LAMBDA,
                abs_corr: false,
            },
            encode: EncodeSection {
                hidden: encoder::DEFAULT_HIDDEN.to_vec(),
                rho: encoder::DEFAULT_RHO,
                lambda2: encoder::DEFAULT_LAMBDA2,
                corruption_rate: encoder::DEFAULT_CORRUPTION,
                sparsity_weight: encoder::DEFAULT_SPARSITY_WEIGHT,
                epochs: encoder::DEFAULT_EPOCHS,
                learning_rate: encoder::DEFAULT_LEARNING_RATE,
                noise_mode: NoiseMode::InputMask,
            },
            cluster: ClusterSection {
                k: brainmesh::clustering::DEFAULT_CLUSTERS,
                linkage: Linkage::Average,
            },
            evaluate: EvaluateSection {
                representations: Representation::ALL.to_vec(),
            },
            netstats: NetstatsSection {
                target_fraction: netstats::DEFAULT_SPARSITY,
                prune_by: PruneBy::Weight,
                subband: Subband::Original,
                representation: Representation::Sdae,
                subband_set: "all".into(),
            },
            sweep: SweepSection {
                neighbors: vec![10, 20, 30, 40, 50],
                lambda: vec![16.0, 32.0, 128.0, 256.0],
                rho: vec![0.01, 0.001, 0.0001],
                lambda2: vec![0.00001, 0.00055, 0.0001],
                subband_set: "A0".into(),
            },
        }
    }
}

/// Pulls typed keys out of one section and remembers which keys it saw.
struct Section<'a> {
    name: &'static str,
    table: Option<&'a Table>,
    seen: BTreeSet<&'static str>,
    errors: &'a mut Vec<String>,
}

impl<'a> Section<'a> {
    fn new(root: &'a Table, name: &'static str, errors: &'a mut Vec<String>) -> Self {
        let table = if name.is_empty() {
            Some(root)
        } else {
            match root.get(name) {
                Some(Value::Table(t)) => Some(t),
                Some(_) => {
                    errors.push(format!("[{name}]: expected a table"));
                    None
                }
                None => None,
            }
        };
        Self {
            name,
            table,
            seen: BTreeSet::new(),
            errors,
        }
    }

    fn key(&self, key: &str) -> String {
        if self.name.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.name)
        }
    }

    fn raw(&mut self, key: &'static str) -> Option<&'a Value> {
        self.seen.insert(key);
        self.table.and_then(|t| t.get(key))
    }

    fn fail(&mut self, key: &str, msg: impl std::fmt::Display) {
        let k = self.key(key);
        self.errors.push(format!("{k}: {msg}"));
    }

    fn parse<T>(&mut self, key: &'static str, default: T, conv: impl Fn(&Value) -> Result<T, String>) -> T {
        match self.raw(key) {
            None => default,
            Some(v) => match conv(v) {
                Ok(x) => x,
                Err(msg) => {
                    self.fail(key, msg);
                    default
                }
            },
        }
    }

    fn usize(&mut self, key: &'static str, default: usize, min: usize) -> usize {
        self.parse(key, default, |v| as_usize(v, min))
    }

    fn u64(&mut self, key: &'static str, default: u64) -> u64 {
        self.parse(key, default, |v| as_usize(v, 0).map(|x| x as u64))
    }

    fn f64(&mut self, key: &'static str, default: f64, valid: impl Fn(f64) -> bool, rule: &str) -> f64 {
        self.parse(key, default, |v| {
            let x = as_f64(v)?;
            if valid(x) {
                Ok(x)
            } else {
                Err(format!("{x} must be {rule}"))
            }
        })
    }

    fn bool(&mut self, key: &'static str, default: bool) -> bool {
        self.parse(key, default, |v| v.as_bool().ok_or_else(|| "expected true or false".to_string()))
    }

    fn string(&mut self, key: &'static str, default: &str) -> String {
        self.parse(key, default.to_string(), |v| {
            v.as_str().map(str::to_owned).ok_or_else(|| "expected a string".to_string())
        })
    }

    fn list<T>(&mut self, key: &'static str, default: Vec<T>, item: impl Fn(&Value) -> Result<T, String>) -> Vec<T> {
        self.parse(key, default, |v| {
            let arr = v.as_array().ok_or_else(|| "expected an array".to_string())?;
            if arr.is_empty() {
                return Err("must not be empty".into());
            }
            arr.iter().map(&item).collect()
        })
    }

    fn finish(self) {
        let Some(table) = self.table else { return };
        for (key, value) in table {
            if self.name.is_empty() && matches!(value, Value::Table(_)) && SECTIONS.contains(&key.as_str()) {
                continue;
            }
            if !self.seen.contains(key.as_str()) {
                let k = if self.name.is_empty() {
                    key.clone()
                } else {
                    format!("{}.{key}", self.name)
                };
                self.errors.push(format!("{k}: unknown key"));
            }
        }
    }
}

const SECTIONS: [&str; 8] = ["synth", "decompose", "mesh", "encode", "cluster", "evaluate", "netstats", "sweep"];

fn as_usize(v: &Value, min: usize) -> Result<usize, String> {
    match v.as_integer() {
        Some(i) if i >= min as i64 => Ok(i as usize),
        Some(i) => Err(format!("{i} must be >= {min}")),
        None => Err("expected an integer".into()),
    }
}

fn as_f64(v: &Value) -> Result<f64, String> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err("expected a number".into()),
    }
}

fn check_subband_set(set: &str, levels: usize) -> Result<(), String> {
    if set == "all" {
        return Ok(());
    }
    let band: Subband = set.parse().map_err(|_| format!("{set:?} is neither \"all\" nor a sub-band label"))?;
    if !Subband::all(levels).contains(&band) {
        return Err(format!("sub-band {set} does not exist with {levels} levels"));
    }
    Ok(())
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Validation(vec![format!("{}: {e}", path.display())]))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let root: Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Validation(vec![format!("TOML syntax: {}", e.message())]))?;
        let d = Config::default();
        let mut errors = Vec::new();

        let mut s = Section::new(&root, "", &mut errors);
        let seed = s.u64("seed", d.seed);
        s.finish();

        let mut s = Section::new(&root, "synth", &mut errors);
        let synth = SynthSection {
            regions: s.usize("regions", d.synth.regions, 2),
            subjects: s.usize("subjects", d.synth.subjects, 1),
            structure_seed: s.u64("structure_seed", d.synth.structure_seed),
            noise_sigma: s.f64("noise_sigma", d.synth.noise_sigma, |x| x >= 0.0 && x.is_finite(), ">= 0"),
            driver_smoothing: s.usize("driver_smoothing", d.synth.driver_smoothing, 1),
            tr_seconds: s.f64("tr_seconds", d.synth.tr_seconds, |x| x > 0.0, "> 0"),
        };
        s.finish();

        let mut s = Section::new(&root, "decompose", &mut errors);
        let decompose = DecomposeSection {
            levels: s.usize("levels", d.decompose.levels, 1),
            family: s.parse("family", d.decompose.family, |v| {
                v.as_str()
                    .ok_or_else(|| "expected a string".to_string())?
                    .parse()
                    .map_err(|e: brainmesh::Error| e.to_string())
            }),
        };
        s.finish();

        let mut s = Section::new(&root, "mesh", &mut errors);
        let mesh = MeshSection {
            window: s.usize("window", d.mesh.window, 3),
            neighbors: s.usize("neighbors", d.mesh.neighbors, 1),
            lambda: s.f64("lambda", d.mesh.lambda, |x| x >= 0.0 && x.is_finite(), ">= 0"),
            abs_corr: s.bool("abs_corr", d.mesh.abs_corr),
        };
        s.finish();

        let mut s = Section::new(&root, "encode", &mut errors);
        let encode = EncodeSection {
            hidden: s.list("hidden", d.encode.hidden.clone(), |v| as_usize(v, 1)),
            rho: s.f64("rho", d.encode.rho, |x| x > 0.0 && x < 1.0, "in (0, 1)"),
            lambda2: s.f64("lambda2", d.encode.lambda2, |x| x >= 0.0, ">= 0"),
            corruption_rate: s.f64("corruption_rate", d.encode.corruption_rate, |x| (0.0..1.0).contains(&x), "in [0, 1)"),
            sparsity_weight: s.f64("sparsity_weight", d.encode.sparsity_weight, |x| x >= 0.0, ">= 0"),
            epochs: s.usize("epochs", d.encode.epochs, 0),
            learning_rate: s.f64("learning_rate", d.encode.learning_rate, |x| x > 0.0 && x.is_finite(), "> 0"),
            noise_mode: s.parse("noise_mode", d.encode.noise_mode, |v| {
                v.as_str()
                    .ok_or_else(|| "expected a string".to_string())?
                    .parse()
                    .map_err(|e: brainmesh::Error| e.to_string())
            }),
        };
        s.finish();

        let mut s = Section::new(&root, "cluster", &mut errors);
        let cluster = ClusterSection {
            k: s.usize("k", d.cluster.k, 1),
            linkage: s.parse("linkage", d.cluster.linkage, |v| {
                v.as_str()
                    .ok_or_else(|| "expected a string".to_string())?
                    .parse()
                    .map_err(|e: brainmesh::Error| e.to_string())
            }),
        };
        s.finish();

        let mut s = Section::new(&root, "evaluate", &mut errors);
        let evaluate = EvaluateSection {
            representations: s.list("representations", d.evaluate.representations.clone(), |v| {
                let name = v.as_str().ok_or("expected strings")?;
                Representation::parse(name).ok_or_else(|| format!("unknown representation {name:?} (raw, mad, sdae)"))
            }),
        };
        s.finish();

        let mut s = Section::new(&root, "netstats", &mut errors);
        let netstats = NetstatsSection {
            target_fraction: s.f64(
                "target_fraction",
                d.netstats.target_fraction,
                |x| x > 0.0 && x <= 1.0,
                "in (0, 1]",
            ),
            prune_by: s.parse("prune_by", d.netstats.prune_by, |v| match v.as_str() {
                Some("weight") => Ok(PruneBy::Weight),
                Some("precision") => Ok(PruneBy::Precision),
                _ => Err("expected \"weight\" or \"precision\"".into()),
            }),
            subband: s.parse("subband", d.netstats.subband, |v| {
                v.as_str()
                    .ok_or_else(|| "expected a string".to_string())?
                    .parse()
                    .map_err(|e: brainmesh::Error| e.to_string())
            }),
            representation: s.parse("representation", d.netstats.representation, |v| {
                let name = v.as_str().ok_or("expected a string")?;
                Representation::parse(name).ok_or_else(|| format!("unknown representation {name:?}"))
            }),
            subband_set: s.string("subband_set", &d.netstats.subband_set),
        };
        s.finish();

        let mut s = Section::new(&root, "sweep", &mut errors);
        let sweep = SweepSection {
            neighbors: s.list("neighbors", d.sweep.neighbors.clone(), |v| as_usize(v, 1)),
            lambda: s.list("lambda", d.sweep.lambda.clone(), as_f64),
            rho: s.list("rho", d.sweep.rho.clone(), as_f64),
            lambda2: s.list("lambda2", d.sweep.lambda2.clone(), as_f64),
            subband_set: s.string("subband_set", &d.sweep.subband_set),
        };
        s.finish();

        let config = Config {
            seed,
            synth,
            decompose,
            mesh,
            encode,
            cluster,
            evaluate,
            netstats,
            sweep,
        };
        config.cross_check(&mut errors);
        if errors.is_empty() {
            Ok(config)
        } else {
            Err(CliError::Validation(errors))
        }
    }

    /// Constraints spanning several keys.
    fn cross_check(&self, errors: &mut Vec<String>) {
        let scans: usize = brainmesh::signal::REFERENCE_TASKS.iter().map(|(_, n)| n).sum();
        let max_levels = brainmesh::wavelet::max_levels(scans);
        if self.decompose.levels > max_levels {
            errors.push(format!(
                "decompose.levels: {} exceeds {max_levels}, the maximum for {scans} scans",
                self.decompose.levels
            ));
        }
        if self.mesh.window > scans {
            errors.push(format!("mesh.window: {} exceeds the {scans}-scan session", self.mesh.window));
        }
        let windows = scans / self.mesh.window.max(1);
        if self.cluster.k > windows {
            errors.push(format!("cluster.k: {} exceeds the {windows} windows per subject", self.cluster.k));
        }
        for (key, set) in [("netstats.subband_set", &self.netstats.subband_set), ("sweep.subband_set", &self.sweep.subband_set)] {
            if let Err(msg) = check_subband_set(set, self.decompose.levels) {
                errors.push(format!("{key}: {msg}"));
            }
        }
        if !Subband::all(self.decompose.levels).contains(&self.netstats.subband) {
            errors.push(format!(
                "netstats.subband: {} does not exist with {} levels",
                self.netstats.subband, self.decompose.levels
            ));
        }
        for (key, values, rule) in [
            ("sweep.lambda", &self.sweep.lambda, "must be >= 0"),
            ("sweep.rho", &self.sweep.rho, "must be in (0, 1)"),
            ("sweep.lambda2", &self.sweep.lambda2, "must be >= 0"),
        ] {
            for v in values {
                let ok = match key {
                    "sweep.rho" => *v > 0.0 && *v < 1.0,
                    _ => *v >= 0.0,
                };
                if !ok {
                    errors.push(format!("{key}: {v} {rule}"));
                }
            }
        }
    }

    /// Mesh settings for `regions` regions; `p` is capped at `R − 1`.
    pub fn mesh_config(&self, regions: usize) -> MeshConfig {
        let neighbors = self.mesh.neighbors.min(regions - 1);
        if neighbors < self.mesh.neighbors {
            log::info!(
                "mesh.neighbors = {} exceeds R - 1 = {}; using {neighbors}",
                self.mesh.neighbors,
                regions - 1
            );
        }
        MeshConfig {
            neighbors,
            lambda: self.mesh.lambda,
            abs_corr: self.mesh.abs_corr,
        }
    }

    pub fn sdae_config(&self, input: usize, seed: u64) -> SdaeConfig {
        let mut layer_sizes = vec![input];
        layer_sizes.extend_from_slice(&self.encode.hidden);
        SdaeConfig {
            layer_sizes,
            rho: self.encode.rho,
            lambda2: self.encode.lambda2,
            corruption_rate: self.encode.corruption_rate,
            sparsity_weight: self.encode.sparsity_weight,
            epochs: self.encode.epochs,
            learning_rate: self.encode.learning_rate,
            seed,
            noise_mode: self.encode.noise_mode,
        }
    }

    /// Data seed of subject `s`.
    pub fn subject_seed(&self, subject: usize) -> u64 {
        self.seed.wrapping_add(subject as u64)
    }

    /// Canonical text of the sections a stage depends on, used for its hash.
    pub fn stage_fingerprint(&self, stage: crate::Stage) -> String {
        use crate::Stage::*;
        let mut out = String::new();
        let _ = match stage {
            Synth => write!(out, "seed={} {:?}", self.seed, self.synth),
            Decompose => write!(out, "{:?}", self.decompose),
            Mesh => write!(out, "{:?}", self.mesh),
            Encode => write!(out, "seed={} {:?}", self.seed, self.encode),
            Cluster => write!(out, "{:?} {:?}", self.cluster, self.evaluate),
            Evaluate => write!(out, "{:?}", self.evaluate),
            Netstats => write!(out, "{:?} {:?}", self.netstats, self.mesh.window),
        };
        out
    }
}
