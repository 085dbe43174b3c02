//! Stage execution with manifest-based skipping.
//!
//! Run directory layout (one `subject_<s>` directory per subject):
//!
//! ```text
//! synth/subject_0/regions.csv, regions.manifest
//! decompose/subject_0/subband_<band>.csv
//! mesh/subject_0/F_<band>.csv, embedding.manifest
//! encode/subject_0/sdae_<band>.bin, codes_<band>.csv, loss_<band>.csv
//! cluster/subject_0/<rep>_<set>_assignment.csv, <rep>_<set>_merges.csv
//! evaluate/evaluation.csv, report.csv
//! netstats/subject_0/<task>_medoid_edges.csv, medoids.csv,
//!          <task>_mean_edges.csv, <task>_precision.csv
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use brainmesh::clustering::cluster_medoid;
use brainmesh::io::{read_matrix_csv, read_region_series, write_matrix_csv, write_region_series};
use brainmesh::mesh::unflatten;
use brainmesh::netstats::{edge_precision, export_edge_list, prune_to_sparsity};
use brainmesh::signal::RegionTimeSeries;
use brainmesh::wavelet::{Subband, SubbandStack};

use crate::artifacts::{
    list_files, read_assignment, relative, sha256_bytes, sha256_file, write_assignment, write_loss, write_merges,
    write_text, StageManifest,
};
use crate::config::{Config, PruneBy, Representation};
use crate::pipeline::{self, BandFeatures};
use crate::{CliError, Result, Stage};

/// Region ids, medoid network per task, and the subject's `medoids.csv` rows.
type SubjectMedoids = (Vec<String>, BTreeMap<String, Array2<f64>>, String);

/// Upstream stages whose artifacts `stage` reads under `config`.
pub fn dependencies(config: &Config, stage: Stage) -> Vec<Stage> {
    let feature_stage = |rep: Representation| match rep {
        Representation::Raw => Stage::Decompose,
        Representation::Mad => Stage::Mesh,
        Representation::Sdae => Stage::Encode,
    };
    let mut deps: BTreeSet<Stage> = match stage {
        Stage::Synth => BTreeSet::new(),
        Stage::Decompose => [Stage::Synth].into(),
        Stage::Mesh => [Stage::Decompose].into(),
        Stage::Encode => [Stage::Mesh].into(),
        Stage::Cluster => config.evaluate.representations.iter().map(|r| feature_stage(*r)).collect(),
        Stage::Evaluate => [Stage::Synth, Stage::Cluster].into(),
        Stage::Netstats => [Stage::Synth, Stage::Mesh, Stage::Cluster].into(),
    };
    if stage == Stage::Netstats {
        deps.insert(feature_stage(config.netstats.representation));
    }
    deps.into_iter().collect()
}

/// `target` and everything it transitively depends on, in execution order.
pub fn closure(config: &Config, target: Stage) -> Vec<Stage> {
    let mut seen = BTreeSet::new();
    let mut todo = vec![target];
    while let Some(st) = todo.pop() {
        if seen.insert(st) {
            todo.extend(dependencies(config, st));
        }
    }
    seen.into_iter().collect()
}

/// Runs `target`, preceded by its upstream stages unless `stage_only`.
pub fn run(config: &Config, run_dir: &Path, target: Stage, stage_only: bool) -> Result<()> {
    if target == Stage::Netstats && !config.evaluate.representations.contains(&config.netstats.representation) {
        return Err(CliError::Validation(vec![format!(
            "netstats.representation: {} is not listed in evaluate.representations",
            config.netstats.representation.name()
        )]));
    }
    fs::create_dir_all(run_dir).map_err(|e| CliError::io(run_dir, e))?;
    let stages = if stage_only { vec![target] } else { closure(config, target) };
    for stage in stages {
        execute(config, run_dir, stage)?;
    }
    Ok(())
}

fn execute(config: &Config, run_dir: &Path, stage: Stage) -> Result<()> {
    let mut inputs = BTreeMap::new();
    for dep in dependencies(config, stage) {
        match StageManifest::read(run_dir, dep)? {
            Some(m) if m.outputs_intact(run_dir) => inputs.extend(m.outputs),
            _ => return Err(CliError::MissingUpstream { stage, requires: dep }),
        }
    }
    let config_hash = sha256_bytes(config.stage_fingerprint(stage).as_bytes());
    if let Some(old) = StageManifest::read(run_dir, stage)? {
        if old.config_hash == config_hash && old.seed == config.seed && old.inputs == inputs && old.outputs_intact(run_dir) {
            log::info!("{stage}: up to date, skipped");
            return Ok(());
        }
    }
    log::info!("{stage}: running");
    let dir = run_dir.join(stage.name());
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    }
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let ctx = Ctx { config, run_dir };
    match stage {
        Stage::Synth => ctx.per_subject(|s| ctx.synth(s))?,
        Stage::Decompose => ctx.per_subject(|s| ctx.decompose(s))?,
        Stage::Mesh => ctx.per_subject(|s| ctx.mesh(s))?,
        Stage::Encode => ctx.per_subject(|s| ctx.encode(s))?,
        Stage::Cluster => ctx.per_subject(|s| ctx.cluster(s))?,
        Stage::Evaluate => ctx.evaluate()?,
        Stage::Netstats => ctx.netstats()?,
    }
    let mut outputs = BTreeMap::new();
    for path in list_files(&dir)? {
        outputs.insert(relative(run_dir, &path), sha256_file(&path)?);
    }
    StageManifest {
        stage,
        config_hash,
        seed: config.seed,
        inputs,
        outputs,
    }
    .write(run_dir)
}

struct Ctx<'a> {
    config: &'a Config,
    run_dir: &'a Path,
}

fn file_safe(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect()
}

fn arc_header(regions: usize) -> Vec<String> {
    (1..=regions)
        .flat_map(|i| (1..=regions).map(move |j| format!("a_{i}_{j}")))
        .collect()
}

impl Ctx<'_> {
    fn per_subject(&self, f: impl Fn(usize) -> Result<()> + Sync + Send) -> Result<()> {
        (0..self.config.synth.subjects).into_par_iter().try_for_each(f)
    }

    fn subject_dir(&self, stage: Stage, subject: usize) -> PathBuf {
        self.run_dir.join(stage.name()).join(format!("subject_{subject}"))
    }

    fn create_subject_dir(&self, stage: Stage, subject: usize) -> Result<PathBuf> {
        let dir = self.subject_dir(stage, subject);
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(dir)
    }

    fn bands(&self) -> Vec<Subband> {
        Subband::all(self.config.decompose.levels)
    }

    fn load_series(&self, subject: usize) -> Result<RegionTimeSeries> {
        let dir = self.subject_dir(Stage::Synth, subject);
        Ok(read_region_series(&dir.join("regions.csv"), &dir.join("regions.manifest"))?.0)
    }

    fn load_bands(&self, stage: Stage, subject: usize, prefix: &str) -> Result<BandFeatures> {
        let dir = self.subject_dir(stage, subject);
        self.bands()
            .into_iter()
            .map(|band| Ok((band, read_matrix_csv(&dir.join(format!("{prefix}{}.csv", band.label())))?.1)))
            .collect()
    }

    fn load_stack(&self, subject: usize) -> Result<SubbandStack> {
        let signals = self
            .load_bands(Stage::Decompose, subject, "subband_")?
            .into_iter()
            .map(|(_, m)| m.reversed_axes())
            .collect();
        Ok(SubbandStack {
            signals,
            levels: self.config.decompose.levels,
            family: self.config.decompose.family,
        })
    }

    fn load_features(&self, rep: Representation, subject: usize) -> Result<BandFeatures> {
        match rep {
            Representation::Raw => pipeline::raw_features(&self.load_stack(subject)?, self.config.mesh.window),
            Representation::Mad => self.load_bands(Stage::Mesh, subject, "F_"),
            Representation::Sdae => self.load_bands(Stage::Encode, subject, "codes_"),
        }
    }

    fn synth(&self, subject: usize) -> Result<()> {
        let series = pipeline::synth_subject(self.config, subject)?;
        let dir = self.create_subject_dir(Stage::Synth, subject)?;
        write_region_series(
            &series,
            self.config.synth.tr_seconds,
            &dir.join("regions.csv"),
            &dir.join("regions.manifest"),
        )?;
        Ok(())
    }

    fn decompose(&self, subject: usize) -> Result<()> {
        let series = self.load_series(subject)?;
        let stack = pipeline::decompose(self.config, &series)?;
        let dir = self.create_subject_dir(Stage::Decompose, subject)?;
        for band in stack.subbands() {
            let path = dir.join(format!("subband_{}.csv", band.label()));
            write_matrix_csv(&path, series.region_ids(), stack.get(band)?.t())?;
        }
        Ok(())
    }

    fn mesh(&self, subject: usize) -> Result<()> {
        let stack = self.load_stack(subject)?;
        let regions = stack.signals[0].nrows();
        let mesh = self.config.mesh_config(regions);
        let mad = pipeline::mad_features(&stack, self.config.mesh.window, &mesh, &format!("subject_{subject}"))?;
        let dir = self.create_subject_dir(Stage::Mesh, subject)?;
        let header = arc_header(regions);
        for (band, f) in &mad {
            write_matrix_csv(&dir.join(format!("F_{}.csv", band.label())), &header, f.view())?;
        }
        let labels: Vec<String> = mad.iter().map(|(b, _)| b.label()).collect();
        let manifest = format!(
            "neighbors = {}\nlambda = {}\nwindow = {}\nabs_corr = {}\nflattening = row-major, column r*R + r' holds arc (r, r')\nsubbands = {}\n",
            mesh.neighbors,
            mesh.lambda,
            self.config.mesh.window,
            mesh.abs_corr,
            labels.join(" ")
        );
        write_text(&dir.join("embedding.manifest"), &manifest)
    }

    fn encode(&self, subject: usize) -> Result<()> {
        let mad = self.load_bands(Stage::Mesh, subject, "F_")?;
        let dir = self.create_subject_dir(Stage::Encode, subject)?;
        for (band, f) in &mad {
            let sdae = self.config.sdae_config(f.ncols(), pipeline::sdae_seed(self.config, subject, *band));
            let enc = pipeline::encode_band(&sdae, *band, f.view())?;
            let label = band.label();
            enc.outcome.params.save(&dir.join(format!("sdae_{label}.bin")))?;
            let header: Vec<String> = (1..=enc.codes.ncols()).map(|c| format!("code_{c}")).collect();
            write_matrix_csv(&dir.join(format!("codes_{label}.csv")), &header, enc.codes.view())?;
            write_loss(&dir.join(format!("loss_{label}.csv")), &enc.outcome.trajectory)?;
        }
        Ok(())
    }

    fn cluster(&self, subject: usize) -> Result<()> {
        let dir = self.create_subject_dir(Stage::Cluster, subject)?;
        for rep in &self.config.evaluate.representations {
            let features = self.load_features(*rep, subject)?;
            for set in pipeline::subband_sets(self.config.decompose.levels) {
                let a = pipeline::cluster(self.config, pipeline::select(&features, &set)?.view())?;
                let stem = format!("{}_{set}", rep.name());
                write_assignment(&dir.join(format!("{stem}_assignment.csv")), &a.labels)?;
                write_merges(&dir.join(format!("{stem}_merges.csv")), &a.dendrogram.merges)?;
            }
        }
        Ok(())
    }

    fn assignment(&self, subject: usize, rep: Representation, set: &str) -> Result<Vec<usize>> {
        read_assignment(&self.subject_dir(Stage::Cluster, subject).join(format!("{}_{set}_assignment.csv", rep.name())))
    }

    fn evaluate(&self) -> Result<()> {
        let rows: Vec<Vec<EvalRow>> = (0..self.config.synth.subjects)
            .into_par_iter()
            .map(|s| {
                let truth = self.load_series(s)?.window_labels(self.config.mesh.window)?;
                let mut rows = Vec::new();
                for rep in &self.config.evaluate.representations {
                    for set in pipeline::subband_sets(self.config.decompose.levels) {
                        let labels = self.assignment(s, *rep, &set)?;
                        let score = pipeline::score(&labels, &truth)?;
                        rows.push(EvalRow {
                            subject: s,
                            subband_set: set,
                            representation: rep.name().to_string(),
                            ri: score.ri,
                            ari: score.ari,
                        });
                    }
                }
                Ok(rows)
            })
            .collect::<Result<_>>()?;
        let rows: Vec<EvalRow> = rows.into_iter().flatten().collect();
        let dir = self.run_dir.join(Stage::Evaluate.name());
        write_evaluation(&dir.join("evaluation.csv"), &rows)?;
        write_report(&dir.join("report.csv"), &rows)
    }

    fn netstats(&self) -> Result<()> {
        let ns = &self.config.netstats;
        let per_subject: Vec<SubjectMedoids> = (0..self.config.synth.subjects)
            .into_par_iter()
            .map(|s| self.subject_medoids(s))
            .collect::<Result<_>>()?;
        let dir = self.run_dir.join(Stage::Netstats.name());
        let mut medoid_rows = String::from("subject,task,cluster_id,window_index\n");
        for (_, _, rows) in &per_subject {
            medoid_rows.push_str(rows);
        }
        write_text(&dir.join("medoids.csv"), &medoid_rows)?;
        let Some((ids, _, _)) = per_subject.first() else { return Ok(()) };
        let tasks: BTreeSet<&String> = per_subject.iter().flat_map(|(_, m, _)| m.keys()).collect();
        for task in tasks {
            let networks: Vec<ArrayView2<f64>> = per_subject.iter().filter_map(|(_, m, _)| m.get(task)).map(|n| n.view()).collect();
            if networks.len() < 2 {
                log::warn!("netstats: task {task:?} has a medoid in {} subject(s); precision needs 2", networks.len());
                continue;
            }
            let precision = edge_precision(&networks)?;
            let support = match ns.prune_by {
                PruneBy::Weight => prune_to_sparsity(precision.mean.view(), ns.target_fraction)?,
                PruneBy::Precision => precision.prune_by_precision(ns.target_fraction)?,
            };
            let stem = file_safe(task);
            export_edge_list(support.view(), ids, &dir.join(format!("{stem}_mean_edges.csv")))?;
            precision.export(support.view(), ids, &dir.join(format!("{stem}_precision.csv")))?;
        }
        Ok(())
    }

    /// Medoid mesh network per task for one subject, with the rows of
    /// `medoids.csv` it contributes.
    fn subject_medoids(&self, subject: usize) -> Result<SubjectMedoids> {
        let ns = &self.config.netstats;
        let series = self.load_series(subject)?;
        let truth = series.window_labels(self.config.mesh.window)?;
        let labels = self.assignment(subject, ns.representation, &ns.subband_set)?;
        let features = pipeline::select(&self.load_features(ns.representation, subject)?, &ns.subband_set)?;
        let distances = pipeline::distances(features.view())?;
        let mad_path = self.subject_dir(Stage::Mesh, subject).join(format!("F_{}.csv", ns.subband.label()));
        let mad = read_matrix_csv(&mad_path)?.1;
        let task_order: Vec<&str> = series.tasks().iter().map(|t| t.name.as_str()).collect();

        // cluster id -> (majority task, windows of that task, members)
        let k = labels.iter().copied().max().unwrap_or(0);
        let mut best: BTreeMap<&str, (usize, usize, Vec<usize>)> = BTreeMap::new();
        for c in 1..=k {
            let members: Vec<usize> = (0..labels.len()).filter(|&w| labels[w] == c).collect();
            let count = |t: &str| members.iter().filter(|&&w| truth[w] == t).count();
            let Some(task) = task_order.iter().copied().max_by(|a, b| count(a).cmp(&count(b)).then(b_first(&task_order, a, b)))
            else {
                continue;
            };
            let n = count(task);
            if n == 0 {
                continue;
            }
            match best.get(task) {
                Some((_, m, _)) if *m >= n => {}
                _ => {
                    best.insert(task, (c, n, members));
                }
            }
        }
        let out_dir = self.create_subject_dir(Stage::Netstats, subject)?;
        let mut networks = BTreeMap::new();
        let mut rows = String::new();
        for task in &task_order {
            let Some((c, _, members)) = best.get(task) else {
                log::warn!("netstats: subject {subject} has no cluster dominated by {task:?}");
                continue;
            };
            let medoid = cluster_medoid(members, &distances)?;
            let network = unflatten(mad.row(medoid))?;
            let pruned = prune_to_sparsity(network.view(), ns.target_fraction)?;
            export_edge_list(
                pruned.view(),
                series.region_ids(),
                &out_dir.join(format!("{}_medoid_edges.csv", file_safe(task))),
            )?;
            rows.push_str(&format!("{subject},{task},{c},{medoid}\n"));
            networks.insert(task.to_string(), network);
        }
        Ok((series.region_ids().to_vec(), networks, rows))
    }
}

/// Ordering that prefers the task listed first when counts tie.
fn b_first(order: &[&str], a: &str, b: &str) -> std::cmp::Ordering {
    let pos = |t: &str| order.iter().position(|x| *x == t).unwrap_or(usize::MAX);
    pos(b).cmp(&pos(a))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub subject: usize,
    pub subband_set: String,
    pub representation: String,
    pub ri: f64,
    pub ari: f64,
}

fn write_evaluation(path: &Path, rows: &[EvalRow]) -> Result<()> {
    let mut out = String::from("subject,subband_set,representation,ri,ari\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.subject, r.subband_set, r.representation, r.ri, r.ari
        ));
    }
    write_text(path, &out)
}

pub fn read_evaluation(path: &Path) -> Result<Vec<EvalRow>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.lines()
        .skip(1)
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || CliError::Artifact {
                path: path.to_path_buf(),
                detail: format!("bad row {line:?}"),
            };
            if f.len() != 5 {
                return Err(bad());
            }
            Ok(EvalRow {
                subject: f[0].parse().map_err(|_| bad())?,
                subband_set: f[1].to_string(),
                representation: f[2].to_string(),
                ri: f[3].parse().map_err(|_| bad())?,
                ari: f[4].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// Mean RI / ARI per (representation, sub-band set), in first-seen order.
pub fn summarize(rows: &[EvalRow]) -> Vec<(String, String, f64, f64)> {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut sums: BTreeMap<(String, String), (f64, f64, usize)> = BTreeMap::new();
    for r in rows {
        let key = (r.representation.clone(), r.subband_set.clone());
        let e = sums.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (0.0, 0.0, 0)
        });
        e.0 += r.ri;
        e.1 += r.ari;
        e.2 += 1;
    }
    order
        .into_iter()
        .map(|key| {
            let (ri, ari, n) = sums[&key];
            (key.0, key.1, ri / n as f64, ari / n as f64)
        })
        .collect()
}

fn write_report(path: &Path, rows: &[EvalRow]) -> Result<()> {
    let mut out = String::from("representation,subband_set,ri,ari\n");
    for (rep, set, ri, ari) in summarize(rows) {
        out.push_str(&format!("{rep},{set},{ri},{ari}\n"));
    }
    write_text(path, &out)
}

/// Rebuilds `evaluate/report.csv` from `evaluate/evaluation.csv`.
pub fn compare_representations(run_dir: &Path) -> Result<PathBuf> {
    let dir = run_dir.join(Stage::Evaluate.name());
    let rows = read_evaluation(&dir.join("evaluation.csv"))?;
    let path = dir.join("report.csv");
    write_report(&path, &rows)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use brainmesh::encoder::SdaeParams;

    #[test]
    fn dependency_closure() {
        let mut c = Config::default();
        assert_eq!(closure(&c, Stage::Mesh), vec![Stage::Synth, Stage::Decompose, Stage::Mesh]);
        c.evaluate.representations = vec![Representation::Raw, Representation::Mad];
        c.netstats.representation = Representation::Mad;
        assert!(!closure(&c, Stage::Evaluate).contains(&Stage::Encode));
        c.evaluate.representations.push(Representation::Sdae);
        assert!(closure(&c, Stage::Evaluate).contains(&Stage::Encode));
    }

    #[test]
    fn summary_means_in_first_seen_order() {
        let row = |s, set: &str, rep: &str, ri| EvalRow {
            subject: s,
            subband_set: set.into(),
            representation: rep.into(),
            ri,
            ari: ri - 0.5,
        };
        let rows = vec![row(0, "all", "mad", 0.8), row(0, "A0", "mad", 0.6), row(1, "all", "mad", 1.0), row(1, "A0", "mad", 0.6)];
        let s = summarize(&rows);
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].0.as_str(), s[0].1.as_str()), ("mad", "all"));
        assert!((s[0].2 - 0.9).abs() < 1e-15);
        assert!((s[1].3 - 0.1).abs() < 1e-15);
    }

    #[test]
    fn loaded_params_match_saved() {
        // keeps the sdae_<band>.bin format tied to the encoder's reader
        let dir = tempfile::tempdir().unwrap();
        let p = SdaeParams::zeros(&[3, 2]);
        let path = dir.path().join("m.bin");
        p.save(&path).unwrap();
        assert_eq!(SdaeParams::load(&path).unwrap(), p);
    }
}
