//! Grid search over the mesh and encoder hyper-parameters.
//!
//! The mesh grid `(p, λ)` is scored first on MAD features of the configured
//! sub-band set. The encoder grid `(ρ, λ₂)` then runs at the best mesh
//! setting. Each row is the mean over subjects.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use brainmesh::io::fmt_f64;
use brainmesh::wavelet::SubbandStack;
use brainmesh::signal::RegionTimeSeries;

use crate::artifacts::{sha256_bytes, write_text};
use crate::config::Config;
use crate::pipeline::{self, BandFeatures, Score};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub phase: &'static str,
    pub neighbors: usize,
    pub lambda: f64,
    pub rho: f64,
    pub lambda2: f64,
    pub ri: f64,
    pub ari: f64,
}

struct Subject {
    series: RegionTimeSeries,
    truth: Vec<String>,
    stack: SubbandStack,
}

fn mean(scores: &[Score]) -> (f64, f64) {
    let n = scores.len() as f64;
    (
        scores.iter().map(|s| s.ri).sum::<f64>() / n,
        scores.iter().map(|s| s.ari).sum::<f64>() / n,
    )
}

fn mad_for(config: &Config, subject: &Subject, index: usize) -> Result<BandFeatures> {
    let mesh = config.mesh_config(subject.series.regions());
    pipeline::mad_features(&subject.stack, config.mesh.window, &mesh, &format!("subject_{index}"))
}

pub fn sweep(config: &Config) -> Result<Vec<SweepRow>> {
    let set = config.sweep.subband_set.as_str();
    let subjects: Vec<Subject> = (0..config.synth.subjects)
        .into_par_iter()
        .map(|s| {
            let series = pipeline::synth_subject(config, s)?;
            let truth = series.window_labels(config.mesh.window)?;
            let stack = pipeline::decompose(config, &series)?;
            Ok(Subject { series, truth, stack })
        })
        .collect::<Result<_>>()?;
    let regions = config.synth.regions;

    let mut rows = Vec::new();
    for &p in &config.sweep.neighbors {
        if p >= regions {
            log::info!("sweep: skipping p = {p}, which needs more than {regions} regions");
            continue;
        }
        for &lambda in &config.sweep.lambda {
            let mut c = config.clone();
            c.mesh.neighbors = p;
            c.mesh.lambda = lambda;
            let scores: Vec<Score> = subjects
                .par_iter()
                .enumerate()
                .map(|(i, s)| {
                    let mad = mad_for(&c, s, i)?;
                    let a = pipeline::cluster(&c, pipeline::select(&mad, set)?.view())?;
                    pipeline::score(&a.labels, &s.truth)
                })
                .collect::<Result<_>>()?;
            let (ri, ari) = mean(&scores);
            log::info!("sweep mesh p={p} lambda={lambda}: RI {ri:.4} ARI {ari:.4}");
            rows.push(SweepRow {
                phase: "mesh",
                neighbors: p,
                lambda,
                rho: config.encode.rho,
                lambda2: config.encode.lambda2,
                ri,
                ari,
            });
        }
    }
    // ties keep the earlier grid point
    let best = rows.iter().fold(None::<&SweepRow>, |best, r| match best {
        Some(b) if b.ri >= r.ri => Some(b),
        _ => Some(r),
    });
    let mut tuned = config.clone();
    if let Some(b) = best {
        tuned.mesh.neighbors = b.neighbors;
        tuned.mesh.lambda = b.lambda;
    }
    let mads: Vec<BandFeatures> = subjects
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mad = mad_for(&tuned, s, i)?;
            Ok(mad.into_iter().filter(|(b, _)| set == "all" || b.label() == set).collect())
        })
        .collect::<Result<_>>()?;

    for &rho in &config.sweep.rho {
        for &lambda2 in &config.sweep.lambda2 {
            let mut c = tuned.clone();
            c.encode.rho = rho;
            c.encode.lambda2 = lambda2;
            let scores: Vec<Score> = subjects
                .par_iter()
                .zip(&mads)
                .enumerate()
                .map(|(i, (s, mad))| {
                    let codes: BandFeatures = pipeline::encode_subject(&c, i, mad)?
                        .into_iter()
                        .map(|e| (e.band, e.codes))
                        .collect();
                    let a = pipeline::cluster(&c, pipeline::select(&codes, set)?.view())?;
                    pipeline::score(&a.labels, &s.truth)
                })
                .collect::<Result<_>>()?;
            let (ri, ari) = mean(&scores);
            log::info!("sweep sdae rho={rho} lambda2={lambda2}: RI {ri:.4} ARI {ari:.4}");
            rows.push(SweepRow {
                phase: "sdae",
                neighbors: tuned.mesh.neighbors,
                lambda: tuned.mesh.lambda,
                rho,
                lambda2,
                ri,
                ari,
            });
        }
    }
    Ok(rows)
}

pub fn render(rows: &[SweepRow]) -> String {
    let mut out = String::from("phase,neighbors,lambda,rho,lambda2,ri,ari\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.phase,
            r.neighbors,
            fmt_f64(r.lambda),
            fmt_f64(r.rho),
            fmt_f64(r.lambda2),
            fmt_f64(r.ri),
            fmt_f64(r.ari)
        ));
    }
    out
}

/// Runs the sweep and writes `sweep/sweep.csv` with a manifest entry.
pub fn run(config: &Config, run_dir: &Path) -> Result<PathBuf> {
    let rows = sweep(config)?;
    let text = render(&rows);
    let dir = run_dir.join("sweep");
    let path = dir.join("sweep.csv");
    write_text(&path, &text)?;
    let manifest = format!(
        "stage = sweep\nconfig_hash = {}\nseed = {}\noutput sweep/sweep.csv = {}\n",
        sha256_bytes(format!("{:?}", config).as_bytes()),
        config.seed,
        sha256_bytes(text.as_bytes())
    );
    write_text(&dir.join(crate::artifacts::MANIFEST_NAME), &manifest)?;
    Ok(path)
}
