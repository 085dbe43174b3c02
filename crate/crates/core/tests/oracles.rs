use approx::assert_relative_eq;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use brainmesh::clustering::{agglomerate, hierarchical_cluster, DistanceMatrix, Linkage};
use brainmesh::datagen::{generate_session, SynthSpec};
use brainmesh::encoder::{self, LossTerms, SdaeConfig, SdaeParams};
use brainmesh::metrics::adjusted_rand_index;

fn random_distances(n: usize, rng: &mut impl Rng) -> DistanceMatrix {
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..i {
            let v = rng.random_range(0.0..2.0);
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    DistanceMatrix::from_matrix(d).unwrap()
}

/// Average linkage straight from the definition: cluster distance is the mean
/// over all cross pairs, recomputed from scratch every step.
fn naive_average_linkage(d: &Array2<f64>, k: usize) -> (Vec<f64>, Vec<usize>) {
    let n = d.nrows();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut heights = Vec::new();
    let mut labels_at_k = None;
    while clusters.len() > 1 {
        if clusters.len() == k {
            labels_at_k = Some(labels_of(&clusters, n));
        }
        let mut best = (f64::INFINITY, 0, 0);
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let sum: f64 = clusters[a]
                    .iter()
                    .flat_map(|&i| clusters[b].iter().map(move |&j| d[[i, j]]))
                    .sum();
                let avg = sum / (clusters[a].len() * clusters[b].len()) as f64;
                if avg < best.0 {
                    best = (avg, a, b);
                }
            }
        }
        let (h, a, b) = best;
        heights.push(h);
        let moved = clusters.remove(b);
        clusters[a].extend(moved);
    }
    if k == 1 {
        labels_at_k = Some(vec![0; n]);
    }
    (heights, labels_at_k.unwrap())
}

fn labels_of(clusters: &[Vec<usize>], n: usize) -> Vec<usize> {
    let mut labels = vec![0; n];
    for (c, members) in clusters.iter().enumerate() {
        for &m in members {
            labels[m] = c;
        }
    }
    labels
}

#[test]
fn average_linkage_matches_naive_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..300 {
        let n = 2 + trial % 7;
        let d = random_distances(n, &mut rng);
        let k = 1 + trial % n;
        let (heights, labels) = naive_average_linkage(&d.data, k);
        let dendrogram = agglomerate(&d, Linkage::Average);
        for (m, h) in dendrogram.merges.iter().zip(&heights) {
            assert_relative_eq!(m.height, *h, max_relative = 1e-12);
        }
        let got = hierarchical_cluster(&d, k, Linkage::Average).unwrap();
        assert_eq!(adjusted_rand_index(&got.labels, &labels).unwrap(), 1.0, "trial {trial}");
    }
}

/// Fourth-order central difference. At h = 1e-3 truncation is ~1e-12 and
/// round-off ~ε·|f|/h ≈ 2e-12 for losses near 10.
fn richardson(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (8.0 * (f(x + h) - f(x - h)) - (f(x + 2.0 * h) - f(x - 2.0 * h))) / (12.0 * h)
}

#[test]
fn analytic_gradients_match_richardson_differences() {
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes = [20, 16, 8, 4, 7];
        let mut cfg = SdaeConfig::for_input(20);
        cfg.layer_sizes = sizes.to_vec();
        cfg.rho = 0.05;
        cfg.lambda2 = 0.01;
        let params = SdaeParams::init(&sizes, &mut rng);
        let target = Array2::from_shape_fn((6, 20), |_| rng.random_range(-1.0..1.0));
        let input = encoder::corrupt(target.view(), 0.2, &mut rng);
        let (_, g) = encoder::grad_with(&params, input.view(), target.view(), &cfg, LossTerms::ALL, None).unwrap();
        for l in 0..params.weights.len() {
            let cols = params.weights[l].ncols();
            for idx in 0..params.weights[l].len() {
                let (i, j) = (idx / cols, idx % cols);
                let numeric = richardson(
                    |v| {
                        let mut p = params.clone();
                        p.weights[l][[i, j]] = v;
                        encoder::loss(&p, input.view(), target.view(), &cfg).unwrap().total
                    },
                    params.weights[l][[i, j]],
                    1e-3,
                );
                let a = g.weights[l][[i, j]];
                assert!(
                    (a - numeric).abs() <= 1e-6 * a.abs() + 1e-11,
                    "layer {l} ({i},{j}): analytic {a:e} numeric {numeric:e}"
                );
            }
        }
    }
}

#[test]
fn training_lowers_the_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data = Array2::from_shape_fn((32, 12), |(r, c)| ((r % 4) as f64 - 1.5) * 0.4 + 0.05 * c as f64 + rng.random_range(-0.1..0.1));
    let mut cfg = SdaeConfig::for_input(12);
    cfg.layer_sizes = vec![12, 10, 6, 3];
    cfg.epochs = 400;
    cfg.learning_rate = 0.05;
    cfg.sparsity_weight = 0.01;
    let out = encoder::train(data.view(), &cfg).unwrap();
    let early: f64 = out.trajectory[..20].iter().map(|e| e.loss).sum::<f64>() / 20.0;
    let late: f64 = out.trajectory[380..].iter().map(|e| e.loss).sum::<f64>() / 20.0;
    assert!(late < 0.5 * early, "early {early} late {late}");
    let clean = encoder::loss(&out.params, data.view(), data.view(), &cfg).unwrap();
    assert!(clean.total < early);
}

#[test]
fn synthetic_sessions_are_reproducible() {
    let a = generate_session(&SynthSpec::planted(12, 7, 3)).unwrap();
    let b = generate_session(&SynthSpec::planted(12, 7, 3)).unwrap();
    let c = generate_session(&SynthSpec::planted(12, 7, 4)).unwrap();
    assert_eq!(a.data(), b.data());
    assert_ne!(a.data(), c.data());
    assert!(a.data().iter().all(|v| v.is_finite()));
}
