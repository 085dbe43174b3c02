use std::f64::consts::FRAC_PI_2;

use approx::assert_relative_eq;
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use brainmesh::clustering::{correlation_distance, hierarchical_cluster, Linkage};
use brainmesh::encoder::{corrupt, SdaeParams};
use brainmesh::mesh::fit_local_mesh;
use brainmesh::metrics::{adjusted_rand_index, rand_index};
use brainmesh::netstats::{edge_precision, prune_to_sparsity, surviving_edge_count, EdgePrecision};
use brainmesh::wavelet::{dwt_decompose, max_levels, reconstruct_subband, WaveletFamily};

fn family() -> impl Strategy<Value = WaveletFamily> {
    prop_oneof![
        Just(WaveletFamily::Haar),
        Just(WaveletFamily::Db2),
        Just(WaveletFamily::Db4)
    ]
}

fn signal(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, len)
}

fn labels(n: usize, k: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..k, n)
}

fn square(n: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-1.0..1.0f64, n * n).prop_map(move |v| Array2::from_shape_vec((n, n), v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn subbands_sum_to_signal(x in signal(8..300), family in family(), level_pick in 0usize..100) {
        let levels = 1 + level_pick % max_levels(x.len());
        let c = dwt_decompose(Array1::from(x.clone()).view(), levels, family).unwrap();
        let mut sum = reconstruct_subband(&c, levels).unwrap();
        for j in levels + 1..=2 * levels {
            for (s, v) in sum.iter_mut().zip(reconstruct_subband(&c, j).unwrap()) {
                *s += v;
            }
        }
        prop_assert_eq!(sum.len(), x.len());
        let scale = x.iter().map(|v| v.abs()).fold(1.0, f64::max);
        for (s, v) in sum.iter().zip(&x) {
            prop_assert!((s - v).abs() <= 1e-9 * scale);
        }
        prop_assert_eq!(reconstruct_subband(&c, 0).unwrap(), x);
    }

    #[test]
    fn subband_reconstruction_is_linear(
        pair in (16usize..200).prop_flat_map(|n| (signal(n..n + 1), signal(n..n + 1))),
        alpha in -3.0..3.0f64,
        family in family(),
    ) {
        let (x, y) = pair;
        let levels = max_levels(x.len()).min(3);
        let z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + b).collect();
        let cx = dwt_decompose(Array1::from(x).view(), levels, family).unwrap();
        let cy = dwt_decompose(Array1::from(y).view(), levels, family).unwrap();
        let cz = dwt_decompose(Array1::from(z).view(), levels, family).unwrap();
        for j in 1..=2 * levels {
            let rx = reconstruct_subband(&cx, j).unwrap();
            let ry = reconstruct_subband(&cy, j).unwrap();
            let rz = reconstruct_subband(&cz, j).unwrap();
            for t in 0..rz.len() {
                prop_assert!((rz[t] - (alpha * rx[t] + ry[t])).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn rand_indices_are_symmetric_and_bounded(pair in (2usize..40).prop_flat_map(|n| (labels(n, 5), labels(n, 5)))) {
        let (p, t) = pair;
        let ri = rand_index(&p, &t).unwrap();
        prop_assert!((0.0..=1.0).contains(&ri));
        prop_assert_eq!(ri, rand_index(&t, &p).unwrap());
        let ari = adjusted_rand_index(&p, &t).unwrap();
        prop_assert!(ari <= 1.0 + 1e-12);
        prop_assert!((ari - adjusted_rand_index(&t, &p).unwrap()).abs() <= 1e-12);
        prop_assert_eq!(rand_index(&p, &p).unwrap(), 1.0);
        prop_assert_eq!(adjusted_rand_index(&p, &p).unwrap(), 1.0);
    }

    #[test]
    fn rand_indices_ignore_label_names(pair in (2usize..40).prop_flat_map(|n| (labels(n, 5), labels(n, 5))), shift in 1usize..50) {
        let (p, t) = pair;
        let renamed: Vec<String> = p.iter().map(|l| format!("c{}", (l * 7 + shift) % 97)).collect();
        prop_assert_eq!(rand_index(&p, &t).unwrap(), rand_index(&renamed, &t).unwrap());
        prop_assert!((adjusted_rand_index(&p, &t).unwrap() - adjusted_rand_index(&renamed, &t).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn pruning_keeps_exact_count_and_is_idempotent(net in (5usize..40).prop_flat_map(square), fraction in 0.005..0.5f64) {
        let r = net.nrows();
        let mut net = net;
        for i in 0..r {
            net[[i, i]] = 0.0;
        }
        let expected = surviving_edge_count(r, fraction).unwrap();
        let nonzero = net.iter().filter(|&&v| v != 0.0).count();
        let once = prune_to_sparsity(net.view(), fraction).unwrap();
        prop_assert_eq!(once.iter().filter(|&&v| v != 0.0).count(), expected.min(nonzero));
        for (k, o) in once.iter().zip(net.iter()) {
            prop_assert!(*k == 0.0 || k == o);
        }
        prop_assert_eq!(prune_to_sparsity(once.view(), fraction).unwrap(), once);
    }

    #[test]
    fn precision_ignores_subject_order(nets in prop::collection::vec(square(6), 2..8), rot in 0usize..8) {
        let views: Vec<_> = nets.iter().map(|n| n.view()).collect();
        let mut rotated = views.clone();
        let len = rotated.len();
        rotated.rotate_left(rot % len);
        let a = edge_precision(&views).unwrap();
        let b = edge_precision(&rotated).unwrap();
        for (x, y) in a.precision.iter().zip(b.precision.iter()) {
            match (x, y) {
                (EdgePrecision::Finite(x), EdgePrecision::Finite(y)) => prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0)),
                (x, y) => prop_assert_eq!(x, y),
            }
        }
    }

    #[test]
    fn corruption_zeroes_about_the_requested_fraction(rate in 0.0..0.9f64, seed in any::<u64>()) {
        let ones = Array2::<f64>::ones((100, 100));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = corrupt(ones.view(), rate, &mut rng);
        let zeroed = c.iter().filter(|&&v| v == 0.0).count() as f64 / 10_000.0;
        prop_assert!((zeroed - rate).abs() < 0.03, "rate {} zeroed {}", rate, zeroed);
        prop_assert!(c.iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn codes_stay_inside_the_arctan_range(x in prop::collection::vec(-1e300..1e300f64, 12), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = SdaeParams::init(&[12, 9, 5, 3], &mut rng);
        let input = Array2::from_shape_vec((1, 12), x).unwrap();
        let codes = params.encode(input.view()).unwrap();
        prop_assert!(codes.iter().all(|c| c.abs() < FRAC_PI_2));
    }

    #[test]
    fn ridge_shrinks_with_lambda(
        window in prop::collection::vec(-1.0..1.0f64, 5 * 12).prop_map(|v| Array2::from_shape_vec((5, 12), v).unwrap()),
        lambda in 0.01..20.0f64,
        factor in 1.1..10.0f64,
    ) {
        let neighbors = [1, 2, 3, 4];
        let norm = |a: Vec<f64>| a.iter().map(|v| v * v).sum::<f64>();
        let small = norm(fit_local_mesh(0, &neighbors, window.view(), lambda).unwrap());
        let large = norm(fit_local_mesh(0, &neighbors, window.view(), lambda * factor).unwrap());
        prop_assert!(large <= small * (1.0 + 1e-12));
    }

    #[test]
    fn average_linkage_cut_is_well_formed(rows in prop::collection::vec(-1.0..1.0f64, 12 * 6), k in 1usize..12) {
        let features = Array2::from_shape_vec((12, 6), rows).unwrap();
        let d = correlation_distance(features.view()).unwrap();
        let a = hierarchical_cluster(&d, k, Linkage::Average).unwrap();
        let mut used: Vec<usize> = a.labels.clone();
        used.sort();
        used.dedup();
        prop_assert_eq!(used, (1..=k).collect::<Vec<_>>());
        let heights: Vec<f64> = a.dendrogram.merges.iter().map(|m| m.height).collect();
        prop_assert!(heights.windows(2).all(|w| w[0] <= w[1] + 1e-12));
    }
}

#[test]
fn surviving_counts_at_reference_sizes() {
    assert_eq!(surviving_edge_count(20, 0.01).unwrap(), 4);
    assert_eq!(surviving_edge_count(90, 0.01).unwrap(), 81);
    assert_relative_eq!(0.01 * 90.0 * 89.0, 80.1, epsilon = 1e-9);
}
