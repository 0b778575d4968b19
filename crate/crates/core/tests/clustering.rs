mod common;

use std::collections::{BTreeMap, BTreeSet};

use dataset_equity::clustering::{dbscan, hdbscan, mutual_reachability_mst, region_query, ClusterSelection};
use dataset_equity::metrics::adjusted_rand_index;
use dataset_equity::{DbscanParams, HdbscanParams, Matrix, NOISE};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_points(seed: u64, n: usize, dim: usize) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_vec(n, dim, (0..n * dim).map(|_| rng.random_range(0.0..10.0)).collect())
}

fn permuted(x: &Matrix, perm: &[usize]) -> Matrix {
    let rows: Vec<&[f64]> = perm.iter().map(|&i| x.row(i)).collect();
    Matrix::from_rows(&rows)
}

fn core_points(x: &Matrix, p: &DbscanParams) -> Vec<bool> {
    (0..x.rows()).map(|i| region_query(x, i, p.eps).len() >= p.min_samples).collect()
}

/// Sets of original indices, one per cluster, restricted to `keep`.
fn partition(labels: &[i64], keep: impl Fn(usize) -> bool) -> BTreeSet<BTreeSet<usize>> {
    let mut groups: BTreeMap<i64, BTreeSet<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        if l != NOISE && keep(i) {
            groups.entry(l).or_default().insert(i);
        }
    }
    groups.into_values().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    /// Reordering the input may move border points between adjacent clusters,
    /// but core points, their grouping and the noise set are fixed.
    #[test]
    fn dbscan_permutation_keeps_cores_and_noise(
        seed in any::<u64>(),
        n in 10usize..80,
        eps in 0.5f64..2.5,
        min_samples in 1usize..6,
    ) {
        let x = random_points(seed, n, 2);
        let params = DbscanParams { eps, min_samples };
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x9e37));
        let y = permuted(&x, &perm);

        let a = dbscan(&x, &params).unwrap();
        let b = dbscan(&y, &params).unwrap();
        let mut b_labels = vec![0i64; n];
        for (k, &orig) in perm.iter().enumerate() {
            b_labels[orig] = b.labels()[k];
        }
        let core = core_points(&x, &params);
        prop_assert_eq!(
            partition(a.labels(), |i| core[i]),
            partition(&b_labels, |i| core[i])
        );
        let noise = |l: &[i64]| -> Vec<usize> { (0..n).filter(|&i| l[i] == NOISE).collect() };
        prop_assert_eq!(noise(a.labels()), noise(&b_labels));
        prop_assert_eq!(a.n_clusters(), b.n_clusters());
    }

    /// Growing eps only merges core groups and never creates noise.
    #[test]
    fn dbscan_eps_monotonicity(
        seed in any::<u64>(),
        n in 10usize..80,
        eps in 0.3f64..2.0,
        grow in 0.0f64..1.5,
        min_samples in 1usize..6,
    ) {
        let x = random_points(seed, n, 2);
        let small = DbscanParams { eps, min_samples };
        let large = DbscanParams { eps: eps + grow, min_samples };
        let a = dbscan(&x, &small).unwrap();
        let b = dbscan(&x, &large).unwrap();
        for i in 0..n {
            if b.labels()[i] == NOISE {
                prop_assert_eq!(a.labels()[i], NOISE);
            }
        }
        let core = core_points(&x, &small);
        for group in partition(a.labels(), |i| core[i]) {
            let targets: BTreeSet<i64> = group.iter().map(|&i| b.labels()[i]).collect();
            prop_assert_eq!(targets.len(), 1);
            prop_assert!(!targets.contains(&NOISE));
        }
    }

    #[test]
    fn mst_weight_is_permutation_invariant(
        seed in any::<u64>(),
        n in 3usize..60,
        min_samples in 1usize..4,
    ) {
        let x = random_points(seed, n, 3);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(!seed));
        let y = permuted(&x, &perm);
        let total = |m: &Matrix| -> f64 {
            mutual_reachability_mst(m, min_samples.min(n)).unwrap().iter().map(|e| e.weight).sum()
        };
        let (a, b) = (total(&x), total(&y));
        prop_assert_eq!(mutual_reachability_mst(&x, min_samples.min(n)).unwrap().len(), n - 1);
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0), "{} vs {}", a, b);
    }

    /// Every sample gets exactly one label, and every cluster label is used.
    #[test]
    fn hdbscan_labels_are_contiguous(seed in any::<u64>(), n in 5usize..80, mcs in 2usize..8) {
        let x = random_points(seed, n, 2);
        let params = HdbscanParams { min_cluster_size: mcs.min(n), min_samples: 3.min(n), selection: ClusterSelection::ExcessOfMass };
        let (a, _) = hdbscan(&x, &params).unwrap();
        prop_assert_eq!(a.n_samples(), n);
        let sizes = a.cluster_sizes();
        prop_assert!(sizes.iter().all(|&s| s >= params.min_cluster_size));
        prop_assert_eq!(sizes.iter().sum::<usize>() + a.noise_count(), n);
    }
}

#[test]
fn dbscan_separates_blobs_and_isolates_outlier() {
    let (mut x, truth) = common::gaussian_blobs(&[vec![0.0, 0.0], vec![10.0, 0.0]], &[30, 20], 0.3, 11);
    x = {
        let mut rows: Vec<Vec<f64>> = x.iter_rows().map(|r| r.to_vec()).collect();
        rows.push(vec![5.0, 40.0]);
        Matrix::from_rows(&rows)
    };
    let a = dbscan(&x, &DbscanParams { eps: 1.0, min_samples: 4 }).unwrap();
    assert_eq!(a.n_clusters(), 2);
    assert_eq!(a.labels()[50], NOISE);
    let truth: Vec<i64> = truth.iter().map(|&t| t as i64).collect();
    assert_eq!(adjusted_rand_index(&a.labels()[..50], &truth), 1.0);
}

#[test]
fn hdbscan_finds_well_separated_blobs() {
    let centers = [vec![0.0, 0.0, 0.0], vec![8.0, 0.0, 0.0], vec![0.0, 8.0, 0.0]];
    let (x, truth) = common::gaussian_blobs(&centers, &[60, 40, 25], 0.5, 21);
    let params = HdbscanParams { min_cluster_size: 10, min_samples: 5, selection: ClusterSelection::ExcessOfMass };
    let (a, tree) = hdbscan(&x, &params).unwrap();
    let truth: Vec<i64> = truth.iter().map(|&t| t as i64).collect();
    assert_eq!(a.n_clusters(), 3);
    assert!(adjusted_rand_index(a.labels(), &truth) > 0.95);
    assert!(!tree.clusters.is_empty());
}
