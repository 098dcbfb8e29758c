mod common;

use common::*;
use mpec::features::{channel_scores, covariance, fuse, rbf_channel_kernel, FeatureConfig, Trial};
use mpec::kmeans::{inertia, kmeans_fit, ClusterConfig};
use mpec::linalg::{is_spd, nearest_spd, PD_TOLERANCE, SPD_FLOOR};
use mpec::manifold::{airm_distance, chord_tangent_angle};
use mpec::SpdMatrix;
use proptest::prelude::*;
use rand::Rng;

fn gaussian_trial(seed: u64, channels: usize, samples: usize, label: usize) -> Trial {
    let mut r = rng(seed);
    let data = (0..channels * samples).map(|_| gaussian(&mut r)).collect();
    Trial::new(channels, samples, data, label).unwrap()
}

fn feature_config(n: usize, w_cov: f64) -> FeatureConfig {
    FeatureConfig {
        selected_channels: (0..n).collect(),
        sigma: 0.1,
        w_cov,
        w_rbf: 1.0 - w_cov,
        pd_floor: SPD_FLOOR,
    }
}

fn permute_channels(t: &Trial, perm: &[usize]) -> Trial {
    let data = perm.iter().flat_map(|&c| t.channel(c).to_vec()).collect();
    Trial::new(t.channels(), t.samples(), data, 0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kernel_is_symmetric_with_unit_diagonal(seed in any::<u64>(), n in 1usize..7, t in 2usize..60, sigma in 0.01f64..5.0) {
        let k = rbf_channel_kernel(&gaussian_trial(seed, n, t, 0), sigma).unwrap();
        for i in 0..n {
            prop_assert_eq!(k.get(i, i), 1.0);
            for j in 0..n {
                prop_assert_eq!(k.get(i, j), k.get(j, i));
            }
        }
    }

    #[test]
    fn kernel_follows_channel_permutations(seed in any::<u64>(), n in 2usize..7, t in 2usize..40) {
        let trial = gaussian_trial(seed, n, t, 0);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut r = rng(seed ^ 0x9e37);
        for i in (1..n).rev() {
            perm.swap(i, r.gen_range(0..=i));
        }
        let k = rbf_channel_kernel(&trial, 0.7).unwrap();
        let kp = rbf_channel_kernel(&permute_channels(&trial, &perm), 0.7).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert!((kp.get(i, j) - k.get(perm[i], perm[j])).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn channel_scores_ignore_positive_channel_scaling(seed in any::<u64>(), scales in prop::collection::vec(0.05f64..20.0, 4)) {
        let trials: Vec<Trial> = (0..12)
            .map(|i| {
                let mut t = gaussian_trial(seed.wrapping_add(i), 4, 50, (i % 2) as usize);
                if i % 2 == 1 {
                    t = Trial::new(4, 50, t.data().iter().enumerate().map(|(k, v)| if k < 50 { 2.0 * v } else { *v }).collect(), 1).unwrap();
                }
                t
            })
            .collect();
        let scaled: Vec<Trial> = trials
            .iter()
            .map(|t| {
                let data = t.data().iter().enumerate().map(|(k, v)| v * scales[k / 50]).collect();
                Trial::new(4, 50, data, t.label).unwrap()
            })
            .collect();
        let a = channel_scores(&trials).unwrap();
        let b = channel_scores(&scaled).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-10, "{x} vs {y}");
        }
    }
}

#[test]
fn covariance_of_noise_is_spd_after_flooring() {
    for seed in 0..50 {
        let n = 2 + (seed as usize) % 6;
        let c = covariance(&gaussian_trial(seed, n, n + 5 + seed as usize, 0)).unwrap();
        assert!(is_spd(&nearest_spd(&c, SPD_FLOOR).unwrap(), PD_TOLERANCE));
    }
}

#[test]
fn fused_features_are_spd_for_every_weight_pair() {
    let mut r = rng(0xf05e);
    for case in 0..100 {
        let n = 1 + case % 6;
        // short trials keep the covariance rank deficient on purpose
        let t = 2 + case % 4;
        let trial = gaussian_trial(r.gen(), n, t, 0);
        let w = r.gen::<f64>();
        let cfg = feature_config(n, w);
        let f = fuse(&covariance(&trial).unwrap(), &rbf_channel_kernel(&trial, 0.1).unwrap(), &cfg).unwrap();
        assert!(is_spd(&f, PD_TOLERANCE), "case {case}, w_cov {w}");
    }
}

fn cluster_cfg(k: usize, w1: f64, seed: u64) -> ClusterConfig {
    ClusterConfig {
        k,
        w1,
        w2: 1.0 - w1,
        max_iter: 100,
        seed,
        min_cluster_size: 1,
        restarts: 1,
    }
}

fn blob_points(seed: u64, n: usize, per_blob: usize) -> Vec<SpdMatrix> {
    let mut r = rng(seed);
    let centers: Vec<SpdMatrix> = (0..3).map(|_| random_spd_cond(&mut r, n, 3.0)).collect();
    centers
        .iter()
        .flat_map(|c| {
            (0..per_blob)
                .map(|_| {
                    let e = random_spd_cond(&mut r, n, 0.6);
                    let m = mpec::linalg::apply_spectral(c, mpec::linalg::Spectral::Sqrt).unwrap();
                    spd_from_dense(n, &matmul(&matmul(m.as_slice(), e.as_slice(), n), m.as_slice(), n))
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn inertia_never_increases_without_the_angle_term(seed in any::<u64>()) {
        let points = blob_points(seed, 3, 8);
        let model = kmeans_fit(&points, &cluster_cfg(3, 1.0, seed)).unwrap();
        for w in model.inertia_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", model.inertia_history);
        }
        let recomputed = inertia(&points, &model.centroids, &model.assignments).unwrap();
        prop_assert!(recomputed <= model.final_inertia() * (1.0 + 1e-12));
    }

    #[test]
    fn partition_survives_congruence(seed in any::<u64>()) {
        let points = blob_points(seed, 3, 6);
        let mut r = rng(seed ^ 0xc0);
        let m = random_invertible(&mut r, 3);
        let moved: Vec<SpdMatrix> = points
            .iter()
            .map(|p| spd_from_dense(3, &matmul(&matmul(&m, p.as_slice(), 3), &transpose(&m, 3), 3)))
            .collect();
        let cfg = cluster_cfg(3, 1.0, seed);
        let a = kmeans_fit(&points, &cfg).unwrap();
        let b = kmeans_fit(&moved, &cfg).unwrap();
        prop_assert_eq!(a.assignments, b.assignments);
    }

    #[test]
    fn clustering_is_deterministic(seed in any::<u64>(), w1 in 0.0f64..=1.0) {
        let points = blob_points(seed, 2, 5);
        let cfg = ClusterConfig { restarts: 3, ..cluster_cfg(3, w1, seed) };
        let a = kmeans_fit(&points, &cfg).unwrap();
        let b = kmeans_fit(&points, &cfg).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn stored_ranges_normalize_training_metrics_into_the_unit_interval(seed in any::<u64>(), w1 in 0.0f64..=1.0) {
        let points = blob_points(seed, 3, 5);
        let model = kmeans_fit(&points, &cluster_cfg(3, w1, seed)).unwrap();
        prop_assert!(model.norm_distance.min <= model.norm_distance.max);
        prop_assert!(model.norm_angle.min <= model.norm_angle.max);
        for p in &points {
            for c in &model.centroids {
                let d = model.norm_distance.normalize(airm_distance(p, c).unwrap());
                let a = model.norm_angle.normalize(chord_tangent_angle(p, c).unwrap());
                let combined = w1 * d + (1.0 - w1) * a;
                prop_assert!((0.0..=1.0).contains(&d) && (0.0..=1.0).contains(&a));
                prop_assert!((0.0..=1.0 + 1e-12).contains(&combined));
            }
        }
        prop_assert_eq!(model.assignments.len(), points.len());
        prop_assert!(model.assignments.iter().all(|&a| a < model.k()));
    }
}

#[test]
fn restarts_never_worsen_the_kept_run() {
    for seed in 0..10 {
        let points = blob_points(seed, 3, 6);
        let single = kmeans_fit(&points, &cluster_cfg(3, 1.0, seed)).unwrap();
        let many = kmeans_fit(&points, &ClusterConfig { restarts: 8, ..cluster_cfg(3, 1.0, seed) }).unwrap();
        assert!(many.final_inertia() <= single.final_inertia());
    }
}
