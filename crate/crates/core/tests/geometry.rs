mod common;

use common::*;
use mpec::linalg::{apply_spectral, nearest_spd, sym_eig, Spectral};
use mpec::manifold::{
    airm_distance, chord_tangent_angle, exp_map, frechet_mean, log_map, FRECHET_MAX_ITER, FRECHET_TOL,
};
use mpec::tangent::{project_cluster, unvectorize_sym, vectorize_sym};
use mpec::{SpdMatrix, SymMatrix};
use proptest::prelude::*;

fn dense(m: &SymMatrix) -> Vec<f64> {
    m.as_slice().to_vec()
}

fn congruent(m: &[f64], a: &SpdMatrix) -> SpdMatrix {
    let n = a.dim();
    spd_from_dense(n, &matmul(&matmul(m, a.as_slice(), n), &transpose(m, n), n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn log_then_exp_recovers_the_matrix(a in spd_strategy(1, 8)) {
        let back = apply_spectral(&apply_spectral(&a, Spectral::Log).unwrap(), Spectral::Exp).unwrap();
        prop_assert!(rel_diff(back.as_slice(), a.as_slice()) <= 1e-8);
    }

    #[test]
    fn square_root_and_inverse_square_root(a in spd_strategy(1, 8)) {
        let n = a.dim();
        let s = dense(&apply_spectral(&a, Spectral::Sqrt).unwrap());
        prop_assert!(rel_diff(&matmul(&s, &s, n), a.as_slice()) <= 1e-8);
        let w = dense(&apply_spectral(&a, Spectral::InvSqrt).unwrap());
        let whitened = matmul(&matmul(&w, a.as_slice(), n), &w, n);
        prop_assert!(rel_diff(&whitened, &identity(n)) <= 1e-8);
    }

    #[test]
    fn two_by_two_eigenvalues_match_the_quadratic(a in -5.0f64..5.0, b in -5.0f64..5.0, d in -5.0f64..5.0) {
        let m = SymMatrix::new(2, vec![a, b, b, d]).unwrap();
        let eig = sym_eig(&m).unwrap();
        let mid = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        let scale = 1.0 + a.abs() + b.abs() + d.abs();
        prop_assert!((eig.values[0] - (mid + rad)).abs() <= 1e-12 * scale);
        prop_assert!((eig.values[1] - (mid - rad)).abs() <= 1e-12 * scale);
    }

    #[test]
    fn nearest_spd_is_idempotent(s in sym_strategy(1, 6, 3.0)) {
        let once = nearest_spd(&s, 1e-8).unwrap();
        let twice = nearest_spd(&once, 1e-8).unwrap();
        prop_assert!(rel_diff(twice.as_slice(), once.as_slice()) <= 1e-12);
    }

    #[test]
    fn distance_is_affine_and_inversion_invariant((a, b) in spd_pair_strategy(2, 6), seed in any::<u64>()) {
        let n = a.dim();
        let mut r = rng(seed);
        let m = random_invertible(&mut r, n);
        let d = airm_distance(&a, &b).unwrap();
        prop_assume!(d > 1e-6);
        let dm = airm_distance(&congruent(&m, &a), &congruent(&m, &b)).unwrap();
        prop_assert!((dm - d).abs() <= 1e-8 * d);
        let inv = |x: &SpdMatrix| spd_from_dense(n, &inverse(x.as_slice(), n));
        let di = airm_distance(&inv(&a), &inv(&b)).unwrap();
        prop_assert!((di - d).abs() <= 1e-8 * d);
    }

    #[test]
    fn distance_is_symmetric((a, b) in spd_pair_strategy(1, 6)) {
        prop_assert_eq!(airm_distance(&a, &b).unwrap(), airm_distance(&b, &a).unwrap());
    }

    #[test]
    fn exp_inverts_log((a, b) in spd_pair_strategy(1, 6)) {
        let back = exp_map(&a, &log_map(&a, &b).unwrap()).unwrap();
        prop_assert!(rel_diff(back.as_slice(), b.as_slice()) <= 1e-8);
    }

    #[test]
    fn frechet_mean_ignores_input_order(points in prop::collection::vec(spd_strategy(3, 3), 2..6), shift in 0usize..6) {
        let mut rotated = points.clone();
        rotated.rotate_left(shift % points.len());
        rotated.reverse();
        let a = frechet_mean(&points, FRECHET_TOL, FRECHET_MAX_ITER).unwrap().mean;
        let b = frechet_mean(&rotated, FRECHET_TOL, FRECHET_MAX_ITER).unwrap().mean;
        prop_assert!(airm_distance(&a, &b).unwrap() <= 1e-8);
    }

    #[test]
    fn chord_tangent_angle_is_bounded((p, c) in spd_pair_strategy(1, 5)) {
        let theta = chord_tangent_angle(&p, &c).unwrap();
        prop_assert!((0.0..=std::f64::consts::FRAC_PI_2 + 1e-12).contains(&theta));
        if p.dim() == 1 {
            prop_assert_eq!(theta, 0.0);
        }
    }

    #[test]
    fn vectorization_is_an_isometry(t in sym_strategy(1, 8, 10.0)) {
        let v = vectorize_sym(&t);
        prop_assert_eq!(v.len(), t.dim() * (t.dim() + 1) / 2);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((norm - t.frobenius_norm()).abs() <= 1e-12 * (1.0 + norm));
        // Off-diagonal weighting by √2 maps some adjacent doubles onto one
        // value, so the inverse is exact on the vector and within an ulp on
        // the matrix.
        let back = unvectorize_sym(&v, t.dim()).unwrap();
        prop_assert_eq!(vectorize_sym(&back), v);
        for (x, y) in back.as_slice().iter().zip(t.as_slice()) {
            prop_assert!(x == y || x.next_up() == *y || x.next_down() == *y);
        }
        prop_assert_eq!(back.diagonal(), t.diagonal());
    }

    #[test]
    fn centroid_projects_to_zero(c in spd_strategy(1, 6)) {
        let features = project_cluster(std::slice::from_ref(&c), &c, 0).unwrap();
        prop_assert!(features[0].vector.iter().all(|&x| x == 0.0));
    }
}

/// `A^{1/2} (A^{-1/2} B A^{-1/2})^{1/2} A^{1/2}` evaluated with dense products.
fn midpoint(a: &SpdMatrix, b: &SpdMatrix) -> Vec<f64> {
    let n = a.dim();
    let s = dense(&apply_spectral(a, Spectral::Sqrt).unwrap());
    let w = dense(&apply_spectral(a, Spectral::InvSqrt).unwrap());
    let inner = spd_from_dense(n, &matmul(&matmul(&w, b.as_slice(), n), &w, n));
    let root = dense(&apply_spectral(&inner, Spectral::Sqrt).unwrap());
    matmul(&matmul(&s, &root, n), &s, n)
}

#[test]
fn two_point_mean_is_the_geodesic_midpoint() {
    let mut r = rng(0x3d);
    for n in 1..=6 {
        for _ in 0..10 {
            let a = random_spd(&mut r, n);
            let b = random_spd(&mut r, n);
            let est = frechet_mean(&[a.clone(), b.clone()], FRECHET_TOL, FRECHET_MAX_ITER).unwrap();
            assert!(est.converged);
            assert!(rel_diff(est.mean.as_slice(), &midpoint(&a, &b)) <= 1e-6);
        }
    }
}

#[test]
fn distance_of_diagonal_matrices_is_the_log_ratio_norm() {
    let a = SpdMatrix::diag(&[1.0, 2.0, 5.0]).unwrap();
    let b = SpdMatrix::diag(&[3.0, 0.5, 5.0]).unwrap();
    let expected = (3f64.ln().powi(2) + 4f64.ln().powi(2)).sqrt();
    assert!((airm_distance(&a, &b).unwrap() - expected).abs() < 1e-12);
}
