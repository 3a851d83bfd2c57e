use std::sync::Arc;

use ica_lab::contrast::{c_oct, c_oct_pointwise, forward_kl, l1_recon, SampleBatch};
use ica_lab::linalg::{Matrix, Point};
use ica_lab::maps::{
    classify_conformal, classify_oct, compose, interior_points, oct_residual, CoordwiseReparam, CubicShear1D,
    LinearMap, MoebiusMap, Monotone1D, PolarMap, Sinh1D,
};
use ica_lab::numerics::fd_jacobian;
use ica_lab::spurious::{radius_rotation_map, Gaussian, RadiusRotationProfile};
use ica_lab::{MapRef, SmoothMap};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rotation(d: usize, seed: u64) -> Matrix {
    Matrix::random_rotation(d, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn moebius(d: usize, seed: u64, eps: u8) -> MoebiusMap {
    let a: Point = (0..d).map(|k| -0.5 - 0.1 * k as f64).collect();
    let b: Point = (0..d).map(|k| 0.3 * k as f64).collect();
    MoebiusMap::new(b, a, 1.7, rotation(d, seed), eps).unwrap()
}

fn relative_jacobian_gap(f: &dyn SmoothMap, x: &[f64]) -> f64 {
    let an = f.jacobian(x).unwrap();
    let fd = fd_jacobian(f, x, 1e-6).unwrap();
    an.max_abs_diff(&fd) / an.max_abs().max(1.0)
}

#[test]
fn analytic_jacobians_match_finite_differences() {
    for d in [2, 3, 4] {
        let pts = interior_points(&vec![0.0; d], &vec![1.0; d], 100, 0.01);
        let m = moebius(d, 3, 2);
        let polar = PolarMap::new(d, 0.5, 2.0).unwrap();
        let (lo, hi) = polar.parameter_box();
        let ppts = interior_points(&lo, &hi, 100, 0.01);
        let prof = RadiusRotationProfile::with_margin(vec![0.5; d], (0, d - 1), 2.5, 0.02).unwrap();
        let h = radius_rotation_map(&prof, 0.9);
        let funcs: Vec<Arc<dyn Monotone1D>> =
            (0..d).map(|k| Arc::new(CubicShear1D { c: 0.2 + 0.1 * k as f64 }) as Arc<dyn Monotone1D>).collect();
        let cw = CoordwiseReparam::new(funcs).unwrap();
        for x in &pts {
            assert!(relative_jacobian_gap(&m, x) < 1e-5);
            assert!(relative_jacobian_gap(&h, x) < 1e-5);
            assert!(relative_jacobian_gap(&cw, x) < 1e-5);
        }
        for x in &ppts {
            assert!(relative_jacobian_gap(&polar, x) < 1e-5);
        }
    }
}

#[test]
fn moebius_maps_compose_to_conformal_maps() {
    for d in [2, 3, 4] {
        let outer: MapRef = Arc::new(moebius(d, 1, 2));
        let inner: MapRef = Arc::new(moebius(d, 2, 0));
        let f = compose(outer, inner).unwrap();
        let pts = interior_points(&vec![0.0; d], &vec![1.0; d], 200, 0.01);
        assert!(classify_conformal(&f, &pts, 1e-6).unwrap().pass);
    }
}

#[test]
fn polar_determinant_matches_product_formula() {
    for d in [2, 3, 4] {
        let polar = PolarMap::new(d, 0.3, 3.0).unwrap();
        let (lo, hi) = polar.parameter_box();
        for p in interior_points(&lo, &hi, 200, 0.0) {
            let det = polar.jacobian(&p).unwrap().det().abs();
            let formula = polar.det_formula(&p);
            assert!((det - formula).abs() < 1e-8 * formula.max(1.0));
        }
    }
}

#[test]
fn c_oct_is_stable_under_oct_symmetries() {
    let polar: MapRef = Arc::new(PolarMap::new(3, 0.5, 2.0).unwrap());
    let shear: MapRef = Arc::new(LinearMap::new(
        Matrix::from_rows(&[vec![1.0, 0.4, 0.0], vec![0.0, 1.0, 0.3], vec![0.2, 0.0, 1.0]]).unwrap(),
    ).unwrap());
    let base = compose(shear, polar.clone()).unwrap().into_ref();
    let rot: MapRef = Arc::new(LinearMap::new(rotation(3, 9)).unwrap());
    let left = compose(rot, base.clone()).unwrap().into_ref();
    let funcs: Vec<Arc<dyn Monotone1D>> = vec![
        Arc::new(Sinh1D { a: 2.0, shift: 0.0 }),
        Arc::new(CubicShear1D { c: 0.05 }),
        Arc::new(CubicShear1D { c: 0.01 }),
    ];
    let cw: MapRef = Arc::new(CoordwiseReparam::new(funcs).unwrap());
    let right = compose(base.clone(), cw.clone()).unwrap().into_ref();

    let pp = PolarMap::new(3, 0.5, 2.0).unwrap();
    let (lo, hi) = pp.parameter_box();
    let pts = interior_points(&lo, &hi, 2000, 0.05);
    let a = c_oct(base.as_ref(), &SampleBatch::new(pts.clone()).unwrap()).unwrap();
    let b = c_oct(left.as_ref(), &SampleBatch::new(pts.clone()).unwrap()).unwrap();
    assert!((a.value - b.value).abs() < 1e-6);
    // the reparameterized map sees pushed points: same Jacobian contrast at cw(s)
    let pre: Vec<Point> = pts.iter().map(|p| cw.inverse(p).unwrap()).collect();
    let c = c_oct(right.as_ref(), &SampleBatch::new(pre).unwrap()).unwrap();
    let se = (a.standard_error.powi(2) + c.standard_error.powi(2)).sqrt();
    assert!((a.value - c.value).abs() <= 3.0 * se + 1e-6, "{a:?} {c:?}");
    assert!(a.value > 0.01);
}

#[test]
fn l1_vanishes_for_exact_inverse() {
    let f = LinearMap::new(Matrix::from_rows(&[vec![2.0, 1.0], vec![0.5, 3.0]]).unwrap()).unwrap();
    let inv = LinearMap::new(f.matrix().inverse().unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let g = Gaussian::standard(2);
    let batch = SampleBatch::new((0..1000).map(|_| g.sample(&mut rng)).collect()).unwrap();
    assert!(l1_recon(&inv, &f, &batch).unwrap().value < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hadamard_inequality(entries in prop::collection::vec(-3.0f64..3.0, 9)) {
        let j = Matrix::from_fn(3, 3, |r, c| entries[3 * r + c]);
        prop_assume!(j.det().abs() > 1e-3);
        let v = c_oct_pointwise(&j).unwrap();
        prop_assert!(v >= 0.0);
        if oct_residual(&j) < 1e-8 {
            prop_assert!(v < 1e-10);
        }
    }

    #[test]
    fn orthogonal_columns_have_zero_contrast(seed in 0u64..1000, scales in prop::collection::vec(0.1f64..10.0, 4)) {
        let q = rotation(4, seed).matmul(&Matrix::diag(&scales));
        prop_assert!(c_oct_pointwise(&q).unwrap() < 1e-10);
    }

    #[test]
    fn conformal_implies_oct(seed in 0u64..500, d in 2usize..5) {
        let m = moebius(d, seed, (seed % 2 * 2) as u8);
        let pts = interior_points(&vec![0.0; d], &vec![1.0; d], 30, 0.01);
        let conf = classify_conformal(&m, &pts, 1e-6).unwrap();
        prop_assert!(conf.pass);
        prop_assert!(classify_oct(&m, &pts, 1e-6).unwrap().pass);
    }

    #[test]
    fn coordinatewise_precomposition_keeps_oct(seed in 0u64..500, c in 0.0f64..0.5) {
        let polar: MapRef = Arc::new(PolarMap::new(3, 0.5, 2.0).unwrap());
        let rot: MapRef = Arc::new(LinearMap::new(rotation(3, seed)).unwrap());
        let oct = compose(rot, polar).unwrap().into_ref();
        let funcs: Vec<Arc<dyn Monotone1D>> = vec![
            Arc::new(CubicShear1D { c }),
            Arc::new(Sinh1D { a: 1.0 + c, shift: 0.0 }),
            Arc::new(CubicShear1D { c: c / 2.0 }),
        ];
        let cw: MapRef = Arc::new(CoordwiseReparam::new(funcs).unwrap());
        let f = compose(oct, cw).unwrap();
        let pts = interior_points(&[0.6, 0.6, 0.6], &[1.1, 1.1, 1.1], 40, 0.0);
        prop_assert!(classify_oct(&f, &pts, 1e-6).unwrap().pass);
    }

    #[test]
    fn forward_kl_is_nonnegative_up_to_noise(mx in -1.0f64..1.0, s in 0.5f64..2.0, seed in 0u64..1000) {
        let q = Gaussian::standard(2);
        let p = Gaussian::new(vec![mx, 0.0], Matrix::diag(&[s, 1.0 / s])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let est = forward_kl(&q, &|x| ica_lab::spurious::DensityField::log_density(&p, x), 2000, &mut rng).unwrap();
        prop_assert!(est.value >= -3.0 * est.standard_error);
    }
}
