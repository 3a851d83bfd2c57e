use std::f64::consts::PI;
use std::sync::Arc;

use ica_lab::linalg::{dist, Matrix, Point};
use ica_lab::maps::{classify_oct, classify_volume_preserving, interior_points, LinearMap};
use ica_lab::spurious::{
    build_xij, flow_map, prop1_build, prop1_rotated_family, radius_rotation_map, verify_mpt, verify_pushforward,
    DensityField, GaussianMixture, RadialDensity, RadialProfile, RadiusRotationProfile, UniformCube,
};
use ica_lab::SmoothMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cube(d: usize, n: usize) -> Vec<Point> {
    interior_points(&vec![0.0; d], &vec![1.0; d], n, 0.01)
}

fn profiles() -> Vec<RadialProfile> {
    vec![RadialProfile::Gaussian { sigma: 1.0 }, RadialProfile::Annulus { inner: 1.0, outer: 2.0 }]
}

#[test]
fn prop1_maps_are_oct_and_push_uniform_to_target() {
    for d in [2, 3] {
        for profile in profiles() {
            let radial = RadialDensity::new(profile.clone(), d).unwrap();
            let f = prop1_build(&radial).unwrap();
            let pts = cube(d, 500);
            let oct = classify_oct(f.as_ref(), &pts, 1e-5).unwrap();
            assert!(oct.pass, "{profile:?} d={d}: {oct:?}");
            let images: Vec<Point> = pts.iter().map(|s| f.eval(s).unwrap()).collect();
            let rep = verify_pushforward(f.as_ref(), &UniformCube { dim: d }, &radial, &images, 1e-3).unwrap();
            assert!(rep.pass, "{profile:?} d={d}: {rep:?}");
        }
    }
}

#[test]
fn rotated_family_is_not_identifiable() {
    let radial = RadialDensity::new(RadialProfile::Gaussian { sigma: 1.0 }, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let pts = cube(2, 200);
    let maps: Vec<_> = (0..5)
        .map(|_| prop1_rotated_family(&radial, &Matrix::random_rotation(2, &mut rng)).unwrap())
        .collect();
    for f in &maps {
        let images: Vec<Point> = pts.iter().map(|s| f.eval(s).unwrap()).collect();
        let rep = verify_pushforward(f.as_ref(), &UniformCube { dim: 2 }, &radial, &images, 1e-3).unwrap();
        assert!(rep.pass, "{rep:?}");
    }
    for a in 0..maps.len() {
        for b in a + 1..maps.len() {
            let sup = pts.iter().map(|s| dist(&maps[a].eval(s).unwrap(), &maps[b].eval(s).unwrap())).fold(0.0, f64::max);
            assert!(sup > 0.1, "maps {a} and {b} differ by only {sup}");
        }
    }
}

#[test]
fn rotated_family_identity_and_quarter_turn() {
    let radial = RadialDensity::new(RadialProfile::Annulus { inner: 0.5, outer: 1.5 }, 2).unwrap();
    let plain = prop1_build(&radial).unwrap();
    let same = prop1_rotated_family(&radial, &Matrix::identity(2)).unwrap();
    for s in cube(2, 50) {
        assert_eq!(plain.eval(&s).unwrap(), same.eval(&s).unwrap());
    }
    let r = Matrix::plane_rotation(2, 0, 1, PI / 2.0);
    let turned = prop1_rotated_family(&radial, &r).unwrap();
    for s in cube(2, 50) {
        let x = plain.eval(&s).unwrap();
        let rx = r.matvec(&x);
        let push = |f: &dyn SmoothMap, y: &[f64]| {
            let s = f.inverse(y).unwrap();
            (-f.log_abs_det_jacobian(&s).unwrap()).exp()
        };
        let a = push(plain.as_ref(), &x);
        let b = push(turned.as_ref(), &rx);
        assert!((a - b).abs() < 1e-6 * a, "{a} vs {b}");
    }
    assert!(prop1_rotated_family(&radial, &Matrix::diag(&[1.0, 2.0])).is_err());
}

#[test]
fn radius_rotation_fixes_the_boundary_layer() {
    let margin = 0.05;
    let prof = RadiusRotationProfile::with_margin(vec![0.5, 0.45, 0.55], (1, 2), 4.0, margin).unwrap();
    let h = radius_rotation_map(&prof, 1.3);
    let pts = cube(3, 400);
    assert!(classify_volume_preserving(&h, &pts, 1e-8).unwrap().pass);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    use rand::Rng;
    for _ in 0..500 {
        let mut s: Point = (0..3).map(|_| rng.gen::<f64>()).collect();
        let k = rng.gen_range(0..3);
        s[k] = if rng.gen::<bool>() { rng.gen::<f64>() * margin } else { 1.0 - rng.gen::<f64>() * margin };
        assert_eq!(h.eval(&s).unwrap(), s);
    }
}

#[test]
fn mixture_flows_preserve_volume_and_density() {
    let p = Arc::new(GaussianMixture::three_component_2d());
    let field = build_xij(p.clone(), 0, 1).unwrap().into_ref();
    let pts = interior_points(&[-3.0, -2.0], &[3.5, 3.5], 200, 0.0);
    for t in [0.25, 0.5, 1.0] {
        let f = flow_map(field.clone(), t, 200).unwrap();
        let vol = classify_volume_preserving(&f, &pts, 1e-4).unwrap();
        assert!(vol.pass, "t={t}: {vol:?}");
        let mpt = verify_mpt(&f, p.as_ref(), &pts, 1e-3).unwrap();
        assert!(mpt.pass, "t={t}: {mpt:?}");
    }
    // a rotation does not preserve the anisotropic mixture
    let rot = LinearMap::rotation(2, 0, 1, 0.8);
    assert!(!verify_mpt(&rot, p.as_ref(), &pts, 1e-3).unwrap().pass);
    assert!(p.density(&[0.0, 0.0]) > 0.0);
}
