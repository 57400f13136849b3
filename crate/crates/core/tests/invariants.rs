use std::sync::Arc;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use sdrelax::approximation::{approximate, piecewise_constant_approx};
use sdrelax::densities::{NonlinearDensity, SurfaceDensity};
use sdrelax::fields::{decompose, integral, l1_distance, BrokenField, CellData, Mesh};
use sdrelax::linearization::{eval_F_delta, is_normalized, normalize_frame, NonsimpleConfig};
use sdrelax::relaxation::StructuredDeformation;
use sdrelax::{Hess, Mat, Vector};

fn field_1d(vals: &[(f64, f64)]) -> BrokenField {
    let mesh = Arc::new(Mesh::unit(1, vals.len()).unwrap());
    BrokenField::from_fn(mesh, |c, _| CellData::affine(Vector::scalar(vals[c].0), Mat::scalar(vals[c].1))).unwrap()
}

fn field_2d(n: usize, vals: &[[f64; 6]]) -> BrokenField {
    let mesh = Arc::new(Mesh::unit(2, n).unwrap());
    BrokenField::from_fn(mesh, |c, x| {
        let v = vals[c % vals.len()];
        let mut h = Hess::zeros(2);
        h.set(0, 0, 0, 0.1 * v[4]);
        h.set(1, 1, 1, 0.1 * v[5]);
        CellData {
            a: *x + Vector::new2(0.05 * v[0], 0.05 * v[1]),
            z: Mat::new2(1.0 + 0.1 * v[2], 0.1 * v[3], -0.1 * v[3], 1.0 - 0.1 * v[2]),
            h: Some(h),
        }
    })
    .unwrap()
}

fn cfg2() -> NonsimpleConfig {
    NonsimpleConfig::new(
        0.05,
        0.8,
        0.7,
        NonlinearDensity::v_rot(),
        SurfaceDensity::psi1(2),
        SurfaceDensity::psi1_matrix(2),
    )
    .unwrap()
}

fn rot(t: f64) -> Mat {
    Mat::new2(t.cos(), -t.sin(), t.sin(), t.cos())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gauss_green_holds_for_broken_fields(vals in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 1..12)) {
        let u = field_1d(&vals);
        prop_assert!(decompose(&u).gauss_green_residual < 1e-10);
    }

    #[test]
    fn gauss_green_holds_in_2d(vals in prop::collection::vec(prop::array::uniform6(-1.0..1.0f64), 9)) {
        let u = field_2d(3, &vals);
        prop_assert!(decompose(&u).gauss_green_residual < 1e-10);
    }

    #[test]
    fn sym_coords_are_isometric(a in -5.0..5.0f64, b in -5.0..5.0f64, c in -5.0..5.0f64, d in -5.0..5.0f64) {
        let m = Mat::new2(a, b, c, d);
        let n = m.sym_coords().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert_abs_diff_eq!(n, m.sym().norm(), epsilon = 1e-12);
    }

    #[test]
    fn psi1_is_subadditive(l1 in prop::array::uniform2(-4.0..4.0f64), l2 in prop::array::uniform2(-4.0..4.0f64)) {
        let psi = SurfaceDensity::psi1(2);
        let (x, nu) = (Vector::new2(0.5, 0.5), Vector::new2(1.0, 0.0));
        let s = [l1[0] + l2[0], l1[1] + l2[1]];
        prop_assert!(psi.eval(&x, &s, &nu) <= psi.eval(&x, &l1, &nu) + psi.eval(&x, &l2, &nu) + 1e-12);
    }

    #[test]
    fn l1_distance_is_a_metric(a in prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), 4),
                              b in prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), 8)) {
        let (u, v) = (field_1d(&a), field_1d(&b));
        let w = BrokenField::zero(Arc::new(Mesh::unit(1, 8).unwrap()));
        let (duv, dvu) = (l1_distance(&u, &v).unwrap(), l1_distance(&v, &u).unwrap());
        assert_abs_diff_eq!(duv, dvu, epsilon = 1e-12);
        prop_assert!(duv <= l1_distance(&u, &w).unwrap() + l1_distance(&w, &v).unwrap() + 1e-12);
    }

    #[test]
    fn cell_averages_preserve_the_integral(vals in prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), 6), n in 1usize..20) {
        let h = field_1d(&vals);
        let h_n = piecewise_constant_approx(&h, n).unwrap();
        assert_abs_diff_eq!(integral(&h_n).get(0), integral(&h).get(0), epsilon = 1e-12);
    }

    #[test]
    fn approximation_matches_g_exactly(vals in prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), 4),
                                       gs in prop::collection::vec(-2.0..2.0f64, 4), n in 1usize..40) {
        let g = field_1d(&vals);
        let sd = StructuredDeformation::new(g, gs.iter().map(|x| Mat::scalar(*x)).collect(), 2.0).unwrap();
        let (_, diag) = approximate(&sd, n).unwrap();
        prop_assert!(diag.strain_error <= 1e-12);
        prop_assert!(diag.bound_ok);
        prop_assert!(diag.gauss_green_residual < 1e-10);
    }

    #[test]
    fn nonsimple_energy_is_frame_invariant(vals in prop::collection::vec(prop::array::uniform6(-1.0..1.0f64), 4),
                                           theta in -3.0..3.0f64, b in prop::array::uniform2(-2.0..2.0f64)) {
        let cfg = cfg2();
        let y = field_2d(2, &vals);
        let e = eval_F_delta(&y, &cfg).unwrap().total;
        let f = eval_F_delta(&y.rigid_map(&rot(theta), &Vector::new2(b[0], b[1])), &cfg).unwrap().total;
        prop_assert!((e - f).abs() <= 1e-10 * e.max(1.0));
    }

    #[test]
    fn normalization_is_idempotent(vals in prop::collection::vec(prop::array::uniform6(-1.0..1.0f64), 4), theta in -3.0..3.0f64) {
        let y = field_2d(2, &vals).rigid_map(&rot(theta), &Vector::new2(0.3, 0.1));
        let once = normalize_frame(&y).unwrap();
        prop_assert!(is_normalized(&once.y, 1e-12));
        let twice = normalize_frame(&once.y).unwrap();
        prop_assert!((twice.q - Mat::identity(2)).max_abs() < 1e-12);
        prop_assert!(twice.b.norm() < 1e-12);
    }
}
