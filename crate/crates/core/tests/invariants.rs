use finsler_conn::angle::closed_angle;
use finsler_conn::connection::{n_coefficients, ConnectionBundle};
use finsler_conn::finsler::{indicatrix_curvature, sample, FinslerSpace};
use finsler_conn::finsleroid::Finsleroid;
use finsler_conn::riemann::{AxisField, BaseMetric, ChargeField, RiemannField};
use finsler_conn::tensor::{einsum, invert, Tensor};
use proptest::prelude::*;

fn space(g0: f64, slope: f64, phi: f64) -> Finsleroid {
    Finsleroid::new(RiemannField {
        dim: 3,
        metric: BaseMetric::Conformal { phi_grad: vec![phi, 0.0, 0.0] },
        axis: AxisField::Coordinate { index: 0 },
        charge: ChargeField::Affine { g0, grad: vec![0.0, slope, 0.0] },
        torsion: None,
    })
    .unwrap()
}

fn vec3(r: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-r..r, 3)
}

fn params() -> impl Strategy<Value = (f64, f64, f64)> {
    (-1.5..1.5f64, -0.3..0.3f64, -0.2..0.2f64)
}

fn usable(sp: &Finsleroid, x: &[f64], y: &[f64]) -> bool {
    y.iter().map(|v| v * v).sum::<f64>() > 0.04 && sp.admissible(x, y).is_ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn norm_is_positively_homogeneous((g0, s, phi) in params(), x in vec3(0.5), y in vec3(1.0), lam in 0.1..10.0f64) {
        let sp = space(g0, s, phi);
        prop_assume!(usable(&sp, &x, &y));
        let scaled: Vec<f64> = y.iter().map(|v| lam * v).collect();
        let f = sp.metric(&x, &y);
        prop_assert!((sp.metric(&x, &scaled) - lam * f).abs() <= 1e-12 * lam * f);
    }

    #[test]
    fn fiber_identities((g0, s, phi) in params(), x in vec3(0.5), y in vec3(1.0)) {
        let sp = space(g0, s, phi);
        prop_assume!(usable(&sp, &x, &y));
        let fs = sample(&sp, &x, &y).unwrap();
        prop_assert!(fs.invariant_residual() < 1e-9);
    }

    #[test]
    fn indicatrix_curvature_is_h_squared((g0, s, phi) in params(), x in vec3(0.5), y in vec3(1.0)) {
        let sp = space(g0, s, phi);
        prop_assume!(usable(&sp, &x, &y));
        let ic = indicatrix_curvature(&sample(&sp, &x, &y).unwrap());
        let h = sp.h_at(&x).h;
        prop_assert!((ic.c_ind - h * h).abs() < 1e-9);
    }

    #[test]
    fn connection_is_homogeneous_of_degree_one((g0, s, phi) in params(), x in vec3(0.5), y in vec3(1.0), lam in 0.2..5.0f64) {
        let sp = space(g0, s, phi);
        prop_assume!(usable(&sp, &x, &y));
        let scaled: Vec<f64> = y.iter().map(|v| lam * v).collect();
        let n1 = n_coefficients(&sp, &x, &y).unwrap();
        let n2 = n_coefficients(&sp, &x, &scaled).unwrap();
        prop_assert!(n2.max_diff(&n1.scale(lam)) < 1e-10 * (1.0 + n1.max_abs() * lam));
    }

    #[test]
    fn connection_contractions((g0, s, phi) in params(), x in vec3(0.5), y in vec3(1.0)) {
        let sp = space(g0, s, phi);
        prop_assume!(usable(&sp, &x, &y));
        prop_assert!(ConnectionBundle::new(&sp, &x, &y).unwrap().invariant_residual(&y) < 1e-9);
    }

    #[test]
    fn angle_is_symmetric_and_scale_free((g0, s, phi) in params(), x in vec3(0.5), y1 in vec3(1.0), y2 in vec3(1.0), lam in 0.2..5.0f64) {
        let sp = space(g0, s, phi);
        prop_assume!(usable(&sp, &x, &y1) && usable(&sp, &x, &y2));
        let a = closed_angle(&sp, &x, &y1, &y2).unwrap();
        let scaled: Vec<f64> = y1.iter().map(|v| lam * v).collect();
        prop_assert!((a - closed_angle(&sp, &x, &y2, &y1).unwrap()).abs() < 1e-12);
        prop_assert!((a - closed_angle(&sp, &x, &scaled, &y2).unwrap()).abs() < 1e-12);
        prop_assert!(closed_angle(&sp, &x, &y1, &y1).unwrap().abs() < 1e-7);
    }

    #[test]
    fn angle_satisfies_the_triangle_inequality((g0, s, phi) in params(), x in vec3(0.5), y1 in vec3(1.0), y2 in vec3(1.0), y3 in vec3(1.0)) {
        let sp = space(g0, s, phi);
        prop_assume!(usable(&sp, &x, &y1) && usable(&sp, &x, &y2) && usable(&sp, &x, &y3));
        let a = |u: &[f64], v: &[f64]| closed_angle(&sp, &x, u, v).unwrap();
        prop_assert!(a(&y1, &y3) <= a(&y1, &y2) + a(&y2, &y3) + 1e-12);
    }

    #[test]
    fn inverse_of_a_positive_matrix(entries in prop::collection::vec(-1.0..1.0f64, 9)) {
        let m = Tensor::from_vec(3, 2, entries);
        let spd = einsum("ki,kj->ij", &[&m, &m]).add(&Tensor::from_fn(3, 2, |i| (i[0] == i[1]) as u8 as f64));
        let inv = invert(&spd).unwrap();
        let id = einsum("ij,jk->ik", &[&spd, &inv]);
        prop_assert!(id.max_diff(&Tensor::from_fn(3, 2, |i| (i[0] == i[1]) as u8 as f64)) < 1e-12);
    }
}
