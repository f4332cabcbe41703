use hamcalc::cone::{
    cone_eval, cone_exact, cone_margin_constant, sublevel_polygon, sublevel_polygon_refined, support_identity_check,
};
use hamcalc::{Error, Hamiltonian, Vec2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

fn dual_exponent(a: f64) -> f64 {
    a / (a - 1.0)
}

#[test]
fn ball_and_dual_norm_values() {
    let h = Hamiltonian::quadratic_with(1.0, Vec2::ZERO, 0.0).unwrap();
    let poly = sublevel_polygon(&h, 4.0, 512).unwrap();
    // Ball support is sqrt(k)|x|; the inscribed 512-gon is within its tolerance.
    let v = cone_eval(&poly, Vec2::new(3.0, 4.0));
    assert!(v <= 10.0 + 1e-12 && v >= 10.0 - poly.tol * 5.0, "{v}");

    let h4 = Hamiltonian::power_norm(4.0, 1.0, 1.0).unwrap();
    let poly = sublevel_polygon_refined(&h4, 1.0).unwrap();
    let x = Vec2::new(1.0, 1.0);
    assert!((cone_eval(&poly, x) - x.lp_norm(4.0 / 3.0)).abs() < 1e-6);
    assert_eq!(cone_eval(&poly, Vec2::ZERO), 0.0);
}

#[test]
fn polygon_invariants() {
    for h in [
        Hamiltonian::power_norm(1.5, 1.0, 1.0).unwrap(),
        Hamiltonian::flat_edge(Vec2::new(0.0, 0.0), Vec2::new(0.0, 1.0), 1.0).unwrap(),
        Hamiltonian::anisotropic([[2.0, 0.5], [0.5, 1.0]]).unwrap(),
    ] {
        let k = h.min_value() + 0.7;
        let poly = sublevel_polygon(&h, k, 512).unwrap();
        let v = &poly.vertices;
        let m = v.len();
        for i in 0..m {
            let (a, b, c) = (v[i], v[(i + 1) % m], v[(i + 2) % m]);
            assert!((b - a).cross(c - b) > 0.0, "{:?}", h.family());
            assert!((h.eval(a) - k).abs() <= 1e-9);
        }
        // Contains the minimizer: every edge keeps it on the left.
        let p0 = h.minimizer();
        assert!((0..m).all(|i| (v[(i + 1) % m] - v[i]).cross(p0 - v[i]) > 0.0));
    }
}

#[test]
fn support_is_homogeneous_and_monotone_in_k() {
    let h = Hamiltonian::power_norm(4.0, 1.0, 1.0).unwrap();
    let p1 = sublevel_polygon(&h, 0.5, 512).unwrap();
    let p2 = sublevel_polygon(&h, 0.8, 512).unwrap();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
    for _ in 0..1000 {
        let x = Vec2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let s = rng.random_range(0.1..10.0);
        let a = cone_eval(&p1, x * s);
        assert!((a - s * cone_eval(&p1, x)).abs() <= 1e-12 * (1.0 + a.abs()));
        assert!(cone_eval(&p1, x) <= cone_eval(&p2, x) + (p1.tol + p2.tol) * x.norm());
    }
}

#[test]
fn dual_norm_identity_4096_gon() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(5);
    for alpha in [1.5, 2.0, 4.0] {
        let h = Hamiltonian::power_norm(alpha, 1.0, 1.0).unwrap();
        let poly = sublevel_polygon(&h, 1.0, 4096).unwrap();
        let ad = dual_exponent(alpha);
        for _ in 0..1000 {
            let x = Vec2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let err = (cone_eval(&poly, x) - x.lp_norm(ad)).abs();
            assert!(err <= 1e-3 * x.norm(), "alpha {alpha}: {err}");
        }
    }
}

#[test]
fn exact_route_matches_dual_norm() {
    let h = Hamiltonian::power_norm(1.5, 1.0, 1.0).unwrap();
    for x in [Vec2::new(1.0, 0.3), Vec2::new(-2.0, 0.7), Vec2::new(0.0, -1.0)] {
        assert!((cone_exact(&h, 1.0, x) - x.lp_norm(3.0)).abs() < 1e-9);
    }
}

#[test]
fn support_identity_examples() {
    let h = Hamiltonian::quadratic();
    let r = support_identity_check(&h, Vec2::new(1.0, 0.0)).unwrap();
    assert!((r.k - 0.5).abs() < 1e-15);
    assert!(r.max_residual <= 1e-6, "{r:?}");
    assert!(r.max_angle_error <= r.angular_tol);

    let h4 = Hamiltonian::power_norm(4.0, 1.0, 1.0).unwrap();
    let p = Vec2::new(0.6, 0.8) / Vec2::new(0.6, 0.8).lp_norm(4.0);
    let r = support_identity_check(&h4, p).unwrap();
    let qn = r.subgradient_residuals.iter().map(|s| s.q.norm()).fold(0.0, f64::max);
    assert!(r.max_residual <= 2.0 * r.polygon_tol * qn + 1e-9, "{r:?}");
    assert!(r.max_angle_error <= r.angular_tol);

    assert!(matches!(support_identity_check(&h, Vec2::ZERO), Err(Error::Precondition(_))));
}

#[test]
fn support_identity_over_random_points() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(9);
    for h in [
        Hamiltonian::quadratic(),
        Hamiltonian::power_norm(1.5, 2.0, 1.0).unwrap(),
        Hamiltonian::anisotropic([[2.0, 0.5], [0.5, 1.0]]).unwrap(),
    ] {
        for _ in 0..12 {
            let p = Vec2::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
            if p.norm() < 0.1 {
                continue;
            }
            let r = support_identity_check(&h, p).unwrap();
            let qn = r.subgradient_residuals.iter().map(|s| s.q.norm()).fold(0.0, f64::max);
            assert!(r.max_residual <= 2.0 * r.polygon_tol * qn + 1e-7, "{:?} {p:?}: {r:?}", h.family());
        }
    }
}

#[test]
fn margin_constant_for_quadratics() {
    let h = Hamiltonian::quadratic_with(1.0, Vec2::ZERO, 0.0).unwrap();
    let r = 1.0;
    let rep = cone_margin_constant(&h, r, 1e3).unwrap();
    assert!(rep.constant <= 2.0 * r.sqrt() + 1.0, "{}", rep.constant);
    // sqrt(k) + δ <= sqrt(k + Cδ) needs C >= 2 sqrt(k) + δ.
    for row in &rep.table {
        let need = 2.0 * row.k.sqrt() + row.delta;
        assert!(row.c >= need * (1.0 - 1e-3), "{row:?}");
    }
    let half = Hamiltonian::quadratic();
    let rep = cone_margin_constant(&half, 1.0, 1e3).unwrap();
    assert_eq!(rep.table.len(), 96);
    assert!(rep.constant.is_finite());
}

#[test]
fn margin_constant_flat_edge_is_finite() {
    // Any convex H has {H <= k + Gδ} ⊇ {H <= k} + δ B with G its Lipschitz
    // bound on the relevant range, so the constant stays bounded here too.
    let h = Hamiltonian::flat_edge(Vec2::new(0.0, 0.0), Vec2::new(0.0, 1.0), 1.0).unwrap();
    let rep = cone_margin_constant(&h, 1.0, 1e3).unwrap();
    assert!(rep.constant <= 2.0 * h.lipschitz_bound(2.0) + 1.0, "{} {}", rep.constant, h.lipschitz_bound(2.0));
    let tiny = cone_margin_constant(&h, 1.0, 1e-3);
    assert!(matches!(tiny, Err(Error::ConeCap { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn support_is_subadditive(x1 in -3.0..3.0f64, y1 in -3.0..3.0f64, x2 in -3.0..3.0f64, y2 in -3.0..3.0f64) {
        let h = Hamiltonian::power_norm(1.5, 1.0, 1.0).unwrap();
        let poly = sublevel_polygon(&h, 1.0, 256).unwrap();
        let (x, y) = (Vec2::new(x1, y1), Vec2::new(x2, y2));
        prop_assert!(cone_eval(&poly, x + y) <= cone_eval(&poly, x) + cone_eval(&poly, y) + 1e-12);
    }
}
