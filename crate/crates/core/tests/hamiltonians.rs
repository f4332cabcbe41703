use hamcalc::{
    find_minimum, normalize_hamiltonian, Error, FamilyDescriptor, GridField, Hamiltonian, Rect, Vec2,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

fn families() -> Vec<Hamiltonian> {
    vec![
        Hamiltonian::quadratic(),
        Hamiltonian::quadratic_with(1.0, Vec2::new(0.5, -1.0), 2.0).unwrap(),
        Hamiltonian::power_norm(1.5, 1.0, 1.0).unwrap(),
        Hamiltonian::power_norm(4.0, 2.0, 1.0).unwrap(),
        Hamiltonian::power_norm(1.0, 2.0, 1.0).unwrap(),
        Hamiltonian::power_norm(f64::INFINITY, 1.0, 1.0).unwrap(),
        Hamiltonian::flat_edge(Vec2::new(0.0, 0.0), Vec2::new(0.0, 1.0), 1.0).unwrap(),
        Hamiltonian::anisotropic([[2.0, 0.5], [0.5, 1.0]]).unwrap(),
    ]
}

#[test]
fn closed_forms() {
    assert_eq!(Hamiltonian::quadratic().eval(Vec2::new(3.0, 4.0)), 12.5);
    let h = Hamiltonian::power_norm(4.0, 1.0, 1.0).unwrap();
    assert!((h.eval(Vec2::new(1.0, 1.0)) - 1.189_207_115_002_721).abs() < 1e-12);
}

#[test]
fn flat_edge_is_constant_on_segment() {
    let h = Hamiltonian::flat_edge(Vec2::new(0.0, 0.0), Vec2::new(0.0, 1.0), 1.0).unwrap();
    let vals: Vec<f64> = (0..=1000).map(|i| h.eval(Vec2::new(0.0, i as f64 / 1000.0))).collect();
    let spread = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - vals.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(spread <= 1e-12, "spread {spread}");
    // Strictly larger just past the endpoints.
    assert!(h.eval(Vec2::new(0.0, 1.01)) > vals[0]);
    assert!(h.eval(Vec2::new(0.0, -0.01)) > vals[0]);
}

#[test]
fn degenerate_inputs_rejected() {
    assert!(Hamiltonian::flat_edge(Vec2::new(1.0, 1.0), Vec2::new(1.0, 1.0), 1.0).is_err());
    assert!(Hamiltonian::power_norm(0.5, 1.0, 1.0).is_err());
    assert!(Hamiltonian::anisotropic([[1.0, 2.0], [2.0, 1.0]]).is_err());
}

#[test]
fn midpoint_convexity_random_pairs() {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(7);
    for h in families() {
        for _ in 0..10_000 {
            let p = Vec2::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
            let q = Vec2::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
            let mid = h.eval((p + q) * 0.5);
            assert!(mid <= 0.5 * (h.eval(p) + h.eval(q)) + 1e-9, "{:?}", h.family());
        }
    }
}

#[test]
fn coercive_on_rays() {
    for h in families() {
        for j in 0..64 {
            let d = Vec2::polar(std::f64::consts::TAU * j as f64 / 64.0);
            let near = h.eval(d * 1.0);
            let far = h.eval(d * 4.0);
            assert!(far > near && far > h.min_value(), "{:?}", h.family());
        }
    }
}

#[test]
fn positive_homogeneity_of_norms() {
    for alpha in [1.0, 1.5, 4.0, f64::INFINITY] {
        let h = Hamiltonian::power_norm(alpha, 1.0, 1.0).unwrap();
        let p = Vec2::new(0.3, -1.7);
        for t in [0.1, 2.0, 7.5] {
            assert!((h.eval(p * t) - t * h.eval(p)).abs() <= 1e-12 * (1.0 + t));
        }
    }
}

#[test]
fn minimum_of_shifted_quadratic() {
    let h = Hamiltonian::quadratic_with(0.5, Vec2::new(2.0, 0.0), 0.0).unwrap();
    let m = find_minimum(&h, Rect::centered(4.0)).unwrap();
    assert!((m.point - Vec2::new(2.0, 0.0)).norm() < 1e-6);
    assert!(m.value < 1e-12);
    let h4 = Hamiltonian::power_norm(4.0, 1.0, 1.0).unwrap();
    let m = find_minimum(&h4, Rect::centered(4.0)).unwrap();
    assert!(m.point.norm() < 1e-9 && m.value < 1e-9);
}

#[test]
fn minimum_on_boundary_is_an_error() {
    let h = Hamiltonian::quadratic_with(0.5, Vec2::new(6.0, 0.0), 0.0).unwrap();
    assert!(matches!(find_minimum(&h, Rect::centered(4.0)), Err(Error::MinimumOnBoundary { .. })));
}

#[test]
fn flat_edge_minimum_matches_grid_scan() {
    let h = Hamiltonian::flat_edge(Vec2::new(0.0, 0.0), Vec2::new(0.0, 1.0), 1.0).unwrap();
    let m = find_minimum(&h, Rect::centered(4.0)).unwrap();
    // Brute-force oracle on a fine grid.
    let mut scan = f64::INFINITY;
    for j in 0..=800 {
        for i in 0..=800 {
            let p = Vec2::new(-2.0 + 4.0 * i as f64 / 800.0, -2.0 + 4.0 * j as f64 / 800.0);
            scan = scan.min(h.eval(p));
        }
    }
    assert!(m.value <= scan + 1e-12);
    assert!((m.value - h.min_value()).abs() < 1e-10);
}

#[test]
fn normalize_quadratic_with_offset() {
    let h = Hamiltonian::quadratic_with(0.5, Vec2::new(1.0, 1.0), 3.0).unwrap();
    let n = normalize_hamiltonian(&h).unwrap();
    assert!(n.is_normalized());
    assert_eq!(n.eval(Vec2::ZERO), 0.0);
    for p in [Vec2::new(0.3, -2.0), Vec2::new(1.0, 1.0), Vec2::new(-3.0, 0.5)] {
        let expect = (0.5 * p.norm_sq()).powi(2);
        assert!((n.eval(p) - expect).abs() < 1e-12 * (1.0 + expect));
    }
    assert_eq!(n.shift(), Vec2::new(1.0, 1.0));
}

#[test]
fn normalize_is_idempotent() {
    for h in families() {
        let n1 = normalize_hamiltonian(&h).unwrap();
        let n2 = normalize_hamiltonian(&n1).unwrap();
        for j in 0..50 {
            let p = Vec2::polar(j as f64 * 0.37) * (0.1 * j as f64);
            assert!((n1.eval(p) - n2.eval(p)).abs() <= 1e-12 * (1.0 + n1.eval(p)));
        }
    }
    let q = Hamiltonian::quadratic();
    let n = normalize_hamiltonian(&q).unwrap();
    assert_eq!(n.family(), q.family());
}

#[test]
fn normalize_l1_stays_flat() {
    let h = Hamiltonian::power_norm(1.0, 1.0, 1.0).unwrap();
    let n = normalize_hamiltonian(&h).unwrap();
    // The unit l1 sphere edge from (1,0) to (0,1) remains a level set.
    let vals: Vec<f64> = (0..=200)
        .map(|i| {
            let s = i as f64 / 200.0;
            n.eval(Vec2::new(1.0 - s, s))
        })
        .collect();
    for v in &vals {
        assert!((v - 1.0).abs() < 1e-12);
    }
    // Midpoints of pairs on the edge are not strictly below the level.
    let mid = n.eval(Vec2::new(0.5, 0.5));
    assert!((mid - 0.5 * (vals[0] + vals[200])).abs() < 1e-12);
}

#[test]
fn descriptor_json() {
    let d: FamilyDescriptor = serde_json::from_str(r#"{"family":"power_norm","alpha":4,"power":1}"#).unwrap();
    assert_eq!(d, FamilyDescriptor::PowerNorm { alpha: 4.0, power: 1.0, scale: 1.0 });
    let d: FamilyDescriptor = serde_json::from_str(r#"{"family":"power_norm","alpha":"inf"}"#).unwrap();
    assert!(matches!(d, FamilyDescriptor::PowerNorm { alpha, .. } if alpha.is_infinite()));
    let d: FamilyDescriptor =
        serde_json::from_str(r#"{"family":"flat_edge","a":[0,0],"b":[0,1],"lambda":1.0}"#).unwrap();
    assert!(matches!(d, FamilyDescriptor::FlatEdge { .. }));
    let d: FamilyDescriptor = serde_json::from_str(r#"{"family":"grid","path":"H.csv"}"#).unwrap();
    assert_eq!(d, FamilyDescriptor::Grid { path: "H.csv".into() });
}

#[test]
fn grid_backed_hamiltonian() {
    let field = GridField::covering(Rect::centered(2.0), 81, |p| 0.5 * p.norm_sq()).unwrap();
    let h = Hamiltonian::from_grid(field, 1e-9).unwrap();
    assert!(h.minimizer().norm() < 1e-6);
    let p = Vec2::new(0.33, -0.71);
    // Bilinear interpolation error bounded by h^2 * curvature.
    assert!((h.eval(p) - 0.5 * p.norm_sq()).abs() <= 0.05f64.powi(2));
    assert!(h.eval(Vec2::new(3.0, 0.0)) > h.eval(Vec2::new(2.0, 0.0)));
}

#[test]
fn non_convex_grid_rejected_with_triple() {
    let field = GridField::covering(Rect::centered(1.0), 11, |p| -(p.x * p.x)).unwrap();
    match Hamiltonian::from_grid(field, 1e-9) {
        Err(Error::NonConvexGrid { left, center, right, excess }) => {
            assert!(excess > 0.0);
            assert!(((left + right) * 0.5 - center).norm() < 1e-12);
        }
        other => panic!("expected rejection, got {other:?}"),
    }
}

#[test]
fn lipschitz_bound_covers_sublevel() {
    let h = Hamiltonian::quadratic();
    let b = h.lipschitz_bound(2.0);
    assert!(b >= 2.0 && b < 2.0 * 1.001);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn midpoint_convexity_and_homogeneity(
        px in -4.0..4.0f64, py in -4.0..4.0f64, qx in -4.0..4.0f64, qy in -4.0..4.0f64,
        t in 0.01..10.0f64, alpha in 1.0..8.0f64,
    ) {
        let (p, q) = (Vec2::new(px, py), Vec2::new(qx, qy));
        for h in families() {
            prop_assert!(h.eval((p + q) * 0.5) <= 0.5 * (h.eval(p) + h.eval(q)) + 1e-9);
        }
        let n = Hamiltonian::power_norm(alpha, 1.0, 1.0).unwrap();
        prop_assert!((n.eval(p * t) - t * n.eval(p)).abs() <= 1e-12 * (1.0 + t * n.eval(p)));
    }
}
