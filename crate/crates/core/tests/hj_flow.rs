use hamcalc::flow::{convexity_criteria_check, hopflax_up, localization_radius, slopes, Lagrangian};
use hamcalc::{Error, GridField, Hamiltonian, Rect, Vec2};
use proptest::prelude::*;

fn square(r: f64, n: usize, f: impl Fn(Vec2) -> f64) -> GridField {
    GridField::covering(Rect::centered(r), n, f).unwrap()
}

#[test]
fn localization_radius_dyadic_search() {
    // L = |q|^2/2 and L = |q|^2/4 on a generous box.
    let l = square(64.0, 257, |q| 0.5 * q.norm_sq());
    let r = localization_radius(&Hamiltonian::quadratic(), &l, 2.0).unwrap();
    assert!(r > 0.0 && r <= 8.0, "{r}");
    let h2 = Hamiltonian::quadratic_with(1.0, Vec2::ZERO, 0.0).unwrap();
    let l2 = square(64.0, 257, |q| 0.25 * q.norm_sq());
    assert!(localization_radius(&h2, &l2, 1.0).unwrap() <= 16.0);
}

#[test]
fn linear_data_shifts_by_t_h() {
    let h = Hamiltonian::quadratic();
    let p0 = Vec2::new(1.0, 0.0);
    let u = square(10.0, 81, |x| p0.dot(x));
    let res = hopflax_up(&u, &h, 2.0).unwrap();
    for j in 0..u.ny() {
        for i in 0..u.nx() {
            let x = u.point(i, j);
            if x.norm() <= 1.0 {
                assert!((res.field.at(i, j) - u.at(i, j) - 1.0).abs() < 1e-12);
            }
        }
    }
    assert!(res.window_radius > 0.0);
}

#[test]
fn cone_data_has_closed_form_flow() {
    let h = Hamiltonian::quadratic();
    let u = square(1.5, 193, |x| x.norm());
    let lag = Lagrangian::for_field(&h, &u).unwrap();
    let t = 0.25;
    assert!((lag.up_at(&u, Vec2::ZERO, t).value - t / 2.0).abs() < 2e-3);
    for x in [Vec2::new(0.3, 0.1), Vec2::new(-0.2, 0.4)] {
        let v = lag.up_at(&u, x, t).value;
        assert!((v - x.norm() - t / 2.0).abs() < 2e-3, "{x:?}: {v}");
    }
}

#[test]
fn flow_converges_to_data_as_t_shrinks() {
    let h = Hamiltonian::quadratic();
    let u = square(1.0, 41, |x| x.norm());
    let lag = Lagrangian::for_field(&h, &u).unwrap();
    for t in [0.2, 0.1, 0.05] {
        let up = lag.flow_up(&u, t).unwrap();
        let dev = up.field.max_abs_diff_where(&u, |x| x.norm() <= 0.3);
        assert!(dev <= t, "t={t}: {dev}");
        assert!(up.field.values().iter().zip(u.values()).all(|(a, b)| a >= &(b - 1e-12)));
        let down = lag.flow_down(&u, t).unwrap();
        assert!(down.field.values().iter().zip(u.values()).all(|(a, b)| a <= &(b + 1e-12)));
    }
}

#[test]
fn linear_slopes_equal_h_of_gradient() {
    let h = Hamiltonian::quadratic();
    let p0 = Vec2::new(0.5, 0.25);
    let u = square(4.0, 129, |x| p0.dot(x));
    let prof = slopes(&u, &h, Vec2::new(0.1, -0.2), &[0.05, 0.1, 0.2], 1e-9).unwrap();
    let hp = h.eval(p0);
    for s in &prof.samples {
        assert!((s.s_plus - hp).abs() < 1e-10 && (s.s_minus + hp).abs() < 1e-10, "{s:?}");
    }
    assert!((prof.su - hp).abs() < 1e-10);
}

#[test]
fn cone_vertex_slopes_disagree() {
    let h = Hamiltonian::quadratic();
    let u = square(1.0, 129, |x| x.norm());
    let lag = Lagrangian::for_field(&h, &u).unwrap();
    for t in [0.1, 0.2] {
        let up = lag.up_at(&u, Vec2::ZERO, t).value / t;
        let down = lag.down_at(&u, Vec2::ZERO, t).value / t;
        assert!((up - 0.5).abs() < 5e-3, "{up}");
        assert!(down.abs() < 1e-12);
    }
    let err = lag.slopes(&u, Vec2::ZERO, &[0.1, 0.2], 1e-3).unwrap_err();
    assert!(matches!(err, Error::RefineSchedule { .. }));
}

#[test]
fn flat_counterexample_has_constant_slope() {
    // u = max(0, x2) is the counterexample field for a = 0, b = e2.
    let (a, b) = (Vec2::ZERO, Vec2::new(0.0, 1.0));
    let h = Hamiltonian::flat_edge(a, b, 1.0).unwrap();
    let u = square(1.0, 129, |x| x.y.max(0.0));
    let lag = Lagrangian::for_field(&h, &u).unwrap();
    let ha = h.eval(a);
    for i in 0..20 {
        let s = i as f64 / 19.0;
        let x = Vec2::new(-0.4 + 0.8 * s, 0.3 * (2.0 * s - 1.0) + 0.01);
        let prof = lag.slopes(&u, x, &[0.05, 0.1], 1e-3).unwrap();
        assert!((prof.su - ha).abs() <= 1e-2, "{x:?}: {} vs {ha}", prof.su);
    }
}

#[test]
fn criteria_on_linear_and_quadratic_data() {
    let h = Hamiltonian::quadratic();
    let schedule = [0.1, 0.2, 0.3, 0.4];
    let p0 = Vec2::new(0.5, -0.25);
    let lin = square(4.0, 129, |x| p0.dot(x));
    let rep = convexity_criteria_check(&lin, &h, &[Vec2::ZERO, Vec2::new(0.3, 0.2)], &schedule, 1e-10).unwrap();
    let worst = rep
        .probes
        .iter()
        .flat_map(|p| p.up_second_differences.iter().chain(&p.down_second_differences))
        .fold(0.0f64, |m, d| m.max(d.abs()));
    assert!(worst <= 1e-10, "{worst}");
    assert!(rep.passes);

    let sq = square(1.5, 385, |x| x.x * x.x);
    let x = Vec2::new(0.5, 0.0);
    let rep = convexity_criteria_check(&sq, &h, &[x], &schedule, 1e-6).unwrap();
    assert!(!rep.passes && rep.concavity_violation > 0.0);
    let exact: Vec<f64> = rep.times.iter().map(|t| 0.25 / (1.0 + 2.0 * t)).collect();
    for (i, d) in rep.probes[0].down_second_differences.iter().enumerate() {
        let e = exact[i + 2] - 2.0 * exact[i + 1] + exact[i];
        assert!((d - e).abs() <= 0.1 * e, "{i}: {d} vs {e}");
    }
}

#[test]
fn duality_and_shift_invariance() {
    let h = Hamiltonian::flat_edge(Vec2::new(0.2, 0.0), Vec2::new(0.0, 0.6), 1.0).unwrap();
    let u = square(1.0, 33, |x| (3.0 * x.x).sin() * 0.2 + 0.5 * x.y * x.x);
    let lag = Lagrangian::for_field(&h, &u).unwrap();
    let t = 0.15;
    let up = lag.flow_up(&u, t).unwrap();
    let neg = u.map(|_, v| -v);
    let down = lag.reflected().flow_down(&neg, t).unwrap();
    for (a, b) in up.field.values().iter().zip(down.field.values()) {
        assert!((a + b).abs() < 1e-12);
    }
    let shifted = lag.flow_up(&u.map(|_, v| v + 3.5), t).unwrap();
    for (a, b) in up.field.values().iter().zip(shifted.field.values()) {
        assert!((b - a - 3.5).abs() < 1e-12);
    }
}

#[test]
fn semigroup_at_grid_scale() {
    let h = Hamiltonian::quadratic();
    let n = 65;
    let u = square(1.0, n, |x| 0.3 * (2.0 * x.x).sin() + 0.2 * x.y.abs());
    let lag = Lagrangian::for_field(&h, &u).unwrap();
    let (s, t) = (0.05, 0.05);
    let full = lag.flow_up(&u, s + t).unwrap();
    let twice = lag.flow_up(&lag.flow_up(&u, s).unwrap().field, t).unwrap();
    let gap = full.field.max_abs_diff_where(&twice.field, |x| x.norm() <= 0.4);
    assert!(gap <= 2.0 * u.spacing(), "{gap}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn flow_is_monotone(vals in proptest::collection::vec(-0.2..0.2f64, 81), bumps in proptest::collection::vec(0.0..0.1f64, 81)) {
        let h = Hamiltonian::quadratic();
        let u = GridField::new(Vec2::new(-1.0, -1.0), 0.25, 9, 9, vals).unwrap();
        let v = GridField::new(
            Vec2::new(-1.0, -1.0), 0.25, 9, 9,
            u.values().iter().zip(&bumps).map(|(a, b)| a + b).collect(),
        ).unwrap();
        let lip = 2f64.sqrt() * u.lipschitz_estimate().max(v.lipschitz_estimate());
        let lag = Lagrangian::for_lipschitz(&h, lip).unwrap();
        let tu = lag.flow_up(&u, 0.2).unwrap();
        let tv = lag.flow_up(&v, 0.2).unwrap();
        for (a, b) in tu.field.values().iter().zip(tv.field.values()) {
            prop_assert!(a <= b);
        }
    }
}
