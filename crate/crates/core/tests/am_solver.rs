use hamcalc::analysis::CcOptions;
use hamcalc::counterexamples::{aronsson, CounterexampleSpec, Profile};
use hamcalc::hamiltonian::normalize_hamiltonian;
use hamcalc::solver::{residual_report, solve_dirichlet, DirichletProblem, RingScheme, SchemeKind, SolveOptions};
use hamcalc::{Hamiltonian, Rect, Vec2};
use proptest::prelude::*;

fn quiet(tol: f64) -> SolveOptions {
    SolveOptions {
        tol,
        verify: None,
        ..SolveOptions::default()
    }
}

#[test]
fn linear_data_is_a_fixed_point() {
    let p0 = Vec2::new(0.7, -0.4);
    for h in [
        Hamiltonian::quadratic(),
        Hamiltonian::power_norm(4.0, 2.0, 0.5).unwrap(),
        Hamiltonian::power_norm(1.5, 2.0, 1.0).unwrap(),
    ] {
        for nested in [false, true] {
            let p = DirichletProblem::new(Rect::centered(1.0), h.clone(), 33, move |x| p0.dot(x) + 0.3).unwrap();
            let opts = SolveOptions {
                nested,
                ..quiet(1e-10)
            };
            let r = solve_dirichlet(&p, &opts).unwrap();
            assert!(r.converged);
            assert!(r.sweeps <= 3, "{}", r.sweeps);
            for j in 0..r.field.ny() {
                for i in 0..r.field.nx() {
                    let x = r.field.point(i, j);
                    assert!((r.field.at(i, j) - p0.dot(x) - 0.3).abs() <= 1e-10);
                }
            }
        }
    }
}

#[test]
fn aronsson_benchmark_on_a_coarse_grid() {
    let p = DirichletProblem::new(Rect::centered(1.0), Hamiltonian::quadratic(), 65, aronsson).unwrap();
    let r = solve_dirichlet(&p, &SolveOptions::default()).unwrap();
    assert!(r.converged);
    assert_eq!(r.scheme, SchemeKind::Midpoint);
    let err = (0..r.field.len())
        .map(|k| {
            let (i, j) = (k % r.field.nx(), k / r.field.nx());
            (r.field.at(i, j) - aronsson(r.field.point(i, j))).abs()
        })
        .fold(0.0, f64::max);
    assert!(err <= 0.02, "{err}");
    let cc = r.cc.unwrap();
    assert!(cc.worst_violation <= 5.0 * p.spacing(), "{}", cc.worst_violation);
    assert!(r.levels.len() > 1);
    assert_eq!(r.levels.last().unwrap().n, 65);
}

#[test]
fn problem_validation() {
    let h = Hamiltonian::quadratic();
    assert!(DirichletProblem::new(Rect::centered(1.0), h.clone(), 3, |_| 0.0).is_err());
    let p = DirichletProblem::new(Rect::centered(1.0), h.clone(), 17, |_| 0.0).unwrap();
    assert!(p.clone().with_stencil_radius(p.spacing()).is_err());
    assert!(p.with_stencil_radius(0.25).is_ok());
    let shifted = Hamiltonian::quadratic_with(0.5, Vec2::new(0.3, 0.0), 0.0).unwrap();
    assert!(DirichletProblem::new(Rect::centered(1.0), shifted, 17, |_| 0.0).is_err());
}

#[test]
fn norm_hamiltonian_degenerates_to_midpoint() {
    let h = Hamiltonian::power_norm(2.0, 1.0, 1.0).unwrap();
    let fast = RingScheme::new(&h, 64, 4.0).unwrap();
    assert_eq!(fast.kind(), SchemeKind::Midpoint);
    let table = RingScheme::tabulated(&h, 64, 4.0).unwrap();
    let ring: Vec<f64> = (0..64).map(|j| ((j * 37 % 64) as f64 * 0.173).sin()).collect();
    let (lo, hi) = ring.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    assert_eq!(fast.update(&ring, 0.1), 0.5 * (lo + hi));
    assert!((table.update(&ring, 0.1) - 0.5 * (lo + hi)).abs() < 1e-9);
}

#[test]
fn scaled_and_tabulated_updates_agree() {
    let h = Hamiltonian::power_norm(4.0, 2.0, 0.5).unwrap();
    let scaled = RingScheme::new(&h, 64, 8.0).unwrap();
    assert_eq!(scaled.kind(), SchemeKind::Scaled);
    let table = RingScheme::tabulated(&h, 64, 8.0).unwrap();
    let offsets = scaled.offsets();
    for (k, c) in [(0.0, Vec2::new(1.0, 0.5)), (1.0, Vec2::new(-0.3, 0.2)), (2.0, Vec2::new(0.0, 0.9))] {
        let rho = 0.05;
        let ring: Vec<f64> = offsets
            .iter()
            .map(|d| {
                let x = *d * rho + Vec2::new(k * 0.1, 0.0);
                c.dot(x) + 0.4 * x.x * x.y + 0.3 * x.norm_sq()
            })
            .collect();
        let (a, b) = (scaled.update(&ring, rho), table.update(&ring, rho));
        assert!((a - b).abs() < 1e-6 * rho, "{a} vs {b}");
    }
}

#[test]
fn residual_report_examples() {
    let h = Hamiltonian::quadratic();
    let opts = CcOptions {
        rects: 16,
        ..CcOptions::default()
    };
    let lin = hamcalc::GridField::covering(Rect::centered(1.0), 33, |x| 0.4 * x.x + 0.2 * x.y).unwrap();
    let r = residual_report(&lin, &h, &opts, 1e-9).unwrap();
    assert!(r.lipschitz_violation <= 1e-12);
    assert!(r.cc.worst_violation <= 1e-12);
    assert!(r.criteria_violation <= 1e-10, "{}", r.criteria_violation);
    assert!((r.slope_level - h.eval(Vec2::new(0.4, 0.2))).abs() < 1e-12);

    let sq = hamcalc::GridField::covering(Rect::centered(1.0), 65, |x| x.x * x.x).unwrap();
    let r = residual_report(&sq, &h, &opts, 1e-9).unwrap();
    assert!(r.criteria.concavity_violation > 1e-4, "{:?}", r.criteria.concavity_violation);
    assert!(!r.cc.passes);
}

#[test]
fn flat_counterexample_is_recovered() {
    let (a, b) = (Vec2::new(-0.2, 0.1), Vec2::new(0.4, 0.7));
    let raw = Hamiltonian::flat_edge(a, b, 1.0).unwrap();
    let h = normalize_hamiltonian(&raw).unwrap();
    let shift = h.shift();
    let spec = CounterexampleSpec::new(a, b, Profile::Abs).unwrap();
    let g = move |x: Vec2| spec.eval(x) - shift.dot(x);
    let p = DirichletProblem::new(Rect::centered(1.0), h.clone(), 33, g.clone()).unwrap();
    let r = solve_dirichlet(&p, &quiet(1e-9)).unwrap();
    assert_eq!(r.scheme, SchemeKind::Table);
    assert!(r.converged);
    let lip = r.field.lipschitz_estimate();
    let err = (0..r.field.len())
        .map(|k| {
            let (i, j) = (k % r.field.nx(), k / r.field.nx());
            (r.field.at(i, j) - g(r.field.point(i, j))).abs()
        })
        .fold(0.0, f64::max);
    assert!(err <= 3.0 * p.spacing() * lip, "{err} vs {}", 3.0 * p.spacing() * lip);
}

#[test]
fn comparison_principle_between_solves() {
    let h = Hamiltonian::power_norm(4.0, 2.0, 0.5).unwrap();
    let tol = 1e-9;
    let g1 = |x: Vec2| x.x * x.y;
    let g2 = |x: Vec2| x.x * x.y + 0.1 * (1.0 + x.x).powi(2);
    let solve = |g: fn(Vec2) -> f64| {
        let p = DirichletProblem::new(Rect::centered(1.0), h.clone(), 33, g).unwrap();
        solve_dirichlet(&p, &quiet(tol)).unwrap().field
    };
    let (u1, u2) = (solve(g1), solve(g2));
    assert!(u1.values().iter().zip(u2.values()).all(|(a, b)| *a <= b + 2.0 * tol));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn update_is_monotone_in_the_ring(
        vals in prop::collection::vec(-1.0..1.0f64, 16),
        slot in 0usize..16,
        bump in 0.0..0.5f64,
    ) {
        let hs = [
            Hamiltonian::quadratic(),
            Hamiltonian::power_norm(4.0, 2.0, 0.5).unwrap(),
        ];
        for h in &hs {
            for scheme in [RingScheme::new(h, 16, 8.0).unwrap(), RingScheme::tabulated(h, 16, 8.0).unwrap()] {
                let mut up = vals.clone();
                up[slot] += bump;
                let (v0, v1) = (scheme.update(&vals, 0.5), scheme.update(&up, 0.5));
                prop_assert!(v1 >= v0 - 1e-12, "{:?}: {v0} -> {v1}", scheme.kind());
            }
        }
    }
}
