use hamcalc::analysis::{
    blowup_probe, cone_comparison_check, cone_lipschitz_check, cone_lipschitz_level, cone_slope, fit_deviation,
    gradient_flow_trace, lap_probe, modulus_estimate, BlowupOptions, CcOptions,
};
use hamcalc::cone::cone_exact;
use hamcalc::counterexamples::{build_uf, CounterexampleSpec, Profile};
use hamcalc::flow::Lagrangian;
use hamcalc::{GridField, Hamiltonian, Rect, Vec2};
use proptest::prelude::*;

fn square(r: f64, n: usize, f: impl Fn(Vec2) -> f64) -> GridField {
    GridField::covering(Rect::centered(r), n, f).unwrap()
}

fn crease_field(lambda0: f64, n: usize) -> (GridField, Hamiltonian) {
    let (a, b) = (Vec2::ZERO, Vec2::new(0.0, lambda0));
    let spec = CounterexampleSpec::new(a, b, Profile::Abs).unwrap();
    let uf = build_uf(&spec, Rect::centered(1.0), n).unwrap();
    (uf.field, Hamiltonian::flat_edge(a, b, 1.0).unwrap())
}

/// Best deviation over a 41x41 grid of slopes around `e`, refined twice.
fn scan_oracle(u: &GridField, x0: Vec2, r: f64, e: Vec2, half_width: f64) -> f64 {
    let mut center = e;
    let mut w = half_width;
    let mut best = f64::INFINITY;
    for _ in 0..3 {
        let mut arg = center;
        for j in 0..41 {
            for i in 0..41 {
                let c = center + Vec2::new(-w + 2.0 * w * i as f64 / 40.0, -w + 2.0 * w * j as f64 / 40.0);
                let d = fit_deviation(u, x0, r, c).unwrap();
                if d < best {
                    best = d;
                    arg = c;
                }
            }
        }
        center = arg;
        w /= 10.0;
    }
    best
}

#[test]
fn cone_lipschitz_on_linear_fields() {
    let h = Hamiltonian::quadratic();
    let p0 = Vec2::new(0.6, -0.3);
    let u = square(1.0, 33, |x| p0.dot(x));
    let k = h.eval(p0);
    assert!(cone_lipschitz_check(&u, &h, k).unwrap().violation <= 1e-12);
    let low = cone_lipschitz_check(&u, &h, 0.8 * k).unwrap();
    assert!(low.violation > 1e-3);
    let [x, y] = low.witness.unwrap();
    // The worst pair is aligned with the gradient.
    assert!((x - y).normalized().dot(p0.normalized()) > 0.9);
    assert!((cone_lipschitz_level(&u, &h).k - k).abs() < 1e-12);

    let zero = square(1.0, 17, |_| 0.0);
    for k in [0.0, 0.5, 2.0] {
        assert!(cone_lipschitz_check(&zero, &h, k).unwrap().violation <= 0.0);
    }
    assert!(cone_lipschitz_check(&zero, &h, -1.0).is_err());
}

#[test]
fn linear_growth_slope_bound() {
    // |u| <= K(1 + |x|) and Lipschitz K: (2K+1)|z| <= C_k(z) = sqrt(2k)|z|.
    let h = Hamiltonian::quadratic();
    let big_k = 0.7;
    let u = square(2.0, 49, |x| big_k * (0.6 * x.x.sin() + 0.8 * x.y.cos() - 0.8));
    let k = (2.0 * big_k + 1.0).powi(2) / 2.0;
    assert!(cone_lipschitz_check(&u, &h, k).unwrap().violation <= 0.0);
}

#[test]
fn comparison_with_cones_examples() {
    let h = Hamiltonian::quadratic();
    let opts = CcOptions {
        rects: 24,
        ..CcOptions::default()
    };
    let lin = square(1.0, 65, |x| 0.7 * x.x + 0.2 * x.y);
    let rep = cone_comparison_check(&lin, &h, &opts).unwrap();
    assert!(rep.passes, "{:?}", rep.witness);
    assert!(rep.sampling.checks > 0);

    let sq = square(1.0, 65, |x| x.x * x.x);
    let rep = cone_comparison_check(&sq, &h, &opts).unwrap();
    assert!(!rep.passes);
    assert!(rep.worst_violation > 1e-3);
    assert!(rep.witness.is_some());

    let (uf, hf) = crease_field(1.0, 65);
    let rep = cone_comparison_check(&uf, &hf, &opts).unwrap();
    assert!(rep.worst_violation <= 5.0 * uf.spacing(), "{}", rep.worst_violation);
}

#[test]
fn lap_probe_on_linear_field() {
    let p0 = Vec2::new(0.4, -1.1);
    let u = square(1.0, 65, |x| p0.dot(x) + 3.0);
    let fit = lap_probe(&u, Vec2::new(0.1, 0.2), 0.3).unwrap();
    assert!((fit.e - p0).norm() < 1e-8);
    assert!(fit.deviation < 1e-9);
    assert!(lap_probe(&u, Vec2::new(0.9, 0.0), 0.3).is_err());
}

#[test]
fn lap_probe_at_the_crease_has_half_lambda_deviation() {
    let lambda0 = 1.0;
    let (u, _) = crease_field(lambda0, 129);
    for r in [0.4, 0.2, 0.1] {
        let fit = lap_probe(&u, Vec2::ZERO, r).unwrap();
        assert!((fit.deviation - lambda0 / 2.0).abs() < 1e-3, "r={r}: {}", fit.deviation);
        assert!((fit.e.y - lambda0 / 2.0).abs() < 1e-3);
        assert!(fit.deviation <= scan_oracle(&u, Vec2::ZERO, r, fit.e, 0.5) + 1e-9);
    }
}

#[test]
fn lap_probe_on_cone_follows_supporting_slope() {
    let u = square(1.0, 129, |x| x.norm());
    let x0 = Vec2::new(0.5, 0.2);
    let mut prev = f64::INFINITY;
    for r in [0.2, 0.1, 0.05] {
        let fit = lap_probe(&u, x0, r).unwrap();
        assert!((fit.e - x0.normalized()).norm() < 2.0 * r, "{r}: {:?}", fit.e);
        assert!(fit.deviation < r, "{r}: {}", fit.deviation);
        assert!(fit.deviation < prev);
        prev = fit.deviation;
        assert!(fit.deviation <= scan_oracle(&u, x0, r, fit.e, 0.5) + 1e-9);
    }
}

#[test]
fn blowup_on_linear_field_and_crease() {
    let h = Hamiltonian::quadratic();
    let p0 = Vec2::new(0.5, 0.5);
    let u = square(1.0, 65, |x| p0.dot(x));
    let d = blowup_probe(&u, &h, Vec2::new(0.1, -0.1), &[0.4, 0.2, 0.1], &BlowupOptions::default()).unwrap();
    assert!(d.diameter < 1e-8);
    assert!(d.slope_residual < 1e-6);
    assert!(blowup_probe(&u, &h, Vec2::ZERO, &[0.1, 0.2], &BlowupOptions::default()).is_err());

    let lambda0 = 1.0;
    let (uf, hf) = crease_field(lambda0, 65);
    let x0 = Vec2::new(0.2, 0.0);
    let d = blowup_probe(&uf, &hf, x0, &[0.4, 0.2, 0.1], &BlowupOptions::default()).unwrap();
    assert!(d.diameter >= 0.5 * lambda0, "{}", d.diameter);
    assert!(d.fits.iter().all(|f| (f.deviation - lambda0 / 2.0).abs() < 1e-3));
    // Off the crease the field is linear and the slope set collapses.
    let d = blowup_probe(&uf, &hf, Vec2::new(0.2, 0.3), &[0.4, 0.2, 0.1], &BlowupOptions::default()).unwrap();
    assert!(d.diameter < 1e-6);
    assert!(d.spreads[0] > d.spreads[2] + 0.1, "{:?}", d.spreads);
}

#[test]
fn cone_slopes_examples() {
    let h = Hamiltonian::quadratic();
    let p0 = Vec2::new(0.8, 0.6);
    let u = square(1.0, 65, |x| p0.dot(x));
    let s = cone_slope(&u, &h, Vec2::new(0.1, 0.0), 0.25).unwrap();
    assert!((s.plus - h.eval(p0)).abs() < 1e-3, "{}", s.plus);
    assert!((s.minus + h.eval(p0)).abs() < 1e-3, "{}", s.minus);
    let dir = (s.witness_plus - Vec2::new(0.1, 0.0)).normalized();
    assert!(dir.dot(p0.normalized()) > (2f64.to_radians()).cos());

    let zero = square(1.0, 33, |_| 0.0);
    let s = cone_slope(&zero, &h, Vec2::ZERO, 0.5).unwrap();
    assert_eq!((s.plus, s.minus), (0.0, 0.0));
    assert!(cone_slope(&zero, &h, Vec2::new(0.8, 0.0), 0.5).is_err());

    let (a, b) = (Vec2::new(-0.2, 0.1), Vec2::new(0.4, 0.7));
    let hf = Hamiltonian::flat_edge(a, b, 1.0).unwrap();
    let spec = CounterexampleSpec::new(a, b, Profile::Abs).unwrap();
    let uf = build_uf(&spec, Rect::centered(1.0), 129).unwrap();
    for x in [Vec2::new(0.2, -0.3), Vec2::new(-0.4, 0.1), Vec2::ZERO] {
        let s = cone_slope(&uf.field, &hf, x, 0.2).unwrap();
        assert!((s.plus - hf.eval(a)).abs() < 1e-2, "{x:?}: {}", s.plus);
        assert!((s.minus + hf.eval(a)).abs() < 1e-2, "{x:?}: {}", s.minus);
    }
}

#[test]
fn cone_slopes_agree_with_flow_slopes() {
    let h = Hamiltonian::quadratic();
    let u = square(1.0, 129, |x| x.norm());
    let lag = Lagrangian::for_field(&h, &u).unwrap();
    let x = Vec2::new(0.5, 0.2);
    let mut gaps = Vec::new();
    for t in [0.2, 0.1, 0.05] {
        let hat = cone_slope(&u, &h, x, t).unwrap();
        let flow = lag.slopes(&u, x, &[t, 2.0 * t], 1.0).unwrap();
        gaps.push((hat.plus - flow.samples[0].s_plus).abs());
    }
    assert!(gaps[2] < 1e-2, "{gaps:?}");
    assert!(gaps[2] <= gaps[0] + 1e-3);
}

#[test]
fn gradient_flow_on_linear_field_is_straight() {
    let h = Hamiltonian::quadratic();
    let p0 = Vec2::new(0.3, 0.4);
    let u = square(1.0, 65, |x| p0.dot(x));
    let t = 0.1;
    let tr = gradient_flow_trace(&u, &h, Vec2::new(-0.5, -0.5), t, 50).unwrap();
    assert!(tr.exited);
    assert!(tr.steps() >= 5);
    for w in tr.points.windows(2) {
        let d = w[1] - w[0];
        assert!((d.norm() - t).abs() < 1e-12);
        assert!(d.normalized().dot(p0.normalized()) > (2f64.to_radians()).cos());
    }
    assert!(tr.slope_values.windows(2).all(|w| w[1] >= w[0] - 1e-9));
    assert!(tr.cone_residuals.iter().all(|&r| r < 1e-6), "{:?}", tr.cone_residuals);
    assert!(gradient_flow_trace(&u, &h, Vec2::ZERO, 0.5 * u.spacing(), 3).is_err());
}

#[test]
fn gradient_flow_on_cone_runs_outward() {
    let h = Hamiltonian::quadratic();
    let z = Vec2::new(-0.3, 0.1);
    let k = 0.5;
    let u = square(1.0, 129, |x| cone_exact(&h, k, x - z));
    let x0 = Vec2::new(0.0, 0.0);
    let tr = gradient_flow_trace(&u, &h, x0, 0.05, 40).unwrap();
    assert!(tr.steps() >= 5);
    let mut prev = (x0 - z).norm();
    for p in &tr.points[1..] {
        let r = (*p - z).norm();
        assert!(r > prev + 0.04);
        prev = r;
    }
    // Bilinear reads of the curved cone perturb each slope by about h^2 / (8 t |x - z|).
    assert!(tr.slope_values.windows(2).all(|w| w[1] >= w[0] - 1e-3), "{:?}", tr.slope_values);
    assert!(tr.slope_values.iter().all(|s| (s - k).abs() < 1e-2));
}

#[test]
fn modulus_examples() {
    let u = square(1.0, 65, |x| 0.3 * x.x - 0.9 * x.y);
    let t = modulus_estimate(&u, Vec2::new(0.1, 0.1), 0.4, &[0.4, 0.2, 0.1], None).unwrap();
    assert_eq!(t.rows.len(), 3);
    assert!(t.rows.iter().all(|r| r.rho < 1e-8));

    let lambda0 = 1.0;
    let (uf, _) = crease_field(lambda0, 129);
    let t = modulus_estimate(&uf, Vec2::new(0.1, 0.0), 0.4, &[0.4, 0.2], Some(0.02)).unwrap();
    for row in &t.rows {
        assert!(row.rho > 0.9 * lambda0, "{row:?}");
    }
    assert!(t.rows.windows(2).all(|w| w[1].rho <= w[0].rho));
}

fn bump(c: Vec2, w: f64, amp: f64) -> impl Fn(Vec2) -> f64 {
    move |x| {
        let d = (x - c).norm_sq() / (w * w);
        if d < 1.0 { amp * (1.0 - d).powi(2) } else { 0.0 }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn comparison_check_is_stable_under_uniform_perturbation(
        cx in -0.5..0.5f64, cy in -0.5..0.5f64, amp in -0.05..0.05f64, w in 0.1..0.5f64,
    ) {
        let h = Hamiltonian::quadratic();
        let opts = CcOptions { rects: 12, levels: Some(vec![0.1, 0.3, 0.6]), ..CcOptions::default() };
        let base = square(1.0, 33, |x| 0.5 * x.x - 0.4 * x.y);
        let b = bump(Vec2::new(cx, cy), w, amp);
        let pert = base.map(|x, v| v + b(x));
        let dist = base.max_abs_diff_where(&pert, |_| true);
        let r0 = cone_comparison_check(&base, &h, &opts).unwrap();
        let r1 = cone_comparison_check(&pert, &h, &opts).unwrap();
        prop_assert!(r1.worst_violation <= r0.worst_violation + 2.0 * dist + 1e-12);
    }
}
