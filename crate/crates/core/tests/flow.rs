mod common;

use std::sync::Arc;

use common::{build, max_abs_diff, random_state, rng, ALL};
use divflow::flow::{
    birkhoff_integral, endpoint_bound_check, first_return, integrate_geodesic,
    path_integral_identity, path_integral_identity_residual, proxy_sasaki_distance, FlowTolerances,
};
use divflow::geometry::{Chart, ChartedManifold, UnitTangentState, VectorFieldDef};
use divflow::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn tol() -> FlowTolerances {
    FlowTolerances::default()
}

#[test]
fn hyperbolic_matches_closed_form_geodesics() {
    let zm = build("hyperbolic");
    let m = &zm.manifold;
    let oracle = m.geodesic_oracle().unwrap().clone();
    let mut r = rng(11);
    for _ in 0..100 {
        let s = random_state("hyperbolic", m, &mut r);
        let tr = integrate_geodesic(m, &s, 5.0, tol()).unwrap();
        let (q, w) = oracle(&s.p, &s.v, 5.0);
        let (x, v) = tr.final_state();
        assert!(max_abs_diff(&x, &q) < 1e-6, "{:?}", s);
        assert!(max_abs_diff(&v, &w) < 1e-6 * w.iter().fold(1.0, |a, b| f64::max(a, b.abs())));
        let mid = tr.state_at(2.5).unwrap();
        assert!(max_abs_diff(&mid.0, &oracle(&s.p, &s.v, 2.5).0) < 1e-6);
    }
}

#[test]
fn torus_geodesics_are_straight_lines() {
    let zm = build("torus");
    let m = &zm.manifold;
    let mut r = rng(12);
    for _ in 0..20 {
        let s = random_state("torus", m, &mut r);
        for horizon in [37.5, -12.25] {
            let tr = integrate_geodesic(m, &s, horizon, tol()).unwrap();
            let (x, v) = tr.final_state();
            let line: Vec<f64> = s.p.iter().zip(&s.v).map(|(p, v)| p + horizon * v).collect();
            assert!(max_abs_diff(&x, &line) < 1e-12 * horizon.abs());
            assert_eq!(v, s.v);
            assert_eq!(tr.end_time(), horizon);
        }
    }
}

#[test]
fn clairaut_quantity_is_conserved() {
    let zm = build("revolution:1/(1+x^2)");
    let m = &zm.manifold;
    let f = zm.revolution().unwrap().profile.f.clone();
    let mut r = rng(13);
    for _ in 0..20 {
        let s = random_state("revolution:1/(1+x^2)", m, &mut r);
        let tr = integrate_geodesic(m, &s, 20.0, tol()).unwrap();
        let c0 = f(s.p[0]).powi(2) * s.v[1];
        for (x, v) in tr.positions.iter().zip(&tr.velocities) {
            assert!((f(x[0]).powi(2) * v[1] - c0).abs() < 1e-7);
        }
    }
}

#[test]
fn birkhoff_integrals() {
    let mut r = rng(14);
    for id in ALL {
        let zm = build(id);
        let m = &zm.manifold;
        let s = random_state(id, m, &mut r);
        let one =
            birkhoff_integral(m, &|_: &[f64], _: &[f64]| Ok(1.0), &s, 7.5, tol(), 1e-10).unwrap();
        assert!((one - 7.5).abs() < 1e-12, "{id}");
        let back =
            birkhoff_integral(m, &|_: &[f64], _: &[f64]| Ok(1.0), &s, -7.5, tol(), 1e-10).unwrap();
        assert!((back + 7.5).abs() < 1e-12, "{id}");
    }
    // Killing fields integrate to zero
    for (id, field) in [
        ("hyperbolic", "rotation"),
        ("warp:ex2", "Zbar"),
        ("warp:ex3", "Ubar"),
    ] {
        let zm = build(id);
        let m = &zm.manifold;
        let x = zm.field(field).unwrap();
        for _ in 0..10 {
            let s = random_state(id, m, &mut r);
            let t = 10.0;
            let val = birkhoff_integral(
                m,
                &|p: &[f64], v: &[f64]| m.f_x_at(&x, p, v),
                &s,
                t,
                tol(),
                1e-10,
            )
            .unwrap();
            assert!(val.abs() < 1e-7 * t, "{id}/{field}: {val}");
        }
    }
}

#[test]
fn example_one_orbit_integral_bound() {
    let zm = build("revolution:1/(1+x^2)");
    let m = &zm.manifold;
    let w = zm.field("W").unwrap();
    let mut r = rng(15);
    for _ in 0..20 {
        let s = random_state("revolution:1/(1+x^2)", m, &mut r);
        let t = 20.0;
        let val = birkhoff_integral(
            m,
            &|p: &[f64], v: &[f64]| m.f_x_at(&w, p, v),
            &s,
            t,
            tol(),
            1e-10,
        )
        .unwrap();
        assert!(val.abs() <= 3.0 * t + 1e-9);
    }
}

#[test]
fn path_identity_on_every_pair() {
    let mut r = rng(16);
    for id in ALL {
        let zm = build(id);
        let m = &zm.manifold;
        for field in zm.field_ids() {
            let x = zm.field(field).unwrap();
            for _ in 0..10 {
                let s = random_state(id, m, &mut r);
                let t = 10.0;
                let res = path_integral_identity(m, &x, &s, t, tol(), 1e-10).unwrap();
                assert!(res.residual <= 1e-6 * (1.0 + t), "{id}/{field}: {res:?}");
            }
        }
    }
}

#[test]
fn path_identity_trivial_cases() {
    let mut r = rng(17);
    let torus = build("torus");
    let m = &torus.manifold;
    let zero = VectorFieldDef::zero(m);
    let c = torus.field("const").unwrap();
    for _ in 0..10 {
        let s = random_state("torus", m, &mut r);
        assert_eq!(
            path_integral_identity_residual(m, &zero, &s, 10.0).unwrap(),
            0.0
        );
        let res = path_integral_identity(m, &c, &s, 10.0, tol(), 1e-10).unwrap();
        assert_eq!(res.integral, 0.0);
        assert!(res.residual < 1e-14);
    }
    let ex4 = build("warp:ex4");
    let z = ex4.field("Z").unwrap();
    for _ in 0..20 {
        let s = random_state("warp:ex4", &ex4.manifold, &mut r);
        assert!(path_integral_identity_residual(&ex4.manifold, &z, &s, 10.0).unwrap() < 1e-5);
    }
}

#[test]
fn endpoint_bound_holds() {
    let mut r = rng(18);
    let torus = build("torus");
    let zero = VectorFieldDef::zero(&torus.manifold);
    let s = random_state("torus", &torus.manifold, &mut r);
    assert_eq!(
        endpoint_bound_check(&torus.manifold, &zero, &s, 5.0, tol()).unwrap(),
        (0.0, 0.0)
    );
    for (id, field, s_len) in [
        ("warp:ex3", "Ubar", 20.0),
        ("revolution:1/(1+x^2)", "W", 10.0),
    ] {
        let zm = build(id);
        let x = zm.field(field).unwrap();
        for _ in 0..10 {
            let s = random_state(id, &zm.manifold, &mut r);
            let (lhs, rhs) = endpoint_bound_check(&zm.manifold, &x, &s, s_len, tol()).unwrap();
            assert!(lhs <= rhs + 1e-6, "{id}: {lhs} > {rhs}");
        }
    }
}

#[test]
fn torus_rational_direction_returns_exactly() {
    let zm = build("torus");
    let m = &zm.manifold;
    let s = UnitTangentState::new(m, 0, vec![0.25, 0.5], vec![0.6, 0.8]).unwrap();
    let ev = first_return(m, &s, 0.05, 1.0, 20.0, tol())
        .unwrap()
        .unwrap();
    assert!((ev.time - 5.0).abs() < 1e-8, "{ev:?}");
    assert!(ev.distance < 1e-8);
    assert!(ev.time >= 1.0 && ev.distance <= ev.epsilon);
}

#[test]
fn torus_random_directions_return() {
    let zm = build("torus");
    let m = &zm.manifold;
    let mut r = rng(19);
    let n = 200;
    let mut found = 0;
    for _ in 0..n {
        let s = random_state("torus", m, &mut r);
        if let Some(ev) = first_return(m, &s, 0.05, 1.0, 1000.0, tol()).unwrap() {
            assert!(ev.time >= 1.0 && ev.distance <= 0.05);
            let (x, v) = integrate_geodesic(m, &s, ev.time, tol())
                .unwrap()
                .final_state();
            assert!((proxy_sasaki_distance(m, &s, &x, &v).unwrap() - ev.distance).abs() < 1e-8);
            found += 1;
        }
    }
    assert!(found as f64 >= 0.99 * n as f64, "{found}/{n}");
}

#[test]
fn hyperbolic_orbits_do_not_return() {
    let zm = build("hyperbolic");
    let m = &zm.manifold;
    let mut r = rng(20);
    for _ in 0..50 {
        let s = random_state("hyperbolic", m, &mut r);
        assert_eq!(first_return(m, &s, 0.1, 1.0, 100.0, tol()).unwrap(), None);
        assert_eq!(first_return(m, &s, 0.05, 1.0, 1000.0, tol()).unwrap(), None);
    }
}

#[test]
fn first_return_rejects_bad_arguments() {
    let zm = build("torus");
    let s = UnitTangentState::new(&zm.manifold, 0, vec![0.0, 0.0], vec![1.0, 0.0]).unwrap();
    assert!(matches!(
        first_return(&zm.manifold, &s, 0.0, 1.0, 2.0, tol()),
        Err(Error::Invalid(_))
    ));
    assert!(matches!(
        first_return(&zm.manifold, &s, 0.1, 3.0, 2.0, tol()),
        Err(Error::Invalid(_))
    ));
}

/// Speed drift over |t| ≤ 50 wherever double precision can represent the
/// orbit; on the hyperboloid chart the position loses its angular digits
/// beyond r ≈ 28, so escaping orbits are checked to |t| ≤ 25.
#[test]
fn speed_is_conserved() {
    let mut r = rng(21);
    for id in ALL {
        let zm = build(id);
        let m = &zm.manifold;
        let horizon = if matches!(id, "hyperbolic" | "warp:ex3") {
            25.0
        } else {
            50.0
        };
        for _ in 0..20 {
            let s = random_state(id, m, &mut r);
            for h in [horizon, -horizon] {
                let tr = integrate_geodesic(m, &s, h, tol()).unwrap();
                assert!(!tr.is_truncated());
                assert!(
                    tr.max_speed_drift() <= 1e-7,
                    "{id}: {}",
                    tr.max_speed_drift()
                );
                assert!(tr.stats.max_local_error <= 1.0);
            }
        }
    }
}

#[test]
fn time_reversal_returns_to_start() {
    let fine = FlowTolerances {
        rtol: 1e-11,
        atol: 1e-14,
        ..tol()
    };
    let mut r = rng(22);
    for id in ALL {
        let zm = build(id);
        let m = &zm.manifold;
        for _ in 0..10 {
            let s = random_state(id, m, &mut r);
            let (x, v) = integrate_geodesic(m, &s, 10.0, fine).unwrap().final_state();
            let back = UnitTangentState { chart: 0, p: x, v }.flipped();
            let (xb, vb) = integrate_geodesic(m, &back, 10.0, fine)
                .unwrap()
                .final_state();
            assert!(
                max_abs_diff(&xb, &s.p) < 1e-6,
                "{id}: {}",
                max_abs_diff(&xb, &s.p)
            );
            assert!(max_abs_diff(&vb.iter().map(|c| -c).collect::<Vec<_>>(), &s.v) < 1e-5);
        }
    }
}

#[test]
fn negative_horizon_is_the_flipped_forward_flow() {
    let zm = build("warp:ex4");
    let m = &zm.manifold;
    let mut r = rng(23);
    let s = random_state("warp:ex4", m, &mut r);
    let back = integrate_geodesic(m, &s, -6.0, tol()).unwrap();
    let fwd = integrate_geodesic(m, &s.flipped(), 6.0, tol()).unwrap();
    let (xb, vb) = back.final_state();
    let (xf, vf) = fwd.final_state();
    assert_eq!(xb, xf);
    assert_eq!(vb, vf.iter().map(|c| -c).collect::<Vec<_>>());
    assert!(back.times.windows(2).all(|w| w[1] < w[0]));
    let (x3, _) = back.state_at(-3.0).unwrap();
    assert_eq!(x3, fwd.state_at(3.0).unwrap().0);
    assert!(back.state_at(1.0).is_err());
}

#[test]
fn leaving_the_chart_truncates() {
    let chart = Chart::new(
        "half-plane",
        2,
        Arc::new(|_: &[f64]| DMatrix::identity(2, 2)),
    )
    .with_domain(Arc::new(|x: &[f64]| x[0] < 1.0));
    let m = ChartedManifold::new("half-plane", chart);
    let s = UnitTangentState::new(&m, 0, vec![0.0, 0.0], vec![1.0, 0.0]).unwrap();
    let tr = integrate_geodesic(&m, &s, 5.0, tol()).unwrap();
    let cut = tr.truncation.clone().unwrap();
    assert!(cut.t > 0.99 && cut.t < 1.0, "{cut:?}");
    assert!(matches!(
        birkhoff_integral(&m, &|_: &[f64], _: &[f64]| Ok(1.0), &s, 5.0, tol(), 1e-10),
        Err(Error::Truncated { .. })
    ));
    assert!(matches!(
        first_return(&m, &s, 0.05, 1.0, 5.0, tol()),
        Err(Error::Truncated { .. })
    ));
}

#[test]
fn trajectory_csv_layout() {
    let zm = build("warp:ex2");
    let s = random_state("warp:ex2", &zm.manifold, &mut rng(24));
    let tr = integrate_geodesic(&zm.manifold, &s, 2.0, tol()).unwrap();
    let mut buf = Vec::new();
    tr.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,x_1,x_2,x_3,v_1,v_2,v_3,speed_drift"
    );
    assert_eq!(lines.count(), tr.times.len());
}

#[test]
fn seams_end_steps_on_profile_joins() {
    // Orbits through the r = 1 join of the example-2 profile stay as accurate
    // as orbits of the smooth example-4 warp.
    let zm = build("warp:ex2");
    let m = &zm.manifold;
    let s = UnitTangentState::from_frame(m, 0, vec![0.0, 0.0, 0.0], &[0.6, 0.0, 0.8]).unwrap();
    let tr = integrate_geodesic(m, &s, 50.0, tol()).unwrap();
    let radius = |x: &[f64]| x[0].hypot(x[1]).asinh();
    let on_join = tr
        .positions
        .iter()
        .filter(|x| (radius(x) - 1.0).abs() < 1e-6 || (radius(x) - 2.0).abs() < 1e-6)
        .count();
    assert!(on_join >= 2, "{on_join}");
    assert!(tr.max_speed_drift() < 5e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn flow_property(idx in 0usize..7, seed in any::<u64>(), t in 0.5f64..10.0, s in 0.5f64..10.0) {
        let id = ALL[idx];
        let zm = build(id);
        let m = &zm.manifold;
        let st = random_state(id, m, &mut rng(seed));
        let direct = integrate_geodesic(m, &st, t + s, tol()).unwrap();
        let (x, v) = integrate_geodesic(m, &st, s, tol()).unwrap().final_state();
        let mid = UnitTangentState { chart: 0, p: x, v };
        let composite = integrate_geodesic(m, &mid, t, tol()).unwrap();
        let (a, b) = (composite.final_state().0, direct.final_state().0);
        // coordinates grow like e^t over a hyperbolic base; compare intrinsically
        let gap = m.local_distance(0, &a, &b).unwrap();
        prop_assert!(gap < 1e-6, "{id}: {gap}");
        prop_assert!(direct.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn dense_output_agrees_with_nodes(idx in 0usize..7, seed in any::<u64>()) {
        let id = ALL[idx];
        let zm = build(id);
        let m = &zm.manifold;
        let st = random_state(id, m, &mut rng(seed));
        let tr = integrate_geodesic(m, &st, 8.0, tol()).unwrap();
        for (i, &t) in tr.times.iter().enumerate() {
            let (x, v) = tr.state_at(t).unwrap();
            prop_assert!(max_abs_diff(&x, &tr.positions[i]) < 1e-12 * (1.0 + x.iter().fold(0.0, |a, b| f64::max(a, b.abs()))));
            prop_assert!(max_abs_diff(&v, &tr.velocities[i]) < 1e-12 * (1.0 + v.iter().fold(0.0, |a, b| f64::max(a, b.abs()))));
        }
    }
}
