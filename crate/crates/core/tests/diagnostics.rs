mod common;

use std::f64::consts::PI;

use common::build;
use divflow::diagnostics::{
    auxiliary_positivity, cutoff, cutoff_estimate, default_f0, fx_integrability_ladder, hopf_probe,
    hopf_survey, karp_sequence, log_horizons, recurrence_fraction, write_karp_csv,
    x_decay_at_infinity, HopfLabel, HopfOptions, RecurrenceOptions, CUTOFF_CONSTANT,
};
use divflow::flow::FlowTolerances;
use divflow::measure::{base_integral, FiberRule, Method, QuadratureOptions, Region};
use divflow::zoo;
use divflow::{Error, UnitTangentState, VectorFieldDef};

fn quad() -> Method {
    Method::Quadrature(QuadratureOptions::default())
}

fn coarse() -> Method {
    Method::Quadrature(QuadratureOptions {
        periodic_nodes: 8,
        ..QuadratureOptions::default()
    })
}

/// `∫|f_Z|` over `SM ∩ {r ≤ R}` on `H² ×_{1/z²} S¹` for `R = 1, 2, 4, 8`, from a
/// 30-digit one-dimensional reduction (closed fiber integral in `w²`, then `r`).
const EX4_ABS_FZ_LADDER: [f64; 4] = [
    130.33086072276,
    438.41724782306,
    1188.4420306586,
    2715.77080602734,
];

#[test]
fn cutoff_profile() {
    assert_eq!(cutoff(0.0, 3.0), 1.0);
    assert_eq!(cutoff(3.0, 3.0), 1.0);
    assert_eq!(cutoff(6.0, 3.0), 0.0);
    assert_eq!(cutoff(9.0, 3.0), 0.0);
    assert!((cutoff(4.5, 3.0) - 0.5).abs() < 1e-15);
    // largest slope in r is C/r at the midpoint of the band
    let r = 3.0;
    let h = 1e-6;
    let slope = (cutoff(4.5 - h, r) - cutoff(4.5 + h, r)) / (2.0 * h);
    assert!((slope - CUTOFF_CONSTANT / r).abs() < 1e-8);
    let max = (0..=3000)
        .map(|i| {
            let x = r + 3.0 * i as f64 / 3000.0;
            (cutoff(x - h, r) - cutoff(x + h, r)) / (2.0 * h)
        })
        .fold(0.0, f64::max);
    assert!(max <= CUTOFF_CONSTANT / r + 1e-8);
}

#[test]
fn karp_example1_decays() {
    let z = build("revolution:1/(1+x^2)");
    let m = &z.manifold;
    let w = z.field("W").unwrap();
    let reps = karp_sequence(m, &w, &[10.0, 100.0, 1000.0], &quad()).unwrap();
    // C: the meridian arclength over |x|, maximized on a grid
    let arc = z.revolution().unwrap().arclength.clone();
    let c = (1..20_000)
        .map(|i| i as f64 * 1e-3)
        .map(|x| arc.s(x) / x)
        .fold(1.0, f64::max);
    assert!(c > 1.0 && c < 1.3, "{c}");
    for pair in reps.windows(2) {
        assert!(pair[1].normalized < pair[0].normalized);
    }
    for a in &reps {
        assert!(a.resolved, "{a:?}");
        let bound = 4.0 * PI * ((2.0 * c * a.radius + 2.0 * PI).ln() - a.radius.ln()) / a.radius;
        assert!(a.normalized <= bound + a.stderr, "{a:?} vs {bound}");
    }
    assert!(reps[2].normalized < 0.1);
}

#[test]
fn karp_example2_stays_away_from_zero() {
    let z = build("warp:ex2");
    let m = &z.manifold;
    let f = z.field("Zbar").unwrap();
    let reps = karp_sequence(m, &f, &[5.0, 10.0, 20.0], &quad()).unwrap();
    // in the tail |Zbar|·b·sinh r is the constant a·sinh²2, so mass/r is too
    let exact = 4.0 * PI * PI * 2f64.sinh().powi(2);
    for a in &reps {
        assert!(
            ((a.normalized - exact) / exact).abs() < 1e-8,
            "{a:?} vs {exact}"
        );
    }
}

#[test]
fn karp_zero_field_and_csv() {
    let z = build("warp:ex3");
    let m = &z.manifold;
    let reps = karp_sequence(m, &VectorFieldDef::zero(m), &[1.0, 2.0], &quad()).unwrap();
    assert!(reps
        .iter()
        .all(|a| a.mass == 0.0 && a.normalized == 0.0 && a.resolved));
    let mut out = Vec::new();
    write_karp_csv(&reps, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("r,mass,normalized,stderr"));
    assert_eq!(lines.next(), Some("1,0,0,0"));
    assert_eq!(lines.count(), 1);
    let torus = build("torus").manifold;
    assert!(matches!(
        karp_sequence(&torus, &VectorFieldDef::zero(&torus), &[1.0], &quad()),
        Err(Error::NoRadialLayout(_))
    ));
}

#[test]
fn cutoff_zero_field() {
    let m = build("hyperbolic").manifold;
    let c = cutoff_estimate(&m, &VectorFieldDef::zero(&m), 3.0, &quad()).unwrap();
    assert_eq!((c.lhs, c.rhs), (0.0, 0.0));
    assert!(c.holds);
    assert!(cutoff_estimate(&m, &VectorFieldDef::zero(&m), 0.0, &quad()).is_err());
}

#[test]
fn cutoff_example1() {
    let z = build("revolution:1/(1+x^2)");
    let c = cutoff_estimate(&z.manifold, &z.field("W").unwrap(), 10.0, &quad()).unwrap();
    assert_eq!(c.lhs, 0.0);
    assert!(c.rhs > 0.0 && c.holds);
}

#[test]
fn cutoff_holds_on_every_pair() {
    for (id, field) in zoo::CHECK_PAIRS {
        let z = build(id);
        let f = z.field(field).unwrap();
        for r in [2.0, 5.0, 10.0] {
            let c = cutoff_estimate(&z.manifold, &f, r, &quad()).unwrap();
            assert!(c.holds, "{id}/{field} r={r}: {c:?}");
        }
    }
    let z = build("warp:ex4");
    let c = cutoff_estimate(&z.manifold, &z.field("Z").unwrap(), 5.0, &quad()).unwrap();
    assert!(c.lhs > 39.0 && c.slack > 0.0, "{c:?}");
}

#[test]
fn fw_ladder_converges_below_area_bound() {
    let z = build("revolution:1/(1+x^2)");
    let m = &z.manifold;
    let w = z.field("W").unwrap();
    let rule = FiberRule::standard(2).unwrap();
    let est = fx_integrability_ladder(m, &w, 1.0, 6, &quad(), &rule).unwrap();
    assert_eq!(est.converged, Some(true), "{:?}", est.truncation_trace);
    let area = base_integral(
        m,
        &|_: &[f64]| Ok(1.0),
        &Region::Whole {
            r0: 1.0,
            levels: 10,
        },
        &quad(),
    )
    .unwrap();
    assert!(
        est.value <= 3.0 * 2.0 * PI * area.value,
        "{} vs {}",
        est.value,
        area.value
    );
    assert!(est.value > 0.0);
}

#[test]
fn killing_ladders_vanish() {
    // |f| ≡ 0 is integrated exactly by any rule
    let rule = FiberRule::sphere(4, 8);
    for (id, field) in [
        ("warp:ex2", "Zbar"),
        ("warp:ex3", "Ubar"),
        ("warp:ex2", "Ubar"),
    ] {
        let z = build(id);
        let est = fx_integrability_ladder(
            &z.manifold,
            &z.field(field).unwrap(),
            1.0,
            4,
            &coarse(),
            &rule,
        )
        .unwrap();
        for tp in &est.truncation_trace {
            assert!(
                tp.value.abs() < 1e-8,
                "{id}/{field}: {:?}",
                est.truncation_trace
            );
        }
    }
}

#[test]
fn example4_abs_fz_ladder_matches_oracle_and_diverges() {
    let z = build("warp:ex4");
    // |f_Z| depends on v only through the fiber component, with a kink where
    // it changes sign; a fine polar rule resolves the kink
    let rule = FiberRule::sphere(512, 2);
    let est = fx_integrability_ladder(
        &z.manifold,
        &z.field("Z").unwrap(),
        1.0,
        3,
        &coarse(),
        &rule,
    )
    .unwrap();
    for (tp, want) in est.truncation_trace.iter().zip(EX4_ABS_FZ_LADDER) {
        assert!(
            ((tp.value - want) / want).abs() < 1e-3,
            "R={}: {} vs {want}",
            tp.radius,
            tp.value
        );
    }
    assert_eq!(est.converged, Some(false));
}

#[test]
fn decay_dichotomy() {
    let z2 = build("warp:ex2");
    let d =
        x_decay_at_infinity(&z2.manifold, &z2.field("Zbar").unwrap(), &[1.0, 2.0, 4.0]).unwrap();
    for rep in &d {
        assert!(
            (rep.sup - rep.outer.sinh()).abs() <= 1e-9 * rep.outer.sinh(),
            "{rep:?}"
        );
    }
    let z3 = build("warp:ex3");
    let d = x_decay_at_infinity(
        &z3.manifold,
        &z3.field("Ubar").unwrap(),
        &[2.0, 4.0, 8.0, 16.0],
    )
    .unwrap();
    for rep in &d {
        let b = 2.0 / (1.0 + rep.inner);
        assert!((rep.sup - b).abs() < 1e-9, "{rep:?}");
        assert_eq!(rep.samples, 33 * 32 * 32);
    }
    assert!(d.windows(2).all(|p| p[1].sup < p[0].sup));
    let zero =
        x_decay_at_infinity(&z3.manifold, &VectorFieldDef::zero(&z3.manifold), &[3.0]).unwrap();
    assert_eq!(zero[0].sup, 0.0);
}

#[test]
fn recurrence_statistics() {
    let tol = FlowTolerances::default();
    let opts = RecurrenceOptions {
        samples: 200,
        ..RecurrenceOptions::default()
    };
    let torus = build("torus").manifold;
    let s = recurrence_fraction(&torus, &opts, 7, tol).unwrap();
    assert!(s.fraction >= 0.99, "{s:?}");
    assert_eq!(s.sample_radius, None);
    assert_eq!(s.returned + s.escaped + s.inconclusive, 200);
    let h2 = build("hyperbolic").manifold;
    let s = recurrence_fraction(&h2, &opts, 7, tol).unwrap();
    assert_eq!(s.returned, 0, "{s:?}");
    assert_eq!(s.fraction, 0.0);
    assert_eq!(s.sample_radius, Some(1.0));
    let none = RecurrenceOptions { samples: 0, ..opts };
    assert!(recurrence_fraction(&torus, &none, 7, tol).is_err());
}

#[test]
fn hopf_labels() {
    let tol = FlowTolerances::default();
    let h2 = build("hyperbolic").manifold;
    let opts = HopfOptions::for_manifold(&h2).unwrap();
    assert_eq!(opts, HopfOptions::default());
    let s = hopf_survey(&h2, &default_f0(&h2), 100, 1.0, 3, &opts, tol).unwrap();
    assert!(
        s.convergent_like >= 95,
        "{} {} {}",
        s.convergent_like,
        s.divergent_like,
        s.inconclusive
    );
    let torus = build("torus").manifold;
    let opts = HopfOptions::for_manifold(&torus).unwrap();
    assert_eq!(*opts.horizons.last().unwrap(), 300.0);
    let s = hopf_survey(&torus, &default_f0(&torus), 100, 1.0, 3, &opts, tol).unwrap();
    assert!(
        s.divergent_like >= 95,
        "{} {} {}",
        s.convergent_like,
        s.divergent_like,
        s.inconclusive
    );
    // f0 ≡ 1 gives I(T) = T exactly
    let one = |_: &[f64], _: &[f64]| Ok(1.0);
    let p = hopf_probe(&torus, &s.probes[0].theta, &one, &opts, tol).unwrap();
    assert!((p.trace.last().unwrap().1 - 300.0).abs() < 1e-9);
    assert!((p.slope.unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(p.label, HopfLabel::DivergentLike);
}

#[test]
fn horizon_grid() {
    let h = log_horizons(0.3, 30.0, 10);
    assert_eq!(h.len(), 21);
    assert!((h[10] - 3.0).abs() < 1e-12 && (h[20] - 30.0).abs() < 1e-12);
}

#[test]
fn hopf_rejects_zero_f0() {
    let m = build("torus").manifold;
    let theta = UnitTangentState::from_frame(&m, 0, vec![0.1, 0.2], &[0.6, 0.8]).unwrap();
    let zero = |_: &[f64], _: &[f64]| Ok(0.0);
    let res = hopf_probe(
        &m,
        &theta,
        &zero,
        &HopfOptions::default(),
        FlowTolerances::default(),
    );
    assert!(matches!(res, Err(Error::Invalid(_))));
}

#[test]
fn hopf_truncation_is_inconclusive() {
    let m = build("hyperbolic").manifold;
    let theta = UnitTangentState::from_frame(&m, 0, vec![0.3, -0.2], &[0.6, 0.8]).unwrap();
    let opts = HopfOptions {
        horizons: vec![10.0, 50.0, 100.0],
        ..HopfOptions::default()
    };
    let tol = FlowTolerances {
        max_steps: 2000,
        ..FlowTolerances::default()
    };
    let p = hopf_probe(&m, &theta, &default_f0(&m), &opts, tol).unwrap();
    assert!(p.truncated);
    assert_eq!(p.label, HopfLabel::Inconclusive);
}

#[test]
fn auxiliary_function_is_positive_on_unit_orbits() {
    let m = build("hyperbolic").manifold;
    let a =
        auxiliary_positivity(&m, &default_f0(&m), 1000, 2.0, 5, FlowTolerances::default()).unwrap();
    assert!(a.all_positive && a.min > 0.0, "{a:?}");
}
