use std::cell::Cell;
use std::collections::BTreeMap;

use divflow::diagnostics::{
    cutoff_estimate, default_f0, fx_integrability_ladder, hopf_survey, karp_sequence,
    liouville_states, recurrence_fraction, write_karp_csv, x_decay_at_infinity, HopfOptions,
};
use divflow::flow::{endpoint_bound_check, integrate_geodesic, path_integral_identity};
use divflow::measure::{
    base_integral, fiber_identity, fiber_integral, fubini_consistency, sample_rng, FiberRule,
    IntegralEstimate, Method, QuadratureOptions, Region,
};
use divflow::numeric::pairwise_sum;
use divflow::potential::{laplace_beltrami, monotone_form, phi_laplacian, PhiProfile, ScalarFn};
use divflow::zoo::{self, ZooManifold};
use divflow::{ChartedManifold, Error, VectorFieldDef};
use rand::Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::report::{Check, Outcome, Report};
use crate::RunError;

/// Tolerance given to expectations the config leaves untoleranced.
const EXPECT_DEFAULT_TOLERANCE: f64 = 1e-6;

fn quantity_names(kind: ExperimentKind) -> &'static [&'static str] {
    use ExperimentKind::*;
    match kind {
        FiberLemma => &["max_residual", "fx_sup", "max_abs_divergence"],
        PathIntegral => &[
            "max_residual",
            "min_endpoint_slack",
            "min_relative_slack",
            "truncated",
            "max_speed_drift",
        ],
        Fubini => &["iterated", "direct", "discrepancy", "combined_error"],
        Volume | DivergenceIntegral | FxLadder => {
            &["value", "stderr", "converged", "truncation_radius"]
        }
        Karp => &["first", "last", "tail_ratio", "resolved_fraction"],
        Cutoff => &["min_slack", "failures"],
        Decay => &["first_sup", "last_sup", "tail_ratio"],
        Recurrence => &[
            "fraction",
            "unweighted_fraction",
            "returned",
            "escaped",
            "inconclusive",
        ],
        Hopf => &["convergent_share", "divergent_share", "inconclusive_share"],
        PotentialMonotone => &["min_value", "near_zero_off_diagonal", "asymmetric"],
        PotentialLaplacian => &["max_residual"],
    }
}

fn builtin_tolerances(kind: ExperimentKind, dim: usize) -> Vec<(&'static str, f64)> {
    use ExperimentKind::*;
    match kind {
        FiberLemma => vec![("residual", if dim == 2 { 1e-8 } else { 1e-6 })],
        PathIntegral => vec![("residual", 1e-5), ("endpoint", 1e-9)],
        Fubini | Cutoff => vec![("sigmas", 3.0)],
        PotentialMonotone => vec![
            ("nonnegative", 1e-12),
            ("near_zero", 1e-10),
            ("diagonal", 1e-6),
        ],
        PotentialLaplacian => vec![("residual", 1e-6)],
        _ => vec![],
    }
}

/// Built-in defaults, then one entry per expectation, then config overrides.
fn tolerance_table(
    cfg: &ExperimentConfig,
    kind: ExperimentKind,
    dim: usize,
) -> Result<BTreeMap<String, f64>, RunError> {
    let mut table: BTreeMap<String, f64> = builtin_tolerances(kind, dim)
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    let names = quantity_names(kind);
    for (q, e) in &cfg.expect {
        if !names.contains(&q.as_str()) {
            return Err(RunError::Usage(format!(
                "`{}` reports no quantity `{q}` (known: {})",
                kind.name(),
                names.join(", ")
            )));
        }
        if e.value.is_none() && e.min.is_none() && e.max.is_none() {
            return Err(RunError::Usage(format!(
                "expectation on `{q}` sets no bound"
            )));
        }
        table.entry(q.clone()).or_insert(EXPECT_DEFAULT_TOLERANCE);
    }
    for (k, &v) in &cfg.tolerances {
        if !table.contains_key(k) {
            return Err(RunError::Usage(format!(
                "tolerance `{k}` matches neither a check of `{}` nor an expectation",
                kind.name()
            )));
        }
        if !(v > 0.0 && v.is_finite()) {
            return Err(RunError::Usage(format!(
                "tolerance `{k}` must be positive, got {v}"
            )));
        }
        table.insert(k.clone(), v);
    }
    Ok(table)
}

/// Core errors that stem from the configuration rather than the numerics.
fn is_usage(e: &Error) -> bool {
    matches!(
        e,
        Error::UnknownId(_)
            | Error::Invalid(_)
            | Error::Dimension { .. }
            | Error::NoRadius(_)
            | Error::NoRadialLayout(_)
            | Error::FactorMismatch { .. }
    )
}

fn usage(e: Error) -> RunError {
    RunError::Usage(e.to_string())
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    zm: Option<ZooManifold>,
    field: Option<VectorFieldDef>,
    tol: &'a BTreeMap<String, f64>,
}

impl Ctx<'_> {
    fn m(&self) -> &ChartedManifold {
        &self.zm.as_ref().expect("manifold resolved").manifold
    }

    fn field(&self) -> &VectorFieldDef {
        self.field.as_ref().expect("field resolved")
    }

    fn t(&self, key: &str) -> f64 {
        self.tol[key]
    }

    fn samples(&self, default: usize) -> Result<usize, Error> {
        match self.cfg.samples {
            Some(0) => Err(Error::Invalid("samples must be positive".into())),
            Some(n) => Ok(n),
            None => Ok(default),
        }
    }

    fn sample_radius(&self) -> f64 {
        self.cfg.sample_radius.unwrap_or(1.0)
    }

    fn method(&self) -> Method {
        self.cfg
            .method
            .unwrap_or(Method::Quadrature(QuadratureOptions::default()))
    }

    fn rule(&self) -> Result<FiberRule, Error> {
        let n = self.m().dim();
        match self.cfg.fiber_nodes.as_deref() {
            None => FiberRule::standard(n),
            Some(&[k]) if n == 2 && k > 0 => Ok(FiberRule::circle(k)),
            Some(&[a, b]) if n == 3 && a > 0 && b > 0 => Ok(FiberRule::sphere(a, b)),
            Some(other) => Err(Error::Invalid(format!(
                "fiber_nodes {other:?} do not fit a {n}-manifold"
            ))),
        }
    }

    fn radii(&self, default: &[f64]) -> Vec<f64> {
        self.cfg.radii.clone().unwrap_or_else(|| default.to_vec())
    }

    fn ladder_region(&self) -> Result<Region, Error> {
        match (&self.cfg.region, &self.cfg.truncation) {
            (Some(_), Some(_)) => Err(Error::Invalid(
                "set either region or truncation, not both".into(),
            )),
            (Some(r), None) => Ok(r.clone()),
            (None, Some(l)) => Ok(Region::Whole {
                r0: l.r0,
                levels: l.levels,
            }),
            (None, None) => Ok(Region::whole()),
        }
    }

    fn compact(&self) -> Result<bool, Error> {
        Ok(self.m().chart(0)?.periods().iter().all(Option::is_some))
    }
}

#[derive(Default)]
struct Computed {
    quantities: BTreeMap<String, f64>,
    checks: Vec<Check>,
    notes: Vec<String>,
    details: Value,
    csv: Option<String>,
}

impl Computed {
    fn q(&mut self, name: &str, v: f64) {
        self.quantities.insert(name.into(), v);
    }
}

pub(crate) fn run(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let kind = cfg.kind()?;
    let zm = match (&cfg.manifold, kind.needs_manifold()) {
        (Some(id), _) => Some(zoo::manifold(id, &cfg.params).map_err(usage)?),
        (None, true) => {
            return Err(RunError::Usage(format!(
                "`{}` needs a manifold",
                kind.name()
            )))
        }
        (None, false) => None,
    };
    let field = match (&cfg.field, &zm, kind.needs_field()) {
        (Some(id), Some(zm), _) => Some(zm.field(id).map_err(usage)?),
        (None, _, true) => return Err(RunError::Usage(format!("`{}` needs a field", kind.name()))),
        _ => None,
    };
    let dim = zm.as_ref().map_or(2, |z| z.manifold.dim());
    let tol = tolerance_table(cfg, kind, dim)?;
    let ctx = Ctx {
        cfg,
        zm,
        field,
        tol: &tol,
    };

    let (mut computed, error) = match compute(kind, &ctx) {
        Ok(c) => (c, None),
        Err(e) if is_usage(&e) => return Err(usage(e)),
        Err(e) => (Computed::default(), Some(e.to_string())),
    };
    debug_assert!(
        error.is_some()
            || computed
                .quantities
                .keys()
                .all(|k| quantity_names(kind).contains(&k.as_str()))
    );
    if error.is_none() {
        for (q, e) in &cfg.expect {
            let v = computed.quantities[q];
            let t = tol[q];
            if let Some(target) = e.value {
                computed.checks.push(Check::near(q, v, target, t));
            }
            if let Some(lo) = e.min {
                computed.checks.push(Check::at_least(q, v, lo, Some(t)));
            }
            if let Some(hi) = e.max {
                computed.checks.push(Check::at_most(q, v, hi, Some(t)));
            }
        }
        if computed.checks.is_empty() {
            computed
                .notes
                .push("no checks configured; the run passes on completion".into());
        }
    }
    let passed = error.is_none() && computed.checks.iter().all(|c| c.passed);
    let report = Report {
        tool: "divflow",
        version: env!("CARGO_PKG_VERSION"),
        experiment: kind,
        manifold: cfg.manifold.clone(),
        field: cfg.field.clone(),
        seed: cfg.seed,
        config_hash: cfg.hash(),
        tolerances: tol.clone(),
        quantities: computed.quantities,
        checks: computed.checks,
        passed,
        error,
        notes: computed.notes,
        details: computed.details,
    };
    Ok(Outcome {
        report,
        csv: computed.csv,
    })
}

fn compute(kind: ExperimentKind, ctx: &Ctx) -> Result<Computed, Error> {
    use ExperimentKind::*;
    match kind {
        FiberLemma => fiber_lemma(ctx),
        PathIntegral => path_integral(ctx),
        Fubini => fubini(ctx),
        Volume => {
            let region = ctx.ladder_region()?;
            let est = base_integral(ctx.m(), &|_: &[f64]| Ok(1.0), &region, &ctx.method())?;
            Ok(estimate(est))
        }
        DivergenceIntegral => {
            let region = ctx.ladder_region()?;
            let (m, x) = (ctx.m(), ctx.field());
            let est = base_integral(
                m,
                &|p: &[f64]| m.divergence_eval(x, p),
                &region,
                &ctx.method(),
            )?;
            Ok(estimate(est))
        }
        FxLadder => {
            let Region::Whole { r0, levels } = ctx.ladder_region()? else {
                return Err(Error::Invalid(
                    "fx-ladder runs on a truncation ladder, not a region".into(),
                ));
            };
            let est = fx_integrability_ladder(
                ctx.m(),
                ctx.field(),
                r0,
                levels,
                &ctx.method(),
                &ctx.rule()?,
            )?;
            Ok(estimate(est))
        }
        Karp => karp(ctx),
        Cutoff => cutoff(ctx),
        Decay => decay(ctx),
        Recurrence => recurrence(ctx),
        Hopf => hopf(ctx),
        PotentialMonotone => potential_monotone(ctx),
        PotentialLaplacian => potential_laplacian(ctx),
    }
}

fn max_of(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(f64::INFINITY, f64::min)
}

fn to_csv<const N: usize>(header: [&str; N], rows: impl IntoIterator<Item = [f64; N]>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r.iter().map(f64::to_string))
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

fn fiber_lemma(ctx: &Ctx) -> Result<Computed, Error> {
    let (m, x) = (ctx.m(), ctx.field());
    let rule = ctx.rule()?;
    let states = liouville_states(m, ctx.sample_radius(), ctx.samples(1000)?, ctx.cfg.seed)?;
    let rows = states
        .par_iter()
        .map(|(s, _)| {
            let id = fiber_identity(m, x, &s.p, &rule)?;
            let sup = Cell::new(0.0f64);
            fiber_integral(
                &|v: &[f64]| {
                    sup.set(sup.get().max(m.f_x_eval(x, &s.p, v)?.abs()));
                    Ok(0.0)
                },
                m,
                s.chart,
                &s.p,
                &rule,
            )?;
            Ok((id, sup.get(), m.divergence(x, &s.p)?.abs()))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let (worst, id) =
        rows.iter()
            .enumerate()
            .map(|(i, r)| (i, r.0))
            .fold((0, rows[0].0), |acc, (i, id)| {
                if id.residual > acc.1.residual {
                    (i, id)
                } else {
                    acc
                }
            });
    let mut c = Computed::default();
    c.q("max_residual", id.residual);
    c.q("fx_sup", max_of(rows.iter().map(|r| r.1)));
    c.q("max_abs_divergence", max_of(rows.iter().map(|r| r.2)));
    c.checks.push(Check::at_most(
        "max_residual",
        id.residual,
        0.0,
        Some(ctx.t("residual")),
    ));
    c.details = json!({
        "points": rows.len(),
        "fiber_nodes": rule.len(),
        "sample_radius": ctx.sample_radius(),
        "worst_point": states[worst].0.p,
        "worst": id,
    });
    Ok(c)
}

fn path_integral(ctx: &Ctx) -> Result<Computed, Error> {
    let (m, x) = (ctx.m(), ctx.field());
    let horizon = ctx.cfg.horizon.unwrap_or(10.0);
    let flow = ctx.cfg.flow;
    let states = liouville_states(m, ctx.sample_radius(), ctx.samples(100)?, ctx.cfg.seed)?;
    let rows = states
        .par_iter()
        .map(|(s, _)| {
            let id = path_integral_identity(m, x, s, horizon, flow, 1e-10);
            let end = endpoint_bound_check(m, x, s, horizon, flow);
            match (id, end) {
                (Ok(id), Ok((lhs, rhs))) => {
                    Ok(Some((id.residual, rhs - lhs, (rhs - lhs) / rhs.max(1.0))))
                }
                (Err(Error::Truncated { .. }), _) | (_, Err(Error::Truncated { .. })) => Ok(None),
                (Err(e), _) | (_, Err(e)) => Err(e),
            }
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let done: Vec<(f64, f64, f64)> = rows.iter().flatten().copied().collect();
    let truncated = rows.len() - done.len();
    let first = integrate_geodesic(m, &states[0].0, horizon, flow)?;
    let mut c = Computed::default();
    let max_res = max_of(done.iter().map(|r| r.0));
    let min_slack = min_of(done.iter().map(|r| r.1));
    let min_rel = min_of(done.iter().map(|r| r.2));
    c.q("max_residual", max_res);
    c.q("min_endpoint_slack", min_slack);
    c.q("min_relative_slack", min_rel);
    c.q("truncated", truncated as f64);
    c.q("max_speed_drift", first.max_speed_drift());
    c.checks.push(Check::at_most(
        "max_residual",
        max_res,
        0.0,
        Some(ctx.t("residual")),
    ));
    // the bound is an equality for fields aligned with the orbit ends, so the
    // slack is compared relative to max(1, |X(γ(s))| + |X(γ(−s))|)
    c.checks.push(Check::at_least(
        "min_relative_slack",
        min_rel,
        0.0,
        Some(ctx.t("endpoint")),
    ));
    c.checks
        .push(Check::at_most("truncated", truncated as f64, 0.0, None));
    c.notes
        .push("max_speed_drift and the CSV trajectory refer to orbit 0".into());
    c.details = json!({
        "orbits": rows.len(),
        "horizon": horizon,
        "endpoint_half_length": horizon,
        "flow": flow,
        "orbit0_stats": first.stats,
    });
    let mut buf = Vec::new();
    first
        .write_csv(&mut buf)
        .map_err(|e| Error::Invalid(format!("trajectory csv: {e}")))?;
    c.csv = Some(String::from_utf8(buf).expect("utf-8 csv"));
    Ok(c)
}

fn fubini(ctx: &Ctx) -> Result<Computed, Error> {
    let (m, x) = (ctx.m(), ctx.field());
    let region = match &ctx.cfg.region {
        Some(r) => r.clone(),
        None if ctx.compact()? => Region::whole(),
        None => Region::Ball {
            radius: ctx.sample_radius(),
        },
    };
    let quad =
        match ctx.method() {
            Method::Quadrature(q) => q,
            Method::MonteCarlo { .. } => return Err(Error::Invalid(
                "fubini compares quadrature with its own Monte Carlo; method must be quadrature"
                    .into(),
            )),
        };
    let f = |p: &[f64], v: &[f64]| m.f_x_eval(x, p, v);
    let chk = fubini_consistency(
        m,
        &f,
        &region,
        quad,
        &ctx.rule()?,
        ctx.samples(10_000)?,
        ctx.cfg.seed,
    )?;
    let mut c = Computed::default();
    c.q("iterated", chk.iterated.value);
    c.q("direct", chk.direct.value);
    c.q("discrepancy", chk.discrepancy);
    c.q("combined_error", chk.combined_error);
    c.checks.push(Check::at_most(
        "discrepancy",
        chk.discrepancy,
        ctx.t("sigmas") * chk.combined_error,
        None,
    ));
    c.details = json!({ "region": region, "check": chk });
    Ok(c)
}

fn estimate(est: IntegralEstimate) -> Computed {
    let mut c = Computed::default();
    c.q("value", est.value);
    c.q("stderr", est.stderr);
    c.q(
        "converged",
        if est.converged == Some(true) {
            1.0
        } else {
            0.0
        },
    );
    c.q(
        "truncation_radius",
        est.truncation_radius.unwrap_or(f64::NAN),
    );
    if est.converged == Some(false) {
        c.notes
            .push("truncation ladder did not converge; value is the last rung".into());
    }
    c.csv = Some(to_csv(
        ["radius", "value", "stderr"],
        est.truncation_trace
            .iter()
            .map(|t| [t.radius, t.value, t.stderr]),
    ));
    c.details = serde_json::to_value(&est).expect("estimate serializes");
    c
}

fn karp(ctx: &Ctx) -> Result<Computed, Error> {
    let reports = karp_sequence(
        ctx.m(),
        ctx.field(),
        &ctx.radii(&[10.0, 100.0, 1000.0]),
        &ctx.method(),
    )?;
    if reports.is_empty() {
        return Err(Error::Invalid("karp needs at least one radius".into()));
    }
    let first = reports[0].normalized;
    let last = reports[reports.len() - 1].normalized;
    let falling = reports.len() > 1 && last < reports[reports.len() - 2].normalized;
    let mut c = Computed::default();
    c.q("first", first);
    c.q("last", last);
    c.q("tail_ratio", last / first);
    c.q(
        "resolved_fraction",
        reports.iter().filter(|a| a.resolved).count() as f64 / reports.len() as f64,
    );
    c.notes.push(
        if falling {
            "liminf evidence: tends to 0"
        } else {
            "liminf evidence: bounded away from 0"
        }
        .into(),
    );
    let mut buf = Vec::new();
    write_karp_csv(&reports, &mut buf).map_err(|e| Error::Invalid(format!("karp csv: {e}")))?;
    c.csv = Some(String::from_utf8(buf).expect("utf-8 csv"));
    c.details = json!({ "annuli": reports });
    Ok(c)
}

fn cutoff(ctx: &Ctx) -> Result<Computed, Error> {
    let method = ctx.method();
    let sigmas = ctx.t("sigmas");
    let rows = ctx
        .radii(&[2.0, 5.0, 10.0])
        .iter()
        .map(|&r| cutoff_estimate(ctx.m(), ctx.field(), r, &method))
        .collect::<Result<Vec<_>, Error>>()?;
    let fails = rows
        .iter()
        .filter(|e| e.lhs > e.rhs + sigmas * e.lhs_stderr.hypot(e.rhs_stderr))
        .count();
    let mut c = Computed::default();
    c.q("min_slack", min_of(rows.iter().map(|e| e.slack)));
    c.q("failures", fails as f64);
    c.checks
        .push(Check::at_most("failures", fails as f64, 0.0, None));
    c.details = json!({ "estimates": rows });
    Ok(c)
}

fn decay(ctx: &Ctx) -> Result<Computed, Error> {
    let rows = x_decay_at_infinity(
        ctx.m(),
        ctx.field(),
        &ctx.radii(&[1.0, 2.0, 4.0, 8.0, 16.0]),
    )?;
    if rows.is_empty() {
        return Err(Error::Invalid("decay needs at least one radius".into()));
    }
    let (first, last) = (rows[0].sup, rows[rows.len() - 1].sup);
    let mut c = Computed::default();
    c.q("first_sup", first);
    c.q("last_sup", last);
    c.q("tail_ratio", last / first);
    c.csv = Some(to_csv(
        ["inner", "outer", "sup", "samples"],
        rows.iter()
            .map(|d| [d.inner, d.outer, d.sup, d.samples as f64]),
    ));
    c.details = json!({ "annuli": rows });
    Ok(c)
}

fn recurrence(ctx: &Ctx) -> Result<Computed, Error> {
    let mut opts = ctx.cfg.recurrence.unwrap_or_default();
    if let Some(n) = ctx.cfg.samples {
        opts.samples = n;
    }
    if let Some(r) = ctx.cfg.sample_radius {
        opts.sample_radius = r;
    }
    let stats = recurrence_fraction(ctx.m(), &opts, ctx.cfg.seed, ctx.cfg.flow)?;
    let mut c = Computed::default();
    c.q("fraction", stats.fraction);
    c.q("unweighted_fraction", stats.unweighted_fraction);
    c.q("returned", stats.returned as f64);
    c.q("escaped", stats.escaped as f64);
    c.q("inconclusive", stats.inconclusive as f64);
    c.details = serde_json::to_value(&stats).expect("stats serialize");
    Ok(c)
}

fn hopf(ctx: &Ctx) -> Result<Computed, Error> {
    let m = ctx.m();
    let opts = match &ctx.cfg.hopf {
        Some(o) => o.clone(),
        None => HopfOptions::for_manifold(m)?,
    };
    let f0 = default_f0(m);
    let s = hopf_survey(
        m,
        &f0,
        ctx.samples(100)?,
        ctx.sample_radius(),
        ctx.cfg.seed,
        &opts,
        ctx.cfg.flow,
    )?;
    let n = s.samples as f64;
    let mut c = Computed::default();
    c.q("convergent_share", s.convergent_like as f64 / n);
    c.q("divergent_share", s.divergent_like as f64 / n);
    c.q("inconclusive_share", s.inconclusive as f64 / n);
    c.notes.push(if m.has_radius() {
        "f0 = exp(-2 r(p))".into()
    } else {
        "f0 = 1 (no radius surrogate)".into()
    });
    let probes: Vec<Value> = s
        .probes
        .iter()
        .map(|p| json!({ "slope": p.slope, "r_squared": p.r_squared, "label": p.label, "truncated": p.truncated }))
        .collect();
    c.details = json!({
        "samples": s.samples,
        "convergent_like": s.convergent_like,
        "divergent_like": s.divergent_like,
        "inconclusive": s.inconclusive,
        "sample_radius": s.sample_radius,
        "options": opts,
        "probes": probes,
    });
    Ok(c)
}

fn potential_monotone(ctx: &Ctx) -> Result<Computed, Error> {
    let profiles = ctx.cfg.profiles.clone().unwrap_or_else(PhiProfile::shipped);
    for p in &profiles {
        p.validate()?;
    }
    let n = ctx.samples(100_000)?;
    let (near_zero, diagonal) = (ctx.t("near_zero"), ctx.t("diagonal"));
    let mut c = Computed::default();
    let mut per_profile = Vec::new();
    let (mut lo, mut bad_near, mut asym) = (f64::INFINITY, 0usize, 0usize);
    for (k, phi) in profiles.iter().enumerate() {
        let rows: Vec<(f64, bool, bool)> = (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = sample_rng(ctx.cfg.seed, 2 + k as u64, i);
                let dim = 2 + (i % 2) as usize;
                let xi: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let eta: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let h = monotone_form(phi, &xi, &eta);
                let dist = xi
                    .iter()
                    .zip(&eta)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                (
                    h,
                    h < near_zero && dist >= diagonal,
                    h != monotone_form(phi, &eta, &xi),
                )
            })
            .collect();
        let min = min_of(rows.iter().map(|r| r.0));
        let nz = rows.iter().filter(|r| r.1).count();
        let asy = rows.iter().filter(|r| r.2).count();
        per_profile.push(json!({ "profile": phi, "name": phi.name(), "min_value": min, "near_zero_off_diagonal": nz, "asymmetric": asy }));
        lo = lo.min(min);
        bad_near += nz;
        asym += asy;
    }
    c.q("min_value", lo);
    c.q("near_zero_off_diagonal", bad_near as f64);
    c.q("asymmetric", asym as f64);
    c.checks.push(Check::at_least(
        "min_value",
        lo,
        0.0,
        Some(ctx.t("nonnegative")),
    ));
    c.checks.push(Check::at_most(
        "near_zero_off_diagonal",
        bad_near as f64,
        0.0,
        None,
    ));
    c.checks
        .push(Check::at_most("asymmetric", asym as f64, 0.0, None));
    c.notes
        .push("pairs have components uniform in [-1, 1], dimensions alternating 2 and 3".into());
    c.details = json!({ "pairs_per_profile": n, "profiles": per_profile });
    Ok(c)
}

/// `u = x₀² + x₀x₁/2 + x₁ (+ x₂²/4)`.
pub(crate) fn test_polynomial(dim: usize) -> ScalarFn {
    use std::sync::Arc;
    ScalarFn::new(
        "x0^2 + x0 x1/2 + x1 + x2^2/4",
        0,
        Arc::new(move |x: &[f64]| {
            let v = x[0] * x[0] + 0.5 * x[0] * x[1] + x[1];
            if dim == 3 {
                v + 0.25 * x[2] * x[2]
            } else {
                v
            }
        }),
        Arc::new(move |x: &[f64]| {
            let mut d = vec![2.0 * x[0] + 0.5 * x[1], 0.5 * x[0] + 1.0];
            if dim == 3 {
                d.push(0.5 * x[2]);
            }
            d
        }),
    )
}

fn potential_laplacian(ctx: &Ctx) -> Result<Computed, Error> {
    let m = ctx.m();
    let u = test_polynomial(m.dim());
    let laplace = PhiProfile::Power { p: 2.0 };
    let states = liouville_states(m, ctx.sample_radius(), ctx.samples(100)?, ctx.cfg.seed)?;
    let rows = states
        .par_iter()
        .map(|(s, _)| {
            let a = phi_laplacian(m, &u, &laplace, &s.p)?.value;
            let b = laplace_beltrami(m, &u, &s.p)?;
            Ok(((a - b).abs() / (1.0 + b.abs()), b))
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let worst = max_of(rows.iter().map(|r| r.0));
    let mut c = Computed::default();
    c.q("max_residual", worst);
    c.checks.push(Check::at_most(
        "max_residual",
        worst,
        0.0,
        Some(ctx.t("residual")),
    ));
    c.notes
        .push("residual is |L_t u - Δu| / (1 + |Δu|) with φ(t) = t".into());
    c.details = json!({
        "function": u.name,
        "points": rows.len(),
        "mean_laplacian": pairwise_sum(&rows.iter().map(|r| r.1).collect::<Vec<_>>()) / rows.len() as f64,
    });
    Ok(c)
}
