//! Computable probes of the hypotheses behind divergence theorems on
//! non-compact manifolds: annulus masses of `|X|` (Karp), the cutoff
//! estimate, integrability ladders of `|f_X|`, decay of `|X|` at infinity,
//! recurrence statistics and finite-horizon Hopf probes.
//!
//! Every quantity here is evidence over finitely many radii, samples or
//! horizons. Labels are heuristics, never verdicts.

use std::io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{first_return, integrate_geodesic, FlowTolerances};
use crate::geometry::{ChartedManifold, UnitTangentState, VectorFieldDef};
use crate::measure::{
    annulus_grid, base_integral, sample_rng, sm_integral, FiberRule, IntegralEstimate, Method,
    Region, RegionSampler,
};
use crate::numeric::pairwise_sum;

/// `∫_{B(2r)∖B(r)} |X| dν_g` and its Karp normalization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnulusReport {
    pub radius: f64,
    pub mass: f64,
    /// `mass / r`.
    pub normalized: f64,
    pub stderr: f64,
    pub nodes: usize,
    /// Error estimate within `1e-3` of the mass.
    pub resolved: bool,
    pub surrogate: String,
}

fn surrogate_label(m: &ChartedManifold) -> String {
    format!("r(p) from the radial layout of {}", m.name())
}

fn require_radius(m: &ChartedManifold) -> Result<()> {
    if m.radial_layout().is_none() {
        return Err(Error::NoRadialLayout(m.name().to_string()));
    }
    Ok(())
}

fn annulus_mass(
    m: &ChartedManifold,
    field: &VectorFieldDef,
    r: f64,
    method: &Method,
) -> Result<IntegralEstimate> {
    base_integral(
        m,
        &|p: &[f64]| m.field_norm(field, p),
        &Region::Annulus {
            inner: r,
            outer: 2.0 * r,
        },
        method,
    )
}

pub fn karp_sequence(
    m: &ChartedManifold,
    field: &VectorFieldDef,
    radii: &[f64],
    method: &Method,
) -> Result<Vec<AnnulusReport>> {
    require_radius(m)?;
    radii
        .iter()
        .map(|&r| {
            let est = annulus_mass(m, field, r, method)?;
            Ok(AnnulusReport {
                radius: r,
                mass: est.value,
                normalized: est.value / r,
                stderr: est.stderr,
                nodes: est.nodes,
                resolved: est.stderr <= 1e-3 * est.value.abs(),
                surrogate: surrogate_label(m),
            })
        })
        .collect()
}

/// CSV with columns `r, mass, normalized, stderr`.
pub fn write_karp_csv<W: io::Write>(reports: &[AnnulusReport], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["r", "mass", "normalized", "stderr"])?;
    for a in reports {
        w.write_record(&[
            a.radius.to_string(),
            a.mass.to_string(),
            a.normalized.to_string(),
            a.stderr.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `sup |φ'|` for the quintic smoothstep.
pub const CUTOFF_CONSTANT: f64 = 15.0 / 8.0;

/// `φ_r(p) = S(clamp(2 − r(p)/r, 0, 1))` with `S(s) = 6s⁵ − 15s⁴ + 10s³`.
/// Equals 1 on `B(r)`, 0 outside `B(2r)`, and `|grad φ_r| ≤ C/r` with `C = 15/8`
/// wherever `|grad r(p)| ≤ 1`.
pub fn cutoff(radius_of_p: f64, r: f64) -> f64 {
    let s = (2.0 - radius_of_p / r).clamp(0.0, 1.0);
    s * s * s * (10.0 + s * (6.0 * s - 15.0))
}

/// Both sides of `|∫ φ_r div X dν_g| ≤ (C/r) ∫_{B(2r)∖B(r)} |X| dν_g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutoffEstimate {
    pub radius: f64,
    pub lhs: f64,
    pub lhs_stderr: f64,
    pub rhs: f64,
    pub rhs_stderr: f64,
    pub constant: f64,
    /// `lhs ≤ rhs + 3·√(σ_lhs² + σ_rhs²)`.
    pub holds: bool,
    pub slack: f64,
}

pub fn cutoff_estimate(
    m: &ChartedManifold,
    field: &VectorFieldDef,
    r: f64,
    method: &Method,
) -> Result<CutoffEstimate> {
    require_radius(m)?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Invalid(format!(
            "cutoff radius must be positive and finite, got {r}"
        )));
    }
    let div = |p: &[f64]| m.divergence_eval(field, p);
    // φ_r ≡ 1 on the ball, so the split puts the only kink on a panel edge
    let inner = base_integral(m, &div, &Region::Ball { radius: r }, method)?;
    let band = base_integral(
        m,
        &|p: &[f64]| Ok(cutoff(m.radius(p)?, r) * div(p)?),
        &Region::Annulus {
            inner: r,
            outer: 2.0 * r,
        },
        method,
    )?;
    let mass = annulus_mass(m, field, r, method)?;
    let lhs = (inner.value + band.value).abs();
    let lhs_stderr = inner.stderr.hypot(band.stderr);
    let rhs = CUTOFF_CONSTANT / r * mass.value;
    let rhs_stderr = CUTOFF_CONSTANT / r * mass.stderr;
    Ok(CutoffEstimate {
        radius: r,
        lhs,
        lhs_stderr,
        rhs,
        rhs_stderr,
        constant: CUTOFF_CONSTANT,
        holds: lhs <= rhs + 3.0 * lhs_stderr.hypot(rhs_stderr),
        slack: rhs - lhs,
    })
}

/// Truncation ladder of `∫_{SM ∩ {r(p) ≤ R}} |f_X|`, `R = r0·2^k`.
pub fn fx_integrability_ladder(
    m: &ChartedManifold,
    field: &VectorFieldDef,
    r0: f64,
    levels: usize,
    method: &Method,
    rule: &FiberRule,
) -> Result<IntegralEstimate> {
    sm_integral(
        m,
        &|p: &[f64], v: &[f64]| Ok(m.f_x_eval(field, p, v)?.abs()),
        &Region::Whole { r0, levels },
        method,
        rule,
    )
}

/// Sampled supremum of `|X|` over `{r ≤ r(p) ≤ 2r}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayReport {
    pub inner: f64,
    pub outer: f64,
    pub sup: f64,
    pub samples: usize,
}

/// Grid: 33 radii (ends included) times 32 nodes on every angle.
pub fn x_decay_at_infinity(
    m: &ChartedManifold,
    field: &VectorFieldDef,
    radii: &[f64],
) -> Result<Vec<DecayReport>> {
    require_radius(m)?;
    radii
        .iter()
        .map(|&r| {
            let pts = annulus_grid(m, r, 2.0 * r, 33, 32)?;
            let norms = pts
                .par_iter()
                .map(|p| m.field_norm(field, p))
                .collect::<Result<Vec<f64>>>()?;
            Ok(DecayReport {
                inner: r,
                outer: 2.0 * r,
                sup: norms.iter().copied().fold(0.0, f64::max),
                samples: pts.len(),
            })
        })
        .collect()
}

/// Liouville-sampled return statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecurrenceStats {
    pub samples: usize,
    pub returned: usize,
    pub escaped: usize,
    /// Truncated orbits; excluded from both fractions.
    pub inconclusive: usize,
    /// `ν_g`-weighted share of conclusive samples that returned.
    pub fraction: f64,
    pub unweighted_fraction: f64,
    /// Base points were drawn from `{r(p) ≤ sample_radius}`; `None` on compact charts.
    pub sample_radius: Option<f64>,
    pub epsilon: f64,
    pub t_min: f64,
    pub t_max: f64,
    /// Return times of the samples that returned, in sample order.
    pub return_times: Vec<f64>,
}

/// Parameters of [`recurrence_fraction`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecurrenceOptions {
    pub samples: usize,
    pub epsilon: f64,
    pub t_min: f64,
    pub t_max: f64,
    /// Ignored on manifolds whose chart is a full period box.
    pub sample_radius: f64,
}

impl Default for RecurrenceOptions {
    fn default() -> Self {
        Self {
            samples: 1000,
            epsilon: 0.05,
            t_min: 1.0,
            t_max: 1000.0,
            sample_radius: 1.0,
        }
    }
}

fn compact_chart(m: &ChartedManifold) -> Result<bool> {
    Ok(m.chart(0)?.periods().iter().all(Option::is_some))
}

/// Sampling region for Liouville draws and the radius it records.
fn liouville_region(m: &ChartedManifold, sample_radius: f64) -> Result<(Region, Option<f64>)> {
    if compact_chart(m)? {
        Ok((Region::whole(), None))
    } else {
        Ok((
            Region::Ball {
                radius: sample_radius,
            },
            Some(sample_radius),
        ))
    }
}

/// Draw `index` of a Liouville sample: base point weighted by `ν_g`, direction
/// uniform on the fiber.
pub fn liouville_sample(
    m: &ChartedManifold,
    sampler: &RegionSampler,
    seed: u64,
    index: u64,
) -> Result<(UnitTangentState, f64)> {
    let mut rng = sample_rng(seed, 1, index);
    let (p, w) = sampler.draw(&mut rng)?;
    let n = m.dim();
    let c = loop {
        use rand::Rng;
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = c.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-3 && norm <= 1.0 {
            break c.iter().map(|a| a / norm).collect::<Vec<f64>>();
        }
    };
    Ok((UnitTangentState::from_frame(m, 0, p, &c)?, w))
}

/// `count` Liouville draws (state, weight) over the recurrence sampling region.
pub fn liouville_states(
    m: &ChartedManifold,
    sample_radius: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<(UnitTangentState, f64)>> {
    let (region, _) = liouville_region(m, sample_radius)?;
    let sampler = RegionSampler::new(m, &region)?;
    (0..count as u64)
        .into_par_iter()
        .map(|i| liouville_sample(m, &sampler, seed, i))
        .collect()
}

pub fn recurrence_fraction(
    m: &ChartedManifold,
    opts: &RecurrenceOptions,
    seed: u64,
    tol: FlowTolerances,
) -> Result<RecurrenceStats> {
    if opts.samples == 0 {
        return Err(Error::Invalid(
            "recurrence fraction needs at least one sample".into(),
        ));
    }
    let (region, sample_radius) = liouville_region(m, opts.sample_radius)?;
    let sampler = RegionSampler::new(m, &region)?;
    let outcomes = (0..opts.samples as u64)
        .into_par_iter()
        .map(|i| {
            let (theta, w) = liouville_sample(m, &sampler, seed, i)?;
            match first_return(m, &theta, opts.epsilon, opts.t_min, opts.t_max, tol) {
                Ok(ev) => Ok((Some(ev.map(|e| e.time)), w)),
                Err(Error::Truncated { .. }) => Ok((None, w)),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut returned_w = Vec::new();
    let mut conclusive_w = Vec::new();
    let mut return_times = Vec::new();
    let (mut returned, mut escaped, mut inconclusive) = (0, 0, 0);
    for (out, w) in &outcomes {
        match out {
            Some(Some(t)) => {
                returned += 1;
                return_times.push(*t);
                returned_w.push(*w);
                conclusive_w.push(*w);
            }
            Some(None) => {
                escaped += 1;
                conclusive_w.push(*w);
            }
            None => inconclusive += 1,
        }
    }
    let conclusive = returned + escaped;
    let (fraction, unweighted_fraction) = if conclusive == 0 {
        (f64::NAN, f64::NAN)
    } else {
        (
            pairwise_sum(&returned_w) / pairwise_sum(&conclusive_w),
            returned as f64 / conclusive as f64,
        )
    };
    Ok(RecurrenceStats {
        samples: opts.samples,
        returned,
        escaped,
        inconclusive,
        fraction,
        unweighted_fraction,
        sample_radius,
        epsilon: opts.epsilon,
        t_min: opts.t_min,
        t_max: opts.t_max,
        return_times,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HopfLabel {
    ConvergentLike,
    DivergentLike,
    Inconclusive,
}

/// Thresholds of the slope rule. The fit is `log I` against `log T` over the
/// horizons in the last decade `[T_max/10, T_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HopfOptions {
    pub horizons: Vec<f64>,
    /// Convergent-like needs slope ≤ δ, divergent-like slope ≥ 1 − δ.
    pub slope_delta: f64,
    pub min_r_squared: f64,
    /// A trace whose `log I` has standard deviation below this over the
    /// decade is constant within tolerance and counts as a perfect fit.
    pub flat_tolerance: f64,
}

impl Default for HopfOptions {
    fn default() -> Self {
        // horizons stay below the r ≈ 30 precision limit of the hyperboloid chart
        Self {
            horizons: log_horizons(0.3, 30.0, 10),
            slope_delta: 0.1,
            min_r_squared: 0.99,
            flat_tolerance: 1e-2,
        }
    }
}

impl HopfOptions {
    /// Defaults, with horizons up to 300 on compact charts where orbits
    /// never leave a bounded coordinate range.
    pub fn for_manifold(m: &ChartedManifold) -> Result<Self> {
        let mut opts = Self::default();
        if compact_chart(m)? {
            opts.horizons = log_horizons(0.3, 300.0, 10);
        }
        Ok(opts)
    }
}

/// `per_decade` log-spaced horizons from `t0` to `t1`, both included.
pub fn log_horizons(t0: f64, t1: f64, per_decade: usize) -> Vec<f64> {
    let n = ((t1 / t0).log10() * per_decade as f64).round() as usize;
    (0..=n)
        .map(|k| t0 * (t1 / t0).powf(k as f64 / n as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HopfProbe {
    pub theta: UnitTangentState,
    /// Largest horizon reached.
    pub horizon: f64,
    /// `(T, I(T))` with `I(T) = ∫_0^T f0(φ_t θ) dt`.
    pub trace: Vec<(f64, f64)>,
    pub slope: Option<f64>,
    pub r_squared: Option<f64>,
    pub label: HopfLabel,
    pub truncated: bool,
}

/// `f0(θ) = exp(−2 r(π θ))` with a radius surrogate, `1` on manifolds without one.
pub fn default_f0(m: &ChartedManifold) -> impl Fn(&[f64], &[f64]) -> Result<f64> + Sync + '_ {
    let has_radius = m.has_radius();
    move |x: &[f64], _v: &[f64]| {
        if has_radius {
            Ok((-2.0 * m.radius(x)?).exp())
        } else {
            Ok(1.0)
        }
    }
}

/// Least-squares slope and `R²` of `y` against `x`.
fn fit(x: &[f64], y: &[f64], flat: f64) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy <= n * flat * flat {
        1.0
    } else {
        let res: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (b - my - slope * (a - mx)).powi(2))
            .sum();
        1.0 - res / syy
    };
    (slope, r2)
}

pub fn hopf_probe<F>(
    m: &ChartedManifold,
    theta: &UnitTangentState,
    f0: &F,
    opts: &HopfOptions,
    tol: FlowTolerances,
) -> Result<HopfProbe>
where
    F: Fn(&[f64], &[f64]) -> Result<f64>,
{
    let mut horizons = opts.horizons.clone();
    if horizons.len() < 2 || horizons.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::Invalid(
            "Hopf probe needs at least two positive horizons".into(),
        ));
    }
    horizons.sort_by(f64::total_cmp);
    let f_start = f0(&theta.p, &theta.v)?;
    if !(f_start > 0.0) {
        return Err(Error::Invalid(format!(
            "f0 must be positive, got f0(θ) = {f_start}"
        )));
    }
    let t_max = *horizons.last().expect("non-empty");
    let traj = integrate_geodesic(m, theta, t_max, tol)?;
    let reached = traj.end_time();
    let quad_tol = 1e-12;
    let mut trace = Vec::with_capacity(horizons.len());
    let mut acc = 0.0;
    let mut prev = 0.0;
    for &t in horizons.iter().filter(|t| **t <= reached) {
        acc += traj.integrate(f0, prev, t, quad_tol)?.0;
        prev = t;
        trace.push((t, acc));
    }
    let truncated = traj.is_truncated();
    let decade: Vec<&(f64, f64)> = trace
        .iter()
        .filter(|(t, _)| *t >= t_max / 10.0 * (1.0 - 1e-12))
        .collect();
    let (slope, r_squared, label) =
        if truncated || decade.len() < 2 || decade.iter().any(|(_, i)| !(*i > 0.0)) {
            (None, None, HopfLabel::Inconclusive)
        } else {
            let x: Vec<f64> = decade.iter().map(|(t, _)| t.ln()).collect();
            let y: Vec<f64> = decade.iter().map(|(_, i)| i.ln()).collect();
            let (s, r2) = fit(&x, &y, opts.flat_tolerance);
            let label = if r2 < opts.min_r_squared {
                HopfLabel::Inconclusive
            } else if s <= opts.slope_delta {
                HopfLabel::ConvergentLike
            } else if s >= 1.0 - opts.slope_delta {
                HopfLabel::DivergentLike
            } else {
                HopfLabel::Inconclusive
            };
            (Some(s), Some(r2), label)
        };
    Ok(HopfProbe {
        theta: theta.clone(),
        horizon: reached,
        trace,
        slope,
        r_squared,
        label,
        truncated,
    })
}

/// Label counts of Hopf probes over Liouville samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HopfSummary {
    pub samples: usize,
    pub convergent_like: usize,
    pub divergent_like: usize,
    pub inconclusive: usize,
    pub sample_radius: Option<f64>,
    pub probes: Vec<HopfProbe>,
}

pub fn hopf_survey<F>(
    m: &ChartedManifold,
    f0: &F,
    samples: usize,
    sample_radius: f64,
    seed: u64,
    opts: &HopfOptions,
    tol: FlowTolerances,
) -> Result<HopfSummary>
where
    F: Fn(&[f64], &[f64]) -> Result<f64> + Sync,
{
    if samples == 0 {
        return Err(Error::Invalid(
            "Hopf survey needs at least one sample".into(),
        ));
    }
    let (region, sample_radius) = liouville_region(m, sample_radius)?;
    let sampler = RegionSampler::new(m, &region)?;
    let probes = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let (theta, _) = liouville_sample(m, &sampler, seed, i)?;
            hopf_probe(m, &theta, f0, opts, tol)
        })
        .collect::<Result<Vec<_>>>()?;
    let count = |l: HopfLabel| probes.iter().filter(|p| p.label == l).count();
    Ok(HopfSummary {
        samples,
        convergent_like: count(HopfLabel::ConvergentLike),
        divergent_like: count(HopfLabel::DivergentLike),
        inconclusive: count(HopfLabel::Inconclusive),
        sample_radius,
        probes,
    })
}

/// Minimum of `∫_0^1 h(γ_η(t)) dt` over Liouville samples `η`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuxiliaryPositivity {
    pub samples: usize,
    pub min: f64,
    pub all_positive: bool,
}

pub fn auxiliary_positivity<H>(
    m: &ChartedManifold,
    h: &H,
    samples: usize,
    sample_radius: f64,
    seed: u64,
    tol: FlowTolerances,
) -> Result<AuxiliaryPositivity>
where
    H: Fn(&[f64], &[f64]) -> Result<f64> + Sync,
{
    if samples == 0 {
        return Err(Error::Invalid(
            "positivity check needs at least one sample".into(),
        ));
    }
    let (region, _) = liouville_region(m, sample_radius)?;
    let sampler = RegionSampler::new(m, &region)?;
    let values = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let (eta, _) = liouville_sample(m, &sampler, seed, i)?;
            crate::flow::birkhoff_integral(m, h, &eta, 1.0, tol, 1e-12)
        })
        .collect::<Result<Vec<f64>>>()?;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(AuxiliaryPositivity {
        samples,
        min,
        all_positive: min > 0.0,
    })
}
