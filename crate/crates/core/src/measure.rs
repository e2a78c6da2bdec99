//! Integration over `M`, over the unit-sphere fibers `S_pM`, and over `SM`
//! as the iterated integral `∫_M ∫_{S_pM} F dν_{g_p} dν_g`.
//!
//! Bounded regions are integrated on tensor grids: composite Gauss–Kronrod
//! on interval axes, the trapezoid rule on periodic axes. The error estimate
//! is the gap to the embedded lower-order grid (G7 on intervals, every other
//! node on periodic axes). Balls, annuli and the whole manifold are
//! parameterized through the manifold's radial layout. Monte Carlo draws
//! one independent ChaCha stream per sample, so sums do not depend on the
//! thread count.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{quadratic, ChartedManifold, RadialLayout, VectorFieldDef};
use crate::numeric::{gauss_kronrod_15, gauss_legendre_on, pairwise_sum};

/// Surface measure of the unit sphere `S^{n−1} ⊂ R^n`.
pub fn omega(n: usize) -> f64 {
    match n {
        0 => panic!("S^(n-1) needs n ≥ 1"),
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 2.0 * PI / (n - 2) as f64 * omega(n - 2),
    }
}

/// Quadrature rule on `S^{n−1}`, in orthonormal-frame coefficients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiberRule {
    pub dim: usize,
    pub directions: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl FiberRule {
    /// 64-node rule for `n = 2`, 32×64 product rule for `n = 3`.
    pub fn standard(dim: usize) -> Result<Self> {
        match dim {
            2 => Ok(Self::circle(64)),
            3 => Ok(Self::sphere(32, 64)),
            _ => Err(Error::Invalid(format!("no fiber rule for dimension {dim}"))),
        }
    }

    /// Gauss–Legendre in the angle on `[0, 2π]`.
    pub fn circle(nodes: usize) -> Self {
        let (th, w) = gauss_legendre_on(nodes, 0.0, 2.0 * PI);
        Self {
            dim: 2,
            directions: th.iter().map(|t| vec![t.cos(), t.sin()]).collect(),
            weights: w,
        }
    }

    /// Gauss–Legendre in `cos φ` times Gauss–Legendre in the azimuth.
    pub fn sphere(polar: usize, azimuth: usize) -> Self {
        let (u, wu) = gauss_legendre_on(polar, -1.0, 1.0);
        let (th, wt) = gauss_legendre_on(azimuth, 0.0, 2.0 * PI);
        let mut directions = Vec::with_capacity(polar * azimuth);
        let mut weights = Vec::with_capacity(polar * azimuth);
        for (ui, wui) in u.iter().zip(&wu) {
            let s = (1.0 - ui * ui).sqrt();
            for (t, wti) in th.iter().zip(&wt) {
                directions.push(vec![s * t.cos(), s * t.sin(), *ui]);
                weights.push(wui * wti);
            }
        }
        Self {
            dim: 3,
            directions,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `Σ w_k h(c_k)` in index order.
    pub fn apply<H: FnMut(&[f64]) -> Result<f64>>(&self, mut h: H) -> Result<f64> {
        let terms = self
            .directions
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| Ok(w * h(c)?))
            .collect::<Result<Vec<f64>>>()?;
        Ok(pairwise_sum(&terms))
    }
}

/// `∫_{S_pM} h dν_{g_p}` with `v = Σ c_i e_i` over a Gram–Schmidt frame.
pub fn fiber_integral<H: Fn(&[f64]) -> Result<f64>>(
    h: &H,
    m: &ChartedManifold,
    chart: usize,
    p: &[f64],
    rule: &FiberRule,
) -> Result<f64> {
    if rule.dim != m.dim() {
        return Err(Error::Dimension {
            expected: m.dim(),
            got: rule.dim,
        });
    }
    let e = m.orthonormal_frame(chart, p)?;
    let n = m.dim();
    rule.apply(|c| {
        let v: Vec<f64> = (0..n)
            .map(|k| (0..n).map(|i| e[(k, i)] * c[i]).sum())
            .collect();
        h(&v)
    })
}

/// `∫_{S_pM} f_X dν_{g_p}` with `f_X(v) = g(A_X v, v)` from the connection.
pub fn fx_fiber_integral(
    m: &ChartedManifold,
    field: &VectorFieldDef,
    p: &[f64],
    rule: &FiberRule,
) -> Result<f64> {
    let chart = field.chart();
    let a = m.differential(field, p)?;
    let g = m.metric_at(chart, p)?;
    let n = m.dim();
    fiber_integral(
        &|v: &[f64]| {
            let av: Vec<f64> = (0..n)
                .map(|k| (0..n).map(|i| a[(k, i)] * v[i]).sum())
                .collect();
            Ok(quadratic(&g, &av, v))
        },
        m,
        chart,
        p,
        rule,
    )
}

/// Both sides of `∫_{S_pM} f_X = (ω_{n−1}/n) div X(p)` and their gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiberIdentity {
    pub fiber_integral: f64,
    pub divergence_side: f64,
    pub residual: f64,
}

pub fn fiber_identity(
    m: &ChartedManifold,
    field: &VectorFieldDef,
    p: &[f64],
    rule: &FiberRule,
) -> Result<FiberIdentity> {
    let lhs = fx_fiber_integral(m, field, p, rule)?;
    let n = m.dim();
    let rhs = omega(n) / n as f64 * m.divergence(field, p)?;
    Ok(FiberIdentity {
        fiber_integral: lhs,
        divergence_side: rhs,
        residual: (lhs - rhs).abs(),
    })
}

/// Integration domain on chart 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Region {
    /// Coordinate box; an axis spanning a full period is integrated periodically.
    ChartBox { lo: Vec<f64>, hi: Vec<f64> },
    /// `{r(p) ≤ radius}` through the radial layout.
    Ball { radius: f64 },
    /// `{inner ≤ r(p) ≤ outer}`.
    Annulus { inner: f64, outer: f64 },
    /// All of `M`: the fundamental box of a compact chart, otherwise balls of
    /// radius `r0·2^k`, `k = 0..=levels`.
    Whole { r0: f64, levels: usize },
}

impl Region {
    pub fn whole() -> Self {
        Region::Whole { r0: 1.0, levels: 6 }
    }
}

/// Grid sizes for [`Method::Quadrature`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureOptions {
    /// Trapezoid nodes on each periodic axis (even).
    pub periodic_nodes: usize,
    /// Gauss–Kronrod panels per interval axis of a chart box.
    pub box_panels: usize,
    /// Radial panels have width `max(radial_panel, r/32)`.
    pub radial_panel: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            periodic_nodes: 64,
            box_panels: 16,
            radial_panel: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Method {
    Quadrature(QuadratureOptions),
    MonteCarlo { samples: usize, seed: u64 },
}

/// Largest ratio of consecutive ladder increments that still counts as a
/// summable tail. A logarithmic divergence has ratio 1 under radius doubling.
pub const TAIL_RATIO: f64 = 0.75;

/// One rung of a truncation ladder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub radius: f64,
    pub value: f64,
    pub stderr: f64,
}

/// Result of a base or `SM` integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegralEstimate {
    pub value: f64,
    /// Quadrature: gap to the embedded lower-order grid. Monte Carlo: standard error.
    pub stderr: f64,
    /// Integrand evaluations on the base.
    pub nodes: usize,
    pub truncation_trace: Vec<TracePoint>,
    /// Largest truncation radius, for ladders.
    pub truncation_radius: Option<f64>,
    /// Whether the last rung moved the value by less than `max(1e-6·|value|, 3σ)`,
    /// or the last two rung increments each shrank by at least [`TAIL_RATIO`].
    /// `None` when no truncation was involved.
    pub converged: Option<bool>,
}

impl IntegralEstimate {
    fn bounded(value: f64, stderr: f64, nodes: usize) -> Self {
        Self {
            value,
            stderr,
            nodes,
            truncation_trace: Vec::new(),
            truncation_radius: None,
            converged: None,
        }
    }
}

/// One-dimensional rule with an embedded lower-order companion.
struct Axis {
    nodes: Vec<f64>,
    hi: Vec<f64>,
    lo: Vec<f64>,
    /// `[a, b)` for Monte Carlo; `None` for the two-point sign axis.
    range: Option<(f64, f64)>,
}

impl Axis {
    fn kronrod(edges: &[f64]) -> Self {
        let gk = gauss_kronrod_15();
        let mut ax = Axis {
            nodes: Vec::new(),
            hi: Vec::new(),
            lo: Vec::new(),
            range: Some((edges[0], *edges.last().expect("at least one panel"))),
        };
        for w in edges.windows(2) {
            let (half, mid) = (0.5 * (w[1] - w[0]), 0.5 * (w[0] + w[1]));
            for node in gk {
                ax.nodes.push(mid + half * node.x);
                ax.hi.push(half * node.kronrod);
                ax.lo.push(half * node.gauss);
            }
        }
        ax
    }

    fn periodic(a: f64, period: f64, n: usize) -> Self {
        let n = n.max(2) & !1;
        let h = period / n as f64;
        Axis {
            nodes: (0..n).map(|i| a + i as f64 * h).collect(),
            hi: vec![h; n],
            lo: (0..n)
                .map(|i| if i % 2 == 0 { 2.0 * h } else { 0.0 })
                .collect(),
            range: Some((a, a + period)),
        }
    }

    fn sign() -> Self {
        Axis {
            nodes: vec![-1.0, 1.0],
            hi: vec![1.0, 1.0],
            lo: vec![1.0, 1.0],
            range: None,
        }
    }

    fn volume(&self) -> f64 {
        self.range.map_or(2.0, |(a, b)| b - a)
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self.range {
            Some((a, b)) => a + (b - a) * rng.random::<f64>(),
            None => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

/// Parameter box mapped into chart 0 with its Jacobian.
struct Patch<'a> {
    axes: Vec<Axis>,
    kind: PatchKind<'a>,
}

enum PatchKind<'a> {
    Box,
    /// Parameters `[r, angle or sign, remaining coordinates in order]`.
    Radial {
        layout: &'a RadialLayout,
        dim: usize,
    },
}

impl Patch<'_> {
    /// Chart point and `dx/dparams` Jacobian.
    fn map(&self, q: &[f64]) -> (Vec<f64>, f64) {
        match &self.kind {
            PatchKind::Box => (q.to_vec(), 1.0),
            PatchKind::Radial { layout, dim } => {
                let r = q[0];
                let rho = (layout.rho_of_r)(r);
                let drho = (layout.drho_dr)(r);
                let mut x = vec![0.0; *dim];
                let jac = if layout.block.len() == 2 {
                    x[layout.block[0]] = rho * q[1].cos();
                    x[layout.block[1]] = rho * q[1].sin();
                    rho * drho
                } else {
                    x[layout.block[0]] = q[1] * rho;
                    drho
                };
                let mut k = 2;
                for (c, xc) in x.iter_mut().enumerate() {
                    if !layout.block.contains(&c) {
                        *xc = q[k];
                        k += 1;
                    }
                }
                (x, jac)
            }
        }
    }

    fn param_volume(&self) -> f64 {
        self.axes.iter().map(Axis::volume).product()
    }
}

fn bounded_patch<'a>(m: &'a ChartedManifold, region: &Region) -> Result<Patch<'a>> {
    let opts = QuadratureOptions::default();
    match region {
        Region::ChartBox { lo, hi } => box_patch(m, lo, hi, &opts),
        Region::Ball { radius } => radial_patch(m, 0.0, *radius, &opts),
        Region::Annulus { inner, outer } => radial_patch(m, *inner, *outer, &opts),
        Region::Whole { .. } => {
            let periods = m.chart(0)?.periods();
            if periods.iter().all(Option::is_some) {
                let hi: Vec<f64> = periods
                    .iter()
                    .map(|p| p.expect("checked periodic"))
                    .collect();
                box_patch(m, &vec![0.0; m.dim()], &hi, &opts)
            } else {
                Err(Error::Invalid(
                    "sampling needs a bounded region; truncate with a ball".into(),
                ))
            }
        }
    }
}

/// Uniform draws in the parameters of a bounded region. Each draw carries
/// the weight `√G · Jacobian · parameter volume`, so weighted sample means
/// estimate `ν_g`-integrals.
pub struct RegionSampler<'a> {
    m: &'a ChartedManifold,
    patch: Patch<'a>,
}

impl<'a> RegionSampler<'a> {
    pub fn new(m: &'a ChartedManifold, region: &Region) -> Result<Self> {
        Ok(Self {
            m,
            patch: bounded_patch(m, region)?,
        })
    }

    pub fn draw(&self, rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, f64)> {
        let q: Vec<f64> = self.patch.axes.iter().map(|a| a.sample(rng)).collect();
        let (x, jac) = self.patch.map(&q);
        let w = self.m.volume_density(0, &x)? * jac * self.patch.param_volume();
        Ok((x, w))
    }
}

/// Chart points of a product grid over `{inner ≤ r(p) ≤ outer}`: `radial`
/// equispaced radii including both ends, `periodic` nodes on every angle.
pub fn annulus_grid(
    m: &ChartedManifold,
    inner: f64,
    outer: f64,
    radial: usize,
    periodic: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut patch = radial_patch(
        m,
        inner,
        outer,
        &QuadratureOptions {
            periodic_nodes: periodic,
            ..QuadratureOptions::default()
        },
    )?;
    let k = radial.max(2);
    let radii: Vec<f64> = (0..k)
        .map(|i| inner + (outer - inner) * i as f64 / (k - 1) as f64)
        .collect();
    patch.axes[0] = Axis {
        hi: vec![0.0; k],
        lo: vec![0.0; k],
        nodes: radii,
        range: Some((inner, outer)),
    };
    let mut out = Vec::new();
    let mut idx = vec![0usize; patch.axes.len()];
    loop {
        let q: Vec<f64> = idx
            .iter()
            .zip(&patch.axes)
            .map(|(i, a)| a.nodes[*i])
            .collect();
        out.push(patch.map(&q).0);
        let mut d = patch.axes.len();
        loop {
            if d == 0 {
                return Ok(out);
            }
            d -= 1;
            idx[d] += 1;
            if idx[d] < patch.axes[d].nodes.len() {
                break;
            }
            idx[d] = 0;
        }
    }
}

fn radial_edges(a: f64, b: f64, min_width: f64) -> Vec<f64> {
    let mut edges = vec![a];
    let mut t = a;
    while t < b {
        let w = min_width.max(t / 32.0);
        t = if b - (t + w) < 1e-9 * w { b } else { t + w };
        edges.push(t);
    }
    edges
}

fn periodic_axis_or_none(m: &ChartedManifold, c: usize, n: usize) -> Result<Axis> {
    match m.chart(0)?.periods()[c] {
        Some(p) => Ok(Axis::periodic(0.0, p, n)),
        None => Err(Error::NoRadialLayout(m.name().to_string())),
    }
}

fn radial_patch<'a>(
    m: &'a ChartedManifold,
    r0: f64,
    r1: f64,
    opts: &QuadratureOptions,
) -> Result<Patch<'a>> {
    let layout = m
        .radial_layout()
        .ok_or_else(|| Error::NoRadialLayout(m.name().to_string()))?;
    if !(0.0 <= r0 && r0 < r1 && r1.is_finite()) {
        return Err(Error::Invalid(format!(
            "radial range [{r0}, {r1}] is empty or invalid"
        )));
    }
    let mut axes = vec![Axis::kronrod(&radial_edges(r0, r1, opts.radial_panel))];
    axes.push(if layout.block.len() == 2 {
        Axis::periodic(0.0, 2.0 * PI, opts.periodic_nodes)
    } else {
        Axis::sign()
    });
    for c in 0..m.dim() {
        if !layout.block.contains(&c) {
            axes.push(periodic_axis_or_none(m, c, opts.periodic_nodes)?);
        }
    }
    Ok(Patch {
        axes,
        kind: PatchKind::Radial {
            layout,
            dim: m.dim(),
        },
    })
}

fn box_patch<'a>(
    m: &'a ChartedManifold,
    lo: &[f64],
    hi: &[f64],
    opts: &QuadratureOptions,
) -> Result<Patch<'a>> {
    if lo.len() != m.dim() || hi.len() != m.dim() {
        return Err(Error::Dimension {
            expected: m.dim(),
            got: lo.len().min(hi.len()),
        });
    }
    let periods = m.chart(0)?.periods().to_vec();
    let mut axes = Vec::with_capacity(m.dim());
    for c in 0..m.dim() {
        let (a, b) = (lo[c], hi[c]);
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Invalid(format!(
                "box axis {c} is empty or unbounded: [{a}, {b}]"
            )));
        }
        let full_period = periods[c].is_some_and(|p| ((b - a) - p).abs() <= 1e-12 * p);
        axes.push(if full_period {
            Axis::periodic(a, b - a, opts.periodic_nodes)
        } else {
            let n = opts.box_panels.max(1);
            let edges: Vec<f64> = (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
            Axis::kronrod(&edges)
        });
    }
    Ok(Patch {
        axes,
        kind: PatchKind::Box,
    })
}

/// `(Q_hi, Q_lo, evaluations)` for `∫ f(x) dx` over the patch.
fn tensor_quadrature<G>(patch: &Patch, f: &G) -> Result<(f64, f64, usize)>
where
    G: Fn(&[f64]) -> Result<f64> + Sync,
{
    let outer = &patch.axes[0];
    let rest = &patch.axes[1..];
    let inner_count: usize = rest.iter().map(|a| a.nodes.len()).product();
    let rows = (0..outer.nodes.len())
        .into_par_iter()
        .map(|i| -> Result<(f64, f64)> {
            let mut q = vec![0.0; patch.axes.len()];
            q[0] = outer.nodes[i];
            let mut hi_terms = Vec::with_capacity(inner_count);
            let mut lo_terms = Vec::with_capacity(inner_count);
            let mut idx = vec![0usize; rest.len()];
            for _ in 0..inner_count {
                let (mut whi, mut wlo) = (1.0, 1.0);
                for (k, ax) in rest.iter().enumerate() {
                    q[k + 1] = ax.nodes[idx[k]];
                    whi *= ax.hi[idx[k]];
                    wlo *= ax.lo[idx[k]];
                }
                let (x, jac) = patch.map(&q);
                let v = if whi == 0.0 && wlo == 0.0 {
                    0.0
                } else {
                    f(&x)? * jac
                };
                hi_terms.push(whi * v);
                lo_terms.push(wlo * v);
                for k in (0..rest.len()).rev() {
                    idx[k] += 1;
                    if idx[k] < rest[k].nodes.len() {
                        break;
                    }
                    idx[k] = 0;
                }
            }
            Ok((
                outer.hi[i] * pairwise_sum(&hi_terms),
                outer.lo[i] * pairwise_sum(&lo_terms),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let hi: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let lo: Vec<f64> = rows.iter().map(|r| r.1).collect();
    Ok((
        pairwise_sum(&hi),
        pairwise_sum(&lo),
        outer.nodes.len() * inner_count,
    ))
}

/// Per-sample generator: stream `index` of a key derived from `(seed, stream)`.
pub fn sample_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(index);
    rng
}

/// Mean and standard error of per-sample values, summed in index order.
fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    let dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    let var = if values.len() > 1 {
        pairwise_sum(&dev) / (n - 1.0)
    } else {
        0.0
    };
    (mean, (var / n).sqrt())
}

fn monte_carlo<G>(
    patch: &Patch,
    f: &G,
    samples: usize,
    seed: u64,
    stream: u64,
) -> Result<(f64, f64)>
where
    G: Fn(&[f64]) -> Result<f64> + Sync,
{
    if samples < 2 {
        return Err(Error::Invalid(
            "Monte Carlo needs at least 2 samples".into(),
        ));
    }
    let vol = patch.param_volume();
    let values = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, stream, i);
            let q: Vec<f64> = patch.axes.iter().map(|a| a.sample(&mut rng)).collect();
            let (x, jac) = patch.map(&q);
            Ok(f(&x)? * jac * vol)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean_stderr(&values))
}

fn integrate_patch<G>(
    patch: &Patch,
    f: &G,
    method: &Method,
    stream: u64,
) -> Result<(f64, f64, usize)>
where
    G: Fn(&[f64]) -> Result<f64> + Sync,
{
    match method {
        Method::Quadrature(_) => {
            let (hi, lo, n) = tensor_quadrature(patch, f)?;
            Ok((hi, (hi - lo).abs(), n))
        }
        Method::MonteCarlo { samples, seed } => {
            let (v, e) = monte_carlo(patch, f, *samples, *seed, stream)?;
            Ok((v, e, *samples))
        }
    }
}

fn options(method: &Method) -> QuadratureOptions {
    match method {
        Method::Quadrature(o) => *o,
        Method::MonteCarlo { .. } => QuadratureOptions::default(),
    }
}

/// `∫_region w(x) dx` where `w` already includes the volume density.
fn integrate_weighted<G>(
    m: &ChartedManifold,
    w: &G,
    region: &Region,
    method: &Method,
) -> Result<IntegralEstimate>
where
    G: Fn(&[f64]) -> Result<f64> + Sync,
{
    let opts = options(method);
    let quadrature = matches!(method, Method::Quadrature(_));
    match region {
        Region::ChartBox { lo, hi } => {
            let (v, e, n) = integrate_patch(&box_patch(m, lo, hi, &opts)?, w, method, 0)?;
            Ok(IntegralEstimate::bounded(v, e, n))
        }
        Region::Ball { radius } => {
            let (v, e, n) = integrate_patch(&radial_patch(m, 0.0, *radius, &opts)?, w, method, 0)?;
            Ok(IntegralEstimate::bounded(v, e, n))
        }
        Region::Annulus { inner, outer } => {
            let (v, e, n) =
                integrate_patch(&radial_patch(m, *inner, *outer, &opts)?, w, method, 0)?;
            Ok(IntegralEstimate::bounded(v, e, n))
        }
        Region::Whole { r0, levels } => {
            let periods = m.chart(0)?.periods();
            if periods.iter().all(Option::is_some) {
                let lo = vec![0.0; m.dim()];
                let hi: Vec<f64> = periods
                    .iter()
                    .map(|p| p.expect("checked periodic"))
                    .collect();
                let (v, e, n) = integrate_patch(&box_patch(m, &lo, &hi, &opts)?, w, method, 0)?;
                return Ok(IntegralEstimate::bounded(v, e, n));
            }
            if !(*r0 > 0.0) {
                return Err(Error::Invalid(format!(
                    "ladder start radius must be positive, got {r0}"
                )));
            }
            let mut trace = Vec::with_capacity(levels + 1);
            let (mut value, mut err, mut nodes) = (0.0, 0.0, 0);
            let mut last = (0.0, 0.0);
            let mut inner = 0.0;
            for k in 0..=*levels {
                let outer = r0 * 2f64.powi(k as i32);
                let (v, e, n) =
                    integrate_patch(&radial_patch(m, inner, outer, &opts)?, w, method, k as u64)?;
                value += v;
                err = if quadrature { err + e } else { err.hypot(e) };
                nodes += n;
                trace.push(TracePoint {
                    radius: outer,
                    value,
                    stderr: err,
                });
                last = (v, e);
                inner = outer;
            }
            let increments: Vec<f64> = trace
                .iter()
                .scan(0.0, |prev, tp| {
                    let d = tp.value - *prev;
                    *prev = tp.value;
                    Some(d.abs())
                })
                .collect();
            let settled = last.0.abs() <= (1e-6 * value.abs()).max(3.0 * last.1);
            let geometric = increments.len() >= 3
                && increments[increments.len() - 3..]
                    .windows(2)
                    .all(|w| w[1] <= TAIL_RATIO * w[0]);
            let converged = *levels > 0 && (settled || geometric);
            Ok(IntegralEstimate {
                value,
                stderr: err,
                nodes,
                truncation_radius: Some(inner),
                truncation_trace: trace,
                converged: Some(converged),
            })
        }
    }
}

/// `∫_region h dν_g`.
pub fn base_integral<H>(
    m: &ChartedManifold,
    h: &H,
    region: &Region,
    method: &Method,
) -> Result<IntegralEstimate>
where
    H: Fn(&[f64]) -> Result<f64> + Sync,
{
    integrate_weighted(
        m,
        &|x: &[f64]| Ok(h(x)? * m.volume_density(0, x)?),
        region,
        method,
    )
}

/// `∫_region ∫_{S_pM} F(p, v) dν_{g_p} dν_g(p)`, the fiber done by `rule` at
/// every base node or sample.
pub fn sm_integral<F>(
    m: &ChartedManifold,
    f: &F,
    region: &Region,
    method: &Method,
    rule: &FiberRule,
) -> Result<IntegralEstimate>
where
    F: Fn(&[f64], &[f64]) -> Result<f64> + Sync,
{
    base_integral(
        m,
        &|p: &[f64]| fiber_integral(&|v: &[f64]| f(p, v), m, 0, p, rule),
        region,
        method,
    )
}

/// Iterated quadrature against a direct Monte Carlo over `(p, v)` jointly.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FubiniCheck {
    pub iterated: IntegralEstimate,
    pub direct: IntegralEstimate,
    pub discrepancy: f64,
    pub combined_error: f64,
    /// `discrepancy ≤ 3·combined_error`.
    pub consistent: bool,
}

/// Uniform direction on `S^{n−1}` for `n ∈ {2, 3}`.
fn uniform_direction(n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let th = 2.0 * PI * rng.random::<f64>();
    match n {
        2 => Ok(vec![th.cos(), th.sin()]),
        3 => {
            let u = 2.0 * rng.random::<f64>() - 1.0;
            let s = (1.0 - u * u).sqrt();
            Ok(vec![s * th.cos(), s * th.sin(), u])
        }
        _ => Err(Error::Invalid(format!(
            "no direction sampler for dimension {n}"
        ))),
    }
}

pub fn fubini_consistency<F>(
    m: &ChartedManifold,
    f: &F,
    region: &Region,
    quadrature: QuadratureOptions,
    rule: &FiberRule,
    samples: usize,
    seed: u64,
) -> Result<FubiniCheck>
where
    F: Fn(&[f64], &[f64]) -> Result<f64> + Sync,
{
    let iterated = sm_integral(m, f, region, &Method::Quadrature(quadrature), rule)?;
    let n = m.dim();
    let om = omega(n);
    // the direction stream is offset so it never coincides with the base stream
    let joint = |p: &[f64], index_seed: u64| -> Result<f64> {
        let mut rng = sample_rng(seed, u64::MAX, index_seed);
        let c = uniform_direction(n, &mut rng)?;
        let e = m.orthonormal_frame(0, p)?;
        let v: Vec<f64> = (0..n)
            .map(|k| (0..n).map(|i| e[(k, i)] * c[i]).sum())
            .collect();
        Ok(om * f(p, &v)? * m.volume_density(0, p)?)
    };
    let direct = direct_monte_carlo(m, &joint, region, samples, seed)?;
    let discrepancy = (iterated.value - direct.value).abs();
    let combined_error = iterated.stderr.hypot(direct.stderr);
    Ok(FubiniCheck {
        consistent: discrepancy <= 3.0 * combined_error,
        iterated,
        direct,
        discrepancy,
        combined_error,
    })
}

/// Monte Carlo over a bounded region where each sample also draws its own
/// fiber direction; the sample index keys the direction stream.
fn direct_monte_carlo<J>(
    m: &ChartedManifold,
    joint: &J,
    region: &Region,
    samples: usize,
    seed: u64,
) -> Result<IntegralEstimate>
where
    J: Fn(&[f64], u64) -> Result<f64> + Sync,
{
    let patch = bounded_patch(m, region)?;
    if samples < 2 {
        return Err(Error::Invalid(
            "Monte Carlo needs at least 2 samples".into(),
        ));
    }
    let vol = patch.param_volume();
    let values = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, 0, i);
            let q: Vec<f64> = patch.axes.iter().map(|a| a.sample(&mut rng)).collect();
            let (x, jac) = patch.map(&q);
            Ok(joint(&x, i)? * jac * vol)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (v, e) = mean_stderr(&values);
    Ok(IntegralEstimate::bounded(v, e, samples))
}
