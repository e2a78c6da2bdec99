use std::io;
use std::sync::Arc;

use serde::Serialize;

use super::dopri::{DenseSegment, FlowTolerances, IntegratorStats, Step, Stepper};
use crate::error::{Error, Result};
use crate::geometry::{ChartedManifold, UnitTangentState, VectorFieldDef};
use crate::numeric::{pairwise_sum, try_integrate_adaptive};

/// Why a trajectory stopped before its requested horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Truncation {
    pub t: f64,
    pub reason: String,
}

/// A geodesic `t ↦ (γ(t), γ'(t))` with node states and dense output.
///
/// Negative horizons are integrated as the forward flow of the flipped
/// vector; times and velocities are reported in the original direction.
#[derive(Debug, Clone)]
pub struct GeodesicTrajectory {
    pub chart: usize,
    pub dim: usize,
    direction: f64,
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    pub speed_drift: Vec<f64>,
    pub stats: IntegratorStats,
    pub truncation: Option<Truncation>,
    segments: Vec<DenseSegment>,
}

/// Geodesic vector field `(x, v) ↦ (v, −Γ(v, v))` on one chart.
pub(crate) fn geodesic_rhs<'a>(
    m: &'a ChartedManifold,
    chart: usize,
) -> impl Fn(&[f64]) -> Option<Vec<f64>> + 'a {
    let n = m.dim();
    move |y: &[f64]| {
        let (x, v) = y.split_at(n);
        let a = m.geodesic_acceleration(chart, x, v).ok()?;
        let mut out = Vec::with_capacity(2 * n);
        out.extend_from_slice(v);
        out.extend(a);
        Some(out)
    }
}

/// Stepper over the flow of `θ0` on `[0, |T|]`, flipping `v` when `T < 0`.
#[allow(clippy::type_complexity)]
pub(crate) fn stepper<'a>(
    m: &'a ChartedManifold,
    theta0: &UnitTangentState,
    horizon: f64,
    tol: FlowTolerances,
) -> Result<Stepper<impl Fn(&[f64]) -> Option<Vec<f64>> + 'a>> {
    if !horizon.is_finite() {
        return Err(Error::Invalid(format!(
            "horizon must be finite, got {horizon}"
        )));
    }
    let dir = if horizon < 0.0 { -1.0 } else { 1.0 };
    let mut y0 = theta0.p.clone();
    y0.extend(theta0.v.iter().map(|c| dir * c));
    let mut st = Stepper::new(geodesic_rhs(m, theta0.chart), y0, horizon.abs(), tol)
        .map_err(|reason| Error::Truncated { t: 0.0, reason })?;
    if let Some(seams) = m.chart(theta0.chart)?.seams().cloned() {
        let n = m.dim();
        st = st.with_seams(Arc::new(move |y: &[f64]| seams(&y[..n])));
    }
    Ok(st)
}

/// Solves `ẍ^k + Γ^k_ij ẋ^i ẋ^j = 0` from `θ0` over `[0, T]` (or `[T, 0]`).
///
/// Velocities are never renormalized; `speed_drift` records `|g(γ',γ') − 1|`.
/// A trajectory that cannot be continued is returned with `truncation` set.
pub fn integrate_geodesic(
    m: &ChartedManifold,
    theta0: &UnitTangentState,
    horizon: f64,
    tol: FlowTolerances,
) -> Result<GeodesicTrajectory> {
    let n = m.dim();
    let dir = if horizon < 0.0 { -1.0 } else { 1.0 };
    let mut st = stepper(m, theta0, horizon, tol)?;
    let mut traj = GeodesicTrajectory {
        chart: theta0.chart,
        dim: n,
        direction: dir,
        times: vec![0.0],
        positions: vec![theta0.p.clone()],
        velocities: vec![theta0.v.clone()],
        speed_drift: vec![speed_drift(m, theta0.chart, &theta0.p, &theta0.v)],
        stats: IntegratorStats::default(),
        truncation: None,
        segments: Vec::new(),
    };
    loop {
        match st.step() {
            Step::Accepted(seg) => {
                let y = seg.end();
                traj.push_node(m, dir * seg.t1(), &y);
                traj.segments.push(seg);
            }
            Step::Finished => break,
            Step::Truncated(reason) => {
                traj.truncation = Some(Truncation {
                    t: dir * st.time(),
                    reason,
                });
                break;
            }
        }
    }
    traj.stats = st.stats;
    Ok(traj)
}

fn speed_drift(m: &ChartedManifold, chart: usize, x: &[f64], v: &[f64]) -> f64 {
    m.inner(chart, x, v, v)
        .map(|s| (s - 1.0).abs())
        .unwrap_or(f64::NAN)
}

impl GeodesicTrajectory {
    fn push_node(&mut self, m: &ChartedManifold, t: f64, y: &[f64]) {
        let (x, v) = y.split_at(self.dim);
        let v: Vec<f64> = v.iter().map(|c| self.direction * c).collect();
        self.speed_drift.push(speed_drift(m, self.chart, x, &v));
        self.times.push(t);
        self.positions.push(x.to_vec());
        self.velocities.push(v);
    }

    /// Signed time reached (equals the horizon unless truncated).
    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("trajectory has an initial node")
    }

    pub fn is_truncated(&self) -> bool {
        self.truncation.is_some()
    }

    pub fn max_speed_drift(&self) -> f64 {
        self.speed_drift.iter().copied().fold(0.0, f64::max)
    }

    pub fn final_state(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.positions.last().cloned().unwrap_or_default(),
            self.velocities.last().cloned().unwrap_or_default(),
        )
    }

    fn covers(&self, t: f64) -> bool {
        let s = self.direction * t;
        s >= 0.0 && s <= self.direction * self.end_time()
    }

    /// `(γ(t), γ'(t))` from the dense output.
    pub fn state_at(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        if !self.covers(t) {
            return Err(Error::Truncated {
                t: self.end_time(),
                reason: format!("time {t} is outside the integrated range"),
            });
        }
        let s = self.direction * t;
        if self.segments.is_empty() {
            return Ok((self.positions[0].clone(), self.velocities[0].clone()));
        }
        let idx = self
            .segments
            .partition_point(|seg| seg.t1() < s)
            .min(self.segments.len() - 1);
        let y = self.segments[idx].eval(s);
        let (x, v) = y.split_at(self.dim);
        Ok((x.to_vec(), v.iter().map(|c| self.direction * c).collect()))
    }

    /// `∫_{t0}^{t1} h(φ_t θ0) dt` by adaptive Gauss–Kronrod on each step of
    /// the dense output, with absolute tolerance `tol` per unit time.
    /// Returns (value, quadrature error estimate).
    pub fn integrate<H>(&self, h: &H, t0: f64, t1: f64, tol: f64) -> Result<(f64, f64)>
    where
        H: Fn(&[f64], &[f64]) -> Result<f64>,
    {
        if !self.covers(t0) || !self.covers(t1) {
            return Err(Error::Truncated {
                t: self.end_time(),
                reason: format!("integration range [{t0}, {t1}] exceeds the trajectory"),
            });
        }
        let sign = if t1 >= t0 { 1.0 } else { -1.0 };
        let (s0, s1) = {
            let (a, b) = (self.direction * t0, self.direction * t1);
            (a.min(b), a.max(b))
        };
        let mut vals = Vec::new();
        let mut errs = Vec::new();
        for seg in &self.segments {
            let (a, b) = (seg.t0.max(s0), seg.t1().min(s1));
            if b <= a {
                continue;
            }
            let g = |s: f64| {
                let y = seg.eval(s);
                let (x, v) = y.split_at(self.dim);
                let v: Vec<f64> = v.iter().map(|c| self.direction * c).collect();
                h(x, &v)
            };
            let (v, e) = try_integrate_adaptive(&g, a, b, tol * (b - a))?;
            vals.push(v);
            errs.push(e);
        }
        // t = direction·s, so the increasing-t integral equals the increasing-s one.
        Ok((sign * pairwise_sum(&vals), pairwise_sum(&errs)))
    }

    /// Writes `t, x_1..x_n, v_1..v_n, speed_drift` rows.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim).map(|i| format!("x_{i}")));
        header.extend((1..=self.dim).map(|i| format!("v_{i}")));
        header.push("speed_drift".into());
        w.write_record(&header)?;
        for i in 0..self.times.len() {
            let mut row = vec![self.times[i].to_string()];
            row.extend(self.positions[i].iter().map(f64::to_string));
            row.extend(self.velocities[i].iter().map(f64::to_string));
            row.push(self.speed_drift[i].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `∫_0^T h(φ_t θ0) dt`.
pub fn birkhoff_integral<H>(
    m: &ChartedManifold,
    h: &H,
    theta0: &UnitTangentState,
    horizon: f64,
    tol: FlowTolerances,
    quad_tol: f64,
) -> Result<f64>
where
    H: Fn(&[f64], &[f64]) -> Result<f64>,
{
    let traj = integrate_geodesic(m, theta0, horizon, tol)?;
    if let Some(tr) = &traj.truncation {
        return Err(Error::Truncated {
            t: tr.t,
            reason: tr.reason.clone(),
        });
    }
    Ok(traj.integrate(h, 0.0, horizon, quad_tol)?.0)
}

/// Both sides of `∫_0^T f_X(φ_s θ) ds = g(X(γ(T)), γ'(T)) − g(X(p), v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathIdentity {
    pub integral: f64,
    pub boundary: f64,
    pub residual: f64,
    /// `max(1, |g(X(γ(T)), γ'(T))|, |g(X(p), v)|)`: the size of the boundary terms.
    pub scale: f64,
    pub quadrature_error: f64,
}

pub fn path_integral_identity(
    m: &ChartedManifold,
    x: &VectorFieldDef,
    theta0: &UnitTangentState,
    horizon: f64,
    tol: FlowTolerances,
    quad_tol: f64,
) -> Result<PathIdentity> {
    let traj = integrate_geodesic(m, theta0, horizon, tol)?;
    if let Some(tr) = &traj.truncation {
        return Err(Error::Truncated {
            t: tr.t,
            reason: tr.reason.clone(),
        });
    }
    let chart = theta0.chart;
    let fx = |p: &[f64], v: &[f64]| m.f_x_eval(x, p, v);
    let (integral, qerr) = traj.integrate(&fx, 0.0, horizon, quad_tol)?;
    let (pt, vt) = traj.final_state();
    let end = m.inner(chart, &pt, &x.eval(&pt), &vt)?;
    let start = m.inner(chart, &theta0.p, &x.eval(&theta0.p), &theta0.v)?;
    let boundary = end - start;
    Ok(PathIdentity {
        integral,
        boundary,
        residual: (integral - boundary).abs(),
        scale: 1f64.max(end.abs()).max(start.abs()),
        quadrature_error: qerr,
    })
}

/// `|∫_0^T f_X(φ_s θ0) ds − (g(X(γ(T)),γ'(T)) − g(X(p),v))|`.
pub fn path_integral_identity_residual(
    m: &ChartedManifold,
    x: &VectorFieldDef,
    theta0: &UnitTangentState,
    horizon: f64,
) -> Result<f64> {
    Ok(path_integral_identity(m, x, theta0, horizon, FlowTolerances::default(), 1e-10)?.residual)
}

/// `(|∫_{−s}^{s} f_X(φ_t θ) dt|, |X(γ(s))| + |X(γ(−s))|)`.
pub fn endpoint_bound_check(
    m: &ChartedManifold,
    x: &VectorFieldDef,
    theta0: &UnitTangentState,
    s: f64,
    tol: FlowTolerances,
) -> Result<(f64, f64)> {
    let s = s.abs();
    let fx = |p: &[f64], v: &[f64]| m.f_x_eval(x, p, v);
    let mut total = 0.0;
    let mut rhs = 0.0;
    for horizon in [s, -s] {
        let traj = integrate_geodesic(m, theta0, horizon, tol)?;
        if let Some(tr) = &traj.truncation {
            return Err(Error::Truncated {
                t: tr.t,
                reason: tr.reason.clone(),
            });
        }
        let (v, _) = traj.integrate(&fx, 0.0, horizon, 1e-10)?;
        total += if horizon < 0.0 { -v } else { v };
        rhs += m.field_norm(x, &traj.final_state().0)?;
    }
    Ok((total.abs(), rhs))
}
