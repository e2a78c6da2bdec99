use serde::Serialize;

use super::dopri::{DenseSegment, FlowTolerances, Step, Stepper};
use super::trajectory::stepper;
use crate::error::{Error, Result};
use crate::geometry::{ChartedManifold, UnitTangentState};

/// First re-entry of an orbit into the ε-ball around its starting point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReturnEvent {
    /// Time of closest approach within the first excursion below `epsilon`.
    pub time: f64,
    pub distance: f64,
    pub epsilon: f64,
}

/// Unit velocity expressed in the Gram–Schmidt frame at its base point.
fn frame_coordinates(m: &ChartedManifold, chart: usize, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let e = m.orthonormal_frame(chart, x)?;
    let g = m.metric_at(chart, x)?;
    let c: Vec<f64> = (0..m.dim())
        .map(|i| {
            let col: Vec<f64> = e.column(i).iter().copied().collect();
            crate::geometry::quadratic(&g, &col, v)
        })
        .collect();
    let n = c.iter().map(|a| a * a).sum::<f64>().sqrt();
    Ok(c.into_iter().map(|a| a / n).collect())
}

fn position_distance(m: &ChartedManifold, chart: usize, p: &[f64], x: &[f64]) -> Result<f64> {
    match m.exact_distance(p, x) {
        Some(d) => Ok(d),
        None => m.chart_distance(chart, p, x),
    }
}

/// `√(d(p, x)² + ∠(v0, v)²)` with the angle measured between frame
/// coordinates; `d` is the exact distance when known, chart distance otherwise.
pub fn proxy_sasaki_distance(
    m: &ChartedManifold,
    theta0: &UnitTangentState,
    x: &[f64],
    v: &[f64],
) -> Result<f64> {
    let c0 = frame_coordinates(m, theta0.chart, &theta0.p, &theta0.v)?;
    let d = position_distance(m, theta0.chart, &theta0.p, x)?;
    proxy_with(m, theta0.chart, &c0, d, x, v)
}

fn proxy_with(
    m: &ChartedManifold,
    chart: usize,
    c0: &[f64],
    d: f64,
    x: &[f64],
    v: &[f64],
) -> Result<f64> {
    let c = frame_coordinates(m, chart, x, v)?;
    let cos: f64 = c.iter().zip(c0).map(|(a, b)| a * b).sum();
    let angle = cos.clamp(-1.0, 1.0).acos();
    Ok(d.hypot(angle))
}

/// Dense flow that integrates lazily as later times are requested.
struct LazyFlow<F: Fn(&[f64]) -> Option<Vec<f64>>> {
    stepper: Stepper<F>,
    segments: Vec<DenseSegment>,
    n: usize,
    horizon: f64,
}

impl<F: Fn(&[f64]) -> Option<Vec<f64>>> LazyFlow<F> {
    fn state(&mut self, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let t = t.min(self.horizon);
        while self.segments.last().is_none_or(|s| s.t1() < t) {
            match self.stepper.step() {
                Step::Accepted(seg) => self.segments.push(seg),
                Step::Finished => break,
                Step::Truncated(reason) => {
                    return Err(Error::Truncated {
                        t: self.stepper.time(),
                        reason,
                    })
                }
            }
        }
        if self.segments.is_empty() {
            let y = self.stepper.state();
            return Ok((y[..self.n].to_vec(), y[self.n..].to_vec()));
        }
        let idx = self
            .segments
            .partition_point(|s| s.t1() < t)
            .min(self.segments.len() - 1);
        let y = self.segments[idx].eval(t);
        Ok((y[..self.n].to_vec(), y[self.n..].to_vec()))
    }
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Searches `[t_min, t_max]` for the first time the orbit of `θ0` comes
/// within proxy distance `ε` of `θ0`.
///
/// The orbit is sampled every `ε/4`. When the manifold has an exact
/// distance, samples skip ahead by `d − ε` (no return is possible sooner)
/// and the search stops once `d − ε` exceeds the remaining time, or once `d`
/// exceeds `ε` and is increasing where distance is convex along geodesics. Candidate
/// minima are refined by golden-section search. A truncated orbit is an
/// error, so callers can count it as inconclusive.
pub fn first_return(
    m: &ChartedManifold,
    theta0: &UnitTangentState,
    epsilon: f64,
    t_min: f64,
    t_max: f64,
    tol: FlowTolerances,
) -> Result<Option<ReturnEvent>> {
    if !(epsilon > 0.0) || !(t_min >= 0.0) || !(t_max >= t_min) {
        return Err(Error::Invalid(format!(
            "need ε > 0 and 0 ≤ t_min ≤ t_max (ε = {epsilon}, t_min = {t_min}, t_max = {t_max})"
        )));
    }
    let chart = theta0.chart;
    let exact = m.has_exact_distance();
    let convex = m.has_convex_distance();
    let mut last_d: Option<f64> = None;
    let c0 = frame_coordinates(m, chart, &theta0.p, &theta0.v)?;
    let mut flow = LazyFlow {
        stepper: stepper(m, theta0, t_max, tol)?,
        segments: Vec::new(),
        n: m.dim(),
        horizon: t_max,
    };
    // Proxy distance with the angle term skipped when the position alone exceeds the threshold.
    let eval = |t: f64, flow: &mut LazyFlow<_>| -> Result<(f64, f64)> {
        let (x, v) = flow.state(t)?;
        let d = position_distance(m, chart, &theta0.p, &x)?;
        let full = if d <= 2.0 * epsilon {
            proxy_with(m, chart, &c0, d, &x, &v)?
        } else {
            d
        };
        Ok((d, full))
    };

    let dt = 0.25 * epsilon;
    let mut hist: Vec<(f64, f64)> = Vec::with_capacity(3);
    let mut t = t_min;
    while t <= t_max {
        let (d, full) = eval(t, &mut flow)?;
        if full <= epsilon {
            let lo = hist.last().map_or(t_min, |h| h.0).max(t_min);
            return closest_in_excursion(
                &mut |s| eval(s, &mut flow).map(|r| r.1),
                lo,
                t,
                epsilon,
                t_min,
                t_max,
            )
            .map(Some);
        }
        hist.push((t, full));
        if hist.len() > 3 {
            hist.remove(0);
        }
        if hist.len() == 3
            && hist[1].1 < hist[0].1
            && hist[1].1 <= hist[2].1
            && hist[1].1 < 1.5 * epsilon
        {
            let (a, b) = (hist[0].0, hist[2].0);
            let (tm, dm) = golden_min(&mut |s| eval(s, &mut flow).map(|r| r.1), a, b)?;
            if dm <= epsilon {
                return closest_in_excursion(
                    &mut |s| eval(s, &mut flow).map(|r| r.1),
                    a,
                    tm,
                    epsilon,
                    t_min,
                    t_max,
                )
                .map(Some);
            }
        }
        if exact {
            if d - epsilon > t_max - t {
                return Ok(None);
            }
            if convex && d > epsilon && last_d.is_some_and(|prev| d > prev * (1.0 + 1e-9)) {
                return Ok(None);
            }
            last_d = Some(d);
            if d - epsilon > dt {
                t += d - epsilon;
                hist.clear();
                continue;
            }
        }
        if t == t_max {
            break;
        }
        t = (t + dt).min(t_max);
    }
    Ok(None)
}

/// Given `D(lo) > ε` (or `lo = t_min`) and `D(hit) ≤ ε`, locates the entry
/// into the ball by bisection and returns the closest approach that follows.
fn closest_in_excursion(
    dist: &mut dyn FnMut(f64) -> Result<f64>,
    lo: f64,
    hit: f64,
    epsilon: f64,
    t_min: f64,
    t_max: f64,
) -> Result<ReturnEvent> {
    let (mut a, mut b) = (lo, hit);
    if dist(a)? > epsilon {
        for _ in 0..60 {
            let mid = 0.5 * (a + b);
            if dist(mid)? <= epsilon {
                b = mid;
            } else {
                a = mid;
            }
        }
    } else {
        b = a;
    }
    let entry = b.max(t_min);
    let (tm, dm) = golden_min(dist, entry, (entry + 2.0 * epsilon).min(t_max))?;
    let d_entry = dist(entry)?;
    let (time, distance) = if dm <= d_entry {
        (tm, dm)
    } else {
        (entry, d_entry)
    };
    Ok(ReturnEvent {
        time,
        distance,
        epsilon,
    })
}

fn golden_min(f: &mut dyn FnMut(f64) -> Result<f64>, a: f64, b: f64) -> Result<(f64, f64)> {
    let (mut a, mut b) = (a, b);
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while (b - a).abs() > 1e-11 * (1.0 + a.abs()) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d)?;
        }
    }
    let t = 0.5 * (a + b);
    Ok((t, f(t)?))
}
