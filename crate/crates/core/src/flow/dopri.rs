//! Dormand–Prince 5(4) with PI step-size control and the standard
//! fourth-order continuous extension.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const BETA: f64 = 0.04;
const SAFE: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

/// Tolerances and limits for geodesic integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowTolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for FlowTolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            max_steps: 2_000_000,
        }
    }
}

/// Step bookkeeping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegratorStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evaluations: usize,
    /// Largest scaled error norm among accepted steps (≤ 1 by construction).
    pub max_local_error: f64,
}

/// Continuous extension over one accepted step `[t0, t0 + h]`.
#[derive(Debug, Clone)]
pub struct DenseSegment {
    pub t0: f64,
    pub h: f64,
    rcont: [Vec<f64>; 5],
}

impl DenseSegment {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let th = ((t - self.t0) / self.h).clamp(0.0, 1.0);
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = &self.rcont;
        (0..r1.len())
            .map(|i| r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i]))))
            .collect()
    }

    /// State at the end of the step.
    pub fn end(&self) -> Vec<f64> {
        self.rcont[0]
            .iter()
            .zip(&self.rcont[1])
            .map(|(a, b)| a + b)
            .collect()
    }
}

/// Switching functions of the state; steps end where a component changes sign.
pub type SeamFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

pub enum Step {
    Accepted(DenseSegment),
    Finished,
    Truncated(String),
}

/// Right-hand side `y ↦ y'`; `None` when `y` is outside the chart domain
/// or produces non-finite values.
pub trait Rhs {
    fn eval(&self, y: &[f64]) -> Option<Vec<f64>>;
}

impl<F: Fn(&[f64]) -> Option<Vec<f64>>> Rhs for F {
    fn eval(&self, y: &[f64]) -> Option<Vec<f64>> {
        self(y)
    }
}

/// Incremental integrator for autonomous systems on `[0, t_end]`.
pub struct Stepper<F: Rhs> {
    f: F,
    tol: FlowTolerances,
    t: f64,
    t_end: f64,
    y: Vec<f64>,
    k1: Vec<f64>,
    h: f64,
    fac_old: f64,
    last_rejected: bool,
    seams: Option<SeamFn>,
    /// Step size to resume with after a step shortened to end on a seam.
    resume_h: Option<f64>,
    pub stats: IntegratorStats,
}

fn add_scaled(y: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    (0..y.len())
        .map(|i| y[i] + h * terms.iter().map(|(c, k)| c * k[i]).sum::<f64>())
        .collect()
}

impl<F: Rhs> Stepper<F> {
    pub fn new(f: F, y0: Vec<f64>, t_end: f64, tol: FlowTolerances) -> Result<Self, String> {
        let k1 = f
            .eval(&y0)
            .ok_or_else(|| "initial state outside the chart domain".to_string())?;
        let mut s = Self {
            f,
            tol,
            t: 0.0,
            t_end,
            y: y0,
            k1,
            h: 0.0,
            fac_old: 1e-4,
            last_rejected: false,
            seams: None,
            resume_h: None,
            stats: IntegratorStats {
                rhs_evaluations: 1,
                ..Default::default()
            },
        };
        s.h = s.initial_step();
        Ok(s)
    }

    /// Ends steps on the zero sets of `seams`, where the right-hand side is
    /// less smooth than the error estimator assumes.
    pub fn with_seams(mut self, seams: SeamFn) -> Self {
        self.seams = Some(seams);
        self
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn state(&self) -> &[f64] {
        &self.y
    }

    fn scale(&self, i: usize, other: f64) -> f64 {
        self.tol.atol + self.tol.rtol * self.y[i].abs().max(other.abs())
    }

    fn initial_step(&mut self) -> f64 {
        let n = self.y.len() as f64;
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..self.y.len() {
            let sk = self.scale(i, 0.0);
            d0 += (self.y[i] / sk).powi(2);
            d1 += (self.k1[i] / sk).powi(2);
        }
        let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
        let hmax = self.t_end.max(1e-300);
        let h0 = if d0 < 1e-10 || d1 < 1e-10 {
            1e-6
        } else {
            0.01 * d0 / d1
        }
        .min(hmax);
        let y1 = add_scaled(&self.y, h0, &[(1.0, &self.k1)]);
        let Some(f1) = self.f.eval(&y1) else {
            return h0 * 1e-3;
        };
        self.stats.rhs_evaluations += 1;
        let mut d2 = 0.0;
        for i in 0..self.y.len() {
            d2 += ((f1[i] - self.k1[i]) / self.scale(i, 0.0)).powi(2);
        }
        let d2 = (d2 / n).sqrt() / h0;
        let der = d1.max(d2);
        let h1 = if der <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / der).powf(0.2)
        };
        (100.0 * h0).min(h1).min(hmax)
    }

    /// Advances by one accepted step.
    pub fn step(&mut self) -> Step {
        if self.t >= self.t_end {
            return Step::Finished;
        }
        let n = self.y.len();
        loop {
            if self.stats.accepted + self.stats.rejected >= self.tol.max_steps {
                return Step::Truncated(format!("step budget of {} exhausted", self.tol.max_steps));
            }
            let h_min = 1e-14 * self.t.abs().max(1.0);
            let remaining = self.t_end - self.t;
            let mut h = self.h.min(remaining);
            if 1.01 * h >= remaining {
                h = remaining;
            }
            if h < h_min && h < remaining {
                return Step::Truncated(format!("step size underflow (h = {h:e})"));
            }
            match self.attempt(h) {
                Some((y_new, k7, k, err)) => {
                    let expo = 0.2 - BETA * 0.75;
                    let fac11 = err.powf(expo);
                    if err <= 1.0 {
                        let fac = (fac11 / self.fac_old.powf(BETA) / SAFE)
                            .clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                        let mut h_new = h / fac;
                        if self.last_rejected {
                            h_new = h_new.min(h);
                        }
                        self.fac_old = err.max(1e-4);
                        self.last_rejected = false;
                        self.stats.accepted += 1;
                        self.stats.max_local_error = self.stats.max_local_error.max(err);
                        let ydiff: Vec<f64> = (0..n).map(|i| y_new[i] - self.y[i]).collect();
                        let bspl: Vec<f64> = (0..n).map(|i| h * self.k1[i] - ydiff[i]).collect();
                        let r4: Vec<f64> = (0..n).map(|i| ydiff[i] - h * k7[i] - bspl[i]).collect();
                        let r5: Vec<f64> = (0..n)
                            .map(|i| {
                                h * (D1 * k[0][i]
                                    + D3 * k[2][i]
                                    + D4 * k[3][i]
                                    + D5 * k[4][i]
                                    + D6 * k[5][i]
                                    + D7 * k7[i])
                            })
                            .collect();
                        let seg = DenseSegment {
                            t0: self.t,
                            h,
                            rcont: [self.y.clone(), ydiff, bspl, r4, r5],
                        };
                        if self.resume_h.is_none() {
                            if let Some(tc) = self.seam_crossing(&seg) {
                                self.stats.accepted -= 1;
                                self.stats.rejected += 1;
                                self.resume_h = Some(h_new);
                                self.h = tc - self.t;
                                continue;
                            }
                        }
                        self.y = y_new;
                        self.k1 = k7;
                        self.t = if h == remaining {
                            self.t_end
                        } else {
                            self.t + h
                        };
                        self.h = self.resume_h.take().map_or(h_new, |r| r.max(h_new));
                        return Step::Accepted(seg);
                    }
                    self.stats.rejected += 1;
                    self.last_rejected = true;
                    self.h = h / (1.0 / FAC_MIN).min(fac11 / SAFE);
                }
                None => {
                    // left the domain or overflowed: shrink and retry
                    self.stats.rejected += 1;
                    self.last_rejected = true;
                    self.h = 0.2 * h;
                    if self.h < h_min {
                        return Step::Truncated(format!(
                            "left the chart domain or overflowed near t = {}",
                            self.t
                        ));
                    }
                }
            }
        }
    }

    /// Earliest seam crossing strictly inside the step, if any.
    fn seam_crossing(&self, seg: &DenseSegment) -> Option<f64> {
        let seams = self.seams.as_ref()?;
        let (t0, t1) = (seg.t0, seg.t1());
        let s0 = seams(&seg.eval(t0));
        let s1 = seams(&seg.eval(t1));
        let mut best: Option<f64> = None;
        for i in 0..s0.len() {
            if s0[i] * s1[i] >= 0.0 {
                continue;
            }
            let (mut lo, mut hi) = (t0, t1);
            let neg0 = s0[i] < 0.0;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if (seams(&seg.eval(mid))[i] < 0.0) == neg0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            best = Some(best.map_or(hi, |b| b.min(hi)));
        }
        // a crossing at the very start means the previous step already ended on it
        best.filter(|tc| tc - t0 > 1e-8 * seg.h)
    }

    #[allow(clippy::type_complexity)]
    fn attempt(&mut self, h: f64) -> Option<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>, f64)> {
        let y = &self.y;
        let k1 = self.k1.clone();
        let eval = |yy: Vec<f64>, stats: &mut IntegratorStats| {
            stats.rhs_evaluations += 1;
            let r = self.f.eval(&yy)?;
            r.iter().all(|v| v.is_finite()).then_some(r)
        };
        let k2 = eval(add_scaled(y, h, &[(A21, &k1)]), &mut self.stats)?;
        let k3 = eval(add_scaled(y, h, &[(A31, &k1), (A32, &k2)]), &mut self.stats)?;
        let k4 = eval(
            add_scaled(y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
            &mut self.stats,
        )?;
        let k5 = eval(
            add_scaled(y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            &mut self.stats,
        )?;
        let k6 = eval(
            add_scaled(
                y,
                h,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            ),
            &mut self.stats,
        )?;
        let y_new = add_scaled(
            y,
            h,
            &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
        );
        if !y_new.iter().all(|v| v.is_finite()) {
            return None;
        }
        let k7 = eval(y_new.clone(), &mut self.stats)?;
        let n = y.len();
        let mut err = 0.0;
        for i in 0..n {
            let e =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sk = self.tol.atol + self.tol.rtol * y[i].abs().max(y_new[i].abs());
            err += (e / sk).powi(2);
        }
        let err = (err / n as f64).sqrt();
        if !err.is_finite() {
            return None;
        }
        Some((y_new, k7, vec![k1, k2, k3, k4, k5, k6], err))
    }
}
