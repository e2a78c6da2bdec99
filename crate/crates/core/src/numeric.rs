//! Small numerical building blocks shared by the integration code:
//! reproducible summation, Gauss rules, finite-difference steps and
//! smooth blending polynomials.

use std::f64::consts::PI;

/// Below this length `pairwise_sum` switches to compensated accumulation.
const PAIRWISE_BLOCK: usize = 64;

/// Sum in fixed index order: pairwise splitting above a small block size,
/// Neumaier-compensated accumulation inside each block. The result depends
/// only on the slice contents, never on how the slice was produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    let (s, c) = pairwise_parts(xs);
    s + c
}

/// (running sum, accumulated rounding error) for a slice.
fn pairwise_parts(xs: &[f64]) -> (f64, f64) {
    if xs.len() <= PAIRWISE_BLOCK {
        let mut sum = 0.0_f64;
        let mut comp = 0.0_f64;
        for &x in xs {
            let (t, e) = two_sum(sum, x);
            sum = t;
            comp += e;
        }
        return (sum, comp);
    }
    let mid = xs.len() / 2;
    let (s1, c1) = pairwise_parts(&xs[..mid]);
    let (s2, c2) = pairwise_parts(&xs[mid..]);
    let (s, e) = two_sum(s1, s2);
    (s, c1 + c2 + e)
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let e = if a.abs() >= b.abs() {
        (a - s) + b
    } else {
        (b - s) + a
    };
    (s, e)
}

/// Central-difference step for coordinate value `x`: cbrt(eps) scaled by max(1, |x|).
#[inline]
pub fn fd_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * x.abs().max(1.0)
}

/// Gauss–Legendre nodes and weights on [-1, 1], ascending nodes.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss–Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                let (_, d) = legendre_with_derivative(n, x);
                dp = d;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let nf = n as f64;
    let dp = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss–Legendre rule mapped to [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|xi| mid + half * xi).collect(),
        w.iter().map(|wi| half * wi).collect(),
    )
}

/// Abscissae of the 15-point Kronrod rule (non-negative half, descending).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
/// Weights of the embedded 7-point Gauss rule (nodes XGK[1], XGK[3], XGK[5], XGK[7]).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One Gauss–Kronrod node on [-1, 1]: abscissa, Kronrod weight and the
/// weight in the embedded Gauss rule (zero when the node is Kronrod-only).
#[derive(Debug, Clone, Copy)]
pub struct KronrodNode {
    pub x: f64,
    pub kronrod: f64,
    pub gauss: f64,
}

/// The 15 nodes of the G7/K15 pair in ascending order.
pub fn gauss_kronrod_15() -> [KronrodNode; 15] {
    let mut out = [KronrodNode {
        x: 0.0,
        kronrod: 0.0,
        gauss: 0.0,
    }; 15];
    for j in 0..7 {
        let gauss = if j % 2 == 1 { WG[j / 2] } else { 0.0 };
        out[j] = KronrodNode {
            x: -XGK[j],
            kronrod: WGK[j],
            gauss,
        };
        out[14 - j] = KronrodNode {
            x: XGK[j],
            kronrod: WGK[j],
            gauss,
        };
    }
    out[7] = KronrodNode {
        x: 0.0,
        kronrod: WGK[7],
        gauss: WG[3],
    };
    out
}

/// Adaptive G7/K15 quadrature of a scalar function on [a, b].
/// Returns (value, error estimate).
pub fn integrate_adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    match try_integrate_adaptive(&|x| Ok::<f64, std::convert::Infallible>(f(x)), a, b, tol) {
        Ok(v) => v,
        Err(e) => match e {},
    }
}

/// Panel budget for [`try_integrate_adaptive`].
pub const MAX_PANELS: usize = 4096;
/// Relative accuracy, against `∫|f|`, below which the G7/K15 difference is
/// dominated by rounding in the integrand.
pub const ROUNDING_FLOOR: f64 = 1e-13;

/// [`integrate_adaptive`] for integrands that can fail; the first error aborts.
///
/// Globally adaptive: the panel with the largest error is bisected until the
/// summed error is below `tol` or the rounding floor, or the panel budget is
/// spent. A panel already accurate to 1e-6 relative whose lineage has twice
/// failed to halve its error under bisection is treated as noise-limited and
/// not split further.
pub fn try_integrate_adaptive<E, F: Fn(f64) -> Result<f64, E>>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<(f64, f64), E> {
    struct Panel {
        a: f64,
        b: f64,
        k: f64,
        err: f64,
        abs: f64,
        stalls: u8,
    }
    let panel = |a: f64, b: f64, stalls: u8| -> Result<Panel, E> {
        let (k, g, abs) = try_kronrod_panel(f, a, b)?;
        Ok(Panel {
            a,
            b,
            k,
            err: (k - g).abs(),
            abs,
            stalls,
        })
    };
    if a == b {
        return Ok((0.0, 0.0));
    }
    let mut panels = vec![panel(a, b, 0)?];
    while panels.len() < MAX_PANELS {
        let total_err: f64 = panels.iter().map(|p| p.err).sum();
        let floor = ROUNDING_FLOOR * panels.iter().map(|p| p.abs).sum::<f64>();
        if total_err <= tol.max(floor) {
            break;
        }
        let Some(worst) = panels
            .iter()
            .enumerate()
            .filter(|(_, p)| p.stalls < 2)
            .max_by(|x, y| x.1.err.total_cmp(&y.1.err))
            .map(|(i, _)| i)
        else {
            break;
        };
        let p = &panels[worst];
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            panels[worst].stalls = u8::MAX;
            continue;
        }
        let (mut l, mut r) = (panel(p.a, mid, 0)?, panel(mid, p.b, 0)?);
        // Smooth integrands gain orders of magnitude per bisection once the
        // panel is nearly resolved; a nearly resolved panel that stalls is noise.
        let noisy = l.err + r.err >= 0.5 * p.err && p.err <= 1e-6 * p.abs;
        let stalls = if noisy { p.stalls + 1 } else { p.stalls };
        l.stalls = stalls;
        r.stalls = stalls;
        panels[worst] = l;
        panels.push(r);
    }
    panels.sort_by(|p, q| p.a.total_cmp(&q.a));
    let vals: Vec<f64> = panels.iter().map(|p| p.k).collect();
    let errs: Vec<f64> = panels.iter().map(|p| p.err).collect();
    Ok((pairwise_sum(&vals), pairwise_sum(&errs)))
}

/// K15, G7 and K15-of-|f| on one panel.
fn try_kronrod_panel<E, F: Fn(f64) -> Result<f64, E>>(
    f: &F,
    a: f64,
    b: f64,
) -> Result<(f64, f64, f64), E> {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut k = 0.0;
    let mut g = 0.0;
    let mut abs = 0.0;
    for node in gauss_kronrod_15() {
        let v = f(mid + half * node.x)?;
        k += node.kronrod * v;
        g += node.gauss * v;
        abs += node.kronrod * v.abs();
    }
    Ok((half * k, half * g, half.abs() * abs))
}

/// K15 and embedded G7 estimates on a single panel.
pub fn kronrod_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut k = 0.0;
    let mut g = 0.0;
    for node in gauss_kronrod_15() {
        let v = f(mid + half * node.x);
        k += node.kronrod * v;
        g += node.gauss * v;
    }
    (half * k, half * g)
}

/// Quintic smoothstep: 0 for u <= 0, 1 for u >= 1, C² in between.
#[inline]
pub fn smoothstep5(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
    }
}

/// Derivative of [`smoothstep5`].
#[inline]
pub fn smoothstep5_deriv(u: f64) -> f64 {
    if u <= 0.0 || u >= 1.0 {
        0.0
    } else {
        30.0 * u * u * (1.0 - u) * (1.0 - u)
    }
}

/// Maximum of [`smoothstep5_deriv`], attained at u = 1/2.
pub const SMOOTHSTEP5_MAX_SLOPE: f64 = 15.0 / 8.0;

/// Wrap `x` into [0, period).
#[inline]
pub fn wrap(x: f64, period: f64) -> f64 {
    let r = x.rem_euclid(period);
    if r >= period {
        0.0
    } else {
        r
    }
}

/// Signed difference `a - b` reduced into [-period/2, period/2].
#[inline]
pub fn periodic_delta(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).rem_euclid(period);
    if d > 0.5 * period {
        d - period
    } else {
        d
    }
}
