//! The hyperbolic plane in the graph chart of the upper hyperboloid
//! `z = √(1+x²+y²)` in Minkowski space `dx² + dy² − dz²`.
//!
//! Far from the apex the chart metric has eigenvalues `1` (tangential) and
//! `1/z²` (radial), so evaluators here avoid forming `1 − x²/z²` directly.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::geometry::{Chart, ChartedManifold, Christoffel, RadialLayout, VectorFieldDef};

/// Height of the hyperboloid over chart point `x`.
#[inline]
pub fn height(x: &[f64]) -> f64 {
    1f64.hypot(x[0].hypot(x[1]))
}

/// Conditioned evaluation of `g_x(u, w) = (u·w + (x∧u)(x∧w)) / z²`.
#[inline]
pub fn inner(x: &[f64], u: &[f64], w: &[f64]) -> f64 {
    let z = height(x);
    let (a, b) = (x[0] / z, x[1] / z);
    (u[0] / z) * (w[0] / z)
        + (u[1] / z) * (w[1] / z)
        + (a * u[1] - b * u[0]) * (a * w[1] - b * w[0])
}

/// Hyperbolic distance between chart points.
pub fn distance(p: &[f64], q: &[f64]) -> f64 {
    let (zp, zq) = (height(p), height(q));
    let c = zp * zq - p[0] * q[0] - p[1] * q[1];
    if c > 1.5 {
        return c.acosh();
    }
    // |P − Q|² in the Lorentz form equals 4 sinh²(d/2).
    let (rp2, rq2) = (p[0] * p[0] + p[1] * p[1], q[0] * q[0] + q[1] * q[1]);
    let dz = (rp2 - rq2) / (zp + zq);
    let (dx, dy) = (p[0] - q[0], p[1] - q[1]);
    let l2 = (dx * dx + dy * dy - dz * dz).max(0.0);
    2.0 * (0.5 * l2.sqrt()).asinh()
}

pub fn make_hyperbolic_plane() -> ChartedManifold {
    let metric = Arc::new(|x: &[f64]| {
        let z = height(x);
        let (a, b) = (x[0] / z, x[1] / z);
        DMatrix::from_row_slice(2, 2, &[1.0 - a * a, -a * b, -a * b, 1.0 - b * b])
    });
    // Γ^k_ij = −x_k g_ij
    let gamma = Arc::new(|x: &[f64]| {
        let z = height(x);
        let (a, b) = (x[0] / z, x[1] / z);
        let g = [[1.0 - a * a, -a * b], [-a * b, 1.0 - b * b]];
        let mut out = Christoffel::zeros(2);
        for k in 0..2 {
            for i in 0..2 {
                for j in i..2 {
                    out.set(k, i, j, -x[k] * g[i][j]);
                }
            }
        }
        out
    });
    let spray = Arc::new(|x: &[f64], v: &[f64]| {
        let s = inner(x, v, v);
        vec![x[0] * s, x[1] * s]
    });
    let chart = Chart::new("hyperboloid-graph", 2, metric)
        .with_christoffel(gamma)
        .with_spray(spray)
        .with_inner(Arc::new(inner))
        .with_volume_density(Arc::new(|x: &[f64]| 1.0 / height(x)));
    // P(t) = cosh(st) P + sinh(st) V / s in R³; only the (x, y) part is kept.
    let oracle = Arc::new(|p: &[f64], v: &[f64], t: f64| {
        let speed = inner(p, v, v).sqrt();
        let (sh, ch) = ((speed * t).sinh(), (speed * t).cosh());
        let pos = vec![ch * p[0] + sh * v[0] / speed, ch * p[1] + sh * v[1] / speed];
        let vel = vec![speed * sh * p[0] + ch * v[0], speed * sh * p[1] + ch * v[1]];
        (pos, vel)
    });
    ChartedManifold::new("hyperbolic", chart)
        .with_radius(Arc::new(|x| x[0].hypot(x[1]).asinh()))
        .with_distance(Arc::new(distance))
        .with_convex_distance()
        .with_geodesic_oracle(oracle)
        .with_radial_layout(RadialLayout {
            block: vec![0, 1],
            rho_of_r: Arc::new(f64::sinh),
            drho_dr: Arc::new(f64::cosh),
        })
}

/// Tangential part of the conformal field `(xz, yz, z²−1)`: conformal factor `z`.
pub fn conformal_field(m: &ChartedManifold) -> VectorFieldDef {
    VectorFieldDef::new(
        "conformal",
        m,
        0,
        Arc::new(|x| {
            let z = height(x);
            vec![x[0] * z, x[1] * z]
        }),
    )
    .with_jacobian(Arc::new(|x| {
        let z = height(x);
        DMatrix::from_row_slice(
            2,
            2,
            &[
                z + x[0] * x[0] / z,
                x[0] * x[1] / z,
                x[0] * x[1] / z,
                z + x[1] * x[1] / z,
            ],
        )
    }))
    .with_divergence(Arc::new(|x| 2.0 * height(x)))
    .with_closed_fx(Arc::new(|x, v| height(x) * inner(x, v, v)))
}

/// Rotation about the apex, `(−y, x)`: a Killing field.
pub fn rotation_field(m: &ChartedManifold) -> VectorFieldDef {
    VectorFieldDef::new("rotation", m, 0, Arc::new(|x| vec![-x[1], x[0]]))
        .with_jacobian(Arc::new(|_| {
            DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])
        }))
        .with_divergence(Arc::new(|_| 0.0))
        .with_closed_fx(Arc::new(|_, _| 0.0))
}
