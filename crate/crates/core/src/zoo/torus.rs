use std::sync::Arc;

use nalgebra::DMatrix;

use crate::geometry::{Chart, ChartedManifold, Christoffel, VectorFieldDef};
use crate::numeric::periodic_delta;

/// Flat torus R²/(L·Z)², identity metric, both coordinates periodic with period `side`.
pub fn make_flat_torus(side: f64) -> ChartedManifold {
    assert!(side > 0.0, "torus side must be positive");
    let chart = Chart::new("torus", 2, Arc::new(|_| DMatrix::identity(2, 2)))
        .with_periods(vec![Some(side), Some(side)])
        .with_christoffel(Arc::new(|_| Christoffel::zeros(2)))
        .with_spray(Arc::new(|_, _| vec![0.0, 0.0]))
        .with_inner(Arc::new(|_, u, w| u[0] * w[0] + u[1] * w[1]));
    let dist = move |x: &[f64], y: &[f64]| {
        let dx = periodic_delta(x[0], y[0], side);
        let dy = periodic_delta(x[1], y[1], side);
        dx.hypot(dy)
    };
    ChartedManifold::new("torus", chart)
        .with_distance(Arc::new(dist))
        .with_radius(Arc::new(move |x| dist(x, &[0.0, 0.0])))
}

/// The constant field ∂_x.
pub fn constant_field(m: &ChartedManifold) -> VectorFieldDef {
    VectorFieldDef::new("const", m, 0, Arc::new(|_| vec![1.0, 0.0]))
        .with_jacobian(Arc::new(|_| DMatrix::zeros(2, 2)))
        .with_divergence(Arc::new(|_| 0.0))
        .with_closed_fx(Arc::new(|_, _| 0.0))
}

/// Divergence-free shear `(sin(2πy/L), cos(2πx/L))`.
pub fn wave_field(m: &ChartedManifold, side: f64) -> VectorFieldDef {
    let k = 2.0 * std::f64::consts::PI / side;
    VectorFieldDef::new(
        "wave",
        m,
        0,
        Arc::new(move |x| vec![(k * x[1]).sin(), (k * x[0]).cos()]),
    )
    .with_jacobian(Arc::new(move |x| {
        DMatrix::from_row_slice(
            2,
            2,
            &[0.0, k * (k * x[1]).cos(), -k * (k * x[0]).sin(), 0.0],
        )
    }))
    .with_divergence(Arc::new(|_| 0.0))
    .with_closed_fx(Arc::new(move |x, v| {
        v[0] * v[1] * (k * (k * x[1]).cos() - k * (k * x[0]).sin())
    }))
}
