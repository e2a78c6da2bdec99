//! Numerical verification of divergence theorems on non-compact Riemannian
//! manifolds via the unit tangent bundle.
//!
//! The central object is `f_X(p, v) = g(∇_v X, v)` on the unit tangent
//! bundle `SM`. Its fiber integral at `p` equals `(ω_{n−1}/n)·div X(p)`, and
//! its integral along a geodesic orbit telescopes to a boundary term. The
//! crate computes both sides of these identities, plus the integrability and
//! recurrence diagnostics that decide whether `∫_M div X = 0`.
//!
//! Layout:
//! - [`geometry`]: charts, metrics, Christoffel symbols, `∇`, div, `f_X`.
//! - [`zoo`]: closed-form example manifolds and fields, by string id.
//! - [`flow`]: geodesic flow integration and orbit integrals.
//! - [`measure`]: fiber, base and unit-tangent-bundle integration.
//! - [`diagnostics`]: Karp annuli, cutoff estimate, ladders, recurrence, Hopf probes.
//! - [`potential`]: φ-Laplacian flux fields and the monotone form.

// Index loops mirror the tensor notation; `!(x > 0.0)` also rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod measure;
pub mod numeric;
pub mod potential;
pub mod zoo;

pub use error::{Error, Result};
pub use geometry::{
    Chart, ChartedManifold, Christoffel, RadialLayout, UnitTangentState, VectorFieldDef,
};
