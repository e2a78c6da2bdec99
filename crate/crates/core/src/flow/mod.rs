//! Geodesic flow on a chart: integration, orbit integrals, the path
//! identity `∫_0^T f_X(φ_s θ) ds = g(X, γ')|_0^T` and return detection.

mod dopri;
mod recurrence;
mod trajectory;

pub use dopri::{DenseSegment, FlowTolerances, IntegratorStats};
pub use recurrence::{first_return, proxy_sasaki_distance, ReturnEvent};
pub use trajectory::{
    birkhoff_integral, endpoint_bound_check, integrate_geodesic, path_integral_identity,
    path_integral_identity_residual, GeodesicTrajectory, PathIdentity, Truncation,
};
