//! φ-Laplacians `L_φ(u) = div(|grad u|^{−1} φ(|grad u|) grad u)`, the
//! monotone form `h(ξ, η)` and the comparison field `Z = α∘(u−v)·(X−Y)`.
//!
//! Scalar functions come with their coordinate differential; second
//! derivatives are finite differences of the flux field only.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ChartedManifold, PointFn, VectorFieldDef};

/// Below this `|grad u|` the flux of a `φ` with `φ(t)/t → ∞` is not differentiable.
pub const DEGENERATE_GRADIENT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PhiProfile {
    /// `φ(t) = t^{p−1}`, the p-Laplacian.
    Power { p: f64 },
    /// `φ(t) = t/√(1+t²)`, the mean curvature operator.
    MeanCurvature,
}

impl PhiProfile {
    /// The profiles every property sweep runs over.
    pub fn shipped() -> Vec<PhiProfile> {
        vec![
            PhiProfile::Power { p: 1.5 },
            PhiProfile::Power { p: 2.0 },
            PhiProfile::Power { p: 3.0 },
            PhiProfile::Power { p: 4.0 },
            PhiProfile::MeanCurvature,
        ]
    }

    pub fn name(&self) -> String {
        match self {
            PhiProfile::Power { p } => format!("p-laplacian(p={p})"),
            PhiProfile::MeanCurvature => "mean-curvature".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PhiProfile::Power { p } if !(*p > 1.0 && p.is_finite()) => Err(Error::Invalid(
                format!("p-Laplacian needs 1 < p < ∞, got {p}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn phi(&self, t: f64) -> f64 {
        match self {
            PhiProfile::Power { p } => {
                if t == 0.0 {
                    0.0
                } else {
                    t.powf(p - 1.0)
                }
            }
            PhiProfile::MeanCurvature => t / (1.0 + t * t).sqrt(),
        }
    }

    pub fn dphi(&self, t: f64) -> f64 {
        match self {
            PhiProfile::Power { p } => (p - 1.0) * t.powf(p - 2.0),
            PhiProfile::MeanCurvature => (1.0 + t * t).powf(-1.5),
        }
    }

    /// `φ(t)/t`, with its limit at 0 (infinite when `φ(t)/t` is unbounded).
    pub fn ratio(&self, t: f64) -> f64 {
        if t > 0.0 {
            return self.phi(t) / t;
        }
        match self {
            PhiProfile::Power { p } if *p > 2.0 => 0.0,
            PhiProfile::Power { p } if *p == 2.0 => 1.0,
            PhiProfile::Power { .. } => f64::INFINITY,
            PhiProfile::MeanCurvature => 1.0,
        }
    }

    /// Structural constants `(A, r)` with `φ(t) ≤ A t^{r−1}`.
    pub fn growth(&self) -> (f64, f64) {
        match self {
            PhiProfile::Power { p } => (1.0, *p),
            PhiProfile::MeanCurvature => (1.0, 2.0),
        }
    }

    /// Whether the flux is differentiable where `grad u = 0`.
    pub fn smooth_at_zero(&self) -> bool {
        match self {
            PhiProfile::Power { p } => *p >= 2.0,
            PhiProfile::MeanCurvature => true,
        }
    }
}

/// `a(ξ) = |ξ|^{−1} φ(|ξ|) ξ` under the norm `|ξ|² = inner(ξ, ξ)`.
fn flux_vector(phi: &PhiProfile, xi: &[f64], norm: f64) -> Vec<f64> {
    if norm == 0.0 {
        return vec![0.0; xi.len()];
    }
    let s = phi.ratio(norm);
    xi.iter().map(|c| s * c).collect()
}

/// `h(ξ, η) = ⟨a(ξ) − a(η), ξ − η⟩` for an arbitrary scalar product.
pub fn monotone_form_with<I>(phi: &PhiProfile, inner: I, xi: &[f64], eta: &[f64]) -> f64
where
    I: Fn(&[f64], &[f64]) -> f64,
{
    let ax = flux_vector(phi, xi, inner(xi, xi).max(0.0).sqrt());
    let ay = flux_vector(phi, eta, inner(eta, eta).max(0.0).sqrt());
    let da: Vec<f64> = ax.iter().zip(&ay).map(|(a, b)| a - b).collect();
    let d: Vec<f64> = xi.iter().zip(eta).map(|(a, b)| a - b).collect();
    inner(&da, &d)
}

/// [`monotone_form_with`] for the Euclidean product.
pub fn monotone_form(phi: &PhiProfile, xi: &[f64], eta: &[f64]) -> f64 {
    monotone_form_with(
        phi,
        |a, b| a.iter().zip(b).map(|(x, y)| x * y).sum(),
        xi,
        eta,
    )
}

/// `a·b^{r−1}` against its Young bound `a^r/r + (r−1) b^r/r`, for `a, b ≥ 0`, `r > 1`.
pub fn young_bound(a: f64, b: f64, r: f64) -> (f64, f64) {
    (
        a * b.powf(r - 1.0),
        a.powf(r) / r + (r - 1.0) * b.powf(r) / r,
    )
}

/// A scalar function on one chart with its coordinate differential `∂_i u`.
#[derive(Clone)]
pub struct ScalarFn {
    pub name: String,
    pub chart: usize,
    pub value: PointFn<f64>,
    pub differential: PointFn<Vec<f64>>,
}

impl std::fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarFn")
            .field("name", &self.name)
            .field("chart", &self.chart)
            .finish()
    }
}

impl ScalarFn {
    pub fn new(
        name: impl Into<String>,
        chart: usize,
        value: PointFn<f64>,
        differential: PointFn<Vec<f64>>,
    ) -> Self {
        Self {
            name: name.into(),
            chart,
            value,
            differential,
        }
    }

    pub fn constant(c: f64, dim: usize) -> Self {
        Self::new(
            format!("{c}"),
            0,
            Arc::new(move |_| c),
            Arc::new(move |_| vec![0.0; dim]),
        )
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }
}

/// `grad u = g^{−1} du` and `|grad u|`.
pub fn gradient(m: &ChartedManifold, u: &ScalarFn, x: &[f64]) -> Result<(Vec<f64>, f64)> {
    let du = (u.differential)(x);
    let grad = m.raise(u.chart, x, &du)?;
    let norm: f64 = du.iter().zip(&grad).map(|(a, b)| a * b).sum();
    Ok((grad, norm.max(0.0).sqrt()))
}

/// `Y = |grad u|^{−1} φ(|grad u|) grad u`, zero where `grad u = 0`.
/// Components are NaN where the metric cannot be evaluated.
pub fn phi_flux_field(m: &ChartedManifold, u: &ScalarFn, phi: &PhiProfile) -> VectorFieldDef {
    let mm = m.clone();
    let uu = u.clone();
    let phi = *phi;
    let n = m.dim();
    VectorFieldDef::new(
        format!("flux[{}; {}]", u.name, phi.name()),
        m,
        u.chart,
        Arc::new(move |x: &[f64]| match gradient(&mm, &uu, x) {
            Ok((g, norm)) => flux_vector(&phi, &g, norm),
            Err(_) => vec![f64::NAN; n],
        }),
    )
}

/// Result of [`phi_laplacian`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhiLaplacian {
    pub value: f64,
    pub grad_norm: f64,
}

/// `L_φ(u)(x)`: the trace of the connection applied to the flux field.
/// Points with `|grad u| ≤` [`DEGENERATE_GRADIENT`] are rejected when the
/// flux is not differentiable there.
pub fn phi_laplacian(
    m: &ChartedManifold,
    u: &ScalarFn,
    phi: &PhiProfile,
    x: &[f64],
) -> Result<PhiLaplacian> {
    phi.validate()?;
    let (_, grad_norm) = gradient(m, u, x)?;
    if !phi.smooth_at_zero() && grad_norm <= DEGENERATE_GRADIENT {
        return Err(Error::DegenerateFlux {
            point: x.to_vec(),
            grad_norm,
        });
    }
    let y = phi_flux_field(m, u, phi);
    Ok(PhiLaplacian {
        value: m.divergence(&y, x)?,
        grad_norm,
    })
}

/// `Δu = (1/√G) ∂_i(√G g^{ij} ∂_j u)` by the coordinate formula.
pub fn laplace_beltrami(m: &ChartedManifold, u: &ScalarFn, x: &[f64]) -> Result<f64> {
    let mm = m.clone();
    let uu = u.clone();
    let n = m.dim();
    let grad = VectorFieldDef::new(
        format!("grad[{}]", u.name),
        m,
        u.chart,
        Arc::new(move |x: &[f64]| {
            gradient(&mm, &uu, x)
                .map(|g| g.0)
                .unwrap_or_else(|_| vec![f64::NAN; n])
        }),
    );
    m.divergence_coordinate(&grad, x)
}

/// `α(t) = S((t − A + 1)/2)` with the quintic smoothstep `S`: 0 below
/// `A − 1`, 1 above `A + 1`, increasing between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alpha {
    pub center: f64,
}

impl Alpha {
    pub fn value(&self, t: f64) -> f64 {
        let s = ((t - self.center + 1.0) / 2.0).clamp(0.0, 1.0);
        s * s * s * (10.0 + s * (6.0 * s - 15.0))
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let s = ((t - self.center + 1.0) / 2.0).clamp(0.0, 1.0);
        15.0 * s * s * (1.0 - s) * (1.0 - s)
    }
}

/// `Z = α∘(u−v)·(X−Y)` with `X`, `Y` the flux fields of `u`, `v`.
pub fn comparison_field(
    m: &ChartedManifold,
    u: &ScalarFn,
    v: &ScalarFn,
    phi: &PhiProfile,
    alpha: Alpha,
) -> Result<VectorFieldDef> {
    if u.chart != v.chart {
        return Err(Error::Invalid("u and v must live on the same chart".into()));
    }
    let x = phi_flux_field(m, u, phi);
    let y = phi_flux_field(m, v, phi);
    let (uu, vv) = (u.clone(), v.clone());
    Ok(VectorFieldDef::new(
        format!("comparison[{}, {}]", u.name, v.name),
        m,
        u.chart,
        Arc::new(move |p: &[f64]| {
            let a = alpha.value(uu.eval(p) - vv.eval(p));
            x.eval(p)
                .iter()
                .zip(y.eval(p))
                .map(|(s, t)| a * (s - t))
                .collect()
        }),
    ))
}

/// Both sides of `div Z = α'∘(u−v)·h(grad u, grad v) + α∘(u−v)·(L_φ u − L_φ v)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonIdentity {
    pub divergence: f64,
    pub expansion: f64,
    pub monotone_term: f64,
}

pub fn comparison_identity(
    m: &ChartedManifold,
    u: &ScalarFn,
    v: &ScalarFn,
    phi: &PhiProfile,
    alpha: Alpha,
    x: &[f64],
) -> Result<ComparisonIdentity> {
    let z = comparison_field(m, u, v, phi, alpha)?;
    let divergence = m.divergence(&z, x)?;
    let (gu, _) = gradient(m, u, x)?;
    let (gv, _) = gradient(m, v, x)?;
    let g = m.metric_at(u.chart, x)?;
    let h = monotone_form_with(phi, |a, b| crate::geometry::quadratic(&g, a, b), &gu, &gv);
    let d = u.eval(x) - v.eval(x);
    let monotone_term = alpha.derivative(d) * h;
    let lu = phi_laplacian(m, u, phi, x)?.value;
    let lv = phi_laplacian(m, v, phi, x)?.value;
    Ok(ComparisonIdentity {
        divergence,
        expansion: monotone_term + alpha.value(d) * (lu - lv),
        monotone_term,
    })
}
