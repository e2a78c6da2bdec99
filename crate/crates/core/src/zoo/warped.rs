//! Warped products `B ×_h F` with metric `g_B ⊕ h² g_F`, and lifts of
//! vector fields from either factor.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::hyperbolic::{self, height};
use super::profiles::WarpProfile;
use crate::error::{Error, Result};
use crate::geometry::{Chart, ChartedManifold, Christoffel, PointFn, RadialLayout, VectorFieldDef};

/// A warping function on the base chart with its covariant partials
/// `∂_a h` and its gradient `g_B^{ab} ∂_b h`.
#[derive(Clone)]
pub struct Warp {
    pub h: PointFn<f64>,
    pub dh: PointFn<Vec<f64>>,
    pub grad: PointFn<Vec<f64>>,
    /// Zero sets on the base where `h` loses smoothness.
    pub seams: Option<PointFn<Vec<f64>>>,
}

#[derive(Clone)]
pub struct WarpedProduct {
    pub manifold: ChartedManifold,
    pub base: ChartedManifold,
    pub fiber: ChartedManifold,
    pub warp: Warp,
}

impl WarpedProduct {
    pub fn base_dim(&self) -> usize {
        self.base.dim()
    }

    pub fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        x.split_at(self.base.dim())
    }
}

/// Builds `B ×_h F` on chart 0 of each factor. Base coordinates come first.
///
/// Christoffel symbols are closed-form when both factors supply them:
/// `Γ^a_αβ = −h ∇^a h (g_F)_αβ`, `Γ^α_aβ = (∂_a h / h) δ^α_β`, the rest
/// inherited from the factors.
pub fn make_warped_product(
    name: &str,
    base: &ChartedManifold,
    fiber: &ChartedManifold,
    warp: Warp,
) -> WarpedProduct {
    let nb = base.dim();
    let nf = fiber.dim();
    let n = nb + nf;
    let bc = base.charts()[0].clone();
    let fc = fiber.charts()[0].clone();

    let metric = {
        let (bc, fc, h) = (bc.clone(), fc.clone(), warp.h.clone());
        Arc::new(move |x: &[f64]| {
            let (xb, xf) = x.split_at(nb);
            let gb = bc.raw_metric(xb);
            let gf = fc.raw_metric(xf);
            let h2 = h(xb).powi(2);
            let mut g = DMatrix::zeros(n, n);
            g.view_mut((0, 0), (nb, nb)).copy_from(&gb);
            g.view_mut((nb, nb), (nf, nf)).copy_from(&(gf * h2));
            g
        })
    };
    let domain = {
        let (bd, fd) = (bc.domain_fn().clone(), fc.domain_fn().clone());
        Arc::new(move |x: &[f64]| {
            let (xb, xf) = x.split_at(nb);
            bd(xb) && fd(xf)
        })
    };
    let inner = {
        let (bc, fc, h) = (bc.clone(), fc.clone(), warp.h.clone());
        Arc::new(move |x: &[f64], u: &[f64], w: &[f64]| {
            let (xb, xf) = x.split_at(nb);
            let h2 = h(xb).powi(2);
            bc.inner_unchecked(xb, &u[..nb], &w[..nb])
                + h2 * fc.inner_unchecked(xf, &u[nb..], &w[nb..])
        })
    };
    let mut periods = bc.periods().to_vec();
    periods.extend_from_slice(fc.periods());
    let mut chart = Chart::new(format!("{}x{}", bc.name, fc.name), n, metric)
        .with_domain(domain)
        .with_periods(periods)
        .with_inner(inner);
    let density = {
        let (bc, fc, h) = (bc.clone(), fc.clone(), warp.h.clone());
        Arc::new(move |x: &[f64]| {
            let (xb, xf) = x.split_at(nb);
            bc.density_unchecked(xb) * h(xb).powi(nf as i32) * fc.density_unchecked(xf)
        })
    };
    chart = chart.with_volume_density(density);
    if let Some(seams) = warp.seams.clone() {
        chart = chart.with_seams(Arc::new(move |x: &[f64]| seams(&x[..nb])));
    }

    if let (Some(gb), Some(gf)) = (
        bc.closed_christoffel().cloned(),
        fc.closed_christoffel().cloned(),
    ) {
        let (fc2, w) = (fc.clone(), warp.clone());
        chart = chart.with_christoffel(Arc::new(move |x: &[f64]| {
            let (xb, xf) = x.split_at(nb);
            let (cb, cf) = (gb(xb), gf(xf));
            let gfm = fc2.raw_metric(xf);
            let (h, dh, grad) = ((w.h)(xb), (w.dh)(xb), (w.grad)(xb));
            let mut out = Christoffel::zeros(n);
            for k in 0..nb {
                for i in 0..nb {
                    for j in i..nb {
                        out.set(k, i, j, cb.get(k, i, j));
                    }
                }
                for al in 0..nf {
                    for be in al..nf {
                        out.set(k, nb + al, nb + be, -h * grad[k] * gfm[(al, be)]);
                    }
                }
            }
            for al in 0..nf {
                for a in 0..nb {
                    out.set(nb + al, a, nb + al, dh[a] / h);
                }
                for be in 0..nf {
                    for ga in be..nf {
                        out.set(nb + al, nb + be, nb + ga, cf.get(al, be, ga));
                    }
                }
            }
            out
        }));
        let (bc, fc, w) = (bc.clone(), fc.clone(), warp.clone());
        chart = chart.with_spray(Arc::new(move |x: &[f64], v: &[f64]| {
            let (xb, xf) = x.split_at(nb);
            let (vb, vf) = v.split_at(nb);
            let (h, dh, grad) = ((w.h)(xb), (w.dh)(xb), (w.grad)(xb));
            let mut ab = bc
                .closed_acceleration(xb, vb)
                .expect("base has closed Christoffels");
            let mut af = fc
                .closed_acceleration(xf, vf)
                .expect("fiber has closed Christoffels");
            let fiber_sq = fc.inner_unchecked(xf, vf, vf);
            for (a, acc) in ab.iter_mut().enumerate() {
                *acc += h * grad[a] * fiber_sq;
            }
            let rate: f64 = (0..nb).map(|a| dh[a] * vb[a]).sum::<f64>() / h;
            for (al, acc) in af.iter_mut().enumerate() {
                *acc -= 2.0 * rate * vf[al];
            }
            ab.extend(af);
            ab
        }));
    }

    let mut manifold = ChartedManifold::new(name, chart);
    if base.has_radius() {
        let b = base.clone();
        manifold = manifold.with_radius(Arc::new(move |x: &[f64]| {
            b.radius(&x[..nb]).unwrap_or(f64::NAN)
        }));
    }
    if let Some(layout) = base.radial_layout() {
        manifold = manifold.with_radial_layout(RadialLayout {
            block: layout.block.clone(),
            rho_of_r: layout.rho_of_r.clone(),
            drho_dr: layout.drho_dr.clone(),
        });
    }
    WarpedProduct {
        manifold,
        base: base.clone(),
        fiber: fiber.clone(),
        warp,
    }
}

/// The unit circle R/2πZ.
pub fn make_circle() -> ChartedManifold {
    let chart = Chart::new("angle", 1, Arc::new(|_| DMatrix::identity(1, 1)))
        .with_periods(vec![Some(2.0 * PI)])
        .with_christoffel(Arc::new(|_| Christoffel::zeros(1)))
        .with_spray(Arc::new(|_, _| vec![0.0]))
        .with_inner(Arc::new(|_, u, w| u[0] * w[0]));
    ChartedManifold::new("circle", chart)
}

/// The unit rotation field `∂_t` on the circle.
pub fn circle_generator(circle: &ChartedManifold) -> VectorFieldDef {
    VectorFieldDef::new("d/dt", circle, 0, Arc::new(|_| vec![1.0]))
        .with_jacobian(Arc::new(|_| DMatrix::zeros(1, 1)))
        .with_divergence(Arc::new(|_| 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LiftKind {
    Horizontal,
    Vertical,
}

/// A field on one factor lifted to the product.
#[derive(Debug, Clone)]
pub struct LiftedField {
    pub source: VectorFieldDef,
    pub kind: LiftKind,
    pub field: VectorFieldDef,
}

impl LiftedField {
    /// `(|dπ_own(lift) − source|_∞, |dπ_other(lift)|_∞)` at a product point.
    pub fn projection_residuals(&self, wp: &WarpedProduct, x: &[f64]) -> (f64, f64) {
        let nb = wp.base_dim();
        let lifted = self.field.eval(x);
        let (own_x, own, other) = match self.kind {
            LiftKind::Horizontal => (&x[..nb], &lifted[..nb], &lifted[nb..]),
            LiftKind::Vertical => (&x[nb..], &lifted[nb..], &lifted[..nb]),
        };
        let src = self.source.eval(own_x);
        let own_err = own
            .iter()
            .zip(&src)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let other_err = other.iter().map(|a| a.abs()).fold(0.0, f64::max);
        (own_err, other_err)
    }
}

/// Horizontal (base field) or vertical (fiber field) lift.
pub fn lift(wp: &WarpedProduct, field: &VectorFieldDef, kind: LiftKind) -> Result<LiftedField> {
    let factor = match kind {
        LiftKind::Horizontal => &wp.base,
        LiftKind::Vertical => &wp.fiber,
    };
    if field.manifold_name() != factor.name() || field.dim() != factor.dim() {
        return Err(Error::FactorMismatch {
            field: field.name().to_string(),
            expected: factor.name().to_string(),
            found: field.manifold_name().to_string(),
        });
    }
    let nb = wp.base_dim();
    let n = wp.manifold.dim();
    let (lo, hi) = match kind {
        LiftKind::Horizontal => (0, nb),
        LiftKind::Vertical => (nb, n),
    };
    let src = field.clone();
    let mut out = VectorFieldDef::new(
        field.name().to_string(),
        &wp.manifold,
        0,
        Arc::new(move |x: &[f64]| {
            let mut c = vec![0.0; n];
            c[lo..hi].copy_from_slice(&src.eval(&x[lo..hi]));
            c
        }),
    );
    if field.has_analytic_jacobian() {
        let src = field.clone();
        out = out.with_jacobian(Arc::new(move |x: &[f64]| {
            let mut j = DMatrix::zeros(n, n);
            let jf = src
                .analytic_jacobian(&x[lo..hi])
                .expect("analytic Jacobian");
            j.view_mut((lo, lo), (hi - lo, hi - lo)).copy_from(&jf);
            j
        }));
    }
    if field.has_closed_divergence() {
        let src = field.clone();
        let w = wp.warp.clone();
        let nf = n - nb;
        out = out.with_divergence(Arc::new(move |x: &[f64]| {
            let own = src
                .closed_divergence(&x[lo..hi])
                .expect("closed divergence");
            match kind {
                // div X̄ = div_B X + dim F · (Xh)/h
                LiftKind::Horizontal => {
                    let xb = &x[..nb];
                    let xv = src.eval(xb);
                    let dh = (w.dh)(xb);
                    let xh: f64 = xv.iter().zip(&dh).map(|(a, b)| a * b).sum();
                    own + nf as f64 * xh / (w.h)(xb)
                }
                LiftKind::Vertical => own,
            }
        }));
    }
    Ok(LiftedField {
        source: field.clone(),
        kind,
        field: out,
    })
}

/// `H² ×_h S¹` with `h = b(r)` for a radial profile `b`.
pub fn make_radial_warp(name: &str, profile: WarpProfile) -> WarpedProduct {
    let p = profile;
    let h: PointFn<f64> = Arc::new(move |x: &[f64]| p.b(x[0].hypot(x[1]).asinh()));
    let dh: PointFn<Vec<f64>> = Arc::new(move |x: &[f64]| {
        let rho = x[0].hypot(x[1]);
        if rho == 0.0 {
            return vec![0.0, 0.0];
        }
        let s = p.db(rho.asinh()) / (rho * height(x));
        vec![s * x[0], s * x[1]]
    });
    // g^{-1} = I + x xᵀ on the hyperboloid chart, so ∇h = b'(r) z x / ρ.
    let grad: PointFn<Vec<f64>> = Arc::new(move |x: &[f64]| {
        let rho = x[0].hypot(x[1]);
        if rho == 0.0 {
            return vec![0.0, 0.0];
        }
        let s = p.db(rho.asinh()) * height(x) / rho;
        vec![s * x[0], s * x[1]]
    });
    let seams: PointFn<Vec<f64>> = Arc::new(move |x: &[f64]| {
        let r = x[0].hypot(x[1]).asinh();
        p.joins().iter().map(|j| r - j).collect()
    });
    make_warped_product(
        name,
        &hyperbolic::make_hyperbolic_plane(),
        &make_circle(),
        Warp {
            h,
            dh,
            grad,
            seams: Some(seams),
        },
    )
}

/// `H² ×_{1/z²} S¹`, of total volume 4π².
pub fn make_example4(name: &str) -> WarpedProduct {
    let h: PointFn<f64> = Arc::new(|x: &[f64]| {
        let z = height(x);
        1.0 / (z * z)
    });
    let dh: PointFn<Vec<f64>> = Arc::new(|x: &[f64]| {
        let z2 = 1.0 + x[0] * x[0] + x[1] * x[1];
        let s = -2.0 / (z2 * z2);
        vec![s * x[0], s * x[1]]
    });
    let grad: PointFn<Vec<f64>> = Arc::new(|x: &[f64]| {
        let z2 = 1.0 + x[0] * x[0] + x[1] * x[1];
        vec![-2.0 * x[0] / z2, -2.0 * x[1] / z2]
    });
    make_warped_product(
        name,
        &hyperbolic::make_hyperbolic_plane(),
        &make_circle(),
        Warp {
            h,
            dh,
            grad,
            seams: None,
        },
    )
}

/// Closed form of `f_Z` for the horizontal lift of the conformal field on
/// `H² ×_{1/z²} S¹`: `z |v_B|² − (2ρ²/z) h² (v^t)²`.
pub fn example4_fz(x: &[f64], v: &[f64]) -> f64 {
    let z = height(x);
    let rho2 = x[0] * x[0] + x[1] * x[1];
    let h = 1.0 / (z * z);
    z * hyperbolic::inner(x, &v[..2], &v[..2]) - 2.0 * rho2 / z * h * h * v[2] * v[2]
}
