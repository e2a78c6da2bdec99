//! Surfaces of revolution `(x, t) ↦ (x, f(x) cos t, f(x) sin t)`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::geometry::{Chart, ChartedManifold, Christoffel, RadialLayout, RealFn, VectorFieldDef};
use crate::numeric::{integrate_adaptive, kronrod_panel};

/// An even, positive profile `f` with its first two derivatives.
#[derive(Clone)]
pub struct RevolutionProfile {
    pub name: String,
    pub f: RealFn,
    pub df: RealFn,
    pub d2f: RealFn,
}

impl RevolutionProfile {
    /// `f(x) = 1/(1+x²)`.
    pub fn witch() -> Self {
        Self {
            name: "1/(1+x^2)".into(),
            f: Arc::new(|x| 1.0 / (1.0 + x * x)),
            df: Arc::new(|x| -2.0 * x / (1.0 + x * x).powi(2)),
            d2f: Arc::new(|x| (6.0 * x * x - 2.0) / (1.0 + x * x).powi(3)),
        }
    }

    /// `f ≡ 1`: the round cylinder.
    pub fn cylinder() -> Self {
        Self {
            name: "1".into(),
            f: Arc::new(|_| 1.0),
            df: Arc::new(|_| 0.0),
            d2f: Arc::new(|_| 0.0),
        }
    }
}

/// Meridian arclength `s(x) = ∫_0^x √(1+f'²)`, stored as `x + excess(x)`.
///
/// The excess is tabulated on `[0, X_TABLE]` and interpolated with cubic
/// Hermite polynomials using its exact derivative; beyond the table it is
/// integrated on demand.
#[derive(Clone)]
pub struct MeridianArclength {
    df: RealFn,
    step: f64,
    excess: Vec<f64>,
}

const X_TABLE: f64 = 20.0;
const TABLE_NODES: usize = 4000;

impl MeridianArclength {
    pub fn new(profile: &RevolutionProfile) -> Self {
        let df = profile.df.clone();
        let step = X_TABLE / TABLE_NODES as f64;
        let mut excess = Vec::with_capacity(TABLE_NODES + 1);
        excess.push(0.0);
        let mut acc = 0.0;
        for i in 0..TABLE_NODES {
            let a = i as f64 * step;
            let (k, _) = kronrod_panel(&|x| excess_density(&df, x), a, a + step);
            acc += k;
            excess.push(acc);
        }
        Self { df, step, excess }
    }

    /// Signed arclength from x = 0.
    pub fn s(&self, x: f64) -> f64 {
        let ax = x.abs();
        let e = if ax <= X_TABLE {
            let i = ((ax / self.step) as usize).min(TABLE_NODES - 1);
            let x0 = i as f64 * self.step;
            let u = (ax - x0) / self.step;
            let (p0, p1) = (self.excess[i], self.excess[i + 1]);
            let m0 = excess_density(&self.df, x0) * self.step;
            let m1 = excess_density(&self.df, x0 + self.step) * self.step;
            let (u2, u3) = (u * u, u * u * u);
            (2.0 * u3 - 3.0 * u2 + 1.0) * p0
                + (u3 - 2.0 * u2 + u) * m0
                + (-2.0 * u3 + 3.0 * u2) * p1
                + (u3 - u2) * m1
        } else {
            let tail = integrate_adaptive(&|t| excess_density(&self.df, t), X_TABLE, ax, 1e-15).0;
            self.excess[TABLE_NODES] + tail
        };
        (ax + e).copysign(x)
    }

    /// `ds/dx`.
    pub fn ds(&self, x: f64) -> f64 {
        let d = (self.df)(x);
        (1.0 + d * d).sqrt()
    }

    /// The non-negative `x` with `s(x) = r`.
    pub fn inverse(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        // s(x) ≥ x, so Newton from x = r approaches from the right.
        let mut x = r;
        for _ in 0..60 {
            let dx = (self.s(x) - r) / self.ds(x);
            x -= dx;
            if dx.abs() <= 1e-15 * x.max(1.0) {
                break;
            }
        }
        x.max(0.0)
    }
}

fn excess_density(df: &RealFn, x: f64) -> f64 {
    let d = df(x);
    // √(1+d²) - 1 without cancellation
    d * d / ((1.0 + d * d).sqrt() + 1.0)
}

/// A surface of revolution together with its profile data.
#[derive(Clone)]
pub struct Revolution {
    pub manifold: ChartedManifold,
    pub profile: RevolutionProfile,
    pub arclength: Arc<MeridianArclength>,
}

impl Revolution {
    /// Ambient embedding `(x, t) ↦ (x, f cos t, f sin t)`.
    pub fn ambient(&self, p: &[f64]) -> [f64; 3] {
        let f = (self.profile.f)(p[0]);
        [p[0], f * p[1].cos(), f * p[1].sin()]
    }

    /// Pushforward of a chart tangent vector at `p` into R³.
    pub fn ambient_vector(&self, p: &[f64], v: &[f64]) -> [f64; 3] {
        let f = (self.profile.f)(p[0]);
        let df = (self.profile.df)(p[0]);
        let (s, c) = p[1].sin_cos();
        [
            v[0],
            v[0] * df * c - v[1] * f * s,
            v[0] * df * s + v[1] * f * c,
        ]
    }
}

/// Builds the surface with chart `(x, t)`, `t` periodic 2π, metric `diag(1+f'², f²)`,
/// and radius surrogate the meridian arclength `|s(x)|`.
pub fn make_surface_of_revolution(name: &str, profile: RevolutionProfile) -> Revolution {
    let (f, df, d2f) = (profile.f.clone(), profile.df.clone(), profile.d2f.clone());
    let metric = {
        let (f, df) = (f.clone(), df.clone());
        Arc::new(move |x: &[f64]| {
            let (fx, dfx) = (f(x[0]), df(x[0]));
            DMatrix::from_row_slice(2, 2, &[1.0 + dfx * dfx, 0.0, 0.0, fx * fx])
        })
    };
    let gamma = {
        let (f, df, d2f) = (f.clone(), df.clone(), d2f.clone());
        move |x: &[f64]| {
            let (fx, dfx, d2fx) = (f(x[0]), df(x[0]), d2f(x[0]));
            let e = 1.0 + dfx * dfx;
            let mut g = Christoffel::zeros(2);
            g.set(0, 0, 0, dfx * d2fx / e);
            g.set(0, 1, 1, -fx * dfx / e);
            g.set(1, 0, 1, dfx / fx);
            g
        }
    };
    let inner = {
        let (f, df) = (f.clone(), df.clone());
        Arc::new(move |x: &[f64], u: &[f64], w: &[f64]| {
            let (fx, dfx) = (f(x[0]), df(x[0]));
            (1.0 + dfx * dfx) * u[0] * w[0] + fx * fx * u[1] * w[1]
        })
    };
    let chart = Chart::new("meridian-angle", 2, metric)
        .with_periods(vec![None, Some(2.0 * PI)])
        .with_christoffel(Arc::new(gamma))
        .with_inner(inner);
    let arclength = Arc::new(MeridianArclength::new(&profile));
    let radius = {
        let s = arclength.clone();
        Arc::new(move |x: &[f64]| s.s(x[0]).abs())
    };
    let layout = {
        let (s1, s2) = (arclength.clone(), arclength.clone());
        RadialLayout {
            block: vec![0],
            rho_of_r: Arc::new(move |r| s1.inverse(r)),
            drho_dr: Arc::new(move |r| 1.0 / s2.ds(s2.inverse(r))),
        }
    };
    let manifold = ChartedManifold::new(name, chart)
        .with_radius(radius)
        .with_radial_layout(layout);
    Revolution {
        manifold,
        profile,
        arclength,
    }
}

/// `W = x(1+x²) ∂_t`, the ambient field `x(1+x²)(0, -z, y)` restricted to the surface.
pub fn w_field(rev: &Revolution) -> VectorFieldDef {
    let f = rev.profile.f.clone();
    VectorFieldDef::new(
        "W",
        &rev.manifold,
        0,
        Arc::new(|x| vec![0.0, x[0] * (1.0 + x[0] * x[0])]),
    )
    .with_jacobian(Arc::new(|x| {
        DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0 + 3.0 * x[0] * x[0], 0.0])
    }))
    .with_divergence(Arc::new(|_| 0.0))
    .with_closed_fx(Arc::new(move |x, v| {
        let fx = f(x[0]);
        (1.0 + 3.0 * x[0] * x[0]) * v[0] * v[1] * fx * fx
    }))
}
