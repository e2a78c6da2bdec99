//! Chart-based Riemannian primitives.
//!
//! A [`ChartedManifold`] carries one or more non-overlapping coordinate
//! charts, each with a metric evaluator `x ↦ g_ij(x)`. Everything else
//! (Christoffel symbols, covariant derivatives, divergence and the
//! unit-tangent-bundle function `f_X(p, v) = g(∇_v X, v)`) is derived from
//! the metric, with closed forms used where a construction supplies them.
//!
//! Index conventions: `Γ^k_ij` is stored as `get(k, i, j)`; the Jacobian of
//! a vector field is `J[(k, i)] = ∂_i X^k`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::numeric::fd_step;

pub type PointFn<T> = Arc<dyn Fn(&[f64]) -> T + Send + Sync>;
pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// `(x, u, w) ↦ g_x(u, w)`.
pub type InnerFn = Arc<dyn Fn(&[f64], &[f64], &[f64]) -> f64 + Send + Sync>;
pub type DistanceFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
/// `(p, v, t) ↦ (γ(t), γ'(t))` in chart coordinates.
pub type GeodesicOracle = Arc<dyn Fn(&[f64], &[f64], f64) -> (Vec<f64>, Vec<f64>) + Send + Sync>;
/// `(x, v) ↦ a`, the geodesic acceleration `a^k = -Γ^k_ij v^i v^j`.
pub type SprayFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
/// `(x, v) ↦ f_X(x, v)`.
pub type TangentFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Tolerance on |g_ij - g_ji|, relative to max(1, max|g|).
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Tolerance on |g(v,v) - 1| when constructing a [`UnitTangentState`].
pub const UNIT_TOL: f64 = 1e-10;

/// Christoffel symbols of the second kind at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    dim: usize,
    data: Vec<f64>,
}

impl Christoffel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.dim + i) * self.dim + j]
    }

    /// Sets `Γ^k_ij` and `Γ^k_ji` together.
    #[inline]
    pub fn set(&mut self, k: usize, i: usize, j: usize, value: f64) {
        let n = self.dim;
        self.data[(k * n + i) * n + j] = value;
        self.data[(k * n + j) * n + i] = value;
    }

    /// `Γ^k_ij u^i w^j` for every k.
    pub fn contract(&self, u: &[f64], w: &[f64]) -> Vec<f64> {
        let n = self.dim;
        (0..n)
            .map(|k| {
                let mut s = 0.0;
                for i in 0..n {
                    if u[i] == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        s += self.get(k, i, j) * u[i] * w[j];
                    }
                }
                s
            })
            .collect()
    }

    pub fn max_abs_diff(&self, other: &Christoffel) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Largest |Γ^k_ij - Γ^k_ji|.
    pub fn asymmetry(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0_f64;
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    worst = worst.max((self.get(k, i, j) - self.get(k, j, i)).abs());
                }
            }
        }
        worst
    }
}

/// A coordinate chart with its metric evaluator.
#[derive(Clone)]
pub struct Chart {
    pub name: String,
    dim: usize,
    domain: PointFn<bool>,
    metric: PointFn<DMatrix<f64>>,
    periods: Vec<Option<f64>>,
    christoffel: Option<PointFn<Christoffel>>,
    inner: Option<InnerFn>,
    spray: Option<SprayFn>,
    seams: Option<PointFn<Vec<f64>>>,
    density: Option<PointFn<f64>>,
}

impl Chart {
    /// A chart covering all of R^dim until restricted with [`Chart::with_domain`].
    pub fn new(name: impl Into<String>, dim: usize, metric: PointFn<DMatrix<f64>>) -> Self {
        Self {
            name: name.into(),
            dim,
            domain: Arc::new(|_| true),
            metric,
            periods: vec![None; dim],
            christoffel: None,
            inner: None,
            spray: None,
            seams: None,
            density: None,
        }
    }

    pub fn with_domain(mut self, domain: PointFn<bool>) -> Self {
        self.domain = domain;
        self
    }

    pub fn with_periods(mut self, periods: Vec<Option<f64>>) -> Self {
        assert_eq!(periods.len(), self.dim);
        assert!(periods.iter().flatten().all(|p| *p > 0.0));
        self.periods = periods;
        self
    }

    pub fn with_christoffel(mut self, christoffel: PointFn<Christoffel>) -> Self {
        self.christoffel = Some(christoffel);
        self
    }

    /// Supplies an inner-product evaluator that is better conditioned than
    /// `uᵀ g w` (used for speed-drift bookkeeping far out in a chart).
    pub fn with_inner(mut self, inner: InnerFn) -> Self {
        self.inner = Some(inner);
        self
    }

    /// Supplies the geodesic acceleration directly, for charts where
    /// contracting Christoffel symbols loses precision.
    pub fn with_spray(mut self, spray: SprayFn) -> Self {
        self.spray = Some(spray);
        self
    }

    /// Closed-form `√det g`, for charts whose metric becomes too
    /// ill-conditioned for a Cholesky factorization far out.
    pub fn with_volume_density(mut self, density: PointFn<f64>) -> Self {
        self.density = Some(density);
        self
    }

    /// `√det g` from the closed form when present, else from a Cholesky
    /// factorization (NaN when that fails).
    pub(crate) fn density_unchecked(&self, x: &[f64]) -> f64 {
        match &self.density {
            Some(d) => d(x),
            None => (self.metric)(x).cholesky().map_or(f64::NAN, |c| {
                c.l_dirty().diagonal().iter().product::<f64>().abs()
            }),
        }
    }

    /// Functions whose zero sets are hypersurfaces where the metric is only
    /// finitely differentiable. Geodesic steps are ended on them.
    pub fn with_seams(mut self, seams: PointFn<Vec<f64>>) -> Self {
        self.seams = Some(seams);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub(crate) fn seams(&self) -> Option<&PointFn<Vec<f64>>> {
        self.seams.as_ref()
    }

    pub fn periods(&self) -> &[Option<f64>] {
        &self.periods
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim && x.iter().all(|v| v.is_finite()) && (self.domain)(x)
    }

    pub fn has_closed_form_christoffel(&self) -> bool {
        self.christoffel.is_some()
    }

    pub(crate) fn raw_metric(&self, x: &[f64]) -> DMatrix<f64> {
        (self.metric)(x)
    }

    pub(crate) fn closed_christoffel(&self) -> Option<&PointFn<Christoffel>> {
        self.christoffel.as_ref()
    }

    pub(crate) fn inner_fn(&self) -> Option<&InnerFn> {
        self.inner.as_ref()
    }

    /// `g_x(u, w)` without domain or definiteness checks.
    pub(crate) fn inner_unchecked(&self, x: &[f64], u: &[f64], w: &[f64]) -> f64 {
        match &self.inner {
            Some(f) => f(x, u, w),
            None => quadratic(&(self.metric)(x), u, w),
        }
    }

    /// Closed-form geodesic acceleration, if the chart has a spray or closed Christoffels.
    pub(crate) fn closed_acceleration(&self, x: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        if let Some(spray) = &self.spray {
            return Some(spray(x, v));
        }
        self.christoffel
            .as_ref()
            .map(|g| g(x).contract(v, v).into_iter().map(|a| -a).collect())
    }

    pub(crate) fn domain_fn(&self) -> &PointFn<bool> {
        &self.domain
    }
}

impl fmt::Debug for Chart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Chart")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("periods", &self.periods)
            .field("closed_form_christoffel", &self.christoffel.is_some())
            .finish()
    }
}

/// How balls and annuli of the radius surrogate sit inside chart 0.
///
/// The chart coordinates listed in `block` (one or two of them) form a
/// radial block: the region `{r(p) ≤ R}` is `{|x_block| ≤ rho_of_r(R)}` times
/// the full period of every remaining coordinate. All non-block coordinates
/// must be periodic.
#[derive(Clone)]
pub struct RadialLayout {
    pub block: Vec<usize>,
    pub rho_of_r: RealFn,
    pub drho_dr: RealFn,
}

impl fmt::Debug for RadialLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RadialLayout")
            .field("block", &self.block)
            .finish()
    }
}

/// A Riemannian manifold described by non-overlapping charts plus optional
/// closed-form extras used as oracles and by the diagnostics.
#[derive(Clone)]
pub struct ChartedManifold {
    name: String,
    dim: usize,
    charts: Vec<Chart>,
    radius: Option<PointFn<f64>>,
    distance: Option<DistanceFn>,
    geodesic: Option<GeodesicOracle>,
    radial: Option<RadialLayout>,
    convex_distance: bool,
}

impl fmt::Debug for ChartedManifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChartedManifold")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("charts", &self.charts)
            .field("radius", &self.radius.is_some())
            .field("distance", &self.distance.is_some())
            .field("geodesic_oracle", &self.geodesic.is_some())
            .field("radial", &self.radial)
            .field("convex_distance", &self.convex_distance)
            .finish()
    }
}

impl ChartedManifold {
    pub fn new(name: impl Into<String>, chart: Chart) -> Self {
        Self {
            name: name.into(),
            dim: chart.dim,
            charts: vec![chart],
            radius: None,
            distance: None,
            geodesic: None,
            radial: None,
            convex_distance: false,
        }
    }

    pub fn with_chart(mut self, chart: Chart) -> Self {
        assert_eq!(
            chart.dim, self.dim,
            "all charts share the manifold dimension"
        );
        self.charts.push(chart);
        self
    }

    /// Radius surrogate `r(p)`: a 1-Lipschitz distance-from-basepoint proxy on chart 0.
    pub fn with_radius(mut self, radius: PointFn<f64>) -> Self {
        self.radius = Some(radius);
        self
    }

    /// Exact Riemannian distance on chart 0.
    pub fn with_distance(mut self, distance: DistanceFn) -> Self {
        self.distance = Some(distance);
        self
    }

    /// Declares `t ↦ d(p, γ(t))` convex along every geodesic, as on a
    /// complete simply connected manifold of nonpositive curvature.
    /// Requires an exact distance.
    pub fn with_convex_distance(mut self) -> Self {
        assert!(
            self.distance.is_some(),
            "convexity refers to the exact distance"
        );
        self.convex_distance = true;
        self
    }

    pub fn has_convex_distance(&self) -> bool {
        self.convex_distance
    }

    pub fn with_geodesic_oracle(mut self, oracle: GeodesicOracle) -> Self {
        self.geodesic = Some(oracle);
        self
    }

    pub fn with_radial_layout(mut self, layout: RadialLayout) -> Self {
        let chart = &self.charts[0];
        assert!(!layout.block.is_empty() && layout.block.len() <= 2);
        for c in 0..self.dim {
            if !layout.block.contains(&c) {
                assert!(
                    chart.periods[c].is_some(),
                    "non-radial coordinate {c} must be periodic"
                );
            }
        }
        self.radial = Some(layout);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn charts(&self) -> &[Chart] {
        &self.charts
    }

    pub fn chart(&self, id: usize) -> Result<&Chart> {
        self.charts.get(id).ok_or(Error::NoSuchChart(id))
    }

    pub fn radial_layout(&self) -> Option<&RadialLayout> {
        self.radial.as_ref()
    }

    pub fn has_radius(&self) -> bool {
        self.radius.is_some()
    }

    pub fn has_exact_distance(&self) -> bool {
        self.distance.is_some()
    }

    pub fn geodesic_oracle(&self) -> Option<&GeodesicOracle> {
        self.geodesic.as_ref()
    }

    pub fn radius(&self, x: &[f64]) -> Result<f64> {
        let r = self
            .radius
            .as_ref()
            .ok_or_else(|| Error::NoRadius(self.name.clone()))?;
        Ok(r(x))
    }

    /// Exact distance when the manifold provides one.
    pub fn exact_distance(&self, x: &[f64], y: &[f64]) -> Option<f64> {
        self.distance.as_ref().map(|d| d(x, y))
    }

    /// Chart-Euclidean distance with periodic coordinates reduced to their
    /// shortest representative.
    pub fn chart_distance(&self, chart: usize, x: &[f64], y: &[f64]) -> Result<f64> {
        let c = self.chart(chart)?;
        let mut s = 0.0;
        for i in 0..self.dim {
            let d = match c.periods[i] {
                Some(p) => crate::numeric::periodic_delta(x[i], y[i], p),
                None => x[i] - y[i],
            };
            s += d * d;
        }
        Ok(s.sqrt())
    }

    /// `√g_m(Δ, Δ)` with `Δ` the periodic coordinate difference and `m` the
    /// midpoint: the Riemannian distance to first order for nearby points.
    pub fn local_distance(&self, chart: usize, x: &[f64], y: &[f64]) -> Result<f64> {
        let c = self.chart(chart)?;
        let delta: Vec<f64> = (0..self.dim)
            .map(|i| match c.periods[i] {
                Some(p) => crate::numeric::periodic_delta(x[i], y[i], p),
                None => x[i] - y[i],
            })
            .collect();
        let mid: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a - 0.5 * d).collect();
        Ok(self.inner(chart, &mid, &delta, &delta)?.max(0.0).sqrt())
    }

    fn check_domain(&self, chart: usize, x: &[f64]) -> Result<&Chart> {
        let c = self.chart(chart)?;
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        if !c.contains(x) {
            return Err(Error::OutOfDomain {
                chart: c.name.clone(),
                point: x.to_vec(),
            });
        }
        Ok(c)
    }

    /// Metric matrix `g_ij(x)`, validated for symmetry and positive definiteness.
    pub fn metric_at(&self, chart: usize, x: &[f64]) -> Result<DMatrix<f64>> {
        let (g, _) = self.metric_and_cholesky(chart, x)?;
        Ok(g)
    }

    pub(crate) fn metric_and_cholesky(
        &self,
        chart: usize,
        x: &[f64],
    ) -> Result<(DMatrix<f64>, Cholesky<f64, Dyn>)> {
        let c = self.check_domain(chart, x)?;
        let g = c.raw_metric(x);
        if g.nrows() != self.dim || g.ncols() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: g.nrows(),
            });
        }
        let scale = g.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        let mut asym = 0.0_f64;
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                asym = asym.max((g[(i, j)] - g[(j, i)]).abs());
            }
        }
        if !(asym <= SYMMETRY_TOL * scale) {
            return Err(Error::NotSymmetric {
                point: x.to_vec(),
                asymmetry: asym,
            });
        }
        let chol = g
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite { point: x.to_vec() })?;
        Ok((g, chol))
    }

    /// `√det g(x)` by Cholesky factorization, ignoring any closed form.
    pub fn volume_density_cholesky(&self, chart: usize, x: &[f64]) -> Result<f64> {
        let (_, chol) = self.metric_and_cholesky(chart, x)?;
        Ok(chol.l_dirty().diagonal().iter().product::<f64>().abs())
    }

    /// `√det g(x)`.
    pub fn volume_density(&self, chart: usize, x: &[f64]) -> Result<f64> {
        if let Some(d) = &self.check_domain(chart, x)?.density {
            return Ok(d(x));
        }
        let (_, chol) = self.metric_and_cholesky(chart, x)?;
        Ok(chol.l_dirty().diagonal().iter().product::<f64>().abs())
    }

    pub fn inverse_metric(&self, chart: usize, x: &[f64]) -> Result<DMatrix<f64>> {
        let (_, chol) = self.metric_and_cholesky(chart, x)?;
        Ok(chol.inverse())
    }

    /// `g_x(u, w)`, using the chart's conditioned evaluator when it has one.
    pub fn inner(&self, chart: usize, x: &[f64], u: &[f64], w: &[f64]) -> Result<f64> {
        let c = self.check_domain(chart, x)?;
        if let Some(inner) = c.inner_fn() {
            return Ok(inner(x, u, w));
        }
        let g = c.raw_metric(x);
        Ok(quadratic(&g, u, w))
    }

    /// Christoffel symbols: closed form when the chart supplies them,
    /// central finite differences of the metric otherwise.
    pub fn christoffel(&self, chart: usize, x: &[f64]) -> Result<Christoffel> {
        let c = self.check_domain(chart, x)?;
        match c.closed_christoffel() {
            Some(f) => Ok(f(x)),
            None => self.christoffel_fd(chart, x),
        }
    }

    /// Geodesic acceleration `-Γ^k_ij v^i v^j` at `(x, v)`.
    pub fn geodesic_acceleration(&self, chart: usize, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let c = self.check_domain(chart, x)?;
        if let Some(spray) = &c.spray {
            return Ok(spray(x, v));
        }
        let gamma = self.christoffel(chart, x)?;
        Ok(gamma.contract(v, v).into_iter().map(|a| -a).collect())
    }

    /// Finite-difference Christoffel symbols (always computed numerically).
    pub fn christoffel_fd(&self, chart: usize, x: &[f64]) -> Result<Christoffel> {
        let n = self.dim;
        let ginv = self.inverse_metric(chart, x)?;
        // dg[l] = ∂_l g
        let mut dg = Vec::with_capacity(n);
        let mut xp = x.to_vec();
        for l in 0..n {
            let h = fd_step(x[l]);
            xp[l] = x[l] + h;
            let gp = self.metric_at(chart, &xp)?;
            xp[l] = x[l] - h;
            let gm = self.metric_at(chart, &xp)?;
            xp[l] = x[l];
            dg.push((gp - gm) / (2.0 * h));
        }
        let mut gamma = Christoffel::zeros(n);
        for k in 0..n {
            for i in 0..n {
                for j in i..n {
                    let mut s = 0.0;
                    for l in 0..n {
                        let lower = dg[i][(l, j)] + dg[j][(l, i)] - dg[l][(i, j)];
                        s += ginv[(k, l)] * lower;
                    }
                    gamma.set(k, i, j, 0.5 * s);
                }
            }
        }
        Ok(gamma)
    }

    /// Orthonormal frame at `x`: Gram–Schmidt of the coordinate basis under g.
    /// Columns are the frame vectors in chart components.
    pub fn orthonormal_frame(&self, chart: usize, x: &[f64]) -> Result<DMatrix<f64>> {
        let g = self.metric_at(chart, x)?;
        let n = self.dim;
        let mut frame = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            let mut u = DVector::<f64>::zeros(n);
            u[i] = 1.0;
            for j in 0..i {
                let ej = frame.column(j).clone_owned();
                let proj = (u.transpose() * &g * &ej)[(0, 0)];
                u -= ej * proj;
            }
            let norm_sq = (u.transpose() * &g * &u)[(0, 0)];
            if !(norm_sq > 0.0) {
                return Err(Error::NotPositiveDefinite { point: x.to_vec() });
            }
            frame.set_column(i, &(u / norm_sq.sqrt()));
        }
        Ok(frame)
    }

    /// `grad u = g^{-1} du` from the covector `du`.
    pub fn raise(&self, chart: usize, x: &[f64], covector: &[f64]) -> Result<Vec<f64>> {
        let ginv = self.inverse_metric(chart, x)?;
        let v = ginv * DVector::from_column_slice(covector);
        Ok(v.iter().copied().collect())
    }

    /// Jacobian `J[(k, i)] = ∂_i X^k`, analytic when the field supplies it.
    pub fn field_jacobian(&self, field: &VectorFieldDef, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_field(field)?;
        self.check_domain(field.chart, x)?;
        if let Some(j) = &field.jacobian {
            return Ok(j(x));
        }
        self.field_jacobian_fd(field, x)
    }

    /// Finite-difference Jacobian of the field components.
    pub fn field_jacobian_fd(&self, field: &VectorFieldDef, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.dim;
        let mut jac = DMatrix::<f64>::zeros(n, n);
        let mut xp = x.to_vec();
        for i in 0..n {
            let h = fd_step(x[i]);
            xp[i] = x[i] + h;
            self.check_domain(field.chart, &xp)?;
            let fp = field.eval(&xp);
            xp[i] = x[i] - h;
            self.check_domain(field.chart, &xp)?;
            let fm = field.eval(&xp);
            xp[i] = x[i];
            for k in 0..n {
                jac[(k, i)] = (fp[k] - fm[k]) / (2.0 * h);
            }
        }
        Ok(jac)
    }

    /// The differential `A_X(p)`: `A[(k, i)] = ∂_i X^k + Γ^k_ij X^j`, so that
    /// `(∇_v X)^k = A[(k, i)] v^i`.
    pub fn differential(&self, field: &VectorFieldDef, x: &[f64]) -> Result<DMatrix<f64>> {
        let jac = self.field_jacobian(field, x)?;
        let gamma = self.christoffel(field.chart, x)?;
        let xv = field.eval(x);
        let n = self.dim;
        let mut a = jac;
        for k in 0..n {
            for i in 0..n {
                let mut s = 0.0;
                for j in 0..n {
                    s += gamma.get(k, i, j) * xv[j];
                }
                a[(k, i)] += s;
            }
        }
        Ok(a)
    }

    /// `∇_dir X` at `x` for an arbitrary direction `dir`.
    pub fn covariant_derivative_along(
        &self,
        field: &VectorFieldDef,
        x: &[f64],
        dir: &[f64],
    ) -> Result<Vec<f64>> {
        let a = self.differential(field, x)?;
        let d = DVector::from_column_slice(dir);
        Ok((a * d).iter().copied().collect())
    }

    /// `∇_v X` at the base point of θ.
    pub fn covariant_derivative(
        &self,
        field: &VectorFieldDef,
        state: &UnitTangentState,
    ) -> Result<Vec<f64>> {
        self.check_chart(field, state.chart)?;
        self.covariant_derivative_along(field, &state.p, &state.v)
    }

    /// div X as the trace of `v ↦ ∇_v X`.
    pub fn divergence(&self, field: &VectorFieldDef, x: &[f64]) -> Result<f64> {
        Ok(self.differential(field, x)?.trace())
    }

    /// div X from the field's closed form when it has one, else from the connection.
    pub fn divergence_eval(&self, field: &VectorFieldDef, x: &[f64]) -> Result<f64> {
        match field.closed_divergence(x) {
            Some(d) => {
                self.check_field(field)?;
                Ok(d)
            }
            None => self.divergence(field, x),
        }
    }

    /// div X from the coordinate formula `(1/√G) ∂_i(√G X^i)`.
    pub fn divergence_coordinate(&self, field: &VectorFieldDef, x: &[f64]) -> Result<f64> {
        self.check_field(field)?;
        let n = self.dim;
        let sqrt_g = self.volume_density(field.chart, x)?;
        let mut xp = x.to_vec();
        let mut total = 0.0;
        for i in 0..n {
            let h = fd_step(x[i]);
            xp[i] = x[i] + h;
            let plus = self.volume_density(field.chart, &xp)? * field.eval(&xp)[i];
            xp[i] = x[i] - h;
            let minus = self.volume_density(field.chart, &xp)? * field.eval(&xp)[i];
            xp[i] = x[i];
            total += (plus - minus) / (2.0 * h);
        }
        Ok(total / sqrt_g)
    }

    /// `g(∇_v X, v)` for any (not necessarily unit) `v` at chart point `x`.
    pub fn f_x_at(&self, field: &VectorFieldDef, x: &[f64], v: &[f64]) -> Result<f64> {
        let dv = self.covariant_derivative_along(field, x, v)?;
        self.inner(field.chart, x, &dv, v)
    }

    /// `f_X` from the field's closed form when it has one, else from the connection.
    pub fn f_x_eval(&self, field: &VectorFieldDef, x: &[f64], v: &[f64]) -> Result<f64> {
        match field.closed_fx(x, v) {
            Some(f) => {
                self.check_field(field)?;
                Ok(f)
            }
            None => self.f_x_at(field, x, v),
        }
    }

    /// `f_X(θ) = g(∇_v X, v)`.
    pub fn f_x(&self, field: &VectorFieldDef, state: &UnitTangentState) -> Result<f64> {
        self.check_chart(field, state.chart)?;
        self.f_x_at(field, &state.p, &state.v)
    }

    /// Pointwise norm |X(x)|.
    pub fn field_norm(&self, field: &VectorFieldDef, x: &[f64]) -> Result<f64> {
        self.check_field(field)?;
        let xv = field.eval(x);
        Ok(self.inner(field.chart, x, &xv, &xv)?.max(0.0).sqrt())
    }

    fn check_field(&self, field: &VectorFieldDef) -> Result<()> {
        if field.dim != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: field.dim,
            });
        }
        if field.manifold != self.name {
            return Err(Error::FactorMismatch {
                field: field.name.clone(),
                expected: self.name.clone(),
                found: field.manifold.clone(),
            });
        }
        Ok(())
    }

    fn check_chart(&self, field: &VectorFieldDef, chart: usize) -> Result<()> {
        if field.chart != chart {
            return Err(Error::Invalid(format!(
                "field `{}` lives on chart {}, state on chart {chart}",
                field.name, field.chart
            )));
        }
        Ok(())
    }
}

/// `uᵀ g w`.
pub fn quadratic(g: &DMatrix<f64>, u: &[f64], w: &[f64]) -> f64 {
    let n = u.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += g[(i, j)] * u[i] * w[j];
        }
    }
    s
}

/// A C¹ vector field given by its components on one chart.
#[derive(Clone)]
pub struct VectorFieldDef {
    name: String,
    manifold: String,
    chart: usize,
    dim: usize,
    components: PointFn<Vec<f64>>,
    jacobian: Option<PointFn<DMatrix<f64>>>,
    divergence: Option<PointFn<f64>>,
    f_x: Option<TangentFn>,
}

impl fmt::Debug for VectorFieldDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorFieldDef")
            .field("name", &self.name)
            .field("manifold", &self.manifold)
            .field("chart", &self.chart)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .field("closed_divergence", &self.divergence.is_some())
            .field("closed_fx", &self.f_x.is_some())
            .finish()
    }
}

impl VectorFieldDef {
    pub fn new(
        name: impl Into<String>,
        manifold: &ChartedManifold,
        chart: usize,
        components: PointFn<Vec<f64>>,
    ) -> Self {
        Self {
            name: name.into(),
            manifold: manifold.name().to_string(),
            chart,
            dim: manifold.dim(),
            components,
            jacobian: None,
            divergence: None,
            f_x: None,
        }
    }

    pub fn zero(manifold: &ChartedManifold) -> Self {
        let n = manifold.dim();
        Self::new("zero", manifold, 0, Arc::new(move |_| vec![0.0; n]))
            .with_jacobian(Arc::new(move |_| DMatrix::zeros(n, n)))
            .with_divergence(Arc::new(|_| 0.0))
            .with_closed_fx(Arc::new(|_, _| 0.0))
    }

    pub fn with_jacobian(mut self, jacobian: PointFn<DMatrix<f64>>) -> Self {
        self.jacobian = Some(jacobian);
        self
    }

    pub fn with_divergence(mut self, divergence: PointFn<f64>) -> Self {
        self.divergence = Some(divergence);
        self
    }

    pub fn with_closed_fx(mut self, f_x: TangentFn) -> Self {
        self.f_x = Some(f_x);
        self
    }

    /// Drops the analytic Jacobian so derivatives fall back to finite differences.
    pub fn without_jacobian(mut self) -> Self {
        self.jacobian = None;
        self
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn manifold_name(&self) -> &str {
        &self.manifold
    }

    pub fn chart(&self) -> usize {
        self.chart
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        (self.components)(x)
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn analytic_jacobian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        self.jacobian.as_ref().map(|j| j(x))
    }

    pub fn has_closed_divergence(&self) -> bool {
        self.divergence.is_some()
    }

    pub fn closed_divergence(&self, x: &[f64]) -> Option<f64> {
        self.divergence.as_ref().map(|d| d(x))
    }

    pub fn closed_fx(&self, x: &[f64], v: &[f64]) -> Option<f64> {
        self.f_x.as_ref().map(|f| f(x, v))
    }

    /// `a·X + b·Y` (same manifold and chart).
    pub fn linear_combination(
        a: f64,
        x: &VectorFieldDef,
        b: f64,
        y: &VectorFieldDef,
    ) -> Result<Self> {
        if x.manifold != y.manifold || x.chart != y.chart || x.dim != y.dim {
            return Err(Error::Invalid(format!(
                "cannot combine `{}` and `{}`",
                x.name, y.name
            )));
        }
        let (cx, cy) = (x.components.clone(), y.components.clone());
        let mut out = Self {
            name: format!("{a}*{}+{b}*{}", x.name, y.name),
            manifold: x.manifold.clone(),
            chart: x.chart,
            dim: x.dim,
            components: Arc::new(move |p| {
                let u = cx(p);
                let w = cy(p);
                u.iter().zip(&w).map(|(ui, wi)| a * ui + b * wi).collect()
            }),
            jacobian: None,
            divergence: None,
            f_x: None,
        };
        if let (Some(jx), Some(jy)) = (x.jacobian.clone(), y.jacobian.clone()) {
            out.jacobian = Some(Arc::new(move |p| jx(p) * a + jy(p) * b));
        }
        Ok(out)
    }
}

/// A point θ = (p, v) of the unit tangent bundle, in chart components.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct UnitTangentState {
    pub chart: usize,
    pub p: Vec<f64>,
    pub v: Vec<f64>,
}

impl UnitTangentState {
    /// Validates that `g_p(v, v) = 1` within [`UNIT_TOL`].
    pub fn new(m: &ChartedManifold, chart: usize, p: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if v.len() != m.dim() {
            return Err(Error::Dimension {
                expected: m.dim(),
                got: v.len(),
            });
        }
        let norm_sq = m.inner(chart, &p, &v, &v)?;
        if (norm_sq - 1.0).abs() > UNIT_TOL {
            return Err(Error::NotUnit { norm_sq });
        }
        Ok(Self { chart, p, v })
    }

    /// Rescales `v` to unit length.
    pub fn normalized(m: &ChartedManifold, chart: usize, p: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        let norm_sq = m.inner(chart, &p, &v, &v)?;
        if !(norm_sq > 0.0) {
            return Err(Error::Invalid("zero velocity cannot be normalized".into()));
        }
        let s = norm_sq.sqrt();
        let v = v.iter().map(|c| c / s).collect();
        Self::new(m, chart, p, v)
    }

    /// Unit vector built from orthonormal-frame coefficients `c` (|c| = 1).
    pub fn from_frame(m: &ChartedManifold, chart: usize, p: Vec<f64>, c: &[f64]) -> Result<Self> {
        let e = m.orthonormal_frame(chart, &p)?;
        let v: Vec<f64> = (e * DVector::from_column_slice(c))
            .iter()
            .copied()
            .collect();
        Self::normalized(m, chart, p, v)
    }

    /// Same base point, reversed velocity.
    pub fn flipped(&self) -> Self {
        Self {
            chart: self.chart,
            p: self.p.clone(),
            v: self.v.iter().map(|c| -c).collect(),
        }
    }
}
