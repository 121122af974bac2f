//! Model Riemannian manifolds.
//!
//! Spheres, ellipsoids and the conformally scaled 2-sphere are represented as embedded
//! hypersurfaces and carry a constraint projection; flat tori use their universal-cover
//! chart, with coordinates left unwrapped so that curves stay continuous. Points and
//! tangent vectors are zero-padded to [`MAX_AMBIENT`] components.

mod geodesic;

pub use geodesic::{
    geodesic_bvp, geodesic_bvp_with, geodesic_shoot, geodesic_shoot_with, BvpOptions,
    GeodesicSegment, Integrator, IntegratorStats,
};

use nalgebra::{DMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{GeonetError, Result};

pub const MAX_AMBIENT: usize = 6;
pub const MAX_DIM: usize = 5;

pub type Vector = SVector<f64, MAX_AMBIENT>;

/// Builds a padded vector from leading coordinates.
pub fn vector(coords: &[f64]) -> Vector {
    let mut v = Vector::zeros();
    for (slot, c) in v.iter_mut().zip(coords) {
        *slot = *c;
    }
    v
}

pub fn cross3(a: &Vector, b: &Vector) -> Vector {
    vector(&[
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum ModelKind {
    /// Unit round sphere S^dim in R^{dim+1}.
    Sphere { dim: usize },
    /// Ellipsoid x²/a² + y²/b² + z²/c² = 1 in R³.
    Ellipsoid { axes: [f64; 3] },
    /// Flat torus R^dim / (periods · Z^dim).
    Torus { periods: Vec<f64> },
    /// Round S² with metric e^{2φ} g, φ(x) = ⟨coeffs, x⟩.
    ConformalSphere { coeffs: [f64; 3] },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub ode_tol: f64,
    pub bvp_tol: f64,
    pub stationarity_tol: f64,
    pub eig_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            ode_tol: 1e-12,
            bvp_tol: 1e-10,
            stationarity_tol: 1e-7,
            eig_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifoldModel {
    pub kind: ModelKind,
    pub tol: Tolerances,
}

/// Structured-text manifold description, as found in run configs and net files.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldConfig {
    pub model: String,
    pub dim: Option<usize>,
    pub axes: Option<Vec<f64>>,
    pub periods: Option<Vec<f64>>,
    pub coeffs: Option<Vec<f64>>,
    pub ode_tol: Option<f64>,
    pub bvp_tol: Option<f64>,
    pub stationarity_tol: Option<f64>,
    pub eig_tol: Option<f64>,
}

impl ManifoldConfig {
    pub fn build(&self) -> Result<ManifoldModel> {
        let fixed3 = |name: &str, v: &Option<Vec<f64>>| -> Result<[f64; 3]> {
            match v.as_deref() {
                Some([a, b, c]) => Ok([*a, *b, *c]),
                Some(_) => Err(GeonetError::rejected(format!("`{name}` needs exactly 3 numbers"))),
                None => Err(GeonetError::rejected(format!("`{name}` is required"))),
            }
        };
        let mut model = match self.model.as_str() {
            "sphere" => ManifoldModel::sphere(self.dim.unwrap_or(2))?,
            "ellipsoid" => {
                let [a, b, c] = fixed3("axes", &self.axes)?;
                ManifoldModel::ellipsoid(a, b, c)?
            }
            "torus" => {
                let periods = match &self.periods {
                    Some(p) => p.clone(),
                    None => vec![1.0; self.dim.unwrap_or(2)],
                };
                ManifoldModel::torus(&periods)?
            }
            "conformal-sphere" => ManifoldModel::conformal_sphere(fixed3("coeffs", &self.coeffs)?)?,
            other => return Err(GeonetError::rejected(format!("unknown model `{other}`"))),
        };
        if let Some(t) = self.ode_tol {
            model.tol.ode_tol = t;
        }
        if let Some(t) = self.bvp_tol {
            model.tol.bvp_tol = t;
        }
        if let Some(t) = self.stationarity_tol {
            model.tol.stationarity_tol = t;
        }
        if let Some(t) = self.eig_tol {
            model.tol.eig_tol = t;
        }
        for t in [model.tol.ode_tol, model.tol.bvp_tol, model.tol.stationarity_tol, model.tol.eig_tol] {
            if !(t > 0.0 && t.is_finite()) {
                return Err(GeonetError::rejected("tolerances must be positive"));
            }
        }
        Ok(model)
    }
}

/// A base point with a tangent vector at it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointTangent {
    pub point: Vector,
    pub tangent: Vector,
    pub norm: f64,
}

impl PointTangent {
    pub fn new(model: &ManifoldModel, point: Vector, tangent: Vector) -> Result<Self> {
        let scale = 1e-8 * (1.0 + tangent.norm());
        if model.constraint(&point).abs() > 1e-8 {
            return Err(GeonetError::rejected("base point is not on the manifold"));
        }
        if (tangent - model.tangent_project(&point, &tangent)).norm() > scale {
            return Err(GeonetError::rejected("vector is not tangent at the base point"));
        }
        Ok(PointTangent {
            point,
            tangent,
            norm: model.norm(&point, &tangent),
        })
    }
}

impl ManifoldModel {
    fn with_kind(kind: ModelKind) -> Self {
        ManifoldModel {
            kind,
            tol: Tolerances::default(),
        }
    }

    pub fn sphere(dim: usize) -> Result<Self> {
        if !(2..=MAX_DIM).contains(&dim) {
            return Err(GeonetError::rejected(format!("sphere dimension {dim} outside 2..=5")));
        }
        Ok(Self::with_kind(ModelKind::Sphere { dim }))
    }

    pub fn ellipsoid(a: f64, b: f64, c: f64) -> Result<Self> {
        if [a, b, c].iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(GeonetError::rejected("ellipsoid semi-axes must be positive"));
        }
        Ok(Self::with_kind(ModelKind::Ellipsoid { axes: [a, b, c] }))
    }

    pub fn torus(periods: &[f64]) -> Result<Self> {
        if !(2..=MAX_DIM).contains(&periods.len()) {
            return Err(GeonetError::rejected("torus dimension outside 2..=5"));
        }
        if periods.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(GeonetError::rejected("torus periods must be positive"));
        }
        Ok(Self::with_kind(ModelKind::Torus {
            periods: periods.to_vec(),
        }))
    }

    pub fn conformal_sphere(coeffs: [f64; 3]) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(GeonetError::rejected("conformal coefficients must be finite"));
        }
        Ok(Self::with_kind(ModelKind::ConformalSphere { coeffs }))
    }

    pub fn with_tolerances(mut self, tol: Tolerances) -> Self {
        self.tol = tol;
        self
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            ModelKind::Sphere { dim } => *dim,
            ModelKind::Ellipsoid { .. } | ModelKind::ConformalSphere { .. } => 2,
            ModelKind::Torus { periods } => periods.len(),
        }
    }

    /// Number of coordinates used to describe points.
    pub fn ambient_dim(&self) -> usize {
        match &self.kind {
            ModelKind::Torus { periods } => periods.len(),
            _ => self.dim() + 1,
        }
    }

    pub fn tag(&self) -> &'static str {
        match &self.kind {
            ModelKind::Sphere { .. } => "sphere",
            ModelKind::Ellipsoid { .. } => "ellipsoid",
            ModelKind::Torus { .. } => "torus",
            ModelKind::ConformalSphere { .. } => "conformal-sphere",
        }
    }

    pub fn is_round_sphere(&self) -> bool {
        matches!(self.kind, ModelKind::Sphere { .. })
    }

    /// Conformal exponent φ at x (zero except for the conformal sphere).
    pub fn log_conformal_factor(&self, x: &Vector) -> f64 {
        match &self.kind {
            ModelKind::ConformalSphere { coeffs } => coeffs[0] * x[0] + coeffs[1] * x[1] + coeffs[2] * x[2],
            _ => 0.0,
        }
    }

    pub fn inner(&self, x: &Vector, u: &Vector, v: &Vector) -> f64 {
        let e = u.dot(v);
        match &self.kind {
            ModelKind::ConformalSphere { .. } => (2.0 * self.log_conformal_factor(x)).exp() * e,
            _ => e,
        }
    }

    pub fn norm(&self, x: &Vector, v: &Vector) -> f64 {
        self.inner(x, v, v).max(0.0).sqrt()
    }

    /// Metric matrix in ambient coordinates restricted to the tangent space.
    pub fn metric_matrix(&self, x: &Vector) -> DMatrix<f64> {
        let basis = self.tangent_basis_euclidean(x);
        let n = basis.len();
        DMatrix::from_fn(n, n, |i, j| self.inner(x, &basis[i], &basis[j]))
    }

    /// Level-set function F with M = {F = 0}; zero for tori.
    pub fn constraint(&self, x: &Vector) -> f64 {
        match &self.kind {
            ModelKind::Sphere { .. } | ModelKind::ConformalSphere { .. } => x.norm_squared() - 1.0,
            ModelKind::Ellipsoid { axes } => {
                (0..3).map(|i| (x[i] / axes[i]).powi(2)).sum::<f64>() - 1.0
            }
            ModelKind::Torus { .. } => 0.0,
        }
    }

    fn constraint_gradient(&self, x: &Vector) -> Option<Vector> {
        match &self.kind {
            ModelKind::Sphere { .. } | ModelKind::ConformalSphere { .. } => Some(2.0 * x),
            ModelKind::Ellipsoid { axes } => Some(vector(&[
                2.0 * x[0] / (axes[0] * axes[0]),
                2.0 * x[1] / (axes[1] * axes[1]),
                2.0 * x[2] / (axes[2] * axes[2]),
            ])),
            ModelKind::Torus { .. } => None,
        }
    }

    /// Unit Euclidean normal of an embedded model.
    pub fn unit_normal(&self, x: &Vector) -> Option<Vector> {
        self.constraint_gradient(x).map(|g| g.normalize())
    }

    /// Directional derivative of the unit normal field along d.
    pub fn normal_derivative(&self, x: &Vector, d: &Vector) -> Vector {
        match &self.kind {
            ModelKind::Sphere { .. } | ModelKind::ConformalSphere { .. } => {
                let r = x.norm();
                let nu = x / r;
                (d - nu * nu.dot(d)) / r
            }
            ModelKind::Ellipsoid { axes } => {
                let g = self.constraint_gradient(x).unwrap_or_else(Vector::zeros);
                let gn = g.norm();
                let nu = g / gn;
                let hd = vector(&[
                    2.0 * d[0] / (axes[0] * axes[0]),
                    2.0 * d[1] / (axes[1] * axes[1]),
                    2.0 * d[2] / (axes[2] * axes[2]),
                ]);
                (hd - nu * nu.dot(&hd)) / gn
            }
            ModelKind::Torus { .. } => Vector::zeros(),
        }
    }

    /// Retraction onto the manifold (radial for embedded models).
    pub fn project(&self, x: &Vector) -> Vector {
        match &self.kind {
            ModelKind::Sphere { .. } | ModelKind::ConformalSphere { .. } => x.normalize(),
            ModelKind::Ellipsoid { .. } => {
                let s = (self.constraint(x) + 1.0).sqrt();
                x / s
            }
            ModelKind::Torus { .. } => *x,
        }
    }

    pub fn tangent_project(&self, x: &Vector, v: &Vector) -> Vector {
        match self.unit_normal(x) {
            Some(nu) => v - nu * nu.dot(v),
            None => *v,
        }
    }

    /// Derivative of x ↦ P_x u(x) along d, given u and its derivative du = Du(x)·d.
    pub fn tangent_project_jvp(&self, x: &Vector, u: &Vector, du: &Vector, d: &Vector) -> Vector {
        match self.unit_normal(x) {
            Some(nu) => {
                let dnu = self.normal_derivative(x, d);
                du - nu * nu.dot(du) - nu * u.dot(&dnu) - dnu * u.dot(&nu)
            }
            None => *du,
        }
    }

    /// Geodesic acceleration x'' for the state (x, v).
    pub fn spray(&self, x: &Vector, v: &Vector) -> Vector {
        match &self.kind {
            ModelKind::Sphere { .. } => -x * (v.norm_squared() / x.norm_squared()),
            ModelKind::Ellipsoid { axes } => {
                let g = self.constraint_gradient(x).unwrap_or_else(Vector::zeros);
                let hvv: f64 = (0..3).map(|i| 2.0 * v[i] * v[i] / (axes[i] * axes[i])).sum();
                -g * (hvv / g.norm_squared())
            }
            ModelKind::ConformalSphere { coeffs } => {
                let c = vector(coeffs);
                let vv = v.norm_squared();
                let grad_sphere = c - x * c.dot(x);
                -x * vv - v * (2.0 * c.dot(v)) + grad_sphere * vv
            }
            ModelKind::Torus { .. } => Vector::zeros(),
        }
    }

    /// Gaussian curvature of a 2-dimensional model.
    pub fn gaussian_curvature(&self, x: &Vector) -> Option<f64> {
        if self.dim() != 2 {
            return None;
        }
        Some(match &self.kind {
            ModelKind::Sphere { .. } => 1.0,
            ModelKind::Torus { .. } => 0.0,
            ModelKind::Ellipsoid { axes } => {
                let [a, b, c] = *axes;
                let s = x[0] * x[0] / a.powi(4) + x[1] * x[1] / b.powi(4) + x[2] * x[2] / c.powi(4);
                1.0 / (a * a * b * b * c * c * s * s)
            }
            ModelKind::ConformalSphere { .. } => {
                let phi = self.log_conformal_factor(x);
                (-2.0 * phi).exp() * (1.0 + 2.0 * phi)
            }
        })
    }

    /// The curvature endomorphism X ↦ R(X,T)T at x.
    pub fn curvature_term(&self, x: &Vector, t: &Vector, xv: &Vector) -> Vector {
        match &self.kind {
            ModelKind::Sphere { .. } => xv * t.dot(t) - t * xv.dot(t),
            ModelKind::Torus { .. } => Vector::zeros(),
            _ => {
                let k = self.gaussian_curvature(x).unwrap_or(0.0);
                (xv * self.inner(x, t, t) - t * self.inner(x, xv, t)) * k
            }
        }
    }

    /// Sectional curvature of the plane spanned by u, v at x.
    pub fn sectional_curvature(&self, x: &Vector, u: &Vector, v: &Vector) -> f64 {
        let area = self.inner(x, u, u) * self.inner(x, v, v) - self.inner(x, u, v).powi(2);
        self.inner(x, &self.curvature_term(x, v, u), u) / area
    }

    /// Displacement from `from` to `to`, using the nearest lattice image on tori.
    pub fn displacement(&self, from: &Vector, to: &Vector) -> Vector {
        let mut d = to - from;
        if let ModelKind::Torus { periods } = &self.kind {
            for (i, p) in periods.iter().enumerate() {
                d[i] -= p * (d[i] / p).round();
            }
        }
        d
    }

    /// Distance between points: exact on round spheres and tori, chordal otherwise.
    pub fn distance(&self, x: &Vector, y: &Vector) -> f64 {
        let d = self.displacement(x, y);
        match &self.kind {
            ModelKind::Sphere { .. } => 2.0 * (0.5 * d.norm()).min(1.0).asin(),
            _ => d.norm(),
        }
    }

    /// Reduces torus coordinates into the fundamental domain.
    pub fn wrap(&self, x: &Vector) -> Vector {
        let mut y = *x;
        if let ModelKind::Torus { periods } = &self.kind {
            for (i, p) in periods.iter().enumerate() {
                y[i] = y[i].rem_euclid(*p);
            }
        }
        y
    }

    fn tangent_basis_euclidean(&self, x: &Vector) -> Vec<Vector> {
        let n = self.dim();
        let mut basis: Vec<Vector> = Vec::with_capacity(n);
        let mut order: Vec<usize> = (0..self.ambient_dim()).collect();
        if let Some(nu) = self.unit_normal(x) {
            // least aligned coordinate axes first keeps the projections well conditioned
            order.sort_by(|a, b| nu[*a].abs().total_cmp(&nu[*b].abs()));
        }
        for i in order {
            let mut e = Vector::zeros();
            e[i] = 1.0;
            let mut w = self.tangent_project(x, &e);
            for b in &basis {
                w -= b * b.dot(&w);
            }
            let nw = w.norm();
            if nw > 1e-6 {
                basis.push(w / nw);
            }
            if basis.len() == n {
                break;
            }
        }
        basis
    }

    /// A g-orthonormal basis of the tangent space at x.
    pub fn tangent_basis(&self, x: &Vector) -> Vec<Vector> {
        let s = (-self.log_conformal_factor(x)).exp();
        self.tangent_basis_euclidean(x).into_iter().map(|b| b * s).collect()
    }

    /// Coordinates of a tangent vector in a g-orthonormal basis.
    pub fn coordinates(&self, x: &Vector, basis: &[Vector], v: &Vector) -> Vec<f64> {
        basis.iter().map(|b| self.inner(x, b, v)).collect()
    }

    /// Initial velocity guess for the geodesic from p to q: the chord projected to T_p M,
    /// scaled to the model distance.
    pub fn chord_guess(&self, p: &Vector, q: &Vector) -> Vector {
        let d = self.tangent_project(p, &self.displacement(p, q));
        let n = self.norm(p, &d);
        if n < 1e-300 {
            return Vector::zeros();
        }
        let scale = (self.log_conformal_factor(p).exp()) * self.distance(p, q);
        d * (scale / n)
    }

    /// g-orthonormal frames of the normal bundle along a sampled geodesic, transported in
    /// parallel (exactly for surfaces, great circles and straight lines).
    pub fn normal_frames(&self, points: &[Vector], tangents: &[Vector]) -> Vec<Vec<Vector>> {
        let n = self.dim();
        let mut frames: Vec<Vec<Vector>> = Vec::with_capacity(points.len());
        for (k, (x, t)) in points.iter().zip(tangents).enumerate() {
            let frame = if n == 2 {
                let e = match &self.kind {
                    ModelKind::Torus { .. } => vector(&[-t[1], t[0]]),
                    _ => {
                        let nu = self.unit_normal(x).unwrap_or_else(Vector::zeros);
                        cross3(&nu, t)
                    }
                };
                let ne = self.norm(x, &e);
                vec![e / ne]
            } else {
                let seeds: Vec<Vector> = if k == 0 {
                    self.tangent_basis(x)
                } else {
                    frames[k - 1].clone()
                };
                let tt = self.inner(x, t, t);
                let mut frame: Vec<Vector> = Vec::with_capacity(n - 1);
                for s in seeds {
                    let mut w = self.tangent_project(x, &s);
                    w -= t * (self.inner(x, &w, t) / tt);
                    for b in &frame {
                        w -= b * self.inner(x, b, &w);
                    }
                    let nw = self.norm(x, &w);
                    if nw > 1e-6 {
                        frame.push(w / nw);
                    }
                    if frame.len() == n - 1 {
                        break;
                    }
                }
                frame
            };
            frames.push(frame);
        }
        frames
    }

    /// Validates a point and returns its retraction onto the manifold.
    pub fn checked_point(&self, x: &Vector, tol: f64) -> Result<Vector> {
        if x.iter().any(|c| !c.is_finite()) {
            return Err(GeonetError::rejected("non-finite coordinates"));
        }
        if self.constraint(x).abs() > tol {
            return Err(GeonetError::rejected(format!(
                "point off the manifold (constraint residual {:.2e})",
                self.constraint(x)
            )));
        }
        Ok(self.project(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_point(model: &ManifoldModel, rng: &mut ChaCha8Rng) -> Vector {
        let mut x = Vector::zeros();
        for i in 0..model.ambient_dim() {
            x[i] = rng.random_range(-1.0..1.0);
        }
        model.project(&x)
    }

    fn random_tangent(model: &ManifoldModel, x: &Vector, rng: &mut ChaCha8Rng) -> Vector {
        let mut v = Vector::zeros();
        for i in 0..model.ambient_dim() {
            v[i] = rng.random_range(-1.0..1.0);
        }
        model.tangent_project(x, &v)
    }

    fn models() -> Vec<ManifoldModel> {
        vec![
            ManifoldModel::sphere(2).unwrap(),
            ManifoldModel::sphere(4).unwrap(),
            ManifoldModel::ellipsoid(1.0, 1.0, 1.2).unwrap(),
            ManifoldModel::torus(&[1.0, 2.0]).unwrap(),
            ManifoldModel::conformal_sphere([0.1, 0.0, 0.2]).unwrap(),
        ]
    }

    #[test]
    fn metric_positive_definite() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for m in models() {
            for _ in 0..20 {
                let x = random_point(&m, &mut rng);
                let g = m.metric_matrix(&x);
                let min = g.symmetric_eigenvalues().min();
                assert!(min > 0.0, "{}: {min}", m.tag());
                assert!((&g - g.transpose()).amax() < 1e-15);
            }
        }
    }

    #[test]
    fn round_sphere_sectional_curvature_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for dim in 2..=5 {
            let m = ManifoldModel::sphere(dim).unwrap();
            for _ in 0..20 {
                let x = random_point(&m, &mut rng);
                let u = random_tangent(&m, &x, &mut rng);
                let v = random_tangent(&m, &x, &mut rng);
                assert!((m.sectional_curvature(&x, &u, &v) - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn curvature_term_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in models() {
            for _ in 0..20 {
                let x = random_point(&m, &mut rng);
                let t = random_tangent(&m, &x, &mut rng);
                let t = t / m.norm(&x, &t);
                let a = random_tangent(&m, &x, &mut rng);
                let b = random_tangent(&m, &x, &mut rng);
                let lhs = m.inner(&x, &m.curvature_term(&x, &t, &a), &b);
                let rhs = m.inner(&x, &m.curvature_term(&x, &t, &b), &a);
                assert!((lhs - rhs).abs() < 1e-8, "{}", m.tag());
            }
        }
    }

    #[test]
    fn curvature_term_examples() {
        let s2 = ManifoldModel::sphere(2).unwrap();
        let x = vector(&[1.0, 0.0, 0.0]);
        let t = vector(&[0.0, 1.0, 0.0]);
        let xv = vector(&[0.0, 0.0, 0.7]);
        let r = s2.curvature_term(&x, &t, &xv);
        assert!((r - xv).norm() < 1e-15);
        let flat = ManifoldModel::torus(&[1.0, 1.0]).unwrap();
        assert_eq!(flat.curvature_term(&x, &t, &xv), Vector::zeros());
    }

    #[test]
    fn ellipsoid_curvature_matches_sphere_when_round() {
        let e = ManifoldModel::ellipsoid(1.0, 1.0, 1.0).unwrap();
        let x = vector(&[0.6, 0.0, 0.8]);
        assert!((e.gaussian_curvature(&x).unwrap() - 1.0).abs() < 1e-14);
        // pole of (1,1,c): K = c²
        let e = ManifoldModel::ellipsoid(1.0, 1.0, 1.2).unwrap();
        let pole = vector(&[0.0, 0.0, 1.2]);
        assert!((e.gaussian_curvature(&pole).unwrap() - 1.2f64.powi(2)).abs() < 1e-12);
    }

    #[test]
    fn tangent_basis_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for m in models() {
            for _ in 0..10 {
                let x = random_point(&m, &mut rng);
                let b = m.tangent_basis(&x);
                assert_eq!(b.len(), m.dim());
                for i in 0..b.len() {
                    assert!(m.unit_normal(&x).map_or(0.0, |nu| nu.dot(&b[i])).abs() < 1e-14);
                    for j in 0..b.len() {
                        let want = if i == j { 1.0 } else { 0.0 };
                        assert!((m.inner(&x, &b[i], &b[j]) - want).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn torus_displacement_uses_nearest_image() {
        let t = ManifoldModel::torus(&[1.0, 1.0]).unwrap();
        let d = t.displacement(&vector(&[0.95, 0.0]), &vector(&[0.05, 0.0]));
        assert!((d[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn config_rejects_unknown_model() {
        let cfg = ManifoldConfig {
            model: "hyperbolic".into(),
            ..Default::default()
        };
        assert!(cfg.build().is_err());
        let cfg = ManifoldConfig {
            model: "ellipsoid".into(),
            axes: Some(vec![1.0, 1.0, 1.2]),
            bvp_tol: Some(1e-9),
            ..Default::default()
        };
        let m = cfg.build().unwrap();
        assert_eq!(m.tol.bvp_tol, 1e-9);
    }
}
