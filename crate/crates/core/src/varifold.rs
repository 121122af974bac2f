//! Discrete 1-varifolds: weighted (point, unoriented direction) samples, their pushforward
//! under flows of ambient vector fields, and a bounded-Lipschitz distance computed by a
//! linear program over grid-aggregated samples.

use std::time::Duration;

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector, SMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GeonetError, Result};
use crate::manifold::{geodesic_shoot, ManifoldModel, ModelKind, PointTangent, Vector, MAX_AMBIENT};
use crate::net::GeodesicNet;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarifoldSample {
    pub point: Vector,
    /// Euclidean unit vector, meaningful up to sign.
    pub direction: Vector,
    pub weight: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscreteVarifold {
    samples: Vec<VarifoldSample>,
    mass: f64,
}

/// Length of the short segment between nearby points p and q.
pub fn segment_length(model: &ManifoldModel, p: &Vector, q: &Vector) -> f64 {
    match &model.kind {
        ModelKind::Sphere { .. } | ModelKind::Torus { .. } => model.distance(p, q),
        _ => {
            let mid = model.project(&((p + q) * 0.5));
            model.log_conformal_factor(&mid).exp() * model.displacement(p, q).norm()
        }
    }
}

impl DiscreteVarifold {
    pub fn new(samples: Vec<VarifoldSample>) -> Result<Self> {
        for s in &samples {
            if !(s.weight >= 0.0) || !s.weight.is_finite() {
                return Err(GeonetError::rejected("varifold weights must be nonnegative"));
            }
        }
        let samples: Vec<VarifoldSample> = samples
            .into_iter()
            .map(|mut s| {
                let n = s.direction.norm();
                if n > 0.0 {
                    s.direction /= n;
                }
                s
            })
            .collect();
        let mass = samples.iter().map(|s| s.weight).sum();
        Ok(DiscreteVarifold { samples, mass })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn samples(&self) -> &[VarifoldSample] {
        &self.samples
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Midpoint-rule sampling of every arc with `per_arc` samples of weight m·L/per_arc.
    pub fn from_net(net: &GeodesicNet, per_arc: usize) -> Result<Self> {
        let model = &net.model;
        let parts: Vec<Vec<VarifoldSample>> = net
            .arcs
            .par_iter()
            .map(|arc| {
                let s = &arc.segment;
                let start = PointTangent::new(model, s.start, s.velocity)?;
                let fine = geodesic_shoot(model, &start, s.length, 2 * per_arc.max(4))?;
                let w = f64::from(arc.multiplicity) * s.length / per_arc.max(4) as f64;
                Ok(fine
                    .points
                    .iter()
                    .zip(&fine.tangents)
                    .skip(1)
                    .step_by(2)
                    .map(|(x, t)| VarifoldSample {
                        point: *x,
                        direction: t.normalize(),
                        weight: w,
                    })
                    .collect())
            })
            .collect::<Result<_>>()?;
        Self::new(parts.into_iter().flatten().collect())
    }

    /// One sample per polyline segment, at its midpoint.
    pub fn from_polyline(model: &ManifoldModel, points: &[Vector], multiplicity: f64) -> Result<Self> {
        let samples = points
            .windows(2)
            .filter_map(|w| {
                let d = model.displacement(&w[0], &w[1]);
                let len = segment_length(model, &w[0], &w[1]);
                if len <= 0.0 {
                    return None;
                }
                let mid = model.project(&(w[0] + d * 0.5));
                let dir = model.tangent_project(&mid, &d);
                Some(VarifoldSample {
                    point: model.wrap(&mid),
                    direction: dir.normalize(),
                    weight: multiplicity * len,
                })
            })
            .collect();
        Self::new(samples)
    }

    pub fn union(&self, other: &DiscreteVarifold) -> DiscreteVarifold {
        let mut samples = self.samples.clone();
        samples.extend_from_slice(&other.samples);
        DiscreteVarifold {
            mass: self.mass + other.mass,
            samples,
        }
    }

    /// CSV rows: point coordinates, direction coordinates, weight.
    pub fn to_csv(&self, ambient_dim: usize) -> String {
        let axes = ["x", "y", "z", "u", "v", "w"];
        let mut out = String::new();
        let head: Vec<String> = (0..ambient_dim)
            .map(|i| axes[i].to_string())
            .chain((0..ambient_dim).map(|i| format!("d{}", axes[i])))
            .chain(std::iter::once("weight".to_string()))
            .collect();
        out.push_str(&head.join(","));
        out.push('\n');
        for s in &self.samples {
            let row: Vec<String> = (0..ambient_dim)
                .map(|i| s.point[i].to_string())
                .chain((0..ambient_dim).map(|i| s.direction[i].to_string()))
                .chain(std::iter::once(s.weight.to_string()))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, ambient_dim: usize) -> Result<Self> {
        let mut samples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.starts_with(|c: char| c.is_alphabetic())) {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| GeonetError::Parse {
                    line: i + 1,
                    message: "expected comma-separated numbers".into(),
                })?;
            if vals.len() != 2 * ambient_dim + 1 {
                return Err(GeonetError::Parse {
                    line: i + 1,
                    message: format!("expected {} columns", 2 * ambient_dim + 1),
                });
            }
            samples.push(VarifoldSample {
                point: crate::manifold::vector(&vals[..ambient_dim]),
                direction: crate::manifold::vector(&vals[ambient_dim..2 * ambient_dim]),
                weight: vals[2 * ambient_dim],
            });
        }
        Self::new(samples)
    }
}

pub fn mass(v: &DiscreteVarifold) -> f64 {
    v.mass()
}

/// A smooth ambient vector field, tangent along the model, with its derivative.
pub trait VectorField: Send + Sync {
    fn eval(&self, x: &Vector) -> Vector;
    /// Directional derivative DX(x)·d.
    fn jvp(&self, x: &Vector, d: &Vector) -> Vector;

    fn eval_with_jvp(&self, x: &Vector, d: &Vector) -> (Vector, Vector) {
        (self.eval(x), self.jvp(x, d))
    }
}

pub type Matrix6 = SMatrix<f64, MAX_AMBIENT, MAX_AMBIENT>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FieldKind {
    /// u(x) = A x + b.
    Linear { matrix: Matrix6, offset: Vector },
    /// Normalized Gaussian interpolant u(x) = Σ wᵢ(x) aᵢ / Σ wᵢ(x), wᵢ = exp(−|x − cᵢ|²/σ²).
    /// Reproduces constants and does not decay away from the centers.
    Rbf {
        centers: Vec<Vector>,
        coefficients: Vec<Vector>,
        width: f64,
    },
}

/// Tangential projection P_x u(x) of an ambient field u.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmbientField {
    pub model: ManifoldModel,
    pub kind: FieldKind,
}

impl AmbientField {
    pub fn linear(model: &ManifoldModel, matrix: Matrix6, offset: Vector) -> Self {
        AmbientField {
            model: model.clone(),
            kind: FieldKind::Linear { matrix, offset },
        }
    }

    /// Infinitesimal rotation in the (i, j) coordinate plane; a Killing field on round spheres.
    pub fn rotation(model: &ManifoldModel, i: usize, j: usize, rate: f64) -> Self {
        let mut a = Matrix6::zeros();
        a[(j, i)] = rate;
        a[(i, j)] = -rate;
        Self::linear(model, a, Vector::zeros())
    }

    /// Tangential part of a constant vector (the gradient of a height function on spheres).
    pub fn translation(model: &ManifoldModel, offset: Vector) -> Self {
        Self::linear(model, Matrix6::zeros(), offset)
    }

    /// Normalized Gaussian interpolant of prescribed vectors at points.
    pub fn interpolate(model: &ManifoldModel, samples: &[(Vector, Vector)], width: f64) -> Result<Self> {
        if samples.is_empty() || !(width > 0.0) {
            return Err(GeonetError::rejected("interpolation needs samples and a positive width"));
        }
        let n = samples.len();
        let centers: Vec<Vector> = samples.iter().map(|s| s.0).collect();
        let mut kernel = DMatrix::zeros(n, n);
        for i in 0..n {
            let w = normalized_weights(&centers, &samples[i].0, width);
            for (j, wj) in w.iter().enumerate() {
                kernel[(i, j)] = *wj;
            }
        }
        let lu = kernel.lu();
        let mut coefficients = vec![Vector::zeros(); n];
        for c in 0..MAX_AMBIENT {
            let rhs = DVector::from_iterator(n, samples.iter().map(|s| s.1[c]));
            let sol = lu
                .solve(&rhs)
                .ok_or_else(|| GeonetError::Numeric("interpolation matrix is singular".into()))?;
            for (k, coeff) in coefficients.iter_mut().enumerate() {
                coeff[c] = sol[k];
            }
        }
        Ok(AmbientField {
            model: model.clone(),
            kind: FieldKind::Rbf {
                centers,
                coefficients,
                width,
            },
        })
    }

    pub fn raw(&self, x: &Vector) -> Vector {
        match &self.kind {
            FieldKind::Linear { matrix, offset } => matrix * x + offset,
            FieldKind::Rbf {
                centers,
                coefficients,
                width,
            } => normalized_weights(centers, x, *width)
                .iter()
                .zip(coefficients)
                .fold(Vector::zeros(), |acc, (w, a)| acc + a * *w),
        }
    }

    pub fn raw_jvp(&self, x: &Vector, d: &Vector) -> Vector {
        self.raw_with_jvp(x, d).1
    }

    /// Raw value and directional derivative in one pass.
    pub fn raw_with_jvp(&self, x: &Vector, d: &Vector) -> (Vector, Vector) {
        match &self.kind {
            FieldKind::Linear { matrix, offset } => (matrix * x + offset, matrix * d),
            FieldKind::Rbf {
                centers,
                coefficients,
                width,
            } => {
                let w = normalized_weights(centers, x, *width);
                let s2 = width * width;
                // dwᵢ = wᵢ (gᵢ − Σ wⱼ gⱼ) with gᵢ = −2 (x − cᵢ)·d / σ²
                let mut value = Vector::zeros();
                let mut weighted = Vector::zeros();
                let mut mean = 0.0;
                for ((c, a), wi) in centers.iter().zip(coefficients).zip(&w) {
                    if *wi == 0.0 {
                        continue;
                    }
                    let g = -2.0 * (x - c).dot(d) / s2;
                    mean += wi * g;
                    value += a * *wi;
                    weighted += a * (wi * g);
                }
                (value, weighted - value * mean)
            }
        }
    }
}

/// Gaussian weights normalized to sum to one, evaluated with a shifted exponent.
fn normalized_weights(centers: &[Vector], x: &Vector, width: f64) -> Vec<f64> {
    let s2 = width * width;
    let r2: Vec<f64> = centers.iter().map(|c| (x - c).norm_squared()).collect();
    let shift = r2.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = r2
        .iter()
        .map(|r| {
            let e = (r - shift) / s2;
            if e > 40.0 {
                0.0
            } else {
                (-e).exp()
            }
        })
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

impl VectorField for AmbientField {
    fn eval(&self, x: &Vector) -> Vector {
        self.model.tangent_project(x, &self.raw(x))
    }

    fn jvp(&self, x: &Vector, d: &Vector) -> Vector {
        self.eval_with_jvp(x, d).1
    }

    fn eval_with_jvp(&self, x: &Vector, d: &Vector) -> (Vector, Vector) {
        let (u, du) = self.raw_with_jvp(x, d);
        (self.model.tangent_project(x, &u), self.model.tangent_project_jvp(x, &u, &du, d))
    }
}

/// The field Σ wᵢ Xᵢ for a list of ambient fields on one model.
pub struct FieldCombination<'a> {
    pub model: &'a ManifoldModel,
    pub fields: &'a [AmbientField],
    pub weights: Vec<f64>,
}

impl FieldCombination<'_> {
    fn raw_with_jvp(&self, x: &Vector, d: &Vector) -> (Vector, Vector) {
        self.fields
            .iter()
            .zip(&self.weights)
            .filter(|(_, w)| **w != 0.0)
            .fold((Vector::zeros(), Vector::zeros()), |(u, du), (f, w)| {
                let (a, b) = f.raw_with_jvp(x, d);
                (u + a * *w, du + b * *w)
            })
    }
}

impl VectorField for FieldCombination<'_> {
    fn eval(&self, x: &Vector) -> Vector {
        self.eval_with_jvp(x, &Vector::zeros()).0
    }

    fn jvp(&self, x: &Vector, d: &Vector) -> Vector {
        self.eval_with_jvp(x, d).1
    }

    fn eval_with_jvp(&self, x: &Vector, d: &Vector) -> (Vector, Vector) {
        let (u, du) = self.raw_with_jvp(x, d);
        (self.model.tangent_project(x, &u), self.model.tangent_project_jvp(x, &u, &du, d))
    }
}

/// Time-`time` flow of a vector field, integrated with fixed-step RK4.
pub struct DiffeoFlow<'a> {
    pub model: &'a ManifoldModel,
    pub field: &'a dyn VectorField,
    pub time: f64,
    pub steps: usize,
}

impl DiffeoFlow<'_> {
    /// Advects a point together with a tangent vector (variational equation).
    pub fn apply(&self, x: &Vector, d: &Vector) -> (Vector, Vector) {
        if self.time == 0.0 {
            return (*x, *d);
        }
        let h = self.time / self.steps.max(1) as f64;
        let f = |x: &Vector, d: &Vector| self.field.eval_with_jvp(x, d);
        let (mut x, mut d) = (*x, *d);
        for _ in 0..self.steps.max(1) {
            let (k1x, k1d) = f(&x, &d);
            let (k2x, k2d) = f(&(x + k1x * (0.5 * h)), &(d + k1d * (0.5 * h)));
            let (k3x, k3d) = f(&(x + k2x * (0.5 * h)), &(d + k2d * (0.5 * h)));
            let (k4x, k4d) = f(&(x + k3x * h), &(d + k3d * h));
            x += (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0);
            d += (k1d + k2d * 2.0 + k3d * 2.0 + k4d) * (h / 6.0);
        }
        let x = self.model.project(&x);
        (x, self.model.tangent_project(&x, &d))
    }

    pub fn apply_point(&self, x: &Vector) -> Vector {
        self.apply(x, &Vector::zeros()).0
    }
}

/// Pushes samples forward: points advected, directions by the differential, weights
/// multiplied by the tangential stretch.
pub fn pushforward(v: &DiscreteVarifold, flow: &DiffeoFlow) -> Result<DiscreteVarifold> {
    if flow.time == 0.0 {
        return Ok(v.clone());
    }
    let model = flow.model;
    let push = |s: &VarifoldSample| -> Result<VarifoldSample> {
        let (x, d) = flow.apply(&s.point, &s.direction);
        let before = model.norm(&s.point, &s.direction);
        let after = model.norm(&x, &d);
        let stretch = after / before;
        if !stretch.is_finite() || x.iter().any(|c| !c.is_finite()) {
            return Err(GeonetError::Numeric("flow produced a non-finite sample".into()));
        }
        Ok(VarifoldSample {
            point: x,
            direction: d / d.norm(),
            weight: s.weight * stretch,
        })
    };
    let samples: Vec<VarifoldSample> = if v.len() >= 64 {
        v.samples.par_iter().map(push).collect::<Result<_>>()?
    } else {
        v.samples.iter().map(push).collect::<Result<_>>()?
    };
    let mass = samples.iter().map(|s| s.weight).sum();
    Ok(DiscreteVarifold { samples, mass })
}

/// Resolution of the transport problem: varifolds with more samples than `max_atoms` are
/// coarsened by merging fixed groups of consecutive samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestGrid {
    pub max_atoms: usize,
}

impl Default for TestGrid {
    fn default() -> Self {
        TestGrid { max_atoms: 256 }
    }
}

/// An atom of the coarsened measure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub point: Vector,
    pub direction: Vector,
    pub weight: f64,
}

/// Merges consecutive samples in groups of ⌈n / max_atoms⌉. Group membership depends only
/// on sample order, so the atoms move continuously with the samples.
pub fn aggregate(model: &ManifoldModel, v: &DiscreteVarifold, grid: &TestGrid) -> Vec<Cell> {
    let group = v.len().div_ceil(grid.max_atoms.max(1)).max(1);
    v.samples()
        .chunks(group)
        .filter_map(|chunk| {
            let weight: f64 = chunk.iter().map(|s| s.weight).sum();
            if weight <= 0.0 {
                return None;
            }
            if let [s] = chunk {
                return Some(Cell {
                    point: s.point,
                    direction: s.direction,
                    weight,
                });
            }
            let base = chunk[0].point;
            let reference = chunk[0].direction;
            let (offset, dir) = chunk.iter().fold((Vector::zeros(), Vector::zeros()), |(o, d), s| {
                let sign = if reference.dot(&s.direction) < 0.0 { -1.0 } else { 1.0 };
                (o + model.displacement(&base, &s.point) * s.weight, d + s.direction * (sign * s.weight))
            });
            let point = model.wrap(&model.project(&(base + offset / weight)));
            let dir = model.tangent_project(&point, &dir);
            let direction = if dir.norm() > 1e-14 { dir.normalize() } else { reference };
            Some(Cell {
                point,
                direction,
                weight,
            })
        })
        .collect()
}

/// Metric on the direction bundle: manifold distance plus the angle between lines.
pub fn cell_distance(model: &ManifoldModel, a: &Cell, b: &Cell) -> f64 {
    model.distance(&a.point, &b.point) + a.direction.dot(&b.direction).abs().min(1.0).acos()
}

/// Bounded-Lipschitz distance between cell measures:
/// max Σ aᵢ fᵢ − Σ bⱼ gⱼ subject to fᵢ − gⱼ ≤ d(pᵢ, qⱼ) and |f|, |g| ≤ 1, solved in its
/// transport (dual) form.
pub fn cell_lp_distance(model: &ManifoldModel, p: &[Cell], q: &[Cell]) -> Result<f64> {
    if p == q {
        return Ok(0.0);
    }
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    lp.set_time_limit(Duration::from_secs(60));
    let mut rows_p: Vec<Vec<(microlp::Variable, f64)>> = vec![Vec::new(); p.len()];
    let mut rows_q: Vec<Vec<(microlp::Variable, f64)>> = vec![Vec::new(); q.len()];
    for (i, a) in p.iter().enumerate() {
        for (j, b) in q.iter().enumerate() {
            let d = cell_distance(model, a, b);
            // pairs at distance ≥ 2 cannot bind since |f|, |g| ≤ 1
            if d < 2.0 {
                let var = lp.add_var(d, (0.0, f64::INFINITY));
                rows_p[i].push((var, 1.0));
                rows_q[j].push((var, -1.0));
            }
        }
    }
    for (row, cell) in rows_p.iter_mut().zip(p) {
        row.push((lp.add_var(1.0, (0.0, f64::INFINITY)), 1.0));
        row.push((lp.add_var(1.0, (0.0, f64::INFINITY)), -1.0));
        lp.add_constraint(row.as_slice(), ComparisonOp::Eq, cell.weight);
    }
    for (row, cell) in rows_q.iter_mut().zip(q) {
        row.push((lp.add_var(1.0, (0.0, f64::INFINITY)), 1.0));
        row.push((lp.add_var(1.0, (0.0, f64::INFINITY)), -1.0));
        lp.add_constraint(row.as_slice(), ComparisonOp::Eq, -cell.weight);
    }
    let outcome = lp.solve().map_err(|e| GeonetError::Numeric(format!("LP solve failed: {e}")))?;
    let sol = outcome
        .into_solution()
        .map_err(|_| GeonetError::Numeric("LP solve hit its time limit".into()))?;
    Ok(sol.objective().max(0.0))
}

pub fn f_distance(model: &ManifoldModel, v: &DiscreteVarifold, w: &DiscreteVarifold, grid: &TestGrid) -> Result<f64> {
    cell_lp_distance(model, &aggregate(model, v, grid), &aggregate(model, w, grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::vector;
    use std::f64::consts::PI;

    fn circle(n: usize, height: f64) -> DiscreteVarifold {
        let r = (1.0 - height * height).sqrt();
        let samples = (0..n)
            .map(|i| {
                let t = 2.0 * PI * (i as f64 + 0.5) / n as f64;
                VarifoldSample {
                    point: vector(&[r * t.cos(), r * t.sin(), height]),
                    direction: vector(&[-t.sin(), t.cos(), 0.0]),
                    weight: 2.0 * PI * r / n as f64,
                }
            })
            .collect();
        DiscreteVarifold::new(samples).unwrap()
    }

    #[test]
    fn mass_of_equator_and_empty() {
        assert!((circle(512, 0.0).mass() - 2.0 * PI).abs() < 1e-12);
        assert_eq!(DiscreteVarifold::empty().mass(), 0.0);
    }

    #[test]
    fn identity_and_rotation_preserve_mass() {
        let s2 = ManifoldModel::sphere(2).unwrap();
        let v = circle(256, 0.0);
        let rot = AmbientField::rotation(&s2, 1, 2, 0.7);
        let id = DiffeoFlow {
            model: &s2,
            field: &rot,
            time: 0.0,
            steps: 32,
        };
        assert_eq!(pushforward(&v, &id).unwrap(), v);
        let flow = DiffeoFlow { time: 1.0, ..id };
        assert!((pushforward(&v, &flow).unwrap().mass() - 2.0 * PI).abs() < 1e-10);
    }

    #[test]
    fn field_jvp_matches_finite_differences() {
        let e = ManifoldModel::ellipsoid(1.0, 0.9, 1.2).unwrap();
        let mut a = Matrix6::zeros();
        a[(0, 1)] = 0.3;
        a[(2, 0)] = -0.4;
        a[(1, 2)] = 0.2;
        let f = AmbientField::linear(&e, a, vector(&[0.1, -0.2, 0.3]));
        let x = e.project(&vector(&[0.3, 0.5, 0.6]));
        let d = e.tangent_project(&x, &vector(&[0.2, -0.1, 0.4]));
        let h = 1e-6;
        let fd = (f.eval(&(x + d * h)) - f.eval(&(x - d * h))) / (2.0 * h);
        assert!((fd - f.jvp(&x, &d)).norm() < 1e-8);
    }

    #[test]
    fn interpolant_reproduces_values_and_constants() {
        let s2 = ManifoldModel::sphere(2).unwrap();
        let pts: Vec<(Vector, Vector)> = (0..24)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / 24.0;
                (vector(&[t.cos(), t.sin(), 0.0]), vector(&[0.0, 0.0, 1.0 + 0.3 * t.sin()]))
            })
            .collect();
        let f = AmbientField::interpolate(&s2, &pts, 0.4).unwrap();
        for (x, u) in &pts {
            assert!((f.raw(x) - u).norm() < 1e-9);
        }
        let flat: Vec<(Vector, Vector)> = pts.iter().map(|(x, _)| (*x, vector(&[0.0, 0.0, 1.0]))).collect();
        let g = AmbientField::interpolate(&s2, &flat, 0.4).unwrap();
        assert!((g.raw(&vector(&[0.0, 0.6, 0.8])) - vector(&[0.0, 0.0, 1.0])).norm() < 1e-9);
        let x = vector(&[0.3, 0.2, 0.4]);
        let d = vector(&[0.1, -0.7, 0.2]);
        let h = 1e-6;
        let fd = (f.raw(&(x + d * h)) - f.raw(&(x - d * h))) / (2.0 * h);
        assert!((fd - f.raw_jvp(&x, &d)).norm() < 1e-7);
    }

    #[test]
    fn fdist_basic_properties() {
        let s2 = ManifoldModel::sphere(2).unwrap();
        let grid = TestGrid::default();
        let v = circle(128, 0.0);
        let w = circle(128, 0.3);
        assert_eq!(f_distance(&s2, &v, &v, &grid).unwrap(), 0.0);
        let a = f_distance(&s2, &v, &w, &grid).unwrap();
        let b = f_distance(&s2, &w, &v, &grid).unwrap();
        assert!((a - b).abs() < 1e-9);
        assert!(a > 0.0 && a <= v.mass() + w.mass());
        assert!((f_distance(&s2, &v, &DiscreteVarifold::empty(), &grid).unwrap() - v.mass()).abs() < 1e-9);
    }

    #[test]
    fn fdist_is_continuous_under_small_pushes() {
        let s2 = ManifoldModel::sphere(2).unwrap();
        let v = circle(128, 0.0);
        let f = AmbientField::translation(&s2, vector(&[0.0, 0.0, 1.0]));
        let mut last = f64::INFINITY;
        for t in [1e-1, 1e-2, 1e-4, 1e-8] {
            let w = pushforward(&v, &DiffeoFlow { model: &s2, field: &f, time: t, steps: 32 }).unwrap();
            let d = f_distance(&s2, &v, &w, &TestGrid::default()).unwrap();
            // transport every atom along its meridian, then discard the mass difference
            let bound = 2.0 * PI * t.tanh().asin() + (v.mass() - w.mass()).abs();
            assert!(d < last && d <= bound * (1.0 + 1e-5), "{t}: {d} > {bound}");
            last = d;
        }
    }

    #[test]
    fn coarsening_keeps_mass() {
        let s2 = ManifoldModel::sphere(2).unwrap();
        let v = circle(1000, 0.2);
        let cells = aggregate(&s2, &v, &TestGrid { max_atoms: 100 });
        assert_eq!(cells.len(), 100);
        assert!((cells.iter().map(|c| c.weight).sum::<f64>() - v.mass()).abs() < 1e-12);
        assert!(cells.iter().all(|c| (c.point.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn csv_round_trip() {
        let v = circle(16, 0.1);
        let back = DiscreteVarifold::from_csv(&v.to_csv(3), 3).unwrap();
        assert!((back.mass() - v.mass()).abs() < 1e-12);
        assert_eq!(back.len(), 16);
    }
}
