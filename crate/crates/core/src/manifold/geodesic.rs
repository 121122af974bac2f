use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ManifoldModel, PointTangent, Vector};
use crate::error::{GeonetError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Integrator {
    /// Dormand–Prince 5(4) with error control at `ode_tol`.
    #[default]
    Dopri5,
    /// Classical fourth-order Runge–Kutta, one step per sample interval.
    Rk4,
}

impl Integrator {
    pub fn order(self) -> u32 {
        match self {
            Integrator::Dopri5 => 5,
            Integrator::Rk4 => 4,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegratorStats {
    pub accepted: usize,
    pub rejected: usize,
    /// Largest |speed − 1| seen before renormalization.
    pub max_speed_drift: f64,
}

/// Arc-length parameterized geodesic with uniformly spaced samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeodesicSegment {
    pub start: Vector,
    /// Unit initial velocity.
    pub velocity: Vector,
    pub length: f64,
    pub points: Vec<Vector>,
    /// Unit tangents at the sample points.
    pub tangents: Vec<Vector>,
    pub stats: IntegratorStats,
}

impl GeodesicSegment {
    pub fn end(&self) -> &Vector {
        self.points.last().expect("segment has samples")
    }

    pub fn end_tangent(&self) -> &Vector {
        self.tangents.last().expect("segment has samples")
    }

    pub fn steps(&self) -> usize {
        self.points.len() - 1
    }
}

#[derive(Clone, Copy)]
struct Phase {
    x: Vector,
    v: Vector,
}

impl Phase {
    fn axpy(&self, h: f64, k: &Phase) -> Phase {
        Phase {
            x: self.x + k.x * h,
            v: self.v + k.v * h,
        }
    }
}

fn rhs(model: &ManifoldModel, p: &Phase) -> Phase {
    Phase {
        x: p.v,
        v: model.spray(&p.x, &p.v),
    }
}

fn combine(base: &Phase, h: f64, ks: &[Phase], coeffs: &[f64]) -> Phase {
    let mut out = *base;
    for (k, c) in ks.iter().zip(coeffs) {
        if *c != 0.0 {
            out = out.axpy(h * c, k);
        }
    }
    out
}

fn rk4_step(model: &ManifoldModel, y: &Phase, h: f64) -> Phase {
    let k1 = rhs(model, y);
    let k2 = rhs(model, &y.axpy(0.5 * h, &k1));
    let k3 = rhs(model, &y.axpy(0.5 * h, &k2));
    let k4 = rhs(model, &y.axpy(h, &k3));
    combine(y, h, &[k1, k2, k3, k4], &[1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0])
}

const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One Dormand–Prince step; returns the fifth-order solution and the max-norm error estimate.
fn dopri_step(model: &ManifoldModel, y: &Phase, h: f64) -> (Phase, f64) {
    let mut ks: Vec<Phase> = Vec::with_capacity(7);
    ks.push(rhs(model, y));
    for row in A.iter() {
        let stage = combine(y, h, &ks, row);
        ks.push(rhs(model, &stage));
    }
    let y5 = combine(y, h, &ks[..6], &A[5]);
    let mut err = 0.0f64;
    let b5 = [A[5][0], A[5][1], A[5][2], A[5][3], A[5][4], A[5][5], 0.0];
    for i in 0..super::MAX_AMBIENT {
        let mut ex = 0.0;
        let mut ev = 0.0;
        for (j, k) in ks.iter().enumerate() {
            let w = b5[j] - B4[j];
            ex += w * k.x[i];
            ev += w * k.v[i];
        }
        err = err.max((h * ex).abs()).max((h * ev).abs());
    }
    (y5, err)
}

/// Projects the state back to the manifold and restores unit speed.
fn renormalize(model: &ManifoldModel, y: &mut Phase, stats: &mut IntegratorStats) {
    y.x = model.project(&y.x);
    y.v = model.tangent_project(&y.x, &y.v);
    let speed = model.norm(&y.x, &y.v);
    stats.max_speed_drift = stats.max_speed_drift.max((speed - 1.0).abs());
    y.v /= speed;
}

fn advance(
    model: &ManifoldModel,
    y: &mut Phase,
    span: f64,
    h: &mut f64,
    method: Integrator,
    stats: &mut IntegratorStats,
) -> Result<()> {
    match method {
        Integrator::Rk4 => {
            *y = rk4_step(model, y, span);
            stats.accepted += 1;
            renormalize(model, y, stats);
        }
        Integrator::Dopri5 => {
            let tol = model.tol.ode_tol;
            let mut t = 0.0;
            while t < span {
                let remaining = span - t;
                let last = *h >= remaining;
                let step = if last { remaining } else { *h };
                let (cand, err) = dopri_step(model, y, step);
                if !err.is_finite() || cand.x.iter().any(|c| !c.is_finite()) {
                    return Err(GeonetError::Integration("non-finite state".into()));
                }
                let ratio = err / tol;
                let factor = if ratio == 0.0 {
                    5.0
                } else {
                    (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0)
                };
                if ratio <= 1.0 {
                    t = if last { span } else { t + step };
                    *y = cand;
                    renormalize(model, y, stats);
                    stats.accepted += 1;
                    // a step shortened to hit the sample point says little about the scale
                    if !last || factor < 1.0 {
                        *h = step * factor;
                    }
                } else {
                    stats.rejected += 1;
                    *h = step * factor;
                }
                if *h < 1e-12 * span.max(1.0) {
                    return Err(GeonetError::Integration(format!(
                        "step size underflow ({:.2e})",
                        *h
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Integrates the geodesic from `start` (direction normalized) for arc length `length`,
/// returning `steps + 1` uniformly spaced samples.
pub fn geodesic_shoot(
    model: &ManifoldModel,
    start: &PointTangent,
    length: f64,
    steps: usize,
) -> Result<GeodesicSegment> {
    geodesic_shoot_with(model, start, length, steps, Integrator::Dopri5)
}

pub fn geodesic_shoot_with(
    model: &ManifoldModel,
    start: &PointTangent,
    length: f64,
    steps: usize,
    method: Integrator,
) -> Result<GeodesicSegment> {
    if steps < 8 {
        return Err(GeonetError::rejected("geodesic shooting needs at least 8 steps"));
    }
    if !(start.norm > 0.0) {
        return Err(GeonetError::rejected("start tangent is zero"));
    }
    if !(length > 0.0 && length.is_finite()) {
        return Err(GeonetError::rejected("geodesic length must be positive"));
    }
    shoot_raw(model, &start.point, &start.tangent, length, steps, method)
}

fn shoot_raw(
    model: &ManifoldModel,
    point: &Vector,
    tangent: &Vector,
    length: f64,
    steps: usize,
    method: Integrator,
) -> Result<GeodesicSegment> {
    let mut stats = IntegratorStats::default();
    let x0 = model.project(point);
    let v0 = model.tangent_project(&x0, tangent);
    let v0 = v0 / model.norm(&x0, &v0);
    let mut y = Phase { x: x0, v: v0 };
    let ds = length / steps as f64;
    let mut h = ds.min(0.05);
    let mut points = Vec::with_capacity(steps + 1);
    let mut tangents = Vec::with_capacity(steps + 1);
    points.push(y.x);
    tangents.push(y.v);
    for _ in 0..steps {
        advance(model, &mut y, ds, &mut h, method, &mut stats)?;
        points.push(y.x);
        tangents.push(y.v);
    }
    Ok(GeodesicSegment {
        start: x0,
        velocity: v0,
        length,
        points,
        tangents,
        stats,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BvpOptions {
    pub samples: usize,
    pub max_iterations: usize,
    /// Overrides the model's `bvp_tol` when set.
    pub tol: Option<f64>,
}

impl Default for BvpOptions {
    fn default() -> Self {
        BvpOptions {
            samples: 64,
            max_iterations: 60,
            tol: None,
        }
    }
}

/// Solves for the geodesic from p to q by damped Gauss–Newton shooting on the initial
/// velocity. `guess` is an initial velocity whose norm is the length estimate; a zero guess
/// falls back to the projected chord.
pub fn geodesic_bvp(model: &ManifoldModel, p: &Vector, q: &Vector, guess: &Vector) -> Result<GeodesicSegment> {
    geodesic_bvp_with(model, p, q, guess, &BvpOptions::default())
}

pub fn geodesic_bvp_with(
    model: &ManifoldModel,
    p: &Vector,
    q: &Vector,
    guess: &Vector,
    opts: &BvpOptions,
) -> Result<GeodesicSegment> {
    let p = model.project(p);
    let q = model.project(q);
    let basis = model.tangent_basis(&p);
    let n = basis.len();
    let amb = model.ambient_dim();
    let mut w = model.tangent_project(&p, guess);
    if model.norm(&p, &w) < 1e-14 {
        w = model.chord_guess(&p, &q);
    }
    if model.norm(&p, &w) < 1e-14 {
        return Err(GeonetError::rejected("coincident endpoints need a nontrivial loop guess"));
    }
    let to_velocity = |alpha: &DVector<f64>| -> Vector {
        basis.iter().zip(alpha.iter()).fold(Vector::zeros(), |acc, (b, a)| acc + b * *a)
    };
    let evaluate = |alpha: &DVector<f64>| -> Result<(GeodesicSegment, DVector<f64>)> {
        let len = alpha.norm();
        if len < 1e-12 {
            return Err(GeonetError::Bvp { residual: f64::NAN });
        }
        let seg = shoot_raw(model, &p, &to_velocity(alpha), len, opts.samples, Integrator::Dopri5)?;
        let miss = model.displacement(&q, seg.end());
        Ok((seg, DVector::from_iterator(amb, miss.iter().take(amb).copied())))
    };

    let tol = opts.tol.unwrap_or(model.tol.bvp_tol);
    let mut alpha = DVector::from_vec(model.coordinates(&p, &basis, &w));
    let (mut seg, mut r) = evaluate(&alpha)?;
    for _ in 0..opts.max_iterations {
        let rn = r.norm();
        if rn < tol {
            return Ok(seg);
        }
        let h = 1e-7 * alpha.norm().max(1.0);
        let mut jac = DMatrix::zeros(amb, n);
        for j in 0..n {
            let mut a = alpha.clone();
            a[j] += h;
            let (_, rj) = evaluate(&a)?;
            jac.set_column(j, &((rj - &r) / h));
        }
        let delta = jac
            .svd(true, true)
            .solve(&(-&r), 1e-12)
            .map_err(|e| GeonetError::Numeric(e.to_string()))?;
        let mut lam = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &alpha + &delta * lam;
            if let Ok((s, rc)) = evaluate(&cand) {
                if rc.norm() < rn {
                    alpha = cand;
                    seg = s;
                    r = rc;
                    accepted = true;
                    break;
                }
            }
            lam *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let residual = r.norm();
    if residual < tol {
        Ok(seg)
    } else {
        Err(GeonetError::Bvp { residual })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::vector;
    use std::f64::consts::PI;

    fn pt(model: &ManifoldModel, x: &[f64], v: &[f64]) -> PointTangent {
        PointTangent::new(model, vector(x), vector(v)).unwrap()
    }

    #[test]
    fn great_circle_closes() {
        let s2 = ManifoldModel::sphere(2).unwrap();
        let seg = geodesic_shoot(&s2, &pt(&s2, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]), 2.0 * PI, 64).unwrap();
        assert!((seg.end() - vector(&[1.0, 0.0, 0.0])).norm() < 1e-8);
        assert!(seg.stats.max_speed_drift < 1e-9);
    }

    #[test]
    fn torus_shoot_is_straight() {
        let t = ManifoldModel::torus(&[1.0, 1.0]).unwrap();
        let seg = geodesic_shoot(&t, &pt(&t, &[0.2, 0.1], &[3.0, 4.0]), 2.5, 16).unwrap();
        assert!((seg.end() - vector(&[0.2 + 1.5, 0.1 + 2.0])).norm() < 1e-12);
    }

    #[test]
    fn ellipsoid_waist_closes() {
        let e = ManifoldModel::ellipsoid(1.0, 1.0, 1.2).unwrap();
        let seg = geodesic_shoot(&e, &pt(&e, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]), 2.0 * PI, 128).unwrap();
        assert!((seg.end() - vector(&[1.0, 0.0, 0.0])).norm() < 1e-8);
    }

    #[test]
    fn rejects_bad_input() {
        let s2 = ManifoldModel::sphere(2).unwrap();
        let start = pt(&s2, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]);
        assert!(geodesic_shoot(&s2, &start, 1.0, 4).is_err());
        let zero = pt(&s2, &[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0]);
        assert!(geodesic_shoot(&s2, &zero, 1.0, 16).is_err());
    }

    #[test]
    fn bvp_quarter_circle() {
        let s2 = ManifoldModel::sphere(2).unwrap();
        let seg = geodesic_bvp(&s2, &vector(&[1.0, 0.0, 0.0]), &vector(&[0.0, 1.0, 0.0]), &vector(&[0.0, 1.0, 0.0])).unwrap();
        assert!((seg.length - PI / 2.0).abs() < 1e-9);
    }

    #[test]
    fn bvp_torus_segment() {
        let t = ManifoldModel::torus(&[1.0, 1.0]).unwrap();
        let seg = geodesic_bvp(&t, &vector(&[0.0, 0.0]), &vector(&[0.3, 0.4]), &vector(&[0.1, 0.1])).unwrap();
        assert!((seg.length - 0.5).abs() < 1e-10);
    }

    #[test]
    fn bvp_near_antipodal() {
        let s2 = ManifoldModel::sphere(2).unwrap();
        let p = vector(&[1.0, 0.0, 0.0]);
        let q = s2.project(&vector(&[-1.0, 1e-3, 0.0]));
        let seg = geodesic_bvp(&s2, &p, &q, &vector(&[0.0, 3.0, 0.0])).unwrap();
        let oracle = p.dot(&q).clamp(-1.0, 1.0).acos();
        assert!((seg.length - oracle).abs() < 1e-8);
        assert!((seg.length - PI).abs() < 2e-3);
    }
}
