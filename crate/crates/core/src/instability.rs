//! k-parameter deformation families, mass profiles over the parameter ball, concavity
//! certification on a sampled neighborhood, and conversion between families and negative
//! variation fields.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GeonetError, Result};
use crate::index::{index_from_form, IndexForm, VariationField};
use crate::manifold::{ManifoldModel, Vector};
use crate::net::GeodesicNet;
use crate::varifold::{
    f_distance, pushforward, AmbientField, DiffeoFlow, DiscreteVarifold, FieldCombination, Matrix6, TestGrid,
};

/// F_v = time-1 flow of scale·Σ vᵢXᵢ for v in the closed unit ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffeoFamily {
    pub model: ManifoldModel,
    pub fields: Vec<AmbientField>,
    pub scale: f64,
    pub steps: usize,
}

pub const DEFAULT_FLOW_STEPS: usize = 32;

impl DiffeoFamily {
    pub fn new(model: &ManifoldModel, fields: Vec<AmbientField>, scale: f64) -> Result<Self> {
        if fields.is_empty() {
            return Err(GeonetError::rejected("a family needs at least one field"));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(GeonetError::rejected("family scale must be positive"));
        }
        Ok(DiffeoFamily {
            model: model.clone(),
            fields,
            scale,
            steps: DEFAULT_FLOW_STEPS,
        })
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps.max(1);
        self
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn k(&self) -> usize {
        self.fields.len()
    }

    fn check(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.k() {
            return Err(GeonetError::rejected(format!("parameter has {} entries, family has {}", v.len(), self.k())));
        }
        if v.norm() > 1.0 + 1e-12 {
            return Err(GeonetError::rejected(format!("parameter {:.6} lies outside the unit ball", v.norm())));
        }
        Ok(())
    }

    fn combination(&self, v: &DVector<f64>) -> FieldCombination<'_> {
        FieldCombination {
            model: &self.model,
            fields: &self.fields,
            weights: v.iter().map(|c| c * self.scale).collect(),
        }
    }

    pub fn push(&self, varifold: &DiscreteVarifold, v: &DVector<f64>) -> Result<DiscreteVarifold> {
        self.check(v)?;
        if v.iter().all(|c| *c == 0.0) {
            return Ok(varifold.clone());
        }
        let field = self.combination(v);
        pushforward(
            varifold,
            &DiffeoFlow {
                model: &self.model,
                field: &field,
                time: 1.0,
                steps: self.steps,
            },
        )
    }

    pub fn map_point(&self, v: &DVector<f64>, x: &Vector) -> Result<Vector> {
        self.check(v)?;
        let field = self.combination(v);
        Ok(DiffeoFlow {
            model: &self.model,
            field: &field,
            time: 1.0,
            steps: self.steps,
        }
        .apply_point(x))
    }
}

/// A function on the closed unit ball of ℝᵏ.
pub trait Profile: Sync {
    fn dim(&self) -> usize;
    fn value(&self, v: &DVector<f64>) -> Result<f64>;
}

/// v ↦ mass of the pushforward of V under F_v.
pub struct MassProfile<'a> {
    pub varifold: &'a DiscreteVarifold,
    pub family: &'a DiffeoFamily,
}

impl Profile for MassProfile<'_> {
    fn dim(&self) -> usize {
        self.family.k()
    }

    fn value(&self, v: &DVector<f64>) -> Result<f64> {
        Ok(self.family.push(self.varifold, v)?.mass())
    }
}

pub fn mass_profile(varifold: &DiscreteVarifold, family: &DiffeoFamily, v: &DVector<f64>) -> Result<f64> {
    MassProfile { varifold, family }.value(v)
}

/// A(v) = peak − ½ (v − m)ᵀ H (v − m).
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticProfile {
    pub peak: f64,
    pub center: DVector<f64>,
    pub curvature: DMatrix<f64>,
}

impl QuadraticProfile {
    pub fn isotropic(peak: f64, center: DVector<f64>, c0: f64) -> Self {
        let k = center.len();
        QuadraticProfile {
            peak,
            center,
            curvature: DMatrix::identity(k, k) * c0,
        }
    }

    pub fn gradient(&self, v: &DVector<f64>) -> DVector<f64> {
        -(&self.curvature * (v - &self.center))
    }
}

impl Profile for QuadraticProfile {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, v: &DVector<f64>) -> Result<f64> {
        let d = v - &self.center;
        Ok(self.peak - 0.5 * d.dot(&(&self.curvature * &d)))
    }
}

fn stencil_reach(k: usize, step: f64) -> f64 {
    if k >= 2 {
        step * std::f64::consts::SQRT_2
    } else {
        step
    }
}

fn evaluate_all(profile: &dyn Profile, points: &[DVector<f64>]) -> Result<Vec<f64>> {
    points.par_iter().map(|p| profile.value(p)).collect()
}

fn raw_hessian(profile: &dyn Profile, u: &DVector<f64>, h: f64, center: f64) -> Result<DMatrix<f64>> {
    let k = profile.dim();
    let unit = |i: usize| DVector::from_fn(k, |j, _| if i == j { h } else { 0.0 });
    let mut points = vec![];
    for i in 0..k {
        points.push(u + unit(i));
        points.push(u - unit(i));
    }
    for i in 0..k {
        for j in i + 1..k {
            let (a, b) = (unit(i), unit(j));
            points.push(u + &a + &b);
            points.push(u + &a - &b);
            points.push(u - &a + &b);
            points.push(u - &a - &b);
        }
    }
    let mut f = vec![center];
    f.extend(evaluate_all(profile, &points)?);
    let mut hess = DMatrix::zeros(k, k);
    for i in 0..k {
        hess[(i, i)] = (f[1 + 2 * i] - 2.0 * f[0] + f[2 + 2 * i]) / (h * h);
    }
    let mut at = 1 + 2 * k;
    for i in 0..k {
        for j in i + 1..k {
            let v = (f[at] - f[at + 1] - f[at + 2] + f[at + 3]) / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
            at += 4;
        }
    }
    Ok(hess)
}

/// Central second differences at `step` and `step/2`, combined by one Richardson level.
pub fn profile_hessian(profile: &dyn Profile, u: &DVector<f64>, step: f64) -> Result<DMatrix<f64>> {
    let k = profile.dim();
    check_stencil(k, u, step)?;
    let center = profile.value(u)?;
    let coarse = raw_hessian(profile, u, step, center)?;
    let fine = raw_hessian(profile, u, 0.5 * step, center)?;
    Ok((fine * 4.0 - coarse) / 3.0)
}

fn check_stencil(k: usize, u: &DVector<f64>, step: f64) -> Result<()> {
    if u.len() != k {
        return Err(GeonetError::rejected("evaluation point has the wrong dimension"));
    }
    if !(step > 0.0) {
        return Err(GeonetError::rejected("difference step must be positive"));
    }
    if u.norm() + stencil_reach(k, step) > 1.0 + 1e-12 {
        return Err(GeonetError::rejected(format!(
            "difference stencil of reach {:.3e} at |u| = {:.6} leaves the unit ball",
            stencil_reach(k, step),
            u.norm()
        )));
    }
    Ok(())
}

/// Central first differences at `step` and `step/2` with one Richardson level.
pub fn profile_gradient(profile: &dyn Profile, u: &DVector<f64>, step: f64) -> Result<DVector<f64>> {
    let k = profile.dim();
    if u.norm() + step > 1.0 + 1e-12 {
        return Err(GeonetError::rejected("gradient stencil leaves the unit ball"));
    }
    let mut points = Vec::with_capacity(4 * k);
    for h in [step, 0.5 * step] {
        for i in 0..k {
            let e = DVector::from_fn(k, |j, _| if i == j { h } else { 0.0 });
            points.push(u + &e);
            points.push(u - e);
        }
    }
    let f = evaluate_all(profile, &points)?;
    Ok(DVector::from_fn(k, |i, _| {
        let coarse = (f[2 * i] - f[2 * i + 1]) / (2.0 * step);
        let fine = (f[2 * k + 2 * i] - f[2 * k + 2 * i + 1]) / step;
        (4.0 * fine - coarse) / 3.0
    }))
}

fn eigenvalue_range(h: &DMatrix<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(h.clone()).eigenvalues;
    (eig.min(), eig.max())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxOptions {
    pub hessian_step: f64,
    pub gradient_step: f64,
    pub max_iterations: usize,
    pub tol: f64,
    /// Hessians with an eigenvalue above −floor count as not concave.
    pub concavity_floor: f64,
    pub best_effort: bool,
}

impl Default for MaxOptions {
    fn default() -> Self {
        MaxOptions {
            hessian_step: 1e-2,
            gradient_step: 1e-3,
            max_iterations: 50,
            tol: 1e-10,
            concavity_floor: 1e-3,
            best_effort: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxResult {
    pub point: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// False when the iterate was held at the admissible radius.
    pub interior: bool,
}

/// Damped Newton ascent from the origin.
pub fn find_max(profile: &dyn Profile, opts: &MaxOptions) -> Result<MaxResult> {
    let k = profile.dim();
    let radius = 1.0 - stencil_reach(k, opts.hessian_step).max(opts.gradient_step) - 1e-9;
    let mut u = DVector::zeros(k);
    let mut value = profile.value(&u)?;
    let mut interior = true;
    for it in 0..opts.max_iterations {
        let g = profile_gradient(profile, &u, opts.gradient_step)?;
        check_stencil(k, &u, opts.hessian_step)?;
        let h = raw_hessian(profile, &u, opts.hessian_step, value)?;
        let (_, top) = eigenvalue_range(&h);
        let concave = top < -opts.concavity_floor;
        if !concave && !opts.best_effort {
            return Err(GeonetError::rejected(format!(
                "profile is not concave at {:?}: Hessian eigenvalue {top:.3e}",
                u.as_slice()
            )));
        }
        if g.norm() < opts.tol {
            return Ok(MaxResult {
                point: u.iter().copied().collect(),
                value,
                iterations: it,
                converged: true,
                interior,
            });
        }
        let mut step = match (-h).cholesky().filter(|_| concave) {
            Some(c) => c.solve(&g),
            None => g.clone() * 0.1,
        };
        let mut accepted = false;
        for _ in 0..40 {
            let mut trial = &u + &step;
            let held = trial.norm() > radius;
            if held {
                trial *= radius / trial.norm();
            }
            let tv = profile.value(&trial)?;
            if tv >= value - 1e-15 * value.abs().max(1.0) {
                let moved = (&trial - &u).norm();
                u = trial;
                value = tv;
                interior = !held;
                accepted = true;
                if moved < 1e-13 {
                    return Ok(MaxResult {
                        point: u.iter().copied().collect(),
                        value,
                        iterations: it + 1,
                        converged: true,
                        interior,
                    });
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Ok(MaxResult {
                point: u.iter().copied().collect(),
                value,
                iterations: it + 1,
                converged: true,
                interior,
            });
        }
    }
    Ok(MaxResult {
        point: u.iter().copied().collect(),
        value,
        iterations: opts.max_iterations,
        converged: false,
        interior,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyOptions {
    pub budget: usize,
    pub samples_per_arc: usize,
    pub grid_spacing: f64,
    pub concavity_floor: f64,
    pub max: MaxOptions,
    pub test_grid: TestGrid,
    pub seed: u64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            budget: 64,
            samples_per_arc: 64,
            grid_spacing: 0.45,
            concavity_floor: 1e-3,
            max: MaxOptions::default(),
            test_grid: TestGrid::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: usize,
    pub label: String,
    pub distance: f64,
    pub mass: f64,
    pub max_point: Vec<f64>,
    pub max_value: f64,
    pub hessian_min: f64,
    pub hessian_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstabilityCertificate {
    pub eps: f64,
    pub c0: f64,
    pub family: DiffeoFamily,
    pub grid: Vec<Vec<f64>>,
    pub hessian_step: f64,
    /// Most and least negative Hessian eigenvalues over all samples and grid points.
    pub hessian_window: [f64; 2],
    pub samples: Vec<SampleRecord>,
    /// The conditions are verified on the listed samples only.
    pub semantics: String,
}

impl InstabilityCertificate {
    pub fn k(&self) -> usize {
        self.family.k()
    }

    pub fn center_max(&self) -> &[f64] {
        &self.samples[0].max_point
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "condition", rename_all = "kebab-case")]
pub enum Violation {
    NotConcave { at: Vec<f64>, eigenvalue: f64 },
    MaximumOutside { max_point: Vec<f64>, radius: f64 },
    NoMaximum { message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificationFailure {
    pub sample: usize,
    pub label: String,
    pub distance: f64,
    pub violation: Violation,
    pub samples_checked: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum Certification {
    Certified(InstabilityCertificate),
    Failed(CertificationFailure),
}

impl Certification {
    pub fn certificate(&self) -> Option<&InstabilityCertificate> {
        match self {
            Certification::Certified(c) => Some(c),
            Certification::Failed(_) => None,
        }
    }

    pub fn is_certified(&self) -> bool {
        self.certificate().is_some()
    }
}

/// Lattice points of the given spacing inside the ball of radius `radius`.
pub fn ball_grid(k: usize, spacing: f64, radius: f64) -> Vec<DVector<f64>> {
    let n = (radius / spacing).floor() as i64;
    let mut out = Vec::new();
    let mut idx = vec![-n; k];
    loop {
        let p = DVector::from_iterator(k, idx.iter().map(|&i| i as f64 * spacing));
        if p.norm() <= radius + 1e-12 {
            out.push(p);
        }
        let mut d = 0;
        loop {
            if d == k {
                return out;
            }
            idx[d] += 1;
            if idx[d] > n {
                idx[d] = -n;
                d += 1;
            } else {
                break;
            }
        }
    }
}

enum SamplePlan {
    Center,
    Family(DVector<f64>),
    Flows(Vec<(AmbientField, f64)>),
}

fn random_linear_field(model: &ManifoldModel, rng: &mut ChaCha8Rng) -> AmbientField {
    let n = model.ambient_dim();
    let mut a = Matrix6::zeros();
    let mut b = Vector::zeros();
    for i in 0..n {
        b[i] = rng.random_range(-1.0..1.0);
        for j in 0..n {
            a[(i, j)] = rng.random_range(-1.0..1.0);
        }
    }
    AmbientField::linear(model, a, b)
}

fn apply_flows(model: &ManifoldModel, v: &DiscreteVarifold, flows: &[(AmbientField, f64)], amp: f64) -> Result<DiscreteVarifold> {
    let mut out = v.clone();
    for (field, time) in flows {
        out = pushforward(
            &out,
            &DiffeoFlow {
                model,
                field,
                time: time * amp,
                steps: DEFAULT_FLOW_STEPS,
            },
        )?;
    }
    Ok(out)
}

struct Checked {
    record: SampleRecord,
    grid_eigs: Vec<(Vec<f64>, f64, f64)>,
}

/// Checks uniform concavity and the location of the maximum on a sample of varifolds
/// within f-distance 2ε of the net: the net itself, pushes by the family, translation-type
/// shifts, and random compositions of up to three small flows.
pub fn certify_k_unstable(net: &GeodesicNet, family: &DiffeoFamily, eps: f64, opts: &CertifyOptions) -> Result<Certification> {
    if !net.is_stationary() {
        return Err(GeonetError::NonStationary(net.max_residual()));
    }
    if !(eps > 0.0) {
        return Err(GeonetError::rejected("certification radius must be positive"));
    }
    let model = &family.model;
    let k = family.k();
    let center = DiscreteVarifold::from_net(net, opts.samples_per_arc)?;
    let reach = stencil_reach(k, opts.max.hessian_step);
    let grid = ball_grid(k, opts.grid_spacing, 1.0 - reach - 1e-9);

    let mut plans = vec![("center".to_string(), SamplePlan::Center)];
    for i in 0..k {
        for s in [1.0, -1.0] {
            let v = DVector::from_fn(k, |j, _| if i == j { s * 0.5 } else { 0.0 });
            plans.push((format!("family{}{}", if s > 0.0 { '+' } else { '-' }, i), SamplePlan::Family(v)));
        }
    }
    for j in 0..model.ambient_dim() {
        for s in [1.0, -1.0] {
            let mut e = Vector::zeros();
            e[j] = s;
            plans.push((
                format!("shift{}{}", if s > 0.0 { '+' } else { '-' }, j),
                SamplePlan::Flows(vec![(AmbientField::translation(model, e), eps)]),
            ));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    while plans.len() < opts.budget {
        let count = rng.random_range(1..=3usize);
        let flows = (0..count)
            .map(|_| {
                let field = random_linear_field(model, &mut rng);
                let t = rng.random_range(0.5..1.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                (field, t * eps)
            })
            .collect();
        plans.push((format!("random{}", plans.len()), SamplePlan::Flows(flows)));
    }
    plans.truncate(opts.budget.max(1));

    let build = |plan: &SamplePlan| -> Result<(DiscreteVarifold, f64)> {
        let make = |amp: f64| -> Result<DiscreteVarifold> {
            match plan {
                SamplePlan::Center => Ok(center.clone()),
                SamplePlan::Family(v) => family.push(&center, &(v * amp)),
                SamplePlan::Flows(flows) => apply_flows(model, &center, flows, amp),
            }
        };
        if matches!(plan, SamplePlan::Center) {
            return Ok((center.clone(), 0.0));
        }
        let mut amp = 1.0;
        for _ in 0..40 {
            let v = make(amp)?;
            let d = f_distance(model, &v, &center, &opts.test_grid)?;
            if d <= 2.0 * eps {
                return Ok((v, d));
            }
            amp *= 0.5;
        }
        Err(GeonetError::Numeric("could not place a sample inside the certification ball".into()))
    };

    let check = |index: usize, label: &str, plan: &SamplePlan| -> Result<std::result::Result<Checked, CertificationFailure>> {
        let (v, distance) = build(plan)?;
        let profile = MassProfile {
            varifold: &v,
            family,
        };
        let fail = |violation| CertificationFailure {
            sample: index,
            label: label.to_string(),
            distance,
            violation,
            samples_checked: index + 1,
        };
        let mut grid_eigs = Vec::with_capacity(grid.len());
        for u in &grid {
            let (lo, hi) = eigenvalue_range(&profile_hessian(&profile, u, opts.max.hessian_step)?);
            if hi > -opts.concavity_floor {
                return Ok(Err(fail(Violation::NotConcave {
                    at: u.iter().copied().collect(),
                    eigenvalue: hi,
                })));
            }
            grid_eigs.push((u.iter().copied().collect(), lo, hi));
        }
        let max_opts = MaxOptions {
            concavity_floor: opts.concavity_floor,
            best_effort: false,
            ..opts.max
        };
        let found = match find_max(&profile, &max_opts) {
            Ok(m) => m,
            Err(GeonetError::Rejected(message)) => return Ok(Err(fail(Violation::NoMaximum { message }))),
            Err(e) => return Err(e),
        };
        if !found.interior {
            return Ok(Err(fail(Violation::NoMaximum {
                message: "maximum is not attained in the interior of the ball".into(),
            })));
        }
        let hessian_min = grid_eigs.iter().map(|g| g.1).fold(f64::INFINITY, f64::min);
        let hessian_max = grid_eigs.iter().map(|g| g.2).fold(f64::NEG_INFINITY, f64::max);
        Ok(Ok(Checked {
            record: SampleRecord {
                index,
                label: label.to_string(),
                distance,
                mass: v.mass(),
                max_point: found.point,
                max_value: found.value,
                hessian_min,
                hessian_max,
            },
            grid_eigs,
        }))
    };

    let chunk = (2 * rayon::current_num_threads()).max(1);
    let mut checked: Vec<Checked> = Vec::with_capacity(plans.len());
    for (c, block) in plans.chunks(chunk).enumerate() {
        let results: Vec<_> = block
            .par_iter()
            .enumerate()
            .map(|(i, (label, plan))| check(c * chunk + i, label, plan))
            .collect::<Result<_>>()?;
        for r in results {
            match r {
                Ok(ch) => checked.push(ch),
                Err(f) => return Ok(Certification::Failed(f)),
            }
        }
    }

    let most_negative = checked.iter().map(|c| c.record.hessian_min).fold(f64::INFINITY, f64::min);
    let least_negative = checked.iter().map(|c| c.record.hessian_max).fold(f64::NEG_INFINITY, f64::max);
    let smallest_magnitude = checked
        .iter()
        .flat_map(|c| c.grid_eigs.iter().map(|g| g.2.abs()))
        .fold(f64::INFINITY, f64::min);
    let c0 = smallest_magnitude.min(1.0 / most_negative.abs()).min(0.99);
    let radius = c0 / 10f64.sqrt();
    for c in &checked {
        let m = DVector::from_column_slice(&c.record.max_point);
        if m.norm() > radius {
            return Ok(Certification::Failed(CertificationFailure {
                sample: c.record.index,
                label: c.record.label.clone(),
                distance: c.record.distance,
                violation: Violation::MaximumOutside {
                    max_point: c.record.max_point.clone(),
                    radius,
                },
                samples_checked: checked.len(),
            }));
        }
    }
    Ok(Certification::Certified(InstabilityCertificate {
        eps,
        c0,
        family: family.clone(),
        grid: grid.iter().map(|u| u.iter().copied().collect()).collect(),
        hessian_step: opts.max.hessian_step,
        hessian_window: [most_negative, least_negative],
        samples: checked.into_iter().map(|c| c.record).collect(),
        semantics: format!("conditions verified on {} sampled varifolds and {} grid points", plans.len(), grid.len()),
    }))
}

/// Variation fields of the `k` lowest eigenvalues of the discretized index form.
pub fn lowest_eigenfields(form: &IndexForm, k: usize) -> Result<Vec<VariationField>> {
    let spectrum = form.spectrum(true)?;
    let vectors = spectrum.vectors.ok_or_else(|| GeonetError::Numeric("eigenvectors unavailable".into()))?;
    if k > vectors.ncols() {
        return Err(GeonetError::rejected("more eigenfields requested than degrees of freedom"));
    }
    Ok((0..k).map(|i| form.field(&vectors.column(i).into_owned())).collect())
}

/// Restricted index form data for a list of fields: Gram matrix and second variation.
#[derive(Clone, Debug, PartialEq)]
pub struct SpanForms {
    pub coefficients: Vec<DVector<f64>>,
    pub gram: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

impl SpanForms {
    pub fn new(form: &IndexForm, fields: &[VariationField]) -> Result<Self> {
        let coefficients: Vec<DVector<f64>> = fields.iter().map(|f| form.coefficients(f)).collect::<Result<_>>()?;
        let k = coefficients.len();
        let gram = DMatrix::from_fn(k, k, |i, j| form.gram_inner(&coefficients[i], &coefficients[j]));
        let q = DMatrix::from_fn(k, k, |i, j| form.quadratic(&coefficients[i], &coefficients[j]));
        Ok(SpanForms { coefficients, gram, q })
    }

    /// Generalized eigenvalues of the restricted second variation, or rejection when the
    /// Gram matrix is degenerate.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let g = SymmetricEigen::new(self.gram.clone()).eigenvalues;
        if g.is_empty() || !(g.min() > 1e-10 * g.max().max(0.0)) || !(g.max() > 0.0) {
            return Err(GeonetError::rejected("fields are degenerate along the net"));
        }
        let l = self
            .gram
            .clone()
            .cholesky()
            .ok_or_else(|| GeonetError::rejected("fields are degenerate along the net"))?;
        let linv = l.l().try_inverse().ok_or_else(|| GeonetError::Numeric("singular Gram factor".into()))?;
        let reduced = &linv * &self.q * linv.transpose();
        let mut e: Vec<f64> = SymmetricEigen::new((&reduced + reduced.transpose()) * 0.5).eigenvalues.iter().copied().collect();
        e.sort_by(f64::total_cmp);
        Ok(e)
    }
}

const MAX_CENTERS: usize = 48;

/// Ambient Gaussian extensions of Gram-orthonormalized fields, without checking the sign
/// of the second variation on their span.
pub fn family_from_fields_unchecked(form: &IndexForm, fields: &[VariationField], scale: f64) -> Result<DiffeoFamily> {
    let span = SpanForms::new(form, fields)?;
    span.eigenvalues()?;
    let k = fields.len();
    let l = span.gram.clone().cholesky().ok_or_else(|| GeonetError::rejected("fields are degenerate along the net"))?;
    let linv = l.l().try_inverse().ok_or_else(|| GeonetError::Numeric("singular Gram factor".into()))?;
    let model = form.model();
    let orthonormal: Vec<VariationField> = (0..k)
        .map(|i| {
            let c = (0..k).fold(DVector::zeros(form.dof_count()), |acc, j| acc + &span.coefficients[j] * linv[(i, j)]);
            form.field(&c)
        })
        .collect();

    let nodes: Vec<Vec<(Vector, Vector)>> = orthonormal.iter().map(|f| form.node_samples(f)).collect();
    let total = nodes[0].len();
    let vertex_count = orthonormal[0].vertex_values.len();
    let mut chosen: Vec<usize> = (0..vertex_count).collect();
    let rest = total - vertex_count;
    let extra = MAX_CENTERS.saturating_sub(vertex_count).max(1).min(rest);
    for j in 0..extra {
        chosen.push(vertex_count + (j * rest) / extra + rest / (2 * extra));
    }
    chosen.sort_unstable();
    chosen.dedup();
    // drop centers that nearly coincide (arc nodes next to vertices)
    let points: Vec<Vector> = chosen.iter().map(|&i| nodes[0][i].0).collect();
    let spacing: Vec<f64> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| model.distance(p, q))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut sorted = spacing;
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let mut keep = Vec::new();
    for &i in &chosen {
        let p = nodes[0][i].0;
        if i < vertex_count || keep.iter().all(|&j: &usize| model.distance(&p, &nodes[0][j].0) > 0.5 * median) {
            keep.push(i);
        }
    }
    let width = 1.5 * sorted[sorted.len() - 1];
    let fields = nodes
        .iter()
        .map(|samples| {
            let picked: Vec<(Vector, Vector)> = keep.iter().map(|&i| samples[i]).collect();
            AmbientField::interpolate(model, &picked, width)
        })
        .collect::<Result<Vec<_>>>()?;
    DiffeoFamily::new(model, fields, scale)
}

/// Family built from fields whose span is negative for the second variation.
pub fn family_from_fields(form: &IndexForm, fields: &[VariationField], scale: f64) -> Result<DiffeoFamily> {
    let eig = SpanForms::new(form, fields)?.eigenvalues()?;
    let threshold = index_from_form(form, form.model().tol.eig_tol)?.threshold;
    let top = eig.last().copied().unwrap_or(0.0);
    if top >= -threshold {
        return Err(GeonetError::rejected(format!(
            "second variation is not negative definite on the span (largest value {top:.3e})"
        )));
    }
    family_from_fields_unchecked(form, fields, scale)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtractedFields {
    pub fields: Vec<VariationField>,
    /// Generalized eigenvalues of the second variation on their span.
    pub eigenvalues: Vec<f64>,
    pub negative_definite: bool,
}

/// Yᵢ = ∂F/∂vᵢ at v = 0, by central differences at the nodes of the discretization.
pub fn fields_from_family(form: &IndexForm, family: &DiffeoFamily) -> Result<ExtractedFields> {
    let k = family.k();
    let h = 1e-4;
    let fields = (0..k)
        .map(|i| {
            let e = DVector::from_fn(k, |j, _| if i == j { h } else { 0.0 });
            let minus = -e.clone();
            let field = form.restrict(|x| {
                let a = family.map_point(&e, x).unwrap_or(*x);
                let b = family.map_point(&minus, x).unwrap_or(*x);
                form.model().tangent_project(x, &((a - b) / (2.0 * h)))
            });
            field
        })
        .collect::<Vec<_>>();
    let eigenvalues = SpanForms::new(form, &fields)?.eigenvalues()?;
    let threshold = index_from_form(form, form.model().tol.eig_tol)?.threshold;
    let negative_definite = eigenvalues.iter().all(|&e| e < -threshold);
    Ok(ExtractedFields {
        fields,
        eigenvalues,
        negative_definite,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisjointnessReport {
    pub min_distance: f64,
    pub min_drop: f64,
    pub holds: bool,
}

/// For every sample V and unit direction v: f(F_v#V, S) > 2ε̃ and A^V(0) − A^V(v) ≥ c₀/2.
pub fn disjointness_audit(
    center: &DiscreteVarifold,
    samples: &[DiscreteVarifold],
    certificate: &InstabilityCertificate,
    eps_small: f64,
    directions: usize,
    grid: &TestGrid,
) -> Result<DisjointnessReport> {
    let fam = &certificate.family;
    let k = fam.k();
    let dirs: Vec<DVector<f64>> = if k == 1 {
        vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        (0..directions.max(2))
            .map(|_| {
                let v = DVector::<f64>::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
                let n = v.norm().max(1e-12);
                v / n
            })
            .collect()
    };
    let pairs: Vec<(f64, f64)> = samples
        .par_iter()
        .flat_map_iter(|s| dirs.iter().map(move |d| (s, d)))
        .map(|(s, d)| {
            let pushed = fam.push(s, d)?;
            Ok((f_distance(&fam.model, &pushed, center, grid)?, s.mass() - pushed.mass()))
        })
        .collect::<Result<_>>()?;
    let min_distance = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let min_drop = pairs.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    Ok(DisjointnessReport {
        min_distance,
        min_drop,
        holds: min_distance > 2.0 * eps_small && min_drop >= certificate.c0 / 2.0,
    })
}

/// Empirical modulus c ↦ min{|v − w| : f(F_v#V, F_w#V) ≥ c} over a parameter grid.
pub fn distance_modulus(
    varifold: &DiscreteVarifold,
    family: &DiffeoFamily,
    params: &[DVector<f64>],
    levels: &[f64],
    grid: &TestGrid,
) -> Result<Vec<(f64, Option<f64>)>> {
    let pushed: Vec<DiscreteVarifold> = params.par_iter().map(|v| family.push(varifold, v)).collect::<Result<_>>()?;
    let pairs: Vec<(usize, usize)> = (0..params.len()).flat_map(|i| (i + 1..params.len()).map(move |j| (i, j))).collect();
    let dists: Vec<(f64, f64)> = pairs
        .par_iter()
        .map(|&(i, j)| Ok(((&params[i] - &params[j]).norm(), f_distance(&family.model, &pushed[i], &pushed[j], grid)?)))
        .collect::<Result<_>>()?;
    Ok(levels
        .iter()
        .map(|&c| {
            let m = dists.iter().filter(|d| d.1 >= c).map(|d| d.0).fold(f64::INFINITY, f64::min);
            (c, m.is_finite().then_some(m))
        })
        .collect())
}
