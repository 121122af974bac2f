//! Deformations on the parameter ball and of sweepouts: weighted gradient flow of a mass
//! profile, uniform decrease estimates, piecewise linear avoidance homotopies on simplicial
//! complexes, and the hierarchical deformation of a sweepout away from certified centers.

use std::borrow::Borrow;
use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GeonetError, Result};
use crate::instability::{find_max, profile_gradient, DiffeoFamily, InstabilityCertificate, MassProfile, MaxOptions, Profile};
use crate::minmax::{sup_mass, DiscreteCycle, Sweepout};
use crate::net::GeodesicNet;
use crate::varifold::{f_distance, DiscreteVarifold, TestGrid};

/// Positive weight f(t, x) multiplying the descent direction.
#[derive(Clone)]
pub enum Weighting {
    Constant(f64),
    /// Distance from x to the boundary of the ball of this radius.
    Depth { radius: f64 },
    Function(Arc<dyn Fn(f64, &DVector<f64>) -> f64 + Send + Sync>),
}

impl Weighting {
    pub fn eval(&self, t: f64, x: &DVector<f64>) -> f64 {
        match self {
            Weighting::Constant(c) => *c,
            Weighting::Depth { radius } => radius - x.norm(),
            Weighting::Function(f) => f(t, x),
        }
    }
}

impl std::fmt::Debug for Weighting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Weighting::Constant(c) => write!(f, "Constant({c})"),
            Weighting::Depth { radius } => write!(f, "Depth({radius})"),
            Weighting::Function(_) => write!(f, "Function"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowOptions {
    pub dt: f64,
    pub max_steps: usize,
    pub gradient_step: f64,
    /// The path stops on this sphere; defaults to just inside the gradient stencil limit.
    pub stop_radius: Option<f64>,
    /// Gradients below this norm count as a critical point.
    pub critical_tol: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            dt: 0.05,
            max_steps: 50,
            gradient_step: 1e-3,
            stop_radius: None,
            critical_tol: 1e-9,
        }
    }
}

impl FlowOptions {
    pub fn radius(&self) -> f64 {
        self.stop_radius.unwrap_or(1.0 - 2.0 * self.gradient_step)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Boundary,
    WeightVanished,
    MaxSteps,
    Critical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallFlowPath {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub values: Vec<f64>,
    pub stop: StopReason,
}

impl BallFlowPath {
    pub fn end(&self) -> DVector<f64> {
        DVector::from_column_slice(self.points.last().expect("path has a start"))
    }

    pub fn start(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.points[0])
    }

    pub fn is_strictly_decreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] < w[0])
    }

    /// −(c₀/2)|x(L) − x(0)|² − (A(x(L)) − A(x(0))); nonnegative when the mass-drop
    /// inequality holds.
    pub fn drop_margin(&self, c0: f64) -> f64 {
        let dx = (self.end() - self.start()).norm_squared();
        let da = self.values.last().copied().unwrap_or(0.0) - self.values[0];
        -0.5 * c0 * dx - da
    }
}

/// Integrates x′ = −f(t, x)∇A(x) with RK4 until the stop sphere, a vanishing weight, or the
/// step limit. Gradients are central differences of the profile.
pub fn gradient_flow_ball(profile: &dyn Profile, x0: &DVector<f64>, weighting: &Weighting, opts: &FlowOptions) -> Result<BallFlowPath> {
    let radius = opts.radius();
    if x0.len() != profile.dim() {
        return Err(GeonetError::rejected("start point has the wrong dimension"));
    }
    if x0.norm() > radius + 1e-12 {
        return Err(GeonetError::rejected(format!("start point lies outside the admissible radius {radius:.4}")));
    }
    let g0 = profile_gradient(profile, x0, opts.gradient_step)?;
    if g0.norm() < opts.critical_tol {
        return Err(GeonetError::rejected("start point is a critical point of the profile"));
    }
    let w0 = weighting.eval(0.0, x0);
    if !(w0 > 0.0) {
        return Err(GeonetError::rejected("weighting is not positive at the start point"));
    }
    let mut path = BallFlowPath {
        times: vec![0.0],
        points: vec![x0.iter().copied().collect()],
        weights: vec![w0],
        values: vec![profile.value(x0)?],
        stop: StopReason::MaxSteps,
    };
    let inside = |x: &DVector<f64>| x.norm() <= radius + 1e-12;
    let rhs = |t: f64, x: &DVector<f64>| -> Result<Option<DVector<f64>>> {
        if !inside(x) {
            return Ok(None);
        }
        let w = weighting.eval(t, x);
        if !(w > 0.0) {
            return Ok(None);
        }
        Ok(Some(profile_gradient(profile, x, opts.gradient_step)? * (-w)))
    };
    let step = |t: f64, x: &DVector<f64>, h: f64| -> Result<Option<DVector<f64>>> {
        let Some(k1) = rhs(t, x)? else { return Ok(None) };
        let Some(k2) = rhs(t + 0.5 * h, &(x + &k1 * (0.5 * h)))? else { return Ok(None) };
        let Some(k3) = rhs(t + 0.5 * h, &(x + &k2 * (0.5 * h)))? else { return Ok(None) };
        let Some(k4) = rhs(t + h, &(x + &k3 * h))? else { return Ok(None) };
        Ok(Some(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)))
    };
    let mut x = x0.clone();
    let mut t = 0.0;
    for _ in 0..opts.max_steps {
        let full = step(t, &x, opts.dt)?;
        let (next, h, stop) = match full {
            Some(y) if inside(&y) && weighting.eval(t + opts.dt, &y) > 0.0 => (y, opts.dt, None),
            _ => {
                // shorten the step so that it ends on the stop region
                let (mut lo, mut hi) = (0.0, opts.dt);
                let mut best = None;
                for _ in 0..40 {
                    let mid = 0.5 * (lo + hi);
                    match step(t, &x, mid)? {
                        Some(y) if inside(&y) && weighting.eval(t + mid, &y) > 0.0 => {
                            lo = mid;
                            best = Some(y);
                        }
                        _ => hi = mid,
                    }
                }
                let reason = if weighting.eval(t + hi, &x) > 0.0 && x.norm() < radius {
                    StopReason::Boundary
                } else {
                    StopReason::WeightVanished
                };
                match best {
                    Some(y) if lo > 0.0 => (y, lo, Some(reason)),
                    _ => {
                        path.stop = reason;
                        break;
                    }
                }
            }
        };
        if next.iter().any(|c| !c.is_finite()) {
            return Err(GeonetError::Numeric("gradient flow produced a non-finite point".into()));
        }
        t += h;
        x = next;
        path.times.push(t);
        path.points.push(x.iter().copied().collect());
        path.weights.push(weighting.eval(t, &x));
        path.values.push(profile.value(&x)?);
        if let Some(reason) = stop {
            path.stop = reason;
            break;
        }
        if profile_gradient(profile, &x, opts.gradient_step)?.norm() < opts.critical_tol {
            path.stop = StopReason::Critical;
            break;
        }
    }
    Ok(path)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecreaseOptions {
    /// Starting points are drawn from the ball of this fraction of the flow radius.
    pub inner: f64,
    pub flow: FlowOptions,
    pub max: MaxOptions,
    pub seed: u64,
}

impl Default for DecreaseOptions {
    fn default() -> Self {
        DecreaseOptions {
            inner: 0.5,
            flow: FlowOptions {
                dt: 0.1,
                ..FlowOptions::default()
            },
            max: MaxOptions::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecreaseSample {
    pub profile: usize,
    pub start: Vec<f64>,
    pub distance_to_max: f64,
    pub total_drop: f64,
    pub drop_at_estimate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecreaseEstimate {
    pub c_est: f64,
    pub t_est: f64,
    pub samples: Vec<DecreaseSample>,
}

/// Flows sampled starting points at distance ≥ η from each profile's maximum, weighted by
/// depth in the flow ball, and reports the first common time by which every sample has lost
/// half of its total drop, with the smallest drop at that time.
pub fn uniform_decrease_probe(profiles: &[&dyn Profile], eta: f64, budget: usize, opts: &DecreaseOptions) -> Result<DecreaseEstimate> {
    if !(eta > 0.0) {
        return Err(GeonetError::rejected("η must be positive: no uniform decrease holds at the maximum"));
    }
    if profiles.is_empty() || budget == 0 {
        return Err(GeonetError::rejected("nothing to probe"));
    }
    let radius = opts.flow.radius();
    let inner = opts.inner * radius;
    let maxima: Vec<DVector<f64>> = profiles
        .iter()
        .map(|p| find_max(*p, &opts.max).map(|m| DVector::from_vec(m.point)))
        .collect::<Result<_>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = Vec::with_capacity(budget);
    for s in 0..budget {
        let i = s % profiles.len();
        let k = profiles[i].dim();
        let mut found = None;
        for _ in 0..10_000 {
            let v = DVector::<f64>::from_fn(k, |_, _| rng.random_range(-inner..inner));
            if v.norm() <= inner && (&v - &maxima[i]).norm() >= eta {
                found = Some(v);
                break;
            }
        }
        let v = found.ok_or_else(|| GeonetError::rejected(format!("no starting point at distance {eta} from the maximum of profile {i}")))?;
        starts.push((i, v));
    }
    let weighting = Weighting::Depth { radius };
    let paths: Vec<BallFlowPath> = starts
        .par_iter()
        .map(|(i, v)| gradient_flow_ball(profiles[*i], v, &weighting, &opts.flow))
        .collect::<Result<_>>()?;
    let drop_at = |p: &BallFlowPath, step: usize| p.values[0] - p.values[step.min(p.values.len() - 1)];
    for ((i, v), p) in starts.iter().zip(&paths) {
        if !(drop_at(p, usize::MAX) > 0.0) {
            return Err(GeonetError::rejected(format!("profile {i} does not decrease from {:?}", v.as_slice())));
        }
    }
    let steps = paths.iter().map(|p| p.values.len()).max().unwrap_or(1);
    let t_index = (0..steps)
        .find(|&s| paths.iter().all(|p| drop_at(p, s) >= 0.5 * drop_at(p, usize::MAX)))
        .unwrap_or(steps - 1);
    let samples: Vec<DecreaseSample> = starts
        .iter()
        .zip(&paths)
        .map(|((i, v), p)| DecreaseSample {
            profile: *i,
            start: v.iter().copied().collect(),
            distance_to_max: (v - &maxima[*i]).norm(),
            total_drop: drop_at(p, usize::MAX),
            drop_at_estimate: drop_at(p, t_index),
        })
        .collect();
    Ok(DecreaseEstimate {
        c_est: samples.iter().map(|s| s.drop_at_estimate).fold(f64::INFINITY, f64::min),
        t_est: t_index as f64 * opts.flow.dt,
        samples,
    })
}

/// A finite simplicial complex given by its maximal simplices, with vertex coordinates in a
/// parameter space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimplicialComplex {
    pub coords: Vec<Vec<f64>>,
    pub simplices: Vec<Vec<usize>>,
}

impl SimplicialComplex {
    pub fn new(coords: Vec<Vec<f64>>, simplices: Vec<Vec<usize>>) -> Result<Self> {
        let c = SimplicialComplex {
            coords,
            simplices: simplices
                .into_iter()
                .map(|mut s| {
                    s.sort_unstable();
                    s
                })
                .collect(),
        };
        c.validate()?;
        Ok(c)
    }

    /// Path graph on `n` points of [0, 1].
    pub fn interval(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(GeonetError::rejected("an interval needs at least two vertices"));
        }
        let coords = (0..n).map(|i| vec![i as f64 / (n - 1) as f64]).collect();
        Self::new(coords, (0..n - 1).map(|i| vec![i, i + 1]).collect())
    }

    /// Triangulated disk: center plus `rings` concentric rings of 6·r vertices.
    pub fn hex_disk(rings: usize) -> Result<Self> {
        let mut coords = vec![vec![0.0, 0.0]];
        let mut ring_start = vec![0usize];
        for r in 1..=rings {
            ring_start.push(coords.len());
            for j in 0..6 * r {
                let ang = std::f64::consts::TAU * j as f64 / (6 * r) as f64;
                let rad = r as f64 / rings.max(1) as f64;
                coords.push(vec![rad * ang.cos(), rad * ang.sin()]);
            }
        }
        let mut simplices = Vec::new();
        for r in 1..=rings {
            let outer = |j: usize| ring_start[r] + j % (6 * r);
            let inner = |j: usize| if r == 1 { 0 } else { ring_start[r - 1] + j % (6 * (r - 1)) };
            for side in 0..6 {
                for s in 0..r {
                    let o = side * r + s;
                    let i = side * (r - 1) + s;
                    simplices.push(vec![outer(o), outer(o + 1), inner(i)]);
                    if s + 1 < r {
                        simplices.push(vec![inner(i), inner(i + 1), outer(o + 1)]);
                    }
                }
            }
        }
        Self::new(coords, simplices)
    }

    pub fn validate(&self) -> Result<()> {
        if self.simplices.is_empty() {
            return Err(GeonetError::rejected("complex has no simplices"));
        }
        for s in &self.simplices {
            if s.is_empty() || s.windows(2).any(|w| w[0] == w[1]) || s.iter().any(|&v| v >= self.coords.len()) {
                return Err(GeonetError::rejected(format!("degenerate simplex {s:?}")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.simplices.iter().map(|s| s.len() - 1).max().unwrap_or(0)
    }

    pub fn vertex_count(&self) -> usize {
        self.coords.len()
    }

    /// Every face of every simplex, sorted by dimension and then lexicographically.
    pub fn faces(&self) -> Vec<Vec<usize>> {
        let mut set = std::collections::BTreeSet::new();
        for s in &self.simplices {
            let n = s.len();
            for mask in 1u32..(1 << n) {
                let f: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| s[i]).collect();
                set.insert(f);
            }
        }
        let mut faces: Vec<Vec<usize>> = set.into_iter().collect();
        faces.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        faces
    }

    pub fn edges(&self) -> Vec<[usize; 2]> {
        self.faces().into_iter().filter(|f| f.len() == 2).map(|f| [f[0], f[1]]).collect()
    }

    /// Midpoint subdivision (dimension ≤ 2): every edge is halved and every triangle split in
    /// four. Returns the refined complex and, for each new vertex, its parent edge.
    pub fn subdivide(&self) -> Result<(SimplicialComplex, Vec<[usize; 2]>)> {
        if self.dim() > 2 {
            return Err(GeonetError::rejected("midpoint subdivision is implemented up to dimension 2"));
        }
        let mut coords = self.coords.clone();
        let mut parents = Vec::new();
        let mut mid: HashMap<[usize; 2], usize> = HashMap::new();
        for [a, b] in self.edges() {
            mid.insert([a, b], coords.len());
            coords.push(self.coords[a].iter().zip(&self.coords[b]).map(|(x, y)| 0.5 * (x + y)).collect());
            parents.push([a, b]);
        }
        let m = |a: usize, b: usize| mid[&[a.min(b), a.max(b)]];
        let mut simplices = Vec::new();
        for s in &self.simplices {
            match s.as_slice() {
                [a] => simplices.push(vec![*a]),
                [a, b] => {
                    simplices.push(vec![*a, m(*a, *b)]);
                    simplices.push(vec![m(*a, *b), *b]);
                }
                [a, b, c] => {
                    let (ab, bc, ca) = (m(*a, *b), m(*b, *c), m(*c, *a));
                    simplices.push(vec![*a, ab, ca]);
                    simplices.push(vec![ab, *b, bc]);
                    simplices.push(vec![ca, bc, *c]);
                    simplices.push(vec![ab, bc, ca]);
                }
                _ => unreachable!(),
            }
        }
        Ok((SimplicialComplex::new(coords, simplices)?, parents))
    }

    /// First barycentric subdivision. Vertex i of the result is the barycenter of `faces[i]`.
    pub fn barycentric(&self) -> (SimplicialComplex, Vec<Vec<usize>>) {
        let faces = self.faces();
        let index: HashMap<Vec<usize>, usize> = faces.iter().cloned().enumerate().map(|(i, f)| (f, i)).collect();
        let coords = faces
            .iter()
            .map(|f| {
                let n = f.len() as f64;
                let d = self.coords[f[0]].len();
                (0..d).map(|c| f.iter().map(|&v| self.coords[v][c]).sum::<f64>() / n).collect()
            })
            .collect();
        let mut simplices = Vec::new();
        for s in &self.simplices {
            for perm in permutations(s) {
                let flag: Vec<usize> = (1..=perm.len())
                    .map(|i| {
                        let mut f = perm[..i].to_vec();
                        f.sort_unstable();
                        index[&f]
                    })
                    .collect();
                simplices.push(flag);
            }
        }
        let complex = SimplicialComplex {
            coords,
            simplices: simplices
                .into_iter()
                .map(|mut s| {
                    s.sort_unstable();
                    s
                })
                .collect(),
        };
        (complex, faces)
    }
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, head);
            out.push(p);
        }
    }
    out
}

/// Most points `simplex_origin_distance` accepts.
pub const MAX_HULL_POINTS: usize = 8;

/// Euclidean distance from the origin to the convex hull of at most `MAX_HULL_POINTS` points.
/// Every face is tried: the origin's projection onto its affine hull counts when it lies in
/// the face.
pub fn simplex_origin_distance<P: Borrow<DVector<f64>>>(points: &[P]) -> f64 {
    let n = points.len();
    assert!(n <= MAX_HULL_POINTS, "at most {MAX_HULL_POINTS} points");
    let mut dots = [[0.0; MAX_HULL_POINTS]; MAX_HULL_POINTS];
    for i in 0..n {
        for j in i..n {
            let d = points[i].borrow().dot(points[j].borrow());
            dots[i][j] = d;
            dots[j][i] = d;
        }
    }
    let mut best = (0..n).map(|i| dots[i][i].sqrt()).fold(f64::INFINITY, f64::min);
    let mut idx = [0usize; MAX_HULL_POINTS];
    for mask in 3u32..(1 << n) {
        if mask.count_ones() < 2 {
            continue;
        }
        let mut len = 0;
        for i in 0..n {
            if mask & (1 << i) != 0 {
                idx[len] = i;
                len += 1;
            }
        }
        let base = idx[0];
        let others = &idx[1..len];
        let m = others.len();
        // Gram matrix of the edge vectors from the base point, and −⟨edge, base⟩
        let mut g = [[0.0; MAX_HULL_POINTS]; MAX_HULL_POINTS];
        let mut rhs = [0.0; MAX_HULL_POINTS];
        for (r, &i) in others.iter().enumerate() {
            for (c, &j) in others.iter().enumerate() {
                g[r][c] = dots[i][j] - dots[i][base] - dots[base][j] + dots[base][base];
            }
            rhs[r] = dots[base][base] - dots[i][base];
        }
        let Some(lambda) = cholesky_solve(&mut g, &mut rhs, m) else { continue };
        let sum: f64 = lambda[..m].iter().sum();
        if lambda[..m].iter().any(|l| *l < -1e-12) || sum > 1.0 + 1e-12 {
            continue;
        }
        let p0 = points[base].borrow();
        let mut sq = 0.0;
        for c in 0..p0.len() {
            let mut x = p0[c];
            for (r, &i) in others.iter().enumerate() {
                x += lambda[r] * (points[i].borrow()[c] - p0[c]);
            }
            sq += x * x;
        }
        best = best.min(sq.sqrt());
    }
    best
}

/// In-place Cholesky solve of the leading m×m block; None when not positive definite.
fn cholesky_solve(
    g: &mut [[f64; MAX_HULL_POINTS]; MAX_HULL_POINTS],
    rhs: &mut [f64; MAX_HULL_POINTS],
    m: usize,
) -> Option<[f64; MAX_HULL_POINTS]> {
    let scale = (0..m).map(|i| g[i][i]).fold(0.0, f64::max);
    for j in 0..m {
        let mut d = g[j][j];
        for k in 0..j {
            d -= g[j][k] * g[j][k];
        }
        if !(d > 1e-14 * scale) {
            return None;
        }
        let d = d.sqrt();
        g[j][j] = d;
        for i in (j + 1)..m {
            let mut v = g[i][j];
            for k in 0..j {
                v -= g[i][k] * g[j][k];
            }
            g[i][j] = v / d;
        }
    }
    for i in 0..m {
        let mut v = rhs[i];
        for k in 0..i {
            v -= g[i][k] * rhs[k];
        }
        rhs[i] = v / g[i][i];
    }
    for i in (0..m).rev() {
        let mut v = rhs[i];
        for k in (i + 1)..m {
            v -= g[k][i] * rhs[k];
        }
        rhs[i] = v / g[i][i];
    }
    Some(*rhs)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AvoidanceOptions {
    pub max_levels: usize,
    pub candidates: usize,
    pub seed: u64,
}

impl Default for AvoidanceOptions {
    fn default() -> Self {
        AvoidanceOptions {
            max_levels: 10,
            candidates: 64,
            seed: 0,
        }
    }
}

/// A piecewise linear map a: X → B̄_δ with a(x) ≠ target(x) everywhere, defining the
/// homotopy Ĥ(x, t) = t·a(x).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AvoidanceMap {
    /// Barycentric refinement of the subdivided domain.
    pub complex: SimplicialComplex,
    pub targets: Vec<DVector<f64>>,
    pub values: Vec<DVector<f64>>,
    pub delta: f64,
    pub alpha: f64,
    pub levels: usize,
    /// min over X of |target(x) − a(x)|.
    pub margin: f64,
}

impl AvoidanceMap {
    pub fn homotopy(&self, vertex: usize, t: f64) -> DVector<f64> {
        &self.values[vertex] * t
    }

    /// Ĥ(x, t) and target(x) at barycentric coordinates `weights` of simplex `s`.
    pub fn eval(&self, s: usize, weights: &[f64], t: f64) -> (DVector<f64>, DVector<f64>) {
        let simplex = &self.complex.simplices[s];
        let dim = self.values[0].len();
        let mut a = DVector::zeros(dim);
        let mut target = DVector::zeros(dim);
        for (&v, &w) in simplex.iter().zip(weights) {
            a += &self.values[v] * w;
            target += &self.targets[v] * w;
        }
        (a * t, target)
    }
}

fn oscillation(complex: &SimplicialComplex, values: &[DVector<f64>]) -> f64 {
    complex
        .edges()
        .iter()
        .map(|[a, b]| (&values[*a] - &values[*b]).norm())
        .fold(0.0, f64::max)
}

/// Builds a(x) skeleton by skeleton: vertices are pushed a little away from their target;
/// every higher face is coned from an apex near −target(barycenter), chosen among random
/// candidates to keep the cone away from the origin.
pub fn skeletal_avoidance(domain: &SimplicialComplex, targets: &[DVector<f64>], delta: f64, opts: &AvoidanceOptions) -> Result<AvoidanceMap> {
    domain.validate()?;
    if targets.len() != domain.vertex_count() {
        return Err(GeonetError::rejected("one target per vertex is required"));
    }
    let dim = targets[0].len();
    if dim == 0 || targets.iter().any(|t| t.len() != dim) {
        return Err(GeonetError::rejected("targets must share a positive dimension"));
    }
    if !(delta > 0.0) {
        return Err(GeonetError::rejected("δ must be positive"));
    }
    let n = dim - 1;
    let l = domain.dim();
    if l > n {
        return Err(GeonetError::rejected(format!(
            "complex of dimension {l} exceeds N = {n}: the extension obstruction need not vanish"
        )));
    }
    let alpha = delta * 2f64.powi(-(n as i32 + 2));
    let mut complex = domain.clone();
    let mut values = targets.to_vec();
    let mut levels = 0;
    while oscillation(&complex, &values) >= alpha {
        if levels == opts.max_levels {
            return Err(GeonetError::rejected(format!(
                "subdivision budget of {} levels exhausted with oscillation {:.3e} ≥ α = {alpha:.3e}",
                opts.max_levels,
                oscillation(&complex, &values)
            )));
        }
        let (finer, parents) = complex.subdivide()?;
        for [a, b] in parents {
            values.push((&values[a] + &values[b]) * 0.5);
        }
        complex = finer;
        levels += 1;
    }

    let (sd, faces) = complex.barycentric();
    let face_index: HashMap<Vec<usize>, usize> = faces.iter().cloned().enumerate().map(|(i, f)| (f, i)).collect();
    let sd_targets: Vec<DVector<f64>> = faces
        .iter()
        .map(|f| f.iter().fold(DVector::zeros(dim), |acc, &v| acc + &values[v]) / f.len() as f64)
        .collect();
    let radius = |j: usize| delta * 2f64.powi(j as i32 - n as i32);
    let mut b: Vec<DVector<f64>> = vec![DVector::zeros(dim); faces.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for (fi, face) in faces.iter().enumerate() {
        let t = &sd_targets[fi];
        let j = face.len() - 1;
        if j == 0 {
            let r0 = radius(0);
            let dir = if t.norm() > 1e-15 {
                -t / t.norm()
            } else {
                DVector::from_fn(dim, |i, _| if i == 0 { 1.0 } else { 0.0 })
            };
            b[fi] = dir * (0.5 * r0) - t;
            continue;
        }
        // cone simplices: full flags of `face` ending at `face`, apex excluded
        let flags: Vec<Vec<usize>> = permutations(face)
            .into_iter()
            .map(|perm| {
                (1..perm.len())
                    .map(|i| {
                        let mut f = perm[..i].to_vec();
                        f.sort_unstable();
                        face_index[&f]
                    })
                    .collect()
            })
            .collect();
        let score = |apex: &DVector<f64>| -> f64 {
            flags
                .iter()
                .map(|flag| {
                    let mut pts: Vec<&DVector<f64>> = flag.iter().map(|&v| &b[v]).collect();
                    pts.push(apex);
                    simplex_origin_distance(&pts)
                })
                .fold(f64::INFINITY, f64::min)
        };
        let r = radius(j - 1);
        let mut best = -t.clone();
        let mut best_score = score(&best);
        if best_score < 0.5 * r {
            for _ in 0..opts.candidates {
                let w = loop {
                    let w = DVector::<f64>::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
                    if w.norm() <= 1.0 {
                        break w;
                    }
                };
                let cand = -t + w * r;
                let s = score(&cand);
                if s > best_score {
                    best = cand;
                    best_score = s;
                }
            }
        }
        if !(best_score > 0.0) {
            return Err(GeonetError::Numeric(format!("no admissible cone apex for face {face:?}")));
        }
        b[fi] = best;
    }
    let values: Vec<DVector<f64>> = b.iter().zip(&sd_targets).map(|(bi, ti)| bi + ti).collect();
    if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| v.norm() > delta * (1.0 + 1e-12)) {
        return Err(GeonetError::Numeric(format!("vertex {i} left the δ-ball: |a| = {:.6}", v.norm())));
    }
    let margin = sd
        .simplices
        .par_iter()
        .map(|s| {
            let pts: Vec<&DVector<f64>> = s.iter().map(|&v| &b[v]).collect();
            simplex_origin_distance(&pts)
        })
        .reduce(|| f64::INFINITY, f64::min);
    Ok(AvoidanceMap {
        complex: sd,
        targets: sd_targets,
        values,
        delta,
        alpha,
        levels,
        margin,
    })
}


/// A stationary net with a certificate of its instability.
#[derive(Clone, Debug)]
pub struct CertifiedCenter {
    pub net: GeodesicNet,
    pub certificate: InstabilityCertificate,
}

impl CertifiedCenter {
    pub fn new(net: GeodesicNet, certificate: InstabilityCertificate) -> Result<Self> {
        if net.model != certificate.family.model {
            return Err(GeonetError::rejected("certificate and net live on different manifolds"));
        }
        Ok(CertifiedCenter { net, certificate })
    }

    pub fn eps(&self) -> f64 {
        self.certificate.eps
    }

    /// Dimension N of the avoidance target ball: one less than the family size.
    pub fn target_dim(&self) -> usize {
        self.certificate.k() - 1
    }
}

/// a₁ = 2, a_{q+1} = 2a_q + 1.
pub fn a_sequence(len: usize) -> Vec<f64> {
    let mut a = Vec::with_capacity(len);
    for q in 0..len {
        a.push(if q == 0 { 2.0 } else { 2.0 * a[q - 1] + 1.0 });
    }
    a
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowWeight {
    /// Distance to the boundary of the parameter ball.
    Depth,
    /// Normalized f_distance from the pushed frame to the boundary of the 2ε-ball around
    /// the center.
    Annulus,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeformOptions {
    pub grid: TestGrid,
    /// Samples per arc of a center's varifold.
    pub samples_per_arc: usize,
    /// Subdivision rounds allowed for the two-radius dichotomy.
    pub max_levels: usize,
    pub avoidance: AvoidanceOptions,
    pub flow: FlowOptions,
    pub weight: FlowWeight,
    pub max: MaxOptions,
    /// Halvings of the avoidance radius allowed to keep the mass increase below δ.
    pub max_halvings: usize,
    /// Bisection depth used to refine replay tracks below the mesh modulus.
    pub replay_depth: usize,
}

impl Default for DeformOptions {
    fn default() -> Self {
        DeformOptions {
            grid: TestGrid { max_atoms: 128 },
            samples_per_arc: 64,
            max_levels: 6,
            avoidance: AvoidanceOptions::default(),
            flow: FlowOptions {
                dt: 0.25,
                max_steps: 12,
                ..FlowOptions::default()
            },
            weight: FlowWeight::Annulus,
            max: MaxOptions::default(),
            max_halvings: 8,
            replay_depth: 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeformationPlan {
    pub levels: usize,
    /// Bad faces as vertex lists of the subdivided input complex.
    pub bad_faces: Vec<Vec<usize>>,
    pub k_sets: Vec<Vec<usize>>,
    /// Per center: η (the certificate radius), ε̄ and the avoidance radius actually used.
    pub eta: Vec<f64>,
    pub eps_bar: Vec<f64>,
    pub avoid_radius: Vec<f64>,
    pub margins: Vec<f64>,
    pub a: Vec<f64>,
    pub delta: f64,
}

impl DeformationPlan {
    /// F ⊂ F′ both bad ⇒ K(F) ⊇ K(F′).
    pub fn k_monotone(&self) -> bool {
        self.bad_faces.iter().zip(&self.k_sets).all(|(f, kf)| {
            self.bad_faces
                .iter()
                .zip(&self.k_sets)
                .filter(|(g, _)| g.len() > f.len() && f.iter().all(|v| g.contains(v)))
                .all(|(_, kg)| kg.iter().all(|j| kf.contains(j)))
        })
    }

    pub fn a_grows(&self) -> bool {
        self.a.first().is_none_or(|a| *a == 2.0) && self.a.windows(2).all(|w| w[1] >= 2.0 * w[0] + 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReplayStage {
    Input,
    Avoid,
    Flow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    /// Vertex of the output complex.
    pub cell: usize,
    pub stage: ReplayStage,
    pub frame: usize,
    pub mass: f64,
    pub min_distance: f64,
    /// f_distance to the previous frame of the same cell.
    pub step: f64,
}

pub fn replay_jsonl(records: &[ReplayRecord]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeformationReport {
    pub plan: DeformationPlan,
    pub input_sup_mass: f64,
    pub output_sup_mass: f64,
    /// Per center, the smallest f_distance from an output frame.
    pub min_distance: Vec<f64>,
    pub avoids: bool,
    pub mass_ok: bool,
    pub mesh_modulus: f64,
    pub replay_max_step: f64,
    pub replay_ok: bool,
}

#[derive(Clone, Debug)]
pub struct DeformOutput {
    pub sweepout: Sweepout,
    pub report: DeformationReport,
    pub replay: Vec<ReplayRecord>,
}

/// Barycentric weights of `x` in the simplex with vertices `pts`, if it lies there.
fn barycentric_weights(pts: &[&Vec<f64>], x: &[f64]) -> Option<Vec<f64>> {
    let m = pts.len() - 1;
    if m == 0 {
        let d: f64 = pts[0].iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum();
        return (d.sqrt() < 1e-12).then(|| vec![1.0]);
    }
    let dim = x.len();
    let a = DMatrix::from_fn(dim, m, |r, c| pts[c + 1][r] - pts[0][r]);
    let rhs = DVector::from_fn(dim, |r, _| x[r] - pts[0][r]);
    let lambda = (a.transpose() * &a).cholesky()?.solve(&(a.transpose() * &rhs));
    if (&a * &lambda - &rhs).norm() > 1e-9 {
        return None;
    }
    let mut w = vec![1.0 - lambda.sum()];
    w.extend(lambda.iter());
    w.iter().all(|c| *c >= -1e-9).then_some(w)
}

struct Track {
    cycles: Vec<(ReplayStage, DiscreteCycle)>,
    end: DiscreteCycle,
}

fn face_label(s: &Sweepout, face: &[usize]) -> String {
    let pts: Vec<String> = face.iter().map(|&v| format!("{:?}", s.complex.coords[v])).collect();
    format!("{face:?} at {}", pts.join(" "))
}

/// Deforms the sweepout near each certified center: bad faces (frames within ε/2) get an
/// avoidance push of the certified family followed by the weighted gradient flow of the
/// frame's mass profile, cut off continuously towards the good faces.
pub fn deform_sweepout(input: &Sweepout, centers: &[CertifiedCenter], delta: f64, opts: &DeformOptions) -> Result<DeformOutput> {
    if !(delta > 0.0) {
        return Err(GeonetError::rejected("δ must be positive"));
    }
    for c in centers {
        if c.net.model != input.model {
            return Err(GeonetError::rejected("certified center lives on a different manifold"));
        }
    }
    let model = input.model.clone();
    let p_dim = input.domain_dim();
    let a = a_sequence(p_dim + 1);
    let eta: Vec<f64> = centers.iter().map(|c| c.eps()).collect();
    let eps_bar: Vec<f64> = eta.iter().map(|e| e / (2.0 * a[p_dim])).collect();
    let center_vars: Vec<DiscreteVarifold> = centers
        .iter()
        .map(|c| DiscreteVarifold::from_net(&c.net, opts.samples_per_arc))
        .collect::<Result<_>>()?;
    let distances = |cycle: &DiscreteCycle| -> Result<Vec<f64>> {
        let v = cycle.to_varifold(&model)?;
        center_vars.iter().map(|c| f_distance(&model, &v, c, &opts.grid)).collect()
    };
    let min_dist = |d: &[f64]| d.iter().copied().fold(f64::INFINITY, f64::min);

    // two-radius dichotomy by midpoint subdivision
    let mut cur = input.clone();
    let mut dist: Vec<Vec<f64>> = cur.frames.par_iter().map(&distances).collect::<Result<_>>()?;
    let mut levels = 0;
    loop {
        let offending = cur.complex.simplices.iter().find(|s| {
            (0..centers.len()).any(|j| {
                let lo = s.iter().map(|&v| dist[v][j]).fold(f64::INFINITY, f64::min);
                let hi = s.iter().map(|&v| dist[v][j]).fold(0.0, f64::max);
                lo < 0.5 * eta[j] && hi > eta[j]
            })
        });
        let Some(face) = offending else { break };
        if levels == opts.max_levels {
            return Err(GeonetError::rejected(format!(
                "subdivision budget exhausted: face {} still meets both radii; the certificate radius is too small for the mesh",
                face_label(&cur, face)
            )));
        }
        let (finer, parents) = cur.complex.subdivide()?;
        let new_frames: Vec<DiscreteCycle> = parents
            .par_iter()
            .enumerate()
            .map(|(i, [a0, b0])| cur.cycle_at(&finer.coords[cur.complex.vertex_count() + i], &[*a0, *b0], &[0.5, 0.5]))
            .collect::<Result<_>>()?;
        let new_dist: Vec<Vec<f64>> = new_frames.par_iter().map(&distances).collect::<Result<_>>()?;
        cur.frames.extend(new_frames);
        dist.extend(new_dist);
        cur.complex = finer;
        levels += 1;
    }
    let modulus = cur.mesh_modulus(&opts.grid)?;

    // bad faces and K(F)
    let faces = cur.complex.faces();
    let bad_for = |f: &[usize]| -> Vec<usize> {
        (0..centers.len())
            .filter(|&j| f.iter().any(|&v| dist[v][j] < 0.5 * eta[j]))
            .collect()
    };
    let mut bad_faces = Vec::new();
    let mut k_sets: Vec<Vec<usize>> = Vec::new();
    let maximal: Vec<(Vec<usize>, usize)> = cur
        .complex
        .simplices
        .iter()
        .filter_map(|s| {
            let js = bad_for(s);
            js.into_iter()
                .min_by(|&i, &j| {
                    let ri = s.iter().map(|&v| dist[v][i] / eta[i]).fold(0.0, f64::max);
                    let rj = s.iter().map(|&v| dist[v][j] / eta[j]).fold(0.0, f64::max);
                    ri.total_cmp(&rj)
                })
                .map(|j| (s.clone(), j))
        })
        .collect();
    for f in &faces {
        let mut k: Vec<usize> = maximal
            .iter()
            .filter(|(s, _)| f.iter().all(|v| s.contains(v)))
            .map(|(_, j)| *j)
            .collect();
        k.sort_unstable();
        k.dedup();
        if !k.is_empty() {
            bad_faces.push(f.clone());
            k_sets.push(k);
        }
    }
    for (f, k) in bad_faces.iter().zip(&k_sets) {
        if k.len() > 1 {
            return Err(GeonetError::rejected(format!(
                "face {} lies near centers {k:?}; overlapping certified neighborhoods are not supported",
                face_label(&cur, f)
            )));
        }
        let j = k[0];
        let l = f.len() - 1;
        if l > centers[j].target_dim() {
            return Err(GeonetError::rejected(format!(
                "bad face {} has dimension {l} > N = {} for center {j} (k = {}): the avoidance homotopy need not exist",
                face_label(&cur, f),
                centers[j].target_dim(),
                centers[j].certificate.k()
            )));
        }
    }

    let mut plan = DeformationPlan {
        levels,
        bad_faces,
        k_sets,
        eta: eta.clone(),
        eps_bar: eps_bar.clone(),
        avoid_radius: vec![0.0; centers.len()],
        margins: vec![f64::INFINITY; centers.len()],
        a,
        delta,
    };

    let n0 = cur.complex.vertex_count();
    let mut out_coords = cur.complex.coords.clone();
    let mut out_frames = cur.frames.clone();
    let mut tracks: Vec<Option<Track>> = (0..n0).map(|_| None).collect();
    let mut replaced = vec![false; cur.complex.simplices.len()];
    let mut out_simplices: Vec<Vec<usize>> = Vec::new();

    for (j, center) in centers.iter().enumerate() {
        let support: Vec<usize> = (0..cur.complex.simplices.len())
            .filter(|&si| maximal.iter().any(|(s, jj)| *jj == j && *s == cur.complex.simplices[si]))
            .collect();
        if support.is_empty() {
            continue;
        }
        let family: &DiffeoFamily = &center.certificate.family;
        let mut local_of: HashMap<usize, usize> = HashMap::new();
        let mut global: Vec<usize> = Vec::new();
        let mut local_simplices = Vec::new();
        for &si in &support {
            replaced[si] = true;
            let s: Vec<usize> = cur.complex.simplices[si]
                .iter()
                .map(|&v| {
                    *local_of.entry(v).or_insert_with(|| {
                        global.push(v);
                        global.len() - 1
                    })
                })
                .collect();
            local_simplices.push(s);
        }
        let local = SimplicialComplex::new(global.iter().map(|&v| cur.complex.coords[v].clone()).collect(), local_simplices)?;
        let rho_of = |d: f64| ((0.5 * eta[j] - d) / (0.25 * eta[j])).clamp(0.0, 1.0);
        let rho_local: Vec<f64> = global.iter().map(|&v| rho_of(dist[v][j])).collect();
        let targets: Vec<DVector<f64>> = global
            .par_iter()
            .map(|&v| {
                let var = cur.frames[v].to_varifold(&model)?;
                let m = find_max(&MassProfile { varifold: &var, family }, &opts.max)?;
                Ok(DVector::from_vec(m.point))
            })
            .collect::<Result<_>>()?;

        // avoidance, shrinking its radius until the push phase costs at most δ in mass
        let mut radius = delta.min(0.5);
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let map = skeletal_avoidance(&local, &targets, radius, &opts.avoidance)?;
            let located: Vec<(usize, Vec<f64>)> = map
                .complex
                .coords
                .iter()
                .map(|x| {
                    local
                        .simplices
                        .iter()
                        .enumerate()
                        .find_map(|(si, s)| {
                            let pts: Vec<&Vec<f64>> = s.iter().map(|&v| &local.coords[v]).collect();
                            barycentric_weights(&pts, x).map(|w| (si, w))
                        })
                        .ok_or_else(|| GeonetError::Numeric("refined vertex outside its complex".into()))
                })
                .collect::<Result<_>>()?;
            let frames: Vec<DiscreteCycle> = map
                .complex
                .coords
                .par_iter()
                .zip(&located)
                .enumerate()
                .map(|(i, (x, (si, w)))| {
                    if i < local.vertex_count() {
                        return Ok(cur.frames[global[i]].clone());
                    }
                    let s: Vec<usize> = local.simplices[*si].iter().map(|&v| global[v]).collect();
                    cur.cycle_at(x, &s, w)
                })
                .collect::<Result<_>>()?;
            let rho: Vec<f64> = located
                .iter()
                .map(|(si, w)| local.simplices[*si].iter().zip(w).map(|(&v, wi)| rho_local[v] * wi).sum())
                .collect();
            let pushes: Vec<DVector<f64>> = map.values.iter().zip(&rho).map(|(a, r)| a * *r).collect();
            let costs: Vec<f64> = frames
                .par_iter()
                .zip(&pushes)
                .map(|(c, v)| {
                    if v.norm() == 0.0 {
                        return Ok(0.0);
                    }
                    let m0 = c.mass(&model);
                    let half = c.push(family, &(v * 0.5))?.mass(&model);
                    let full = c.push(family, v)?.mass(&model);
                    Ok((half - m0).max(full - m0))
                })
                .collect::<Result<Vec<f64>>>()?;
            if costs.iter().all(|c| *c <= delta) {
                accepted = Some((map, frames, rho, pushes));
                break;
            }
            radius *= 0.5;
        }
        let (map, frames, rho, pushes) = accepted.ok_or_else(|| {
            GeonetError::rejected(format!("avoidance push raises mass by more than δ = {delta} even at radius {radius:.3e}"))
        })?;
        plan.avoid_radius[j] = radius;
        plan.margins[j] = map.margin;

        let outer = 2.0 * eta[j];
        let center_var = &center_vars[j];
        let new_tracks: Vec<Track> = frames
            .par_iter()
            .zip(&pushes)
            .zip(&rho)
            .map(|((theta, v0), r)| -> Result<Track> {
                let mut cycles = vec![(ReplayStage::Input, theta.clone())];
                if *r == 0.0 {
                    return Ok(Track {
                        end: theta.clone(),
                        cycles,
                    });
                }
                let mut params: Vec<(ReplayStage, DVector<f64>)> = vec![(ReplayStage::Avoid, v0 * 0.5), (ReplayStage::Avoid, v0.clone())];
                let var = theta.to_varifold(&model)?;
                let profile = MassProfile { varifold: &var, family };
                let weighting = match opts.weight {
                    FlowWeight::Depth => Weighting::Depth { radius: opts.flow.radius() },
                    FlowWeight::Annulus => {
                        let (var, fam, cv, grid, m) = (var.clone(), family.clone(), center_var.clone(), opts.grid, model.clone());
                        let radius = opts.flow.radius();
                        Weighting::Function(Arc::new(move |_t, u: &DVector<f64>| {
                            if u.norm() > radius {
                                return 0.0;
                            }
                            match fam.push(&var, u).and_then(|w| f_distance(&m, &w, &cv, &grid)) {
                                Ok(d) => (outer - d) / outer,
                                Err(_) => 0.0,
                            }
                        }))
                    }
                };
                let flow_opts = FlowOptions {
                    dt: opts.flow.dt * r,
                    ..opts.flow
                };
                match gradient_flow_ball(&profile, v0, &weighting, &flow_opts) {
                    Ok(path) => {
                        for p in &path.points[1..] {
                            params.push((ReplayStage::Flow, DVector::from_column_slice(p)));
                        }
                    }
                    Err(GeonetError::Rejected(_)) => {}
                    Err(e) => return Err(e),
                }
                // refine consecutive parameters until the frames are within the mesh modulus
                let mut prev_v = DVector::zeros(family.k());
                let mut prev_c = theta.clone();
                for (stage, v) in params {
                    let mut pending = vec![(v.clone(), 0usize)];
                    while let Some((target, depth)) = pending.pop() {
                        let c = theta.push(family, &target)?;
                        let step = f_distance(&model, &prev_c.to_varifold(&model)?, &c.to_varifold(&model)?, &opts.grid)?;
                        if step >= modulus && depth < opts.replay_depth {
                            pending.push((target.clone(), depth + 1));
                            pending.push(((&prev_v + &target) * 0.5, depth + 1));
                            continue;
                        }
                        prev_v = target;
                        prev_c = c.clone();
                        cycles.push((stage, c));
                    }
                }
                Ok(Track { end: prev_c, cycles })
            })
            .collect::<Result<_>>()?;

        let mut index_of = Vec::with_capacity(map.complex.vertex_count());
        for (i, (x, track)) in map.complex.coords.iter().zip(new_tracks).enumerate() {
            let g = if i < local.vertex_count() {
                global[i]
            } else {
                out_coords.push(x.clone());
                out_frames.push(track.end.clone());
                tracks.push(None);
                out_coords.len() - 1
            };
            out_frames[g] = track.end.clone();
            tracks[g] = Some(track);
            index_of.push(g);
        }
        for s in &map.complex.simplices {
            let mut t: Vec<usize> = s.iter().map(|&v| index_of[v]).collect();
            t.sort_unstable();
            out_simplices.push(t);
        }
    }
    for (si, s) in cur.complex.simplices.iter().enumerate() {
        if !replaced[si] {
            out_simplices.push(s.clone());
        }
    }

    // audit
    let out_dist: Vec<Vec<f64>> = out_frames.par_iter().map(&distances).collect::<Result<_>>()?;
    let mut replay = Vec::new();
    let mut replay_max_step: f64 = 0.0;
    for (cell, track) in tracks.iter().enumerate() {
        let cycles = match track {
            Some(t) => t.cycles.clone(),
            None => vec![(ReplayStage::Input, out_frames[cell].clone())],
        };
        let vars: Vec<DiscreteVarifold> = cycles.par_iter().map(|(_, c)| c.to_varifold(&model)).collect::<Result<_>>()?;
        let records: Vec<ReplayRecord> = cycles
            .par_iter()
            .enumerate()
            .map(|(frame, (stage, c))| {
                let d = distances(c)?;
                let step = if frame == 0 { 0.0 } else { f_distance(&model, &vars[frame - 1], &vars[frame], &opts.grid)? };
                Ok(ReplayRecord {
                    cell,
                    stage: *stage,
                    frame,
                    mass: c.mass(&model),
                    min_distance: min_dist(&d),
                    step,
                })
            })
            .collect::<Result<_>>()?;
        for r in &records {
            replay_max_step = replay_max_step.max(r.step);
        }
        replay.extend(records);
    }
    let sweepout = Sweepout {
        model: model.clone(),
        complex: SimplicialComplex::new(out_coords, out_simplices)?,
        frames: out_frames,
        generator: None,
    };
    let min_distance: Vec<f64> = (0..centers.len())
        .map(|j| out_dist.iter().map(|d| d[j]).fold(f64::INFINITY, f64::min))
        .collect();
    let input_sup_mass = sup_mass(input);
    let output_sup_mass = sup_mass(&sweepout);
    let report = DeformationReport {
        avoids: min_distance.iter().zip(&eps_bar).all(|(d, e)| d >= e),
        mass_ok: output_sup_mass <= input_sup_mass + delta,
        replay_ok: replay_max_step < modulus || replay_max_step == 0.0,
        plan,
        input_sup_mass,
        output_sup_mass,
        min_distance,
        mesh_modulus: modulus,
        replay_max_step,
    };
    Ok(DeformOutput { sweepout, report, replay })
}
