//! Sweepouts by closed polylines, sup-mass and width estimates, critical frame extraction,
//! and the index-bound check on extracted critical cycles.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deform::SimplicialComplex;
use crate::error::{GeonetError, Result};
use crate::index::{assemble_index_form, index_from_form};
use crate::instability::{certify_k_unstable, family_from_fields_unchecked, lowest_eigenfields, CertifyOptions, DiffeoFamily};
use crate::manifold::{ManifoldModel, ModelKind, Vector};
use crate::net::format::parse_manifold_line;
use crate::net::{solve_stationary_with, SolveOptions};
use crate::net::{EdgeInit, GeodesicNet, NetInit, WeightedMultigraph};
use crate::varifold::{f_distance, segment_length, DiscreteVarifold, TestGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    /// Closed: the last point repeats the first.
    pub points: Vec<Vector>,
    pub multiplicity: u32,
}

impl Polyline {
    pub fn length(&self, model: &ManifoldModel) -> f64 {
        self.points.windows(2).map(|w| segment_length(model, &w[0], &w[1])).sum()
    }
}

/// A mod-2 1-cycle represented by closed polylines.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscreteCycle {
    pub polylines: Vec<Polyline>,
}

impl DiscreteCycle {
    pub fn new(polylines: Vec<Polyline>) -> Result<Self> {
        for (i, p) in polylines.iter().enumerate() {
            if p.points.len() < 2 {
                return Err(GeonetError::rejected(format!("polyline {i} has fewer than two points")));
            }
            if (p.points[0] - p.points[p.points.len() - 1]).norm() > 1e-12 {
                return Err(GeonetError::rejected(format!("polyline {i} is not closed")));
            }
        }
        Ok(DiscreteCycle { polylines })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Closes `points` by repeating the first one.
    pub fn closed(points: Vec<Vector>, multiplicity: u32) -> Result<Self> {
        let mut points = points;
        if let Some(first) = points.first().copied() {
            points.push(first);
        }
        Self::new(vec![Polyline { points, multiplicity }])
    }

    pub fn mass(&self, model: &ManifoldModel) -> f64 {
        self.polylines.iter().map(|p| p.multiplicity as f64 * p.length(model)).sum()
    }

    pub fn to_varifold(&self, model: &ManifoldModel) -> Result<DiscreteVarifold> {
        let mut v = DiscreteVarifold::empty();
        for p in &self.polylines {
            v = v.union(&DiscreteVarifold::from_polyline(model, &p.points, p.multiplicity as f64)?);
        }
        Ok(v)
    }

    pub fn map<F: Fn(&Vector) -> Result<Vector> + Sync>(&self, f: F) -> Result<DiscreteCycle> {
        let polylines = self
            .polylines
            .iter()
            .map(|p| {
                let n = p.points.len();
                let mut points: Vec<Vector> = p.points[..n - 1].par_iter().map(&f).collect::<Result<_>>()?;
                points.push(points[0]);
                Ok(Polyline {
                    points,
                    multiplicity: p.multiplicity,
                })
            })
            .collect::<Result<_>>()?;
        Ok(DiscreteCycle { polylines })
    }

    pub fn push(&self, family: &DiffeoFamily, v: &DVector<f64>) -> Result<DiscreteCycle> {
        if v.iter().all(|c| *c == 0.0) {
            return Ok(self.clone());
        }
        self.map(|x| family.map_point(v, x))
    }

    /// Pointwise weighted average of cycles with identical structure, projected back.
    pub fn blend(model: &ManifoldModel, cycles: &[&DiscreteCycle], weights: &[f64]) -> Result<DiscreteCycle> {
        let first = cycles[0];
        let same = cycles.iter().all(|c| {
            c.polylines.len() == first.polylines.len()
                && c.polylines.iter().zip(&first.polylines).all(|(a, b)| a.points.len() == b.points.len() && a.multiplicity == b.multiplicity)
        });
        if !same {
            return Err(GeonetError::rejected("cycles with different structure cannot be blended"));
        }
        let polylines = (0..first.polylines.len())
            .map(|pi| {
                let base = &first.polylines[pi].points;
                let mut points: Vec<Vector> = (0..base.len() - 1)
                    .map(|j| {
                        let mut acc = Vector::zeros();
                        for (c, w) in cycles.iter().zip(weights) {
                            acc += model.displacement(&base[j], &c.polylines[pi].points[j]) * *w;
                        }
                        model.wrap(&model.project(&(base[j] + acc)))
                    })
                    .collect();
                points.push(points[0]);
                Polyline {
                    points,
                    multiplicity: first.polylines[pi].multiplicity,
                }
            })
            .collect();
        Ok(DiscreteCycle { polylines })
    }
}

/// A continuous family of cycles over a parameter domain.
pub trait CycleFamily: Send + Sync {
    fn model(&self) -> &ManifoldModel;
    fn cycle(&self, x: &[f64]) -> Result<DiscreteCycle>;
    fn describe(&self) -> String;
}

/// Latitude circles with a Fourier perturbation of the height, over t ∈ [0, 1].
///
/// On spheres (in the first three coordinates), ellipsoids and the conformal sphere the
/// frame at t is the curve z(θ) = s + (1 − s²)P(θ), s = 2t − 1, P(θ) = Σⱼ aⱼ cos jθ + bⱼ sin jθ,
/// j = 1..4, swept from the south pole to the north pole. This is the standard 1-sweepout.
/// On a flat 2-torus the frame is the horizontal circle y = period·(t + P(2πx/period)), a loop
/// of cycles generating the degree-one class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatitudeFourier {
    pub model: ManifoldModel,
    pub params: [f64; 8],
    pub points: usize,
    /// Rotation applied to sphere frames.
    pub tilt: Option<[[f64; 3]; 3]>,
}

pub const FOURIER_PARAMS: usize = 8;

impl LatitudeFourier {
    pub fn new(model: &ManifoldModel, params: &[f64], points: usize) -> Result<Self> {
        if params.len() != FOURIER_PARAMS {
            return Err(GeonetError::rejected(format!("latitude-fourier takes {FOURIER_PARAMS} parameters")));
        }
        if points < 8 {
            return Err(GeonetError::rejected("at least 8 points per frame"));
        }
        match &model.kind {
            ModelKind::Torus { periods } if periods.len() != 2 => {
                return Err(GeonetError::rejected("the horizontal-circle family needs a 2-torus"))
            }
            _ => {}
        }
        let mut p = [0.0; 8];
        p.copy_from_slice(params);
        Ok(LatitudeFourier {
            model: model.clone(),
            params: p,
            points,
            tilt: None,
        })
    }

    /// Rotates sphere frames by `angle` about `axis`.
    pub fn with_tilt(mut self, axis: [f64; 3], angle: f64) -> Self {
        let r = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(Vector3::from(axis)), angle);
        let m: Matrix3<f64> = *r.matrix();
        self.tilt = Some([[m[(0, 0)], m[(0, 1)], m[(0, 2)]], [m[(1, 0)], m[(1, 1)], m[(1, 2)]], [m[(2, 0)], m[(2, 1)], m[(2, 2)]]]);
        self
    }

    fn perturbation(&self, theta: f64) -> f64 {
        (0..4)
            .map(|j| {
                let f = (j + 1) as f64 * theta;
                self.params[j] * f.cos() + self.params[4 + j] * f.sin()
            })
            .sum()
    }
}

impl CycleFamily for LatitudeFourier {
    fn model(&self) -> &ManifoldModel {
        &self.model
    }

    fn describe(&self) -> String {
        format!("latitude-fourier params={:?} points={}", self.params, self.points)
    }

    fn cycle(&self, x: &[f64]) -> Result<DiscreteCycle> {
        let t = *x.first().ok_or_else(|| GeonetError::rejected("missing sweep parameter"))?;
        let n = self.points;
        let pts: Vec<Vector> = match &self.model.kind {
            ModelKind::Torus { periods } => (0..n)
                .map(|i| {
                    let u = i as f64 / n as f64;
                    let y = periods[1] * (t + self.perturbation(std::f64::consts::TAU * u));
                    let mut p = Vector::zeros();
                    p[0] = periods[0] * u;
                    p[1] = y;
                    self.model.wrap(&p)
                })
                .collect(),
            kind => {
                let s = 2.0 * t - 1.0;
                (0..n)
                    .map(|i| {
                        let theta = std::f64::consts::TAU * i as f64 / n as f64;
                        let z = (s + (1.0 - s * s) * self.perturbation(theta)).clamp(-1.0, 1.0);
                        let r = (1.0 - z * z).max(0.0).sqrt();
                        let mut q = Vector3::new(r * theta.cos(), r * theta.sin(), z);
                        if let Some(m) = &self.tilt {
                            q = Matrix3::from_fn(|i, j| m[i][j]) * q;
                        }
                        let mut p = Vector::zeros();
                        match kind {
                            ModelKind::Ellipsoid { axes } => {
                                for c in 0..3 {
                                    p[c] = axes[c] * q[c];
                                }
                            }
                            _ => {
                                for c in 0..3 {
                                    p[c] = q[c];
                                }
                            }
                        }
                        p
                    })
                    .collect()
            }
        };
        DiscreteCycle::closed(pts, 1)
    }
}

/// A map from a simplicial parameter complex to cycles, stored by its frames at the vertices.
#[derive(Clone)]
pub struct Sweepout {
    pub model: ManifoldModel,
    pub complex: SimplicialComplex,
    pub frames: Vec<DiscreteCycle>,
    /// Cycles at non-vertex parameters; without it frames are blended pointwise.
    pub generator: Option<Arc<dyn CycleFamily>>,
}

impl std::fmt::Debug for Sweepout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Sweepout")
            .field("model", &self.model.tag())
            .field("vertices", &self.complex.vertex_count())
            .field("simplices", &self.complex.simplices.len())
            .field("generator", &self.generator.as_ref().map(|g| g.describe()))
            .finish()
    }
}

impl Sweepout {
    pub fn from_family(family: Arc<dyn CycleFamily>, complex: SimplicialComplex) -> Result<Self> {
        let frames = complex.coords.par_iter().map(|x| family.cycle(x)).collect::<Result<_>>()?;
        Ok(Sweepout {
            model: family.model().clone(),
            complex,
            frames,
            generator: Some(family),
        })
    }

    /// The family sampled at `frames` equally spaced parameters of [0, 1].
    pub fn interval(family: Arc<dyn CycleFamily>, frames: usize) -> Result<Self> {
        Self::from_family(family, SimplicialComplex::interval(frames)?)
    }

    pub fn domain_dim(&self) -> usize {
        self.complex.dim()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.frames.par_iter().map(|c| c.mass(&self.model)).collect()
    }

    /// Cycle at parameter `coords`, lying in simplex `s` with barycentric `weights`.
    pub fn cycle_at(&self, coords: &[f64], s: &[usize], weights: &[f64]) -> Result<DiscreteCycle> {
        match &self.generator {
            Some(g) => g.cycle(coords),
            None => {
                let cycles: Vec<&DiscreteCycle> = s.iter().map(|&v| &self.frames[v]).collect();
                DiscreteCycle::blend(&self.model, &cycles, weights)
            }
        }
    }

    /// Largest f_distance between the frames at the ends of an edge.
    pub fn mesh_modulus(&self, grid: &TestGrid) -> Result<f64> {
        let vars: Vec<DiscreteVarifold> = self.frames.par_iter().map(|c| c.to_varifold(&self.model)).collect::<Result<_>>()?;
        let d: Vec<f64> = self
            .complex
            .edges()
            .par_iter()
            .map(|[a, b]| f_distance(&self.model, &vars[*a], &vars[*b], grid))
            .collect::<Result<_>>()?;
        Ok(d.into_iter().fold(0.0, f64::max))
    }

    /// Surrogate for the detection condition: positive sup-mass, and on an interval the end
    /// frames are either both massless or identical (a closed loop of cycles).
    pub fn detects(&self) -> bool {
        if !(sup_mass(self) > 0.0) {
            return false;
        }
        if self.domain_dim() != 1 {
            return true;
        }
        let ends: Vec<usize> = (0..self.complex.vertex_count())
            .filter(|&v| self.complex.simplices.iter().filter(|s| s.contains(&v)).count() == 1)
            .collect();
        match ends.as_slice() {
            [a, b] => {
                let (ma, mb) = (self.frames[*a].mass(&self.model), self.frames[*b].mass(&self.model));
                let tiny = 1e-9 * sup_mass(self);
                (ma <= tiny && mb <= tiny) || self.frames[*a] == self.frames[*b]
            }
            _ => true,
        }
    }
}

pub fn sup_mass(s: &Sweepout) -> f64 {
    s.masses().into_iter().fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub restarts: usize,
    /// Parameters range over [−half_width, half_width].
    pub half_width: f64,
    pub initial_step: f64,
    pub min_step: f64,
    pub max_rounds: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            restarts: 8,
            half_width: 0.06,
            initial_step: 0.03,
            min_step: 1e-4,
            max_rounds: 200,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WidthEstimate {
    pub value: f64,
    pub params: Vec<f64>,
    /// Some restart ran out of rounds before its step fell below the minimum.
    pub stagnated: bool,
    pub evaluations: usize,
    pub restart_values: Vec<f64>,
}

/// Coordinate descent on sup-mass over the parameter box. The first restart starts at the
/// center, the others at seeded uniform points.
pub fn width_estimate(
    generator: &(dyn Fn(&[f64]) -> Result<Sweepout> + Sync),
    dim: usize,
    cfg: &OptimizerConfig,
) -> Result<WidthEstimate> {
    if dim == 0 || cfg.restarts == 0 {
        return Err(GeonetError::rejected("nothing to optimize"));
    }
    let hw = cfg.half_width;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let starts: Vec<Vec<f64>> = (0..cfg.restarts)
        .map(|r| {
            if r == 0 {
                vec![0.0; dim]
            } else {
                (0..dim).map(|_| rng.random_range(-hw..=hw)).collect()
            }
        })
        .collect();
    let runs: Vec<(f64, Vec<f64>, bool, usize)> = starts
        .into_par_iter()
        .map(|mut x| {
            let eval = |p: &[f64]| generator(p).map(|s| sup_mass(&s));
            let mut f = eval(&x)?;
            let mut evals = 1;
            let mut step = cfg.initial_step;
            let mut rounds = 0;
            while step >= cfg.min_step && rounds < cfg.max_rounds {
                rounds += 1;
                let mut improved = false;
                'coords: for i in 0..dim {
                    for sgn in [1.0, -1.0] {
                        let mut y = x.clone();
                        y[i] = (y[i] + sgn * step).clamp(-hw, hw);
                        if y[i] == x[i] {
                            continue;
                        }
                        let fy = eval(&y)?;
                        evals += 1;
                        if fy < f {
                            x = y;
                            f = fy;
                            improved = true;
                            break 'coords;
                        }
                    }
                }
                if !improved {
                    step *= 0.5;
                }
            }
            Ok((f, x, step >= cfg.min_step, evals))
        })
        .collect::<Result<_>>()?;
    let best = runs
        .iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .expect("at least one restart");
    Ok(WidthEstimate {
        value: best.0,
        params: best.1.clone(),
        stagnated: runs.iter().any(|r| r.2),
        evaluations: runs.iter().map(|r| r.3).sum(),
        restart_values: runs.iter().map(|r| r.0).collect(),
    })
}

/// Width over the latitude-Fourier family sampled at `frames` parameters.
pub fn latitude_width(model: &ManifoldModel, frames: usize, points: usize, cfg: &OptimizerConfig) -> Result<(WidthEstimate, Sweepout)> {
    let make = |p: &[f64]| -> Result<Sweepout> {
        let fam = LatitudeFourier::new(model, p, points)?;
        Sweepout::interval(Arc::new(fam), frames)
    };
    let est = width_estimate(&make, FOURIER_PARAMS, cfg)?;
    let best = make(&est.params)?;
    Ok((est, best))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractOptions {
    /// Single-linkage radius in f_distance.
    pub radius: f64,
    pub grid: TestGrid,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            radius: 0.5,
            grid: TestGrid { max_atoms: 128 },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalCluster {
    pub frames: Vec<usize>,
    /// Frame of largest mass in the cluster.
    pub representative: usize,
    pub mass: f64,
    pub cycle: DiscreteCycle,
    pub varifold: DiscreteVarifold,
}

/// Frames with mass within `band` of the sup-mass, clustered by single linkage in f_distance.
pub fn critical_extract(s: &Sweepout, band: f64, opts: &ExtractOptions) -> Result<Vec<CriticalCluster>> {
    if !(band >= 0.0) {
        return Err(GeonetError::rejected("band must be nonnegative"));
    }
    let masses = s.masses();
    let sup = masses.iter().copied().fold(0.0, f64::max);
    let picked: Vec<usize> = (0..masses.len()).filter(|&i| masses[i] >= sup - band).collect();
    if picked.is_empty() || sup == 0.0 {
        return Ok(Vec::new());
    }
    let vars: Vec<DiscreteVarifold> = picked.par_iter().map(|&i| s.frames[i].to_varifold(&s.model)).collect::<Result<_>>()?;
    let mut parent: Vec<usize> = (0..picked.len()).collect();
    fn root(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..picked.len() {
        for j in (i + 1)..picked.len() {
            let (ri, rj) = (root(&mut parent, i), root(&mut parent, j));
            if ri == rj {
                continue;
            }
            if f_distance(&s.model, &vars[i], &vars[j], &opts.grid)? < opts.radius {
                parent[rj] = ri;
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = std::collections::BTreeMap::new();
    for i in 0..picked.len() {
        let r = root(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    Ok(groups
        .into_values()
        .map(|members| {
            let rep = *members
                .iter()
                .max_by(|a, b| masses[picked[**a]].total_cmp(&masses[picked[**b]]))
                .expect("nonempty group");
            CriticalCluster {
                frames: members.iter().map(|&i| picked[i]).collect(),
                representative: picked[rep],
                mass: masses[picked[rep]],
                cycle: s.frames[picked[rep]].clone(),
                varifold: vars[rep].clone(),
            }
        })
        .collect())
}

/// Largest mass of `v` inside a ball of the given radius centered at a sample.
pub fn max_mass_in_ball(model: &ManifoldModel, v: &DiscreteVarifold, radius: f64) -> f64 {
    let s = v.samples();
    s.par_iter()
        .map(|a| s.iter().filter(|b| model.distance(&a.point, &b.point) <= radius).map(|b| b.weight).sum::<f64>())
        .reduce(|| 0.0, f64::max)
}

/// max_mass_in_ball / (2·radius): about 1 along an embedded curve, at least 2 near a
/// junction or a doubled arc.
pub fn density_ratio(model: &ManifoldModel, v: &DiscreteVarifold, radius: f64) -> f64 {
    max_mass_in_ball(model, v, radius) / (2.0 * radius)
}

/// Polishes a cycle into a stationary net: one loop per polyline, with two auxiliary points
/// at one and two thirds of the polyline.
pub fn cycle_to_net(model: &ManifoldModel, cycle: &DiscreteCycle, opts: &SolveOptions) -> Result<GeodesicNet> {
    if cycle.polylines.is_empty() {
        return Err(GeonetError::rejected("empty cycle"));
    }
    let mut graph = WeightedMultigraph::new();
    let mut init = NetInit {
        positions: Vec::new(),
        edges: Vec::new(),
    };
    for (i, p) in cycle.polylines.iter().enumerate() {
        let n = p.points.len() - 1;
        if n < 3 {
            return Err(GeonetError::rejected(format!("polyline {i} is too short to carry a loop")));
        }
        let v = graph.add_vertex(format!("p{i}"));
        graph.add_edge(format!("c{i}"), v, v, p.multiplicity);
        init.positions.push(p.points[0]);
        init.edges.push(EdgeInit::Loop {
            aux: Some([p.points[n / 3], p.points[2 * n / 3]]),
            guess: Vector::zeros(),
        });
    }
    Ok(solve_stationary_with(model, &graph, &init, opts)?.net)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexBoundOptions {
    pub segments: usize,
    pub eig_tol: f64,
    pub eps: f64,
    pub scale: f64,
    pub certify: CertifyOptions,
    pub solve: SolveOptions,
}

impl Default for IndexBoundOptions {
    fn default() -> Self {
        IndexBoundOptions {
            segments: 128,
            eig_tol: 1e-6,
            eps: 0.05,
            scale: 1.0,
            certify: CertifyOptions::default(),
            solve: SolveOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum IndexBoundStatus {
    Verified {
        index: usize,
        nullity: usize,
        residual: f64,
        /// The certification at k = bound + 1 succeeded.
        certified: bool,
        certification_note: String,
        pass: bool,
    },
    Unverified {
        reason: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexBoundEntry {
    pub mass: f64,
    pub status: IndexBoundStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexBoundReport {
    pub p: usize,
    pub d: usize,
    pub n: usize,
    pub bound: usize,
    pub entries: Vec<IndexBoundEntry>,
    /// Every entry verified and passing.
    pub pass: bool,
}

fn index_bound_entry(model: &ManifoldModel, cycle: &DiscreteCycle, k: usize, bound: usize, opts: &IndexBoundOptions) -> IndexBoundStatus {
    let net = match cycle_to_net(model, cycle, &opts.solve) {
        Ok(net) if net.is_stationary() => net,
        Ok(net) => {
            return IndexBoundStatus::Unverified {
                reason: format!("polished net is not stationary (residual {:.3e})", net.max_residual()),
            }
        }
        Err(e) => return IndexBoundStatus::Unverified { reason: e.to_string() },
    };
    let run = || -> Result<IndexBoundStatus> {
        let form = assemble_index_form(&net, opts.segments)?;
        let report = index_from_form(&form, opts.eig_tol)?;
        let fields = lowest_eigenfields(&form, k)?;
        let family = family_from_fields_unchecked(&form, &fields, opts.scale)?;
        let cert = certify_k_unstable(&net, &family, opts.eps, &opts.certify)?;
        let note = match &cert {
            crate::instability::Certification::Certified(c) => format!("certified with c0 = {:.4}", c.c0),
            crate::instability::Certification::Failed(f) => {
                format!("failed at sample {} ({}): {:?}", f.sample, f.label, f.violation)
            }
        };
        let certified = cert.is_certified();
        Ok(IndexBoundStatus::Verified {
            index: report.index,
            nullity: report.nullity,
            residual: net.max_residual(),
            certified,
            certification_note: note,
            pass: report.index <= bound && !certified,
        })
    };
    run().unwrap_or_else(|e| IndexBoundStatus::Unverified { reason: e.to_string() })
}

/// For each critical cycle: index ≤ p(n − d) and no certificate of (p(n − d) + 1)-instability
/// from the lowest eigenfields.
pub fn index_bound_report(model: &ManifoldModel, criticals: &[DiscreteCycle], p: usize, d: usize, opts: &IndexBoundOptions) -> Result<IndexBoundReport> {
    let n = model.dim();
    if d == 0 || d > n || p == 0 {
        return Err(GeonetError::rejected("need p ≥ 1 and 1 ≤ d ≤ n"));
    }
    let bound = p * (n - d);
    let entries: Vec<IndexBoundEntry> = criticals
        .iter()
        .map(|c| IndexBoundEntry {
            mass: c.mass(model),
            status: index_bound_entry(model, c, bound + 1, bound, opts),
        })
        .collect();
    let pass = !entries.is_empty() && entries.iter().all(|e| matches!(e.status, IndexBoundStatus::Verified { pass: true, .. }));
    Ok(IndexBoundReport { p, d, n, bound, entries, pass })
}

/// Parses a sweepout file:
///
/// ```text
/// [manifold] model=sphere dim=2
/// [sweepout] dimension=1 vertices=3 cells=2
/// [family] kind=latitude-fourier points=256 params=0,0,0,0,0,0,0,0
/// [vertex] v0 0.0
/// [vertex] v1 0.5
/// [vertex] v2 1.0
/// [cell] c0 v0 v1
/// [cell] c1 v1 v2
/// ```
///
/// Each vertex carries its parameter coordinates; its cycle is the family's cycle there.
pub fn parse_sweepout(text: &str, default_model: Option<&ManifoldModel>) -> Result<Sweepout> {
    let perr = |line: usize, m: String| GeonetError::Parse { line, message: m };
    let mut model = None;
    let mut header: Option<(usize, usize, usize, usize)> = None;
    let mut family: Option<(usize, Vec<f64>, usize)> = None;
    let mut ids: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    let mut coords: Vec<Vec<f64>> = Vec::new();
    let mut cells: Vec<Vec<usize>> = Vec::new();
    let kv = |line: usize, tok: &str| -> Result<(String, String)> {
        tok.split_once('=')
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .ok_or_else(|| perr(line, format!("expected key=value, found `{tok}`")))
    };
    let int = |line: usize, v: &str| v.parse::<usize>().map_err(|_| perr(line, format!("expected an integer, found `{v}`")));
    let num = |line: usize, v: &str| {
        v.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| perr(line, format!("expected a number, found `{v}`")))
    };
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let toks: Vec<&str> = content.split_whitespace().collect();
        match toks[0] {
            "[manifold]" => model = Some(parse_manifold_line(line, &toks[1..])?.build()?),
            "[sweepout]" => {
                let (mut dim, mut nv, mut nc) = (None, None, None);
                for t in &toks[1..] {
                    let (k, v) = kv(line, t)?;
                    match k.as_str() {
                        "dimension" => dim = Some(int(line, &v)?),
                        "vertices" => nv = Some(int(line, &v)?),
                        "cells" => nc = Some(int(line, &v)?),
                        other => return Err(perr(line, format!("unknown sweepout key `{other}`"))),
                    }
                }
                match (dim, nv, nc) {
                    (Some(a), Some(b), Some(c)) => header = Some((a, b, c, line)),
                    _ => return Err(perr(line, "[sweepout] needs dimension, vertices and cells".into())),
                }
            }
            "[family]" => {
                let (mut kind, mut params, mut points) = (None, vec![0.0; FOURIER_PARAMS], 256);
                for t in &toks[1..] {
                    let (k, v) = kv(line, t)?;
                    match k.as_str() {
                        "kind" => kind = Some(v),
                        "points" => points = int(line, &v)?,
                        "params" => params = v.split(',').map(|x| num(line, x)).collect::<Result<_>>()?,
                        other => return Err(perr(line, format!("unknown family key `{other}`"))),
                    }
                }
                match kind.as_deref() {
                    Some("latitude-fourier") => family = Some((line, params, points)),
                    Some(other) => return Err(perr(line, format!("unknown family `{other}`"))),
                    None => return Err(perr(line, "[family] needs kind=...".into())),
                }
            }
            "[vertex]" => {
                if toks.len() < 3 {
                    return Err(perr(line, "[vertex] needs an id and coordinates".into()));
                }
                if ids.insert(toks[1].to_string(), coords.len()).is_some() {
                    return Err(perr(line, format!("duplicate vertex `{}`", toks[1])));
                }
                coords.push(toks[2..].iter().map(|t| num(line, t)).collect::<Result<_>>()?);
            }
            "[cell]" => {
                if toks.len() < 3 {
                    return Err(perr(line, "[cell] needs an id and vertices".into()));
                }
                cells.push(
                    toks[2..]
                        .iter()
                        .map(|t| ids.get(*t).copied().ok_or_else(|| perr(line, format!("unknown vertex `{t}`"))))
                        .collect::<Result<_>>()?,
                );
            }
            other => return Err(perr(line, format!("unknown record `{other}`"))),
        }
    }
    let model = model.or_else(|| default_model.cloned()).ok_or_else(|| perr(1, "no [manifold] line and no default model".into()))?;
    let (dim, nv, nc, hline) = header.ok_or_else(|| perr(1, "missing [sweepout] header".into()))?;
    if nv != coords.len() || nc != cells.len() {
        return Err(perr(hline, format!("header declares {nv} vertices and {nc} cells, found {} and {}", coords.len(), cells.len())));
    }
    let (fline, params, points) = family.ok_or_else(|| perr(1, "missing [family] line".into()))?;
    let fam = LatitudeFourier::new(&model, &params, points).map_err(|e| perr(fline, e.to_string()))?;
    let complex = SimplicialComplex::new(coords, cells).map_err(|e| perr(hline, e.to_string()))?;
    if complex.dim() != dim {
        return Err(perr(hline, format!("header dimension {dim}, cells have dimension {}", complex.dim())));
    }
    Sweepout::from_family(Arc::new(fam), complex)
}

/// Sweepout file for the latitude-Fourier family on `frames` equally spaced parameters.
pub fn write_latitude_sweepout(model_line: &str, params: &[f64], points: usize, frames: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "[manifold] {model_line}");
    let _ = writeln!(out, "[sweepout] dimension=1 vertices={frames} cells={}", frames - 1);
    let p: Vec<String> = params.iter().map(|x| format!("{x}")).collect();
    let _ = writeln!(out, "[family] kind=latitude-fourier points={points} params={}", p.join(","));
    for i in 0..frames {
        let _ = writeln!(out, "[vertex] v{i} {}", i as f64 / (frames - 1) as f64);
    }
    for i in 0..frames - 1 {
        let _ = writeln!(out, "[cell] c{i} v{i} v{}", i + 1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s2() -> ManifoldModel {
        ManifoldModel::sphere(2).unwrap()
    }

    #[test]
    fn latitude_sup_mass_is_the_equator() {
        let fam = LatitudeFourier::new(&s2(), &[0.0; 8], 256).unwrap();
        let s = Sweepout::interval(Arc::new(fam), 65).unwrap();
        // geodesic polygon inscribed in a circle of radius r
        let polygon = |r: f64| 256.0 * 2.0 * (r * (std::f64::consts::PI / 256.0).sin()).asin();
        assert!((sup_mass(&s) - std::f64::consts::TAU).abs() < 1e-12);
        assert!(s.detects());
        let masses = s.masses();
        let h = std::f64::consts::PI / 8.0;
        // frame at height sin(h) is a circle of radius cos(h)
        let t = (1.0 + h.sin()) / 2.0;
        let c = LatitudeFourier::new(&s2(), &[0.0; 8], 256).unwrap().cycle(&[t]).unwrap();
        assert!((c.mass(&s2()) - polygon(h.cos())).abs() < 1e-12);
        assert!(masses[0] < 1e-12 && masses[64] < 1e-12);
    }

    #[test]
    fn empty_sweepout_is_not_detecting() {
        let c = SimplicialComplex::interval(5).unwrap();
        let s = Sweepout {
            model: s2(),
            frames: vec![DiscreteCycle::empty(); 5],
            complex: c,
            generator: None,
        };
        assert_eq!(sup_mass(&s), 0.0);
        assert!(!s.detects());
    }

    #[test]
    fn open_polyline_is_rejected() {
        let p = Polyline {
            points: vec![Vector::zeros(), Vector::x()],
            multiplicity: 1,
        };
        assert!(DiscreteCycle::new(vec![p]).is_err());
    }

    #[test]
    fn torus_horizontal_circles_have_length_one() {
        let t2 = ManifoldModel::torus(&[1.0, 1.0]).unwrap();
        let fam = LatitudeFourier::new(&t2, &[0.0; 8], 64).unwrap();
        let s = Sweepout::interval(Arc::new(fam), 9).unwrap();
        assert!(s.masses().iter().all(|m| (m - 1.0).abs() < 1e-12));
        assert!(s.detects());
    }

    #[test]
    fn sweepout_file_round_trip() {
        let text = write_latitude_sweepout("model=sphere dim=2", &[0.0; 8], 64, 5);
        let s = parse_sweepout(&text, None).unwrap();
        assert_eq!(s.frames.len(), 5);
        assert!((sup_mass(&s) - std::f64::consts::TAU).abs() < 1e-12);
        let bad = text.replace("vertices=5", "vertices=6");
        assert!(matches!(parse_sweepout(&bad, None), Err(GeonetError::Parse { line: 2, .. })));
    }
}
