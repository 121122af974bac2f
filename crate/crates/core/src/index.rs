//! Second variation of length on a stationary net, discretized with continuous piecewise
//! linear fields in parallel normal frames, and Morse index by generalized eigenvalue
//! counting.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GeonetError, Result};
use crate::manifold::{geodesic_shoot, ManifoldModel, PointTangent, Vector};
use crate::net::{GeodesicNet, GraphEdge, NetArc, NetVertex, WeightedMultigraph};

/// A variation field along a net: one value per net vertex (shared by all incident arc
/// ends) and one per interior node of each arc.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationField {
    pub vertex_values: Vec<Vector>,
    /// Interior nodes 1..N−1 of each arc.
    pub arc_values: Vec<Vec<Vector>>,
}

#[derive(Clone, Debug)]
struct ArcNodes {
    from: usize,
    to: usize,
    multiplicity: f64,
    h: f64,
    points: Vec<Vector>,
    tangents: Vec<Vector>,
    frames: Vec<Vec<Vector>>,
    /// First global index of the interior-node block.
    offset: usize,
}

#[derive(Clone, Debug)]
pub struct IndexForm {
    pub q: DMatrix<f64>,
    pub gram: DMatrix<f64>,
    pub segments_per_edge: usize,
    model: ManifoldModel,
    vertex_points: Vec<Vector>,
    vertex_dofs: Vec<Vec<Vector>>,
    vertex_offsets: Vec<usize>,
    arcs: Vec<ArcNodes>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Spectrum {
    /// Ascending generalized eigenvalues.
    pub values: Vec<f64>,
    /// Gram-orthonormal eigenvectors as columns, when requested.
    #[serde(skip)]
    pub vectors: Option<DMatrix<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexReport {
    pub index: usize,
    pub nullity: usize,
    pub threshold: f64,
    pub eigenvalues: Vec<f64>,
}

impl IndexReport {
    pub fn lowest(&self, k: usize) -> &[f64] {
        &self.eigenvalues[..k.min(self.eigenvalues.len())]
    }
}

/// DOF space at a vertex: the span of the normal spaces of the incident arc ends, as a
/// g-orthonormal basis. At a smooth degree-2 vertex this drops the common tangent.
fn vertex_basis(model: &ManifoldModel, x: &Vector, end_tangents: &[Vector]) -> Vec<Vector> {
    let basis = model.tangent_basis(x);
    let n = basis.len();
    let mut m = DMatrix::<f64>::identity(n, n) * end_tangents.len() as f64;
    for t in end_tangents {
        let c = DVector::from_vec(model.coordinates(x, &basis, t));
        m -= &c * c.transpose();
    }
    let eig = SymmetricEigen::new(m);
    let top = eig.eigenvalues.amax();
    (0..n)
        .filter(|&i| eig.eigenvalues[i] > 1e-6 * top)
        .map(|i| {
            let col = eig.eigenvectors.column(i);
            (0..n).fold(Vector::zeros(), |acc, k| acc + basis[k] * col[k])
        })
        .collect()
}

/// Resamples an arc by reshooting it with the requested number of segments.
fn resample(model: &ManifoldModel, arc: &NetArc, segments: usize) -> Result<(Vec<Vector>, Vec<Vector>)> {
    let s = &arc.segment;
    if s.steps() == segments {
        return Ok((s.points.clone(), s.tangents.clone()));
    }
    let start = PointTangent::new(model, s.start, s.velocity)?;
    let seg = geodesic_shoot(model, &start, s.length, segments)?;
    Ok((seg.points, seg.tangents))
}

/// Assembles the index form with `segments_per_edge` linear elements per arc.
pub fn assemble_index_form(net: &GeodesicNet, segments_per_edge: usize) -> Result<IndexForm> {
    let model = &net.model;
    let residual = net.max_residual();
    if residual >= model.tol.stationarity_tol {
        return Err(GeonetError::NonStationary(residual));
    }
    if segments_per_edge < 8 {
        return Err(GeonetError::rejected("index form needs at least 8 segments per edge"));
    }
    let n = model.dim();
    let nc = n - 1;

    let sampled: Vec<(Vec<Vector>, Vec<Vector>)> = net
        .arcs
        .par_iter()
        .map(|a| resample(model, a, segments_per_edge))
        .collect::<Result<_>>()?;

    let mut ends: Vec<Vec<Vector>> = vec![Vec::new(); net.vertices.len()];
    for (a, (_, tangents)) in net.arcs.iter().zip(&sampled) {
        ends[a.from].push(tangents[0]);
        ends[a.to].push(*tangents.last().expect("samples"));
    }
    let vertex_points: Vec<Vector> = net.vertices.iter().map(|v| v.position).collect();
    let vertex_dofs: Vec<Vec<Vector>> = vertex_points
        .iter()
        .zip(&ends)
        .map(|(x, t)| vertex_basis(model, x, t))
        .collect();
    let mut vertex_offsets = Vec::with_capacity(vertex_dofs.len());
    let mut total = 0;
    for d in &vertex_dofs {
        vertex_offsets.push(total);
        total += d.len();
    }
    let mut arcs = Vec::with_capacity(net.arcs.len());
    for (a, (points, tangents)) in net.arcs.iter().zip(sampled) {
        let frames = model.normal_frames(&points, &tangents);
        if frames.iter().any(|f| f.len() != nc) {
            return Err(GeonetError::Numeric("degenerate normal frame".into()));
        }
        arcs.push(ArcNodes {
            from: a.from,
            to: a.to,
            multiplicity: f64::from(a.multiplicity),
            h: a.segment.length / segments_per_edge as f64,
            points,
            tangents,
            frames,
            offset: total,
        });
        total += (segments_per_edge - 1) * nc;
    }

    let form = IndexForm {
        q: DMatrix::zeros(total, total),
        gram: DMatrix::zeros(total, total),
        segments_per_edge,
        model: model.clone(),
        vertex_points,
        vertex_dofs,
        vertex_offsets,
        arcs,
    };
    let contributions: Vec<Vec<(usize, usize, f64, f64)>> =
        form.arcs.par_iter().map(|arc| form.arc_entries(arc)).collect();
    let mut form = form;
    for entries in contributions {
        for (i, j, q, g) in entries {
            form.q[(i, j)] += q;
            form.gram[(i, j)] += g;
        }
    }
    let q = (&form.q + form.q.transpose()) * 0.5;
    let gram = (&form.gram + form.gram.transpose()) * 0.5;
    form.q = q;
    form.gram = gram;
    Ok(form)
}

impl IndexForm {
    pub fn dof_count(&self) -> usize {
        self.q.nrows()
    }

    /// Global DOFs feeding node `j` of an arc, with the matrix mapping them to normal
    /// frame components (rows: components, columns: listed DOFs).
    fn node_map(&self, arc: &ArcNodes, j: usize) -> (Vec<usize>, DMatrix<f64>) {
        let nc = self.model.dim() - 1;
        let last = self.segments_per_edge;
        if j == 0 || j == last {
            let v = if j == 0 { arc.from } else { arc.to };
            let dofs = &self.vertex_dofs[v];
            let x = &arc.points[j];
            let map = DMatrix::from_fn(nc, dofs.len(), |a, b| self.model.inner(x, &arc.frames[j][a], &dofs[b]));
            ((0..dofs.len()).map(|b| self.vertex_offsets[v] + b).collect(), map)
        } else {
            let start = arc.offset + (j - 1) * nc;
            ((start..start + nc).collect(), DMatrix::identity(nc, nc))
        }
    }

    fn curvature_matrix(&self, arc: &ArcNodes, j: usize) -> DMatrix<f64> {
        let nc = self.model.dim() - 1;
        let (x, t, e) = (&arc.points[j], &arc.tangents[j], &arc.frames[j]);
        DMatrix::from_fn(nc, nc, |a, b| self.model.inner(x, &self.model.curvature_term(x, t, &e[a]), &e[b]))
    }

    /// (row, col, Q entry, Gram entry) contributions of one arc.
    fn arc_entries(&self, arc: &ArcNodes) -> Vec<(usize, usize, f64, f64)> {
        let nc = self.model.dim() - 1;
        let h = arc.h;
        let m = arc.multiplicity;
        let gauss = [0.5 - 0.5 / 3f64.sqrt(), 0.5 + 0.5 / 3f64.sqrt()];
        let mut out = Vec::new();
        let mut kappa_prev = self.curvature_matrix(arc, 0);
        for j in 0..self.segments_per_edge {
            let kappa_next = self.curvature_matrix(arc, j + 1);
            let mut kl = DMatrix::zeros(2 * nc, 2 * nc);
            let mut gl = DMatrix::zeros(2 * nc, 2 * nc);
            for l in 0..2 {
                for lp in 0..2 {
                    let stiff = if l == lp { 1.0 / h } else { -1.0 / h };
                    let mass = if l == lp { h / 3.0 } else { h / 6.0 };
                    for a in 0..nc {
                        kl[(l * nc + a, lp * nc + a)] += m * stiff;
                        gl[(l * nc + a, lp * nc + a)] += mass;
                    }
                    for xi in gauss {
                        let shape = [1.0 - xi, xi];
                        let w = 0.5 * h * shape[l] * shape[lp];
                        let kappa = &kappa_prev * (1.0 - xi) + &kappa_next * xi;
                        for a in 0..nc {
                            for b in 0..nc {
                                kl[(l * nc + a, lp * nc + b)] -= m * w * kappa[(a, b)];
                            }
                        }
                    }
                }
            }
            let (i0, p0) = self.node_map(arc, j);
            let (i1, p1) = self.node_map(arc, j + 1);
            let cols = i0.len() + i1.len();
            let mut p = DMatrix::zeros(2 * nc, cols);
            p.view_mut((0, 0), (nc, i0.len())).copy_from(&p0);
            p.view_mut((nc, i0.len()), (nc, i1.len())).copy_from(&p1);
            let kq = p.transpose() * kl * &p;
            let kg = p.transpose() * gl * &p;
            let idx: Vec<usize> = i0.into_iter().chain(i1).collect();
            for (r, &gi) in idx.iter().enumerate() {
                for (c, &gj) in idx.iter().enumerate() {
                    out.push((gi, gj, kq[(r, c)], kg[(r, c)]));
                }
            }
            kappa_prev = kappa_next;
        }
        out
    }

    pub fn quadratic(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        (x.transpose() * &self.q * y)[(0, 0)]
    }

    pub fn gram_inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        (x.transpose() * &self.gram * y)[(0, 0)]
    }

    /// Generalized eigenvalues of Q relative to the Gram matrix, by Cholesky reduction.
    pub fn spectrum(&self, with_vectors: bool) -> Result<Spectrum> {
        let chol = self
            .gram
            .clone()
            .cholesky()
            .ok_or_else(|| GeonetError::Numeric("Gram matrix is not positive definite".into()))?;
        let l = chol.l();
        let a = l
            .solve_lower_triangular(&self.q)
            .ok_or_else(|| GeonetError::Numeric("triangular solve failed".into()))?;
        let c = l
            .solve_lower_triangular(&a.transpose())
            .ok_or_else(|| GeonetError::Numeric("triangular solve failed".into()))?;
        let c = (&c + c.transpose()) * 0.5;
        if with_vectors {
            let eig = SymmetricEigen::try_new(c, 1e-14, 0)
                .ok_or_else(|| GeonetError::Numeric("eigen-solver did not converge".into()))?;
            let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
            order.sort_by(|i, j| eig.eigenvalues[*i].total_cmp(&eig.eigenvalues[*j]));
            let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
            let y = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, k| eig.eigenvectors[(r, order[k])]);
            let x = l
                .transpose()
                .solve_upper_triangular(&y)
                .ok_or_else(|| GeonetError::Numeric("triangular solve failed".into()))?;
            Ok(Spectrum {
                values,
                vectors: Some(x),
            })
        } else {
            let mut values: Vec<f64> = c.symmetric_eigenvalues().iter().copied().collect();
            if values.iter().any(|v| !v.is_finite()) {
                return Err(GeonetError::Numeric("non-finite eigenvalue".into()));
            }
            values.sort_by(f64::total_cmp);
            Ok(Spectrum { values, vectors: None })
        }
    }

    /// Expands DOF coefficients into ambient vectors at every node.
    pub fn field(&self, coeffs: &DVector<f64>) -> VariationField {
        let nc = self.model.dim() - 1;
        let vertex_values = self
            .vertex_dofs
            .iter()
            .zip(&self.vertex_offsets)
            .map(|(dofs, off)| dofs.iter().enumerate().fold(Vector::zeros(), |acc, (b, d)| acc + d * coeffs[off + b]))
            .collect();
        let arc_values = self
            .arcs
            .iter()
            .map(|arc| {
                (1..self.segments_per_edge)
                    .map(|j| {
                        let base = arc.offset + (j - 1) * nc;
                        arc.frames[j]
                            .iter()
                            .enumerate()
                            .fold(Vector::zeros(), |acc, (a, e)| acc + e * coeffs[base + a])
                    })
                    .collect()
            })
            .collect();
        VariationField {
            vertex_values,
            arc_values,
        }
    }

    /// Projects a field onto the discrete space (normal components inside arcs, vertex DOF
    /// components at vertices).
    pub fn coefficients(&self, field: &VariationField) -> Result<DVector<f64>> {
        if field.vertex_values.len() != self.vertex_dofs.len() || field.arc_values.len() != self.arcs.len() {
            return Err(GeonetError::rejected("field does not match the net"));
        }
        let nc = self.model.dim() - 1;
        let mut c = DVector::zeros(self.dof_count());
        for (v, dofs) in self.vertex_dofs.iter().enumerate() {
            for (b, d) in dofs.iter().enumerate() {
                c[self.vertex_offsets[v] + b] = self.model.inner(&self.vertex_points[v], d, &field.vertex_values[v]);
            }
        }
        for (arc, values) in self.arcs.iter().zip(&field.arc_values) {
            if values.len() != self.segments_per_edge - 1 {
                return Err(GeonetError::rejected("field has the wrong number of arc nodes"));
            }
            for (j, val) in values.iter().enumerate() {
                let x = &arc.points[j + 1];
                for (a, e) in arc.frames[j + 1].iter().enumerate() {
                    c[arc.offset + j * nc + a] = self.model.inner(x, e, val);
                }
            }
        }
        Ok(c)
    }

    /// Samples an ambient vector field at every node of the discretization.
    pub fn restrict<F: Fn(&Vector) -> Vector>(&self, f: F) -> VariationField {
        VariationField {
            vertex_values: self.vertex_points.iter().map(&f).collect(),
            arc_values: self
                .arcs
                .iter()
                .map(|a| a.points[1..self.segments_per_edge].iter().map(&f).collect())
                .collect(),
        }
    }

    /// Node points paired with the field values there: all vertices, then arc interiors.
    pub fn node_samples<'a>(&'a self, field: &'a VariationField) -> Vec<(Vector, Vector)> {
        let mut out: Vec<(Vector, Vector)> = self
            .vertex_points
            .iter()
            .copied()
            .zip(field.vertex_values.iter().copied())
            .collect();
        for (arc, values) in self.arcs.iter().zip(&field.arc_values) {
            out.extend(arc.points[1..self.segments_per_edge].iter().copied().zip(values.iter().copied()));
        }
        out
    }

    pub fn model(&self) -> &ManifoldModel {
        &self.model
    }
}

/// Morse index and nullity: eigenvalues below −τ and within [−τ, τ], where τ is `eig_tol`
/// times the largest eigenvalue magnitude.
pub fn morse_index(net: &GeodesicNet, segments_per_edge: usize, eig_tol: f64) -> Result<IndexReport> {
    let form = assemble_index_form(net, segments_per_edge)?;
    index_from_form(&form, eig_tol)
}

pub fn index_from_form(form: &IndexForm, eig_tol: f64) -> Result<IndexReport> {
    let spectrum = form.spectrum(false)?;
    let top = spectrum.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let threshold = eig_tol * top;
    Ok(IndexReport {
        index: spectrum.values.iter().filter(|v| **v < -threshold).count(),
        nullity: spectrum.values.iter().filter(|v| v.abs() <= threshold).count(),
        threshold,
        eigenvalues: spectrum.values,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdditivityReport {
    pub union: IndexReport,
    pub components: Vec<usize>,
    pub additive: bool,
}

fn min_sample_spacing(net: &GeodesicNet) -> f64 {
    net.arcs
        .iter()
        .map(|a| a.segment.length / a.segment.steps() as f64)
        .fold(0.0, f64::max)
}

/// Merges nets with pairwise disjoint supports into a single net.
pub fn union_net(nets: &[GeodesicNet]) -> Result<GeodesicNet> {
    let first = nets.first().ok_or_else(|| GeonetError::rejected("no nets given"))?;
    let model = &first.model;
    for (i, a) in nets.iter().enumerate() {
        if a.model != *model {
            return Err(GeonetError::rejected("nets live on different manifolds"));
        }
        for b in &nets[i + 1..] {
            let gap = min_sample_spacing(a).max(min_sample_spacing(b));
            let close = a.arcs.iter().flat_map(|x| &x.segment.points).any(|p| {
                b.arcs
                    .iter()
                    .flat_map(|y| &y.segment.points)
                    .any(|q| model.distance(p, q) < gap)
            });
            if close {
                return Err(GeonetError::rejected("nets are not disjoint"));
            }
        }
    }
    let mut graph = WeightedMultigraph::new();
    let mut vertices: Vec<NetVertex> = Vec::new();
    let mut arcs: Vec<NetArc> = Vec::new();
    for (k, net) in nets.iter().enumerate() {
        let vbase = vertices.len();
        let gvbase = graph.vertices.len();
        let gebase = graph.edges.len();
        for label in &net.graph.vertices {
            graph.vertices.push(format!("{k}.{label}"));
        }
        for e in &net.graph.edges {
            graph.edges.push(GraphEdge {
                label: format!("{k}.{}", e.label),
                from: e.from + gvbase,
                to: e.to + gvbase,
                multiplicity: e.multiplicity,
                kind: e.kind,
            });
        }
        vertices.extend(net.vertices.iter().map(|v| NetVertex {
            position: v.position,
            graph_vertex: v.graph_vertex.map(|g| g + gvbase),
        }));
        arcs.extend(net.arcs.iter().map(|a| NetArc {
            graph_edge: a.graph_edge + gebase,
            from: a.from + vbase,
            to: a.to + vbase,
            multiplicity: a.multiplicity,
            segment: a.segment.clone(),
        }));
    }
    GeodesicNet::from_parts(model.clone(), graph, vertices, arcs)
}

/// Compares the index of the union of disjoint nets with the sum of their indices.
pub fn index_additivity_check(nets: &[GeodesicNet], segments_per_edge: usize, eig_tol: f64) -> Result<AdditivityReport> {
    let union = morse_index(&union_net(nets)?, segments_per_edge, eig_tol)?;
    let components = nets
        .iter()
        .map(|n| morse_index(n, segments_per_edge, eig_tol).map(|r| r.index))
        .collect::<Result<Vec<_>>>()?;
    let additive = union.index == components.iter().sum::<usize>();
    Ok(AdditivityReport {
        union,
        components,
        additive,
    })
}
