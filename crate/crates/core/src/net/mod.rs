//! Weighted multigraphs realized by geodesic arcs, their vertex balance condition, and a
//! Newton solver for stationary configurations.
//!
//! A loop edge is realized either as one closed arc from its vertex back to itself or,
//! when auxiliary points are supplied, as three arcs through two free degree-2 vertices.

pub(crate) mod format;
mod solve;

pub use format::{manifold_line, parse_net, write_net, ParsedNet};
pub use solve::{solve_stationary, solve_stationary_with, SolveOptions, SolveReport};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GeonetError, Result};
use crate::manifold::{geodesic_bvp_with, BvpOptions, GeodesicSegment, ManifoldModel, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeKind {
    Arc,
    Loop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub label: String,
    pub from: usize,
    pub to: usize,
    pub multiplicity: u32,
    pub kind: EdgeKind,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightedMultigraph {
    pub vertices: Vec<String>,
    pub edges: Vec<GraphEdge>,
}

impl WeightedMultigraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_vertex(&mut self, label: impl Into<String>) -> usize {
        self.vertices.push(label.into());
        self.vertices.len() - 1
    }

    pub fn add_edge(&mut self, label: impl Into<String>, from: usize, to: usize, multiplicity: u32) -> usize {
        let kind = if from == to { EdgeKind::Loop } else { EdgeKind::Arc };
        self.edges.push(GraphEdge {
            label: label.into(),
            from,
            to,
            multiplicity,
            kind,
        });
        self.edges.len() - 1
    }

    pub fn vertex_index(&self, label: &str) -> Option<usize> {
        self.vertices.iter().position(|v| v == label)
    }

    /// Number of edge-ends at v; loops count twice.
    pub fn degree(&self, v: usize) -> usize {
        self.edges
            .iter()
            .map(|e| usize::from(e.from == v) + usize::from(e.to == v))
            .sum()
    }

    /// Structural checks, including the degree ≥ 2 regularity surrogate.
    pub fn validate(&self) -> Result<()> {
        for e in &self.edges {
            if e.from >= self.vertices.len() || e.to >= self.vertices.len() {
                return Err(GeonetError::rejected(format!("edge `{}` references an unknown vertex", e.label)));
            }
            if e.multiplicity == 0 {
                return Err(GeonetError::rejected(format!("edge `{}` has multiplicity 0", e.label)));
            }
            if (e.kind == EdgeKind::Loop) != (e.from == e.to) {
                return Err(GeonetError::rejected(format!("edge `{}` loop flag disagrees with its ends", e.label)));
            }
        }
        for (v, label) in self.vertices.iter().enumerate() {
            if self.degree(v) < 2 {
                return Err(GeonetError::rejected(format!(
                    "vertex `{label}` has degree {} (< 2)",
                    self.degree(v)
                )));
            }
        }
        Ok(())
    }
}

/// Initial data for one graph edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum EdgeInit {
    /// Initial velocity at the `from` vertex; its norm is the length estimate.
    /// A zero guess uses the projected chord.
    Arc { guess: Vector },
    /// Either two auxiliary points (three arcs) or a closed-arc initial velocity.
    Loop { aux: Option<[Vector; 2]>, guess: Vector },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetInit {
    pub positions: Vec<Vector>,
    pub edges: Vec<EdgeInit>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetVertex {
    pub position: Vector,
    /// Graph vertex this realizes; `None` for an auxiliary loop point.
    pub graph_vertex: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetArc {
    pub graph_edge: usize,
    pub from: usize,
    pub to: usize,
    pub multiplicity: u32,
    pub segment: GeodesicSegment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeodesicNet {
    pub model: ManifoldModel,
    pub graph: WeightedMultigraph,
    pub vertices: Vec<NetVertex>,
    pub arcs: Vec<NetArc>,
    length: f64,
    residuals: Vec<Vector>,
}

/// Arc endpoints of the realization: (graph edge, from, to, multiplicity, guess).
pub(crate) type ArcPlan = (usize, usize, usize, u32, Vector);

pub(crate) fn plan_arcs(
    model: &ManifoldModel,
    graph: &WeightedMultigraph,
    init: &NetInit,
) -> Result<(Vec<NetVertex>, Vec<ArcPlan>)> {
    if init.positions.len() != graph.vertices.len() {
        return Err(GeonetError::IncompleteNet(format!(
            "{} positions for {} vertices",
            init.positions.len(),
            graph.vertices.len()
        )));
    }
    if init.edges.len() != graph.edges.len() {
        return Err(GeonetError::IncompleteNet(format!(
            "{} edge initializers for {} edges",
            init.edges.len(),
            graph.edges.len()
        )));
    }
    let mut vertices: Vec<NetVertex> = init
        .positions
        .iter()
        .enumerate()
        .map(|(i, x)| {
            Ok(NetVertex {
                position: model.checked_point(x, 1e-6)?,
                graph_vertex: Some(i),
            })
        })
        .collect::<Result<_>>()?;
    let mut plan = Vec::new();
    for (ei, (edge, ini)) in graph.edges.iter().zip(&init.edges).enumerate() {
        let m = edge.multiplicity;
        match (edge.kind, ini) {
            (EdgeKind::Arc, EdgeInit::Arc { guess }) => plan.push((ei, edge.from, edge.to, m, *guess)),
            (EdgeKind::Loop, EdgeInit::Loop { aux: Some([a, b]), guess }) => {
                let ia = vertices.len();
                vertices.push(NetVertex {
                    position: model.checked_point(a, 1e-6)?,
                    graph_vertex: None,
                });
                vertices.push(NetVertex {
                    position: model.checked_point(b, 1e-6)?,
                    graph_vertex: None,
                });
                plan.push((ei, edge.from, ia, m, *guess));
                plan.push((ei, ia, ia + 1, m, Vector::zeros()));
                plan.push((ei, ia + 1, edge.from, m, Vector::zeros()));
            }
            (EdgeKind::Loop, EdgeInit::Loop { aux: None, guess }) => {
                if guess.norm() == 0.0 {
                    return Err(GeonetError::rejected(format!(
                        "closed loop `{}` needs a nonzero initial velocity",
                        edge.label
                    )));
                }
                plan.push((ei, edge.from, edge.from, m, *guess));
            }
            _ => {
                return Err(GeonetError::rejected(format!(
                    "edge `{}`: initializer kind does not match the edge kind",
                    edge.label
                )))
            }
        }
    }
    Ok((vertices, plan))
}

pub(crate) fn solve_arc(
    model: &ManifoldModel,
    vertices: &[NetVertex],
    arc: &ArcPlan,
    opts: &BvpOptions,
) -> Result<GeodesicSegment> {
    let (_, from, to, _, guess) = *arc;
    geodesic_bvp_with(model, &vertices[from].position, &vertices[to].position, &guess, opts)
}

/// Solves every arc boundary-value problem and assembles the net.
pub fn realize(model: &ManifoldModel, graph: &WeightedMultigraph, init: &NetInit) -> Result<GeodesicNet> {
    realize_with(model, graph, init, &BvpOptions::default())
}

pub fn realize_with(
    model: &ManifoldModel,
    graph: &WeightedMultigraph,
    init: &NetInit,
    opts: &BvpOptions,
) -> Result<GeodesicNet> {
    let (vertices, plan) = plan_arcs(model, graph, init)?;
    let segments: Vec<GeodesicSegment> = plan
        .par_iter()
        .map(|a| solve_arc(model, &vertices, a, opts))
        .collect::<Result<_>>()?;
    let arcs = plan
        .iter()
        .zip(segments)
        .map(|(&(graph_edge, from, to, multiplicity, _), segment)| NetArc {
            graph_edge,
            from,
            to,
            multiplicity,
            segment,
        })
        .collect();
    GeodesicNet::from_parts(model.clone(), graph.clone(), vertices, arcs)
}

impl GeodesicNet {
    /// Assembles a net from realized arcs; every graph edge must be covered.
    pub fn from_parts(
        model: ManifoldModel,
        graph: WeightedMultigraph,
        vertices: Vec<NetVertex>,
        arcs: Vec<NetArc>,
    ) -> Result<Self> {
        for (ei, e) in graph.edges.iter().enumerate() {
            if !arcs.iter().any(|a| a.graph_edge == ei) {
                return Err(GeonetError::IncompleteNet(format!("edge `{}` is not realized", e.label)));
            }
        }
        for a in &arcs {
            if a.from >= vertices.len() || a.to >= vertices.len() {
                return Err(GeonetError::IncompleteNet("arc references an unknown vertex".into()));
            }
        }
        let mut net = GeodesicNet {
            model,
            graph,
            vertices,
            arcs,
            length: 0.0,
            residuals: Vec::new(),
        };
        net.refresh();
        Ok(net)
    }

    fn refresh(&mut self) {
        self.length = self
            .arcs
            .iter()
            .map(|a| f64::from(a.multiplicity) * a.segment.length)
            .sum();
        self.residuals = balance(&self.arcs, self.vertices.len());
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn residuals(&self) -> &[Vector] {
        &self.residuals
    }

    pub fn residual(&self, v: usize) -> Result<Vector> {
        self.residuals
            .get(v)
            .copied()
            .ok_or_else(|| GeonetError::IncompleteNet(format!("vertex {v} is not part of the net")))
    }

    /// Largest g-norm of a vertex residual.
    pub fn max_residual(&self) -> f64 {
        self.vertices
            .iter()
            .zip(&self.residuals)
            .map(|(v, r)| self.model.norm(&v.position, r))
            .fold(0.0, f64::max)
    }

    pub fn is_stationary(&self) -> bool {
        self.max_residual() < self.model.tol.stationarity_tol
    }

    pub fn positions(&self) -> Vec<Vector> {
        self.vertices.iter().map(|v| v.position).collect()
    }

    /// Reconstructs initial data reproducing this net.
    pub fn init(&self) -> NetInit {
        let positions = self
            .vertices
            .iter()
            .filter(|v| v.graph_vertex.is_some())
            .map(|v| v.position)
            .collect();
        let edges = self
            .graph
            .edges
            .iter()
            .enumerate()
            .map(|(ei, e)| {
                let arcs: Vec<&NetArc> = self.arcs.iter().filter(|a| a.graph_edge == ei).collect();
                let guess = arcs[0].segment.velocity * arcs[0].segment.length;
                match e.kind {
                    EdgeKind::Arc => EdgeInit::Arc { guess },
                    EdgeKind::Loop if arcs.len() == 3 => EdgeInit::Loop {
                        aux: Some([
                            self.vertices[arcs[0].to].position,
                            self.vertices[arcs[1].to].position,
                        ]),
                        guess,
                    },
                    EdgeKind::Loop => EdgeInit::Loop { aux: None, guess },
                }
            })
            .collect();
        NetInit { positions, edges }
    }

    /// Applies an isometry given as an ambient linear map (embedded models only).
    pub fn transformed(&self, map: &nalgebra::SMatrix<f64, 6, 6>) -> Result<GeodesicNet> {
        let init = self.init();
        let moved = NetInit {
            positions: init.positions.iter().map(|x| map * x).collect(),
            edges: init
                .edges
                .iter()
                .map(|e| match e {
                    EdgeInit::Arc { guess } => EdgeInit::Arc { guess: map * guess },
                    EdgeInit::Loop { aux, guess } => EdgeInit::Loop {
                        aux: aux.map(|[a, b]| [map * a, map * b]),
                        guess: map * guess,
                    },
                })
                .collect(),
        };
        realize(&self.model, &self.graph, &moved)
    }
}

/// Σ over arc ends of multiplicity × inward unit tangent, per vertex.
pub(crate) fn balance(arcs: &[NetArc], vertex_count: usize) -> Vec<Vector> {
    let mut r = vec![Vector::zeros(); vertex_count];
    for a in arcs {
        let m = f64::from(a.multiplicity);
        r[a.from] += a.segment.tangents[0] * m;
        r[a.to] -= a.segment.end_tangent() * m;
    }
    r
}

pub fn net_length(net: &GeodesicNet) -> f64 {
    net.length()
}

pub fn vertex_residual(net: &GeodesicNet, v: usize) -> Result<Vector> {
    net.residual(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::vector;
    use std::f64::consts::PI;

    fn equator(m: u32) -> GeodesicNet {
        let s2 = ManifoldModel::sphere(2).unwrap();
        let mut g = WeightedMultigraph::new();
        let v = g.add_vertex("p");
        g.add_edge("eq", v, v, m);
        let init = NetInit {
            positions: vec![vector(&[1.0, 0.0, 0.0])],
            edges: vec![EdgeInit::Loop {
                aux: None,
                guess: vector(&[0.0, 2.0 * PI, 0.0]),
            }],
        };
        realize(&s2, &g, &init).unwrap()
    }

    #[test]
    fn equator_length_and_multiplicity() {
        assert!((equator(1).length() - 2.0 * PI).abs() < 1e-12);
        assert!((equator(2).length() - 4.0 * PI).abs() < 1e-12);
        assert!(equator(1).max_residual() < 1e-8);
    }

    #[test]
    fn dangling_endpoint_has_unit_residual() {
        let s2 = ManifoldModel::sphere(2).unwrap();
        let mut g = WeightedMultigraph::new();
        let a = g.add_vertex("a");
        let b = g.add_vertex("b");
        g.add_edge("e", a, b, 1);
        let init = NetInit {
            positions: vec![vector(&[1.0, 0.0, 0.0]), vector(&[0.0, 1.0, 0.0])],
            edges: vec![EdgeInit::Arc { guess: Vector::zeros() }],
        };
        let net = realize(&s2, &g, &init).unwrap();
        assert!((s2.norm(&net.vertices[a].position, &net.residual(a).unwrap()) - 1.0).abs() < 1e-12);
        assert!(g.validate().is_err());
        assert!(net.residual(7).is_err());
    }

    #[test]
    fn incomplete_net_is_reported() {
        let s2 = ManifoldModel::sphere(2).unwrap();
        let mut g = WeightedMultigraph::new();
        let a = g.add_vertex("a");
        g.add_edge("l", a, a, 1);
        let vertices = vec![NetVertex {
            position: vector(&[1.0, 0.0, 0.0]),
            graph_vertex: Some(0),
        }];
        assert!(matches!(
            GeodesicNet::from_parts(s2, g, vertices, Vec::new()),
            Err(GeonetError::IncompleteNet(_))
        ));
    }
}
