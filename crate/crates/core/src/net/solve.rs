use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{balance, plan_arcs, solve_arc, ArcPlan, GeodesicNet, NetArc, NetInit, NetVertex, WeightedMultigraph};
use crate::error::{GeonetError, Result};
use crate::manifold::{BvpOptions, GeodesicSegment, ManifoldModel, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_iterations: usize,
    /// Vertex displacement used for the finite-difference Jacobian.
    pub fd_step: f64,
    /// Samples per arc.
    pub samples: usize,
    /// Accept only steps that do not increase total length (for nets that minimize length
    /// in the vertex variables). Off by default: stationary nets are often saddles.
    pub length_monotone: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iterations: 60,
            fd_step: 1e-6,
            samples: 64,
            length_monotone: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub net: GeodesicNet,
    pub iterations: usize,
    /// Max vertex residual after each accepted iterate, starting with the initial one.
    pub residual_history: Vec<f64>,
    pub length_history: Vec<f64>,
}

struct State {
    vertices: Vec<NetVertex>,
    plan: Vec<ArcPlan>,
    segments: Vec<GeodesicSegment>,
}

impl State {
    fn arcs(&self) -> Vec<NetArc> {
        self.plan
            .iter()
            .zip(&self.segments)
            .map(|(&(graph_edge, from, to, multiplicity, _), s)| NetArc {
                graph_edge,
                from,
                to,
                multiplicity,
                segment: s.clone(),
            })
            .collect()
    }

    fn length(&self) -> f64 {
        self.plan
            .iter()
            .zip(&self.segments)
            .map(|(a, s)| f64::from(a.3) * s.length)
            .sum()
    }

    /// Warm-start guesses from the current segments.
    fn warm_plan(&self) -> Vec<ArcPlan> {
        self.plan
            .iter()
            .zip(&self.segments)
            .map(|(&(e, f, t, m, _), s)| (e, f, t, m, s.velocity * s.length))
            .collect()
    }
}

fn merit(model: &ManifoldModel, vertices: &[NetVertex], r: &[Vector]) -> f64 {
    vertices
        .iter()
        .zip(r)
        .map(|(v, r)| model.inner(&v.position, r, r))
        .sum()
}

fn max_norm(model: &ManifoldModel, vertices: &[NetVertex], r: &[Vector]) -> f64 {
    vertices
        .iter()
        .zip(r)
        .map(|(v, r)| model.norm(&v.position, r))
        .fold(0.0, f64::max)
}

fn resolve_all(model: &ManifoldModel, vertices: &[NetVertex], plan: &[ArcPlan], opts: &BvpOptions) -> Result<Vec<GeodesicSegment>> {
    plan.par_iter().map(|a| solve_arc(model, vertices, a, opts)).collect()
}

pub fn solve_stationary(model: &ManifoldModel, graph: &WeightedMultigraph, init: &NetInit) -> Result<GeodesicNet> {
    solve_stationary_with(model, graph, init, &SolveOptions::default()).map(|r| r.net)
}

/// Damped Newton iteration on the vertex balance equations over vertex positions, with
/// every arc re-solved by shooting (warm-started from the previous iterate) at each trial.
pub fn solve_stationary_with(
    model: &ManifoldModel,
    graph: &WeightedMultigraph,
    init: &NetInit,
    opts: &SolveOptions,
) -> Result<SolveReport> {
    graph.validate()?;
    let bvp = BvpOptions {
        samples: opts.samples,
        tol: Some(model.tol.bvp_tol.min(1e-12)),
        ..BvpOptions::default()
    };
    let (vertices, plan) = plan_arcs(model, graph, init)?;
    let segments = resolve_all(model, &vertices, &plan, &bvp)?;
    let mut state = State {
        vertices,
        plan,
        segments,
    };
    let nv = state.vertices.len();
    let n = model.dim();
    let mut r = balance(&state.arcs(), nv);
    let mut residual_history = vec![max_norm(model, &state.vertices, &r)];
    let mut length_history = vec![state.length()];
    let mut iterations = 0;

    // polish below the tolerance while Newton still makes progress
    let target = 1e-2 * model.tol.stationarity_tol;
    let tol = model.tol.stationarity_tol;
    while *residual_history.last().unwrap_or(&0.0) >= target {
        let current = *residual_history.last().unwrap_or(&f64::NAN);
        if iterations >= opts.max_iterations {
            if current < tol {
                break;
            }
            return Err(GeonetError::Solver {
                iterations,
                residual: *residual_history.last().unwrap_or(&f64::NAN),
                history: residual_history,
            });
        }
        iterations += 1;
        let bases: Vec<Vec<Vector>> = state.vertices.iter().map(|v| model.tangent_basis(&v.position)).collect();
        let coords = |rs: &[Vector], which: usize| -> Vec<f64> {
            model.coordinates(&state.vertices[which].position, &bases[which], &rs[which])
        };
        let mut rvec = DVector::zeros(nv * n);
        for v in 0..nv {
            for (a, c) in coords(&r, v).into_iter().enumerate() {
                rvec[v * n + a] = c;
            }
        }

        let warm = state.warm_plan();
        let columns: Vec<(usize, DVector<f64>)> = (0..nv * n)
            .into_par_iter()
            .map(|col| -> Result<(usize, DVector<f64>)> {
                let (vi, a) = (col / n, col % n);
                let mut verts = state.vertices.clone();
                verts[vi].position = model.project(&(verts[vi].position + bases[vi][a] * opts.fd_step));
                let mut arcs = state.arcs();
                for (k, arc) in warm.iter().enumerate() {
                    if arc.1 == vi || arc.2 == vi {
                        arcs[k].segment = solve_arc(model, &verts, arc, &bvp)?;
                    }
                }
                let rp = balance(&arcs, nv);
                let mut column = DVector::zeros(nv * n);
                for v in 0..nv {
                    if rp[v] != r[v] {
                        for (b, c) in coords(&rp, v).into_iter().enumerate() {
                            column[v * n + b] = (c - rvec[v * n + b]) / opts.fd_step;
                        }
                    }
                }
                Ok((col, column))
            })
            .collect::<Result<_>>()?;
        let mut jac = DMatrix::zeros(nv * n, nv * n);
        for (col, c) in columns {
            jac.set_column(col, &c);
        }
        let svd = jac.svd(true, true);
        let cutoff = 1e-7 * svd.singular_values.max();
        let delta = svd
            .solve(&(-&rvec), cutoff)
            .map_err(|e| GeonetError::Numeric(e.to_string()))?;

        let m0 = merit(model, &state.vertices, &r);
        let l0 = state.length();
        let mut lam = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let mut verts = state.vertices.clone();
            for v in 0..nv {
                let step = (0..n).fold(Vector::zeros(), |acc, a| acc + bases[v][a] * delta[v * n + a]);
                verts[v].position = model.project(&(verts[v].position + step * lam));
            }
            if let Ok(segs) = resolve_all(model, &verts, &warm, &bvp) {
                let trial = State {
                    vertices: verts,
                    plan: state.plan.clone(),
                    segments: segs,
                };
                let rt = balance(&trial.arcs(), nv);
                let mt = merit(model, &trial.vertices, &rt);
                let length_ok = !opts.length_monotone || trial.length() <= l0 + 1e-13;
                if mt < (1.0 - 1e-4 * lam) * m0 && length_ok {
                    accepted = Some((trial, rt));
                    break;
                }
            }
            lam *= 0.5;
        }
        match accepted {
            Some((trial, rt)) => {
                state = trial;
                r = rt;
                residual_history.push(max_norm(model, &state.vertices, &r));
                length_history.push(state.length());
            }
            None if current < tol => break,
            None => {
                return Err(GeonetError::Solver {
                    iterations,
                    residual: *residual_history.last().unwrap_or(&f64::NAN),
                    history: residual_history,
                })
            }
        }
    }

    let arcs = state.arcs();
    let net = GeodesicNet::from_parts(model.clone(), graph.clone(), state.vertices, arcs)?;
    Ok(SolveReport {
        net,
        iterations,
        residual_history,
        length_history,
    })
}
