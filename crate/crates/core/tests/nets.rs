mod common;

use std::f64::consts::PI;

use common::*;
use geonet_core::manifold::vector;
use geonet_core::net::{realize, solve_stationary, solve_stationary_with, GeodesicNet, SolveOptions};
use geonet_core::varifold::{AmbientField, DiffeoFlow, Matrix6, VectorField};
use geonet_core::GeonetError;

#[test]
fn theta_net_recovers_from_perturbation() {
    let m = s2();
    let (g, init) = theta_graph();
    for seed in 0..3 {
        let start = perturb(&m, &init, 1e-2, seed);
        let net = solve_stationary(&m, &g, &start).unwrap();
        assert!((net.length() - 3.0 * PI).abs() < 1e-6, "seed {seed}: {}", net.length());
        assert!(net.max_residual() < 1e-7);
        // arcs meet at 120 degrees at the poles
        for pole in [0, 1] {
            assert!(net.residual(pole).unwrap().norm() < 1e-7);
        }
    }
}

#[test]
fn figure_eight_recovers_from_perturbation() {
    let m = s2();
    let (g, init) = figure_eight_graph();
    let start = perturb(&m, &init, 1e-2, 11);
    let net = solve_stationary(&m, &g, &start).unwrap();
    assert!(net.max_residual() < 1e-7);
    assert!((net.length() - 4.0 * PI).abs() < 1e-6);
}

#[test]
fn eyeglass_stalls_with_residual_history() {
    // documented limitation: the loops slide into great circles and the bridge tangent
    // cannot be balanced, so the solver reports non-convergence with its history
    let m = s2();
    let (g, init) = eyeglass_graph(0.6);
    let start = perturb(&m, &init, 1e-2, 3);
    let opts = SolveOptions {
        max_iterations: 25,
        ..SolveOptions::default()
    };
    match solve_stationary_with(&m, &g, &start, &opts) {
        Err(GeonetError::Solver { history, residual, .. }) => {
            assert!(!history.is_empty());
            assert!(residual > 1e-7);
        }
        Ok(report) => assert!(report.net.max_residual() < 1e-7),
        Err(other) => panic!("unexpected error {other}"),
    }
}

#[test]
fn solver_history_is_recorded() {
    let m = s2();
    let (g, init) = theta_graph();
    let report = solve_stationary_with(&m, &g, &perturb(&m, &init, 1e-2, 5), &SolveOptions::default()).unwrap();
    assert_eq!(report.residual_history.len(), report.length_history.len());
    assert!(report.residual_history[0] > 1e-3);
    assert!(*report.residual_history.last().unwrap() < 1e-7);
}

#[test]
fn monotone_mode_never_increases_length() {
    // theta nets are length saddles, so the monotone line search may refuse to converge
    let m = s2();
    let (g, init) = theta_graph();
    let opts = SolveOptions {
        length_monotone: true,
        max_iterations: 40,
        ..SolveOptions::default()
    };
    if let Ok(report) = solve_stationary_with(&m, &g, &perturb(&m, &init, 1e-2, 9), &opts) {
        for w in report.length_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }
}

fn rotation_matrix(axis: [f64; 3], angle: f64) -> Matrix6 {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let (x, y, z) = (axis[0] / n, axis[1] / n, axis[2] / n);
    let (c, s) = (angle.cos(), angle.sin());
    let mut r = Matrix6::identity();
    let rows = [
        [c + x * x * (1.0 - c), x * y * (1.0 - c) - z * s, x * z * (1.0 - c) + y * s],
        [y * x * (1.0 - c) + z * s, c + y * y * (1.0 - c), y * z * (1.0 - c) - x * s],
        [z * x * (1.0 - c) - y * s, z * y * (1.0 - c) + x * s, c + z * z * (1.0 - c)],
    ];
    for i in 0..3 {
        for j in 0..3 {
            r[(i, j)] = rows[i][j];
        }
    }
    r
}

#[test]
fn residuals_rotate_with_the_net() {
    let m = s2();
    let (g, init) = theta_graph();
    let net = realize(&m, &g, &perturb(&m, &init, 5e-2, 21)).unwrap();
    for (axis, angle) in [([1.0, 2.0, 0.5], 0.7), ([0.0, 0.0, 1.0], 2.1), ([-1.0, 0.3, 0.2], -1.3)] {
        let r = rotation_matrix(axis, angle);
        let moved = net.transformed(&r).unwrap();
        for v in 0..net.vertices.len() {
            let a = net.residual(v).unwrap();
            let b = moved.residual(v).unwrap();
            assert!((a.norm() - b.norm()).abs() < 1e-10);
            assert!((r * a - b).norm() < 1e-8);
        }
        assert!((net.length() - moved.length()).abs() < 1e-10);
    }
}

fn flowed(net: &GeodesicNet, field: &AmbientField, t: f64) -> GeodesicNet {
    let flow = DiffeoFlow {
        model: &net.model,
        field,
        time: t,
        steps: 16,
    };
    let mut init = net.init();
    for p in &mut init.positions {
        *p = flow.apply_point(p);
    }
    realize(&net.model, &net.graph, &init).unwrap()
}

#[test]
fn first_variation_matches_vertex_residuals() {
    let m = s2();
    let (g, init) = theta_graph();
    let net = realize(&m, &g, &perturb(&m, &init, 5e-2, 2)).unwrap();
    let mut mixed = Matrix6::zeros();
    mixed[(0, 1)] = 0.4;
    mixed[(2, 0)] = -0.3;
    mixed[(1, 2)] = 0.2;
    let fields = [
        AmbientField::translation(&m, vector(&[0.3, -0.2, 0.9])),
        AmbientField::linear(&m, mixed, vector(&[0.1, 0.0, 0.0])),
    ];
    for field in &fields {
        let predicted: f64 = -(0..net.vertices.len())
            .map(|v| net.residual(v).unwrap().dot(&field.eval(&net.vertices[v].position)))
            .sum::<f64>();
        let t = 1e-4;
        let fd = (flowed(&net, field, t).length() - flowed(&net, field, -t).length()) / (2.0 * t);
        assert!((fd - predicted).abs() < 1e-4 * predicted.abs().max(1e-2), "fd {fd} predicted {predicted}");
    }
}

#[test]
fn ellipsoid_waist_loop_stays_planar() {
    let m = geonet_core::ManifoldModel::ellipsoid(1.0, 1.0, 1.2).unwrap();
    let (g, init) = {
        let mut g = geonet_core::WeightedMultigraph::new();
        let p = g.add_vertex("p");
        g.add_edge("c", p, p, 1);
        let (c, s) = ((2.0 * PI / 3.0).cos(), (2.0 * PI / 3.0).sin());
        let init = geonet_core::net::NetInit {
            positions: vec![vector(&[1.0, 0.0, 0.0])],
            edges: vec![geonet_core::net::EdgeInit::Loop {
                aux: Some([vector(&[c, s, 0.0]), vector(&[c, -s, 0.0])]),
                guess: geonet_core::Vector::zeros(),
            }],
        };
        (g, init)
    };
    let net = solve_stationary(&m, &g, &perturb(&m, &init, 1e-2, 4)).unwrap();
    assert!(net.max_residual() < 1e-7);
    assert!((net.length() - 2.0 * PI).abs() < 1e-6);
    for a in &net.arcs {
        for p in &a.segment.points {
            assert!(p[2].abs() < 1e-5);
        }
    }
}
