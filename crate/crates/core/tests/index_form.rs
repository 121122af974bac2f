mod common;

use std::f64::consts::PI;

use common::*;
use geonet_core::index::{assemble_index_form, index_additivity_check, morse_index, union_net};
use geonet_core::manifold::vector;
use geonet_core::net::{realize, EdgeInit, GeodesicNet, NetInit};
use geonet_core::varifold::segment_length;
use geonet_core::{ManifoldModel, Vector, WeightedMultigraph};

#[test]
fn equator_index_is_mesh_independent() {
    let net = equator();
    for n in [128, 256, 512] {
        let r = morse_index(&net, n, 1e-6).unwrap();
        assert_eq!((r.index, r.nullity), (1, 2), "{n} segments");
        assert!((r.eigenvalues[0] + 1.0).abs() < 1e-3);
    }
}

#[test]
fn great_circles_in_higher_spheres() {
    for (dim, expected) in [(3, 2), (4, 3)] {
        let m = ManifoldModel::sphere(dim).unwrap();
        let r = morse_index(&great_circle(&m, 1), 256, 1e-6).unwrap();
        assert_eq!(r.index, expected, "S^{dim}");
        // rotations tilting the circle out of its plane
        assert_eq!(r.nullity, 2 * (dim - 1));
        for v in r.lowest(expected) {
            assert!((v + 1.0).abs() < 0.05);
        }
    }
}

fn torus_circle(m: &ManifoldModel, height: f64) -> GeodesicNet {
    let mut g = WeightedMultigraph::new();
    let v = g.add_vertex("p");
    g.add_edge("c", v, v, 1);
    let init = NetInit {
        positions: vec![vector(&[0.0, height])],
        edges: vec![EdgeInit::Loop {
            aux: None,
            guess: vector(&[1.0, 0.0]),
        }],
    };
    realize(m, &g, &init).unwrap()
}

#[test]
fn disjoint_torus_circles_add() {
    let m = ManifoldModel::torus(&[1.0, 1.0]).unwrap();
    let nets = [torus_circle(&m, 0.2), torus_circle(&m, 0.6)];
    let report = index_additivity_check(&nets, 64, 1e-6).unwrap();
    assert!(report.additive);
    assert_eq!(report.components, vec![0, 0]);
    // one translation per circle
    assert_eq!(report.union.nullity, 2);
}

#[test]
fn overlapping_nets_are_not_merged() {
    let net = equator();
    assert!(union_net(&[net.clone(), net]).is_err());
}

#[test]
fn prolate_waist_has_index_one() {
    let m = ManifoldModel::ellipsoid(1.0, 1.0, 1.2).unwrap();
    let r = morse_index(&great_circle(&m, 1), 256, 1e-6).unwrap();
    assert_eq!((r.index, r.nullity), (1, 0));
    // constant normal field: −K at the waist, K = 1/c²
    assert!((r.eigenvalues[0] + 1.0 / 1.44).abs() < 2e-3, "{}", r.eigenvalues[0]);
}

fn perturbed_length(m: &ManifoldModel, nodes: &[(Vector, Vector)], s: f64) -> f64 {
    let pts: Vec<Vector> = nodes.iter().map(|(x, v)| m.project(&(x + v * s))).collect();
    (0..pts.len()).map(|i| segment_length(m, &pts[i], &pts[(i + 1) % pts.len()])).sum()
}

fn second_difference_check(m: &ManifoldModel, field: impl Fn(&Vector) -> Vector) {
    let net = great_circle(m, 1);
    let form = assemble_index_form(&net, 512).unwrap();
    let coeffs = form.coefficients(&form.restrict(field)).unwrap();
    let q = form.quadratic(&coeffs, &coeffs);
    let smooth = form.field(&coeffs);
    let nodes = form.node_samples(&smooth);
    let s = 1e-3;
    let fd = (perturbed_length(m, &nodes, s) - 2.0 * perturbed_length(m, &nodes, 0.0)
        + perturbed_length(m, &nodes, -s))
        / (s * s);
    assert!((fd - q).abs() < 1e-3 * q.abs(), "fd {fd} q {q}");
}

#[test]
fn quadratic_form_matches_second_differences_of_length() {
    let m = s2();
    // normal component cos 2θ: Q = (4 − 1)π
    second_difference_check(&m, |x| vector(&[0.0, 0.0, x[0] * x[0] - x[1] * x[1]]));
    second_difference_check(&m, |x| vector(&[0.0, 0.0, 0.3 + x[0] * x[1] + 0.5 * x[1]]));
    let s3 = ManifoldModel::sphere(3).unwrap();
    second_difference_check(&s3, |x| vector(&[0.0, 0.0, x[0] * x[0], 0.2 + x[1] * x[1] * x[0]]));
}

#[test]
fn cos_two_theta_value() {
    let net = equator();
    let form = assemble_index_form(&net, 512).unwrap();
    let c = form
        .coefficients(&form.restrict(|x| vector(&[0.0, 0.0, x[0] * x[0] - x[1] * x[1]])))
        .unwrap();
    assert!((form.quadratic(&c, &c) - 3.0 * PI).abs() < 1e-3 * 3.0 * PI);
    assert!((form.gram_inner(&c, &c) - PI).abs() < 1e-3 * PI);
}

#[test]
fn theta_net_index_is_stable_under_refinement() {
    let m = s2();
    let (g, init) = theta_graph();
    let net = geonet_core::net::solve_stationary(&m, &g, &init).unwrap();
    let a = morse_index(&net, 64, 1e-6).unwrap();
    let b = morse_index(&net, 128, 1e-6).unwrap();
    assert_eq!(a.index, b.index);
    assert_eq!(a.nullity, b.nullity);
}
