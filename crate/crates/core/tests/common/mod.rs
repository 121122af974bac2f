#![allow(dead_code)]

use std::f64::consts::PI;

use geonet_core::manifold::{vector, ManifoldModel, Vector};
use geonet_core::net::{realize, EdgeInit, GeodesicNet, NetInit, WeightedMultigraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn s2() -> ManifoldModel {
    ManifoldModel::sphere(2).unwrap()
}

/// Great circle through e0 in the (e0, e1) plane as a single closed arc.
pub fn great_circle(model: &ManifoldModel, multiplicity: u32) -> GeodesicNet {
    let mut g = WeightedMultigraph::new();
    let v = g.add_vertex("p");
    g.add_edge("c", v, v, multiplicity);
    let init = NetInit {
        positions: vec![vector(&[1.0])],
        edges: vec![EdgeInit::Loop {
            aux: None,
            guess: vector(&[0.0, 2.0 * PI]),
        }],
    };
    realize(model, &g, &init).unwrap()
}

pub fn equator() -> GeodesicNet {
    great_circle(&s2(), 1)
}

pub fn circle_point(t: f64) -> Vector {
    vector(&[t.cos(), t.sin(), 0.0])
}

/// Theta graph: poles joined through three equatorial degree-2 vertices.
pub fn theta_graph() -> (WeightedMultigraph, NetInit) {
    let mut g = WeightedMultigraph::new();
    let n = g.add_vertex("n");
    let s = g.add_vertex("s");
    let mut positions = vec![vector(&[0.0, 0.0, 1.0]), vector(&[0.0, 0.0, -1.0])];
    let mut edges = Vec::new();
    for i in 0..3 {
        let e = g.add_vertex(format!("e{i}"));
        positions.push(circle_point(2.0 * PI * i as f64 / 3.0));
        g.add_edge(format!("a{i}"), n, e, 1);
        g.add_edge(format!("b{i}"), e, s, 1);
        edges.push(EdgeInit::Arc { guess: Vector::zeros() });
        edges.push(EdgeInit::Arc { guess: Vector::zeros() });
    }
    (g, NetInit { positions, edges })
}

/// Two great-circle loops through (1,0,0), in the xy- and xz-planes.
pub fn figure_eight_graph() -> (WeightedMultigraph, NetInit) {
    let mut g = WeightedMultigraph::new();
    let p = g.add_vertex("p");
    g.add_edge("l1", p, p, 1);
    g.add_edge("l2", p, p, 1);
    let (c, s) = ((2.0 * PI / 3.0).cos(), (2.0 * PI / 3.0).sin());
    let init = NetInit {
        positions: vec![vector(&[1.0, 0.0, 0.0])],
        edges: vec![
            EdgeInit::Loop {
                aux: Some([vector(&[c, s, 0.0]), vector(&[c, -s, 0.0])]),
                guess: Vector::zeros(),
            },
            EdgeInit::Loop {
                aux: Some([vector(&[c, 0.0, s]), vector(&[c, 0.0, -s])]),
                guess: Vector::zeros(),
            },
        ],
    };
    (g, init)
}

/// Two vertices on the equator joined by an equatorial edge through (1,0,0), each carrying
/// a loop along the great circle orthogonal to the equator at that vertex.
pub fn eyeglass_graph(half_angle: f64) -> (WeightedMultigraph, NetInit) {
    let mut g = WeightedMultigraph::new();
    let p = g.add_vertex("p");
    let q = g.add_vertex("q");
    g.add_edge("bridge", p, q, 1);
    g.add_edge("lp", p, p, 1);
    g.add_edge("lq", q, q, 1);
    let xp = circle_point(half_angle);
    let xq = circle_point(-half_angle);
    let loop_aux = |x: Vector, outward: f64| -> [Vector; 2] {
        // circle through x orthogonal to the equator: spanned by x and the pole
        let pole = vector(&[0.0, 0.0, 1.0]);
        let at = |t: f64| x * t.cos() + pole * t.sin();
        let _ = outward;
        [at(2.0 * PI / 3.0), at(4.0 * PI / 3.0)]
    };
    let init = NetInit {
        positions: vec![xp, xq],
        edges: vec![
            EdgeInit::Arc {
                guess: vector(&[half_angle.sin(), -half_angle.cos(), 0.0]) * (2.0 * half_angle),
            },
            EdgeInit::Loop {
                aux: Some(loop_aux(xp, 1.0)),
                guess: Vector::zeros(),
            },
            EdgeInit::Loop {
                aux: Some(loop_aux(xq, -1.0)),
                guess: Vector::zeros(),
            },
        ],
    };
    (g, init)
}

/// Moves every vertex and auxiliary point by a random tangent displacement of size `size`.
pub fn perturb(model: &ManifoldModel, init: &NetInit, size: f64, seed: u64) -> NetInit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kick = |x: &Vector| -> Vector {
        let mut d = Vector::zeros();
        for i in 0..model.ambient_dim() {
            d[i] = rng.random_range(-1.0..1.0);
        }
        let d = model.tangent_project(x, &d);
        model.project(&(x + d * (size / d.norm())))
    };
    NetInit {
        positions: init.positions.iter().map(&mut kick).collect(),
        edges: init
            .edges
            .iter()
            .map(|e| match e {
                EdgeInit::Loop { aux: Some([a, b]), guess } => EdgeInit::Loop {
                    aux: Some([kick(a), kick(b)]),
                    guess: *guess,
                },
                other => other.clone(),
            })
            .collect(),
    }
}
