use std::f64::consts::PI;
use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use geonet_core::deform::{skeletal_avoidance, AvoidanceOptions, SimplicialComplex};
use geonet_core::index::morse_index;
use geonet_core::manifold::{geodesic_shoot_with, vector, Integrator, ManifoldModel, PointTangent};
use geonet_core::minmax::{sup_mass, LatitudeFourier, Sweepout};
use geonet_core::net::{realize, EdgeInit, NetInit, WeightedMultigraph};
use geonet_core::varifold::{f_distance, DiscreteVarifold, TestGrid};
use geonet_core::Vector;
use nalgebra::DVector;

fn circle(n: usize, tilt: f64) -> Vec<Vector> {
    let mut p: Vec<Vector> = (0..n)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / n as f64;
            vector(&[t.cos(), t.sin() * tilt.cos(), t.sin() * tilt.sin()])
        })
        .collect();
    p.push(p[0]);
    p
}

fn geodesics(c: &mut Criterion) {
    let m = ManifoldModel::ellipsoid(1.0, 1.3, 0.8).unwrap();
    let start = PointTangent::new(&m, vector(&[1.0, 0.0, 0.0]), vector(&[0.0, 0.6, 0.8])).unwrap();
    c.bench_function("shoot dopri5 ellipsoid", |b| {
        b.iter(|| geodesic_shoot_with(&m, black_box(&start), 6.0, 128, Integrator::Dopri5).unwrap())
    });
    c.bench_function("shoot rk4 ellipsoid", |b| {
        b.iter(|| geodesic_shoot_with(&m, black_box(&start), 6.0, 128, Integrator::Rk4).unwrap())
    });
}

fn index(c: &mut Criterion) {
    let m = ManifoldModel::sphere(2).unwrap();
    let mut g = WeightedMultigraph::new();
    let v = g.add_vertex("p");
    g.add_edge("c", v, v, 1);
    let init = NetInit {
        positions: vec![vector(&[1.0])],
        edges: vec![EdgeInit::Loop {
            aux: None,
            guess: vector(&[0.0, 2.0 * PI]),
        }],
    };
    let net = realize(&m, &g, &init).unwrap();
    let mut group = c.benchmark_group("morse index equator");
    for segs in [128, 256] {
        group.bench_function(format!("{segs} segments"), |b| b.iter(|| morse_index(&net, segs, 1e-6).unwrap()));
    }
    group.finish();
}

fn transport(c: &mut Criterion) {
    let m = ManifoldModel::sphere(2).unwrap();
    let a = DiscreteVarifold::from_polyline(&m, &circle(256, 0.0), 1.0).unwrap();
    let b = DiscreteVarifold::from_polyline(&m, &circle(256, 0.1), 1.0).unwrap();
    let mut group = c.benchmark_group("f-distance");
    group.sample_size(10);
    for atoms in [64, 256] {
        group.bench_function(format!("{atoms} atoms"), |bn| {
            bn.iter(|| f_distance(&m, &a, &b, &TestGrid { max_atoms: atoms }).unwrap())
        });
    }
    group.finish();
}

fn avoidance(c: &mut Criterion) {
    let disk = SimplicialComplex::hex_disk(2).unwrap();
    let targets: Vec<DVector<f64>> = disk
        .coords
        .iter()
        .map(|x| DVector::from_vec(vec![0.2 * x[0] + 0.05, 0.25 * x[1] - 0.1, 0.1 * (x[0] - x[1])]))
        .collect();
    let mut group = c.benchmark_group("skeletal avoidance");
    group.sample_size(10);
    group.bench_function("hex disk 2", |b| {
        b.iter(|| skeletal_avoidance(&disk, &targets, 0.5, &AvoidanceOptions::default()).unwrap())
    });
    group.finish();
}

fn sweepouts(c: &mut Criterion) {
    let m = ManifoldModel::sphere(2).unwrap();
    let params = [0.02, -0.01, 0.0, 0.0, 0.01, 0.0, 0.0, 0.0];
    c.bench_function("sup mass latitude 65x64", |b| {
        b.iter(|| {
            let fam = LatitudeFourier::new(&m, black_box(&params), 64).unwrap();
            sup_mass(&Sweepout::interval(Arc::new(fam), 65).unwrap())
        })
    });
}

criterion_group!(benches, geodesics, index, transport, avoidance, sweepouts);
criterion_main!(benches);
