mod common;

use std::f64::consts::PI;

use common::*;
use geonet_core::index::{assemble_index_form, IndexForm, VariationField};
use geonet_core::instability::{
    certify_k_unstable, disjointness_audit, distance_modulus, family_from_fields, family_from_fields_unchecked,
    fields_from_family, find_max, lowest_eigenfields, mass_profile, profile_hessian, Certification, CertifyOptions,
    DiffeoFamily, MassProfile, MaxOptions, Profile, Violation,
};
use geonet_core::manifold::vector;
use geonet_core::net::{realize, EdgeInit, NetInit};
use geonet_core::varifold::{f_distance, AmbientField, DiscreteVarifold, TestGrid};
use geonet_core::{GeonetError, ManifoldModel, WeightedMultigraph};
use nalgebra::{DMatrix, DVector};

fn height_family(m: &ManifoldModel, scale: f64) -> DiffeoFamily {
    DiffeoFamily::new(m, vec![AmbientField::translation(m, vector(&[0.0, 0.0, 1.0]))], scale).unwrap()
}

fn v1(x: f64) -> DVector<f64> {
    DVector::from_element(1, x)
}

fn quick_certify() -> CertifyOptions {
    CertifyOptions {
        budget: 12,
        grid_spacing: 0.5,
        samples_per_arc: 64,
        ..CertifyOptions::default()
    }
}

#[test]
fn killing_family_has_flat_profile_and_fails() {
    let m = s2();
    let net = equator();
    let s = DiscreteVarifold::from_net(&net, 128).unwrap();
    let fam = DiffeoFamily::new(
        &m,
        vec![AmbientField::rotation(&m, 0, 2, 1.0), AmbientField::rotation(&m, 1, 2, 1.0)],
        0.8,
    )
    .unwrap();
    let base = s.mass();
    for v in [[0.3, -0.2], [0.9, 0.1], [-0.5, 0.7], [0.0, -1.0]] {
        let a = mass_profile(&s, &fam, &DVector::from_row_slice(&v)).unwrap();
        assert!((a - base).abs() < 1e-8);
    }
    let cert = certify_k_unstable(&net, &fam, 0.05, &quick_certify()).unwrap();
    match cert {
        Certification::Failed(f) => assert!(matches!(f.violation, Violation::NotConcave { .. })),
        Certification::Certified(_) => panic!("isometries cannot certify instability"),
    }
}

#[test]
fn profile_value_at_origin_is_the_mass() {
    let m = s2();
    let s = DiscreteVarifold::from_net(&equator(), 128).unwrap();
    assert_eq!(mass_profile(&s, &height_family(&m, 0.4), &v1(0.0)).unwrap(), s.mass());
}

#[test]
fn height_profile_matches_hyperbolic_secant() {
    let m = s2();
    let s = DiscreteVarifold::from_net(&equator(), 256).unwrap();
    let fam = height_family(&m, 0.5);
    for v in [-0.8, -0.3, 0.2, 0.6, 1.0] {
        let a = mass_profile(&s, &fam, &v1(v)).unwrap();
        assert!((a - 2.0 * PI / (0.5 * v).cosh()).abs() < 1e-6);
        assert!(a < s.mass());
    }
}

#[test]
fn doubling_the_scale_quadruples_the_hessian() {
    let m = s2();
    let s = DiscreteVarifold::from_net(&equator(), 128).unwrap();
    let h = |scale: f64| {
        let fam = height_family(&m, scale);
        profile_hessian(&MassProfile { varifold: &s, family: &fam }, &v1(0.0), 1e-2).unwrap()[(0, 0)]
    };
    let (a, b) = (h(0.1), h(0.2));
    assert!((b / a - 4.0).abs() < 0.08, "{a} {b}");
}

#[test]
fn hessian_matches_second_variation_of_the_family_field() {
    let m = s2();
    let net = equator();
    let s = DiscreteVarifold::from_net(&net, 128).unwrap();
    let fam = height_family(&m, 0.3);
    let hess = profile_hessian(&MassProfile { varifold: &s, family: &fam }, &v1(0.0), 1e-2).unwrap()[(0, 0)];
    let form = assemble_index_form(&net, 256).unwrap();
    let y = fields_from_family(&form, &fam).unwrap();
    let c = form.coefficients(&y.fields[0]).unwrap();
    let q = form.quadratic(&c, &c);
    assert!(hess < 0.0);
    assert!((hess - q).abs() < 0.1 * q.abs(), "{hess} vs {q}");
}

#[test]
fn inverse_parameter_undoes_the_map() {
    let m = s2();
    let net = equator();
    let form = assemble_index_form(&net, 128).unwrap();
    let fields = lowest_eigenfields(&form, 1).unwrap();
    let rbf = family_from_fields(&form, &fields, 0.5).unwrap();
    let mixed = DiffeoFamily::new(
        &m,
        vec![
            AmbientField::translation(&m, vector(&[0.2, 0.0, 1.0])),
            AmbientField::rotation(&m, 0, 1, 0.7),
        ],
        0.6,
    )
    .unwrap();
    let x = vector(&[0.6, 0.0, 0.8]);
    for v in [0.9, -0.4, 0.25] {
        let p = rbf.map_point(&v1(v), &x).unwrap();
        assert!((rbf.map_point(&v1(-v), &p).unwrap() - x).norm() < 1e-7);
    }
    let w = DVector::from_row_slice(&[0.5, -0.6]);
    let p = mixed.map_point(&w, &x).unwrap();
    assert!((mixed.map_point(&(-&w), &p).unwrap() - x).norm() < 1e-7);
}

#[test]
fn flat_torus_geodesic_never_certifies() {
    let m = ManifoldModel::torus(&[1.0, 1.0]).unwrap();
    let mut g = WeightedMultigraph::new();
    let p = g.add_vertex("p");
    g.add_edge("c", p, p, 1);
    let net = realize(
        &m,
        &g,
        &NetInit {
            positions: vec![vector(&[0.0, 0.5])],
            edges: vec![EdgeInit::Loop {
                aux: None,
                guess: vector(&[1.0, 0.0]),
            }],
        },
    )
    .unwrap();
    let wave: Vec<_> = (0..16)
        .map(|i| {
            let x = i as f64 / 16.0;
            (vector(&[x, 0.5]), vector(&[0.0, (2.0 * PI * x).sin()]))
        })
        .collect();
    let families = [
        DiffeoFamily::new(&m, vec![AmbientField::translation(&m, vector(&[0.0, 1.0]))], 0.3).unwrap(),
        DiffeoFamily::new(&m, vec![AmbientField::interpolate(&m, &wave, 0.1).unwrap()], 0.05).unwrap(),
    ];
    for fam in &families {
        let cert = certify_k_unstable(&net, fam, 0.05, &quick_certify()).unwrap();
        assert!(!cert.is_certified());
    }
}

#[test]
fn equator_is_not_two_unstable() {
    let net = equator();
    let form = assemble_index_form(&net, 128).unwrap();
    let fields = lowest_eigenfields(&form, 2).unwrap();
    assert!(matches!(family_from_fields(&form, &fields, 0.4), Err(GeonetError::Rejected(_))));
    let fam = family_from_fields_unchecked(&form, &fields, 0.4).unwrap();
    let cert = certify_k_unstable(&net, &fam, 0.05, &quick_certify()).unwrap();
    assert!(!cert.is_certified());
}

/// Largest principal angle between the spans of two field lists, in the Gram inner product.
fn principal_angle(form: &IndexForm, a: &[VariationField], b: &[VariationField]) -> f64 {
    let orthonormal = |fields: &[VariationField]| -> Vec<DVector<f64>> {
        let mut out: Vec<DVector<f64>> = Vec::new();
        for f in fields {
            let mut c = form.coefficients(f).unwrap();
            for e in &out {
                c -= e * form.gram_inner(e, &c);
            }
            let n = form.gram_inner(&c, &c).sqrt();
            out.push(c / n);
        }
        out
    };
    let (x, y) = (orthonormal(a), orthonormal(b));
    let cross = DMatrix::from_fn(x.len(), y.len(), |i, j| form.gram_inner(&x[i], &y[j]));
    let smallest = cross.singular_values().min().min(1.0);
    smallest.acos()
}

#[test]
fn fields_survive_the_round_trip_through_a_family() {
    for (dim, k) in [(2, 1), (3, 2)] {
        let m = ManifoldModel::sphere(dim).unwrap();
        let net = great_circle(&m, 1);
        let form = assemble_index_form(&net, 128).unwrap();
        let fields = lowest_eigenfields(&form, k).unwrap();
        let fam = family_from_fields(&form, &fields, 0.4).unwrap();
        let back = fields_from_family(&form, &fam).unwrap();
        assert!(back.negative_definite);
        let angle = principal_angle(&form, &fields, &back.fields);
        assert!(angle < 1e-3, "S^{dim}: angle {angle}");
    }
}

#[test]
fn zero_field_is_rejected() {
    let form = assemble_index_form(&equator(), 64).unwrap();
    let zero = form.field(&DVector::zeros(form.dof_count()));
    assert!(matches!(family_from_fields(&form, &[zero], 0.4), Err(GeonetError::Rejected(_))));
}

#[test]
fn maximum_beats_a_fine_grid() {
    let m = s2();
    let s = DiscreteVarifold::from_net(&equator(), 128).unwrap();
    let fam = height_family(&m, 0.5);
    let pushed = fam.push(&s, &v1(0.3)).unwrap();
    let profile = MassProfile {
        varifold: &pushed,
        family: &fam,
    };
    let best = find_max(&profile, &MaxOptions::default()).unwrap();
    // undoing the push
    assert!((best.point[0] + 0.3).abs() < 1e-4);
    let mut u = -0.98;
    while u <= 0.98 {
        assert!(best.value >= profile.value(&v1(u)).unwrap() - 1e-12);
        u += 0.02;
    }
    let center = find_max(&MassProfile { varifold: &s, family: &fam }, &MaxOptions::default()).unwrap();
    assert!(center.point[0].abs() < 1e-6);
}

#[test]
fn certified_height_family_separates_and_drops_mass() {
    let m = s2();
    let net = equator();
    let fam = height_family(&m, 0.5);
    let cert = certify_k_unstable(&net, &fam, 0.05, &quick_certify()).unwrap();
    let cert = cert.certificate().expect("height family certifies the equator").clone();
    assert!(cert.c0 > 0.0 && cert.c0 < 1.0);
    assert!(cert.center_max()[0].abs() < 1e-6);

    let grid = TestGrid::default();
    let s = DiscreteVarifold::from_net(&net, 128).unwrap();
    let eps_small = 0.01;
    let nearby: Vec<DiscreteVarifold> = [0.0, 0.002, -0.003]
        .iter()
        .map(|v| fam.push(&s, &v1(*v)).unwrap())
        .collect();
    for v in &nearby {
        assert!(f_distance(&m, v, &s, &grid).unwrap() <= 2.0 * eps_small);
    }
    let audit = disjointness_audit(&s, &nearby, &cert, eps_small, 2, &grid).unwrap();
    assert!(audit.holds, "{audit:?}");

    let params: Vec<DVector<f64>> = (0..=10).map(|i| v1(-1.0 + 0.2 * i as f64)).collect();
    let modulus = distance_modulus(&s, &fam, &params, &[0.05, 0.2, 0.8], &grid).unwrap();
    let steps: Vec<f64> = modulus.iter().map(|(_, d)| d.expect("level reached")).collect();
    assert!(steps[0] > 0.0);
    assert!(steps.windows(2).all(|w| w[0] <= w[1]));
}
