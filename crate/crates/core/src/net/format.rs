//! Line-oriented net files.
//!
//! ```text
//! [manifold] model=sphere dim=2
//! [vertex] id x y z
//! [edge] id v_from v_to multiplicity gx gy gz
//! [loop] id v multiplicity ax ay az bx by bz   # two auxiliary points
//! [loop] id v multiplicity gx gy gz            # one closed arc, initial velocity
//! ```
//!
//! Coordinates have as many components as the model's ambient dimension. Edge guesses are
//! initial velocities at `v_from` whose norm estimates the arc length; zeros select the
//! projected chord.

use std::collections::HashMap;
use std::fmt::Write;

use super::{EdgeInit, EdgeKind, GeodesicNet, NetInit, WeightedMultigraph};
use crate::error::{GeonetError, Result};
use crate::manifold::{vector, ManifoldModel, ManifoldConfig, ModelKind, Vector};

#[derive(Clone, Debug)]
pub struct ParsedNet {
    pub model: ManifoldModel,
    pub graph: WeightedMultigraph,
    pub init: NetInit,
}

fn parse_err(line: usize, message: impl Into<String>) -> GeonetError {
    GeonetError::Parse {
        line,
        message: message.into(),
    }
}

fn numbers(line: usize, toks: &[&str]) -> Result<Vec<f64>> {
    toks.iter()
        .map(|t| {
            t.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| parse_err(line, format!("expected a number, found `{t}`")))
        })
        .collect()
}

pub(crate) fn parse_manifold_line(line: usize, toks: &[&str]) -> Result<ManifoldConfig> {
    let mut cfg = ManifoldConfig::default();
    for tok in toks {
        let (key, value) = tok
            .split_once('=')
            .ok_or_else(|| parse_err(line, format!("expected key=value, found `{tok}`")))?;
        let list = || numbers(line, &value.split(',').collect::<Vec<_>>());
        let scalar = || -> Result<f64> {
            value
                .parse::<f64>()
                .map_err(|_| parse_err(line, format!("`{key}` expects a number")))
        };
        match key {
            "model" => cfg.model = value.trim_matches('"').to_string(),
            "dim" => {
                cfg.dim = Some(value.parse().map_err(|_| parse_err(line, "`dim` expects an integer"))?)
            }
            "axes" => cfg.axes = Some(list()?),
            "periods" => cfg.periods = Some(list()?),
            "coeffs" => cfg.coeffs = Some(list()?),
            "ode_tol" => cfg.ode_tol = Some(scalar()?),
            "bvp_tol" => cfg.bvp_tol = Some(scalar()?),
            "stationarity_tol" => cfg.stationarity_tol = Some(scalar()?),
            "eig_tol" => cfg.eig_tol = Some(scalar()?),
            other => return Err(parse_err(line, format!("unknown manifold key `{other}`"))),
        }
    }
    if cfg.model.is_empty() {
        return Err(parse_err(line, "manifold line needs model=..."));
    }
    Ok(cfg)
}

/// Parses a net file. A `[manifold]` line in the file takes precedence over `default_model`.
pub fn parse_net(text: &str, default_model: Option<&ManifoldModel>) -> Result<ParsedNet> {
    let mut model: Option<ManifoldModel> = None;
    let mut graph = WeightedMultigraph::new();
    let mut positions: Vec<Vector> = Vec::new();
    let mut edges: Vec<EdgeInit> = Vec::new();
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut edge_ids: HashMap<String, usize> = HashMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let toks: Vec<&str> = content.split_whitespace().collect();
        let tag = toks[0];
        if tag == "[manifold]" {
            if !positions.is_empty() || model.is_some() {
                return Err(parse_err(line, "[manifold] must come first and only once"));
            }
            model = Some(parse_manifold_line(line, &toks[1..])?.build().map_err(|e| parse_err(line, e.to_string()))?);
            continue;
        }
        let m = match (&model, default_model) {
            (Some(m), _) => m,
            (None, Some(m)) => {
                model = Some(m.clone());
                model.as_ref().expect("just set")
            }
            (None, None) => return Err(parse_err(line, "no manifold given (add a [manifold] line)")),
        };
        let k = m.ambient_dim();
        match tag {
            "[vertex]" => {
                if toks.len() != 2 + k {
                    return Err(parse_err(line, format!("[vertex] needs an id and {k} coordinates")));
                }
                if ids.contains_key(toks[1]) {
                    return Err(parse_err(line, format!("duplicate vertex id `{}`", toks[1])));
                }
                let x = vector(&numbers(line, &toks[2..])?);
                if m.constraint(&x).abs() > 1e-6 {
                    return Err(parse_err(line, format!("vertex `{}` is not on the manifold", toks[1])));
                }
                ids.insert(toks[1].to_string(), graph.add_vertex(toks[1]));
                positions.push(x);
            }
            "[edge]" | "[loop]" => {
                let is_loop = tag == "[loop]";
                let head = if is_loop { 4 } else { 5 };
                if toks.len() < head {
                    return Err(parse_err(line, format!("{tag} is missing fields")));
                }
                if edge_ids.contains_key(toks[1]) {
                    return Err(parse_err(line, format!("duplicate edge id `{}`", toks[1])));
                }
                let lookup = |name: &str| {
                    ids.get(name)
                        .copied()
                        .ok_or_else(|| parse_err(line, format!("unknown vertex `{name}`")))
                };
                let from = lookup(toks[2])?;
                let to = if is_loop { from } else { lookup(toks[3])? };
                let mult: u32 = toks[head - 1]
                    .parse()
                    .ok()
                    .filter(|m| *m >= 1)
                    .ok_or_else(|| parse_err(line, "multiplicity must be an integer ≥ 1"))?;
                let rest = numbers(line, &toks[head..])?;
                let init = if is_loop {
                    if rest.len() == k {
                        EdgeInit::Loop {
                            aux: None,
                            guess: vector(&rest),
                        }
                    } else if rest.len() == 2 * k {
                        EdgeInit::Loop {
                            aux: Some([vector(&rest[..k]), vector(&rest[k..])]),
                            guess: Vector::zeros(),
                        }
                    } else {
                        return Err(parse_err(line, format!("[loop] needs {k} or {} numbers", 2 * k)));
                    }
                } else {
                    if from == to {
                        return Err(parse_err(line, "[edge] ends coincide; use [loop]"));
                    }
                    match rest.len() {
                        0 => EdgeInit::Arc { guess: Vector::zeros() },
                        n if n == k => EdgeInit::Arc { guess: vector(&rest) },
                        _ => return Err(parse_err(line, format!("[edge] guess needs {k} numbers"))),
                    }
                };
                edge_ids.insert(toks[1].to_string(), graph.add_edge(toks[1], from, to, mult));
                edges.push(init);
            }
            other => return Err(parse_err(line, format!("unknown record `{other}`"))),
        }
    }
    let model = model.ok_or_else(|| parse_err(0, "empty net file"))?;
    if graph.edges.is_empty() {
        return Err(parse_err(0, "net has no edges"));
    }
    Ok(ParsedNet {
        model,
        graph,
        init: NetInit { positions, edges },
    })
}

/// The `[manifold]` record describing `model`, tolerances included.
pub fn manifold_line(model: &ManifoldModel) -> String {
    let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    let mut s = format!("[manifold] model={}", model.tag());
    match &model.kind {
        ModelKind::Sphere { dim } => write!(s, " dim={dim}"),
        ModelKind::Ellipsoid { axes } => write!(s, " axes={}", join(axes)),
        ModelKind::Torus { periods } => write!(s, " periods={}", join(periods)),
        ModelKind::ConformalSphere { coeffs } => write!(s, " coeffs={}", join(coeffs)),
    }
    .expect("write to string");
    let t = &model.tol;
    write!(
        s,
        " ode_tol={} bvp_tol={} stationarity_tol={} eig_tol={}",
        t.ode_tol, t.bvp_tol, t.stationarity_tol, t.eig_tol
    )
    .expect("write to string");
    s
}

fn coords(model: &ManifoldModel, v: &Vector) -> String {
    v.iter()
        .take(model.ambient_dim())
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Serializes a realized net; parsing the result reproduces the same net.
pub fn write_net(net: &GeodesicNet) -> String {
    let model = &net.model;
    let init = net.init();
    let mut out = manifold_line(model);
    out.push('\n');
    for (label, x) in net.graph.vertices.iter().zip(&init.positions) {
        out.push_str(&format!("[vertex] {label} {}\n", coords(model, x)));
    }
    for (e, ini) in net.graph.edges.iter().zip(&init.edges) {
        let from = &net.graph.vertices[e.from];
        match (e.kind, ini) {
            (EdgeKind::Arc, EdgeInit::Arc { guess }) => {
                let to = &net.graph.vertices[e.to];
                out.push_str(&format!(
                    "[edge] {} {from} {to} {} {}\n",
                    e.label,
                    e.multiplicity,
                    coords(model, guess)
                ));
            }
            (_, EdgeInit::Loop { aux: Some([a, b]), .. }) => out.push_str(&format!(
                "[loop] {} {from} {} {} {}\n",
                e.label,
                e.multiplicity,
                coords(model, a),
                coords(model, b)
            )),
            (_, EdgeInit::Loop { aux: None, guess }) | (_, EdgeInit::Arc { guess }) => out.push_str(&format!(
                "[loop] {} {from} {} {}\n",
                e.label,
                e.multiplicity,
                coords(model, guess)
            )),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::realize;

    const THETA: &str = "\
[manifold] model=sphere dim=2
[vertex] n 0 0 1
[vertex] s 0 0 -1
[vertex] e1 1 0 0
[vertex] e2 -0.5 0.8660254037844386 0
[vertex] e3 -0.5 -0.8660254037844386 0
[edge] a1 n e1 1 0 0 0
[edge] b1 e1 s 1 0 0 0
[edge] a2 n e2 1 0 0 0
[edge] b2 e2 s 1 0 0 0
[edge] a3 n e3 1 0 0 0
[edge] b3 e3 s 1 0 0 0
";

    #[test]
    fn parses_theta_and_round_trips() {
        let p = parse_net(THETA, None).unwrap();
        assert_eq!(p.graph.vertices.len(), 5);
        let net = realize(&p.model, &p.graph, &p.init).unwrap();
        assert!((net.length() - 3.0 * std::f64::consts::PI).abs() < 1e-9);
        let text = write_net(&net);
        let q = parse_net(&text, None).unwrap();
        let again = realize(&q.model, &q.graph, &q.init).unwrap();
        assert!((again.length() - net.length()).abs() < 1e-12);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = "[manifold] model=sphere dim=2\n[vertex] a 1 0 0\n[edge] e a b 1\n";
        match parse_net(bad, None) {
            Err(GeonetError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let bad = "[vertex] a 1 0 x\n";
        let m = ManifoldModel::sphere(2).unwrap();
        assert!(matches!(parse_net(bad, Some(&m)), Err(GeonetError::Parse { line: 1, .. })));
        assert!(matches!(parse_net("[vertex] a 1 0 0\n", None), Err(GeonetError::Parse { line: 1, .. })));
    }
}
