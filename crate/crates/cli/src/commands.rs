use std::path::{Path, PathBuf};
use std::sync::Arc;

use geonet_core::deform::{
    deform_sweepout, gradient_flow_ball, replay_jsonl, skeletal_avoidance, AvoidanceOptions, CertifiedCenter,
    DeformOptions, FlowOptions, SimplicialComplex, Weighting,
};
use geonet_core::index::{assemble_index_form, morse_index};
use geonet_core::instability::{
    certify_k_unstable, family_from_fields, family_from_fields_unchecked, lowest_eigenfields, Certification,
    CertifyOptions, DiffeoFamily, MassProfile, Profile, QuadraticProfile,
};
use geonet_core::manifold::vector;
use geonet_core::minmax::{
    critical_extract, latitude_width, parse_sweepout, sup_mass, write_latitude_sweepout, ExtractOptions,
    LatitudeFourier, OptimizerConfig, Sweepout,
};
use geonet_core::net::{manifold_line, parse_net, realize, solve_stationary_with, write_net, NetInit, ParsedNet, SolveOptions};
use geonet_core::varifold::{f_distance, AmbientField, DiscreteVarifold, TestGrid};
use geonet_core::{GeodesicNet, GeonetError, ManifoldModel, Vector};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::config::{
    CenterParams, ComplexKind, FamilyKind, ProfileKind, RunConfig, ToleranceConfig, WeightSpec,
};
use crate::error::CliError;
use crate::output::{csv, curve_plot, line_plot, Artifacts, Inputs};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::Subcommand)]
pub enum Command {
    /// Solve for a stationary geodesic net from a net file.
    SolveNet,
    /// Morse index and nullity of a net.
    Index,
    /// Certify k-instability of a net under a diffeomorphism family.
    Certify,
    /// Weighted gradient flow of a concave profile in the unit ball.
    Flow,
    /// Skeletal avoidance map for targets on a simplicial complex.
    Avoid,
    /// Deform a sweepout away from certified centers.
    Deform,
    /// Width of the latitude family.
    Width,
    /// Varifold distance between two nets or sample files.
    Fdist,
    /// Mass of a net or of every frame of a sweepout.
    Mass,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SolveNet => "solve-net",
            Command::Index => "index",
            Command::Certify => "certify",
            Command::Flow => "flow",
            Command::Avoid => "avoid",
            Command::Deform => "deform",
            Command::Width => "width",
            Command::Fdist => "fdist",
            Command::Mass => "mass",
        }
    }
}

pub struct Context {
    pub config: RunConfig,
    /// Directory of the config file; relative paths resolve against it.
    pub base: PathBuf,
    pub seed: u64,
    pub tolerances: ToleranceConfig,
    pub inputs: Inputs,
}

impl Context {
    fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn apply_tolerances(&self, model: &mut ManifoldModel) -> Result<(), CliError> {
        let t = &self.tolerances;
        for (slot, value) in [
            (&mut model.tol.ode_tol, t.ode),
            (&mut model.tol.bvp_tol, t.bvp),
            (&mut model.tol.stationarity_tol, t.stationarity),
            (&mut model.tol.eig_tol, t.eig),
        ] {
            if let Some(v) = value {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(CliError::Validation(format!("tolerance {v} must be positive")));
                }
                *slot = v;
            }
        }
        Ok(())
    }

    fn model(&self) -> Result<Option<ManifoldModel>, CliError> {
        match &self.config.manifold {
            Some(cfg) => {
                let mut m = cfg.build()?;
                self.apply_tolerances(&mut m)?;
                Ok(Some(m))
            }
            None => Ok(None),
        }
    }

    fn require_model(&self) -> Result<ManifoldModel, CliError> {
        self.model()?
            .ok_or_else(|| CliError::Validation("this command needs a [manifold] section".into()))
    }

    fn load_net(&mut self, file: &Path) -> Result<ParsedNet, CliError> {
        let path = self.path(file);
        let text = self.inputs.read(&path)?;
        let default = self.model()?;
        let mut parsed = parse_net(&text, default.as_ref()).map_err(|e| CliError::in_file(e, &path))?;
        self.apply_tolerances(&mut parsed.model)?;
        Ok(parsed)
    }

    fn load_sweepout(&mut self, file: &Path) -> Result<Sweepout, CliError> {
        let path = self.path(file);
        let text = self.inputs.read(&path)?;
        let default = self.model()?;
        let mut s = parse_sweepout(&text, default.as_ref()).map_err(|e| CliError::in_file(e, &path))?;
        self.apply_tolerances(&mut s.model)?;
        Ok(s)
    }

    /// A stationary net solved from the file's initial data.
    fn stationary_net(&mut self, file: &Path) -> Result<GeodesicNet, CliError> {
        let parsed = self.load_net(file)?;
        Ok(solve_stationary_with(&parsed.model, &parsed.graph, &parsed.init, &SolveOptions::default())?.net)
    }
}

fn section<T: Clone>(value: &Option<T>, name: &str) -> Result<T, CliError> {
    value
        .clone()
        .ok_or_else(|| CliError::Usage(format!("the config has no [{name}] section")))
}

pub fn run(command: Command, cx: &mut Context, out: &mut Artifacts) -> Result<(), CliError> {
    match command {
        Command::SolveNet => solve_net(cx, out),
        Command::Index => index(cx, out),
        Command::Certify => certify(cx, out),
        Command::Flow => flow(cx, out),
        Command::Avoid => avoid(cx, out),
        Command::Deform => deform(cx, out),
        Command::Width => width(cx, out),
        Command::Fdist => fdist(cx, out),
        Command::Mass => mass(cx, out),
    }
}

fn kick(model: &ManifoldModel, x: &Vector, size: f64, rng: &mut ChaCha8Rng) -> Vector {
    let mut d = Vector::zeros();
    for i in 0..model.ambient_dim() {
        d[i] = rng.random_range(-1.0..1.0);
    }
    let d = model.tangent_project(x, &d);
    let n = d.norm();
    if n == 0.0 {
        return *x;
    }
    model.project(&(x + d * (size / n)))
}

fn perturb(model: &ManifoldModel, init: &NetInit, size: f64, seed: u64) -> NetInit {
    use geonet_core::net::EdgeInit;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = init.positions.iter().map(|x| kick(model, x, size, &mut rng)).collect();
    let edges = init
        .edges
        .iter()
        .map(|e| match e {
            EdgeInit::Loop { aux: Some([a, b]), guess } => EdgeInit::Loop {
                aux: Some([kick(model, a, size, &mut rng), kick(model, b, size, &mut rng)]),
                guess: *guess,
            },
            other => other.clone(),
        })
        .collect();
    NetInit { positions, edges }
}

fn net_svg(net: &GeodesicNet, title: &str) -> String {
    let curves: Vec<Vec<(f64, f64)>> = net
        .arcs
        .iter()
        .map(|a| a.segment.points.iter().map(|p| (p[0], p[1])).collect())
        .collect();
    let marks: Vec<(f64, f64)> = net.positions().iter().map(|p| (p[0], p[1])).collect();
    curve_plot(title, &curves, &marks)
}

fn solve_net(cx: &mut Context, out: &mut Artifacts) -> Result<(), CliError> {
    let p = section(&cx.config.solve_net, "solve-net")?;
    let parsed = cx.load_net(&p.net)?;
    let init = if p.perturb > 0.0 {
        perturb(&parsed.model, &parsed.init, p.perturb, cx.seed)
    } else {
        parsed.init.clone()
    };
    let opts = SolveOptions {
        max_iterations: p.max_iterations,
        fd_step: p.fd_step,
        samples: p.samples,
        length_monotone: p.length_monotone,
    };
    match solve_stationary_with(&parsed.model, &parsed.graph, &init, &opts) {
        Ok(report) => {
            let net = &report.net;
            let residuals: Vec<f64> = net.residuals().iter().map(|r| r.norm()).collect();
            out.json(
                "summary.json",
                "solve-net",
                json!({
                    "converged": true,
                    "iterations": report.iterations,
                    "length": net.length(),
                    "max_residual": net.max_residual(),
                    "vertex_residuals": residuals,
                }),
            )?;
            let rows = report
                .residual_history
                .iter()
                .zip(&report.length_history)
                .enumerate()
                .map(|(i, (r, l))| vec![i as f64, *r, *l]);
            out.text("history.csv", &csv(&["iteration", "max_residual", "length"], rows))?;
            out.text("net.txt", &write_net(net))?;
            out.text("net.svg", &net_svg(net, "stationary net (x, y)"))?;
            Ok(())
        }
        Err(GeonetError::Solver {
            iterations,
            residual,
            history,
        }) => {
            out.json(
                "summary.json",
                "solve-net",
                json!({
                    "converged": false,
                    "iterations": iterations,
                    "max_residual": residual,
                }),
            )?;
            let rows = history.iter().enumerate().map(|(i, r)| vec![i as f64, *r]);
            out.text("history.csv", &csv(&["iteration", "max_residual"], rows))?;
            Err(GeonetError::Solver {
                iterations,
                residual,
                history,
            }
            .into())
        }
        Err(e) => Err(e.into()),
    }
}

fn index(cx: &mut Context, out: &mut Artifacts) -> Result<(), CliError> {
    let p = section(&cx.config.index, "index")?;
    let parsed = cx.load_net(&p.net)?;
    let net = if p.polish {
        solve_stationary_with(&parsed.model, &parsed.graph, &parsed.init, &SolveOptions::default())?.net
    } else {
        realize(&parsed.model, &parsed.graph, &parsed.init)?
    };
    let r = morse_index(&net, p.segments, net.model.tol.eig_tol)?;
    let listed: Vec<f64> = r.eigenvalues.iter().take(p.eigenvalues).copied().collect();
    out.json(
        "summary.json",
        "index",
        json!({
            "index": r.index,
            "nullity": r.nullity,
            "threshold": r.threshold,
            "segments": p.segments,
            "eigenvalues": listed,
            "length": net.length(),
            "max_residual": net.max_residual(),
        }),
    )?;
    let rows = r.eigenvalues.iter().enumerate().map(|(i, v)| vec![i as f64, *v]);
    out.text("spectrum.csv", &csv(&["i", "eigenvalue"], rows))?;
    let shown: Vec<(f64, f64)> = r.eigenvalues.iter().take(40).enumerate().map(|(i, v)| (i as f64, *v)).collect();
    out.text("spectrum.svg", &line_plot("index form spectrum", "i", "eigenvalue", &[("eigenvalues", shown)]))?;
    Ok(())
}

fn center_family(cx: &mut Context, c: &CenterParams) -> Result<(GeodesicNet, DiffeoFamily), CliError> {
    let net = cx.stationary_net(&c.net)?;
    let m = net.model.clone();
    let family = match c.family {
        FamilyKind::Eigen => {
            let form = assemble_index_form(&net, c.segments)?;
            let fields = lowest_eigenfields(&form, c.k)?;
            if c.check_span {
                family_from_fields(&form, &fields, c.scale)?
            } else {
                family_from_fields_unchecked(&form, &fields, c.scale)?
            }
        }
        FamilyKind::Translation => {
            if c.directions.is_empty() {
                return Err(CliError::Validation("translation families need `directions`".into()));
            }
            let mut fields = Vec::new();
            for d in &c.directions {
                if d.len() != m.ambient_dim() {
                    return Err(CliError::Validation(format!(
                        "direction {d:?} needs {} components",
                        m.ambient_dim()
                    )));
                }
                fields.push(AmbientField::translation(&m, vector(d)));
            }
            DiffeoFamily::new(&m, fields, c.scale)?
        }
    };
    Ok((net, family))
}

fn certify_options(c: &CenterParams, seed: u64) -> CertifyOptions {
    CertifyOptions {
        budget: c.budget,
        samples_per_arc: c.samples_per_arc,
        grid_spacing: c.grid_spacing,
        seed,
        ..CertifyOptions::default()
    }
}

fn certify(cx: &mut Context, out: &mut Artifacts) -> Result<(), CliError> {
    let c = section(&cx.config.certify, "certify")?;
    let (net, family) = center_family(cx, &c)?;
    let cert = certify_k_unstable(&net, &family, c.eps, &certify_options(&c, cx.seed))?;
    let (c0, checked) = match &cert {
        Certification::Certified(x) => (Some(x.c0), x.samples.len()),
        Certification::Failed(f) => (None, f.samples_checked),
    };
    out.json(
        "summary.json",
        "certify",
        json!({
            "certified": cert.is_certified(),
            "k": family.k(),
            "eps": c.eps,
            "c0": c0,
            "samples_checked": checked,
            "result": cert,
        }),
    )?;
    if let Certification::Certified(x) = &cert {
        let rows = x
            .samples
            .iter()
            .map(|s| vec![s.index as f64, s.distance, s.mass, s.max_value, s.hessian_min, s.hessian_max]);
        out.text(
            "samples.csv",
            &csv(&["sample", "distance", "mass", "max_value", "hessian_min", "hessian_max"], rows),
        )?;
    }
    Ok(())
}

fn flow(cx: &mut Context, out: &mut Artifacts) -> Result<(), CliError> {
    let p = section(&cx.config.flow, "flow")?;
    let opts = FlowOptions {
        dt: p.dt,
        max_steps: p.max_steps,
        stop_radius: p.stop_radius,
        ..FlowOptions::default()
    };
    let weighting = match &p.weight {
        WeightSpec::Constant(c) if *c > 0.0 => Weighting::Constant(*c),
        WeightSpec::Constant(c) => return Err(CliError::Validation(format!("weight {c} must be positive"))),
        WeightSpec::Named(n) if n == "depth" => Weighting::Depth { radius: opts.radius() },
        WeightSpec::Named(n) => return Err(CliError::Validation(format!("unknown weight `{n}`"))),
    };
    let k = p.start.len();
    if k == 0 {
        return Err(CliError::Validation("`start` must be a nonempty point".into()));
    }
    let start = DVector::from_column_slice(&p.start);
    let (path, c0) = match p.profile {
        ProfileKind::Quadratic => {
            let center = if p.center.is_empty() {
                DVector::zeros(k)
            } else {
                DVector::from_column_slice(&p.center)
            };
            let curvature = match (&p.curvature, p.c0) {
                (Some(rows), _) => {
                    if rows.len() != k || rows.iter().any(|r| r.len() != k) {
                        return Err(CliError::Validation(format!("curvature must be {k}×{k}")));
                    }
                    DMatrix::from_fn(k, k, |i, j| rows[i][j])
                }
                (None, Some(c0)) => DMatrix::identity(k, k) * c0,
                (None, None) => return Err(CliError::Validation("give `c0` or `curvature`".into())),
            };
            if center.len() != k {
                return Err(CliError::Validation("`center` and `start` differ in dimension".into()));
            }
            let sym = (&curvature + curvature.transpose()) * 0.5;
            let c0 = sym.clone().symmetric_eigen().eigenvalues.min();
            let profile = QuadraticProfile {
                peak: p.peak,
                center,
                curvature: sym,
            };
            (gradient_flow_ball(&profile, &start, &weighting, &opts)?, Some(c0))
        }
        ProfileKind::Mass => {
            let file = p
                .net
                .clone()
                .ok_or_else(|| CliError::Validation("mass profiles need `net`".into()))?;
            let net = cx.stationary_net(&file)?;
            let form = assemble_index_form(&net, p.segments)?;
            let fields = lowest_eigenfields(&form, p.k)?;
            let family = family_from_fields(&form, &fields, p.scale)?;
            let varifold = DiscreteVarifold::from_net(&net, p.samples_per_arc)?;
            let profile = MassProfile {
                varifold: &varifold,
                family: &family,
            };
            if profile.dim() != k {
                return Err(CliError::Validation(format!("`start` needs {} components", profile.dim())));
            }
            (gradient_flow_ball(&profile, &start, &weighting, &opts)?, None)
        }
    };
    let drop = path.values.last().copied().unwrap_or(0.0) - path.values[0];
    out.json(
        "summary.json",
        "flow",
        json!({
            "stop": path.stop,
            "steps": path.values.len() - 1,
            "start": path.points[0],
            "end": path.points.last(),
            "drop": drop,
            "strictly_decreasing": path.is_strictly_decreasing(),
            "c0": c0,
            "drop_margin": c0.map(|c| path.drop_margin(c)),
        }),
    )?;
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((0..k).map(|i| format!("x{i}")));
    header.extend(["weight".into(), "value".into()]);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..path.times.len()).map(|i| {
        let mut row = vec![path.times[i]];
        row.extend(&path.points[i]);
        row.push(path.weights[i]);
        row.push(path.values[i]);
        row
    });
    out.text("path.csv", &csv(&header, rows))?;
    let series: Vec<(f64, f64)> = path.times.iter().zip(&path.values).map(|(t, v)| (*t, *v)).collect();
    out.text("values.svg", &line_plot("profile along the flow", "t", "A", &[("A(x(t))", series)]))?;
    Ok(())
}

fn parse_rows(text: &str, path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with(|c: char| c.is_alphabetic())) {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(|t| t.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|e| CliError::Parse {
            file: path.to_path_buf(),
            line: i + 1,
            col: None,
            message: e.to_string(),
        })?);
    }
    Ok(rows)
}

fn avoid(cx: &mut Context, out: &mut Artifacts) -> Result<(), CliError> {
    let p = section(&cx.config.avoid, "avoid")?;
    let domain = match p.complex {
        ComplexKind::HexDisk => SimplicialComplex::hex_disk(p.size)?,
        ComplexKind::Interval => SimplicialComplex::interval(p.size)?,
    };
    let targets: Vec<DVector<f64>> = match &p.targets {
        Some(file) => {
            let path = cx.path(file);
            let text = cx.inputs.read(&path)?;
            parse_rows(&text, &path)?.into_iter().map(DVector::from_vec).collect()
        }
        None => {
            let dim = p.matrix.len();
            let cols = domain.coords[0].len();
            if dim == 0 || p.matrix.iter().any(|r| r.len() != cols) {
                return Err(CliError::Validation(format!("`matrix` needs rows of {cols} numbers")));
            }
            let a = DMatrix::from_fn(dim, cols, |i, j| p.matrix[i][j]);
            let offset = if p.offset.is_empty() {
                DVector::zeros(dim)
            } else if p.offset.len() == dim {
                DVector::from_column_slice(&p.offset)
            } else {
                return Err(CliError::Validation(format!("`offset` needs {dim} numbers")));
            };
            domain
                .coords
                .iter()
                .map(|x| &a * DVector::from_column_slice(x) + &offset)
                .collect()
        }
    };
    let opts = AvoidanceOptions {
        max_levels: p.max_levels,
        candidates: p.candidates,
        seed: cx.seed,
    };
    let map = skeletal_avoidance(&domain, &targets, p.delta, &opts)?;
    let largest = map.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    out.json(
        "summary.json",
        "avoid",
        json!({
            "delta": map.delta,
            "alpha": map.alpha,
            "levels": map.levels,
            "margin": map.margin,
            "vertices": map.values.len(),
            "simplices": map.complex.simplices.len(),
            "largest_value": largest,
        }),
    )?;
    let dim = targets[0].len();
    let cols = map.complex.coords[0].len();
    let mut header: Vec<String> = (0..cols).map(|i| format!("x{i}")).collect();
    header.extend((0..dim).map(|i| format!("target{i}")));
    header.extend((0..dim).map(|i| format!("value{i}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..map.values.len()).map(|v| {
        let mut row = map.complex.coords[v].clone();
        row.extend(map.targets[v].iter());
        row.extend(map.values[v].iter());
        row
    });
    out.text("values.csv", &csv(&header, rows))?;
    Ok(())
}

fn frame_masses_svg(s: &Sweepout, title: &str, others: Option<&Sweepout>) -> Option<String> {
    if s.domain_dim() != 1 {
        return None;
    }
    let series = |s: &Sweepout| -> Vec<(f64, f64)> {
        let mut pts: Vec<(f64, f64)> = s.complex.coords.iter().zip(s.masses()).map(|(x, m)| (x[0], m)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts
    };
    let mut all = vec![("input", series(s))];
    if let Some(o) = others {
        all.push(("output", series(o)));
    }
    Some(line_plot(title, "parameter", "mass", &all))
}

fn masses_csv(s: &Sweepout) -> String {
    let cols = s.complex.coords[0].len();
    let mut header: Vec<String> = vec!["vertex".into()];
    header.extend((0..cols).map(|i| format!("x{i}")));
    header.push("mass".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = s.masses().into_iter().enumerate().map(|(i, m)| {
        let mut row = vec![i as f64];
        row.extend(&s.complex.coords[i]);
        row.push(m);
        row
    });
    csv(&header, rows)
}

fn deform(cx: &mut Context, out: &mut Artifacts) -> Result<(), CliError> {
    let p = section(&cx.config.deform, "deform")?;
    let input = match &p.sweepout {
        Some(file) => cx.load_sweepout(file)?,
        None => {
            let m = cx.require_model()?;
            let family = LatitudeFourier::new(&m, &p.latitude.params, p.latitude.points)?;
            Sweepout::interval(Arc::new(family), p.latitude.frames)?
        }
    };
    let mut centers = Vec::new();
    for (i, c) in p.centers.iter().enumerate() {
        let (net, family) = center_family(cx, c)?;
        match certify_k_unstable(&net, &family, c.eps, &certify_options(c, cx.seed))? {
            Certification::Certified(cert) => centers.push(CertifiedCenter::new(net, cert)?),
            Certification::Failed(f) => {
                return Err(CliError::Validation(format!(
                    "center {i} did not certify at sample {} ({}): {:?}",
                    f.sample, f.label, f.violation
                )))
            }
        }
    }
    let opts = DeformOptions {
        grid: TestGrid { max_atoms: p.max_atoms },
        replay_depth: p.replay_depth,
        avoidance: AvoidanceOptions {
            seed: cx.seed,
            ..AvoidanceOptions::default()
        },
        ..DeformOptions::default()
    };
    let result = deform_sweepout(&input, &centers, p.delta, &opts)?;
    out.json(
        "summary.json",
        "deform",
        json!({
            "centers": centers.len(),
            "input_sup_mass": sup_mass(&input),
            "output_sup_mass": sup_mass(&result.sweepout),
            "report": result.report,
        }),
    )?;
    out.text("replay.jsonl", &replay_jsonl(&result.replay))?;
    out.text("masses.csv", &masses_csv(&result.sweepout))?;
    if let Some(svg) = frame_masses_svg(&input, "frame masses", Some(&result.sweepout)) {
        out.text("masses.svg", &svg)?;
    }
    Ok(())
}

fn width(cx: &mut Context, out: &mut Artifacts) -> Result<(), CliError> {
    let p = section(&cx.config.width, "width")?;
    let m = cx.require_model()?;
    let cfg = OptimizerConfig {
        restarts: p.restarts,
        half_width: p.half_width,
        initial_step: p.initial_step,
        min_step: p.min_step,
        max_rounds: p.max_rounds,
        seed: cx.seed,
    };
    let (est, s) = latitude_width(&m, p.frames, p.points, &cfg)?;
    let clusters = critical_extract(
        &s,
        p.band,
        &ExtractOptions {
            radius: p.cluster_radius,
            ..ExtractOptions::default()
        },
    )?;
    let critical: Vec<_> = clusters
        .iter()
        .map(|c| json!({ "frames": c.frames, "representative": c.representative, "mass": c.mass }))
        .collect();
    out.json(
        "summary.json",
        "width",
        json!({
            "width": est.value,
            "params": est.params,
            "stagnated": est.stagnated,
            "evaluations": est.evaluations,
            "restart_values": est.restart_values,
            "critical": critical,
        }),
    )?;
    out.text("masses.csv", &masses_csv(&s))?;
    if let Some(svg) = frame_masses_svg(&s, "optimal latitude sweepout", None) {
        out.text("masses.svg", &svg)?;
    }
    let line = manifold_line(&m);
    let model_line = line.strip_prefix("[manifold] ").unwrap_or(&line);
    out.text("sweepout.txt", &write_latitude_sweepout(model_line, &est.params, p.points, p.frames))?;
    Ok(())
}

fn load_varifold(cx: &mut Context, file: &Path, per_arc: usize) -> Result<(DiscreteVarifold, Option<ManifoldModel>), CliError> {
    if file.extension().is_some_and(|e| e == "csv") {
        let m = cx.require_model()?;
        let path = cx.path(file);
        let text = cx.inputs.read(&path)?;
        let v = DiscreteVarifold::from_csv(&text, m.ambient_dim()).map_err(|e| CliError::in_file(e, &path))?;
        Ok((v, Some(m)))
    } else {
        let parsed = cx.load_net(file)?;
        let net = realize(&parsed.model, &parsed.graph, &parsed.init)?;
        Ok((DiscreteVarifold::from_net(&net, per_arc)?, Some(parsed.model)))
    }
}

fn fdist(cx: &mut Context, out: &mut Artifacts) -> Result<(), CliError> {
    let p = section(&cx.config.fdist, "fdist")?;
    let (a, ma) = load_varifold(cx, &p.a, p.samples_per_arc)?;
    let (b, mb) = load_varifold(cx, &p.b, p.samples_per_arc)?;
    let model = match (ma, mb) {
        (Some(x), Some(y)) if x.kind != y.kind => {
            return Err(CliError::Validation("the two inputs live on different manifolds".into()))
        }
        (Some(x), _) | (None, Some(x)) => x,
        (None, None) => cx.require_model()?,
    };
    let d = f_distance(&model, &a, &b, &TestGrid { max_atoms: p.max_atoms })?;
    out.json(
        "summary.json",
        "fdist",
        json!({
            "f_distance": d,
            "mass_a": a.mass(),
            "mass_b": b.mass(),
            "samples_a": a.len(),
            "samples_b": b.len(),
            "max_atoms": p.max_atoms,
        }),
    )?;
    Ok(())
}

fn mass(cx: &mut Context, out: &mut Artifacts) -> Result<(), CliError> {
    let p = section(&cx.config.mass, "mass")?;
    match (&p.net, &p.sweepout) {
        (Some(file), None) => {
            let parsed = cx.load_net(file)?;
            let net = realize(&parsed.model, &parsed.graph, &parsed.init)?;
            let arcs: Vec<_> = net
                .arcs
                .iter()
                .map(|a| {
                    json!({
                        "edge": net.graph.edges[a.graph_edge].label,
                        "length": a.segment.length,
                        "multiplicity": a.multiplicity,
                    })
                })
                .collect();
            out.json("summary.json", "mass", json!({ "mass": net.length(), "arcs": arcs }))?;
            out.text("net.svg", &net_svg(&net, "net (x, y)"))?;
        }
        (None, Some(file)) => {
            let s = cx.load_sweepout(file)?;
            out.json(
                "summary.json",
                "mass",
                json!({ "sup_mass": sup_mass(&s), "frames": s.frames.len(), "masses": s.masses() }),
            )?;
            out.text("masses.csv", &masses_csv(&s))?;
            if let Some(svg) = frame_masses_svg(&s, "frame masses", None) {
                out.text("masses.svg", &svg)?;
            }
        }
        _ => return Err(CliError::Validation("[mass] needs exactly one of `net` and `sweepout`".into())),
    }
    Ok(())
}
