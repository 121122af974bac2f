use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const EQUATOR: &str = "[manifold] model=sphere dim=2\n[vertex] p 1 0 0\n[loop] c p 1 0 6.283185307179586 0\n";

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

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("equator.net"), EQUATOR).unwrap();
        fs::write(dir.path().join("theta.net"), THETA).unwrap();
        Workspace { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        fs::write(&p, text).unwrap();
        p
    }

    fn run(&self, args: &[&str], config: &Path, out: &str) -> Output {
        Command::new(env!("CARGO_BIN_EXE_geonet"))
            .args(args)
            .arg("--config")
            .arg(config)
            .arg("--out")
            .arg(self.path(out))
            .env_remove("GEONET_OUT")
            .output()
            .unwrap()
    }

    fn json(&self, out: &str, file: &str) -> Value {
        serde_json::from_str(&fs::read_to_string(self.path(out).join(file)).unwrap()).unwrap()
    }
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn index_of_the_equator() {
    let ws = Workspace::new();
    let cfg = ws.config("run.toml", "[index]\nnet = \"equator.net\"\nsegments = 128\n");
    let o = ws.run(&["index"], &cfg, "out");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = ws.json("out", "summary.json");
    assert_eq!(s["schema"], 1);
    assert_eq!(s["index"], 1);
    assert_eq!(s["nullity"], 2);
    assert!((s["eigenvalues"][0].as_f64().unwrap() + 1.0).abs() < 1e-3);
    let m = ws.json("out", "manifest.json");
    assert_eq!(m["schema"], 1);
    assert_eq!(m["inputs"].as_array().unwrap().len(), 2);
    assert!(m["outputs"].as_array().unwrap().iter().any(|f| f == "spectrum.svg"));
    let svg = fs::read_to_string(ws.path("out").join("spectrum.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn reruns_are_byte_identical() {
    let ws = Workspace::new();
    let cfg = ws.config("run.toml", "seed = 11\n\n[solve-net]\nnet = \"theta.net\"\nperturb = 0.02\n");
    for out in ["a", "b"] {
        let o = ws.run(&["solve-net"], &cfg, out);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for file in ["summary.json", "history.csv", "net.txt", "manifest.json"] {
        let a = fs::read(ws.path("a").join(file)).unwrap();
        let b = fs::read(ws.path("b").join(file)).unwrap();
        assert!(a == b, "{file} differs between runs");
    }
    let s = ws.json("a", "summary.json");
    assert_eq!(s["converged"], true);
    assert!((s["length"].as_f64().unwrap() - 3.0 * std::f64::consts::PI).abs() < 1e-8);

    // a different seed moves the start and so the history
    let o = ws.run(&["solve-net", "--seed", "12"], &cfg, "c");
    assert_eq!(o.status.code(), Some(0));
    assert_ne!(
        fs::read(ws.path("a").join("history.csv")).unwrap(),
        fs::read(ws.path("c").join("history.csv")).unwrap()
    );
}

#[test]
fn width_of_the_round_sphere() {
    let ws = Workspace::new();
    let cfg = ws.config(
        "run.toml",
        "[manifold]\nmodel = \"sphere\"\ndim = 2\n\n[width]\nframes = 33\npoints = 96\nrestarts = 2\nmax_rounds = 40\n",
    );
    let o = ws.run(&["width"], &cfg, "out");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = ws.json("out", "summary.json");
    let w = s["width"].as_f64().unwrap();
    assert!((w - 2.0 * std::f64::consts::PI).abs() < 1e-3, "width {w}");
    assert!(!s["critical"].as_array().unwrap().is_empty());
    let text = fs::read_to_string(ws.path("out").join("sweepout.txt")).unwrap();
    let mass = ws.config("mass.toml", "[manifold]\nmodel = \"sphere\"\ndim = 2\n\n[mass]\nsweepout = \"out/sweepout.txt\"\n");
    assert!(!text.is_empty());
    let o = ws.run(&["mass"], &mass, "mass-out");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn malformed_config_is_line_anchored() {
    let ws = Workspace::new();
    let cfg = ws.config("bad.toml", "seed = 1\n\n[index]\nnet = \"equator.net\"\nsegmnets = 12\n");
    let o = ws.run(&["index"], &cfg, "out");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad.toml:5:"), "{}", stderr(&o));

    let cfg = ws.config("net.toml", "[index]\nnet = \"broken.net\"\n");
    fs::write(ws.path("broken.net"), "[manifold] model=sphere dim=2\n[vertex] p 1 0 x\n").unwrap();
    let o = ws.run(&["index"], &cfg, "out2");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("broken.net:2"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one() {
    let ws = Workspace::new();
    let cfg = ws.config("run.toml", "[index]\nnet = \"equator.net\"\n");
    assert_eq!(ws.run(&["no-such-command"], &cfg, "out").status.code(), Some(1));
    // the section for the command is missing
    assert_eq!(ws.run(&["width"], &cfg, "out").status.code(), Some(1));
    let o = Command::new(env!("CARGO_BIN_EXE_geonet")).arg("index").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = Command::new(env!("CARGO_BIN_EXE_geonet")).arg("--help").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn validation_failures_exit_three() {
    let ws = Workspace::new();
    let cfg = ws.config("run.toml", "[flow]\nc0 = 0.5\nstart = [0.3, 0.1]\nweight = -1.0\n");
    let o = ws.run(&["flow"], &cfg, "out");
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let cfg = ws.config("tol.toml", "[index]\nnet = \"equator.net\"\n");
    let o = ws.run(&["index", "--tol-eig=-1"], &cfg, "out2");
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn stalled_solve_exits_two_with_history() {
    let ws = Workspace::new();
    let (c, s) = (0.6f64.cos(), 0.6f64.sin());
    let at = |y: f64, t: f64| format!("{} {} {}", c * t.cos(), y * t.cos(), t.sin());
    let (t1, t2) = (2.0 * std::f64::consts::PI / 3.0, 4.0 * std::f64::consts::PI / 3.0);
    let net = format!(
        "[manifold] model=sphere dim=2\n[vertex] p {c} {s} 0\n[vertex] q {c} {} 0\n\
         [edge] bridge p q 1 {} {} 0\n[loop] lp p 1 {} {}\n[loop] lq q 1 {} {}\n",
        -s,
        1.2 * s,
        -1.2 * c,
        at(s, t1),
        at(s, t2),
        at(-s, t1),
        at(-s, t2)
    );
    fs::write(ws.path("eyeglass.net"), net).unwrap();
    let cfg = ws.config("run.toml", "seed = 3\n\n[solve-net]\nnet = \"eyeglass.net\"\nperturb = 0.01\n");
    let o = ws.run(&["solve-net"], &cfg, "out");
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let s = ws.json("out", "summary.json");
    assert_eq!(s["converged"], false);
    assert!(fs::read_to_string(ws.path("out").join("history.csv")).unwrap().lines().count() > 2);
    assert_eq!(ws.json("out", "manifest.json")["run"]["status"], 2);
}

#[test]
fn avoidance_and_flow_reports() {
    let ws = Workspace::new();
    let cfg = ws.config(
        "run.toml",
        "seed = 2\n\n[avoid]\nsize = 1\ndelta = 0.5\nmatrix = [[0.2, 0.0], [0.0, 0.2], [0.1, -0.1]]\noffset = [0.05, 0.0, 0.0]\n\n\
         [flow]\nc0 = 0.5\ncenter = [0.0, 0.0]\nstart = [0.3, 0.1]\nweight = \"depth\"\n",
    );
    let o = ws.run(&["avoid"], &cfg, "avoid");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = ws.json("avoid", "summary.json");
    assert!(s["margin"].as_f64().unwrap() > 0.0);
    let o = ws.run(&["flow"], &cfg, "flow");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = ws.json("flow", "summary.json");
    assert_eq!(s["strictly_decreasing"], true);
    assert!(s["drop_margin"].as_f64().unwrap() > 0.0);
}

#[test]
fn fdist_between_nets() {
    let ws = Workspace::new();
    let cfg = ws.config("run.toml", "[fdist]\na = \"equator.net\"\nb = \"equator.net\"\n");
    let o = ws.run(&["fdist"], &cfg, "out");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(ws.json("out", "summary.json")["f_distance"].as_f64().unwrap() < 1e-9);
}
