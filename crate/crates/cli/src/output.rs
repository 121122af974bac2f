//! Output directory: schema-versioned JSON, CSV, SVG and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const SCHEMA: u32 = 1;

fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn hex_digest(bytes: &[u8]) -> String {
    to_hex(&Sha256::digest(bytes))
}

/// Files read during a run, in order, for the manifest.
#[derive(Default)]
pub struct Inputs {
    entries: Vec<(String, String)>,
    hasher: Sha256,
}

impl Inputs {
    pub fn read(&mut self, path: &Path) -> Result<String, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.record(path, text.as_bytes());
        Ok(text)
    }

    pub fn record(&mut self, path: &Path, bytes: &[u8]) {
        self.hasher.update((bytes.len() as u64).to_le_bytes());
        self.hasher.update(bytes);
        let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        self.entries.push((name, hex_digest(bytes)));
    }

    fn finish(&self) -> (Vec<Value>, String) {
        let list = self.entries.iter().map(|(p, h)| json!({ "file": p, "sha256": h })).collect();
        (list, to_hex(&self.hasher.clone().finalize()))
    }
}

pub struct Artifacts {
    dir: PathBuf,
    written: Vec<String>,
}

impl Artifacts {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn text(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|source| CliError::Io { path, source })?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// Writes `value` with `schema` and `command` fields added.
    pub fn json(&mut self, name: &str, command: &str, mut value: Value) -> Result<(), CliError> {
        if let Value::Object(map) = &mut value {
            map.insert("schema".into(), json!(SCHEMA));
            map.insert("command".into(), json!(command));
        }
        let mut text = serde_json::to_string_pretty(&value).expect("JSON values serialize");
        text.push('\n');
        self.text(name, &text)
    }

    pub fn manifest(&mut self, command: &str, run: Value, inputs: &Inputs) -> Result<(), CliError> {
        let (files, hash) = inputs.finish();
        let outputs = self.written.clone();
        self.json(
            "manifest.json",
            command,
            json!({
                "version": env!("CARGO_PKG_VERSION"),
                "run": run,
                "inputs": files,
                "input_sha256": hash,
                "outputs": outputs,
            }),
        )
    }
}

pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 48.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit<'a>(points: impl Iterator<Item = &'a (f64, f64)>, square: bool) -> Frame {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in points {
            if x.is_finite() && y.is_finite() {
                x0 = x0.min(x);
                x1 = x1.max(x);
                y0 = y0.min(y);
                y1 = y1.max(y);
            }
        }
        if !x0.is_finite() {
            return Frame { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 };
        }
        let pad = |a: f64, b: f64| if b - a < 1e-12 { (a - 0.5, b + 0.5) } else { (a, b) };
        let (x0, x1) = pad(x0, x1);
        let (y0, y1) = pad(y0, y1);
        if square {
            let half = 0.5 * (x1 - x0).max(y1 - y0);
            let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
            return Frame {
                x0: cx - half,
                x1: cx + half,
                y0: cy - half,
                y1: cy + half,
            };
        }
        Frame { x0, x1, y0, y1 }
    }

    fn map(&self, (x, y): (f64, f64), square: bool) -> (f64, f64) {
        let (w, h) = if square { (H - 2.0 * PAD, H - 2.0 * PAD) } else { (W - 2.0 * PAD, H - 2.0 * PAD) };
        (
            PAD + (x - self.x0) / (self.x1 - self.x0) * w,
            H - PAD - (y - self.y0) / (self.y1 - self.y0) * h,
        )
    }
}

const COLORS: [&str; 4] = ["#1f4e79", "#b03a2e", "#1e8449", "#7d3c98"];

fn header(title: &str, width: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{H}\" viewBox=\"0 0 {width} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{PAD}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n",
        escape(title)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn polyline(points: &[(f64, f64)], color: &str) -> String {
    let coords: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    format!(
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
        coords.join(" ")
    )
}

/// Line plot of one or more named series.
pub fn line_plot(title: &str, xlabel: &str, ylabel: &str, series: &[(&str, Vec<(f64, f64)>)]) -> String {
    let frame = Frame::fit(series.iter().flat_map(|(_, s)| s.iter()), false);
    let mut svg = header(title, W);
    let (bl, tr) = (frame.map((frame.x0, frame.y0), false), frame.map((frame.x1, frame.y1), false));
    let _ = writeln!(
        svg,
        "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"#888\"/>",
        bl.0,
        tr.1,
        tr.0 - bl.0,
        bl.1 - tr.1
    );
    let label = |x: f64, y: f64, anchor: &str, text: String| {
        format!("<text x=\"{x:.2}\" y=\"{y:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"{anchor}\">{}</text>\n", escape(&text))
    };
    svg += &label(bl.0, bl.1 + 16.0, "start", format!("{:.4}", frame.x0));
    svg += &label(tr.0, bl.1 + 16.0, "end", format!("{:.4}", frame.x1));
    svg += &label(bl.0 - 4.0, bl.1, "end", format!("{:.4}", frame.y0));
    svg += &label(bl.0 - 4.0, tr.1 + 10.0, "end", format!("{:.4}", frame.y1));
    svg += &label(0.5 * (bl.0 + tr.0), H - 8.0, "middle", xlabel.to_string());
    svg += &label(bl.0, tr.1 - 6.0, "start", ylabel.to_string());
    for (i, (name, s)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<(f64, f64)> = s.iter().map(|p| frame.map(*p, false)).collect();
        svg += &polyline(&pts, color);
        if series.len() > 1 {
            let _ = writeln!(
                svg,
                "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{color}\">{}</text>",
                W - PAD - 120.0,
                tr.1 + 14.0 * (i as f64 + 1.0),
                escape(name)
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Curves drawn in the first two ambient coordinates, with marked points.
pub fn curve_plot(title: &str, curves: &[Vec<(f64, f64)>], marks: &[(f64, f64)]) -> String {
    let frame = Frame::fit(curves.iter().flatten().chain(marks.iter()), true);
    let mut svg = header(title, H);
    for (i, c) in curves.iter().enumerate() {
        // break at jumps, e.g. where a torus curve wraps
        let span = frame.x1 - frame.x0;
        let mut piece: Vec<(f64, f64)> = Vec::new();
        for w in c.iter() {
            if let Some(last) = piece.last() {
                let (lx, ly) = *last;
                let (px, py) = frame.map(*w, true);
                let jump = ((px - lx).powi(2) + (py - ly).powi(2)).sqrt();
                if jump > 0.4 * (H - 2.0 * PAD) && span > 0.0 {
                    svg += &polyline(&piece, COLORS[i % COLORS.len()]);
                    piece.clear();
                }
            }
            piece.push(frame.map(*w, true));
        }
        if piece.len() > 1 {
            svg += &polyline(&piece, COLORS[i % COLORS.len()]);
        }
    }
    for m in marks {
        let (x, y) = frame.map(*m, true);
        let _ = writeln!(svg, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"black\"/>");
    }
    svg.push_str("</svg>\n");
    svg
}
