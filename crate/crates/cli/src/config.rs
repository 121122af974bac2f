//! Run configuration files.
//!
//! ```toml
//! seed = 7
//! out = "runs/equator"
//!
//! [manifold]
//! model = "sphere"
//! dim = 2
//!
//! [tolerances]
//! eig = 1e-6
//!
//! [index]
//! net = "equator.net"
//! segments = 256
//! ```
//!
//! Lengths are in manifold arc length and angles in radians. Paths are relative to the
//! config file.

use std::path::{Path, PathBuf};

use geonet_core::manifold::ManifoldConfig;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub manifold: Option<ManifoldConfig>,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    #[serde(rename = "solve-net")]
    pub solve_net: Option<SolveNetParams>,
    pub index: Option<IndexParams>,
    pub certify: Option<CenterParams>,
    pub flow: Option<FlowParams>,
    pub avoid: Option<AvoidParams>,
    pub deform: Option<DeformParams>,
    pub width: Option<WidthParams>,
    pub fdist: Option<FdistParams>,
    pub mass: Option<MassParams>,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    pub ode: Option<f64>,
    pub bvp: Option<f64>,
    pub stationarity: Option<f64>,
    pub eig: Option<f64>,
}

impl ToleranceConfig {
    /// Entries of `over` replace ours.
    pub fn overlay(self, over: ToleranceConfig) -> ToleranceConfig {
        ToleranceConfig {
            ode: over.ode.or(self.ode),
            bvp: over.bvp.or(self.bvp),
            stationarity: over.stationarity.or(self.stationarity),
            eig: over.eig.or(self.eig),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveNetParams {
    pub net: PathBuf,
    /// Size of the seeded tangent kick applied to every initial point.
    pub perturb: f64,
    pub max_iterations: usize,
    pub samples: usize,
    pub fd_step: f64,
    pub length_monotone: bool,
}

impl Default for SolveNetParams {
    fn default() -> Self {
        SolveNetParams {
            net: PathBuf::new(),
            perturb: 0.0,
            max_iterations: 60,
            samples: 64,
            fd_step: 1e-6,
            length_monotone: false,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IndexParams {
    pub net: PathBuf,
    pub segments: usize,
    /// Solve for a stationary net before assembling the form.
    pub polish: bool,
    /// Eigenvalues listed in the JSON summary; the CSV holds all of them.
    pub eigenvalues: usize,
}

impl Default for IndexParams {
    fn default() -> Self {
        IndexParams {
            net: PathBuf::new(),
            segments: 256,
            polish: true,
            eigenvalues: 16,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    /// Lowest eigenfields of the index form, extended to the ambient space.
    Eigen,
    /// Constant ambient directions projected to the manifold.
    Translation,
}

/// A stationary net and the family used to certify its instability.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CenterParams {
    pub net: PathBuf,
    pub family: FamilyKind,
    pub k: usize,
    pub directions: Vec<Vec<f64>>,
    pub scale: f64,
    pub eps: f64,
    pub budget: usize,
    pub grid_spacing: f64,
    pub samples_per_arc: usize,
    pub segments: usize,
    /// Reject eigen spans on which the index form is not negative definite.
    pub check_span: bool,
}

impl Default for CenterParams {
    fn default() -> Self {
        CenterParams {
            net: PathBuf::new(),
            family: FamilyKind::Eigen,
            k: 1,
            directions: Vec::new(),
            scale: 0.5,
            eps: 0.05,
            budget: 64,
            grid_spacing: 0.45,
            samples_per_arc: 64,
            segments: 128,
            check_span: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum WeightSpec {
    Constant(f64),
    /// "depth": distance to the stop sphere.
    Named(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    Quadratic,
    /// Mass profile of a net's varifold under its eigen family.
    Mass,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowParams {
    pub profile: ProfileKind,
    pub peak: f64,
    pub center: Vec<f64>,
    /// Isotropic curvature; `curvature` takes precedence.
    pub c0: Option<f64>,
    pub curvature: Option<Vec<Vec<f64>>>,
    pub net: Option<PathBuf>,
    pub k: usize,
    pub scale: f64,
    pub segments: usize,
    pub samples_per_arc: usize,
    pub start: Vec<f64>,
    pub weight: WeightSpec,
    pub dt: f64,
    pub max_steps: usize,
    pub stop_radius: Option<f64>,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            profile: ProfileKind::Quadratic,
            peak: 1.0,
            center: Vec::new(),
            c0: None,
            curvature: None,
            net: None,
            k: 1,
            scale: 0.5,
            segments: 128,
            samples_per_arc: 64,
            start: Vec::new(),
            weight: WeightSpec::Constant(1.0),
            dt: 0.05,
            max_steps: 400,
            stop_radius: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComplexKind {
    HexDisk,
    Interval,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AvoidParams {
    pub complex: ComplexKind,
    /// Rings of the hex disk, or vertices of the interval.
    pub size: usize,
    pub delta: f64,
    /// Targets are matrix · x + offset at each domain vertex x.
    pub matrix: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
    /// CSV with one target per domain vertex; replaces the affine map.
    pub targets: Option<PathBuf>,
    pub max_levels: usize,
    pub candidates: usize,
}

impl Default for AvoidParams {
    fn default() -> Self {
        AvoidParams {
            complex: ComplexKind::HexDisk,
            size: 2,
            delta: 0.5,
            matrix: Vec::new(),
            offset: Vec::new(),
            targets: None,
            max_levels: 10,
            candidates: 64,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatitudeParams {
    pub params: Vec<f64>,
    pub points: usize,
    pub frames: usize,
}

impl Default for LatitudeParams {
    fn default() -> Self {
        LatitudeParams {
            params: vec![0.0; 8],
            points: 64,
            frames: 33,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeformParams {
    /// Sweepout file; without it the latitude family below is used.
    pub sweepout: Option<PathBuf>,
    pub latitude: LatitudeParams,
    pub centers: Vec<CenterParams>,
    pub delta: f64,
    pub max_atoms: usize,
    pub replay_depth: usize,
}

impl Default for DeformParams {
    fn default() -> Self {
        DeformParams {
            sweepout: None,
            latitude: LatitudeParams::default(),
            centers: Vec::new(),
            delta: 0.05,
            max_atoms: 128,
            replay_depth: 6,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WidthParams {
    pub frames: usize,
    pub points: usize,
    pub restarts: usize,
    pub half_width: f64,
    pub initial_step: f64,
    pub min_step: f64,
    pub max_rounds: usize,
    /// Mass band below the sup-mass for critical frames.
    pub band: f64,
    pub cluster_radius: f64,
}

impl Default for WidthParams {
    fn default() -> Self {
        WidthParams {
            frames: 65,
            points: 256,
            restarts: 8,
            half_width: 0.06,
            initial_step: 0.03,
            min_step: 1e-4,
            max_rounds: 200,
            band: 1e-3,
            cluster_radius: 0.5,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FdistParams {
    /// Net files, or varifold CSVs (`.csv`).
    pub a: PathBuf,
    pub b: PathBuf,
    pub samples_per_arc: usize,
    pub max_atoms: usize,
}

impl Default for FdistParams {
    fn default() -> Self {
        FdistParams {
            a: PathBuf::new(),
            b: PathBuf::new(),
            samples_per_arc: 128,
            max_atoms: 256,
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MassParams {
    pub net: Option<PathBuf>,
    pub sweepout: Option<PathBuf>,
}

/// 1-based line and column of a byte offset.
pub fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let col = offset - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

pub fn parse_config(text: &str, path: &Path) -> Result<RunConfig, CliError> {
    toml::from_str(text).map_err(|e| {
        let (line, col) = e.span().map_or((1, 1), |s| line_col(text, s.start));
        CliError::Parse {
            file: path.to_path_buf(),
            line,
            col: Some(col),
            message: e.message().trim().to_string(),
        }
    })
}
