//! Numerical laboratory for stationary geodesic nets and the min-max index bound.
//!
//! The crate builds stationary geodesic nets on model manifolds, computes their Morse
//! index from the second variation of length, certifies k-instability through
//! diffeomorphism families acting on discrete varifolds, and runs finite versions of
//! the gradient-flow and skeletal deformation arguments on sweepouts of 1-cycles.

pub mod deform;
pub mod error;
pub mod index;
pub mod instability;
pub mod manifold;
pub mod minmax;
pub mod net;
pub mod varifold;

pub use error::{GeonetError, Result};
pub use manifold::{
    geodesic_bvp, geodesic_shoot, GeodesicSegment, ManifoldModel, ModelKind, PointTangent,
    Tolerances, Vector,
};
pub use net::{GeodesicNet, WeightedMultigraph};
