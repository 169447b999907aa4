//! Sub-Riemannian geodesics, value functions, conjugate/cut loci and
//! repulsive stabilizing feedback on a single coordinate chart.
//!
//! The pipeline runs bottom-up:
//!
//! * [`chart`] holds orthonormal frames and the built-in systems,
//! * [`extremal`] integrates normal extremals and the exponential map,
//! * [`shooting`] inverts the exponential map to get minimizers and `V = d²`,
//! * [`oracle`] estimates `d` independently by graph search plus direct
//!   transcription, and measures Hamilton-Jacobi residuals,
//! * [`nonsmooth`] probes semiconcavity, limiting subdifferentials and loci,
//! * [`feedback`] builds the stabilizing section `X = -Σ ũ_i f_i` and its
//!   closed-loop trajectories,
//! * [`suite`] collects the property checks with their thresholds,
//! * [`runner`] drives configured experiments and writes artifacts.

pub mod chart;
pub mod error;
pub mod export;
pub mod extremal;
pub mod feedback;
mod linalg;
pub mod nonsmooth;
pub mod oracle;
pub mod reference;
#[cfg(feature = "runner")]
pub mod runner;
pub mod shooting;
pub mod suite;

pub use chart::{builtin_system, ChartBox, CoVector, Frame, Point, SubRiemannianSystem};
pub use error::{Error, Result};
