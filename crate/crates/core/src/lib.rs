//! Conformal metric-measure geometry on flat tori, Euclidean boxes and round
//! spheres: weights `w = e^{nf}`, conformal distances, curvature of
//! `g_f = e^{2f} g₀`, A∞ diagnostics and grid Schrödinger solvers.

pub mod curvature;
pub mod diagnostics;
pub mod error;
pub mod manifold;
pub mod metric;
pub mod polar;
pub mod quad;
pub mod schrodinger;
pub mod weight;

pub use error::{Error, ErrorKind, Result};
pub use manifold::{BallSpec, Estimate, Manifold, Point, PointSet};
pub use weight::{GridField, Interpolation, Jet, WeightField};
