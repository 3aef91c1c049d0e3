//! Quantile-function representation of distributions on an interval and the
//! one-dimensional optimal transport primitives built on it.
//!
//! Every distribution is stored as its quantile function on a shared
//! [`LevelGrid`]. Under this representation the 2-Wasserstein distance is the
//! L2 distance between quantile curves and the barycentre is the pointwise
//! mean, so both are exact grid computations.

mod curve;
mod grid;
mod isotonic;
mod transport;

pub use curve::{cdf_eval, empirical_quantile, empirical_quantile_at, Distribution1d, QuantileCurve, StepCdf};
pub use grid::{LevelGrid, DEFAULT_LEVELS};
pub use isotonic::isotonic_project;
pub use transport::{barycentre, mean_curve, pushforward_compose, transport_map, w2_distance};
