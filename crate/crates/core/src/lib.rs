//! Numerical laboratory for geodesic dynamics, X-ray transforms and the
//! indicial calculus on hyperbolic surfaces with cusps.
//!
//! The modules build on each other bottom-up:
//! [`hyperbolic`] and [`surface`] give the constant-curvature background,
//! [`cusp`] the exact flow in the model cusp, [`tensor`] symmetric tensors and
//! their differential operators, [`geodesic`] closed geodesics of perturbed
//! metrics, [`xray`] the X-ray transform, [`indicial`] the indicial
//! computations and [`livsic`] the approximate cohomological decomposition.
//! [`config`] and [`runner`] drive everything from the command line.

// `!(x <= tol)` is used on purpose so NaN fails checks
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod cusp;
pub mod error;
pub mod geodesic;
pub mod hyperbolic;
pub mod indicial;
pub mod livsic;
pub mod metric;
pub mod ode;
pub mod output;
pub mod quad;
pub mod runner;
pub mod special;
pub mod stats;
pub mod surface;
pub mod tensor;
pub mod xray;

pub use error::{LabError, Result};
pub use hyperbolic::{GroupPresentation, HomotopyClass, Mobius, Phase, Point};
