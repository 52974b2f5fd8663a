//! Generalized ADMM for two-block separable convex problems
//!
//! ```text
//! min f(x) + g(y)  s.t.  Ax + By = b
//! ```
//!
//! with a verifier that re-derives, from a recorded trajectory, the hybrid
//! proximal extragradient (HPE) error conditions and the pointwise and
//! ergodic complexity bounds the iteration satisfies.

pub mod admm;
pub mod certificates;
pub mod checks;
pub mod cli;
pub mod convex;
pub mod error;
pub mod hpe;
pub mod linalg;
pub mod problem;
pub mod verify;

pub use admm::{run, Gadmm, GadmmParams, ProximalMode, Tau, Trajectory};
pub use error::{Error, Result};
pub use problem::{KktPoint, SeparableInstance};
