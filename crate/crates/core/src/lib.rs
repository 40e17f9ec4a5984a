//! Finite-dimensional reproduction of dissipative dynamics on sampled attractors.
//!
//! The pipeline samples an attractor of a lifted system `u' = G(u)`, estimates
//! its Assouad dimension, embeds it into `R^m` with a random linear map, builds
//! a log-Lipschitz extension of the pushed-forward field, and glues it to a
//! Lyapunov-style inward field so that the embedded attractor becomes globally
//! attracting.

pub mod config;
pub mod dimension;
pub mod embedding;
pub mod error;
pub mod extension;
pub mod geometry;
pub mod harness;
pub mod lyapunov;
pub mod ode;
pub mod pipeline;
pub mod report;
pub mod systems;

pub use error::{Error, Result};
pub use geometry::PointCloud;
