//! Realizability-based interactive learning by sampling the version space.
//!
//! The crate picks queries for best-arm identification, loss minimization, active
//! classification and continuous-output search over function classes given as convex
//! parameter bodies (or finite families). Probabilities over the version space are
//! estimated by hit-and-run sampling instead of enumeration.

pub mod baselines;
pub mod dims;
pub mod error;
pub mod function_classes;
pub mod geometry;
pub mod grails;
pub mod linalg;
pub mod sampler;
pub mod version_space;

pub use error::{Error, Result};
