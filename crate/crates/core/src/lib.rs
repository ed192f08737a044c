//! Projection-based reduced-order models for parametric nonlinear finite
//! element problems: POD trial bases, Galerkin, least-squares and invariant
//! Petrov-Galerkin projections, and empirical cubature hyper-reduction.

pub mod basis;
pub mod ecm;
pub mod error;
pub mod fom;
pub mod hrom;
pub mod linalg;
pub mod metrics;
pub mod rom;
pub mod strategy;
pub mod testbed;

pub use error::{Error, Result};
