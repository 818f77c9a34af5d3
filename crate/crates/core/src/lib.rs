//! Direct collocation with error-certified mesh refinement, and event- and
//! self-triggered MPC built on the resulting error certificates.

pub mod collocation;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod mesh;
pub mod nlp;
pub mod norm;
pub mod ocp;
pub mod output;
pub mod quadrature;
pub mod refinement;
pub mod sim;
pub mod tightening;
pub mod triggering;

pub use collocation::{ErrorCertificate, PiecewiseTrajectory, Scheme};
pub use dynamics::{builtin_linear_model, builtin_two_link_arm, DynamicsModel, NoiseBounds};
pub use error::{Error, Result};
pub use mesh::Mesh;
pub use norm::NormConfig;
pub use ocp::BolzaOcp;
pub use tightening::BoxSet;
