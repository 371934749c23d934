//! Connection, curvature and angle machinery for Finsler spaces built over a
//! Riemannian base, with the Finsleroid family as the worked example.

pub mod angle;
pub mod conformal;
pub mod connection;
pub mod curvature;
pub mod curve;
pub mod error;
pub mod fd;
pub mod finsler;
pub mod finsleroid;
pub mod finsleroid_checks;
pub mod fixtures;
pub mod jet;
pub mod local;
pub mod riemann;
pub mod scalar;
pub mod tensor;
pub mod verify;

pub use error::{GeomError, Result};
pub use finsler::{FinslerSample, FinslerSpace};
pub use finsleroid::Finsleroid;
pub use riemann::RiemannField;
