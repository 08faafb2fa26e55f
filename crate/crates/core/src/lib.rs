//! Kinetic Langevin Monte Carlo for smooth strongly log-concave targets.

pub mod coupling;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod metrics;
pub mod oracle;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod target;
pub mod tuning;

pub use error::{Error, Result};
pub use kernel::KernelCoefficients;
pub use sampler::{Algorithm, KineticState, SamplerConfig};
pub use target::{DiagonalQuadraticTarget, LogisticRegressionTarget, TargetModel};
