//! One-atom laser model: semiclassical fixed points, quantum steady state and
//! `g²(τ)`, Monte Carlo photon-count trajectories, and a start–stop
//! correlator for timestamp streams.

pub mod config;
pub mod correlator;
pub mod error;
pub mod fit;
pub mod kernel;
pub mod quantum;
pub mod semiclassical;
pub mod timestamps;
pub mod trajectory;
pub mod velocity;

pub use config::{MicrolaserConfig, PumpConvention};
pub use error::{Error, ErrorKind, Result};
pub use fit::{fit_decay, ExpFit};
pub use kernel::{averaged_beta, beta, injection_rate, interaction_time, EmissionKernel};
pub use timestamps::TimestampStream;
pub use velocity::{VelocityDistribution, VelocityKind};
