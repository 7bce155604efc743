//! Gaussian-mixture response models, Bayesian target identification and
//! stimulus selection for reactive brain-computer interfaces.

pub mod belief;
pub mod divergence;
pub mod error;
pub mod features;
pub mod gmm;
pub mod policy;
pub mod quadrature;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod transfer;

pub use belief::Belief;
pub use error::{Error, ErrorCategory, Result};
pub use gmm::{ClassModels, Gaussian, Gmm};
pub use policy::PolicyKind;
