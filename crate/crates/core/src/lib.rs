//! Energy landscape mapping with Attraction-Diffusion.
//!
//! The crate maps the macroscopic basin structure of non-convex energy
//! functions: local MCMC kernels run on an energy augmented by a distance
//! penalty toward a target minimum, and success or failure of reaching the
//! target decides whether two minima share a metastable basin.

pub mod adelm;
pub mod attraction_diffusion;
pub mod barriers;
pub mod dg;
pub mod error;
pub mod gwl;
pub mod landscapes;
pub mod minimize;
pub mod oracle;
pub mod samplers;
pub mod seeding;
pub mod state;

pub use error::{ElmError, Result};
pub use landscapes::{DeltaTracker, EnergyModel, SharedModel};
pub use state::{Palette, State, StateKind};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
