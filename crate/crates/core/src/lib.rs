//! Age of information for CSMA-style random access in dense IoT deployments.
//!
//! Each device alternates between *idle*, *waiting* (sensing for a free
//! channel) and *in service*. In the large-population limit the fraction of
//! devices in each state follows a deterministic ODE; every device then
//! chooses its waiting rate against the resulting channel occupancy, which
//! makes the choice of rate a mean-field game.
//!
//! ```
//! use csma_aoi::{analytic, meanfield, Rate, Scheme, SystemParams};
//!
//! let params = SystemParams::new(0.8, 1.0, 2.0).with_w(Rate::Finite(1.0));
//! let k = meanfield::equilibrium_effective_rate(&params);
//! let wp = analytic::aoi(Scheme::WithPreemption, params.lambda, params.mu, k).unwrap();
//! assert!((wp.avg_aoi - 3.811444).abs() < 1e-5);
//! ```

pub mod analytic;
mod error;
pub mod experiments;
pub mod game;
pub mod meanfield;
pub mod model;
pub mod sim;

pub use analytic::AoiPair;
pub use error::{Error, Result};
pub use meanfield::Trajectory;
pub use model::{MeanFieldState, Rate, Scheme, SystemParams};
