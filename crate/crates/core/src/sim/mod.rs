//! Stochastic simulation: a single device with a given effective waiting
//! rate, the full population of devices and channels, and the
//! population-count Markov chain.
//!
//! Every random quantity is drawn from [`rng::stream`]`(seed, r)` for
//! replication `r`, and replications are reduced in index order, so results
//! are bit-identical for any thread-pool width.

mod convergence;
mod density;
mod device;
mod population;
pub mod rng;
mod stats;

pub use convergence::{estimate_rate_of_convergence, ConvergenceRow};
pub use density::{simulate_density, DEFAULT_SAMPLE_EVERY};
pub use device::{replicate_device, simulate_device, simulate_device_with_records, DeviceSummary};
pub use population::{
    replicate_population, simulate_population, PopulationConfig, PopulationRun, PopulationSnapshot,
    PopulationSummary, SchemeSummary,
};
pub use stats::{mean_and_stderr, renewal_aoi, AoiAccumulator, AoiStats, DeliveryRecord};

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::meanfield::Trajectory;
use crate::model::MeanFieldState;

/// Run `f` once per stream `first_stream..first_stream + count` of `seed`
/// on the current rayon pool and return the results in stream order.
pub fn replicate<T, F>(seed: u64, first_stream: u64, count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> T + Sync,
{
    (0..count as u64)
        .into_par_iter()
        .map(|r| f(&mut rng::stream(seed, first_stream + r)))
        .collect()
}

/// Pointwise mean of trajectories sampled on a common grid.
pub fn mean_trajectory(trajectories: &[Trajectory]) -> Result<Trajectory> {
    let first = trajectories.first().ok_or_else(|| Error::domain("no trajectories to average"))?;
    if trajectories.iter().any(|t| t.len() != first.len()) {
        return Err(Error::domain("trajectories are sampled on different grids"));
    }
    let n = trajectories.len() as f64;
    let samples = (0..first.len())
        .map(|i| {
            let mut sum = [0.0; 3];
            for t in trajectories {
                let x = t.samples[i].1.to_array();
                for q in 0..3 {
                    sum[q] += x[q];
                }
            }
            (first.samples[i].0, MeanFieldState { x_idle: sum[0] / n, x_wait: sum[1] / n, x_service: sum[2] / n })
        })
        .collect();
    Ok(Trajectory { samples, step: first.step })
}
