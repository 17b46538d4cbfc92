use rand::Rng;

use super::population::initial_counts;
use super::rng::exp;
use crate::error::{Error, Result};
use crate::meanfield::Trajectory;
use crate::model::{MeanFieldState, SystemParams};

/// Default sampling grid of [`simulate_density`].
pub const DEFAULT_SAMPLE_EVERY: f64 = 0.1;

/// Exact simulation of the population-count chain with jumps
/// `idle -> wait` at rate `lambda n_I`, `wait -> service` at rate
/// `w (1 - n_S/M) n_W` and `service -> idle` at rate `mu n_S`.
///
/// Fractions are recorded on the grid `0, every, 2 every, ...` up to
/// `horizon`.
pub fn simulate_density<R: Rng + ?Sized>(
    params: &SystemParams,
    initial: &MeanFieldState,
    horizon: f64,
    every: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    let params = params.validate()?;
    let (n, m) = params
        .population()
        .ok_or_else(|| Error::domain("the density simulation needs n_devices and m_channels"))?;
    let w = params
        .w
        .value()
        .ok_or_else(|| Error::domain("the density simulation needs a finite waiting rate"))?;
    if !(horizon.is_finite() && horizon > 0.0 && every.is_finite() && every > 0.0) {
        return Err(Error::domain("horizon and sampling interval must be > 0"));
    }
    let SystemParams { lambda, mu, .. } = params;
    let [mut n_i, mut n_w, mut n_s] = initial_counts(initial, n, m).map(f64::from);
    let (nf, mf) = (n as f64, m as f64);

    let n_samples = (horizon / every).floor() as usize + 1;
    let mut samples = Vec::with_capacity(n_samples);
    let mut t = 0.0;
    for i in 0..n_samples {
        let ts = i as f64 * every;
        loop {
            let r_iw = lambda * n_i;
            let r_ws = w * (1.0 - n_s / mf) * n_w;
            let r_si = mu * n_s;
            let total = r_iw + r_ws + r_si;
            let dt = exp(rng, total);
            if t + dt > ts {
                // Memoryless: the residual holding time is resampled next round.
                t = ts;
                break;
            }
            t += dt;
            let u = rng.random::<f64>() * total;
            if u < r_iw {
                n_i -= 1.0;
                n_w += 1.0;
            } else if u < r_iw + r_ws {
                n_w -= 1.0;
                n_s += 1.0;
            } else {
                n_s -= 1.0;
                n_i += 1.0;
            }
            debug_assert!(n_i + n_w + n_s == nf && n_s <= mf);
        }
        samples.push((ts, MeanFieldState { x_idle: n_i / nf, x_wait: n_w / nf, x_service: n_s / nf }));
    }
    Ok(Trajectory { samples, step: every })
}
