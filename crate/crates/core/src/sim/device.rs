use rand::Rng;

use super::rng::exp;
use super::replicate;
use super::stats::{mean_and_stderr, AoiAccumulator, AoiStats, DeliveryRecord};
use crate::error::{Error, Result};
use crate::model::{Rate, Scheme};

#[derive(Clone, Copy)]
enum Phase {
    Idle,
    /// Holds the generation time of the waiting update and the backoff end.
    Waiting { generation: f64, backoff_end: f64 },
    /// Holds the generation time of the update in service and its end.
    Serving { generation: f64, service_end: f64 },
}

/// Simulate one device in isolation with effective waiting rate `k` until
/// exactly `n_arrivals` updates have been generated.
///
/// The AoI starts from a virtual update generated and delivered at time 0
/// and is integrated up to the last arrival. Fresh arrivals replace the
/// waiting update; during service they replace the update in service only
/// with preemption. Replacements never restart a clock.
pub fn simulate_device<R: Rng + ?Sized>(
    scheme: Scheme,
    lambda: f64,
    mu: f64,
    k: Rate,
    n_arrivals: u64,
    rng: &mut R,
) -> Result<AoiStats> {
    run(scheme, lambda, mu, k, n_arrivals, rng, None)?.finish()
}

/// [`simulate_device`] that also returns every delivery.
pub fn simulate_device_with_records<R: Rng + ?Sized>(
    scheme: Scheme,
    lambda: f64,
    mu: f64,
    k: Rate,
    n_arrivals: u64,
    rng: &mut R,
) -> Result<(AoiStats, Vec<DeliveryRecord>)> {
    let mut records = Vec::new();
    let stats = run(scheme, lambda, mu, k, n_arrivals, rng, Some(&mut records))?.finish()?;
    Ok((stats, records))
}

/// Pooled result of independent device runs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeviceSummary {
    pub replications: usize,
    /// Statistics pooled over all runs.
    pub pooled: AoiStats,
    pub avg_aoi_stderr: f64,
    pub peak_aoi_stderr: f64,
}

/// `replications` runs of [`simulate_device`] on streams
/// `first_stream..` of `seed`, pooled in stream order.
#[allow(clippy::too_many_arguments)]
pub fn replicate_device(
    scheme: Scheme,
    lambda: f64,
    mu: f64,
    k: Rate,
    n_arrivals: u64,
    replications: usize,
    seed: u64,
    first_stream: u64,
) -> Result<DeviceSummary> {
    if replications == 0 {
        return Err(Error::domain("replications must be >= 1"));
    }
    let accs = replicate(seed, first_stream, replications, |rng| run(scheme, lambda, mu, k, n_arrivals, rng, None))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut pooled = AoiAccumulator::default();
    let mut avgs = Vec::with_capacity(replications);
    let mut peaks = Vec::with_capacity(replications);
    for a in &accs {
        pooled.merge(a);
        let s = a.finish()?;
        avgs.push(s.time_avg_aoi);
        peaks.push(s.mean_peak_aoi);
    }
    Ok(DeviceSummary {
        replications,
        pooled: pooled.finish()?,
        avg_aoi_stderr: mean_and_stderr(&avgs).1,
        peak_aoi_stderr: mean_and_stderr(&peaks).1,
    })
}

fn run<R: Rng + ?Sized>(
    scheme: Scheme,
    lambda: f64,
    mu: f64,
    k: Rate,
    n_arrivals: u64,
    rng: &mut R,
    mut records: Option<&mut Vec<DeliveryRecord>>,
) -> Result<AoiAccumulator> {
    let k = k
        .value()
        .ok_or_else(|| Error::domain("the device simulation needs a finite k; use the closed-form limits for k = inf"))?;
    if !(lambda.is_finite() && lambda > 0.0 && mu.is_finite() && mu > 0.0) {
        return Err(Error::domain("lambda and mu must be > 0"));
    }
    if n_arrivals == 0 {
        return Err(Error::domain("n_arrivals must be >= 1"));
    }

    let mut acc = AoiAccumulator::default();
    let mut t = 0.0;
    let mut phase = Phase::Idle;
    let mut last_generation = 0.0;
    let mut last_delivery = 0.0;
    let mut next_arrival = exp(rng, lambda);
    let mut arrivals = 0u64;

    loop {
        let state_end = match phase {
            Phase::Idle => f64::INFINITY,
            Phase::Waiting { backoff_end, .. } => backoff_end,
            Phase::Serving { service_end, .. } => service_end,
        };
        let now = next_arrival.min(state_end);
        match phase {
            Phase::Waiting { .. } => acc.time_wait += now - t,
            Phase::Serving { .. } => acc.time_service += now - t,
            Phase::Idle => {}
        }
        t = now;

        if next_arrival <= state_end {
            arrivals += 1;
            if arrivals == n_arrivals {
                break;
            }
            next_arrival = t + exp(rng, lambda);
            phase = match phase {
                Phase::Idle => Phase::Waiting { generation: t, backoff_end: t + exp(rng, k) },
                Phase::Waiting { backoff_end, .. } => Phase::Waiting { generation: t, backoff_end },
                Phase::Serving { service_end, .. } if scheme == Scheme::WithPreemption => {
                    Phase::Serving { generation: t, service_end }
                }
                serving => serving,
            };
            continue;
        }

        phase = match phase {
            Phase::Waiting { generation, .. } => {
                acc.attempts += 1;
                acc.successes += 1;
                Phase::Serving { generation, service_end: t + exp(rng, mu) }
            }
            Phase::Serving { generation, .. } => {
                let rec = DeliveryRecord::new(last_generation, last_delivery, generation, t);
                acc.add_area(last_delivery, t, last_generation);
                acc.add_delivery(&rec);
                if let Some(r) = records.as_deref_mut() {
                    r.push(rec);
                }
                last_generation = generation;
                last_delivery = t;
                Phase::Idle
            }
            Phase::Idle => unreachable!("an idle device has no pending state event"),
        };
    }

    acc.add_area(last_delivery, t, last_generation);
    acc.span = t;
    Ok(acc)
}
