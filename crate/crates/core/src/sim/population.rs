use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;

use super::rng::exp;
use super::stats::{mean_and_stderr, AoiAccumulator, AoiStats, DeliveryRecord};
use super::{mean_trajectory, replicate};
use crate::error::{Error, Result};
use crate::meanfield::Trajectory;
use crate::model::{MeanFieldState, Scheme, SystemParams};

/// Counts of idle, waiting and serving devices at time `t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PopulationSnapshot {
    pub t: f64,
    pub counts: [u32; 3],
}

impl PopulationSnapshot {
    pub fn fractions(&self) -> MeanFieldState {
        let n = self.counts.iter().sum::<u32>() as f64;
        MeanFieldState {
            x_idle: self.counts[0] as f64 / n,
            x_wait: self.counts[1] as f64 / n,
            x_service: self.counts[2] as f64 / n,
        }
    }
}

/// Observation settings of a population run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PopulationConfig {
    pub horizon: f64,
    /// Statistics cover `[warmup, horizon]`.
    pub warmup: f64,
    /// Record the state fractions on this grid when set.
    pub sample_every: Option<f64>,
    /// Initial fractions; all idle when unset.
    pub initial: Option<MeanFieldState>,
}

impl PopulationConfig {
    /// Warm-up of half the horizon, no sampling, all devices idle at 0.
    pub fn new(horizon: f64) -> PopulationConfig {
        PopulationConfig { horizon, warmup: horizon / 2.0, sample_every: None, initial: None }
    }

    pub fn with_warmup(mut self, warmup: f64) -> PopulationConfig {
        self.warmup = warmup;
        self
    }

    pub fn with_sampling(mut self, every: f64) -> PopulationConfig {
        self.sample_every = Some(every);
        self
    }

    pub fn with_initial(mut self, initial: MeanFieldState) -> PopulationConfig {
        self.initial = Some(initial);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::domain("horizon must be > 0"));
        }
        if !(self.warmup >= 0.0 && self.warmup < self.horizon) {
            return Err(Error::domain("warmup must lie in [0, horizon)"));
        }
        if let Some(dt) = self.sample_every {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::domain("sampling interval must be > 0"));
            }
        }
        Ok(())
    }
}

/// Outcome of one population run. Both schemes are observed on the same
/// sample path: the occupancy process does not depend on the scheme, only
/// the generation time of the update in service does.
#[derive(Clone, Debug, PartialEq)]
pub struct PopulationRun {
    pub n_devices: u32,
    pub m_channels: u32,
    pub wp: AoiAccumulator,
    pub wop: AoiAccumulator,
    /// Time-averaged fractions over the observation window.
    pub stationary: MeanFieldState,
    pub snapshots: Vec<PopulationSnapshot>,
}

impl PopulationRun {
    pub fn accumulator(&self, scheme: Scheme) -> &AoiAccumulator {
        match scheme {
            Scheme::WithPreemption => &self.wp,
            Scheme::WithoutPreemption => &self.wop,
        }
    }

    pub fn stats(&self, scheme: Scheme) -> Result<AoiStats> {
        self.accumulator(scheme).finish()
    }

    pub fn trajectory(&self) -> Trajectory {
        let step = match self.snapshots.as_slice() {
            [a, b, ..] => b.t - a.t,
            _ => 0.0,
        };
        Trajectory { samples: self.snapshots.iter().map(|s| (s.t, s.fractions())).collect(), step }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Arrival,
    /// Backoff expiry or service completion, depending on the phase.
    Phase,
}

#[derive(Clone, Copy)]
struct Event {
    t: f64,
    device: u32,
    kind: Kind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Event) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Event) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed so that BinaryHeap pops the earliest event.
    fn cmp(&self, other: &Event) -> Ordering {
        other
            .t
            .total_cmp(&self.t)
            .then_with(|| other.device.cmp(&self.device))
            .then_with(|| (other.kind as u8).cmp(&(self.kind as u8)))
    }
}

const IDLE: u8 = 0;
const WAIT: u8 = 1;
const SERVE: u8 = 2;

#[derive(Clone, Copy)]
struct Device {
    phase: u8,
    gen_wait: f64,
    /// Generation time in service, per scheme (with, without preemption).
    gen_serve: [f64; 2],
    last_gen: [f64; 2],
    last_delivery: f64,
}

pub(crate) fn initial_counts(x: &MeanFieldState, n: u32, m: u32) -> [u32; 3] {
    let n_s = ((x.x_service * n as f64).round() as u32).min(m).min(n);
    // Service mass beyond capacity is placed in the waiting state.
    let n_w = (((x.x_wait + x.x_service) * n as f64).round() as u32).saturating_sub(n_s).min(n - n_s);
    [n - n_s - n_w, n_w, n_s]
}

/// Event-driven simulation of `N` devices sharing `M` channels.
///
/// Each waiting device carries an `Exp(w)` backoff clock; on expiry it
/// senses one uniformly chosen channel and either re-arms the clock (busy)
/// or occupies it for an `Exp(mu)` transmission (free). Every device has
/// an `Exp(lambda)` arrival clock. Statistics cover `[warmup, horizon]`.
pub fn simulate_population<R: Rng + ?Sized>(
    params: &SystemParams,
    config: &PopulationConfig,
    rng: &mut R,
) -> Result<PopulationRun> {
    let params = params.validate()?;
    config.validate()?;
    let (n, m) = params
        .population()
        .ok_or_else(|| Error::domain("the population simulation needs n_devices and m_channels"))?;
    let w = params
        .w
        .value()
        .ok_or_else(|| Error::domain("the population simulation needs a finite waiting rate"))?;
    let SystemParams { lambda, mu, .. } = params;
    let PopulationConfig { horizon, warmup, .. } = *config;

    let mut counts = config.initial.map_or([n, 0, 0], |x| initial_counts(&x, n, m));
    let mut devices = Vec::with_capacity(n as usize);
    let mut heap = BinaryHeap::with_capacity(2 * n as usize);
    for d in 0..n {
        let phase = if d < counts[2] {
            SERVE
        } else if d < counts[2] + counts[1] {
            WAIT
        } else {
            IDLE
        };
        devices.push(Device { phase, gen_wait: 0.0, gen_serve: [0.0; 2], last_gen: [0.0; 2], last_delivery: 0.0 });
        heap.push(Event { t: exp(rng, lambda), device: d, kind: Kind::Arrival });
        match phase {
            WAIT => heap.push(Event { t: exp(rng, w), device: d, kind: Kind::Phase }),
            SERVE => heap.push(Event { t: exp(rng, mu), device: d, kind: Kind::Phase }),
            _ => {}
        }
    }

    let mut acc = [AoiAccumulator::default(); 2];
    let mut occupancy = [0.0f64; 3];
    let mut attempts = 0u64;
    let mut successes = 0u64;
    let mut snapshots = Vec::new();
    let mut next_sample = config.sample_every.map(|_| 0.0);
    let mut sample_index = 0u64;
    let mut t_prev = 0.0f64;

    while let Some(ev) = heap.pop() {
        let t = ev.t;
        if let (Some(dt), Some(ts)) = (config.sample_every, next_sample.as_mut()) {
            while *ts <= t.min(horizon) {
                snapshots.push(PopulationSnapshot { t: *ts, counts });
                sample_index += 1;
                *ts = sample_index as f64 * dt;
            }
        }
        let from = t_prev.max(warmup);
        let to = t.min(horizon);
        if to > from {
            for q in 0..3 {
                occupancy[q] += counts[q] as f64 * (to - from);
            }
        }
        if t > horizon {
            break;
        }
        t_prev = t;
        let observed = t >= warmup;
        let dev = &mut devices[ev.device as usize];

        match (ev.kind, dev.phase) {
            (Kind::Arrival, phase) => {
                heap.push(Event { t: t + exp(rng, lambda), device: ev.device, kind: Kind::Arrival });
                match phase {
                    IDLE => {
                        dev.phase = WAIT;
                        dev.gen_wait = t;
                        counts[0] -= 1;
                        counts[1] += 1;
                        heap.push(Event { t: t + exp(rng, w), device: ev.device, kind: Kind::Phase });
                    }
                    WAIT => dev.gen_wait = t,
                    _ => dev.gen_serve[0] = t,
                }
            }
            (Kind::Phase, WAIT) => {
                if observed {
                    attempts += 1;
                }
                if rng.random_range(0..m) < counts[2] {
                    heap.push(Event { t: t + exp(rng, w), device: ev.device, kind: Kind::Phase });
                } else {
                    if observed {
                        successes += 1;
                    }
                    dev.phase = SERVE;
                    dev.gen_serve = [dev.gen_wait; 2];
                    counts[1] -= 1;
                    counts[2] += 1;
                    assert!(counts[2] <= m, "more devices in service than channels");
                    heap.push(Event { t: t + exp(rng, mu), device: ev.device, kind: Kind::Phase });
                }
            }
            (Kind::Phase, SERVE) => {
                for s in 0..2 {
                    if observed {
                        let rec = DeliveryRecord::new(dev.last_gen[s], dev.last_delivery, dev.gen_serve[s], t);
                        acc[s].add_area(dev.last_delivery.max(warmup), t, dev.last_gen[s]);
                        acc[s].add_delivery(&rec);
                    }
                    dev.last_gen[s] = dev.gen_serve[s];
                }
                dev.last_delivery = t;
                dev.phase = IDLE;
                counts[2] -= 1;
                counts[0] += 1;
            }
            (Kind::Phase, _) => unreachable!("an idle device has no pending phase event"),
        }
    }

    let window = horizon - warmup;
    for dev in &devices {
        for s in 0..2 {
            acc[s].add_area(dev.last_delivery.max(warmup), horizon, dev.last_gen[s]);
        }
    }
    for a in &mut acc {
        a.span = n as f64 * window;
        a.time_wait = occupancy[1];
        a.time_service = occupancy[2];
        a.attempts = attempts;
        a.successes = successes;
    }
    let total = n as f64 * window;
    Ok(PopulationRun {
        n_devices: n,
        m_channels: m,
        wp: acc[0],
        wop: acc[1],
        stationary: MeanFieldState {
            x_idle: occupancy[0] / total,
            x_wait: occupancy[1] / total,
            x_service: occupancy[2] / total,
        },
        snapshots,
    })
}

/// Per-scheme summary across replications.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemeSummary {
    /// Statistics pooled over all devices and replications.
    pub pooled: AoiStats,
    /// Standard error of the per-replication average AoI.
    pub avg_aoi_stderr: f64,
    pub peak_aoi_stderr: f64,
}

/// Replicated population runs.
#[derive(Clone, Debug, PartialEq)]
pub struct PopulationSummary {
    pub replications: usize,
    pub wp: SchemeSummary,
    pub wop: SchemeSummary,
    pub stationary: MeanFieldState,
    pub stationary_stderr: [f64; 3],
    pub k_measured: f64,
    pub k_stderr: f64,
    /// Replication-mean trajectory when sampling was requested.
    pub mean_trajectory: Option<Trajectory>,
    /// Trajectory of the first replication when sampling was requested.
    pub first_trajectory: Option<Trajectory>,
}

impl PopulationSummary {
    pub fn scheme(&self, scheme: Scheme) -> &SchemeSummary {
        match scheme {
            Scheme::WithPreemption => &self.wp,
            Scheme::WithoutPreemption => &self.wop,
        }
    }
}

/// Run `replications` independent population runs on streams
/// `first_stream..first_stream + replications` of `seed` and summarise
/// them. The summary is identical for any thread-pool width.
pub fn replicate_population(
    params: &SystemParams,
    config: &PopulationConfig,
    replications: usize,
    seed: u64,
    first_stream: u64,
) -> Result<PopulationSummary> {
    if replications == 0 {
        return Err(Error::domain("replications must be >= 1"));
    }
    let runs = replicate(seed, first_stream, replications, |rng| simulate_population(params, config, rng))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    summarize(&runs)
}

pub(crate) fn summarize(runs: &[PopulationRun]) -> Result<PopulationSummary> {
    let scheme = |s: Scheme| -> Result<SchemeSummary> {
        let mut pooled = AoiAccumulator::default();
        let mut avgs = Vec::with_capacity(runs.len());
        let mut peaks = Vec::with_capacity(runs.len());
        for r in runs {
            let a = r.accumulator(s);
            pooled.merge(a);
            let st = a.finish()?;
            avgs.push(st.time_avg_aoi);
            peaks.push(st.mean_peak_aoi);
        }
        Ok(SchemeSummary {
            pooled: pooled.finish()?,
            avg_aoi_stderr: mean_and_stderr(&avgs).1,
            peak_aoi_stderr: mean_and_stderr(&peaks).1,
        })
    };
    let component = |f: fn(&MeanFieldState) -> f64| mean_and_stderr(&runs.iter().map(|r| f(&r.stationary)).collect::<Vec<_>>());
    let (xi, si) = component(|x| x.x_idle);
    let (xw, sw) = component(|x| x.x_wait);
    let (xs, ss) = component(|x| x.x_service);
    let ks: Vec<f64> = runs.iter().map(|r| r.wp.successes as f64 / r.wp.time_wait).collect();
    let (k, k_se) = mean_and_stderr(&ks);
    let sampled = runs.first().is_some_and(|r| !r.snapshots.is_empty());
    let (mean_traj, first_traj) = if sampled {
        let trajs: Vec<Trajectory> = runs.iter().map(|r| r.trajectory()).collect();
        (Some(mean_trajectory(&trajs)?), trajs.into_iter().next())
    } else {
        (None, None)
    };
    Ok(PopulationSummary {
        replications: runs.len(),
        wp: scheme(Scheme::WithPreemption)?,
        wop: scheme(Scheme::WithoutPreemption)?,
        stationary: MeanFieldState { x_idle: xi, x_wait: xw, x_service: xs },
        stationary_stderr: [si, sw, ss],
        k_measured: k,
        k_stderr: k_se,
        mean_trajectory: mean_traj,
        first_trajectory: first_traj,
    })
}
