use crate::error::{Error, Result};

/// One delivered update of one device.
///
/// `generation` and `delivery` are `t_j` and `t'_j`; the remaining fields
/// are measured from the previous delivered update of the same device (a
/// virtual update generated and delivered at time 0 for the first one).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeliveryRecord {
    pub generation: f64,
    pub delivery: f64,
    /// `T_j = t'_j - t_j`.
    pub service_time: f64,
    /// `Y_j = t_j - t_{j-1}`.
    pub interarrival: f64,
    /// `D_j = t'_j - t'_{j-1}`.
    pub interdeparture: f64,
    /// AoI just before the delivery; stored as `Y_j + T_j`.
    pub peak: f64,
}

impl DeliveryRecord {
    pub(crate) fn new(prev_generation: f64, prev_delivery: f64, generation: f64, delivery: f64) -> DeliveryRecord {
        let service_time = delivery - generation;
        let interarrival = generation - prev_generation;
        DeliveryRecord {
            generation,
            delivery,
            service_time,
            interarrival,
            interdeparture: delivery - prev_delivery,
            peak: interarrival + service_time,
        }
    }
}

/// Additive AoI and occupancy totals. Totals from several devices or
/// replications are combined with [`AoiAccumulator::merge`], always in a
/// fixed order.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AoiAccumulator {
    /// Integral of the AoI over the observation window, summed over devices.
    pub area: f64,
    /// Observation time summed over devices.
    pub span: f64,
    pub deliveries: u64,
    pub sum_peak: f64,
    pub sum_service: f64,
    pub sum_interdeparture: f64,
    pub sum_interdeparture_sq: f64,
    pub time_wait: f64,
    pub time_service: f64,
    /// Sensing attempts (backoff expiries).
    pub attempts: u64,
    /// Attempts that found a free channel.
    pub successes: u64,
}

impl AoiAccumulator {
    /// Integrate the AoI `t - last_generation` over `[from, to]`.
    #[inline]
    pub(crate) fn add_area(&mut self, from: f64, to: f64, last_generation: f64) {
        if to > from {
            self.area += (to - from) * (0.5 * (from + to) - last_generation);
        }
    }

    #[inline]
    pub(crate) fn add_delivery(&mut self, rec: &DeliveryRecord) {
        self.deliveries += 1;
        self.sum_peak += rec.peak;
        self.sum_service += rec.service_time;
        self.sum_interdeparture += rec.interdeparture;
        self.sum_interdeparture_sq += rec.interdeparture * rec.interdeparture;
    }

    pub fn merge(&mut self, other: &AoiAccumulator) {
        self.area += other.area;
        self.span += other.span;
        self.deliveries += other.deliveries;
        self.sum_peak += other.sum_peak;
        self.sum_service += other.sum_service;
        self.sum_interdeparture += other.sum_interdeparture;
        self.sum_interdeparture_sq += other.sum_interdeparture_sq;
        self.time_wait += other.time_wait;
        self.time_service += other.time_service;
        self.attempts += other.attempts;
        self.successes += other.successes;
    }

    pub fn finish(&self) -> Result<AoiStats> {
        if self.deliveries == 0 || !(self.span > 0.0) {
            return Err(Error::domain("no update was delivered inside the observation window"));
        }
        let n = self.deliveries as f64;
        Ok(AoiStats {
            time_avg_aoi: self.area / self.span,
            mean_peak_aoi: self.sum_peak / n,
            delivered_count: self.deliveries,
            mean_service_time: self.sum_service / n,
            mean_interdeparture: self.sum_interdeparture / n,
            second_moment_interdeparture: self.sum_interdeparture_sq / n,
            observation_span: self.span,
            wait_fraction: self.time_wait / self.span,
            service_fraction: self.time_service / self.span,
            attempt_rate: self.attempts as f64 / self.span,
            k_measured: if self.time_wait > 0.0 { self.successes as f64 / self.time_wait } else { f64::NAN },
        })
    }
}

/// Empirical AoI statistics of a run, per device.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AoiStats {
    pub time_avg_aoi: f64,
    pub mean_peak_aoi: f64,
    pub delivered_count: u64,
    pub mean_service_time: f64,
    pub mean_interdeparture: f64,
    pub second_moment_interdeparture: f64,
    /// Observation time, summed over devices for pooled statistics.
    pub observation_span: f64,
    /// Fraction of observed time spent waiting.
    pub wait_fraction: f64,
    /// Fraction of observed time spent in service.
    pub service_fraction: f64,
    /// Sensing attempts per device per unit time.
    pub attempt_rate: f64,
    /// Successful attempts per unit of waiting time: the effective rate `k`.
    pub k_measured: f64,
}

impl AoiStats {
    /// Energy per unit time with sensing charged per unit of waiting time.
    pub fn energy_rate(&self, c_sense: f64, c_transmit: f64) -> f64 {
        self.wait_fraction * c_sense + self.service_fraction * c_transmit
    }

    /// Energy per unit time with sensing charged per attempt.
    pub fn budget_energy_rate(&self, c_sense: f64, c_transmit: f64) -> f64 {
        self.attempt_rate * c_sense + self.service_fraction * c_transmit
    }
}

/// Renewal-reward AoI from delivery records:
/// `(mean(Y_j T_j) + mean(Y_j^2)/2) / mean(Y_j)`.
pub fn renewal_aoi(records: &[DeliveryRecord]) -> f64 {
    let n = records.len() as f64;
    let (yt, yy, y) = records.iter().fold((0.0, 0.0, 0.0), |(a, b, c), r| {
        (a + r.interarrival * r.service_time, b + r.interarrival * r.interarrival, c + r.interarrival)
    });
    (yt / n + 0.5 * yy / n) / (y / n)
}

/// Mean and standard error of a sample.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
