//! Closed-form average AoI, average peak AoI and energy cost of a single
//! device whose waiting period ends at the effective rate `k`.
//!
//! For each delivered update the device passes through an idle period
//! `Exp(lambda)`, a waiting period `Exp(k)` and a service period `Exp(mu)`,
//! so the inter-departure time `D` has
//!
//! ```text
//! E[D]   = 1/lambda + 1/k + 1/mu
//! E[D^2] = 2/lambda^2 + 2/k^2 + 2/mu^2 + 2/(lambda mu) + 2/(lambda k) + 2/(k mu)
//! ```
//!
//! and the system time `T` of a delivered update depends on the scheme:
//!
//! ```text
//! without preemption  E[T] = 1/(k + lambda) + 1/mu
//! with preemption     E[T] = (1/(lambda + mu)) (1 + mu/(lambda + k))
//! ```
//!
//! Plugging these into the renewal-reward forms
//! `avg = (E[Y]E[T] + E[Y^2]/2) / E[Y]` and `peak = E[Y] + E[T]` gives the
//! expressions in [`aoi`]. The terms there are grouped exactly as they are
//! usually printed so that results are reproducible to the last bit.

use crate::error::{Error, Result};
use crate::model::{Rate, Scheme};

/// Average AoI and average peak AoI of one device.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AoiPair {
    pub avg_aoi: f64,
    pub avg_peak_aoi: f64,
}

/// Effective waiting rate `k = w (1 - gamma x_service)`.
///
/// An infinite `w` stays infinite as long as some channel is free
/// (`gamma * x_service < 1`); `inf * 0` is rejected.
pub fn effective_rate(w: Rate, gamma: f64, x_service: f64) -> Result<Rate> {
    let busy = gamma * x_service;
    if !(busy.is_finite() && busy >= 0.0) {
        return Err(Error::domain(format!("busy fraction gamma * x_service = {busy} is not in [0, 1]")));
    }
    if busy > 1.0 {
        return Err(Error::domain(format!("busy fraction gamma * x_service = {busy} exceeds 1")));
    }
    match w {
        Rate::Infinite if busy < 1.0 => Ok(Rate::Infinite),
        Rate::Infinite => Err(Error::domain("infinite waiting rate with every channel busy")),
        Rate::Finite(w) => Rate::finite(w * (1.0 - busy)),
    }
}

fn check_rates(lambda: f64, mu: f64, k: Rate) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::domain("lambda must be > 0"));
    }
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::domain("mu must be > 0"));
    }
    if let Rate::Finite(k) = k {
        if !(k > 0.0) {
            return Err(Error::domain("effective waiting rate k must be > 0"));
        }
    }
    Ok(())
}

/// Average AoI and average peak AoI for `scheme` at effective rate `k`.
///
/// `k = inf` returns the limits: the M/M/1/1 values `1/lambda + 2/mu -
/// 1/(lambda+mu)` (without preemption) and `1/lambda + 1/mu` (with
/// preemption), with peaks `1/lambda + 2/mu` and
/// `1/lambda + 1/mu + 1/(lambda+mu)`.
///
/// ```
/// use csma_aoi::analytic::aoi;
/// use csma_aoi::{Rate, Scheme};
///
/// let lim = aoi(Scheme::WithPreemption, 0.8, 1.0, Rate::INFINITY).unwrap();
/// assert_eq!(lim.avg_aoi, 2.25);
/// ```
pub fn aoi(scheme: Scheme, lambda: f64, mu: f64, k: Rate) -> Result<AoiPair> {
    check_rates(lambda, mu, k)?;
    let pair = match (scheme, k) {
        (Scheme::WithoutPreemption, Rate::Finite(k)) => {
            let peak = 1.0 / lambda + 1.0 / k + 2.0 / mu + 1.0 / (lambda + k);
            let avg = 1.0 / lambda + 1.0 / k + 2.0 / mu + 1.0 / (lambda + k)
                - (lambda + k + mu) / (lambda * k + k * mu + lambda * mu);
            AoiPair { avg_aoi: avg, avg_peak_aoi: peak }
        }
        (Scheme::WithPreemption, Rate::Finite(k)) => {
            let peak = 1.0 / lambda + 1.0 / k + 1.0 / mu + 1.0 / (lambda + mu) * (1.0 + mu / (lambda + k));
            let avg = 1.0 / lambda + 1.0 / k + 1.0 / mu + 1.0 / (lambda + mu) * (1.0 + mu / (lambda + k))
                - (lambda + k + mu) / (lambda * k + k * mu + lambda * mu);
            AoiPair { avg_aoi: avg, avg_peak_aoi: peak }
        }
        (Scheme::WithoutPreemption, Rate::Infinite) => AoiPair {
            avg_aoi: 1.0 / lambda + 2.0 / mu - 1.0 / (lambda + mu),
            avg_peak_aoi: 1.0 / lambda + 2.0 / mu,
        },
        (Scheme::WithPreemption, Rate::Infinite) => AoiPair {
            avg_aoi: 1.0 / lambda + 1.0 / mu,
            avg_peak_aoi: 1.0 / lambda + 1.0 / mu + 1.0 / (lambda + mu),
        },
    };
    Ok(pair)
}

/// Both schemes at once, `(with preemption, without preemption)`.
pub fn aoi_both(lambda: f64, mu: f64, k: Rate) -> Result<(AoiPair, AoiPair)> {
    Ok((
        aoi(Scheme::WithPreemption, lambda, mu, k)?,
        aoi(Scheme::WithoutPreemption, lambda, mu, k)?,
    ))
}

/// Mean inter-departure time `E[D] = 1/lambda + 1/k + 1/mu`.
pub fn mean_interdeparture(lambda: f64, mu: f64, k: Rate) -> Result<f64> {
    check_rates(lambda, mu, k)?;
    Ok(1.0 / lambda + k.recip() + 1.0 / mu)
}

/// Second moment of the inter-departure time.
pub fn second_moment_interdeparture(lambda: f64, mu: f64, k: Rate) -> Result<f64> {
    check_rates(lambda, mu, k)?;
    let ik = k.recip();
    Ok(2.0 / (lambda * lambda) + 2.0 * ik * ik + 2.0 / (mu * mu) + 2.0 / (lambda * mu)
        + 2.0 * ik / lambda
        + 2.0 * ik / mu)
}

/// Mean system time `E[T]` of a delivered update.
pub fn mean_service_time(scheme: Scheme, lambda: f64, mu: f64, k: Rate) -> Result<f64> {
    check_rates(lambda, mu, k)?;
    // 1/(lambda + k) -> 0 as k -> inf
    let wait = match k {
        Rate::Finite(k) => 1.0 / (lambda + k),
        Rate::Infinite => 0.0,
    };
    Ok(match scheme {
        Scheme::WithoutPreemption => wait + 1.0 / mu,
        Scheme::WithPreemption => 1.0 / (lambda + mu) * (1.0 + mu * wait),
    })
}

/// Average energy cost per unit time with sensing charged per unit of
/// waiting time: `(C_s/k + C_t/mu) / (1/lambda + 1/k + 1/mu)`.
///
/// This is the renewal-reward cost `(E[W] C_s + E[S] C_t) / E[D]`.
pub fn energy_cost(lambda: f64, mu: f64, k: Rate, c_sense: f64, c_transmit: f64) -> Result<f64> {
    check_rates(lambda, mu, k)?;
    check_costs(c_sense, c_transmit)?;
    Ok((k.divide(c_sense) + c_transmit / mu) / (1.0 / lambda + k.recip() + 1.0 / mu))
}

/// Average energy cost per unit time with sensing charged per sensing
/// attempt: `(C_s/(1 - theta) + C_t/mu) / (1/lambda + 1/k + 1/mu)` where
/// `k = w (1 - theta)`.
///
/// A waiting device senses at rate `w` and an attempt succeeds with
/// probability `1 - theta`, so each waiting period costs on average
/// `1/(1 - theta)` attempts. This is the budget that the best response in
/// [`crate::game::best_response`] saturates.
pub fn budget_energy_cost(
    lambda: f64,
    mu: f64,
    w: Rate,
    theta: f64,
    c_sense: f64,
    c_transmit: f64,
) -> Result<f64> {
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::domain(format!("theta = {theta} must lie in [0, 1)")));
    }
    check_costs(c_sense, c_transmit)?;
    let k = w.scale(1.0 - theta)?;
    check_rates(lambda, mu, k)?;
    Ok((c_sense / (1.0 - theta) + c_transmit / mu) / (1.0 / lambda + k.recip() + 1.0 / mu))
}

fn check_costs(c_sense: f64, c_transmit: f64) -> Result<()> {
    if !(c_sense.is_finite() && c_sense > 0.0) {
        return Err(Error::domain("c_sense must be > 0"));
    }
    if !(c_transmit.is_finite() && c_transmit > 0.0) {
        return Err(Error::domain("c_transmit must be > 0"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const WP: Scheme = Scheme::WithPreemption;
    const WOP: Scheme = Scheme::WithoutPreemption;

    /// Independent route: assemble the AoI from the renewal-reward form and
    /// the first two moments of `D` written out term by term.
    fn renewal_reward(scheme: Scheme, lambda: f64, mu: f64, k: f64) -> (f64, f64) {
        let ey = 1.0 / lambda + 1.0 / k + 1.0 / mu;
        let ey2 = 2.0 / lambda.powi(2) + 2.0 / k.powi(2) + 2.0 / mu.powi(2)
            + 2.0 / (lambda * mu)
            + 2.0 / (lambda * k)
            + 2.0 / (k * mu);
        let et = match scheme {
            Scheme::WithoutPreemption => 1.0 / (k + lambda) + 1.0 / mu,
            Scheme::WithPreemption => {
                // P(no arrival during service) E[T | none] + P(arrival) E[T | some]
                let p_none = mu / (lambda + mu);
                p_none * (1.0 / (lambda + k) + 1.0 / (lambda + mu)) + (1.0 - p_none) / (lambda + mu)
            }
        };
        ((ey * et + ey2 / 2.0) / ey, ey + et)
    }

    #[test]
    fn closed_forms_match_renewal_reward_route() {
        for &(l, m, k) in &[(0.8, 1.0, 0.5205), (0.1, 1.0, 2.0), (1.7, 0.3, 9.0), (3.0, 2.0, 0.01)] {
            for s in Scheme::ALL {
                let got = aoi(s, l, m, Rate::Finite(k)).unwrap();
                let (avg, peak) = renewal_reward(s, l, m, k);
                assert_relative_eq!(got.avg_aoi, avg, max_relative = 1e-12);
                assert_relative_eq!(got.avg_peak_aoi, peak, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn fig3_parameter_point() {
        let wp = aoi(WP, 0.5, 1.0, Rate::Finite(2.0)).unwrap();
        assert_relative_eq!(wp.avg_aoi, 3.433_333_333_333_333, max_relative = 1e-12);
        assert_relative_eq!(wp.avg_peak_aoi, 4.433_333_333_333_333, max_relative = 1e-12);
        let wop = aoi(WOP, 0.5, 1.0, Rate::Finite(2.0)).unwrap();
        assert_relative_eq!(wop.avg_aoi, 3.9, max_relative = 1e-12);
        assert_relative_eq!(wop.avg_peak_aoi, 4.9, max_relative = 1e-12);
        let wp1 = aoi(WP, 1.0, 1.0, Rate::Finite(2.0)).unwrap();
        assert_relative_eq!(wp1.avg_aoi, 2.366_666_666_666_667, max_relative = 1e-12);
    }

    #[test]
    fn infinite_rate_limits() {
        let wp = aoi(WP, 0.8, 1.0, Rate::INFINITY).unwrap();
        assert_eq!(wp.avg_aoi, 2.25);
        assert_relative_eq!(wp.avg_peak_aoi, 1.25 + 1.0 + 1.0 / 1.8, max_relative = 1e-15);
        let wop = aoi(WOP, 0.8, 1.0, Rate::INFINITY).unwrap();
        assert_relative_eq!(wop.avg_aoi, 2.694_444_444_444_444, max_relative = 1e-14);
        assert_eq!(wop.avg_peak_aoi, 3.25);
    }

    #[test]
    fn limits_agree_with_large_k() {
        for s in Scheme::ALL {
            for &(l, m) in &[(0.8, 1.0), (0.1, 3.0), (2.0, 0.5)] {
                let big = aoi(s, l, m, Rate::Finite(1e9)).unwrap();
                let lim = aoi(s, l, m, Rate::INFINITY).unwrap();
                assert_relative_eq!(big.avg_aoi, lim.avg_aoi, max_relative = 1e-6);
                assert_relative_eq!(big.avg_peak_aoi, lim.avg_peak_aoi, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn rejects_non_positive_inputs() {
        assert!(aoi(WP, 0.0, 1.0, Rate::Finite(1.0)).is_err());
        assert!(aoi(WP, 1.0, -1.0, Rate::Finite(1.0)).is_err());
        assert!(aoi(WOP, 1.0, 1.0, Rate::Finite(0.0)).is_err());
        assert!(energy_cost(1.0, 1.0, Rate::Finite(0.0), 0.1, 0.2).is_err());
        assert!(energy_cost(1.0, 1.0, Rate::Finite(1.0), 0.0, 0.2).is_err());
    }

    #[test]
    fn effective_rate_examples() {
        let k = effective_rate(Rate::Finite(1.0), 2.0, 0.239737).unwrap();
        assert_relative_eq!(k.as_f64(), 0.520526, max_relative = 1e-12);
        let k = effective_rate(Rate::Finite(2.0), 2.0, 0.290444).unwrap();
        assert_relative_eq!(k.as_f64(), 0.838224, max_relative = 1e-12);
        assert_eq!(effective_rate(Rate::INFINITY, 2.0, 0.25).unwrap(), Rate::INFINITY);
        assert!(effective_rate(Rate::Finite(1.0), 2.0, 0.6).is_err());
        assert!(effective_rate(Rate::INFINITY, 2.0, 0.5).is_err());
        assert_eq!(effective_rate(Rate::Finite(3.0), 2.0, 0.5).unwrap(), Rate::Finite(0.0));
    }

    #[test]
    fn energy_cost_examples() {
        let e = energy_cost(0.8, 1.0, Rate::INFINITY, 0.1, 0.2).unwrap();
        assert_relative_eq!(e, 0.2 / 2.25, max_relative = 1e-15);
        for &k in &[0.1, 0.52, 3.0] {
            let one = energy_cost(0.8, 1.0, Rate::Finite(k), 0.1, 0.2).unwrap();
            let two = energy_cost(0.8, 1.0, Rate::Finite(k), 0.2, 0.4).unwrap();
            assert_relative_eq!(two, 2.0 * one, max_relative = 1e-15);
        }
    }

    #[test]
    fn energy_cost_monotonicity_follows_the_sign_rule() {
        // d/dk has the sign of C_t/mu - C_s (1/lambda + 1/mu).
        let ks = [0.05, 0.2, 0.5, 1.0, 3.0, 10.0, 100.0];
        let series = |cs: f64, ct: f64| -> Vec<f64> {
            ks.iter().map(|&k| energy_cost(0.8, 1.0, Rate::Finite(k), cs, ct).unwrap()).collect()
        };
        let up = series(0.05, 0.2); // 0.1125 < 0.2
        assert!(up.windows(2).all(|w| w[1] > w[0]));
        let down = series(0.1, 0.2); // 0.225 > 0.2
        assert!(down.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn budget_energy_cost_with_no_contention_matches_time_based_sensing_per_attempt() {
        // theta = 0: every attempt succeeds, one attempt per waiting period.
        let e = budget_energy_cost(0.8, 1.0, Rate::Finite(2.0), 0.0, 0.1, 0.2).unwrap();
        let by_hand = (0.1 + 0.2) / (1.25 + 0.5 + 1.0);
        assert_relative_eq!(e, by_hand, max_relative = 1e-15);
        assert!(budget_energy_cost(0.8, 1.0, Rate::Finite(2.0), 1.0, 0.1, 0.2).is_err());
        let inf = budget_energy_cost(0.8, 1.0, Rate::INFINITY, 0.5, 0.1, 0.2).unwrap();
        assert_relative_eq!(inf, (0.2 + 0.2) / 2.25, max_relative = 1e-15);
    }

    #[test]
    fn mean_service_time_limits() {
        let wp = mean_service_time(WP, 0.8, 1.0, Rate::INFINITY).unwrap();
        assert_relative_eq!(wp, 1.0 / 1.8, max_relative = 1e-15);
        let wop = mean_service_time(WOP, 0.8, 1.0, Rate::INFINITY).unwrap();
        assert_eq!(wop, 1.0);
    }

    fn rates() -> impl Strategy<Value = (f64, f64, f64)> {
        (1e-2f64..20.0, 1e-2f64..20.0, 1e-2f64..50.0)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn preemption_dominates((l, m, k) in rates()) {
            let wp = aoi(WP, l, m, Rate::Finite(k)).unwrap();
            let wop = aoi(WOP, l, m, Rate::Finite(k)).unwrap();
            prop_assert!(wp.avg_aoi < wop.avg_aoi);
            prop_assert!(wp.avg_peak_aoi < wop.avg_peak_aoi);
        }

        #[test]
        fn peak_minus_average_identity((l, m, k) in rates()) {
            let gap = (l + k + m) / (l * k + k * m + l * m);
            for s in Scheme::ALL {
                let p = aoi(s, l, m, Rate::Finite(k)).unwrap();
                let d = p.avg_peak_aoi - p.avg_aoi;
                prop_assert!(d > 0.0);
                prop_assert!((d - gap).abs() <= 1e-12 * p.avg_peak_aoi.max(1.0));
            }
        }

        #[test]
        fn aoi_decreases_in_k((l, m, k) in rates()) {
            for s in Scheme::ALL {
                let a = aoi(s, l, m, Rate::Finite(k)).unwrap();
                let b = aoi(s, l, m, Rate::Finite(k * 1.5)).unwrap();
                prop_assert!(b.avg_aoi < a.avg_aoi);
                prop_assert!(b.avg_peak_aoi < a.avg_peak_aoi);
            }
        }

        #[test]
        fn budget_energy_increases_in_w((l, m, w) in rates(), theta in 0.0f64..0.99) {
            let a = budget_energy_cost(l, m, Rate::Finite(w), theta, 0.1, 0.2).unwrap();
            let b = budget_energy_cost(l, m, Rate::Finite(w * 1.5), theta, 0.1, 0.2).unwrap();
            prop_assert!(b > a);
        }
    }
}
