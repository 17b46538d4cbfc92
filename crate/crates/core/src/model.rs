//! Shared domain types: waiting rates, system parameters, packet
//! management schemes and mean-field occupancy states.
//!
//! Parameter validation lives here; the other modules assume their inputs
//! went through [`SystemParams::validate`].

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Tolerance on `x_idle + x_wait + x_service = 1` for accepted states.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// A non-negative rate on the extended real line.
///
/// The infinite waiting rate is a genuine value of the model (a device that
/// transmits as soon as it senses an idle channel), so it is represented
/// explicitly rather than as a large sentinel. Arithmetic with
/// [`Rate::Infinite`] goes through the methods below, which apply the limit
/// rules (`a / inf = 0`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Rate {
    Finite(f64),
    Infinite,
}

impl Rate {
    pub const INFINITY: Rate = Rate::Infinite;

    /// A finite rate; rejects negative, NaN and infinite inputs.
    pub fn finite(value: f64) -> Result<Rate> {
        if value.is_finite() && value >= 0.0 {
            Ok(Rate::Finite(value))
        } else {
            Err(Error::domain(format!("rate must be finite and >= 0, got {value}")))
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Rate::Infinite)
    }

    pub fn is_finite(self) -> bool {
        !self.is_infinite()
    }

    /// The finite value, if any.
    pub fn value(self) -> Option<f64> {
        match self {
            Rate::Finite(v) => Some(v),
            Rate::Infinite => None,
        }
    }

    /// `f64` view: `f64::INFINITY` for the infinite rate.
    pub fn as_f64(self) -> f64 {
        self.value().unwrap_or(f64::INFINITY)
    }

    /// Mean holding time `1/k`; exactly `0` for the infinite rate.
    pub fn recip(self) -> f64 {
        match self {
            Rate::Finite(v) => 1.0 / v,
            Rate::Infinite => 0.0,
        }
    }

    /// `a / self` with the limit rule `a / inf = 0`.
    pub fn divide(self, numerator: f64) -> f64 {
        numerator * self.recip()
    }

    /// Multiply by a non-negative finite factor. `inf * 0` is rejected since
    /// it has no meaning without a limit argument.
    pub fn scale(self, factor: f64) -> Result<Rate> {
        if !(factor.is_finite() && factor >= 0.0) {
            return Err(Error::domain(format!("rate scale factor must be finite and >= 0, got {factor}")));
        }
        match self {
            Rate::Finite(v) => Rate::finite(v * factor),
            Rate::Infinite if factor > 0.0 => Ok(Rate::Infinite),
            Rate::Infinite => Err(Error::domain("infinite rate scaled by zero")),
        }
    }

    /// Relative distance used by the fixed-point iterations: `0` when both
    /// are infinite, `inf` when exactly one is.
    pub fn relative_change(self, other: Rate) -> f64 {
        match (self, other) {
            (Rate::Infinite, Rate::Infinite) => 0.0,
            (Rate::Finite(a), Rate::Finite(b)) => {
                let scale = a.abs().max(b.abs());
                if scale == 0.0 {
                    0.0
                } else {
                    (a - b).abs() / scale
                }
            }
            _ => f64::INFINITY,
        }
    }
}

impl PartialOrd for Rate {
    fn partial_cmp(&self, other: &Rate) -> Option<Ordering> {
        self.as_f64().partial_cmp(&other.as_f64())
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rate::Finite(v) => write!(f, "{v}"),
            Rate::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Rate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Rate> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") {
            return Ok(Rate::Infinite);
        }
        let v: f64 = t
            .parse()
            .map_err(|_| Error::domain(format!("cannot parse rate `{s}`")))?;
        Rate::finite(v)
    }
}

/// Packet management while a status update is being transmitted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Fresh arrivals during service are discarded.
    WithoutPreemption,
    /// A fresh arrival replaces the update in service.
    WithPreemption,
}

impl Scheme {
    pub const ALL: [Scheme; 2] = [Scheme::WithPreemption, Scheme::WithoutPreemption];

    /// Short label used in CSV output and on the command line.
    pub fn label(self) -> &'static str {
        match self {
            Scheme::WithoutPreemption => "wop",
            Scheme::WithPreemption => "wp",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Scheme> {
        match s.trim().to_ascii_lowercase().as_str() {
            "wp" | "with-preemption" | "with_preemption" => Ok(Scheme::WithPreemption),
            "wop" | "without-preemption" | "without_preemption" => Ok(Scheme::WithoutPreemption),
            other => Err(Error::domain(format!("unknown scheme `{other}` (expected wp or wop)"))),
        }
    }
}

/// All model constants plus the common waiting rate `w`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SystemParams {
    /// Status update arrival rate.
    pub lambda: f64,
    /// Transmission (service) rate.
    pub mu: f64,
    /// Devices per channel, `N / M`.
    pub gamma: f64,
    pub n_devices: Option<u32>,
    pub m_channels: Option<u32>,
    /// Channel sensing cost.
    pub c_sense: f64,
    /// Transmission cost per unit time.
    pub c_transmit: f64,
    /// Average energy budget per unit time.
    pub c_budget: f64,
    /// Waiting (backoff) rate shared by all devices.
    pub w: Rate,
}

impl SystemParams {
    /// Parameters with the cost setting used throughout the evaluation
    /// (`C_s = 0.1`, `C_t = 0.2`, budget `0.4`) and `w = 1`.
    pub fn new(lambda: f64, mu: f64, gamma: f64) -> SystemParams {
        SystemParams {
            lambda,
            mu,
            gamma,
            n_devices: None,
            m_channels: None,
            c_sense: 0.1,
            c_transmit: 0.2,
            c_budget: 0.4,
            w: Rate::Finite(1.0),
        }
    }

    pub fn with_w(mut self, w: Rate) -> SystemParams {
        self.w = w;
        self
    }

    pub fn with_costs(mut self, c_sense: f64, c_transmit: f64, c_budget: f64) -> SystemParams {
        self.c_sense = c_sense;
        self.c_transmit = c_transmit;
        self.c_budget = c_budget;
        self
    }

    /// Attach a finite population; `gamma` is left untouched so that
    /// [`validate`](Self::validate) can catch inconsistencies.
    pub fn with_population(mut self, n_devices: u32, m_channels: u32) -> SystemParams {
        self.n_devices = Some(n_devices);
        self.m_channels = Some(m_channels);
        self
    }

    /// Return `self` unchanged if every invariant holds, otherwise a
    /// [`Error::Domain`] naming the first violation.
    pub fn validate(self) -> Result<SystemParams> {
        let positive = [
            ("lambda", self.lambda),
            ("mu", self.mu),
            ("gamma", self.gamma),
            ("c_sense", self.c_sense),
            ("c_transmit", self.c_transmit),
            ("c_budget", self.c_budget),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::domain(format!("{name} must be > 0")));
            }
        }
        match self.w {
            Rate::Finite(w) if !(w.is_finite() && w > 0.0) => {
                return Err(Error::domain("w must be > 0"));
            }
            _ => {}
        }
        match (self.n_devices, self.m_channels) {
            (Some(0), _) => return Err(Error::domain("n_devices must be >= 1")),
            (_, Some(0)) => return Err(Error::domain("m_channels must be >= 1")),
            (Some(n), Some(m)) if self.gamma != f64::from(n) / f64::from(m) => {
                return Err(Error::domain("gamma inconsistent with N/M"));
            }
            _ => {}
        }
        Ok(self)
    }

    /// `(N, M)` if both are set.
    pub fn population(&self) -> Option<(u32, u32)> {
        self.n_devices.zip(self.m_channels)
    }

    /// `(1/lambda + 1/mu) * budget`, the right-hand side of every
    /// best-response condition.
    pub(crate) fn budget_rhs(&self) -> f64 {
        (1.0 / self.lambda + 1.0 / self.mu) * self.c_budget
    }
}

/// Fractions of devices idle, waiting and in service.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanFieldState {
    pub x_idle: f64,
    pub x_wait: f64,
    pub x_service: f64,
}

impl MeanFieldState {
    /// Accept a state that already lies on the simplex (within
    /// [`SIMPLEX_TOL`]) and keeps the busy-channel fraction `gamma * x_service`
    /// at most one.
    pub fn new(x_idle: f64, x_wait: f64, x_service: f64, gamma: f64) -> Result<MeanFieldState> {
        let state = MeanFieldState { x_idle, x_wait, x_service };
        state.check(gamma, SIMPLEX_TOL)?;
        Ok(state)
    }

    /// Normalise a non-negative weight triple onto the simplex, then apply
    /// the same checks as [`new`](Self::new).
    pub fn normalized(weights: [f64; 3], gamma: f64) -> Result<MeanFieldState> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::domain("state weights must be finite and >= 0"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::domain("state weights sum to zero"));
        }
        let state = MeanFieldState {
            x_idle: weights[0] / total,
            x_wait: weights[1] / total,
            x_service: weights[2] / total,
        };
        state.check(gamma, SIMPLEX_TOL)?;
        Ok(state)
    }

    /// Everyone idle.
    pub fn all_idle() -> MeanFieldState {
        MeanFieldState { x_idle: 1.0, x_wait: 0.0, x_service: 0.0 }
    }

    pub(crate) fn from_array(x: [f64; 3]) -> MeanFieldState {
        MeanFieldState { x_idle: x[0], x_wait: x[1], x_service: x[2] }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x_idle, self.x_wait, self.x_service]
    }

    /// Fraction of busy channels, `gamma * x_service`.
    pub fn theta(&self, gamma: f64) -> f64 {
        gamma * self.x_service
    }

    pub fn sum(&self) -> f64 {
        self.x_idle + self.x_wait + self.x_service
    }

    /// L1 distance between two states.
    pub fn l1_distance(&self, other: &MeanFieldState) -> f64 {
        (self.x_idle - other.x_idle).abs()
            + (self.x_wait - other.x_wait).abs()
            + (self.x_service - other.x_service).abs()
    }

    /// Largest componentwise distance.
    pub fn linf_distance(&self, other: &MeanFieldState) -> f64 {
        (self.x_idle - other.x_idle)
            .abs()
            .max((self.x_wait - other.x_wait).abs())
            .max((self.x_service - other.x_service).abs())
    }

    pub(crate) fn check(&self, gamma: f64, tol: f64) -> Result<()> {
        for (name, v) in [("x_idle", self.x_idle), ("x_wait", self.x_wait), ("x_service", self.x_service)] {
            if !(v >= -tol && v <= 1.0 + tol) {
                return Err(Error::domain(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if (self.sum() - 1.0).abs() > tol {
            return Err(Error::domain(format!("state sums to {}, not 1", self.sum())));
        }
        if gamma * self.x_service > 1.0 + tol {
            return Err(Error::domain(format!(
                "busy fraction gamma * x_service = {} exceeds 1",
                gamma * self.x_service
            )));
        }
        Ok(())
    }
}
