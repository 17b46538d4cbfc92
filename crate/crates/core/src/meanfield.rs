//! Mean-field limit of the population of devices.
//!
//! With every device using waiting rate `w`, the fractions
//! `x = (x_idle, x_wait, x_service)` follow
//!
//! ```text
//! dx_idle/dt    = -lambda x_idle + mu x_service
//! dx_wait/dt    =  lambda x_idle - w (1 - gamma x_service) x_wait
//! dx_service/dt =  w (1 - gamma x_service) x_wait - mu x_service
//! ```
//!
//! The unique feasible equilibrium has `x_service` equal to the smaller root
//! of
//!
//! ```text
//! w (lambda + mu) gamma x^2 - (w (lambda + mu + lambda gamma) + lambda mu) x + lambda w = 0
//! ```
//!
//! and is a global attractor on the simplex.

use crate::error::{Error, Result};
use crate::model::{MeanFieldState, Rate, SystemParams};

/// Default RK4 step.
pub const DEFAULT_STEP: f64 = 1e-3;
/// Default integration horizon.
pub const DEFAULT_HORIZON: f64 = 200.0;
/// Integration stops once the L1 norm of the drift drops below this.
pub const STEADY_DRIFT: f64 = 1e-10;

const RENORMALIZE_TOL: f64 = 1e-9;
const ESCAPE_TOL: f64 = 1e-6;

/// Time-stamped sequence of occupancy states.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<(f64, MeanFieldState)>,
    /// Time increment between samples (integration step or sampling grid).
    pub step: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&(f64, MeanFieldState)> {
        self.samples.last()
    }

    /// State at time `t` by linear interpolation between samples; clamps to
    /// the first/last sample outside the covered range.
    pub fn at(&self, t: f64) -> Option<MeanFieldState> {
        let first = self.samples.first()?;
        if t <= first.0 {
            return Some(first.1);
        }
        let idx = self.samples.partition_point(|(s, _)| *s <= t);
        if idx >= self.samples.len() {
            return self.samples.last().map(|s| s.1);
        }
        let (t0, a) = self.samples[idx - 1];
        let (t1, b) = self.samples[idx];
        let u = (t - t0) / (t1 - t0);
        let lerp = |x: f64, y: f64| x + u * (y - x);
        Some(MeanFieldState {
            x_idle: lerp(a.x_idle, b.x_idle),
            x_wait: lerp(a.x_wait, b.x_wait),
            x_service: lerp(a.x_service, b.x_service),
        })
    }

    /// Write `t,x_I,x_W,x_S,source` rows, with a header when `header` is set.
    pub fn write_csv<W: std::io::Write>(&self, out: W, source: &str, header: bool) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        if header {
            wtr.write_record(["t", "x_I", "x_W", "x_S", "source"])?;
        }
        for (t, x) in &self.samples {
            wtr.write_record([t.to_string(), x.x_idle.to_string(), x.x_wait.to_string(), x.x_service.to_string(), source.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Largest componentwise distance to `other` at this trajectory's
    /// sample times.
    pub fn sup_distance(&self, other: &Trajectory) -> f64 {
        self.samples
            .iter()
            .filter_map(|(t, x)| other.at(*t).map(|y| x.linf_distance(&y)))
            .fold(0.0, f64::max)
    }

    /// Resample onto the grid `0, every, 2 every, ...` up to `horizon`.
    pub fn resample(&self, every: f64, horizon: f64) -> Trajectory {
        let n = (horizon / every).round() as usize;
        let samples = (0..=n)
            .filter_map(|i| {
                let t = i as f64 * every;
                self.at(t).map(|s| (t, s))
            })
            .collect();
        Trajectory { samples, step: every }
    }
}

fn require_finite_w(params: &SystemParams) -> Result<f64> {
    params
        .w
        .value()
        .ok_or_else(|| Error::domain("the mean-field dynamics are only defined for a finite waiting rate"))
}

fn drift_array(x: [f64; 3], lambda: f64, mu: f64, w: f64, gamma: f64) -> [f64; 3] {
    let to_wait = lambda * x[0];
    let to_service = w * (1.0 - gamma * x[2]) * x[1];
    let to_idle = mu * x[2];
    [to_idle - to_wait, to_wait - to_service, to_service - to_idle]
}

/// Right-hand side of the mean-field ODE at `state`.
pub fn drift(state: &MeanFieldState, params: &SystemParams) -> Result<[f64; 3]> {
    let w = require_finite_w(params)?;
    Ok(drift_array(state.to_array(), params.lambda, params.mu, w, params.gamma))
}

/// Equilibrium `x_service` for a finite waiting rate, from the
/// cancellation-free form of the smaller quadratic root.
fn equilibrium_service(lambda: f64, mu: f64, gamma: f64, w: f64) -> f64 {
    let a = w * (lambda + mu) * gamma;
    let b = w * (lambda + mu + lambda * gamma) + lambda * mu;
    let c = lambda * w;
    let disc = b * b - 4.0 * a * c;
    debug_assert!(disc > 0.0);
    let larger = (b + disc.sqrt()) / (2.0 * a);
    (c / a) / larger
}

/// The unique equilibrium of the mean-field ODE.
///
/// For `w = inf` the limit of the feasible root is used:
/// `x_service = min(lambda/(lambda+mu), 1/gamma)`. When the second term is
/// binding every channel is busy in the limit.
pub fn equilibrium(params: &SystemParams) -> MeanFieldState {
    let SystemParams { lambda, mu, gamma, .. } = *params;
    match params.w {
        Rate::Finite(w) => {
            let xs = equilibrium_service(lambda, mu, gamma, w);
            let xi = mu / lambda * xs;
            // Mass balance is better conditioned than mu xs / (w (1 - gamma xs))
            // when channels are nearly saturated.
            MeanFieldState { x_idle: xi, x_wait: 1.0 - xi - xs, x_service: xs }
        }
        Rate::Infinite => {
            let free = lambda / (lambda + mu);
            if gamma * free < 1.0 {
                MeanFieldState { x_idle: mu / (lambda + mu), x_wait: 0.0, x_service: free }
            } else {
                let xs = 1.0 / gamma;
                let xi = mu / lambda * xs;
                MeanFieldState { x_idle: xi, x_wait: (1.0 - xi - xs).max(0.0), x_service: xs }
            }
        }
    }
}

/// Busy-channel fraction `theta = gamma x_service` at the equilibrium,
/// clamped to at most one.
pub fn equilibrium_theta(params: &SystemParams) -> f64 {
    (params.gamma * equilibrium(params).x_service).min(1.0)
}

/// Effective waiting rate `k = w (1 - theta)` at the equilibrium.
///
/// For `w = inf` this is infinite while channels remain free, and
/// otherwise the finite limit `lambda mu / (gamma lambda - lambda - mu)`
/// (the rate that keeps exactly `1/gamma` of the devices in service).
pub fn equilibrium_effective_rate(params: &SystemParams) -> Rate {
    let SystemParams { lambda, mu, gamma, .. } = *params;
    match params.w {
        Rate::Finite(w) => {
            let xs = equilibrium_service(lambda, mu, gamma, w);
            Rate::Finite(w * (1.0 - gamma * xs))
        }
        Rate::Infinite => {
            let excess = gamma * lambda - lambda - mu;
            if excess > 0.0 {
                Rate::Finite(lambda * mu / excess)
            } else {
                Rate::Infinite
            }
        }
    }
}

fn rk4_step(x: [f64; 3], h: f64, f: impl Fn([f64; 3]) -> [f64; 3]) -> [f64; 3] {
    let add = |a: [f64; 3], b: [f64; 3], s: f64| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]];
    let k1 = f(x);
    let k2 = f(add(x, k1, h / 2.0));
    let k3 = f(add(x, k2, h / 2.0));
    let k4 = f(add(x, k3, h));
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Classical fixed-step RK4 integration of the mean-field ODE from `x0`.
///
/// Every step is recorded. Integration stops early once the L1 norm of the
/// drift falls below [`STEADY_DRIFT`]. Rounding drift off the simplex below
/// `1e-9` is projected back; anything beyond `1e-6` is reported as an
/// [`Error::Integration`], which in practice means `step` is too large.
pub fn integrate(x0: &MeanFieldState, params: &SystemParams, step: f64, horizon: f64) -> Result<Trajectory> {
    let w = require_finite_w(params)?;
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::domain("integration step must be > 0"));
    }
    if !(horizon >= step) {
        return Err(Error::domain("integration horizon must be >= step"));
    }
    x0.check(params.gamma, RENORMALIZE_TOL)?;
    let SystemParams { lambda, mu, gamma, .. } = *params;
    let f = |x: [f64; 3]| drift_array(x, lambda, mu, w, gamma);

    let n_steps = (horizon / step).round() as usize;
    let mut samples = Vec::with_capacity(n_steps.min(1 << 20) + 1);
    let mut x = x0.to_array();
    samples.push((0.0, *x0));
    for i in 1..=n_steps {
        if f(x).iter().map(|d| d.abs()).sum::<f64>() < STEADY_DRIFT {
            break;
        }
        x = rk4_step(x, step, f);
        let sum: f64 = x.iter().sum();
        let worst_negative = x.iter().cloned().fold(0.0f64, f64::min);
        if (sum - 1.0).abs() > ESCAPE_TOL || worst_negative < -ESCAPE_TOL || gamma * x[2] > 1.0 + ESCAPE_TOL {
            return Err(Error::Integration(format!(
                "state {x:?} left the simplex at t = {}; reduce the step",
                i as f64 * step
            )));
        }
        if (sum - 1.0).abs() > 0.0 && (sum - 1.0).abs() < RENORMALIZE_TOL {
            for v in &mut x {
                *v /= sum;
            }
        }
        samples.push((i as f64 * step, MeanFieldState::from_array(x)));
    }
    Ok(Trajectory { samples, step })
}

/// Lower bound on the exponential decay rate of the linearised dynamics,
/// `min{lambda, w (1 - gamma x_service*), w gamma x_wait*}`.
pub fn stability_rate(params: &SystemParams) -> Result<f64> {
    let w = require_finite_w(params)?;
    let eq = equilibrium(params);
    Ok(params
        .lambda
        .min(w * (1.0 - params.gamma * eq.x_service))
        .min(w * params.gamma * eq.x_wait))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fig4(w: f64) -> SystemParams {
        SystemParams::new(0.8, 1.0, 2.0).with_w(Rate::Finite(w))
    }

    /// Bisection on the fixed-point form `x = lambda k / ((lambda+mu) k + lambda mu)`
    /// with `k = w (1 - gamma x)`, over the feasible interval.
    fn bisect_equilibrium(lambda: f64, mu: f64, gamma: f64, w: f64) -> f64 {
        let g = |x: f64| {
            let k = w * (1.0 - gamma * x);
            lambda * k / ((lambda + mu) * k + lambda * mu) - x
        };
        let (mut lo, mut hi) = (0.0, (1.0 / gamma).min(1.0));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn random_simplex(rng: &mut ChaCha8Rng, gamma: f64) -> MeanFieldState {
        loop {
            let w: [f64; 3] = [rng.random(), rng.random(), rng.random()];
            if let Ok(s) = MeanFieldState::normalized(w, gamma) {
                return s;
            }
        }
    }

    #[test]
    fn equilibrium_matches_bisection_oracle() {
        for &(l, m, g, w) in &[(0.8, 1.0, 2.0, 2.0), (0.8, 1.0, 2.0, 1.0), (0.3, 1.7, 5.0, 0.2), (1.9, 0.3, 1.0, 40.0)] {
            let eq = equilibrium(&SystemParams::new(l, m, g).with_w(Rate::Finite(w)));
            assert_relative_eq!(eq.x_service, bisect_equilibrium(l, m, g, w), max_relative = 1e-12);
        }
    }

    #[test]
    fn fig4_equilibrium() {
        let eq = equilibrium(&fig4(2.0));
        assert_abs_diff_eq!(eq.x_idle, 0.363_055_425_509_808, epsilon = 1e-12);
        assert_abs_diff_eq!(eq.x_wait, 0.346_500_234_082_346, epsilon = 1e-12);
        assert_abs_diff_eq!(eq.x_service, 0.290_444_340_407_846, epsilon = 1e-12);
        assert_abs_diff_eq!(eq.sum(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn table1_operating_point() {
        let eq = equilibrium(&fig4(1.0));
        assert_abs_diff_eq!(eq.x_service, 0.239_741_197_865_195, epsilon = 1e-12);
        let k = equilibrium_effective_rate(&fig4(1.0));
        assert_abs_diff_eq!(k.as_f64(), 0.520_517_604_269_61, epsilon = 1e-12);
    }

    #[test]
    fn infinite_rate_equilibrium() {
        let eq = equilibrium(&fig4(1.0).with_w(Rate::INFINITY));
        assert_eq!(eq.x_service, 0.8 / 1.8);
        assert_eq!(eq.x_wait, 0.0);
        assert_abs_diff_eq!(eq.sum(), 1.0, epsilon = 1e-15);
        assert_eq!(equilibrium_effective_rate(&fig4(1.0).with_w(Rate::INFINITY)), Rate::INFINITY);

        // gamma lambda / (lambda + mu) = 2.22 > 1: channels saturate.
        let p = SystemParams::new(0.8, 1.0, 5.0).with_w(Rate::INFINITY);
        let eq = equilibrium(&p);
        assert_eq!(eq.x_service, 0.2);
        assert_eq!(equilibrium_theta(&p), 1.0);
        assert!(eq.check(5.0, 1e-12).is_ok());
        let k = equilibrium_effective_rate(&p).as_f64();
        assert_relative_eq!(k, 0.8 / (4.0 - 0.8 - 1.0), max_relative = 1e-15);
    }

    #[test]
    fn infinite_rate_equilibrium_is_the_large_w_limit() {
        for &(l, m, g) in &[(0.8, 1.0, 2.0), (0.8, 1.0, 5.0), (0.3, 1.0, 1.0)] {
            let p = SystemParams::new(l, m, g);
            let lim = equilibrium(&p.with_w(Rate::INFINITY));
            let big = equilibrium(&p.with_w(Rate::Finite(1e9)));
            assert!(lim.linf_distance(&big) < 1e-6, "{lim:?} vs {big:?}");
            let k_lim = equilibrium_effective_rate(&p.with_w(Rate::INFINITY));
            let k_big = equilibrium_effective_rate(&p.with_w(Rate::Finite(1e9)));
            if k_lim.is_finite() {
                assert_relative_eq!(k_lim.as_f64(), k_big.as_f64(), max_relative = 1e-6);
            } else {
                assert!(k_big.as_f64() > 1e6);
            }
        }
    }

    #[test]
    fn drift_examples() {
        let p = fig4(2.0).with_w(Rate::Finite(2.0));
        let d = drift(&MeanFieldState::all_idle(), &p).unwrap();
        assert_eq!(d, [-0.8, 0.8, 0.0]);
        let d = drift(&equilibrium(&p), &p).unwrap();
        assert!(d.iter().all(|v| v.abs() < 1e-12), "{d:?}");
        assert!(drift(&MeanFieldState::all_idle(), &p.with_w(Rate::INFINITY)).is_err());
    }

    #[test]
    fn drift_conserves_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = fig4(2.0);
        for _ in 0..1000 {
            let s = random_simplex(&mut rng, p.gamma);
            let d = drift(&s, &p).unwrap();
            assert!((d[0] + d[1] + d[2]).abs() < 1e-15);
        }
    }

    #[test]
    fn integration_converges_from_all_idle() {
        let p = fig4(2.0);
        let traj = integrate(&MeanFieldState::all_idle(), &p, 1e-3, 100.0).unwrap();
        let (_, last) = traj.last().unwrap();
        assert!(last.l1_distance(&equilibrium(&p)) < 1e-8);
        for (_, s) in &traj.samples {
            assert!((s.sum() - 1.0).abs() < 1e-9);
        }
        assert!(traj.samples.windows(2).all(|w| w[1].0 > w[0].0));
    }

    #[test]
    fn integration_from_equilibrium_stays_put() {
        let p = fig4(2.0);
        let eq = equilibrium(&p);
        let traj = integrate(&eq, &p, 1e-3, 10.0).unwrap();
        for (_, s) in &traj.samples {
            assert!(s.l1_distance(&eq) < 1e-10);
        }
    }

    #[test]
    fn random_starts_share_one_attractor() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = fig4(2.0);
        let eq = equilibrium(&p);
        for _ in 0..20 {
            let x0 = random_simplex(&mut rng, p.gamma);
            let traj = integrate(&x0, &p, 1e-3, 200.0).unwrap();
            assert!(traj.last().unwrap().1.l1_distance(&eq) < 1e-6);
        }
    }

    #[test]
    fn oversized_step_is_reported() {
        let p = fig4(2.0).with_w(Rate::Finite(500.0));
        let err = integrate(&MeanFieldState::new(0.0, 1.0, 0.0, 2.0).unwrap(), &p, 1.0, 10.0).unwrap_err();
        assert!(matches!(err, Error::Integration(_)), "{err}");
    }

    #[test]
    fn stability_rate_example() {
        let delta = stability_rate(&fig4(2.0)).unwrap();
        assert_eq!(delta, 0.8);
        let eq = equilibrium(&fig4(2.0));
        assert_relative_eq!(2.0 * 2.0 * eq.x_wait, 1.386_000_936_329_38, max_relative = 1e-12);
    }

    #[test]
    fn near_equilibrium_decay_is_at_least_half_delta() {
        let p = fig4(2.0);
        let eq = equilibrium(&p);
        let delta = stability_rate(&p).unwrap();
        let x0 = MeanFieldState::from_array([eq.x_idle + 5e-4, eq.x_wait - 1e-3, eq.x_service + 5e-4]);
        let traj = integrate(&x0, &p, 1e-3, 10.0).unwrap();
        // least-squares slope of log distance over t in [1, 8]
        let pts: Vec<(f64, f64)> = traj
            .samples
            .iter()
            .filter(|(t, _)| (1.0..=8.0).contains(t))
            .map(|(t, s)| (*t, s.l1_distance(&eq).ln()))
            .collect();
        let n = pts.len() as f64;
        let (mt, my) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
        let cov: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
        let var: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
        let rate = -cov / var;
        assert!(rate >= 0.5 * delta, "measured decay {rate} vs delta {delta}");
    }

    #[test]
    fn trajectory_csv() {
        let traj = integrate(&MeanFieldState::all_idle(), &fig4(2.0), 0.5, 1.0).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf, "ode", true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "t,x_I,x_W,x_S,source");
        assert_eq!(text.lines().nth(1).unwrap(), "0,1,0,0,ode");
        assert_eq!(text.lines().count(), 4);
        assert_eq!(traj.sup_distance(&traj), 0.0);
    }

    #[test]
    fn trajectory_interpolation() {
        let p = fig4(2.0);
        let traj = integrate(&MeanFieldState::all_idle(), &p, 1e-2, 5.0).unwrap();
        let coarse = traj.resample(0.5, 5.0);
        assert_eq!(coarse.len(), 11);
        assert_eq!(coarse.samples[0].1, MeanFieldState::all_idle());
        let exact = traj.samples[100].1;
        assert!(coarse.samples[2].1.linf_distance(&exact) < 1e-12);
    }

    fn params() -> impl Strategy<Value = SystemParams> {
        (0.05f64..5.0, 0.05f64..5.0, 0.1f64..10.0, 0.01f64..100.0)
            .prop_map(|(l, m, g, w)| SystemParams::new(l, m, g).with_w(Rate::Finite(w)))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn feasible_root_bounds(p in params()) {
            let xs = equilibrium(&p).x_service;
            prop_assert!(xs > 0.0);
            prop_assert!(xs < (1.0 / p.gamma).min(p.lambda / (p.lambda + p.mu)));
        }

        #[test]
        fn fixed_point_identity(p in params()) {
            let w = p.w.as_f64();
            let xs = equilibrium(&p).x_service;
            let k = w * (1.0 - p.gamma * xs);
            let again = p.lambda * k / ((p.lambda + p.mu) * k + p.lambda * p.mu);
            prop_assert!((again - xs).abs() <= 1e-12);
        }

        #[test]
        fn equilibrium_lies_on_simplex(p in params()) {
            let eq = equilibrium(&p);
            prop_assert!(eq.check(p.gamma, 1e-12).is_ok(), "{:?}", eq);
            prop_assert!(stability_rate(&p).unwrap() > 0.0);
        }
    }
}
