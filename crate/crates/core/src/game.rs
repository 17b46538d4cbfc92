//! The waiting-rate game in the mean-field limit.
//!
//! A device that sees a fraction `theta` of busy channels picks the waiting
//! rate `w` minimising its average AoI subject to the energy budget
//! `budget_energy_cost <= c_budget`. Since the AoI decreases in `w`, the
//! optimum makes the budget tight, or is `inf` when even `w = inf` fits.
//! Writing `L = (1/lambda + 1/mu) c_budget` and `A = c_transmit/mu - L`,
//!
//! ```text
//! w(theta) = c_budget / (c_sense + A (1 - theta))   if c_sense/(1-theta) + c_transmit/mu > L
//!          = inf                                     otherwise
//! ```
//!
//! A symmetric equilibrium is a fixed point `w* = BR(gamma x_service*(w*))`.

use std::fmt;
use std::str::FromStr;

use crate::analytic::{self, AoiPair};
use crate::error::{Error, Result};
use crate::meanfield;
use crate::model::{Rate, Scheme, SystemParams};

/// Relative tolerance for convergence and cycle detection.
pub const ITERATION_TOL: f64 = 1e-9;
/// Default cap on best-response applications.
pub const DEFAULT_MAX_ITERS: usize = 1000;

/// Which of the three regimes the parameters fall into.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CaseTag {
    Case1,
    Case2,
    Case3,
}

impl CaseTag {
    pub fn label(self) -> &'static str {
        match self {
            CaseTag::Case1 => "CASE1",
            CaseTag::Case2 => "CASE2",
            CaseTag::Case3 => "CASE3",
        }
    }
}

impl fmt::Display for CaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Classification of the mean-field equilibrium.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MfeOutcome {
    /// The budget never binds; every device waits at rate `inf`.
    Case1,
    /// Unique finite equilibrium with busy fraction `theta_star`.
    Case2 { w_star: f64, theta_star: f64 },
    /// No pure equilibrium; best responses alternate between `inf` and
    /// `finite_rate`.
    Case3 { finite_rate: f64 },
}

impl MfeOutcome {
    pub fn tag(&self) -> CaseTag {
        match self {
            MfeOutcome::Case1 => CaseTag::Case1,
            MfeOutcome::Case2 { .. } => CaseTag::Case2,
            MfeOutcome::Case3 { .. } => CaseTag::Case3,
        }
    }

    /// Equilibrium waiting rate; `None` for Case 3.
    pub fn w_star(&self) -> Option<Rate> {
        match *self {
            MfeOutcome::Case1 => Some(Rate::INFINITY),
            MfeOutcome::Case2 { w_star, .. } => Some(Rate::Finite(w_star)),
            MfeOutcome::Case3 { .. } => None,
        }
    }

    pub fn theta_star(&self) -> Option<f64> {
        match *self {
            MfeOutcome::Case2 { theta_star, .. } => Some(theta_star),
            _ => None,
        }
    }

    pub fn oscillation_pair(&self) -> Option<(Rate, Rate)> {
        match *self {
            MfeOutcome::Case3 { finite_rate } => Some((Rate::INFINITY, Rate::Finite(finite_rate))),
            _ => None,
        }
    }
}

fn br_finite_branch(theta: f64, params: &SystemParams) -> Rate {
    let lhs = params.c_sense / (1.0 - theta) + params.c_transmit / params.mu;
    let l = params.budget_rhs();
    if lhs > l {
        Rate::Finite((params.c_budget / (1.0 - theta)) / (lhs - l))
    } else {
        Rate::INFINITY
    }
}

/// Budget-constrained best response to a busy fraction `theta`.
pub fn best_response(theta: f64, params: &SystemParams) -> Result<Rate> {
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::domain(format!("theta = {theta} must lie in [0, 1)")));
    }
    Ok(br_finite_branch(theta, params))
}

/// Best response extended to `theta = 1` by continuity (`c_budget / c_sense`).
fn best_response_closed(theta: f64, params: &SystemParams) -> Rate {
    if theta >= 1.0 {
        Rate::Finite(params.c_budget / params.c_sense)
    } else {
        br_finite_branch(theta, params)
    }
}

/// Busy fraction at which the tight budget and the mean-field equilibrium
/// meet. It does not depend on `lambda`.
pub fn theta_star(params: &SystemParams) -> f64 {
    let SystemParams { mu, gamma, c_sense, c_transmit, c_budget, .. } = *params;
    let s = gamma * c_budget + mu * c_sense + c_transmit;
    let disc = s * s - 4.0 * gamma * c_transmit * c_budget;
    assert!(disc > 0.0, "theta_star discriminant {disc} must be positive");
    // Smaller root via the product of roots to avoid cancellation.
    (2.0 * gamma * c_budget) / (s + disc.sqrt())
}

/// Classify the equilibrium. Ties resolve as the inequalities read: `<=`
/// for Case 1 and strict `>` for Case 2.
pub fn classify_mfe(params: &SystemParams) -> MfeOutcome {
    let SystemParams { lambda, mu, gamma, c_sense, c_transmit, .. } = *params;
    let l = params.budget_rhs();
    let free = (1.0 - gamma * lambda / (lambda + mu)).max(0.0);
    let case1_lhs = if free == 0.0 { f64::INFINITY } else { c_sense / free + c_transmit / mu };
    if case1_lhs <= l {
        return MfeOutcome::Case1;
    }
    let theta = theta_star(params);
    if c_sense / (1.0 - theta) + c_transmit / mu > l {
        let w_star = (params.c_budget / (1.0 - theta)) / (c_sense / (1.0 - theta) + c_transmit / mu - l);
        return MfeOutcome::Case2 { w_star, theta_star: theta };
    }
    let finite_rate = if free == 0.0 {
        params.c_budget / c_sense
    } else {
        (params.c_budget / free) / (c_sense / free + c_transmit / mu - l)
    };
    MfeOutcome::Case3 { finite_rate }
}

/// Sufficient condition for the best-response iteration to converge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceCheck {
    pub satisfied: bool,
    pub value: f64,
    /// `min{c_sense, c_sense + A}`; may be negative.
    pub b: f64,
}

/// `value = gamma c_budget |A| / (mu B^2)`, satisfied when `value < 1`.
pub fn convergence_condition(params: &SystemParams) -> ConvergenceCheck {
    let a = params.c_transmit / params.mu - params.budget_rhs();
    let b = params.c_sense.min(params.c_sense + a);
    let value = params.gamma * params.c_budget / (params.mu * b * b) * a.abs();
    ConvergenceCheck { satisfied: value < 1.0, value, b }
}

/// Local derivatives of the two maps composing the iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sensitivity {
    pub theta: f64,
    /// Derivative of the equilibrium busy fraction in `w`; always positive.
    pub dtheta_dw: f64,
    /// Derivative of the finite best-response branch in `theta`.
    pub dw_dtheta: f64,
    /// The same quantity without the square in the denominator. It differs
    /// from `dw_dtheta` and is kept only for comparison.
    pub dw_dtheta_unsquared: f64,
    /// `|dtheta_dw * dw_dtheta|`, the local contraction factor.
    pub product: f64,
}

/// Derivatives of `theta(w)` and `w(theta)` at `(w, theta(w))`.
pub fn sensitivity(w: f64, params: &SystemParams) -> Result<Sensitivity> {
    if !(w.is_finite() && w > 0.0) {
        return Err(Error::domain("sensitivity needs a finite w > 0"));
    }
    let SystemParams { lambda, mu, gamma, c_sense, c_budget, .. } = *params;
    let p = params.with_w(Rate::Finite(w));
    let theta = meanfield::equilibrium_theta(&p);
    let lead = gamma * lambda * lambda * mu;
    let d = (lambda + mu) * w * (1.0 - theta) + lambda * mu;
    let dtheta_dw = lead * (1.0 - theta) / (d * d + lead * w);
    let a = params.c_transmit / mu - params.budget_rhs();
    let denom = c_sense + a * (1.0 - theta);
    let dw_dtheta = c_budget * a / (denom * denom);
    Ok(Sensitivity {
        theta,
        dtheta_dw,
        dw_dtheta,
        dw_dtheta_unsquared: c_budget * a / denom,
        product: (dtheta_dw * dw_dtheta).abs(),
    })
}

/// How a best-response iteration ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Terminal {
    Converged,
    Oscillating,
    MaxIters,
}

impl Terminal {
    pub fn label(self) -> &'static str {
        match self {
            Terminal::Converged => "CONVERGED",
            Terminal::Oscillating => "OSCILLATING",
            Terminal::MaxIters => "MAX_ITERS",
        }
    }
}

impl fmt::Display for Terminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for CaseTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<CaseTag> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CASE1" => Ok(CaseTag::Case1),
            "CASE2" => Ok(CaseTag::Case2),
            "CASE3" => Ok(CaseTag::Case3),
            _ => Err(Error::domain(format!("unknown case `{s}`"))),
        }
    }
}

/// One iterate: the rate in force, the busy fraction it induces and the
/// resulting per-device AoI and energy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationStep {
    pub iter: usize,
    pub w: Rate,
    pub theta: f64,
    pub wp: AoiPair,
    pub wop: AoiPair,
    /// Budget energy per unit time; `inf` when every channel is busy.
    pub energy: f64,
}

impl IterationStep {
    pub fn aoi(&self, scheme: Scheme) -> AoiPair {
        match scheme {
            Scheme::WithPreemption => self.wp,
            Scheme::WithoutPreemption => self.wop,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationTrace {
    pub steps: Vec<IterationStep>,
    pub terminal: Terminal,
}

impl IterationTrace {
    pub fn final_w(&self) -> Rate {
        self.steps.last().expect("a trace has at least one step").w
    }

    /// The two alternating rates when the run ended in a cycle.
    pub fn cycle(&self) -> Option<(Rate, Rate)> {
        match (self.terminal, self.steps.as_slice()) {
            (Terminal::Oscillating, [.., a, b]) => Some((a.w, b.w)),
            _ => None,
        }
    }

    /// Write `iter,w,theta,avg_aoi_wp,avg_aoi_wop,peak_aoi_wp,peak_aoi_wop,energy`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["iter", "w", "theta", "avg_aoi_wp", "avg_aoi_wop", "peak_aoi_wp", "peak_aoi_wop", "energy"])?;
        for s in &self.steps {
            wtr.write_record([
                s.iter.to_string(),
                s.w.to_string(),
                s.theta.to_string(),
                s.wp.avg_aoi.to_string(),
                s.wop.avg_aoi.to_string(),
                s.wp.avg_peak_aoi.to_string(),
                s.wop.avg_peak_aoi.to_string(),
                s.energy.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Evaluate the induced busy fraction, AoI and energy for rate `w`.
pub fn evaluate(iter: usize, w: Rate, params: &SystemParams) -> Result<IterationStep> {
    let p = params.with_w(w);
    let theta = meanfield::equilibrium_theta(&p);
    let k = meanfield::equilibrium_effective_rate(&p);
    let (wp, wop) = analytic::aoi_both(params.lambda, params.mu, k)?;
    let energy = if theta < 1.0 {
        analytic::budget_energy_cost(params.lambda, params.mu, w, theta, params.c_sense, params.c_transmit)?
    } else {
        f64::INFINITY
    };
    Ok(IterationStep { iter, w, theta, wp, wop, energy })
}

/// Synchronous best-response iteration `w <- BR(gamma x_service*(w))`.
///
/// Stops as [`Terminal::Converged`] once successive rates agree to
/// [`ITERATION_TOL`] (two infinite rates agree), as
/// [`Terminal::Oscillating`] once the last four rates form a period-2
/// cycle, and otherwise after `max_iters` best responses. At `theta = 1`
/// the best response is taken as its limit `c_budget / c_sense`.
pub fn fixed_point_iterate(params: &SystemParams, w0: Rate, max_iters: usize) -> Result<IterationTrace> {
    if let Rate::Finite(v) = w0 {
        if !(v > 0.0) {
            return Err(Error::domain("w0 must be > 0"));
        }
    }
    let mut steps = vec![evaluate(0, w0, params)?];
    for i in 1..=max_iters {
        let prev = steps[i - 1];
        let next = best_response_closed(prev.theta, params);
        steps.push(evaluate(i, next, params)?);
        if next.relative_change(prev.w) < ITERATION_TOL {
            return Ok(IterationTrace { steps, terminal: Terminal::Converged });
        }
        if i >= 3 {
            let [a, b, c, d] = [steps[i - 3].w, steps[i - 2].w, steps[i - 1].w, steps[i].w];
            if d.relative_change(b) < ITERATION_TOL && c.relative_change(a) < ITERATION_TOL {
                return Ok(IterationTrace { steps, terminal: Terminal::Oscillating });
            }
        }
    }
    Ok(IterationTrace { steps, terminal: Terminal::MaxIters })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn costed(lambda: f64, gamma: f64) -> SystemParams {
        SystemParams::new(lambda, 1.0, gamma).with_costs(0.1, 0.2, 0.4)
    }

    /// Smallest positive zero of `theta - gamma x_service(BR(theta))` on the
    /// finite branch, located by bisection.
    fn theta_star_by_bisection(p: &SystemParams) -> f64 {
        let g = |t: f64| {
            let w = best_response_closed(t, p);
            t - p.gamma * meanfield::equilibrium(&p.with_w(w)).x_service
        };
        let (mut lo, mut hi) = (1e-12, 1.0 - 1e-15);
        assert!(g(lo) < 0.0 && g(hi) > 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn best_response_examples() {
        let p = costed(0.8, 5.0);
        assert_eq!(best_response(0.5, &p).unwrap(), Rate::INFINITY);
        assert_eq!(best_response(0.0, &p).unwrap(), Rate::INFINITY);
        let w = best_response(0.947_657, &p).unwrap().as_f64();
        assert!((w - 6.313).abs() < 1e-3, "{w}");
        assert!(best_response(1.0, &p).unwrap_err().is_domain());
        assert!(best_response(-0.1, &p).is_err());
    }

    #[test]
    fn best_response_saturates_budget() {
        let p = costed(0.8, 5.0);
        for &theta in &[0.9, 0.92, 0.947_657, 0.99, 0.999_9] {
            let w = best_response(theta, &p).unwrap();
            assert!(w.is_finite());
            let e = analytic::budget_energy_cost(p.lambda, p.mu, w, theta, p.c_sense, p.c_transmit).unwrap();
            assert!((e - p.c_budget).abs() < 1e-9, "theta {theta}: {e}");
        }
    }

    #[test]
    fn theta_star_values() {
        assert_relative_eq!(theta_star(&costed(0.8, 5.0)), 0.947_656_821_925_363_4, max_relative = 1e-13);
        assert_relative_eq!(theta_star(&costed(0.8, 2.0)), 0.862_541_391_182_312_7, max_relative = 1e-13);
        let base = theta_star(&costed(0.3, 2.0));
        for i in 0..=16 {
            let lambda = 0.3 + 0.1 * i as f64;
            assert_eq!(theta_star(&costed(lambda, 2.0)), base);
        }
    }

    #[test]
    fn theta_star_matches_bisection() {
        for p in [costed(0.8, 5.0), costed(1.0, 2.0), costed(1.9, 3.0)] {
            assert_relative_eq!(theta_star(&p), theta_star_by_bisection(&p), max_relative = 1e-10);
        }
    }

    #[test]
    fn classification_examples() {
        assert_eq!(classify_mfe(&costed(0.7, 2.0)), MfeOutcome::Case1);
        match classify_mfe(&costed(0.8, 5.0)) {
            MfeOutcome::Case2 { w_star, theta_star } => {
                assert_relative_eq!(w_star, 6.313_153_697_350_931, max_relative = 1e-10);
                assert_relative_eq!(theta_star, 0.947_656_821_925_363_4, max_relative = 1e-13);
            }
            other => panic!("{other:?}"),
        }
        let out = classify_mfe(&costed(1.0, 2.0));
        assert_eq!(out.tag(), CaseTag::Case2);
        assert_relative_eq!(out.w_star().unwrap().as_f64(), 22.824_751_652_906_07, max_relative = 1e-10);
    }

    #[test]
    fn case_boundaries_in_lambda_and_mu() {
        assert_eq!(classify_mfe(&costed(0.7, 2.0)).tag(), CaseTag::Case1);
        assert_eq!(classify_mfe(&costed(0.9, 2.0)).tag(), CaseTag::Case2);
        let mu = |m: f64| SystemParams::new(0.8, m, 2.0).with_costs(0.1, 0.2, 0.4);
        assert_eq!(classify_mfe(&mu(0.9)).tag(), CaseTag::Case2);
        assert_eq!(classify_mfe(&mu(1.1)).tag(), CaseTag::Case1);
    }

    #[test]
    fn case2_self_consistency() {
        for p in [costed(0.8, 5.0), costed(1.0, 2.0), costed(1.9, 2.0), costed(0.3, 5.0)] {
            let out = classify_mfe(&p);
            let w = out.w_star().unwrap();
            let theta = meanfield::equilibrium_theta(&p.with_w(w));
            assert_relative_eq!(theta, out.theta_star().unwrap(), max_relative = 1e-10);
            let again = best_response(theta, &p).unwrap();
            assert!(again.relative_change(w) < 1e-9, "{again} vs {w}");
        }
    }

    #[test]
    fn case1_self_consistency() {
        let p = costed(0.7, 2.0);
        let theta = meanfield::equilibrium_theta(&p.with_w(Rate::INFINITY));
        assert_relative_eq!(theta, 2.0 * 0.7 / 1.7, max_relative = 1e-15);
        assert_eq!(best_response(theta, &p).unwrap(), Rate::INFINITY);
    }

    #[test]
    fn convergence_condition_values() {
        let c = convergence_condition(&costed(0.8, 5.0));
        assert_relative_eq!(c.b, -0.6, max_relative = 1e-12);
        assert_relative_eq!(c.value, 5.0 * 0.4 / 0.36 * 0.7, max_relative = 1e-12);
        assert!(!c.satisfied);

        // c_transmit / mu = (1/lambda + 1/mu) c_budget
        let p = SystemParams::new(1.0, 1.0, 5.0).with_costs(0.1, 0.8, 0.4);
        let c = convergence_condition(&p);
        assert_eq!(c.value, 0.0);
        assert!(c.satisfied);

        let v1 = convergence_condition(&costed(0.8, 1.0)).value;
        let v3 = convergence_condition(&costed(0.8, 3.0)).value;
        assert_relative_eq!(v3, 3.0 * v1, max_relative = 1e-14);
    }

    #[test]
    fn iteration_reaches_fig5_equilibrium() {
        let p = costed(0.8, 5.0);
        let target = classify_mfe(&p).w_star().unwrap().as_f64();
        for w0 in [0.1, 1.0, 10.0] {
            let trace = fixed_point_iterate(&p, Rate::Finite(w0), DEFAULT_MAX_ITERS).unwrap();
            assert_eq!(trace.terminal, Terminal::Converged);
            assert!((trace.final_w().as_f64() - target).abs() < 1e-3);
            assert!(trace.steps.len() < 60);
            assert!(trace.steps.iter().enumerate().all(|(i, s)| s.iter == i));
        }
    }

    #[test]
    fn iteration_reaches_infinity_in_case1() {
        let trace = fixed_point_iterate(&costed(0.7, 2.0), Rate::Finite(1.0), 100).unwrap();
        assert_eq!(trace.terminal, Terminal::Converged);
        assert_eq!(trace.final_w(), Rate::INFINITY);
    }

    #[test]
    fn non_contractive_case2_cycles() {
        let p = costed(1.0, 2.0);
        assert!(!convergence_condition(&p).satisfied);
        let trace = fixed_point_iterate(&p, Rate::Finite(1.0), 100).unwrap();
        assert_eq!(trace.terminal, Terminal::Oscillating);
        let (a, b) = trace.cycle().unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        assert_eq!(hi, Rate::INFINITY);
        assert_relative_eq!(lo.as_f64(), p.c_budget / p.c_sense, max_relative = 1e-12);
    }

    #[test]
    fn max_iters_is_reported() {
        let trace = fixed_point_iterate(&costed(0.8, 5.0), Rate::Finite(1.0), 5).unwrap();
        assert_eq!(trace.terminal, Terminal::MaxIters);
        assert_eq!(trace.steps.len(), 6);
    }

    #[test]
    fn trace_csv_layout() {
        let trace = fixed_point_iterate(&costed(0.7, 2.0), Rate::Finite(1.0), 10).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "iter,w,theta,avg_aoi_wp,avg_aoi_wop,peak_aoi_wp,peak_aoi_wop,energy");
        assert_eq!(lines.count(), trace.steps.len());
        assert!(text.contains(",inf,"));
    }

    #[test]
    fn sensitivity_at_fig5_fixed_point() {
        let p = costed(0.8, 5.0);
        let w = classify_mfe(&p).w_star().unwrap().as_f64();
        let s = sensitivity(w, &p).unwrap();
        assert_relative_eq!(s.dtheta_dw, 0.007_562_8, max_relative = 1e-4);
        assert_relative_eq!(s.dw_dtheta, -69.7478, max_relative = 1e-5);
        assert!(s.product < 1.0);
    }

    #[test]
    fn squared_derivative_matches_finite_differences() {
        let p = costed(0.8, 5.0);
        let h = 1e-6;
        for &theta in &[0.9, 0.95, 0.99] {
            let fd = (best_response(theta + h, &p).unwrap().as_f64() - best_response(theta - h, &p).unwrap().as_f64())
                / (2.0 * h);
            let a = p.c_transmit / p.mu - p.budget_rhs();
            let exact = p.c_budget * a / (p.c_sense + a * (1.0 - theta)).powi(2);
            assert_relative_eq!(fd, exact, max_relative = 1e-6);
        }
        // w with theta(w) = 0.95 is irrelevant here: compare at the theta the
        // derivative is evaluated at.
        let s = sensitivity(6.0, &p).unwrap();
        let t = s.theta;
        let fd = (best_response(t + h, &p).unwrap().as_f64() - best_response(t - h, &p).unwrap().as_f64()) / (2.0 * h);
        assert_relative_eq!(fd, s.dw_dtheta, max_relative = 1e-6);
        assert!((fd - s.dw_dtheta_unsquared).abs() > 1.0);
    }

    #[test]
    fn contraction_along_fig5_run() {
        let p = costed(0.8, 5.0);
        let trace = fixed_point_iterate(&p, Rate::Finite(1.0), DEFAULT_MAX_ITERS).unwrap();
        for s in trace.steps.iter().skip(3) {
            let sens = sensitivity(s.w.as_f64(), &p).unwrap();
            assert!(sens.product < 1.0, "iterate {}: {}", s.iter, sens.product);
        }
    }

    fn params() -> impl Strategy<Value = SystemParams> {
        (0.05f64..5.0, 0.05f64..5.0, 0.1f64..10.0, 0.01f64..1.0, 0.01f64..1.0, 0.01f64..2.0)
            .prop_map(|(l, m, g, cs, ct, cb)| SystemParams::new(l, m, g).with_costs(cs, ct, cb))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn budget_tight_whenever_finite(p in params(), theta in 0.0f64..0.9999) {
            if let Rate::Finite(w) = best_response(theta, &p).unwrap() {
                let e = analytic::budget_energy_cost(p.lambda, p.mu, Rate::Finite(w), theta, p.c_sense, p.c_transmit).unwrap();
                prop_assert!((e - p.c_budget).abs() <= 1e-9 * p.c_budget.max(1.0), "{} vs {}", e, p.c_budget);
            }
        }

        #[test]
        fn case3_never_occurs(p in params()) {
            prop_assert_ne!(classify_mfe(&p).tag(), CaseTag::Case3);
        }

        #[test]
        fn theta_star_in_unit_interval(p in params()) {
            let t = theta_star(&p);
            prop_assert!(t > 0.0 && t < 1.0);
        }

        #[test]
        fn case2_is_a_fixed_point(p in params()) {
            if let MfeOutcome::Case2 { w_star, theta_star } = classify_mfe(&p) {
                prop_assert!(w_star > 0.0 && w_star.is_finite());
                let theta = meanfield::equilibrium_theta(&p.with_w(Rate::Finite(w_star)));
                prop_assert!((theta - theta_star).abs() < 1e-9);
                let again = best_response(theta, &p).unwrap();
                prop_assert!(again.relative_change(Rate::Finite(w_star)) < 1e-8);
            }
        }

        #[test]
        fn dtheta_dw_positive_and_matches_finite_differences(p in params(), w in 0.05f64..50.0) {
            let s = sensitivity(w, &p).unwrap();
            prop_assert!(s.dtheta_dw > 0.0);
            let h = 1e-6;
            let th = |v: f64| meanfield::equilibrium_theta(&p.with_w(Rate::Finite(v)));
            let fd = (th(w + h) - th(w - h)) / (2.0 * h);
            // 1e-9 absolute covers the central-difference rounding floor eps / h.
            prop_assert!((fd - s.dtheta_dw).abs() <= 1e-5 * s.dtheta_dw + 1e-9, "{} vs {}", fd, s.dtheta_dw);
        }
    }

    fn sample(rng: &mut rand_chacha::ChaCha8Rng) -> SystemParams {
        use rand::Rng;
        SystemParams::new(rng.random_range(0.05..5.0), rng.random_range(0.05..5.0), rng.random_range(0.1..10.0))
            .with_costs(rng.random_range(0.01..1.0), rng.random_range(0.01..1.0), rng.random_range(0.01..2.0))
    }

    #[test]
    fn dtheta_dw_finite_differences_at_fifty_points() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(50);
        for _ in 0..50 {
            let p = SystemParams::new(rng.random_range(0.2..2.0), rng.random_range(0.2..2.0), rng.random_range(0.5..5.0));
            let w = rng.random_range(0.1..10.0);
            let h = 1e-6;
            let th = |v: f64| meanfield::equilibrium_theta(&p.with_w(Rate::Finite(v)));
            let fd = (th(w + h) - th(w - h)) / (2.0 * h);
            assert_relative_eq!(fd, sensitivity(w, &p).unwrap().dtheta_dw, max_relative = 1e-5);
        }
    }

    #[test]
    fn classification_agrees_with_iteration_when_contractive() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 300 {
            let p = sample(&mut rng);
            if !convergence_condition(&p).satisfied {
                continue;
            }
            checked += 1;
            let w0 = Rate::Finite(rng.random_range(0.05..20.0));
            let trace = fixed_point_iterate(&p, w0, 5000).unwrap();
            assert_eq!(trace.terminal, Terminal::Converged, "{p:?}");
            let w = classify_mfe(&p).w_star().unwrap();
            assert!(trace.final_w().relative_change(w) < 1e-6, "{} vs {w} at {p:?}", trace.final_w());
        }
    }
}
