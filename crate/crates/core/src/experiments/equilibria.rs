use std::fmt;

use super::table::{cell, Table};
use super::{improvement, Costs, ExperimentSpec, Grid};
use crate::analytic::{self, AoiPair};
use crate::error::{Error, Result};
use crate::game::{self, ConvergenceCheck, IterationTrace, MfeOutcome};
use crate::model::{Rate, SystemParams};

fn wrong_grid() -> Error {
    Error::domain("experiment spec carries the grid of another experiment")
}

fn params(lambda: f64, mu: f64, gamma: f64, costs: Costs) -> SystemParams {
    SystemParams::new(lambda, mu, gamma).with_costs(costs.0, costs.1, costs.2)
}

/// Best-response iteration from one starting rate.
#[derive(Clone, Debug, PartialEq)]
pub struct Fig5Trace {
    pub params: SystemParams,
    pub w0: Rate,
    pub outcome: MfeOutcome,
    pub convergence: ConvergenceCheck,
    pub trace: IterationTrace,
}

pub fn run_fig5(spec: &ExperimentSpec) -> Result<Vec<Fig5Trace>> {
    let Grid::Fig5 { lambda, mu, gamma, costs, w0, max_iters } = &spec.grid else {
        return Err(wrong_grid());
    };
    let p = params(*lambda, *mu, *gamma, *costs).validate()?;
    w0.iter()
        .map(|&start| {
            Ok(Fig5Trace {
                params: p,
                w0: start,
                outcome: game::classify_mfe(&p),
                convergence: game::convergence_condition(&p),
                trace: game::fixed_point_iterate(&p, start, *max_iters)?,
            })
        })
        .collect()
}

fn cost_cells(p: &SystemParams) -> [String; 6] {
    [cell(p.lambda), cell(p.mu), cell(p.gamma), cell(p.c_sense), cell(p.c_transmit), cell(p.c_budget)]
}

const PARAM_HEADER: [&str; 6] = ["lambda", "mu", "gamma", "c_sense", "c_transmit", "c_budget"];

pub fn fig5_table(traces: &[Fig5Trace]) -> Table {
    let mut header: Vec<&str> = vec!["w0"];
    header.extend(PARAM_HEADER);
    header.extend([
        "case",
        "w_star",
        "condition_value",
        "condition_satisfied",
        "terminal",
        "iter",
        "w",
        "theta",
        "avg_aoi_wp",
        "avg_aoi_wop",
        "peak_aoi_wp",
        "peak_aoi_wop",
        "energy",
    ]);
    let mut t = Table::new(header);
    for tr in traces {
        let w_star = tr.outcome.w_star().map_or_else(|| "none".to_string(), cell);
        for s in &tr.trace.steps {
            let mut row = vec![cell(tr.w0)];
            row.extend(cost_cells(&tr.params));
            row.extend([
                cell(tr.outcome.tag()),
                w_star.clone(),
                cell(tr.convergence.value),
                cell(tr.convergence.satisfied),
                cell(tr.trace.terminal),
                cell(s.iter),
                cell(s.w),
                cell(s.theta),
                cell(s.wp.avg_aoi),
                cell(s.wop.avg_aoi),
                cell(s.wp.avg_peak_aoi),
                cell(s.wop.avg_peak_aoi),
                cell(s.energy),
            ]);
            t.push(row);
        }
    }
    t
}

/// Which parameter a sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sweep {
    Lambda,
    Mu,
}

impl fmt::Display for Sweep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sweep::Lambda => "lambda",
            Sweep::Mu => "mu",
        })
    }
}

/// The operating point that a waiting rate induces.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub sweep: Sweep,
    pub params: SystemParams,
    pub outcome: MfeOutcome,
    pub w: Rate,
    pub theta: f64,
    pub k: Rate,
    pub wp: AoiPair,
    pub wop: AoiPair,
    /// Energy with sensing charged per attempt (the budgeted quantity).
    pub energy: f64,
    /// Energy with sensing charged per unit of waiting time.
    pub energy_time: f64,
}

fn operating_point(sweep: Sweep, p: &SystemParams, outcome: MfeOutcome, w: Rate) -> Result<SweepRow> {
    let step = game::evaluate(0, w, p)?;
    let k = crate::meanfield::equilibrium_effective_rate(&p.with_w(w));
    Ok(SweepRow {
        sweep,
        params: *p,
        outcome,
        w,
        theta: step.theta,
        k,
        wp: step.wp,
        wop: step.wop,
        energy: step.energy,
        energy_time: analytic::energy_cost(p.lambda, p.mu, k, p.c_sense, p.c_transmit)?,
    })
}

fn mfg_rate(outcome: &MfeOutcome) -> Rate {
    match *outcome {
        MfeOutcome::Case3 { finite_rate } => Rate::Finite(finite_rate),
        other => other.w_star().expect("cases 1 and 2 have an equilibrium rate"),
    }
}

fn sweep_points(values: &[f64], fixed_lambda: f64, fixed_mu: f64) -> Vec<(Sweep, f64, f64)> {
    let mut pts: Vec<(Sweep, f64, f64)> = values.iter().map(|&v| (Sweep::Lambda, v, fixed_mu)).collect();
    pts.extend(values.iter().map(|&v| (Sweep::Mu, fixed_lambda, v)));
    pts
}

/// The equilibrium over sweeps of `lambda` (at the fixed `mu`) and of `mu`
/// (at the fixed `lambda`), for every `gamma`.
pub fn run_fig6_fig7(spec: &ExperimentSpec) -> Result<Vec<SweepRow>> {
    let Grid::Fig6Fig7 { values, gammas, fixed_lambda, fixed_mu, costs } = &spec.grid else {
        return Err(wrong_grid());
    };
    let mut rows = Vec::new();
    for &gamma in gammas {
        for (sweep, lambda, mu) in sweep_points(values, *fixed_lambda, *fixed_mu) {
            let p = params(lambda, mu, gamma, *costs).validate()?;
            let outcome = game::classify_mfe(&p);
            rows.push(operating_point(sweep, &p, outcome, mfg_rate(&outcome))?);
        }
    }
    Ok(rows)
}

fn sweep_header(extra: &[&'static str]) -> Vec<&'static str> {
    let mut h = vec!["sweep"];
    h.extend_from_slice(extra);
    h.extend(PARAM_HEADER);
    h.extend([
        "case",
        "w",
        "theta",
        "k",
        "avg_aoi_wp",
        "peak_aoi_wp",
        "avg_aoi_wop",
        "peak_aoi_wop",
        "energy",
        "energy_time",
    ]);
    h
}

fn sweep_cells(r: &SweepRow) -> Vec<String> {
    let mut row = cost_cells(&r.params).to_vec();
    row.extend([
        cell(r.outcome.tag()),
        cell(r.w),
        cell(r.theta),
        cell(r.k),
        cell(r.wp.avg_aoi),
        cell(r.wp.avg_peak_aoi),
        cell(r.wop.avg_aoi),
        cell(r.wop.avg_peak_aoi),
        cell(r.energy),
        cell(r.energy_time),
    ]);
    row
}

pub fn fig6_fig7_table(rows: &[SweepRow]) -> Table {
    let mut t = Table::new(sweep_header(&[]));
    for r in rows {
        let mut row = vec![cell(r.sweep)];
        row.extend(sweep_cells(r));
        t.push(row);
    }
    t
}

/// Waiting-rate policy compared in the baseline experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Policy {
    Mfg,
    /// A constant waiting rate.
    Fixed,
    /// `w = max{lambda, mu}`.
    Dynamic,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Mfg => "mfg",
            Policy::Fixed => "fixed",
            Policy::Dynamic => "dynamic",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaselineRow {
    pub policy: Policy,
    pub point: SweepRow,
    /// Improvement of the equilibrium policy's WP average AoI over this
    /// policy's at the same parameters; zero on the equilibrium rows.
    pub mfg_improvement: f64,
}

/// The equilibrium policy against a fixed and a load-dependent waiting
/// rate, each evaluated at the mean-field equilibrium it induces.
pub fn run_fig8_baselines(spec: &ExperimentSpec) -> Result<Vec<BaselineRow>> {
    let Grid::Fig8Baselines { values, gamma, fixed_lambda, fixed_mu, costs, fixed_w } = &spec.grid else {
        return Err(wrong_grid());
    };
    let mut rows = Vec::new();
    for (sweep, lambda, mu) in sweep_points(values, *fixed_lambda, *fixed_mu) {
        let p = params(lambda, mu, *gamma, *costs).validate()?;
        let outcome = game::classify_mfe(&p);
        let mfg = operating_point(sweep, &p, outcome, mfg_rate(&outcome))?;
        rows.push(BaselineRow { policy: Policy::Mfg, point: mfg, mfg_improvement: 0.0 });
        for (policy, w) in [(Policy::Fixed, *fixed_w), (Policy::Dynamic, lambda.max(mu))] {
            let point = operating_point(sweep, &p, outcome, Rate::finite(w)?)?;
            let gain = improvement(point.wp.avg_aoi, mfg.wp.avg_aoi);
            rows.push(BaselineRow { policy, point, mfg_improvement: gain });
        }
    }
    Ok(rows)
}

pub fn fig8_table(rows: &[BaselineRow]) -> Table {
    let mut header = sweep_header(&["policy"]);
    header.push("mfg_improvement");
    let mut t = Table::new(header);
    for r in rows {
        let mut row = vec![cell(r.point.sweep), cell(r.policy)];
        row.extend(sweep_cells(&r.point));
        row.push(cell(r.mfg_improvement));
        t.push(row);
    }
    t
}
