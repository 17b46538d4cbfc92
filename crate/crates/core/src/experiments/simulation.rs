use super::table::{cell, Table};
use super::{ExperimentSpec, Grid};
use crate::analytic::{self, AoiPair};
use crate::error::{Error, Result};
use crate::meanfield::{self, Trajectory};
use crate::model::{MeanFieldState, Rate, Scheme, SystemParams};
use crate::sim::{self, ConvergenceRow, PopulationConfig};

/// One `(lambda, scheme)` point of the single-device comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fig3Row {
    pub scheme: Scheme,
    pub lambda: f64,
    pub mu: f64,
    pub k: Rate,
    pub n_arrivals: u64,
    pub replications: usize,
    pub analytic: AoiPair,
    pub simulated: AoiPair,
    pub avg_stderr: f64,
    pub peak_stderr: f64,
}

impl Fig3Row {
    pub fn avg_rel_err(&self) -> f64 {
        (self.simulated.avg_aoi - self.analytic.avg_aoi).abs() / self.analytic.avg_aoi
    }

    pub fn peak_rel_err(&self) -> f64 {
        (self.simulated.avg_peak_aoi - self.analytic.avg_peak_aoi).abs() / self.analytic.avg_peak_aoi
    }
}

fn wrong_grid() -> Error {
    Error::domain("experiment spec carries the grid of another experiment")
}

/// Closed-form against simulated AoI of a single device over a grid of
/// arrival rates, both schemes. Each point pools `replications`
/// independent runs of `n_arrivals` arrivals.
pub fn run_fig3(spec: &ExperimentSpec) -> Result<Vec<Fig3Row>> {
    let Grid::Fig3 { lambdas, mu, k, n_arrivals } = &spec.grid else {
        return Err(wrong_grid());
    };
    let reps = spec.replications;
    let mut rows = Vec::with_capacity(2 * lambdas.len());
    for (i, &lambda) in lambdas.iter().enumerate() {
        for (j, scheme) in Scheme::ALL.into_iter().enumerate() {
            let analytic = analytic::aoi(scheme, lambda, *mu, *k)?;
            let first = ((2 * i + j) * reps) as u64;
            let s = sim::replicate_device(scheme, lambda, *mu, *k, *n_arrivals, reps, spec.seed, first)?;
            rows.push(Fig3Row {
                scheme,
                lambda,
                mu: *mu,
                k: *k,
                n_arrivals: *n_arrivals,
                replications: reps,
                analytic,
                simulated: AoiPair { avg_aoi: s.pooled.time_avg_aoi, avg_peak_aoi: s.pooled.mean_peak_aoi },
                avg_stderr: s.avg_aoi_stderr,
                peak_stderr: s.peak_aoi_stderr,
            });
        }
    }
    Ok(rows)
}

pub fn fig3_table(rows: &[Fig3Row]) -> Table {
    let mut t = Table::new([
        "scheme",
        "lambda",
        "mu",
        "k",
        "n_arrivals",
        "replications",
        "avg_aoi_analytic",
        "peak_aoi_analytic",
        "avg_aoi_sim",
        "peak_aoi_sim",
        "avg_aoi_stderr",
        "peak_aoi_stderr",
        "avg_rel_err",
        "peak_rel_err",
    ]);
    for r in rows {
        t.push(vec![
            cell(r.scheme),
            cell(r.lambda),
            cell(r.mu),
            cell(r.k),
            cell(r.n_arrivals),
            cell(r.replications),
            cell(r.analytic.avg_aoi),
            cell(r.analytic.avg_peak_aoi),
            cell(r.simulated.avg_aoi),
            cell(r.simulated.avg_peak_aoi),
            cell(r.avg_stderr),
            cell(r.peak_stderr),
            cell(r.avg_rel_err()),
            cell(r.peak_rel_err()),
        ]);
    }
    t
}

/// One column of the stationary AoI table: a simulated population size or
/// the mean-field limit (`n_devices == None`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TableIRow {
    pub n_devices: Option<u32>,
    pub m_channels: Option<u32>,
    pub lambda: f64,
    pub mu: f64,
    pub gamma: f64,
    pub w: f64,
    /// Measured effective waiting rate, or the equilibrium one.
    pub k: f64,
    pub wp: AoiPair,
    pub wop: AoiPair,
    /// Standard errors of `(avg, peak)` for each scheme; zero for the limit.
    pub wp_stderr: (f64, f64),
    pub wop_stderr: (f64, f64),
    pub replications: usize,
}

/// A sampled fraction trajectory of one population size.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRow {
    pub n_devices: u32,
    /// `sim_single`, `sim_mean` or `ode`.
    pub source: &'static str,
    pub trajectory: Trajectory,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fig4Output {
    pub params: SystemParams,
    pub trajectory_w: f64,
    pub table: Vec<TableIRow>,
    pub trajectories: Vec<TrajectoryRow>,
}

/// Density trajectories (one path, replication mean, ODE) for several
/// population sizes starting all idle, and the stationary AoI of
/// simulated populations next to the mean-field closed forms.
pub fn run_fig4_table1(spec: &ExperimentSpec) -> Result<Fig4Output> {
    let Grid::Fig4Table1 {
        lambda,
        mu,
        gamma,
        trajectory_w,
        trajectory_sizes,
        trajectory_horizon,
        sample_every,
        table_w,
        table_sizes,
        horizon,
        warmup,
    } = &spec.grid
    else {
        return Err(wrong_grid());
    };
    let base = SystemParams::new(*lambda, *mu, *gamma);
    let reps = spec.replications;
    let x0 = MeanFieldState::all_idle();

    let mut trajectories = Vec::new();
    let dyn_params = base.with_w(Rate::Finite(*trajectory_w));
    let ode = meanfield::integrate(&x0, &dyn_params, meanfield::DEFAULT_STEP, *trajectory_horizon)?
        .resample(*sample_every, *trajectory_horizon);
    for (j, &n) in trajectory_sizes.iter().enumerate() {
        let p = with_size(&dyn_params, n)?;
        let runs = sim::replicate(spec.seed, (j as u64) << 32, reps, |rng| {
            sim::simulate_density(&p, &x0, *trajectory_horizon, *sample_every, rng)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let mean = sim::mean_trajectory(&runs)?;
        let single = runs.into_iter().next().expect("at least one replication");
        trajectories.push(TrajectoryRow { n_devices: n, source: "sim_single", trajectory: single });
        trajectories.push(TrajectoryRow { n_devices: n, source: "sim_mean", trajectory: mean });
        trajectories.push(TrajectoryRow { n_devices: n, source: "ode", trajectory: ode.clone() });
    }

    let mut table = Vec::new();
    let stat_params = base.with_w(Rate::Finite(*table_w));
    let config = PopulationConfig::new(*horizon).with_warmup(*warmup);
    for (j, &n) in table_sizes.iter().enumerate() {
        let p = with_size(&stat_params, n)?;
        let s = sim::replicate_population(&p, &config, reps, spec.seed, (16 + j as u64) << 32)?;
        let pair = |x: &sim::SchemeSummary| AoiPair { avg_aoi: x.pooled.time_avg_aoi, avg_peak_aoi: x.pooled.mean_peak_aoi };
        table.push(TableIRow {
            n_devices: Some(n),
            m_channels: p.m_channels,
            lambda: *lambda,
            mu: *mu,
            gamma: *gamma,
            w: *table_w,
            k: s.k_measured,
            wp: pair(&s.wp),
            wop: pair(&s.wop),
            wp_stderr: (s.wp.avg_aoi_stderr, s.wp.peak_aoi_stderr),
            wop_stderr: (s.wop.avg_aoi_stderr, s.wop.peak_aoi_stderr),
            replications: reps,
        });
    }
    let k = meanfield::equilibrium_effective_rate(&stat_params);
    let (wp, wop) = analytic::aoi_both(*lambda, *mu, k)?;
    table.push(TableIRow {
        n_devices: None,
        m_channels: None,
        lambda: *lambda,
        mu: *mu,
        gamma: *gamma,
        w: *table_w,
        k: k.as_f64(),
        wp,
        wop,
        wp_stderr: (0.0, 0.0),
        wop_stderr: (0.0, 0.0),
        replications: 0,
    });
    Ok(Fig4Output { params: base, trajectory_w: *trajectory_w, table, trajectories })
}

fn with_size(params: &SystemParams, n: u32) -> Result<SystemParams> {
    let m = n as f64 / params.gamma;
    if m.fract() != 0.0 || m < 1.0 {
        return Err(Error::domain(format!("N = {n} is not a multiple of gamma = {}", params.gamma)));
    }
    params.with_population(n, m as u32).validate()
}

/// The stationary table and the long-format trajectory table.
pub fn fig4_table1_tables(out: &Fig4Output) -> (Table, Table) {
    let mut t = Table::new([
        "population",
        "n_devices",
        "m_channels",
        "lambda",
        "mu",
        "gamma",
        "w",
        "k",
        "avg_aoi_wp",
        "peak_aoi_wp",
        "avg_aoi_wop",
        "peak_aoi_wop",
        "avg_aoi_wp_stderr",
        "peak_aoi_wp_stderr",
        "avg_aoi_wop_stderr",
        "peak_aoi_wop_stderr",
        "replications",
    ]);
    for r in &out.table {
        let opt = |v: Option<u32>| v.map_or_else(|| "inf".to_string(), cell);
        t.push(vec![
            r.n_devices.map_or_else(|| "mean_field".to_string(), |n| format!("N={n}")),
            opt(r.n_devices),
            opt(r.m_channels),
            cell(r.lambda),
            cell(r.mu),
            cell(r.gamma),
            cell(r.w),
            cell(r.k),
            cell(r.wp.avg_aoi),
            cell(r.wp.avg_peak_aoi),
            cell(r.wop.avg_aoi),
            cell(r.wop.avg_peak_aoi),
            cell(r.wp_stderr.0),
            cell(r.wp_stderr.1),
            cell(r.wop_stderr.0),
            cell(r.wop_stderr.1),
            cell(r.replications),
        ]);
    }
    let mut tr = Table::new(["n_devices", "lambda", "mu", "gamma", "w", "t", "x_I", "x_W", "x_S", "source"]);
    let p = &out.params;
    for row in &out.trajectories {
        for (time, x) in &row.trajectory.samples {
            tr.push(vec![
                cell(row.n_devices),
                cell(p.lambda),
                cell(p.mu),
                cell(p.gamma),
                cell(out.trajectory_w),
                cell(time),
                cell(x.x_idle),
                cell(x.x_wait),
                cell(x.x_service),
                cell(row.source),
            ]);
        }
    }
    (t, tr)
}

/// Finite-`N` bias of the stationary fractions.
pub fn run_convergence(spec: &ExperimentSpec) -> Result<Vec<(ConvergenceRow, f64)>> {
    let Grid::Convergence { lambda, mu, gamma, w, sizes, device_time, min_window, warmup } = &spec.grid else {
        return Err(wrong_grid());
    };
    let reps = spec.replications;
    let window = |n: u32| (device_time / (n as f64 * reps as f64)).max(*min_window);
    let p = SystemParams::new(*lambda, *mu, *gamma).with_w(Rate::Finite(*w));
    let rows = sim::estimate_rate_of_convergence(
        &p,
        sizes,
        reps,
        |n| PopulationConfig::new(warmup + window(n)).with_warmup(*warmup),
        spec.seed,
    )?;
    Ok(rows.into_iter().map(|r| (r, window(r.n_devices))).collect())
}

pub fn convergence_table(rows: &[(ConvergenceRow, f64)]) -> Table {
    let mut t = Table::new([
        "n_devices",
        "m_channels",
        "replications",
        "window",
        "x_I",
        "x_W",
        "x_S",
        "x_I_stderr",
        "x_W_stderr",
        "x_S_stderr",
        "dev_x_I",
        "dev_x_W",
        "dev_x_S",
    ]);
    for (r, window) in rows {
        t.push(vec![
            cell(r.n_devices),
            cell(r.m_channels),
            cell(r.replications),
            cell(window),
            cell(r.estimate.x_idle),
            cell(r.estimate.x_wait),
            cell(r.estimate.x_service),
            cell(r.stderr[0]),
            cell(r.stderr[1]),
            cell(r.stderr[2]),
            cell(r.deviation[0]),
            cell(r.deviation[1]),
            cell(r.deviation[2]),
        ]);
    }
    t
}
