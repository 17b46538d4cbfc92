use std::io::Write;
use std::path::PathBuf;

use csma_aoi::experiments::{self, cell, Experiment, ExperimentSpec, Table};
use csma_aoi::sim::{self, PopulationConfig, DEFAULT_SAMPLE_EVERY};
use csma_aoi::{analytic, game, meanfield, MeanFieldState, Rate, Scheme, SystemParams, Trajectory};

use crate::args::{
    AoiArgs, Cli, Command, Costs, DensityArgs, DeviceArgs, ExperimentArgs, GameArgs, IntegrateArgs,
    IterateArgs, MeanFieldArgs, Population, PopulationArgs, Rates, SimCommand,
};
use crate::config::ConfigFile;
use crate::error::CliError;

type Result<T> = std::result::Result<T, CliError>;

/// Settings shared by every subcommand after merging flags and file.
struct Context {
    cfg: ConfigFile,
    seed: u64,
    out: PathBuf,
    replications: Option<usize>,
    pretty: bool,
    dat: bool,
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let g = cli.global;
    let cfg = match &g.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    cfg.pick(g.format, "format")?;
    if let Some(jobs) = cfg.pick(g.jobs, "jobs")? {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    let replications = cfg.pick(g.replications, "replications")?;
    if replications == Some(0) {
        return Err(CliError::Usage("--replications must be >= 1".into()));
    }
    let ctx = Context {
        seed: cfg.pick(g.seed, "seed")?.unwrap_or(0),
        out: cfg.pick(g.out, "out")?.unwrap_or_else(|| PathBuf::from(".")),
        replications,
        pretty: cfg.switch(g.pretty, "pretty")?,
        dat: cfg.switch(g.dat, "dat")?,
        cfg,
    };
    match cli.command {
        Command::Aoi(a) => aoi(&ctx, a, out),
        Command::Equilibrium(a) => equilibrium(&ctx, a, out),
        Command::Integrate(a) => integrate(&ctx, a, out),
        Command::Mfe(a) => mfe(&ctx, a, out),
        Command::Iterate(a) => iterate(&ctx, a, out),
        Command::Simulate(SimCommand::Device(a)) => device(&ctx, a, out),
        Command::Simulate(SimCommand::Population(a)) => population(&ctx, a, out),
        Command::Simulate(SimCommand::Density(a)) => density(&ctx, a, out),
        Command::Experiment(a) => experiment(&ctx, a, out),
        Command::CheckConvergence(a) => check_convergence(&ctx, a, out),
    }
}

impl Context {
    fn emit(&self, table: &Table, out: &mut dyn Write) -> Result<()> {
        if self.pretty {
            out.write_all(table.to_pretty().as_bytes())?;
        } else {
            table.write_csv(&mut *out)?;
        }
        Ok(())
    }

    fn rates(&self, r: &Rates) -> Result<(f64, f64)> {
        Ok((self.cfg.require(r.lambda, "lambda")?, self.cfg.require(r.mu, "mu")?))
    }

    fn costs(&self, c: &Costs) -> Result<(f64, f64, f64)> {
        let d = SystemParams::new(1.0, 1.0, 1.0);
        Ok((
            self.cfg.pick(c.cs, "cs")?.unwrap_or(d.c_sense),
            self.cfg.pick(c.ct, "ct")?.unwrap_or(d.c_transmit),
            self.cfg.pick(c.cbudget, "cbudget")?.unwrap_or(d.c_budget),
        ))
    }

    fn mean_field(&self, a: &MeanFieldArgs) -> Result<SystemParams> {
        let (lambda, mu) = self.rates(&a.rates)?;
        let gamma = self.cfg.require(a.gamma, "gamma")?;
        let w = self.cfg.require(a.w, "w")?;
        Ok(SystemParams::new(lambda, mu, gamma).with_w(w).validate()?)
    }

    fn game(&self, a: &GameArgs) -> Result<SystemParams> {
        let (lambda, mu) = self.rates(&a.rates)?;
        let gamma = self.cfg.require(a.gamma, "gamma")?;
        let (cs, ct, cb) = self.costs(&a.costs)?;
        Ok(SystemParams::new(lambda, mu, gamma).with_costs(cs, ct, cb).validate()?)
    }

    /// `N`, `M` and a finite `w`; `gamma = N / M`.
    fn population(&self, r: &Rates, p: &Population) -> Result<SystemParams> {
        let (lambda, mu) = self.rates(r)?;
        let n: u32 = self.cfg.require(p.n, "n")?;
        let m: u32 = self.cfg.require(p.m, "m")?;
        let w = self.cfg.require(p.w, "w")?;
        if m == 0 {
            return Err(CliError::Usage("--m must be >= 1".into()));
        }
        let gamma = f64::from(n) / f64::from(m);
        Ok(SystemParams::new(lambda, mu, gamma).with_w(w).with_population(n, m).validate()?)
    }

    fn schemes(&self, flag: Option<String>) -> Result<Vec<Scheme>> {
        match self.cfg.pick(flag, "scheme")?.as_deref() {
            None | Some("both") => Ok(Scheme::ALL.to_vec()),
            Some(s) => Ok(vec![s.parse()?]),
        }
    }

    fn initial(&self, flag: Option<String>, gamma: f64) -> Result<MeanFieldState> {
        let Some(text) = self.cfg.pick(flag, "x0")? else {
            return Ok(MeanFieldState::all_idle());
        };
        let parts = text
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| CliError::Usage(format!("--x0 `{text}`: {e}")))?;
        let [i, w, s] = parts[..] else {
            return Err(CliError::Usage(format!("--x0 `{text}`: expected three comma-separated fractions")));
        };
        Ok(MeanFieldState::new(i, w, s, gamma)?)
    }

    fn replications(&self, default: usize) -> usize {
        self.replications.unwrap_or(default)
    }
}

fn aoi(ctx: &Context, a: AoiArgs, out: &mut dyn Write) -> Result<()> {
    let (lambda, mu) = ctx.rates(&a.rates)?;
    let k = if ctx.cfg.switch(a.k_inf, "k-inf")? {
        Rate::INFINITY
    } else if let Some(k) = ctx.cfg.pick(a.k, "k")? {
        k
    } else if let Some(w) = ctx.cfg.pick(a.w, "w")? {
        let gamma = ctx.cfg.require(a.gamma, "gamma")?;
        meanfield::equilibrium_effective_rate(&SystemParams::new(lambda, mu, gamma).with_w(w).validate()?)
    } else {
        return Err(CliError::Usage("give one of --k, --k-inf or --w with --gamma".into()));
    };
    let mut t = Table::new(["scheme", "lambda", "mu", "k", "avg_aoi", "peak_aoi"]);
    for scheme in ctx.schemes(a.scheme)? {
        let r = analytic::aoi(scheme, lambda, mu, k)?;
        t.push(vec![cell(scheme), cell(lambda), cell(mu), cell(k), cell(r.avg_aoi), cell(r.avg_peak_aoi)]);
    }
    ctx.emit(&t, out)
}

fn equilibrium(ctx: &Context, a: MeanFieldArgs, out: &mut dyn Write) -> Result<()> {
    let p = ctx.mean_field(&a)?;
    let eq = meanfield::equilibrium(&p);
    let decay = if p.w.is_finite() { cell(meanfield::stability_rate(&p)?) } else { String::new() };
    let mut t =
        Table::new(["lambda", "mu", "gamma", "w", "x_I", "x_W", "x_S", "theta", "k", "stability_rate"]);
    t.push(vec![
        cell(p.lambda),
        cell(p.mu),
        cell(p.gamma),
        cell(p.w),
        cell(eq.x_idle),
        cell(eq.x_wait),
        cell(eq.x_service),
        cell(meanfield::equilibrium_theta(&p)),
        cell(meanfield::equilibrium_effective_rate(&p)),
        decay,
    ]);
    ctx.emit(&t, out)
}

fn trajectory_table(tr: &Trajectory, source: &str) -> Table {
    let mut t = Table::new(["t", "x_I", "x_W", "x_S", "source"]);
    for (time, x) in &tr.samples {
        t.push(vec![cell(time), cell(x.x_idle), cell(x.x_wait), cell(x.x_service), source.to_string()]);
    }
    t
}

fn integrate(ctx: &Context, a: IntegrateArgs, out: &mut dyn Write) -> Result<()> {
    let p = ctx.mean_field(&a.mf)?;
    let x0 = ctx.initial(a.x0, p.gamma)?;
    let step = ctx.cfg.pick(a.step, "step")?.unwrap_or(meanfield::DEFAULT_STEP);
    let horizon = ctx.cfg.pick(a.horizon, "horizon")?.unwrap_or(meanfield::DEFAULT_HORIZON);
    let every = ctx.cfg.pick(a.every, "every")?.unwrap_or(DEFAULT_SAMPLE_EVERY);
    if !(every.is_finite() && every > 0.0) {
        return Err(CliError::Usage("--every must be > 0".into()));
    }
    let tr = meanfield::integrate(&x0, &p, step, horizon)?.resample(every, horizon);
    ctx.emit(&trajectory_table(&tr, "ode"), out)
}

fn mfe(ctx: &Context, a: GameArgs, out: &mut dyn Write) -> Result<()> {
    let p = ctx.game(&a)?;
    let outcome = game::classify_mfe(&p);
    let mut t = Table::new([
        "case",
        "theta_star",
        "w_star",
        "lambda",
        "mu",
        "gamma",
        "c_sense",
        "c_transmit",
        "c_budget",
    ]);
    t.push(vec![
        cell(outcome.tag()),
        outcome.theta_star().map(cell).unwrap_or_default(),
        outcome.w_star().map(cell).unwrap_or_default(),
        cell(p.lambda),
        cell(p.mu),
        cell(p.gamma),
        cell(p.c_sense),
        cell(p.c_transmit),
        cell(p.c_budget),
    ]);
    ctx.emit(&t, out)
}

fn iterate(ctx: &Context, a: IterateArgs, out: &mut dyn Write) -> Result<()> {
    let p = ctx.game(&a.game)?;
    let w0 = ctx.cfg.pick(a.w0, "w0")?.unwrap_or(Rate::Finite(1.0));
    let max_iters = ctx.cfg.pick(a.max_iters, "max-iters")?.unwrap_or(game::DEFAULT_MAX_ITERS);
    let trace = game::fixed_point_iterate(&p, w0, max_iters)?;
    let mut t = Table::new([
        "iter",
        "w",
        "theta",
        "avg_aoi_wp",
        "avg_aoi_wop",
        "peak_aoi_wp",
        "peak_aoi_wop",
        "energy",
        "terminal",
    ]);
    for s in &trace.steps {
        t.push(vec![
            cell(s.iter),
            cell(s.w),
            cell(s.theta),
            cell(s.wp.avg_aoi),
            cell(s.wop.avg_aoi),
            cell(s.wp.avg_peak_aoi),
            cell(s.wop.avg_peak_aoi),
            cell(s.energy),
            cell(trace.terminal),
        ]);
    }
    ctx.emit(&t, out)
}

fn check_convergence(ctx: &Context, a: GameArgs, out: &mut dyn Write) -> Result<()> {
    let p = ctx.game(&a)?;
    let check = game::convergence_condition(&p);
    let outcome = game::classify_mfe(&p);
    let contraction = match outcome.w_star().and_then(Rate::value) {
        Some(w) => cell(game::sensitivity(w, &p)?.product),
        None => String::new(),
    };
    let mut t = Table::new(["satisfied", "value", "b", "case", "w_star", "contraction_at_w_star"]);
    t.push(vec![
        cell(check.satisfied),
        cell(check.value),
        cell(check.b),
        cell(outcome.tag()),
        outcome.w_star().map(cell).unwrap_or_default(),
        contraction,
    ]);
    ctx.emit(&t, out)
}

const STATS_HEADER: [&str; 13] = [
    "scheme",
    "lambda",
    "mu",
    "gamma",
    "w",
    "k_measured",
    "avg_aoi",
    "peak_aoi",
    "energy",
    "energy_time",
    "replications",
    "avg_aoi_stderr",
    "peak_aoi_stderr",
];

fn device(ctx: &Context, a: DeviceArgs, out: &mut dyn Write) -> Result<()> {
    let (lambda, mu) = ctx.rates(&a.rates)?;
    let k = ctx.cfg.require(a.k, "k")?;
    let arrivals = ctx.cfg.pick(a.arrivals, "arrivals")?.unwrap_or(50_000);
    let (cs, ct, _) = ctx.costs(&a.costs)?;
    let reps = ctx.replications(1);
    let mut t = Table::new(STATS_HEADER);
    for (j, scheme) in ctx.schemes(a.scheme)?.into_iter().enumerate() {
        let first = (j * reps) as u64;
        let s = sim::replicate_device(scheme, lambda, mu, k, arrivals, reps, ctx.seed, first)?;
        let st = s.pooled;
        t.push(vec![
            cell(scheme),
            cell(lambda),
            cell(mu),
            String::new(),
            String::new(),
            cell(st.k_measured),
            cell(st.time_avg_aoi),
            cell(st.mean_peak_aoi),
            cell(st.budget_energy_rate(cs, ct)),
            cell(st.energy_rate(cs, ct)),
            cell(reps),
            cell(s.avg_aoi_stderr),
            cell(s.peak_aoi_stderr),
        ]);
    }
    ctx.emit(&t, out)
}

fn population(ctx: &Context, a: PopulationArgs, out: &mut dyn Write) -> Result<()> {
    let p = ctx.population(&a.rates, &a.population)?;
    let horizon = ctx.cfg.pick(a.horizon, "horizon")?.unwrap_or(1000.0);
    let mut config = PopulationConfig::new(horizon);
    if let Some(warmup) = ctx.cfg.pick(a.warmup, "warmup")? {
        config = config.with_warmup(warmup);
    }
    let (cs, ct, _) = ctx.costs(&a.costs)?;
    let reps = ctx.replications(1);
    let s = sim::replicate_population(&p, &config, reps, ctx.seed, 0)?;
    let mut t = Table::new(STATS_HEADER);
    for scheme in Scheme::ALL {
        let sc = s.scheme(scheme);
        t.push(vec![
            cell(scheme),
            cell(p.lambda),
            cell(p.mu),
            cell(p.gamma),
            cell(p.w),
            cell(s.k_measured),
            cell(sc.pooled.time_avg_aoi),
            cell(sc.pooled.mean_peak_aoi),
            cell(sc.pooled.budget_energy_rate(cs, ct)),
            cell(sc.pooled.energy_rate(cs, ct)),
            cell(reps),
            cell(sc.avg_aoi_stderr),
            cell(sc.peak_aoi_stderr),
        ]);
    }
    ctx.emit(&t, out)
}

fn density(ctx: &Context, a: DensityArgs, out: &mut dyn Write) -> Result<()> {
    let p = ctx.population(&a.rates, &a.population)?;
    let horizon = ctx.cfg.pick(a.horizon, "horizon")?.unwrap_or(10.0);
    let every = ctx.cfg.pick(a.every, "every")?.unwrap_or(DEFAULT_SAMPLE_EVERY);
    let x0 = ctx.initial(a.x0, p.gamma)?;
    let runs = sim::replicate(ctx.seed, 0, ctx.replications(1), |rng| {
        sim::simulate_density(&p, &x0, horizon, every, rng)
    })
    .into_iter()
    .collect::<csma_aoi::Result<Vec<_>>>()?;
    ctx.emit(&trajectory_table(&sim::mean_trajectory(&runs)?, "density"), out)
}

fn experiment(ctx: &Context, a: ExperimentArgs, out: &mut dyn Write) -> Result<()> {
    let which: Experiment = a.name.parse()?;
    let mut spec = ExperimentSpec::new(which, ctx.seed).with_out_dir(&ctx.out).with_dat(ctx.dat);
    if let Some(r) = ctx.replications {
        spec = spec.with_replications(r);
    }
    let manifest = experiments::run_and_write(&spec)?;
    out.write_all(manifest.render().as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    fn run(args: &[&str]) -> Result<String> {
        let cli = Cli::try_parse_from(std::iter::once("csma-aoi").chain(args.iter().copied()))
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let mut buf = Vec::new();
        execute(cli, &mut buf)?;
        Ok(String::from_utf8(buf).unwrap())
    }

    fn field(csv: &str, row: usize, name: &str) -> String {
        let mut lines = csv.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        let col = header.iter().position(|h| *h == name).unwrap();
        lines.nth(row).unwrap().split(',').nth(col).unwrap().to_string()
    }

    #[test]
    fn aoi_output_equals_the_library_bit_for_bit() {
        let s = run(&["aoi", "--scheme", "wop", "--lambda", "0.37", "--mu", "1.3", "--k", "2.1"]).unwrap();
        let lib = analytic::aoi(Scheme::WithoutPreemption, 0.37, 1.3, Rate::Finite(2.1)).unwrap();
        assert_eq!(field(&s, 0, "avg_aoi").parse::<f64>().unwrap(), lib.avg_aoi);
        assert_eq!(field(&s, 0, "peak_aoi").parse::<f64>().unwrap(), lib.avg_peak_aoi);
    }

    #[test]
    fn aoi_from_waiting_rate_uses_the_equilibrium_k() {
        let s = run(&["aoi", "--scheme", "wp", "--lambda", "0.8", "--mu", "1", "--w", "1", "--gamma", "2"]).unwrap();
        let v: f64 = field(&s, 0, "avg_aoi").parse().unwrap();
        assert!((v - 3.811444).abs() < 1e-5);
    }

    #[test]
    fn missing_and_conflicting_inputs_are_usage_errors() {
        assert!(matches!(run(&["aoi", "--lambda", "0.8", "--mu", "1"]), Err(CliError::Usage(_))));
        assert!(matches!(run(&["aoi", "--mu", "1", "--k", "1"]), Err(CliError::Usage(_))));
        assert!(matches!(run(&["aoi", "--lambda", "1", "--mu", "1", "--k", "1", "--k-inf"]), Err(CliError::Usage(_))));
    }

    #[test]
    fn domain_errors_come_from_the_library() {
        let e = run(&["equilibrium", "--lambda=-1", "--mu", "1", "--gamma", "2", "--w", "1"]).unwrap_err();
        assert!(matches!(&e, CliError::Lib(l) if l.is_domain()));
        let e = run(&["simulate", "population", "--lambda", "1", "--mu", "1", "--n", "0", "--m", "1", "--w", "1"])
            .unwrap_err();
        assert!(matches!(e, CliError::Lib(_)));
    }

    #[test]
    fn initial_state_is_parsed_and_checked() {
        let s = run(&["integrate", "--lambda", "0.8", "--mu", "1", "--gamma", "2", "--w", "2", "--x0", "0,1,0"])
            .unwrap();
        assert_eq!(field(&s, 0, "x_W"), "1");
        assert!(run(&["integrate", "--lambda", "1", "--mu", "1", "--gamma", "2", "--w", "2", "--x0", "1,1"]).is_err());
        assert!(run(&["integrate", "--lambda", "1", "--mu", "1", "--gamma", "2", "--w", "2", "--x0", "0.5,0.1,0"])
            .is_err());
    }

    #[test]
    fn iterate_marks_every_row_with_the_terminal_state() {
        let s = run(&[
            "iterate", "--lambda", "0.8", "--mu", "1", "--gamma", "5", "--w0", "10", "--max-iters", "50",
        ])
        .unwrap();
        assert!(s.lines().skip(1).all(|l| l.ends_with(",CONVERGED")));
    }

    #[test]
    fn pretty_output_is_a_table() {
        let s = run(&["--pretty", "mfe", "--lambda", "0.8", "--mu", "1", "--gamma", "5"]).unwrap();
        assert!(!s.contains(','));
        assert!(s.contains("CASE2"));
    }
}
