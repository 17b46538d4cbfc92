use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use csma_aoi::Rate;

/// Closed-form AoI, mean-field equilibria, the waiting-rate game and
/// simulators for a CSMA status-update system.
///
/// Results go to stdout as CSV. Any flag except --config may instead be set
/// in the config file as `name = value`; flags win.
#[derive(Debug, Parser)]
#[command(name = "csma-aoi", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Root seed of every random stream [default: 0].
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory of `experiment` [default: .].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Flat `name = value` file supplying defaults for the other flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Independent replications per simulated point.
    #[arg(long, global = true)]
    pub replications: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads [default: available cores].
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Aligned columns instead of CSV.
    #[arg(long, global = true)]
    pub pretty: bool,
    /// Also write gnuplot `.dat` files (experiment only).
    #[arg(long, global = true)]
    pub dat: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Format, String> {
        <Format as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Average and peak AoI at a given k, or at the equilibrium k of --w.
    Aoi(AoiArgs),
    /// Stationary fractions of the mean-field dynamics.
    Equilibrium(MeanFieldArgs),
    /// Integrate the mean-field ODE.
    Integrate(IntegrateArgs),
    /// Classify the mean-field equilibrium of the waiting-rate game.
    Mfe(GameArgs),
    /// Best-response iteration trace.
    Iterate(IterateArgs),
    /// Stochastic simulation.
    #[command(subcommand)]
    Simulate(SimCommand),
    /// Run a named experiment and write its CSV files and manifest.
    Experiment(ExperimentArgs),
    /// Sufficient condition for the best-response iteration to converge.
    CheckConvergence(GameArgs),
}

#[derive(Debug, Args)]
pub struct Rates {
    /// Update arrival rate.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Transmission rate.
    #[arg(long)]
    pub mu: Option<f64>,
}

#[derive(Debug, Args)]
pub struct Costs {
    /// Sensing cost.
    #[arg(long)]
    pub cs: Option<f64>,
    /// Transmission cost.
    #[arg(long)]
    pub ct: Option<f64>,
    /// Energy budget.
    #[arg(long)]
    pub cbudget: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AoiArgs {
    /// wp, wop or both [default: both].
    #[arg(long)]
    pub scheme: Option<String>,
    #[command(flatten)]
    pub rates: Rates,
    /// Effective waiting rate (`inf` allowed).
    #[arg(long, conflicts_with_all = ["k_inf", "w"])]
    pub k: Option<Rate>,
    /// Shorthand for --k inf.
    #[arg(long)]
    pub k_inf: bool,
    /// Waiting rate; k is taken from the mean-field equilibrium (needs --gamma).
    #[arg(long, conflicts_with = "k_inf")]
    pub w: Option<Rate>,
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MeanFieldArgs {
    #[command(flatten)]
    pub rates: Rates,
    /// Devices per channel.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Waiting rate (`inf` allowed).
    #[arg(long)]
    pub w: Option<Rate>,
}

#[derive(Debug, Args)]
pub struct IntegrateArgs {
    #[command(flatten)]
    pub mf: MeanFieldArgs,
    /// Initial fractions `idle,wait,service` [default: 1,0,0].
    #[arg(long)]
    pub x0: Option<String>,
    /// RK4 step.
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Output grid spacing [default: 0.1].
    #[arg(long)]
    pub every: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GameArgs {
    #[command(flatten)]
    pub rates: Rates,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[command(flatten)]
    pub costs: Costs,
}

#[derive(Debug, Args)]
pub struct IterateArgs {
    #[command(flatten)]
    pub game: GameArgs,
    /// Starting waiting rate [default: 1].
    #[arg(long)]
    pub w0: Option<Rate>,
    #[arg(long)]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum SimCommand {
    /// One device with a fixed effective waiting rate.
    Device(DeviceArgs),
    /// N devices sharing M channels, both schemes on one sample path.
    Population(PopulationArgs),
    /// Population counts only, as a trajectory.
    Density(DensityArgs),
}

#[derive(Debug, Args)]
pub struct DeviceArgs {
    /// wp, wop or both [default: both].
    #[arg(long)]
    pub scheme: Option<String>,
    #[command(flatten)]
    pub rates: Rates,
    #[arg(long)]
    pub k: Option<Rate>,
    /// Arrivals per replication [default: 50000].
    #[arg(long)]
    pub arrivals: Option<u64>,
    #[command(flatten)]
    pub costs: Costs,
}

#[derive(Debug, Args)]
pub struct Population {
    /// Number of devices.
    #[arg(long)]
    pub n: Option<u32>,
    /// Number of channels.
    #[arg(long)]
    pub m: Option<u32>,
    #[arg(long)]
    pub w: Option<Rate>,
}

#[derive(Debug, Args)]
pub struct PopulationArgs {
    #[command(flatten)]
    pub rates: Rates,
    #[command(flatten)]
    pub population: Population,
    /// [default: 1000]
    #[arg(long)]
    pub horizon: Option<f64>,
    /// [default: horizon / 2]
    #[arg(long)]
    pub warmup: Option<f64>,
    #[command(flatten)]
    pub costs: Costs,
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    #[command(flatten)]
    pub rates: Rates,
    #[command(flatten)]
    pub population: Population,
    /// [default: 10]
    #[arg(long)]
    pub horizon: Option<f64>,
    /// [default: 0.1]
    #[arg(long)]
    pub every: Option<f64>,
    /// Initial fractions `idle,wait,service` [default: 1,0,0].
    #[arg(long)]
    pub x0: Option<String>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// fig3, fig4_table1, fig5, fig6_fig7, fig8_baselines or convergence.
    pub name: String,
}
