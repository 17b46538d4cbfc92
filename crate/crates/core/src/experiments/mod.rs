//! Named, reproducible experiments that regenerate tables and figures as
//! CSV files.
//!
//! Every experiment is a pure function of its [`ExperimentSpec`]: running
//! it twice writes byte-identical files. Each run writes
//! `<name>_<seed>.csv` (plus extra parts named `<name>_<seed>_<part>.csv`),
//! optional `.dat` mirrors, and a manifest `<name>_<seed>.manifest` listing
//! every file with its SHA-256 digest.

mod equilibria;
mod simulation;
mod table;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

pub use equilibria::{
    fig5_table, fig6_fig7_table, fig8_table, run_fig5, run_fig6_fig7, run_fig8_baselines, BaselineRow, Fig5Trace,
    Policy, Sweep, SweepRow,
};
pub use simulation::{
    convergence_table, fig3_table, fig4_table1_tables, run_convergence, run_fig3, run_fig4_table1, Fig3Row,
    Fig4Output, TableIRow, TrajectoryRow,
};
pub use table::{cell, Table};

use crate::error::{Error, Result};
use crate::model::Rate;

/// Relative improvement of `candidate` over `baseline`:
/// `(baseline - candidate) / candidate`.
pub fn improvement(baseline: f64, candidate: f64) -> f64 {
    (baseline - candidate) / candidate
}

/// The registered experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Experiment {
    Fig3,
    Fig4Table1,
    Fig5,
    Fig6Fig7,
    Fig8Baselines,
    Convergence,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Fig3,
        Experiment::Fig4Table1,
        Experiment::Fig5,
        Experiment::Fig6Fig7,
        Experiment::Fig8Baselines,
        Experiment::Convergence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Fig3 => "fig3",
            Experiment::Fig4Table1 => "fig4_table1",
            Experiment::Fig5 => "fig5",
            Experiment::Fig6Fig7 => "fig6_fig7",
            Experiment::Fig8Baselines => "fig8_baselines",
            Experiment::Convergence => "convergence",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Experiment> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s.trim())
            .ok_or_else(|| Error::UnknownExperiment(s.to_string()))
    }
}

/// Cost triple `(c_sense, c_transmit, c_budget)`.
pub type Costs = (f64, f64, f64);

/// Default costs of the game experiments.
pub const DEFAULT_COSTS: Costs = (0.1, 0.2, 0.4);

/// The swept values of the game experiments, `0.3, 0.5, ..., 1.9`.
pub fn sweep_grid() -> Vec<f64> {
    (0..9).map(|i| (3 + 2 * i) as f64 / 10.0).collect()
}

/// Parameter grid of each experiment.
#[derive(Clone, Debug, PartialEq)]
pub enum Grid {
    Fig3 { lambdas: Vec<f64>, mu: f64, k: Rate, n_arrivals: u64 },
    Fig4Table1 {
        lambda: f64,
        mu: f64,
        gamma: f64,
        /// Waiting rate of the density trajectories.
        trajectory_w: f64,
        trajectory_sizes: Vec<u32>,
        trajectory_horizon: f64,
        sample_every: f64,
        /// Waiting rate of the stationary table.
        table_w: f64,
        table_sizes: Vec<u32>,
        horizon: f64,
        warmup: f64,
    },
    Fig5 { lambda: f64, mu: f64, gamma: f64, costs: Costs, w0: Vec<Rate>, max_iters: usize },
    Fig6Fig7 { values: Vec<f64>, gammas: Vec<f64>, fixed_lambda: f64, fixed_mu: f64, costs: Costs },
    Fig8Baselines { values: Vec<f64>, gamma: f64, fixed_lambda: f64, fixed_mu: f64, costs: Costs, fixed_w: f64 },
    Convergence {
        lambda: f64,
        mu: f64,
        gamma: f64,
        w: f64,
        sizes: Vec<u32>,
        /// Device-time `N * window * replications` spent per size, capped
        /// below by `min_window` per run.
        device_time: f64,
        min_window: f64,
        warmup: f64,
    },
}

/// Everything an experiment run depends on.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    pub seed: u64,
    /// Independent replications per simulated point.
    pub replications: usize,
    pub grid: Grid,
    pub out_dir: PathBuf,
    /// Also write gnuplot `.dat` mirrors.
    pub dat: bool,
}

impl ExperimentSpec {
    /// The default recipe of `experiment`.
    pub fn new(experiment: Experiment, seed: u64) -> ExperimentSpec {
        let (replications, grid) = match experiment {
            Experiment::Fig3 => (
                10,
                Grid::Fig3 {
                    lambdas: (1..=10).map(|i| i as f64 / 10.0).collect(),
                    mu: 1.0,
                    k: Rate::Finite(2.0),
                    n_arrivals: 50_000,
                },
            ),
            Experiment::Fig4Table1 => (
                200,
                Grid::Fig4Table1 {
                    lambda: 0.8,
                    mu: 1.0,
                    gamma: 2.0,
                    trajectory_w: 2.0,
                    trajectory_sizes: vec![10, 100, 1000],
                    trajectory_horizon: 10.0,
                    sample_every: 0.1,
                    table_w: 1.0,
                    table_sizes: vec![10, 20, 50, 100],
                    horizon: 1000.0,
                    warmup: 500.0,
                },
            ),
            Experiment::Fig5 => (
                1,
                Grid::Fig5 {
                    lambda: 0.8,
                    mu: 1.0,
                    gamma: 5.0,
                    costs: DEFAULT_COSTS,
                    w0: vec![Rate::Finite(0.1), Rate::Finite(1.0), Rate::Finite(10.0)],
                    max_iters: 50,
                },
            ),
            Experiment::Fig6Fig7 => (
                1,
                Grid::Fig6Fig7 {
                    values: sweep_grid(),
                    gammas: vec![2.0, 5.0],
                    fixed_lambda: 0.8,
                    fixed_mu: 1.0,
                    costs: DEFAULT_COSTS,
                },
            ),
            Experiment::Fig8Baselines => (
                1,
                Grid::Fig8Baselines {
                    values: sweep_grid(),
                    gamma: 5.0,
                    fixed_lambda: 0.8,
                    fixed_mu: 1.0,
                    costs: DEFAULT_COSTS,
                    fixed_w: 1.0,
                },
            ),
            Experiment::Convergence => (
                20,
                Grid::Convergence {
                    lambda: 0.8,
                    mu: 1.0,
                    gamma: 2.0,
                    w: 2.0,
                    sizes: vec![10, 100, 1000],
                    device_time: 1.2e8,
                    min_window: 1000.0,
                    warmup: 50.0,
                },
            ),
        };
        ExperimentSpec { experiment, seed, replications, grid, out_dir: PathBuf::from("."), dat: false }
    }

    pub fn with_replications(mut self, replications: usize) -> ExperimentSpec {
        self.replications = replications;
        self
    }

    pub fn with_out_dir(mut self, dir: impl Into<PathBuf>) -> ExperimentSpec {
        self.out_dir = dir.into();
        self
    }

    pub fn with_dat(mut self, dat: bool) -> ExperimentSpec {
        self.dat = dat;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::domain("replications must be >= 1"));
        }
        let empty = match &self.grid {
            Grid::Fig3 { lambdas, .. } => lambdas.is_empty(),
            Grid::Fig4Table1 { trajectory_sizes, table_sizes, .. } => trajectory_sizes.is_empty() || table_sizes.is_empty(),
            Grid::Fig5 { w0, .. } => w0.is_empty(),
            Grid::Fig6Fig7 { values, gammas, .. } => values.is_empty() || gammas.is_empty(),
            Grid::Fig8Baselines { values, .. } => values.is_empty(),
            Grid::Convergence { sizes, .. } => sizes.is_empty(),
        };
        if empty {
            return Err(Error::domain(format!("experiment {} has an empty grid", self.experiment)));
        }
        let matches = matches!(
            (self.experiment, &self.grid),
            (Experiment::Fig3, Grid::Fig3 { .. })
                | (Experiment::Fig4Table1, Grid::Fig4Table1 { .. })
                | (Experiment::Fig5, Grid::Fig5 { .. })
                | (Experiment::Fig6Fig7, Grid::Fig6Fig7 { .. })
                | (Experiment::Fig8Baselines, Grid::Fig8Baselines { .. })
                | (Experiment::Convergence, Grid::Convergence { .. })
        );
        if !matches {
            return Err(Error::domain(format!("grid does not belong to experiment {}", self.experiment)));
        }
        Ok(())
    }

    /// File stem `<name>_<seed>` shared by every output.
    pub fn stem(&self) -> String {
        format!("{}_{}", self.experiment, self.seed)
    }
}

/// The tables an experiment produced, keyed by part name (`""` for the
/// main table).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExperimentOutput {
    pub parts: Vec<(String, Table)>,
}

/// Run an experiment without touching the filesystem.
pub fn run(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let parts = match spec.experiment {
        Experiment::Fig3 => vec![(String::new(), fig3_table(&run_fig3(spec)?))],
        Experiment::Fig4Table1 => {
            let (table, trajectories) = fig4_table1_tables(&run_fig4_table1(spec)?);
            vec![(String::new(), table), ("trajectories".to_string(), trajectories)]
        }
        Experiment::Fig5 => vec![(String::new(), fig5_table(&run_fig5(spec)?))],
        Experiment::Fig6Fig7 => vec![(String::new(), fig6_fig7_table(&run_fig6_fig7(spec)?))],
        Experiment::Fig8Baselines => vec![(String::new(), fig8_table(&run_fig8_baselines(spec)?))],
        Experiment::Convergence => vec![(String::new(), convergence_table(&run_convergence(spec)?))],
    };
    Ok(ExperimentOutput { parts })
}

/// One written file and its digest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub path: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    /// `sha256sum`-compatible listing.
    pub fn render(&self) -> String {
        self.entries.iter().map(|e| format!("{}  {}\n", e.sha256, e.file)).collect()
    }
}

fn write_file(dir: &Path, name: String, bytes: &[u8], entries: &mut Vec<ManifestEntry>) -> Result<()> {
    fs::write(dir.join(&name), bytes)?;
    entries.push(ManifestEntry { file: name, sha256: hex::encode(Sha256::digest(bytes)) });
    Ok(())
}

/// Write the output of `spec` into `spec.out_dir` together with its
/// manifest.
pub fn write(spec: &ExperimentSpec, output: &ExperimentOutput) -> Result<Manifest> {
    fs::create_dir_all(&spec.out_dir)?;
    let stem = spec.stem();
    let mut entries = Vec::new();
    for (part, table) in &output.parts {
        let base = if part.is_empty() { stem.clone() } else { format!("{stem}_{part}") };
        write_file(&spec.out_dir, format!("{base}.csv"), table.to_csv_string().as_bytes(), &mut entries)?;
        if spec.dat {
            let mut buf = Vec::new();
            table.write_dat(&mut buf)?;
            write_file(&spec.out_dir, format!("{base}.dat"), &buf, &mut entries)?;
        }
    }
    let manifest = Manifest { path: spec.out_dir.join(format!("{stem}.manifest")), entries };
    fs::write(&manifest.path, manifest.render())?;
    Ok(manifest)
}

/// [`run`] followed by [`write`].
pub fn run_and_write(spec: &ExperimentSpec) -> Result<Manifest> {
    let output = run(spec)?;
    write(spec, &output)
}
