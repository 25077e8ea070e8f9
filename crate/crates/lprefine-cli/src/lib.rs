//! Command-line front end: instance loading, solver selection, JSON reports
//! and a CSV benchmark harness.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub mod bench;
pub mod io;
pub mod report;
pub mod solve;

pub use bench::cmd_bench;
pub use solve::cmd_solve;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "lprefine", version, about = "High-accuracy lp-norm regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one instance and write a JSON report.
    Solve(SolveArgs),
    /// Run a seeded suite and write one CSV row per instance.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    /// Refinement with the MWU residual solver, q-norm path when p ≥ ln m.
    Auto,
    /// Refinement with the binary-search MWU residual solver only.
    Mwu,
    Irls,
    ClassicIrls,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Direct,
    InverseMaintenance,
}

impl From<BackendArg> for lprefine::Backend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Direct => lprefine::Backend::Direct,
            BackendArg::InverseMaintenance => lprefine::Backend::InverseMaintenance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WarmStart {
    /// Feasible point closest to the origin.
    Zero,
    /// Minimizer of the quadratic part with ‖Nx‖² in place of ‖Nx‖ₚᵖ.
    L2,
    /// Doubling exponents 2, 4, … up to p.
    Homotopy,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub p: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub eps: f64,
    #[arg(long, value_enum, default_value_t = Algo::Auto)]
    pub algo: Algo,
    #[arg(long, value_enum, default_value_t = BackendArg::Direct)]
    pub backend: BackendArg,
    #[arg(long = "warm-start", value_enum, default_value_t = WarmStart::Zero)]
    pub warm_start: WarmStart,
    #[arg(long = "A")]
    pub a: Option<PathBuf>,
    #[arg(long = "M")]
    pub m: Option<PathBuf>,
    #[arg(long = "N")]
    pub n: Option<PathBuf>,
    #[arg(long = "d")]
    pub d: Option<PathBuf>,
    #[arg(long = "b")]
    pub b: Option<PathBuf>,
    /// Edge list, `u v [weight]` per line.
    #[arg(long, requires = "labels")]
    pub graph: Option<PathBuf>,
    /// `vertex value` per line.
    #[arg(long, requires = "graph")]
    pub labels: Option<PathBuf>,
    /// Generate an instance instead of reading one: `m1,m2,n,d`.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["graph", "n"])]
    pub synthetic: Option<Vec<usize>>,
    /// Give the synthetic instance a linear term.
    #[arg(long, requires = "synthetic")]
    pub linear: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "max-solves")]
    pub max_solves: Option<usize>,
    /// Iteration count of the classical IRLS baseline.
    #[arg(long = "max-iters", default_value_t = 100)]
    pub max_iters: usize,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Include wall-clock time (makes reports run-dependent).
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchMode {
    /// One MWU run per instance on a planted problem.
    Mwu,
    /// A full refinement solve per instance.
    Complete,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum, default_value_t = BenchMode::Mwu)]
    pub mode: BenchMode,
    /// Exponents; `--p` with no value gives an empty suite.
    #[arg(long, value_delimiter = ',', num_args = 0.., default_values_t = [2.0, 4.0, 8.0])]
    pub p: Vec<f64>,
    /// Row counts of `N`.
    #[arg(long, value_delimiter = ',', num_args = 0.., default_values_t = [64usize, 256, 1024])]
    pub m: Vec<usize>,
    #[arg(long, value_delimiter = ',', num_args = 0.., default_values_t = [0u64])]
    pub seeds: Vec<u64>,
    /// Columns of `N`.
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    /// Rows of `A`.
    #[arg(long, default_value_t = 4)]
    pub d: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub eps: f64,
    #[arg(long, value_enum, default_value_t = BackendArg::Direct)]
    pub backend: BackendArg,
    #[arg(long = "max-solves")]
    pub max_solves: Option<usize>,
    /// Worker threads; rows come out in suite order regardless.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub timings: bool,
}

pub fn run(cli: &Cli) -> i32 {
    match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

/// Writes `text` to `path`, or to standard output when there is none.
pub(crate) fn emit(path: Option<&std::path::Path>, text: &str) -> i32 {
    use std::io::Write;
    let res = match path {
        Some(p) => std::fs::write(p, text),
        None => std::io::stdout().lock().write_all(text.as_bytes()),
    };
    match res {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: cannot write output: {e}");
            EXIT_IO
        }
    }
}
