//! `sieve`: fit, test, cross-validate, design and simulate sieve regressions
//! for experiments where every subject sees the same stimuli.

mod commands;
mod config;
mod error;
mod output;
mod tables;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{BasisFlags, ConstraintFlags};

#[derive(Debug, Parser)]
#[command(name = "sieve", version, about = "Sieve regression and Wald tests for shared-stimulus experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the pooled surface; writes report.json and surface.csv.
    Fit(FitArgs),
    /// Wald test of a linear restriction; writes report.json.
    Test(TestArgs),
    /// Leave-one-task-out selection of the polynomial degree; writes report.json.
    Cv(CvArgs),
    /// Build a stimulus design; writes stimuli.csv and report.json.
    Design(DesignArgs),
    /// Draw a synthetic panel; writes responses.csv, stimuli.csv and dgp.json.
    Generate(GenerateArgs),
    /// Run a seeded Monte Carlo study from a config file; writes study.json and cells.csv.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML config file; flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (default: out).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master seed for anything random.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Responses CSV: subject_id,task_id,response.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Stimuli CSV: task_id,x1,..,xd.
    #[arg(long)]
    pub stimuli: Option<PathBuf>,
    /// Binary covariates CSV: subject_id,z1,..,zq.
    #[arg(long)]
    pub covariates: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BasisArgs {
    /// Basis family: legendre or power.
    #[arg(long)]
    pub basis: Option<String>,
    /// Maximum degree per axis, e.g. 2,2.
    #[arg(long)]
    pub orders: Option<String>,
    /// Domain box as lo:hi per axis, e.g. -1:1,0:2.
    #[arg(long, allow_hyphen_values = true)]
    pub domain: Option<String>,
    /// Keep only terms of total degree at most this.
    #[arg(long)]
    pub total_degree: Option<usize>,
}

impl BasisArgs {
    fn flags(&self) -> BasisFlags {
        BasisFlags {
            family: self.basis.clone(),
            orders: self.orders.clone(),
            domain: self.domain.clone(),
            total_degree: self.total_degree,
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub basis: BasisArgs,
    /// Surface grid points per axis.
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Derivative multi-index to add to surface.csv, e.g. 1,0 (repeatable).
    #[arg(long = "derivative")]
    pub derivatives: Vec<String>,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub basis: BasisArgs,
    /// Restriction: point, derivative_sum, stevens or matrix_file.
    #[arg(long)]
    pub constraint: Option<String>,
    /// Points for the point restriction, e.g. 0.1,0.2;0.5,0.5.
    #[arg(long, allow_hyphen_values = true)]
    pub points: Option<String>,
    /// Hypothesised values at the points, e.g. 0,1.5.
    #[arg(long, allow_hyphen_values = true)]
    pub values: Option<String>,
    /// Restriction CSV with header c1,..,cP,gamma0.
    #[arg(long)]
    pub matrix_file: Option<PathBuf>,
    /// Covariance: known (needs --sigma-file) or plugin.
    #[arg(long)]
    pub sigma: Option<String>,
    /// Known T x T covariance CSV whose header lists the task ids.
    #[arg(long)]
    pub sigma_file: Option<PathBuf>,
}

impl TestArgs {
    fn constraint_flags(&self) -> ConstraintFlags {
        ConstraintFlags {
            kind: self.constraint.clone(),
            points: self.points.clone(),
            values: self.values.clone(),
            matrix_file: self.matrix_file.clone(),
        }
    }
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Basis family: legendre or power.
    #[arg(long)]
    pub basis: Option<String>,
    /// Domain box as lo:hi per axis.
    #[arg(long, allow_hyphen_values = true)]
    pub domain: Option<String>,
    /// Candidate degrees lo..hi, used on every axis.
    #[arg(long)]
    pub degrees: Option<String>,
    /// Cap candidates by total degree instead of per-axis degree.
    #[arg(long)]
    pub total: bool,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub basis: BasisArgs,
    /// halton or grid.
    #[arg(long)]
    pub generator: Option<String>,
    /// Number of Halton tasks.
    #[arg(long)]
    pub tasks: Option<usize>,
    /// Grid points per axis, e.g. 3,3.
    #[arg(long)]
    pub counts: Option<String>,
    /// Number of axes when --domain is not given.
    #[arg(long)]
    pub dim: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Truth: stevens, exp1d or exp_diff2d (a full truth can come from [generate].dgp).
    #[arg(long)]
    pub truth: Option<String>,
    /// Slope of the Stevens truth.
    #[arg(long, allow_hyphen_values = true)]
    pub kappa: Option<f64>,
    /// Cubic distortion of the Stevens truth.
    #[arg(long, allow_hyphen_values = true)]
    pub distortion: Option<f64>,
    /// Error model: iid, hetero or factor.
    #[arg(long)]
    pub errors: Option<String>,
    /// Error variance (iid, hetero).
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Variance gradient (hetero).
    #[arg(long)]
    pub gradient: Option<f64>,
    /// Subject effect variance (factor).
    #[arg(long)]
    pub sigma2_nu: Option<f64>,
    /// Idiosyncratic variance (factor).
    #[arg(long)]
    pub sigma2_u: Option<f64>,
    /// gaussian or uniform.
    #[arg(long)]
    pub noise: Option<String>,
    /// Domain box as lo:hi per axis.
    #[arg(long, allow_hyphen_values = true)]
    pub domain: Option<String>,
    /// Subjects.
    #[arg(long)]
    pub n: Option<usize>,
    /// halton or grid.
    #[arg(long)]
    pub generator: Option<String>,
    /// Number of Halton tasks.
    #[arg(long)]
    pub tasks: Option<usize>,
    /// Grid points per axis.
    #[arg(long)]
    pub counts: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Replications per cell.
    #[arg(long)]
    pub reps: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { error::EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let outcome = match &cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Test(a) => commands::test(a),
        Command::Cv(a) => commands::cv(a),
        Command::Design(a) => commands::design(a),
        Command::Generate(a) => commands::generate(a),
        Command::Simulate(a) => commands::simulate(a),
    };
    match outcome {
        Ok(written) => {
            for p in written {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("sieve: error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
