//! `olsp`: run routing experiments, replica sampling, scaling studies and
//! the averaged-SGD covariance check from one JSON config.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use olsp_core::experiment::{
    run_experiment, run_sampling, run_scaling_study, write_iasg_report, write_run_outputs, write_sampling_outputs,
    write_scaling_table, NetworkSpec, PairSpec,
};
use olsp_core::iasg::{verify_covariance, QuadraticProblem};
use olsp_core::linalg::Matrix;
use olsp_core::ofw::{EtaMode, GammaSchedule};
use olsp_core::{Error, ExperimentConfig64};

#[derive(Parser)]
#[command(name = "olsp", version, about = "Online shortest-path routing on dynamic networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Route every pair for T steps and write traces and regret reports.
    Run(Overrides),
    /// Sample replica costs and build confidence intervals.
    Sample(Overrides),
    /// Time the experiment across network sizes.
    Scale(Overrides),
    /// Check the averaged-SGD covariance prediction on a quadratic.
    IasgVerify(Overrides),
}

/// Flags override the config file, which overrides the defaults.
#[derive(Args, Default)]
struct Overrides {
    /// JSON config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of random source-sink pairs.
    #[arg(long)]
    pairs: Option<usize>,
    /// Number of nodes of the generated network.
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, value_enum)]
    eta_mode: Option<EtaArg>,
    #[arg(long, value_enum)]
    gamma: Option<GammaArg>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EtaArg {
    Theorem,
    Simulation,
    Sampler,
}

#[derive(Clone, Copy, ValueEnum)]
enum GammaArg {
    Theorem,
    Averaging,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl Overrides {
    fn resolve(&self) -> Result<ExperimentConfig64, Failure> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig64::load(path).map_err(|e| Failure::Config(e.to_string()))?,
            None => ExperimentConfig64::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
            cfg.iasg.run.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if let Some(k) = self.pairs {
            cfg.pairs = Some(PairSpec::Count(k));
        }
        if let Some(n) = self.nodes {
            cfg.network = match cfg.network {
                NetworkSpec::Generated {
                    degree_min, degree_max, ..
                } => NetworkSpec::Generated {
                    n_nodes: n,
                    degree_min,
                    degree_max,
                },
                NetworkSpec::File { .. } => NetworkSpec::Generated {
                    n_nodes: n,
                    degree_min: 2,
                    degree_max: 5,
                },
            };
            cfg.scaling_sizes = vec![n];
        }
        if let Some(t) = self.horizon {
            cfg.horizon = t;
            cfg.iasg.run.horizon = t;
        }
        if let Some(mode) = self.eta_mode {
            cfg.eta_mode = match mode {
                EtaArg::Theorem => EtaMode::Theorem,
                EtaArg::Simulation => EtaMode::Simulation,
                EtaArg::Sampler => EtaMode::Sampler,
            };
        }
        if let Some(g) = self.gamma {
            cfg.gamma = match g {
                GammaArg::Theorem => GammaSchedule::Theorem,
                GammaArg::Averaging => GammaSchedule::Averaging,
            };
        }
        if self.replicas.is_some() || self.alpha.is_some() {
            let mut section = cfg.sampler.take().unwrap_or_default();
            if let Some(l) = self.replicas {
                section.replicas = l;
                cfg.iasg.run.replicas = l;
            }
            if let Some(a) = self.alpha {
                section.alpha = a;
            }
            cfg.sampler = Some(section);
        }
        Ok(cfg)
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run(o) => {
            let cfg = o.resolve()?;
            let report = run_experiment(&cfg)?;
            write_run_outputs(&report, &cfg.out)?;
            for p in &report.pairs {
                println!(
                    "pair {} ({} -> {}): regret {:.6} / bound {:.3}{}",
                    p.pair_id,
                    p.source,
                    p.sink,
                    p.regret.regret,
                    p.regret.bound,
                    if p.regret.within_bound() { "" } else { "  EXCEEDED" }
                );
            }
            if report.clamped_entries() > 0 {
                log::info!("oracle clamped {} negative cost entries", report.clamped_entries());
            }
        }
        Command::Sample(o) => {
            let cfg = o.resolve()?;
            let report = run_sampling(&cfg)?;
            write_sampling_outputs(&report, &cfg.out)?;
            for iv in report.intervals.iter().flatten() {
                let r = &iv.report;
                println!(
                    "pair {} ({} -> {}): mean {:.6}, sigma_hat {:.6}, interval [{:.6}, {:.6}]",
                    iv.pair_id, iv.source, iv.sink, r.mean, r.sigma_hat, r.lower, r.upper
                );
            }
        }
        Command::Scale(o) => {
            let cfg = o.resolve()?;
            let rows = run_scaling_study(&cfg.scaling_sizes, &cfg)?;
            write_scaling_table(&rows, &cfg.out)?;
            println!(
                "{:>6} {:>12} {:>12} {:>6} {:>16}",
                "N", "total_s", "oracle_s", "T", "oracle_s/iter"
            );
            for r in &rows {
                println!(
                    "{:>6} {:>12.6} {:>12.6} {:>6} {:>16.3e}",
                    r.nodes, r.total_seconds, r.oracle_seconds, r.horizon, r.per_iteration_oracle_seconds
                );
            }
        }
        Command::IasgVerify(o) => {
            let cfg = o.resolve()?;
            let s = &cfg.iasg;
            let problem = Matrix::from_rows(&s.hessian)
                .and_then(|a| Ok((a, Matrix::from_rows(&s.noise_cov)?)))
                .and_then(|(a, c)| QuadraticProblem::new(a, s.optimum.clone(), c))
                .map_err(|e| Failure::Config(format!("iasg problem: {e}")))?;
            let report = verify_covariance(&problem, &s.run)?;
            write_iasg_report(&report, &cfg.out)?;
            println!(
                "relative Frobenius error {:.4} (tolerance {:.2}), identity residual {:.2e}: {}",
                report.relative_frobenius_error,
                report.tolerance,
                report.identity_residual,
                if report.passed { "PASS" } else { "FAIL" }
            );
            if !report.passed {
                return Err(Failure::Runtime("covariance check failed".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
