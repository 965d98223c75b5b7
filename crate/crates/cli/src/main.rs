// Copyright 2026 the rda-core authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Command line driver for the rda-core experiment suites.

use clap::{Parser, Subcommand, ValueEnum};
use rda_core::error::Error;
use rda_core::experiments::{
    emit_outputs, fit_loglog_slope, run_ap_compare, run_asymptotics, run_convergence_2d,
    run_convergence_graph, run_kernel_table, spearman, ErrorTable, ExperimentConfig,
    ExperimentKind, SchemeKind,
};
use rda_core::hamiltonian::validate_profile;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "rda", about = "Simulations of multiscale stochastic \
reaction-diffusion-advection equations and their graph limit", version)]
struct Cli {
    /// Flat key=value configuration file; values override the experiment's
    /// built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for CSV, metadata, and plot script.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Apply the documented desk-scale Monte Carlo sizes.
    #[arg(long, global = true)]
    desk: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Time stepper.
    #[arg(long, global = true, value_enum)]
    scheme: Option<SchemeArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    ExpEuler,
    EulerMaruyama,
}

#[derive(Subcommand)]
enum Command {
    /// Stepsize convergence of the planar solver.
    #[command(name = "convergence-2d")]
    Convergence2d,
    /// Stepsize convergence of the graph solver.
    ConvergenceGraph,
    /// Asymptotic error of the particle estimators across epsilon.
    Asymptotics,
    /// One-step asymptotic comparison of the two steppers.
    ApCompare,
    /// Tabulate the configured covariance kernel.
    KernelTable,
    /// Check the structural assumptions on the Hamiltonian profile.
    ValidateProfile,
}

fn build_config(cli: &Cli, kind: ExperimentKind) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::defaults(kind);
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)?;
        cfg.apply_text(&text)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(scheme) = cli.scheme {
        cfg.scheme = match scheme {
            SchemeArg::ExpEuler => SchemeKind::ExponentialEuler,
            SchemeArg::EulerMaruyama => SchemeKind::EulerMaruyama,
        };
    }
    if cli.desk {
        cfg.apply_desk();
    }
    Ok(cfg)
}

fn report(table: &ErrorTable, cli: &Cli, stem: &str, fit: bool) -> Result<(), Error> {
    println!("{stem}:");
    println!("  label           error           std_error");
    for row in &table.rows {
        println!("  {:<15.6e} {:<15.6e} {:<15.6e}", row.label, row.error, row.std_error);
    }
    if fit {
        if table.is_exact() {
            println!("  all rows below {:.0e}: exact (no slope fitted)", 1e-8);
        } else {
            match fit_loglog_slope(table) {
                Ok((slope, hw)) => println!("  fitted slope {slope:.4} +/- {hw:.4} (95%)"),
                Err(e) => println!("  slope not fitted: {e}"),
            }
        }
    }
    if let Some(out) = &cli.out {
        let paths = emit_outputs(table, out, stem)?;
        for p in paths {
            println!("  wrote {}", p.display());
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Error> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Convergence2d => {
            let cfg = build_config(cli, ExperimentKind::Convergence2d)?;
            let table = run_convergence_2d(&cfg)?;
            report(&table, cli, "convergence_2d", true)
        }
        Command::ConvergenceGraph => {
            let cfg = build_config(cli, ExperimentKind::ConvergenceGraph)?;
            let table = run_convergence_graph(&cfg)?;
            report(&table, cli, "convergence_graph", true)
        }
        Command::Asymptotics => {
            let cfg = build_config(cli, ExperimentKind::Asymptotics)?;
            let table = run_asymptotics(&cfg)?;
            report(&table, cli, "asymptotics", false)?;
            if table.rows.len() >= 2 {
                println!("  spearman(epsilon, error) = {:.4}", spearman(&table));
            }
            Ok(())
        }
        Command::ApCompare => {
            let cfg = build_config(cli, ExperimentKind::ApCompare)?;
            let (exp_table, em_table) = run_ap_compare(&cfg)?;
            report(&exp_table, cli, "ap_compare_exp_euler", false)?;
            report(&em_table, cli, "ap_compare_euler_maruyama", false)
        }
        Command::KernelTable => {
            let cfg = build_config(cli, ExperimentKind::KernelTable)?;
            let table = run_kernel_table(&cfg)?;
            report(&table, cli, "kernel_table", false)
        }
        Command::ValidateProfile => {
            let cfg = build_config(cli, ExperimentKind::ProfileValidate)?;
            let profile = cfg.profile()?;
            let report = validate_profile(&profile, 20.0, 200);
            if report.passed {
                println!("profile ok: no violations on [0, 20] at 200 samples");
                Ok(())
            } else {
                for v in &report.violations {
                    println!("violation: {v:?}");
                }
                Err(Error::Config(format!(
                    "profile failed validation with {} violations",
                    report.violations.len()
                )))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ (Error::NonFiniteState { .. } | Error::NonFinite)) => {
            eprintln!("numerical failure: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
