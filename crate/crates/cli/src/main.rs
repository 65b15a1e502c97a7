//! `iti`: runs the operator experiments and writes CSV reports.
//!
//! Exit codes: 0 when every assertion passes, 1 on a numerical assertion
//! failure, 2 on a configuration error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use iti_core::harness::{
    export_dtn, run_merge_equivalence, run_neumann_trace_check, run_oracle_validation,
    run_theorem_sweep, Report, SweepConfig,
};
use iti_core::Error;

#[derive(Parser, Debug)]
#[command(name = "iti", version, about = "Impedance-to-impedance operator experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Interior and boundary degrees, `n_int,n_b`.
    #[arg(long, global = true, value_parser = parse_resolution)]
    resolution: Option<(usize, usize)>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Per-k gains, fits, small-k and high-frequency checks.
    Sweep,
    /// Leaf solver against the separated closed-form modes.
    Oracle,
    /// Merged against directly computed operators on [0,2]x[0,1].
    MergeCheck,
    /// Boundary mass of Neumann eigenfunctions.
    Neumann,
    /// Export ItI and DtN operators of the unit square.
    Dtn,
}

fn parse_resolution(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected n_int,n_b, got '{s}'"))?;
    let n_int = a.trim().parse().map_err(|_| format!("bad n_int '{a}'"))?;
    let n_b = b.trim().parse().map_err(|_| format!("bad n_b '{b}'"))?;
    Ok((n_int, n_b))
}

fn load_config(cli: &Cli) -> iti_core::Result<SweepConfig> {
    let mut cfg = match &cli.config {
        Some(p) => SweepConfig::from_file(p)?,
        None => SweepConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some((n_int, n_b)) = cli.resolution {
        cfg.n_int = n_int;
        cfg.n_b = n_b;
        if cfg.twin_n_int <= n_int {
            cfg.twin_n_int = n_int + 8;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cmd: Command, cfg: &SweepConfig) -> iti_core::Result<Report> {
    match cmd {
        Command::Sweep => {
            let o = run_theorem_sweep(cfg)?;
            if let Some(f) = &o.fits {
                println!(
                    "c_minus exponent {:.4}, c_plus exponent {:.4}, wnorm exponent {:.4}",
                    f.c_minus_exponent, f.c_plus_exponent, f.w_exponent
                );
            }
            if let Some(e) = o.sharpness_exponent {
                println!("sharpness exponent {e:.4}");
            }
            Ok(o.report)
        }
        Command::Oracle => Ok(run_oracle_validation(cfg)?.1),
        Command::MergeCheck => Ok(run_merge_equivalence(cfg)?.1),
        Command::Neumann => {
            let o = run_neumann_trace_check(cfg)?;
            println!("min boundary mass {:.6} (twin {:.6})", o.min_trace, o.twin_min_trace);
            Ok(o.report)
        }
        Command::Dtn => {
            let files = export_dtn(cfg)?;
            println!("wrote {} operators", files.len());
            Ok(Report {
                name: "dtn".into(),
                failures: Vec::new(),
            })
        }
    }
}

fn is_config_error(e: &Error) -> bool {
    match e {
        Error::Config(_)
        | Error::InvalidParameter(_)
        | Error::NegativePotential { .. }
        | Error::Trapping { .. }
        | Error::NotACorner(..)
        | Error::InvalidRect { .. }
        | Error::Io(_) => true,
        Error::AtWavenumber { source, .. } | Error::TreeMerge { source, .. } => is_config_error(source),
        _ => false,
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let cfg = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(cli.command, &cfg) {
        Ok(report) if report.passed() => {
            println!("PASS {}", report.name);
            ExitCode::SUCCESS
        }
        Ok(report) => {
            for f in &report.failures {
                println!("FAIL {}: {f}", report.name);
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_config_error(&e) { 2 } else { 1 })
        }
    }
}
