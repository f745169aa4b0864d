//! `cimsim`: batch front-end for the in-SRAM MAC simulator.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 simulation failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cim_core::DacScheme;
use commands::CliError;
use config::{RunConfig, SweepAxis, CONFIG_ENV};

#[derive(Parser, Debug)]
#[command(
    name = "cimsim",
    version,
    about = "Analog in-SRAM multiply-accumulate simulator"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; a resolved-config sidecar is written next to it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Monte-Carlo trials per configuration.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Bulk bias of the access transistor (V).
    #[arg(long = "v-bulk", global = true)]
    v_bulk: Option<f64>,
    #[arg(long, global = true, value_parser = ["linear", "sqrt"])]
    scheme: Option<String>,
    /// Worker threads for Monte-Carlo trials; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Bit-line discharge trace of one cell.
    Simulate {
        #[arg(long = "v-wl", conflicts_with = "code")]
        v_wl: Option<f64>,
        #[arg(long)]
        code: Option<u32>,
    },
    /// Parameter sweep.
    Sweep {
        #[arg(long, value_parser = ["v_bulk", "width", "code", "t_sample"])]
        axis: Option<String>,
        #[arg(long)]
        from: Option<f64>,
        #[arg(long)]
        to: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
    },
    /// One nominal multiplication.
    Mac {
        #[arg(short, long)]
        a: Option<u32>,
        #[arg(short, long)]
        b: Option<u32>,
    },
    /// Monte-Carlo accuracy statistics for one multiplication.
    Montecarlo {
        #[arg(short, long)]
        a: Option<u32>,
        #[arg(short, long)]
        b: Option<u32>,
        /// Also write per-trial results to `<out>.trials.csv`.
        #[arg(long)]
        dump_trials: bool,
    },
    /// Baseline versus body-biased comparison table.
    Compare {
        /// Operand pair as `AxB`; repeatable.
        #[arg(long = "case")]
        cases: Vec<String>,
    },
}

fn parse_case(s: &str) -> Result<[u32; 2], CliError> {
    let bad = || CliError::Usage(format!("case '{s}' must look like AxB"));
    let (a, b) = s.split_once(['x', 'X', '*']).ok_or_else(bad)?;
    Ok([
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    ])
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let g = &cli.global;
    let mut cfg = RunConfig::load(g.config.as_deref())?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(w) = g.workers {
        cfg.workers = w;
    }
    if let Some(v) = g.v_bulk {
        cfg.cell.v_bulk = v;
    }
    if let Some(s) = &g.scheme {
        cfg.dac.scheme = s
            .parse::<DacScheme>()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if let Some(n) = g.trials {
        cfg.montecarlo.trials = n;
        cfg.compare.trials = n;
    }
    match &cli.command {
        Command::Simulate { v_wl, code } => {
            if v_wl.is_some() {
                cfg.simulate.v_wl = *v_wl;
                cfg.simulate.code = None;
            }
            if code.is_some() {
                cfg.simulate.code = *code;
                cfg.simulate.v_wl = None;
            }
        }
        Command::Sweep {
            axis,
            from,
            to,
            points,
        } => {
            if let Some(axis) = axis {
                cfg.sweep.axis = match axis.as_str() {
                    "v_bulk" => SweepAxis::VBulk,
                    "width" => SweepAxis::Width,
                    "code" => SweepAxis::Code,
                    _ => SweepAxis::TSample,
                };
            }
            cfg.sweep.from = from.unwrap_or(cfg.sweep.from);
            cfg.sweep.to = to.unwrap_or(cfg.sweep.to);
            cfg.sweep.points = points.unwrap_or(cfg.sweep.points);
        }
        Command::Mac { a, b } => {
            cfg.mac.a = a.unwrap_or(cfg.mac.a);
            cfg.mac.b = b.unwrap_or(cfg.mac.b);
        }
        Command::Montecarlo { a, b, dump_trials } => {
            cfg.montecarlo.a = a.unwrap_or(cfg.montecarlo.a);
            cfg.montecarlo.b = b.unwrap_or(cfg.montecarlo.b);
            cfg.montecarlo.dump_trials |= dump_trials;
        }
        Command::Compare { cases } => {
            if !cases.is_empty() {
                cfg.compare.cases = cases
                    .iter()
                    .map(|c| parse_case(c))
                    .collect::<Result<_, _>>()?;
            }
        }
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve(cli)?;
    log::debug!("resolved configuration:\n{}", cfg.to_toml());
    let out = cli.global.out.as_deref();
    match cli.command {
        Command::Simulate { .. } => commands::simulate(&cfg, out),
        Command::Sweep { .. } => commands::sweep(&cfg, out),
        Command::Mac { .. } => commands::mac(&cfg, out),
        Command::Montecarlo { .. } => commands::montecarlo(&cfg, out),
        Command::Compare { .. } => commands::compare(&cfg, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cimsim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
