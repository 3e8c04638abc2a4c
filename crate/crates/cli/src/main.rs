//! `qempar` command-line front end.
//!
//! Exit codes: 0 success, 1 bad arguments or configuration, 2 runtime failure.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qempar::engine::Simulation;
use qempar::report::ReportFormat;
use qempar::sweep::{aggregate, compare_routers};
use qempar::{emit_report, load_config, ComparisonTable, ResolvedConfig};

#[derive(Parser, Debug)]
#[command(
    name = "qempar",
    version,
    about = "QoS- and energy-aware multi-path routing simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario (one seed, one rate) and report it.
    Run {
        #[command(flatten)]
        common: Common,
        /// Placement and traffic seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Packet arrival rate in packets per second.
        #[arg(long)]
        rate: Option<f64>,
        /// Write the per-event log as JSON lines.
        #[arg(long, value_name = "PATH")]
        event_log: Option<PathBuf>,
    },
    /// Run every rate x seed x router cell and report per-rate means.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Seeds: `N..M`, `N..=M` or `a,b,c`.
        #[arg(long)]
        seeds: Option<String>,
        /// Comma-separated arrival rates.
        #[arg(long)]
        rates: Option<String>,
    },
    /// Resolve and check the configuration without running anything.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario file (flat TOML).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// qempar, minhop or both.
    #[arg(long)]
    router: Option<String>,
    /// csv or json.
    #[arg(long, default_value = "csv")]
    format: String,
    /// Report destination; stdout when absent.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set node_count=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

fn usage(e: impl ToString) -> Failure {
    Failure::Usage(e.to_string())
}

fn runtime(e: impl ToString) -> Failure {
    Failure::Runtime(e.to_string())
}

/// Parses `N..M` (exclusive), `N..=M` (inclusive), `a,b,c` or `N`.
fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let num = |t: &str| {
        t.trim()
            .parse::<u64>()
            .map_err(|_| format!("invalid seed `{}`", t.trim()))
    };
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..=") {
        (num(a)?..=num(b)?).collect()
    } else if let Some((a, b)) = s.split_once("..") {
        (num(a)?..num(b)?).collect()
    } else {
        s.split(',').map(num).collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err(format!("seed range `{s}` is empty"));
    }
    Ok(seeds)
}

fn toml_list<T: ToString>(xs: &[T]) -> String {
    format!(
        "[{}]",
        xs.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
    )
}

fn parse_rates(s: &str) -> Result<String, String> {
    let rates: Vec<f64> = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| format!("invalid rate `{}`", t.trim()))
        })
        .collect::<Result<_, _>>()?;
    // keep a decimal point so the value stays a float in TOML
    Ok(toml_list(
        &rates.iter().map(|r| format!("{r:?}")).collect::<Vec<_>>(),
    ))
}

fn resolve(common: &Common, mut extra: Vec<(String, String)>) -> Result<ResolvedConfig, Failure> {
    let mut overrides = Vec::new();
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(r) = &common.router {
        extra.push(("router".into(), format!("\"{r}\"")));
    }
    overrides.extend(extra);
    let resolved = load_config(common.config.as_deref(), &overrides).map_err(usage)?;
    eprintln!("# resolved configuration");
    eprint!("{resolved}");
    for w in &resolved.warnings {
        eprintln!("warning: {w}");
    }
    Ok(resolved)
}

fn write_report(table: &ComparisonTable, common: &Common) -> Result<(), Failure> {
    let format: ReportFormat = common.format.parse().map_err(usage)?;
    match &common.out {
        Some(path) => {
            let file = File::create(path)
                .map_err(|e| runtime(format!("cannot create {}: {e}", path.display())))?;
            emit_report(table, format, BufWriter::new(file)).map_err(runtime)
        }
        None => emit_report(table, format, io::stdout().lock()).map_err(runtime),
    }
}

fn check_any_path(table: &ComparisonTable) -> Result<(), Failure> {
    if !table.runs.is_empty() && table.runs.iter().all(|m| m.no_path) {
        return Err(runtime("no source-to-sink path exists in any run"));
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { common } => {
            let resolved = resolve(&common, Vec::new())?;
            let d0 = resolved.config.radio().map_err(usage)?.d0();
            eprintln!("# derived threshold distance d0 = {d0:.4} m");
            println!("configuration ok");
            Ok(())
        }
        Command::Run {
            common,
            seed,
            rate,
            event_log,
        } => {
            let mut extra = Vec::new();
            if let Some(s) = seed {
                extra.push(("seeds".into(), toml_list(&[s])));
            }
            if let Some(r) = rate {
                extra.push(("rates".into(), format!("[{r:?}]")));
            }
            let cfg = resolve(&common, extra)?.config;
            let routers = cfg.router.routers();
            if event_log.is_some() && routers.len() > 1 {
                return Err(usage(
                    "--event-log needs a single router; pass --router qempar or --router minhop",
                ));
            }
            let (rate, seed) = (cfg.rates[0], cfg.seeds[0]);
            let mut runs = Vec::new();
            for router in routers {
                let outcome = Simulation::new(&cfg, router, rate, seed)
                    .with_event_log(event_log.is_some())
                    .run()
                    .map_err(runtime)?;
                if let Some(path) = &event_log {
                    let file = File::create(path)
                        .map_err(|e| runtime(format!("cannot create {}: {e}", path.display())))?;
                    outcome
                        .write_event_log(BufWriter::new(file))
                        .map_err(runtime)?;
                }
                runs.push(outcome.metrics);
            }
            let table = aggregate(runs, 1);
            write_report(&table, &common)?;
            check_any_path(&table)
        }
        Command::Sweep {
            common,
            seeds,
            rates,
        } => {
            let mut extra = Vec::new();
            if let Some(s) = seeds {
                extra.push(("seeds".into(), toml_list(&parse_seeds(&s).map_err(usage)?)));
            }
            if let Some(r) = rates {
                extra.push(("rates".into(), parse_rates(&r).map_err(usage)?));
            }
            let cfg = resolve(&common, extra)?.config;
            let table = compare_routers(&cfg, &cfg.rates, &cfg.seeds, &cfg.router.routers())
                .map_err(runtime)?;
            write_report(&table, &common)?;
            check_any_path(&table)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Usage(msg) | Failure::Runtime(msg)) = &f;
            let _ = writeln!(io::stderr(), "error: {msg}");
            ExitCode::from(f.code())
        }
    }
}
