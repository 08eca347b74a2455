//! Command-line scenario runner.
//!
//! ```text
//! emitter-entanglement run <file>   [--out DIR] [--seed N]
//! emitter-entanglement sweep <file> [--out DIR] [--seed N] [--workers N]
//! ```
//!
//! Exit codes: 0 success, 1 configuration or input error, 2 physics
//! precondition failure (truncation, degenerate steady state, ...).

mod pipeline;
mod scenario;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

pub use pipeline::{
    run_scenario, sweep_scenario, BipartiteResult, CorrelationResult, MappedWitness, MomentEntry, NamedVerdict,
    OracleResult, RunResults, SteadySummary, Summary, SweepResults, SweepRow, TwoTimeResult,
};
pub use scenario::{
    random_chi, AxisSpec, BipartitionSpec, ChiSpec, CorrelationSpec, GeometrySpec, ModelSpec, OracleSpec, OutputSpec,
    Scenario, SweepSpec, WitnessSpec, DEFAULT_MAX_POINTS, MAX_MODES, MAX_ORDER, SCHEMA_VERSION,
};

use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "emitter-entanglement", version, about = "Nonclassicality and NPT-entanglement verdicts for emitted light")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Output directory (overrides `[output] dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Seed for random mode functions (overrides the scenario).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate one scenario.
    Run { file: PathBuf },
    /// Evaluate a scenario over its `[sweep]` grid.
    Sweep { file: PathBuf },
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_physics() {
        2
    } else {
        1
    }
}

/// Parses `args` and executes the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn out_dir(cli: &Cli, scenario: &Scenario) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| scenario.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"))
}

/// Runs a parsed command, writing result files; returns the exit code.
pub fn execute(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Run { file } => {
            let scenario = Scenario::load(file)?;
            let seed = scenario.effective_seed(cli.seed);
            let results = run_scenario(&scenario, seed)?;
            let dir = out_dir(cli, &scenario);
            write_run(&results, &dir)?;
            println!("nonclassical: {}", results.summary.nonclassical);
            for (b, e) in &results.summary.entangled {
                println!("entangled {b}: {e}");
            }
            if let Some(m) = results.summary.multipartite_entangled {
                println!("all bipartitions NPT: {m}");
            }
            println!("results written to {}", dir.display());
            Ok(0)
        }
        Command::Sweep { file } => {
            let scenario = Scenario::load(file)?;
            let seed = scenario.effective_seed(cli.seed);
            let workers = cli.workers.unwrap_or(0);
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| Error::config("--workers", e.to_string()))?;
            let results = pool.install(|| sweep_scenario(&scenario, seed))?;
            let dir = out_dir(cli, &scenario);
            write_sweep(&results, &dir)?;
            let failed = results.failures();
            println!("{} grid points, {failed} failed; results written to {}", results.rows.len(), dir.display());
            Ok(if failed > 0 { 2 } else { 0 })
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.display().to_string(), source }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(io_err(path))
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::config("results", e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Writes `results.json`, `moments.csv` and, when present, `g2.dat`.
pub fn write_run(results: &RunResults, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_file(&dir.join("results.json"), &to_json(results)?)?;
    let path = dir.join("moments.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    let csv_err = |e: csv::Error| Error::config(path.display().to_string(), e.to_string());
    w.write_record(["a", "b", "re", "im"]).map_err(csv_err)?;
    for m in &results.moments {
        w.write_record([m.a.to_string(), m.b.to_string(), m.value.re.to_string(), m.value.im.to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(io_err(&path))?;
    if let Some(c) = &results.correlation {
        write_file(&dir.join("g2.dat"), &two_columns(&c.tau, &c.g2))?;
        write_file(&dir.join("g2_normalized.dat"), &two_columns(&c.tau, &c.g2_normalized))?;
    }
    Ok(())
}

fn two_columns(x: &[f64], y: &[f64]) -> String {
    let mut s = String::new();
    for (a, b) in x.iter().zip(y) {
        let _ = writeln!(s, "{a} {b}");
    }
    s
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(String::new, T::to_string)
}

/// Writes `sweep.json`, `sweep.csv` and two-column files of the squeezing
/// and sub-Poisson minors against the first swept parameter.
pub fn write_sweep(results: &SweepResults, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_file(&dir.join("sweep.json"), &to_json(results)?)?;
    let path = dir.join("sweep.csv");
    let csv_err = |e: csv::Error| Error::config(path.display().to_string(), e.to_string());
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    let second = results.parameters.get(1).cloned().unwrap_or_else(|| "second".into());
    w.write_record([
        "index",
        results.parameters[0].as_str(),
        second.as_str(),
        "status",
        "intensity",
        "squeezing_min_eigenvalue",
        "squeezing_minor",
        "sub_poisson_min_eigenvalue",
        "sub_poisson_minor",
        "order_min_eigenvalue",
        "atom_minor",
        "entanglement_min_eigenvalue",
        "nonclassical",
        "entangled",
    ])
    .map_err(csv_err)?;
    for r in &results.rows {
        w.write_record([
            r.index.to_string(),
            r.first.to_string(),
            opt(&r.second),
            r.status.clone(),
            opt(&r.intensity),
            opt(&r.squeezing_min_eigenvalue),
            opt(&r.squeezing_minor),
            opt(&r.sub_poisson_min_eigenvalue),
            opt(&r.sub_poisson_minor),
            opt(&r.order_min_eigenvalue),
            opt(&r.atom_minor),
            opt(&r.entanglement_min_eigenvalue),
            opt(&r.nonclassical),
            opt(&r.entangled),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_err(&path))?;
    let column = |f: fn(&SweepRow) -> Option<f64>| {
        let (x, y): (Vec<f64>, Vec<f64>) = results.rows.iter().filter_map(|r| f(r).map(|v| (r.first, v))).unzip();
        two_columns(&x, &y)
    };
    write_file(&dir.join("squeezing_minor.dat"), &column(|r| r.squeezing_minor))?;
    write_file(&dir.join("sub_poisson_minor.dat"), &column(|r| r.sub_poisson_minor))?;
    Ok(())
}
