//! Runs a scenario file through the library pipeline and writes the result
//! documents, as the `run` command does.
//!
//! `cargo run --example scenario_run -- scenarios/single_atom.toml out/`

use std::path::PathBuf;

use emitter_entanglement::cli::{run_scenario, write_run, Scenario};

fn main() -> emitter_entanglement::Result<()> {
    let mut args = std::env::args().skip(1);
    let file = PathBuf::from(args.next().unwrap_or_else(|| "scenarios/single_atom.toml".into()));
    let out = PathBuf::from(args.next().unwrap_or_else(|| "results".into()));
    let scenario = Scenario::load(&file)?;
    let results = run_scenario(&scenario, scenario.effective_seed(None))?;
    write_run(&results, &out)?;
    for v in &results.nonclassicality {
        println!("{:<12} min eigenvalue {:+.4e}", v.name, v.verdict.min_eigenvalue);
    }
    for e in &results.entanglement {
        println!("{:<12} PT min eigenvalue {:+.4e}", e.bipartition, e.verdict.min_eigenvalue);
    }
    println!("written to {}", out.display());
    Ok(())
}
