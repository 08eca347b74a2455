//! Every bipartition of three directions is NPT for a single atom and for a
//! three-way split single photon.

use emitter_entanglement::dynamics::stationary_state;
use emitter_entanglement::opalg::{multi_indices_up_to, Bipartition, ModeGeometry};
use emitter_entanglement::oracle::{cross_validate, SplitterSpec};
use emitter_entanglement::qcore::{DensityMatrix, EmitterModel};
use emitter_entanglement::witness::{moment_table, multipartite_scan};

fn main() -> emitter_entanglement::Result<()> {
    let model = EmitterModel::ensemble(1, 1.0, 0.0, false);
    let ss = stationary_state(&model)?;
    let table = moment_table(&model, &ss.rho, 2)?;
    let report = multipartite_scan(&table, &ModeGeometry::uniform(3)?, &multi_indices_up_to(3, 2))?;
    for (b, v) in &report.verdicts {
        println!("atom {b:<10} min eigenvalue {:+.4e}", v.min_eigenvalue);
    }
    println!("atom: {}", report.summary);

    let photon = DensityMatrix::fock(4, 1)?;
    let check = cross_validate(&photon, &SplitterSpec::symmetric(3)?, 2, &Bipartition::all(3))?;
    for c in &check.comparisons {
        println!(
            "photon {:<10} witness {:+.4e}  oracle {:+.4e}",
            c.bipartition, c.witness_min_eigenvalue, c.oracle_min_eigenvalue
        );
    }
    Ok(())
}
