//! Moment witnesses against brute-force partial transposition of split
//! bosonic states.

use emitter_entanglement::oracle::{cross_validate, cross_validate_model, SplitterSpec};
use emitter_entanglement::opalg::Bipartition;
use emitter_entanglement::qcore::{DensityMatrix, EmitterModel};
use emitter_entanglement::C64;

fn main() -> emitter_entanglement::Result<()> {
    let cut = [Bipartition::new(2, [2])?];
    let half = SplitterSpec::symmetric(2)?;
    let report = |name: &str, r: &emitter_entanglement::oracle::CrossValidation| {
        let c = &r.comparisons[0];
        println!(
            "{name:<22} witness {:+.3e} ({})  oracle {:+.3e} ({})",
            c.witness_min_eigenvalue,
            if c.witness_negative { "negative" } else { "nonnegative" },
            c.oracle_min_eigenvalue,
            if c.oracle_npt { "NPT" } else { "PPT" }
        );
    };
    for drive in [0.1, 0.2, 0.3, 1.0] {
        let model = EmitterModel::kerr(10, 10.0, drive, 0.0);
        report(&format!("kerr drive {drive}"), &cross_validate_model(&model, &half, 2, &cut)?);
    }
    report("fock 1", &cross_validate(&DensityMatrix::fock(6, 1)?, &half, 2, &cut)?);
    report("coherent 0.5", &cross_validate(&DensityMatrix::coherent(22, C64::new(0.5, 0.0))?, &half, 2, &cut)?);
    report("thermal 0.2", &cross_validate(&DensityMatrix::thermal(22, 0.2)?, &half, 2, &cut)?);
    let tilted = SplitterSpec::new(vec![C64::new(0.6, 0.0), C64::from_polar(0.8, 1.0)])?;
    report("fock 2, 36:64 split", &cross_validate(&DensityMatrix::fock(6, 2)?, &tilted, 2, &cut)?);
    Ok(())
}
