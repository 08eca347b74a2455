//! Resonance fluorescence of N atoms: the order-(N+1) minor built from
//! `S^{N+1} = 0` is negative, and the mapped two-direction witness detects
//! NPT entanglement.

use emitter_entanglement::dynamics::stationary_state;
use emitter_entanglement::opalg::{Bipartition, ModeGeometry, MultiIndex};
use emitter_entanglement::qcore::EmitterModel;
use emitter_entanglement::witness::{
    atom_index, best_atom_split, entanglement_verdict, map_witness, moment_table, nonclassicality_verdict,
};
use emitter_entanglement::C64;

fn main() -> emitter_entanglement::Result<()> {
    let cut = Bipartition::new(2, [2])?;
    let geometry = ModeGeometry::uniform(2)?;
    for collective in [false, true] {
        for atoms in 1..=3u32 {
            let model = EmitterModel::ensemble(atoms as usize, 1.0, 0.0, collective);
            let ss = stationary_state(&model)?;
            let table = moment_table(&model, &ss.rho, (atoms + 1).div_ceil(2))?;
            let k = best_atom_split(&table, atoms)?;
            let idx = atom_index(atoms, k);
            let verdict = nonclassicality_verdict(&table, C64::new(1.0, 0.0), &idx)?;
            let mapped = map_witness(&verdict.witness_coefficients, &idx)?;
            let multi: Vec<MultiIndex> = mapped.iter().map(|(l, _)| l.clone()).collect();
            let pt = entanglement_verdict(&table, &geometry, &multi, &cut)?;
            println!(
                "N={atoms} collective={collective:<5} <S^dag S>={:.4} minor{:?}={:+.4e} PT min eigenvalue={:+.4e}",
                table.get(1, 1)?.re,
                idx,
                verdict.worst_minor.determinant,
                pt.min_eigenvalue
            );
            let terms: Vec<String> = mapped.iter().map(|(l, c)| format!("({:.3}) E^{l}", c)).collect();
            println!("    f = {}", terms.join(" + "));
        }
    }
    Ok(())
}
