//! The PT moment matrix of several directions is congruent to the
//! single-direction nonclassicality matrix, for any mode functions.

use emitter_entanglement::cli::random_chi;
use emitter_entanglement::dynamics::stationary_state;
use emitter_entanglement::opalg::{multi_indices_up_to, Bipartition, ModeGeometry};
use emitter_entanglement::qcore::EmitterModel;
use emitter_entanglement::witness::{congruence_check, moment_table};

fn main() -> emitter_entanglement::Result<()> {
    let models = [EmitterModel::ensemble(2, 1.0, 0.3, false), EmitterModel::kerr(12, 10.0, 0.25, 0.0)];
    for model in &models {
        let ss = stationary_state(model)?;
        let table = moment_table(model, &ss.rho, 2)?;
        for seed in 0..3 {
            let geometry = ModeGeometry::new(random_chi(3, seed))?;
            for b in Bipartition::all(3) {
                let r = congruence_check(&table, &geometry, &multi_indices_up_to(3, 2), &b)?;
                println!(
                    "{} seed {seed} {:<10} deviation {:.1e}  PT {:+.3e}  N {:+.3e}  agree {}",
                    if model.is_bosonic() { "kerr " } else { "atoms" },
                    r.bipartition,
                    r.max_deviation,
                    r.pt_min_eigenvalue,
                    r.nonclassical_min_eigenvalue,
                    r.signs_agree()
                );
            }
        }
    }
    Ok(())
}
