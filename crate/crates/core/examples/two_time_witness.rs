//! Two-time NPT witness `f = c00 + c11 E2+(t + tau) E1+(t)` for single-atom
//! fluorescence.

use emitter_entanglement::dynamics::{stationary_state, Liouvillian};
use emitter_entanglement::opalg::{pairs_to_multi, Bipartition, ModeGeometry};
use emitter_entanglement::qcore::{source_operator, EmitterModel};
use emitter_entanglement::witness::{multi_time_witness, sub_poisson_index};

fn main() -> emitter_entanglement::Result<()> {
    let model = EmitterModel::ensemble(1, 1.0, 0.0, false);
    let l = Liouvillian::new(&model)?;
    let ss = stationary_state(&model)?;
    let s = source_operator(&model)?;
    let idx = pairs_to_multi(&sub_poisson_index());
    let geometry = ModeGeometry::uniform(2)?;
    let cut = Bipartition::new(2, [2])?;
    for i in 0..=10 {
        let tau = 0.1 * i as f64;
        let v = multi_time_witness(&l, &ss.rho, &s, &idx, &[0.0, tau], &geometry, &cut)?;
        println!("tau {tau:4.1}  min eigenvalue {:+.5e}  {:?}", v.min_eigenvalue, v.classification);
    }
    Ok(())
}
