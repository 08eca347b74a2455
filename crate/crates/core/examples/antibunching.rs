//! Intensity correlation of single-atom fluorescence by quantum regression.

use emitter_entanglement::dynamics::{g2_series, stationary_state, Liouvillian};
use emitter_entanglement::qcore::{expectation, source_operator, EmitterModel};

fn main() -> emitter_entanglement::Result<()> {
    let model = EmitterModel::ensemble(1, 1.0, 0.0, false);
    let l = Liouvillian::new(&model)?;
    let ss = stationary_state(&model)?;
    let s = source_operator(&model)?;
    let n = expectation(&ss.rho, &s.normal_power(1, 1))?.re;
    let taus: Vec<f64> = (0..=40).map(|i| 0.25 * i as f64).chain([50.0]).collect();
    let (series, stats) = g2_series(&l, &ss.rho, &s, &taus)?;
    println!("{:>6} {:>12} {:>10}", "tau", "G2", "g2");
    for (t, v) in series.tau.iter().zip(&series.values) {
        println!("{t:6.2} {:12.6e} {:10.6}", v.re, v.re / (n * n));
    }
    println!("steps {} (rejected {}), trace drift {:.1e}", stats.steps, stats.rejected, stats.max_trace_drift);
    Ok(())
}
