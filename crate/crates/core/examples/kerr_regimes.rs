//! Drive sweep of the Kerr mode: quadrature squeezing at weak drive,
//! sub-Poisson statistics at stronger drive.

use emitter_entanglement::dynamics::stationary_state;
use emitter_entanglement::qcore::EmitterModel;
use emitter_entanglement::witness::{moment_table, nonclassicality_verdict, squeezing_index, sub_poisson_index};
use emitter_entanglement::C64;

fn main() -> emitter_entanglement::Result<()> {
    let (kerr, n_max, points) = (10.0, 12, 40);
    let unit = C64::new(1.0, 0.0);
    println!("{:>8} {:>10} {:>14} {:>14}", "drive", "<a^dag a>", "squeezing", "sub-Poisson");
    for i in 0..points {
        let drive = 0.01 + (2.0 - 0.01) * i as f64 / (points - 1) as f64;
        let model = EmitterModel::kerr(n_max, kerr, drive, 0.0);
        let ss = stationary_state(&model)?;
        let table = moment_table(&model, &ss.rho, 2)?;
        let sq = nonclassicality_verdict(&table, unit, &squeezing_index())?;
        let sp = nonclassicality_verdict(&table, unit, &sub_poisson_index())?;
        println!(
            "{drive:8.4} {:10.5} {:14.3e} {:14.3e}",
            table.get(1, 1)?.re,
            sq.worst_minor.determinant,
            sp.worst_minor.determinant
        );
    }
    Ok(())
}
