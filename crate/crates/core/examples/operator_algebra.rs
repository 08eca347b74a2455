//! Field-operator polynomials: parsing, normal/time ordering, partial
//! transposition and reduction to source moments.

use emitter_entanglement::opalg::{
    build_f_pt_matrix, normal_time_order, pairs_to_multi, parse_expr, partial_transpose, reduce_to_source,
    Bipartition, ModeGeometry,
};
use emitter_entanglement::C64;

fn main() -> emitter_entanglement::Result<()> {
    let p = parse_expr("E2+ E1+ E1- E2-@t1 + (0.5-1i)*E1-^2", 2)?;
    println!("written:        {p}");
    let ordered = normal_time_order(&p);
    println!("ordered:        {ordered}");

    let cut = Bipartition::new(2, [2])?;
    let pt = partial_transpose(&ordered, &cut)?;
    println!("PT on {cut}:  {pt}");
    println!("PT twice:       {}", partial_transpose(&pt, &cut)?);

    let geometry = ModeGeometry::new(vec![C64::new(1.0, 0.5), C64::new(-0.3, 0.8)])?;
    for term in reduce_to_source(&pt, &geometry)? {
        println!("  {:>28} x {}", format!("{:.4}", term.prefactor), term.key);
    }

    // PT matrix of f = c00 + c11 E2+ E1+, the two-direction form of the
    // sub-Poisson witness
    let m = build_f_pt_matrix(&pairs_to_multi(&[(0, 0), (1, 1)]), &cut)?;
    for (r, c, entry) in m.entries() {
        println!("  [{}, {}] = {entry}", m.index[r], m.index[c]);
    }
    Ok(())
}
