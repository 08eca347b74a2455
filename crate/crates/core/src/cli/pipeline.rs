//! Scenario pipelines: steady state, moments, verdicts, correlations and
//! oracle comparisons, collected into serializable result documents.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use super::scenario::{Scenario, SCHEMA_VERSION};
use crate::dynamics::{g2_series, stationary_state, Liouvillian, PropagationStats, SteadyState};
use crate::linalg::hermitian_form;
use crate::opalg::{multi_indices_up_to, order_k_pairs, Bipartition, HIndex, ModeGeometry, MultiIndex};
use crate::oracle::{cross_validate, CrossValidation, SplitterSpec};
use crate::qcore::{expectation, source_operator, EmitterModel};
use crate::witness::{
    atom_index, best_atom_split, congruence_check, entanglement_matrix, entanglement_verdict, map_witness,
    map_witness_rescaled, moment_table, multi_time_witness, multipartite_scan, nonclassicality_verdict,
    squeezing_index, sub_poisson_index, CongruenceReport, MomentTable, MultipartiteReport, Verdict, WitnessError,
};
use crate::{Error, Result, C64};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SteadySummary {
    pub residual: f64,
    pub propagation_deviation: f64,
    pub propagation_time: f64,
    pub reachable_dim: usize,
    /// `<S^dag S>`
    pub intensity: f64,
    /// `<S>`
    pub amplitude: C64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentEntry {
    pub a: u32,
    pub b: u32,
    pub value: C64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NamedVerdict {
    pub name: String,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BipartiteResult {
    pub bipartition: String,
    pub verdict: Verdict,
    pub congruence: CongruenceReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MappedWitness {
    /// Name of the single-direction witness that was mapped.
    pub source: String,
    pub bipartition: String,
    /// Same coefficients, re-indexed onto multi-indices.
    pub coefficients: Vec<(String, C64)>,
    /// Coefficients rescaled by the mode functions.
    pub rescaled_coefficients: Vec<(String, C64)>,
    /// `c^dag P c` of the rescaled coefficients on the PT matrix.
    pub rescaled_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorrelationResult {
    pub tau: Vec<f64>,
    /// `G2(tau)`, real part.
    pub g2: Vec<f64>,
    /// Largest `|Im G2(tau)|`.
    pub max_imaginary: f64,
    /// `G2(tau) / <S^dag S>^2`.
    pub g2_normalized: Vec<f64>,
    pub stats: PropagationStats,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TwoTimeResult {
    pub lag: f64,
    pub bipartition: String,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum OracleResult {
    Compared(CrossValidation),
    NotApplicable { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub nonclassical: bool,
    pub entangled: BTreeMap<String, bool>,
    pub multipartite_entangled: Option<bool>,
}

/// Result document of `run`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunResults {
    pub schema_version: u32,
    pub name: Option<String>,
    pub seed: u64,
    pub model: EmitterModel,
    pub geometry: Vec<C64>,
    pub order: u32,
    pub steady_state: SteadySummary,
    pub moments: Vec<MomentEntry>,
    pub nonclassicality: Vec<NamedVerdict>,
    pub entanglement: Vec<BipartiteResult>,
    pub mapped_witness: Option<MappedWitness>,
    pub multipartite: Option<MultipartiteReport>,
    pub correlation: Option<CorrelationResult>,
    pub two_time: Option<TwoTimeResult>,
    pub oracle: Option<OracleResult>,
    pub summary: Summary,
}

/// Table order covering the index sets of order `order` and, for `N`
/// atoms, the order-`N+1` atom minor.
fn table_order(model: &EmitterModel, order: u32) -> u32 {
    match model {
        EmitterModel::TwoLevelEnsemble(e) => order.max((e.atoms as u32 + 1).div_ceil(2)),
        EmitterModel::KerrMode(_) => order,
    }
}

/// Named single-direction index sets evaluated for every scenario.
fn named_index_sets(model: &EmitterModel, table: &MomentTable, order: u32) -> Result<Vec<(String, Vec<HIndex>)>> {
    let mut sets = vec![
        (format!("order_{order}"), order_k_pairs(order)),
        ("squeezing".to_string(), squeezing_index()),
        ("sub_poisson".to_string(), sub_poisson_index()),
    ];
    if let EmitterModel::TwoLevelEnsemble(e) = model {
        let n = e.atoms as u32;
        let k = best_atom_split(table, n)?;
        sets.push((format!("atom_k{k}"), atom_index(n, k)));
    }
    Ok(sets)
}

fn summarize_state(model: &EmitterModel, ss: &SteadyState) -> Result<SteadySummary> {
    let s = source_operator(model)?;
    Ok(SteadySummary {
        residual: ss.residual,
        propagation_deviation: ss.propagation_deviation,
        propagation_time: ss.propagation_time,
        reachable_dim: ss.reachable_dim,
        intensity: expectation(&ss.rho, &s.normal_power(1, 1))?.re,
        amplitude: expectation(&ss.rho, &s)?,
    })
}

fn labelled(coeffs: &[(MultiIndex, C64)]) -> Vec<(String, C64)> {
    coeffs.iter().map(|(l, c)| (l.to_string(), *c)).collect()
}

fn mapped_witness(
    table: &MomentTable,
    geometry: &ModeGeometry,
    nonclassicality: &[NamedVerdict],
    sets: &[(String, Vec<HIndex>)],
    bipartition: &Bipartition,
) -> Result<Option<MappedWitness>> {
    let Some((i, best)) = nonclassicality
        .iter()
        .enumerate()
        .filter(|(_, v)| v.verdict.is_negative())
        .min_by(|a, b| a.1.verdict.min_eigenvalue.total_cmp(&b.1.verdict.min_eigenvalue))
    else {
        return Ok(None);
    };
    let idx = &sets[i].1;
    let coeffs = &best.verdict.witness_coefficients;
    let plain = if bipartition.modes() == 2 && bipartition.transposed().contains(&2) {
        map_witness(coeffs, idx)?
    } else {
        crate::witness::map_witness_multipartite(coeffs, idx, bipartition)?
    };
    let rescaled = map_witness_rescaled(coeffs, idx, C64::new(1.0, 0.0), geometry, bipartition)?;
    let multi: Vec<MultiIndex> = rescaled.iter().map(|(l, _)| l.clone()).collect();
    let p = entanglement_matrix(table, geometry, &multi, bipartition)?;
    let c = nalgebra::DVector::from_iterator(rescaled.len(), rescaled.iter().map(|(_, c)| *c));
    Ok(Some(MappedWitness {
        source: best.name.clone(),
        bipartition: bipartition.to_string(),
        coefficients: labelled(&plain),
        rescaled_coefficients: labelled(&rescaled),
        rescaled_value: hermitian_form(&p.matrix, &c).re,
    }))
}

/// Executes the `run` pipeline.
pub fn run_scenario(scenario: &Scenario, seed: u64) -> Result<RunResults> {
    let model = scenario.model.to_model()?;
    let geometry = scenario.geometry(seed)?;
    let bipartitions = scenario.bipartitions()?;
    let order = scenario.witness.order;
    let modes = geometry.modes();
    if modes >= 3 && ((2 * order) as usize) < modes {
        return Err(Error::config(
            "witness.order",
            format!("order {order} gives moments of order {}, below the {modes} modes", 2 * order),
        ));
    }

    let ss = stationary_state(&model)?;
    let table = moment_table(&model, &ss.rho, table_order(&model, order))?;
    let sets = named_index_sets(&model, &table, order)?;
    let nonclassicality: Vec<NamedVerdict> = sets
        .iter()
        .map(|(name, idx)| {
            Ok(NamedVerdict { name: name.clone(), verdict: nonclassicality_verdict(&table, C64::new(1.0, 0.0), idx)? })
        })
        .collect::<Result<_, WitnessError>>()?;

    let idx = multi_indices_up_to(modes, order);
    let entanglement: Vec<BipartiteResult> = bipartitions
        .iter()
        .map(|b| {
            Ok(BipartiteResult {
                bipartition: b.to_string(),
                verdict: entanglement_verdict(&table, &geometry, &idx, b)?,
                congruence: congruence_check(&table, &geometry, &idx, b)?,
            })
        })
        .collect::<Result<_, WitnessError>>()?;

    let mapped = mapped_witness(&table, &geometry, &nonclassicality, &sets, &bipartitions[0])?;
    let multipartite = if modes >= 3 { Some(multipartite_scan(&table, &geometry, &idx)?) } else { None };

    let mut correlation = None;
    let mut two_time = None;
    if let Some(spec) = &scenario.correlation {
        let l = Liouvillian::new(&model)?;
        let s = source_operator(&model)?;
        let grid = spec.grid()?;
        if !grid.is_empty() {
            let (series, stats) = g2_series(&l, &ss.rho, &s, &grid)?;
            let n = expectation(&ss.rho, &s.normal_power(1, 1))?.re;
            correlation = Some(CorrelationResult {
                g2: series.values.iter().map(|z| z.re).collect(),
                max_imaginary: series.values.iter().map(|z| z.im.abs()).fold(0.0, f64::max),
                g2_normalized: series.values.iter().map(|z| z.re / (n * n)).collect(),
                tau: series.tau,
                stats,
            });
        }
        if let Some(lag) = spec.two_time_lag {
            let b = &bipartitions[0];
            let times: Vec<f64> = (0..modes).map(|j| if j == 0 { 0.0 } else { lag }).collect();
            two_time = Some(TwoTimeResult {
                lag,
                bipartition: b.to_string(),
                verdict: multi_time_witness(&l, &ss.rho, &s, &idx, &times, &geometry, b)?,
            });
        }
    }

    let oracle = if scenario.oracle.enabled {
        Some(match &model {
            EmitterModel::KerrMode(_) => {
                let spec = SplitterSpec::from_geometry(&geometry)?;
                OracleResult::Compared(cross_validate(&ss.rho, &spec, order, &bipartitions)?)
            }
            EmitterModel::TwoLevelEnsemble(_) => OracleResult::NotApplicable {
                reason: "atomic sources are checked through the congruence residuals only".into(),
            },
        })
    } else {
        None
    };

    let summary = Summary {
        nonclassical: nonclassicality.iter().any(|v| v.verdict.is_negative()),
        entangled: entanglement.iter().map(|e| (e.bipartition.clone(), e.verdict.is_negative())).collect(),
        multipartite_entangled: multipartite.as_ref().map(|m| m.all_negative),
    };
    Ok(RunResults {
        schema_version: SCHEMA_VERSION,
        name: scenario.name.clone(),
        seed,
        steady_state: summarize_state(&model, &ss)?,
        moments: table.entries().map(|(a, b, value)| MomentEntry { a, b, value }).collect(),
        model,
        geometry: geometry.chi().to_vec(),
        order,
        nonclassicality,
        entanglement,
        mapped_witness: mapped,
        multipartite,
        correlation,
        two_time,
        oracle,
        summary,
    })
}

/// One grid point of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub index: usize,
    pub first: f64,
    pub second: Option<f64>,
    pub status: String,
    pub intensity: Option<f64>,
    pub squeezing_min_eigenvalue: Option<f64>,
    pub squeezing_minor: Option<f64>,
    pub sub_poisson_min_eigenvalue: Option<f64>,
    pub sub_poisson_minor: Option<f64>,
    pub order_min_eigenvalue: Option<f64>,
    pub atom_minor: Option<f64>,
    /// Smallest PT eigenvalue over the configured bipartitions.
    pub entanglement_min_eigenvalue: Option<f64>,
    pub nonclassical: Option<bool>,
    pub entangled: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResults {
    pub schema_version: u32,
    pub name: Option<String>,
    pub seed: u64,
    pub parameters: Vec<String>,
    pub rows: Vec<SweepRow>,
}

impl SweepResults {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.status != "ok").count()
    }
}

fn sweep_point(scenario: &Scenario, geometry: &ModeGeometry, bipartitions: &[Bipartition]) -> Result<SweepRow> {
    let model = scenario.model.to_model()?;
    let order = scenario.witness.order;
    let ss = stationary_state(&model)?;
    let table = moment_table(&model, &ss.rho, table_order(&model, order))?;
    let unit = C64::new(1.0, 0.0);
    let sets = named_index_sets(&model, &table, order)?;
    let verdicts: Vec<Verdict> =
        sets.iter().map(|(_, idx)| nonclassicality_verdict(&table, unit, idx)).collect::<Result<_, _>>()?;
    let by_name = |name: &str| sets.iter().position(|(n, _)| n == name).map(|i| &verdicts[i]);
    let idx = multi_indices_up_to(geometry.modes(), order);
    let pt: Vec<Verdict> =
        bipartitions.iter().map(|b| entanglement_verdict(&table, geometry, &idx, b)).collect::<Result<_, _>>()?;
    let atom = sets.iter().position(|(n, _)| n.starts_with("atom_")).map(|i| verdicts[i].worst_minor.determinant);
    Ok(SweepRow {
        index: 0,
        first: 0.0,
        second: None,
        status: "ok".into(),
        intensity: Some(summarize_state(&model, &ss)?.intensity),
        squeezing_min_eigenvalue: by_name("squeezing").map(|v| v.min_eigenvalue),
        squeezing_minor: by_name("squeezing").map(|v| v.worst_minor.determinant),
        sub_poisson_min_eigenvalue: by_name("sub_poisson").map(|v| v.min_eigenvalue),
        sub_poisson_minor: by_name("sub_poisson").map(|v| v.worst_minor.determinant),
        order_min_eigenvalue: Some(verdicts[0].min_eigenvalue),
        atom_minor: atom,
        entanglement_min_eigenvalue: pt.iter().map(|v| v.min_eigenvalue).reduce(f64::min),
        nonclassical: Some(verdicts.iter().any(Verdict::is_negative)),
        entangled: Some(pt.iter().any(Verdict::is_negative)),
    })
}

/// Executes the `sweep` pipeline on the current rayon pool. Grid points
/// that fail a physics precondition are kept as rows with their error as
/// status; configuration errors abort.
pub fn sweep_scenario(scenario: &Scenario, seed: u64) -> Result<SweepResults> {
    let spec = scenario.sweep.as_ref().ok_or_else(|| Error::config("sweep", "missing [sweep] section"))?;
    let grid = spec.grid()?;
    let geometry = scenario.geometry(seed)?;
    let bipartitions = scenario.bipartitions()?;
    let mut points = Vec::with_capacity(grid.len());
    for &(a, b) in &grid {
        let mut s = scenario.clone();
        s.model.set(&spec.first.parameter, a)?;
        if let (Some(axis), Some(b)) = (&spec.second, b) {
            s.model.set(&axis.parameter, b)?;
        }
        s.model.to_model()?;
        points.push(s);
    }
    let rows: Vec<SweepRow> = points
        .par_iter()
        .zip(grid.par_iter())
        .enumerate()
        .map(|(index, (s, &(a, b)))| {
            let row = match sweep_point(s, &geometry, &bipartitions) {
                Ok(row) => row,
                Err(e) if e.is_physics() => SweepRow {
                    index,
                    first: a,
                    second: b,
                    status: e.to_string(),
                    intensity: None,
                    squeezing_min_eigenvalue: None,
                    squeezing_minor: None,
                    sub_poisson_min_eigenvalue: None,
                    sub_poisson_minor: None,
                    order_min_eigenvalue: None,
                    atom_minor: None,
                    entanglement_min_eigenvalue: None,
                    nonclassical: None,
                    entangled: None,
                },
                Err(e) => return Err(e),
            };
            Ok(SweepRow { index, first: a, second: b, ..row })
        })
        .collect::<Result<_>>()?;
    let mut parameters = vec![spec.first.parameter.clone()];
    if let Some(axis) = &spec.second {
        parameters.push(axis.parameter.clone());
    }
    Ok(SweepResults { schema_version: SCHEMA_VERSION, name: scenario.name.clone(), seed, parameters, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(text: &str) -> Scenario {
        Scenario::from_toml(text, "test").unwrap()
    }

    const ATOM: &str = r#"
        schema_version = 1
        [model]
        kind = "two_level_ensemble"
        atoms = 1
        rabi = 1.0
        [geometry]
        modes = 2
        [witness]
        order = 2
    "#;

    #[test]
    fn single_atom_run() {
        let r = run_scenario(&scenario(ATOM), 0).unwrap();
        assert!(r.summary.nonclassical);
        assert_eq!(r.summary.entangled.get("{1}|{2}"), Some(&true));
        assert!(r.entanglement.iter().all(|e| e.congruence.max_deviation < 1e-10));
        let m = r.mapped_witness.unwrap();
        assert!(m.rescaled_value < 0.0);
    }

    #[test]
    fn coherent_kerr_run_is_classical() {
        let text = r#"
            schema_version = 1
            [model]
            kind = "kerr_mode"
            n_max = 16
            kerr = 0.0
            drive = 0.3
            [geometry]
            modes = 2
            [witness]
            order = 2
            [oracle]
            enabled = true
        "#;
        let r = run_scenario(&scenario(text), 0).unwrap();
        assert!(!r.summary.nonclassical);
        assert!(r.summary.entangled.values().all(|e| !e));
        assert!(matches!(r.oracle, Some(OracleResult::Compared(ref c)) if c.all_sound()));
    }

    #[test]
    fn single_point_sweep_matches_run() {
        let text = format!("{ATOM}\n[sweep]\nparameter = \"rabi\"\nvalues = [1.0]\n");
        let s = scenario(&text);
        let run = run_scenario(&s, 0).unwrap();
        let sweep = sweep_scenario(&s, 0).unwrap();
        let row = &sweep.rows[0];
        let find = |name: &str| run.nonclassicality.iter().find(|v| v.name == name).unwrap().verdict.clone();
        assert_eq!(row.squeezing_min_eigenvalue, Some(find("squeezing").min_eigenvalue));
        assert_eq!(row.sub_poisson_minor, Some(find("sub_poisson").worst_minor.determinant));
        assert_eq!(row.entanglement_min_eigenvalue, Some(run.entanglement[0].verdict.min_eigenvalue));
        assert_eq!(row.nonclassical, Some(run.summary.nonclassical));
    }

    #[test]
    fn low_order_multipartite_is_a_config_error() {
        let text = ATOM.replace("modes = 2", "modes = 3").replace("order = 2", "order = 1");
        let e = run_scenario(&scenario(&text), 0).unwrap_err();
        assert!(!e.is_physics());
    }
}
