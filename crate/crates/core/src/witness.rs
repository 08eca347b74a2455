//! Moment tables, numeric witness matrices and negativity verdicts.
//!
//! A [`MomentTable`] holds `mu(a, b) = <S^dag^a S^b>` of one stationary
//! state. Symbolic matrices from [`crate::opalg`] are reduced to source
//! moments and evaluated against a table, giving Hermitian matrices whose
//! negativity certifies nonclassicality (single direction) or NPT
//! entanglement (several directions, partially transposed).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{multi_time_moment, DynamicsError, Liouvillian};
use crate::linalg::{hermitian_part, hermiticity_defect, max_abs, min_eigenpair, principal_minor};
use crate::opalg::{
    build_f_pt_matrix, build_f_pt_matrix_timed, build_h_matrix, reduce_to_source, AlgebraError, Bipartition, FieldFactor,
    Freq, HIndex, ModeGeometry, Monomial, MultiIndex, OperatorPoly, PolyMatrix, SourceMomentKey, TimeLabel,
};
use crate::qcore::{source_operator, DensityMatrix, EmitterModel, ModelError, Operator};
use crate::{CMatrix, C64};

/// Eigenvalues below `-TOL_NEG` classify as negative.
pub const TOL_NEG: f64 = 1e-10;

/// Allowed anti-Hermitian part of an assembled matrix, relative to its
/// largest entry.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Largest population allowed in the two highest Fock levels of a
/// truncated bosonic state.
pub const TRUNCATION_TOL: f64 = 1e-8;

/// Up to this many rows every principal minor is examined; above it only
/// minors of size at most three.
const FULL_MINOR_SCAN: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WitnessError {
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("moment {key} is not in the table (max order {max_order})")]
    MissingKey { key: String, max_order: u32 },
    #[error("max order must be at least 1")]
    ZeroOrder,
    #[error("Fock truncation too small: population {population:e} in the top levels, moments up to power {power} with n_max {n_max}")]
    Truncation { population: f64, power: u32, n_max: usize },
    #[error("table is not conjugation symmetric at ({a},{b}): deviation {deviation:e}")]
    Asymmetric { a: u32, b: u32, deviation: f64 },
    #[error("table entry (0,0) is {value}, expected 1")]
    Normalization { value: C64 },
    #[error("assembled matrix is not Hermitian: defect {defect:e}")]
    NotHermitian { defect: f64 },
    #[error("{what} needs at least {needed} modes, geometry has {modes}")]
    TooFewModes { what: &'static str, needed: usize, modes: usize },
    #[error("index set of order {order} probes moments of order {moment_order}, below the {modes} modes being split")]
    OrderTooLow { order: u32, moment_order: u32, modes: usize },
    #[error("{what}: expected {expected}, got {got}")]
    LengthMismatch { what: &'static str, expected: usize, got: usize },
    #[error("time assignment must be finite and non-negative")]
    InvalidTimes,
    #[error("index set must contain the zero multi-index")]
    MissingZeroIndex,
}

impl WitnessError {
    /// True for failures of the physical state rather than of the request.
    pub fn is_physics(&self) -> bool {
        matches!(self, WitnessError::Truncation { .. } | WitnessError::Dynamics(_) | WitnessError::NotHermitian { .. })
    }
}

/// Single-time source moments `mu(a, b) = <S^dag^a S^b>` for
/// `a, b <= 2 * max_order`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentTable {
    values: BTreeMap<(u32, u32), C64>,
    max_order: u32,
    provenance: String,
}

impl MomentTable {
    /// Moments of `rho` with source operator `s`.
    pub fn from_state(
        s: &Operator,
        rho: &DensityMatrix,
        max_order: u32,
        provenance: impl Into<String>,
    ) -> Result<Self, WitnessError> {
        if max_order == 0 {
            return Err(WitnessError::ZeroOrder);
        }
        if s.dim() != rho.dim() {
            return Err(ModelError::DimensionMismatch { left: s.dim(), right: rho.dim() }.into());
        }
        let top = 2 * max_order;
        let mut powers = vec![Operator::identity(s.dim())];
        for k in 1..=top as usize {
            powers.push(&powers[k - 1] * s);
        }
        // mu(a, b) = Tr(S^b rho (S^a)^dag) = sum_ij (S^b rho)_ij conj(S^a)_ij
        let lowered: Vec<CMatrix> = powers.iter().map(|p| p.matrix() * rho.matrix()).collect();
        let mut values = BTreeMap::new();
        for a in 0..=top {
            for b in a..=top {
                let x = &lowered[b as usize];
                let y = powers[a as usize].matrix();
                let mut v: C64 = x.iter().zip(y.iter()).map(|(p, q)| p * q.conj()).sum();
                if a == b {
                    v.im = 0.0;
                }
                values.insert((a, b), v);
                if a != b {
                    values.insert((b, a), v.conj());
                }
            }
        }
        values.insert((0, 0), C64::new(1.0, 0.0));
        Ok(MomentTable { values, max_order, provenance: provenance.into() })
    }

    /// Table from explicit values, e.g. analytic moments of a reference
    /// state. Every `(a, b)` with `a, b <= 2 * max_order` must be present.
    pub fn from_values(
        values: BTreeMap<(u32, u32), C64>,
        max_order: u32,
        provenance: impl Into<String>,
    ) -> Result<Self, WitnessError> {
        if max_order == 0 {
            return Err(WitnessError::ZeroOrder);
        }
        let top = 2 * max_order;
        for a in 0..=top {
            for b in 0..=top {
                let v = *values
                    .get(&(a, b))
                    .ok_or_else(|| WitnessError::MissingKey { key: format!("({a},{b})"), max_order })?;
                let w = values[&(b, a)];
                let deviation = (v - w.conj()).norm();
                if deviation > 1e-10 * (1.0 + v.norm()) {
                    return Err(WitnessError::Asymmetric { a, b, deviation });
                }
            }
        }
        let unit = values[&(0, 0)];
        if (unit - C64::new(1.0, 0.0)).norm() > 1e-10 {
            return Err(WitnessError::Normalization { value: unit });
        }
        Ok(MomentTable { values, max_order, provenance: provenance.into() })
    }

    pub fn max_order(&self) -> u32 {
        self.max_order
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// `mu(a, b)`.
    pub fn get(&self, a: u32, b: u32) -> Result<C64, WitnessError> {
        self.values
            .get(&(a, b))
            .copied()
            .ok_or_else(|| WitnessError::MissingKey { key: format!("({a},{b})"), max_order: self.max_order })
    }

    /// Value of a single-time key.
    pub fn lookup(&self, key: &SourceMomentKey) -> Result<C64, WitnessError> {
        let (a, b) = key
            .as_single()
            .ok_or_else(|| WitnessError::MissingKey { key: key.to_string(), max_order: self.max_order })?;
        self.get(a, b)
    }

    pub fn entries(&self) -> impl Iterator<Item = (u32, u32, C64)> + '_ {
        self.values.iter().map(|(&(a, b), &v)| (a, b, v))
    }
}

/// Steady-state moment table of `model`, refusing truncated bosonic states
/// whose top Fock levels carry weight or whose truncation is shorter than
/// the highest power needed.
pub fn moment_table(model: &EmitterModel, rho: &DensityMatrix, max_order: u32) -> Result<MomentTable, WitnessError> {
    if max_order == 0 {
        return Err(WitnessError::ZeroOrder);
    }
    if let EmitterModel::KerrMode(k) = model {
        let population = rho.top_population();
        let power = 2 * max_order;
        if population > TRUNCATION_TOL || power as usize > k.n_max {
            return Err(WitnessError::Truncation { population, power, n_max: k.n_max });
        }
    }
    let s = source_operator(model)?;
    MomentTable::from_state(&s, rho, max_order, format!("{model:?}"))
}

/// Numeric Hermitian matrix with its row labels.
#[derive(Clone, Debug, PartialEq)]
pub struct WitnessMatrix {
    pub labels: Vec<String>,
    pub matrix: CMatrix,
    pub geometry: Vec<C64>,
    pub bipartition: Option<Bipartition>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Negative,
    Nonnegative,
}

impl Classification {
    pub fn is_negative(self) -> bool {
        self == Classification::Negative
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Minor {
    pub subset: Vec<usize>,
    pub labels: Vec<String>,
    pub determinant: f64,
}

/// Outcome of a negativity test on one witness matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub labels: Vec<String>,
    pub min_eigenvalue: f64,
    pub worst_minor: Minor,
    /// Unit eigenvector of the minimal eigenvalue, largest component real
    /// and positive.
    pub witness_coefficients: Vec<C64>,
    pub classification: Classification,
}

impl Verdict {
    pub fn from_matrix(m: &WitnessMatrix) -> Result<Verdict, WitnessError> {
        let scale = max_abs(&m.matrix).max(1.0);
        let defect = hermiticity_defect(&m.matrix);
        if defect > HERMITIAN_TOL * scale {
            return Err(WitnessError::NotHermitian { defect });
        }
        let h = hermitian_part(&m.matrix);
        let (min_eigenvalue, v) = min_eigenpair(&h);
        let worst = worst_minor(&h);
        Ok(Verdict {
            labels: m.labels.clone(),
            min_eigenvalue,
            worst_minor: Minor {
                labels: worst.0.iter().map(|&i| m.labels[i].clone()).collect(),
                subset: worst.0,
                determinant: worst.1,
            },
            witness_coefficients: v.iter().copied().collect(),
            classification: if min_eigenvalue < -TOL_NEG {
                Classification::Negative
            } else {
                Classification::Nonnegative
            },
        })
    }

    pub fn is_negative(&self) -> bool {
        self.classification.is_negative()
    }
}

fn worst_minor(h: &CMatrix) -> (Vec<usize>, f64) {
    let n = h.nrows();
    let max_size = if n <= FULL_MINOR_SCAN { n } else { 3 };
    let mut best = (vec![0], h[(0, 0)].re);
    let mut subset = Vec::with_capacity(max_size);
    fn visit(h: &CMatrix, start: usize, max_size: usize, subset: &mut Vec<usize>, best: &mut (Vec<usize>, f64)) {
        for i in start..h.nrows() {
            subset.push(i);
            let det = principal_minor(h, subset);
            if det < best.1 {
                *best = (subset.clone(), det);
            }
            if subset.len() < max_size {
                visit(h, i + 1, max_size, subset, best);
            }
            subset.pop();
        }
    }
    visit(h, 0, max_size, &mut subset, &mut best);
    best
}

/// Evaluates a symbolic matrix: every entry is reduced to source moments
/// under `geometry` and each key is valued by `eval`.
pub fn assemble<I>(
    pm: &PolyMatrix<I>,
    geometry: &ModeGeometry,
    mut eval: impl FnMut(&SourceMomentKey) -> Result<C64, WitnessError>,
) -> Result<CMatrix, WitnessError> {
    let n = pm.dim();
    let mut m = CMatrix::zeros(n, n);
    for (r, c, poly) in pm.entries() {
        let mut v = C64::new(0.0, 0.0);
        for term in reduce_to_source(poly, geometry)? {
            v += term.prefactor * eval(&term.key)?;
        }
        m[(r, c)] = v;
    }
    Ok(m)
}

/// Nonclassicality matrix of one direction with mode function `chi`.
pub fn nonclassicality_matrix(table: &MomentTable, chi: C64, idx: &[HIndex]) -> Result<WitnessMatrix, WitnessError> {
    let pm = build_h_matrix(idx)?;
    let geometry = ModeGeometry::new(vec![chi])?;
    let matrix = assemble(&pm, &geometry, |k| table.lookup(k))?;
    Ok(WitnessMatrix {
        labels: idx.iter().map(|(n, l)| format!("({n},{l})")).collect(),
        matrix,
        geometry: vec![chi],
        bipartition: None,
    })
}

pub fn nonclassicality_verdict(table: &MomentTable, chi: C64, idx: &[HIndex]) -> Result<Verdict, WitnessError> {
    Verdict::from_matrix(&nonclassicality_matrix(table, chi, idx)?)
}

fn check_geometry(geometry: &ModeGeometry, bipartition: &Bipartition) -> Result<(), WitnessError> {
    if geometry.modes() < 2 {
        return Err(WitnessError::TooFewModes { what: "entanglement test", needed: 2, modes: geometry.modes() });
    }
    if geometry.modes() != bipartition.modes() {
        return Err(AlgebraError::InvalidBipartition(format!(
            "bipartition of {} modes for a geometry of {}",
            bipartition.modes(),
            geometry.modes()
        ))
        .into());
    }
    Ok(())
}

/// Partially transposed moment matrix of the directional fields.
pub fn entanglement_matrix(
    table: &MomentTable,
    geometry: &ModeGeometry,
    idx: &[MultiIndex],
    bipartition: &Bipartition,
) -> Result<WitnessMatrix, WitnessError> {
    check_geometry(geometry, bipartition)?;
    let pm = build_f_pt_matrix(idx, bipartition)?;
    let matrix = assemble(&pm, geometry, |k| table.lookup(k))?;
    Ok(WitnessMatrix {
        labels: idx.iter().map(|l| l.to_string()).collect(),
        matrix,
        geometry: geometry.chi().to_vec(),
        bipartition: Some(bipartition.clone()),
    })
}

pub fn entanglement_verdict(
    table: &MomentTable,
    geometry: &ModeGeometry,
    idx: &[MultiIndex],
    bipartition: &Bipartition,
) -> Result<Verdict, WitnessError> {
    Verdict::from_matrix(&entanglement_matrix(table, geometry, idx, bipartition)?)
}

/// Bipartite pair `(n, l)` of multi-index `l`: total power on the
/// transposed side and on the untransposed side.
pub fn h_image(l: &MultiIndex, bipartition: &Bipartition) -> HIndex {
    let n = (1..=l.modes()).filter(|&j| bipartition.is_transposed(j)).map(|j| l.power(j)).sum();
    let ell = (1..=l.modes()).filter(|&j| !bipartition.is_transposed(j)).map(|j| l.power(j)).sum();
    (n, ell)
}

/// Mode-function monomial `prod_j chi_j^{l_j}` of `prod_j E_j^(+)l_j`, read
/// off its source reduction.
pub fn chi_monomial(l: &MultiIndex, geometry: &ModeGeometry) -> Result<C64, WitnessError> {
    let factors = (1..=l.modes())
        .filter(|&j| l.power(j) > 0)
        .map(|j| FieldFactor::new(j, Freq::Pos, l.power(j)))
        .collect();
    let poly = OperatorPoly::from_monomials(vec![Monomial::new(C64::new(1.0, 0.0), factors)]);
    let terms = reduce_to_source(&poly, geometry)?;
    Ok(terms.first().map_or(C64::new(1.0, 0.0), |t| t.prefactor))
}

/// Entrywise comparison of the PT matrix with `D^dag R^T N R D`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CongruenceReport {
    pub bipartition: String,
    /// Largest `|P - D^dag R^T N R D|` entry.
    pub max_deviation: f64,
    /// Minimal eigenvalue of the PT matrix.
    pub pt_min_eigenvalue: f64,
    /// Minimal eigenvalue of the unit-geometry nonclassicality matrix on the
    /// image index set.
    pub nonclassical_min_eigenvalue: f64,
    pub pt_classification: Classification,
    pub nonclassical_classification: Classification,
}

impl CongruenceReport {
    pub fn signs_agree(&self) -> bool {
        self.pt_classification == self.nonclassical_classification
    }
}

/// Checks that the PT matrix is congruent to the nonclassicality matrix of
/// the same table.
///
/// Each multi-index `l` maps to `h(l) = (n, l)` and carries
/// `d_l = prod_j chi_j^{l_j}`; the PT matrix must equal
/// `conj(d_l') d_l N[h(l'), h(l)]`, with `N` built on the distinct images
/// and unit mode function. Because every image is hit, the two matrices
/// share the sign of their minimal eigenvalue.
pub fn congruence_check(
    table: &MomentTable,
    geometry: &ModeGeometry,
    idx: &[MultiIndex],
    bipartition: &Bipartition,
) -> Result<CongruenceReport, WitnessError> {
    if !idx.iter().any(|l| l.order() == 0) {
        return Err(WitnessError::MissingZeroIndex);
    }
    let pt = entanglement_matrix(table, geometry, idx, bipartition)?;
    let images: Vec<HIndex> = idx.iter().map(|l| h_image(l, bipartition)).collect();
    let mut distinct: Vec<HIndex> = Vec::new();
    for h in &images {
        if !distinct.contains(h) {
            distinct.push(*h);
        }
    }
    let n = nonclassicality_matrix(table, C64::new(1.0, 0.0), &distinct)?;
    let slot: Vec<usize> = images.iter().map(|h| distinct.iter().position(|d| d == h).expect("image")).collect();
    let d: Vec<C64> = idx.iter().map(|l| chi_monomial(l, geometry)).collect::<Result<_, _>>()?;
    let mut max_deviation: f64 = 0.0;
    for r in 0..idx.len() {
        for c in 0..idx.len() {
            let expect = d[r].conj() * d[c] * n.matrix[(slot[r], slot[c])];
            max_deviation = max_deviation.max((pt.matrix[(r, c)] - expect).norm());
        }
    }
    let pv = Verdict::from_matrix(&pt)?;
    let nv = Verdict::from_matrix(&n)?;
    Ok(CongruenceReport {
        bipartition: bipartition.to_string(),
        max_deviation,
        pt_min_eigenvalue: pv.min_eigenvalue,
        nonclassical_min_eigenvalue: nv.min_eigenvalue,
        pt_classification: pv.classification,
        nonclassical_classification: nv.classification,
    })
}

/// Coefficients of `f = sum c_{n,l} E_2^(+)n E_1^(+)l` from those of
/// `h = sum c_{n,l} E^(-)n E^(+)l`: same values, pair `(n, l)` re-indexed
/// as the multi-index `(l, n)`.
pub fn map_witness(h_coeffs: &[C64], idx: &[HIndex]) -> Result<Vec<(MultiIndex, C64)>, WitnessError> {
    let two = Bipartition::new(2, [2])?;
    map_witness_multipartite(h_coeffs, idx, &two)
}

/// Multipartite version of [`map_witness`]: the power `n` is spread over
/// the transposed modes and `l` over the others, as evenly as possible with
/// earlier modes taking any remainder.
pub fn map_witness_multipartite(
    h_coeffs: &[C64],
    idx: &[HIndex],
    bipartition: &Bipartition,
) -> Result<Vec<(MultiIndex, C64)>, WitnessError> {
    if h_coeffs.len() != idx.len() {
        return Err(WitnessError::LengthMismatch { what: "witness coefficients", expected: idx.len(), got: h_coeffs.len() });
    }
    let modes = bipartition.modes();
    let transposed: Vec<usize> = (1..=modes).filter(|&j| bipartition.is_transposed(j)).collect();
    let kept: Vec<usize> = (1..=modes).filter(|&j| !bipartition.is_transposed(j)).collect();
    let spread = |total: u32, over: &[usize], powers: &mut [u32]| {
        let k = over.len() as u32;
        for (i, &j) in over.iter().enumerate() {
            powers[j - 1] = total / k + u32::from((i as u32) < total % k);
        }
    };
    Ok(idx
        .iter()
        .zip(h_coeffs)
        .map(|(&(n, l), &c)| {
            let mut powers = vec![0; modes];
            spread(n, &transposed, &mut powers);
            spread(l, &kept, &mut powers);
            (MultiIndex(powers), c)
        })
        .collect())
}

/// As [`map_witness_multipartite`], with each coefficient rescaled by
/// `d_h / d_l` so that the PT form of `f` equals the single-direction form
/// of `h` evaluated with mode function `chi`:
/// `c_f^dag P c_f = c_h^dag N_chi c_h`, where `d_h = conj(chi)^n chi^l`.
pub fn map_witness_rescaled(
    h_coeffs: &[C64],
    idx: &[HIndex],
    chi: C64,
    geometry: &ModeGeometry,
    bipartition: &Bipartition,
) -> Result<Vec<(MultiIndex, C64)>, WitnessError> {
    let mapped = map_witness_multipartite(h_coeffs, idx, bipartition)?;
    mapped
        .into_iter()
        .zip(idx)
        .map(|((l, c), &(n, ell))| {
            let d_h = chi.conj().powu(n) * chi.powu(ell);
            let d_l = chi_monomial(&l, geometry)?;
            Ok((l, c * d_h / d_l))
        })
        .collect()
}

/// Verdicts for every bipartition of `M >= 3` modes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultipartiteReport {
    pub verdicts: Vec<(String, Verdict)>,
    /// Every bipartition negative.
    pub all_negative: bool,
    pub summary: String,
}

/// Largest total order of the index set.
pub fn index_order(idx: &[MultiIndex]) -> u32 {
    idx.iter().map(MultiIndex::order).max().unwrap_or(0)
}

pub fn multipartite_scan(
    table: &MomentTable,
    geometry: &ModeGeometry,
    idx: &[MultiIndex],
) -> Result<MultipartiteReport, WitnessError> {
    let modes = geometry.modes();
    if modes < 3 {
        return Err(WitnessError::TooFewModes { what: "multipartite scan", needed: 3, modes });
    }
    let order = index_order(idx);
    // entries of an order-K index set are moments of order 2K
    if ((2 * order) as usize) < modes {
        return Err(WitnessError::OrderTooLow { order, moment_order: 2 * order, modes });
    }
    let mut verdicts = Vec::new();
    for b in Bipartition::all(modes) {
        verdicts.push((b.to_string(), entanglement_verdict(table, geometry, idx, &b)?));
    }
    let all_negative = verdicts.iter().all(|(_, v)| v.is_negative());
    let summary = if all_negative {
        "multipartite entangled (every bipartition NPT)".to_string()
    } else {
        let n = verdicts.iter().filter(|(_, v)| v.is_negative()).count();
        format!("{n} of {} bipartitions NPT", verdicts.len())
    };
    Ok(MultipartiteReport { verdicts, all_negative, summary })
}

/// PT witness with mode `j` observed at `times[j-1]`, moments from quantum
/// regression in the stationary state `rho`.
///
/// For two modes and `times = [t, t + tau]` this tests
/// `f = sum c E_2^(+)n(t + tau) E_1^(+)l(t)`.
pub fn multi_time_matrix(
    l: &Liouvillian,
    rho: &DensityMatrix,
    source: &Operator,
    idx: &[MultiIndex],
    times: &[f64],
    geometry: &ModeGeometry,
    bipartition: &Bipartition,
) -> Result<WitnessMatrix, WitnessError> {
    check_geometry(geometry, bipartition)?;
    if times.len() != geometry.modes() {
        return Err(WitnessError::LengthMismatch { what: "time assignment", expected: geometry.modes(), got: times.len() });
    }
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(WitnessError::InvalidTimes);
    }
    let mut distinct: Vec<f64> = times.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let labels: Vec<TimeLabel> =
        times.iter().map(|t| TimeLabel(distinct.iter().position(|d| d == t).expect("time") as u32)).collect();
    let pm = build_f_pt_matrix_timed(idx, bipartition, &labels)?;
    let sd = source.adjoint();
    let mut cache: BTreeMap<SourceMomentKey, C64> = BTreeMap::new();
    let matrix = assemble(&pm, geometry, |key| {
        if let Some(v) = cache.get(key) {
            return Ok(*v);
        }
        let used = key.labels();
        let mut lefts = Vec::with_capacity(used.len());
        let mut rights = Vec::with_capacity(used.len());
        let mut at = Vec::with_capacity(used.len());
        for t in &used {
            let (a, b) = key.powers_at(*t);
            lefts.push(sd.pow(a));
            rights.push(source.pow(b));
            at.push(distinct[t.0 as usize]);
        }
        let v = multi_time_moment(l, rho, &lefts, &rights, &at)?;
        cache.insert(key.clone(), v);
        Ok(v)
    })?;
    Ok(WitnessMatrix {
        labels: idx.iter().map(|m| m.to_string()).collect(),
        matrix,
        geometry: geometry.chi().to_vec(),
        bipartition: Some(bipartition.clone()),
    })
}

pub fn multi_time_witness(
    l: &Liouvillian,
    rho: &DensityMatrix,
    source: &Operator,
    idx: &[MultiIndex],
    times: &[f64],
    geometry: &ModeGeometry,
    bipartition: &Bipartition,
) -> Result<Verdict, WitnessError> {
    Verdict::from_matrix(&multi_time_matrix(l, rho, source, idx, times, geometry, bipartition)?)
}

/// `{(0,0), (1,0), (0,1)}`: quadrature squeezing.
pub fn squeezing_index() -> Vec<HIndex> {
    vec![(0, 0), (1, 0), (0, 1)]
}

/// `{(0,0), (1,1)}`: sub-Poisson statistics, determinant
/// `mu(2,2) - mu(1,1)^2`.
pub fn sub_poisson_index() -> Vec<HIndex> {
    vec![(0, 0), (1, 1)]
}

/// `{(0,0), (k, N+1-k)}` for `N` atoms: the minor is `-|mu(k, N+1-k)|^2`
/// because `S^{N+1} = 0`.
pub fn atom_index(atoms: u32, k: u32) -> Vec<HIndex> {
    vec![(0, 0), (k, atoms + 1 - k)]
}

/// The `k` in `1..=N` with the largest `|mu(k, N+1-k)|`.
pub fn best_atom_split(table: &MomentTable, atoms: u32) -> Result<u32, WitnessError> {
    let mut best = (1, -1.0);
    for k in 1..=atoms {
        let v = table.get(k, atoms + 1 - k)?.norm();
        if v > best.1 {
            best = (k, v);
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::stationary_state;
    use crate::linalg::hermitian_form;
    use crate::opalg::{multi_indices_up_to, order_k_pairs, pairs_to_multi};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    /// `mu(a, b) = conj(alpha)^a alpha^b` of a coherent state.
    fn coherent_table(alpha: C64, k: u32) -> MomentTable {
        let mut v = BTreeMap::new();
        for a in 0..=2 * k {
            for b in 0..=2 * k {
                v.insert((a, b), alpha.conj().powu(a) * alpha.powu(b));
            }
        }
        MomentTable::from_values(v, k, "coherent").unwrap()
    }

    fn atom_table(atoms: usize, collective: bool, k: u32) -> MomentTable {
        let model = EmitterModel::ensemble(atoms, 1.0, 0.0, collective);
        let ss = stationary_state(&model).unwrap();
        moment_table(&model, &ss.rho, k).unwrap()
    }

    #[test]
    fn ground_state_table() {
        let model = EmitterModel::ensemble(2, 0.0, 0.0, false);
        let t = moment_table(&model, &DensityMatrix::ground(4), 2).unwrap();
        for (a, b, v) in t.entries() {
            let expect = if (a, b) == (0, 0) { 1.0 } else { 0.0 };
            assert_eq!(v, c(expect, 0.0));
        }
    }

    #[test]
    fn coherent_state_table_matches_analytic() {
        let alpha = c(0.4, -0.3);
        let model = EmitterModel::kerr(30, 0.0, 0.0, 0.0);
        let rho = DensityMatrix::coherent(30, alpha).unwrap();
        let t = moment_table(&model, &rho, 3).unwrap();
        for (a, b, v) in t.entries() {
            assert!((v - alpha.conj().powu(a) * alpha.powu(b)).norm() < 1e-8);
        }
    }

    #[test]
    fn truncation_is_refused() {
        let model = EmitterModel::kerr(4, 0.0, 0.0, 0.0);
        let rho = DensityMatrix::fock(4, 4).unwrap();
        assert!(matches!(moment_table(&model, &rho, 1), Err(WitnessError::Truncation { .. })));
        let vac = DensityMatrix::ground(5);
        assert!(matches!(moment_table(&model, &vac, 3), Err(WitnessError::Truncation { .. })));
    }

    #[test]
    fn single_atom_fourth_order_moment_vanishes() {
        let t = atom_table(1, false, 1);
        assert_eq!(t.get(2, 2).unwrap(), c(0.0, 0.0));
        assert!(t.get(1, 1).unwrap().re > 0.0);
    }

    #[test]
    fn single_atom_minor() {
        let t = atom_table(1, false, 1);
        let m = nonclassicality_matrix(&t, c(1.0, 0.0), &sub_poisson_index()).unwrap();
        let x = t.get(1, 1).unwrap().re;
        assert!((m.matrix[(0, 1)] - c(x, 0.0)).norm() < 1e-15);
        assert_eq!(m.matrix[(1, 1)], c(0.0, 0.0));
        let v = Verdict::from_matrix(&m).unwrap();
        assert!(v.is_negative());
        assert!((v.worst_minor.determinant + x * x).abs() < 1e-14);
    }

    #[test]
    fn trivial_index_is_nonnegative() {
        let t = atom_table(1, false, 1);
        let v = nonclassicality_verdict(&t, c(1.0, 0.0), &[(0, 0)]).unwrap();
        assert_eq!(v.min_eigenvalue, 1.0);
        assert!(!v.is_negative());
    }

    #[test]
    fn coherent_tables_are_classical() {
        let t = coherent_table(c(0.7, 0.2), 3);
        let v = nonclassicality_verdict(&t, c(1.3, -0.4), &order_k_pairs(3)).unwrap();
        assert!(!v.is_negative());
        let g = ModeGeometry::new(vec![c(0.5, 0.1), c(-1.2, 0.3), c(0.2, 0.9)]).unwrap();
        for b in Bipartition::all(3) {
            assert!(!entanglement_verdict(&t, &g, &multi_indices_up_to(3, 2), &b).unwrap().is_negative());
        }
    }

    #[test]
    fn single_atom_two_directions_entangled() {
        let t = atom_table(1, false, 1);
        let g = ModeGeometry::uniform(2).unwrap();
        let b = Bipartition::new(2, [2]).unwrap();
        let idx = pairs_to_multi(&sub_poisson_index());
        let v = entanglement_verdict(&t, &g, &idx, &b).unwrap();
        assert!(v.is_negative());
        let n = nonclassicality_verdict(&t, c(1.0, 0.0), &sub_poisson_index()).unwrap();
        assert!((v.min_eigenvalue - n.min_eigenvalue).abs() < 1e-12);
    }

    #[test]
    fn congruence_on_driven_atoms() {
        let t = atom_table(2, false, 2);
        let g = ModeGeometry::new(vec![c(0.8, 0.3), c(-0.4, 1.1), c(1.5, -0.2)]).unwrap();
        let idx = multi_indices_up_to(3, 2);
        for b in Bipartition::all(3) {
            let r = congruence_check(&t, &g, &idx, &b).unwrap();
            assert!(r.max_deviation < 1e-10, "{r:?}");
            assert!(r.signs_agree());
        }
    }

    #[test]
    fn mapping_examples() {
        let idx = vec![(0, 0), (1, 1)];
        let mapped = map_witness(&[c(1.0, 0.0), c(-2.0, 0.5)], &idx).unwrap();
        assert_eq!(mapped[0], (MultiIndex(vec![0, 0]), c(1.0, 0.0)));
        assert_eq!(mapped[1], (MultiIndex(vec![1, 1]), c(-2.0, 0.5)));
        let sq = map_witness(&[c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)], &squeezing_index()).unwrap();
        // (1,0) -> E_2^(+), (0,1) -> E_1^(+)
        assert_eq!(sq[1].0, MultiIndex(vec![0, 1]));
        assert_eq!(sq[2].0, MultiIndex(vec![1, 0]));
        assert_eq!(map_witness(&[c(4.0, 0.0)], &[(0, 0)]).unwrap(), vec![(MultiIndex(vec![0, 0]), c(4.0, 0.0))]);
        let b = Bipartition::new(3, [2, 3]).unwrap();
        let multi = map_witness_multipartite(&[c(1.0, 0.0)], &[(3, 2)], &b).unwrap();
        assert_eq!(multi[0].0, MultiIndex(vec![2, 2, 1]));
    }

    #[test]
    fn rescaled_witness_reproduces_the_single_direction_value() {
        let t = atom_table(1, false, 1);
        let idx = sub_poisson_index();
        let chi = c(0.9, -0.6);
        let n = nonclassicality_verdict(&t, chi, &idx).unwrap();
        let g = ModeGeometry::new(vec![c(1.3, 0.2), c(-0.5, 0.7)]).unwrap();
        let b = Bipartition::new(2, [2]).unwrap();
        let mapped = map_witness_rescaled(&n.witness_coefficients, &idx, chi, &g, &b).unwrap();
        let multi: Vec<MultiIndex> = mapped.iter().map(|(l, _)| l.clone()).collect();
        let coeffs = nalgebra::DVector::from_iterator(mapped.len(), mapped.iter().map(|(_, c)| *c));
        let p = entanglement_matrix(&t, &g, &multi, &b).unwrap();
        let value = hermitian_form(&p.matrix, &coeffs);
        assert!((value.re - n.min_eigenvalue).abs() < 1e-12);
        assert!(value.re < 0.0);
    }

    #[test]
    fn multipartite_single_atom() {
        let t = atom_table(1, false, 2);
        let g = ModeGeometry::uniform(3).unwrap();
        let report = multipartite_scan(&t, &g, &multi_indices_up_to(3, 2)).unwrap();
        assert_eq!(report.verdicts.len(), 3);
        assert!(report.all_negative);
        assert!(matches!(
            multipartite_scan(&t, &g, &multi_indices_up_to(3, 1)),
            Err(WitnessError::OrderTooLow { order: 1, .. })
        ));
        let two = ModeGeometry::uniform(2).unwrap();
        assert!(matches!(multipartite_scan(&t, &two, &multi_indices_up_to(2, 2)), Err(WitnessError::TooFewModes { .. })));
    }

    #[test]
    fn atom_minor_negative_for_small_ensembles() {
        for atoms in 1..=3u32 {
            for collective in [false, true] {
                let t = atom_table(atoms as usize, collective, (atoms + 1).div_ceil(2).max(1));
                let k = best_atom_split(&t, atoms).unwrap();
                let v = nonclassicality_verdict(&t, c(1.0, 0.0), &atom_index(atoms, k)).unwrap();
                assert!(v.worst_minor.determinant < -1e-12, "N={atoms} collective={collective}: {v:?}");
            }
        }
    }

    #[test]
    fn two_time_witness_reduces_at_zero_lag_and_is_stationary() {
        let model = EmitterModel::ensemble(1, 1.0, 0.0, false);
        let l = Liouvillian::new(&model).unwrap();
        let ss = stationary_state(&model).unwrap();
        let s = source_operator(&model).unwrap();
        let t = moment_table(&model, &ss.rho, 1).unwrap();
        let g = ModeGeometry::uniform(2).unwrap();
        let b = Bipartition::new(2, [2]).unwrap();
        let idx = pairs_to_multi(&sub_poisson_index());
        let single = entanglement_matrix(&t, &g, &idx, &b).unwrap();
        let zero = multi_time_matrix(&l, &ss.rho, &s, &idx, &[0.0, 0.0], &g, &b).unwrap();
        assert!(max_abs(&(zero.matrix - single.matrix)) < 1e-12);
        let a = multi_time_matrix(&l, &ss.rho, &s, &idx, &[0.0, 0.1], &g, &b).unwrap();
        let shifted = multi_time_matrix(&l, &ss.rho, &s, &idx, &[2.0, 2.1], &g, &b).unwrap();
        assert!(max_abs(&(a.matrix.clone() - shifted.matrix)) < 1e-9);
        assert!(Verdict::from_matrix(&a).unwrap().is_negative());
    }

    fn arb_c64() -> impl Strategy<Value = C64> {
        (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(a, b)| c(a, b))
    }

    fn arb_chi() -> impl Strategy<Value = C64> {
        (0.2..2.0f64, 0.0..std::f64::consts::TAU).prop_map(|(r, p)| C64::from_polar(r, p))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn coefficients_reproduce_min_eigenvalue(alpha in arb_c64(), chi in arb_chi()) {
            let t = coherent_table(alpha * 0.5, 2);
            let m = nonclassicality_matrix(&t, chi, &order_k_pairs(2)).unwrap();
            let v = Verdict::from_matrix(&m).unwrap();
            let coeffs = nalgebra::DVector::from_vec(v.witness_coefficients.clone());
            let value = hermitian_form(&m.matrix, &coeffs);
            prop_assert!((value.re - v.min_eigenvalue).abs() < 1e-10);
            prop_assert!((coeffs.norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn classification_is_geometry_invariant(chi in proptest::collection::vec(arb_chi(), 3)) {
            let t = atom_table(1, false, 2);
            let idx = multi_indices_up_to(3, 2);
            let g = ModeGeometry::new(chi).unwrap();
            let unit = ModeGeometry::uniform(3).unwrap();
            for b in Bipartition::all(3) {
                let v = entanglement_verdict(&t, &g, &idx, &b).unwrap();
                let u = entanglement_verdict(&t, &unit, &idx, &b).unwrap();
                prop_assert_eq!(v.classification, u.classification);
            }
        }

        #[test]
        fn congruence_holds_for_random_geometry(chi in proptest::collection::vec(arb_chi(), 2), alpha in arb_c64()) {
            let t = coherent_table(alpha * 0.5, 2);
            let g = ModeGeometry::new(chi).unwrap();
            let b = Bipartition::new(2, [2]).unwrap();
            let r = congruence_check(&t, &g, &multi_indices_up_to(2, 2), &b).unwrap();
            prop_assert!(r.max_deviation < 1e-10);
            prop_assert!(r.signs_agree());
        }
    }
}
