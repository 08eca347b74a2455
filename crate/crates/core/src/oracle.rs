//! Brute-force NPT checks on explicit multimode states.
//!
//! A single bosonic mode is split into `M` output modes by a linear-optics
//! network, `a^dag -> sum_j u_j a_j^dag`, which gives the outputs the same
//! normally ordered moments as directional fields with mode functions
//! `chi_j = u_j`. The partial transpose of the resulting density matrix is
//! diagonalized directly and compared with the moment-matrix witnesses.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{stationary_state, DynamicsError};
use crate::linalg::{hermitian_eigen, min_eigenvalue};
use crate::opalg::{multi_indices_up_to, AlgebraError, Bipartition, ModeGeometry, MultiIndex};
use crate::qcore::{DensityMatrix, EmitterModel, ModelError, Operator, DEFAULT_DIM_CAP};
use crate::witness::{entanglement_verdict, MomentTable, Verdict, WitnessError, TRUNCATION_TOL};
use crate::{CMatrix, C64};

/// Partial-transpose eigenvalues below this certify NPT.
pub const NPT_THRESHOLD: f64 = -1e-12;

const AMPLITUDE_NORM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Witness(#[from] WitnessError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("the oracle needs a bosonic source; atomic ensembles are checked at the moment level only")]
    NonBosonic,
    #[error("invalid splitter: {0}")]
    InvalidSplitter(String),
    #[error("population {population:e} in the top Fock levels; raise n_max")]
    Truncation { population: f64 },
    #[error("multimode dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("witness negative but partial transpose positive across {bipartition} (witness {witness_min:e}, oracle {oracle_min:e})")]
    Soundness { bipartition: String, witness_min: f64, oracle_min: f64 },
}

impl OracleError {
    pub fn is_physics(&self) -> bool {
        match self {
            OracleError::Witness(e) => e.is_physics(),
            OracleError::Model(ModelError::DimensionCap { .. }) => true,
            OracleError::Dynamics(_)
            | OracleError::Truncation { .. }
            | OracleError::DimensionCap { .. }
            | OracleError::Soundness { .. } => true,
            _ => false,
        }
    }
}

/// Output amplitudes `u_j` of a lossless splitter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitterSpec {
    amplitudes: Vec<C64>,
}

impl SplitterSpec {
    /// Requires `M >= 2`, `sum |u_j|^2 = 1` and `u_1` real positive.
    pub fn new(amplitudes: Vec<C64>) -> Result<Self, OracleError> {
        if amplitudes.len() < 2 {
            return Err(OracleError::InvalidSplitter(format!("{} outputs, need at least 2", amplitudes.len())));
        }
        let norm: f64 = amplitudes.iter().map(|u| u.norm_sqr()).sum();
        if (norm - 1.0).abs() > AMPLITUDE_NORM_TOL {
            return Err(OracleError::InvalidSplitter(format!("sum of |u_j|^2 is {norm}, not 1")));
        }
        let u1 = amplitudes[0];
        if u1.re <= 0.0 || u1.im.abs() > AMPLITUDE_NORM_TOL {
            return Err(OracleError::InvalidSplitter("amplitude of output 1 must be real and positive".into()));
        }
        Ok(SplitterSpec { amplitudes })
    }

    /// Equal split into `m` outputs.
    pub fn symmetric(m: usize) -> Result<Self, OracleError> {
        SplitterSpec::new(vec![C64::new(1.0 / (m as f64).sqrt(), 0.0); m])
    }

    /// Splitter whose amplitudes are the normalized mode functions, with the
    /// global phase chosen to make output 1 real positive.
    pub fn from_geometry(geometry: &ModeGeometry) -> Result<Self, OracleError> {
        let norm: f64 = geometry.chi().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let phase = C64::from_polar(1.0, -geometry.chi()[0].arg());
        let mut amplitudes: Vec<C64> = geometry.chi().iter().map(|z| z * phase / norm).collect();
        amplitudes[0] = C64::new(amplitudes[0].norm(), 0.0);
        SplitterSpec::new(amplitudes)
    }

    pub fn modes(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    /// The amplitudes as mode functions.
    pub fn geometry(&self) -> Result<ModeGeometry, OracleError> {
        Ok(ModeGeometry::new(self.amplitudes.clone())?)
    }
}

/// Density matrix on `M` modes truncated at `n_max` photons each; mode 1 is
/// the most significant tensor factor.
#[derive(Clone, Debug, PartialEq)]
pub struct MultimodeState {
    modes: usize,
    n_max: usize,
    rho: CMatrix,
}

impl MultimodeState {
    pub fn new(modes: usize, n_max: usize, rho: CMatrix) -> Result<Self, OracleError> {
        let dim = multimode_dim(modes, n_max)?;
        if rho.nrows() != dim || rho.ncols() != dim {
            return Err(ModelError::DimensionMismatch { left: dim, right: rho.nrows() }.into());
        }
        DensityMatrix::new(rho.clone())?;
        Ok(MultimodeState { modes, n_max, rho })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.rho
    }

    fn digits(&self, mut index: usize) -> Vec<usize> {
        let base = self.n_max + 1;
        let mut d = vec![0; self.modes];
        for slot in d.iter_mut().rev() {
            *slot = index % base;
            index /= base;
        }
        d
    }

    fn index(&self, digits: &[usize]) -> usize {
        digits.iter().fold(0, |acc, &d| acc * (self.n_max + 1) + d)
    }
}

fn multimode_dim(modes: usize, n_max: usize) -> Result<usize, OracleError> {
    let dim = (n_max + 1).checked_pow(modes as u32).unwrap_or(usize::MAX);
    if dim > DEFAULT_DIM_CAP {
        return Err(OracleError::DimensionCap { dim, cap: DEFAULT_DIM_CAP });
    }
    Ok(dim)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// All photon distributions `k` over `modes` modes with `sum k = total`.
fn compositions(total: usize, modes: usize) -> Vec<Vec<usize>> {
    if modes == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in (0..=total).rev() {
        for mut rest in compositions(total - first, modes - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Image of a single-mode state under the splitter, with vacuum in every
/// other input port.
pub fn split_state(rho: &DensityMatrix, spec: &SplitterSpec) -> Result<MultimodeState, OracleError> {
    let n_max = rho.dim() - 1;
    let population = rho.top_population();
    if population > TRUNCATION_TOL {
        return Err(OracleError::Truncation { population });
    }
    let m = spec.modes();
    let dim = multimode_dim(m, n_max)?;
    let shell = MultimodeState { modes: m, n_max, rho: CMatrix::zeros(0, 0) };
    // isometry |n> -> sum_k sqrt(n! / prod k_j!) prod u_j^{k_j} |k>
    let mut v = CMatrix::zeros(dim, n_max + 1);
    for n in 0..=n_max {
        for k in compositions(n, m) {
            let mut amp = C64::new((factorial(n) / k.iter().map(|&x| factorial(x)).product::<f64>()).sqrt(), 0.0);
            for (u, &kj) in spec.amplitudes.iter().zip(&k) {
                amp *= u.powu(kj as u32);
            }
            v[(shell.index(&k), n)] = amp;
        }
    }
    let out = &v * rho.matrix() * v.adjoint();
    let out = (&out + out.adjoint()) * C64::new(0.5, 0.0);
    MultimodeState::new(m, n_max, out)
}

/// Density-matrix partial transpose on the modes of `bipartition.transposed()`.
pub fn partial_transpose_state(state: &MultimodeState, bipartition: &Bipartition) -> Result<CMatrix, OracleError> {
    if bipartition.modes() != state.modes {
        return Err(AlgebraError::InvalidBipartition(format!(
            "bipartition of {} modes for a {}-mode state",
            bipartition.modes(),
            state.modes
        ))
        .into());
    }
    let dim = state.dim();
    let digits: Vec<Vec<usize>> = (0..dim).map(|i| state.digits(i)).collect();
    let mut out = CMatrix::zeros(dim, dim);
    for r in 0..dim {
        for c in 0..dim {
            let mut dr = digits[r].clone();
            let mut dc = digits[c].clone();
            for j in bipartition.transposed() {
                std::mem::swap(&mut dr[j - 1], &mut dc[j - 1]);
            }
            out[(state.index(&dr), state.index(&dc))] = state.rho[(r, c)];
        }
    }
    Ok(out)
}

pub fn pt_min_eigenvalue(state: &MultimodeState, bipartition: &Bipartition) -> Result<f64, OracleError> {
    Ok(min_eigenvalue(&partial_transpose_state(state, bipartition)?))
}

/// Ascending spectrum of the partial transpose.
pub fn pt_spectrum(state: &MultimodeState, bipartition: &Bipartition) -> Result<Vec<f64>, OracleError> {
    Ok(hermitian_eigen(&partial_transpose_state(state, bipartition)?).0)
}

fn annihilation(n_max: usize) -> CMatrix {
    let mut a = CMatrix::zeros(n_max + 1, n_max + 1);
    for n in 1..=n_max {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    a
}

/// `< prod_j a_j^dag^{p_j} prod_j a_j^{q_j} >` of a multimode state.
pub fn multimode_moment(state: &MultimodeState, dagger: &[u32], lowering: &[u32]) -> Result<C64, OracleError> {
    if dagger.len() != state.modes || lowering.len() != state.modes {
        return Err(ModelError::Invalid(format!("moment powers must list {} modes", state.modes)).into());
    }
    let a = Operator::new(annihilation(state.n_max))?;
    let ad = a.adjoint();
    let mut op = CMatrix::identity(1, 1);
    for (&p, &q) in dagger.iter().zip(lowering) {
        let local = (&ad.pow(p) * &a.pow(q)).into_matrix();
        op = op.kronecker(&local);
    }
    Ok((op * &state.rho).trace())
}

/// Largest `|<prod a_j^dag^p a_j^q> - prod conj(u_j)^p_j u_j^q_j mu(|p|, |q|)|`
/// over all moments of total order `sum p + sum q <= order`.
pub fn moment_factorization_deviation(
    rho: &DensityMatrix,
    spec: &SplitterSpec,
    order: u32,
) -> Result<f64, OracleError> {
    let state = split_state(rho, spec)?;
    let a = Operator::new(annihilation(rho.dim() - 1))?;
    let m = spec.modes();
    let mut worst: f64 = 0.0;
    for total in 0..=order {
        for left in 0..=total {
            for p in multi_indices_up_to(m, left).into_iter().filter(|x| x.order() == left) {
                for q in multi_indices_up_to(m, total - left).into_iter().filter(|x| x.order() == total - left) {
                    let direct = multimode_moment(&state, &p.0, &q.0)?;
                    let mut predicted = crate::qcore::expectation(rho, &a.normal_power(p.order(), q.order()))?;
                    for (j, u) in spec.amplitudes.iter().enumerate() {
                        predicted *= u.conj().powu(p.0[j]) * u.powu(q.0[j]);
                    }
                    worst = worst.max((direct - predicted).norm());
                }
            }
        }
    }
    Ok(worst)
}

/// Witness and oracle outcome for one bipartition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub bipartition: String,
    pub witness_min_eigenvalue: f64,
    pub witness_negative: bool,
    pub oracle_min_eigenvalue: f64,
    pub oracle_npt: bool,
    /// Witness negative implies oracle NPT.
    pub sound: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    /// The split state is a representative with the same normally ordered
    /// moments as the directional fields, not the emitted field itself.
    pub note: String,
    pub amplitudes: Vec<C64>,
    pub order: u32,
    pub comparisons: Vec<OracleComparison>,
}

impl CrossValidation {
    pub fn all_sound(&self) -> bool {
        self.comparisons.iter().all(|c| c.sound)
    }
}

/// Runs the moment witness (order `order`, mode functions `u_j`) and the
/// density-matrix PT test on every bipartition. A negative witness without
/// NPT is a hard error.
pub fn cross_validate(
    rho: &DensityMatrix,
    spec: &SplitterSpec,
    order: u32,
    bipartitions: &[Bipartition],
) -> Result<CrossValidation, OracleError> {
    let a = Operator::new(annihilation(rho.dim() - 1))?;
    let population = rho.top_population();
    if population > TRUNCATION_TOL || 2 * order as usize > rho.dim() - 1 {
        return Err(OracleError::Truncation { population });
    }
    let table = MomentTable::from_state(&a, rho, order, "split bosonic state")?;
    let geometry = spec.geometry()?;
    let idx: Vec<MultiIndex> = multi_indices_up_to(spec.modes(), order);
    let state = split_state(rho, spec)?;
    let mut comparisons = Vec::with_capacity(bipartitions.len());
    for b in bipartitions {
        let verdict: Verdict = entanglement_verdict(&table, &geometry, &idx, b)?;
        let oracle_min = pt_min_eigenvalue(&state, b)?;
        let oracle_npt = oracle_min < NPT_THRESHOLD;
        let sound = !verdict.is_negative() || oracle_npt;
        if !sound {
            return Err(OracleError::Soundness {
                bipartition: b.to_string(),
                witness_min: verdict.min_eigenvalue,
                oracle_min,
            });
        }
        comparisons.push(OracleComparison {
            bipartition: b.to_string(),
            witness_min_eigenvalue: verdict.min_eigenvalue,
            witness_negative: verdict.is_negative(),
            oracle_min_eigenvalue: oracle_min,
            oracle_npt,
            sound,
        });
    }
    Ok(CrossValidation {
        note: "oracle state is a linear-optics representative with the directional fields' normally ordered moments"
            .into(),
        amplitudes: spec.amplitudes.clone(),
        order,
        comparisons,
    })
}

/// [`cross_validate`] on the steady state of a bosonic model.
pub fn cross_validate_model(
    model: &EmitterModel,
    spec: &SplitterSpec,
    order: u32,
    bipartitions: &[Bipartition],
) -> Result<CrossValidation, OracleError> {
    if !model.is_bosonic() {
        return Err(OracleError::NonBosonic);
    }
    let ss = stationary_state(model)?;
    cross_validate(&ss.rho, spec, order, bipartitions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn half() -> SplitterSpec {
        SplitterSpec::symmetric(2).unwrap()
    }

    fn cut(modes: usize) -> Bipartition {
        Bipartition::new(modes, [modes]).unwrap()
    }

    #[test]
    fn splitter_validation() {
        assert!(SplitterSpec::new(vec![c(1.0, 0.0)]).is_err());
        assert!(SplitterSpec::new(vec![c(0.5, 0.0), c(0.5, 0.0)]).is_err());
        assert!(SplitterSpec::new(vec![c(0.0, 0.6), c(0.8, 0.0)]).is_err());
        let g = ModeGeometry::new(vec![c(0.0, 2.0), c(1.0, 1.0)]).unwrap();
        let s = SplitterSpec::from_geometry(&g).unwrap();
        assert!(s.amplitudes()[0].im == 0.0 && s.amplitudes()[0].re > 0.0);
    }

    #[test]
    fn vacuum_splits_to_vacuum() {
        let out = split_state(&DensityMatrix::ground(4), &SplitterSpec::symmetric(3).unwrap()).unwrap();
        assert_eq!(out.matrix()[(0, 0)], c(1.0, 0.0));
        assert!(out.matrix().iter().skip(1).all(|z| z.norm() == 0.0));
    }

    #[test]
    fn single_photon_bell_state() {
        let rho = DensityMatrix::fock(3, 1).unwrap();
        let out = split_state(&rho, &half()).unwrap();
        // |10> and |01> on base-4 digits
        let (i10, i01) = (4, 1);
        for (r, cc) in [(i10, i10), (i01, i01), (i10, i01), (i01, i10)] {
            assert!((out.matrix()[(r, cc)] - c(0.5, 0.0)).norm() < 1e-15);
        }
        assert!((pt_min_eigenvalue(&out, &cut(2)).unwrap() + 0.5).abs() < 1e-12);
    }

    #[test]
    fn coherent_splits_to_product() {
        let alpha = c(0.6, 0.3);
        let (t, r) = (0.8, c(0.36, 0.48));
        let spec = SplitterSpec::new(vec![c(t, 0.0), r]).unwrap();
        // truncation leaves amplitudes ~ |alpha|^n / sqrt(n!) at the edge, which
        // entangle at first order; n_max = 22 pushes them below 1e-13
        let out = split_state(&DensityMatrix::coherent(22, alpha).unwrap(), &spec).unwrap();
        let a = DensityMatrix::coherent(22, alpha * t).unwrap();
        let b = DensityMatrix::coherent(22, alpha * r).unwrap();
        let product = a.matrix().kronecker(b.matrix());
        let fidelity = (product * out.matrix()).trace().re;
        assert!(fidelity > 1.0 - 1e-8);
        let m = pt_min_eigenvalue(&out, &cut(2)).unwrap();
        assert!(m >= NPT_THRESHOLD, "{m}");
    }

    #[test]
    fn transposition_is_an_involution_up_to_full_transpose() {
        let rho = DensityMatrix::mixture(&DensityMatrix::fock(5, 1).unwrap(), &DensityMatrix::fock(5, 2).unwrap(), 0.3)
            .unwrap();
        let out = split_state(&rho, &SplitterSpec::symmetric(2).unwrap()).unwrap();
        let original = hermitian_eigen(out.matrix()).0;
        let b2 = cut(2);
        let pt = partial_transpose_state(&out, &b2).unwrap();
        let twice = partial_transpose_state(&MultimodeState { modes: 2, n_max: 5, rho: pt }, &b2).unwrap();
        assert_eq!(&twice, out.matrix());
        let full_b = Bipartition::new(2, [1]).unwrap();
        let pt = partial_transpose_state(&out, &b2).unwrap();
        let full = partial_transpose_state(&MultimodeState { modes: 2, n_max: 5, rho: pt }, &full_b).unwrap();
        let spectrum = hermitian_eigen(&full).0;
        for (x, y) in original.iter().zip(&spectrum) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn thermal_state_is_consistent() {
        let rho = DensityMatrix::thermal(14, 0.2).unwrap();
        let report = cross_validate(&rho, &half(), 2, &[cut(2)]).unwrap();
        let cmp = &report.comparisons[0];
        assert!(!cmp.witness_negative);
        assert!(cmp.oracle_min_eigenvalue >= NPT_THRESHOLD);
    }

    #[test]
    fn three_way_single_photon() {
        let rho = DensityMatrix::fock(4, 1).unwrap();
        let spec = SplitterSpec::symmetric(3).unwrap();
        let report = cross_validate(&rho, &spec, 2, &Bipartition::all(3)).unwrap();
        assert_eq!(report.comparisons.len(), 3);
        assert!(report.comparisons.iter().all(|c| c.witness_negative && c.oracle_npt));
    }

    #[test]
    fn atoms_are_refused() {
        let model = EmitterModel::ensemble(1, 1.0, 0.0, false);
        assert_eq!(cross_validate_model(&model, &half(), 1, &[cut(2)]), Err(OracleError::NonBosonic));
    }

    fn arb_state() -> impl Strategy<Value = DensityMatrix> {
        proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 8).prop_map(|amps| {
            // weights decay so the top two levels stay empty
            let mut psi: Vec<C64> =
                amps.iter().enumerate().map(|(n, &(a, b))| c(a, b) * 0.5f64.powi(n as i32)).collect();
            psi.extend([c(0.0, 0.0); 2]);
            let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let psi: Vec<C64> = psi.iter().map(|z| z / norm).collect();
            DensityMatrix::pure(&psi).unwrap()
        })
    }

    fn arb_splitter() -> impl Strategy<Value = SplitterSpec> {
        (0.1..1.0f64, 0.0..std::f64::consts::TAU).prop_map(|(t, phi)| {
            SplitterSpec::new(vec![c(t, 0.0), C64::from_polar((1.0 - t * t).sqrt(), phi)]).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn split_moments_factorize(rho in arb_state(), spec in arb_splitter()) {
            prop_assert!(moment_factorization_deviation(&rho, &spec, 3).unwrap() < 1e-9);
        }
    }
}
