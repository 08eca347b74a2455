//! Finite-dimensional emitter models, dense operators and density matrices.
//!
//! Rates and frequencies are in units of the single-emitter decay rate
//! `gamma = 1`.

use std::ops::Mul;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{hermiticity_defect, min_eigenvalue, trace_of_product};
use crate::{CMatrix, C64};

/// Default cap on the Hilbert-space dimension.
pub const DEFAULT_DIM_CAP: usize = 4096;

/// Reference decay rate; every other rate is expressed relative to it.
pub const GAMMA: f64 = 1.0;

const HERMITIAN_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-10;
const POSITIVITY_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("Hilbert dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("not a density matrix: {0}")]
    NotDensityMatrix(String),
}

/// `N` two-level atoms radiating through `S = sum_k A12^(k) e^{i phi_k}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelEnsemble {
    pub atoms: usize,
    /// Phase `phi_k` of each atom (radians).
    pub phases: Vec<f64>,
    pub rabi: f64,
    pub detuning: f64,
    /// One collective decay channel `S` instead of independent channels.
    pub collective_decay: bool,
}

/// Driven bosonic mode with Kerr nonlinearity; `S = a` on a truncated Fock
/// space `|0>..|n_max>`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KerrMode {
    pub n_max: usize,
    pub kerr: f64,
    pub drive: f64,
    pub detuning: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmitterModel {
    TwoLevelEnsemble(TwoLevelEnsemble),
    KerrMode(KerrMode),
}

impl EmitterModel {
    /// Ensemble of `atoms` atoms with all phases zero.
    pub fn ensemble(atoms: usize, rabi: f64, detuning: f64, collective_decay: bool) -> Self {
        EmitterModel::TwoLevelEnsemble(TwoLevelEnsemble {
            atoms,
            phases: vec![0.0; atoms],
            rabi,
            detuning,
            collective_decay,
        })
    }

    pub fn kerr(n_max: usize, kerr: f64, drive: f64, detuning: f64) -> Self {
        EmitterModel::KerrMode(KerrMode { n_max, kerr, drive, detuning })
    }

    pub fn dim(&self) -> usize {
        match self {
            EmitterModel::TwoLevelEnsemble(e) => 1usize.checked_shl(e.atoms as u32).unwrap_or(usize::MAX),
            EmitterModel::KerrMode(k) => k.n_max + 1,
        }
    }

    pub fn is_bosonic(&self) -> bool {
        matches!(self, EmitterModel::KerrMode(_))
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.validate_with_cap(DEFAULT_DIM_CAP)
    }

    pub fn validate_with_cap(&self, cap: usize) -> Result<(), ModelError> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(ModelError::Invalid(format!("{name} must be finite")))
            }
        };
        match self {
            EmitterModel::TwoLevelEnsemble(e) => {
                if e.atoms == 0 {
                    return Err(ModelError::Invalid("atom count must be at least 1".into()));
                }
                if e.phases.len() != e.atoms {
                    return Err(ModelError::Invalid(format!(
                        "{} phases given for {} atoms",
                        e.phases.len(),
                        e.atoms
                    )));
                }
                for &p in &e.phases {
                    finite("phase", p)?;
                }
                finite("rabi", e.rabi)?;
                finite("detuning", e.detuning)?;
                if e.rabi < 0.0 {
                    return Err(ModelError::Invalid("rabi frequency must be non-negative".into()));
                }
                if e.atoms >= usize::BITS as usize - 1 {
                    return Err(ModelError::DimensionCap { dim: usize::MAX, cap });
                }
            }
            EmitterModel::KerrMode(k) => {
                if k.n_max < 2 {
                    return Err(ModelError::Invalid("Fock truncation n_max must be at least 2".into()));
                }
                finite("kerr", k.kerr)?;
                finite("drive", k.drive)?;
                finite("detuning", k.detuning)?;
                if k.drive < 0.0 {
                    return Err(ModelError::Invalid("drive must be non-negative".into()));
                }
            }
        }
        let dim = self.dim();
        if dim > cap {
            return Err(ModelError::DimensionCap { dim, cap });
        }
        Ok(())
    }
}

/// Square dense operator.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator(CMatrix);

impl Operator {
    pub fn new(m: CMatrix) -> Result<Self, ModelError> {
        if m.nrows() != m.ncols() {
            return Err(ModelError::DimensionMismatch { left: m.nrows(), right: m.ncols() });
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(ModelError::Invalid("operator has non-finite entries".into()));
        }
        Ok(Operator(m))
    }

    pub fn identity(dim: usize) -> Self {
        Operator(CMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn adjoint(&self) -> Operator {
        Operator(self.0.adjoint())
    }

    pub fn pow(&self, k: u32) -> Operator {
        let mut out = CMatrix::identity(self.dim(), self.dim());
        for _ in 0..k {
            out = &out * &self.0;
        }
        Operator(out)
    }

    /// `(S^dag)^a S^b`.
    pub fn normal_power(&self, a: u32, b: u32) -> Operator {
        let left = self.adjoint().pow(a);
        Operator(left.0 * self.pow(b).0)
    }
}

impl Mul for &Operator {
    type Output = Operator;

    fn mul(self, rhs: &Operator) -> Operator {
        Operator(&self.0 * &rhs.0)
    }
}

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    /// Validates the density-matrix invariants (Hermitian and unit trace
    /// within 1e-10, smallest eigenvalue at least -1e-8).
    pub fn new(m: CMatrix) -> Result<Self, ModelError> {
        let rho = DensityMatrix::from_hermitian_unit_trace(m)?;
        let lowest = min_eigenvalue(&rho.0);
        if lowest < -POSITIVITY_TOL {
            return Err(ModelError::NotDensityMatrix(format!("smallest eigenvalue {lowest:e}")));
        }
        Ok(rho)
    }

    /// Checks Hermiticity and trace only; positivity is guaranteed by the
    /// caller's construction.
    pub(crate) fn from_hermitian_unit_trace(m: CMatrix) -> Result<Self, ModelError> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(ModelError::NotDensityMatrix("matrix is not square".into()));
        }
        let herm = hermiticity_defect(&m);
        if herm > HERMITIAN_TOL {
            return Err(ModelError::NotDensityMatrix(format!("Hermiticity defect {herm:e}")));
        }
        let tr = m.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(ModelError::NotDensityMatrix(format!("trace {tr}")));
        }
        Ok(DensityMatrix(m))
    }

    /// `|psi><psi|` for a normalized copy of `psi`.
    pub fn pure(psi: &[C64]) -> Result<Self, ModelError> {
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(ModelError::NotDensityMatrix("zero state vector".into()));
        }
        let n = psi.len();
        let m = CMatrix::from_fn(n, n, |i, j| psi[i] * psi[j].conj() / (norm * norm));
        DensityMatrix::from_hermitian_unit_trace(m)
    }

    /// Basis projector `|k><k|` in dimension `dim`; `k = 0` is the ground
    /// state of either model.
    pub fn basis(dim: usize, k: usize) -> Result<Self, ModelError> {
        if k >= dim {
            return Err(ModelError::Invalid(format!("basis index {k} outside dimension {dim}")));
        }
        let mut m = CMatrix::zeros(dim, dim);
        m[(k, k)] = C64::new(1.0, 0.0);
        Ok(DensityMatrix(m))
    }

    pub fn ground(dim: usize) -> Self {
        DensityMatrix::basis(dim, 0).expect("dim > 0")
    }

    /// Fock state `|n>` on `|0>..|n_max>`.
    pub fn fock(n_max: usize, n: usize) -> Result<Self, ModelError> {
        DensityMatrix::basis(n_max + 1, n)
    }

    /// Truncated coherent state `|alpha>`, renormalized on `|0>..|n_max>`.
    pub fn coherent(n_max: usize, alpha: C64) -> Result<Self, ModelError> {
        let mut amp = Vec::with_capacity(n_max + 1);
        let mut c = C64::new(1.0, 0.0);
        for n in 0..=n_max {
            if n > 0 {
                c = c * alpha / (n as f64).sqrt();
            }
            amp.push(c);
        }
        DensityMatrix::pure(&amp)
    }

    /// Truncated thermal state with mean photon number `nbar`.
    pub fn thermal(n_max: usize, nbar: f64) -> Result<Self, ModelError> {
        if !(nbar >= 0.0) || !nbar.is_finite() {
            return Err(ModelError::Invalid("mean photon number must be non-negative".into()));
        }
        let ratio = nbar / (1.0 + nbar);
        let weights: Vec<f64> = (0..=n_max).map(|n| ratio.powi(n as i32)).collect();
        let total: f64 = weights.iter().sum();
        let m = CMatrix::from_fn(n_max + 1, n_max + 1, |i, j| {
            if i == j {
                C64::new(weights[i] / total, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        Ok(DensityMatrix(m))
    }

    /// Convex mixture `p a + (1-p) b`.
    pub fn mixture(a: &DensityMatrix, b: &DensityMatrix, p: f64) -> Result<Self, ModelError> {
        if a.dim() != b.dim() {
            return Err(ModelError::DimensionMismatch { left: a.dim(), right: b.dim() });
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(ModelError::Invalid(format!("mixing weight {p} outside [0, 1]")));
        }
        let m = &a.0 * C64::new(p, 0.0) + &b.0 * C64::new(1.0 - p, 0.0);
        DensityMatrix::from_hermitian_unit_trace(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    /// Diagonal populations.
    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.0[(i, i)].re).collect()
    }

    /// Population of the two highest basis states, used as the Fock
    /// truncation diagnostic.
    pub fn top_population(&self) -> f64 {
        let p = self.populations();
        p.iter().rev().take(2).sum()
    }
}

/// Lowering operator of the model's radiating source.
///
/// Ensemble: `S = sum_k sigma_-^(k) e^{i phi_k}`, atom 1 is the most
/// significant tensor factor and basis index 0 of an atom is its ground
/// state. Kerr mode: the truncated annihilation operator.
pub fn source_operator(model: &EmitterModel) -> Result<Operator, ModelError> {
    model.validate()?;
    let dim = model.dim();
    let mut s = CMatrix::zeros(dim, dim);
    match model {
        EmitterModel::TwoLevelEnsemble(e) => {
            for (k, &phi) in e.phases.iter().enumerate() {
                let bit = 1usize << (e.atoms - 1 - k);
                let w = C64::from_polar(1.0, phi);
                for col in 0..dim {
                    if col & bit != 0 {
                        s[(col & !bit, col)] += w;
                    }
                }
            }
        }
        EmitterModel::KerrMode(k) => {
            for n in 1..=k.n_max {
                s[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
            }
        }
    }
    Ok(Operator(s))
}

/// Lowering operator of atom `k` (0-based) in an `atoms`-atom register.
pub fn atom_lowering(atoms: usize, k: usize) -> Operator {
    let dim = 1usize << atoms;
    let bit = 1usize << (atoms - 1 - k);
    let mut s = CMatrix::zeros(dim, dim);
    for col in 0..dim {
        if col & bit != 0 {
            s[(col & !bit, col)] = C64::new(1.0, 0.0);
        }
    }
    Operator(s)
}

/// `Tr(op rho)`.
pub fn expectation(rho: &DensityMatrix, op: &Operator) -> Result<C64, ModelError> {
    if rho.dim() != op.dim() {
        return Err(ModelError::DimensionMismatch { left: rho.dim(), right: op.dim() });
    }
    Ok(trace_of_product(op.matrix(), rho.matrix()))
}
