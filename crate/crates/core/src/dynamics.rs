//! Lindblad dynamics of the emitter models: generators, steady states,
//! propagation and multi-time correlations by quantum regression.
//!
//! Master equations (all rates in units of `gamma = 1`):
//!
//! - ensemble: `H = sum_k [-(D/2) sz_k + (W/2)(s+_k e^{-i phi_k} + h.c.)]`
//!   with either independent channels `s-_k` or one collective channel `S`;
//! - Kerr mode: `H = -D a^dag a + K a^dag^2 a^2 + e (a + a^dag)`, channel `a`.

use nalgebra::{FullPivLU, Schur};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{frobenius, hermiticity_defect, max_abs, trace_of_product};
use crate::qcore::{atom_lowering, source_operator, DensityMatrix, EmitterModel, ModelError, Operator, GAMMA};
use crate::{CMatrix, C64};

/// Largest Hilbert dimension for which the dense `d^2 x d^2` superoperator
/// is materialized.
pub const SUPEROPERATOR_DIM_CAP: usize = 48;

/// Required `||L rho_ss||_F`.
pub const STEADY_RESIDUAL_TOL: f64 = 1e-10;

/// Allowed max-entry deviation between the null-space steady state and the
/// long-time propagated state.
pub const CROSS_CHECK_TOL: f64 = 1e-6;

/// Local error target of the adaptive RK4 integrator.
pub const LOCAL_ERROR_TOL: f64 = 1e-9;

const NULLITY_REL_TOL: f64 = 1e-11;
const RELAX_RESIDUAL_TOL: f64 = 1e-10;
const RELAX_T_MAX: f64 = 5000.0;
const MAX_STEPS: usize = 50_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("steady state is degenerate: Liouvillian null space has dimension {nullity}")]
    Degenerate { nullity: usize },
    #[error("steady-state residual {residual:e} exceeds {STEADY_RESIDUAL_TOL:e}")]
    Residual { residual: f64 },
    #[error("null-space steady state and long-time propagation differ by {deviation:e}")]
    CrossCheck { deviation: f64 },
    #[error("propagation did not relax within t = {t}")]
    NotConverged { t: f64 },
    #[error("superoperator for dimension {dim} exceeds cap {SUPEROPERATOR_DIM_CAP}")]
    SuperoperatorCap { dim: usize },
    #[error("times must be sorted ascending and non-negative")]
    UnsortedTimes,
    #[error("{what}: expected {expected}, got {got}")]
    LengthMismatch { what: &'static str, expected: usize, got: usize },
    #[error("integrator failed: {0}")]
    Integrator(String),
    #[error("spectrum did not converge")]
    Spectrum,
}

/// Hamiltonian of the model.
pub fn hamiltonian(model: &EmitterModel) -> Result<Operator, ModelError> {
    let s = source_operator(model)?;
    let dim = model.dim();
    let m = match model {
        EmitterModel::TwoLevelEnsemble(e) => {
            // sum_k sz_k is diagonal: (#excited - #ground) per basis state
            let mut h = (s.matrix() + s.matrix().adjoint()) * C64::new(e.rabi / 2.0, 0.0);
            for i in 0..dim {
                let excited = i.count_ones() as f64;
                let sz = 2.0 * excited - e.atoms as f64;
                h[(i, i)] += C64::new(-e.detuning / 2.0 * sz, 0.0);
            }
            h
        }
        EmitterModel::KerrMode(k) => {
            let a = s.matrix();
            let ad = a.adjoint();
            let n = &ad * a;
            let nn = &ad * &ad * a * a;
            n * C64::new(-k.detuning, 0.0) + nn * C64::new(k.kerr, 0.0) + (a + &ad) * C64::new(k.drive, 0.0)
        }
    };
    Operator::new(m)
}

/// Jump operators, each already scaled by `sqrt(rate)`.
pub fn jump_operators(model: &EmitterModel) -> Result<Vec<Operator>, ModelError> {
    let s = source_operator(model)?;
    let rate = C64::new(GAMMA.sqrt(), 0.0);
    Ok(match model {
        EmitterModel::TwoLevelEnsemble(e) if !e.collective_decay => (0..e.atoms)
            .map(|k| Operator::new(atom_lowering(e.atoms, k).matrix() * rate))
            .collect::<Result<_, _>>()?,
        _ => vec![Operator::new(s.matrix() * rate)?],
    })
}

/// Lindblad generator `L(rho) = -i[H, rho] + sum_j (J rho J^dag - {J^dag J, rho}/2)`.
#[derive(Clone, Debug)]
pub struct Liouvillian {
    dim: usize,
    hamiltonian: CMatrix,
    jumps: Vec<CMatrix>,
    /// `-iH - (1/2) sum J^dag J`
    drift: CMatrix,
}

impl Liouvillian {
    pub fn new(model: &EmitterModel) -> Result<Self, DynamicsError> {
        model.validate()?;
        let h = hamiltonian(model)?;
        let jumps = jump_operators(model)?;
        Liouvillian::from_parts(h.into_matrix(), jumps.into_iter().map(Operator::into_matrix).collect())
    }

    pub fn from_parts(hamiltonian: CMatrix, jumps: Vec<CMatrix>) -> Result<Self, DynamicsError> {
        let dim = hamiltonian.nrows();
        for j in &jumps {
            if j.nrows() != dim || j.ncols() != dim {
                return Err(ModelError::DimensionMismatch { left: dim, right: j.nrows() }.into());
            }
        }
        let mut drift = &hamiltonian * C64::new(0.0, -1.0);
        for j in &jumps {
            drift -= j.adjoint() * j * C64::new(0.5, 0.0);
        }
        Ok(Liouvillian { dim, hamiltonian, jumps, drift })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hamiltonian(&self) -> &CMatrix {
        &self.hamiltonian
    }

    pub fn jumps(&self) -> &[CMatrix] {
        &self.jumps
    }

    /// `L(x)` for any operator `x`.
    pub fn apply(&self, x: &CMatrix) -> CMatrix {
        let mut out = &self.drift * x + x * self.drift.adjoint();
        for j in &self.jumps {
            out += j * x * j.adjoint();
        }
        out
    }

    /// Dense superoperator acting on column-major `vec(x)`.
    pub fn superoperator(&self) -> Result<CMatrix, DynamicsError> {
        let d = self.dim;
        if d > SUPEROPERATOR_DIM_CAP {
            return Err(DynamicsError::SuperoperatorCap { dim: d });
        }
        let id = CMatrix::identity(d, d);
        // vec(A X B) = (B^T kron A) vec(X)
        let mut sup = id.kronecker(&self.drift) + self.drift.conjugate().kronecker(&id);
        for j in &self.jumps {
            sup += j.conjugate().kronecker(j);
        }
        Ok(sup)
    }

    /// Largest `|sum_i L[(i,i), c]|` over columns: zero for a
    /// trace-preserving generator.
    pub fn trace_preservation_defect(&self) -> Result<f64, DynamicsError> {
        let sup = self.superoperator()?;
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for c in 0..d * d {
            let s: C64 = (0..d).map(|i| sup[(i * d + i, c)]).sum();
            worst = worst.max(s.norm());
        }
        Ok(worst)
    }

    /// Eigenvalues of the superoperator from a complex Schur form, sorted by
    /// decreasing real part.
    pub fn spectrum(&self) -> Result<Vec<C64>, DynamicsError> {
        let sup = self.superoperator()?;
        let schur = Schur::try_new(sup, 1e-14, 100_000).ok_or(DynamicsError::Spectrum)?;
        let (_, t) = schur.unpack();
        let mut eig: Vec<C64> = (0..t.nrows()).map(|i| t[(i, i)]).collect();
        eig.sort_by(|a, b| b.re.total_cmp(&a.re));
        Ok(eig)
    }

    /// Generator restricted to operators on the span of the orthonormal
    /// columns of `basis`, which must be invariant under `H`, `J` and `J^dag`.
    pub fn restricted(&self, basis: &CMatrix) -> Result<Liouvillian, DynamicsError> {
        let vd = basis.adjoint();
        let h = &vd * &self.hamiltonian * basis;
        let jumps = self.jumps.iter().map(|j| &vd * j * basis).collect();
        Liouvillian::from_parts(h, jumps)
    }
}

fn vec_of(x: &CMatrix) -> nalgebra::DVector<C64> {
    nalgebra::DVector::from_column_slice(x.as_slice())
}

fn unvec(v: &nalgebra::DVector<C64>, d: usize) -> CMatrix {
    CMatrix::from_column_slice(d, d, v.as_slice())
}

/// Dimension of the null space of the generator, from the pivots of a
/// full-pivoting LU factorization of the superoperator.
pub fn nullity(l: &Liouvillian) -> Result<usize, DynamicsError> {
    let sup = l.superoperator()?;
    let lu = FullPivLU::new(sup);
    let u = lu.u();
    let pivots: Vec<f64> = (0..u.nrows()).map(|i| u[(i, i)].norm()).collect();
    let scale = pivots.iter().copied().fold(0.0, f64::max);
    Ok(pivots.iter().filter(|&&p| p <= NULLITY_REL_TOL * scale).count())
}

/// Steady state of `l` from its null space.
///
/// Fails with [`DynamicsError::Degenerate`] unless the null space is
/// one-dimensional. The state is the solution of `L rho = 0` with one
/// population equation replaced by `Tr rho = 1`, refined once, and then
/// checked against long-time propagation from basis state 0.
pub fn steady_state(l: &Liouvillian) -> Result<SteadyState, DynamicsError> {
    let k = nullity(l)?;
    if k != 1 {
        return Err(DynamicsError::Degenerate { nullity: k });
    }
    let rho = null_space_state(l)?;
    let residual = frobenius(&l.apply(&rho));
    if residual > STEADY_RESIDUAL_TOL {
        return Err(DynamicsError::Residual { residual });
    }
    let rho = DensityMatrix::new(rho)?;
    let (relaxed, t) = relax(l, &DensityMatrix::ground(l.dim()).matrix().clone())?;
    let deviation = max_abs(&(relaxed - rho.matrix()));
    if deviation > CROSS_CHECK_TOL {
        return Err(DynamicsError::CrossCheck { deviation });
    }
    Ok(SteadyState { rho, residual, propagation_deviation: deviation, propagation_time: t, reachable_dim: l.dim() })
}

fn null_space_state(l: &Liouvillian) -> Result<CMatrix, DynamicsError> {
    let d = l.dim();
    let mut a = l.superoperator()?;
    // rows (i,i) of L sum to zero, so row (0,0) is redundant
    for c in 0..d * d {
        a[(0, c)] = C64::new(0.0, 0.0);
    }
    for i in 0..d {
        a[(0, i * d + i)] = C64::new(1.0, 0.0);
    }
    let mut b = nalgebra::DVector::zeros(d * d);
    b[0] = C64::new(1.0, 0.0);
    let lu = a.clone().lu();
    let mut x = lu.solve(&b).ok_or(DynamicsError::Degenerate { nullity: 2 })?;
    let r = &b - &a * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    let rho = unvec(&x, d);
    let mut rho = (&rho + rho.adjoint()) * C64::new(0.5, 0.0);
    let tr = rho.trace();
    rho /= tr;
    Ok(rho)
}

/// Steady state plus diagnostics.
#[derive(Clone, Debug)]
pub struct SteadyState {
    pub rho: DensityMatrix,
    /// `||L rho||_F` on the full generator.
    pub residual: f64,
    /// Max-entry distance to the long-time propagated state.
    pub propagation_deviation: f64,
    /// Propagation time used for the cross-check.
    pub propagation_time: f64,
    /// Dimension of the subspace reachable from the ground state.
    pub reachable_dim: usize,
}

/// Orthonormal basis of the smallest subspace containing basis state 0 and
/// invariant under `H`, every `J` and every `J^dag`.
pub fn reachable_basis(l: &Liouvillian) -> CMatrix {
    let d = l.dim();
    let mut gens: Vec<CMatrix> = vec![l.hamiltonian.clone()];
    for j in &l.jumps {
        gens.push(j.clone());
        gens.push(j.adjoint());
    }
    let mut basis: Vec<nalgebra::DVector<C64>> = Vec::new();
    let mut e0 = nalgebra::DVector::zeros(d);
    e0[0] = C64::new(1.0, 0.0);
    basis.push(e0);
    let mut next = 0;
    while next < basis.len() && basis.len() < d {
        let v = basis[next].clone();
        next += 1;
        for g in &gens {
            let mut w = g * &v;
            for _ in 0..2 {
                for b in &basis {
                    let proj = b.dotc(&w);
                    w -= b * proj;
                }
            }
            let n = w.norm();
            if n > 1e-9 {
                basis.push(w / C64::new(n, 0.0));
                if basis.len() == d {
                    break;
                }
            }
        }
    }
    CMatrix::from_columns(&basis)
}

/// Steady state reached from the ground state.
///
/// When the dynamics leaves a proper subspace invariant (collective decay
/// of identical atoms conserves the permutation symmetry), the generator is
/// restricted to that subspace, whose steady state is unique; otherwise
/// this is [`steady_state`] of the full generator. Residual and
/// propagation cross-check are always evaluated on the full generator.
pub fn stationary_state(model: &EmitterModel) -> Result<SteadyState, DynamicsError> {
    let l = Liouvillian::new(model)?;
    let basis = reachable_basis(&l);
    if basis.ncols() == l.dim() {
        return steady_state(&l);
    }
    let reduced = l.restricted(&basis)?;
    let k = nullity(&reduced)?;
    if k != 1 {
        return Err(DynamicsError::Degenerate { nullity: k });
    }
    let small = null_space_state(&reduced)?;
    let rho = &basis * small * basis.adjoint();
    let rho = (&rho + rho.adjoint()) * C64::new(0.5, 0.0);
    let residual = frobenius(&l.apply(&rho));
    if residual > STEADY_RESIDUAL_TOL {
        return Err(DynamicsError::Residual { residual });
    }
    let rho = DensityMatrix::new(rho)?;
    let (relaxed, t) = relax(&l, &DensityMatrix::ground(l.dim()).matrix().clone())?;
    let deviation = max_abs(&(relaxed - rho.matrix()));
    if deviation > CROSS_CHECK_TOL {
        return Err(DynamicsError::CrossCheck { deviation });
    }
    Ok(SteadyState {
        rho,
        residual,
        propagation_deviation: deviation,
        propagation_time: t,
        reachable_dim: basis.ncols(),
    })
}

fn rk4_step(l: &Liouvillian, x: &CMatrix, h: f64) -> CMatrix {
    let half = C64::new(h / 2.0, 0.0);
    let full = C64::new(h, 0.0);
    let k1 = l.apply(x);
    let k2 = l.apply(&(x + &k1 * half));
    let k3 = l.apply(&(x + &k2 * half));
    let k4 = l.apply(&(x + &k3 * full));
    x + (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * C64::new(h / 6.0, 0.0)
}

/// Running diagnostics of a propagation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PropagationStats {
    pub steps: usize,
    pub rejected: usize,
    /// Largest `|Tr x(t) - Tr x(0)|` seen.
    pub max_trace_drift: f64,
    /// Largest growth of `max |x - x^dag|` over its initial value.
    pub max_hermiticity_drift: f64,
}

/// Adaptive RK4 integrator (step doubling, local error below
/// [`LOCAL_ERROR_TOL`] in Frobenius norm). Owns its step-size state.
#[derive(Clone, Debug)]
pub struct Propagator<'a> {
    l: &'a Liouvillian,
    step: f64,
    tol: f64,
    pub stats: PropagationStats,
}

impl<'a> Propagator<'a> {
    pub fn new(l: &'a Liouvillian) -> Self {
        let scale = frobenius(&l.drift) + l.jumps.iter().map(|j| frobenius(j).powi(2)).sum::<f64>();
        Propagator { l, step: 0.5 / scale.max(1.0), tol: LOCAL_ERROR_TOL, stats: PropagationStats::default() }
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    /// `exp(L t) x`.
    pub fn propagate(&mut self, x: &CMatrix, t: f64) -> Result<CMatrix, DynamicsError> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(DynamicsError::UnsortedTimes);
        }
        let tr0 = x.trace();
        let herm0 = hermiticity_defect(x);
        let mut x = x.clone();
        let mut done = 0.0;
        while done < t {
            if self.stats.steps + self.stats.rejected > MAX_STEPS {
                return Err(DynamicsError::Integrator("step budget exhausted".into()));
            }
            let h = self.step.min(t - done);
            let coarse = rk4_step(self.l, &x, h);
            let mid = rk4_step(self.l, &x, h / 2.0);
            let fine = rk4_step(self.l, &mid, h / 2.0);
            let err = frobenius(&(&fine - &coarse)) / 15.0;
            if !err.is_finite() {
                return Err(DynamicsError::Integrator("non-finite state".into()));
            }
            if err <= self.tol {
                x = fine;
                done += h;
                self.stats.steps += 1;
                self.stats.max_trace_drift = self.stats.max_trace_drift.max((x.trace() - tr0).norm());
                self.stats.max_hermiticity_drift =
                    self.stats.max_hermiticity_drift.max(hermiticity_defect(&x) - herm0);
                let grow = if err == 0.0 { 2.0 } else { (0.9 * (self.tol / err).powf(0.2)).clamp(0.2, 2.0) };
                // a clamped final step says nothing about the natural size
                if h == self.step || grow < 1.0 {
                    self.step = h * grow;
                }
            } else {
                self.stats.rejected += 1;
                self.step = h * (0.9 * (self.tol / err).powf(0.2)).clamp(0.1, 0.9);
                if self.step < 1e-14 {
                    return Err(DynamicsError::Integrator("step size underflow".into()));
                }
            }
        }
        Ok(x)
    }
}

/// Long-time RK4 propagation of `x0` until `||L x||_F` drops below 1e-10.
///
/// For small systems the RK4 one-step map with a fixed step inside the
/// stability region is formed as a superoperator and iterated `2^k` times by
/// repeated squaring; its fixed points are exactly the null space of `L`.
/// Larger systems are stepped with the adaptive integrator.
pub fn relax(l: &Liouvillian, x0: &CMatrix) -> Result<(CMatrix, f64), DynamicsError> {
    let d = l.dim();
    if d * d > 32 * 32 || d > SUPEROPERATOR_DIM_CAP {
        let mut prop = Propagator::new(l);
        let mut x = x0.clone();
        let mut t = 0.0;
        while frobenius(&l.apply(&x)) > RELAX_RESIDUAL_TOL {
            if t > RELAX_T_MAX {
                return Err(DynamicsError::NotConverged { t });
            }
            x = prop.propagate(&x, 1.0)?;
            t += 1.0;
        }
        return Ok((x, t));
    }
    let h: f64 = 0.05;
    let sup = l.superoperator()?;
    let n = d * d;
    // the infinity norm bounds the spectral radius, so |h lambda| <= 2 keeps
    // every mode inside the RK4 stability region and squaring cannot blow up
    let norm_inf = (0..n).map(|r| sup.row(r).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max);
    let h = h.min(2.0 / norm_inf.max(1e-300));
    let hl = &sup * C64::new(h, 0.0);
    // P = I + hL + (hL)^2/2 + (hL)^3/6 + (hL)^4/24
    let mut step_map = CMatrix::identity(n, n);
    let mut term = CMatrix::identity(n, n);
    for k in 1..=4 {
        term = &term * &hl / C64::new(k as f64, 0.0);
        step_map += &term;
    }
    let mut x = vec_of(x0);
    let mut t = 0.0;
    let mut power = step_map;
    let mut span = h;
    loop {
        x = &power * &x;
        t += span;
        let xm = unvec(&x, d);
        if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(DynamicsError::Integrator("RK4 map unstable".into()));
        }
        if frobenius(&l.apply(&xm)) <= RELAX_RESIDUAL_TOL {
            return Ok((xm, t));
        }
        if t > RELAX_T_MAX {
            return Err(DynamicsError::NotConverged { t });
        }
        power = &power * &power;
        span *= 2.0;
    }
}

/// Sampled correlation function on a strictly increasing lag grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSeries {
    pub tau: Vec<f64>,
    pub values: Vec<C64>,
}

impl CorrelationSeries {
    pub fn new(tau: Vec<f64>, values: Vec<C64>) -> Result<Self, DynamicsError> {
        if tau.len() != values.len() {
            return Err(DynamicsError::LengthMismatch { what: "series values", expected: tau.len(), got: values.len() });
        }
        if tau.windows(2).any(|w| !(w[1] > w[0])) || tau.iter().any(|t| !(*t >= 0.0)) {
            return Err(DynamicsError::UnsortedTimes);
        }
        if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(DynamicsError::Integrator("non-finite correlation value".into()));
        }
        Ok(CorrelationSeries { tau, values })
    }
}

/// Time- and normal-ordered multi-time moment by iterated regression.
///
/// With `times = [t_0 <= t_1 <= ... <= t_k]` this evaluates
/// `< L_0(t_0) L_1(t_1) ... L_k(t_k) R_k(t_k) ... R_1(t_1) R_0(t_0) >` in the
/// stationary state: starting from `rho` propagated to `t_0`, each time
/// point sandwiches the deformed state as `R_i X L_i` and the state is
/// propagated to the next time. All-equal times reduce to a single-time
/// expectation.
pub fn multi_time_moment(
    l: &Liouvillian,
    rho: &DensityMatrix,
    left_ops: &[Operator],
    right_ops: &[Operator],
    times: &[f64],
) -> Result<C64, DynamicsError> {
    if left_ops.len() != times.len() {
        return Err(DynamicsError::LengthMismatch { what: "left operators", expected: times.len(), got: left_ops.len() });
    }
    if right_ops.len() != times.len() {
        return Err(DynamicsError::LengthMismatch {
            what: "right operators",
            expected: times.len(),
            got: right_ops.len(),
        });
    }
    if times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(DynamicsError::UnsortedTimes);
    }
    for op in left_ops.iter().chain(right_ops) {
        if op.dim() != l.dim() || rho.dim() != l.dim() {
            return Err(ModelError::DimensionMismatch { left: l.dim(), right: op.dim() }.into());
        }
    }
    let mut prop = Propagator::new(l);
    let mut x = rho.matrix().clone();
    let mut now = 0.0;
    for ((left, right), &t) in left_ops.iter().zip(right_ops).zip(times) {
        if t > now {
            x = prop.propagate(&x, t - now)?;
            now = t;
        }
        x = right.matrix() * x * left.matrix();
    }
    Ok(x.trace())
}

/// `G2(tau) = <S^dag(0) S^dag(tau) S(tau) S(0)>` on a lag grid, propagating
/// the deformed state `S rho S^dag` sequentially through the grid.
pub fn g2_series(
    l: &Liouvillian,
    rho: &DensityMatrix,
    source: &Operator,
    taus: &[f64],
) -> Result<(CorrelationSeries, PropagationStats), DynamicsError> {
    if taus.windows(2).any(|w| !(w[1] > w[0])) || taus.iter().any(|t| !(*t >= 0.0)) {
        return Err(DynamicsError::UnsortedTimes);
    }
    let s = source.matrix();
    let n_op = s.adjoint() * s;
    let mut prop = Propagator::new(l);
    let mut x = s * rho.matrix() * s.adjoint();
    let mut now = 0.0;
    let mut values = Vec::with_capacity(taus.len());
    for &tau in taus {
        if tau > now {
            x = prop.propagate(&x, tau - now)?;
            now = tau;
        }
        values.push(trace_of_product(&n_op, &x));
    }
    Ok((CorrelationSeries::new(taus.to_vec(), values)?, prop.stats))
}
