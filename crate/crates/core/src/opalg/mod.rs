//! Symbolic polynomials in the positive- and negative-frequency parts of the
//! directional field operators `E_j^(+)`, `E_j^(-)`.
//!
//! Ordering here is a prescription: symbols are permuted into normal and time
//! order without generating commutator terms, exactly as the `:...:` and
//! time-and-normal ordering brackets act before an expectation value is taken.

mod matrices;
mod parse;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::C64;

pub use matrices::{
    build_f_pt_matrix, build_f_pt_matrix_timed, build_h_matrix, multi_indices_up_to, order_k_pairs, pairs_to_multi,
    HIndex, MultiIndex, PolyMatrix,
};
pub use parse::parse_expr;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlgebraError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("mode index {mode} outside 1..={modes}")]
    UnknownMode { mode: usize, modes: usize },
    #[error("negative power at byte {pos}")]
    NegativePower { pos: usize },
    #[error("duplicate index {0}")]
    DuplicateIndex(String),
    #[error("index set is empty")]
    EmptyIndex,
    #[error("index set must contain the identity term")]
    MissingIdentity,
    #[error("multi-index {index} has {got} entries, expected {modes}")]
    MultiIndexArity { index: String, got: usize, modes: usize },
    #[error("invalid bipartition: {0}")]
    InvalidBipartition(String),
    #[error("mode function of mode {0} is zero or not finite")]
    BadModeFunction(usize),
    #[error("geometry needs at least one mode")]
    EmptyGeometry,
}

/// Positive- or negative-frequency part of a field operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Freq {
    /// `E^(-)`, creation-like.
    Neg,
    /// `E^(+)`, annihilation-like.
    Pos,
}

impl Freq {
    pub fn flipped(self) -> Freq {
        match self {
            Freq::Neg => Freq::Pos,
            Freq::Pos => Freq::Neg,
        }
    }

    fn symbol(self) -> char {
        match self {
            Freq::Neg => '-',
            Freq::Pos => '+',
        }
    }
}

/// Symbolic time argument. Labels are totally ordered by their integer; label
/// `t0` is the default for single-time problems.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimeLabel(pub u32);

impl fmt::Display for TimeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

/// `(E_mode^(freq)(time))^power`, optionally carried under complex
/// conjugation after a transposition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FieldFactor {
    pub mode: usize,
    pub freq: Freq,
    pub power: u32,
    pub time: TimeLabel,
    pub conjugated: bool,
}

impl FieldFactor {
    pub fn new(mode: usize, freq: Freq, power: u32) -> Self {
        FieldFactor { mode, freq, power, time: TimeLabel::default(), conjugated: false }
    }

    pub fn at(mut self, time: TimeLabel) -> Self {
        self.time = time;
        self
    }

    /// Sort key of the canonical normal-plus-time order: all `-` factors
    /// first by increasing time, then all `+` factors by decreasing time;
    /// ties broken by mode index ascending.
    fn order_key(&self) -> (u8, i64, usize, bool) {
        match self.freq {
            Freq::Neg => (0, i64::from(self.time.0), self.mode, self.conjugated),
            Freq::Pos => (1, -i64::from(self.time.0), self.mode, self.conjugated),
        }
    }

    fn same_symbol(&self, other: &FieldFactor) -> bool {
        self.mode == other.mode
            && self.freq == other.freq
            && self.time == other.time
            && self.conjugated == other.conjugated
    }
}

impl fmt::Display for FieldFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut body = format!("E{}{}", self.mode, self.freq.symbol());
        if self.power != 1 {
            body.push_str(&format!("^{}", self.power));
        }
        if self.time != TimeLabel::default() {
            body.push_str(&format!("@{}", self.time));
        }
        if self.conjugated {
            write!(f, "conj({body})")
        } else {
            f.write_str(&body)
        }
    }
}

/// Coefficient times an ordered product of field factors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coeff: C64,
    pub factors: Vec<FieldFactor>,
}

impl Monomial {
    pub fn new(coeff: C64, factors: Vec<FieldFactor>) -> Self {
        Monomial { coeff, factors }
    }

    pub fn constant(coeff: C64) -> Self {
        Monomial { coeff, factors: Vec::new() }
    }

    /// True when any factor is carried under complex conjugation.
    pub fn conjugated(&self) -> bool {
        self.factors.iter().any(|f| f.conjugated)
    }

    pub fn adjoint(&self) -> Monomial {
        let factors = self
            .factors
            .iter()
            .rev()
            .map(|f| FieldFactor { freq: f.freq.flipped(), ..*f })
            .collect();
        Monomial { coeff: self.coeff.conj(), factors }
    }

    /// Whether the factor list already sits in canonical order with merged
    /// powers.
    pub fn is_normal_time_ordered(&self) -> bool {
        self.factors.iter().all(|f| f.power > 0)
            && self.factors.windows(2).all(|w| w[0].order_key() < w[1].order_key())
    }

    fn normalized(&self) -> Monomial {
        let mut factors: Vec<FieldFactor> = self.factors.iter().copied().filter(|f| f.power > 0).collect();
        factors.sort_by_key(FieldFactor::order_key);
        let mut merged: Vec<FieldFactor> = Vec::with_capacity(factors.len());
        for f in factors {
            match merged.last_mut() {
                Some(last) if last.same_symbol(&f) => last.power += f.power,
                _ => merged.push(f),
            }
        }
        Monomial { coeff: self.coeff, factors: merged }
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let coeff = format_complex(self.coeff);
        if self.factors.is_empty() {
            return f.write_str(&coeff);
        }
        if self.coeff != C64::new(1.0, 0.0) {
            write!(f, "{coeff} * ")?;
        }
        let parts: Vec<String> = self.factors.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join(" "))
    }
}

pub(crate) fn format_complex(z: C64) -> String {
    if z.im == 0.0 {
        format!("{}", z.re)
    } else if z.re == 0.0 {
        format!("{}i", z.im)
    } else if z.im < 0.0 {
        format!("({}-{}i)", z.re, -z.im)
    } else {
        format!("({}+{}i)", z.re, z.im)
    }
}

/// Sum of monomials.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OperatorPoly {
    monomials: Vec<Monomial>,
}

impl OperatorPoly {
    pub fn zero() -> Self {
        OperatorPoly::default()
    }

    pub fn one() -> Self {
        OperatorPoly::constant(C64::new(1.0, 0.0))
    }

    pub fn constant(c: C64) -> Self {
        OperatorPoly { monomials: vec![Monomial::constant(c)] }
    }

    pub fn from_monomials(monomials: Vec<Monomial>) -> Self {
        OperatorPoly { monomials }
    }

    /// Single product `prod_i E_{mode_i}^{freq_i}(t0)^{power_i}` with unit
    /// coefficient.
    pub fn product(factors: &[(usize, Freq, u32)]) -> Self {
        let factors = factors.iter().map(|&(m, s, p)| FieldFactor::new(m, s, p)).collect();
        OperatorPoly { monomials: vec![Monomial::new(C64::new(1.0, 0.0), factors)] }
    }

    pub fn monomials(&self) -> &[Monomial] {
        &self.monomials
    }

    pub fn is_zero(&self) -> bool {
        self.monomials.iter().all(|m| m.coeff == C64::new(0.0, 0.0))
    }

    pub fn scaled(&self, c: C64) -> Self {
        let monomials = self.monomials.iter().map(|m| Monomial { coeff: m.coeff * c, ..m.clone() }).collect();
        OperatorPoly { monomials }
    }

    pub fn add(&self, other: &OperatorPoly) -> Self {
        let mut monomials = self.monomials.clone();
        monomials.extend(other.monomials.iter().cloned());
        OperatorPoly { monomials }
    }

    /// Product with factor lists concatenated as written (no reordering).
    pub fn mul(&self, other: &OperatorPoly) -> Self {
        let mut monomials = Vec::with_capacity(self.monomials.len() * other.monomials.len());
        for a in &self.monomials {
            for b in &other.monomials {
                let mut factors = a.factors.clone();
                factors.extend(b.factors.iter().copied());
                monomials.push(Monomial::new(a.coeff * b.coeff, factors));
            }
        }
        OperatorPoly { monomials }
    }

    pub fn adjoint(&self) -> Self {
        OperatorPoly { monomials: self.monomials.iter().map(Monomial::adjoint).collect() }
    }

    /// Every monomial in canonical order with merged powers.
    pub fn is_normal_time_ordered(&self) -> bool {
        self.monomials.iter().all(Monomial::is_normal_time_ordered)
    }

    /// Highest mode index referenced, 0 for constants.
    pub fn max_mode(&self) -> usize {
        self.monomials.iter().flat_map(|m| m.factors.iter().map(|f| f.mode)).max().unwrap_or(0)
    }
}

impl fmt::Display for OperatorPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.monomials.is_empty() {
            return f.write_str("0");
        }
        let parts: Vec<String> = self.monomials.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join(" + "))
    }
}

/// Applies the normal-and-time ordering prescription.
///
/// In every monomial all `-` factors precede all `+` factors, `-` factors
/// run by increasing time and `+` factors by decreasing time. Equal symbols
/// are merged, zero powers removed, and monomials with identical factor
/// lists combined. The result is sorted canonically, so the map is
/// idempotent.
pub fn normal_time_order(p: &OperatorPoly) -> OperatorPoly {
    let mut normalized: Vec<Monomial> = p.monomials.iter().map(Monomial::normalized).collect();
    normalized.sort_by(|a, b| {
        let ka: Vec<_> = a.factors.iter().map(|f| (f.order_key(), f.power)).collect();
        let kb: Vec<_> = b.factors.iter().map(|f| (f.order_key(), f.power)).collect();
        ka.cmp(&kb)
    });
    let mut merged: Vec<Monomial> = Vec::with_capacity(normalized.len());
    for m in normalized {
        match merged.last_mut() {
            Some(last) if last.factors == m.factors => last.coeff += m.coeff,
            _ => merged.push(m),
        }
    }
    merged.retain(|m| m.coeff != C64::new(0.0, 0.0));
    OperatorPoly { monomials: merged }
}

/// Proper bipartition of `modes` directional modes; `transposed` is the side
/// on which the partial transposition acts.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Bipartition {
    modes: usize,
    transposed: BTreeSet<usize>,
}

impl Bipartition {
    pub fn new(modes: usize, transposed: impl IntoIterator<Item = usize>) -> Result<Self, AlgebraError> {
        let transposed: BTreeSet<usize> = transposed.into_iter().collect();
        if let Some(&bad) = transposed.iter().find(|&&m| m == 0 || m > modes) {
            return Err(AlgebraError::UnknownMode { mode: bad, modes });
        }
        if transposed.is_empty() {
            return Err(AlgebraError::InvalidBipartition("no transposed modes".into()));
        }
        if transposed.len() >= modes {
            return Err(AlgebraError::InvalidBipartition(
                "transposing every mode is a full transposition, not a partial one".into(),
            ));
        }
        Ok(Bipartition { modes, transposed })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn transposed(&self) -> &BTreeSet<usize> {
        &self.transposed
    }

    pub fn is_transposed(&self, mode: usize) -> bool {
        self.transposed.contains(&mode)
    }

    /// The `2^(M-1) - 1` inequivalent bipartitions, represented with mode 1
    /// on the untransposed side.
    pub fn all(modes: usize) -> Vec<Bipartition> {
        if modes < 2 {
            return Vec::new();
        }
        let rest = modes - 1;
        (1u64..(1u64 << rest))
            .map(|mask| {
                let set = (0..rest).filter(|b| mask & (1 << b) != 0).map(|b| b + 2);
                Bipartition::new(modes, set).expect("enumerated bipartition is proper")
            })
            .collect()
    }
}

impl fmt::Display for Bipartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rest: Vec<String> =
            (1..=self.modes).filter(|m| !self.transposed.contains(m)).map(|m| m.to_string()).collect();
        let tr: Vec<String> = self.transposed.iter().map(|m| m.to_string()).collect();
        write!(f, "{{{}}}|{{{}}}", rest.join(","), tr.join(","))
    }
}

/// Partial transposition on the modes of `bipartition.transposed()`.
///
/// Each factor of a transposed mode has its frequency part flipped and its
/// conjugation flag toggled; the monomial is then re-sorted, which reverses
/// the transposed block and keeps it normal-time ordered. The transposition
/// phase factor is dropped.
pub fn partial_transpose(p: &OperatorPoly, bipartition: &Bipartition) -> Result<OperatorPoly, AlgebraError> {
    if p.max_mode() > bipartition.modes() {
        return Err(AlgebraError::UnknownMode { mode: p.max_mode(), modes: bipartition.modes() });
    }
    let monomials = p
        .monomials
        .iter()
        .map(|m| {
            let factors = m
                .factors
                .iter()
                .map(|f| {
                    if bipartition.is_transposed(f.mode) {
                        FieldFactor { freq: f.freq.flipped(), conjugated: !f.conjugated, ..*f }
                    } else {
                        *f
                    }
                })
                .collect();
            Monomial::new(m.coeff, factors)
        })
        .collect();
    Ok(normal_time_order(&OperatorPoly { monomials }))
}

/// Complex mode functions `chi_j` of the observed directions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeGeometry {
    chi: Vec<C64>,
}

impl ModeGeometry {
    pub fn new(chi: Vec<C64>) -> Result<Self, AlgebraError> {
        if chi.is_empty() {
            return Err(AlgebraError::EmptyGeometry);
        }
        if let Some(j) = chi.iter().position(|z| !z.re.is_finite() || !z.im.is_finite() || z.norm() == 0.0) {
            return Err(AlgebraError::BadModeFunction(j + 1));
        }
        Ok(ModeGeometry { chi })
    }

    /// All mode functions equal to one.
    pub fn uniform(modes: usize) -> Result<Self, AlgebraError> {
        ModeGeometry::new(vec![C64::new(1.0, 0.0); modes])
    }

    pub fn modes(&self) -> usize {
        self.chi.len()
    }

    pub fn chi(&self) -> &[C64] {
        &self.chi
    }

    /// `chi` of 1-based mode `j`.
    pub fn get(&self, mode: usize) -> C64 {
        self.chi[mode - 1]
    }
}

/// Time-ordered source moment `<S^dag(t_a)^{a_1} ... S(t_b)^{b_1}>`.
///
/// `neg` lists dagger powers by strictly increasing time label, `pos` lists
/// lowering powers by strictly decreasing time label.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SourceMomentKey {
    pub neg: Vec<(TimeLabel, u32)>,
    pub pos: Vec<(TimeLabel, u32)>,
}

impl SourceMomentKey {
    /// Single-time `<S^dag^a S^b>` at the default label.
    pub fn single(a: u32, b: u32) -> Self {
        let t = TimeLabel::default();
        SourceMomentKey {
            neg: if a > 0 { vec![(t, a)] } else { Vec::new() },
            pos: if b > 0 { vec![(t, b)] } else { Vec::new() },
        }
    }

    pub fn dagger_power(&self) -> u32 {
        self.neg.iter().map(|&(_, p)| p).sum()
    }

    pub fn lowering_power(&self) -> u32 {
        self.pos.iter().map(|&(_, p)| p).sum()
    }

    /// True when at most one time label occurs.
    pub fn is_single_time(&self) -> bool {
        let labels: BTreeSet<TimeLabel> = self.neg.iter().chain(&self.pos).map(|&(t, _)| t).collect();
        labels.len() <= 1
    }

    /// `(a, b)` for single-time keys.
    pub fn as_single(&self) -> Option<(u32, u32)> {
        self.is_single_time().then(|| (self.dagger_power(), self.lowering_power()))
    }

    /// Key of the complex-conjugate moment.
    pub fn adjoint(&self) -> Self {
        SourceMomentKey {
            neg: self.pos.iter().rev().copied().collect(),
            pos: self.neg.iter().rev().copied().collect(),
        }
    }

    /// All time labels, ascending.
    pub fn labels(&self) -> Vec<TimeLabel> {
        let labels: BTreeSet<TimeLabel> = self.neg.iter().chain(&self.pos).map(|&(t, _)| t).collect();
        labels.into_iter().collect()
    }

    /// `(dagger power, lowering power)` at a given label.
    pub fn powers_at(&self, t: TimeLabel) -> (u32, u32) {
        let a = self.neg.iter().filter(|&&(l, _)| l == t).map(|&(_, p)| p).sum();
        let b = self.pos.iter().filter(|&&(l, _)| l == t).map(|&(_, p)| p).sum();
        (a, b)
    }
}

impl fmt::Display for SourceMomentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some((a, b)) = self.as_single() {
            return write!(f, "({a},{b})");
        }
        let neg: Vec<String> = self.neg.iter().map(|(t, p)| format!("Sd^{p}@{t}")).collect();
        let pos: Vec<String> = self.pos.iter().map(|(t, p)| format!("S^{p}@{t}")).collect();
        write!(f, "<{}>", neg.into_iter().chain(pos).collect::<Vec<_>>().join(" "))
    }
}

/// One reduced term: mode-function prefactor times a source moment.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedTerm {
    pub prefactor: C64,
    pub key: SourceMomentKey,
}

/// Substitutes `E_j^(+) = chi_j S`, `E_j^(-) = chi_j^* S^dag` in every
/// monomial.
///
/// The prefactor collects `chi_j^power`, conjugated for `-` factors and
/// conjugated once more for factors carried under conjugation. The key is
/// read from the written factors, so a transposed block contributes its
/// powers with dagger and lowering roles exchanged relative to the
/// untransposed operator.
pub fn reduce_to_source(p: &OperatorPoly, geometry: &ModeGeometry) -> Result<Vec<ReducedTerm>, AlgebraError> {
    p.monomials
        .iter()
        .map(|m| {
            let mut prefactor = m.coeff;
            let mut neg: Vec<(TimeLabel, u32)> = Vec::new();
            let mut pos: Vec<(TimeLabel, u32)> = Vec::new();
            for f in &m.factors {
                if f.mode == 0 || f.mode > geometry.modes() {
                    return Err(AlgebraError::UnknownMode { mode: f.mode, modes: geometry.modes() });
                }
                if f.power == 0 {
                    continue;
                }
                let mut chi = geometry.get(f.mode);
                if f.freq == Freq::Neg {
                    chi = chi.conj();
                }
                if f.conjugated {
                    chi = chi.conj();
                }
                prefactor *= chi.powu(f.power);
                let slot = match f.freq {
                    Freq::Neg => &mut neg,
                    Freq::Pos => &mut pos,
                };
                match slot.iter_mut().find(|(t, _)| *t == f.time) {
                    Some(entry) => entry.1 += f.power,
                    None => slot.push((f.time, f.power)),
                }
            }
            neg.sort_by_key(|&(t, _)| t);
            pos.sort_by_key(|&(t, _)| std::cmp::Reverse(t));
            Ok(ReducedTerm { prefactor, key: SourceMomentKey { neg, pos } })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn normal_order_moves_creation_left() {
        let p = parse_expr("E1+ E1-", 1).unwrap();
        let q = normal_time_order(&p);
        assert_eq!(q, OperatorPoly::product(&[(1, Freq::Neg, 1), (1, Freq::Pos, 1)]));
    }

    #[test]
    fn time_order_sorts_creation_increasing() {
        let p = parse_expr("E1-@t2 E1-@t1", 1).unwrap();
        let q = normal_time_order(&p);
        let times: Vec<u32> = q.monomials()[0].factors.iter().map(|f| f.time.0).collect();
        assert_eq!(times, vec![1, 2]);
        let p = parse_expr("E1+@t1 E1+@t2", 1).unwrap();
        let times: Vec<u32> = normal_time_order(&p).monomials()[0].factors.iter().map(|f| f.time.0).collect();
        assert_eq!(times, vec![2, 1]);
    }

    #[test]
    fn ordered_input_unchanged() {
        let p = parse_expr("E1-^2 E2- E2+ E1+", 2).unwrap();
        let q = normal_time_order(&p);
        assert_eq!(normal_time_order(&q), q);
        assert!(q.is_normal_time_ordered());
    }

    #[test]
    fn merges_powers_and_coefficients() {
        let p = parse_expr("E1+ E1- E1+ + 2*E1- E1+^2", 1).unwrap();
        let q = normal_time_order(&p);
        assert_eq!(q.monomials().len(), 1);
        assert_eq!(q.monomials()[0].coeff, c(3.0, 0.0));
        assert_eq!(q.monomials()[0].factors[1].power, 2);
    }

    #[test]
    fn cancelling_terms_vanish() {
        let p = parse_expr("E1+ E1- - E1- E1+", 1).unwrap();
        assert!(normal_time_order(&p).monomials().is_empty());
    }

    #[test]
    fn transposing_normal_ordered_block() {
        // [E2-^n E2+^k]^T -> conj block E2-^k E2+^n
        let p = normal_time_order(&parse_expr("E2-^3 E2+^1", 2).unwrap());
        let b = Bipartition::new(2, [2]).unwrap();
        let t = partial_transpose(&p, &b).unwrap();
        let m = &t.monomials()[0];
        assert_eq!(m.factors.len(), 2);
        assert_eq!((m.factors[0].freq, m.factors[0].power), (Freq::Neg, 1));
        assert_eq!((m.factors[1].freq, m.factors[1].power), (Freq::Pos, 3));
        assert!(m.factors.iter().all(|f| f.conjugated));
        assert!(t.is_normal_time_ordered());
    }

    #[test]
    fn transpose_leaves_other_modes() {
        let p = normal_time_order(&parse_expr("E1-^2 E1+", 2).unwrap());
        let b = Bipartition::new(2, [2]).unwrap();
        assert_eq!(partial_transpose(&p, &b).unwrap(), p);
    }

    #[test]
    fn transpose_is_involution() {
        let p = normal_time_order(&parse_expr("(1+2i)*E1- E2-^2 E2+ E1+^3 + E2+@t1 E1+", 2).unwrap());
        let b = Bipartition::new(2, [2]).unwrap();
        let once = partial_transpose(&p, &b).unwrap();
        assert_ne!(once, p);
        assert_eq!(partial_transpose(&once, &b).unwrap(), p);
    }

    #[test]
    fn bipartition_rejects_empty_and_full() {
        assert!(Bipartition::new(2, []).is_err());
        assert!(Bipartition::new(2, [1, 2]).is_err());
        assert!(Bipartition::new(2, [3]).is_err());
        assert_eq!(Bipartition::all(3).len(), 3);
        assert_eq!(Bipartition::all(4).len(), 7);
        assert_eq!(Bipartition::all(2), vec![Bipartition::new(2, [2]).unwrap()]);
    }

    #[test]
    fn reduce_single_mode_intensity() {
        let chi = c(0.3, -1.2);
        let g = ModeGeometry::new(vec![chi]).unwrap();
        let terms = reduce_to_source(&parse_expr("E1- E1+", 1).unwrap(), &g).unwrap();
        assert_eq!(terms.len(), 1);
        assert!((terms[0].prefactor - c(chi.norm_sqr(), 0.0)).norm() < 1e-15);
        assert_eq!(terms[0].key, SourceMomentKey::single(1, 1));
    }

    #[test]
    fn reduce_two_mode_monomial() {
        let (c1, c2) = (c(0.5, 0.7), c(-1.1, 0.2));
        let g = ModeGeometry::new(vec![c1, c2]).unwrap();
        // E1-^l' E2-^n' E2+^n E1+^l with (l', n', n, l) = (2, 1, 3, 1)
        let p = parse_expr("E1-^2 E2- E2+^3 E1+", 2).unwrap();
        let terms = reduce_to_source(&p, &g).unwrap();
        let expected = c1.conj().powu(2) * c2.conj() * c2.powu(3) * c1;
        assert!((terms[0].prefactor - expected).norm() < 1e-14);
        assert_eq!(terms[0].key, SourceMomentKey::single(3, 4));
    }

    #[test]
    fn reduce_constant() {
        let g = ModeGeometry::uniform(1).unwrap();
        let terms = reduce_to_source(&OperatorPoly::constant(c(2.0, -1.0)), &g).unwrap();
        assert_eq!(terms[0].prefactor, c(2.0, -1.0));
        assert_eq!(terms[0].key, SourceMomentKey::single(0, 0));
    }

    #[test]
    fn reduce_rejects_mode_outside_geometry() {
        let g = ModeGeometry::uniform(1).unwrap();
        let p = parse_expr("E2+", 2).unwrap();
        assert!(matches!(reduce_to_source(&p, &g), Err(AlgebraError::UnknownMode { mode: 2, modes: 1 })));
    }

    #[test]
    fn reduce_conjugated_block() {
        let chi2 = c(0.4, 0.9);
        let g = ModeGeometry::new(vec![c(1.0, 0.0), chi2]).unwrap();
        let p = normal_time_order(&parse_expr("E2-^2 E2+", 2).unwrap());
        let t = partial_transpose(&p, &Bipartition::new(2, [2]).unwrap()).unwrap();
        let terms = reduce_to_source(&t, &g).unwrap();
        // transposed block reads E2- E2+^2 under conjugation
        assert_eq!(terms[0].key, SourceMomentKey::single(1, 2));
        let expected = chi2 * chi2.conj().powu(2);
        assert!((terms[0].prefactor - expected).norm() < 1e-14);
    }

    #[test]
    fn multi_time_key_ordering() {
        let g = ModeGeometry::uniform(2).unwrap();
        let p = normal_time_order(&parse_expr("E1-@t0 E2-@t1 E2+@t1 E1+@t0", 2).unwrap());
        let terms = reduce_to_source(&p, &g).unwrap();
        let key = &terms[0].key;
        assert_eq!(key.neg, vec![(TimeLabel(0), 1), (TimeLabel(1), 1)]);
        assert_eq!(key.pos, vec![(TimeLabel(1), 1), (TimeLabel(0), 1)]);
        assert!(!key.is_single_time());
        assert_eq!(key.adjoint(), *key);
    }

    #[test]
    fn geometry_rejects_zero() {
        assert_eq!(ModeGeometry::new(vec![c(1.0, 0.0), c(0.0, 0.0)]), Err(AlgebraError::BadModeFunction(2)));
        assert_eq!(ModeGeometry::new(vec![]), Err(AlgebraError::EmptyGeometry));
    }

    #[test]
    fn display_round_trips_through_parser() {
        let p = normal_time_order(&parse_expr("(2-0.5i)*E2-^2@t1 E1+ + 3*E1- + 1", 2).unwrap());
        let again = normal_time_order(&parse_expr(&p.to_string(), 2).unwrap());
        assert_eq!(again, p);
    }
}
