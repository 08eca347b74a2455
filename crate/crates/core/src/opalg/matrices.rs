//! Symbolic moment matrices of `<:h^dag h:>` and `<(f^dag f)^PT>`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{normal_time_order, partial_transpose, AlgebraError, Bipartition, FieldFactor, Freq, Monomial, OperatorPoly, TimeLabel};
use crate::C64;

/// `(n, l)`: the term `E^(-)n E^(+)l` of a single-direction operator `h`.
pub type HIndex = (u32, u32);

/// Exponents `l_j` of the product `prod_j E_j^(+) l_j` in a multimode `f`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zero(modes: usize) -> Self {
        MultiIndex(vec![0; modes])
    }

    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn modes(&self) -> usize {
        self.0.len()
    }

    /// Exponent of 1-based mode `j`.
    pub fn power(&self, mode: usize) -> u32 {
        self.0[mode - 1]
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(u32::to_string).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Square matrix of symbolic entries labelled by an index set.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyMatrix<I> {
    pub index: Vec<I>,
    entries: Vec<OperatorPoly>,
}

impl<I> PolyMatrix<I> {
    pub fn dim(&self) -> usize {
        self.index.len()
    }

    pub fn get(&self, row: usize, col: usize) -> &OperatorPoly {
        &self.entries[row * self.index.len() + col]
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, &OperatorPoly)> {
        let n = self.index.len();
        self.entries.iter().enumerate().map(move |(k, p)| (k / n, k % n, p))
    }
}

/// Full order-`k` index set `{(n, l): n + l <= k}`, by total order and
/// descending `n` within an order.
pub fn order_k_pairs(k: u32) -> Vec<HIndex> {
    (0..=k).flat_map(|total| (0..=total).rev().map(move |n| (n, total - n))).collect()
}

/// All multi-indices over `modes` modes with total order `<= k`, by total
/// order and then lexicographically descending.
pub fn multi_indices_up_to(modes: usize, k: u32) -> Vec<MultiIndex> {
    fn fill(prefix: &mut Vec<u32>, modes: usize, remaining: u32, out: &mut Vec<MultiIndex>) {
        if prefix.len() + 1 == modes {
            prefix.push(remaining);
            out.push(MultiIndex(prefix.clone()));
            prefix.pop();
            return;
        }
        for p in (0..=remaining).rev() {
            prefix.push(p);
            fill(prefix, modes, remaining - p, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if modes == 0 {
        return out;
    }
    for total in 0..=k {
        fill(&mut Vec::with_capacity(modes), modes, total, &mut out);
    }
    out
}

/// Bipartite `(n, l)` pairs of `f = sum c_{n,l} E_2^(+)n E_1^(+)l` as
/// multi-indices `(l, n)` over two modes.
pub fn pairs_to_multi(idx: &[HIndex]) -> Vec<MultiIndex> {
    idx.iter().map(|&(n, l)| MultiIndex(vec![l, n])).collect()
}

fn check_distinct<I: Ord + fmt::Debug>(idx: &[I]) -> Result<(), AlgebraError> {
    if idx.is_empty() {
        return Err(AlgebraError::EmptyIndex);
    }
    let mut seen = BTreeSet::new();
    for i in idx {
        if !seen.insert(i) {
            return Err(AlgebraError::DuplicateIndex(format!("{i:?}")));
        }
    }
    Ok(())
}

fn single_product(mode: usize, time: TimeLabel, neg: u32, pos: u32) -> OperatorPoly {
    let factors = [(Freq::Neg, neg), (Freq::Pos, pos)]
        .into_iter()
        .filter(|&(_, p)| p > 0)
        .map(|(s, p)| FieldFactor::new(mode, s, p).at(time))
        .collect();
    OperatorPoly::from_monomials(vec![Monomial::new(C64::new(1.0, 0.0), factors)])
}

/// Symbolic nonclassicality matrix of a single direction (mode 1).
///
/// Entry `[(n',l'), (n,l)]` is `:(E^(-)n' E^(+)l')^dag E^(-)n E^(+)l:`,
/// i.e. `E^(-)(l'+n) E^(+)(n'+l)`.
pub fn build_h_matrix(idx: &[HIndex]) -> Result<PolyMatrix<HIndex>, AlgebraError> {
    check_distinct(idx)?;
    if !idx.contains(&(0, 0)) {
        return Err(AlgebraError::MissingIdentity);
    }
    let t = TimeLabel::default();
    let mut entries = Vec::with_capacity(idx.len() * idx.len());
    for &(n_row, l_row) in idx {
        let row = single_product(1, t, n_row, l_row).adjoint();
        for &(n, l) in idx {
            entries.push(normal_time_order(&row.mul(&single_product(1, t, n, l))));
        }
    }
    Ok(PolyMatrix { index: idx.to_vec(), entries })
}

/// Symbolic PT matrix of `f = sum_l c_l prod_j E_j^(+)l_j` for the given
/// bipartition, all modes at the default time.
pub fn build_f_pt_matrix(idx: &[MultiIndex], bipartition: &Bipartition) -> Result<PolyMatrix<MultiIndex>, AlgebraError> {
    let times = vec![TimeLabel::default(); bipartition.modes()];
    build_f_pt_matrix_timed(idx, bipartition, &times)
}

/// As [`build_f_pt_matrix`], with mode `j` evaluated at `times[j-1]`.
///
/// Entry `[l', l]` is the partially transposed, normal-time-ordered
/// `(prod_j E_j^(+)l'_j)^dag prod_j E_j^(+)l_j`.
pub fn build_f_pt_matrix_timed(
    idx: &[MultiIndex],
    bipartition: &Bipartition,
    times: &[TimeLabel],
) -> Result<PolyMatrix<MultiIndex>, AlgebraError> {
    check_distinct(idx)?;
    let modes = bipartition.modes();
    if times.len() != modes {
        return Err(AlgebraError::InvalidBipartition(format!(
            "{} time labels for {modes} modes",
            times.len()
        )));
    }
    for l in idx {
        if l.modes() != modes {
            return Err(AlgebraError::MultiIndexArity { index: l.to_string(), got: l.modes(), modes });
        }
    }
    let product = |l: &MultiIndex| {
        let factors = (1..=modes)
            .filter(|&j| l.power(j) > 0)
            .map(|j| FieldFactor::new(j, Freq::Pos, l.power(j)).at(times[j - 1]))
            .collect();
        OperatorPoly::from_monomials(vec![Monomial::new(C64::new(1.0, 0.0), factors)])
    };
    let mut entries = Vec::with_capacity(idx.len() * idx.len());
    for row in idx {
        let left = product(row).adjoint();
        for col in idx {
            let ordered = normal_time_order(&left.mul(&product(col)));
            entries.push(partial_transpose(&ordered, bipartition)?);
        }
    }
    Ok(PolyMatrix { index: idx.to_vec(), entries })
}

#[cfg(test)]
mod tests {
    use super::super::{parse_expr, reduce_to_source, ModeGeometry, SourceMomentKey};
    use super::*;

    fn poly(s: &str, modes: usize) -> OperatorPoly {
        normal_time_order(&parse_expr(s, modes).unwrap())
    }

    #[test]
    fn h_matrix_sub_poisson() {
        let h = build_h_matrix(&[(0, 0), (1, 1)]).unwrap();
        assert_eq!(*h.get(0, 0), OperatorPoly::one());
        assert_eq!(*h.get(0, 1), poly("E1- E1+", 1));
        assert_eq!(*h.get(1, 0), poly("E1- E1+", 1));
        assert_eq!(*h.get(1, 1), poly("E1-^2 E1+^2", 1));
    }

    #[test]
    fn h_matrix_identity_only() {
        let h = build_h_matrix(&[(0, 0)]).unwrap();
        assert_eq!(h.dim(), 1);
        assert_eq!(*h.get(0, 0), OperatorPoly::one());
    }

    #[test]
    fn h_matrix_squeezing() {
        let h = build_h_matrix(&[(0, 0), (1, 0), (0, 1)]).unwrap();
        let expect = [
            ["1", "E1-", "E1+"],
            ["E1+", "E1- E1+", "E1+^2"],
            ["E1-", "E1-^2", "E1- E1+"],
        ];
        for (r, row) in expect.iter().enumerate() {
            for (c, s) in row.iter().enumerate() {
                assert_eq!(*h.get(r, c), poly(s, 1), "entry ({r},{c})");
            }
        }
    }

    #[test]
    fn h_matrix_errors() {
        assert_eq!(build_h_matrix(&[(0, 0), (1, 1), (1, 1)]), Err(AlgebraError::DuplicateIndex("(1, 1)".into())));
        assert_eq!(build_h_matrix(&[]), Err(AlgebraError::EmptyIndex));
        assert_eq!(build_h_matrix(&[(1, 1)]), Err(AlgebraError::MissingIdentity));
    }

    #[test]
    fn order_k_sets() {
        assert_eq!(order_k_pairs(1), vec![(0, 0), (1, 0), (0, 1)]);
        assert_eq!(order_k_pairs(2).len(), 6);
        let m = multi_indices_up_to(3, 2);
        assert_eq!(m.len(), 10);
        assert_eq!(m[0], MultiIndex::zero(3));
        assert_eq!(m[1], MultiIndex(vec![1, 0, 0]));
        assert_eq!(multi_indices_up_to(2, 3).len(), 10);
    }

    #[test]
    fn bipartite_pt_keys() {
        let idx = pairs_to_multi(&[(0, 0), (1, 1)]);
        let b = Bipartition::new(2, [2]).unwrap();
        let f = build_f_pt_matrix(&idx, &b).unwrap();
        let g = ModeGeometry::uniform(2).unwrap();
        let keys: Vec<SourceMomentKey> = f
            .entries()
            .map(|(_, _, p)| {
                let t = reduce_to_source(p, &g).unwrap();
                assert_eq!(t.len(), 1);
                t[0].key.clone()
            })
            .collect();
        let expect: Vec<SourceMomentKey> =
            [(0, 0), (1, 1), (1, 1), (2, 2)].iter().map(|&(a, b)| SourceMomentKey::single(a, b)).collect();
        assert_eq!(keys, expect);
    }

    #[test]
    fn pt_constant_entry() {
        let b = Bipartition::new(2, [2]).unwrap();
        let f = build_f_pt_matrix(&[MultiIndex::zero(2)], &b).unwrap();
        assert_eq!(*f.get(0, 0), OperatorPoly::one());
    }

    #[test]
    fn tripartite_block_only_on_transposed_mode() {
        let b = Bipartition::new(3, [3]).unwrap();
        let idx = vec![MultiIndex::zero(3), MultiIndex(vec![1, 1, 1])];
        let f = build_f_pt_matrix(&idx, &b).unwrap();
        let m = &f.get(1, 1).monomials()[0];
        for factor in &m.factors {
            assert_eq!(factor.conjugated, factor.mode == 3);
        }
        // off-diagonal [0, l]: untransposed E1+ E2+ plus E3- from the block
        let m = &f.get(0, 1).monomials()[0];
        let e3 = m.factors.iter().find(|x| x.mode == 3).unwrap();
        assert_eq!(e3.freq, Freq::Neg);
        assert!(e3.conjugated);
        assert!(f.entries().all(|(_, _, p)| p.is_normal_time_ordered()));
    }

    #[test]
    fn pt_rejects_bad_arity() {
        let b = Bipartition::new(3, [3]).unwrap();
        assert!(matches!(
            build_f_pt_matrix(&[MultiIndex(vec![0, 0])], &b),
            Err(AlgebraError::MultiIndexArity { .. })
        ));
    }

    #[test]
    fn timed_pt_matrix_keys() {
        let b = Bipartition::new(2, [2]).unwrap();
        let idx = pairs_to_multi(&[(0, 0), (1, 1)]);
        let f = build_f_pt_matrix_timed(&idx, &b, &[TimeLabel(0), TimeLabel(1)]).unwrap();
        let g = ModeGeometry::uniform(2).unwrap();
        let key = &reduce_to_source(f.get(1, 1), &g).unwrap()[0].key;
        assert_eq!(key.neg, vec![(TimeLabel(0), 1), (TimeLabel(1), 1)]);
        assert_eq!(key.pos, vec![(TimeLabel(1), 1), (TimeLabel(0), 1)]);
    }
}
