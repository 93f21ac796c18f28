//! Frequency vectors and exact oracles for the statistics being monitored.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

/// Sparse non-negative integer vector over `[0, dim)`.
///
/// Absent coordinates have count zero; a stored entry is never zero.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FreqVector {
    entries: BTreeMap<usize, u64>,
    dim: usize,
}

impl FreqVector {
    pub fn new(dim: usize) -> Self {
        Self {
            entries: BTreeMap::new(),
            dim,
        }
    }

    /// Builds a vector from `(coordinate, count)` pairs; zero counts are skipped.
    pub fn from_counts(dim: usize, counts: impl IntoIterator<Item = (usize, u64)>) -> Result<Self> {
        let mut v = Self::new(dim);
        for (j, c) in counts {
            v.check(j)?;
            if c > 0 {
                *v.entries.entry(j).or_insert(0) += c;
            }
        }
        Ok(v)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn check(&self, j: usize) -> Result<()> {
        if j >= self.dim {
            return Err(Error::CoordinateOutOfRange { j, m: self.dim });
        }
        Ok(())
    }

    /// `v <- v + e_j`; returns the new count of `j`.
    pub fn apply_update(&mut self, j: usize) -> Result<u64> {
        self.check(j)?;
        let c = self.entries.entry(j).or_insert(0);
        *c += 1;
        Ok(*c)
    }

    pub fn get(&self, j: usize) -> u64 {
        self.entries.get(&j).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.entries.iter().map(|(&j, &c)| (j, c))
    }

    pub fn support_size(&self) -> usize {
        self.entries.len()
    }

    pub fn total(&self) -> u64 {
        self.entries.values().sum()
    }

    /// Coordinate-wise sum; dimensions must agree.
    pub fn add(&mut self, other: &FreqVector) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::param(
                "dim",
                format!("dimension mismatch {} vs {}", self.dim, other.dim),
            ));
        }
        for (j, c) in other.iter() {
            *self.entries.entry(j).or_insert(0) += c;
        }
        Ok(())
    }
}

/// Returns `Some(e)` when `p` is a small non-negative integer exponent.
pub(crate) fn integer_exponent(p: f64) -> Option<u32> {
    (p.fract() == 0.0 && (0.0..=64.0).contains(&p)).then_some(p as u32)
}

fn int_pow_sum(mut counts: impl Iterator<Item = u64>, e: u32) -> Option<u128> {
    counts.try_fold(0u128, |acc, c| {
        (c as u128).checked_pow(e).and_then(|t| acc.checked_add(t))
    })
}

/// `F_p = sum_j count_j^p`. Integer exponents are summed exactly.
pub fn exact_fp(v: &FreqVector, p: f64) -> Result<f64> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::param("p", format!("must be > 0, got {p}")));
    }
    if let Some(e) = integer_exponent(p) {
        if let Some(s) = int_pow_sum(v.entries.values().copied(), e) {
            return Ok(s as f64);
        }
    }
    Ok(v.entries.values().map(|&c| (c as f64).powf(p)).sum())
}

/// Number of nonzero coordinates.
pub fn exact_f0(v: &FreqVector) -> usize {
    v.support_size()
}

/// Running `F_p` of a vector under unit increments.
///
/// Integer exponents are tracked in exact integer arithmetic, so the value
/// always equals a from-scratch [`exact_fp`]; other exponents accumulate the
/// floating increments `(c+1)^p - c^p`.
#[derive(Debug, Clone)]
pub struct FpAccumulator {
    p: f64,
    exact: Option<(u32, u128)>,
    float: f64,
}

impl FpAccumulator {
    pub fn new(p: f64) -> Result<Self> {
        if !(p > 0.0) || !p.is_finite() {
            return Err(Error::param("p", format!("must be > 0, got {p}")));
        }
        Ok(Self {
            p,
            exact: integer_exponent(p).map(|e| (e, 0)),
            float: 0.0,
        })
    }

    /// Records that a coordinate moved from `old` to `old + 1`.
    pub fn bump(&mut self, old: u64) {
        if let Some((e, acc)) = self.exact.as_mut() {
            let next = (old as u128 + 1)
                .checked_pow(*e)
                .zip((old as u128).checked_pow(*e))
                .and_then(|(a, b)| acc.checked_add(a - b));
            match next {
                Some(v) => *acc = v,
                None => {
                    self.float = *acc as f64;
                    self.exact = None;
                }
            }
        }
        if self.exact.is_none() {
            self.float += (old as f64 + 1.0).powf(self.p) - (old as f64).powf(self.p);
        }
    }

    pub fn value(&self) -> f64 {
        match self.exact {
            Some((_, acc)) => acc as f64,
            None => self.float,
        }
    }
}

/// A multiset of items with insertion (+1) / deletion (-1) signs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SignedMultiset {
    items: Vec<(u64, i8)>,
}

impl SignedMultiset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, item: u64) {
        self.items.push((item, 1));
    }

    pub fn delete(&mut self, item: u64) {
        self.items.push((item, -1));
    }

    pub fn push(&mut self, item: u64, sign: i8) -> Result<()> {
        if sign != 1 && sign != -1 {
            return Err(Error::param(
                "sign",
                format!("must be +1 or -1, got {sign}"),
            ));
        }
        self.items.push((item, sign));
        Ok(())
    }

    /// Net frequency of every item that appears.
    pub fn frequencies(&self) -> BTreeMap<u64, i64> {
        let mut f = BTreeMap::new();
        for &(item, s) in &self.items {
            *f.entry(item).or_insert(0i64) += s as i64;
        }
        f
    }
}

/// Empirical entropy `sum_j (|f_j|/L) log2(L/|f_j|)` with `L = sum_j |f_j|`.
pub fn exact_entropy(a: &SignedMultiset) -> Result<f64> {
    let f = a.frequencies();
    let l: u64 = f.values().map(|x| x.unsigned_abs()).sum();
    if l == 0 {
        return Err(Error::EmptyInput("entropy needs a nonzero net frequency"));
    }
    let l = l as f64;
    Ok(f.values()
        .filter(|x| **x != 0)
        .map(|x| {
            let fx = x.unsigned_abs() as f64;
            (fx / l) * (l / fx).log2()
        })
        .sum())
}

fn check_phi(phi: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&phi) {
        return Err(Error::param("phi", format!("must lie in [0,1], got {phi}")));
    }
    Ok(())
}

/// Smallest item `x` of `a` with at most `phi*m` items below it and at most
/// `(1-phi)*m` items above it.
pub fn exact_quantile(a: &[u64], phi: f64) -> Result<u64> {
    check_phi(phi)?;
    if a.is_empty() {
        return Err(Error::EmptyInput("quantile of an empty multiset"));
    }
    let mut sorted = a.to_vec();
    sorted.sort_unstable();
    let m = sorted.len() as f64;
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i];
        let mut end = i;
        while end < sorted.len() && sorted[end] == x {
            end += 1;
        }
        let smaller = i as f64;
        let greater = (sorted.len() - end) as f64;
        if smaller <= phi * m && greater <= (1.0 - phi) * m {
            return Ok(x);
        }
        i = end;
    }
    // Unreachable for phi in [0,1]: the item straddling rank phi*m qualifies.
    Err(Error::Structure("no qualifying quantile".into()))
}

/// `H_phi(A) = { x : f_x >= phi * m }`.
pub fn exact_heavy_hitters(a: &[u64], phi: f64) -> Result<BTreeSet<u64>> {
    check_phi(phi)?;
    if a.is_empty() {
        return Err(Error::EmptyInput("heavy hitters of an empty multiset"));
    }
    let mut freq: BTreeMap<u64, u64> = BTreeMap::new();
    for &x in a {
        *freq.entry(x).or_insert(0) += 1;
    }
    let cut = phi * a.len() as f64;
    Ok(freq
        .into_iter()
        .filter(|&(_, f)| f as f64 >= cut)
        .map(|(x, _)| x)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vec_of(dim: usize, counts: &[(usize, u64)]) -> FreqVector {
        FreqVector::from_counts(dim, counts.iter().copied()).unwrap()
    }

    #[test]
    fn apply_update_examples() {
        let mut v = FreqVector::new(8);
        assert_eq!(v.apply_update(3).unwrap(), 1);
        assert_eq!(v, vec_of(8, &[(3, 1)]));
        v.apply_update(3).unwrap();
        assert_eq!(v, vec_of(8, &[(3, 2)]));

        let mut w = vec_of(8, &[(0, 5)]);
        w.apply_update(1).unwrap();
        assert_eq!(w, vec_of(8, &[(0, 5), (1, 1)]));
    }

    #[test]
    fn apply_update_rejects_out_of_range() {
        let mut v = FreqVector::new(4);
        assert!(matches!(
            v.apply_update(4),
            Err(Error::CoordinateOutOfRange { j: 4, m: 4 })
        ));
        assert_eq!(v.support_size(), 0);
    }

    #[test]
    fn exact_fp_examples() {
        assert_eq!(exact_fp(&FreqVector::new(4), 2.0).unwrap(), 0.0);
        assert_eq!(exact_fp(&vec_of(4, &[(0, 3), (1, 4)]), 2.0).unwrap(), 25.0);
        assert_eq!(exact_fp(&vec_of(4, &[(0, 2), (1, 2)]), 3.0).unwrap(), 16.0);
        assert!(exact_fp(&FreqVector::new(4), 0.0).is_err());
        assert!(exact_fp(&FreqVector::new(4), -1.0).is_err());
    }

    #[test]
    fn exact_f0_examples() {
        assert_eq!(exact_f0(&FreqVector::new(4)), 0);
        assert_eq!(exact_f0(&vec_of(4, &[(0, 5), (2, 2)])), 2);
    }

    #[test]
    fn entropy_examples() {
        let mut same = SignedMultiset::new();
        for _ in 0..5 {
            same.insert(9);
        }
        assert_eq!(exact_entropy(&same).unwrap(), 0.0);

        let mut two = SignedMultiset::new();
        two.insert(1);
        two.delete(2);
        assert!((exact_entropy(&two).unwrap() - 1.0).abs() < 1e-15);

        let mut cancel = SignedMultiset::new();
        cancel.insert(1);
        cancel.delete(1);
        cancel.insert(2);
        assert_eq!(exact_entropy(&cancel).unwrap(), 0.0);

        let mut empty = SignedMultiset::new();
        empty.insert(4);
        empty.delete(4);
        assert!(exact_entropy(&empty).is_err());
        assert!(empty.push(1, 0).is_err());
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(exact_quantile(&[1, 2, 3, 4], 0.0).unwrap(), 1);
        assert_eq!(exact_quantile(&[1, 2, 3, 4], 1.0).unwrap(), 4);
        assert_eq!(exact_quantile(&[1, 1, 2, 5], 0.5).unwrap(), 1);
        assert!(exact_quantile(&[], 0.5).is_err());
        assert!(exact_quantile(&[1], 1.5).is_err());
    }

    #[test]
    fn heavy_hitter_examples() {
        let hh = |a: &[u64], phi| {
            exact_heavy_hitters(a, phi)
                .unwrap()
                .into_iter()
                .collect::<Vec<_>>()
        };
        assert_eq!(hh(&[1, 1, 1, 2], 0.5), vec![1]);
        assert_eq!(hh(&[1, 2], 0.5), vec![1, 2]);
        assert!(hh(&[1, 2, 3, 4], 0.3).is_empty());
        assert!(exact_heavy_hitters(&[], 0.3).is_err());
    }

    #[test]
    fn accumulator_switches_to_float_on_overflow() {
        let mut acc = FpAccumulator::new(40.0).unwrap();
        for c in 0..10_000u64 {
            acc.bump(c);
        }
        let expected = 10_000f64.powf(40.0);
        assert!((acc.value() / expected - 1.0).abs() < 1e-9);
    }

    fn arb_vector() -> impl Strategy<Value = FreqVector> {
        proptest::collection::vec((0usize..64, 1u64..(1 << 15)), 0..40)
            .prop_map(|pairs| FreqVector::from_counts(64, pairs).unwrap())
    }

    proptest! {
        #[test]
        fn fp_at_one_is_total(v in arb_vector()) {
            prop_assert_eq!(exact_fp(&v, 1.0).unwrap(), v.total() as f64);
        }

        #[test]
        fn f0_matches_nonzero_scan(v in arb_vector()) {
            prop_assert_eq!(exact_f0(&v), v.iter().filter(|&(_, c)| c > 0).count());
        }

        #[test]
        fn fp_monotone_under_updates(v in arb_vector(), j in 0usize..64, p in 0.1f64..5.0) {
            let before = exact_fp(&v, p).unwrap();
            let mut w = v.clone();
            w.apply_update(j).unwrap();
            prop_assert!(exact_fp(&w, p).unwrap() >= before);
        }

        #[test]
        fn integer_and_float_fp_agree(v in arb_vector(), p in 1u32..=4) {
            let exact = exact_fp(&v, p as f64).unwrap();
            let float: f64 = v.iter().map(|(_, c)| (c as f64).powf(p as f64)).sum();
            let scale = exact.max(1.0);
            prop_assert!((exact - float).abs() / scale <= 1e-12);
        }

        #[test]
        fn quantile_satisfies_definition(
            a in proptest::collection::vec(0u64..20, 1..50),
            phi in 0.0f64..=1.0,
        ) {
            let x = exact_quantile(&a, phi).unwrap();
            let m = a.len() as f64;
            let smaller = a.iter().filter(|&&y| y < x).count() as f64;
            let greater = a.iter().filter(|&&y| y > x).count() as f64;
            prop_assert!(smaller <= phi * m);
            prop_assert!(greater <= (1.0 - phi) * m);
            // canonical: no smaller item of A qualifies
            for &y in a.iter().filter(|&&y| y < x) {
                let s = a.iter().filter(|&&w| w < y).count() as f64;
                let g = a.iter().filter(|&&w| w > y).count() as f64;
                prop_assert!(!(s <= phi * m && g <= (1.0 - phi) * m));
            }
        }

        #[test]
        fn accumulator_matches_oracle(updates in proptest::collection::vec(0usize..16, 0..200), p in prop_oneof![Just(2.0f64), Just(3.0), Just(1.5)]) {
            let mut v = FreqVector::new(16);
            let mut acc = FpAccumulator::new(p).unwrap();
            for j in updates {
                let old = v.get(j);
                v.apply_update(j).unwrap();
                acc.bump(old);
            }
            let oracle = exact_fp(&v, p).unwrap();
            prop_assert!((acc.value() - oracle).abs() <= 1e-9 * oracle.max(1.0));
        }
    }
}
