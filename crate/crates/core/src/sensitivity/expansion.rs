//! Exact rational bookkeeping of index formulas written as signed sums of
//! costs `c_Q`, with subsets encoded as bit patterns over at most 16 inputs.

use std::collections::BTreeMap;

use num_rational::Ratio;

/// A formula as the uncancelled list of `(subset, coefficient)` terms.
#[derive(Clone, Debug, PartialEq)]
pub struct CostExpansion {
    pub p: usize,
    pub terms: Vec<(u32, Ratio<i64>)>,
}

impl CostExpansion {
    /// Sum of absolute coefficients before like terms are merged, ignoring
    /// `c_{}` which is identically zero.
    pub fn uncancelled_abs_sum(&self) -> Ratio<i64> {
        self.terms
            .iter()
            .filter(|(q, _)| *q != 0)
            .map(|(_, c)| if *c < Ratio::from(0) { -c } else { *c })
            .sum()
    }

    /// Like terms merged, zero coefficients and `c_{}` dropped.
    pub fn cancelled(&self) -> BTreeMap<u32, Ratio<i64>> {
        let mut out: BTreeMap<u32, Ratio<i64>> = BTreeMap::new();
        for &(q, c) in self.terms.iter().filter(|(q, _)| *q != 0) {
            *out.entry(q).or_insert_with(|| Ratio::from(0)) += c;
        }
        out.retain(|_, c| *c != Ratio::from(0));
        out
    }
}

fn subsets_of(mask: u32) -> impl Iterator<Item = u32> {
    // standard submask walk, including 0 and mask itself
    let mut next = Some(mask);
    std::iter::from_fn(move || {
        let cur = next?;
        next = if cur == 0 {
            None
        } else {
            Some((cur - 1) & mask)
        };
        Some(cur)
    })
}

fn binomial(n: i64, k: i64) -> i64 {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn check_p(p: usize, j: usize) {
    assert!(
        (1..=16).contains(&p) && j < p,
        "expansions support 1 <= p <= 16 and j < p"
    );
}

/// `T_j = sum_{P in [p]-j} V_{P+j}` with every `V` expanded by inclusion
/// and exclusion.
pub fn total_effect_expansion(p: usize, j: usize) -> CostExpansion {
    check_p(p, j);
    let others = ((1u32 << p) - 1) & !(1 << j);
    let mut terms = Vec::new();
    for set in subsets_of(others) {
        let q = set | 1 << j;
        for r in subsets_of(q) {
            let sign = if (q.count_ones() - r.count_ones()).is_multiple_of(2) {
                1
            } else {
                -1
            };
            terms.push((r, Ratio::from(sign)));
        }
    }
    CostExpansion { p, terms }
}

/// `sum_{i=0}^{p-1} C(p-1, i) (2^{i+1} - 1)`.
pub fn total_effect_coefficient_bound(p: usize) -> i64 {
    (0..p as i64)
        .map(|i| binomial(p as i64 - 1, i) * ((1 << (i + 1)) - 1))
        .sum()
}

/// Shapley effect of `j` as `sum_P w(|P|) (c_{P+j} - c_P)`.
pub fn shapley_cost_expansion(p: usize, j: usize) -> CostExpansion {
    check_p(p, j);
    let others = ((1u32 << p) - 1) & !(1 << j);
    let mut terms = Vec::new();
    for set in subsets_of(others) {
        let w = Ratio::new(
            1,
            p as i64 * binomial(p as i64 - 1, set.count_ones() as i64),
        );
        terms.push((set | 1 << j, w));
        terms.push((set, -w));
    }
    CostExpansion { p, terms }
}

/// `(1/p) sum_{P in [p]-j} C(p-1, |P|)^{-1}`, which equals one.
pub fn shapley_weight_sum(p: usize) -> Ratio<i64> {
    check_p(p, 0);
    let others = ((1u32 << p) - 1) & !1;
    let sum: Ratio<i64> = subsets_of(others)
        .map(|s| Ratio::new(1, binomial(p as i64 - 1, s.count_ones() as i64)))
        .sum();
    sum / Ratio::from(p as i64)
}

/// `2^{1-p}` summed over all subsets of the other inputs, which equals one.
pub fn banzhaf_weight_sum(p: usize) -> Ratio<i64> {
    check_p(p, 0);
    let others = ((1u32 << p) - 1) & !1;
    subsets_of(others)
        .map(|_| Ratio::new(1, 1i64 << (p - 1)))
        .sum()
}
