//! Closed-form variance decompositions of piecewise-constant forests under
//! the uniform measure on `[0,1]^p`.
//!
//! For a subset `P` of inputs the cost `c_P = Var E[f(X) | X_P]` is a double
//! sum over leaf pairs. Two leaves that are not both bounded on some axis in
//! `P` contribute the same amount to `E[E[f|X_P]^2]` as to `mean^2`, so only
//! pairs sharing such an axis are visited. The difference `c_{P+j} - c_P`
//! only involves pairs that are both bounded on `j`.

mod expansion;
mod report;
mod sampled;

use crate::error::{Error, Result};
use crate::forest::geometry::{merge_axes, Axis, FlatLeaf, ForestGeometry};
use crate::forest::Forest;

pub use expansion::{
    banzhaf_weight_sum, shapley_cost_expansion, shapley_weight_sum, total_effect_coefficient_bound,
    total_effect_expansion, CostExpansion,
};
pub use report::{
    assemble_report, IndexEstimate, IndexTriple, InputIndices, Normalization, Quantile,
    ReportMetadata, ReportOptions, SensitivityReport, ShapleyMode,
};
pub use sampled::{shapley_sampled, shapley_sampled_forest, subset_differences, SubsetRule};

/// Largest subset accepted by [`sobol_interaction`].
pub const MAX_INTERACTION_ORDER: usize = 12;
/// Largest input dimension accepted by [`shapley_exact`].
pub const MAX_EXACT_SHAPLEY_P: usize = 20;

/// A subset of `{0, ..., p-1}` stored as a bitset.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SubsetMask {
    p: usize,
    words: Vec<u64>,
}

impl SubsetMask {
    pub fn empty(p: usize) -> Self {
        SubsetMask {
            p,
            words: vec![0; p.div_ceil(64)],
        }
    }

    pub fn full(p: usize) -> Self {
        let mut m = Self::empty(p);
        for j in 0..p {
            m.insert(j);
        }
        m
    }

    pub fn from_indices(p: usize, members: &[usize]) -> Result<Self> {
        let mut m = Self::empty(p);
        for &j in members {
            if j >= p {
                return Err(Error::IndexOutOfRange { index: j, p });
            }
            m.insert(j);
        }
        Ok(m)
    }

    /// Subset of the low `p` bits of `bits`.
    pub fn from_bits(p: usize, bits: u64) -> Self {
        let mut m = Self::empty(p);
        for j in 0..p.min(64) {
            if bits >> j & 1 == 1 {
                m.insert(j);
            }
        }
        m
    }

    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn contains(&self, j: usize) -> bool {
        j < self.p && self.words[j / 64] >> (j % 64) & 1 == 1
    }

    pub fn insert(&mut self, j: usize) {
        assert!(j < self.p, "index {j} out of range for p = {}", self.p);
        self.words[j / 64] |= 1 << (j % 64);
    }

    pub fn remove(&mut self, j: usize) {
        if j < self.p {
            self.words[j / 64] &= !(1 << (j % 64));
        }
    }

    pub fn with(&self, j: usize) -> Self {
        let mut m = self.clone();
        m.insert(j);
        m
    }

    pub fn without(&self, j: usize) -> Self {
        let mut m = self.clone();
        m.remove(j);
        m
    }

    pub fn complement(&self) -> Self {
        let mut m = Self::empty(self.p);
        for j in (0..self.p).filter(|&j| !self.contains(j)) {
            m.insert(j);
        }
        m
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.p).filter(|&j| self.contains(j))
    }
}

/// Closed-form index computations on one forest, reusing its flattened
/// leaf geometry across queries.
#[derive(Clone, Debug)]
pub struct Evaluator {
    geom: ForestGeometry,
}

impl Evaluator {
    pub fn new(forest: &Forest) -> Self {
        Evaluator {
            geom: forest.geometry(),
        }
    }

    pub fn p(&self) -> usize {
        self.geom.p()
    }

    pub fn geometry(&self) -> &ForestGeometry {
        &self.geom
    }

    pub fn mean(&self) -> f64 {
        self.geom.mean()
    }

    pub fn variance(&self) -> f64 {
        self.geom.variance()
    }

    fn check_index(&self, j: usize) -> Result<()> {
        if j >= self.p() {
            return Err(Error::IndexOutOfRange {
                index: j,
                p: self.p(),
            });
        }
        Ok(())
    }

    fn check_mask(&self, mask: &SubsetMask) -> Result<()> {
        if mask.p() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                actual: mask.p(),
            });
        }
        Ok(())
    }

    /// `c_P`, clamped at zero.
    pub fn cost(&self, mask: &SubsetMask) -> Result<f64> {
        self.check_mask(mask)?;
        if mask.is_empty() {
            return Ok(0.0);
        }
        let mut acc = 0.0f64;
        self.geom.for_each_sharing_pair(
            |d| mask.contains(d),
            |a, b| {
                let (mut single, mut cond, mut indep) = (1.0, 1.0, 1.0);
                merge_axes(a, b, |ax| match ax {
                    Axis::Single { len } => single *= len,
                    Axis::Shared {
                        dim,
                        len_a,
                        len_b,
                        overlap,
                    } => {
                        cond *= if mask.contains(dim) {
                            overlap
                        } else {
                            len_a * len_b
                        };
                        indep *= len_a * len_b;
                    }
                });
                acc += a.mu * b.mu * single * (cond - indep);
            },
        );
        Ok(acc.max(0.0))
    }

    /// Visits each unordered pair of leaves bounded on `j` once, passing
    /// the pair with its multiplicity in the ordered double sum.
    fn for_each_pair_on(&self, j: usize, mut f: impl FnMut(f64, &FlatLeaf, &FlatLeaf)) {
        let on = self.geom.leaves_on(j);
        let leaves = self.geom.leaves();
        for (k, &ai) in on.iter().enumerate() {
            let a = &leaves[ai as usize];
            f(1.0, a, a);
            for &bi in &on[k + 1..] {
                f(2.0, a, &leaves[bi as usize]);
            }
        }
    }

    /// `c_{P+j} - c_P` without forming either cost. Not clamped.
    pub fn cost_difference(&self, mask: &SubsetMask, j: usize) -> Result<f64> {
        self.check_mask(mask)?;
        self.check_index(j)?;
        if mask.contains(j) {
            return Err(Error::IndexInSubset(j));
        }
        Ok(self.cost_difference_unchecked(|d| mask.contains(d), j))
    }

    pub(crate) fn cost_difference_unchecked(&self, in_p: impl Fn(usize) -> bool, j: usize) -> f64 {
        let mut acc = 0.0f64;
        self.for_each_pair_on(j, |mult, a, b| {
            let mut w = mult * a.mu * b.mu;
            merge_axes(a, b, |ax| match ax {
                Axis::Single { len } => w *= len,
                Axis::Shared {
                    dim,
                    len_a,
                    len_b,
                    overlap,
                } => {
                    w *= if dim == j {
                        overlap - len_a * len_b
                    } else if in_p(dim) {
                        overlap
                    } else {
                        len_a * len_b
                    }
                }
            });
            acc += w;
        });
        acc
    }

    /// First-order index `V_j = c_{j}`.
    pub fn sobol_main(&self, j: usize) -> Result<f64> {
        self.check_index(j)?;
        Ok(self.cost_difference_unchecked(|_| false, j).max(0.0))
    }

    /// Total-effect index `T_j = Var f - c_{[p] - j}`.
    pub fn sobol_total(&self, j: usize) -> Result<f64> {
        self.check_index(j)?;
        Ok(self.cost_difference_unchecked(|d| d != j, j).max(0.0))
    }

    /// `V_P = sum_{Q in P} (-1)^{|P|-|Q|} c_Q`.
    pub fn sobol_interaction(&self, mask: &SubsetMask) -> Result<f64> {
        self.check_mask(mask)?;
        let members: Vec<usize> = mask.iter().collect();
        if members.is_empty() {
            return Err(Error::InvalidConfig(
                "interaction index of the empty set".into(),
            ));
        }
        if members.len() > MAX_INTERACTION_ORDER {
            return Err(Error::LimitExceeded {
                what: "interaction order",
                value: members.len(),
                limit: MAX_INTERACTION_ORDER,
            });
        }
        let k = members.len();
        let mut acc = 0.0f64;
        for bits in 0u64..1 << k {
            let q: Vec<usize> = (0..k)
                .filter(|&i| bits >> i & 1 == 1)
                .map(|i| members[i])
                .collect();
            let sign = if (k - q.len()).is_multiple_of(2) {
                1.0
            } else {
                -1.0
            };
            acc += sign * self.cost(&SubsetMask::from_indices(self.p(), &q)?)?;
        }
        Ok(acc)
    }

    /// Shapley effect of input `j` by enumerating all subsets of the other
    /// inputs. Clamped at zero.
    pub fn shapley_exact(&self, j: usize) -> Result<f64> {
        self.check_index(j)?;
        let p = self.p();
        if p > MAX_EXACT_SHAPLEY_P {
            return Err(Error::LimitExceeded {
                what: "input dimension for exact Shapley",
                value: p,
                limit: MAX_EXACT_SHAPLEY_P,
            });
        }
        let others: Vec<usize> = (0..p).filter(|&d| d != j).collect();
        let weights = shapley_size_weights(p);
        let mut in_p = vec![false; p];
        let mut acc = 0.0f64;
        for bits in 0u64..1 << (p - 1) {
            for (i, &d) in others.iter().enumerate() {
                in_p[d] = bits >> i & 1 == 1;
            }
            let size = bits.count_ones() as usize;
            acc += weights[size] * self.cost_difference_unchecked(|d| in_p[d], j);
        }
        Ok(acc.max(0.0))
    }

    /// Shapley effects of every input, summing the subset weights in closed
    /// form per leaf pair rather than enumerating subsets. Cost grows with
    /// the number of leaf pairs, not with `2^p`. Clamped at zero.
    pub fn shapley_all(&self) -> Vec<f64> {
        let table = PairWeights::shapley(self.p());
        (0..self.p())
            .map(|j| self.pair_weighted(j, &table).max(0.0))
            .collect()
    }

    /// Banzhaf values `2^{1-p} sum_P (c_{P+j} - c_P)` of every input: the
    /// expectation of the coin-flip subset estimator.
    pub fn banzhaf_all(&self) -> Vec<f64> {
        let table = PairWeights::banzhaf(self.p());
        (0..self.p())
            .map(|j| self.pair_weighted(j, &table).max(0.0))
            .collect()
    }

    fn pair_weighted(&self, j: usize, table: &PairWeights) -> f64 {
        let mut acc = 0.0f64;
        let mut poly: Vec<f64> = Vec::with_capacity(8);
        self.for_each_pair_on(j, |mult, a, b| {
            let mut w = mult * a.mu * b.mu;
            poly.clear();
            poly.push(1.0);
            merge_axes(a, b, |ax| match ax {
                Axis::Single { len } => w *= len,
                Axis::Shared {
                    dim,
                    len_a,
                    len_b,
                    overlap,
                } if dim == j => w *= overlap - len_a * len_b,
                Axis::Shared {
                    len_a,
                    len_b,
                    overlap,
                    ..
                } => {
                    // multiply the polynomial by (len_a len_b + overlap z)
                    poly.push(0.0);
                    for k in (0..poly.len()).rev() {
                        let below = if k > 0 { poly[k - 1] } else { 0.0 };
                        poly[k] = poly[k] * len_a * len_b + below * overlap;
                    }
                }
            });
            let k = poly.len() - 1;
            acc += w * poly
                .iter()
                .enumerate()
                .map(|(i, c)| c * table.get(k, i))
                .sum::<f64>();
        });
        acc
    }
}

/// `w(s) = s! (p-1-s)! / p!`, the Shapley weight of one subset of size `s`.
pub fn shapley_size_weights(p: usize) -> Vec<f64> {
    let binom = binomial_row(p - 1);
    (0..p).map(|s| 1.0 / (p as f64 * binom[s])).collect()
}

fn binomial_row(n: usize) -> Vec<f64> {
    let mut row = vec![1.0];
    for _ in 0..n {
        let mut next = vec![1.0; row.len() + 1];
        for k in 1..row.len() {
            next[k] = row[k - 1] + row[k];
        }
        row = next;
    }
    row
}

/// `W(k, i)`: total subset weight over all subsets of the `p-1` other inputs
/// that contain exactly `i` of a fixed set of `k` inputs.
struct PairWeights {
    rows: Vec<Vec<f64>>,
}

impl PairWeights {
    fn shapley(p: usize) -> Self {
        let w = shapley_size_weights(p);
        let rows = (0..p)
            .map(|k| {
                let free = binomial_row(p - 1 - k);
                (0..=k)
                    .map(|i| free.iter().enumerate().map(|(s, c)| c * w[i + s]).sum())
                    .collect()
            })
            .collect();
        PairWeights { rows }
    }

    fn banzhaf(p: usize) -> Self {
        let rows = (0..p).map(|k| vec![0.5f64.powi(k as i32); k + 1]).collect();
        PairWeights { rows }
    }

    #[inline]
    fn get(&self, k: usize, i: usize) -> f64 {
        self.rows[k][i]
    }
}

pub fn cost(forest: &Forest, mask: &SubsetMask) -> Result<f64> {
    Evaluator::new(forest).cost(mask)
}

pub fn cost_difference(forest: &Forest, mask: &SubsetMask, j: usize) -> Result<f64> {
    Evaluator::new(forest).cost_difference(mask, j)
}

pub fn sobol_interaction(forest: &Forest, mask: &SubsetMask) -> Result<f64> {
    Evaluator::new(forest).sobol_interaction(mask)
}

pub fn sobol_main(forest: &Forest, j: usize) -> Result<f64> {
    Evaluator::new(forest).sobol_main(j)
}

pub fn sobol_total(forest: &Forest, j: usize) -> Result<f64> {
    Evaluator::new(forest).sobol_total(j)
}

pub fn shapley_exact(forest: &Forest, j: usize) -> Result<f64> {
    Evaluator::new(forest).shapley_exact(j)
}

/// `(|c_P(f) - c_P(f0)|, 4 B ||f - f0||_2)` with `B` the larger of the two
/// sup-norm bounds.
pub fn lipschitz_gap(f: &Forest, f0: &Forest, mask: &SubsetMask) -> Result<(f64, f64)> {
    let l2 = f.l2_distance(f0)?;
    let lhs = (cost(f, mask)? - cost(f0, mask)?).abs();
    let bound = f.sup_norm_bound().max(f0.sup_norm_bound());
    Ok((lhs, 4.0 * bound * l2))
}
