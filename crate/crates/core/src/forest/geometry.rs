use super::Forest;

/// A leaf flattened out of its tree: value, box volume and the split-axis
/// bounds as `(dim, lo, hi)`, sorted by dim.
#[derive(Clone, Debug)]
pub struct FlatLeaf {
    pub mu: f64,
    pub volume: f64,
    pub bounds: Box<[(u32, f64, f64)]>,
}

/// Per-axis relation of two leaf boxes, as produced by [`merge_axes`].
#[derive(Clone, Copy, Debug)]
pub enum Axis {
    /// Only one of the two boxes is bounded on this axis.
    Single { len: f64 },
    /// Both boxes are bounded on `dim`.
    Shared {
        dim: usize,
        len_a: f64,
        len_b: f64,
        overlap: f64,
    },
}

/// Walks the union of the split axes of two leaves in increasing dim order.
#[inline]
pub fn merge_axes(a: &FlatLeaf, b: &FlatLeaf, mut f: impl FnMut(Axis)) {
    let (xa, xb) = (&a.bounds, &b.bounds);
    let (mut i, mut j) = (0, 0);
    while i < xa.len() || j < xb.len() {
        if j == xb.len() || (i < xa.len() && xa[i].0 < xb[j].0) {
            f(Axis::Single {
                len: xa[i].2 - xa[i].1,
            });
            i += 1;
        } else if i == xa.len() || xb[j].0 < xa[i].0 {
            f(Axis::Single {
                len: xb[j].2 - xb[j].1,
            });
            j += 1;
        } else {
            let (_, la, ha) = xa[i];
            let (_, lb, hb) = xb[j];
            f(Axis::Shared {
                dim: xa[i].0 as usize,
                len_a: ha - la,
                len_b: hb - lb,
                overlap: (ha.min(hb) - la.max(lb)).max(0.0),
            });
            i += 1;
            j += 1;
        }
    }
}

/// All leaves of a forest with a per-dimension index of the leaves that are
/// bounded on that dimension. Pair sums over leaves only need to visit pairs
/// that share a split axis: for every other pair the uniform measure factors
/// and the contribution cancels against the squared mean.
#[derive(Clone, Debug)]
pub struct ForestGeometry {
    p: usize,
    leaves: Vec<FlatLeaf>,
    by_dim: Vec<Vec<u32>>,
    mean: f64,
}

impl ForestGeometry {
    pub fn new(forest: &Forest) -> Self {
        let mut leaves = Vec::with_capacity(forest.num_leaves());
        let mut by_dim = vec![Vec::new(); forest.p()];
        for tree in forest.trees() {
            for leaf in tree.leaf_boxes() {
                let bounds: Box<[(u32, f64, f64)]> = leaf
                    .bounds
                    .iter()
                    .map(|(d, iv)| (*d as u32, iv.lo(), iv.hi()))
                    .collect();
                for &(d, _, _) in bounds.iter() {
                    by_dim[d as usize].push(leaves.len() as u32);
                }
                leaves.push(FlatLeaf {
                    mu: leaf.mu,
                    volume: leaf.volume(),
                    bounds,
                });
            }
        }
        let mean = leaves.iter().map(|l| l.mu * l.volume).sum();
        ForestGeometry {
            p: forest.p(),
            leaves,
            by_dim,
            mean,
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn leaves(&self) -> &[FlatLeaf] {
        &self.leaves
    }

    /// Indices of leaves bounded on `dim`.
    pub fn leaves_on(&self, dim: usize) -> &[u32] {
        &self.by_dim[dim]
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Visits every ordered pair `(a, b)` (including `a == b`) whose boxes
    /// share at least one split axis accepted by `keep`, exactly once.
    pub fn for_each_sharing_pair(
        &self,
        keep: impl Fn(usize) -> bool,
        mut f: impl FnMut(&FlatLeaf, &FlatLeaf),
    ) {
        for a in &self.leaves {
            for &(d, _, _) in a.bounds.iter() {
                let d = d as usize;
                if !keep(d) {
                    continue;
                }
                for &bi in &self.by_dim[d] {
                    let b = &self.leaves[bi as usize];
                    // count the pair only at its first shared kept axis
                    if first_shared_kept(a, b, &keep) == Some(d) {
                        f(a, b);
                    }
                }
            }
        }
    }

    /// `Var f(X)` under the uniform measure, clamped at zero.
    pub fn variance(&self) -> f64 {
        let mut acc = 0.0;
        self.for_each_sharing_pair(
            |_| true,
            |a, b| {
                let (mut joint, mut indep) = (1.0, 1.0);
                merge_axes(a, b, |ax| match ax {
                    Axis::Single { len } => {
                        joint *= len;
                        indep *= len;
                    }
                    Axis::Shared {
                        len_a,
                        len_b,
                        overlap,
                        ..
                    } => {
                        joint *= overlap;
                        indep *= len_a * len_b;
                    }
                });
                acc += a.mu * b.mu * (joint - indep);
            },
        );
        acc.max(0.0)
    }

    /// `E[f(X)^2]` under the uniform measure.
    pub fn second_moment(&self) -> f64 {
        self.mean * self.mean + self.variance()
    }
}

fn first_shared_kept(a: &FlatLeaf, b: &FlatLeaf, keep: &impl Fn(usize) -> bool) -> Option<usize> {
    let (xa, xb) = (&a.bounds, &b.bounds);
    let (mut i, mut j) = (0, 0);
    while i < xa.len() && j < xb.len() {
        match xa[i].0.cmp(&xb[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                let d = xa[i].0 as usize;
                if keep(d) {
                    return Some(d);
                }
                i += 1;
                j += 1;
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::test_util::random_forest;
    use crate::rng::seeded;

    /// O(K^2) second moment over all ordered pairs.
    fn naive_second_moment(g: &ForestGeometry) -> f64 {
        let mut acc = 0.0;
        for a in g.leaves() {
            for b in g.leaves() {
                let mut vol = 1.0;
                merge_axes(a, b, |ax| match ax {
                    Axis::Single { len } => vol *= len,
                    Axis::Shared { overlap, .. } => vol *= overlap,
                });
                acc += a.mu * b.mu * vol;
            }
        }
        acc
    }

    #[test]
    fn sharing_pair_sum_matches_all_pairs() {
        let mut rng = seeded(2);
        for p in [1, 3, 8, 30] {
            let f = random_forest(&mut rng, p, 6, 3);
            let g = f.geometry();
            let naive = naive_second_moment(&g);
            assert!((g.second_moment() - naive).abs() < 1e-10, "p = {p}");
        }
    }
}
