//! Birth/death Metropolis-Hastings moves on a single tree.
//!
//! The tree prior lets a node at depth `d` split with probability
//! `alpha (1 + d)^(-beta)` whenever at least one split-net cut lies inside
//! its box, and zero otherwise. A split rule picks its dimension among the
//! admissible ones with probability proportional to the split-probability
//! vector `s`, then a cut uniformly among the admissible cuts. Births draw
//! their rule from that same distribution, so rule probabilities cancel in
//! the acceptance ratio and only the structural terms remain.

use rand::Rng;

use super::dataset::SplitNet;
use super::tree::{GrowTree, NodeId};
use crate::forest::{Tree, TreeNode};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreePrior {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for TreePrior {
    fn default() -> Self {
        TreePrior {
            alpha: 0.95,
            beta: 2.0,
        }
    }
}

impl TreePrior {
    pub fn split_prob(&self, depth: u32) -> f64 {
        self.alpha * (1.0 + depth as f64).powf(-self.beta)
    }
}

/// Log of a leaf's residual likelihood with its mean integrated out under
/// `N(0, tau2)`, dropping the `-n/2 log(2 pi sigma2)` term shared by every
/// tree over the same residuals.
pub fn leaf_log_ml(n: usize, sum: f64, sum_sq: f64, sigma2: f64, tau2: f64) -> f64 {
    let denom = sigma2 + n as f64 * tau2;
    0.5 * (sigma2 / denom).ln() + tau2 * sum * sum / (2.0 * sigma2 * denom)
        - sum_sq / (2.0 * sigma2)
}

/// Integrated log likelihood of `residuals` under `tree`, summed over leaves.
/// `rows[i]` is the scaled input of residual `i`. Returns `None` when a leaf
/// holds fewer than `min_leaf_obs` residuals.
pub fn log_marginal_likelihood(
    tree: &Tree,
    rows: &[Vec<f64>],
    residuals: &[f64],
    sigma2: f64,
    tau2: f64,
    min_leaf_obs: usize,
) -> Option<f64> {
    let leaf_index: Vec<usize> = tree
        .nodes()
        .iter()
        .scan(0, |k, n| {
            let here = *k;
            if matches!(n, TreeNode::Leaf { .. }) {
                *k += 1;
            }
            Some(here)
        })
        .collect();
    let mut stats = vec![(0usize, 0.0f64, 0.0f64); tree.num_leaves()];
    for (x, &r) in rows.iter().zip(residuals) {
        let mut i = 0;
        while let TreeNode::Internal {
            split_dim,
            cut,
            left,
            right,
        } = tree.nodes()[i]
        {
            i = if x[split_dim] < cut { left } else { right };
        }
        let s = &mut stats[leaf_index[i]];
        s.0 += 1;
        s.1 += r;
        s.2 += r * r;
    }
    if stats.iter().any(|s| s.0 < min_leaf_obs.max(1)) {
        return None;
    }
    Some(
        stats
            .iter()
            .map(|&(n, s, q)| leaf_log_ml(n, s, q, sigma2, tau2))
            .sum(),
    )
}

/// Split-rule distribution over a split-net for a given probability vector.
pub(crate) struct RuleSpace<'a> {
    net: &'a SplitNet,
    s: &'a [f64],
    cum: Vec<f64>,
    splittable: usize,
}

impl<'a> RuleSpace<'a> {
    pub fn new(net: &'a SplitNet, s: &'a [f64]) -> Self {
        let mut acc = 0.0;
        let cum = s
            .iter()
            .enumerate()
            .map(|(j, &w)| {
                if !net.cuts(j).is_empty() {
                    acc += w;
                }
                acc
            })
            .collect();
        let splittable = (0..net.p()).filter(|&j| !net.cuts(j).is_empty()).count();
        RuleSpace {
            net,
            s,
            cum,
            splittable,
        }
    }

    fn constrained_count(&self, bounds: &[(usize, f64, f64)], dim: usize) -> usize {
        match bounds.iter().find(|b| b.0 == dim) {
            Some(&(_, lo, hi)) => self.net.inside(dim, lo, hi).len(),
            None => self.net.cuts(dim).len(),
        }
    }

    /// Whether some cut lies inside the box described by `bounds`.
    pub fn has_rule(&self, bounds: &[(usize, f64, f64)]) -> bool {
        let constrained_splittable = bounds
            .iter()
            .filter(|b| !self.net.cuts(b.0).is_empty())
            .count();
        self.splittable > constrained_splittable
            || bounds
                .iter()
                .any(|&(d, lo, hi)| !self.net.inside(d, lo, hi).is_empty())
    }

    /// Draws `(dim, cut)` from the rule prior restricted to the box.
    pub fn sample<R: Rng>(
        &self,
        bounds: &[(usize, f64, f64)],
        rng: &mut R,
    ) -> Option<(usize, f64)> {
        if !self.has_rule(bounds) {
            return None;
        }
        let total = *self.cum.last()?;
        let blocked: f64 = bounds
            .iter()
            .filter(|&&(d, lo, hi)| {
                !self.net.cuts(d).is_empty() && self.net.inside(d, lo, hi).is_empty()
            })
            .map(|b| self.s[b.0])
            .sum();
        let dim = if total > 0.0 && (total - blocked) > 0.25 * total {
            loop {
                let u = rng.random::<f64>() * total;
                let j = self.cum.partition_point(|&c| c <= u).min(self.s.len() - 1);
                if self.constrained_count(bounds, j) > 0 {
                    break j;
                }
            }
        } else {
            let admissible: Vec<usize> = (0..self.s.len())
                .filter(|&j| self.constrained_count(bounds, j) > 0)
                .collect();
            let mass: f64 = admissible.iter().map(|&j| self.s[j]).sum();
            if mass > 0.0 {
                let mut u = rng.random::<f64>() * mass;
                let mut pick = *admissible.last()?;
                for &j in &admissible {
                    u -= self.s[j];
                    if u < 0.0 {
                        pick = j;
                        break;
                    }
                }
                pick
            } else {
                admissible[rng.random_range(0..admissible.len())]
            }
        };
        let range = match bounds.iter().find(|b| b.0 == dim) {
            Some(&(_, lo, hi)) => self.net.inside(dim, lo, hi),
            None => 0..self.net.cuts(dim).len(),
        };
        Some((dim, self.net.cuts(dim)[rng.random_range(range)]))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MoveProposal {
    /// Split leaf `leaf` on `x[dim] < cut`.
    Birth {
        leaf: NodeId,
        dim: usize,
        cut: f64,
        log_ratio: f64,
    },
    /// Collapse the nog node `node` into a leaf.
    Death { node: NodeId, log_ratio: f64 },
    /// No admissible move; the structural step is skipped.
    Invalid,
}

fn split_prob_if_admissible(
    prior: &TreePrior,
    rules: &RuleSpace<'_>,
    bounds: &[(usize, f64, f64)],
    depth: u32,
) -> f64 {
    if rules.has_rule(bounds) {
        prior.split_prob(depth)
    } else {
        0.0
    }
}

fn child_bounds(bounds: &[(usize, f64, f64)], dim: usize, cut: f64) -> [Vec<(usize, f64, f64)>; 2] {
    let mut left = bounds.to_vec();
    let mut right = bounds.to_vec();
    match bounds.iter().position(|b| b.0 == dim) {
        Some(k) => {
            left[k].2 = cut;
            right[k].1 = cut;
        }
        None => {
            left.push((dim, 0.0, cut));
            right.push((dim, cut, 1.0));
        }
    }
    [left, right]
}

/// Proposes a birth or death move and returns it with the log of
/// `prior ratio * reverse proposal / forward proposal`, the likelihood
/// ratio being left to the caller.
pub(crate) fn propose_move<R: Rng>(
    tree: &GrowTree,
    rules: &RuleSpace<'_>,
    prior: &TreePrior,
    rng: &mut R,
) -> MoveProposal {
    let p_birth = if tree.is_stump() { 1.0 } else { 0.5 };
    if rng.random::<f64>() < p_birth {
        let leaves = tree.leaves();
        let leaf = leaves[rng.random_range(0..leaves.len())];
        let bounds = tree.bounds(leaf);
        let Some((dim, cut)) = rules.sample(&bounds, rng) else {
            return MoveProposal::Invalid;
        };
        let depth = tree.node(leaf).depth;
        let [lb, rb] = child_bounds(&bounds, dim, cut);
        let p_here = prior.split_prob(depth);
        let p_left = split_prob_if_admissible(prior, rules, &lb, depth + 1);
        let p_right = split_prob_if_admissible(prior, rules, &rb, depth + 1);
        let log_prior =
            p_here.ln() + (1.0 - p_left).ln() + (1.0 - p_right).ln() - (1.0 - p_here).ln();
        let parent_was_nog = tree.sibling(leaf).is_some_and(|s| tree.is_leaf(s));
        let nogs_after = tree.nogs().len() + 1 - usize::from(parent_was_nog);
        let log_trans = (0.5 / nogs_after as f64).ln() - (p_birth / leaves.len() as f64).ln();
        MoveProposal::Birth {
            leaf,
            dim,
            cut,
            log_ratio: log_prior + log_trans,
        }
    } else {
        let nogs = tree.nogs();
        let node = nogs[rng.random_range(0..nogs.len())];
        let bounds = tree.bounds(node);
        let (dim, cut) = match tree.node(node).kind {
            super::tree::Kind::Internal { dim, cut, .. } => (dim as usize, cut),
            super::tree::Kind::Leaf { .. } => unreachable!("nog nodes are internal"),
        };
        let depth = tree.node(node).depth;
        let [lb, rb] = child_bounds(&bounds, dim, cut);
        let p_here = prior.split_prob(depth);
        let p_left = split_prob_if_admissible(prior, rules, &lb, depth + 1);
        let p_right = split_prob_if_admissible(prior, rules, &rb, depth + 1);
        let log_prior =
            (1.0 - p_here).ln() - p_here.ln() - (1.0 - p_left).ln() - (1.0 - p_right).ln();
        let leaves_after = tree.leaves().len() - 1;
        let p_birth_after = if leaves_after == 1 { 1.0 } else { 0.5 };
        let log_trans = (p_birth_after / leaves_after as f64).ln() - (0.5 / nogs.len() as f64).ln();
        MoveProposal::Death {
            node,
            log_ratio: log_prior + log_trans,
        }
    }
}

/// Runs the structural chain of a single tree with the likelihood switched
/// off, calling `visit` after every iteration. Its stationary law is the
/// tree prior.
pub fn simulate_prior<R: Rng>(
    net: &SplitNet,
    s: &[f64],
    prior: &TreePrior,
    iterations: usize,
    rng: &mut R,
    mut visit: impl FnMut(&Tree),
) {
    let rules = RuleSpace::new(net, s);
    let mut tree = GrowTree::stump(0.0, Vec::new());
    for _ in 0..iterations {
        match propose_move(&tree, &rules, prior, rng) {
            MoveProposal::Birth {
                leaf,
                dim,
                cut,
                log_ratio,
            } => {
                if rng.random::<f64>().ln() < log_ratio {
                    tree.grow(leaf, dim, cut, Vec::new(), Vec::new());
                }
            }
            MoveProposal::Death { node, log_ratio } => {
                if rng.random::<f64>().ln() < log_ratio {
                    tree.prune(node);
                }
            }
            MoveProposal::Invalid => {}
        }
        visit(&tree.to_tree());
    }
}
