//! Trees, forests and posterior ensembles.
//!
//! A [`Tree`] is a binary partition of `[0,1]^p` built from split rules
//! `x[dim] < cut`; a point whose coordinate equals a cut goes right, so every
//! leaf box is half-open and the leaves partition the cube exactly. A
//! [`Forest`] is the sum of its trees, and a [`PosteriorEnsemble`] is the
//! ordered list of `(forest, sigma2)` draws kept by the sampler.

pub mod geometry;
pub mod io;

pub use geometry::{FlatLeaf, ForestGeometry};

use crate::error::{Error, Result};

/// Half-open interval `[lo, hi)` inside `[0, 1]`; the top interval also
/// contains `1.0` itself.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub const UNIT: Interval = Interval { lo: 0.0, hi: 1.0 };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&lo) || !(hi > lo && hi <= 1.0) {
            return Err(Error::InvalidInterval { lo, hi });
        }
        Ok(Interval { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_unit(&self) -> bool {
        self.lo == 0.0 && self.hi == 1.0
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && (x < self.hi || (self.hi == 1.0 && x <= 1.0))
    }

    /// True when `cut` splits the interval into two nonempty pieces.
    pub fn admits_cut(&self, cut: f64) -> bool {
        cut > self.lo && cut < self.hi
    }

    /// Length of the intersection with `other`.
    pub fn overlap(&self, other: &Interval) -> f64 {
        (self.hi.min(other.hi) - self.lo.max(other.lo)).max(0.0)
    }

    fn split_at(&self, cut: f64) -> (Interval, Interval) {
        (
            Interval {
                lo: self.lo,
                hi: cut,
            },
            Interval {
                lo: cut,
                hi: self.hi,
            },
        )
    }
}

/// One node of a [`Tree`]. Child links index into the tree's node arena.
#[derive(Clone, Debug, PartialEq)]
pub enum TreeNode {
    Internal {
        split_dim: usize,
        cut: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        mu: f64,
    },
}

/// A regression tree stored as a node arena in pre-order; node 0 is the root.
#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    nodes: Vec<TreeNode>,
    num_leaves: usize,
}

impl Tree {
    pub fn leaf(mu: f64) -> Self {
        Tree {
            nodes: vec![TreeNode::Leaf { mu }],
            num_leaves: 1,
        }
    }

    /// Joins two subtrees under the rule `x[split_dim] < cut`.
    pub fn split(split_dim: usize, cut: f64, left: Tree, right: Tree) -> Result<Self> {
        let offset_left = 1;
        let offset_right = 1 + left.nodes.len();
        let mut nodes = Vec::with_capacity(1 + left.nodes.len() + right.nodes.len());
        nodes.push(TreeNode::Internal {
            split_dim,
            cut,
            left: offset_left,
            right: offset_right,
        });
        for (sub, offset) in [(left, offset_left), (right, offset_right)] {
            nodes.extend(sub.nodes.into_iter().map(|n| match n {
                TreeNode::Internal {
                    split_dim,
                    cut,
                    left,
                    right,
                } => TreeNode::Internal {
                    split_dim,
                    cut,
                    left: left + offset,
                    right: right + offset,
                },
                leaf => leaf,
            }));
        }
        Tree::from_nodes(nodes)
    }

    /// Builds a tree from an arena rooted at index 0, checking that every
    /// node is reachable exactly once and that each cut lies strictly inside
    /// the interval its node inherits from the ancestors.
    pub fn from_nodes(nodes: Vec<TreeNode>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidTree("no nodes".into()));
        }
        let mut seen = vec![false; nodes.len()];
        let mut bounds: Vec<(usize, Interval)> = Vec::new();
        let mut num_leaves = 0;
        check_node(&nodes, 0, &mut seen, &mut bounds, &mut num_leaves)?;
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidTree("unreachable nodes in arena".into()));
        }
        Ok(Tree { nodes, num_leaves })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn num_leaves(&self) -> usize {
        self.num_leaves
    }

    pub fn num_internal(&self) -> usize {
        self.nodes.len() - self.num_leaves
    }

    /// Largest split dimension plus one (0 for a stump).
    pub fn min_dim(&self) -> usize {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Internal { split_dim, .. } => Some(split_dim + 1),
                TreeNode::Leaf { .. } => None,
            })
            .max()
            .unwrap_or(0)
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn go(nodes: &[TreeNode], i: usize) -> usize {
            match nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Internal { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    /// Value of the leaf containing `x`; `x` must have at least
    /// [`Tree::min_dim`] coordinates.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { mu } => return mu,
                TreeNode::Internal {
                    split_dim,
                    cut,
                    left,
                    right,
                } => {
                    i = if x[split_dim] < cut { left } else { right };
                }
            }
        }
    }

    pub fn leaf_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            TreeNode::Leaf { mu } => Some(*mu),
            TreeNode::Internal { .. } => None,
        })
    }

    /// The leaves with their boxes, in left-to-right order.
    pub fn leaf_boxes(&self) -> Vec<LeafBox> {
        let mut out = Vec::with_capacity(self.num_leaves);
        let mut bounds = Vec::new();
        collect_boxes(&self.nodes, 0, &mut bounds, &mut out);
        out
    }

    /// Copy with every leaf value passed through `f`.
    pub fn map_leaves(&self, f: impl Fn(f64) -> f64) -> Tree {
        let nodes = self
            .nodes
            .iter()
            .map(|n| match *n {
                TreeNode::Leaf { mu } => TreeNode::Leaf { mu: f(mu) },
                ref internal => internal.clone(),
            })
            .collect();
        Tree {
            nodes,
            num_leaves: self.num_leaves,
        }
    }
}

fn check_node(
    nodes: &[TreeNode],
    i: usize,
    seen: &mut [bool],
    bounds: &mut Vec<(usize, Interval)>,
    num_leaves: &mut usize,
) -> Result<()> {
    if i >= nodes.len() {
        return Err(Error::InvalidTree(format!("child index {i} out of bounds")));
    }
    if std::mem::replace(&mut seen[i], true) {
        return Err(Error::InvalidTree(format!("node {i} reached twice")));
    }
    match nodes[i] {
        TreeNode::Leaf { mu } => {
            if !mu.is_finite() {
                return Err(Error::InvalidTree(format!("non-finite leaf value {mu}")));
            }
            *num_leaves += 1;
            Ok(())
        }
        TreeNode::Internal {
            split_dim,
            cut,
            left,
            right,
        } => {
            let current = current_interval(bounds, split_dim);
            if !current.admits_cut(cut) {
                return Err(Error::InvalidTree(format!(
                    "cut {cut} on dim {split_dim} outside admissible interval [{}, {})",
                    current.lo, current.hi
                )));
            }
            let (l, r) = current.split_at(cut);
            bounds.push((split_dim, l));
            check_node(nodes, left, seen, bounds, num_leaves)?;
            bounds.pop();
            bounds.push((split_dim, r));
            check_node(nodes, right, seen, bounds, num_leaves)?;
            bounds.pop();
            Ok(())
        }
    }
}

fn current_interval(bounds: &[(usize, Interval)], dim: usize) -> Interval {
    bounds
        .iter()
        .rev()
        .find(|(d, _)| *d == dim)
        .map(|(_, iv)| *iv)
        .unwrap_or(Interval::UNIT)
}

fn collect_boxes(
    nodes: &[TreeNode],
    i: usize,
    bounds: &mut Vec<(usize, Interval)>,
    out: &mut Vec<LeafBox>,
) {
    match nodes[i] {
        TreeNode::Leaf { mu } => {
            let mut b: Vec<(usize, Interval)> = Vec::new();
            for &(d, iv) in bounds.iter() {
                match b.iter_mut().find(|(e, _)| *e == d) {
                    Some(slot) => slot.1 = iv,
                    None => b.push((d, iv)),
                }
            }
            b.sort_by_key(|(d, _)| *d);
            out.push(LeafBox { mu, bounds: b });
        }
        TreeNode::Internal {
            split_dim,
            cut,
            left,
            right,
        } => {
            let (l, r) = current_interval(bounds, split_dim).split_at(cut);
            bounds.push((split_dim, l));
            collect_boxes(nodes, left, bounds, out);
            bounds.pop();
            bounds.push((split_dim, r));
            collect_boxes(nodes, right, bounds, out);
            bounds.pop();
        }
    }
}

/// A leaf value with its hyperrectangle. Only the dimensions split on the
/// leaf's root path are stored, sorted by dimension; every other axis spans
/// the full unit interval.
#[derive(Clone, Debug, PartialEq)]
pub struct LeafBox {
    pub mu: f64,
    pub bounds: Vec<(usize, Interval)>,
}

impl LeafBox {
    pub fn volume(&self) -> f64 {
        self.bounds.iter().map(|(_, iv)| iv.len()).product()
    }

    pub fn interval(&self, dim: usize) -> Interval {
        self.bounds
            .iter()
            .find(|(d, _)| *d == dim)
            .map(|(_, iv)| *iv)
            .unwrap_or(Interval::UNIT)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.bounds.iter().all(|(d, iv)| iv.contains(x[*d]))
    }
}

/// Sum of regression trees over `[0,1]^p`.
#[derive(Clone, Debug, PartialEq)]
pub struct Forest {
    p: usize,
    trees: Vec<Tree>,
}

impl Forest {
    pub fn new(p: usize, trees: Vec<Tree>) -> Result<Self> {
        for t in &trees {
            let need = t.min_dim();
            if need > p {
                return Err(Error::IndexOutOfRange { index: need - 1, p });
            }
        }
        Ok(Forest { p, trees })
    }

    /// Forest with no trees; evaluates to zero everywhere.
    pub fn empty(p: usize) -> Self {
        Forest {
            p,
            trees: Vec::new(),
        }
    }

    pub fn constant(p: usize, value: f64) -> Self {
        Forest {
            p,
            trees: vec![Tree::leaf(value)],
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn num_leaves(&self) -> usize {
        self.trees.iter().map(Tree::num_leaves).sum()
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                actual: x.len(),
            });
        }
        Ok(self.evaluate_unchecked(x))
    }

    pub(crate) fn evaluate_unchecked(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.evaluate(x)).sum()
    }

    /// The forest whose value is the sum of `self` and `other`.
    pub fn concat(&self, other: &Forest) -> Result<Forest> {
        if self.p != other.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                actual: other.p,
            });
        }
        let mut trees = self.trees.clone();
        trees.extend(other.trees.iter().cloned());
        Ok(Forest { p: self.p, trees })
    }

    pub fn scaled(&self, factor: f64) -> Forest {
        Forest {
            p: self.p,
            trees: self
                .trees
                .iter()
                .map(|t| t.map_leaves(|m| m * factor))
                .collect(),
        }
    }

    pub fn geometry(&self) -> ForestGeometry {
        ForestGeometry::new(self)
    }

    /// Exact integral under the uniform measure on the cube.
    pub fn mean(&self) -> f64 {
        self.trees
            .iter()
            .flat_map(|t| t.leaf_boxes())
            .map(|b| b.mu * b.volume())
            .sum()
    }

    /// Exact variance under the uniform measure, clamped at zero.
    pub fn variance(&self) -> f64 {
        self.geometry().variance()
    }

    /// Exact `L2([0,1]^p)` distance to `other`.
    pub fn l2_distance(&self, other: &Forest) -> Result<f64> {
        let diff = self.concat(&other.scaled(-1.0))?;
        Ok(diff.geometry().second_moment().sqrt())
    }

    /// `sum_t max_k |mu_tk|`, an upper bound on the sup norm.
    pub fn sup_norm_bound(&self) -> f64 {
        self.trees
            .iter()
            .map(|t| t.leaf_values().fold(0.0_f64, |m, v| m.max(v.abs())))
            .sum()
    }
}

/// Affine map between raw and unit-scaled values: `scaled = (raw - offset) / scale`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineMap {
    pub offset: f64,
    pub scale: f64,
}

impl AffineMap {
    pub const IDENTITY: AffineMap = AffineMap {
        offset: 0.0,
        scale: 1.0,
    };

    pub fn to_scaled(&self, raw: f64) -> f64 {
        (raw - self.offset) / self.scale
    }

    pub fn to_raw(&self, scaled: f64) -> f64 {
        self.offset + self.scale * scaled
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Draw {
    pub forest: Forest,
    pub sigma2: f64,
}

/// Posterior draws in scaled-response units plus the scaling used at fit
/// time. Variance-type quantities convert to raw units by `y_scaling.scale^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorEnsemble {
    p: usize,
    draws: Vec<Draw>,
    x_scaling: Vec<AffineMap>,
    y_scaling: AffineMap,
}

impl PosteriorEnsemble {
    pub fn new(
        p: usize,
        draws: Vec<Draw>,
        x_scaling: Vec<AffineMap>,
        y_scaling: AffineMap,
    ) -> Result<Self> {
        if x_scaling.len() != p {
            return Err(Error::InvalidEnsemble(format!(
                "{} input scaling maps for p = {p}",
                x_scaling.len()
            )));
        }
        if !(y_scaling.scale.is_finite() && y_scaling.scale > 0.0) {
            return Err(Error::InvalidEnsemble(format!(
                "response scale {}",
                y_scaling.scale
            )));
        }
        if let Some(m) = x_scaling
            .iter()
            .find(|m| !(m.scale.is_finite() && m.scale > 0.0))
        {
            return Err(Error::InvalidEnsemble(format!("input scale {}", m.scale)));
        }
        for (i, d) in draws.iter().enumerate() {
            if d.forest.p() != p {
                return Err(Error::InvalidEnsemble(format!(
                    "draw {i} has p = {}",
                    d.forest.p()
                )));
            }
            if !(d.sigma2.is_finite() && d.sigma2 > 0.0) {
                return Err(Error::InvalidEnsemble(format!(
                    "draw {i} has sigma2 = {}",
                    d.sigma2
                )));
            }
        }
        Ok(PosteriorEnsemble {
            p,
            draws,
            x_scaling,
            y_scaling,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn draws(&self) -> &[Draw] {
        &self.draws
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn x_scaling(&self) -> &[AffineMap] {
        &self.x_scaling
    }

    pub fn y_scaling(&self) -> AffineMap {
        self.y_scaling
    }

    /// Posterior-mean prediction at a raw covariate vector, in raw units.
    pub fn predict_raw(&self, x_raw: &[f64]) -> Result<f64> {
        if x_raw.len() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                actual: x_raw.len(),
            });
        }
        if self.draws.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        let x: Vec<f64> = x_raw
            .iter()
            .zip(&self.x_scaling)
            .map(|(v, m)| m.to_scaled(*v).clamp(0.0, 1.0))
            .collect();
        let s: f64 = self
            .draws
            .iter()
            .map(|d| d.forest.evaluate_unchecked(&x))
            .sum();
        Ok(self.y_scaling.to_raw(s / self.draws.len() as f64))
    }
}
