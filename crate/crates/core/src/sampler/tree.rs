//! Mutable tree used inside the chain. Leaves keep the indices of the
//! training rows they contain so sufficient statistics never require a
//! full pass over the data.

use crate::forest::{Tree, TreeNode};

pub(crate) type NodeId = u32;

#[derive(Clone, Debug)]
pub(crate) enum Kind {
    Leaf {
        mu: f64,
        obs: Vec<u32>,
    },
    Internal {
        dim: u32,
        cut: f64,
        left: NodeId,
        right: NodeId,
    },
}

#[derive(Clone, Debug)]
pub(crate) struct Node {
    pub parent: Option<NodeId>,
    pub depth: u32,
    pub kind: Kind,
}

#[derive(Clone, Debug)]
pub(crate) struct GrowTree {
    nodes: Vec<Node>,
    free: Vec<NodeId>,
}

impl GrowTree {
    pub fn stump(mu: f64, obs: Vec<u32>) -> Self {
        GrowTree {
            nodes: vec![Node {
                parent: None,
                depth: 0,
                kind: Kind::Leaf { mu, obs },
            }],
            free: Vec::new(),
        }
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id as usize]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut Node {
        &mut self.nodes[id as usize]
    }

    fn live(&self) -> impl Iterator<Item = NodeId> + '_ {
        // walk from the root so freed slots are never visited
        let mut stack = vec![0 as NodeId];
        std::iter::from_fn(move || {
            let id = stack.pop()?;
            if let Kind::Internal { left, right, .. } = self.nodes[id as usize].kind {
                stack.push(right);
                stack.push(left);
            }
            Some(id)
        })
    }

    pub fn leaves(&self) -> Vec<NodeId> {
        self.live()
            .filter(|&id| matches!(self.node(id).kind, Kind::Leaf { .. }))
            .collect()
    }

    /// Internal nodes whose two children are both leaves.
    pub fn nogs(&self) -> Vec<NodeId> {
        self.live().filter(|&id| self.is_nog(id)).collect()
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        matches!(self.node(id).kind, Kind::Leaf { .. })
    }

    pub fn is_nog(&self, id: NodeId) -> bool {
        match self.node(id).kind {
            Kind::Internal { left, right, .. } => self.is_leaf(left) && self.is_leaf(right),
            Kind::Leaf { .. } => false,
        }
    }

    pub fn is_stump(&self) -> bool {
        self.is_leaf(0)
    }

    pub fn sibling(&self, id: NodeId) -> Option<NodeId> {
        let parent = self.node(id).parent?;
        match self.node(parent).kind {
            Kind::Internal { left, right, .. } => Some(if left == id { right } else { left }),
            Kind::Leaf { .. } => unreachable!("parent of a node is internal"),
        }
    }

    /// Constraints `(dim, lo, hi)` inherited by `id` from its ancestors,
    /// one entry per constrained dimension.
    pub fn bounds(&self, id: NodeId) -> Vec<(usize, f64, f64)> {
        let mut out: Vec<(usize, f64, f64)> = Vec::new();
        let mut child = id;
        while let Some(parent) = self.node(child).parent {
            if let Kind::Internal { dim, cut, left, .. } = self.node(parent).kind {
                let dim = dim as usize;
                let slot = match out.iter().position(|b| b.0 == dim) {
                    Some(k) => k,
                    None => {
                        out.push((dim, 0.0, 1.0));
                        out.len() - 1
                    }
                };
                if left == child {
                    out[slot].2 = out[slot].2.min(cut);
                } else {
                    out[slot].1 = out[slot].1.max(cut);
                }
            }
            child = parent;
        }
        out
    }

    fn alloc(&mut self, node: Node) -> NodeId {
        match self.free.pop() {
            Some(id) => {
                self.nodes[id as usize] = node;
                id
            }
            None => {
                self.nodes.push(node);
                (self.nodes.len() - 1) as NodeId
            }
        }
    }

    /// Turns leaf `id` into an internal node with two leaf children holding
    /// the given row sets; both children start at the parent's value.
    pub fn grow(
        &mut self,
        id: NodeId,
        dim: usize,
        cut: f64,
        left_obs: Vec<u32>,
        right_obs: Vec<u32>,
    ) {
        let (mu, depth) = match self.node(id) {
            Node {
                kind: Kind::Leaf { mu, .. },
                depth,
                ..
            } => (*mu, *depth),
            _ => panic!("grow on an internal node"),
        };
        let left = self.alloc(Node {
            parent: Some(id),
            depth: depth + 1,
            kind: Kind::Leaf { mu, obs: left_obs },
        });
        let right = self.alloc(Node {
            parent: Some(id),
            depth: depth + 1,
            kind: Kind::Leaf { mu, obs: right_obs },
        });
        self.node_mut(id).kind = Kind::Internal {
            dim: dim as u32,
            cut,
            left,
            right,
        };
    }

    /// Collapses nog node `id` back into a leaf holding both children's rows.
    pub fn prune(&mut self, id: NodeId) {
        let (left, right) = match self.node(id).kind {
            Kind::Internal { left, right, .. } => (left, right),
            Kind::Leaf { .. } => panic!("prune on a leaf"),
        };
        let take = |t: &mut Self, c: NodeId| match std::mem::replace(
            &mut t.node_mut(c).kind,
            Kind::Leaf {
                mu: 0.0,
                obs: Vec::new(),
            },
        ) {
            Kind::Leaf { mu, obs } => (mu, obs),
            Kind::Internal { .. } => panic!("prune on a non-nog node"),
        };
        let (mu, mut obs) = take(self, left);
        let (_, right_obs) = take(self, right);
        obs.extend(right_obs);
        self.free.push(left);
        self.free.push(right);
        self.node_mut(id).kind = Kind::Leaf { mu, obs };
    }

    /// Value at a point given in scaled coordinates.
    pub fn evaluate(&self, x: impl Fn(usize) -> f64) -> f64 {
        let mut id = 0;
        loop {
            match self.node(id).kind {
                Kind::Leaf { mu, .. } => return mu,
                Kind::Internal {
                    dim,
                    cut,
                    left,
                    right,
                } => id = if x(dim as usize) < cut { left } else { right },
            }
        }
    }

    pub fn to_tree(&self) -> Tree {
        fn emit(t: &GrowTree, id: NodeId, out: &mut Vec<TreeNode>) -> usize {
            let here = out.len();
            match t.node(id).kind {
                Kind::Leaf { mu, .. } => out.push(TreeNode::Leaf { mu }),
                Kind::Internal {
                    dim,
                    cut,
                    left,
                    right,
                } => {
                    out.push(TreeNode::Leaf { mu: 0.0 });
                    let l = emit(t, left, out);
                    let r = emit(t, right, out);
                    out[here] = TreeNode::Internal {
                        split_dim: dim as usize,
                        cut,
                        left: l,
                        right: r,
                    };
                }
            }
            here
        }
        let mut nodes = Vec::new();
        emit(self, 0, &mut nodes);
        Tree::from_nodes(nodes).expect("chain trees respect the split-net")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grow_and_prune_round_trip() {
        let mut t = GrowTree::stump(1.5, vec![0, 1, 2, 3]);
        assert!(t.is_stump());
        t.grow(0, 1, 0.5, vec![0, 2], vec![1, 3]);
        assert_eq!(t.leaves().len(), 2);
        assert_eq!(t.nogs(), vec![0]);
        let l = t.leaves()[0];
        assert_eq!(t.bounds(l), vec![(1, 0.0, 0.5)]);
        t.grow(l, 1, 0.25, vec![0], vec![2]);
        let deep = t.leaves()[1];
        assert_eq!(t.bounds(deep), vec![(1, 0.25, 0.5)]);
        assert_eq!(t.node(deep).depth, 2);
        assert_eq!(t.nogs(), vec![l]);
        let tree = t.to_tree();
        assert_eq!(tree.num_leaves(), 3);
        t.prune(l);
        t.prune(0);
        assert!(t.is_stump());
        match &t.node(0).kind {
            Kind::Leaf { obs, .. } => {
                let mut o = obs.clone();
                o.sort();
                assert_eq!(o, vec![0, 1, 2, 3]);
            }
            Kind::Internal { .. } => panic!(),
        }
    }
}
