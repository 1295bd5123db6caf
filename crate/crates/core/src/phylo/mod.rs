//! Phylogenetic layer: rooted equidistant trees, Newick interchange,
//! ultrametric matrices, nestings, and tropically convex consensus methods.
//!
//! An equidistant tree (all root-to-leaf path lengths equal) is the same
//! data as an ultrametric distance matrix on its taxa, and the space of
//! ultrametrics on a fixed taxa set embeds into the tropical projective
//! torus of dimension `C(n,2)`. That embedding is what lets the location
//! solvers act as consensus methods whose output is again a tree.

mod consensus;
mod newick;
mod ultrametric;

pub use consensus::{
    consensus, majority_absence_threshold, majority_threshold, ConsensusError, ConsensusMethod,
    ConsensusOptions, ConsensusOutcome,
};
pub use newick::{parse_newick, write_newick, NewickError};
pub use ultrametric::{
    has_nesting, is_ultrametric, tree_to_ultrametric, ultrametric_to_tree, Nesting, PhyloError,
    UltrametricMatrix,
};

/// Tolerance for equidistance and ultrametric checks. Looser than the core
/// geometric tolerance because solver outputs carry iteration error.
pub const PHYLO_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Node {
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub label: Option<String>,
    /// Length of the edge to the parent; 0 for the root.
    pub edge: f64,
}

/// A rooted tree with labelled leaves and weighted edges, stored in an
/// arena. Leaf labels are unique.
#[derive(Debug, Clone, PartialEq)]
pub struct PhyloTree {
    pub(crate) nodes: Vec<Node>,
    pub(crate) root: usize,
}

impl PhyloTree {
    pub(crate) fn leaf_ids(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].children.is_empty() && self.reachable(i))
            .collect()
    }

    fn reachable(&self, mut i: usize) -> bool {
        loop {
            match self.nodes[i].parent {
                Some(p) => i = p,
                None => return i == self.root,
            }
        }
    }

    /// Leaf labels in lexicographic order.
    pub fn taxa(&self) -> Vec<String> {
        let mut labels: Vec<String> = self
            .leaf_ids()
            .iter()
            .filter_map(|&i| self.nodes[i].label.clone())
            .collect();
        labels.sort();
        labels
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_ids().len()
    }

    /// Distance from the root to every node.
    pub(crate) fn depths(&self) -> Vec<f64> {
        let mut depth = vec![0.0; self.nodes.len()];
        let mut stack = vec![self.root];
        while let Some(u) = stack.pop() {
            for &c in &self.nodes[u].children {
                depth[c] = depth[u] + self.nodes[c].edge;
                stack.push(c);
            }
        }
        depth
    }

    /// Whether all root-to-leaf path lengths agree within `eps`.
    pub fn is_equidistant(&self, eps: f64) -> bool {
        let depth = self.depths();
        let leaves = self.leaf_ids();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &l in &leaves {
            lo = lo.min(depth[l]);
            hi = hi.max(depth[l]);
        }
        hi - lo <= eps
    }

    /// The common root-to-leaf height (maximum over leaves).
    pub fn height(&self) -> f64 {
        let depth = self.depths();
        self.leaf_ids()
            .iter()
            .map(|&l| depth[l])
            .fold(0.0, f64::max)
    }

    /// Stretches pendant edges so every leaf sits at the maximum depth.
    /// This is an explicit opt-in repair for almost-equidistant inputs; it
    /// fails if some pendant edge would have to become non-positive.
    pub fn normalize_heights(&mut self) -> Result<(), PhyloError> {
        let depth = self.depths();
        let leaves = self.leaf_ids();
        let target = leaves.iter().map(|&l| depth[l]).fold(0.0, f64::max);
        for &l in &leaves {
            let stretched = self.nodes[l].edge + (target - depth[l]);
            if stretched <= 0.0 {
                return Err(PhyloError::NormalizationFailed(
                    self.nodes[l].label.clone().unwrap_or_default(),
                ));
            }
            self.nodes[l].edge = stretched;
        }
        Ok(())
    }
}
