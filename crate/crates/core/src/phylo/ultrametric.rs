//! Ultrametric matrices, their torus embedding, conversions to and from
//! equidistant trees, and nesting predicates.

use std::collections::BTreeSet;

use thiserror::Error;

use super::{Node, PhyloTree};
use crate::torus::{GeometryError, TorusPoint};

#[derive(Debug, Error, PartialEq)]
pub enum PhyloError {
    #[error("need at least {1} taxa, got {0}")]
    TooFewTaxa(usize, usize),
    #[error("tree is not equidistant: leaf depths spread {0} exceeds tolerance")]
    NotEquidistant(f64),
    #[error("matrix is not square")]
    NotSquare,
    #[error("matrix is not symmetric at ({0}, {1})")]
    Asymmetric(usize, usize),
    #[error("matrix has a non-zero diagonal entry at {0}")]
    NonzeroDiagonal(usize),
    #[error("matrix violates the ultrametric three-point condition")]
    NotUltrametric,
    #[error("unknown taxon '{0}'")]
    UnknownTaxon(String),
    #[error("nesting sides must be disjoint and non-empty")]
    BadNesting,
    #[error("cannot stretch pendant edge of leaf '{0}' to a positive length")]
    NormalizationFailed(String),
    #[error("leaves must all be labelled")]
    UnlabelledLeaf,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A symmetric zero-diagonal distance matrix over a sorted taxa list,
/// stored as the upper triangle in lexicographic pair order. That flat
/// vector is also its torus embedding of dimension `C(n,2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UltrametricMatrix {
    taxa: Vec<String>,
    d: Vec<f64>,
}

impl UltrametricMatrix {
    /// Builds from a full matrix whose rows follow `taxa` order. The taxa
    /// are sorted internally; entries are permuted to match.
    pub fn from_full(taxa: Vec<String>, full: &[Vec<f64>]) -> Result<Self, PhyloError> {
        let k = taxa.len();
        if k < 2 {
            return Err(PhyloError::TooFewTaxa(k, 2));
        }
        if full.len() != k || full.iter().any(|row| row.len() != k) {
            return Err(PhyloError::NotSquare);
        }
        for i in 0..k {
            if full[i][i] != 0.0 {
                return Err(PhyloError::NonzeroDiagonal(i));
            }
            for j in (i + 1)..k {
                if (full[i][j] - full[j][i]).abs() > 1e-12 {
                    return Err(PhyloError::Asymmetric(i, j));
                }
            }
        }
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| taxa[a].cmp(&taxa[b]));
        let sorted_taxa: Vec<String> = order.iter().map(|&i| taxa[i].clone()).collect();
        let mut d = Vec::with_capacity(k * (k - 1) / 2);
        for i in 0..k {
            for j in (i + 1)..k {
                d.push(full[order[i]][order[j]]);
            }
        }
        Ok(Self {
            taxa: sorted_taxa,
            d,
        })
    }

    /// Reassembles a matrix from its torus-point image. The point dimension
    /// must be `C(taxa, 2)`.
    pub fn from_torus_point(taxa: Vec<String>, point: &TorusPoint) -> Result<Self, PhyloError> {
        let k = taxa.len();
        if k < 3 {
            return Err(PhyloError::TooFewTaxa(k, 3));
        }
        let expect = k * (k - 1) / 2;
        if point.dim() != expect {
            return Err(PhyloError::Geometry(GeometryError::DimensionMismatch(
                point.dim(),
                expect,
            )));
        }
        let mut taxa = taxa;
        taxa.sort();
        Ok(Self {
            taxa,
            d: point.coords().to_vec(),
        })
    }

    pub fn n_taxa(&self) -> usize {
        self.taxa.len()
    }

    pub fn taxa(&self) -> &[String] {
        &self.taxa
    }

    fn pair_index(&self, i: usize, j: usize) -> usize {
        let k = self.taxa.len();
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        i * k - i * (i + 1) / 2 + (j - i - 1)
    }

    /// Distance between taxa `i` and `j` (indices into the sorted taxa).
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        self.d[self.pair_index(i, j)]
    }

    pub fn index_of(&self, taxon: &str) -> Result<usize, PhyloError> {
        self.taxa
            .binary_search_by(|t| t.as_str().cmp(taxon))
            .map_err(|_| PhyloError::UnknownTaxon(taxon.to_string()))
    }

    /// The flat upper triangle as a torus point of dimension `C(n,2)`.
    pub fn to_torus_point(&self) -> Result<TorusPoint, PhyloError> {
        if self.taxa.len() < 3 {
            return Err(PhyloError::TooFewTaxa(self.taxa.len(), 3));
        }
        Ok(TorusPoint::new(self.d.clone())?)
    }

    /// Three-point condition `D_ij <= max(D_ik, D_kj)` on all triples
    /// within `eps`.
    pub fn is_ultrametric(&self, eps: f64) -> bool {
        let k = self.taxa.len();
        for i in 0..k {
            for j in (i + 1)..k {
                let dij = self.get(i, j);
                for l in 0..k {
                    if l == i || l == j {
                        continue;
                    }
                    if dij > self.get(i, l).max(self.get(l, j)) + eps {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Largest distance within the taxa subset (0 for singletons).
    fn max_within(&self, ids: &[usize]) -> f64 {
        let mut m: f64 = 0.0;
        for (a, &i) in ids.iter().enumerate() {
            for &j in &ids[a + 1..] {
                m = m.max(self.get(i, j));
            }
        }
        m
    }
}

/// Validates a full square matrix and runs the three-point condition.
/// Asymmetric or non-zero-diagonal inputs are errors, not `false`.
pub fn is_ultrametric(full: &[Vec<f64>], eps: f64) -> Result<bool, PhyloError> {
    let k = full.len();
    if full.iter().any(|row| row.len() != k) {
        return Err(PhyloError::NotSquare);
    }
    for i in 0..k {
        if full[i][i] != 0.0 {
            return Err(PhyloError::NonzeroDiagonal(i));
        }
        for j in (i + 1)..k {
            if (full[i][j] - full[j][i]).abs() > 1e-12 {
                return Err(PhyloError::Asymmetric(i, j));
            }
        }
    }
    for i in 0..k {
        for j in 0..k {
            for l in 0..k {
                if full[i][j] > full[i][l].max(full[l][j]) + eps {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Two disjoint taxa subsets; `A < B` holds in a tree when the most recent
/// common ancestor of `A` sits strictly below the one of `A ∪ B`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Nesting {
    a: BTreeSet<String>,
    b: BTreeSet<String>,
}

impl Nesting {
    pub fn new<I, J, S, T>(a: I, b: J) -> Result<Self, PhyloError>
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: Into<String>,
        T: Into<String>,
    {
        let a: BTreeSet<String> = a.into_iter().map(Into::into).collect();
        let b: BTreeSet<String> = b.into_iter().map(Into::into).collect();
        if a.is_empty() || b.is_empty() || a.intersection(&b).next().is_some() {
            return Err(PhyloError::BadNesting);
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &BTreeSet<String> {
        &self.a
    }

    pub fn b(&self) -> &BTreeSet<String> {
        &self.b
    }
}

/// Whether the matrix displays the nesting: strict inequality
/// `max over A pairs < max over (A ∪ B) pairs`, with margin `eps`.
pub fn has_nesting(
    um: &UltrametricMatrix,
    nest: &Nesting,
    eps: f64,
) -> Result<bool, PhyloError> {
    let a_ids: Vec<usize> = nest
        .a
        .iter()
        .map(|t| um.index_of(t))
        .collect::<Result<_, _>>()?;
    let mut ab_ids = a_ids.clone();
    for t in &nest.b {
        ab_ids.push(um.index_of(t)?);
    }
    let inner = um.max_within(&a_ids);
    let outer = um.max_within(&ab_ids);
    Ok(inner + eps < outer)
}

/// Leaf-to-leaf path-length matrix of an equidistant tree.
pub fn tree_to_ultrametric(tree: &PhyloTree, eps: f64) -> Result<UltrametricMatrix, PhyloError> {
    let leaves = tree.leaf_ids();
    if leaves.len() < 2 {
        return Err(PhyloError::TooFewTaxa(leaves.len(), 2));
    }
    for &l in &leaves {
        if tree.nodes[l].label.is_none() {
            return Err(PhyloError::UnlabelledLeaf);
        }
    }
    let depth = tree.depths();
    let spread = {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &l in &leaves {
            lo = lo.min(depth[l]);
            hi = hi.max(depth[l]);
        }
        hi - lo
    };
    if spread > eps {
        return Err(PhyloError::NotEquidistant(spread));
    }

    // ancestor chains for pairwise LCA depths; trees here are small
    let chain = |mut u: usize| -> Vec<usize> {
        let mut c = vec![u];
        while let Some(p) = tree.nodes[u].parent {
            c.push(p);
            u = p;
        }
        c
    };
    let chains: Vec<Vec<usize>> = leaves.iter().map(|&l| chain(l)).collect();

    let k = leaves.len();
    let mut full = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let set: std::collections::HashSet<usize> = chains[i].iter().copied().collect();
            let lca = *chains[j]
                .iter()
                .find(|u| set.contains(u))
                .expect("root is a common ancestor");
            let dij = depth[leaves[i]] + depth[leaves[j]] - 2.0 * depth[lca];
            full[i][j] = dij;
            full[j][i] = dij;
        }
    }
    let taxa: Vec<String> = leaves
        .iter()
        .map(|&l| tree.nodes[l].label.clone().unwrap())
        .collect();
    UltrametricMatrix::from_full(taxa, &full)
}

/// Rebuilds the equidistant tree from an ultrametric matrix by
/// agglomeration: repeatedly merge the closest pair of clusters at half
/// their distance, joining merged clusters to the rest at the larger of the
/// two distances. Internal edges shorter than `eps` are contracted into
/// multifurcations, which makes the construction exactly inverse to
/// [`tree_to_ultrametric`] on canonical forms.
pub fn ultrametric_to_tree(um: &UltrametricMatrix, eps: f64) -> Result<PhyloTree, PhyloError> {
    if !um.is_ultrametric(eps) {
        return Err(PhyloError::NotUltrametric);
    }
    let k = um.n_taxa();
    let mut nodes: Vec<Node> = um
        .taxa
        .iter()
        .map(|t| Node {
            parent: None,
            children: Vec::new(),
            label: Some(t.clone()),
            edge: 0.0,
        })
        .collect();

    // active clusters: (node id, height); dist kept as a full mutable matrix
    let mut active: Vec<(usize, f64)> = (0..k).map(|i| (i, 0.0)).collect();
    let mut dist = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            dist[i][j] = um.get(i, j);
        }
    }

    while active.len() > 1 {
        let (mut bi, mut bj) = (0, 1);
        for i in 0..active.len() {
            for j in (i + 1)..active.len() {
                if dist[i][j] < dist[bi][bj] {
                    (bi, bj) = (i, j);
                }
            }
        }
        let h = dist[bi][bj] / 2.0;
        let id = nodes.len();
        let (ci, hi) = active[bi];
        let (cj, hj) = active[bj];
        nodes.push(Node {
            parent: None,
            children: vec![ci, cj],
            label: None,
            edge: 0.0,
        });
        nodes[ci].parent = Some(id);
        nodes[ci].edge = (h - hi).max(0.0);
        nodes[cj].parent = Some(id);
        nodes[cj].edge = (h - hj).max(0.0);

        // merged cluster joins others at the larger distance, which keeps
        // merge heights monotone even for eps-perturbed inputs
        let merged: Vec<f64> = (0..active.len())
            .map(|l| dist[bi][l].max(dist[bj][l]))
            .collect();
        for l in 0..active.len() {
            dist[bi][l] = merged[l];
            dist[l][bi] = merged[l];
        }
        dist[bi][bi] = 0.0;
        active[bi] = (id, h);
        active.remove(bj);
        for row in dist.iter_mut() {
            row.remove(bj);
        }
        dist.remove(bj);
    }

    let root = active[0].0;
    let mut tree = PhyloTree { nodes, root };
    contract_short_internal_edges(&mut tree, eps);
    Ok(tree)
}

/// Merges internal nodes into their parent when the connecting edge is at
/// most `eps` long, absorbing the edge into the grandchildren so path
/// lengths are preserved exactly.
fn contract_short_internal_edges(tree: &mut PhyloTree, eps: f64) {
    loop {
        let mut target = None;
        'search: for u in 0..tree.nodes.len() {
            if u == tree.root || tree.nodes[u].children.is_empty() {
                continue;
            }
            if tree.nodes[u].edge <= eps && tree.nodes[u].parent.is_some() {
                target = Some(u);
                break 'search;
            }
        }
        let Some(u) = target else {
            return;
        };
        let parent = tree.nodes[u].parent.unwrap();
        let absorbed = tree.nodes[u].edge;
        let children = std::mem::take(&mut tree.nodes[u].children);
        let slot = tree.nodes[parent]
            .children
            .iter()
            .position(|&c| c == u)
            .expect("child listed under parent");
        tree.nodes[parent].children.remove(slot);
        for &c in &children {
            tree.nodes[c].parent = Some(parent);
            tree.nodes[c].edge += absorbed;
            tree.nodes[parent].children.push(c);
        }
        tree.nodes[u].parent = None; // detached; arena slot goes unused
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phylo::newick::{parse_newick, write_newick};

    #[test]
    fn three_leaf_matrix() {
        let t = parse_newick("((a:1,b:1):1,c:2);").unwrap();
        let um = tree_to_ultrametric(&t, 1e-9).unwrap();
        assert_eq!(um.taxa(), &["a", "b", "c"]);
        assert_eq!(um.get(0, 1), 2.0);
        assert_eq!(um.get(0, 2), 4.0);
        assert_eq!(um.get(1, 2), 4.0);
        assert!(um.is_ultrametric(1e-9));
    }

    #[test]
    fn cherry_matrix() {
        let t = parse_newick("(a:1,b:1);").unwrap();
        let um = tree_to_ultrametric(&t, 1e-9).unwrap();
        assert_eq!(um.get(0, 1), 2.0);
    }

    #[test]
    fn star_tree_matrix() {
        let t = parse_newick("(a:1.5,b:1.5,c:1.5,d:1.5);").unwrap();
        let um = tree_to_ultrametric(&t, 1e-9).unwrap();
        for i in 0..4 {
            for j in (i + 1)..4 {
                assert_eq!(um.get(i, j), 3.0);
            }
        }
    }

    #[test]
    fn non_equidistant_rejected() {
        let t = parse_newick("((a:1,b:2):1,c:2);").unwrap();
        assert!(matches!(
            tree_to_ultrametric(&t, 1e-9),
            Err(PhyloError::NotEquidistant(_))
        ));
    }

    #[test]
    fn is_ultrametric_free_function() {
        let good = vec![
            vec![0.0, 2.0, 4.0],
            vec![2.0, 0.0, 4.0],
            vec![4.0, 4.0, 0.0],
        ];
        assert!(is_ultrametric(&good, 1e-9).unwrap());
        let bad = vec![
            vec![0.0, 1.0, 2.0],
            vec![1.0, 0.0, 4.0],
            vec![2.0, 4.0, 0.0],
        ];
        assert!(!is_ultrametric(&bad, 1e-9).unwrap());
        let asym = vec![vec![0.0, 1.0], vec![2.0, 0.0]];
        assert!(matches!(
            is_ultrametric(&asym, 1e-9),
            Err(PhyloError::Asymmetric(0, 1))
        ));
        let diag = vec![vec![1.0, 1.0], vec![1.0, 0.0]];
        assert!(matches!(
            is_ultrametric(&diag, 1e-9),
            Err(PhyloError::NonzeroDiagonal(0))
        ));
        let constant = vec![
            vec![0.0, 3.0, 3.0],
            vec![3.0, 0.0, 3.0],
            vec![3.0, 3.0, 0.0],
        ];
        assert!(is_ultrametric(&constant, 1e-9).unwrap());
    }

    #[test]
    fn agglomeration_recovers_tree() {
        let text = "((a:1,b:1):1,c:2);";
        let um = tree_to_ultrametric(&parse_newick(text).unwrap(), 1e-9).unwrap();
        let rebuilt = ultrametric_to_tree(&um, 1e-9).unwrap();
        assert_eq!(write_newick(&rebuilt), text);
    }

    #[test]
    fn agglomeration_two_taxa() {
        let um = UltrametricMatrix::from_full(
            vec!["a".into(), "b".into()],
            &[vec![0.0, 3.0], vec![3.0, 0.0]],
        )
        .unwrap();
        let t = ultrametric_to_tree(&um, 1e-9).unwrap();
        assert_eq!(write_newick(&t), "(a:1.5,b:1.5);");
    }

    #[test]
    fn agglomeration_star_contracts_ties() {
        let t = parse_newick("(a:2,b:2,c:2,d:2);").unwrap();
        let um = tree_to_ultrametric(&t, 1e-9).unwrap();
        let rebuilt = ultrametric_to_tree(&um, 1e-6).unwrap();
        assert_eq!(write_newick(&rebuilt), "(a:2,b:2,c:2,d:2);");
    }

    #[test]
    fn rejects_non_ultrametric_input() {
        let um = UltrametricMatrix::from_full(
            vec!["a".into(), "b".into(), "c".into()],
            &[
                vec![0.0, 1.0, 2.0],
                vec![1.0, 0.0, 4.0],
                vec![2.0, 4.0, 0.0],
            ],
        )
        .unwrap();
        assert_eq!(
            ultrametric_to_tree(&um, 1e-9).unwrap_err(),
            PhyloError::NotUltrametric
        );
    }

    #[test]
    fn nesting_examples() {
        let t = parse_newick("((a:1,b:1):1,c:2);").unwrap();
        let um = tree_to_ultrametric(&t, 1e-9).unwrap();
        let ab_c = Nesting::new(["a", "b"], ["c"]).unwrap();
        assert!(has_nesting(&um, &ab_c, 1e-9).unwrap());
        let ac_b = Nesting::new(["a", "c"], ["b"]).unwrap();
        assert!(!has_nesting(&um, &ac_b, 1e-9).unwrap());
        // singleton A nests below any positive-diameter union
        let a_c = Nesting::new(["a"], ["c"]).unwrap();
        assert!(has_nesting(&um, &a_c, 1e-9).unwrap());
    }

    #[test]
    fn nesting_validation() {
        assert_eq!(
            Nesting::new(["a"], ["a", "b"]).unwrap_err(),
            PhyloError::BadNesting
        );
        assert_eq!(
            Nesting::new(Vec::<String>::new(), vec!["b".to_string()]).unwrap_err(),
            PhyloError::BadNesting
        );
        let t = parse_newick("((a:1,b:1):1,c:2);").unwrap();
        let um = tree_to_ultrametric(&t, 1e-9).unwrap();
        let unknown = Nesting::new(["a", "z"], ["c"]).unwrap();
        assert!(matches!(
            has_nesting(&um, &unknown, 1e-9),
            Err(PhyloError::UnknownTaxon(_))
        ));
    }

    #[test]
    fn torus_roundtrip() {
        let t = parse_newick("((a:1,b:1):1,c:2);").unwrap();
        let um = tree_to_ultrametric(&t, 1e-9).unwrap();
        let p = um.to_torus_point().unwrap();
        let back = UltrametricMatrix::from_torus_point(um.taxa().to_vec(), &p).unwrap();
        assert_eq!(um, back);
    }
}
