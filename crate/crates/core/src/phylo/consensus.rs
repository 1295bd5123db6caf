//! Tropically convex consensus methods for equidistant trees.
//!
//! Input trees become ultrametric points in the torus of dimension
//! `C(n,2)`; a location solver produces an optimum that is guaranteed to
//! lie in the max-tropical hull of the inputs, hence is itself ultrametric
//! and converts back to a tree. Membership in the hull is also what makes
//! these methods Pareto and co-Pareto on nestings.

use serde::Serialize;
use thiserror::Error;

use super::ultrametric::{tree_to_ultrametric, ultrametric_to_tree, PhyloError, UltrametricMatrix};
use super::{PhyloTree, PHYLO_EPS};
use crate::gauge::{Aggregator, GaugeKind};
use crate::solve::{
    regularizer_at_center, solve_center, solve_fw_simplex_gauge_regularized,
    solve_fw_symmetric_regularized, solve_subgradient, LocationProblem, SolveError,
    SubgradientOptions,
};
use crate::torus::{in_hull_max, GeometryError, PointCloud, TorusPoint, EPS};

#[derive(Debug, Error)]
pub enum ConsensusError {
    #[error("consensus needs at least one tree")]
    NoTrees,
    #[error("consensus needs at least 3 taxa, got {0}")]
    TooFewTaxa(usize),
    #[error("input trees must share one taxa set; tree {0} differs")]
    TaxaMismatch(usize),
    #[error("input tree {0} is not equidistant (pass the height normalization flag to repair)")]
    NotEquidistant(usize),
    #[error("solver did not converge")]
    SolverDidNotConverge,
    #[error("consensus optimum failed the ultrametric check; this is a solver bug")]
    ResultNotUltrametric,
    #[error(transparent)]
    Phylo(#[from] PhyloError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Which location statistic drives the consensus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "method", content = "lambda")]
pub enum ConsensusMethod {
    /// Fermat-Weber under the asymmetric tropical distance (exact LP).
    Median,
    /// Minimizer of the largest asymmetric distance (closed form).
    Center,
    /// Minimizer of the summed squared symmetric distances (subgradient).
    Frechet,
    /// Symmetric Fermat-Weber with a tropical-L^1 pull of the given weight
    /// toward the center (exact LP). Weights below 1 leave the optimum an
    /// exact symmetric Fermat-Weber point.
    FwSymRegularized(f64),
}

impl Default for ConsensusMethod {
    fn default() -> Self {
        ConsensusMethod::FwSymRegularized(0.5)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConsensusOptions {
    /// Tolerance for equidistance and ultrametric checks.
    pub eps: f64,
    /// Stretch pendant edges of almost-equidistant inputs instead of
    /// rejecting them.
    pub normalize_heights: bool,
}

impl Default for ConsensusOptions {
    fn default() -> Self {
        Self {
            eps: PHYLO_EPS,
            normalize_heights: false,
        }
    }
}

/// Consensus result plus the diagnostics callers are expected to check.
#[derive(Debug, Clone)]
pub struct ConsensusOutcome {
    pub tree: PhyloTree,
    pub matrix: UltrametricMatrix,
    pub method: ConsensusMethod,
    /// Objective value of the underlying location problem at the optimum
    /// (without any regularization term).
    pub objective: f64,
    pub in_hull: bool,
    /// False when two solver routes landed on visibly different optima,
    /// i.e. the location problem has multiple minima. The returned
    /// representative is always the regularized / descended one.
    pub unique: bool,
    pub iterations: usize,
}

/// Runs the named consensus method over equidistant trees on one taxa set.
///
/// Duplicate input trees are folded into weights first, so duplicating the
/// whole input exactly preserves the output; taxa order cannot matter
/// because the embedding sorts taxa.
pub fn consensus(
    trees: &[PhyloTree],
    method: ConsensusMethod,
    options: &ConsensusOptions,
) -> Result<ConsensusOutcome, ConsensusError> {
    if trees.is_empty() {
        return Err(ConsensusError::NoTrees);
    }

    let mut matrices = Vec::with_capacity(trees.len());
    for (i, tree) in trees.iter().enumerate() {
        let tree = if options.normalize_heights {
            let mut t = tree.clone();
            t.normalize_heights()?;
            t
        } else {
            tree.clone()
        };
        let um = match tree_to_ultrametric(&tree, options.eps) {
            Ok(um) => um,
            Err(PhyloError::NotEquidistant(_)) => return Err(ConsensusError::NotEquidistant(i)),
            Err(e) => return Err(e.into()),
        };
        matrices.push(um);
    }
    let taxa = matrices[0].taxa().to_vec();
    if taxa.len() < 3 {
        return Err(ConsensusError::TooFewTaxa(taxa.len()));
    }
    for (i, um) in matrices.iter().enumerate() {
        if um.taxa() != taxa.as_slice() {
            return Err(ConsensusError::TaxaMismatch(i));
        }
    }

    let points: Vec<TorusPoint> = matrices
        .iter()
        .map(|um| um.to_torus_point())
        .collect::<Result<_, _>>()?;
    let (sites, weights) = dedupe_weighted(points)?;
    let dim = sites.dim();

    let (optimum, objective, unique, iterations) = match method {
        ConsensusMethod::Center => {
            let report = solve_center(&sites)?;
            (report.optimum, report.objective, true, report.iterations)
        }
        ConsensusMethod::Median => {
            // Small enough regularization keeps the result an exact median
            // while selecting a canonical point of the median set.
            let lambda_sel = 0.5 / dim as f64;
            let ones = vec![1.0; dim];
            let reg = regularizer_at_center(&sites, lambda_sel)?;
            let selected =
                solve_fw_simplex_gauge_regularized(&sites, &weights, &ones, Some(&reg))?;
            let plain = solve_fw_simplex_gauge_regularized(&sites, &weights, &ones, None)?;
            let unique = selected.optimum.class_eq(&plain.optimum, 1e-6);
            (
                selected.optimum,
                selected.objective,
                unique,
                selected.iterations + plain.iterations,
            )
        }
        ConsensusMethod::FwSymRegularized(lambda) => {
            let reg = regularizer_at_center(&sites, lambda)?;
            let selected = solve_fw_symmetric_regularized(&sites, &weights, Some(&reg))?;
            let plain = solve_fw_symmetric_regularized(&sites, &weights, None)?;
            let unique = selected.optimum.class_eq(&plain.optimum, 1e-6);
            (
                selected.optimum,
                selected.objective,
                unique,
                selected.iterations + plain.iterations,
            )
        }
        ConsensusMethod::Frechet => {
            let problem = LocationProblem::uniform(
                sites.clone(),
                GaugeKind::TropLp(f64::INFINITY),
                Aggregator::WeightedSum(weights.clone()),
            )
            .map(|p| p)?;
            // SumSquares over d_sym, weighted by multiplicities: encode the
            // squares through the aggregator on the same gauges.
            let problem = LocationProblem::new(
                problem.sites().clone(),
                problem.gauges().to_vec(),
                weighted_sum_squares(&weights),
            )?;
            let start_center = solve_center(&sites)?.optimum;
            let opts = SubgradientOptions::default();
            let a = solve_subgradient(&problem, &start_center, &opts)?;
            let b = solve_subgradient(&problem, sites.get(0), &opts)?;
            if !a.converged && !b.converged {
                return Err(ConsensusError::SolverDidNotConverge);
            }
            let unique = a.optimum.class_eq(&b.optimum, 1e-4);
            let best = if a.objective <= b.objective { a } else { b };
            (best.optimum, best.objective, unique, best.iterations)
        }
    };

    let in_hull = in_hull_max(&sites, &optimum, EPS)?;
    let pinned = pin_to_witness_shift(&sites, &optimum)?;
    let matrix = UltrametricMatrix::from_torus_point(taxa, &pinned)?;
    if !matrix.is_ultrametric(options.eps) {
        return Err(ConsensusError::ResultNotUltrametric);
    }
    let tree = ultrametric_to_tree(&matrix, options.eps)?;
    Ok(ConsensusOutcome {
        tree,
        matrix,
        method,
        objective,
        in_hull,
        unique,
        iterations,
    })
}

fn weighted_sum_squares(weights: &[f64]) -> Aggregator {
    // sum_i w_i d_i^2 is not a stock aggregator; WeightedSum over squared
    // gauges would change the gauge class, so square through the chain rule
    // instead by composing with SumSquares of scaled values: w d^2 =
    // (sqrt(w) d)^2. Scaling a gauge by sqrt(w) keeps it a gauge, but the
    // per-site gauges are shared; use explicit weights in the aggregator.
    Aggregator::WeightedSumSquares(weights.to_vec())
}

/// Folds duplicate points into multiplicity weights normalized to sum 1,
/// so that duplicating every input reproduces the exact same problem.
fn dedupe_weighted(points: Vec<TorusPoint>) -> Result<(PointCloud, Vec<f64>), GeometryError> {
    let mut reps: Vec<TorusPoint> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for p in points {
        match reps.iter().position(|r| r.class_eq(&p, 1e-12)) {
            Some(i) => counts[i] += 1,
            None => {
                reps.push(p);
                counts.push(1);
            }
        }
    }
    let total: usize = counts.iter().sum();
    let weights = counts
        .into_iter()
        .map(|c| c as f64 / total as f64)
        .collect();
    Ok((PointCloud::new(reps)?, weights))
}

/// Chooses the representative of a hull member whose largest witness shift
/// is zero: `x - max_i min_j (x_j - v_ij)`. The result dominates one input
/// coordinatewise, so its entries stay positive for distance matrices.
fn pin_to_witness_shift(
    sites: &PointCloud,
    x: &TorusPoint,
) -> Result<TorusPoint, GeometryError> {
    let mut largest = f64::NEG_INFINITY;
    for v in sites.iter() {
        let d = x.diff(v)?;
        let m = d.iter().copied().fold(f64::INFINITY, f64::min);
        largest = largest.max(m);
    }
    Ok(x.shifted(-largest))
}

/// Supermajority bound for the tropical median consensus: a nesting present
/// in more than `1 - 1/C(n,2)` of the inputs appears in the consensus.
pub fn majority_threshold(n_taxa: usize) -> Result<f64, PhyloError> {
    if n_taxa < 3 {
        return Err(PhyloError::TooFewTaxa(n_taxa, 3));
    }
    let pairs = (n_taxa * (n_taxa - 1) / 2) as f64;
    Ok(1.0 - 1.0 / pairs)
}

/// Dual bound: a nesting present in less than `1/C(n,2)` of the inputs is
/// absent from the median consensus.
pub fn majority_absence_threshold(n_taxa: usize) -> Result<f64, PhyloError> {
    if n_taxa < 3 {
        return Err(PhyloError::TooFewTaxa(n_taxa, 3));
    }
    let pairs = (n_taxa * (n_taxa - 1) / 2) as f64;
    Ok(1.0 / pairs)
}
