//! Location-problem solvers.
//!
//! Exact LP routes cover the piecewise-linear objectives (tropical center,
//! simplex-gauge Fermat-Weber, symmetric Fermat-Weber), a projected
//! subgradient method covers the general convex ones (Frechet means), and a
//! multi-start coordinate descent covers best-fit hyperplanes. Every solver
//! finishes with the elementary descent-to-hull post-processing step, so the
//! reported optimum always lies in the max-tropical convex hull of the sites.

use serde::Serialize;
use thiserror::Error;

use crate::gauge::{Aggregator, Gauge, GaugeError, GaugeKind};
use crate::lp::{simplex_solve, LinearProgram, LpError};
use crate::torus::{
    d_asym, d_sym, descent_set, in_hull_max, GeometryError, PointCloud, TorusPoint, EPS,
};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Gauge(#[from] GaugeError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("gauge count {0} does not match site count {1}")]
    GaugeCount(usize, usize),
    #[error("gauge kernels must coincide with their sites")]
    KernelSiteMismatch,
    #[error("regularization weight must be positive, got {0}")]
    InvalidLambda(f64),
    #[error("regularizer kernel lies outside the max-tropical hull of the sites")]
    KernelOutsideHull,
    #[error("weights must be positive and match the site count")]
    InvalidWeights,
    #[error("the subgradient solver requires convex gauge kinds and aggregator")]
    NonConvexProblem,
    #[error("solver returned a point outside the hull; this is a bug")]
    HullCheckFailed,
}

/// Strictly quasiconvex penalty pulling optima toward a kernel in the hull.
#[derive(Debug, Clone)]
pub struct Regularizer {
    pub lambda: f64,
    pub gauge: Gauge,
}

/// Sites, per-site gauges anchored at them, an aggregator, and an optional
/// regularizer: the unit every solver consumes.
#[derive(Debug, Clone)]
pub struct LocationProblem {
    sites: PointCloud,
    gauges: Vec<Gauge>,
    aggregator: Aggregator,
    regularizer: Option<Regularizer>,
}

impl LocationProblem {
    pub fn new(
        sites: PointCloud,
        gauges: Vec<Gauge>,
        aggregator: Aggregator,
    ) -> Result<Self, SolveError> {
        if gauges.len() != sites.len() {
            return Err(SolveError::GaugeCount(gauges.len(), sites.len()));
        }
        for (g, v) in gauges.iter().zip(sites.iter()) {
            if !g.kernel().class_eq(v, EPS) {
                return Err(SolveError::KernelSiteMismatch);
            }
        }
        aggregator.validate(sites.len())?;
        Ok(Self {
            sites,
            gauges,
            aggregator,
            regularizer: None,
        })
    }

    /// One gauge kind shared by every site.
    pub fn uniform(
        sites: PointCloud,
        kind: GaugeKind,
        aggregator: Aggregator,
    ) -> Result<Self, SolveError> {
        let gauges = sites
            .iter()
            .map(|v| Gauge::new(kind.clone(), v.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(sites, gauges, aggregator)
    }

    pub fn sites(&self) -> &PointCloud {
        &self.sites
    }

    pub fn gauges(&self) -> &[Gauge] {
        &self.gauges
    }

    pub fn aggregator(&self) -> &Aggregator {
        &self.aggregator
    }

    pub fn regularizer(&self) -> Option<&Regularizer> {
        self.regularizer.as_ref()
    }

    /// Objective value including the regularization term.
    pub fn objective(&self, x: &TorusPoint) -> Result<f64, SolveError> {
        let vals = self.site_values(x)?;
        let mut h = self.aggregator.apply(&vals);
        if let Some(reg) = &self.regularizer {
            h += reg.lambda * reg.gauge.eval(x)?;
        }
        Ok(h)
    }

    /// Objective without the regularization term.
    pub fn base_objective(&self, x: &TorusPoint) -> Result<f64, SolveError> {
        let vals = self.site_values(x)?;
        Ok(self.aggregator.apply(&vals))
    }

    fn site_values(&self, x: &TorusPoint) -> Result<Vec<f64>, SolveError> {
        self.gauges
            .iter()
            .map(|g| g.eval(x).map_err(SolveError::from))
            .collect()
    }

    /// One subgradient of the objective in the sum-zero hyperplane.
    pub fn subgradient(&self, x: &TorusPoint) -> Result<Vec<f64>, SolveError> {
        let vals = self.site_values(x)?;
        let weights = self.aggregator.chain_weights(&vals);
        let mut g = vec![0.0; x.dim()];
        for (w, gauge) in weights.iter().zip(&self.gauges) {
            if *w == 0.0 {
                continue;
            }
            let sg = gauge.subgradient(x)?;
            for (gi, si) in g.iter_mut().zip(&sg) {
                *gi += w * si;
            }
        }
        if let Some(reg) = &self.regularizer {
            let sg = reg.gauge.subgradient(x)?;
            for (gi, si) in g.iter_mut().zip(&sg) {
                *gi += reg.lambda * si;
            }
        }
        Ok(g)
    }

    fn is_convex(&self) -> bool {
        self.gauges.iter().all(|g| g.kind().is_convex()) && self.aggregator.is_convex()
    }
}

/// Identifies which algorithm produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Center,
    FwSimplexGauge,
    FwSymmetric,
    Subgradient,
    HyperplaneL1,
    HyperplaneLinf,
    SetSites,
}

/// One elementary move of the descent-to-hull loop: coordinate `coord`
/// decreased by `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DescentStep {
    pub coord: usize,
    pub delta: f64,
}

/// Solver outcome. `in_hull` is always true on successful return.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub optimum: TorusPoint,
    pub objective: f64,
    pub in_hull: bool,
    pub iterations: usize,
    pub method: Method,
    pub converged: bool,
    pub descent_trace: Vec<DescentStep>,
}

/// Moves `x` into the max-tropical hull of the sites along elementary
/// coordinate descents without ever increasing the objective.
///
/// Each step picks the smallest coordinate `k` that attains no site's argmin
/// of `x - v_i`, and decreases it by `min_i (x_k - v_ik - min_j (x_j - v_ij))`.
/// The descent set shrinks strictly, so at most `n` steps run. When the
/// problem carries a regularizer, its kernel joins the descent-set
/// computation; since the kernel lies in the hull this changes neither the
/// hull nor the step bound, and it keeps the regularized objective
/// non-increasing as well.
pub fn descend_to_hull(
    x: &TorusPoint,
    problem: &LocationProblem,
) -> Result<(TorusPoint, Vec<DescentStep>), SolveError> {
    let mut anchor_points = problem.sites.points().to_vec();
    if let Some(reg) = &problem.regularizer {
        anchor_points.push(reg.gauge.kernel().clone());
    }
    let anchors = PointCloud::new(anchor_points)?;
    let n = x.dim();
    let mut x = x.clone();
    let mut trace = Vec::new();
    for _ in 0..=n {
        let d = descent_set(&anchors, &x, EPS)?;
        let Some(&k) = d.first() else {
            return Ok((x, trace));
        };
        let mut delta = f64::INFINITY;
        for v in anchors.iter() {
            let diff = x.diff(v)?;
            let m = diff.iter().copied().fold(f64::INFINITY, f64::min);
            delta = delta.min(diff[k] - m);
        }
        let mut coords = x.coords().to_vec();
        coords[k] -= delta;
        x = TorusPoint::new(coords)?;
        trace.push(DescentStep { coord: k, delta });
    }
    // The loop above always exits through the empty descent set.
    Err(SolveError::HullCheckFailed)
}

fn finish_report(
    problem: &LocationProblem,
    x: &TorusPoint,
    method: Method,
    iterations: usize,
    converged: bool,
) -> Result<SolveReport, SolveError> {
    let (x, trace) = descend_to_hull(x, problem)?;
    let in_hull = in_hull_max(&problem.sites, &x, EPS)?;
    if !in_hull {
        return Err(SolveError::HullCheckFailed);
    }
    Ok(SolveReport {
        objective: problem.base_objective(&x)?,
        optimum: x.canonical(),
        in_hull,
        iterations,
        method,
        converged,
        descent_trace: trace,
    })
}

/// Tropical center: the closed form `max` of h-normalized sites, which
/// minimizes the largest asymmetric distance from any site. The solution is
/// unique in the torus.
pub fn solve_center(sites: &PointCloud) -> Result<SolveReport, SolveError> {
    let n = sites.dim();
    let mut coords = vec![f64::NEG_INFINITY; n];
    for v in sites.iter() {
        let h = v.h_normalize();
        for (c, &vi) in coords.iter_mut().zip(h.coords()) {
            *c = c.max(vi);
        }
    }
    let x = TorusPoint::new(coords)?;
    let problem =
        LocationProblem::uniform(sites.clone(), GaugeKind::TropLp(1.0), Aggregator::Max)?;
    finish_report(&problem, &x, Method::Center, 0, true)
}

fn validate_weights(weights: &[f64], m: usize) -> Result<(), SolveError> {
    if weights.len() != m || weights.iter().any(|&w| w <= 0.0 || !w.is_finite()) {
        return Err(SolveError::InvalidWeights);
    }
    Ok(())
}

fn validate_regularizer(sites: &PointCloud, reg: Option<&Regularizer>) -> Result<(), SolveError> {
    if let Some(r) = reg {
        if r.lambda <= 0.0 || !r.lambda.is_finite() {
            return Err(SolveError::InvalidLambda(r.lambda));
        }
        if !in_hull_max(sites, r.gauge.kernel(), EPS)? {
            return Err(SolveError::KernelOutsideHull);
        }
    }
    Ok(())
}

/// Weighted Fermat-Weber problem under the simplex gauge with weights
/// `lambda`, solved exactly as a linear program (it is equivalent to a
/// transportation problem). Uniform `lambda` yields the tropical median.
pub fn solve_fw_simplex_gauge(
    sites: &PointCloud,
    weights: &[f64],
    lambda: &[f64],
) -> Result<SolveReport, SolveError> {
    solve_fw_simplex_gauge_regularized(sites, weights, lambda, None)
}

/// [`solve_fw_simplex_gauge`] with an optional regularization term
/// `reg.lambda * gamma_1(x - reg.kernel)` added to the objective.
pub fn solve_fw_simplex_gauge_regularized(
    sites: &PointCloud,
    weights: &[f64],
    lambda: &[f64],
    reg: Option<&Regularizer>,
) -> Result<SolveReport, SolveError> {
    let (n, m) = (sites.dim(), sites.len());
    validate_weights(weights, m)?;
    if lambda.len() != n || lambda.iter().any(|&l| l <= 0.0) {
        return Err(SolveError::InvalidWeights);
    }
    validate_regularizer(sites, reg)?;

    // Variables: x_0..x_{n-1} free, one epigraph variable per site holding
    // min_j (x_j - v_ij), plus one more for the regularizer kernel.
    let extra = usize::from(reg.is_some());
    let mut lp = LinearProgram::new(n + m + extra);
    let total_lambda: f64 = lambda.iter().sum();
    let total_weight: f64 = weights.iter().sum();
    let mut obj = vec![0.0; n + m + extra];
    for j in 0..n {
        obj[j] = lambda[j] * total_weight;
    }
    for i in 0..m {
        obj[n + i] = -weights[i] * total_lambda;
    }
    if let Some(r) = reg {
        obj[n + m] = -r.lambda * n as f64;
    }
    lp.set_objective(obj);
    for (i, v) in sites.iter().enumerate() {
        for (j, &vij) in v.coords().iter().enumerate() {
            let mut row = vec![0.0; n + m + extra];
            row[n + i] = 1.0;
            row[j] = -1.0;
            lp.add_leq(row, -vij);
        }
    }
    if let Some(r) = reg {
        for (j, &kj) in r.gauge.kernel().coords().iter().enumerate() {
            let mut row = vec![0.0; n + m + extra];
            row[n + m] = 1.0;
            row[j] = -1.0;
            lp.add_leq(row, -kj);
        }
    }
    let mut sum_zero = vec![0.0; n + m + extra];
    sum_zero[..n].fill(1.0);
    lp.add_eq(sum_zero, 0.0);

    let sol = simplex_solve(&lp)?;
    let x = TorusPoint::new(sol.x[..n].to_vec())?;

    let kind = GaugeKind::Simplex(lambda.to_vec());
    let mut problem =
        LocationProblem::uniform(sites.clone(), kind, Aggregator::WeightedSum(weights.to_vec()))?;
    problem.regularizer = reg.cloned();
    finish_report(&problem, &x, Method::FwSimplexGauge, sol.pivots, true)
}

/// Weighted Fermat-Weber problem under the symmetric tropical distance,
/// solved exactly as a linear program.
pub fn solve_fw_symmetric(sites: &PointCloud, weights: &[f64]) -> Result<SolveReport, SolveError> {
    solve_fw_symmetric_regularized(sites, weights, None)
}

/// [`solve_fw_symmetric`] with an optional regularization term. For
/// regularization weights in `(0, 1)` the regularized optima are exact
/// optima of the unregularized problem, and they always lie in the hull.
pub fn solve_fw_symmetric_regularized(
    sites: &PointCloud,
    weights: &[f64],
    reg: Option<&Regularizer>,
) -> Result<SolveReport, SolveError> {
    let (n, m) = (sites.dim(), sites.len());
    validate_weights(weights, m)?;
    validate_regularizer(sites, reg)?;

    // Variables: x (n, free), per-site min m_i and max M_i of x - v_i,
    // plus the regularizer's min variable.
    let extra = usize::from(reg.is_some());
    let total = n + 2 * m + extra;
    let mut lp = LinearProgram::new(total);
    let mut obj = vec![0.0; total];
    for i in 0..m {
        obj[n + i] = -weights[i]; // minus the per-site minimum
        obj[n + m + i] = weights[i]; // plus the per-site maximum
    }
    if let Some(r) = reg {
        obj[n + 2 * m] = -r.lambda * n as f64;
    }
    lp.set_objective(obj);
    for (i, v) in sites.iter().enumerate() {
        for (j, &vij) in v.coords().iter().enumerate() {
            let mut lo = vec![0.0; total];
            lo[n + i] = 1.0;
            lo[j] = -1.0;
            lp.add_leq(lo, -vij);
            let mut hi = vec![0.0; total];
            hi[j] = 1.0;
            hi[n + m + i] = -1.0;
            lp.add_leq(hi, vij);
        }
    }
    if let Some(r) = reg {
        for (j, &kj) in r.gauge.kernel().coords().iter().enumerate() {
            let mut row = vec![0.0; total];
            row[n + 2 * m] = 1.0;
            row[j] = -1.0;
            lp.add_leq(row, -kj);
        }
    }
    let mut sum_zero = vec![0.0; total];
    sum_zero[..n].fill(1.0);
    lp.add_eq(sum_zero, 0.0);

    let sol = simplex_solve(&lp)?;
    let x = TorusPoint::new(sol.x[..n].to_vec())?;

    let mut problem = LocationProblem::uniform(
        sites.clone(),
        GaugeKind::TropLp(f64::INFINITY),
        Aggregator::WeightedSum(weights.to_vec()),
    )?;
    problem.regularizer = reg.cloned();
    finish_report(&problem, &x, Method::FwSymmetric, sol.pivots, true)
}

/// Step-size schedule of the projected subgradient iteration.
#[derive(Debug, Clone, Copy)]
pub enum StepSchedule {
    /// `c / sqrt(t)`.
    SqrtDecay(f64),
    /// Polyak steps using a known optimal value.
    Polyak(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct SubgradientOptions {
    pub max_iter: usize,
    /// Default: c/sqrt(t) with c set to the largest pairwise symmetric
    /// distance between sites.
    pub schedule: Option<StepSchedule>,
    pub stall_window: usize,
    pub stall_tol: f64,
}

impl Default for SubgradientOptions {
    fn default() -> Self {
        Self {
            max_iter: 50_000,
            schedule: None,
            stall_window: 200,
            stall_tol: 1e-9,
        }
    }
}

/// Projected subgradient descent in the sum-zero hyperplane, tracking the
/// best iterate and finishing with descent to the hull. Requires convex
/// gauge kinds; reports `converged: false` if the iteration budget ran out
/// before the best objective stalled.
pub fn solve_subgradient(
    problem: &LocationProblem,
    x0: &TorusPoint,
    options: &SubgradientOptions,
) -> Result<SolveReport, SolveError> {
    if !problem.is_convex() {
        return Err(SolveError::NonConvexProblem);
    }
    let schedule = match options.schedule {
        Some(s) => s,
        None => {
            let mut spread: f64 = 0.0;
            let pts = problem.sites.points();
            for (i, a) in pts.iter().enumerate() {
                for b in &pts[i + 1..] {
                    spread = spread.max(d_sym(a, b)?);
                }
            }
            StepSchedule::SqrtDecay(spread.max(1.0))
        }
    };

    let mut x = x0.h_normalize();
    let mut best_obj = problem.objective(&x)?;
    let mut best_x = x.clone();
    let mut window_best = best_obj;
    let mut iterations = 0;
    let mut converged = false;

    for t in 1..=options.max_iter {
        iterations = t;
        let g = problem.subgradient(&x)?;
        let norm_sq: f64 = g.iter().map(|v| v * v).sum();
        if norm_sq.sqrt() <= 1e-14 {
            converged = true;
            break;
        }
        let alpha = match schedule {
            StepSchedule::SqrtDecay(c) => c / (t as f64).sqrt(),
            StepSchedule::Polyak(f_star) => {
                let gap = (problem.objective(&x)? - f_star).max(0.0);
                gap / norm_sq.max(1e-18)
            }
        };
        let coords: Vec<f64> = x
            .coords()
            .iter()
            .zip(&g)
            .map(|(xi, gi)| xi - alpha * gi)
            .collect();
        x = TorusPoint::new(coords)?.h_normalize();
        let obj = problem.objective(&x)?;
        if obj < best_obj {
            best_obj = obj;
            best_x = x.clone();
        }
        if t % options.stall_window == 0 {
            if window_best - best_obj < options.stall_tol {
                converged = true;
                break;
            }
            window_best = best_obj;
        }
    }

    finish_report(problem, &best_x, Method::Subgradient, iterations, converged)
}

/// Which error the best-fit hyperplane minimizes over apices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorNorm {
    /// Sum of distances (tropical PCA flavour).
    L1,
    /// Largest distance (tropical linear regression flavour).
    Linf,
}

/// Best-fit max-tropical hyperplane: minimizes the aggregated symmetric
/// distance of the sites to the hyperplane over its apex.
///
/// The objective is piecewise linear but not convex, so this runs a
/// deterministic multi-start exact coordinate descent (starting from every
/// site, the tropical center, and all pairwise max combinations) and then
/// descends into the hull, which cannot increase the objective.
pub fn solve_best_fit_hyperplane(
    sites: &PointCloud,
    error: ErrorNorm,
) -> Result<SolveReport, SolveError> {
    let n = sites.dim();
    let aggregator = match error {
        ErrorNorm::L1 => Aggregator::Sum,
        ErrorNorm::Linf => Aggregator::Max,
    };
    let problem =
        LocationProblem::uniform(sites.clone(), GaugeKind::HyperplaneOrderStat, aggregator)?;

    let mut starts: Vec<TorusPoint> = sites.iter().map(|v| v.h_normalize()).collect();
    starts.push(solve_center(sites)?.optimum.h_normalize());
    for i in 0..sites.len() {
        for j in (i + 1)..sites.len() {
            let a = sites.get(i).h_normalize();
            let b = sites.get(j).h_normalize();
            let comb = crate::torus::max_combination(&a, &b, 0.0, 0.0)?;
            starts.push(comb.h_normalize());
        }
    }

    let mut best: Option<(f64, TorusPoint)> = None;
    let mut total_sweeps = 0;
    for start in starts {
        let (x, obj, sweeps) = coordinate_descent(&problem, start, n)?;
        total_sweeps += sweeps;
        if best.as_ref().map_or(true, |(b, _)| obj < *b - 1e-12) {
            best = Some((obj, x));
        }
    }
    let (_, x) = best.expect("at least one start");
    let method = match error {
        ErrorNorm::L1 => Method::HyperplaneL1,
        ErrorNorm::Linf => Method::HyperplaneLinf,
    };
    finish_report(&problem, &x, method, total_sweeps, true)
}

/// Exact line search along each coordinate of a piecewise-linear objective:
/// candidate steps are exactly the breakpoints where order statistics of
/// some site difference change.
fn coordinate_descent(
    problem: &LocationProblem,
    mut x: TorusPoint,
    n: usize,
) -> Result<(TorusPoint, f64, usize), SolveError> {
    let mut obj = problem.base_objective(&x)?;
    let mut sweeps = 0;
    for _ in 0..200 {
        sweeps += 1;
        let mut improved = false;
        for j in 0..n {
            let mut candidates: Vec<f64> = Vec::new();
            for v in problem.sites.iter() {
                let d = x.diff(v)?;
                for k in 0..n {
                    if k != j {
                        candidates.push(d[k] - d[j]);
                    }
                }
            }
            let mut best_t = 0.0;
            let mut best_val = obj;
            for &t in &candidates {
                if t == 0.0 {
                    continue;
                }
                let mut coords = x.coords().to_vec();
                coords[j] += t;
                let val = problem.base_objective(&TorusPoint::new(coords)?)?;
                if val < best_val - 1e-12
                    || (val < best_val + 1e-12 && best_t != 0.0 && t.abs() < best_t.abs())
                {
                    best_val = val;
                    best_t = t;
                }
            }
            if best_t != 0.0 && best_val < obj - 1e-12 {
                let mut coords = x.coords().to_vec();
                coords[j] += best_t;
                x = TorusPoint::new(coords)?;
                obj = best_val;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    Ok((x, obj, sweeps))
}

/// Attaches a strictly quasiconvex tropical-L^1 regularizer anchored at
/// `kernel` (default: the tropical center) with weight `lambda`. Every
/// minimum of the regularized objective lies in the hull for any positive
/// weight.
pub fn regularize(
    problem: &LocationProblem,
    lambda: f64,
    kernel: Option<TorusPoint>,
) -> Result<LocationProblem, SolveError> {
    if lambda <= 0.0 || !lambda.is_finite() {
        return Err(SolveError::InvalidLambda(lambda));
    }
    let kernel = match kernel {
        Some(k) => {
            if !in_hull_max(&problem.sites, &k, EPS)? {
                return Err(SolveError::KernelOutsideHull);
            }
            k
        }
        None => solve_center(&problem.sites)?.optimum,
    };
    let gauge = Gauge::new(GaugeKind::TropLp(1.0), kernel)?;
    let mut out = problem.clone();
    out.regularizer = Some(Regularizer { lambda, gauge });
    Ok(out)
}

/// Builds the regularizer value used by [`solve_fw_symmetric_regularized`]
/// and friends without attaching it to a problem.
pub fn regularizer_at_center(
    sites: &PointCloud,
    lambda: f64,
) -> Result<Regularizer, SolveError> {
    if lambda <= 0.0 || !lambda.is_finite() {
        return Err(SolveError::InvalidLambda(lambda));
    }
    let kernel = solve_center(sites)?.optimum;
    Ok(Regularizer {
        lambda,
        gauge: Gauge::new(GaugeKind::TropLp(1.0), kernel)?,
    })
}

/// Frechet mean: minimizes the sum of squared symmetric distances by
/// projected subgradient descent started at the given point (default
/// callers use a site or the center).
pub fn solve_frechet(
    sites: &PointCloud,
    x0: &TorusPoint,
    options: &SubgradientOptions,
) -> Result<SolveReport, SolveError> {
    let problem = LocationProblem::uniform(
        sites.clone(),
        GaugeKind::TropLp(f64::INFINITY),
        Aggregator::SumSquares,
    )?;
    solve_subgradient(&problem, x0, options)
}

/// Largest asymmetric distance from any site; the quantity the tropical
/// center minimizes.
pub fn center_objective(sites: &PointCloud, x: &TorusPoint) -> Result<f64, SolveError> {
    let mut worst: f64 = 0.0;
    for v in sites.iter() {
        worst = worst.max(d_asym(v, x)?);
    }
    Ok(worst)
}
