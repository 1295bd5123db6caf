//! Dissimilarity gauges on the torus and the aggregators that combine them.
//!
//! Every gauge here is of the form `f(x) = gamma(canonical(x - v))` for an
//! increasing `gamma` on the non-negative orthant and a kernel point `v`.
//! This makes all sub-level sets star-shaped around the kernel under the
//! asymmetric-distance geodesics, which is what lets the solvers guarantee
//! optima inside the max-tropical hull of the input.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::torus::{argmax_set, argmin_set, GeometryError, TorusPoint, EPS};

#[derive(Debug, Error, PartialEq)]
pub enum GaugeError {
    #[error("tropical L^p norms require p >= 1 (got {0}); smaller p is not convex")]
    InvalidP(f64),
    #[error("simplex gauge weights must all be positive")]
    NonPositiveWeight,
    #[error("weight vector length {0} does not match dimension {1}")]
    WeightLength(usize, usize),
    #[error("subgradients are unavailable for this gauge kind")]
    UnsupportedSubgradient,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

type GammaFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// The shape of a gauge: how canonical coordinates are turned into a value.
#[derive(Clone)]
pub enum GaugeKind {
    /// Tropical L^p norm, `p` in `[1, inf]`. `p = 1` is the asymmetric
    /// tropical distance, `p = inf` the symmetric one (max minus min).
    TropLp(f64),
    /// Simplex gauge with positive weights: `sum_i w_i x_i - (sum w) min_j x_j`.
    /// Uniform weights give the tropical median distance.
    Simplex(Vec<f64>),
    /// Distance from the kernel to the max-tropical hyperplane with apex `x`:
    /// second-smallest minus smallest entry of the difference.
    HyperplaneOrderStat,
    /// User-supplied increasing function of canonical coordinates, with an
    /// optional subgradient callback. Monotonicity is the caller's contract.
    Custom {
        gamma: GammaFn,
        subgradient: Option<GammaGradFn>,
    },
}

type GammaGradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

impl fmt::Debug for GaugeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GaugeKind::TropLp(p) => write!(f, "TropLp({p})"),
            GaugeKind::Simplex(w) => write!(f, "Simplex({w:?})"),
            GaugeKind::HyperplaneOrderStat => write!(f, "HyperplaneOrderStat"),
            GaugeKind::Custom { .. } => write!(f, "Custom"),
        }
    }
}

impl GaugeKind {
    /// Evaluates the underlying increasing function on canonical coordinates.
    pub fn gamma(&self, c: &[f64]) -> f64 {
        match self {
            GaugeKind::TropLp(p) => lp_of_canonical(c, *p),
            GaugeKind::Simplex(w) => {
                let total: f64 = w.iter().sum();
                let m = c.iter().copied().fold(f64::INFINITY, f64::min);
                w.iter().zip(c).map(|(wi, ci)| wi * ci).sum::<f64>() - total * m
            }
            GaugeKind::HyperplaneOrderStat => order_stat_gap(c),
            GaugeKind::Custom { gamma, .. } => gamma(c),
        }
    }

    fn validate(&self, dim: usize) -> Result<(), GaugeError> {
        match self {
            GaugeKind::TropLp(p) => {
                if *p < 1.0 || p.is_nan() {
                    return Err(GaugeError::InvalidP(*p));
                }
            }
            GaugeKind::Simplex(w) => {
                if w.len() != dim {
                    return Err(GaugeError::WeightLength(w.len(), dim));
                }
                if w.iter().any(|&wi| wi <= 0.0 || !wi.is_finite()) {
                    return Err(GaugeError::NonPositiveWeight);
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Whether the underlying gamma is strictly increasing.
    pub fn is_strictly_increasing(&self) -> bool {
        match self {
            GaugeKind::TropLp(p) => p.is_finite(),
            GaugeKind::Simplex(_) => true,
            GaugeKind::HyperplaneOrderStat => false,
            GaugeKind::Custom { .. } => false,
        }
    }

    /// Whether the induced function on the torus is convex, making it safe
    /// for the generic subgradient solver.
    pub fn is_convex(&self) -> bool {
        match self {
            GaugeKind::TropLp(p) => *p == 1.0 || *p == 2.0 || p.is_infinite(),
            GaugeKind::Simplex(_) => true,
            // piecewise linear but not convex in the apex argument; treated
            // as a local-descent direction source only
            GaugeKind::HyperplaneOrderStat => false,
            GaugeKind::Custom { .. } => false,
        }
    }

    /// One (generalized) gradient of `x -> gamma(canonical(x))` at the given
    /// raw difference vector, with uniform weight over argmin/argmax ties.
    /// The result lies in the sum-zero hyperplane.
    pub fn gradient_at_diff(&self, d: &[f64]) -> Result<Vec<f64>, GaugeError> {
        let n = d.len();
        match self {
            GaugeKind::TropLp(p) if *p == 1.0 => {
                let ties = argmin_set(d, EPS);
                let share = n as f64 / ties.len() as f64;
                let mut g = vec![1.0; n];
                for j in ties {
                    g[j] -= share;
                }
                Ok(g)
            }
            GaugeKind::TropLp(p) if *p == 2.0 => {
                let ties = argmin_set(d, EPS);
                let m = d.iter().copied().fold(f64::INFINITY, f64::min);
                let c: Vec<f64> = d.iter().map(|x| x - m).collect();
                let value = c.iter().map(|x| x * x).sum::<f64>().sqrt();
                if value <= EPS {
                    return Ok(vec![0.0; n]);
                }
                let total: f64 = c.iter().sum();
                let mut g: Vec<f64> = c.iter().map(|x| x / value).collect();
                for &j in &ties {
                    g[j] -= total / (value * ties.len() as f64);
                }
                Ok(g)
            }
            GaugeKind::TropLp(p) if p.is_infinite() => {
                let lo = argmin_set(d, EPS);
                let hi = argmax_set(d, EPS);
                if lo.len() == n {
                    return Ok(vec![0.0; n]); // constant vector: at the kernel
                }
                let mut g = vec![0.0; n];
                for &j in &hi {
                    g[j] += 1.0 / hi.len() as f64;
                }
                for &j in &lo {
                    g[j] -= 1.0 / lo.len() as f64;
                }
                Ok(g)
            }
            GaugeKind::Simplex(w) => {
                let ties = argmin_set(d, EPS);
                let total: f64 = w.iter().sum();
                let mut g = w.clone();
                for &j in &ties {
                    g[j] -= total / ties.len() as f64;
                }
                Ok(g)
            }
            GaugeKind::HyperplaneOrderStat => {
                // Clarke-style gradient of the active linear piece of the
                // second order statistic gap; valid for local descent only.
                let lo = argmin_set(d, EPS);
                if lo.len() >= 2 {
                    return Ok(vec![0.0; n]); // gap is 0: at a minimum
                }
                let j_min = lo[0];
                let rest: Vec<f64> = d
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != j_min)
                    .map(|(_, &v)| v)
                    .collect();
                let second = rest.iter().copied().fold(f64::INFINITY, f64::min);
                let seconds: Vec<usize> = d
                    .iter()
                    .enumerate()
                    .filter(|(i, &v)| *i != j_min && v <= second + EPS)
                    .map(|(i, _)| i)
                    .collect();
                let mut g = vec![0.0; n];
                for &j in &seconds {
                    g[j] += 1.0 / seconds.len() as f64;
                }
                g[j_min] -= 1.0;
                Ok(g)
            }
            GaugeKind::Custom {
                subgradient: Some(sg),
                ..
            } => {
                let m = d.iter().copied().fold(f64::INFINITY, f64::min);
                let c: Vec<f64> = d.iter().map(|x| x - m).collect();
                Ok(sg(&c))
            }
            _ => Err(GaugeError::UnsupportedSubgradient),
        }
    }
}

/// A dissimilarity function anchored at a kernel point.
#[derive(Debug, Clone)]
pub struct Gauge {
    kind: GaugeKind,
    kernel: TorusPoint,
}

impl Gauge {
    pub fn new(kind: GaugeKind, kernel: TorusPoint) -> Result<Self, GaugeError> {
        kind.validate(kernel.dim())?;
        Ok(Self { kind, kernel })
    }

    pub fn kind(&self) -> &GaugeKind {
        &self.kind
    }

    pub fn kernel(&self) -> &TorusPoint {
        &self.kernel
    }

    /// `gamma(canonical(x - kernel))`. Zero at the kernel, invariant to the
    /// representative of `x`.
    pub fn eval(&self, x: &TorusPoint) -> Result<f64, GaugeError> {
        let d = x.diff(&self.kernel)?;
        let m = d.iter().copied().fold(f64::INFINITY, f64::min);
        let c: Vec<f64> = d.iter().map(|v| v - m).collect();
        Ok(self.kind.gamma(&c))
    }

    /// One subgradient of `x -> eval(x)` as a function on the sum-zero
    /// hyperplane. For piecewise-linear kinds this is the gradient of the
    /// active piece with ties averaged uniformly (which keeps the vector in
    /// the subdifferential and the solvers deterministic).
    pub fn subgradient(&self, x: &TorusPoint) -> Result<Vec<f64>, GaugeError> {
        let d = x.diff(&self.kernel)?;
        self.kind.gradient_at_diff(&d)
    }
}

/// Tropical L^p norm of a point, `p` in `[1, inf]`:
/// `(sum_i (x_i - min_j x_j)^p)^(1/p)`, with the range `max - min` at `p = inf`.
pub fn gamma_p(x: &TorusPoint, p: f64) -> Result<f64, GaugeError> {
    if p < 1.0 || p.is_nan() {
        return Err(GaugeError::InvalidP(p));
    }
    Ok(lp_of_canonical(x.canonical().coords(), p))
}

fn lp_of_canonical(c: &[f64], p: f64) -> f64 {
    let m = c.iter().copied().fold(f64::INFINITY, f64::min);
    if p.is_infinite() {
        return c.iter().copied().fold(f64::NEG_INFINITY, f64::max) - m;
    }
    if p == 1.0 {
        return c.iter().map(|x| x - m).sum();
    }
    c.iter().map(|x| (x - m).powf(p)).sum::<f64>().powf(1.0 / p)
}

/// Simplex gauge with positive weights `lambda`:
/// `sum_i lambda_i x_i - (sum lambda) min_j x_j`. Uniform weights reduce to
/// the tropical L^1 norm.
pub fn gamma_simplex(x: &TorusPoint, lambda: &[f64]) -> Result<f64, GaugeError> {
    if lambda.len() != x.dim() {
        return Err(GaugeError::WeightLength(lambda.len(), x.dim()));
    }
    if lambda.iter().any(|&w| w <= 0.0 || !w.is_finite()) {
        return Err(GaugeError::NonPositiveWeight);
    }
    Ok(GaugeKind::Simplex(lambda.to_vec()).gamma(x.coords()))
}

/// Symmetric tropical distance from `a` to the max-tropical hyperplane with
/// the given apex: second-smallest minus smallest entry of `apex - a`.
pub fn hyperplane_dist(a: &TorusPoint, apex: &TorusPoint) -> Result<f64, GaugeError> {
    let d = apex.diff(a)?;
    Ok(order_stat_gap(&d))
}

fn order_stat_gap(d: &[f64]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut second = f64::INFINITY;
    for &v in d {
        if v < lo {
            second = lo;
            lo = v;
        } else if v < second {
            second = v;
        }
    }
    second - lo
}

/// Dual of the tropical L^1 gauge: `gamma_1(-x) / n`. Used by the
/// regularization bound diagnostics.
pub fn dual_gamma1(x: &TorusPoint) -> f64 {
    let n = x.dim() as f64;
    let negated: Vec<f64> = x.coords().iter().map(|v| -v).collect();
    let m = negated.iter().copied().fold(f64::INFINITY, f64::min);
    negated.iter().map(|v| v - m).sum::<f64>() / n
}

/// Extends an increasing function defined on the boundary of the
/// non-negative orthant to all of it:
/// `gamma~(x) = max_i gamma(x with entry i zeroed) + prod_i x_i`.
///
/// The extension agrees with the input on the boundary, is increasing, is
/// strictly increasing when the input is, and is continuous when the input is.
pub fn extend_monotone<F>(gamma_boundary: F) -> impl Fn(&[f64]) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    move |x: &[f64]| {
        let mut best = f64::NEG_INFINITY;
        let mut scratch = x.to_vec();
        for i in 0..x.len() {
            let saved = scratch[i];
            scratch[i] = 0.0;
            best = best.max(gamma_boundary(&scratch));
            scratch[i] = saved;
        }
        best + x.iter().product::<f64>()
    }
}

/// How per-site dissimilarities are combined into one objective.
#[derive(Debug, Clone, PartialEq)]
pub enum Aggregator {
    Sum,
    WeightedSum(Vec<f64>),
    SumSquares,
    /// Weighted sum of squares; what a multiplicity-weighted Frechet
    /// objective aggregates with.
    WeightedSumSquares(Vec<f64>),
    Max,
}

impl Aggregator {
    pub fn apply(&self, vals: &[f64]) -> f64 {
        match self {
            Aggregator::Sum => vals.iter().sum(),
            Aggregator::WeightedSum(w) => w.iter().zip(vals).map(|(wi, v)| wi * v).sum(),
            Aggregator::SumSquares => vals.iter().map(|v| v * v).sum(),
            Aggregator::WeightedSumSquares(w) => {
                w.iter().zip(vals).map(|(wi, v)| wi * v * v).sum()
            }
            Aggregator::Max => vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }

    /// Strictly increasing on the non-negative orthant?
    pub fn is_strict(&self) -> bool {
        !matches!(self, Aggregator::Max)
    }

    pub fn is_convex(&self) -> bool {
        true
    }

    /// Weights `dg/dv_i` of the chain rule at the given per-site values,
    /// with argmax ties of `Max` averaged uniformly.
    pub fn chain_weights(&self, vals: &[f64]) -> Vec<f64> {
        match self {
            Aggregator::Sum => vec![1.0; vals.len()],
            Aggregator::WeightedSum(w) => w.clone(),
            Aggregator::SumSquares => vals.iter().map(|v| 2.0 * v).collect(),
            Aggregator::WeightedSumSquares(w) => {
                w.iter().zip(vals).map(|(wi, v)| 2.0 * wi * v).collect()
            }
            Aggregator::Max => {
                let ties = argmax_set(vals, EPS);
                let mut w = vec![0.0; vals.len()];
                for &i in &ties {
                    w[i] = 1.0 / ties.len() as f64;
                }
                w
            }
        }
    }

    pub fn validate(&self, m: usize) -> Result<(), GaugeError> {
        if let Aggregator::WeightedSum(w) | Aggregator::WeightedSumSquares(w) = self {
            if w.len() != m {
                return Err(GaugeError::WeightLength(w.len(), m));
            }
            if w.iter().any(|&wi| wi <= 0.0 || !wi.is_finite()) {
                return Err(GaugeError::NonPositiveWeight);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::{d_asym, segment_vertices};

    fn pt(coords: &[f64]) -> TorusPoint {
        TorusPoint::new(coords.to_vec()).unwrap()
    }

    #[test]
    fn gamma_p_examples() {
        let x = pt(&[0.0, 1.0, 2.0]);
        assert_eq!(gamma_p(&x, 1.0).unwrap(), 3.0);
        assert_eq!(gamma_p(&x, f64::INFINITY).unwrap(), 2.0);
        let c = pt(&[4.0, 4.0, 4.0]);
        for p in [1.0, 2.0, 7.5, f64::INFINITY] {
            assert_eq!(gamma_p(&c, p).unwrap(), 0.0);
        }
    }

    #[test]
    fn gamma_p_rejects_small_p() {
        assert_eq!(gamma_p(&pt(&[0.0, 1.0]), 0.25), Err(GaugeError::InvalidP(0.25)));
    }

    #[test]
    fn gamma_1_is_asymmetric_distance_from_zero() {
        let zero = pt(&[0.0, 0.0, 0.0]);
        for coords in [[0.3, -1.2, 2.0], [5.0, 5.0, 4.0], [0.0, 1.0, 2.0]] {
            let x = pt(&coords);
            let lhs = gamma_p(&x, 1.0).unwrap();
            let rhs = d_asym(&zero, &x).unwrap();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_simplex_examples() {
        let x = pt(&[0.0, 1.0, 2.0]);
        assert_eq!(gamma_simplex(&x, &[1.0, 1.0, 1.0]).unwrap(), 3.0);
        assert_eq!(gamma_simplex(&x, &[2.0, 1.0, 1.0]).unwrap(), 3.0);
        assert_eq!(gamma_simplex(&pt(&[7.0, 7.0, 7.0]), &[2.0, 1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(
            gamma_simplex(&x, &[1.0, -1.0, 1.0]),
            Err(GaugeError::NonPositiveWeight)
        );
    }

    #[test]
    fn hyperplane_dist_examples() {
        let zero = pt(&[0.0, 0.0, 0.0]);
        assert_eq!(hyperplane_dist(&zero, &pt(&[0.0, 1.0, 2.0])).unwrap(), 1.0);
        assert_eq!(hyperplane_dist(&zero, &pt(&[0.0, 0.0, 2.0])).unwrap(), 0.0);
        assert_eq!(hyperplane_dist(&zero, &pt(&[5.0, 5.0, 5.0])).unwrap(), 0.0);
    }

    #[test]
    fn extend_monotone_examples() {
        let max_entry = |x: &[f64]| x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let ext = extend_monotone(max_entry);
        assert_eq!(ext(&[1.0, 2.0, 0.0]), 2.0);
        assert_eq!(ext(&[1.0, 1.0, 1.0]), 2.0);
        assert_eq!(ext(&[0.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn gauge_eval_examples() {
        let g = Gauge::new(GaugeKind::TropLp(1.0), pt(&[0.0, 0.0, 0.0])).unwrap();
        assert_eq!(g.eval(&pt(&[0.0, 1.0, 2.0])).unwrap(), 3.0);
        assert_eq!(g.eval(g.kernel()).unwrap(), 0.0);
        // representative invariance
        assert_eq!(g.eval(&pt(&[10.0, 11.0, 12.0])).unwrap(), 3.0);

        let h = Gauge::new(GaugeKind::HyperplaneOrderStat, pt(&[0.5, 0.0, 0.0])).unwrap();
        let x = pt(&[1.0, 3.0, 0.0]);
        assert_eq!(
            h.eval(&x).unwrap(),
            hyperplane_dist(h.kernel(), &x).unwrap()
        );
    }

    #[test]
    fn subgradient_l1_interior() {
        let g = Gauge::new(GaugeKind::TropLp(1.0), pt(&[0.0, 0.0, 0.0])).unwrap();
        // unique min at index 0
        let sg = g.subgradient(&pt(&[0.0, 1.0, 2.0])).unwrap();
        assert_eq!(sg, vec![-2.0, 1.0, 1.0]);
        assert!(sg.iter().sum::<f64>().abs() < 1e-12);
        // at the kernel the tie-averaged gradient collapses to zero
        assert_eq!(g.subgradient(&pt(&[3.0, 3.0, 3.0])).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn subgradient_linf_example() {
        let g = Gauge::new(GaugeKind::TropLp(f64::INFINITY), pt(&[0.0, 0.0, 0.0])).unwrap();
        let sg = g.subgradient(&pt(&[0.0, 1.0, 2.0])).unwrap();
        assert_eq!(sg, vec![-1.0, 0.0, 1.0]);
        assert_eq!(g.subgradient(&pt(&[4.0, 4.0, 4.0])).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn subgradient_unsupported_kind() {
        let g = Gauge::new(GaugeKind::TropLp(3.0), pt(&[0.0, 0.0, 0.0])).unwrap();
        assert_eq!(
            g.subgradient(&pt(&[0.0, 1.0, 2.0])),
            Err(GaugeError::UnsupportedSubgradient)
        );
    }

    #[test]
    fn dual_gamma1_examples() {
        assert!((dual_gamma1(&pt(&[0.0, 1.0, 2.0])) - 1.0).abs() < 1e-12);
        assert_eq!(dual_gamma1(&pt(&[4.0, 4.0, 4.0])), 0.0);
        // integer values at integer sum-zero points, in (1/n)-integer steps
        for coords in [[1.0, 0.0, -1.0], [2.0, -1.0, -1.0], [3.0, -2.0, -1.0]] {
            let v = dual_gamma1(&pt(&coords)) * 3.0;
            assert!((v - v.round()).abs() < 1e-12);
        }
    }

    #[test]
    fn sublevel_star_vertices_strictly_decrease() {
        // strictly increasing kinds: every geodesic vertex u != w of [v,w]
        // sits strictly inside the sub-level set of f at w
        let kernel = pt(&[0.2, -0.7, 1.4]);
        let w = pt(&[2.0, 0.4, -1.1]);
        for kind in [GaugeKind::TropLp(1.0), GaugeKind::TropLp(2.0), GaugeKind::Simplex(vec![1.0, 2.0, 0.5])] {
            let g = Gauge::new(kind, kernel.clone()).unwrap();
            let fw = g.eval(&w).unwrap();
            for u in segment_vertices(&kernel, &w).unwrap() {
                if u.class_eq(&w, EPS) {
                    continue;
                }
                assert!(g.eval(&u).unwrap() < fw);
            }
        }
        // L^inf is only weakly increasing
        let g = Gauge::new(GaugeKind::TropLp(f64::INFINITY), kernel.clone()).unwrap();
        let fw = g.eval(&w).unwrap();
        for u in segment_vertices(&kernel, &w).unwrap() {
            assert!(g.eval(&u).unwrap() <= fw + EPS);
        }
    }

    #[test]
    fn aggregator_basics() {
        let vals = [1.0, 3.0, 2.0];
        assert_eq!(Aggregator::Sum.apply(&vals), 6.0);
        assert_eq!(Aggregator::WeightedSum(vec![1.0, 0.5, 2.0]).apply(&vals), 6.5);
        assert_eq!(Aggregator::SumSquares.apply(&vals), 14.0);
        assert_eq!(Aggregator::Max.apply(&vals), 3.0);
        assert!(Aggregator::Sum.is_strict());
        assert!(!Aggregator::Max.is_strict());
        assert_eq!(Aggregator::Max.chain_weights(&vals), vec![0.0, 1.0, 0.0]);
    }
}
