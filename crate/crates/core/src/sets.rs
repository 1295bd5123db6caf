//! Finitely generated max-tropically convex sets: projection, distance, and
//! location problems whose sites are sets rather than points.

use serde::{Deserialize, Serialize};

use crate::gauge::{Aggregator, GaugeKind};
use crate::solve::{Method, SolveError, SolveReport, SubgradientOptions};
use crate::torus::{d_sym, in_hull_max, GeometryError, PointCloud, TorusPoint, EPS};

/// A max-tropically convex set given by its finite generator list; its
/// points are the coordinatewise maxima of shifted generators.
#[derive(Debug, Clone, Serialize)]
pub struct TropicalSet {
    generators: PointCloud,
}

/// Raw serialization shape of a set file: `{"generators": [[...], ...]}`.
#[derive(Debug, Deserialize)]
pub struct TropicalSetSpec {
    pub generators: Vec<Vec<f64>>,
}

impl TropicalSet {
    pub fn new(generators: PointCloud) -> Self {
        Self { generators }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, GeometryError> {
        Ok(Self::new(PointCloud::from_rows(rows)?))
    }

    pub fn generators(&self) -> &PointCloud {
        &self.generators
    }

    pub fn dim(&self) -> usize {
        self.generators.dim()
    }

    /// Tropical projection of `x` onto the set:
    /// `pi(x)_i = max over generators a of (a_i + min_j (x_j - a_j))`.
    ///
    /// The result is a point of the set, fixed exactly when `x` already
    /// belongs to it, and its representative is tied to the representative
    /// of `x` (shifting `x` shifts the projection identically).
    pub fn project(&self, x: &TorusPoint) -> Result<TorusPoint, GeometryError> {
        let n = x.dim();
        if self.dim() != n {
            return Err(GeometryError::DimensionMismatch(self.dim(), n));
        }
        let mut coords = vec![f64::NEG_INFINITY; n];
        for a in self.generators.iter() {
            let d = x.diff(a)?;
            let shift = d.iter().copied().fold(f64::INFINITY, f64::min);
            for (c, &ai) in coords.iter_mut().zip(a.coords()) {
                *c = c.max(ai + shift);
            }
        }
        TorusPoint::new(coords)
    }

    /// Distance from the set to `x` under the given monotone gauge kind:
    /// the gauge evaluated at `x` minus its projection. Zero exactly on
    /// members of the set.
    pub fn dist(&self, x: &TorusPoint, kind: &GaugeKind) -> Result<f64, GeometryError> {
        let p = self.project(x)?;
        let d = x.diff(&p)?;
        let m = d.iter().copied().fold(f64::INFINITY, f64::min);
        let c: Vec<f64> = d.iter().map(|v| v - m).collect();
        Ok(kind.gamma(&c))
    }

    /// Membership test via the projection fixed point.
    pub fn contains(&self, x: &TorusPoint, eps: f64) -> Result<bool, GeometryError> {
        Ok(self.project(x)?.class_eq(x, eps))
    }
}

/// Minimizes `g(d(A_1, x), ..., d(A_m, x))` over `x` for max-tropically
/// convex sites `A_i` and a monotone gauge kind.
///
/// Descent directions come from the gauge gradient at `x - pi_i(x)` with the
/// projections recomputed every iteration; afterwards a set-site variant of
/// descent-to-hull walks the best iterate into the hull of the union of all
/// generators, stepping only while every projection stays unchanged so that
/// no distance can increase.
pub fn solve_set_sites(
    sets: &[TropicalSet],
    aggregator: &Aggregator,
    kind: &GaugeKind,
    options: &SubgradientOptions,
) -> Result<SolveReport, SolveError> {
    let first = sets.first().ok_or(GeometryError::EmptyCloud)?;
    let n = first.dim();
    for s in sets {
        if s.dim() != n {
            return Err(SolveError::Geometry(GeometryError::DimensionMismatch(
                n,
                s.dim(),
            )));
        }
    }
    aggregator.validate(sets.len())?;

    let union = PointCloud::new(
        sets.iter()
            .flat_map(|s| s.generators.points().iter().cloned())
            .collect(),
    )?;

    // start at the tropical center of the union of generators
    let mut x = crate::solve::solve_center(&union)?.optimum.h_normalize();

    let schedule_c = {
        let pts = union.points();
        let mut spread: f64 = 0.0;
        for (i, a) in pts.iter().enumerate() {
            for b in &pts[i + 1..] {
                spread = spread.max(d_sym(a, b)?);
            }
        }
        spread.max(1.0)
    };

    let objective = |x: &TorusPoint| -> Result<f64, SolveError> {
        let vals = sets
            .iter()
            .map(|s| s.dist(x, kind))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(aggregator.apply(&vals))
    };

    let mut best_obj = objective(&x)?;
    let mut best_x = x.clone();
    let mut window_best = best_obj;
    let mut iterations = 0;
    let mut converged = false;
    for t in 1..=options.max_iter {
        iterations = t;
        let vals = sets
            .iter()
            .map(|s| s.dist(&x, kind))
            .collect::<Result<Vec<_>, _>>()?;
        let weights = aggregator.chain_weights(&vals);
        let mut g = vec![0.0; n];
        for (w, s) in weights.iter().zip(sets) {
            if *w == 0.0 {
                continue;
            }
            let p = s.project(&x)?;
            let d = x.diff(&p)?;
            let sg = kind.gradient_at_diff(&d)?;
            for (gi, si) in g.iter_mut().zip(&sg) {
                *gi += w * si;
            }
        }
        let norm: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-14 {
            converged = true;
            break;
        }
        let alpha = schedule_c / (t as f64).sqrt();
        let coords: Vec<f64> = x
            .coords()
            .iter()
            .zip(&g)
            .map(|(xi, gi)| xi - alpha * gi)
            .collect();
        x = TorusPoint::new(coords)?.h_normalize();
        let obj = objective(&x)?;
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

    let x = descend_to_hull_set_sites(&best_x, sets, &union)?;
    let in_hull = in_hull_max(&union, &x, EPS)?;
    if !in_hull {
        return Err(SolveError::HullCheckFailed);
    }
    Ok(SolveReport {
        objective: objective(&x)?,
        optimum: x.canonical(),
        in_hull,
        iterations,
        method: Method::SetSites,
        converged,
        descent_trace: Vec::new(),
    })
}

/// While some coordinate attains no generator's argmin, walk it down with a
/// step halved from 1 until every projection is unchanged, so the move can
/// only shrink distances. Caps at 60 halvings per step.
fn descend_to_hull_set_sites(
    x: &TorusPoint,
    sets: &[TropicalSet],
    union: &PointCloud,
) -> Result<TorusPoint, SolveError> {
    let mut x = x.clone();
    'outer: for _ in 0..10_000 {
        let d = crate::torus::descent_set(union, &x, EPS)?;
        let Some(&k) = d.first() else {
            return Ok(x);
        };
        let projections = sets
            .iter()
            .map(|s| s.project(&x))
            .collect::<Result<Vec<_>, _>>()?;
        let mut delta = 1.0f64;
        for _ in 0..60 {
            let mut coords = x.coords().to_vec();
            coords[k] -= delta;
            let candidate = TorusPoint::new(coords)?;
            let moved = sets
                .iter()
                .map(|s| s.project(&candidate))
                .collect::<Result<Vec<_>, _>>()?;
            let unchanged = projections
                .iter()
                .zip(&moved)
                .all(|(p, q)| p.class_eq(q, EPS));
            if unchanged {
                x = candidate;
                continue 'outer;
            }
            delta /= 2.0;
        }
        // the slack is below resolution: accept the point as on the boundary
        return Ok(x);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauge::gamma_p;
    use crate::torus::max_combination;

    fn pt(coords: &[f64]) -> TorusPoint {
        TorusPoint::new(coords.to_vec()).unwrap()
    }

    fn two_generator_set() -> TropicalSet {
        TropicalSet::from_rows(vec![vec![3.0, 2.0, 0.0], vec![2.0, 3.0, 0.0]]).unwrap()
    }

    #[test]
    fn projection_fixes_generators() {
        let a = two_generator_set();
        for g in a.generators().iter() {
            assert!(a.project(g).unwrap().class_eq(g, 1e-9));
        }
    }

    #[test]
    fn projection_example() {
        let a = two_generator_set();
        let p = a.project(&pt(&[0.0, 0.0, 0.0])).unwrap();
        assert_eq!(p, pt(&[0.0, 0.0, -3.0]));
        assert!(p.class_eq(&pt(&[3.0, 3.0, 0.0]), 1e-9));
    }

    #[test]
    fn projection_single_generator() {
        let a = TropicalSet::from_rows(vec![vec![1.0, -2.0, 0.5]]).unwrap();
        let x = pt(&[4.0, 0.0, 0.0]);
        assert!(a.project(&x).unwrap().class_eq(&pt(&[1.0, -2.0, 0.5]), 1e-9));
    }

    #[test]
    fn projection_idempotent() {
        let a = two_generator_set();
        let x = pt(&[1.0, -4.0, 2.0]);
        let p = a.project(&x).unwrap();
        let pp = a.project(&p).unwrap();
        assert!(p.class_eq(&pp, 1e-9));
    }

    #[test]
    fn dist_example() {
        let a = two_generator_set();
        let x = pt(&[0.0, 0.0, 0.0]);
        let d = a.dist(&x, &GaugeKind::TropLp(1.0)).unwrap();
        assert!((d - 3.0).abs() < 1e-12);
        // members are at distance zero
        for g in a.generators().iter() {
            assert!(a.dist(g, &GaugeKind::TropLp(1.0)).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn projection_beats_sampled_members() {
        let a = two_generator_set();
        let x = pt(&[0.0, -1.0, 2.0]);
        let d = a.dist(&x, &GaugeKind::TropLp(1.0)).unwrap();
        let g0 = a.generators().get(0);
        let g1 = a.generators().get(1);
        for i in 0..=20 {
            for j in 0..=20 {
                let l = -5.0 + 0.5 * i as f64;
                let m = -5.0 + 0.5 * j as f64;
                let y = max_combination(g0, g1, l, m).unwrap();
                let dy = gamma_p(&pt_diff(&x, &y), 1.0).unwrap();
                assert!(dy >= d - 1e-9);
            }
        }
    }

    fn pt_diff(x: &TorusPoint, y: &TorusPoint) -> TorusPoint {
        TorusPoint::new(x.diff(y).unwrap()).unwrap()
    }

    #[test]
    fn set_sites_single_point_sets() {
        let v = vec![1.0, -1.0, 0.0];
        let sets = vec![
            TropicalSet::from_rows(vec![v.clone()]).unwrap(),
            TropicalSet::from_rows(vec![v.clone()]).unwrap(),
        ];
        let report = solve_set_sites(
            &sets,
            &Aggregator::Sum,
            &GaugeKind::TropLp(1.0),
            &SubgradientOptions::default(),
        )
        .unwrap();
        assert!(report.optimum.class_eq(&pt(&v), 1e-6));
        assert!(report.objective < 1e-6);
    }
}
