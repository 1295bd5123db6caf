//! Arithmetic and geometry of the tropical projective torus.
//!
//! A point of the torus is a class of vectors in `R^n` modulo adding a
//! constant to every coordinate. All operations here accept any
//! representative and are invariant under that shift; outputs are returned
//! in whatever representative is most natural for the operation (stated per
//! function), with [`TorusPoint::canonical`] available to normalize.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance for equality and argmin tests on canonical representatives.
pub const EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    /// The torus of dimension 1 is a single point; nothing to compute.
    #[error("torus points need at least 2 coordinates, got {0}")]
    TooFewCoordinates(usize),
    #[error("coordinates must be finite")]
    NonFiniteCoordinate,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("point cloud must contain at least one point")]
    EmptyCloud,
}

/// A point of `R^n / R·(1,...,1)`, stored through one representative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TorusPoint {
    coords: Vec<f64>,
}

impl TorusPoint {
    /// Wraps a representative. Requires `n >= 2` finite entries.
    pub fn new(coords: Vec<f64>) -> Result<Self, GeometryError> {
        if coords.len() < 2 {
            return Err(GeometryError::TooFewCoordinates(coords.len()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::NonFiniteCoordinate);
        }
        Ok(Self { coords })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    /// The representative with all entries `>= 0` and minimum entry exactly 0.
    pub fn canonical(&self) -> TorusPoint {
        let m = min_entry(&self.coords);
        self.shifted(-m)
    }

    /// The representative whose entries sum to 0.
    pub fn h_normalize(&self) -> TorusPoint {
        let mean = self.coords.iter().sum::<f64>() / self.coords.len() as f64;
        self.shifted(-mean)
    }

    /// The representative `x + t·(1,...,1)`.
    pub fn shifted(&self, t: f64) -> TorusPoint {
        TorusPoint {
            coords: self.coords.iter().map(|c| c + t).collect(),
        }
    }

    /// Coordinatewise difference of the stored representatives.
    pub fn diff(&self, other: &TorusPoint) -> Result<Vec<f64>, GeometryError> {
        check_dims(self, other)?;
        Ok(self
            .coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| a - b)
            .collect())
    }

    /// Whether the two points are the same torus class within `eps`,
    /// i.e. their coordinate difference is a constant vector.
    pub fn class_eq(&self, other: &TorusPoint, eps: f64) -> bool {
        if self.dim() != other.dim() {
            return false;
        }
        let a = self.canonical();
        let b = other.canonical();
        a.coords
            .iter()
            .zip(&b.coords)
            .all(|(x, y)| (x - y).abs() <= eps)
    }
}

/// An ordered list of torus points of a common dimension.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointCloud {
    points: Vec<TorusPoint>,
}

impl PointCloud {
    pub fn new(points: Vec<TorusPoint>) -> Result<Self, GeometryError> {
        let first = points.first().ok_or(GeometryError::EmptyCloud)?;
        let dim = first.dim();
        for p in &points {
            if p.dim() != dim {
                return Err(GeometryError::DimensionMismatch(dim, p.dim()));
            }
        }
        Ok(Self { points })
    }

    /// Builds a cloud from raw rows.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, GeometryError> {
        let points = rows
            .into_iter()
            .map(TorusPoint::new)
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(points)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false // non-empty by construction
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    pub fn points(&self) -> &[TorusPoint] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TorusPoint> {
        self.points.iter()
    }

    pub fn get(&self, i: usize) -> &TorusPoint {
        &self.points[i]
    }
}

/// The geodesic segment `[a,b]` under the asymmetric distance: the set of
/// points through which that distance is additive. It is a box polytrope
/// with `n` distinguished min-tropical vertices.
#[derive(Debug, Clone)]
pub struct GeodesicSegment {
    a: TorusPoint,
    b: TorusPoint,
}

impl GeodesicSegment {
    pub fn new(a: TorusPoint, b: TorusPoint) -> Result<Self, GeometryError> {
        check_dims(&a, &b)?;
        Ok(Self { a, b })
    }

    pub fn endpoints(&self) -> (&TorusPoint, &TorusPoint) {
        (&self.a, &self.b)
    }

    /// The `n` min-tropical vertices of the segment.
    pub fn vertices(&self) -> Vec<TorusPoint> {
        segment_vertices(&self.a, &self.b).expect("dimensions checked at construction")
    }

    pub fn contains(&self, x: &TorusPoint, eps: f64) -> Result<bool, GeometryError> {
        geodesic_contains(&self.a, &self.b, x, eps)
    }
}

fn check_dims(a: &TorusPoint, b: &TorusPoint) -> Result<(), GeometryError> {
    if a.dim() != b.dim() {
        return Err(GeometryError::DimensionMismatch(a.dim(), b.dim()));
    }
    Ok(())
}

fn min_entry(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn max_entry(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Indices attaining the minimum of `vals` within `eps`.
pub(crate) fn argmin_set(vals: &[f64], eps: f64) -> Vec<usize> {
    let m = min_entry(vals);
    vals.iter()
        .enumerate()
        .filter(|(_, &v)| v <= m + eps)
        .map(|(i, _)| i)
        .collect()
}

/// Indices attaining the maximum of `vals` within `eps`.
pub(crate) fn argmax_set(vals: &[f64], eps: f64) -> Vec<usize> {
    let m = max_entry(vals);
    vals.iter()
        .enumerate()
        .filter(|(_, &v)| v >= m - eps)
        .map(|(i, _)| i)
        .collect()
}

/// The asymmetric tropical distance
/// `d(a,b) = sum_i (b_i - a_i) - n · min_j (b_j - a_j)`.
///
/// Non-negative, zero exactly on equal classes, invariant to the
/// representative of either argument, and satisfies the triangle inequality.
pub fn d_asym(a: &TorusPoint, b: &TorusPoint) -> Result<f64, GeometryError> {
    let d = b.diff(a)?;
    let n = d.len() as f64;
    Ok(d.iter().sum::<f64>() - n * min_entry(&d))
}

/// The symmetric tropical distance `max_i (b-a)_i - min_j (b-a)_j`
/// (the tropical L^infinity gauge).
pub fn d_sym(a: &TorusPoint, b: &TorusPoint) -> Result<f64, GeometryError> {
    let d = b.diff(a)?;
    Ok(max_entry(&d) - min_entry(&d))
}

/// Coordinatewise minimum of `a + lambda·1` and `b + mu·1`; sweeping the
/// scalars samples the min-tropical segment between the two classes.
pub fn min_combination(
    a: &TorusPoint,
    b: &TorusPoint,
    lambda: f64,
    mu: f64,
) -> Result<TorusPoint, GeometryError> {
    check_dims(a, b)?;
    let coords = a
        .coords
        .iter()
        .zip(&b.coords)
        .map(|(x, y)| (x + lambda).min(y + mu))
        .collect();
    Ok(TorusPoint { coords })
}

/// Max analogue of [`min_combination`].
pub fn max_combination(
    a: &TorusPoint,
    b: &TorusPoint,
    lambda: f64,
    mu: f64,
) -> Result<TorusPoint, GeometryError> {
    check_dims(a, b)?;
    let coords = a
        .coords
        .iter()
        .zip(&b.coords)
        .map(|(x, y)| (x + lambda).max(y + mu))
        .collect();
    Ok(TorusPoint { coords })
}

/// Coordinatewise max-tropical combination of a whole cloud with the given shifts.
pub fn max_combination_cloud(cloud: &PointCloud, shifts: &[f64]) -> TorusPoint {
    debug_assert_eq!(cloud.len(), shifts.len());
    let n = cloud.dim();
    let mut coords = vec![f64::NEG_INFINITY; n];
    for (p, &s) in cloud.iter().zip(shifts) {
        for (c, &v) in coords.iter_mut().zip(p.coords()) {
            *c = c.max(v + s);
        }
    }
    TorusPoint { coords }
}

/// Whether the asymmetric distance is additive through `x`, i.e. whether
/// `x` lies on the geodesic segment from `a` to `b`.
pub fn geodesic_contains(
    a: &TorusPoint,
    b: &TorusPoint,
    x: &TorusPoint,
    eps: f64,
) -> Result<bool, GeometryError> {
    let lhs = d_asym(a, x)? + d_asym(x, b)?;
    let rhs = d_asym(a, b)?;
    Ok((lhs - rhs).abs() <= eps)
}

/// The `n` min-tropical vertices of the geodesic segment from `a` to `b`:
/// `v_j = b - (b_j - a_j - min_l (b_l - a_l)) · e_j`.
pub fn segment_vertices(a: &TorusPoint, b: &TorusPoint) -> Result<Vec<TorusPoint>, GeometryError> {
    let d = b.diff(a)?;
    let m = min_entry(&d);
    Ok((0..d.len())
        .map(|j| {
            let mut coords = b.coords.clone();
            coords[j] -= d[j] - m;
            TorusPoint { coords }
        })
        .collect())
}

/// Membership of `x` in the max-tropical convex hull of `cloud`: true iff
/// every coordinate `k` attains `min_j (x_j - v_{ij})` for some site `v_i`,
/// equivalently the descent set of `x` is empty.
pub fn in_hull_max(cloud: &PointCloud, x: &TorusPoint, eps: f64) -> Result<bool, GeometryError> {
    let n = x.dim();
    if cloud.dim() != n {
        return Err(GeometryError::DimensionMismatch(cloud.dim(), n));
    }
    let mut covered = vec![false; n];
    for v in cloud.iter() {
        let d = x.diff(v)?;
        let m = min_entry(&d);
        for (k, &dk) in d.iter().enumerate() {
            if dk <= m + eps {
                covered[k] = true;
            }
        }
    }
    Ok(covered.into_iter().all(|c| c))
}

/// The descent set of `x` relative to the sites: coordinates that attain no
/// site's argmin. Empty exactly when `x` is in the max-tropical hull.
pub fn descent_set(cloud: &PointCloud, x: &TorusPoint, eps: f64) -> Result<Vec<usize>, GeometryError> {
    let n = x.dim();
    if cloud.dim() != n {
        return Err(GeometryError::DimensionMismatch(cloud.dim(), n));
    }
    let mut covered = vec![false; n];
    for v in cloud.iter() {
        let d = x.diff(v)?;
        let m = min_entry(&d);
        for (k, &dk) in d.iter().enumerate() {
            if dk <= m + eps {
                covered[k] = true;
            }
        }
    }
    Ok((0..n).filter(|&k| !covered[k]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(coords: &[f64]) -> TorusPoint {
        TorusPoint::new(coords.to_vec()).unwrap()
    }

    fn paper_sites() -> PointCloud {
        PointCloud::from_rows(vec![
            vec![0.0, 1.0, 1.0],
            vec![1.0, 0.0, 1.0],
            vec![3.0, 2.0, 0.0],
            vec![2.0, 3.0, 0.0],
        ])
        .unwrap()
    }

    #[test]
    fn canonical_subtracts_min() {
        assert_eq!(pt(&[3.0, 1.0, 2.0]).canonical(), pt(&[2.0, 0.0, 1.0]));
        assert_eq!(pt(&[0.0, 0.0, 0.0]).canonical(), pt(&[0.0, 0.0, 0.0]));
        assert_eq!(pt(&[-1.0, -1.0, 5.0]).canonical(), pt(&[0.0, 0.0, 6.0]));
    }

    #[test]
    fn h_normalize_subtracts_mean() {
        let p = pt(&[0.0, 1.0, 1.0]).h_normalize();
        for (got, want) in p.coords().iter().zip([-2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]) {
            assert!((got - want).abs() < EPS);
        }
        assert_eq!(pt(&[0.0, 0.0, 0.0]).h_normalize(), pt(&[0.0, 0.0, 0.0]));
        let q = pt(&[3.0, 2.0, 0.0]).h_normalize();
        for (got, want) in q.coords().iter().zip([4.0 / 3.0, 1.0 / 3.0, -5.0 / 3.0]) {
            assert!((got - want).abs() < EPS);
        }
        assert!(q.coords().iter().sum::<f64>().abs() < EPS);
    }

    #[test]
    fn dimension_one_rejected() {
        assert_eq!(
            TorusPoint::new(vec![1.0]),
            Err(GeometryError::TooFewCoordinates(1))
        );
    }

    #[test]
    fn non_finite_rejected() {
        assert_eq!(
            TorusPoint::new(vec![1.0, f64::NAN]),
            Err(GeometryError::NonFiniteCoordinate)
        );
    }

    #[test]
    fn d_asym_examples() {
        let zero = pt(&[0.0, 0.0, 0.0]);
        assert_eq!(d_asym(&zero, &zero).unwrap(), 0.0);
        assert_eq!(d_asym(&zero, &pt(&[0.0, 1.0, 2.0])).unwrap(), 3.0);
        assert_eq!(d_asym(&pt(&[0.0, 1.0, 2.0]), &zero).unwrap(), 3.0);
        // Asymmetry shows up off the symmetric configuration.
        assert_eq!(d_asym(&pt(&[0.0, 0.0, 1.0]), &zero).unwrap(), 2.0);
        assert_eq!(d_asym(&zero, &pt(&[0.0, 0.0, 1.0])).unwrap(), 1.0);
    }

    #[test]
    fn d_asym_dimension_mismatch() {
        let a = pt(&[0.0, 0.0]);
        let b = pt(&[0.0, 0.0, 0.0]);
        assert!(matches!(
            d_asym(&a, &b),
            Err(GeometryError::DimensionMismatch(3, 2))
        ));
    }

    #[test]
    fn d_sym_examples() {
        let zero = pt(&[0.0, 0.0, 0.0]);
        assert_eq!(d_sym(&zero, &zero).unwrap(), 0.0);
        assert_eq!(d_sym(&zero, &pt(&[0.0, 1.0, 2.0])).unwrap(), 2.0);
        assert_eq!(d_sym(&pt(&[0.0, 1.0, 1.0]), &pt(&[1.0, 0.0, 1.0])).unwrap(), 2.0);
        // symmetric by definition
        assert_eq!(d_sym(&pt(&[1.0, 0.0, 1.0]), &pt(&[0.0, 1.0, 1.0])).unwrap(), 2.0);
    }

    #[test]
    fn hull_membership_paper_instance() {
        let cloud = paper_sites();
        assert!(in_hull_max(&cloud, &pt(&[1.0, 1.0, 0.0]), EPS).unwrap());
        assert!(!in_hull_max(&cloud, &pt(&[-5.0, 0.0, 0.0]), EPS).unwrap());
        // a point is in its own hull
        let single = PointCloud::from_rows(vec![vec![0.5, -1.0, 2.0]]).unwrap();
        assert!(in_hull_max(&single, &pt(&[0.5, -1.0, 2.0]), EPS).unwrap());
    }

    #[test]
    fn hull_membership_brute_force_cross_check() {
        // Sample max-tropical combinations of the generators on a shift grid and
        // confirm none of them is near (-5,0,0), while (1,1,0) is hit.
        let cloud = paper_sites();
        let outside = pt(&[-5.0, 0.0, 0.0]);
        let inside = pt(&[1.0, 1.0, 0.0]);
        let mut hit_inside = false;
        let steps: Vec<f64> = (0..=16).map(|i| -4.0 + 0.5 * i as f64).collect();
        for &l1 in &steps {
            for &l2 in &steps {
                for &l3 in &steps {
                    for &l4 in &steps {
                        let comb = max_combination_cloud(&cloud, &[l1, l2, l3, l4]);
                        assert!(!comb.class_eq(&outside, 1e-6));
                        if comb.class_eq(&inside, 1e-9) {
                            hit_inside = true;
                        }
                    }
                }
            }
        }
        assert!(hit_inside);
    }

    #[test]
    fn geodesic_contains_examples() {
        let a = pt(&[0.0, 0.0, 0.0]);
        let b = pt(&[0.0, 1.0, 2.0]);
        assert!(geodesic_contains(&a, &b, &a, EPS).unwrap());
        assert!(geodesic_contains(&a, &b, &b, EPS).unwrap());
        assert!(geodesic_contains(&a, &b, &pt(&[0.0, 1.0, 1.0]), EPS).unwrap());
        assert!(!geodesic_contains(&a, &b, &pt(&[5.0, 0.0, 0.0]), EPS).unwrap());
    }

    #[test]
    fn segment_vertices_examples() {
        let a = pt(&[0.0, 0.0, 0.0]);
        let b = pt(&[0.0, 1.0, 2.0]);
        let vs = segment_vertices(&a, &b).unwrap();
        assert_eq!(vs[0], pt(&[0.0, 1.0, 2.0]));
        assert_eq!(vs[1], pt(&[0.0, 0.0, 2.0]));
        assert_eq!(vs[2], pt(&[0.0, 1.0, 0.0]));
        for v in &vs {
            assert!(geodesic_contains(&a, &b, v, EPS).unwrap());
        }
        // degenerate segment: all vertices coincide with the endpoints
        let vs = segment_vertices(&a, &a).unwrap();
        for v in &vs {
            assert!(v.class_eq(&a, EPS));
        }
    }

    #[test]
    fn segment_struct_members() {
        let seg = GeodesicSegment::new(pt(&[0.0, 0.0, 0.0]), pt(&[0.0, 1.0, 2.0])).unwrap();
        let (a, b) = seg.endpoints();
        assert!(seg.contains(a, EPS).unwrap());
        assert!(seg.contains(b, EPS).unwrap());
        for v in seg.vertices() {
            assert!(seg.contains(&v, EPS).unwrap());
        }
    }

    #[test]
    fn min_combination_examples() {
        let a = pt(&[0.0, 0.0, 0.0]);
        let b = pt(&[0.0, 1.0, 2.0]);
        assert_eq!(min_combination(&a, &b, 0.0, 0.0).unwrap(), pt(&[0.0, 0.0, 0.0]));
        assert_eq!(min_combination(&a, &b, 0.0, -1.0).unwrap(), pt(&[-1.0, 0.0, 0.0]));
        let dominated = min_combination(&a, &b, -10.0, 0.0).unwrap();
        assert_eq!(dominated, a.shifted(-10.0));
    }

    #[test]
    fn empty_cloud_rejected() {
        assert_eq!(PointCloud::new(vec![]).unwrap_err(), GeometryError::EmptyCloud);
    }

    #[test]
    fn descent_set_empty_iff_in_hull() {
        let cloud = paper_sites();
        assert!(descent_set(&cloud, &pt(&[1.0, 1.0, 0.0]), EPS).unwrap().is_empty());
        let d = descent_set(&cloud, &pt(&[1.0, 1.0, 2.0]), EPS).unwrap();
        assert_eq!(d, vec![2]);
    }
}
