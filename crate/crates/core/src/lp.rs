//! Dense two-phase simplex solver with Bland's anti-cycling pivot rule.
//!
//! The location problems solved exactly in this crate produce tiny dense
//! programs (at most a few hundred rows), so a textbook tableau method with
//! deterministic pivoting is the right trade: exactness and reproducibility
//! over speed.

use thiserror::Error;

const EPS_PIVOT: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;
const MAX_PIVOTS: usize = 100_000;

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("malformed linear program: {0}")]
    Malformed(String),
    #[error("pivot limit exceeded")]
    PivotLimit,
}

/// A linear program `minimize c·x` subject to inequality rows `A x <= b`,
/// equality rows, and per-variable bounds (`None` means unbounded).
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    num_vars: usize,
    objective: Vec<f64>,
    leq: Vec<(Vec<f64>, f64)>,
    eq: Vec<(Vec<f64>, f64)>,
    bounds: Vec<(Option<f64>, Option<f64>)>,
}

impl LinearProgram {
    /// A program over `num_vars` free variables with zero objective.
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            objective: vec![0.0; num_vars],
            leq: Vec::new(),
            eq: Vec::new(),
            bounds: vec![(None, None); num_vars],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn set_objective(&mut self, c: Vec<f64>) {
        assert_eq!(c.len(), self.num_vars);
        self.objective = c;
    }

    pub fn add_leq(&mut self, a: Vec<f64>, b: f64) {
        assert_eq!(a.len(), self.num_vars);
        self.leq.push((a, b));
    }

    pub fn add_geq(&mut self, a: Vec<f64>, b: f64) {
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        self.add_leq(neg, -b);
    }

    pub fn add_eq(&mut self, a: Vec<f64>, b: f64) {
        assert_eq!(a.len(), self.num_vars);
        self.eq.push((a, b));
    }

    pub fn set_bounds(&mut self, var: usize, lower: Option<f64>, upper: Option<f64>) {
        self.bounds[var] = (lower, upper);
    }
}

/// An optimal basic solution.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
    pub pivots: usize,
}

/// How an original variable is encoded in standard form.
enum VarMap {
    /// free variable split as difference of two non-negative ones
    Split(usize, usize),
    /// `x = offset + sign * z` with `z >= 0`
    Affine { col: usize, offset: f64, sign: f64 },
}

/// Solves the program to optimality. Reports `Infeasible` or `Unbounded`
/// when the instance has no optimal basic solution.
pub fn simplex_solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    if lp.num_vars == 0 {
        return Err(LpError::Malformed("no variables".into()));
    }
    let finite = |v: &f64| v.is_finite();
    if !lp.objective.iter().all(finite)
        || !lp.leq.iter().all(|(a, b)| a.iter().all(finite) && b.is_finite())
        || !lp.eq.iter().all(|(a, b)| a.iter().all(finite) && b.is_finite())
    {
        return Err(LpError::Malformed("non-finite coefficient".into()));
    }

    // Standard-form variable encoding.
    let mut maps = Vec::with_capacity(lp.num_vars);
    let mut ncols = 0usize;
    let mut extra_rows: Vec<(usize, f64)> = Vec::new(); // (col, cap) for two-sided bounds
    for &(lo, hi) in &lp.bounds {
        match (lo, hi) {
            (None, None) => {
                maps.push(VarMap::Split(ncols, ncols + 1));
                ncols += 2;
            }
            (Some(l), None) => {
                maps.push(VarMap::Affine { col: ncols, offset: l, sign: 1.0 });
                ncols += 1;
            }
            (None, Some(u)) => {
                maps.push(VarMap::Affine { col: ncols, offset: u, sign: -1.0 });
                ncols += 1;
            }
            (Some(l), Some(u)) => {
                if u < l {
                    return Err(LpError::Infeasible);
                }
                maps.push(VarMap::Affine { col: ncols, offset: l, sign: 1.0 });
                extra_rows.push((ncols, u - l));
                ncols += 1;
            }
        }
    }
    let struct_cols = ncols;

    // Rows in standard variables: (coefficients, rhs, needs_slack).
    let mut rows: Vec<(Vec<f64>, f64, bool)> = Vec::new();
    let mut expand = |a: &[f64], b: f64, slack: bool, rows: &mut Vec<(Vec<f64>, f64, bool)>| {
        let mut coeffs = vec![0.0; struct_cols];
        let mut rhs = b;
        for (ai, map) in a.iter().zip(&maps) {
            match map {
                VarMap::Split(p, m) => {
                    coeffs[*p] += ai;
                    coeffs[*m] -= ai;
                }
                VarMap::Affine { col, offset, sign } => {
                    coeffs[*col] += ai * sign;
                    rhs -= ai * offset;
                }
            }
        }
        rows.push((coeffs, rhs, slack));
    };
    for (a, b) in &lp.leq {
        expand(a, *b, true, &mut rows);
    }
    for (a, b) in &lp.eq {
        expand(a, *b, false, &mut rows);
    }
    for &(col, cap) in &extra_rows {
        let mut coeffs = vec![0.0; struct_cols];
        coeffs[col] = 1.0;
        rows.push((coeffs, cap, true));
    }

    let nrows = rows.len();
    let nslack = rows.iter().filter(|(_, _, s)| *s).count();
    let total = struct_cols + nslack + nrows; // artificials on every row

    // Dense tableau, rhs in the last column; artificials form the basis.
    let mut tab = vec![vec![0.0; total + 1]; nrows];
    let mut basis = vec![0usize; nrows];
    let mut slack_idx = struct_cols;
    for (r, (coeffs, rhs, slack)) in rows.into_iter().enumerate() {
        let row = &mut tab[r];
        row[..struct_cols].copy_from_slice(&coeffs);
        row[total] = rhs;
        if slack {
            row[slack_idx] = 1.0;
            slack_idx += 1;
        }
        if row[total] < 0.0 {
            for v in row.iter_mut() {
                *v = -*v;
            }
        }
        let art = struct_cols + nslack + r;
        row[art] = 1.0;
        basis[r] = art;
    }
    let art_start = struct_cols + nslack;

    let mut pivots = 0usize;

    // Phase 1: minimize the sum of artificials.
    let mut reduced = vec![0.0; total + 1];
    for row in &tab {
        for (rj, v) in reduced.iter_mut().zip(row) {
            *rj -= v;
        }
    }
    for j in art_start..total {
        reduced[j] += 1.0;
    }
    run_pivots(&mut tab, &mut basis, &mut reduced, total, None, &mut pivots)?;
    let phase1_obj: f64 = tab
        .iter()
        .enumerate()
        .map(|(r, row)| if basis[r] >= art_start { row[total] } else { 0.0 })
        .sum();
    if phase1_obj > FEAS_TOL {
        return Err(LpError::Infeasible);
    }

    // Drive remaining artificials out of the basis; drop redundant rows.
    let mut keep = vec![true; tab.len()];
    for r in 0..tab.len() {
        if basis[r] < art_start {
            continue;
        }
        let col = (0..art_start).find(|&j| tab[r][j].abs() > EPS_PIVOT);
        match col {
            Some(j) => {
                pivot(&mut tab, &mut reduced, r, j, total);
                basis[r] = j;
                pivots += 1;
            }
            None => keep[r] = false,
        }
    }
    if keep.iter().any(|k| !k) {
        let mut nt = Vec::new();
        let mut nb = Vec::new();
        for (r, k) in keep.iter().enumerate() {
            if *k {
                nt.push(tab[r].clone());
                nb.push(basis[r]);
            }
        }
        tab = nt;
        basis = nb;
    }

    // Phase 2: the real objective over structural columns.
    let mut cost = vec![0.0; total + 1];
    for (map, c) in maps.iter().zip(&lp.objective) {
        match map {
            VarMap::Split(p, m) => {
                cost[*p] += c;
                cost[*m] -= c;
            }
            VarMap::Affine { col, sign, .. } => {
                cost[*col] += c * sign;
            }
        }
    }
    let mut reduced = cost;
    for (r, row) in tab.iter().enumerate() {
        let cb = reduced[basis[r]];
        if cb != 0.0 {
            for (rj, v) in reduced.iter_mut().zip(row) {
                *rj -= cb * v;
            }
        }
    }
    run_pivots(&mut tab, &mut basis, &mut reduced, total, Some(art_start), &mut pivots)?;

    // Read the standard-form solution and map it back.
    let mut z = vec![0.0; total];
    for (r, &b) in basis.iter().enumerate() {
        if b < total {
            z[b] = tab[r][total];
        }
    }
    let mut x = vec![0.0; lp.num_vars];
    for (xi, map) in x.iter_mut().zip(&maps) {
        *xi = match map {
            VarMap::Split(p, m) => z[*p] - z[*m],
            VarMap::Affine { col, offset, sign } => offset + sign * z[*col],
        };
    }
    let value = lp.objective.iter().zip(&x).map(|(c, xi)| c * xi).sum();
    Ok(LpSolution { value, x, pivots })
}

/// Bland's rule: enter the lowest-index improving column, leave by minimum
/// ratio with ties broken by the lowest basic variable index.
fn run_pivots(
    tab: &mut [Vec<f64>],
    basis: &mut [usize],
    reduced: &mut [f64],
    total: usize,
    forbid_from: Option<usize>,
    pivots: &mut usize,
) -> Result<(), LpError> {
    loop {
        let limit = forbid_from.unwrap_or(total);
        let entering = (0..limit).find(|&j| reduced[j] < -EPS_PIVOT);
        let Some(j) = entering else {
            return Ok(());
        };
        let mut leave: Option<(usize, f64)> = None;
        for (r, row) in tab.iter().enumerate() {
            if row[j] > EPS_PIVOT {
                let ratio = row[total] / row[j];
                match leave {
                    None => leave = Some((r, ratio)),
                    Some((br, bratio)) => {
                        if ratio < bratio - EPS_PIVOT
                            || (ratio < bratio + EPS_PIVOT && basis[r] < basis[br])
                        {
                            leave = Some((r, ratio));
                        }
                    }
                }
            }
        }
        let Some((r, _)) = leave else {
            return Err(LpError::Unbounded);
        };
        pivot(tab, reduced, r, j, total);
        basis[r] = j;
        *pivots += 1;
        if *pivots > MAX_PIVOTS {
            return Err(LpError::PivotLimit);
        }
    }
}

fn pivot(tab: &mut [Vec<f64>], reduced: &mut [f64], r: usize, j: usize, total: usize) {
    let piv = tab[r][j];
    for v in tab[r].iter_mut() {
        *v /= piv;
    }
    let pivot_row = tab[r].clone();
    for (i, row) in tab.iter_mut().enumerate() {
        if i != r && row[j].abs() > 0.0 {
            let factor = row[j];
            for (v, p) in row.iter_mut().zip(&pivot_row) {
                *v -= factor * p;
            }
            row[j] = 0.0; // exact after elimination
        }
    }
    let factor = reduced[j];
    if factor != 0.0 {
        for (v, p) in reduced.iter_mut().zip(&pivot_row) {
            *v -= factor * p;
        }
        reduced[j] = 0.0;
    }
    let _ = total;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_bound_program() {
        // min t subject to t >= 1
        let mut lp = LinearProgram::new(1);
        lp.set_objective(vec![1.0]);
        lp.add_geq(vec![1.0], 1.0);
        let sol = simplex_solve(&lp).unwrap();
        assert!((sol.value - 1.0).abs() < 1e-9);
        assert!((sol.x[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn two_var_vertex() {
        // min -x - y s.t. x + y <= 4, x <= 3, y <= 2, x,y >= 0
        let mut lp = LinearProgram::new(2);
        lp.set_objective(vec![-1.0, -1.0]);
        lp.add_leq(vec![1.0, 1.0], 4.0);
        lp.set_bounds(0, Some(0.0), Some(3.0));
        lp.set_bounds(1, Some(0.0), Some(2.0));
        let sol = simplex_solve(&lp).unwrap();
        assert!((sol.value + 4.0).abs() < 1e-9);
    }

    #[test]
    fn equality_with_free_vars() {
        // min x1 + 2 x2 s.t. x1 + x2 = 1 (free vars): optimum at x1 = 1 is not
        // bounded from below? x1 = 1 - x2, objective = 1 + x2 -> unbounded below.
        let mut lp = LinearProgram::new(2);
        lp.set_objective(vec![1.0, 2.0]);
        lp.add_eq(vec![1.0, 1.0], 1.0);
        assert_eq!(simplex_solve(&lp).unwrap_err(), LpError::Unbounded);
    }

    #[test]
    fn infeasible_program() {
        let mut lp = LinearProgram::new(1);
        lp.set_objective(vec![1.0]);
        lp.add_leq(vec![1.0], 0.0);
        lp.add_geq(vec![1.0], 1.0);
        assert_eq!(simplex_solve(&lp).unwrap_err(), LpError::Infeasible);
    }

    #[test]
    fn degenerate_vertices_terminate() {
        // Highly degenerate square: many redundant constraints through one vertex.
        let mut lp = LinearProgram::new(2);
        lp.set_objective(vec![1.0, 1.0]);
        lp.add_geq(vec![1.0, 0.0], 0.0);
        lp.add_geq(vec![0.0, 1.0], 0.0);
        lp.add_geq(vec![1.0, 1.0], 0.0);
        lp.add_geq(vec![1.0, 2.0], 0.0);
        lp.add_geq(vec![2.0, 1.0], 0.0);
        let sol = simplex_solve(&lp).unwrap();
        assert!(sol.value.abs() < 1e-9);
    }
}
