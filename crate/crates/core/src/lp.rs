//! Dense two-phase simplex for small LPs over polyhedra `{x | A x <= b}`.
//!
//! Pivoting follows Bland's rule (lowest entering index, lowest leaving basis index on
//! ratio ties), which makes every result a deterministic function of the input.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Absolute feasibility tolerance on (normalized) constraint residuals.
pub const FEAS_TOL: f64 = 1e-8;
/// Chebyshev radius below which a polyhedron counts as empty or lower dimensional.
pub const EMPTY_RADIUS: f64 = 1e-9;
/// Tolerance used when matching normalized rows as duplicates.
pub const DUPLICATE_TOL: f64 = 1e-9;

const PIVOT_EPS: f64 = 1e-10;
const COST_EPS: f64 = 1e-11;
const RADIUS_CAP: f64 = 1e6;

/// `{x | A x <= b}`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polyhedron {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Polyhedron {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Self {
        assert_eq!(a.nrows(), b.len(), "polyhedron rows and offsets differ");
        Self { a, b }
    }

    pub fn from_rows(dim: usize, rows: &[(DVector<f64>, f64)]) -> Self {
        let mut a = DMatrix::zeros(rows.len(), dim);
        let mut b = DVector::zeros(rows.len());
        for (i, (normal, offset)) in rows.iter().enumerate() {
            a.set_row(i, &normal.transpose());
            b[i] = *offset;
        }
        Self { a, b }
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn nrows(&self) -> usize {
        self.a.nrows()
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.a.row(i).transpose()
    }

    /// Largest constraint violation `max_i (a_i x - b_i)`, or `-inf` without rows.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        (0..self.nrows())
            .map(|i| self.a.row(i).transpose().dot(x) - self.b[i])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.max_violation(x) <= tol
    }

    pub fn select_rows(&self, rows: &[usize]) -> Polyhedron {
        Polyhedron {
            a: self.a.select_rows(rows),
            b: DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.b[i])),
        }
    }

    /// Rows scaled to unit Euclidean norm; zero rows are left untouched.
    pub fn normalized(&self) -> Polyhedron {
        let mut out = self.clone();
        for i in 0..out.nrows() {
            let norm = out.a.row(i).norm();
            if norm > 0.0 {
                out.a.row_mut(i).scale_mut(1.0 / norm);
                out.b[i] /= norm;
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpOutcome {
    pub status: LpStatus,
    pub x: Option<DVector<f64>>,
    pub objective: Option<f64>,
}

impl LpOutcome {
    fn without_point(status: LpStatus) -> Self {
        Self { status, x: None, objective: None }
    }
}

struct Tableau {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    basis: Vec<usize>,
}

enum Phase {
    Done,
    Unbounded,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * (self.cols + 1) + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.cols)
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.cols + 1;
        let piv = self.data[r * w + c];
        for j in 0..w {
            self.data[r * w + j] /= piv;
        }
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let factor = self.data[i * w + c];
            if factor == 0.0 {
                continue;
            }
            for j in 0..w {
                self.data[i * w + j] -= factor * self.data[r * w + j];
            }
            self.data[i * w + c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Minimizes `cost^T y` over the current basis; columns with `allowed[j] == false`
    /// never enter.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool], max_iter: usize) -> Phase {
        for _ in 0..max_iter {
            // Bland: first column with negative reduced cost
            let mut entering = None;
            for j in 0..self.cols {
                if !allowed[j] || self.basis.contains(&j) {
                    continue;
                }
                let mut reduced = cost[j];
                for i in 0..self.rows {
                    reduced -= cost[self.basis[i]] * self.at(i, j);
                }
                if reduced < -COST_EPS {
                    entering = Some(j);
                    break;
                }
            }
            let Some(c) = entering else {
                return Phase::Done;
            };
            let mut leaving: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let coef = self.at(i, c);
                if coef > PIVOT_EPS {
                    let ratio = self.rhs(i) / coef;
                    leaving = match leaving {
                        None => Some((i, ratio)),
                        Some((r, best)) => {
                            if ratio < best - 1e-12 * best.abs().max(1.0)
                                || (ratio <= best + 1e-12 * best.abs().max(1.0)
                                    && self.basis[i] < self.basis[r])
                            {
                                Some((i, ratio))
                            } else {
                                Some((r, best))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leaving else {
                return Phase::Unbounded;
            };
            self.pivot(r, c);
        }
        // Bland's rule terminates; the cap only guards against numerical cycling.
        Phase::Done
    }
}

/// Minimizes `c^T x` over `poly` with `x` free.
pub fn lp_solve(c: &DVector<f64>, poly: &Polyhedron) -> LpOutcome {
    assert_eq!(c.len(), poly.dim(), "cost and polyhedron dimension differ");
    let d = poly.dim();
    // Scale rows to unit max-norm; drop identically zero rows.
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::with_capacity(poly.nrows());
    for i in 0..poly.nrows() {
        let scale = poly.a.row(i).amax();
        if scale <= 1e-14 {
            if poly.b[i] < -FEAS_TOL {
                return LpOutcome::without_point(LpStatus::Infeasible);
            }
            continue;
        }
        rows.push((poly.a.row(i).iter().map(|v| v / scale).collect(), poly.b[i] / scale));
    }
    let m = rows.len();
    let n_art = rows.iter().filter(|(_, b)| *b < 0.0).count();
    // columns: x+ (d), x- (d), slacks (m), artificials (n_art)
    let cols = 2 * d + m + n_art;
    let mut tab = Tableau {
        rows: m,
        cols,
        data: vec![0.0; m * (cols + 1)],
        basis: vec![0; m],
    };
    let w = cols + 1;
    let mut art = 0;
    for (i, (a, b)) in rows.iter().enumerate() {
        let sign = if *b < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            tab.data[i * w + j] = sign * a[j];
            tab.data[i * w + d + j] = -sign * a[j];
        }
        tab.data[i * w + 2 * d + i] = sign;
        tab.data[i * w + cols] = sign * b;
        if *b < 0.0 {
            let col = 2 * d + m + art;
            tab.data[i * w + col] = 1.0;
            tab.basis[i] = col;
            art += 1;
        } else {
            tab.basis[i] = 2 * d + i;
        }
    }
    let max_iter = 50_000 + 100 * (m + cols);
    let is_art = |j: usize| j >= 2 * d + m;

    if n_art > 0 {
        let cost: Vec<f64> = (0..cols).map(|j| if is_art(j) { 1.0 } else { 0.0 }).collect();
        let allowed = vec![true; cols];
        tab.optimize(&cost, &allowed, max_iter);
        let infeas: f64 = (0..m).filter(|&i| is_art(tab.basis[i])).map(|i| tab.rhs(i)).sum();
        let bscale = rows.iter().fold(1.0f64, |acc, (_, b)| acc.max(b.abs()));
        if infeas > FEAS_TOL * bscale {
            return LpOutcome::without_point(LpStatus::Infeasible);
        }
        // drive zero-level artificials out of the basis where possible
        for i in 0..m {
            if is_art(tab.basis[i]) {
                if let Some(j) = (0..2 * d + m).find(|&j| tab.at(i, j).abs() > PIVOT_EPS) {
                    tab.pivot(i, j);
                }
            }
        }
    }

    let mut cost = vec![0.0; cols];
    for j in 0..d {
        cost[j] = c[j];
        cost[d + j] = -c[j];
    }
    let allowed: Vec<bool> = (0..cols).map(|j| !is_art(j)).collect();
    if let Phase::Unbounded = tab.optimize(&cost, &allowed, max_iter) {
        return LpOutcome::without_point(LpStatus::Unbounded);
    }
    let mut x = DVector::zeros(d);
    for i in 0..m {
        let bj = tab.basis[i];
        if bj < d {
            x[bj] += tab.rhs(i);
        } else if bj < 2 * d {
            x[bj - d] -= tab.rhs(i);
        }
    }
    let objective = c.dot(&x);
    LpOutcome { status: LpStatus::Optimal, x: Some(x), objective: Some(objective) }
}

/// Center and radius of the largest inscribed Euclidean ball.
///
/// A radius `<= 0` signals an empty or lower-dimensional polyhedron; `-inf` is returned
/// when a zero row is violated. Radii are capped at `1e6` for unbounded sets.
pub fn chebyshev_center(poly: &Polyhedron) -> (DVector<f64>, f64) {
    let d = poly.dim();
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::with_capacity(poly.nrows() + 1);
    for i in 0..poly.nrows() {
        let normal = poly.row(i);
        let norm = normal.norm();
        if norm <= 1e-14 {
            if poly.b[i] < -FEAS_TOL {
                return (DVector::zeros(d), f64::NEG_INFINITY);
            }
            continue;
        }
        let mut ext = DVector::zeros(d + 1);
        ext.rows_mut(0, d).copy_from(&normal);
        ext[d] = norm;
        rows.push((ext, poly.b[i]));
    }
    let mut cap = DVector::zeros(d + 1);
    cap[d] = 1.0;
    rows.push((cap, RADIUS_CAP));
    let lifted = Polyhedron::from_rows(d + 1, &rows);
    let mut c = DVector::zeros(d + 1);
    c[d] = -1.0;
    let out = lp_solve(&c, &lifted);
    match (out.status, out.x) {
        (LpStatus::Optimal, Some(x)) => (x.rows(0, d).into_owned(), x[d]),
        _ => (DVector::zeros(d), f64::NEG_INFINITY),
    }
}

/// Whether row `row` can be dropped without changing the set.
pub fn is_redundant(poly: &Polyhedron, row: usize) -> bool {
    let norm = poly.row(row).norm();
    if norm <= 1e-14 {
        return poly.b[row] >= -FEAS_TOL;
    }
    let others: Vec<usize> = (0..poly.nrows()).filter(|&i| i != row).collect();
    redundant_against(&poly.normalized(), row, &others)
}

/// LP test of normalized row `row` against the normalized rows `others`.
fn redundant_against(unit: &Polyhedron, row: usize, others: &[usize]) -> bool {
    let mut sub = unit.select_rows(others);
    // relaxed copy of the tested row keeps the LP bounded
    let m = sub.nrows();
    sub.a = sub.a.insert_row(m, 0.0);
    sub.a.set_row(others.len(), &unit.a.row(row));
    sub.b = sub.b.push(unit.b[row] + 1.0);
    let c = -unit.row(row);
    let out = lp_solve(&c, &sub);
    match out.status {
        LpStatus::Infeasible => true,
        LpStatus::Unbounded => false,
        LpStatus::Optimal => -out.objective.unwrap() <= unit.b[row] + FEAS_TOL,
    }
}

/// Indices of a minimal set of rows describing the same polyhedron.
///
/// Zero rows and exact duplicates (after unit normalization, within `1e-9`) are removed
/// first, keeping the lowest index; the remaining rows are tested one at a time by LP.
pub fn minimal_rows(poly: &Polyhedron) -> Result<Vec<usize>> {
    let (_, radius) = chebyshev_center(poly);
    if !(radius >= EMPTY_RADIUS) {
        return Err(Error::EmptyPolyhedron);
    }
    let unit = poly.normalized();
    let mut kept: Vec<usize> = Vec::new();
    for i in 0..unit.nrows() {
        if unit.a.row(i).norm() <= 1e-14 {
            continue;
        }
        let dup = kept.iter().any(|&j| {
            (unit.a.row(i) - unit.a.row(j)).amax() <= DUPLICATE_TOL
                && (unit.b[i] - unit.b[j]).abs() <= DUPLICATE_TOL
        });
        if !dup {
            kept.push(i);
        }
    }
    let mut pos = 0;
    while pos < kept.len() {
        let row = kept[pos];
        let others: Vec<usize> = kept.iter().copied().filter(|&k| k != row).collect();
        if redundant_against(&unit, row, &others) {
            kept.remove(pos);
        } else {
            pos += 1;
        }
    }
    Ok(kept)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ParamDomain;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_box(d: usize) -> Polyhedron {
        ParamDomain::bounds(d, -1.0, 1.0).polyhedron()
    }

    #[test]
    fn box_minimum() {
        let out = lp_solve(&DVector::from_vec(vec![1.0, 0.0]), &unit_box(2));
        assert_eq!(out.status, LpStatus::Optimal);
        assert_abs_diff_eq!(out.objective.unwrap(), -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.x.unwrap()[0], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn half_line_is_unbounded() {
        let poly = Polyhedron::new(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, 1.0));
        assert_eq!(lp_solve(&DVector::from_element(1, 1.0), &poly).status, LpStatus::Unbounded);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let poly = Polyhedron::new(
            DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            DVector::from_vec(vec![-1.0, -1.0]),
        );
        assert_eq!(lp_solve(&DVector::from_element(1, 1.0), &poly).status, LpStatus::Infeasible);
    }

    #[test]
    fn chebyshev_of_box_and_degenerate_interval() {
        let (c, r) = chebyshev_center(&unit_box(2));
        assert_abs_diff_eq!(r, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.amax(), 0.0, epsilon = 1e-12);
        let flat = Polyhedron::new(DMatrix::from_row_slice(2, 1, &[1.0, -1.0]), DVector::zeros(2));
        let (_, r) = chebyshev_center(&flat);
        assert_abs_diff_eq!(r, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn chebyshev_of_simplex() {
        let poly = Polyhedron::new(
            DMatrix::from_row_slice(3, 2, &[-1.0, 0.0, 0.0, -1.0, 1.0, 1.0]),
            DVector::from_vec(vec![0.0, 0.0, 1.0]),
        );
        let (c, r) = chebyshev_center(&poly);
        let expected = 1.0 / (2.0 + 2f64.sqrt());
        assert_abs_diff_eq!(r, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(c[0], expected, epsilon = 1e-12);
        assert_abs_diff_eq!(c[1], expected, epsilon = 1e-12);
    }

    #[test]
    fn redundancy_on_box() {
        let mut rows: Vec<(DVector<f64>, f64)> = (0..4).map(|i| (unit_box(2).row(i), 1.0)).collect();
        rows.push((DVector::from_vec(vec![1.0, 0.0]), 2.0));
        let poly = Polyhedron::from_rows(2, &rows);
        assert!(is_redundant(&poly, 4));
        assert!(!is_redundant(&poly, 0));
        assert_eq!(minimal_rows(&poly).unwrap(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn duplicate_row_dropped() {
        let mut rows: Vec<(DVector<f64>, f64)> = (0..4).map(|i| (unit_box(2).row(i), 1.0)).collect();
        rows.insert(1, (DVector::from_vec(vec![2.0, 0.0]), 2.0));
        let poly = Polyhedron::from_rows(2, &rows);
        assert_eq!(minimal_rows(&poly).unwrap(), vec![0, 2, 3, 4]);
    }

    #[test]
    fn minimal_rows_of_empty_set_fails() {
        let poly = Polyhedron::new(DMatrix::from_row_slice(2, 1, &[1.0, -1.0]), DVector::zeros(2));
        assert_eq!(minimal_rows(&poly), Err(Error::EmptyPolyhedron));
    }

    fn random_bounded(rng: &mut ChaCha8Rng, d: usize, m: usize) -> Polyhedron {
        // random halfspaces around the origin plus a box to keep it bounded
        let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
        for i in 0..d {
            let mut e = DVector::zeros(d);
            e[i] = 1.0;
            rows.push((e.clone(), 2.0));
            rows.push((-e, 2.0));
        }
        while rows.len() < m {
            let a = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
            rows.push((a, rng.random_range(0.2..1.5)));
        }
        Polyhedron::from_rows(d, &rows)
    }

    #[test]
    fn lp_matches_vertex_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..40 {
            let poly = random_bounded(&mut rng, 4, 12);
            let c = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
            let out = lp_solve(&c, &poly);
            assert_eq!(out.status, LpStatus::Optimal);
            let oracle = vertex_oracle::min_over_vertices(&c, &poly).unwrap();
            assert_abs_diff_eq!(out.objective.unwrap(), oracle, epsilon = 1e-8);
            assert!(poly.contains(out.x.as_ref().unwrap(), 1e-8));
        }
    }

    #[test]
    fn redundancy_matches_vertex_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let poly = random_bounded(&mut rng, 3, 10);
            let verts = vertex_oracle::vertices(&poly);
            for row in 0..poly.nrows() {
                // a row is irredundant iff dropping it lets some vertex of the rest violate it
                let others: Vec<usize> = (0..poly.nrows()).filter(|&i| i != row).collect();
                // a large box stands in for unboundedness of the remaining rows
                let mut rest = poly.select_rows(&others);
                let big = ParamDomain::bounds(3, -100.0, 100.0);
                rest.a = DMatrix::from_fn(rest.nrows() + 6, 3, |i, j| {
                    if i < others.len() { rest.a[(i, j)] } else { big.a[(i - others.len(), j)] }
                });
                rest.b = DVector::from_fn(others.len() + 6, |i, _| {
                    if i < others.len() { rest.b[i] } else { big.b[i - others.len()] }
                });
                let rest_verts = vertex_oracle::vertices(&rest);
                let normal = poly.row(row);
                let norm = normal.norm();
                let oracle_redundant =
                    rest_verts.iter().all(|v| (normal.dot(v) - poly.b[row]) / norm <= 1e-8);
                assert_eq!(is_redundant(&poly, row), oracle_redundant, "row {row} of {poly:?}");
                let _ = &verts;
            }
        }
    }

    proptest! {
        #[test]
        fn minimal_rows_preserve_membership(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let poly = random_bounded(&mut rng, 2, 9);
            let kept = minimal_rows(&poly).unwrap();
            let reduced = poly.select_rows(&kept);
            for _ in 0..2000 {
                let x = DVector::from_fn(2, |_, _| rng.random_range(-2.5..2.5));
                // skip points within tolerance of a boundary
                if poly.max_violation(&x).abs() < 1e-7 { continue; }
                prop_assert_eq!(poly.contains(&x, 0.0), reduced.contains(&x, 0.0));
            }
        }
    }
}
