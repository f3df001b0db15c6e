//! Problem and solution data model.
//!
//! Two problem forms are used. [`MpQpRawProblem`] carries a parameter-dependent
//! linear cost term
//!
//! ```text
//!     min_U  1/2 U^T H U + p^T g U    s.t.  G U <= b + E p,   p in Theta
//! ```
//!
//! and [`MpQpProblem`] is the standard form obtained with `z = U + H^{-1} g^T p`:
//!
//! ```text
//!     min_z  1/2 z^T H z              s.t.  G z <= b + S p,   p in Theta
//! ```
//!
//! Constraint indices are 0-based in memory and 1-based in every serialized artifact.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lp::{self, LpStatus, Polyhedron};
use crate::numerics::{self, CholeskyFactor};

/// Polyhedral parameter domain `{p | A p <= b}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamDomain {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl ParamDomain {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::DimensionMismatch(format!(
                "domain has {} normals and {} offsets",
                a.nrows(),
                b.len()
            )));
        }
        Ok(Self { a, b })
    }

    /// The box `lo <= p_i <= hi` in `dim` dimensions.
    pub fn bounds(dim: usize, lo: f64, hi: f64) -> Self {
        let mut a = DMatrix::zeros(2 * dim, dim);
        let mut b = DVector::zeros(2 * dim);
        for i in 0..dim {
            a[(i, i)] = 1.0;
            b[i] = hi;
            a[(dim + i, i)] = -1.0;
            b[dim + i] = -lo;
        }
        Self { a, b }
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn nrows(&self) -> usize {
        self.a.nrows()
    }

    pub fn polyhedron(&self) -> Polyhedron {
        Polyhedron::new(self.a.clone(), self.b.clone())
    }

    pub fn contains(&self, p: &DVector<f64>, tol: f64) -> bool {
        (0..self.nrows()).all(|i| self.a.row(i).transpose().dot(p) <= self.b[i] + tol)
    }

    /// Checks nonemptiness and boundedness with one LP per coordinate direction and sign.
    pub fn is_bounded(&self) -> bool {
        let poly = self.polyhedron();
        let d = self.dim();
        for k in 0..d {
            for sign in [1.0, -1.0] {
                let mut c = DVector::zeros(d);
                c[k] = sign;
                if lp::lp_solve(&c, &poly).status != LpStatus::Optimal {
                    return false;
                }
            }
        }
        true
    }
}

/// mpQP with a parameter-dependent linear cost term.
#[derive(Clone, Debug, PartialEq)]
pub struct MpQpRawProblem {
    pub h: DMatrix<f64>,
    /// Cross term, `np x nz`.
    pub g: DMatrix<f64>,
    pub g_con: DMatrix<f64>,
    pub b: DVector<f64>,
    pub e: DMatrix<f64>,
    pub theta: ParamDomain,
}

/// Standard-form mpQP `min 1/2 z^T H z  s.t.  G z <= b + S p`.
#[derive(Clone, Debug, PartialEq)]
pub struct MpQpProblem {
    pub h: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub b: DVector<f64>,
    pub s: DMatrix<f64>,
    pub theta: ParamDomain,
}

impl MpQpProblem {
    pub fn new(
        h: DMatrix<f64>,
        g: DMatrix<f64>,
        b: DVector<f64>,
        s: DMatrix<f64>,
        theta: ParamDomain,
    ) -> Result<Self> {
        let problem = Self { h, g, b, s, theta };
        problem.check_dims()?;
        Ok(problem)
    }

    pub fn nz(&self) -> usize {
        self.h.nrows()
    }

    pub fn nc(&self) -> usize {
        self.g.nrows()
    }

    pub fn np(&self) -> usize {
        self.s.ncols()
    }

    fn check_dims(&self) -> Result<()> {
        let (nz, nc, np) = (self.h.nrows(), self.g.nrows(), self.s.ncols());
        let mut issues = Vec::new();
        if self.h.ncols() != nz {
            issues.push(format!("H is {}x{}", nz, self.h.ncols()));
        }
        if self.g.ncols() != nz {
            issues.push(format!("G has {} columns, expected {nz}", self.g.ncols()));
        }
        if self.b.len() != nc {
            issues.push(format!("b has {} entries, expected {nc}", self.b.len()));
        }
        if self.s.nrows() != nc {
            issues.push(format!("S has {} rows, expected {nc}", self.s.nrows()));
        }
        if self.theta.dim() != np {
            issues.push(format!("domain has dimension {}, expected {np}", self.theta.dim()));
        }
        if self.theta.a.nrows() != self.theta.b.len() {
            issues.push("domain normals and offsets differ in length".into());
        }
        if nc == 0 {
            issues.push("problem has no constraints".into());
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(issues.join("; ")))
        }
    }

    /// Cholesky factor of `H`.
    pub fn h_factor(&self) -> Result<CholeskyFactor> {
        numerics::cholesky(&self.h)
    }

    /// Keeps only the listed constraint rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> MpQpProblem {
        MpQpProblem {
            h: self.h.clone(),
            g: self.g.select_rows(rows),
            b: DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.b[i])),
            s: self.s.select_rows(rows),
            theta: self.theta.clone(),
        }
    }
}

/// Affine back-map from the standard-form optimizer to the raw one: `U = z - shift * p`.
#[derive(Clone, Debug, PartialEq)]
pub struct StandardForm {
    pub problem: MpQpProblem,
    /// `H^{-1} g^T`, `nz x np`.
    pub shift: DMatrix<f64>,
}

impl StandardForm {
    pub fn raw_optimizer(&self, z: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
        z - &self.shift * p
    }
}

/// Eliminates the linear cost term with `z = U + H^{-1} g^T p`, giving `S = E + G H^{-1} g^T`.
pub fn transform_to_standard(raw: &MpQpRawProblem) -> Result<StandardForm> {
    let factor = numerics::cholesky(&raw.h)?;
    let shift = factor.solve(&raw.g.transpose())?;
    let s = &raw.e + &raw.g_con * &shift;
    let problem = MpQpProblem::new(raw.h.clone(), raw.g_con.clone(), raw.b.clone(), s, raw.theta.clone())?;
    Ok(StandardForm { problem, shift })
}

/// Outcome of [`validate`]; never mutates the problem.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub dims_ok: bool,
    pub dims_message: Option<String>,
    /// Smallest Cholesky pivot of `H` relative to its largest diagonal entry.
    pub pd_margin: Option<f64>,
    pub positive_definite: bool,
    pub theta_bounded: bool,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.dims_ok && self.positive_definite && self.theta_bounded
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let flag = |ok: bool| if ok { "ok" } else { "FAIL" };
        write!(
            f,
            "dimensions: {}{}, positive definite: {}",
            flag(self.dims_ok),
            self.dims_message.as_deref().map(|m| format!(" ({m})")).unwrap_or_default(),
            flag(self.positive_definite)
        )?;
        if let Some(m) = self.pd_margin {
            write!(f, " (margin {m:.3e})")?;
        }
        write!(f, ", domain bounded: {}", flag(self.theta_bounded))
    }
}

pub fn validate(problem: &MpQpProblem) -> ValidationReport {
    let dims = problem.check_dims();
    let dims_ok = dims.is_ok();
    let square = problem.h.nrows() == problem.h.ncols();
    let symmetric = square && numerics::max_abs(&(&problem.h - problem.h.transpose())) <= 1e-12 * numerics::max_abs(&problem.h).max(1.0);
    let (positive_definite, pd_margin) = if symmetric {
        match numerics::cholesky(&problem.h) {
            Ok(f) => {
                let max_diag = problem.h.diagonal().iter().fold(0.0f64, |a, &d| a.max(d.abs()));
                (true, Some(f.min_pivot() / max_diag))
            }
            Err(_) => (false, None),
        }
    } else {
        (false, None)
    };
    let theta_bounded = problem.theta.a.nrows() == problem.theta.b.len()
        && problem.theta.dim() > 0
        && problem.theta.is_bounded();
    ValidationReport {
        dims_ok,
        dims_message: dims.err().map(|e| e.to_string()),
        pd_margin,
        positive_definite,
        theta_bounded,
    }
}

/// Strictly increasing list of constraint indices (0-based).
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActiveSet(Vec<usize>);

impl ActiveSet {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self(indices)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.binary_search(&j).is_ok()
    }

    /// Position of `j` inside the sorted list.
    pub fn position(&self, j: usize) -> Option<usize> {
        self.0.binary_search(&j).ok()
    }

    pub fn with(&self, j: usize) -> Self {
        let mut v = self.0.clone();
        if let Err(pos) = v.binary_search(&j) {
            v.insert(pos, j);
        }
        Self(v)
    }

    pub fn without(&self, j: usize) -> Self {
        Self(self.0.iter().copied().filter(|&k| k != j).collect())
    }

    /// Sorted symmetric difference.
    pub fn symmetric_difference(&self, other: &ActiveSet) -> Vec<usize> {
        let (a, b) = (&self.0, &other.0);
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < a.len() || j < b.len() {
            match (a.get(i), b.get(j)) {
                (Some(x), Some(y)) if x == y => {
                    i += 1;
                    j += 1;
                }
                (Some(x), Some(y)) if x < y => {
                    out.push(*x);
                    i += 1;
                }
                (Some(_), Some(y)) => {
                    out.push(*y);
                    j += 1;
                }
                (Some(x), None) => {
                    out.push(*x);
                    i += 1;
                }
                (None, Some(y)) => {
                    out.push(*y);
                    j += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        out
    }

    /// Canonical ordering key: cardinality first, then lexicographic.
    pub fn canonical_key(&self) -> (usize, &[usize]) {
        (self.0.len(), &self.0)
    }
}

impl fmt::Display for ActiveSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", k + 1)?;
        }
        write!(f, "}}")
    }
}

/// Parametric primal and dual laws of one optimal active set plus its defining hyperplanes.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionSolution {
    pub active_set: ActiveSet,
    pub k: DVector<f64>,
    pub k_gain: DMatrix<f64>,
    /// Multiplier offset, one entry per active constraint in active-set order.
    pub q: DVector<f64>,
    pub q_gain: DMatrix<f64>,
    /// Non-redundant primal rows (subset of the inactive constraints).
    pub e_primal: Vec<usize>,
    /// Non-redundant dual rows (subset of the active set).
    pub e_dual: Vec<usize>,
    /// Non-redundant rows of the parameter domain.
    pub e_domain: Vec<usize>,
    /// Chebyshev center and radius of the critical region.
    pub center: DVector<f64>,
    pub radius: f64,
}

impl RegionSolution {
    pub fn primal(&self, p: &DVector<f64>) -> DVector<f64> {
        &self.k + &self.k_gain * p
    }

    /// Multipliers of the active constraints.
    pub fn dual(&self, p: &DVector<f64>) -> DVector<f64> {
        &self.q + &self.q_gain * p
    }

    /// Full-length multiplier vector, zero outside the active set.
    pub fn dual_full(&self, nc: usize, p: &DVector<f64>) -> DVector<f64> {
        let mut lam = DVector::zeros(nc);
        let d = self.dual(p);
        for (pos, &k) in self.active_set.indices().iter().enumerate() {
            lam[k] = d[pos];
        }
        lam
    }

    /// Offset of the padded dual law at constraint `n` (zero when inactive).
    pub fn q_tilde(&self, n: usize) -> f64 {
        self.active_set.position(n).map_or(0.0, |pos| self.q[pos])
    }

    /// Gain row of the padded dual law at constraint `n`.
    pub fn q_gain_tilde(&self, n: usize) -> DVector<f64> {
        match self.active_set.position(n) {
            Some(pos) => self.q_gain.row(pos).transpose(),
            None => DVector::zeros(self.k_gain.ncols()),
        }
    }

    /// Value of the uncompressed primal row `n`: `G_n z(p) - b_n - S_n p` (<= 0 when satisfied).
    pub fn primal_row_value(&self, problem: &MpQpProblem, n: usize, p: &DVector<f64>) -> f64 {
        problem.g.row(n).transpose().dot(&self.primal(p)) - problem.b[n] - problem.s.row(n).transpose().dot(p)
    }

    /// Value of the uncompressed dual row `n`: `-lambda_n(p)` (<= 0 when satisfied).
    pub fn dual_row_value(&self, n: usize, p: &DVector<f64>) -> f64 {
        -(self.q_tilde(n) + self.q_gain_tilde(n).dot(p))
    }

    /// Stationarity residual `||H z + G_A^T lambda||_inf`.
    pub fn stationarity_residual(&self, problem: &MpQpProblem, p: &DVector<f64>) -> f64 {
        let z = self.primal(p);
        let lam = self.dual_full(problem.nc(), p);
        let r = &problem.h * z + problem.g.transpose() * lam;
        r.amax()
    }
}

/// Piecewise-affine solution over all critical regions.
#[derive(Clone, Debug, PartialEq)]
pub struct ExplicitSolution {
    pub problem: MpQpProblem,
    pub regions: Vec<RegionSolution>,
}

impl ExplicitSolution {
    pub fn num_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn region(&self, id: usize) -> Result<&RegionSolution> {
        self.regions.get(id).ok_or(Error::UnknownRegion(id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn box_problem() -> MpQpProblem {
        MpQpProblem::new(
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0]),
            DVector::from_element(4, 1.0),
            DMatrix::zeros(4, 2),
            ParamDomain::bounds(2, -1.0, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn zero_cross_term_keeps_s() {
        let e = DMatrix::from_row_slice(2, 1, &[0.5, -2.0]);
        let raw = MpQpRawProblem {
            h: DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            g: DMatrix::zeros(1, 2),
            g_con: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            b: DVector::from_element(2, 1.0),
            e: e.clone(),
            theta: ParamDomain::bounds(1, -1.0, 1.0),
        };
        let std = transform_to_standard(&raw).unwrap();
        assert_eq!(std.problem.s, e);
        let z = DVector::from_vec(vec![0.3, -0.2]);
        let p = DVector::from_vec(vec![0.7]);
        assert_eq!(std.raw_optimizer(&z, &p), z);
    }

    #[test]
    fn identity_algebra() {
        let raw = MpQpRawProblem {
            h: DMatrix::identity(2, 2),
            g: DMatrix::identity(2, 2),
            g_con: DMatrix::identity(2, 2),
            b: DVector::from_element(2, 1.0),
            e: DMatrix::zeros(2, 2),
            theta: ParamDomain::bounds(2, -1.0, 1.0),
        };
        let std = transform_to_standard(&raw).unwrap();
        assert_abs_diff_eq!(std.problem.s, DMatrix::identity(2, 2), epsilon = 1e-15);
    }

    #[test]
    fn transform_rejects_indefinite() {
        let raw = MpQpRawProblem {
            h: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
            g: DMatrix::zeros(1, 2),
            g_con: DMatrix::identity(2, 2),
            b: DVector::zeros(2),
            e: DMatrix::zeros(2, 1),
            theta: ParamDomain::bounds(1, -1.0, 1.0),
        };
        assert!(matches!(transform_to_standard(&raw), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn validation_passes_on_box_problem() {
        let report = validate(&box_problem());
        assert!(report.passed(), "{report}");
    }

    #[test]
    fn validation_flags_singular_hessian() {
        let mut p = box_problem();
        p.h[(1, 1)] = 0.0;
        let report = validate(&p);
        assert!(!report.positive_definite);
        assert!(report.dims_ok && report.theta_bounded);
    }

    #[test]
    fn validation_flags_unbounded_domain() {
        let mut p = box_problem();
        p.theta = ParamDomain::new(-DMatrix::identity(2, 2), DVector::zeros(2)).unwrap();
        let report = validate(&p);
        assert!(!report.theta_bounded);
        assert!(report.positive_definite);
    }

    #[test]
    fn validation_flags_dimension_mismatch() {
        let mut p = box_problem();
        p.b = DVector::zeros(3);
        assert!(!validate(&p).dims_ok);
    }

    #[test]
    fn active_set_ops() {
        let a = ActiveSet::new(vec![3, 1, 3]);
        assert_eq!(a.indices(), &[1, 3]);
        assert_eq!(a.with(2).indices(), &[1, 2, 3]);
        assert_eq!(a.without(1).indices(), &[3]);
        assert_eq!(a.symmetric_difference(&ActiveSet::new(vec![1, 4])), vec![3, 4]);
        assert_eq!(a.to_string(), "{2,4}");
        assert!(ActiveSet::new(vec![5]).canonical_key() < ActiveSet::new(vec![0, 1]).canonical_key());
    }
}
