//! Offline mpQP solution by active-set lattice search.
//!
//! Starting from the empty active set, every accepted region spawns the candidates
//! obtained by toggling one constraint. Candidates are evaluated one generation at a
//! time; evaluation is a pure function of the candidate, so the accepted set does not
//! depend on the number of worker threads.

use std::collections::{BTreeSet, HashSet};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lp::{self, Polyhedron, EMPTY_RADIUS};
use crate::numerics;
use crate::oracle::{self, QpStatus};
use crate::types::{ActiveSet, ExplicitSolution, MpQpProblem, RegionSolution};

/// A multiplier row is weakly active when `|q_k| + ||Q_k||_1` falls below this.
pub const WEAK_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct EnumerateOptions {
    /// Cap on the number of evaluated candidates.
    pub budget: usize,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for EnumerateOptions {
    fn default() -> Self {
        Self { budget: 1_000_000, threads: None }
    }
}

/// The problem restricted to its non-redundant constraint rows.
#[derive(Clone, Debug)]
pub struct ReducedProblem {
    pub problem: MpQpProblem,
    /// Original indices of the kept constraint rows.
    pub kept_rows: Vec<usize>,
    /// Non-redundant rows of `{(z, p) | G z <= b + S p, p in Theta}`, domain rows included.
    pub nc_joint: usize,
}

/// Removes constraint rows that are redundant over `(z, p) in R^nz x Theta`.
///
/// Domain rows come first in the joint polyhedron so they win duplicate ties.
pub fn reduce_problem(problem: &MpQpProblem) -> Result<ReducedProblem> {
    let (nz, np, nc) = (problem.nz(), problem.np(), problem.nc());
    let nt = problem.theta.nrows();
    let mut a = DMatrix::zeros(nt + nc, nz + np);
    let mut b = DVector::zeros(nt + nc);
    for i in 0..nt {
        a.view_mut((i, nz), (1, np)).copy_from(&problem.theta.a.row(i));
        b[i] = problem.theta.b[i];
    }
    for i in 0..nc {
        a.view_mut((nt + i, 0), (1, nz)).copy_from(&problem.g.row(i));
        a.view_mut((nt + i, nz), (1, np)).copy_from(&(-problem.s.row(i)));
        b[nt + i] = problem.b[i];
    }
    let kept = lp::minimal_rows(&Polyhedron::new(a, b))?;
    let kept_rows: Vec<usize> = kept.iter().filter(|&&k| k >= nt).map(|&k| k - nt).collect();
    Ok(ReducedProblem {
        problem: problem.select_rows(&kept_rows),
        kept_rows,
        nc_joint: kept.len(),
    })
}

/// Affine primal and dual laws of active set `a`; the critical-region fields are left
/// empty until [`build_critical_region`] runs.
pub fn solve_for_active_set(problem: &MpQpProblem, a: &ActiveSet) -> Result<RegionSolution> {
    let (nz, np) = (problem.nz(), problem.np());
    let h_factor = problem.h_factor()?;
    if a.is_empty() {
        return Ok(RegionSolution {
            active_set: a.clone(),
            k: DVector::zeros(nz),
            k_gain: DMatrix::zeros(nz, np),
            q: DVector::zeros(0),
            q_gain: DMatrix::zeros(0, np),
            e_primal: Vec::new(),
            e_dual: Vec::new(),
            e_domain: Vec::new(),
            center: DVector::zeros(np),
            radius: 0.0,
        });
    }
    let idx = a.indices();
    if let Some(&bad) = idx.iter().find(|&&k| k >= problem.nc()) {
        return Err(Error::LicqViolation { constraint: bad });
    }
    if idx.len() > nz {
        return Err(Error::LicqViolation { constraint: idx[nz] });
    }
    let ga = problem.g.select_rows(idx);
    let hinv_gat = h_factor.solve(&ga.transpose())?;
    let m = &ga * &hinv_gat;
    let m_factor =
        numerics::cholesky(&m).map_err(|e| match e {
            Error::NotPositiveDefinite { pivot } => Error::LicqViolation { constraint: idx[pivot] },
            other => other,
        })?;
    let ba = DVector::from_iterator(idx.len(), idx.iter().map(|&k| problem.b[k]));
    let sa = problem.s.select_rows(idx);
    let q = -m_factor.solve_vec(&ba)?;
    let q_gain = -m_factor.solve(&sa)?;
    let k = -(&hinv_gat * &q);
    let k_gain = -(&hinv_gat * &q_gain);
    Ok(RegionSolution {
        active_set: a.clone(),
        k,
        k_gain,
        q,
        q_gain,
        e_primal: Vec::new(),
        e_dual: Vec::new(),
        e_domain: Vec::new(),
        center: DVector::zeros(np),
        radius: 0.0,
    })
}

/// Origin of a row in a critical-region description.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    Domain(usize),
    Primal(usize),
    Dual(usize),
}

#[derive(Clone, Debug)]
pub struct CriticalRegion {
    /// Full (unreduced) description: domain rows, primal rows, dual rows.
    pub poly: Polyhedron,
    pub kinds: Vec<RowKind>,
    pub e_primal: Vec<usize>,
    pub e_dual: Vec<usize>,
    pub e_domain: Vec<usize>,
    pub center: DVector<f64>,
    pub radius: f64,
}

/// Unreduced critical-region rows `(normal, offset, kind)` in `{p | normal^T p <= offset}`.
pub fn region_rows(problem: &MpQpProblem, rs: &RegionSolution) -> (Polyhedron, Vec<RowKind>) {
    let np = problem.np();
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    let mut kinds = Vec::new();
    for i in 0..problem.theta.nrows() {
        rows.push((problem.theta.a.row(i).transpose(), problem.theta.b[i]));
        kinds.push(RowKind::Domain(i));
    }
    for n in 0..problem.nc() {
        if rs.active_set.contains(n) {
            continue;
        }
        let gn = problem.g.row(n);
        let normal = (gn * &rs.k_gain - problem.s.row(n)).transpose();
        let offset = problem.b[n] - gn.dot(&rs.k.transpose());
        rows.push((normal, offset));
        kinds.push(RowKind::Primal(n));
    }
    for (pos, &n) in rs.active_set.indices().iter().enumerate() {
        rows.push((-rs.q_gain.row(pos).transpose(), rs.q[pos]));
        kinds.push(RowKind::Dual(n));
    }
    (Polyhedron::from_rows(np, &rows), kinds)
}

/// Builds and minimizes the critical region of `rs`.
pub fn build_critical_region(problem: &MpQpProblem, rs: &RegionSolution) -> Result<CriticalRegion> {
    let (poly, kinds) = region_rows(problem, rs);
    let (center, radius) = lp::chebyshev_center(&poly);
    if !(radius >= EMPTY_RADIUS) {
        return Err(if radius >= -EMPTY_RADIUS { Error::LowerDimensional } else { Error::EmptyRegion });
    }
    let kept = lp::minimal_rows(&poly).map_err(|_| Error::LowerDimensional)?;
    let mut e_primal = Vec::new();
    let mut e_dual = Vec::new();
    let mut e_domain = Vec::new();
    for &row in &kept {
        match kinds[row] {
            RowKind::Primal(n) => e_primal.push(n),
            RowKind::Dual(n) => e_dual.push(n),
            RowKind::Domain(i) => e_domain.push(i),
        }
    }
    e_primal.sort_unstable();
    e_dual.sort_unstable();
    e_domain.sort_unstable();
    Ok(CriticalRegion { poly, kinds, e_primal, e_dual, e_domain, center, radius })
}

/// Outcome of evaluating one lattice candidate.
#[derive(Clone, Debug)]
pub enum Candidate {
    Accepted(RegionSolution),
    /// Some multipliers vanish identically; the candidate collapses onto this set.
    Weak(ActiveSet),
    Rejected(Error),
}

pub fn evaluate_candidate(problem: &MpQpProblem, a: &ActiveSet) -> Candidate {
    let mut rs = match solve_for_active_set(problem, a) {
        Ok(rs) => rs,
        Err(e) => return Candidate::Rejected(e),
    };
    let weak: Vec<usize> = a
        .indices()
        .iter()
        .enumerate()
        .filter(|(pos, _)| rs.q[*pos].abs() + rs.q_gain.row(*pos).abs().sum() < WEAK_TOL)
        .map(|(_, &n)| n)
        .collect();
    if !weak.is_empty() {
        let reduced = weak.iter().fold(a.clone(), |acc, &n| acc.without(n));
        return Candidate::Weak(reduced);
    }
    match build_critical_region(problem, &rs) {
        Ok(cr) => {
            rs.e_primal = cr.e_primal;
            rs.e_dual = cr.e_dual;
            rs.e_domain = cr.e_domain;
            rs.center = cr.center;
            rs.radius = cr.radius;
            Candidate::Accepted(rs)
        }
        Err(e) => Candidate::Rejected(e),
    }
}

type Key = (usize, ActiveSet);

fn key(a: &ActiveSet) -> Key {
    (a.len(), a.clone())
}

/// Pending lattice candidates plus everything already evaluated.
#[derive(Clone, Debug, Default)]
pub struct CandidateQueue {
    frontier: BTreeSet<Key>,
    visited: HashSet<ActiveSet>,
}

impl CandidateQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Queues `a` unless it was seen before; returns whether it was queued.
    pub fn push(&mut self, a: ActiveSet) -> bool {
        if self.visited.contains(&a) {
            return false;
        }
        self.frontier.insert(key(&a))
    }

    /// Removes the whole frontier in canonical order and marks it visited.
    pub fn take_generation(&mut self) -> Vec<ActiveSet> {
        let batch: Vec<ActiveSet> = std::mem::take(&mut self.frontier).into_iter().map(|(_, a)| a).collect();
        self.visited.extend(batch.iter().cloned());
        batch
    }

    pub fn is_empty(&self) -> bool {
        self.frontier.is_empty()
    }

    pub fn visited(&self) -> usize {
        self.visited.len()
    }

    pub fn was_visited(&self, a: &ActiveSet) -> bool {
        self.visited.contains(a)
    }
}

/// Lattice neighbours of an accepted region: every single-constraint toggle, plus the
/// exchanges `A + j - k` across each primal facet `j`. Exchanges reach regions behind
/// primal-degenerate facets, where adding `j` alone would break LICQ.
pub fn neighbours(rs: &RegionSolution, nc: usize) -> Vec<ActiveSet> {
    let a = &rs.active_set;
    let mut out: Vec<ActiveSet> = (0..nc).map(|j| if a.contains(j) { a.without(j) } else { a.with(j) }).collect();
    for &j in &rs.e_primal {
        for &k in a.indices() {
            out.push(a.with(j).without(k));
        }
    }
    out
}

/// Enumerates all full-dimensional critical regions.
pub fn enumerate(problem: &MpQpProblem, options: &EnumerateOptions) -> Result<ExplicitSolution> {
    problem.h_factor()?;
    match options.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidProblem(e.to_string()))?;
            pool.install(|| enumerate_inner(problem, options.budget))
        }
        None => enumerate_inner(problem, options.budget),
    }
}

fn enumerate_inner(problem: &MpQpProblem, budget: usize) -> Result<ExplicitSolution> {
    let (nz, nc) = (problem.nz(), problem.nc());
    let mut queue = CandidateQueue::new();
    queue.push(ActiveSet::empty());
    let mut regions: Vec<RegionSolution> = Vec::new();
    let mut seeded = false;
    let mut evaluated = 0usize;
    loop {
        if queue.is_empty() {
            if !regions.is_empty() || seeded {
                break;
            }
            // the unconstrained minimum is nowhere optimal: seed from the domain center
            seeded = true;
            let (center, radius) = lp::chebyshev_center(&problem.theta.polyhedron());
            if radius < EMPTY_RADIUS {
                return Err(Error::EmptyPolyhedron);
            }
            match recover_active_set(problem, &center) {
                Ok(a) => {
                    queue.push(a);
                }
                Err(_) => break,
            }
            continue;
        }
        let batch = queue.take_generation();
        evaluated += batch.len();
        if evaluated > budget {
            return Err(Error::BudgetExceeded(budget));
        }
        let outcomes: Vec<Candidate> = batch.par_iter().map(|a| evaluate_candidate(problem, a)).collect();
        for outcome in outcomes {
            match outcome {
                Candidate::Accepted(rs) => {
                    for child in neighbours(&rs, nc) {
                        if child.len() <= nz {
                            queue.push(child);
                        }
                    }
                    regions.push(rs);
                }
                Candidate::Weak(reduced) => {
                    queue.push(reduced);
                }
                Candidate::Rejected(_) => {}
            }
        }
    }
    regions.sort_by(|x, y| x.active_set.canonical_key().cmp(&y.active_set.canonical_key()));
    Ok(ExplicitSolution { problem: problem.clone(), regions })
}

/// Optimal active set at `p` from the QP oracle (multipliers above `1e-9`).
pub fn recover_active_set(problem: &MpQpProblem, p: &DVector<f64>) -> Result<ActiveSet> {
    if !problem.theta.contains(p, lp::FEAS_TOL) {
        return Err(Error::InfeasibleParameter);
    }
    let res = oracle::solve_qp(problem, p)?;
    match res.status {
        QpStatus::Optimal => Ok(res.active),
        QpStatus::Infeasible => Err(Error::InfeasibleParameter),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ParamDomain;
    use approx::assert_abs_diff_eq;

    fn scalar_problem() -> MpQpProblem {
        MpQpProblem::new(
            DMatrix::from_element(1, 1, 2.0),
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, -1.0),
            DMatrix::from_element(1, 1, 1.0),
            ParamDomain::bounds(1, -2.0, 2.0),
        )
        .unwrap()
    }

    #[test]
    fn empty_set_gives_zero_law() {
        let rs = solve_for_active_set(&scalar_problem(), &ActiveSet::empty()).unwrap();
        assert_eq!(rs.k, DVector::zeros(1));
        assert_eq!(rs.k_gain, DMatrix::zeros(1, 1));
        assert_eq!(rs.q.len(), 0);
    }

    #[test]
    fn scalar_fixture_laws() {
        let rs = solve_for_active_set(&scalar_problem(), &ActiveSet::new(vec![0])).unwrap();
        assert_abs_diff_eq!(rs.q[0], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rs.q_gain[(0, 0)], -2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rs.k[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rs.k_gain[(0, 0)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn scalar_region_is_one_dual_row() {
        let prob = scalar_problem();
        let rs = solve_for_active_set(&prob, &ActiveSet::new(vec![0])).unwrap();
        let cr = build_critical_region(&prob, &rs).unwrap();
        assert_eq!(cr.e_dual, vec![0]);
        assert!(cr.e_primal.is_empty());
        // CR = [-2, 1]
        assert_abs_diff_eq!(cr.radius, 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(cr.center[0], -0.5, epsilon = 1e-12);
    }

    #[test]
    fn dependent_rows_fail_licq() {
        let prob = MpQpProblem::new(
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 0.0]),
            DVector::from_element(2, 1.0),
            DMatrix::zeros(2, 1),
            ParamDomain::bounds(1, -1.0, 1.0),
        )
        .unwrap();
        let err = solve_for_active_set(&prob, &ActiveSet::new(vec![0, 1])).unwrap_err();
        assert_eq!(err, Error::LicqViolation { constraint: 1 });
    }

    #[test]
    fn interior_problem_has_one_region() {
        let prob = MpQpProblem::new(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DVector::from_element(2, 1.0),
            DMatrix::zeros(2, 2),
            ParamDomain::bounds(2, -0.5, 0.5),
        )
        .unwrap();
        let sol = enumerate(&prob, &EnumerateOptions::default()).unwrap();
        assert_eq!(sol.num_regions(), 1);
        assert!(sol.regions[0].active_set.is_empty());
    }

    #[test]
    fn scalar_problem_has_two_regions() {
        let sol = enumerate(&scalar_problem(), &EnumerateOptions::default()).unwrap();
        let sets: Vec<String> = sol.regions.iter().map(|r| r.active_set.to_string()).collect();
        assert_eq!(sets, vec!["{}", "{1}"]);
        assert_eq!(sol.regions[0].e_primal, vec![0]);
    }

    #[test]
    fn recover_scalar() {
        let prob = scalar_problem();
        assert_eq!(recover_active_set(&prob, &DVector::zeros(1)).unwrap().indices(), &[0]);
        assert!(recover_active_set(&prob, &DVector::from_element(1, 1.5)).unwrap().is_empty());
        assert_eq!(
            recover_active_set(&prob, &DVector::from_element(1, 5.0)),
            Err(Error::InfeasibleParameter)
        );
    }

    #[test]
    fn queue_never_repeats() {
        let mut q = CandidateQueue::new();
        assert!(q.push(ActiveSet::new(vec![1])));
        assert!(q.push(ActiveSet::empty()));
        assert!(!q.push(ActiveSet::new(vec![1])));
        let gen = q.take_generation();
        assert_eq!(gen, vec![ActiveSet::empty(), ActiveSet::new(vec![1])]);
        assert!(!q.push(ActiveSet::empty()));
        assert_eq!(q.visited(), 2);
    }
}
