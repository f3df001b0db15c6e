//! Rank-1 modifications of the parametric solution when one constraint enters or leaves
//! the active set.
//!
//! With parent set `A` and entering constraint `j` (border row last):
//!
//! ```text
//!   W = G_A H^-1 G_A^T,  w = G_A H^-1 G_j^T,  w0 = G_j H^-1 G_j^T,  C = w0 - w^T W^-1 w
//!   c = (w^T W^-1 b_A - b_j) / C
//!   v = (S_A^T W^-1 w - S_j^T) / C
//!   d~ = (W^-1 w, -1) on (A, j),   f = H^-1 G_{A+j}^T d~,   f~ = G f
//! ```
//!
//! and the child laws are `z + f (c + v^T p)` and `lambda~ - d~ (c + v^T p)`. Removing `j`
//! reuses the same `c`, `v` with `f` and `d~` negated.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::{self, border_partition};
use crate::types::{ActiveSet, MpQpProblem, RegionSolution};

/// Tolerance for the structural zeros of `f~` before they are overwritten.
pub const STRUCTURAL_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeKind {
    Add,
    Remove,
}

/// One rank-1 step. Sparse maps are sorted by constraint index.
#[derive(Clone, Debug, PartialEq)]
pub struct LowRankUpdate {
    pub kind: EdgeKind,
    pub constraint: usize,
    pub c: f64,
    pub v: DVector<f64>,
    pub f: DVector<f64>,
    pub d_entries: Vec<(usize, f64)>,
    pub f_entries: Vec<(usize, f64)>,
    /// Largest `|f~_n|` on the parent active set before it was set to zero.
    pub zeroed_residual: f64,
}

impl LowRankUpdate {
    /// `c + v^T p`.
    pub fn scalar(&self, p: &DVector<f64>) -> f64 {
        self.c + self.v.dot(p)
    }

    pub fn d_at(&self, n: usize) -> Option<f64> {
        lookup(&self.d_entries, n)
    }

    pub fn f_at(&self, n: usize) -> Option<f64> {
        lookup(&self.f_entries, n)
    }

    /// Active set that this step leads to from `from`.
    pub fn apply_to(&self, from: &ActiveSet) -> ActiveSet {
        match self.kind {
            EdgeKind::Add => from.with(self.constraint),
            EdgeKind::Remove => from.without(self.constraint),
        }
    }

    /// `f~` is zero on `A_parent ∩ A_child`, which is the smaller of the two sets.
    pub fn f_trivially_zero(&self, smaller: &ActiveSet, n: usize) -> bool {
        smaller.contains(n)
    }

    /// `d~` is zero outside `A_parent ∪ A_child`.
    pub fn d_trivially_zero(&self, smaller: &ActiveSet, n: usize) -> bool {
        n != self.constraint && !smaller.contains(n)
    }

    /// Number of reals this step contributes: `c`, `v`, the first `n_f` entries of `f`,
    /// and the sparse entries.
    pub fn real_count(&self, n_f: usize) -> usize {
        1 + self.v.len() + n_f + self.d_entries.len() + self.f_entries.len()
    }
}

pub(crate) fn lookup(entries: &[(usize, f64)], n: usize) -> Option<f64> {
    entries.binary_search_by_key(&n, |e| e.0).ok().map(|pos| entries[pos].1)
}

/// Add-direction payload for `A -> A + j`, with `f~` over all constraints outside `A`.
fn add_payload(problem: &MpQpProblem, a: &ActiveSet, j: usize) -> Result<LowRankUpdate> {
    if j >= problem.nc() || a.contains(j) {
        return Err(Error::InvalidProblem(format!("constraint {} cannot enter {a}", j + 1)));
    }
    let h_factor = problem.h_factor()?;
    let idx = a.indices();
    let ga = problem.g.select_rows(idx);
    let gj = problem.g.row(j).transpose();
    let hinv_gat = h_factor.solve(&ga.transpose())?;
    let hinv_gj = h_factor.solve_vec(&gj)?;
    let w_mat = &ga * &hinv_gat;
    let w_factor = if idx.is_empty() {
        numerics::CholeskyFactor::empty()
    } else {
        numerics::cholesky(&w_mat).map_err(|_| Error::LicqViolation { constraint: j })?
    };
    let w = &ga * &hinv_gj;
    let w0 = gj.dot(&hinv_gj);
    let part = border_partition(&w_factor, &w, w0).map_err(|_| Error::LicqViolation { constraint: j })?;
    let winv_w = &part.winv_w;
    let cinv = 1.0 / part.schur;
    let ba = DVector::from_iterator(idx.len(), idx.iter().map(|&k| problem.b[k]));
    let sa = problem.s.select_rows(idx);
    let c = (winv_w.dot(&ba) - problem.b[j]) * cinv;
    let v = (sa.transpose() * winv_w - problem.s.row(j).transpose()) * cinv;
    let f = &hinv_gat * winv_w - &hinv_gj;
    let mut d_entries: Vec<(usize, f64)> = idx.iter().zip(winv_w.iter()).map(|(&k, &x)| (k, x)).collect();
    d_entries.push((j, -1.0));
    d_entries.sort_by_key(|e| e.0);
    let f_tilde = &problem.g * &f;
    let scale = f_tilde.amax().max(1.0);
    let zeroed_residual = idx.iter().map(|&k| f_tilde[k].abs()).fold(0.0, f64::max);
    if zeroed_residual > STRUCTURAL_TOL * scale {
        return Err(Error::InvalidProblem(format!(
            "f~ is not zero on the parent active set (max {zeroed_residual:e})"
        )));
    }
    let f_entries = (0..problem.nc()).filter(|&n| !a.contains(n)).map(|n| (n, f_tilde[n])).collect();
    Ok(LowRankUpdate {
        kind: EdgeKind::Add,
        constraint: j,
        c,
        v,
        f,
        d_entries,
        f_entries,
        zeroed_residual,
    })
}

/// Applies a step to a full region solution. Returns the child laws with empty
/// critical-region fields.
pub fn apply_update(parent: &RegionSolution, update: &LowRankUpdate) -> RegionSolution {
    let child_set = update.apply_to(&parent.active_set);
    let k = &parent.k + &update.f * update.c;
    let k_gain = &parent.k_gain + &update.f * update.v.transpose();
    let np = parent.k_gain.ncols();
    let m = child_set.len();
    let mut q = DVector::zeros(m);
    let mut q_gain = DMatrix::zeros(m, np);
    for (pos, &n) in child_set.indices().iter().enumerate() {
        let d = update.d_at(n).unwrap_or(0.0);
        q[pos] = parent.q_tilde(n) - d * update.c;
        let row = parent.q_gain_tilde(n) - &update.v * d;
        q_gain.set_row(pos, &row.transpose());
    }
    RegionSolution {
        active_set: child_set,
        k,
        k_gain,
        q,
        q_gain,
        e_primal: Vec::new(),
        e_dual: Vec::new(),
        e_domain: Vec::new(),
        center: parent.center.clone(),
        radius: 0.0,
    }
}

/// Step `A -> A + j` together with the child laws.
pub fn add_constraint_update(
    problem: &MpQpProblem,
    parent: &RegionSolution,
    j: usize,
) -> Result<(LowRankUpdate, RegionSolution)> {
    let update = add_payload(problem, &parent.active_set, j)?;
    let child = apply_update(parent, &update);
    Ok((update, child))
}

/// Step `A -> A - j`: the add payload of `A - j -> A` with `f` and `d~` negated.
pub fn remove_constraint_update(
    problem: &MpQpProblem,
    parent: &RegionSolution,
    j: usize,
) -> Result<(LowRankUpdate, RegionSolution)> {
    if !parent.active_set.contains(j) {
        return Err(Error::InvalidProblem(format!("constraint {} is not in {}", j + 1, parent.active_set)));
    }
    let reduced = parent.active_set.without(j);
    let mut update = add_payload(problem, &reduced, j)?;
    update.kind = EdgeKind::Remove;
    update.f = -update.f;
    for e in update.d_entries.iter_mut() {
        e.1 = -e.1;
    }
    for e in update.f_entries.iter_mut() {
        e.1 = -e.1;
    }
    let child = apply_update(parent, &update);
    Ok((update, child))
}

/// Toggles one constraint: remove when present, add otherwise.
pub fn toggle_update(
    problem: &MpQpProblem,
    parent: &RegionSolution,
    j: usize,
) -> Result<(LowRankUpdate, RegionSolution)> {
    if parent.active_set.contains(j) {
        remove_constraint_update(problem, parent, j)
    } else {
        add_constraint_update(problem, parent, j)
    }
}

/// Chain of single-constraint steps toggling `order` one after the other.
pub fn chain_updates(
    problem: &MpQpProblem,
    parent: &RegionSolution,
    order: &[usize],
) -> Result<(Vec<LowRankUpdate>, RegionSolution)> {
    let mut current = parent.clone();
    let mut chain = Vec::with_capacity(order.len());
    for &j in order {
        let (update, next) = toggle_update(problem, &current, j)?;
        chain.push(update);
        current = next;
    }
    Ok((chain, current))
}

/// Restricts the sparse maps to the stored index sets, dropping trivial zeros. The
/// diagnostic `zeroed_residual` is cleared.
///
/// `smaller` is `A_parent ∩ A_child` of this step.
pub fn hyperplane_payload(
    update: &LowRankUpdate,
    smaller: &ActiveSet,
    store_primal: &[usize],
    store_dual: &[usize],
) -> LowRankUpdate {
    let mut out = update.clone();
    out.zeroed_residual = 0.0;
    out.f_entries = store_primal
        .iter()
        .filter(|&&n| !update.f_trivially_zero(smaller, n))
        .map(|&n| (n, update.f_at(n).unwrap_or(0.0)))
        .collect();
    out.d_entries = store_dual
        .iter()
        .filter(|&&n| !update.d_trivially_zero(smaller, n))
        .map(|&n| (n, update.d_at(n).unwrap_or(0.0)))
        .collect();
    out.f_entries.sort_by_key(|e| e.0);
    out.d_entries.sort_by_key(|e| e.0);
    out
}
