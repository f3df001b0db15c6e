//! Online evaluation of a storage tree: the parametric solution of a node, single
//! constraint rows of its critical region, and sequential point location.

use std::collections::HashMap;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::lowrank::LowRankUpdate;
use crate::tree::{RootData, StorageNode, StorageTree};
use crate::types::ExplicitSolution;

/// Absolute tolerance on hyperplane values for region membership.
pub const MEMBERSHIP_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Hyperplane {
    Primal(usize),
    Dual(usize),
    /// Row of the parameter domain.
    Domain(usize),
}

impl Hyperplane {
    pub fn index(self) -> usize {
        match self {
            Hyperplane::Primal(n) | Hyperplane::Dual(n) | Hyperplane::Domain(n) => n,
        }
    }
}

/// Per-query memo of `c + v^T p` per edge step and of root row values.
#[derive(Debug, Default)]
pub struct EvalScratch {
    p: Option<DVector<f64>>,
    scalars: HashMap<(usize, usize), f64>,
    root_rows: HashMap<(usize, Hyperplane), f64>,
}

impl EvalScratch {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drops cached values unless they were built for this same `p`.
    fn bind(&mut self, p: &DVector<f64>) {
        if self.p.as_ref() != Some(p) {
            self.scalars.clear();
            self.root_rows.clear();
            self.p = Some(p.clone());
        }
    }
}

fn check_dim(tree: &StorageTree, p: &DVector<f64>) -> Result<()> {
    if p.len() != tree.np {
        return Err(Error::DimensionMismatch(format!("parameter has length {}, expected {}", p.len(), tree.np)));
    }
    Ok(())
}

/// Path from just below the root down to `node`.
fn root_to_node(tree: &StorageTree, node: usize) -> Result<(usize, Vec<usize>)> {
    let mut path = tree.path(node)?;
    path.reverse();
    Ok((tree.root_of(node)?, path))
}

/// `z(p) = k_r + K_r p + sum f_j (c_j + v_j^T p)`, summed from the root down. Only the
/// stored leading components are returned when the tree keeps the first input only.
pub fn eval_solution(tree: &StorageTree, node: usize, p: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim(tree, p)?;
    let (root, path) = root_to_node(tree, node)?;
    let rd = tree.root_data_of(root)?;
    let mut z = &rd.k + &rd.k_gain * p;
    for j in path {
        for u in &tree.nodes[j].updates {
            z.axpy(u.scalar(p), &u.f, 1.0);
        }
    }
    Ok(z)
}

/// Optimizer of the original problem, `z(p) - shift p`.
pub fn eval_output(tree: &StorageTree, node: usize, p: &DVector<f64>) -> Result<DVector<f64>> {
    let z = eval_solution(tree, node, p)?;
    Ok(match &tree.shift {
        Some(shift) => z - shift * p,
        None => z,
    })
}

fn root_row(rd: &RootData, root: &StorageNode, h: Hyperplane, p: &DVector<f64>) -> Option<f64> {
    match h {
        Hyperplane::Primal(n) => {
            let pos = root.s_primal.binary_search(&n).ok()?;
            Some(rd.b_tilde[pos] + rd.a_tilde.row(pos).transpose().dot(p))
        }
        Hyperplane::Dual(n) => {
            let pos = root.s_dual.binary_search(&n).ok()?;
            Some(-rd.q[pos] - rd.q_gain.row(pos).transpose().dot(p))
        }
        Hyperplane::Domain(i) => {
            let pos = root.s_domain.binary_search(&i).ok()?;
            Some(rd.domain_b[pos] + rd.domain_a.row(pos).transpose().dot(p))
        }
    }
}

/// Stored entry of one step, zero when the entry is a trivial zero of a stored row.
fn step_entry(node: &StorageNode, u: &LowRankUpdate, h: Hyperplane) -> Option<f64> {
    match h {
        Hyperplane::Primal(n) => u.f_at(n).or_else(|| node.s_primal.binary_search(&n).ok().map(|_| 0.0)),
        Hyperplane::Dual(n) => u.d_at(n).or_else(|| node.s_dual.binary_search(&n).ok().map(|_| 0.0)),
        Hyperplane::Domain(i) => node.s_domain.binary_search(&i).ok().map(|_| 0.0),
    }
}

/// Value of one row of the critical region of `node` at `p`; `<= 0` means satisfied.
pub fn eval_hyperplane(
    tree: &StorageTree,
    node: usize,
    h: Hyperplane,
    p: &DVector<f64>,
    scratch: &mut EvalScratch,
) -> Result<f64> {
    check_dim(tree, p)?;
    scratch.bind(p);
    let (root, path) = root_to_node(tree, node)?;
    let not_stored = || Error::HyperplaneNotStored { node, hyperplane: h.index() };
    let mut value = match scratch.root_rows.get(&(root, h)) {
        Some(&v) => v,
        None => {
            let rd = tree.root_data_of(root)?;
            let v = root_row(rd, &tree.nodes[root], h, p).ok_or_else(not_stored)?;
            scratch.root_rows.insert((root, h), v);
            v
        }
    };
    for j in path {
        let nd = &tree.nodes[j];
        for (step, u) in nd.updates.iter().enumerate() {
            let entry = step_entry(nd, u, h).ok_or_else(not_stored)?;
            let s = *scratch.scalars.entry((j, step)).or_insert_with(|| u.scalar(p));
            value += entry * s;
        }
    }
    Ok(value)
}

/// Rows that describe the critical region of `node`.
pub fn region_hyperplanes(node: &StorageNode) -> impl Iterator<Item = Hyperplane> + '_ {
    node.e_primal
        .iter()
        .map(|&n| Hyperplane::Primal(n))
        .chain(node.e_dual.iter().map(|&n| Hyperplane::Dual(n)))
        .chain(node.e_domain.iter().map(|&i| Hyperplane::Domain(i)))
}

/// Largest row value of the critical region of `node` at `p`.
pub fn region_violation(tree: &StorageTree, node: usize, p: &DVector<f64>, scratch: &mut EvalScratch) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for h in region_hyperplanes(tree.node(node)?) {
        worst = worst.max(eval_hyperplane(tree, node, h, p, scratch)?);
    }
    Ok(worst)
}

/// First node in breadth-first order whose critical region contains `p`.
pub fn locate(tree: &StorageTree, p: &DVector<f64>) -> Result<usize> {
    check_dim(tree, p)?;
    if !tree.theta.contains(p, MEMBERSHIP_TOL) {
        return Err(Error::InfeasibleParameter);
    }
    let mut scratch = EvalScratch::new();
    for id in tree.bfs_order() {
        if region_violation(tree, id, p, &mut scratch)? <= MEMBERSHIP_TOL {
            return Ok(id);
        }
    }
    Err(Error::InfeasibleParameter)
}

/// `k_i + K_i p` straight from the explicit solution.
pub fn eval_uncompressed(sol: &ExplicitSolution, region: usize, p: &DVector<f64>) -> Result<DVector<f64>> {
    let rs = sol.region(region)?;
    if p.len() != rs.k_gain.ncols() {
        return Err(Error::DimensionMismatch(format!("parameter has length {}, expected {}", p.len(), rs.k_gain.ncols())));
    }
    Ok(rs.primal(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enumerator::{enumerate, EnumerateOptions};
    use crate::tree::{build_tree, RootPolicy};
    use crate::types::{MpQpProblem, ParamDomain};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn scalar_solution() -> ExplicitSolution {
        let prob = MpQpProblem::new(
            DMatrix::from_element(1, 1, 2.0),
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, -1.0),
            DMatrix::from_element(1, 1, 1.0),
            ParamDomain::bounds(1, -2.0, 2.0),
        )
        .unwrap();
        enumerate(&prob, &EnumerateOptions::default()).unwrap()
    }

    #[test]
    fn scalar_chain() {
        let sol = scalar_solution();
        let tree = build_tree(&sol, RootPolicy::Empty, None).unwrap();
        let p0 = DVector::from_element(1, 0.0);
        assert_abs_diff_eq!(eval_solution(&tree, 0, &p0).unwrap()[0], 0.0);
        assert_abs_diff_eq!(eval_solution(&tree, 1, &p0).unwrap()[0], -1.0, epsilon = 1e-15);
        let mut scratch = EvalScratch::new();
        // multiplier 2 at p = 0, so the dual row reads -2
        let v = eval_hyperplane(&tree, 1, Hyperplane::Dual(0), &p0, &mut scratch).unwrap();
        assert_abs_diff_eq!(v, -2.0, epsilon = 1e-15);
        // root row G k_r - b at p = 0
        let v = eval_hyperplane(&tree, 0, Hyperplane::Primal(0), &p0, &mut scratch).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn locate_scalar() {
        let sol = scalar_solution();
        let tree = build_tree(&sol, RootPolicy::Empty, None).unwrap();
        assert_eq!(locate(&tree, &DVector::from_element(1, 1.5)).unwrap(), 0);
        assert_eq!(locate(&tree, &DVector::from_element(1, -1.5)).unwrap(), 1);
        assert_eq!(locate(&tree, &DVector::from_element(1, 3.0)), Err(Error::InfeasibleParameter));
    }

    #[test]
    fn unstored_row_is_reported() {
        let sol = scalar_solution();
        let tree = build_tree(&sol, RootPolicy::Empty, None).unwrap();
        let p0 = DVector::from_element(1, 0.0);
        let err = eval_hyperplane(&tree, 1, Hyperplane::Primal(0), &p0, &mut EvalScratch::new()).unwrap_err();
        assert_eq!(err, Error::HyperplaneNotStored { node: 1, hyperplane: 0 });
    }

    #[test]
    fn uncompressed_baseline() {
        let sol = scalar_solution();
        let p = DVector::from_element(1, 0.7);
        assert_abs_diff_eq!(eval_uncompressed(&sol, 0, &p).unwrap()[0], 0.0);
        assert_abs_diff_eq!(eval_uncompressed(&sol, 1, &p).unwrap()[0], -1.0 + 0.7, epsilon = 1e-15);
        assert_eq!(eval_uncompressed(&sol, 5, &p), Err(Error::UnknownRegion(5)));
    }
}
