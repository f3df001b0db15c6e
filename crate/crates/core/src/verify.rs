//! Consistency checks of a storage tree against the explicit solution it was built from
//! and against the QP oracle.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::enumerator::{region_rows, solve_for_active_set};
use crate::error::Result;
use crate::eval::{eval_hyperplane, eval_solution, eval_uncompressed, EvalScratch, Hyperplane};
use crate::lowrank::{chain_updates, EdgeKind, STRUCTURAL_TOL};
use crate::lp::Polyhedron;
use crate::oracle::{solve_qp, QpStatus};
use crate::tree::{storage_sets, StorageNode, StorageTree};
use crate::types::{ExplicitSolution, RegionSolution};

/// Shrink factor keeping chord samples away from the region boundary.
const CHORD_SHRINK: f64 = 0.98;

/// Tolerances of the verification families.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Tolerances {
    pub compressed: f64,
    pub oracle: f64,
    pub hyperplane: f64,
    pub edge: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { compressed: 1e-9, oracle: 1e-7, hyperplane: 1e-9, edge: 1e-9 }
    }
}

/// Largest deviations found by each family.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub samples_per_region: usize,
    /// `|compressed - uncompressed|` over the stored primal components, relative to
    /// `max(1, |k| + |K| |p|)`.
    pub solution: f64,
    /// `|uncompressed - oracle|` over all primal components.
    pub oracle: f64,
    pub oracle_failures: usize,
    /// Reconstructed row values against the uncompressed rows, over every stored row,
    /// relative to `max(1, row_scale)`.
    pub hyperplane: f64,
    /// Rank-1 children against direct solves, over `k, K, q, Q`, each block relative to
    /// `max(1, |block|_inf)`.
    pub edge: f64,
    pub structural_zeros: bool,
    pub storage_sets: bool,
}

impl VerifyReport {
    pub fn passed(&self, tol: &Tolerances) -> bool {
        self.solution <= tol.compressed
            && self.oracle <= tol.oracle
            && self.oracle_failures == 0
            && self.hyperplane <= tol.hyperplane
            && self.edge <= tol.edge
            && self.structural_zeros
            && self.storage_sets
    }
}

/// Random points of the critical region along chords through its Chebyshev center. The
/// stream depends only on `seed` and `region`.
pub fn sample_region(sol: &ExplicitSolution, region: usize, count: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    let rs = sol.region(region)?;
    let (poly, _) = region_rows(&sol.problem, rs);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(region as u64);
    Ok((0..count).map(|_| chord_point(&poly, &rs.center, &mut rng)).collect())
}

fn chord_point(poly: &Polyhedron, center: &DVector<f64>, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let np = center.len();
    let mut d = DVector::from_fn(np, |_, _| rng.random_range(-1.0..1.0));
    let norm = d.norm();
    if norm == 0.0 {
        return center.clone();
    }
    d /= norm;
    let (mut hi, mut lo) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..poly.nrows() {
        let a = poly.a.row(i).transpose();
        let slack = poly.b[i] - a.dot(center);
        let rate = a.dot(&d);
        if rate > 0.0 {
            hi = hi.min(slack / rate);
        } else if rate < 0.0 {
            lo = lo.max(slack / rate);
        }
    }
    let t = rng.random_range(0.0..1.0) * (hi - lo) + lo;
    center + d * (t * CHORD_SHRINK)
}

/// Uncompressed value of a row of region `rs`; `<= 0` means satisfied.
pub fn uncompressed_row(sol: &ExplicitSolution, rs: &RegionSolution, h: Hyperplane, p: &DVector<f64>) -> f64 {
    match h {
        Hyperplane::Primal(n) => rs.primal_row_value(&sol.problem, n, p),
        Hyperplane::Dual(n) => rs.dual_row_value(n, p),
        Hyperplane::Domain(i) => sol.problem.theta.a.row(i).transpose().dot(p) - sol.problem.theta.b[i],
    }
}

/// Size of the terms summed in the uncompressed row, `sum |coefficient * p_i|` plus the
/// offset. Multiplier gains of badly scaled problems reach 1e8, so row values are only
/// accurate relative to this.
pub fn row_scale(sol: &ExplicitSolution, rs: &RegionSolution, h: Hyperplane, p: &DVector<f64>) -> f64 {
    let pa = p.abs();
    match h {
        Hyperplane::Primal(n) => {
            let g = sol.problem.g.row(n).transpose().abs();
            let z = rs.k.abs() + rs.k_gain.abs() * &pa;
            g.dot(&z) + sol.problem.b[n].abs() + sol.problem.s.row(n).transpose().abs().dot(&pa)
        }
        Hyperplane::Dual(n) => rs.q_tilde(n).abs() + rs.q_gain_tilde(n).abs().dot(&pa),
        Hyperplane::Domain(i) => {
            sol.problem.theta.b[i].abs() + sol.problem.theta.a.row(i).transpose().abs().dot(&pa)
        }
    }
}

fn max_diff(a: impl IntoIterator<Item = f64>, b: impl IntoIterator<Item = f64>) -> f64 {
    a.into_iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1.0f64, |m, x| m.max(x.abs()));
    max_diff(a.iter().copied(), b.iter().copied()) / scale
}

/// Largest difference between the laws of two solutions of the same active set, each of
/// `k, K, q, Q` relative to `max(1, |block of b|_inf)`.
pub fn law_difference(a: &RegionSolution, b: &RegionSolution) -> f64 {
    [
        rel_diff(a.k.as_slice(), b.k.as_slice()),
        rel_diff(a.k_gain.as_slice(), b.k_gain.as_slice()),
        rel_diff(a.q.as_slice(), b.q.as_slice()),
        rel_diff(a.q_gain.as_slice(), b.q_gain.as_slice()),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Recomputes every edge from the parent's direct solve and compares the child with its
/// direct solve. Also checks the exact structural zeros of the stored payloads.
pub fn check_edges(sol: &ExplicitSolution, tree: &StorageTree) -> Result<(f64, bool)> {
    let mut worst: f64 = 0.0;
    let mut zeros_ok = true;
    for node in &tree.nodes {
        let Some(parent) = node.parent else { continue };
        let order: Vec<usize> = node.updates.iter().map(|u| u.constraint).collect();
        let (chain, child) = chain_updates(&sol.problem, &sol.regions[parent], &order)?;
        let direct = solve_for_active_set(&sol.problem, &node.active_set)?;
        worst = worst.max(law_difference(&child, &direct));
        let mut current = tree.nodes[parent].active_set.clone();
        for (fresh, stored) in chain.iter().zip(&node.updates) {
            let next = fresh.apply_to(&current);
            let smaller = if next.len() < current.len() { &next } else { &current };
            let sign = if fresh.kind == EdgeKind::Add { -1.0 } else { 1.0 };
            zeros_ok &= fresh.d_at(fresh.constraint) == Some(sign);
            zeros_ok &= fresh.zeroed_residual <= STRUCTURAL_TOL * fresh.f_entries.iter().fold(1.0f64, |m, e| m.max(e.1.abs()));
            zeros_ok &= fresh.f_entries.iter().all(|e| !smaller.contains(e.0));
            zeros_ok &= stored.f_entries.iter().all(|e| !smaller.contains(e.0));
            zeros_ok &= stored.d_entries.iter().all(|e| e.0 == stored.constraint || smaller.contains(e.0));
            if let Some(d) = stored.d_at(stored.constraint) {
                zeros_ok &= d == sign;
            }
            current = next;
        }
    }
    Ok((worst, zeros_ok))
}

/// Storage sets recomputed as unions over each node's descendants.
pub fn check_storage_sets(tree: &StorageTree) -> Result<bool> {
    let post_order = storage_sets(tree);
    for (i, node) in tree.nodes.iter().enumerate() {
        let mut members = tree.descendants(i)?;
        members.push(i);
        let collect = |pick: fn(&StorageNode) -> &Vec<usize>| {
            let mut v: Vec<usize> = members.iter().flat_map(|&j| pick(&tree.nodes[j]).iter().copied()).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        let sp = collect(|n| &n.e_primal);
        let sd = collect(|n| &n.e_dual);
        let sth = collect(|n| &n.e_domain);
        if sp != node.s_primal || sd != node.s_dual || sth != node.s_domain {
            return Ok(false);
        }
        let s = &post_order[i];
        if s.primal != sp || s.dual != sd || s.domain != sth {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Runs every family with `samples` random parameters per region.
pub fn verify(sol: &ExplicitSolution, tree: &StorageTree, samples: usize, seed: u64) -> Result<VerifyReport> {
    let width = tree.primal_width();
    let mut report = VerifyReport { seed, samples_per_region: samples, ..Default::default() };
    for (i, rs) in sol.regions.iter().enumerate() {
        let node = tree.node(i)?;
        let rows: Vec<Hyperplane> = node
            .s_primal
            .iter()
            .map(|&n| Hyperplane::Primal(n))
            .chain(node.s_dual.iter().map(|&n| Hyperplane::Dual(n)))
            .chain(node.s_domain.iter().map(|&n| Hyperplane::Domain(n)))
            .collect();
        for p in sample_region(sol, i, samples, seed)? {
            let z_tree = eval_solution(tree, i, &p)?;
            let z_full = eval_uncompressed(sol, i, &p)?;
            let scale = (rs.k.abs() + rs.k_gain.abs() * p.abs()).amax().max(1.0);
            let diff = max_diff(z_tree.iter().copied(), z_full.rows(0, width).iter().copied());
            report.solution = report.solution.max(diff / scale);
            match solve_qp(&sol.problem, &p) {
                Ok(qp) if qp.status == QpStatus::Optimal => {
                    report.oracle = report.oracle.max(max_diff(z_full.iter().copied(), qp.z.iter().copied()));
                }
                _ => report.oracle_failures += 1,
            }
            let mut scratch = EvalScratch::new();
            for &h in &rows {
                let v = eval_hyperplane(tree, i, h, &p, &mut scratch)?;
                let err = (v - uncompressed_row(sol, rs, h, &p)).abs() / row_scale(sol, rs, h, &p).max(1.0);
                report.hyperplane = report.hyperplane.max(err);
            }
        }
    }
    let (edge, zeros) = check_edges(sol, tree)?;
    report.edge = edge;
    report.structural_zeros = zeros;
    report.storage_sets = check_storage_sets(tree)?;
    Ok(report)
}
