//! Storage trees over the optimal active sets.
//!
//! The root keeps the full parametric law and the constraint rows `G k_r - b`, `G K_r - S`
//! on its storage set; every other node keeps the rank-1 payload(s) of the edge from its
//! parent, pruned to the rows that some descendant needs.

use std::collections::{HashSet, VecDeque};

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lowrank::{chain_updates, hyperplane_payload, LowRankUpdate};
use crate::types::{ActiveSet, ExplicitSolution, MpQpProblem, ParamDomain, RegionSolution};

/// Longest chain for which all orderings are tried when an intermediate set violates LICQ.
pub const MAX_PERMUTED_CHAIN: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RootPolicy {
    /// The region with the empty active set (smallest active set when absent).
    #[default]
    Empty,
    Region(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StorageNode {
    pub region_id: usize,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub active_set: ActiveSet,
    /// Edge payloads from the parent, applied in order. Empty at a root.
    pub updates: Vec<LowRankUpdate>,
    pub s_primal: Vec<usize>,
    pub s_dual: Vec<usize>,
    /// Domain facets needed in the subtree. Their payload entries are identically zero
    /// (the constraint rows do not depend on `z`), so only roots store them.
    pub s_domain: Vec<usize>,
    pub e_primal: Vec<usize>,
    pub e_dual: Vec<usize>,
    pub e_domain: Vec<usize>,
}

impl StorageNode {
    pub fn is_root(&self) -> bool {
        self.parent.is_none()
    }
}

/// Full data stored at a root. Row `i` of the row-blocks belongs to `s_primal[i]`,
/// `s_dual[i]` or `s_domain[i]` of the root node.
#[derive(Clone, Debug, PartialEq)]
pub struct RootData {
    pub node: usize,
    pub k: DVector<f64>,
    pub k_gain: DMatrix<f64>,
    pub q: DVector<f64>,
    pub q_gain: DMatrix<f64>,
    pub b_tilde: DVector<f64>,
    pub a_tilde: DMatrix<f64>,
    pub domain_b: DVector<f64>,
    pub domain_a: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StorageTree {
    pub nz: usize,
    pub np: usize,
    pub nc: usize,
    /// Number of leading primal components kept when only the first input is needed.
    pub n_u: Option<usize>,
    /// Node `i` holds region `i`.
    pub nodes: Vec<StorageNode>,
    pub roots: Vec<usize>,
    pub root_data: Vec<RootData>,
    pub theta: ParamDomain,
    pub depth: usize,
    /// Leading rows of `H^-1 g^T` when the problem had a linear cost term; the original
    /// optimizer is `z - shift p`. Shared problem data, not counted as tree storage.
    pub shift: Option<DMatrix<f64>>,
}

impl StorageTree {
    pub fn num_regions(&self) -> usize {
        self.nodes.len()
    }

    /// Width of the stored primal quantities.
    pub fn primal_width(&self) -> usize {
        self.n_u.unwrap_or(self.nz)
    }

    pub fn node(&self, id: usize) -> Result<&StorageNode> {
        self.nodes.get(id).ok_or(Error::UnknownNode(id))
    }

    /// Root of the tree containing `id`.
    pub fn root_of(&self, id: usize) -> Result<usize> {
        let mut cur = self.node(id)?;
        while let Some(p) = cur.parent {
            cur = &self.nodes[p];
        }
        Ok(cur.region_id)
    }

    pub fn root_data_of(&self, root: usize) -> Result<&RootData> {
        self.root_data.iter().find(|r| r.node == root).ok_or(Error::UnknownNode(root))
    }

    /// `N(i)`: the node and its ancestors, excluding the root, ordered node first.
    pub fn path(&self, id: usize) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        let mut cur = self.node(id)?;
        while let Some(p) = cur.parent {
            out.push(cur.region_id);
            cur = &self.nodes[p];
        }
        Ok(out)
    }

    /// `anc(i)`: all ancestors including the root, nearest first.
    pub fn ancestors(&self, id: usize) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        let mut cur = self.node(id)?;
        while let Some(p) = cur.parent {
            out.push(p);
            cur = &self.nodes[p];
        }
        Ok(out)
    }

    /// All strict descendants of `id`.
    pub fn descendants(&self, id: usize) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        let mut stack = self.node(id)?.children.clone();
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(self.nodes[n].children.iter().copied());
        }
        out.sort_unstable();
        Ok(out)
    }

    /// Breadth-first order over all trees, roots in order.
    pub fn bfs_order(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut queue: VecDeque<usize> = self.roots.iter().copied().collect();
        while let Some(n) = queue.pop_front() {
            out.push(n);
            queue.extend(self.nodes[n].children.iter().copied());
        }
        out
    }

    /// Records the back-map to the original optimizer, keeping the stored rows only.
    pub fn set_shift(&mut self, shift: &DMatrix<f64>) {
        self.shift = Some(shift.rows(0, self.primal_width()).into_owned());
    }

    fn node_depth(&self, id: usize) -> usize {
        let mut d = 0;
        let mut cur = &self.nodes[id];
        while let Some(p) = cur.parent {
            d += 1;
            cur = &self.nodes[p];
        }
        d
    }
}

fn choose_root(sol: &ExplicitSolution, policy: RootPolicy) -> Result<usize> {
    match policy {
        RootPolicy::Region(id) => sol.region(id).map(|_| id),
        RootPolicy::Empty => sol
            .regions
            .iter()
            .position(|r| r.active_set.is_empty())
            .or_else(|| (0..sol.num_regions()).min_by(|&a, &b| {
                sol.regions[a].active_set.canonical_key().cmp(&sol.regions[b].active_set.canonical_key())
            }))
            .ok_or_else(|| Error::InvalidProblem("solution has no regions".into())),
    }
}

/// Tries the index-ordered chain first, then every other ordering for short chains.
fn edge_chain(
    problem: &MpQpProblem,
    parent: &RegionSolution,
    toggles: &[usize],
) -> Option<Vec<LowRankUpdate>> {
    if let Ok((chain, _)) = chain_updates(problem, parent, toggles) {
        return Some(chain);
    }
    if toggles.len() > MAX_PERMUTED_CHAIN {
        return None;
    }
    toggles
        .iter()
        .copied()
        .permutations(toggles.len())
        .skip(1)
        .find_map(|order| chain_updates(problem, parent, &order).ok().map(|(c, _)| c))
}

/// Builds the storage tree. Regions are attached one at a time to the attached region with
/// the smallest symmetric difference (ties: smallest child, then smallest parent id).
/// Regions no attached region can reach through a LICQ-valid chain start a new tree.
pub fn build_tree(sol: &ExplicitSolution, policy: RootPolicy, n_u: Option<usize>) -> Result<StorageTree> {
    let problem = &sol.problem;
    let r = sol.num_regions();
    let root = choose_root(sol, policy)?;
    if let Some(nu) = n_u {
        if nu == 0 || nu > problem.nz() {
            return Err(Error::InvalidProblem(format!("n_u = {nu} outside 1..={}", problem.nz())));
        }
    }
    let sets: Vec<&ActiveSet> = sol.regions.iter().map(|rs| &rs.active_set).collect();
    let mut parent: Vec<Option<usize>> = vec![None; r];
    let mut chains: Vec<Vec<LowRankUpdate>> = vec![Vec::new(); r];
    let mut attached = vec![false; r];
    let mut roots = vec![root];
    let mut forbidden: HashSet<(usize, usize)> = HashSet::new();
    // best[u] = (symmetric difference, parent)
    let mut best: Vec<Option<(usize, usize)>> = vec![None; r];

    let relax = |best: &mut Vec<Option<(usize, usize)>>, attached: &[bool], t: usize, forbidden: &HashSet<(usize, usize)>| {
        for u in 0..r {
            if attached[u] || forbidden.contains(&(u, t)) {
                continue;
            }
            let key = (sets[u].symmetric_difference(sets[t]).len(), t);
            if best[u].is_none_or(|b| key < b) {
                best[u] = Some(key);
            }
        }
    };
    attached[root] = true;
    relax(&mut best, &attached, root, &forbidden);
    let mut remaining = r - 1;
    while remaining > 0 {
        let pick = (0..r)
            .filter(|&u| !attached[u])
            .filter_map(|u| best[u].map(|b| (b.0, u, b.1)))
            .min();
        let Some((_, u, t)) = pick else {
            // nothing reachable: open a new tree
            let u = (0..r).find(|&u| !attached[u]).unwrap();
            attached[u] = true;
            roots.push(u);
            remaining -= 1;
            relax(&mut best, &attached, u, &forbidden);
            continue;
        };
        let toggles = sets[u].symmetric_difference(sets[t]);
        match edge_chain(problem, &sol.regions[t], &toggles) {
            Some(chain) => {
                attached[u] = true;
                parent[u] = Some(t);
                chains[u] = chain;
                remaining -= 1;
                relax(&mut best, &attached, u, &forbidden);
            }
            None => {
                forbidden.insert((u, t));
                best[u] = None;
                for s in 0..r {
                    if attached[s] && !forbidden.contains(&(u, s)) {
                        let key = (sets[u].symmetric_difference(sets[s]).len(), s);
                        if best[u].is_none_or(|b| key < b) {
                            best[u] = Some(key);
                        }
                    }
                }
            }
        }
    }

    let mut nodes: Vec<StorageNode> = (0..r)
        .map(|i| StorageNode {
            region_id: i,
            parent: parent[i],
            children: Vec::new(),
            active_set: sets[i].clone(),
            updates: Vec::new(),
            s_primal: Vec::new(),
            s_dual: Vec::new(),
            s_domain: Vec::new(),
            e_primal: sol.regions[i].e_primal.clone(),
            e_dual: sol.regions[i].e_dual.clone(),
            e_domain: sol.regions[i].e_domain.clone(),
        })
        .collect();
    for i in 0..r {
        if let Some(p) = parent[i] {
            nodes[p].children.push(i);
        }
    }
    let mut tree = StorageTree {
        nz: problem.nz(),
        np: problem.np(),
        nc: problem.nc(),
        n_u,
        nodes,
        roots,
        root_data: Vec::new(),
        theta: problem.theta.clone(),
        depth: 0,
        shift: None,
    };
    let sets = storage_sets(&tree);
    for (i, s) in sets.into_iter().enumerate() {
        tree.nodes[i].s_primal = s.primal;
        tree.nodes[i].s_dual = s.dual;
        tree.nodes[i].s_domain = s.domain;
    }
    let width = tree.primal_width();
    for i in 0..r {
        let Some(p) = parent[i] else { continue };
        let mut current = tree.nodes[p].active_set.clone();
        let mut pruned = Vec::with_capacity(chains[i].len());
        for step in &chains[i] {
            let next = step.apply_to(&current);
            let smaller = if next.len() < current.len() { next.clone() } else { current.clone() };
            let mut payload = hyperplane_payload(step, &smaller, &tree.nodes[i].s_primal, &tree.nodes[i].s_dual);
            payload.f = payload.f.rows(0, width).into_owned();
            pruned.push(payload);
            current = next;
        }
        debug_assert_eq!(&current, &tree.nodes[i].active_set);
        tree.nodes[i].updates = pruned;
    }
    tree.root_data = tree.roots.iter().map(|&rt| root_data(problem, &sol.regions[rt], &tree.nodes[rt], width)).collect();
    tree.depth = (0..r).map(|i| tree.node_depth(i)).max().unwrap_or(0);
    Ok(tree)
}

fn root_data(problem: &MpQpProblem, rs: &RegionSolution, node: &StorageNode, width: usize) -> RootData {
    let np = problem.np();
    let sp = &node.s_primal;
    let sd = &node.s_dual;
    let gk = &problem.g * &rs.k;
    let gkg = &problem.g * &rs.k_gain;
    let b_tilde = DVector::from_iterator(sp.len(), sp.iter().map(|&n| gk[n] - problem.b[n]));
    let mut a_tilde = DMatrix::zeros(sp.len(), np);
    for (row, &n) in sp.iter().enumerate() {
        a_tilde.set_row(row, &(gkg.row(n) - problem.s.row(n)));
    }
    let q = DVector::from_iterator(sd.len(), sd.iter().map(|&n| rs.q_tilde(n)));
    let mut q_gain = DMatrix::zeros(sd.len(), np);
    for (row, &n) in sd.iter().enumerate() {
        q_gain.set_row(row, &rs.q_gain_tilde(n).transpose());
    }
    let sth = &node.s_domain;
    let domain_b = DVector::from_iterator(sth.len(), sth.iter().map(|&i| -problem.theta.b[i]));
    let mut domain_a = DMatrix::zeros(sth.len(), np);
    for (row, &i) in sth.iter().enumerate() {
        domain_a.set_row(row, &problem.theta.a.row(i));
    }
    RootData {
        node: node.region_id,
        k: rs.k.rows(0, width).into_owned(),
        k_gain: rs.k_gain.rows(0, width).into_owned(),
        q,
        q_gain,
        b_tilde,
        a_tilde,
        domain_b,
        domain_a,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StorageSets {
    pub primal: Vec<usize>,
    pub dual: Vec<usize>,
    pub domain: Vec<usize>,
}

fn union_into(dst: &mut Vec<usize>, src: &[usize]) {
    dst.extend_from_slice(src);
    dst.sort_unstable();
    dst.dedup();
}

/// `s_i = E_i ∪ (∪ over children s_c)` for every row kind, by a post-order pass.
pub fn storage_sets(tree: &StorageTree) -> Vec<StorageSets> {
    let mut out = vec![StorageSets::default(); tree.nodes.len()];
    let order = tree.bfs_order();
    for &i in order.iter().rev() {
        let node = &tree.nodes[i];
        let mut s = StorageSets::default();
        union_into(&mut s.primal, &node.e_primal);
        union_into(&mut s.dual, &node.e_dual);
        union_into(&mut s.domain, &node.e_domain);
        for &c in &node.children {
            union_into(&mut s.primal, &out[c].primal);
            union_into(&mut s.dual, &out[c].dual);
            union_into(&mut s.domain, &out[c].domain);
        }
        out[i] = s;
    }
    out
}

/// `m_F` with primal width `width` (`nz`, or `n_u` for the first-input variant).
pub fn memory_full(sol: &ExplicitSolution, width: usize) -> usize {
    let np = sol.problem.np();
    sol.num_regions() * width * (np + 1) + memory_full_regions(sol)
}

/// Region-description part of `m_F`. Domain facets count as primal rows.
pub fn memory_full_regions(sol: &ExplicitSolution) -> usize {
    let np = sol.problem.np();
    sol.regions
        .iter()
        .map(|rs| (rs.e_primal.len() + rs.e_dual.len() + rs.e_domain.len()) * (np + 1))
        .sum()
}

/// Region-description part of `m_LR`: root rows, `c` and `v` per step, and stored entries.
pub fn memory_lowrank_regions(tree: &StorageTree) -> usize {
    let np = tree.np;
    let roots: usize = tree
        .roots
        .iter()
        .map(|&rt| {
            let n = &tree.nodes[rt];
            (n.s_primal.len() + n.s_dual.len() + n.s_domain.len()) * (np + 1)
        })
        .sum();
    let edges: usize = tree
        .nodes
        .iter()
        .flat_map(|n| n.updates.iter())
        .map(|u| 1 + np + u.f_entries.len() + u.d_entries.len())
        .sum();
    roots + edges
}

/// `m_LR` with primal width `width`: `k_r`, `K_r` per root and `f` per step, plus the
/// region-description part.
pub fn memory_lowrank(tree: &StorageTree, width: usize) -> usize {
    let steps: usize = tree.nodes.iter().map(|n| n.updates.len()).sum();
    tree.roots.len() * width * (tree.np + 1) + steps * width + memory_lowrank_regions(tree)
}

/// Memory figures of one instance.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct MemoryReport {
    pub nc: usize,
    pub regions: usize,
    pub depth: usize,
    pub roots: usize,
    pub m_full: usize,
    pub m_lowrank: usize,
    pub m_full_mpc: usize,
    pub m_lowrank_mpc: usize,
    pub m_full_regions: usize,
    pub m_lowrank_regions: usize,
    pub r_cr: f64,
    pub r: f64,
    pub r_mpc: f64,
    /// The same ratios with domain facets left out of both accountings.
    pub r_cr_no_domain: f64,
    pub r_no_domain: f64,
    pub r_mpc_no_domain: f64,
}

/// Ratios of the tree against full storage. `n_u` defaults to `nz`.
pub fn compression_report(sol: &ExplicitSolution, tree: &StorageTree, n_u: Option<usize>) -> MemoryReport {
    let nz = sol.problem.nz();
    let nu = n_u.unwrap_or(nz);
    let m_full = memory_full(sol, nz);
    let m_lowrank = memory_lowrank(tree, nz);
    let m_full_mpc = memory_full(sol, nu);
    let m_lowrank_mpc = memory_lowrank(tree, nu);
    let m_full_regions = memory_full_regions(sol);
    let m_lowrank_regions = memory_lowrank_regions(tree);
    let ratio = |a: usize, b: usize| if b == 0 { 1.0 } else { a as f64 / b as f64 };
    let np = sol.problem.np();
    let full_domain: usize = sol.regions.iter().map(|rs| rs.e_domain.len() * (np + 1)).sum();
    let lr_domain: usize = tree.roots.iter().map(|&rt| tree.nodes[rt].s_domain.len() * (np + 1)).sum();
    MemoryReport {
        nc: sol.problem.nc(),
        regions: sol.num_regions(),
        depth: tree.depth,
        roots: tree.roots.len(),
        m_full,
        m_lowrank,
        m_full_mpc,
        m_lowrank_mpc,
        m_full_regions,
        m_lowrank_regions,
        r_cr: ratio(m_lowrank_regions, m_full_regions),
        r: ratio(m_lowrank, m_full),
        r_mpc: ratio(m_lowrank_mpc, m_full_mpc),
        r_cr_no_domain: ratio(m_lowrank_regions - lr_domain, m_full_regions - full_domain),
        r_no_domain: ratio(m_lowrank - lr_domain, m_full - full_domain),
        r_mpc_no_domain: ratio(m_lowrank_mpc - lr_domain, m_full_mpc - full_domain),
    }
}
