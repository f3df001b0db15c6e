//! File formats: JSON problems and solutions (1-based constraint indices), and a
//! little-endian binary storage-tree format with an equivalent JSON debug form.

use std::io::{Cursor, Read};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lowrank::{EdgeKind, LowRankUpdate};
use crate::mpc::BenchmarkManifest;
use crate::tree::{RootData, StorageNode, StorageTree};
use crate::types::{ActiveSet, ExplicitSolution, MpQpProblem, MpQpRawProblem, ParamDomain, RegionSolution};

pub const FORMAT_VERSION: u32 = 1;
pub const TREE_MAGIC: &[u8; 8] = b"MPQPTREE";
const NONE_U32: u32 = u32::MAX;

type Rows = Vec<Vec<f64>>;

fn mat_to_rows(m: &DMatrix<f64>) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn rows_to_mat(rows: &Rows, ncols: usize, name: &str) -> Result<DMatrix<f64>> {
    if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch(format!(
            "{name} row {} has {} entries, expected {ncols}",
            bad + 1,
            rows[bad].len()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn width_of(rows: &Rows, fallback: usize) -> usize {
    rows.first().map_or(fallback, Vec::len)
}

fn to_one_based(v: &[usize]) -> Vec<usize> {
    v.iter().map(|&i| i + 1).collect()
}

fn to_zero_based(v: &[usize], bound: usize, name: &str) -> Result<Vec<usize>> {
    v.iter()
        .map(|&i| {
            if i == 0 || i > bound {
                Err(Error::Format(format!("{name} index {i} outside 1..={bound}")))
            } else {
                Ok(i - 1)
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainJson {
    #[serde(rename = "A")]
    pub a: Rows,
    pub b: Vec<f64>,
}

/// Problem file. Either `E` (with optional cross term `g`, `np x nz`) or the
/// standard-form `S` is given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemJson {
    pub version: u32,
    #[serde(rename = "H")]
    pub h: Rows,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Rows>,
    #[serde(rename = "G")]
    pub g_con: Rows,
    pub b: Vec<f64>,
    #[serde(rename = "E", default, skip_serializing_if = "Option::is_none")]
    pub e: Option<Rows>,
    #[serde(rename = "S", default, skip_serializing_if = "Option::is_none")]
    pub s: Option<Rows>,
    pub theta: DomainJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<BenchmarkManifest>,
}

fn domain_to_json(d: &ParamDomain) -> DomainJson {
    DomainJson { a: mat_to_rows(&d.a), b: d.b.iter().copied().collect() }
}

fn domain_from_json(d: &DomainJson, np: usize) -> Result<ParamDomain> {
    ParamDomain::new(rows_to_mat(&d.a, np, "theta.A")?, DVector::from_vec(d.b.clone()))
}

impl ProblemJson {
    pub fn from_raw(raw: &MpQpRawProblem, manifest: Option<BenchmarkManifest>) -> Self {
        Self {
            version: FORMAT_VERSION,
            h: mat_to_rows(&raw.h),
            g: Some(mat_to_rows(&raw.g)),
            g_con: mat_to_rows(&raw.g_con),
            b: raw.b.iter().copied().collect(),
            e: Some(mat_to_rows(&raw.e)),
            s: None,
            theta: domain_to_json(&raw.theta),
            manifest,
        }
    }

    pub fn from_standard(problem: &MpQpProblem) -> Self {
        Self {
            version: FORMAT_VERSION,
            h: mat_to_rows(&problem.h),
            g: None,
            g_con: mat_to_rows(&problem.g),
            b: problem.b.iter().copied().collect(),
            e: None,
            s: Some(mat_to_rows(&problem.s)),
            theta: domain_to_json(&problem.theta),
            manifest: None,
        }
    }

    /// Raw problem; a standard-form file becomes one with zero cross term and `E = S`.
    pub fn to_raw(&self) -> Result<MpQpRawProblem> {
        if self.version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {}", self.version)));
        }
        let nz = self.h.len();
        let h = rows_to_mat(&self.h, nz, "H")?;
        let g_con = rows_to_mat(&self.g_con, nz, "G")?;
        let e_rows = match (&self.e, &self.s) {
            (Some(e), None) => e,
            (None, Some(s)) => {
                if self.g.as_ref().is_some_and(|g| g.iter().flatten().any(|&x| x != 0.0)) {
                    return Err(Error::Format("S is the standard form; g must be absent".into()));
                }
                s
            }
            _ => return Err(Error::Format("exactly one of E and S must be given".into())),
        };
        let np = width_of(e_rows, width_of(&self.theta.a, 0));
        let e = rows_to_mat(e_rows, np, if self.e.is_some() { "E" } else { "S" })?;
        let g = match &self.g {
            Some(g) if self.e.is_some() => rows_to_mat(g, nz, "g")?,
            _ => DMatrix::zeros(np, nz),
        };
        if g.nrows() != np {
            return Err(Error::DimensionMismatch(format!("g has {} rows, expected {np}", g.nrows())));
        }
        Ok(MpQpRawProblem {
            h,
            g,
            g_con,
            b: DVector::from_vec(self.b.clone()),
            e,
            theta: domain_from_json(&self.theta, np)?,
        })
    }
}

pub fn parse_problem(text: &str) -> Result<ProblemJson> {
    serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionJson {
    pub active_set: Vec<usize>,
    pub k: Vec<f64>,
    #[serde(rename = "K")]
    pub k_gain: Rows,
    pub q: Vec<f64>,
    #[serde(rename = "Q")]
    pub q_gain: Rows,
    pub e_primal: Vec<usize>,
    pub e_dual: Vec<usize>,
    #[serde(default)]
    pub e_domain: Vec<usize>,
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionJson {
    pub version: u32,
    pub problem: ProblemJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nc_joint: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kept_rows: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<BenchmarkManifest>,
    pub regions: Vec<RegionJson>,
}

/// Explicit solution with the bookkeeping needed by the command-line tools.
#[derive(Clone, Debug, PartialEq)]
pub struct SolutionFile {
    pub solution: ExplicitSolution,
    /// `H^-1 g^T`; the original optimizer is `z - shift p`.
    pub shift: Option<DMatrix<f64>>,
    /// Non-redundant rows of the joint constraint set, domain rows included.
    pub nc_joint: Option<usize>,
    /// Original indices of the kept constraint rows.
    pub kept_rows: Option<Vec<usize>>,
    pub manifest: Option<BenchmarkManifest>,
}

impl SolutionFile {
    pub fn new(solution: ExplicitSolution) -> Self {
        Self { solution, shift: None, nc_joint: None, kept_rows: None, manifest: None }
    }

    pub fn to_json(&self) -> SolutionJson {
        let regions = self
            .solution
            .regions
            .iter()
            .map(|rs| RegionJson {
                active_set: to_one_based(rs.active_set.indices()),
                k: rs.k.iter().copied().collect(),
                k_gain: mat_to_rows(&rs.k_gain),
                q: rs.q.iter().copied().collect(),
                q_gain: mat_to_rows(&rs.q_gain),
                e_primal: to_one_based(&rs.e_primal),
                e_dual: to_one_based(&rs.e_dual),
                e_domain: to_one_based(&rs.e_domain),
                center: rs.center.iter().copied().collect(),
                radius: rs.radius,
            })
            .collect();
        SolutionJson {
            version: FORMAT_VERSION,
            problem: ProblemJson::from_standard(&self.solution.problem),
            shift: self.shift.as_ref().map(mat_to_rows),
            nc_joint: self.nc_joint,
            kept_rows: self.kept_rows.as_deref().map(to_one_based),
            manifest: self.manifest.clone(),
            regions,
        }
    }

    pub fn from_json(js: &SolutionJson) -> Result<Self> {
        if js.version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {}", js.version)));
        }
        let raw = js.problem.to_raw()?;
        if raw.g.iter().any(|&x| x != 0.0) {
            return Err(Error::Format("solution problem must be in standard form".into()));
        }
        let problem = MpQpProblem::new(raw.h, raw.g_con, raw.b, raw.e, raw.theta)?;
        let (nz, nc, np) = (problem.nz(), problem.nc(), problem.np());
        let mut regions = Vec::with_capacity(js.regions.len());
        for r in &js.regions {
            let active = to_zero_based(&r.active_set, nc, "active set")?;
            let m = active.len();
            let rs = RegionSolution {
                active_set: ActiveSet::new(active),
                k: DVector::from_vec(r.k.clone()),
                k_gain: rows_to_mat(&r.k_gain, np, "K")?,
                q: DVector::from_vec(r.q.clone()),
                q_gain: rows_to_mat(&r.q_gain, np, "Q")?,
                e_primal: to_zero_based(&r.e_primal, nc, "primal row")?,
                e_dual: to_zero_based(&r.e_dual, nc, "dual row")?,
                e_domain: to_zero_based(&r.e_domain, problem.theta.nrows(), "domain row")?,
                center: DVector::from_vec(r.center.clone()),
                radius: r.radius,
            };
            if rs.k.len() != nz || rs.k_gain.nrows() != nz || rs.q.len() != m || rs.q_gain.nrows() != m {
                return Err(Error::DimensionMismatch(format!("region {} has inconsistent laws", rs.active_set)));
            }
            regions.push(rs);
        }
        let shift = js.shift.as_ref().map(|s| rows_to_mat(s, np, "shift")).transpose()?;
        let kept_rows = js.kept_rows.as_ref().map(|k| to_zero_based(k, usize::MAX, "kept row")).transpose()?;
        Ok(Self {
            solution: ExplicitSolution { problem, regions },
            shift,
            nc_joint: js.nc_joint,
            kept_rows,
            manifest: js.manifest.clone(),
        })
    }

    pub fn to_string_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("solution serializes")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let js: SolutionJson = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        Self::from_json(&js)
    }
}

/// SHA-256 over the dimensions and IEEE bits of `H, G, b, S` and the domain.
pub fn problem_hash(problem: &MpQpProblem) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for m in [&problem.h, &problem.g, &problem.s, &problem.theta.a] {
        hasher.update((m.nrows() as u64).to_le_bytes());
        hasher.update((m.ncols() as u64).to_le_bytes());
        for x in m.iter() {
            hasher.update(x.to_bits().to_le_bytes());
        }
    }
    for v in [&problem.b, &problem.theta.b] {
        hasher.update((v.len() as u64).to_le_bytes());
        for x in v.iter() {
            hasher.update(x.to_bits().to_le_bytes());
        }
    }
    hasher.finalize().into()
}

/// Byte sink that counts stored reals separately from shared metadata.
struct Writer {
    buf: Vec<u8>,
    reals: usize,
}

impl Writer {
    fn u8(&mut self, x: u8) {
        self.buf.push(x);
    }

    fn u32(&mut self, x: usize) {
        let x = u32::try_from(x).expect("index fits in u32");
        self.buf.write_u32::<LittleEndian>(x).unwrap();
    }

    fn indices(&mut self, v: &[usize]) {
        self.u32(v.len());
        for &i in v {
            self.u32(i);
        }
    }

    fn meta_real(&mut self, x: f64) {
        self.buf.write_f64::<LittleEndian>(x).unwrap();
    }

    fn real(&mut self, x: f64) {
        self.meta_real(x);
        self.reals += 1;
    }

    fn reals<'a>(&mut self, xs: impl IntoIterator<Item = &'a f64>) {
        for &x in xs {
            self.real(x);
        }
    }

    /// Row-major matrix.
    fn matrix(&mut self, m: &DMatrix<f64>) {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                self.real(m[(i, j)]);
            }
        }
    }

    fn sparse(&mut self, entries: &[(usize, f64)]) {
        self.u32(entries.len());
        for &(i, x) in entries {
            self.u32(i);
            self.real(x);
        }
    }
}

/// Serializes a tree; `hash` identifies the problem it was built from.
pub fn write_tree(tree: &StorageTree, hash: &[u8; 32]) -> Vec<u8> {
    let mut w = Writer { buf: Vec::new(), reals: 0 };
    w.buf.extend_from_slice(TREE_MAGIC);
    w.u32(FORMAT_VERSION as usize);
    for x in [tree.nz, tree.np, tree.nc, tree.nodes.len(), tree.roots.len()] {
        w.u32(x);
    }
    w.u8(tree.n_u.is_some() as u8);
    w.u32(tree.n_u.unwrap_or(0));
    w.u32(tree.depth);
    w.buf.extend_from_slice(hash);
    // shared problem data
    w.u32(tree.theta.nrows());
    for i in 0..tree.theta.nrows() {
        for j in 0..tree.np {
            w.meta_real(tree.theta.a[(i, j)]);
        }
    }
    for &x in tree.theta.b.iter() {
        w.meta_real(x);
    }
    match &tree.shift {
        Some(s) => {
            w.u8(1);
            for i in 0..s.nrows() {
                for j in 0..s.ncols() {
                    w.meta_real(s[(i, j)]);
                }
            }
        }
        None => w.u8(0),
    }
    w.indices(&tree.roots);
    for n in &tree.nodes {
        w.u32(n.parent.unwrap_or(NONE_U32 as usize));
        w.indices(n.active_set.indices());
        w.indices(&n.children);
        for set in [&n.e_primal, &n.e_dual, &n.e_domain, &n.s_primal, &n.s_dual, &n.s_domain] {
            w.indices(set);
        }
        w.u32(n.updates.len());
        for u in &n.updates {
            w.u8(match u.kind {
                EdgeKind::Add => 0,
                EdgeKind::Remove => 1,
            });
            w.u32(u.constraint);
            w.real(u.c);
            w.reals(u.v.iter());
            w.reals(u.f.iter());
            w.sparse(&u.f_entries);
            w.sparse(&u.d_entries);
        }
    }
    for rd in &tree.root_data {
        w.reals(rd.k.iter());
        w.matrix(&rd.k_gain);
        w.reals(rd.q.iter());
        w.matrix(&rd.q_gain);
        w.reals(rd.b_tilde.iter());
        w.matrix(&rd.a_tilde);
        w.reals(rd.domain_b.iter());
        w.matrix(&rd.domain_a);
    }
    w.buf
}

struct Reader<'a> {
    cur: Cursor<&'a [u8]>,
    reals: usize,
}

fn truncated<E: std::fmt::Display>(e: E) -> Error {
    Error::Format(format!("truncated tree file: {e}"))
}

impl Reader<'_> {
    fn remaining(&self) -> usize {
        self.cur.get_ref().len().saturating_sub(self.cur.position() as usize)
    }

    fn u8(&mut self) -> Result<u8> {
        self.cur.read_u8().map_err(truncated)
    }

    fn u32(&mut self) -> Result<usize> {
        self.cur.read_u32::<LittleEndian>().map(|x| x as usize).map_err(truncated)
    }

    /// A length prefix for `item_bytes`-sized items, checked against the remaining input.
    fn len(&mut self, item_bytes: usize) -> Result<usize> {
        let n = self.u32()?;
        if n.saturating_mul(item_bytes) > self.remaining() {
            return Err(Error::Format(format!("length {n} exceeds the remaining input")));
        }
        Ok(n)
    }

    fn indices(&mut self) -> Result<Vec<usize>> {
        let n = self.len(4)?;
        (0..n).map(|_| self.u32()).collect()
    }

    fn meta_real(&mut self) -> Result<f64> {
        self.cur.read_f64::<LittleEndian>().map_err(truncated)
    }

    fn real(&mut self) -> Result<f64> {
        let x = self.meta_real()?;
        self.reals += 1;
        Ok(x)
    }

    fn vector(&mut self, n: usize) -> Result<DVector<f64>> {
        let v: Result<Vec<f64>> = (0..n).map(|_| self.real()).collect();
        Ok(DVector::from_vec(v?))
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let v: Result<Vec<f64>> = (0..rows * cols).map(|_| self.real()).collect();
        Ok(DMatrix::from_row_slice(rows, cols, &v?))
    }

    fn sparse(&mut self) -> Result<Vec<(usize, f64)>> {
        let n = self.len(12)?;
        (0..n).map(|_| Ok((self.u32()?, self.real()?))).collect()
    }
}

/// A decoded tree file.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeFile {
    pub tree: StorageTree,
    pub hash: [u8; 32],
    /// Reals read from the tree payload, shared problem data excluded.
    pub payload_reals: usize,
}

pub fn read_tree(bytes: &[u8]) -> Result<TreeFile> {
    let mut r = Reader { cur: Cursor::new(bytes), reals: 0 };
    let mut magic = [0u8; 8];
    r.cur.read_exact(&mut magic).map_err(truncated)?;
    if &magic != TREE_MAGIC {
        return Err(Error::Format("not a storage-tree file".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION as usize {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let (nz, np, nc, n_nodes, n_roots) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?, r.u32()?);
    let mpc = r.u8()?;
    let n_u_raw = r.u32()?;
    let n_u = (mpc != 0).then_some(n_u_raw);
    let depth = r.u32()?;
    let mut hash = [0u8; 32];
    r.cur.read_exact(&mut hash).map_err(truncated)?;
    let width = n_u.unwrap_or(nz);
    let nt = r.len(8 * (np + 1))?;
    let mut ta = DMatrix::zeros(nt, np);
    for i in 0..nt {
        for j in 0..np {
            ta[(i, j)] = r.meta_real()?;
        }
    }
    let tb: Result<Vec<f64>> = (0..nt).map(|_| r.meta_real()).collect();
    let theta = ParamDomain::new(ta, DVector::from_vec(tb?))?;
    let shift = match r.u8()? {
        0 => None,
        _ => {
            let mut s = DMatrix::zeros(width, np);
            for i in 0..width {
                for j in 0..np {
                    s[(i, j)] = r.meta_real()?;
                }
            }
            Some(s)
        }
    };
    let roots = r.indices()?;
    if roots.len() != n_roots {
        return Err(Error::Format("root count disagrees with the header".into()));
    }
    let mut nodes = Vec::with_capacity(n_nodes.min(r.remaining()));
    for id in 0..n_nodes {
        let parent = match r.u32()? {
            x if x == NONE_U32 as usize => None,
            x if x < n_nodes => Some(x),
            x => return Err(Error::Format(format!("node {id} has unknown parent {x}"))),
        };
        let active_set = ActiveSet::new(r.indices()?);
        let children = r.indices()?;
        let mut sets: Vec<Vec<usize>> = (0..6).map(|_| r.indices()).collect::<Result<_>>()?;
        let n_steps = r.len(1)?;
        let mut updates = Vec::with_capacity(n_steps);
        for _ in 0..n_steps {
            let kind = match r.u8()? {
                0 => EdgeKind::Add,
                1 => EdgeKind::Remove,
                k => return Err(Error::Format(format!("unknown edge kind {k}"))),
            };
            let constraint = r.u32()?;
            let c = r.real()?;
            let v = r.vector(np)?;
            let f = r.vector(width)?;
            let f_entries = r.sparse()?;
            let d_entries = r.sparse()?;
            updates.push(LowRankUpdate { kind, constraint, c, v, f, d_entries, f_entries, zeroed_residual: 0.0 });
        }
        let s_domain = sets.pop().unwrap();
        let s_dual = sets.pop().unwrap();
        let s_primal = sets.pop().unwrap();
        let e_domain = sets.pop().unwrap();
        let e_dual = sets.pop().unwrap();
        let e_primal = sets.pop().unwrap();
        nodes.push(StorageNode {
            region_id: id,
            parent,
            children,
            active_set,
            updates,
            s_primal,
            s_dual,
            s_domain,
            e_primal,
            e_dual,
            e_domain,
        });
    }
    let mut root_data = Vec::with_capacity(roots.len());
    for &rt in &roots {
        let node = nodes.get(rt).ok_or_else(|| Error::Format(format!("unknown root {rt}")))?;
        let (sp, sd, sth) = (node.s_primal.len(), node.s_dual.len(), node.s_domain.len());
        root_data.push(RootData {
            node: rt,
            k: r.vector(width)?,
            k_gain: r.matrix(width, np)?,
            q: r.vector(sd)?,
            q_gain: r.matrix(sd, np)?,
            b_tilde: r.vector(sp)?,
            a_tilde: r.matrix(sp, np)?,
            domain_b: r.vector(sth)?,
            domain_a: r.matrix(sth, np)?,
        });
    }
    if r.remaining() != 0 {
        return Err(Error::Format(format!("{} trailing bytes", r.remaining())));
    }
    let tree = StorageTree { nz, np, nc, n_u, nodes, roots, root_data, theta, depth, shift };
    Ok(TreeFile { tree, hash, payload_reals: r.reals })
}

/// Number of stored reals in a serialized tree.
pub fn serialized_real_count(bytes: &[u8]) -> Result<usize> {
    read_tree(bytes).map(|t| t.payload_reals)
}

fn vec_json(v: &DVector<f64>) -> serde_json::Value {
    serde_json::json!(v.iter().copied().collect::<Vec<f64>>())
}

fn sparse_json(entries: &[(usize, f64)]) -> serde_json::Value {
    serde_json::Value::Array(entries.iter().map(|&(i, x)| serde_json::json!([i + 1, x])).collect())
}

/// Human-readable form of a tree, with 1-based constraint and node indices.
pub fn tree_to_json(tree: &StorageTree) -> serde_json::Value {
    let nodes: Vec<serde_json::Value> = tree
        .nodes
        .iter()
        .map(|n| {
            let updates: Vec<serde_json::Value> = n
                .updates
                .iter()
                .map(|u| {
                    serde_json::json!({
                        "kind": match u.kind { EdgeKind::Add => "add", EdgeKind::Remove => "remove" },
                        "constraint": u.constraint + 1,
                        "c": u.c,
                        "v": vec_json(&u.v),
                        "f": vec_json(&u.f),
                        "f_tilde": sparse_json(&u.f_entries),
                        "d_tilde": sparse_json(&u.d_entries),
                    })
                })
                .collect();
            serde_json::json!({
                "node": n.region_id + 1,
                "parent": n.parent.map(|p| p + 1),
                "children": to_one_based(&n.children),
                "active_set": to_one_based(n.active_set.indices()),
                "e_primal": to_one_based(&n.e_primal),
                "e_dual": to_one_based(&n.e_dual),
                "e_domain": to_one_based(&n.e_domain),
                "s_primal": to_one_based(&n.s_primal),
                "s_dual": to_one_based(&n.s_dual),
                "s_domain": to_one_based(&n.s_domain),
                "updates": updates,
            })
        })
        .collect();
    let roots: Vec<serde_json::Value> = tree
        .root_data
        .iter()
        .map(|rd| {
            serde_json::json!({
                "node": rd.node + 1,
                "k": vec_json(&rd.k),
                "K": mat_to_rows(&rd.k_gain),
                "q": vec_json(&rd.q),
                "Q": mat_to_rows(&rd.q_gain),
                "b_tilde": vec_json(&rd.b_tilde),
                "A_tilde": mat_to_rows(&rd.a_tilde),
                "domain_b": vec_json(&rd.domain_b),
                "domain_A": mat_to_rows(&rd.domain_a),
            })
        })
        .collect();
    serde_json::json!({
        "version": FORMAT_VERSION,
        "nz": tree.nz,
        "np": tree.np,
        "nc": tree.nc,
        "regions": tree.nodes.len(),
        "n_u": tree.n_u,
        "depth": tree.depth,
        "roots": to_one_based(&tree.roots),
        "theta": domain_to_json(&tree.theta),
        "shift": tree.shift.as_ref().map(mat_to_rows),
        "root_data": roots,
        "nodes": nodes,
    })
}
