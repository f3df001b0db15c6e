//! Constrained finite-time optimal control problems, condensing, and the benchmark
//! generators.
//!
//! The CFTOC is
//!
//! ```text
//!   min  1/2 sum_{t<N} (x_t^T Q x_t + u_t^T R u_t) + 1/2 x_N^T P_N x_N
//!   s.t. x_0 = xbar,  x_{t+1} = A x_t + B u_t,
//!        Hx x_t + Hu u_t + h <= 0   (t = 0..N-1),
//!        Hx_N x_N + h_N <= 0        (rows of Hx whose Hu row is zero)
//! ```
//!
//! and condensing eliminates the states, leaving the inputs as decision variables and
//! `xbar` as the parameter.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics;
use crate::types::{MpQpRawProblem, ParamDomain};

/// Realization and weighting choices recorded alongside a generated problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkManifest {
    pub family: String,
    pub realization: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<String>,
    pub sampling_time: f64,
    pub discretization: String,
    pub q_weight: f64,
    pub r_weight: f64,
    pub terminal_cost: String,
    pub x_bound: f64,
    pub u_bound: f64,
    pub horizon: usize,
    pub n_states: usize,
    pub n_inputs: usize,
    pub x0_constraints: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CftocProblem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r_w: DMatrix<f64>,
    pub p_n: DMatrix<f64>,
    pub hx: DMatrix<f64>,
    pub hu: DMatrix<f64>,
    pub h: DVector<f64>,
    pub horizon: usize,
    pub theta: ParamDomain,
    pub manifest: Option<BenchmarkManifest>,
}

impl CftocProblem {
    pub fn nx(&self) -> usize {
        self.a.nrows()
    }

    pub fn nu(&self) -> usize {
        self.b.ncols()
    }

    /// Indices of the stage rows that carry no input and are repeated at `t = N`.
    pub fn terminal_rows(&self) -> Vec<usize> {
        (0..self.hu.nrows()).filter(|&i| self.hu.row(i).iter().all(|&v| v == 0.0)).collect()
    }

    pub fn check(&self) -> Result<()> {
        let (nx, nu) = (self.nx(), self.nu());
        let ok = self.a.ncols() == nx
            && self.b.nrows() == nx
            && self.q.shape() == (nx, nx)
            && self.r_w.shape() == (nu, nu)
            && self.p_n.shape() == (nx, nx)
            && self.hx.ncols() == nx
            && self.hu.ncols() == nu
            && self.hx.nrows() == self.hu.nrows()
            && self.h.len() == self.hx.nrows()
            && self.theta.dim() == nx
            && self.horizon >= 1;
        if !ok {
            return Err(Error::DimensionMismatch("inconsistent CFTOC data".into()));
        }
        for (name, m) in [("Q", &self.q), ("P_N", &self.p_n)] {
            let eig = m.clone().symmetric_eigenvalues();
            if eig.iter().any(|&e| e < -1e-10) {
                return Err(Error::InvalidProblem(format!("{name} is not positive semidefinite")));
            }
        }
        numerics::cholesky(&self.r_w)?;
        Ok(())
    }
}

/// Stacked prediction matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct CondensedMatrices {
    /// `(N+1) nx x nx`, block `t` is `A^t`.
    pub a_stack: DMatrix<f64>,
    /// `(N+1) nx x N nu`, block `(t, s)` is `A^{t-1-s} B` for `s < t`.
    pub b_stack: DMatrix<f64>,
    /// `diag(Q, ..., Q, P_N)`.
    pub qx_stack: DMatrix<f64>,
    /// `diag(R, ..., R)`.
    pub qu_stack: DMatrix<f64>,
    pub hx_stack: DMatrix<f64>,
    pub hu_stack: DMatrix<f64>,
    pub h_stack: DVector<f64>,
}

pub fn stack_matrices(cftoc: &CftocProblem) -> CondensedMatrices {
    let (nx, nu, n) = (cftoc.nx(), cftoc.nu(), cftoc.horizon);
    let mut powers = vec![DMatrix::identity(nx, nx)];
    for t in 1..=n {
        powers.push(&cftoc.a * &powers[t - 1]);
    }
    let mut a_stack = DMatrix::zeros((n + 1) * nx, nx);
    let mut b_stack = DMatrix::zeros((n + 1) * nx, n * nu);
    for t in 0..=n {
        a_stack.view_mut((t * nx, 0), (nx, nx)).copy_from(&powers[t]);
        for s in 0..t {
            b_stack.view_mut((t * nx, s * nu), (nx, nu)).copy_from(&(&powers[t - 1 - s] * &cftoc.b));
        }
    }
    let mut qx_stack = DMatrix::zeros((n + 1) * nx, (n + 1) * nx);
    for t in 0..n {
        qx_stack.view_mut((t * nx, t * nx), (nx, nx)).copy_from(&cftoc.q);
    }
    qx_stack.view_mut((n * nx, n * nx), (nx, nx)).copy_from(&cftoc.p_n);
    let mut qu_stack = DMatrix::zeros(n * nu, n * nu);
    for t in 0..n {
        qu_stack.view_mut((t * nu, t * nu), (nu, nu)).copy_from(&cftoc.r_w);
    }
    let term = cftoc.terminal_rows();
    let nr = cftoc.hx.nrows();
    let rows = n * nr + term.len();
    let mut hx_stack = DMatrix::zeros(rows, (n + 1) * nx);
    let mut hu_stack = DMatrix::zeros(rows, n * nu);
    let mut h_stack = DVector::zeros(rows);
    for t in 0..n {
        hx_stack.view_mut((t * nr, t * nx), (nr, nx)).copy_from(&cftoc.hx);
        hu_stack.view_mut((t * nr, t * nu), (nr, nu)).copy_from(&cftoc.hu);
        h_stack.rows_mut(t * nr, nr).copy_from(&cftoc.h);
    }
    for (i, &row) in term.iter().enumerate() {
        hx_stack.view_mut((n * nr + i, n * nx), (1, nx)).copy_from(&cftoc.hx.row(row));
        h_stack[n * nr + i] = cftoc.h[row];
    }
    CondensedMatrices { a_stack, b_stack, qx_stack, qu_stack, hx_stack, hu_stack, h_stack }
}

/// Condenses the CFTOC into an mpQP in the inputs with parameter `xbar`.
///
/// Rows that do not involve the inputs (the `t = 0` state rows) carry no decision
/// variable; they are moved into the parameter domain, skipping rows that duplicate an
/// existing domain row.
pub fn condense(cftoc: &CftocProblem) -> Result<MpQpRawProblem> {
    cftoc.check()?;
    let m = stack_matrices(cftoc);
    let bt_qx = m.b_stack.transpose() * &m.qx_stack;
    let mut h = &m.qu_stack + &bt_qx * &m.b_stack;
    h = (&h + h.transpose()) * 0.5;
    numerics::cholesky(&h)?;
    let g = m.a_stack.transpose() * &m.qx_stack * &m.b_stack;
    let g_full = &m.hx_stack * &m.b_stack + &m.hu_stack;
    let b_full = -&m.h_stack;
    let e_full = -(&m.hx_stack * &m.a_stack);

    let mut keep = Vec::new();
    let mut theta_rows: Vec<(DVector<f64>, f64)> = (0..cftoc.theta.nrows())
        .map(|i| (cftoc.theta.a.row(i).transpose(), cftoc.theta.b[i]))
        .collect();
    for i in 0..g_full.nrows() {
        if g_full.row(i).iter().any(|&v| v != 0.0) {
            keep.push(i);
            continue;
        }
        // b + E p >= 0  <=>  -E p <= b
        let normal: DVector<f64> = -e_full.row(i).transpose();
        let offset = b_full[i];
        let norm = normal.norm();
        if norm == 0.0 {
            if offset < 0.0 {
                return Err(Error::InvalidProblem("CFTOC constraints are infeasible".into()));
            }
            continue;
        }
        let dup = theta_rows.iter().any(|(a, b)| {
            let na = a.norm();
            na > 0.0 && (a / na - &normal / norm).amax() <= 1e-9 && (b / na - offset / norm).abs() <= 1e-9
        });
        if !dup {
            theta_rows.push((normal, offset));
        }
    }
    let theta_poly = crate::lp::Polyhedron::from_rows(cftoc.nx(), &theta_rows);
    Ok(MpQpRawProblem {
        h,
        g,
        g_con: g_full.select_rows(&keep),
        b: DVector::from_iterator(keep.len(), keep.iter().map(|&i| b_full[i])),
        e: e_full.select_rows(&keep),
        theta: ParamDomain::new(theta_poly.a, theta_poly.b)?,
    })
}

/// Matrix exponential by scaling and squaring with the diagonal (6,6) Padé approximant.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm1 = (0..n).map(|j| m.column(j).abs().sum()).fold(0.0, f64::max);
    let squarings = if norm1 > 0.5 { (norm1 / 0.5).log2().ceil() as i32 } else { 0 };
    let x = m / 2f64.powi(squarings);
    const Q: usize = 6;
    let mut coef = 1.0;
    let mut num = DMatrix::identity(n, n);
    let mut den = DMatrix::identity(n, n);
    let mut power = DMatrix::identity(n, n);
    for k in 1..=Q {
        coef *= (Q - k + 1) as f64 / (k * (2 * Q - k + 1)) as f64;
        power = &power * &x;
        num += &power * coef;
        if k % 2 == 0 {
            den += &power * coef;
        } else {
            den -= &power * coef;
        }
    }
    let mut r = den.lu().solve(&num).expect("Pade denominator is nonsingular after scaling");
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

/// Zero-order-hold discretization via the exponential of `[[Ac, Bc], [0, 0]] * Ts`.
pub fn zoh_discretize(ac: &DMatrix<f64>, bc: &DMatrix<f64>, ts: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, m) = (ac.nrows(), bc.ncols());
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(ac * ts));
    aug.view_mut((0, n), (n, m)).copy_from(&(bc * ts));
    let e = expm(&aug);
    (e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned())
}

/// Stationary LQ cost from the Riccati recursion started at `P = Q`.
pub fn dare_terminal_cost(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r_w: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    const CAP: usize = 100_000;
    let mut p = q.clone();
    for _ in 0..CAP {
        let next = riccati_step(a, b, q, r_w, &p)?;
        let delta = numerics::inf_norm(&(&next - &p));
        p = next;
        if delta < 1e-12 {
            return Ok((&p + p.transpose()) * 0.5);
        }
    }
    Err(Error::NoConvergence(CAP))
}

/// One step `Q + A^T P A - A^T P B (R + B^T P B)^{-1} B^T P A`.
pub fn riccati_step(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r_w: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let pa = p * a;
    let bt_pa = b.transpose() * &pa;
    let s = r_w + b.transpose() * p * b;
    let gain = numerics::cholesky(&s)?.solve(&bt_pa)?;
    let next = q + a.transpose() * &pa - bt_pa.transpose() * gain;
    Ok((&next + next.transpose()) * 0.5)
}

fn box_stage_constraints(nx: usize, nu: usize, x_bound: f64, u_bound: f64) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let rows = 2 * nx + 2 * nu;
    let mut hx = DMatrix::zeros(rows, nx);
    let mut hu = DMatrix::zeros(rows, nu);
    let mut h = DVector::zeros(rows);
    for i in 0..nx {
        hx[(i, i)] = 1.0;
        hx[(nx + i, i)] = -1.0;
        h[i] = -x_bound;
        h[nx + i] = -x_bound;
    }
    for i in 0..nu {
        hu[(2 * nx + i, i)] = 1.0;
        hu[(2 * nx + nu + i, i)] = -1.0;
        h[2 * nx + i] = -u_bound;
        h[2 * nx + nu + i] = -u_bound;
    }
    (hx, hu, h)
}

/// Power-of-two diagonal balancing (scaling only, no permutations), in the manner of
/// LAPACK `gebal`. Returns `D^-1 A D` and the diagonal of `D`.
pub fn balance(a: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    const RADIX: f64 = 2.0;
    const FACTOR: f64 = 0.95;
    let n = a.nrows();
    let mut m = a.clone();
    let mut d = DVector::from_element(n, 1.0);
    loop {
        let mut changed = false;
        for i in 0..n {
            let mut c = m.column(i).norm();
            let mut r = m.row(i).norm();
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= RADIX;
                r /= RADIX;
                g /= RADIX;
            }
            g = c / RADIX;
            while g >= r {
                f /= RADIX;
                c /= RADIX;
                g /= RADIX;
                r *= RADIX;
            }
            if c + r >= FACTOR * s {
                continue;
            }
            d[i] *= f;
            changed = true;
            m.row_mut(i).scale_mut(1.0 / f);
            m.column_mut(i).scale_mut(f);
        }
        if !changed {
            return (m, d);
        }
    }
}

/// Realization of `1/(s+1)^n`: companion matrix with first row `-(a_1, ..., a_n)` of
/// `(s+1)^n = s^n + a_1 s^{n-1} + ... + a_n`, ones on the subdiagonal, input on the first
/// state, then balanced by [`balance`].
pub fn problem1_continuous(n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    // binomial coefficients of (s+1)^n
    let mut coeffs = vec![1.0f64; n + 1];
    for k in 1..=n {
        coeffs[k] = coeffs[k - 1] * (n - k + 1) as f64 / k as f64;
    }
    let mut ac = DMatrix::zeros(n, n);
    for j in 0..n {
        ac[(0, j)] = -coeffs[j + 1];
    }
    for i in 1..n {
        ac[(i, i - 1)] = 1.0;
    }
    let mut bc = DMatrix::zeros(n, 1);
    bc[(0, 0)] = 1.0;
    let (ab, d) = balance(&ac);
    for i in 0..n {
        bc[(i, 0)] /= d[i];
    }
    (ab, bc)
}

/// Problem 1: `1/(s+1)^n`, unit sampling, `|x| <= 10`, `|u| <= 1`, `Q = I`, `R = I`.
pub fn build_problem1(n: usize, horizon: usize) -> Result<CftocProblem> {
    let (ac, bc) = problem1_continuous(n);
    let (a, b) = zoh_discretize(&ac, &bc, 1.0);
    let q = DMatrix::identity(n, n);
    let r_w = DMatrix::identity(1, 1);
    let p_n = dare_terminal_cost(&a, &b, &q, &r_w)?;
    let (hx, hu, h) = box_stage_constraints(n, 1, 10.0, 1.0);
    Ok(CftocProblem {
        a,
        b,
        q,
        r_w,
        p_n,
        hx,
        hu,
        h,
        horizon,
        theta: ParamDomain::bounds(n, -10.0, 10.0),
        manifest: Some(BenchmarkManifest {
            family: "problem1".into(),
            realization: "controllable canonical (companion) form of 1/(s+1)^n, power-of-two balanced".into(),
            topology: None,
            sampling_time: 1.0,
            discretization: "zero-order hold".into(),
            q_weight: 1.0,
            r_weight: 1.0,
            terminal_cost: "discrete-time LQ (Riccati fixed point)".into(),
            x_bound: 10.0,
            u_bound: 1.0,
            horizon,
            n_states: n,
            n_inputs: 1,
            x0_constraints: "parameter domain".into(),
        }),
    })
}

/// Spring layout of the mass chain. Neighbouring masses are always coupled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MassTopology {
    /// Springs between neighbours only.
    Free,
    /// Additional spring from the first mass to a wall.
    LeftWall,
    /// Walls at both ends of the chain.
    BothWalls,
}

impl MassTopology {
    pub fn label(self) -> &'static str {
        match self {
            MassTopology::Free => "neighbour springs only",
            MassTopology::LeftWall => "neighbour springs, wall spring at mass 1",
            MassTopology::BothWalls => "neighbour springs, wall springs at both ends",
        }
    }
}

/// Topology used by the benchmark suite.
pub const DEFAULT_TOPOLOGY: MassTopology = MassTopology::BothWalls;

/// Unit masses, unit springs, no damping; states interleaved as `(pos_i, vel_i)`.
/// Input 1 pushes mass 1; with `two_inputs`, input 2 is a force pair on masses 1 and 2.
pub fn masses_continuous(n_m: usize, two_inputs: bool, topology: MassTopology) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut k = DMatrix::<f64>::zeros(n_m, n_m);
    for i in 0..n_m.saturating_sub(1) {
        k[(i, i)] += 1.0;
        k[(i + 1, i + 1)] += 1.0;
        k[(i, i + 1)] -= 1.0;
        k[(i + 1, i)] -= 1.0;
    }
    match topology {
        MassTopology::Free => {}
        MassTopology::LeftWall => k[(0, 0)] += 1.0,
        MassTopology::BothWalls => {
            k[(0, 0)] += 1.0;
            k[(n_m - 1, n_m - 1)] += 1.0;
        }
    }
    let nx = 2 * n_m;
    let mut ac = DMatrix::zeros(nx, nx);
    for i in 0..n_m {
        ac[(2 * i, 2 * i + 1)] = 1.0;
        for j in 0..n_m {
            ac[(2 * i + 1, 2 * j)] = -k[(i, j)];
        }
    }
    let nu = if two_inputs { 2 } else { 1 };
    let mut bc = DMatrix::zeros(nx, nu);
    bc[(1, 0)] = 1.0;
    if two_inputs {
        bc[(1, 1)] = 1.0;
        bc[(3, 1)] = -1.0;
    }
    (ac, bc)
}

/// Problems 2 and 3: chain of `n_m` masses, `Ts = 0.5`, `|x| <= 4`, `|u| <= 0.5`,
/// `Q = 100 I`, `R = I`.
pub fn build_problem23(n_m: usize, horizon: usize, two_inputs: bool, topology: MassTopology) -> Result<CftocProblem> {
    if n_m == 0 || (two_inputs && n_m < 2) {
        return Err(Error::InvalidProblem("mass chain needs more masses".into()));
    }
    let (ac, bc) = masses_continuous(n_m, two_inputs, topology);
    let (a, b) = zoh_discretize(&ac, &bc, 0.5);
    let nx = 2 * n_m;
    let nu = b.ncols();
    let q = DMatrix::identity(nx, nx) * 100.0;
    let r_w = DMatrix::identity(nu, nu);
    let p_n = dare_terminal_cost(&a, &b, &q, &r_w)?;
    let (hx, hu, h) = box_stage_constraints(nx, nu, 4.0, 0.5);
    Ok(CftocProblem {
        a,
        b,
        q,
        r_w,
        p_n,
        hx,
        hu,
        h,
        horizon,
        theta: ParamDomain::bounds(nx, -4.0, 4.0),
        manifest: Some(BenchmarkManifest {
            family: if two_inputs { "problem3".into() } else { "problem2".into() },
            realization: "positions and velocities interleaved per mass".into(),
            topology: Some(topology.label().into()),
            sampling_time: 0.5,
            discretization: "zero-order hold".into(),
            q_weight: 100.0,
            r_weight: 1.0,
            terminal_cost: "discrete-time LQ (Riccati fixed point)".into(),
            x_bound: 4.0,
            u_bound: 0.5,
            horizon,
            n_states: nx,
            n_inputs: nu,
            x0_constraints: "parameter domain".into(),
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn simple(a: f64, b: f64, horizon: usize, p_n: f64) -> CftocProblem {
        let (hx, hu, h) = box_stage_constraints(1, 1, 10.0, 10.0);
        CftocProblem {
            a: DMatrix::from_element(1, 1, a),
            b: DMatrix::from_element(1, 1, b),
            q: DMatrix::identity(1, 1),
            r_w: DMatrix::identity(1, 1),
            p_n: DMatrix::from_element(1, 1, p_n),
            hx,
            hu,
            h,
            horizon,
            theta: ParamDomain::bounds(1, -1.0, 1.0),
            manifest: None,
        }
    }

    #[test]
    fn memoryless_system() {
        let mut c = simple(0.0, 1.0, 1, 1.0);
        c.theta = ParamDomain::bounds(1, -1.0, 1.0);
        let raw = condense(&c).unwrap();
        assert_abs_diff_eq!(raw.h, DMatrix::from_element(1, 1, 2.0), epsilon = 1e-15);
        assert_abs_diff_eq!(raw.g, DMatrix::zeros(1, 1), epsilon = 1e-15);
    }

    #[test]
    fn scalar_integrator_hessian() {
        // x1 = p + u0, x2 = p + u0 + u1, weights 1 on x1 only (P_N = 0)
        let raw = condense(&simple(1.0, 1.0, 2, 0.0)).unwrap();
        assert_abs_diff_eq!(raw.h, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]), epsilon = 1e-14);
        assert_abs_diff_eq!(raw.g, DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), epsilon = 1e-14);
    }

    #[test]
    fn b_stack_blocks() {
        let m = stack_matrices(&simple(0.5, 2.0, 3, 1.0));
        assert_eq!(m.b_stack.shape(), (4, 3));
        assert_abs_diff_eq!(m.b_stack[(3, 0)], 0.25 * 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.b_stack[(3, 2)], 2.0, epsilon = 1e-15);
        assert_eq!(m.b_stack[(1, 1)], 0.0);
        assert_abs_diff_eq!(m.a_stack[(2, 0)], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn zoh_trivial_and_nilpotent() {
        let (a, b) = zoh_discretize(&DMatrix::zeros(2, 2), &DMatrix::identity(2, 2), 1.0);
        assert_abs_diff_eq!(a, DMatrix::identity(2, 2), epsilon = 1e-15);
        assert_abs_diff_eq!(b, DMatrix::identity(2, 2), epsilon = 1e-15);
        let (a, _) = zoh_discretize(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]), &DMatrix::zeros(2, 1), 1.0);
        assert_abs_diff_eq!(a, DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]), epsilon = 1e-15);
    }

    #[test]
    fn zoh_scalar_decay() {
        let (a, b) = zoh_discretize(&DMatrix::from_element(1, 1, -1.0), &DMatrix::from_element(1, 1, 1.0), 1.0);
        let e = (-1.0f64).exp();
        assert_abs_diff_eq!(a[(0, 0)], e, epsilon = 1e-14);
        assert_abs_diff_eq!(b[(0, 0)], 1.0 - e, epsilon = 1e-14);
    }

    #[test]
    fn expm_rotation() {
        let t = 3.7;
        let e = expm(&DMatrix::from_row_slice(2, 2, &[0.0, t, -t, 0.0]));
        assert_abs_diff_eq!(e[(0, 0)], t.cos(), epsilon = 1e-13);
        assert_abs_diff_eq!(e[(0, 1)], t.sin(), epsilon = 1e-13);
    }

    #[test]
    fn dare_cases() {
        let q = DMatrix::identity(1, 1);
        let p = dare_terminal_cost(&DMatrix::zeros(1, 1), &DMatrix::identity(1, 1), &q, &q).unwrap();
        assert_abs_diff_eq!(p, q, epsilon = 1e-15);
        // P = 1 + 0.25 P - 0.25 P^2 / (1 + P)  <=>  P^2 - 0.25 P - 1 = 0
        let root = (0.25 + (0.0625f64 + 4.0).sqrt()) / 2.0;
        let p = dare_terminal_cost(&DMatrix::from_element(1, 1, 0.5), &q, &q, &q).unwrap();
        assert_abs_diff_eq!(p[(0, 0)], root, epsilon = 1e-11);
    }

    #[test]
    fn problem1_scalar_realization() {
        let (ac, bc) = problem1_continuous(1);
        assert_eq!(ac, DMatrix::from_element(1, 1, -1.0));
        assert_eq!(bc, DMatrix::from_element(1, 1, 1.0));
        let c = build_problem1(1, 1).unwrap();
        assert_abs_diff_eq!(c.a[(0, 0)], (-1.0f64).exp(), epsilon = 1e-14);
    }

    #[test]
    fn problem1_companion() {
        let (ac, bc) = problem1_continuous(2);
        // (s+1)^2 = s^2 + 2 s + 1 is already balanced
        assert_eq!(ac, DMatrix::from_row_slice(2, 2, &[-2.0, -1.0, 1.0, 0.0]));
        assert_eq!(bc, DMatrix::from_row_slice(2, 1, &[1.0, 0.0]));
    }

    #[test]
    fn problem1_balanced_fourth_order() {
        // reference values from an independent LAPACK balancing of the companion matrix
        let (ac, bc) = problem1_continuous(4);
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[-4.0, -3.0, -1.0, -0.5, 2.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.5, 0.0],
        );
        assert_eq!(ac, expected);
        assert_eq!(bc, DMatrix::from_row_slice(4, 1, &[1.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn balancing_is_a_similarity() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 100.0, 0.0, 0.01, 2.0, 50.0, 0.0, 0.001, 3.0]);
        let (b, d) = balance(&a);
        let dm = DMatrix::from_diagonal(&d);
        let back = &dm * &b * dm.try_inverse().unwrap();
        assert_abs_diff_eq!(back, a, epsilon = 1e-12);
        assert!(d.iter().all(|v| v.log2().fract() == 0.0));
    }

    #[test]
    fn single_mass_with_wall() {
        let (ac, bc) = masses_continuous(1, false, MassTopology::LeftWall);
        assert_eq!(ac, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));
        assert_eq!(bc, DMatrix::from_row_slice(2, 1, &[0.0, 1.0]));
    }

    #[test]
    fn dare_residual_on_masses() {
        let c = build_problem23(2, 2, false, DEFAULT_TOPOLOGY).unwrap();
        let next = riccati_step(&c.a, &c.b, &c.q, &c.r_w, &c.p_n).unwrap();
        assert!(numerics::inf_norm(&(&next - &c.p_n)) < 1e-10);
    }

    #[test]
    fn x0_rows_move_into_domain() {
        let raw = condense(&build_problem1(2, 2).unwrap()).unwrap();
        // stage rows t = 0, 1 (8 each, 4 of them t = 0 state rows) plus 4 terminal rows
        assert_eq!(raw.g_con.nrows(), 12);
        assert_eq!(raw.theta.nrows(), 4);
        assert!(raw.g_con.row_iter().all(|r| r.iter().any(|&v| v != 0.0)));
    }
}
