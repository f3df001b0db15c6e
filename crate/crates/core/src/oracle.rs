//! Dense dual active-set QP solver (Goldfarb–Idnani) used as ground truth.
//!
//! Starts at the unconstrained minimum and repeatedly adds the most violated constraint
//! (lowest index on ties), dropping active constraints whose multipliers would turn
//! negative. Infeasibility shows up as a violated constraint with no admissible step.
//! The solver shares no code path with the enumerator or the storage tree apart from
//! the Cholesky kernel.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics;
use crate::types::{ActiveSet, MpQpProblem};

/// Multipliers above this are treated as strictly active.
pub const ACTIVE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpResult {
    pub z: DVector<f64>,
    /// One multiplier per constraint, zero on inactive rows.
    pub lambda: DVector<f64>,
    pub active: ActiveSet,
    pub status: QpStatus,
}

/// Largest violations of the KKT conditions at a returned point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.dual).max(self.complementarity)
    }
}

/// Solves the standard-form QP at parameter `p`.
pub fn solve_qp(problem: &MpQpProblem, p: &DVector<f64>) -> Result<QpResult> {
    if p.len() != problem.np() {
        return Err(Error::DimensionMismatch(format!(
            "parameter has length {}, expected {}",
            p.len(),
            problem.np()
        )));
    }
    let rhs = &problem.b + &problem.s * p;
    solve_dense_qp(&problem.h, &DVector::zeros(problem.nz()), &problem.g, &rhs)
}

/// `min 1/2 z^T H z + c^T z  s.t.  A z <= r`.
pub fn solve_dense_qp(
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    a: &DMatrix<f64>,
    r: &DVector<f64>,
) -> Result<QpResult> {
    let none = DMatrix::zeros(0, h.nrows());
    solve_dense_qp_eq(h, c, &none, &DVector::zeros(0), a, r).map(|(res, _)| res)
}

/// `min 1/2 z^T H z + c^T z  s.t.  Aeq z = beq,  A z <= r`.
///
/// Equalities enter the working set first and are never dropped; their multipliers are
/// returned separately and may have either sign.
pub fn solve_dense_qp_eq(
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    aeq: &DMatrix<f64>,
    beq: &DVector<f64>,
    a: &DMatrix<f64>,
    r: &DVector<f64>,
) -> Result<(QpResult, DVector<f64>)> {
    let factor = numerics::cholesky(h)?;
    let (nz, nc, neq) = (h.nrows(), a.nrows(), aeq.nrows());
    if a.ncols() != nz || r.len() != nc || c.len() != nz || aeq.ncols() != nz || beq.len() != neq {
        return Err(Error::DimensionMismatch("qp data dimensions differ".into()));
    }
    let hinv = factor.inverse();
    // equality rows first, inequality rows after
    let mut rows = DMatrix::zeros(neq + nc, nz);
    rows.view_mut((0, 0), (neq, nz)).copy_from(aeq);
    rows.view_mut((neq, 0), (nc, nz)).copy_from(a);
    let mut rhs = DVector::zeros(neq + nc);
    rhs.rows_mut(0, neq).copy_from(beq);
    rhs.rows_mut(neq, nc).copy_from(r);
    let mut sign = vec![1.0; neq];

    let mut z = -(&hinv * c);
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let cap = 1000 * (nc + neq).max(1);
    let mut iterations = 0;
    let infeasible = |z: DVector<f64>| {
        Ok((
            QpResult { z, lambda: DVector::zeros(nc), active: ActiveSet::empty(), status: QpStatus::Infeasible },
            DVector::zeros(neq),
        ))
    };

    for e in 0..neq {
        if rows.row(e).transpose().dot(&z) - rhs[e] < 0.0 {
            rows.row_mut(e).neg_mut();
            rhs[e] = -rhs[e];
            sign[e] = -1.0;
        }
        let ne = rows.row(e).transpose();
        let (zd, rd) = directions(&hinv, &rows, &active, &ne)?;
        let curvature = ne.dot(&zd);
        let slack = ne.dot(&z) - rhs[e];
        if curvature <= 1e-11 * ne.dot(&(&hinv * &ne)) {
            if slack.abs() <= 1e-9 * rhs[e].abs().max(1.0) {
                continue;
            }
            return infeasible(z);
        }
        let t = slack / curvature;
        z -= &zd * t;
        for (pos, ri) in rd.iter().enumerate() {
            u[pos] -= t * ri;
        }
        active.push(e);
        u.push(t);
    }

    let row = |k: usize| -> DVector<f64> { rows.row(k).transpose() };
    let scale = |k: usize, z: &DVector<f64>| 1.0f64.max(rhs[k].abs()).max(rows.row(k).amax() * z.amax());

    loop {
        // most violated constraint, lowest index on ties
        let mut pick: Option<(usize, f64)> = None;
        for k in neq..neq + nc {
            if active.contains(&k) {
                continue;
            }
            let viol = row(k).dot(&z) - rhs[k];
            if viol > 1e-12 * scale(k, &z) && pick.is_none_or(|(_, best)| viol > best) {
                pick = Some((k, viol));
            }
        }
        let Some((q, _)) = pick else { break };
        let nq = row(q);
        let mut uq = 0.0;
        loop {
            iterations += 1;
            if iterations > cap {
                return Err(Error::IterationCap(cap));
            }
            // zd moves z so as to reduce a_q^T z; rd is the rate of change of u
            let (zd, rd) = directions(&hinv, &rows, &active, &nq)?;
            let curvature = nq.dot(&zd);
            let dependent = curvature <= 1e-11 * nq.dot(&(&hinv * &nq));
            let mut t1 = f64::INFINITY;
            let mut block = None;
            for (pos, &ri) in rd.iter().enumerate() {
                if active[pos] >= neq && ri > 1e-14 {
                    let t = u[pos] / ri;
                    if t < t1 || (t == t1 && block.is_none_or(|b: usize| active[pos] < active[b])) {
                        t1 = t;
                        block = Some(pos);
                    }
                }
            }
            let slack = nq.dot(&z) - rhs[q];
            let t2 = if dependent { f64::INFINITY } else { slack / curvature };
            if t1.is_infinite() && t2.is_infinite() {
                return infeasible(z);
            }
            let t = t1.min(t2);
            if !dependent {
                z -= &zd * t;
            }
            for (pos, ri) in rd.iter().enumerate() {
                u[pos] -= t * ri;
            }
            uq += t;
            if t2 <= t1 {
                active.push(q);
                u.push(uq);
                break;
            }
            let pos = block.expect("finite partial step has a blocking constraint");
            active.remove(pos);
            u.remove(pos);
        }
    }

    let mut lambda = DVector::zeros(nc);
    let mut mu = DVector::zeros(neq);
    for (pos, &k) in active.iter().enumerate() {
        if k < neq {
            mu[k] = sign[k] * u[pos];
        } else {
            lambda[k - neq] = u[pos].max(0.0);
        }
    }
    let strict: Vec<usize> = (0..nc).filter(|&k| lambda[k] > ACTIVE_TOL).collect();
    Ok((QpResult { z, lambda, active: ActiveSet::new(strict), status: QpStatus::Optimal }, mu))
}

/// Primal step direction (scaled so that `a_q^T zd = a_q^T H^-1 (a_q - N^T rd)`) and
/// multiplier change rate for adding constraint `nq` on top of `active`.
fn directions(
    hinv: &DMatrix<f64>,
    a: &DMatrix<f64>,
    active: &[usize],
    nq: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if active.is_empty() {
        return Ok((hinv * nq, DVector::zeros(0)));
    }
    let na = a.select_rows(active);
    let m = &na * hinv * na.transpose();
    let rhs = &na * hinv * nq;
    let rd = match numerics::cholesky(&m) {
        Ok(f) => f.solve_vec(&rhs)?,
        Err(_) => m.clone().pseudo_inverse(1e-12).map_err(|e| Error::InvalidProblem(e.into()))? * rhs,
    };
    let zd = hinv * (nq - na.transpose() * &rd);
    Ok((zd, rd))
}

/// KKT residuals of `result` for `min 1/2 z^T H z + c^T z  s.t.  A z <= r`.
pub fn kkt_residuals(
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    a: &DMatrix<f64>,
    r: &DVector<f64>,
    result: &QpResult,
) -> KktResiduals {
    let z = &result.z;
    let lam = &result.lambda;
    let stationarity = (h * z + c + a.transpose() * lam).amax();
    let slack = a * z - r;
    let primal = slack.iter().fold(0.0f64, |m, &s| m.max(s));
    let dual = lam.iter().fold(0.0f64, |m, &l| m.max(-l));
    let complementarity = slack.iter().zip(lam.iter()).fold(0.0f64, |m, (s, l)| m.max((s * l).abs()));
    KktResiduals { stationarity, primal, dual, complementarity }
}

/// KKT residuals of a standard-form solve at `p`.
pub fn problem_kkt(problem: &MpQpProblem, p: &DVector<f64>, result: &QpResult) -> KktResiduals {
    let rhs = &problem.b + &problem.s * p;
    kkt_residuals(&problem.h, &DVector::zeros(problem.nz()), &problem.g, &rhs, result)
}
