use nalgebra::{DMatrix, DVector};

use super::{ActiveConstraint, BatchForm, OracleSolution, Side};
use crate::error::{Error, Result};
use crate::ssm::ProblemInstance;

const STATIONARITY_TOL: f64 = 1e-9;
const SIGN_TOL: f64 = 1e-10;
const FEASIBILITY_TOL: f64 = 1e-9;

/// One inequality `sign · g · z ≤ sign · bound`.
struct Ineq {
    row: usize,
    side: Side,
    bound: f64,
}

impl Ineq {
    fn sign(&self) -> f64 {
        match self.side {
            Side::Upper => 1.0,
            Side::Lower => -1.0,
        }
    }
}

/// Exact optimum of the strictly convex QP with hard constraints and
/// Gaussian observations.
///
/// The candidate active set comes from a dual active-set (Goldfarb–Idnani)
/// solve. The equality-constrained KKT system of that set is then re-solved
/// densely with iterative refinement, and the result is accepted only if it
/// passes stationarity, multiplier-sign and feasibility checks.
pub fn active_set_qp(inst: &ProblemInstance) -> Result<OracleSolution> {
    let form = BatchForm::new(inst)?;
    form.require_hard("the active-set oracle")?;
    let d = form.dim();

    let mut ineqs = Vec::new();
    for (i, r) in form.rows.iter().enumerate() {
        let (lo, hi) = BatchForm::bounds(&r.loss);
        if hi.is_finite() {
            ineqs.push(Ineq { row: i, side: Side::Upper, bound: hi });
        }
        if lo.is_finite() {
            ineqs.push(Ineq { row: i, side: Side::Lower, bound: lo });
        }
    }

    let mut amat = Vec::with_capacity(ineqs.len() * d);
    let mut bvec = Vec::with_capacity(ineqs.len());
    for q in &ineqs {
        let s = q.sign();
        amat.extend(form.rows[q.row].g.iter().map(|v| s * v));
        bvec.push(s * q.bound);
    }
    let mut qmat: Vec<f64> = form.h.transpose().iter().copied().collect();
    let sol = quadprog::solve_qp(&mut qmat, form.c.as_slice(), &amat, &bvec, 0, false).map_err(|e| match e {
        quadprog::Error::Infeasible => Error::Infeasible,
        other => Error::Certificate(format!("QP solve failed: {other:?}")),
    })?;

    let z_qp = DVector::from_vec(sol.sol);
    let mut active: Vec<usize> = sol.iact.clone();
    active.sort_unstable();
    let lam_qp: Vec<f64> = active.iter().map(|&i| sol.lagr[i]).collect();

    let polished = polish(&form, &ineqs, &active);
    let candidates = polished.into_iter().chain(std::iter::once((z_qp, lam_qp)));
    let mut last_err = None;
    for (z, lam) in candidates {
        match certify(&form, &ineqs, &active, &z, &lam) {
            Ok(stationarity) => {
                let active_set = active
                    .iter()
                    .zip(&lam)
                    .map(|(&i, &l)| {
                        let q = &ineqs[i];
                        ActiveConstraint { site: form.rows[q.row].site, side: q.side, multiplier: q.sign() * l }
                    })
                    .collect();
                return BatchForm::solution(inst, &z, active_set, stationarity);
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::Certificate("no candidate".into())))
}

/// Solve `[H Aᵀ; A 0] [z; λ] = [−c; b]` for the active rows.
fn polish(form: &BatchForm, ineqs: &[Ineq], active: &[usize]) -> Option<(DVector<f64>, Vec<f64>)> {
    let d = form.dim();
    let p = active.len();
    let mut kkt = DMatrix::<f64>::zeros(d + p, d + p);
    let mut rhs = DVector::<f64>::zeros(d + p);
    kkt.view_mut((0, 0), (d, d)).copy_from(&form.h);
    rhs.rows_mut(0, d).copy_from(&(-&form.c));
    for (j, &i) in active.iter().enumerate() {
        let q = &ineqs[i];
        let g = &form.rows[q.row].g * q.sign();
        kkt.view_mut((0, d + j), (d, 1)).copy_from(&g);
        kkt.view_mut((d + j, 0), (1, d)).copy_from(&g.transpose());
        rhs[d + j] = q.sign() * q.bound;
    }
    let lu = kkt.clone().full_piv_lu();
    if !lu.is_invertible() {
        return None;
    }
    let mut x = lu.solve(&rhs)?;
    for _ in 0..3 {
        let r = &rhs - &kkt * &x;
        x += lu.solve(&r)?;
    }
    let z = x.rows(0, d).into_owned();
    let lam = x.rows(d, p).iter().copied().collect();
    Some((z, lam))
}

fn certify(form: &BatchForm, ineqs: &[Ineq], active: &[usize], z: &DVector<f64>, lam: &[f64]) -> Result<f64> {
    let mut grad = &form.h * z + &form.c;
    for (&i, &l) in active.iter().zip(lam) {
        let q = &ineqs[i];
        grad.axpy(q.sign() * l, &form.rows[q.row].g, 1.0);
    }
    let scale = 1.0 + form.c.amax() + form.h.amax() * z.amax();
    let stationarity = grad.amax();
    if !(stationarity <= STATIONARITY_TOL * scale) {
        return Err(Error::Certificate(format!("stationarity residual {stationarity:e}")));
    }
    if let Some(l) = lam.iter().find(|&&l| !(l >= -SIGN_TOL)) {
        return Err(Error::Certificate(format!("multiplier {l:e} has the wrong sign")));
    }
    for q in ineqs {
        let y = form.rows[q.row].g.dot(z);
        let slack = q.sign() * (q.bound - y);
        if !(slack >= -FEASIBILITY_TOL * (1.0 + q.bound.abs())) {
            return Err(Error::Certificate(format!("constraint violated by {:e}", -slack)));
        }
    }
    for &i in active {
        let q = &ineqs[i];
        let gap = (form.rows[q.row].g.dot(z) - q.bound).abs();
        if !(gap <= FEASIBILITY_TOL * (1.0 + q.bound.abs())) {
            return Err(Error::Certificate(format!("active constraint off its bound by {gap:e}")));
        }
    }
    Ok(stationarity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::ScalarLoss;
    use crate::ssm::{generate_appendix_b, scalar_chain, Site};

    #[test]
    fn unconstrained_is_prior_mean() {
        let sol = active_set_qp(&scalar_chain(3)).unwrap();
        assert_eq!(sol.j, 0.0);
        assert!(sol.active_set.is_empty());
        assert!(sol.x1.amax() == 0.0 && sol.u.iter().all(|u| u.amax() == 0.0));
    }

    #[test]
    fn hand_kkt() {
        let mut inst = scalar_chain(1);
        inst.set_output_loss(0, 0, Some(ScalarLoss::geq(2.0).unwrap())).unwrap();
        let sol = active_set_qp(&inst).unwrap();
        assert!((sol.x1[0] - 1.0).abs() < 1e-12);
        assert!((sol.u[0][0] - 1.0).abs() < 1e-12);
        assert!((sol.j - 1.0).abs() < 1e-12);
        assert_eq!(sol.active_set.len(), 1);
        assert_eq!(sol.active_set[0].side, Side::Lower);
        assert!((sol.multiplier(Site::Output { n: 0, k: 0 }) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn seeded_instance_is_certified_feasible() {
        let inst = generate_appendix_b(4, 2, 2, 8, 1).unwrap();
        let sol = active_set_qp(&inst).unwrap();
        let report = inst.feasibility_check(&sol.u, &sol.y, 1e-10);
        assert!(report.is_feasible(), "{report:?}");
        assert!(sol.j > 0.0);
        for a in &sol.active_set {
            match a.side {
                Side::Upper => assert!(a.multiplier >= -1e-10),
                Side::Lower => assert!(a.multiplier <= 1e-10),
            }
        }
    }

    #[test]
    fn infeasible_detected() {
        let mut inst = scalar_chain(1);
        inst.set_output_loss(0, 0, Some(ScalarLoss::geq(2.0).unwrap())).unwrap();
        inst.set_input_loss(0, 0, Some(ScalarLoss::leq(0.0).unwrap())).unwrap();
        assert!(active_set_qp(&inst).is_ok());
        // s1 ≥ 2, u2 = 0, s2 = s1 + u2 ≤ 1
        let mut inst = scalar_chain(2);
        inst.set_output_loss(0, 0, Some(ScalarLoss::geq(2.0).unwrap())).unwrap();
        inst.set_input_loss(1, 0, Some(ScalarLoss::interval(0.0, 0.0).unwrap())).unwrap();
        inst.set_output_loss(1, 0, Some(ScalarLoss::leq(1.0).unwrap())).unwrap();
        assert!(matches!(active_set_qp(&inst), Err(Error::Infeasible)));
    }

    #[test]
    fn soft_losses_rejected() {
        let mut inst = scalar_chain(1);
        inst.set_output_loss(0, 0, Some(ScalarLoss::hinge_i(2.0, 3.0).unwrap())).unwrap();
        assert!(matches!(active_set_qp(&inst), Err(Error::UnsupportedLoss { .. })));
    }
}
