use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{ActiveConstraint, BatchForm, LossRow, OracleSolution, Side};
use crate::error::{Error, Result};
use crate::losses::{LossKind, ScalarLoss};
use crate::ssm::ProblemInstance;

/// Largest number of candidate piece assignments [`enumerate_qp`] will try.
pub const ENUMERATION_LIMIT: usize = 1_600_000;

const TOL: f64 = 1e-9;

/// Where a scalar `g·z` sits on its piecewise-linear loss.
#[derive(Debug, Clone, Copy)]
enum Piece {
    /// Open piece `(lo, hi)` with constant slope.
    Linear { lo: f64, hi: f64, slope: f64 },
    /// Kink at `at`; the subgradient ranges over `[left, right]`.
    Kink { at: f64, left: f64, right: f64 },
}

/// Pieces of `κ`, written out from the primal definition.
fn pieces(loss: &ScalarLoss) -> Vec<Piece> {
    let (a, b, beta) = (loss.a(), loss.b(), loss.beta());
    let ninf = f64::NEG_INFINITY;
    let inf = f64::INFINITY;
    let lin = |lo, hi, slope| Piece::Linear { lo, hi, slope };
    let kink = |at, left, right| Piece::Kink { at, left, right };
    match loss.kind() {
        LossKind::L1 => vec![lin(ninf, a, -beta), kink(a, -beta, beta), lin(a, inf, beta)],
        LossKind::HingeI => vec![lin(ninf, a, -beta), kink(a, -beta, 0.0), lin(a, inf, 0.0)],
        LossKind::HingeII => vec![lin(ninf, b, 0.0), kink(b, 0.0, beta), lin(b, inf, beta)],
        LossKind::Vapnik => {
            let s = 2.0 * beta;
            if a == b {
                vec![lin(ninf, a, -s), kink(a, -s, s), lin(a, inf, s)]
            } else {
                vec![lin(ninf, a, -s), kink(a, -s, 0.0), lin(a, b, 0.0), kink(b, 0.0, s), lin(b, inf, s)]
            }
        }
        LossKind::HalfSpaceGeq => vec![kink(a, ninf, 0.0), lin(a, inf, 0.0)],
        LossKind::HalfSpaceLeq => vec![lin(ninf, b, 0.0), kink(b, 0.0, inf)],
        LossKind::Interval => {
            if a == b {
                vec![kink(a, ninf, inf)]
            } else {
                vec![kink(a, ninf, 0.0), lin(a, b, 0.0), kink(b, 0.0, inf)]
            }
        }
    }
}

/// Exact optimum by brute force over every assignment of each loss to one
/// of its linear pieces or kinks.
///
/// Each assignment fixes a linear cost and a set of equalities; the
/// resulting KKT system is solved densely and accepted when every scalar
/// lies in its piece and every kink multiplier lies in the subdifferential.
/// Supports all loss kinds; the cost is exponential in the number of losses.
pub fn enumerate_qp(inst: &ProblemInstance) -> Result<OracleSolution> {
    let form = BatchForm::new(inst)?;
    let options: Vec<Vec<Piece>> = form.rows.iter().map(|r| pieces(&r.loss)).collect();
    let total: f64 = options.iter().map(|o| o.len() as f64).product();
    if total > ENUMERATION_LIMIT as f64 {
        return Err(Error::EnumerationBound { candidates: total, limit: ENUMERATION_LIMIT });
    }
    let total = total as usize;
    let radices: Vec<usize> = options.iter().map(Vec::len).collect();

    let found = (0..total).into_par_iter().find_map_first(|index| {
        let mut rem = index;
        let choice: Vec<Piece> = radices
            .iter()
            .zip(&options)
            .map(|(&r, o)| {
                let p = o[rem % r];
                rem /= r;
                p
            })
            .collect();
        try_assignment(&form, &choice)
    });
    let (z, active, stationarity) = found.ok_or(Error::Infeasible)?;
    BatchForm::solution(inst, &z, active, stationarity)
}

fn try_assignment(form: &BatchForm, choice: &[Piece]) -> Option<(DVector<f64>, Vec<ActiveConstraint>, f64)> {
    let d = form.dim();
    let kinks: Vec<(usize, f64)> = choice
        .iter()
        .enumerate()
        .filter_map(|(i, p)| match p {
            Piece::Kink { at, .. } => Some((i, *at)),
            Piece::Linear { .. } => None,
        })
        .collect();
    let p = kinks.len();
    let mut lin = form.c.clone();
    for (row, piece) in form.rows.iter().zip(choice) {
        if let Piece::Linear { slope, .. } = piece {
            lin.axpy(*slope, &row.g, 1.0);
        }
    }
    let mut kkt = DMatrix::<f64>::zeros(d + p, d + p);
    let mut rhs = DVector::<f64>::zeros(d + p);
    kkt.view_mut((0, 0), (d, d)).copy_from(&form.h);
    rhs.rows_mut(0, d).copy_from(&(-&lin));
    for (j, &(i, at)) in kinks.iter().enumerate() {
        let g: &LossRow = &form.rows[i];
        kkt.view_mut((0, d + j), (d, 1)).copy_from(&g.g);
        kkt.view_mut((d + j, 0), (1, d)).copy_from(&g.g.transpose());
        rhs[d + j] = at;
    }
    let lu = kkt.clone().full_piv_lu();
    if !lu.is_invertible() {
        return None;
    }
    let mut x = lu.solve(&rhs)?;
    let r = &rhs - &kkt * &x;
    x += lu.solve(&r)?;
    let residual = (&rhs - &kkt * &x).rows(0, d).amax();
    let z = x.rows(0, d).into_owned();

    let mut active = Vec::new();
    let mut mu_iter = x.rows(d, p).iter().copied().collect::<Vec<_>>().into_iter();
    for (row, piece) in form.rows.iter().zip(choice) {
        let y = row.g.dot(&z);
        match *piece {
            Piece::Linear { lo, hi, .. } => {
                let tol = TOL * (1.0 + y.abs());
                if y < lo - tol || y > hi + tol {
                    return None;
                }
            }
            Piece::Kink { left, right, .. } => {
                let mu = mu_iter.next()?;
                let tol = TOL * (1.0 + mu.abs());
                if mu < left - tol || mu > right + tol {
                    return None;
                }
                if row.loss.kind().is_hard() && mu != 0.0 {
                    let side = if left.is_infinite() { Side::Lower } else { Side::Upper };
                    active.push(ActiveConstraint { site: row.site, side, multiplier: mu });
                }
            }
        }
    }
    Some((z, active, residual))
}
