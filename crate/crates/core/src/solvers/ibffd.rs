//! Iterated backward filtering, forward deciding.
//!
//! The backward pass is a Gaussian max-product (information) filter that
//! summarizes the future as a quadratic cost-to-go `½ sᵀ W s − ξᵀ s` on each
//! state, with every input loss represented by its current NUP quadratic.
//! The forward pass then decides each `u_n` exactly against the true losses,
//! given the decided past and the cost-to-go of the future. Only input-side
//! losses are supported.

use nalgebra::{DMatrix, DVector};

use super::{initial_message, primal_nup_message, Diagnostics, Driver, Solution, SolverConfig, SolverKind};
use crate::error::{Error, Result};
use crate::gauss::{invert_symmetric, ScalarMessage};
use crate::losses::{LossKind, ScalarLoss};
use crate::ssm::{ProblemInstance, Site};

const CD_MAX_SWEEPS: usize = 100_000;
const CD_TOL: f64 = 1e-15;

struct InputLoss {
    loss: ScalarLoss,
    surrogate: ScalarLoss,
    msg: ScalarMessage,
}

pub fn ibffd_solve(inst: &ProblemInstance, config: &SolverConfig) -> Result<Solution> {
    let mut driver = Driver::new(inst, config)?;
    let (m, l, k, n) = inst.dims();
    for (site, loss) in inst.losses() {
        match site {
            Site::Output { n: t, k: kk } => {
                return Err(Error::OutputConstrainedIbffd { step: t + 1, output: kk + 1 });
            }
            Site::Input { .. } if loss.kind() == LossKind::L1 => {
                return Err(Error::UnsupportedLoss { kind: "l1", context: "IBFFD (no primal NUP representation)" });
            }
            Site::Input { .. } => {}
        }
    }
    // inputs[t][l]
    let mut inputs: Vec<Vec<Option<InputLoss>>> = (0..n)
        .map(|t| {
            (0..l)
                .map(|ll| {
                    inst.input_loss(t, ll)
                        .map(|lo| Ok(InputLoss { loss: *lo, surrogate: lo.hinge_surrogate(config.beta)?, msg: initial_message(lo) }))
                        .transpose()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let model = &inst.model;
    let pr = &inst.priors;
    let p_x1 = pr.precision_x1();
    let p_u = pr.precision_u();
    let pu_mu = &p_u * &pr.m_u;
    let c = &model.c;
    let mut u_hat: Vec<DVector<f64>> = vec![pr.m_u.clone(); n];
    let mut stuck = 0;

    let mut iter = 0;
    loop {
        iter += 1;
        // backward information filter; cost[t] summarizes outputs at steps ≥ t
        // and inputs at steps > t
        let mut cost: Vec<(DMatrix<f64>, DVector<f64>)> = Vec::with_capacity(n);
        let mut w = DMatrix::<f64>::zeros(m, m);
        let mut xi = DVector::<f64>::zeros(m);
        for t in (0..n).rev() {
            for kk in 0..k {
                if let Some(o) = inst.observation(t, kk) {
                    let row = c.row(kk).transpose();
                    w.ger(1.0 / o.var, &row, &row, 1.0);
                    xi.axpy(o.target / o.var, &row, 1.0);
                }
            }
            cost.push((w.clone(), xi.clone()));
            let mut s = &p_u + model.b.tr_mul(&(&w * &model.b));
            let mut q = pu_mu.clone();
            for (ll, inp) in inputs[t].iter().enumerate() {
                if let Some(inp) = inp {
                    let (wl, xl) = inp.msg.as_precision();
                    s[(ll, ll)] += wl;
                    q[ll] += xl;
                }
            }
            let s_inv = invert_symmetric(&s)?;
            let kmat = model.a.tr_mul(&(&w * &model.b));
            let h = q + model.b.tr_mul(&xi);
            let next_w = model.a.tr_mul(&(&w * &model.a)) - &kmat * &s_inv * kmat.transpose();
            let next_xi = model.a.tr_mul(&xi) - &kmat * (&s_inv * h);
            w = 0.5 * (&next_w + next_w.transpose());
            xi = next_xi;
        }
        cost.reverse();
        if !w.iter().chain(xi.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite { iteration: iter, context: "backward information filter".into() });
        }

        // forward deciding
        let lhs = &p_x1 + &w;
        let rhs = &p_x1 * &pr.m_x1 + &xi;
        let x1 = invert_symmetric(&lhs)? * rhs;
        let mut s = x1.clone();
        for t in 0..n {
            let (wn, xin) = &cost[t];
            let qmat = &p_u + model.b.tr_mul(&(wn * &model.b));
            let r = &pu_mu + model.b.tr_mul(&(xin - wn * (&model.a * &s)));
            let losses: Vec<Option<&ScalarLoss>> = inputs[t].iter().map(|i| i.as_ref().map(|i| &i.loss)).collect();
            u_hat[t] = decide_inputs(&qmat, &r, &losses, &u_hat[t], iter)?;
            s = &model.a * &s + &model.b * &u_hat[t];
        }

        let ev = driver.evaluate(iter, &x1, &u_hat)?;
        if ev.converged || iter >= config.max_iters {
            let diag = Diagnostics { clamped_variances: 0, stuck_updates: stuck };
            return Ok(driver.finish(SolverKind::Ibffd, x1, u_hat, ev, iter, None, diag));
        }
        for (t, row) in inputs.iter_mut().enumerate() {
            for (ll, inp) in row.iter_mut().enumerate() {
                if let Some(inp) = inp {
                    let (msg, hit) = primal_nup_message(&inp.surrogate, u_hat[t][ll], config.floor_eps)?;
                    inp.msg = msg;
                    stuck += usize::from(hit);
                }
            }
        }
    }
}

/// `argmin_u ½ uᵀ Q u − rᵀ u + Σ κ_l(u_l)` by exact cyclic coordinate
/// minimization; each coordinate step is a scalar prox.
fn decide_inputs(q: &DMatrix<f64>, r: &DVector<f64>, losses: &[Option<&ScalarLoss>], start: &DVector<f64>, iteration: usize) -> Result<DVector<f64>> {
    let l = r.len();
    let mut u = start.clone();
    if losses.iter().all(Option::is_none) {
        return Ok(invert_symmetric(q)? * r);
    }
    for _ in 0..CD_MAX_SWEEPS {
        let mut change: f64 = 0.0;
        for i in 0..l {
            let qii = q[(i, i)];
            let g = r[i] - (0..l).filter(|&j| j != i).map(|j| q[(i, j)] * u[j]).sum::<f64>();
            let next = match losses[i] {
                Some(loss) => loss.primal_prox(g / qii, 1.0 / qii),
                None => g / qii,
            };
            change = change.max((next - u[i]).abs() / (1.0 + next.abs()));
            u[i] = next;
        }
        if !u.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { iteration, context: "forward deciding".into() });
        }
        if change <= CD_TOL || l == 1 {
            break;
        }
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::active_set_qp;
    use crate::ssm::{generate_appendix_b, generate_input_constrained, scalar_chain};

    #[test]
    fn unconstrained() {
        let inst = scalar_chain(3);
        let sol = ibffd_solve(&inst, &SolverConfig::default()).unwrap();
        assert_eq!(sol.iters, 1);
        assert_eq!(sol.j, 0.0);
        assert!(sol.u_hat.iter().all(|u| u[0] == 0.0));
    }

    #[test]
    fn hand_input_bound() {
        let mut inst = scalar_chain(1);
        inst.set_input_loss(0, 0, Some(ScalarLoss::geq(1.0).unwrap())).unwrap();
        let sol = ibffd_solve(&inst, &SolverConfig::default()).unwrap();
        assert!((sol.u_hat[0][0] - 1.0).abs() < 1e-12);
        assert!((sol.j - 0.5).abs() < 1e-12);
        assert!(sol.converged);
    }

    #[test]
    fn rejects_output_constraints() {
        let inst = generate_appendix_b(2, 1, 1, 3, 0).unwrap();
        let err = ibffd_solve(&inst, &SolverConfig::default()).unwrap_err();
        assert!(err.to_string().contains("IBFFD requires input-side constraints"));
    }

    #[test]
    fn matches_oracle_on_input_constrained_instance() {
        for seed in 0..3 {
            let inst = generate_input_constrained(4, 2, 2, 8, seed).unwrap();
            let oracle = active_set_qp(&inst).unwrap();
            let sol = ibffd_solve(&inst, &SolverConfig { max_iters: 5000, tol: 1e-13, ..Default::default() }).unwrap();
            assert!((sol.j - oracle.j).abs() <= 1e-6 * oracle.j.abs().max(1.0), "seed {seed}: {} vs {}", sol.j, oracle.j);
        }
    }

    #[test]
    fn coordinate_decision_matches_closed_form() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let r = DVector::from_vec(vec![1.0, -2.0]);
        let geq = ScalarLoss::geq(0.0).unwrap();
        let u = decide_inputs(&q, &r, &[None, Some(&geq)], &DVector::zeros(2), 1).unwrap();
        // bound active on u2: 2 u1 = 1 → u1 = 0.5
        assert!((u[0] - 0.5).abs() < 1e-12);
        assert_eq!(u[1], 0.0);
    }
}
