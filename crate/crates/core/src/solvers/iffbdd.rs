//! Iterative forward filtering, backward dual deciding.
//!
//! Each iteration filters forward with the current dual NUP messages in
//! precision form, then sweeps backward deciding every `z̃` from its forward
//! message and refreshing the message from the decision. Hard losses are
//! handled exactly through the conjugate domain; no slope surrogate is used.

use super::sweep::{gaussian_decision, Chain};
use super::{Diagnostics, Driver, DualReport, Solution, SolverConfig, SolverKind};
use crate::error::{Error, Result};
use crate::gauss::ScalarMessage;
use crate::losses::{DualNupState, ScalarLoss};
use crate::ssm::{ProblemInstance, Site};

fn dual_message(state: &DualNupState) -> ScalarMessage {
    // N(z̃; m̃, Ṽ) acts on the primal side as the linear-quadratic term w = Ṽ, ξ = −m̃
    ScalarMessage::precision(state.v_bwd, -state.m_bwd)
}

pub fn iffbdd_solve(inst: &ProblemInstance, config: &SolverConfig) -> Result<Solution> {
    let mut driver = Driver::new(inst, config)?;
    let losses: Vec<(Site, ScalarLoss)> = inst.losses().map(|(s, l)| (s, *l)).collect();
    let mut states: Vec<DualNupState> = losses.iter().map(|(_, l)| DualNupState::new(config.initial_gamma(l))).collect();
    let mut chain = Chain::new(inst, true, |_| ScalarMessage::UNINFORMATIVE, &[])?;
    let floor = config.floor_eps;

    let mut iter = 0;
    loop {
        iter += 1;
        chain.forward(iter)?;
        let out = chain.backward(iter, |factor, m, v| match factor.loss {
            Some(i) => {
                if !(v > 0.0) {
                    return Err(Error::DegenerateForward { iteration: iter, variance: v });
                }
                let state = &mut states[i];
                let zt = state.decide_and_update(&losses[i].1, m / v, 1.0 / v, floor);
                Ok((zt, Some(dual_message(state))))
            }
            None => Ok((gaussian_decision(factor.msg, m, v)?, None)),
        })?;
        let ev = driver.evaluate(iter, &out.x1, &out.u)?;
        if ev.converged || iter >= config.max_iters {
            let nl = losses.len();
            let mut report = DualReport {
                sites: losses.iter().map(|(s, _)| *s).collect(),
                decisions: vec![0.0; nl],
                recovered: vec![0.0; nl],
                messages: vec![ScalarMessage::UNINFORMATIVE; nl],
                forward: vec![(0.0, 0.0); nl],
                gammas: states.iter().map(|s| s.gamma).collect(),
                x_tilde: out.x_tilde,
            };
            for (f, factor) in chain.factors.iter().enumerate() {
                if let Some(i) = factor.loss {
                    report.decisions[i] = out.decisions[f];
                    report.recovered[i] = out.recovered[f];
                    report.messages[i] = factor.msg;
                    report.forward[i] = out.forward[f];
                }
            }
            let diag = Diagnostics { clamped_variances: chain.clamped, stuck_updates: 0 };
            return Ok(driver.finish(SolverKind::Iffbdd, out.x1, out.u, ev, iter, Some(report), diag));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::active_set_qp;
    use crate::ssm::{generate_appendix_b, generate_input_constrained, scalar_chain};

    #[test]
    fn unconstrained_stops_after_one_iteration() {
        let inst = scalar_chain(3);
        let sol = iffbdd_solve(&inst, &SolverConfig::default()).unwrap();
        assert_eq!(sol.iters, 1);
        assert!(sol.converged);
        assert_eq!(sol.j, 0.0);
    }

    #[test]
    fn hand_kkt_geq() {
        let mut inst = scalar_chain(1);
        inst.set_output_loss(0, 0, Some(ScalarLoss::geq(2.0).unwrap())).unwrap();
        let sol = iffbdd_solve(&inst, &SolverConfig::default()).unwrap();
        assert!((sol.x1_hat[0] - 1.0).abs() < 1e-9);
        assert!((sol.u_hat[0][0] - 1.0).abs() < 1e-9);
        assert!((sol.j - 1.0).abs() < 1e-9);
        let dual = sol.dual.unwrap();
        // ỹ = −1 is the KKT multiplier of the lower bound
        assert!((dual.decision(Site::Output { n: 0, k: 0 }).unwrap() + 1.0).abs() < 1e-9);
    }

    #[test]
    fn slack_constraint_changes_nothing() {
        let mut inst = scalar_chain(1);
        inst.set_output_loss(0, 0, Some(ScalarLoss::leq(5.0).unwrap())).unwrap();
        let sol = iffbdd_solve(&inst, &SolverConfig::default()).unwrap();
        assert!(sol.j.abs() < 1e-12);
        assert!(sol.converged);
    }

    #[test]
    fn matches_oracle_on_generated_instance() {
        let inst = generate_appendix_b(4, 2, 2, 10, 3).unwrap();
        let oracle = active_set_qp(&inst).unwrap();
        let sol = iffbdd_solve(&inst, &SolverConfig { max_iters: 5000, tol: 1e-12, ..Default::default() }).unwrap();
        assert!((sol.j - oracle.j).abs() <= 1e-4 * oracle.j, "{} vs {}", sol.j, oracle.j);
    }

    #[test]
    fn handles_input_constraints() {
        let inst = generate_input_constrained(3, 2, 2, 8, 1).unwrap();
        let oracle = active_set_qp(&inst).unwrap();
        let sol = iffbdd_solve(&inst, &SolverConfig { max_iters: 5000, tol: 1e-12, ..Default::default() }).unwrap();
        assert!((sol.j - oracle.j).abs() <= 1e-4 * oracle.j.max(1.0), "{} vs {}", sol.j, oracle.j);
    }
}
