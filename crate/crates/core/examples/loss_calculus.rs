//! Primal losses, their conjugates and the dual NUP decision for each kind.

use dualnup::losses::{DualNupState, ScalarLoss, DEFAULT_FLOOR};

fn main() -> dualnup::Result<()> {
    let losses = [
        ScalarLoss::l1(0.5, 2.0)?,
        ScalarLoss::hinge_i(-1.0, 1.5)?,
        ScalarLoss::hinge_ii(1.0, 1.5)?,
        ScalarLoss::vapnik(-1.0, 1.0, 2.0)?,
        ScalarLoss::geq(-1.0)?,
        ScalarLoss::leq(1.0)?,
        ScalarLoss::interval(-1.0, 1.0)?,
    ];
    // primal forward Gaussian N(m, v) at the loss; its dual form is N(m/v, 1/v)
    let (m, v) = (1.6, 0.8);
    for loss in &losses {
        let (lo, hi) = loss.dual_domain();
        // start from γ = 1 unless the box fixes it; escalation may raise it
        let start = if loss.is_box_limit() { 0.5 * (loss.b() - loss.a()) } else { 1.0 };
        let mut state = DualNupState::new(start);
        let zt = state.decide_and_update(loss, m / v, 1.0 / v, DEFAULT_FLOOR);
        let gamma = state.gamma;
        let prox = loss.primal_prox(m, v);
        let (w, xi) = (state.m_bwd, state.v_bwd);
        println!("{:<9} primal(0)={:<8.4} dual domain [{lo}, {hi}]", loss.kind().name(), loss.primal_eval(0.0));
        println!("          conj(-0.5)={:<8.4} conj(0.5)={:<8.4} kinks {:?}", loss.conjugate_eval(-0.5), loss.conjugate_eval(0.5), loss.dual_kinks());
        println!("          gamma={gamma:<8.4} decision={zt:<9.5} recovered primal={:<9.5} prox={prox:.5}", m - v * zt);
        println!("          backward dual message (mean, var) = ({w:.4e}, {xi:.4e})");
    }
    Ok(())
}
