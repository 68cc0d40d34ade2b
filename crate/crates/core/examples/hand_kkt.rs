//! `min ½x² + ½u²` subject to `x + u ≥ 2`, solved by IFFBDD and checked
//! against the KKT point `x = u = 1`, multiplier `λ = 1`.

use dualnup::oracle::active_set_qp;
use dualnup::solvers::{iffbdd_solve, SolverConfig};
use dualnup::ssm::Site;
use dualnup::verify::hand_kkt_instance;

fn main() -> dualnup::Result<()> {
    let inst = hand_kkt_instance();
    let sol = iffbdd_solve(&inst, &SolverConfig::default())?;
    let dual = sol.dual.as_ref().expect("iffbdd reports dual quantities");
    let site = Site::Output { n: 0, k: 0 };
    println!("iffbdd: x = {:.12}, u = {:.12}, y = {:.12}, J = {:.12}", sol.x1_hat[0], sol.u_hat[0][0], sol.y_hat[0][0], sol.j);
    println!("        dual decision = {:.12} after {} iterations", dual.decision(site).unwrap(), sol.iters);

    let oracle = active_set_qp(&inst)?;
    println!("oracle: x = {:.12}, u = {:.12}, J = {:.12}, multiplier = {:.12}", oracle.x1[0], oracle.u[0][0], oracle.j, oracle.multiplier(site));
    println!("closed form: x = u = 1, J = 1, multiplier 1");
    Ok(())
}
