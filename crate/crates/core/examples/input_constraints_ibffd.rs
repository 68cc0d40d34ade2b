//! Box constraints on the inputs with Gaussian output observations: the
//! three solvers against the oracle, and IBFFD refusing output constraints.

use dualnup::oracle::active_set_qp;
use dualnup::solvers::{SolverConfig, SolverKind};
use dualnup::ssm::{generate_appendix_b, generate_input_constrained};

fn main() -> dualnup::Result<()> {
    let inst = generate_input_constrained(4, 2, 2, 20, 7)?;
    let oracle = active_set_qp(&inst)?;
    println!("oracle  J = {:.10}  ({} active bounds)", oracle.j, oracle.active_set.len());
    for solver in [SolverKind::Ibffd, SolverKind::Iffbdd, SolverKind::Irlge] {
        let sol = solver.solve(&inst, &SolverConfig::default())?;
        println!("{:<7} J = {:.10}  iters = {:4}  violation = {:.2e}", solver.name(), sol.j, sol.iters, sol.max_violation);
    }
    let outputs = generate_appendix_b(4, 2, 2, 20, 7)?;
    match SolverKind::Ibffd.solve(&outputs, &SolverConfig::default()) {
        Err(e) => println!("output-constrained instance: {e}"),
        Ok(_) => println!("output-constrained instance unexpectedly accepted"),
    }
    Ok(())
}
