//! Random output-constrained instance: IFFBDD and IRLGE against the oracle.
//!
//! Usage: `cargo run --release --example appendix_b -- [M L K N seed]`

use dualnup::oracle::active_set_qp;
use dualnup::solvers::{iffbdd_solve, irlge_solve, SolverConfig};
use dualnup::ssm::generate_appendix_b;

fn main() -> dualnup::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let get = |i: usize, d: u64| args.get(i).copied().unwrap_or(d);
    let (m, l, k, n, seed) = (get(0, 6) as usize, get(1, 3) as usize, get(2, 3) as usize, get(3, 40) as usize, get(4, 0));
    let inst = generate_appendix_b(m, l, k, n, seed)?;
    println!("M={m} L={l} K={k} N={n} seed={seed}: {} constrained outputs", inst.losses().count());

    let oracle = active_set_qp(&inst)?;
    println!("oracle  J = {:.10}", oracle.j);
    let sol = iffbdd_solve(&inst, &SolverConfig::default())?;
    println!("iffbdd  J = {:.10}  iters = {:4}  violation = {:.2e}  converged = {}", sol.j, sol.iters, sol.max_violation, sol.converged);
    for beta in [1e2, 1e3] {
        let sol = irlge_solve(&inst, &SolverConfig { beta, ..Default::default() })?;
        println!("irlge   J = {:.10}  iters = {:4}  violation = {:.2e}  converged = {}  (beta {beta:.0e})", sol.j, sol.iters, sol.max_violation, sol.converged);
    }
    Ok(())
}
