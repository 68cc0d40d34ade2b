//! Instance and solution files: write, reload, solve, and the history CSV.

use dualnup::io::{instance_from_json, instance_to_json, solution_to_json, write_history, HistoryRow};
use dualnup::solvers::{iffbdd_solve, SolverConfig};
use dualnup::ssm::generate_appendix_b;

fn main() -> dualnup::Result<()> {
    let inst = generate_appendix_b(2, 1, 1, 3, 11)?;
    let text = instance_to_json(&inst)?;
    println!("{text}");
    let back = instance_from_json(&text)?;
    assert_eq!(instance_to_json(&back)?, text, "round trip is byte-identical");

    let sol = iffbdd_solve(&back, &SolverConfig::default())?;
    println!("{}", solution_to_json(&sol)?);
    let rows = HistoryRow::from_solution(&sol, back.meta.seed, None, 0.0);
    write_history(std::io::stdout(), &rows)?;
    Ok(())
}
