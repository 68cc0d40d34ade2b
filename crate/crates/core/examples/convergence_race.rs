//! Iterations to a relative gap of 1e-6 to the oracle, IFFBDD against IRLGE.

use dualnup::verify::convergence_race;

fn main() -> dualnup::Result<()> {
    let (outcomes, elapsed) = convergence_race(0..10, (10, 5, 5, 100), &[1e2, 1e3], 1e-6)?;
    let show = |i: Option<usize>| i.map_or_else(|| "never".to_string(), |i| i.to_string());
    println!("{:>4} {:>16} {:>8} {:>12} {:>12}", "seed", "oracle J", "iffbdd", "irlge 1e2", "irlge 1e3");
    for o in &outcomes {
        println!("{:>4} {:>16.8} {:>8} {:>12} {:>12}", o.seed, o.oracle_j, show(o.iffbdd), show(o.irlge[0].1), show(o.irlge[1].1));
    }
    let wins = outcomes.iter().filter(|o| o.iffbdd_wins()).count();
    println!("iffbdd first on {wins} of {} seeds, {:.2} s", outcomes.len(), elapsed.as_secs_f64());
    Ok(())
}
