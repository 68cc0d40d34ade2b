//! Gaussian smoothing of a noisy random walk from scalar observations.

use dualnup::gauss::ScalarMessage;
use dualnup::solvers::smoother;
use dualnup::ssm::{scalar_chain, InstanceRng, Site};

fn main() -> dualnup::Result<()> {
    let n = 20;
    let inst = scalar_chain(n);
    let mut rng = InstanceRng::new(3);
    let mut truth = Vec::with_capacity(n);
    let mut s = rng.normal();
    let mut messages = Vec::new();
    for t in 0..n {
        s += rng.normal();
        truth.push(s);
        messages.push((Site::Output { n: t, k: 0 }, ScalarMessage::mean_var(s + 0.5 * rng.normal(), 0.25)));
    }
    let out = smoother(&inst, &messages)?;
    println!("{:>3} {:>9} {:>9} {:>9}", "n", "truth", "observed", "smoothed");
    for t in 0..n {
        let ScalarMessage::MeanVar { mean, .. } = messages[t].1 else { unreachable!() };
        println!("{:>3} {:>9.4} {:>9.4} {:>9.4}", t + 1, truth[t], mean, out.y[t][0]);
    }
    Ok(())
}
