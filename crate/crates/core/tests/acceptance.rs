//! Acceptance criteria 1 to 9, one PASS/FAIL line each.
//!
//! Built with `harness = false` so the summary is printed on every run; the
//! process exits non-zero when any criterion fails.

use std::time::{Duration, Instant};

use dualnup::verify::{self, PropertyReport};

struct Criterion {
    id: usize,
    title: &'static str,
    reports: Vec<PropertyReport>,
    /// Extra requirement beyond the property reports, with its description.
    extra: Option<(bool, String)>,
    elapsed: Duration,
}

impl Criterion {
    fn passed(&self) -> bool {
        self.reports.iter().all(PropertyReport::passed) && self.extra.as_ref().is_none_or(|(ok, _)| *ok)
    }
}

fn timed(id: usize, title: &'static str, f: impl FnOnce() -> (Vec<PropertyReport>, Option<(bool, String)>)) -> Criterion {
    let start = Instant::now();
    let (reports, extra) = f();
    Criterion { id, title, reports, extra, elapsed: start.elapsed() }
}

fn criteria() -> Vec<Criterion> {
    vec![
        timed(1, "IFFBDD matches the oracle on 20 instances (M=4, L=2, K=2, N=8)", || {
            let start = Instant::now();
            let (gap, viol) = verify::iffbdd_vs_oracle(0, 20);
            let t = start.elapsed().as_secs_f64();
            (vec![gap, viol], Some((t < 10.0, format!("runtime {t:.2} s (limit 10 s)"))))
        }),
        timed(2, "hand KKT instance: x = u = 1, J = 1 for IFFBDD and oracle", || (vec![verify::hand_kkt(1e-8)], None)),
        timed(3, "loss calculus: conjugacy, tangency, deciding, slope limits", || {
            (
                vec![
                    verify::conjugacy(0, 100),
                    verify::biconjugacy(0, 100),
                    verify::tangency(0, 200),
                    verify::deciding(0, 200),
                    verify::limits(0, 100),
                ],
                None,
            )
        }),
        timed(4, "gamma escalation lands in the finite region; interval gamma invariance", || {
            (vec![verify::escalation(0, 1000), verify::interval_gamma(0, 500)], None)
        }),
        timed(5, "Gaussian kernels match dense joint solves", || {
            (vec![verify::observe_vs_dense(0, 200), verify::smoother_vs_dense(0, 200)], None)
        }),
        timed(6, "primal optimum equals the value recovered from the dual iterate", || (vec![verify::strong_duality(0, 20)], None)),
        timed(7, "IFFBDD reaches gap 1e-6 before IRLGE (beta 1e2, 1e3) on >= 8 of 10 seeds", || {
            match verify::convergence_race(0..10, (10, 5, 5, 100), &[1e2, 1e3], 1e-6) {
                Ok((outcomes, elapsed)) => {
                    let wins = outcomes.iter().filter(|o| o.iffbdd_wins()).count();
                    let t = elapsed.as_secs_f64();
                    let detail: Vec<String> = outcomes
                        .iter()
                        .map(|o| {
                            let show = |i: Option<usize>| i.map_or_else(|| "-".into(), |i: usize| i.to_string());
                            let irlge: Vec<String> = o.irlge.iter().map(|(_, i)| show(*i)).collect();
                            format!("{}:{}/{}", o.seed, show(o.iffbdd), irlge.join("/"))
                        })
                        .collect();
                    (vec![], Some((wins >= 8 && t < 60.0, format!("{wins}/10 wins, {t:.1} s (limit 60 s); seed:iffbdd/irlge iterations {}", detail.join(" ")))))
                }
                Err(e) => (vec![], Some((false, format!("error: {e}")))),
            }
        }),
        timed(8, "stopping rule: relative change below 1e-8 or 1000 iterations, both overridable", || (vec![verify::stopping_rule()], None)),
        timed(9, "IBFFD rejects output constraints and matches the oracle on input constraints", || {
            let (ib, _) = verify::input_constrained_vs_oracle(0, 10);
            (vec![verify::ibffd_rejects_outputs(), ib], None)
        }),
    ]
}

fn main() {
    let all = criteria();
    for c in &all {
        for r in &c.reports {
            println!("    {r}");
        }
        if let Some((_, d)) = &c.extra {
            println!("    {d}");
        }
        println!("{} criterion {}: {} ({:.2} s)", if c.passed() { "PASS" } else { "FAIL" }, c.id, c.title, c.elapsed.as_secs_f64());
    }
    let failed = all.iter().filter(|c| !c.passed()).count();
    println!("acceptance: {} of {} criteria passed", all.len() - failed, all.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
