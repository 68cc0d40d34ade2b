//! `dualnup` command line: `gen`, `solve`, `bench` and `verify`.
//!
//! Exit codes: 0 on success, 2 when a solve did not converge, 1 on any error
//! or failed verification property.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{load_instance, save_instance, solution_to_json, write_history, HistoryRow};
use crate::oracle::{active_set_qp, MAX_BATCH_DIM};
use crate::solvers::{GammaMode, SolverConfig, SolverKind};
use crate::ssm::{generate_appendix_b, generate_input_constrained, ProblemInstance};
use crate::verify::Suite;

/// Environment variable capping the `bench` worker pool.
pub const THREADS_ENV: &str = "DUAL_NUP_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "dualnup", version, about = "Joint MAP estimation in linear state-space models by Gaussian message passing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a random instance file.
    Gen(GenArgs),
    /// Solve an instance file.
    Solve(SolveArgs),
    /// Run solvers on seeded instances and write their histories as CSV.
    Bench(BenchArgs),
    /// Run the property suites.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Generator {
    /// Interval constraints on every output.
    AppendixB,
    /// Interval constraints on every input, Gaussian output observations.
    InputConstrained,
}

#[derive(Debug, Args)]
pub struct DimArgs {
    #[arg(long = "M", default_value_t = 4)]
    pub m: usize,
    #[arg(long = "L", default_value_t = 2)]
    pub l: usize,
    #[arg(long = "K", default_value_t = 2)]
    pub k: usize,
    #[arg(long = "N", default_value_t = 8)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = Generator::AppendixB)]
    pub generator: Generator,
}

impl DimArgs {
    fn generate(&self, seed: u64) -> Result<ProblemInstance> {
        match self.generator {
            Generator::AppendixB => generate_appendix_b(self.m, self.l, self.k, self.n, seed),
            Generator::InputConstrained => generate_input_constrained(self.m, self.l, self.k, self.n, seed),
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub dims: DimArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    #[arg(long, default_value_t = 1000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Slope given to indicator constraints by IRLGE and IBFFD.
    #[arg(long, default_value_t = 1e3)]
    pub beta: f64,
    /// Initial γ for one-sided losses in IFFBDD: `inf` or a positive number.
    #[arg(long, default_value = "inf")]
    pub gamma: String,
    /// γ = factor·(b − a) for infinite-slope intervals, in [0.5, 1].
    #[arg(long, default_value_t = 0.5)]
    pub interval_gamma: f64,
}

impl ConfigArgs {
    pub fn to_config(&self) -> Result<SolverConfig> {
        let gamma_mode = match self.gamma.as_str() {
            "inf" | "infinite" => GammaMode::Infinite,
            s => GammaMode::Finite {
                initial: s.parse().map_err(|_| Error::InvalidInstance(format!("--gamma: expected `inf` or a number, got {s:?}")))?,
            },
        };
        let config = SolverConfig {
            max_iters: self.max_iters,
            tol: self.tol,
            beta: self.beta,
            gamma_mode,
            interval_gamma: self.interval_gamma,
            ..Default::default()
        };
        config.validate()?;
        Ok(config)
    }
}

fn parse_solver(s: &str) -> std::result::Result<SolverKind, String> {
    SolverKind::from_name(s).ok_or_else(|| format!("unknown solver {s:?} (expected irlge, ibffd or iffbdd)"))
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub instance: PathBuf,
    #[arg(long, value_parser = parse_solver, default_value = "iffbdd")]
    pub solver: SolverKind,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Solution JSON path; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the iteration history as CSV.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub dims: DimArgs,
    #[arg(long, default_value_t = 10)]
    pub reps: u64,
    /// Seed of the first repetition; repetition `r` uses `seed + r`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', value_parser = parse_solver, default_value = "iffbdd,irlge")]
    pub solvers: Vec<SolverKind>,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Skip the reference optimum (the gap column stays empty).
    #[arg(long)]
    pub no_oracle: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SuiteArg {
    Losses,
    Gauss,
    Oracle,
    Solvers,
    All,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = SuiteArg::All)]
    pub suite: SuiteArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Solve(a) => cmd_solve(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Verify(a) => cmd_verify(&a),
    }
}

pub fn cmd_gen(args: &GenArgs) -> Result<i32> {
    let inst = args.dims.generate(args.seed)?;
    save_instance(&inst, &args.out)?;
    Ok(EXIT_OK)
}

pub fn cmd_solve(args: &SolveArgs) -> Result<i32> {
    let inst = load_instance(&args.instance)?;
    let config = args.config.to_config()?;
    let start = Instant::now();
    let sol = args.solver.solve(&inst, &config)?;
    let total = start.elapsed().as_secs_f64();
    let json = solution_to_json(&sol)?;
    match &args.out {
        Some(p) => std::fs::write(p, json)?,
        None => std::io::stdout().write_all(json.as_bytes())?,
    }
    if let Some(p) = &args.history {
        let rows = HistoryRow::from_solution(&sol, inst.meta.seed, None, total);
        write_history(BufWriter::new(File::create(p)?), &rows)?;
    }
    eprintln!("{}: J = {:.12e}, {} iterations, converged = {}, max violation = {:.3e}", sol.solver, sol.j, sol.iters, sol.converged, sol.max_violation);
    Ok(if sol.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().map_err(|_| Error::InvalidInstance(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        if n == 0 {
            return Err(Error::InvalidInstance(format!("{THREADS_ENV} must be at least 1")));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::InvalidInstance(format!("thread pool: {e}")))
}

pub fn cmd_bench(args: &BenchArgs) -> Result<i32> {
    let config = args.config.to_config()?;
    let pool = thread_pool()?;
    let seeds: Vec<u64> = (0..args.reps).map(|r| args.seed + r).collect();
    let mut solvers = args.solvers.clone();
    solvers.sort_by_key(|s| s.name());
    solvers.dedup();

    let per_seed: Vec<(u64, ProblemInstance, Option<f64>)> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let inst = args.dims.generate(seed)?;
                let oracle = if args.no_oracle || inst.decision_dim() > MAX_BATCH_DIM {
                    None
                } else {
                    match active_set_qp(&inst) {
                        Ok(o) => Some(o.j),
                        Err(e) => {
                            log::warn!("seed {seed}: no reference optimum ({e})");
                            None
                        }
                    }
                };
                Ok((seed, inst, oracle))
            })
            .collect::<Result<_>>()
    })?;

    let cells: Vec<(SolverKind, usize)> = solvers.iter().flat_map(|&s| (0..per_seed.len()).map(move |i| (s, i))).collect();
    let results: Vec<Vec<HistoryRow>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(solver, i)| {
                let (seed, inst, oracle) = &per_seed[i];
                let start = Instant::now();
                match solver.solve(inst, &config) {
                    Ok(sol) => HistoryRow::from_solution(&sol, Some(*seed), *oracle, start.elapsed().as_secs_f64()),
                    Err(e) => {
                        eprintln!("{solver} seed {seed}: {e}");
                        vec![HistoryRow::error(solver, Some(*seed))]
                    }
                }
            })
            .collect()
    });
    let rows: Vec<HistoryRow> = results.into_iter().flatten().collect();
    write_history(BufWriter::new(File::create(&args.out)?), &rows)?;

    for &solver in &solvers {
        let summaries: Vec<&HistoryRow> = rows.iter().filter(|r| r.solver == solver.name() && r.iter == "total").collect();
        let errors = rows.iter().filter(|r| r.solver == solver.name() && r.iter == "error").count();
        let total: f64 = summaries.iter().filter_map(|r| r.elapsed_s).sum();
        eprintln!("{solver}: {} runs, {errors} errors, {total:.3} s total", summaries.len());
    }
    Ok(EXIT_OK)
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<i32> {
    let suites: Vec<Suite> = match args.suite {
        SuiteArg::Losses => vec![Suite::Losses],
        SuiteArg::Gauss => vec![Suite::Gauss],
        SuiteArg::Oracle => vec![Suite::Oracle],
        SuiteArg::Solvers => vec![Suite::Solvers],
        SuiteArg::All => Suite::ALL.to_vec(),
    };
    let mut failed = 0;
    let mut total = 0;
    for suite in suites {
        for rep in suite.run(args.seed) {
            println!("{rep}");
            total += 1;
            failed += usize::from(!rep.passed());
        }
    }
    println!("{} of {total} properties passed", total - failed);
    Ok(if failed == 0 { EXIT_OK } else { EXIT_ERROR })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_paper_style_flags() {
        let cli = Cli::try_parse_from(["dualnup", "gen", "--M", "40", "--K", "20", "--L", "20", "--N", "1000", "--seed", "3", "--out", "x.json"]).unwrap();
        let Command::Gen(g) = cli.command else { panic!("gen") };
        assert_eq!((g.dims.m, g.dims.l, g.dims.k, g.dims.n, g.seed), (40, 20, 20, 1000, 3));

        let cli = Cli::try_parse_from(["dualnup", "bench", "--solvers", "iffbdd,irlge", "--reps", "2", "--out", "h.csv"]).unwrap();
        let Command::Bench(b) = cli.command else { panic!("bench") };
        assert_eq!(b.solvers, vec![SolverKind::Iffbdd, SolverKind::Irlge]);
        assert!(Cli::try_parse_from(["dualnup", "solve", "x.json", "--solver", "admm"]).is_err());
    }

    #[test]
    fn config_flags() {
        let cli = Cli::try_parse_from(["dualnup", "solve", "x.json", "--gamma", "2.5", "--max-iters", "7"]).unwrap();
        let Command::Solve(s) = cli.command else { panic!("solve") };
        let c = s.config.to_config().unwrap();
        assert_eq!(c.gamma_mode, GammaMode::Finite { initial: 2.5 });
        assert_eq!(c.max_iters, 7);
        let cli = Cli::try_parse_from(["dualnup", "solve", "x.json", "--tol", "0"]).unwrap();
        let Command::Solve(s) = cli.command else { panic!("solve") };
        assert!(s.config.to_config().is_err());
    }
}
