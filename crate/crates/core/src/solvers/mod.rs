//! Iterative solvers and their shared configuration, history and result types.
//!
//! One outer iteration is one full forward sweep, one full backward sweep and
//! the parameter refresh, for every solver.

mod ibffd;
mod iffbdd;
mod irlge;
pub(crate) mod sweep;

pub use ibffd::ibffd_solve;
pub use iffbdd::iffbdd_solve;
pub use irlge::irlge_solve;
pub use sweep::{smoother, SmootherOutput};

use std::time::Instant;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::gauss::ScalarMessage;
use crate::losses::{LossKind, ScalarLoss};
use crate::ssm::{ProblemInstance, Site};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SolverKind {
    Irlge,
    Ibffd,
    Iffbdd,
}

impl SolverKind {
    pub const ALL: [SolverKind; 3] = [SolverKind::Irlge, SolverKind::Ibffd, SolverKind::Iffbdd];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Irlge => "irlge",
            SolverKind::Ibffd => "ibffd",
            SolverKind::Iffbdd => "iffbdd",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn solve(self, inst: &ProblemInstance, config: &SolverConfig) -> Result<Solution> {
        match self {
            SolverKind::Irlge => irlge_solve(inst, config),
            SolverKind::Ibffd => ibffd_solve(inst, config),
            SolverKind::Iffbdd => iffbdd_solve(inst, config),
        }
    }
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// `γ` for losses other than the infinite-slope box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaMode {
    Infinite,
    Finite { initial: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop when `|J_t − J_{t−1}| / max(1, |J_t|) < tol`.
    pub tol: f64,
    /// Slope given to indicator losses by the primal-side solvers.
    pub beta: f64,
    pub gamma_mode: GammaMode,
    /// `γ = interval_gamma · (b − a)` for the infinite-slope box; must lie in `[0.5, 1]`.
    pub interval_gamma: f64,
    pub record_history: bool,
    /// Floor for `|z̃|` in dual updates and for primal NUP variances.
    pub floor_eps: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tol: 1e-8,
            beta: 1e3,
            gamma_mode: GammaMode::Infinite,
            interval_gamma: 0.5,
            record_history: true,
            floor_eps: crate::losses::DEFAULT_FLOOR,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInstance(format!("solver config: {msg}")));
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return bad(format!("beta must be positive and finite, got {}", self.beta));
        }
        if !(0.5..=1.0).contains(&self.interval_gamma) {
            return bad(format!("interval_gamma must lie in [0.5, 1], got {}", self.interval_gamma));
        }
        if let GammaMode::Finite { initial } = self.gamma_mode {
            if !(initial > 0.0) {
                return bad(format!("initial gamma must be positive, got {initial}"));
            }
        }
        if !(self.floor_eps > 0.0) {
            return bad("floor_eps must be positive".into());
        }
        Ok(())
    }

    /// Starting `γ` of one loss.
    pub fn initial_gamma(&self, loss: &ScalarLoss) -> f64 {
        if loss.is_box_limit() {
            return (self.interval_gamma * (loss.b() - loss.a())).max(self.floor_eps);
        }
        match self.gamma_mode {
            GammaMode::Infinite => f64::INFINITY,
            GammaMode::Finite { initial } => initial,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub j: f64,
    pub max_violation: f64,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationHistory {
    pub records: Vec<IterationRecord>,
}

/// Dual-side quantities of the last backward sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct DualReport {
    /// One entry per loss, in [`ProblemInstance::losses`] order.
    pub sites: Vec<Site>,
    /// Dual decision `z̃̂` of each loss.
    pub decisions: Vec<f64>,
    /// Primal value recovered from the dual decision, `m→ − V→ z̃̂`.
    pub recovered: Vec<f64>,
    /// Backward message on each loss after the refresh.
    pub messages: Vec<ScalarMessage>,
    /// Forward message `(m→, V→)` on each loss in the last sweep.
    pub forward: Vec<(f64, f64)>,
    pub gammas: Vec<f64>,
    /// Dual state of `s_n` (post-input, pre-output side is `n`), `n = 1..N`;
    /// the entry at index 0 is the dual of `x1`.
    pub x_tilde: Vec<DVector<f64>>,
}

impl DualReport {
    pub fn decision(&self, site: Site) -> Option<f64> {
        self.sites.iter().position(|s| *s == site).map(|i| self.decisions[i])
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    /// Negative variances clamped to zero across all sweeps.
    pub clamped_variances: usize,
    /// Primal NUP variances floored because the estimate sat on a kink.
    pub stuck_updates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub solver: SolverKind,
    pub x1_hat: DVector<f64>,
    pub u_hat: Vec<DVector<f64>>,
    /// `simulate(x1_hat, u_hat)` outputs.
    pub y_hat: Vec<DVector<f64>>,
    pub j: f64,
    pub converged: bool,
    pub iters: usize,
    pub max_violation: f64,
    pub history: IterationHistory,
    pub dual: Option<DualReport>,
    pub diagnostics: Diagnostics,
}

/// Outer-loop bookkeeping shared by the solvers.
pub(crate) struct Driver<'a> {
    inst: &'a ProblemInstance,
    config: &'a SolverConfig,
    start: Instant,
    history: IterationHistory,
    last_j: Option<f64>,
}

pub(crate) struct Evaluated {
    pub y: Vec<DVector<f64>>,
    pub j: f64,
    pub max_violation: f64,
    pub converged: bool,
}

impl<'a> Driver<'a> {
    pub fn new(inst: &'a ProblemInstance, config: &'a SolverConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { inst, config, start: Instant::now(), history: IterationHistory::default(), last_j: None })
    }

    /// Evaluate the primal iterate of iteration `iter` (1-based) and test the stopping rule.
    pub fn evaluate(&mut self, iter: usize, x1: &DVector<f64>, u: &[DVector<f64>]) -> Result<Evaluated> {
        if !x1.iter().chain(u.iter().flat_map(|v| v.iter())).all(|v| v.is_finite()) {
            return Err(Error::NonFinite { iteration: iter, context: "primal iterate".into() });
        }
        let (_, y) = self.inst.simulate(x1, u)?;
        let j = self.inst.objective_on(x1, u, &y);
        if !j.is_finite() {
            return Err(Error::NonFinite { iteration: iter, context: "objective".into() });
        }
        let max_violation = self.inst.feasibility_check(u, &y, f64::INFINITY).max_violation;
        if self.config.record_history {
            self.history.records.push(IterationRecord {
                iter,
                j,
                max_violation,
                elapsed_s: self.start.elapsed().as_secs_f64(),
            });
        }
        let converged = match self.last_j {
            _ if !self.inst.has_losses() => true,
            Some(prev) => (j - prev).abs() / j.abs().max(1.0) < self.config.tol,
            None => false,
        };
        self.last_j = Some(j);
        Ok(Evaluated { y, j, max_violation, converged })
    }

    pub fn finish(
        self,
        solver: SolverKind,
        x1_hat: DVector<f64>,
        u_hat: Vec<DVector<f64>>,
        last: Evaluated,
        iters: usize,
        dual: Option<DualReport>,
        diagnostics: Diagnostics,
    ) -> Solution {
        if !last.converged {
            log::warn!("{solver}: no convergence within {iters} iterations (J = {})", last.j);
        }
        Solution {
            solver,
            x1_hat,
            u_hat,
            y_hat: last.y,
            j: last.j,
            converged: last.converged,
            iters,
            max_violation: last.max_violation,
            history: self.history,
            dual,
            diagnostics,
        }
    }
}

/// Weakly informative starting message: the midpoint (or the single anchor)
/// with variance `max(1, ((b − a)/2)²)`.
pub(crate) fn initial_message(loss: &ScalarLoss) -> ScalarMessage {
    let (mean, half) = match loss.kind() {
        LossKind::Vapnik | LossKind::Interval => (0.5 * (loss.a() + loss.b()), 0.5 * (loss.b() - loss.a())),
        k if k.uses_a() => (loss.a(), 0.0),
        _ => (loss.b(), 0.0),
    };
    ScalarMessage::mean_var(mean, (half * half).max(1.0))
}

/// Primal NUP message from the current estimate, with the variance floored.
/// Returns whether the floor was hit.
pub(crate) fn primal_nup_message(loss: &ScalarLoss, z: f64, floor: f64) -> Result<(ScalarMessage, bool)> {
    let (m, v) = loss.primal_nup_update(z)?;
    if v < floor {
        Ok((ScalarMessage::mean_var(m, floor), true))
    } else {
        Ok((ScalarMessage::mean_var(m, v), false))
    }
}
