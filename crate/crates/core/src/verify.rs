//! Seeded property suites over every module, shared by `dualnup verify`
//! and the acceptance tests.
//!
//! Each property returns a [`PropertyReport`] with the number of samples,
//! the number of failures and the worst residual against its tolerance.
//! Reference values come from grids, dense linear algebra and the
//! [`crate::oracle`] solvers, never from the code under test.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::Result;
use crate::gauss::{dualize_backward, dualize_forward, observe_scalar, undualize_backward, undualize_forward, GaussianMV, ScalarMessage};
use crate::losses::{LossKind, ScalarLoss, DEFAULT_FLOOR};
use crate::oracle::{active_set_qp, dual_gradient_qp, enumerate_qp, scalar_grid_argmin, scalar_grid_max};
use crate::solvers::{ibffd_solve, iffbdd_solve, irlge_solve, smoother, Solution, SolverConfig, SolverKind};
use crate::ssm::{generate_appendix_b, generate_input_constrained, sample_model, scalar_chain, InstanceRng, Observation, Priors, ProblemInstance, Site, StateSpaceModel};

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    pub suite: &'static str,
    pub name: String,
    pub samples: usize,
    pub failures: usize,
    /// Largest residual seen; compared against `tol`.
    pub worst: f64,
    pub tol: f64,
    /// First failure or error, if any.
    pub note: Option<String>,
}

impl PropertyReport {
    fn new(suite: &'static str, name: impl Into<String>, tol: f64) -> Self {
        Self { suite, name: name.into(), samples: 0, failures: 0, worst: 0.0, tol, note: None }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.samples > 0
    }

    /// Record one residual; NaN counts as a failure.
    fn check(&mut self, residual: f64, what: impl FnOnce() -> String) {
        self.samples += 1;
        if residual.is_nan() || residual > self.tol {
            self.failures += 1;
            if self.note.is_none() {
                self.note = Some(format!("{} (residual {residual:.3e})", what()));
            }
        }
        if residual.is_nan() || residual > self.worst {
            self.worst = residual;
        }
    }

    fn fail(&mut self, what: String) {
        self.samples += 1;
        self.failures += 1;
        self.worst = f64::INFINITY;
        if self.note.is_none() {
            self.note = Some(what);
        }
    }
}

impl std::fmt::Display for PropertyReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}/{}: {} samples, {} failures, worst {:.3e} (tol {:.1e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.suite,
            self.name,
            self.samples,
            self.failures,
            self.worst,
            self.tol
        )?;
        if let Some(n) = &self.note {
            write!(f, "; first failure: {n}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Losses,
    Gauss,
    Oracle,
    Solvers,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Losses, Suite::Gauss, Suite::Oracle, Suite::Solvers];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Losses => "losses",
            Suite::Gauss => "gauss",
            Suite::Oracle => "oracle",
            Suite::Solvers => "solvers",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn run(self, seed: u64) -> Vec<PropertyReport> {
        match self {
            Suite::Losses => losses_suite(seed),
            Suite::Gauss => gauss_suite(seed),
            Suite::Oracle => oracle_suite(seed),
            Suite::Solvers => solvers_suite(seed),
        }
    }
}

// ---------------------------------------------------------------- losses

fn round_to(v: f64, q: f64) -> f64 {
    (v / q).round() * q
}

/// Anchors and slopes are multiples of this, so every kink of `κ` and `κ*`
/// is exactly a point of the grids below (both are powers of two).
const LATTICE: f64 = 1.0 / 128.0;

/// Random loss of `kind` with anchors and slope on [`LATTICE`].
fn lattice_loss(kind: LossKind, rng: &mut InstanceRng) -> ScalarLoss {
    let a = round_to(-3.0 + 6.0 * rng.uniform(), LATTICE);
    let w = round_to(3.0 * rng.uniform(), LATTICE);
    let beta = round_to(0.2 + 3.8 * rng.uniform(), LATTICE);
    ScalarLoss::new(kind, a, a + w, beta).expect("valid lattice loss")
}

fn uniform(rng: &mut InstanceRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.uniform()
}

const GRID_HALF_WIDTH: f64 = 50.0;
/// `2⁻¹⁰ < 1e-3`; grid points `−50 + i·2⁻¹⁰` are exact in binary.
const GRID_STEP: f64 = 1.0 / 1024.0;

/// Grid conjugate `sup_z (z̃ z − κ(z))` against the closed form, at random
/// `z̃` in the finite domain.
pub fn conjugacy(seed: u64, samples_per_kind: usize) -> PropertyReport {
    let mut rep = PropertyReport::new("losses", "conjugacy", 2e-3);
    let mut rng = InstanceRng::new(seed);
    for kind in LossKind::ALL {
        for _ in 0..samples_per_kind {
            let loss = lattice_loss(kind, &mut rng);
            let (lo, hi) = loss.dual_domain();
            let zt = uniform(&mut rng, lo.max(-5.0), hi.min(5.0));
            let grid = scalar_grid_max(|z| zt * z - loss.primal_eval(z), -GRID_HALF_WIDTH, GRID_HALF_WIDTH, GRID_STEP);
            match grid {
                Ok(g) => rep.check((g - loss.conjugate_eval(zt)).abs(), || format!("{loss:?} at z̃={zt}")),
                Err(e) => rep.fail(format!("{loss:?}: {e}")),
            }
        }
    }
    rep
}

/// Grid biconjugate `sup_z̃ (z z̃ − κ*(z̃))` recovers `κ(z)` where finite.
pub fn biconjugacy(seed: u64, samples_per_kind: usize) -> PropertyReport {
    let mut rep = PropertyReport::new("losses", "biconjugacy", 2e-3);
    let mut rng = InstanceRng::new(seed ^ 0xb1c0);
    for kind in LossKind::ALL {
        let mut taken = 0;
        while taken < samples_per_kind {
            let loss = lattice_loss(kind, &mut rng);
            let z = uniform(&mut rng, -5.0, 5.0);
            let primal = loss.primal_eval(z);
            if !primal.is_finite() {
                continue;
            }
            taken += 1;
            match scalar_grid_max(|zt| z * zt - loss.conjugate_eval(zt), -GRID_HALF_WIDTH, GRID_HALF_WIDTH, GRID_STEP) {
                Ok(g) => rep.check((g - primal).abs(), || format!("{loss:?} at z={z}")),
                Err(e) => rep.fail(format!("{loss:?}: {e}")),
            }
        }
    }
    rep
}

/// `κ̆ = κ*` exactly wherever `κ*` is finite.
pub fn proxy_agreement(seed: u64, samples_per_kind: usize) -> PropertyReport {
    let mut rep = PropertyReport::new("losses", "proxy-agreement", 0.0);
    let mut rng = InstanceRng::new(seed ^ 0x9e0);
    for kind in LossKind::ALL {
        for _ in 0..samples_per_kind {
            let loss = lattice_loss(kind, &mut rng);
            let (lo, hi) = loss.dual_domain();
            let zt = uniform(&mut rng, lo.max(-10.0), hi.min(10.0));
            let gamma = uniform(&mut rng, 0.01, 10.0);
            rep.check((loss.proxy_eval(zt, gamma) - loss.conjugate_eval(zt)).abs(), || format!("{loss:?} at z̃={zt}"));
        }
    }
    rep
}

/// The dual NUP quadratic has the slope of `κ̆` at `z̃`.
pub fn tangency(seed: u64, samples_per_kind: usize) -> PropertyReport {
    let mut rep = PropertyReport::new("losses", "tangency", 1e-9);
    let mut rng = InstanceRng::new(seed ^ 0x7a6);
    for kind in LossKind::ALL {
        let mut taken = 0;
        while taken < samples_per_kind {
            let loss = lattice_loss(kind, &mut rng);
            let zt = uniform(&mut rng, -10.0, 10.0);
            if loss.dual_kinks().iter().any(|k| (zt - k).abs() < 1e-3) {
                continue;
            }
            taken += 1;
            let gamma = if loss.is_box_limit() {
                uniform(&mut rng, 0.5, 1.0) * (loss.b() - loss.a()).max(DEFAULT_FLOOR)
            } else {
                loss.gamma_min(0.0, 1.0, DEFAULT_FLOOR).max(0.0) + uniform(&mut rng, 0.1, 20.0)
            };
            let (m, v) = loss.dual_nup_update(zt, gamma, DEFAULT_FLOOR);
            let slope = loss.proxy_slope(zt, gamma);
            if !(v > 0.0) {
                rep.fail(format!("{loss:?}: nonpositive variance {v} at z̃={zt}"));
                continue;
            }
            rep.check(((zt - m) / v - slope).abs() / (1.0 + slope.abs()), || format!("{loss:?} at z̃={zt}, γ={gamma}"));
        }
    }
    rep
}

fn grid_argmin_two_stage(f: impl Fn(f64) -> f64 + Copy, lo: f64, hi: f64, fine: f64) -> Result<f64> {
    let coarse = scalar_grid_argmin(f, lo, hi, 1e-2)?;
    scalar_grid_argmin(f, coarse - 2e-2, coarse + 2e-2, fine)
}

/// `dual_decide` against the grid argmin of the deciding objective.
pub fn deciding(seed: u64, samples_per_kind: usize) -> PropertyReport {
    let mut rep = PropertyReport::new("losses", "deciding", 1e-4);
    let mut rng = InstanceRng::new(seed ^ 0xdec);
    for kind in LossKind::ALL {
        for _ in 0..samples_per_kind {
            let loss = lattice_loss(kind, &mut rng);
            let m = uniform(&mut rng, -6.0, 6.0);
            let v = uniform(&mut rng, 0.2, 3.0);
            let gamma = uniform(&mut rng, 0.1, 6.0);
            let obj = |z: f64| (z - m).powi(2) / (2.0 * v) + loss.proxy_eval(z, gamma);
            let z = loss.dual_decide(m, v, gamma);
            match grid_argmin_two_stage(obj, -60.0, 60.0, 1e-5) {
                Ok(g) => rep.check((z - g).abs(), || format!("{loss:?} m={m} v={v} γ={gamma}: {z} vs grid {g}")),
                Err(e) => rep.fail(format!("{loss:?}: {e}")),
            }
        }
    }
    rep
}

/// `primal_prox` against the grid argmin of the prox objective.
pub fn prox(seed: u64, samples_per_kind: usize) -> PropertyReport {
    let mut rep = PropertyReport::new("losses", "primal-prox", 1e-4);
    let mut rng = InstanceRng::new(seed ^ 0x960);
    for kind in LossKind::ALL {
        for _ in 0..samples_per_kind {
            let loss = lattice_loss(kind, &mut rng);
            let m = uniform(&mut rng, -6.0, 6.0);
            let v = uniform(&mut rng, 0.2, 3.0);
            let obj = |z: f64| (z - m).powi(2) / (2.0 * v) + loss.primal_eval(z);
            let z = loss.primal_prox(m, v);
            match grid_argmin_two_stage(obj, -60.0, 60.0, 1e-5) {
                Ok(g) => rep.check((z - g).abs(), || format!("{loss:?} m={m} v={v}: {z} vs grid {g}")),
                Err(e) => rep.fail(format!("{loss:?}: {e}")),
            }
        }
    }
    rep
}

/// After `γ ← max(γ, γ_min)` the decision lies where `κ̆ = κ*`.
pub fn escalation(seed: u64, samples_per_kind: usize) -> PropertyReport {
    let mut rep = PropertyReport::new("losses", "gamma-escalation", 0.0);
    let mut rng = InstanceRng::new(seed ^ 0xe5c);
    for kind in [LossKind::HingeI, LossKind::HingeII, LossKind::HalfSpaceGeq, LossKind::HalfSpaceLeq] {
        for _ in 0..samples_per_kind {
            let loss = lattice_loss(kind, &mut rng);
            let m = uniform(&mut rng, -20.0, 20.0);
            let v = uniform(&mut rng, 0.05, 5.0);
            let gamma = uniform(&mut rng, 0.01, 2.0).max(loss.gamma_min(m, v, DEFAULT_FLOOR));
            let z = loss.dual_decide(m, v, gamma);
            let (lo, hi) = loss.dual_domain();
            // allow the rounding of the boundary branch of the deciding rule
            let slack = 1e-12 * (1.0 + m.abs() + gamma * v);
            let outside = (lo - z).max(z - hi).max(0.0);
            rep.check((outside - slack).max(0.0), || format!("{loss:?} m={m} v={v}: z̃={z} outside [{lo}, {hi}]"));
        }
    }
    rep
}

/// For the infinite-slope interval, every `γ ∈ [(b−a)/2, b−a]` gives the
/// same decision, and the refreshed NUP message reproduces it.
pub fn interval_gamma(seed: u64, samples: usize) -> PropertyReport {
    let mut rep = PropertyReport::new("losses", "interval-gamma", 1e-9);
    let mut rng = InstanceRng::new(seed ^ 0x1a7);
    for _ in 0..samples {
        let loss = lattice_loss(LossKind::Interval, &mut rng);
        let (a, b) = (loss.a(), loss.b());
        let m = uniform(&mut rng, -20.0, 20.0);
        let v = uniform(&mut rng, 0.05, 5.0);
        let width = (b - a).max(DEFAULT_FLOOR);
        let gammas = [0.5 * width, width, uniform(&mut rng, 0.5, 1.0) * width];
        let z0 = loss.dual_decide(m, v, gammas[0]);
        for &g in &gammas {
            let z = loss.dual_decide(m, v, g);
            let (mb, vb) = loss.dual_nup_update(z, g, DEFAULT_FLOOR);
            // combine the forward dual message with the refreshed backward one
            let fixed = (m / v + mb / vb) / (1.0 / v + 1.0 / vb);
            let r = (z - z0).abs().max((fixed - z).abs() / (1.0 + z.abs()));
            rep.check(r, || format!("interval [{a}, {b}] m={m} v={v} γ={g}: z̃={z}, z̃₀={z0}, fixed point {fixed}"));
        }
    }
    rep
}

/// Indicator kinds agree with the infinite-slope hinge and Vapnik losses,
/// and steep finite slopes approach them.
pub fn limits(seed: u64, samples: usize) -> PropertyReport {
    let mut rep = PropertyReport::new("losses", "beta-limits", 1e-9);
    let mut rng = InstanceRng::new(seed ^ 0x11f);
    let inf = f64::INFINITY;
    for _ in 0..samples {
        let a = round_to(uniform(&mut rng, -3.0, 3.0), LATTICE);
        let b = a + round_to(uniform(&mut rng, 0.0, 3.0), LATTICE);
        let pairs = [
            (ScalarLoss::new(LossKind::HingeI, a, 0.0, inf).unwrap(), ScalarLoss::geq(a).unwrap()),
            (ScalarLoss::new(LossKind::HingeII, 0.0, b, inf).unwrap(), ScalarLoss::leq(b).unwrap()),
            (ScalarLoss::new(LossKind::Vapnik, a, b, inf).unwrap(), ScalarLoss::interval(a, b).unwrap()),
        ];
        let m = uniform(&mut rng, -10.0, 10.0);
        let v = uniform(&mut rng, 0.05, 5.0);
        let zt = uniform(&mut rng, -5.0, 5.0);
        let g = uniform(&mut rng, 0.5, 1.0) * (b - a).max(DEFAULT_FLOOR) + uniform(&mut rng, 0.0, 5.0);
        for (limit, hard) in &pairs {
            let diff = |x: f64, y: f64| if x == y { 0.0 } else { (x - y).abs() };
            let (m1, v1) = limit.dual_nup_update(zt, g, DEFAULT_FLOOR);
            let (m2, v2) = hard.dual_nup_update(zt, g, DEFAULT_FLOOR);
            let r = [
                diff(m1, m2),
                diff(v1, v2),
                diff(limit.dual_decide(m, v, g), hard.dual_decide(m, v, g)),
                diff(limit.gamma_min(m, v, DEFAULT_FLOOR), hard.gamma_min(m, v, DEFAULT_FLOOR)),
                diff(limit.proxy_eval(zt, g), hard.proxy_eval(zt, g)),
                diff(limit.conjugate_eval(zt), hard.conjugate_eval(zt)),
            ]
            .into_iter()
            .fold(0.0, f64::max);
            rep.check(r, || format!("{limit:?} vs {hard:?}"));

            // a slope far beyond every decision leaves the decision unchanged
            let steep = ScalarLoss::new(limit.kind(), a, b, 1e9).unwrap();
            let r = (steep.dual_decide(m, v, g) - hard.dual_decide(m, v, g)).abs();
            rep.check(r, || format!("{steep:?} vs {hard:?} deciding"));
        }
    }
    rep
}

pub fn losses_suite(seed: u64) -> Vec<PropertyReport> {
    vec![
        conjugacy(seed, 100),
        biconjugacy(seed, 100),
        proxy_agreement(seed, 200),
        tangency(seed, 200),
        deciding(seed, 200),
        prox(seed, 200),
        escalation(seed, 1000),
        interval_gamma(seed, 500),
        limits(seed, 100),
    ]
}

// ---------------------------------------------------------------- gauss

fn random_spd(n: usize, rng: &mut InstanceRng) -> DMatrix<f64> {
    let g = rng.matrix(n, n, 1.0);
    &g * g.transpose() + DMatrix::identity(n, n) * 0.1
}

fn rel_diff_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / (1.0 + b.amax())
}

fn rel_diff_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / (1.0 + b.amax())
}

/// Moment/precision form and dualization round trips.
pub fn gauss_round_trip(seed: u64, trials: usize) -> PropertyReport {
    let mut rep = PropertyReport::new("gauss", "round-trip", 1e-9);
    let mut rng = InstanceRng::new(seed ^ 0x6a5);
    for t in 0..trials {
        let n = 1 + t % 6;
        let g = GaussianMV { mean: rng.vector(n, 1.0), cov: random_spd(n, &mut rng) };
        let res = (|| -> Result<f64> {
            let back = g.to_wx()?.to_mv()?;
            let f = undualize_forward(&dualize_forward(&g)?)?;
            let b = undualize_backward(&dualize_backward(&g)?)?;
            Ok([
                rel_diff_mat(&back.cov, &g.cov),
                rel_diff_vec(&back.mean, &g.mean),
                rel_diff_mat(&f.cov, &g.cov),
                rel_diff_vec(&f.mean, &g.mean),
                rel_diff_mat(&b.cov, &g.cov),
                rel_diff_vec(&b.mean, &g.mean),
            ]
            .into_iter()
            .fold(0.0, f64::max))
        })();
        match res {
            Ok(r) => rep.check(r, || format!("dimension {n}")),
            Err(e) => rep.fail(e.to_string()),
        }
    }
    rep
}

/// Scalar observation update against dense Gaussian conditioning.
pub fn observe_vs_dense(seed: u64, trials: usize) -> PropertyReport {
    let mut rep = PropertyReport::new("gauss", "observe-vs-dense", 1e-8);
    let mut rng = InstanceRng::new(seed ^ 0x0b5);
    for t in 0..trials {
        let n = 1 + t % 6;
        let prior = GaussianMV { mean: rng.vector(n, 1.0), cov: random_spd(n, &mut rng) };
        let c = rng.vector(n, 1.0);
        let target = rng.normal();
        let var = uniform(&mut rng, 0.01, 2.0);
        let msg = if t % 2 == 0 { ScalarMessage::mean_var(target, var) } else { ScalarMessage::precision(1.0 / var, target / var) };
        let p = prior.cov.clone().try_inverse().expect("SPD");
        let post_prec = &p + &c * c.transpose() / var;
        let post_cov = post_prec.try_inverse().expect("SPD");
        let post_mean = &post_cov * (&p * &prior.mean + &c * (target / var));
        match observe_scalar(&prior, &c, msg) {
            Ok(got) => rep.check(rel_diff_mat(&got.cov, &post_cov).max(rel_diff_vec(&got.mean, &post_mean)), || format!("dimension {n}")),
            Err(e) => rep.fail(e.to_string()),
        }
    }
    rep
}

/// Joint MAP by one dense solve of the normal equations of the priors,
/// the instance's observations and the given scalar messages.
pub fn dense_smoother(inst: &ProblemInstance, messages: &[(Site, ScalarMessage)]) -> Result<(DVector<f64>, Vec<DVector<f64>>)> {
    let (m, l, k, n) = inst.dims();
    let d = m + n * l;
    let mut h = DMatrix::<f64>::zeros(d, d);
    let mut r = DVector::<f64>::zeros(d);
    let px = inst.priors.precision_x1();
    let pu = inst.priors.precision_u();
    h.view_mut((0, 0), (m, m)).copy_from(&px);
    r.rows_mut(0, m).copy_from(&(&px * &inst.priors.m_x1));
    for t in 0..n {
        h.view_mut((m + t * l, m + t * l), (l, l)).copy_from(&pu);
        r.rows_mut(m + t * l, l).copy_from(&(&pu * &inst.priors.m_u));
    }
    // rows[t][k] maps z to y_{t,k}
    let mut s = DMatrix::<f64>::zeros(m, d);
    s.view_mut((0, 0), (m, m)).fill_with_identity();
    let mut rows = Vec::with_capacity(n);
    for t in 0..n {
        let mut next = &inst.model.a * &s;
        let mut blk = next.view_mut((0, m + t * l), (m, l));
        blk += &inst.model.b;
        s = next;
        let y = &inst.model.c * &s;
        rows.push((0..k).map(|kk| y.row(kk).transpose()).collect::<Vec<_>>());
    }
    let mut add = |g: &DVector<f64>, msg: ScalarMessage| {
        let (w, xi) = msg.as_precision();
        h.ger(w, g, g, 1.0);
        r.axpy(xi, g, 1.0);
    };
    for ((t, kk), o) in inst.observations() {
        add(&rows[t][kk], ScalarMessage::mean_var(o.target, o.var));
    }
    for (site, msg) in messages {
        let g = match *site {
            Site::Output { n: t, k: kk } => rows[t][kk].clone(),
            Site::Input { n: t, l: ll } => {
                let mut e = DVector::zeros(d);
                e[m + t * l + ll] = 1.0;
                e
            }
        };
        add(&g, *msg);
    }
    let z = h.lu().solve(&r).ok_or(crate::error::Error::DegenerateMarginal)?;
    let x1 = z.rows(0, m).into_owned();
    let u = (0..n).map(|t| z.rows(m + t * l, l).into_owned()).collect();
    Ok((x1, u))
}

/// Random linear-Gaussian chain with random scalar messages.
pub fn random_smoothing_problem(seed: u64, m: usize, n: usize) -> Result<(ProblemInstance, Vec<(Site, ScalarMessage)>)> {
    let mut rng = InstanceRng::new(seed);
    let (l, k) = (2, 3);
    let s = sample_model(m, l, k, n, &mut rng)?;
    let mut inst = ProblemInstance::new(s.model, Priors::standard(m, l))?;
    inst.set_observation(0, 1, Some(Observation { target: 0.7, var: 0.3 }))?;
    let mut msgs = Vec::new();
    for t in 0..n {
        for kk in 0..k {
            if rng.uniform() < 0.6 {
                let var = 0.01 + rng.uniform();
                msgs.push((Site::Output { n: t, k: kk }, ScalarMessage::mean_var(rng.normal(), var)));
            }
        }
        if rng.uniform() < 0.5 {
            msgs.push((Site::Input { n: t, l: 1 }, ScalarMessage::precision(rng.uniform(), rng.normal())));
        }
    }
    Ok((inst, msgs))
}

/// [`smoother`] against [`dense_smoother`] for state dimension ≤ 6, N ≤ 5.
pub fn smoother_vs_dense(seed: u64, trials: usize) -> PropertyReport {
    let mut rep = PropertyReport::new("gauss", "smoother-vs-dense", 1e-8);
    for t in 0..trials as u64 {
        let m = 1 + (t as usize % 6);
        let n = 1 + (t as usize % 5);
        let res = (|| -> Result<f64> {
            let (inst, msgs) = random_smoothing_problem(seed.wrapping_add(t), m, n)?;
            let got = smoother(&inst, &msgs)?;
            let (x1, u) = dense_smoother(&inst, &msgs)?;
            let mut r = rel_diff_vec(&got.x1, &x1);
            for (a, b) in got.u.iter().zip(&u) {
                r = r.max(rel_diff_vec(a, b));
            }
            Ok(r)
        })();
        match res {
            Ok(r) => rep.check(r, || format!("M={m}, N={n}, trial {t}")),
            Err(e) => rep.fail(e.to_string()),
        }
    }
    rep
}

pub fn gauss_suite(seed: u64) -> Vec<PropertyReport> {
    vec![gauss_round_trip(seed, 60), observe_vs_dense(seed, 120), smoother_vs_dense(seed, 60)]
}

// ---------------------------------------------------------------- oracle

fn rel_gap(j: f64, reference: f64) -> f64 {
    (j - reference).abs() / reference.abs().max(1e-12)
}

pub fn oracle_agreement(seed: u64, instances: u64) -> PropertyReport {
    let mut rep = PropertyReport::new("oracle", "active-set-vs-dual-gradient", 1e-6);
    for s in seed..seed + instances {
        let res = (|| -> Result<f64> {
            let inst = generate_appendix_b(4, 2, 2, 8, s)?;
            let a = active_set_qp(&inst)?;
            let g = dual_gradient_qp(&inst, 1_000_000, 1e-12)?;
            Ok(rel_gap(g.solution.j, a.j))
        })();
        match res {
            Ok(r) => rep.check(r, || format!("seed {s}")),
            Err(e) => rep.fail(format!("seed {s}: {e}")),
        }
    }
    rep
}

pub fn enumeration_agreement(seed: u64, instances: u64) -> PropertyReport {
    let mut rep = PropertyReport::new("oracle", "enumeration-vs-active-set", 1e-9);
    for s in seed..seed + instances {
        let res = (|| -> Result<f64> {
            let inst = generate_appendix_b(2, 1, 1, 6, s)?;
            Ok(rel_gap(enumerate_qp(&inst)?.j, active_set_qp(&inst)?.j))
        })();
        match res {
            Ok(r) => rep.check(r, || format!("seed {s}")),
            Err(e) => rep.fail(format!("seed {s}: {e}")),
        }
    }
    rep
}

pub fn oracle_feasibility(seed: u64, instances: u64) -> PropertyReport {
    let mut rep = PropertyReport::new("oracle", "feasibility", 1e-8);
    for s in seed..seed + instances {
        let res = (|| -> Result<f64> {
            let inst = generate_appendix_b(4, 2, 2, 8, s)?;
            let sol = active_set_qp(&inst)?;
            Ok(inst.feasibility_check(&sol.u, &sol.y, 0.0).max_violation)
        })();
        match res {
            Ok(r) => rep.check(r, || format!("seed {s}")),
            Err(e) => rep.fail(format!("seed {s}: {e}")),
        }
    }
    rep
}

pub fn oracle_suite(seed: u64) -> Vec<PropertyReport> {
    vec![oracle_agreement(seed, 5), enumeration_agreement(seed, 5), oracle_feasibility(seed, 10)]
}

// ---------------------------------------------------------------- solvers

/// IFFBDD against the oracle on generated `(4, 2, 2, 8)` instances: the
/// relative objective gap and the constraint violation.
pub fn iffbdd_vs_oracle(seed: u64, instances: u64) -> (PropertyReport, PropertyReport) {
    let mut gap = PropertyReport::new("solvers", "iffbdd-oracle-gap", 1e-6);
    let mut viol = PropertyReport::new("solvers", "iffbdd-max-violation", 1e-6);
    for s in seed..seed + instances {
        let res = (|| -> Result<(Solution, f64)> {
            let inst = generate_appendix_b(4, 2, 2, 8, s)?;
            let oracle = active_set_qp(&inst)?;
            Ok((iffbdd_solve(&inst, &SolverConfig::default())?, oracle.j))
        })();
        match res {
            Ok((sol, oj)) if sol.converged => {
                gap.check(rel_gap(sol.j, oj), || format!("seed {s}: J={} vs {oj}", sol.j));
                viol.check(sol.max_violation, || format!("seed {s}"));
            }
            Ok((sol, _)) => {
                gap.fail(format!("seed {s}: not converged in {} iterations", sol.iters));
                viol.check(sol.max_violation, || format!("seed {s}"));
            }
            Err(e) => {
                gap.fail(format!("seed {s}: {e}"));
                viol.fail(format!("seed {s}: {e}"));
            }
        }
    }
    (gap, viol)
}

/// The one-step instance `½x² + ½u²` subject to `x + u ≥ 2`.
pub fn hand_kkt_instance() -> ProblemInstance {
    let mut inst = scalar_chain(1);
    inst.set_output_loss(0, 0, Some(ScalarLoss::geq(2.0).unwrap())).expect("site exists");
    inst
}

pub fn hand_kkt(tol: f64) -> PropertyReport {
    let mut rep = PropertyReport::new("solvers", "hand-kkt", tol);
    let inst = hand_kkt_instance();
    match iffbdd_solve(&inst, &SolverConfig::default()) {
        Ok(s) => {
            let r = (s.x1_hat[0] - 1.0).abs().max((s.u_hat[0][0] - 1.0).abs()).max((s.j - 1.0).abs());
            rep.check(r, || format!("iffbdd x={} u={} J={}", s.x1_hat[0], s.u_hat[0][0], s.j));
        }
        Err(e) => rep.fail(format!("iffbdd: {e}")),
    }
    match active_set_qp(&inst) {
        Ok(s) => {
            let r = (s.x1[0] - 1.0).abs().max((s.u[0][0] - 1.0).abs()).max((s.j - 1.0).abs());
            rep.check(r, || format!("oracle x={} u={} J={}", s.x1[0], s.u[0][0], s.j));
        }
        Err(e) => rep.fail(format!("oracle: {e}")),
    }
    rep
}

/// Random scalar chain (`M = L = K = 1`) with one loss of a random kind.
pub fn single_loss_instance(seed: u64) -> Result<(ProblemInstance, Site)> {
    let mut rng = InstanceRng::new(seed);
    let n = 1 + (rng.uniform() * 4.0) as usize;
    let a = DMatrix::from_element(1, 1, uniform(&mut rng, -1.2, 1.2));
    let b = DMatrix::from_element(1, 1, uniform(&mut rng, 0.3, 1.5) * if rng.uniform() < 0.5 { -1.0 } else { 1.0 });
    let c = DMatrix::from_element(1, 1, uniform(&mut rng, 0.3, 1.5));
    let model = StateSpaceModel::new(a, b, c, n)?;
    let priors = Priors::unit(1, 1);
    let mut inst = ProblemInstance::new(model, priors)?;
    let t = ((rng.uniform() * n as f64) as usize).min(n - 1);
    let kind = LossKind::ALL[seed as usize % LossKind::ALL.len()];
    let lo = uniform(&mut rng, 0.2, 2.0) * if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
    let loss = ScalarLoss::new(kind, lo, lo + uniform(&mut rng, 0.0, 1.0), uniform(&mut rng, 0.3, 3.0))?;
    inst.set_output_loss(t, 0, Some(loss))?;
    Ok((inst, Site::Output { n: t, k: 0 }))
}

/// Strong duality in practice: the value recovered from the converged dual
/// decision, `m→ − V→ z̃̂`, equals the oracle's primal optimum at that output.
pub fn strong_duality(seed: u64, instances: u64) -> PropertyReport {
    let mut rep = PropertyReport::new("solvers", "dual-recovery", 1e-6);
    for s in seed..seed + instances {
        let res = (|| -> Result<f64> {
            let (inst, site) = single_loss_instance(s)?;
            let Site::Output { n, k } = site else { unreachable!() };
            let oracle = enumerate_qp(&inst)?;
            let cfg = SolverConfig { max_iters: 10_000, tol: 1e-14, ..Default::default() };
            let sol = iffbdd_solve(&inst, &cfg)?;
            let dual = sol.dual.expect("iffbdd reports dual quantities");
            let i = dual.sites.iter().position(|x| *x == site).expect("constrained site");
            let y = oracle.y[n][k];
            Ok((dual.recovered[i] - y).abs() / (1.0 + y.abs()))
        })();
        match res {
            Ok(r) => rep.check(r, || format!("seed {s}")),
            Err(e) => rep.fail(format!("seed {s}: {e}")),
        }
    }
    rep
}

/// Input-constrained instances: IBFFD and IFFBDD against the oracle.
pub fn input_constrained_vs_oracle(seed: u64, instances: u64) -> (PropertyReport, PropertyReport) {
    let mut ib = PropertyReport::new("solvers", "ibffd-oracle-gap", 1e-6);
    let mut iff = PropertyReport::new("solvers", "iffbdd-input-oracle-gap", 1e-6);
    for s in seed..seed + instances {
        let inst = match generate_input_constrained(4, 2, 2, 8, s) {
            Ok(i) => i,
            Err(e) => {
                ib.fail(e.to_string());
                continue;
            }
        };
        let oracle = match active_set_qp(&inst) {
            Ok(o) => o,
            Err(e) => {
                ib.fail(format!("seed {s}: oracle: {e}"));
                iff.fail(format!("seed {s}: oracle: {e}"));
                continue;
            }
        };
        for (rep, solve) in [(&mut ib, ibffd_solve as fn(&ProblemInstance, &SolverConfig) -> Result<Solution>), (&mut iff, iffbdd_solve)] {
            match solve(&inst, &SolverConfig::default()) {
                Ok(sol) if sol.converged => rep.check(rel_gap(sol.j, oracle.j), || format!("seed {s}: J={} vs {}", sol.j, oracle.j)),
                Ok(sol) => rep.fail(format!("seed {s}: not converged in {} iterations", sol.iters)),
                Err(e) => rep.fail(format!("seed {s}: {e}")),
            }
        }
    }
    (ib, iff)
}

pub fn ibffd_rejects_outputs() -> PropertyReport {
    let mut rep = PropertyReport::new("solvers", "ibffd-rejects-outputs", 0.0);
    match generate_appendix_b(2, 1, 1, 3, 0).map(|inst| ibffd_solve(&inst, &SolverConfig::default())) {
        Ok(Err(e)) if e.to_string().contains("IBFFD requires input-side constraints") => rep.check(0.0, String::new),
        Ok(Err(e)) => rep.fail(format!("wrong error: {e}")),
        Ok(Ok(_)) => rep.fail("output-constrained instance was accepted".into()),
        Err(e) => rep.fail(e.to_string()),
    }
    rep
}

/// Fixed-point optimality of converged IFFBDD iterates: input stationarity
/// and the forward and backward recovery identities.
pub fn fixed_point(seed: u64, instances: u64) -> (PropertyReport, PropertyReport) {
    let mut stat = PropertyReport::new("solvers", "input-stationarity", 1e-8);
    let mut rec = PropertyReport::new("solvers", "recovery-identities", 1e-6);
    for s in seed..seed + instances {
        let res = generate_appendix_b(4, 2, 2, 8, s).and_then(|inst| Ok((iffbdd_solve(&inst, &SolverConfig::default())?, inst)));
        let (sol, inst) = match res {
            Ok(v) => v,
            Err(e) => {
                stat.fail(format!("seed {s}: {e}"));
                continue;
            }
        };
        let dual = sol.dual.as_ref().expect("dual report");
        let pr = &inst.priors;
        for (t, u) in sol.u_hat.iter().enumerate() {
            let r = u + &pr.v_u * inst.model.b.tr_mul(&dual.x_tilde[t + 1]) - &pr.m_u;
            stat.check(r.amax(), || format!("seed {s}, step {}", t + 1));
        }
        for (i, site) in dual.sites.iter().enumerate() {
            let Site::Output { n, k } = *site else { continue };
            let y = sol.y_hat[n][k];
            let zt = dual.decisions[i];
            let (mf, vf) = dual.forward[i];
            let fwd = (mf - vf * zt - y).abs();
            // backward: ŷ = m← + V← z̃̂, i.e. w ŷ − ξ = z̃̂ in precision form
            let (w, xi) = dual.messages[i].as_precision();
            let bwd = (w * y - xi - zt).abs() / (1.0 + w.abs());
            rec.check(fwd.max(bwd) / (1.0 + y.abs()), || format!("seed {s}, {site}"));
        }
    }
    (stat, rec)
}

/// Upper-bound instances built so that some constraints bind: dual decisions
/// are nonnegative and vanish on inactive constraints. The second report
/// compares them with the oracle's multipliers, which the objective-based
/// stopping rule only pins down to about the square root of its tolerance.
pub fn complementary_slackness(seed: u64, instances: u64) -> (PropertyReport, PropertyReport) {
    let mut rep = PropertyReport::new("solvers", "complementary-slackness", 1e-6);
    let mut mult = PropertyReport::new("solvers", "dual-vs-oracle-multipliers", 1e-4);
    for s in seed..seed + instances {
        let res = (|| -> Result<()> {
            let base = generate_appendix_b(4, 2, 2, 8, s)?;
            let mut inst = base.clone();
            let (_, _, k, n) = inst.dims();
            for t in 0..n {
                for kk in 0..k {
                    let l = base.output_loss(t, kk).expect("generated");
                    // binding when the band lies above zero
                    inst.set_output_loss(t, kk, Some(ScalarLoss::leq(-0.5 * l.a().abs().min(l.b().abs()))?))?;
                }
            }
            let sol = iffbdd_solve(&inst, &SolverConfig::default())?;
            let oracle = active_set_qp(&inst)?;
            let dual = sol.dual.as_ref().expect("dual report");
            for (i, site) in dual.sites.iter().enumerate() {
                let Site::Output { n, k } = *site else { continue };
                let zt = dual.decisions[i];
                let b = inst.output_loss(n, k).expect("constrained").b();
                let slack = b - sol.y_hat[n][k];
                rep.check((-zt).max(0.0), || format!("seed {s}, {site}: z̃={zt} < 0"));
                rep.check(zt.abs().min(slack.abs()), || format!("seed {s}, {site}: z̃={zt}, slack {slack}"));
                let mu = oracle.multiplier(*site);
                mult.check((zt - mu).abs() / (1.0 + mu.abs()), || format!("seed {s}, {site}: z̃={zt} vs multiplier {mu}"));
            }
            Ok(())
        })();
        if let Err(e) = res {
            rep.fail(format!("seed {s}: {e}"));
        }
    }
    (rep, mult)
}

/// Default limits, iteration cap and tolerance stop, for every solver.
pub fn stopping_rule() -> PropertyReport {
    let mut rep = PropertyReport::new("solvers", "stopping-rule", 0.0);
    let d = SolverConfig::default();
    rep.check(if d.max_iters == 1000 && d.tol == 1e-8 { 0.0 } else { 1.0 }, || format!("defaults {} / {}", d.max_iters, d.tol));
    let cases = [(SolverKind::Iffbdd, generate_appendix_b(4, 2, 2, 8, 0)), (SolverKind::Irlge, generate_appendix_b(4, 2, 2, 8, 0)), (SolverKind::Ibffd, generate_input_constrained(4, 2, 2, 8, 0))];
    for (kind, inst) in cases {
        let inst = match inst {
            Ok(i) => i,
            Err(e) => {
                rep.fail(e.to_string());
                continue;
            }
        };
        let capped = kind.solve(&inst, &SolverConfig { max_iters: 3, ..Default::default() });
        match capped {
            Ok(s) => rep.check(if s.iters == 3 && !s.converged && s.history.records.len() == 3 { 0.0 } else { 1.0 }, || format!("{kind}: capped run took {} iterations", s.iters)),
            Err(e) => rep.fail(format!("{kind}: {e}")),
        }
        match kind.solve(&inst, &SolverConfig { tol: 1e3, ..Default::default() }) {
            Ok(s) => rep.check(if s.iters == 2 && s.converged { 0.0 } else { 1.0 }, || format!("{kind}: loose tolerance took {} iterations", s.iters)),
            Err(e) => rep.fail(format!("{kind}: {e}")),
        }
        match kind.solve(&inst, &SolverConfig::default()) {
            Ok(s) => {
                // stops at the first relative change below 1e-8, else at 1000
                let recs = &s.history.records;
                let small: Vec<bool> = recs.windows(2).map(|w| (w[1].j - w[0].j).abs() / w[1].j.abs().max(1.0) < 1e-8).collect();
                let first_small = small.iter().position(|&b| b).map(|i| i + 2);
                let ok = recs.len() == s.iters
                    && match first_small {
                        Some(i) => s.converged && s.iters == i,
                        None => !s.converged && s.iters == 1000,
                    };
                rep.check(if ok { 0.0 } else { 1.0 }, || format!("{kind}: stopped at {} (converged {})", s.iters, s.converged));
            }
            Err(e) => rep.fail(format!("{kind}: {e}")),
        }
    }
    rep
}

pub fn solvers_suite(seed: u64) -> Vec<PropertyReport> {
    let (gap, viol) = iffbdd_vs_oracle(seed, 20);
    let (ib, iff) = input_constrained_vs_oracle(seed, 10);
    let (stat, rec) = fixed_point(seed, 5);
    let (cs, mult) = complementary_slackness(seed, 5);
    vec![
        gap,
        viol,
        hand_kkt(1e-8),
        strong_duality(seed, 20),
        ib,
        iff,
        ibffd_rejects_outputs(),
        stat,
        rec,
        cs,
        mult,
        stopping_rule(),
    ]
}

// ---------------------------------------------------------------- race

/// First iteration whose objective is within `gap` (relative) of `oracle_j`.
pub fn iterations_to_gap(sol: &Solution, oracle_j: f64, gap: f64) -> Option<usize> {
    sol.history.records.iter().find(|r| rel_gap(r.j, oracle_j) <= gap).map(|r| r.iter)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RaceOutcome {
    pub seed: u64,
    pub oracle_j: f64,
    pub iffbdd: Option<usize>,
    /// `(β, iterations)` for each IRLGE slope.
    pub irlge: Vec<(f64, Option<usize>)>,
}

impl RaceOutcome {
    /// IFFBDD reached the gap, and strictly earlier than every IRLGE run.
    pub fn iffbdd_wins(&self) -> bool {
        match self.iffbdd {
            None => false,
            Some(i) => self.irlge.iter().all(|(_, j)| j.is_none_or(|j| i < j)),
        }
    }
}

/// Iterations each solver needs to reach relative gap `gap` to the oracle
/// on generated instances, seeds run in parallel.
pub fn convergence_race(seeds: std::ops::Range<u64>, dims: (usize, usize, usize, usize), betas: &[f64], gap: f64) -> Result<(Vec<RaceOutcome>, Duration)> {
    let start = Instant::now();
    let (m, l, k, n) = dims;
    let mut out: Vec<RaceOutcome> = seeds
        .into_par_iter()
        .map(|seed| -> Result<RaceOutcome> {
            let inst = generate_appendix_b(m, l, k, n, seed)?;
            let oracle_j = active_set_qp(&inst)?.j;
            let iffbdd = iterations_to_gap(&iffbdd_solve(&inst, &SolverConfig::default())?, oracle_j, gap);
            let irlge = betas
                .iter()
                .map(|&beta| Ok((beta, iterations_to_gap(&irlge_solve(&inst, &SolverConfig { beta, ..Default::default() })?, oracle_j, gap))))
                .collect::<Result<_>>()?;
            Ok(RaceOutcome { seed, oracle_j, iffbdd, irlge })
        })
        .collect::<Result<_>>()?;
    out.sort_by_key(|o| o.seed);
    Ok((out, start.elapsed()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reports_flag_failures_and_nan() {
        let mut r = PropertyReport::new("t", "x", 1e-3);
        r.check(1e-4, String::new);
        assert!(r.passed());
        r.check(f64::NAN, || "nan".into());
        assert!(!r.passed());
        assert!(r.note.as_deref().unwrap().starts_with("nan"));
        assert!(!PropertyReport::new("t", "empty", 1.0).passed());
    }

    #[test]
    fn losses_properties_pass_small() {
        for rep in [conjugacy(1, 5), biconjugacy(1, 5), proxy_agreement(1, 20), tangency(1, 20), deciding(1, 20), prox(1, 20), escalation(1, 100), interval_gamma(1, 50), limits(1, 20)] {
            assert!(rep.passed(), "{rep}");
        }
    }

    #[test]
    fn gauss_properties_pass_small() {
        for rep in [gauss_round_trip(2, 12), observe_vs_dense(2, 12), smoother_vs_dense(2, 12)] {
            assert!(rep.passed(), "{rep}");
        }
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(Suite::from_name(s.name()), Some(s));
        }
    }
}
