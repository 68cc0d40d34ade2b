//! Linear state-space model, problem instances, rollout, objective and the
//! random instance generators.
//!
//! Indexing: `x1` is the initial state with a Gaussian prior. For
//! `n = 1..N` the state advances as `s_n = A s_{n−1} + B u_n` (with
//! `s_0 = x1`) and the outputs of step `n` read the post-input state,
//! `y_n = C s_n`. Internally every index is zero-based.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::error::{Error, Result};
use crate::losses::ScalarLoss;

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub horizon: usize,
}

impl StateSpaceModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, horizon: usize) -> Result<Self> {
        let m = a.nrows();
        if !a.is_square() || b.nrows() != m || c.ncols() != m {
            return Err(Error::Dimension(format!(
                "A {}x{}, B {}x{}, C {}x{} do not conform",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols()
            )));
        }
        if horizon == 0 || m == 0 || b.ncols() == 0 || c.nrows() == 0 {
            return Err(Error::Dimension("all dimensions and the horizon must be at least 1".into()));
        }
        if a.iter().chain(b.iter()).chain(c.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInstance("model matrices must be finite".into()));
        }
        Ok(Self { a, b, c, horizon })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }
    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    /// Rollout from `x1`. Returns `N+1` states (`x1` first) and `N` outputs.
    pub fn simulate(&self, x1: &DVector<f64>, u: &[DVector<f64>]) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
        if x1.len() != self.state_dim() {
            return Err(Error::Dimension(format!("x1 has length {}, expected {}", x1.len(), self.state_dim())));
        }
        if u.len() != self.horizon {
            return Err(Error::Dimension(format!("{} inputs for horizon {}", u.len(), self.horizon)));
        }
        let mut states = Vec::with_capacity(self.horizon + 1);
        let mut outputs = Vec::with_capacity(self.horizon);
        let mut s = x1.clone();
        states.push(s.clone());
        for (n, un) in u.iter().enumerate() {
            if un.len() != self.input_dim() {
                return Err(Error::Dimension(format!("u[{n}] has length {}, expected {}", un.len(), self.input_dim())));
            }
            s = &self.a * &s + &self.b * un;
            outputs.push(&self.c * &s);
            states.push(s.clone());
        }
        Ok((states, outputs))
    }
}

/// Gaussian priors on `x1` and on every `u_n` (shared across steps).
#[derive(Debug, Clone)]
pub struct Priors {
    pub m_x1: DVector<f64>,
    pub v_x1: DMatrix<f64>,
    pub m_u: DVector<f64>,
    pub v_u: DMatrix<f64>,
    chol_x1: Cholesky<f64, Dyn>,
    chol_u: Cholesky<f64, Dyn>,
}

impl PartialEq for Priors {
    fn eq(&self, other: &Self) -> bool {
        self.m_x1 == other.m_x1 && self.v_x1 == other.v_x1 && self.m_u == other.m_u && self.v_u == other.v_u
    }
}

impl Priors {
    pub fn new(m_x1: DVector<f64>, v_x1: DMatrix<f64>, m_u: DVector<f64>, v_u: DMatrix<f64>) -> Result<Self> {
        if v_x1.nrows() != m_x1.len() || !v_x1.is_square() || v_u.nrows() != m_u.len() || !v_u.is_square() {
            return Err(Error::Dimension("prior mean and covariance sizes differ".into()));
        }
        let spd = |v: &DMatrix<f64>| {
            if v.iter().any(|e| !e.is_finite()) || (v - v.transpose()).amax() > 1e-12 * (1.0 + v.amax()) {
                return None;
            }
            v.clone().cholesky()
        };
        let chol_x1 = spd(&v_x1).ok_or(Error::SingularPrior)?;
        let chol_u = spd(&v_u).ok_or(Error::SingularPrior)?;
        Ok(Self { m_x1, v_x1, m_u, v_u, chol_x1, chol_u })
    }

    /// Zero means, `V_X1 = I/M`, `V_U = I/L`.
    pub fn standard(m: usize, l: usize) -> Self {
        Self::new(
            DVector::zeros(m),
            DMatrix::identity(m, m) / m as f64,
            DVector::zeros(l),
            DMatrix::identity(l, l) / l as f64,
        )
        .expect("scaled identity is SPD")
    }

    /// Zero means and identity covariances.
    pub fn unit(m: usize, l: usize) -> Self {
        Self::new(DVector::zeros(m), DMatrix::identity(m, m), DVector::zeros(l), DMatrix::identity(l, l))
            .expect("identity is SPD")
    }

    fn quad(chol: &Cholesky<f64, Dyn>, d: &DVector<f64>) -> f64 {
        0.5 * d.dot(&chol.solve(d))
    }

    pub fn x1_cost(&self, x1: &DVector<f64>) -> f64 {
        Self::quad(&self.chol_x1, &(x1 - &self.m_x1))
    }

    pub fn u_cost(&self, u: &DVector<f64>) -> f64 {
        Self::quad(&self.chol_u, &(u - &self.m_u))
    }

    pub fn precision_x1(&self) -> DMatrix<f64> {
        self.chol_x1.inverse()
    }

    pub fn precision_u(&self) -> DMatrix<f64> {
        self.chol_u.inverse()
    }
}

/// Quadratic output penalty `(y − target)²/(2 var)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub target: f64,
    pub var: f64,
}

/// Where a scalar factor attaches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Site {
    Output { n: usize, k: usize },
    Input { n: usize, l: usize },
}

impl std::fmt::Display for Site {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Site::Output { n, k } => write!(f, "y[{},{}]", n + 1, k + 1),
            Site::Input { n, l } => write!(f, "u[{},{}]", n + 1, l + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InstanceMeta {
    pub seed: Option<u64>,
    pub generator: Option<String>,
}

/// Model, priors and per-scalar losses/observations.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub model: StateSpaceModel,
    pub priors: Priors,
    output_losses: Vec<Option<ScalarLoss>>,
    input_losses: Vec<Option<ScalarLoss>>,
    observations: Vec<Option<Observation>>,
    pub meta: InstanceMeta,
}

impl ProblemInstance {
    pub fn new(model: StateSpaceModel, priors: Priors) -> Result<Self> {
        if priors.m_x1.len() != model.state_dim() || priors.m_u.len() != model.input_dim() {
            return Err(Error::Dimension("priors do not match model dimensions".into()));
        }
        let (n, k, l) = (model.horizon, model.output_dim(), model.input_dim());
        Ok(Self {
            model,
            priors,
            output_losses: vec![None; n * k],
            input_losses: vec![None; n * l],
            observations: vec![None; n * k],
            meta: InstanceMeta::default(),
        })
    }

    pub fn dims(&self) -> (usize, usize, usize, usize) {
        let m = &self.model;
        (m.state_dim(), m.input_dim(), m.output_dim(), m.horizon)
    }

    /// Number of primal decision variables, `M + N L`.
    pub fn decision_dim(&self) -> usize {
        let (m, l, _, n) = self.dims();
        m + n * l
    }

    fn check_output(&self, n: usize, k: usize) -> Result<usize> {
        let (_, _, kk, nn) = self.dims();
        if n >= nn || k >= kk {
            return Err(Error::InvalidInstance(format!("output index ({}, {}) out of range", n + 1, k + 1)));
        }
        Ok(n * kk + k)
    }

    fn check_input(&self, n: usize, l: usize) -> Result<usize> {
        let (_, ll, _, nn) = self.dims();
        if n >= nn || l >= ll {
            return Err(Error::InvalidInstance(format!("input index ({}, {}) out of range", n + 1, l + 1)));
        }
        Ok(n * ll + l)
    }

    pub fn set_output_loss(&mut self, n: usize, k: usize, loss: Option<ScalarLoss>) -> Result<()> {
        let i = self.check_output(n, k)?;
        self.output_losses[i] = loss;
        Ok(())
    }

    pub fn set_input_loss(&mut self, n: usize, l: usize, loss: Option<ScalarLoss>) -> Result<()> {
        let i = self.check_input(n, l)?;
        self.input_losses[i] = loss;
        Ok(())
    }

    pub fn set_observation(&mut self, n: usize, k: usize, obs: Option<Observation>) -> Result<()> {
        let i = self.check_output(n, k)?;
        if let Some(o) = obs {
            if !(o.var > 0.0) || !o.var.is_finite() || !o.target.is_finite() {
                return Err(Error::InvalidInstance(format!("observation at ({}, {}) needs finite target and var > 0", n + 1, k + 1)));
            }
        }
        self.observations[i] = obs;
        Ok(())
    }

    pub fn output_loss(&self, n: usize, k: usize) -> Option<&ScalarLoss> {
        self.output_losses[n * self.model.output_dim() + k].as_ref()
    }

    pub fn input_loss(&self, n: usize, l: usize) -> Option<&ScalarLoss> {
        self.input_losses[n * self.model.input_dim() + l].as_ref()
    }

    pub fn observation(&self, n: usize, k: usize) -> Option<&Observation> {
        self.observations[n * self.model.output_dim() + k].as_ref()
    }

    pub fn losses(&self) -> impl Iterator<Item = (Site, &ScalarLoss)> + '_ {
        let (_, l, k, _) = self.dims();
        let out = self.output_losses.iter().enumerate().filter_map(move |(i, c)| {
            c.as_ref().map(|c| (Site::Output { n: i / k, k: i % k }, c))
        });
        let inp = self.input_losses.iter().enumerate().filter_map(move |(i, c)| {
            c.as_ref().map(|c| (Site::Input { n: i / l, l: i % l }, c))
        });
        out.chain(inp)
    }

    pub fn observations(&self) -> impl Iterator<Item = ((usize, usize), &Observation)> + '_ {
        let k = self.model.output_dim();
        self.observations.iter().enumerate().filter_map(move |(i, o)| o.as_ref().map(|o| ((i / k, i % k), o)))
    }

    pub fn has_output_losses(&self) -> bool {
        self.output_losses.iter().any(Option::is_some)
    }

    pub fn has_losses(&self) -> bool {
        self.losses().next().is_some()
    }

    pub fn simulate(&self, x1: &DVector<f64>, u: &[DVector<f64>]) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
        self.model.simulate(x1, u)
    }

    /// Objective on a primal trajectory: prior quadratics, observation
    /// quadratics and soft losses. Indicator losses contribute zero; their
    /// violations are reported by [`Self::feasibility_check`].
    pub fn objective_eval(&self, x1: &DVector<f64>, u: &[DVector<f64>]) -> Result<f64> {
        let (_, y) = self.simulate(x1, u)?;
        Ok(self.objective_on(x1, u, &y))
    }

    /// [`Self::objective_eval`] with a precomputed rollout.
    pub fn objective_on(&self, x1: &DVector<f64>, u: &[DVector<f64>], y: &[DVector<f64>]) -> f64 {
        let mut j = self.priors.x1_cost(x1) + u.iter().map(|un| self.priors.u_cost(un)).sum::<f64>();
        for ((n, k), o) in self.observations() {
            j += 0.5 * (y[n][k] - o.target).powi(2) / o.var;
        }
        for (site, loss) in self.losses() {
            if loss.kind().is_hard() {
                continue;
            }
            let z = match site {
                Site::Output { n, k } => y[n][k],
                Site::Input { n, l } => u[n][l],
            };
            j += loss.primal_eval(z);
        }
        j
    }

    /// Every indicator-constrained scalar whose violation exceeds `tol`.
    pub fn feasibility_check(&self, u: &[DVector<f64>], y: &[DVector<f64>], tol: f64) -> FeasibilityReport {
        let mut report = FeasibilityReport::default();
        for (site, loss) in self.losses() {
            let z = match site {
                Site::Output { n, k } => y[n][k],
                Site::Input { n, l } => u[n][l],
            };
            let v = loss.violation(z);
            report.max_violation = report.max_violation.max(v);
            if v > tol {
                report.violations.push((site, v));
            }
        }
        report
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeasibilityReport {
    pub violations: Vec<(Site, f64)>,
    pub max_violation: f64,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Portable generator: SplitMix64 with `u64 >> 11` uniforms on `[0, 1)` and
/// Box–Muller normals (cosine branch only, two uniforms per normal).
pub struct InstanceRng(SplitMix64);

impl InstanceRng {
    pub fn new(seed: u64) -> Self {
        Self(SplitMix64::seed_from_u64(seed))
    }

    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Entries `N(0, std²)`, drawn in row-major order.
    pub fn matrix(&mut self, rows: usize, cols: usize, std: f64) -> DMatrix<f64> {
        let data: Vec<f64> = (0..rows * cols).map(|_| std * self.normal()).collect();
        DMatrix::from_row_slice(rows, cols, &data)
    }

    pub fn vector(&mut self, len: usize, std: f64) -> DVector<f64> {
        DVector::from_iterator(len, (0..len).map(|_| std * self.normal()))
    }
}

/// Random model plus the trajectory that generated it.
pub struct Sampled {
    pub model: StateSpaceModel,
    pub x1: DVector<f64>,
    pub u: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
}

/// Draws `A, B, C ~ N(0, 1/N)` entrywise (row-major, in that order), then
/// `x1 ~ N(0, I/M)` and `u_n ~ N(0, I/L)`, and rolls out.
pub fn sample_model(m: usize, l: usize, k: usize, n: usize, rng: &mut InstanceRng) -> Result<Sampled> {
    if m == 0 || l == 0 || k == 0 || n == 0 {
        return Err(Error::Dimension("all dimensions must be at least 1".into()));
    }
    let std = (1.0 / n as f64).sqrt();
    let a = rng.matrix(m, m, std);
    let b = rng.matrix(m, l, std);
    let c = rng.matrix(k, m, std);
    let model = StateSpaceModel::new(a, b, c, n)?;
    let x1 = rng.vector(m, (1.0 / m as f64).sqrt());
    let u: Vec<_> = (0..n).map(|_| rng.vector(l, (1.0 / l as f64).sqrt())).collect();
    let (_, y) = model.simulate(&x1, &u)?;
    Ok(Sampled { model, x1, u, y })
}

/// `z̆ ~ U[0.9 z, 1.1 z]`, returned as the band `z̆ ∓ width·|z̆|`.
fn jittered_band(z: f64, width: f64, rng: &mut InstanceRng) -> (f64, f64) {
    let center = z * (0.9 + 0.2 * rng.uniform());
    (center - width * center.abs(), center + width * center.abs())
}

/// Random output-interval instance.
///
/// The band around `y̆` is `±10%·|y̆|`, so the generating trajectory itself
/// is only guaranteed feasible when `y̆ ≥ y/1.1` in magnitude; it can miss
/// the band by up to `0.01·|y|`.
pub fn generate_appendix_b(m: usize, l: usize, k: usize, n: usize, seed: u64) -> Result<ProblemInstance> {
    let mut rng = InstanceRng::new(seed);
    let s = sample_model(m, l, k, n, &mut rng)?;
    let mut inst = ProblemInstance::new(s.model, Priors::standard(m, l))?;
    for (t, yt) in s.y.iter().enumerate() {
        for kk in 0..k {
            let (a, b) = jittered_band(yt[kk], 0.1, &mut rng);
            inst.set_output_loss(t, kk, Some(ScalarLoss::interval(a, b)?))?;
        }
    }
    inst.meta = InstanceMeta { seed: Some(seed), generator: Some("appendix-b/1".into()) };
    Ok(inst)
}

/// Random instance with interval constraints on every input and Gaussian
/// output observations `y_{n,k}` (variance [`INPUT_CONSTRAINED_OBS_VAR`]).
/// The input bands are `ŭ ∓ 0.3|ŭ|` with `ŭ ~ U[0.9u, 1.1u]`.
pub fn generate_input_constrained(m: usize, l: usize, k: usize, n: usize, seed: u64) -> Result<ProblemInstance> {
    let mut rng = InstanceRng::new(seed);
    let s = sample_model(m, l, k, n, &mut rng)?;
    let mut inst = ProblemInstance::new(s.model, Priors::standard(m, l))?;
    for (t, ut) in s.u.iter().enumerate() {
        for ll in 0..l {
            let (a, b) = jittered_band(ut[ll], 0.3, &mut rng);
            inst.set_input_loss(t, ll, Some(ScalarLoss::interval(a, b)?))?;
        }
    }
    for (t, yt) in s.y.iter().enumerate() {
        for kk in 0..k {
            inst.set_observation(t, kk, Some(Observation { target: yt[kk], var: INPUT_CONSTRAINED_OBS_VAR }))?;
        }
    }
    inst.meta = InstanceMeta { seed: Some(seed), generator: Some("input-constrained/1".into()) };
    Ok(inst)
}

pub const INPUT_CONSTRAINED_OBS_VAR: f64 = 0.05;

/// Scalar chain `s_n = s_{n−1} + u_n`, `y_n = s_n`, unit priors, no losses.
pub fn scalar_chain(horizon: usize) -> ProblemInstance {
    let one = || DMatrix::from_element(1, 1, 1.0);
    let model = StateSpaceModel::new(one(), one(), one(), horizon).expect("1x1 chain");
    ProblemInstance::new(model, Priors::unit(1, 1)).expect("unit priors")
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;
    use proptest::prelude::*;

    fn chain_model(a: f64, b: f64, c: f64, n: usize) -> StateSpaceModel {
        let s = |v| DMatrix::from_element(1, 1, v);
        StateSpaceModel::new(s(a), s(b), s(c), n).unwrap()
    }

    #[test]
    fn simulate_frozen_dynamics() {
        let model = StateSpaceModel::new(
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 1),
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
            3,
        )
        .unwrap();
        let x1 = dvector![1.0, 0.0];
        let u = vec![dvector![5.0]; 3];
        let (states, y) = model.simulate(&x1, &u).unwrap();
        assert!(states.iter().all(|s| *s == x1));
        assert!(y.iter().all(|y| *y == dvector![1.0, 3.0]));
    }

    #[test]
    fn simulate_hand_rollout() {
        let (states, y) = chain_model(1.0, 1.0, 1.0, 2).simulate(&dvector![1.0], &[dvector![1.0], dvector![1.0]]).unwrap();
        let s: Vec<f64> = states.iter().map(|v| v[0]).collect();
        let o: Vec<f64> = y.iter().map(|v| v[0]).collect();
        assert_eq!(s, vec![1.0, 2.0, 3.0]);
        assert_eq!(o, vec![2.0, 3.0]);
    }

    #[test]
    fn simulate_memoryless() {
        let model = chain_model(0.0, 2.0, 1.0, 2);
        for x1 in [-3.0, 0.0, 7.0] {
            let (states, _) = model.simulate(&dvector![x1], &[dvector![1.0], dvector![-0.5]]).unwrap();
            assert_eq!(states[1][0], 2.0);
            assert_eq!(states[2][0], -1.0);
        }
    }

    #[test]
    fn simulate_dimension_errors() {
        let model = chain_model(1.0, 1.0, 1.0, 2);
        assert!(model.simulate(&dvector![1.0, 2.0], &[dvector![1.0], dvector![1.0]]).is_err());
        assert!(model.simulate(&dvector![1.0], &[dvector![1.0]]).is_err());
        assert!(StateSpaceModel::new(DMatrix::zeros(2, 2), DMatrix::zeros(3, 1), DMatrix::zeros(1, 2), 1).is_err());
    }

    #[test]
    fn objective_examples() {
        let model = StateSpaceModel::new(DMatrix::identity(4, 4), DMatrix::zeros(4, 2), DMatrix::zeros(1, 4), 3).unwrap();
        let inst = ProblemInstance::new(model, Priors::standard(4, 2)).unwrap();
        let zero_u = vec![DVector::zeros(2); 3];
        assert_eq!(inst.objective_eval(&DVector::zeros(4), &zero_u).unwrap(), 0.0);
        let e1 = dvector![1.0, 0.0, 0.0, 0.0];
        assert!((inst.objective_eval(&e1, &zero_u).unwrap() - 2.0).abs() < 1e-14);
        let mut u = zero_u.clone();
        u[0] = dvector![1.0, 1.0];
        assert!((inst.objective_eval(&DVector::zeros(4), &u).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn singular_prior_rejected() {
        let r = Priors::new(DVector::zeros(2), DMatrix::zeros(2, 2), DVector::zeros(1), DMatrix::identity(1, 1));
        assert!(matches!(r, Err(Error::SingularPrior)));
    }

    #[test]
    fn feasibility_examples() {
        let mut inst = scalar_chain(1);
        inst.set_output_loss(0, 0, Some(ScalarLoss::interval(0.0, 1.0).unwrap())).unwrap();
        let u = [dvector![0.0]];
        assert!(inst.feasibility_check(&u, &[dvector![1.0]], 1e-8).is_feasible());
        assert!(inst.feasibility_check(&u, &[dvector![0.0]], 1e-8).is_feasible());
        let r = inst.feasibility_check(&u, &[dvector![1.0 + 1e-3]], 1e-8);
        assert_eq!(r.violations.len(), 1);
        assert!((r.max_violation - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn generator_bounds_ordered_and_deterministic() {
        let a = generate_appendix_b(4, 2, 2, 8, 3).unwrap();
        let b = generate_appendix_b(4, 2, 2, 8, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_appendix_b(4, 2, 2, 8, 4).unwrap());
        for (_, loss) in a.losses() {
            assert!(loss.a() <= loss.b());
            assert_eq!(loss.a() == loss.b(), loss.a() == 0.0 && loss.b() == 0.0);
        }
        assert_eq!(a.losses().count(), 16);
    }

    #[test]
    fn generating_trajectory_misses_band_by_at_most_one_percent() {
        for seed in 0..20 {
            let inst = generate_appendix_b(4, 2, 2, 8, seed).unwrap();
            let mut rng = InstanceRng::new(seed);
            let s = sample_model(4, 2, 2, 8, &mut rng).unwrap();
            for (site, loss) in inst.losses() {
                let Site::Output { n, k } = site else { unreachable!() };
                let y = s.y[n][k];
                assert!(loss.violation(y) <= 0.01 * y.abs() + 1e-15);
                let center = 0.5 * (loss.a() + loss.b());
                if center.abs() >= y.abs() / 1.1 {
                    assert!(loss.violation(y) <= 1e-15 * (1.0 + y.abs()));
                }
            }
        }
    }

    #[test]
    fn paper_scale_dims_accepted() {
        let inst = generate_appendix_b(40, 20, 20, 1000, 1).unwrap();
        assert_eq!(inst.dims(), (40, 20, 20, 1000));
        assert_eq!(inst.losses().count(), 20_000);
    }

    #[test]
    fn rng_reference_values() {
        let mut r = InstanceRng::new(1477776061723855037);
        assert_eq!(r.0.next_u64(), 1985237415132408290);
        let mut r = InstanceRng::new(9);
        for _ in 0..1000 {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
            assert!(r.normal().is_finite());
        }
    }

    proptest! {
        #[test]
        fn simulate_is_linear(seed in 0u64..1000, scale in -2.0..2.0f64) {
            let mut rng = InstanceRng::new(seed);
            let s = sample_model(3, 2, 2, 5, &mut rng).unwrap();
            let x1b = rng.vector(3, 1.0);
            let ub: Vec<_> = (0..5).map(|_| rng.vector(2, 1.0)).collect();
            let (sa, ya) = s.model.simulate(&s.x1, &s.u).unwrap();
            let (sb, yb) = s.model.simulate(&x1b, &ub).unwrap();
            let x1c = &s.x1 + &x1b * scale;
            let uc: Vec<_> = s.u.iter().zip(&ub).map(|(a, b)| a + b * scale).collect();
            let (sc, yc) = s.model.simulate(&x1c, &uc).unwrap();
            for i in 0..sa.len() {
                prop_assert!((&sc[i] - (&sa[i] + &sb[i] * scale)).amax() <= 1e-12);
            }
            for i in 0..ya.len() {
                prop_assert!((&yc[i] - (&ya[i] + &yb[i] * scale)).amax() <= 1e-12);
            }
        }
    }
}
