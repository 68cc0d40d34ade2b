//! Forward Kalman filtering with sequential scalar updates and the backward
//! dual-state recursion, shared by IFFBDD, IRLGE and the smoother.
//!
//! Every scalar factor (loss or Gaussian observation) is processed in the
//! forward sweep as a rank-one update, and only `V cᵀ`, `c m` and `c V cᵀ`
//! are kept. The backward sweep runs the factors in exact reverse order,
//! carrying the dual state `x̃`; each factor receives its forward message
//! `(c m − c V x̃, c V cᵀ)`, returns a dual decision `ỹ`, and `x̃ += cᵀ ỹ`.

use std::collections::HashMap;
use std::ops::Range;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::gauss::{observe_in_place, predict_parts, tidy_covariance, ObservationRecord, ScalarMessage, Selector};
use crate::ssm::{ProblemInstance, Site};

#[derive(Debug, Clone)]
pub(crate) struct Factor {
    pub site: Site,
    /// Index into [`ProblemInstance::losses`] order; `None` for Gaussian factors.
    pub loss: Option<usize>,
    pub msg: ScalarMessage,
}

struct Step {
    inputs: Range<usize>,
    outputs: Range<usize>,
}

pub(crate) struct Chain<'a> {
    inst: &'a ProblemInstance,
    c_rows: Vec<DVector<f64>>,
    pub factors: Vec<Factor>,
    steps: Vec<Step>,
    records: Vec<Option<ObservationRecord>>,
    pub clamped: usize,
}

pub(crate) struct BackwardOut {
    pub x1: DVector<f64>,
    pub u: Vec<DVector<f64>>,
    /// Per factor.
    pub decisions: Vec<f64>,
    pub recovered: Vec<f64>,
    pub forward: Vec<(f64, f64)>,
    /// Index 0 is the dual of `x1`, index `n` the dual of `s_n` with all its
    /// outputs included.
    pub x_tilde: Vec<DVector<f64>>,
}

/// `ỹ` for a fixed Gaussian backward message: the dual marginal mean
/// `(m→ − m←)/(V→ + V←)`.
pub(crate) fn gaussian_decision(msg: ScalarMessage, m_fwd: f64, v_fwd: f64) -> Result<f64> {
    match msg {
        ScalarMessage::MeanVar { var, .. } if var.is_infinite() => Ok(0.0),
        ScalarMessage::MeanVar { mean, var } => {
            let s = var + v_fwd;
            if !(s > 0.0) {
                return Err(Error::DegenerateMarginal);
            }
            Ok((m_fwd - mean) / s)
        }
        ScalarMessage::Precision { w, xi } => Ok((w * m_fwd - xi) / (1.0 + w * v_fwd)),
    }
}

impl<'a> Chain<'a> {
    /// Factors: instance observations, instance losses when `with_losses`
    /// (starting from `initial` messages), and `extra` Gaussian messages.
    pub fn new(
        inst: &'a ProblemInstance,
        with_losses: bool,
        initial: impl Fn(&crate::losses::ScalarLoss) -> ScalarMessage,
        extra: &[(Site, ScalarMessage)],
    ) -> Result<Self> {
        let (_, l, k, n) = inst.dims();
        let loss_index: HashMap<Site, usize> = inst.losses().enumerate().map(|(i, (s, _))| (s, i)).collect();
        let mut extra_at: HashMap<Site, Vec<ScalarMessage>> = HashMap::new();
        for (site, msg) in extra {
            let ok = match *site {
                Site::Output { n: t, k: kk } => t < n && kk < k,
                Site::Input { n: t, l: ll } => t < n && ll < l,
            };
            if !ok {
                return Err(Error::InvalidInstance(format!("message site {site} out of range")));
            }
            let (w, _) = msg.as_precision();
            if !(w >= 0.0) {
                return Err(Error::InvalidInstance(format!("message at {site} has negative precision")));
            }
            extra_at.entry(*site).or_default().push(*msg);
        }

        let mut factors = Vec::new();
        let mut steps = Vec::with_capacity(n);
        let push_site = |factors: &mut Vec<Factor>, site: Site| {
            if let Site::Output { n: t, k: kk } = site {
                if let Some(o) = inst.observation(t, kk) {
                    factors.push(Factor { site, loss: None, msg: ScalarMessage::mean_var(o.target, o.var) });
                }
            }
            if with_losses {
                if let Some(&i) = loss_index.get(&site) {
                    let loss = match site {
                        Site::Output { n: t, k: kk } => inst.output_loss(t, kk),
                        Site::Input { n: t, l: ll } => inst.input_loss(t, ll),
                    }
                    .expect("indexed loss exists");
                    factors.push(Factor { site, loss: Some(i), msg: initial(loss) });
                }
            }
            for msg in extra_at.get(&site).into_iter().flatten() {
                factors.push(Factor { site, loss: None, msg: *msg });
            }
        };
        for t in 0..n {
            let start = factors.len();
            for ll in 0..l {
                push_site(&mut factors, Site::Input { n: t, l: ll });
            }
            let mid = factors.len();
            for kk in 0..k {
                push_site(&mut factors, Site::Output { n: t, k: kk });
            }
            steps.push(Step { inputs: start..mid, outputs: mid..factors.len() });
        }
        let c_rows = (0..k).map(|kk| inst.model.c.row(kk).transpose()).collect();
        let records = vec![None; factors.len()];
        Ok(Self { inst, c_rows, factors, steps, records, clamped: 0 })
    }

    fn selector(&self, site: Site) -> Selector<'_> {
        match site {
            Site::Output { k, .. } => Selector::Dense(&self.c_rows[k]),
            Site::Input { l, .. } => Selector::Unit(l),
        }
    }

    pub fn forward(&mut self, iteration: usize) -> Result<()> {
        let pr = &self.inst.priors;
        let model = &self.inst.model;
        let mut m = pr.m_x1.clone();
        let mut v = pr.v_x1.clone();
        for step in &self.steps {
            let mut mu = pr.m_u.clone();
            let mut vu = pr.v_u.clone();
            for f in step.inputs.clone() {
                let factor = &self.factors[f];
                let sel = match factor.site {
                    Site::Input { l, .. } => Selector::Unit(l),
                    Site::Output { .. } => unreachable!("input range holds input factors"),
                };
                let (rec, c) = observe_in_place(&mut mu, &mut vu, sel, factor.msg).map_err(|e| with_iteration(e, iteration))?;
                self.records[f] = Some(rec);
                self.clamped += c;
            }
            let (nm, mut nv) = predict_parts(&m, &v, &model.a, &model.b, &mu, &vu)?;
            self.clamped += tidy_covariance(&mut nv);
            m = nm;
            v = nv;
            for f in step.outputs.clone() {
                let factor = &self.factors[f];
                let sel = match factor.site {
                    Site::Output { k, .. } => Selector::Dense(&self.c_rows[k]),
                    Site::Input { .. } => unreachable!("output range holds output factors"),
                };
                let (rec, c) = observe_in_place(&mut m, &mut v, sel, factor.msg).map_err(|e| with_iteration(e, iteration))?;
                self.records[f] = Some(rec);
                self.clamped += c;
            }
            if !m.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite { iteration, context: "forward state mean".into() });
            }
        }
        Ok(())
    }

    /// Backward sweep. `decide(factor, m→, V→)` returns the dual decision and,
    /// optionally, a replacement backward message for that factor.
    pub fn backward(
        &mut self,
        iteration: usize,
        mut decide: impl FnMut(&Factor, f64, f64) -> Result<(f64, Option<ScalarMessage>)>,
    ) -> Result<BackwardOut> {
        let (m_dim, _, _, n) = self.inst.dims();
        let model = &self.inst.model;
        let pr = &self.inst.priors;
        let nf = self.factors.len();
        let mut decisions = vec![0.0; nf];
        let mut recovered = vec![0.0; nf];
        let mut forward = vec![(0.0, 0.0); nf];
        let mut u = vec![DVector::zeros(0); n];
        let mut x_tilde = vec![DVector::zeros(m_dim); n + 1];
        let mut xt = DVector::<f64>::zeros(m_dim);

        for t in (0..n).rev() {
            for f in self.steps[t].outputs.clone().rev() {
                self.visit(f, &mut xt, iteration, &mut decide, &mut decisions, &mut recovered, &mut forward)?;
            }
            x_tilde[t + 1] = xt.clone();
            let mut xu = model.b.tr_mul(&xt);
            for f in self.steps[t].inputs.clone().rev() {
                self.visit(f, &mut xu, iteration, &mut decide, &mut decisions, &mut recovered, &mut forward)?;
            }
            u[t] = &pr.m_u - &pr.v_u * &xu;
            xt = model.a.tr_mul(&xt);
            if !xt.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite { iteration, context: format!("dual state at step {}", t + 1) });
            }
        }
        x_tilde[0] = xt.clone();
        let x1 = &pr.m_x1 - &pr.v_x1 * &xt;
        Ok(BackwardOut { x1, u, decisions, recovered, forward, x_tilde })
    }

    #[allow(clippy::too_many_arguments)]
    fn visit(
        &mut self,
        f: usize,
        xt: &mut DVector<f64>,
        iteration: usize,
        decide: &mut impl FnMut(&Factor, f64, f64) -> Result<(f64, Option<ScalarMessage>)>,
        decisions: &mut [f64],
        recovered: &mut [f64],
        forward: &mut [(f64, f64)],
    ) -> Result<()> {
        let rec = self.records[f].as_ref().expect("forward sweep ran");
        let m_fwd = rec.cm - rec.cv.dot(xt);
        let v_fwd = rec.cvc;
        let (zt, msg) = decide(&self.factors[f], m_fwd, v_fwd)?;
        if !zt.is_finite() {
            return Err(Error::NonFinite { iteration, context: format!("dual decision at {}", self.factors[f].site) });
        }
        self.selector(self.factors[f].site).add_scaled_to(xt, zt);
        decisions[f] = zt;
        recovered[f] = m_fwd - v_fwd * zt;
        forward[f] = (m_fwd, v_fwd);
        if let Some(msg) = msg {
            self.factors[f].msg = msg;
        }
        Ok(())
    }
}

fn with_iteration(e: Error, iteration: usize) -> Error {
    match e {
        Error::NonFinite { context, .. } => Error::NonFinite { iteration, context },
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmootherOutput {
    pub x1: DVector<f64>,
    pub u: Vec<DVector<f64>>,
    /// `N+1` states, `x1` first.
    pub states: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
}

/// Joint MAP of the linear-Gaussian model formed by the priors, the
/// instance's observations and the given scalar backward messages. The
/// instance's losses are ignored.
pub fn smoother(inst: &ProblemInstance, messages: &[(Site, ScalarMessage)]) -> Result<SmootherOutput> {
    let mut chain = Chain::new(inst, false, |_| ScalarMessage::UNINFORMATIVE, messages)?;
    chain.forward(0)?;
    let out = chain.backward(0, |factor, m, v| Ok((gaussian_decision(factor.msg, m, v)?, None)))?;
    let (states, y) = inst.simulate(&out.x1, &out.u)?;
    Ok(SmootherOutput { x1: out.x1, u: out.u, states, y })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use crate::ssm::{generate_appendix_b, scalar_chain, Priors, StateSpaceModel};
    use crate::verify::{dense_smoother, random_smoothing_problem};

    #[test]
    fn no_messages_returns_prior_means() {
        let mut inst = generate_appendix_b(3, 2, 2, 4, 5).unwrap();
        inst.priors = Priors::new(
            DVector::from_vec(vec![0.3, -0.2, 1.0]),
            DMatrix::identity(3, 3),
            DVector::from_vec(vec![0.5, -1.0]),
            DMatrix::identity(2, 2) * 2.0,
        )
        .unwrap();
        let out = smoother(&inst, &[]).unwrap();
        assert_eq!(out.x1, inst.priors.m_x1);
        assert!(out.u.iter().all(|u| *u == inst.priors.m_u));
    }

    #[test]
    fn scalar_chain_matches_hand_conditioning() {
        // x ~ N(0,1), u1, u2 ~ N(0,1); message y2 = x + u1 + u2 ~ N(3, 1)
        let inst = scalar_chain(2);
        let msg = [(Site::Output { n: 1, k: 0 }, ScalarMessage::mean_var(3.0, 1.0))];
        let out = smoother(&inst, &msg).unwrap();
        // each of the three unit-variance summands takes 3 / (3 + 1)
        for v in [out.x1[0], out.u[0][0], out.u[1][0]] {
            assert!((v - 0.75).abs() < 1e-14);
        }
        assert!((out.y[1][0] - 2.25).abs() < 1e-14);
    }

    #[test]
    fn random_instances_match_dense_solve() {
        for seed in 0..10u64 {
            let (inst, msgs) = random_smoothing_problem(seed, 1 + (seed as usize % 6), 5).unwrap();
            let out = smoother(&inst, &msgs).unwrap();
            let (x1, u) = dense_smoother(&inst, &msgs).unwrap();
            assert!((&out.x1 - &x1).amax() < 1e-8, "seed {seed}");
            for t in 0..5 {
                assert!((&out.u[t] - &u[t]).amax() < 1e-8, "seed {seed}");
            }
        }
    }

    #[test]
    fn singular_system_is_an_error() {
        let model = StateSpaceModel::new(
            DMatrix::identity(1, 1),
            DMatrix::zeros(1, 1),
            DMatrix::identity(1, 1),
            2,
        )
        .unwrap();
        let inst = ProblemInstance::new(model, Priors::unit(1, 1)).unwrap();
        let msgs = [
            (Site::Output { n: 0, k: 0 }, ScalarMessage::mean_var(1.0, 0.0)),
            (Site::Output { n: 1, k: 0 }, ScalarMessage::mean_var(2.0, 0.0)),
        ];
        assert!(smoother(&inst, &msgs).is_err());
        let neg = [(Site::Output { n: 0, k: 0 }, ScalarMessage::precision(-1.0, 0.0))];
        assert!(smoother(&inst, &neg).is_err());
    }
}
