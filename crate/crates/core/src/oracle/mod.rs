//! Reference solvers that share no code with the message-passing solvers:
//! they work on the dense "batch" form of the problem, in which every output
//! is an explicit linear function `y_{n,k} = g_{n,k} · z` of the stacked
//! decision vector `z = (x1, u_1, …, u_N)`.

mod active_set;
mod enumerate;
mod gradient;
mod grid;

pub use active_set::active_set_qp;
pub use enumerate::{enumerate_qp, ENUMERATION_LIMIT};
pub use gradient::{dual_gradient_qp, GradientReport};
pub use grid::{scalar_grid_argmin, scalar_grid_max};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::losses::ScalarLoss;
use crate::ssm::{ProblemInstance, Site};

/// Which bound of a constraint is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Lower,
    Upper,
}

/// An active constraint and its signed multiplier: `≥ 0` at an upper bound,
/// `≤ 0` at a lower bound, matching the sign of the dual decision `z̃`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActiveConstraint {
    pub site: Site,
    pub side: Side,
    pub multiplier: f64,
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub x1: DVector<f64>,
    pub u: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub j: f64,
    pub active_set: Vec<ActiveConstraint>,
    /// Worst stationarity residual of the certified KKT point.
    pub stationarity: f64,
}

impl OracleSolution {
    /// Signed multiplier of the loss at `site`, zero when inactive.
    pub fn multiplier(&self, site: Site) -> f64 {
        self.active_set.iter().filter(|a| a.site == site).map(|a| a.multiplier).sum()
    }
}

/// One scalar loss in batch form.
#[derive(Debug, Clone)]
pub(crate) struct LossRow {
    pub site: Site,
    pub g: DVector<f64>,
    pub loss: ScalarLoss,
}

/// `½ zᵀ H z + cᵀ z` (constant dropped) plus the loss rows.
#[derive(Debug, Clone)]
pub(crate) struct BatchForm {
    pub h: DMatrix<f64>,
    pub c: DVector<f64>,
    pub rows: Vec<LossRow>,
    /// `y_{n,k} = out_rows[n·K + k] · z`.
    #[cfg_attr(not(test), allow(dead_code))]
    pub out_rows: Vec<DVector<f64>>,
}

/// Instances larger than this are refused by the dense oracles.
pub const MAX_BATCH_DIM: usize = 4000;

impl BatchForm {
    pub fn new(inst: &ProblemInstance) -> Result<Self> {
        let (m, l, k, n) = inst.dims();
        let d = inst.decision_dim();
        if d > MAX_BATCH_DIM {
            return Err(Error::InvalidInstance(format!("decision dimension {d} exceeds dense oracle limit {MAX_BATCH_DIM}")));
        }
        let model = &inst.model;
        // state map: s_t = S_t z
        let mut s = DMatrix::<f64>::zeros(m, d);
        s.view_mut((0, 0), (m, m)).fill_with_identity();
        let mut out_rows = Vec::with_capacity(n * k);
        for t in 0..n {
            let mut next = &model.a * &s;
            {
                let mut cols = next.view_mut((0, m + t * l), (m, l));
                cols += &model.b;
            }
            s = next;
            let y = &model.c * &s;
            for kk in 0..k {
                out_rows.push(y.row(kk).transpose());
            }
        }

        let px = inst.priors.precision_x1();
        let pu = inst.priors.precision_u();
        let mut h = DMatrix::<f64>::zeros(d, d);
        let mut c = DVector::<f64>::zeros(d);
        h.view_mut((0, 0), (m, m)).copy_from(&px);
        c.rows_mut(0, m).copy_from(&(-(&px * &inst.priors.m_x1)));
        let cu = -(&pu * &inst.priors.m_u);
        for t in 0..n {
            h.view_mut((m + t * l, m + t * l), (l, l)).copy_from(&pu);
            c.rows_mut(m + t * l, l).copy_from(&cu);
        }
        for ((t, kk), o) in inst.observations() {
            let g = &out_rows[t * k + kk];
            h.ger(1.0 / o.var, g, g, 1.0);
            c.axpy(-o.target / o.var, g, 1.0);
        }

        let rows = inst
            .losses()
            .map(|(site, loss)| {
                let g = match site {
                    Site::Output { n: t, k: kk } => out_rows[t * k + kk].clone(),
                    Site::Input { n: t, l: ll } => {
                        let mut e = DVector::zeros(d);
                        e[m + t * l + ll] = 1.0;
                        e
                    }
                };
                LossRow { site, g, loss: *loss }
            })
            .collect();
        Ok(Self { h, c, rows, out_rows })
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    /// Split `z` into `(x1, u)`.
    pub fn unstack(inst: &ProblemInstance, z: &DVector<f64>) -> (DVector<f64>, Vec<DVector<f64>>) {
        let (m, l, _, n) = inst.dims();
        let x1 = z.rows(0, m).into_owned();
        let u = (0..n).map(|t| z.rows(m + t * l, l).into_owned()).collect();
        (x1, u)
    }

    pub fn solution(
        inst: &ProblemInstance,
        z: &DVector<f64>,
        active_set: Vec<ActiveConstraint>,
        stationarity: f64,
    ) -> Result<OracleSolution> {
        let (x1, u) = Self::unstack(inst, z);
        let (_, y) = inst.simulate(&x1, &u)?;
        let j = inst.objective_on(&x1, &u, &y);
        Ok(OracleSolution { x1, u, y, j, active_set, stationarity })
    }

    pub fn require_hard(&self, context: &'static str) -> Result<()> {
        match self.rows.iter().find(|r| !r.loss.kind().is_hard()) {
            Some(r) => Err(Error::UnsupportedLoss { kind: r.loss.kind().name(), context }),
            None => Ok(()),
        }
    }

    /// Lower and upper bound of a hard row; `±∞` where absent.
    pub fn bounds(loss: &ScalarLoss) -> (f64, f64) {
        use crate::losses::LossKind::*;
        match loss.kind() {
            HalfSpaceGeq => (loss.a(), f64::INFINITY),
            HalfSpaceLeq => (f64::NEG_INFINITY, loss.b()),
            Interval => (loss.a(), loss.b()),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssm::generate_appendix_b;

    #[test]
    fn batch_rows_reproduce_rollout() {
        let inst = generate_appendix_b(3, 2, 2, 5, 11).unwrap();
        let form = BatchForm::new(&inst).unwrap();
        let z = DVector::from_fn(form.dim(), |i, _| (i as f64 * 0.37).sin());
        let (x1, u) = BatchForm::unstack(&inst, &z);
        let (_, y) = inst.simulate(&x1, &u).unwrap();
        for t in 0..5 {
            for kk in 0..2 {
                assert!((form.out_rows[t * 2 + kk].dot(&z) - y[t][kk]).abs() < 1e-12);
            }
        }
        let quad = 0.5 * z.dot(&(&form.h * &z)) + form.c.dot(&z);
        assert!((quad - inst.objective_eval(&x1, &u).unwrap()).abs() < 1e-12);
    }
}
