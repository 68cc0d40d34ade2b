use nalgebra::DVector;

use super::{ActiveConstraint, BatchForm, OracleSolution, Side};
use crate::error::{Error, Result};
use crate::ssm::ProblemInstance;

#[derive(Debug, Clone)]
pub struct GradientReport {
    pub solution: OracleSolution,
    pub iterations: usize,
    /// Final fixed-point residual `‖ν_{t+1} − ν_t‖∞ / step`.
    pub residual: f64,
}

/// Reference optimum by accelerated proximal gradient on the dual.
///
/// With `z(ν) = −H⁻¹(c + Gᵀν)` the dual objective is
/// `½ (c + Gᵀν)ᵀ H⁻¹ (c + Gᵀν) + Σ σ_i(ν_i)`, where `σ_i` is the support
/// function of the `i`-th bound interval. The step is `1/L` with `L` a
/// Gershgorin bound on the largest eigenvalue of `G H⁻¹ Gᵀ`. Stops after
/// `max_iters` steps or when the residual drops below `tol`.
pub fn dual_gradient_qp(inst: &ProblemInstance, max_iters: usize, tol: f64) -> Result<GradientReport> {
    let form = BatchForm::new(inst)?;
    form.require_hard("the dual gradient oracle")?;
    let chol = form.h.clone().cholesky().ok_or(Error::SingularPrior)?;
    let p = form.rows.len();
    let d = form.dim();
    let mut g = nalgebra::DMatrix::<f64>::zeros(p, d);
    for (i, r) in form.rows.iter().enumerate() {
        g.row_mut(i).copy_from(&r.g.transpose());
    }
    let hinv_gt = chol.solve(&g.transpose());
    let q = &g * &hinv_gt;
    let hinv_c = chol.solve(&form.c);
    let qc = &g * &hinv_c;
    let bounds: Vec<(f64, f64)> = form.rows.iter().map(|r| BatchForm::bounds(&r.loss)).collect();

    let lipschitz = (0..p).map(|i| q.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let step = if lipschitz > 0.0 { 1.0 / lipschitz } else { 1.0 };

    let prox = |v: f64, (lo, hi): (f64, f64)| {
        if v > step * hi {
            v - step * hi
        } else if v < step * lo {
            v - step * lo
        } else {
            0.0
        }
    };
    let dual_obj = |nu: &DVector<f64>| {
        let smooth = 0.5 * nu.dot(&(&q * nu)) + qc.dot(nu);
        let support: f64 = nu.iter().zip(&bounds).map(|(&v, &(lo, hi))| if v > 0.0 { hi * v } else if v < 0.0 { lo * v } else { 0.0 }).sum();
        smooth + support
    };

    let mut nu = DVector::<f64>::zeros(p);
    let mut mom = nu.clone();
    let mut t = 1.0f64;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut last_obj = dual_obj(&nu);
    while iterations < max_iters {
        iterations += 1;
        let grad = &q * &mom + &qc;
        let trial = &mom - &grad * step;
        let next = DVector::from_iterator(p, trial.iter().zip(&bounds).map(|(&v, &b)| prox(v, b)));
        residual = (&next - &mom).amax() / step;
        let obj = dual_obj(&next);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        if obj > last_obj {
            // adaptive restart
            mom = nu.clone();
            t = 1.0;
            continue;
        }
        mom = &next + (&next - &nu) * ((t - 1.0) / t_next);
        nu = next;
        t = t_next;
        last_obj = obj;
        if residual <= tol {
            break;
        }
    }
    if !nu.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { iteration: iterations, context: "dual gradient oracle".into() });
    }
    let z = -(&hinv_gt * &nu + &hinv_c);
    let active_set = nu
        .iter()
        .zip(&form.rows)
        .filter(|(v, _)| **v != 0.0)
        .map(|(&v, r)| ActiveConstraint { site: r.site, side: if v > 0.0 { Side::Upper } else { Side::Lower }, multiplier: v })
        .collect();
    let solution = BatchForm::solution(inst, &z, active_set, residual)?;
    Ok(GradientReport { solution, iterations, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::ScalarLoss;
    use crate::oracle::active_set_qp;
    use crate::ssm::{generate_appendix_b, scalar_chain};

    #[test]
    fn hand_kkt() {
        let mut inst = scalar_chain(1);
        inst.set_output_loss(0, 0, Some(ScalarLoss::geq(2.0).unwrap())).unwrap();
        let r = dual_gradient_qp(&inst, 1_000_000, 1e-13).unwrap();
        assert!((r.solution.j - 1.0).abs() < 1e-10);
    }

    #[test]
    fn agrees_with_active_set() {
        for seed in 0..3 {
            let inst = generate_appendix_b(4, 2, 2, 8, seed).unwrap();
            let a = active_set_qp(&inst).unwrap();
            let r = dual_gradient_qp(&inst, 1_000_000, 1e-12).unwrap();
            assert!((a.j - r.solution.j).abs() <= 1e-6 * a.j, "seed {seed}: {} vs {}", a.j, r.solution.j);
        }
    }
}
