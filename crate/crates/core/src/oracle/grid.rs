use crate::error::{Error, Result};

/// Grid point `lo + i·step` (up to `hi`) minimizing `f`; the first one on ties.
/// Non-finite values are skipped.
pub fn scalar_grid_argmin(f: impl Fn(f64) -> f64, lo: f64, hi: f64, step: f64) -> Result<f64> {
    let count = grid_len(lo, hi, step)?;
    let mut best: Option<(f64, f64)> = None;
    for i in 0..count {
        let z = lo + i as f64 * step;
        let v = f(z);
        if v.is_finite() && best.is_none_or(|(_, bv)| v < bv) {
            best = Some((z, v));
        }
    }
    best.map(|(z, _)| z).ok_or(Error::EmptyGrid)
}

/// `max_i f(lo + i·step)` over the finite values.
pub fn scalar_grid_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, step: f64) -> Result<f64> {
    let count = grid_len(lo, hi, step)?;
    let best = (0..count).map(|i| f(lo + i as f64 * step)).filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if best == f64::NEG_INFINITY {
        Err(Error::EmptyGrid)
    } else {
        Ok(best)
    }
}

fn grid_len(lo: f64, hi: f64, step: f64) -> Result<usize> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidGrid(format!("need finite lo < hi, got [{lo}, {hi}]")));
    }
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidGrid(format!("step must be positive, got {step}")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() + 1.0;
    if n > 1e9 {
        return Err(Error::InvalidGrid(format!("{n} grid points")));
    }
    Ok(n as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_minimum() {
        let z = scalar_grid_argmin(|z| (z - 1.0).powi(2) / 2.0, -5.0, 5.0, 1e-3).unwrap();
        assert!((z - 1.0).abs() <= 1e-3);
    }

    #[test]
    fn half_space_deciding_objective() {
        // (z̃ − 2)²/2 + κ̆(z̃) for z ≤ 1 with γ = 3
        let proxy = |z: f64| if z < 0.0 { (1.0 - 3.0) * z } else { z };
        let z = scalar_grid_argmin(|z| (z - 2.0).powi(2) / 2.0 + proxy(z), -5.0, 5.0, 1e-3).unwrap();
        assert!((z - 1.0).abs() <= 1e-3);
    }

    #[test]
    fn l1_conjugate_by_grid_sup() {
        let s = scalar_grid_max(|z| 0.5 * z - z.abs(), -50.0, 50.0, 1e-3).unwrap();
        assert!(s.abs() <= 2e-3);
    }

    #[test]
    fn errors() {
        assert!(matches!(scalar_grid_argmin(|_| f64::INFINITY, 0.0, 1.0, 0.1), Err(Error::EmptyGrid)));
        assert!(matches!(scalar_grid_argmin(|z| z, 1.0, 0.0, 0.1), Err(Error::InvalidGrid(_))));
        assert!(matches!(scalar_grid_argmin(|z| z, 0.0, 1.0, 0.0), Err(Error::InvalidGrid(_))));
        assert_eq!(scalar_grid_argmin(|z| if z < 0.5 { f64::NAN } else { z }, 0.0, 1.0, 0.25).unwrap(), 0.5);
    }
}
