//! Gaussian message algebra for scalar and small dense messages.
//!
//! Messages are unnormalized quadratics: scale factors are never tracked
//! because every algorithm here only needs argmin/argmax locations and
//! curvatures. Two parameterizations are used, mean/covariance
//! ([`GaussianMV`]) and precision/ξ ([`GaussianWX`]), and they trade places
//! under dualization: a forward message `(m, V)` on `Z` becomes the message
//! `(W m, W)` on the dual variable `Z̃`, a backward one becomes `(-W m, W)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Gaussian message in mean/covariance form.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMV {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Gaussian message in precision/ξ form, `ξ = W m`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianWX {
    pub precision: DMatrix<f64>,
    pub xi: DVector<f64>,
}

/// Parameters of the dual marginal: `W̃ = (V→ + V←)⁻¹`, `ξ̃ = W̃ (m→ − m←)`.
///
/// The dual marginal itself has mean `ξ̃` and covariance `W̃`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualMarginal {
    pub w_tilde: DMatrix<f64>,
    pub xi_tilde: DVector<f64>,
}

impl GaussianMV {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::Dimension(format!(
                "mean has length {} but covariance is {}x{}",
                mean.len(),
                cov.nrows(),
                cov.ncols()
            )));
        }
        Ok(Self { mean, cov })
    }

    pub fn scalar(mean: f64, var: f64) -> Self {
        Self {
            mean: DVector::from_element(1, mean),
            cov: DMatrix::from_element(1, 1, var),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn to_wx(&self) -> Result<GaussianWX> {
        let precision = invert_symmetric(&self.cov)?;
        let xi = &precision * &self.mean;
        Ok(GaussianWX { precision, xi })
    }
}

impl GaussianWX {
    pub fn to_mv(&self) -> Result<GaussianMV> {
        let cov = invert_symmetric(&self.precision)?;
        let mean = &cov * &self.xi;
        Ok(GaussianMV { mean, cov })
    }
}

/// Scalar backward message on an output or input variable.
///
/// `MeanVar` with `var = +∞` is the uninformative message. `Precision`
/// covers the cases `MeanVar` cannot: zero precision with a nonzero linear
/// term, which is what a dual NUP message with `γ = +∞` turns into.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarMessage {
    MeanVar { mean: f64, var: f64 },
    Precision { w: f64, xi: f64 },
}

impl ScalarMessage {
    pub const UNINFORMATIVE: ScalarMessage = ScalarMessage::Precision { w: 0.0, xi: 0.0 };

    pub fn mean_var(mean: f64, var: f64) -> Self {
        ScalarMessage::MeanVar { mean, var }
    }

    pub fn precision(w: f64, xi: f64) -> Self {
        ScalarMessage::Precision { w, xi }
    }

    /// Precision-form parameters `(w, ξ)`; infinite for a zero-variance message.
    pub fn as_precision(&self) -> (f64, f64) {
        match *self {
            ScalarMessage::MeanVar { mean, var } => {
                if var.is_infinite() {
                    (0.0, 0.0)
                } else {
                    (1.0 / var, mean / var)
                }
            }
            ScalarMessage::Precision { w, xi } => (w, xi),
        }
    }

    pub fn is_uninformative(&self) -> bool {
        let (w, xi) = self.as_precision();
        w == 0.0 && xi == 0.0
    }

    fn is_finite(&self) -> bool {
        match *self {
            ScalarMessage::MeanVar { mean, var } => mean.is_finite() && !var.is_nan(),
            ScalarMessage::Precision { w, xi } => w.is_finite() && xi.is_finite(),
        }
    }
}

/// Row vector `c` of a scalar observation `y = c x`.
#[derive(Debug, Clone, Copy)]
pub enum Selector<'a> {
    /// `c = e_i`.
    Unit(usize),
    Dense(&'a DVector<f64>),
}

impl Selector<'_> {
    fn dot(&self, v: &DVector<f64>) -> f64 {
        match self {
            Selector::Unit(i) => v[*i],
            Selector::Dense(c) => c.dot(v),
        }
    }

    /// `V cᵀ` for symmetric `V`.
    fn cov_column(&self, cov: &DMatrix<f64>) -> DVector<f64> {
        match self {
            Selector::Unit(i) => cov.column(*i).into_owned(),
            Selector::Dense(c) => cov * *c,
        }
    }

    /// `x += c ᵀ s`.
    pub(crate) fn add_scaled_to(&self, x: &mut DVector<f64>, s: f64) {
        match self {
            Selector::Unit(i) => x[*i] += s,
            Selector::Dense(c) => x.axpy(s, c, 1.0),
        }
    }

    fn len_ok(&self, dim: usize) -> bool {
        match self {
            Selector::Unit(i) => *i < dim,
            Selector::Dense(c) => c.len() == dim,
        }
    }
}

/// What the forward sweep keeps per scalar observation: `V cᵀ`, `c m`, `c V cᵀ`.
///
/// This is all the backward sweep needs; the full covariance is not retained.
#[derive(Debug, Clone)]
pub struct ObservationRecord {
    pub cv: DVector<f64>,
    pub cm: f64,
    pub cvc: f64,
}

/// Predict step: `(A m_X + B m_U, A V_X Aᵀ + B V_U Bᵀ)`.
pub fn predict(x: &GaussianMV, a: &DMatrix<f64>, b: &DMatrix<f64>, u: &GaussianMV) -> Result<GaussianMV> {
    let (mean, mut cov) = predict_parts(&x.mean, &x.cov, a, b, &u.mean, &u.cov)?;
    tidy_covariance(&mut cov);
    Ok(GaussianMV { mean, cov })
}

pub(crate) fn predict_parts(
    mx: &DVector<f64>,
    vx: &DMatrix<f64>,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    mu: &DVector<f64>,
    vu: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if a.ncols() != mx.len() || b.ncols() != mu.len() || a.nrows() != b.nrows() {
        return Err(Error::Dimension(format!(
            "predict: A is {}x{}, B is {}x{}, state {}, input {}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols(),
            mx.len(),
            mu.len()
        )));
    }
    let mean = a * mx + b * mu;
    let cov = a * vx * a.transpose() + b * vu * b.transpose();
    Ok((mean, cov))
}

/// Scalar observation update of `x` with the backward message on `y = c x`.
///
/// `G = (V←_Y + c V cᵀ)⁻¹` is a scalar reciprocal; no matrix is inverted.
pub fn observe_scalar(x: &GaussianMV, c: &DVector<f64>, y_bwd: ScalarMessage) -> Result<GaussianMV> {
    let mut out = x.clone();
    observe_in_place(&mut out.mean, &mut out.cov, Selector::Dense(c), y_bwd)?;
    Ok(out)
}

/// In-place scalar observation update. Returns the pre-update record and the
/// number of negative variances clamped to zero.
pub(crate) fn observe_in_place(
    mean: &mut DVector<f64>,
    cov: &mut DMatrix<f64>,
    c: Selector<'_>,
    msg: ScalarMessage,
) -> Result<(ObservationRecord, usize)> {
    if !c.len_ok(mean.len()) {
        return Err(Error::Dimension(format!("observation row does not match state dimension {}", mean.len())));
    }
    let cv = c.cov_column(cov);
    let cm = c.dot(mean);
    let cvc = c.dot(&cv);
    let record = ObservationRecord { cv, cm, cvc };
    if !msg.is_finite() {
        return Err(Error::NonFinite { iteration: 0, context: format!("observation message {msg:?}") });
    }

    // gain: m += h * gain_mean, V -= h hᵀ * gain_cov
    let (gain_mean, gain_cov) = match msg {
        ScalarMessage::MeanVar { var, .. } if var.is_infinite() => return Ok((record, 0)),
        ScalarMessage::MeanVar { mean: m_bwd, var } => {
            let innovation = var + cvc;
            if !(innovation > 0.0) {
                return Err(Error::NonpositiveInnovation(innovation));
            }
            let g = 1.0 / innovation;
            (g * (m_bwd - cm), g)
        }
        ScalarMessage::Precision { w, xi } => {
            if w < 0.0 {
                return Err(Error::NonpositiveInnovation(w));
            }
            if w == 0.0 && xi == 0.0 {
                return Ok((record, 0));
            }
            let g = 1.0 / (1.0 + w * cvc);
            (g * (xi - w * cm), w * g)
        }
    };
    mean.axpy(gain_mean, &record.cv, 1.0);
    if gain_cov != 0.0 {
        cov.ger(-gain_cov, &record.cv, &record.cv, 1.0);
    }
    let clamped = tidy_covariance(cov);
    Ok((record, clamped))
}

/// Symmetrize `(V + Vᵀ)/2` and clamp negative diagonal entries to zero.
/// Returns how many entries were clamped.
pub(crate) fn tidy_covariance(cov: &mut DMatrix<f64>) -> usize {
    let n = cov.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let avg = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = avg;
            cov[(j, i)] = avg;
        }
    }
    let mut clamped = 0;
    for i in 0..n {
        if cov[(i, i)] < 0.0 {
            cov[(i, i)] = 0.0;
            clamped += 1;
        }
    }
    clamped
}

/// Inverse of a symmetric matrix, Cholesky first and LU as fallback.
pub(crate) fn invert_symmetric(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("cannot invert {}x{} matrix", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonInvertibleCovariance);
    }
    let mut inv = match m.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => {
            let lu = m.clone().full_piv_lu();
            let scale = m.amax().max(f64::MIN_POSITIVE);
            let pivot_min = (0..m.nrows()).map(|i| lu.u()[(i, i)].abs()).fold(f64::INFINITY, f64::min);
            if !(pivot_min > 1e-14 * scale) {
                return Err(Error::NonInvertibleCovariance);
            }
            lu.try_inverse().ok_or(Error::NonInvertibleCovariance)?
        }
    };
    tidy_covariance_no_clamp(&mut inv);
    Ok(inv)
}

fn tidy_covariance_no_clamp(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// `(m, V) ↦ (W m, W)` with `W = V⁻¹`.
pub fn dualize_forward(msg: &GaussianMV) -> Result<GaussianMV> {
    let w = invert_symmetric(&msg.cov)?;
    Ok(GaussianMV { mean: &w * &msg.mean, cov: w })
}

/// Inverse of [`dualize_forward`].
pub fn undualize_forward(dual: &GaussianMV) -> Result<GaussianMV> {
    let v = invert_symmetric(&dual.cov)?;
    Ok(GaussianMV { mean: &v * &dual.mean, cov: v })
}

/// `(m, V) ↦ (−W m, W)` with `W = V⁻¹`.
pub fn dualize_backward(msg: &GaussianMV) -> Result<GaussianMV> {
    let w = invert_symmetric(&msg.cov)?;
    Ok(GaussianMV { mean: -(&w * &msg.mean), cov: w })
}

/// Inverse of [`dualize_backward`].
pub fn undualize_backward(dual: &GaussianMV) -> Result<GaussianMV> {
    let v = invert_symmetric(&dual.cov)?;
    Ok(GaussianMV { mean: -(&v * &dual.mean), cov: v })
}

pub fn dual_marginal(fwd: &GaussianMV, bwd: &GaussianMV) -> Result<DualMarginal> {
    if fwd.dim() != bwd.dim() {
        return Err(Error::Dimension(format!("forward dim {} vs backward dim {}", fwd.dim(), bwd.dim())));
    }
    let sum = &fwd.cov + &bwd.cov;
    let w_tilde = invert_symmetric(&sum).map_err(|e| match e {
        Error::NonInvertibleCovariance => Error::DegenerateMarginal,
        other => other,
    })?;
    let xi_tilde = &w_tilde * (&fwd.mean - &bwd.mean);
    Ok(DualMarginal { w_tilde, xi_tilde })
}

/// Primal estimate from a dual decision, forward form: `ẑ = m→ − V→ ẑ̃`.
pub fn primal_from_dual(fwd: &GaussianMV, z_tilde_hat: &DVector<f64>) -> Result<DVector<f64>> {
    if fwd.dim() != z_tilde_hat.len() {
        return Err(Error::Dimension(format!("message dim {} vs dual dim {}", fwd.dim(), z_tilde_hat.len())));
    }
    Ok(&fwd.mean - &fwd.cov * z_tilde_hat)
}

/// Backward form of the same identity: `ẑ = m← + V← ẑ̃`.
pub fn primal_from_dual_backward(bwd: &GaussianMV, z_tilde_hat: &DVector<f64>) -> Result<DVector<f64>> {
    if bwd.dim() != z_tilde_hat.len() {
        return Err(Error::Dimension(format!("message dim {} vs dual dim {}", bwd.dim(), z_tilde_hat.len())));
    }
    Ok(&bwd.mean + &bwd.cov * z_tilde_hat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;
    use nalgebra::dvector;

    #[test]
    fn dualize_forward_examples() {
        let d = dualize_forward(&GaussianMV::scalar(0.0, 1.0)).unwrap();
        assert_eq!((d.mean[0], d.cov[(0, 0)]), (0.0, 1.0));
        let d = dualize_forward(&GaussianMV::scalar(2.0, 0.5)).unwrap();
        assert_relative_eq!(d.mean[0], 4.0, epsilon = 1e-15);
        assert_relative_eq!(d.cov[(0, 0)], 2.0, epsilon = 1e-15);
        let g = GaussianMV::new(dvector![1.0, 0.0], DMatrix::identity(2, 2)).unwrap();
        let d = dualize_forward(&g).unwrap();
        assert_eq!(d, g);
    }

    #[test]
    fn dualize_backward_examples() {
        let d = dualize_backward(&GaussianMV::scalar(0.0, 1.0)).unwrap();
        assert_eq!(d.cov[(0, 0)], 1.0);
        assert_eq!(d.mean[0].abs(), 0.0);
        let d = dualize_backward(&GaussianMV::scalar(3.0, 2.0)).unwrap();
        assert_relative_eq!(d.mean[0], -1.5, epsilon = 1e-15);
        assert_relative_eq!(d.cov[(0, 0)], 0.5, epsilon = 1e-15);
        let d = dualize_backward(&GaussianMV::scalar(-1.0, 4.0)).unwrap();
        assert_relative_eq!(d.mean[0], 0.25, epsilon = 1e-15);
        assert_relative_eq!(d.cov[(0, 0)], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn singular_covariance_is_rejected() {
        let g = GaussianMV::new(dvector![1.0, 2.0], dmatrix![1.0, 1.0; 1.0, 1.0]).unwrap();
        assert!(matches!(dualize_forward(&g), Err(Error::NonInvertibleCovariance)));
        assert!(matches!(dualize_backward(&g), Err(Error::NonInvertibleCovariance)));
    }

    #[test]
    fn dual_marginal_examples() {
        let one = |m| GaussianMV::scalar(m, 1.0);
        let dm = dual_marginal(&one(1.0), &one(1.0)).unwrap();
        assert_relative_eq!(dm.w_tilde[(0, 0)], 0.5, epsilon = 1e-15);
        assert_eq!(dm.xi_tilde[0], 0.0);
        let dm = dual_marginal(&one(1.0), &one(3.0)).unwrap();
        assert_relative_eq!(dm.w_tilde[(0, 0)], 0.5, epsilon = 1e-15);
        assert_relative_eq!(dm.xi_tilde[0], -1.0, epsilon = 1e-15);
        let dm = dual_marginal(&GaussianMV::scalar(2.0, 3.0), &GaussianMV::scalar(0.0, 1.0)).unwrap();
        assert_relative_eq!(dm.w_tilde[(0, 0)], 0.25);
        assert_relative_eq!(dm.xi_tilde[0], 0.5);
    }

    #[test]
    fn degenerate_marginal() {
        let err = dual_marginal(&GaussianMV::scalar(0.0, 0.0), &GaussianMV::scalar(1.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::DegenerateMarginal));
    }

    #[test]
    fn primal_recovery_examples() {
        let fwd = GaussianMV::scalar(2.0, 1.0);
        assert_eq!(primal_from_dual(&fwd, &dvector![0.0]).unwrap()[0], 2.0);
        assert_eq!(primal_from_dual(&fwd, &dvector![0.5]).unwrap()[0], 1.5);
        let bwd = GaussianMV::scalar(1.0, 1.0);
        assert_eq!(primal_from_dual_backward(&bwd, &dvector![0.5]).unwrap()[0], 1.5);
        assert!(primal_from_dual(&fwd, &dvector![0.0, 1.0]).is_err());
    }

    #[test]
    fn predict_examples() {
        let p = predict(
            &GaussianMV::scalar(1.0, 1.0),
            &dmatrix![2.0],
            &dmatrix![1.0],
            &GaussianMV::scalar(0.0, 1.0),
        )
        .unwrap();
        assert_eq!((p.mean[0], p.cov[(0, 0)]), (2.0, 5.0));

        let x = GaussianMV::new(dvector![1.0, -2.0], dmatrix![2.0, 0.3; 0.3, 1.0]).unwrap();
        let u = GaussianMV::new(dvector![5.0, 5.0], DMatrix::identity(2, 2)).unwrap();
        let p = predict(&x, &DMatrix::identity(2, 2), &DMatrix::zeros(2, 2), &u).unwrap();
        assert_eq!(p, x);

        let x = GaussianMV::new(dvector![0.0, 0.0], DMatrix::identity(2, 2)).unwrap();
        let u = GaussianMV::new(dvector![1.0, 1.0], DMatrix::identity(2, 2)).unwrap();
        let p = predict(&x, &DMatrix::zeros(2, 2), &DMatrix::identity(2, 2), &u).unwrap();
        assert_eq!(p.mean, dvector![1.0, 1.0]);
        assert_eq!(p.cov, DMatrix::identity(2, 2));

        assert!(predict(&x, &DMatrix::zeros(3, 3), &DMatrix::identity(2, 2), &u).is_err());
    }

    #[test]
    fn observe_scalar_examples() {
        let x = GaussianMV::scalar(0.0, 1.0);
        let c = dvector![1.0];
        let post = observe_scalar(&x, &c, ScalarMessage::mean_var(2.0, 1.0)).unwrap();
        assert_eq!((post.mean[0], post.cov[(0, 0)]), (1.0, 0.5));

        let post = observe_scalar(&x, &c, ScalarMessage::mean_var(7.0, f64::INFINITY)).unwrap();
        assert_eq!(post, x);

        let post = observe_scalar(&x, &c, ScalarMessage::mean_var(2.0, 0.0)).unwrap();
        assert_eq!((post.mean[0], post.cov[(0, 0)]), (2.0, 0.0));

        let exact = GaussianMV::scalar(0.0, 0.0);
        let err = observe_scalar(&exact, &c, ScalarMessage::mean_var(2.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::NonpositiveInnovation(_)));
    }

    #[test]
    fn precision_form_matches_mean_var_form() {
        let x = GaussianMV::new(dvector![0.5, -1.0], dmatrix![2.0, 0.4; 0.4, 1.5]).unwrap();
        let c = dvector![1.0, -2.0];
        let a = observe_scalar(&x, &c, ScalarMessage::mean_var(0.3, 0.7)).unwrap();
        let b = observe_scalar(&x, &c, ScalarMessage::precision(1.0 / 0.7, 0.3 / 0.7)).unwrap();
        assert_relative_eq!(a.mean, b.mean, epsilon = 1e-13);
        assert_relative_eq!(a.cov, b.cov, epsilon = 1e-13);
    }

    #[test]
    fn zero_precision_linear_term_shifts_mean_only() {
        let x = GaussianMV::new(dvector![0.0, 0.0], dmatrix![2.0, 1.0; 1.0, 3.0]).unwrap();
        let c = dvector![1.0, 0.0];
        let post = observe_scalar(&x, &c, ScalarMessage::precision(0.0, 0.5)).unwrap();
        assert_eq!(post.cov, x.cov);
        assert_relative_eq!(post.mean, dvector![1.0, 0.5], epsilon = 1e-15);
    }
}
