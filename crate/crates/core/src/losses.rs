//! Scalar convex losses: primal value, conjugate, γ-proxy of the conjugate,
//! dual and primal NUP parameter updates, and the closed-form decisions.
//!
//! Every kind reduces to one of four shapes. The one-sided shapes carry a
//! slope `β` that may be `+∞`, in which case the loss is a half-space
//! indicator. The two-sided box shape has slope `2β` on each side.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to every `|·|` factor of the dual NUP update.
pub const DEFAULT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    L1,
    HingeI,
    #[serde(rename = "hinge_ii")]
    HingeII,
    Vapnik,
    HalfSpaceGeq,
    HalfSpaceLeq,
    Interval,
}

impl LossKind {
    pub const ALL: [LossKind; 7] = [
        LossKind::L1,
        LossKind::HingeI,
        LossKind::HingeII,
        LossKind::Vapnik,
        LossKind::HalfSpaceGeq,
        LossKind::HalfSpaceLeq,
        LossKind::Interval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::L1 => "l1",
            LossKind::HingeI => "hinge_i",
            LossKind::HingeII => "hinge_ii",
            LossKind::Vapnik => "vapnik",
            LossKind::HalfSpaceGeq => "half_space_geq",
            LossKind::HalfSpaceLeq => "half_space_leq",
            LossKind::Interval => "interval",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Indicator kinds: `+∞` outside a feasible set, zero inside.
    pub fn is_hard(self) -> bool {
        matches!(self, LossKind::HalfSpaceGeq | LossKind::HalfSpaceLeq | LossKind::Interval)
    }

    pub fn uses_a(self) -> bool {
        !matches!(self, LossKind::HingeII | LossKind::HalfSpaceLeq)
    }

    pub fn uses_b(self) -> bool {
        !matches!(self, LossKind::L1 | LossKind::HingeI | LossKind::HalfSpaceGeq)
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Scalar loss. Anchors the kind does not use are stored as zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarLoss {
    kind: LossKind,
    a: f64,
    b: f64,
    beta: f64,
}

/// Internal normal form. `slope` is the magnitude of the outer slopes.
#[derive(Debug, Clone, Copy)]
enum Shape {
    L1 { a: f64, slope: f64 },
    Lower { a: f64, slope: f64 },
    Upper { b: f64, slope: f64 },
    Box { a: f64, b: f64, slope: f64 },
}

impl ScalarLoss {
    pub fn new(kind: LossKind, a: f64, b: f64, beta: f64) -> Result<Self> {
        let (a, b, beta) = match kind {
            LossKind::HalfSpaceGeq | LossKind::HalfSpaceLeq | LossKind::Interval => (a, b, f64::INFINITY),
            _ => (a, b, beta),
        };
        let a = if kind.uses_a() { a } else { 0.0 };
        let b = if kind.uses_b() { b } else { 0.0 };
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidLoss(format!("{kind}: anchors must be finite (a={a}, b={b})")));
        }
        if beta.is_nan() || beta <= 0.0 {
            return Err(Error::InvalidLoss(format!("{kind}: slope must be positive (beta={beta})")));
        }
        if kind == LossKind::L1 && beta.is_infinite() {
            return Err(Error::InvalidLoss("l1: slope must be finite".into()));
        }
        if matches!(kind, LossKind::Vapnik | LossKind::Interval) && a > b {
            return Err(Error::InvalidLoss(format!("{kind}: requires a <= b (a={a}, b={b})")));
        }
        Ok(Self { kind, a, b, beta })
    }

    pub fn l1(a: f64, beta: f64) -> Result<Self> {
        Self::new(LossKind::L1, a, 0.0, beta)
    }
    pub fn hinge_i(a: f64, beta: f64) -> Result<Self> {
        Self::new(LossKind::HingeI, a, 0.0, beta)
    }
    pub fn hinge_ii(b: f64, beta: f64) -> Result<Self> {
        Self::new(LossKind::HingeII, 0.0, b, beta)
    }
    pub fn vapnik(a: f64, b: f64, beta: f64) -> Result<Self> {
        Self::new(LossKind::Vapnik, a, b, beta)
    }
    /// `z ≥ a`.
    pub fn geq(a: f64) -> Result<Self> {
        Self::new(LossKind::HalfSpaceGeq, a, 0.0, f64::INFINITY)
    }
    /// `z ≤ b`.
    pub fn leq(b: f64) -> Result<Self> {
        Self::new(LossKind::HalfSpaceLeq, 0.0, b, f64::INFINITY)
    }
    /// `a ≤ z ≤ b`.
    pub fn interval(a: f64, b: f64) -> Result<Self> {
        Self::new(LossKind::Interval, a, b, f64::INFINITY)
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }
    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }

    fn shape(&self) -> Shape {
        match self.kind {
            LossKind::L1 => Shape::L1 { a: self.a, slope: self.beta },
            LossKind::HingeI | LossKind::HalfSpaceGeq => Shape::Lower { a: self.a, slope: self.beta },
            LossKind::HingeII | LossKind::HalfSpaceLeq => Shape::Upper { b: self.b, slope: self.beta },
            LossKind::Vapnik | LossKind::Interval => Shape::Box { a: self.a, b: self.b, slope: 2.0 * self.beta },
        }
    }

    /// True when the conjugate domain and all decisions ignore `γ` except
    /// through the NUP curvature: the box with infinite slope.
    pub fn is_box_limit(&self) -> bool {
        matches!(self.kind, LossKind::Vapnik | LossKind::Interval) && self.beta.is_infinite()
    }

    /// Finite-slope stand-in used by primal-side solvers: indicators become
    /// hinges of slope `beta` on each violated side.
    pub fn hinge_surrogate(&self, beta: f64) -> Result<Self> {
        match self.kind {
            LossKind::HalfSpaceGeq => Self::hinge_i(self.a, beta),
            LossKind::HalfSpaceLeq => Self::hinge_ii(self.b, beta),
            LossKind::Interval => Self::vapnik(self.a, self.b, 0.5 * beta),
            _ if self.beta.is_infinite() => Self::new(self.kind, self.a, self.b, beta),
            _ => Ok(*self),
        }
    }

    /// Closed interval on which the conjugate is finite.
    pub fn dual_domain(&self) -> (f64, f64) {
        match self.shape() {
            Shape::L1 { slope, .. } => (-slope, slope),
            Shape::Lower { slope, .. } => (-slope, 0.0),
            Shape::Upper { slope, .. } => (0.0, slope),
            Shape::Box { slope, .. } => (-slope, slope),
        }
    }

    /// Breakpoints of the conjugate, i.e. points where the γ-proxy is not
    /// differentiable. Infinite entries are omitted.
    pub fn dual_kinks(&self) -> Vec<f64> {
        let (lo, hi) = self.dual_domain();
        let mut k: Vec<f64> = [lo, hi].into_iter().filter(|v| v.is_finite()).collect();
        if matches!(self.shape(), Shape::Box { .. }) {
            k.push(0.0);
        }
        k.sort_by(f64::total_cmp);
        k.dedup();
        k
    }

    /// Slope of the piece of the conjugate that is active at `z̃`, extended
    /// linearly past the domain edges.
    fn inner_slope(&self, zt: f64) -> f64 {
        match self.shape() {
            Shape::L1 { a, .. } | Shape::Lower { a, .. } => a,
            Shape::Upper { b, .. } => b,
            Shape::Box { a, b, .. } => {
                if zt <= 0.0 {
                    a
                } else {
                    b
                }
            }
        }
    }

    pub fn primal_eval(&self, z: f64) -> f64 {
        let hinge = |excess: f64, slope: f64| {
            if excess > 0.0 {
                slope * excess
            } else {
                0.0
            }
        };
        match self.shape() {
            Shape::L1 { a, slope } => slope * (z - a).abs(),
            Shape::Lower { a, slope } => hinge(a - z, slope),
            Shape::Upper { b, slope } => hinge(z - b, slope),
            Shape::Box { a, b, slope } => hinge(a - z, slope) + hinge(z - b, slope),
        }
    }

    pub fn conjugate_eval(&self, zt: f64) -> f64 {
        let (lo, hi) = self.dual_domain();
        if zt < lo || zt > hi {
            f64::INFINITY
        } else {
            self.inner_slope(zt) * zt
        }
    }

    /// `κ̆(z̃) = κ*` on the dual domain, continued with slope steepened by `γ`.
    pub fn proxy_eval(&self, zt: f64, gamma: f64) -> f64 {
        let (lo, hi) = self.dual_domain();
        let dist = if zt < lo {
            lo - zt
        } else if zt > hi {
            zt - hi
        } else {
            0.0
        };
        let base = self.inner_slope(zt) * zt;
        if dist == 0.0 {
            base
        } else {
            base + gamma * dist
        }
    }

    /// Derivative of `κ̆` away from its kinks.
    pub fn proxy_slope(&self, zt: f64, gamma: f64) -> f64 {
        let (lo, hi) = self.dual_domain();
        let s = self.inner_slope(zt);
        if zt < lo {
            s - gamma
        } else if zt > hi {
            s + gamma
        } else {
            s
        }
    }

    /// Dual NUP parameters `(m̃←, Ṽ←)` whose quadratic is tangent to `κ̆` at `z̃`.
    ///
    /// All `|·|` factors are floored at `floor`. With `γ = +∞` the variance is
    /// zero and the message is pure linear term; callers keep it in precision form.
    pub fn dual_nup_update(&self, zt: f64, gamma: f64, floor: f64) -> (f64, f64) {
        let fl = |v: f64| v.abs().max(floor);
        // one-sided hinge with the flat side toward the dual origin:
        // `s = |z̃|`, `t = |z̃ ∓ slope|`; `sign` is +1 for upper, -1 for lower
        let hinge = |anchor: f64, slope: f64, sign: f64| -> (f64, f64) {
            let s = fl(zt);
            let (h, r) = if slope.is_infinite() {
                (s, 1.0)
            } else {
                let t = fl(zt - sign * slope);
                (s * t / (s + t), slope / (s + t))
            };
            if gamma.is_infinite() {
                (sign * r * s, 0.0)
            } else {
                (-2.0 * anchor * h / gamma + sign * r * s, 2.0 * h / gamma)
            }
        };
        match self.shape() {
            Shape::L1 { a, slope } => {
                let p = fl(zt + slope);
                let q = fl(zt - slope);
                let hm = p * q / (p + q);
                let lin = -slope * (q - p) / (p + q);
                if gamma.is_infinite() {
                    (lin, 0.0)
                } else {
                    (-2.0 * a * hm / gamma + lin, 2.0 * hm / gamma)
                }
            }
            Shape::Lower { a, slope } => hinge(a, slope, -1.0),
            Shape::Upper { b, slope } => hinge(b, slope, 1.0),
            Shape::Box { a, b, slope } => {
                if zt <= 0.0 {
                    hinge(a, slope, -1.0)
                } else {
                    hinge(b, slope, 1.0)
                }
            }
        }
    }

    /// `argmin_z̃ (z̃ − m̃→)²/(2Ṽ→) + κ̆(z̃)`.
    pub fn dual_decide(&self, m: f64, v: f64, gamma: f64) -> f64 {
        match self.shape() {
            Shape::L1 { a, slope } => {
                if m < (a - gamma) * v - slope {
                    m - (a - gamma) * v
                } else if m < a * v - slope {
                    -slope
                } else if m < a * v + slope {
                    m - a * v
                } else if m < (a + gamma) * v + slope {
                    slope
                } else {
                    m - (a + gamma) * v
                }
            }
            Shape::Lower { a, slope } => {
                if gamma.is_finite() && slope.is_finite() && m < (a - gamma) * v - slope {
                    m - (a - gamma) * v
                } else if slope.is_finite() && m < a * v - slope {
                    -slope
                } else if m < a * v {
                    m - a * v
                } else if gamma.is_infinite() || m < (a + gamma) * v {
                    0.0
                } else {
                    m - (a + gamma) * v
                }
            }
            Shape::Upper { b, slope } => {
                if gamma.is_finite() && m < (b - gamma) * v {
                    m - (b - gamma) * v
                } else if m < b * v {
                    0.0
                } else if slope.is_infinite() || m < b * v + slope {
                    m - b * v
                } else if gamma.is_infinite() || m < (b + gamma) * v + slope {
                    slope
                } else {
                    m - (b + gamma) * v
                }
            }
            Shape::Box { a, b, slope } => {
                let finite = slope.is_finite();
                if finite && gamma.is_finite() && m < (a - gamma) * v - slope {
                    m - (a - gamma) * v
                } else if finite && m < a * v - slope {
                    -slope
                } else if m < a * v {
                    m - a * v
                } else if m <= b * v {
                    0.0
                } else if !finite || m < b * v + slope {
                    m - b * v
                } else if gamma.is_infinite() || m < (b + gamma) * v + slope {
                    slope
                } else {
                    m - (b + gamma) * v
                }
            }
        }
    }

    /// Smallest `γ` for which [`Self::dual_decide`] lands in the dual domain.
    ///
    /// For the infinite-slope box any `γ` in `[(b−a)/2, b−a]` is admissible;
    /// the lower end is returned, floored at `floor`. Elsewhere a value `≤ 0`
    /// means every `γ > 0` is admissible.
    pub fn gamma_min(&self, m: f64, v: f64, floor: f64) -> f64 {
        if self.is_box_limit() {
            return (0.5 * (self.b - self.a)).max(floor);
        }
        let r = m / v;
        match self.shape() {
            Shape::L1 { a, slope } => (a - (m + slope) / v).max((m - slope) / v - a),
            Shape::Lower { a, slope } => {
                let low = if slope.is_infinite() { f64::NEG_INFINITY } else { a - (m + slope) / v };
                low.max(r - a)
            }
            Shape::Upper { b, slope } => {
                let high = if slope.is_infinite() { f64::NEG_INFINITY } else { (m - slope) / v - b };
                (b - r).max(high)
            }
            Shape::Box { a, b, slope } => (a - (m + slope) / v).max((m - slope) / v - b),
        }
    }

    /// Primal NUP parameters `(m←, V←)` at the current estimate `z`.
    ///
    /// `V← = 0` signals the estimate sits on a kink; the caller decides how
    /// to floor it.
    pub fn primal_nup_update(&self, z: f64) -> Result<(f64, f64)> {
        let lower = |a: f64, slope: f64| {
            let m = if z >= a { z } else { 2.0 * a - z };
            (m, 2.0 * (z - a).abs() / slope)
        };
        let upper = |b: f64, slope: f64| {
            let m = if z <= b { z } else { 2.0 * b - z };
            (m, 2.0 * (z - b).abs() / slope)
        };
        if self.beta.is_infinite() {
            return Err(Error::UnsupportedLoss { kind: self.kind.name(), context: "primal NUP update (infinite slope)" });
        }
        match self.shape() {
            Shape::L1 { .. } => Err(Error::UnsupportedLoss { kind: "l1", context: "primal NUP update" }),
            Shape::Lower { a, slope } => Ok(lower(a, slope)),
            Shape::Upper { b, slope } => Ok(upper(b, slope)),
            Shape::Box { a, b, slope } => {
                let (m1, v1) = lower(a, slope);
                let (m2, v2) = upper(b, slope);
                if v1 == 0.0 {
                    Ok((m1, 0.0))
                } else if v2 == 0.0 {
                    Ok((m2, 0.0))
                } else {
                    let w = 1.0 / v1 + 1.0 / v2;
                    Ok(((m1 / v1 + m2 / v2) / w, 1.0 / w))
                }
            }
        }
    }

    /// `argmin_z (z − m)²/(2V) + κ(z)`.
    pub fn primal_prox(&self, m: f64, v: f64) -> f64 {
        match self.shape() {
            Shape::L1 { a, slope } => {
                let d = m - a;
                if d > slope * v {
                    m - slope * v
                } else if d < -slope * v {
                    m + slope * v
                } else {
                    a
                }
            }
            Shape::Lower { a, slope } => {
                if m >= a {
                    m
                } else if slope.is_finite() && m < a - slope * v {
                    m + slope * v
                } else {
                    a
                }
            }
            Shape::Upper { b, slope } => {
                if m <= b {
                    m
                } else if slope.is_finite() && m > b + slope * v {
                    m - slope * v
                } else {
                    b
                }
            }
            Shape::Box { a, b, slope } => {
                if m < a {
                    if slope.is_finite() && m < a - slope * v {
                        m + slope * v
                    } else {
                        a
                    }
                } else if m > b {
                    if slope.is_finite() && m > b + slope * v {
                        m - slope * v
                    } else {
                        b
                    }
                } else {
                    m
                }
            }
        }
    }

    /// Amount by which `z` leaves the feasible set of an indicator kind; zero
    /// for soft kinds.
    pub fn violation(&self, z: f64) -> f64 {
        if !self.kind.is_hard() {
            return 0.0;
        }
        match self.shape() {
            Shape::Lower { a, .. } => (a - z).max(0.0),
            Shape::Upper { b, .. } => (z - b).max(0.0),
            Shape::Box { a, b, .. } => (a - z).max(z - b).max(0.0),
            Shape::L1 { .. } => 0.0,
        }
    }
}

/// Per-factor state of the dual NUP representation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualNupState {
    pub gamma: f64,
    pub m_bwd: f64,
    pub v_bwd: f64,
}

impl DualNupState {
    pub fn new(gamma: f64) -> Self {
        Self { gamma, m_bwd: 0.0, v_bwd: f64::INFINITY }
    }

    /// Escalate `γ`, decide `z̃`, refresh the backward dual message and return
    /// the decision. `γ` never decreases.
    pub fn decide_and_update(&mut self, loss: &ScalarLoss, m_fwd: f64, v_fwd: f64, floor: f64) -> f64 {
        let gmin = loss.gamma_min(m_fwd, v_fwd, floor);
        if gmin > self.gamma {
            self.gamma = gmin;
        }
        let (lo, hi) = loss.dual_domain();
        let zt = loss.dual_decide(m_fwd, v_fwd, self.gamma).clamp(lo, hi);
        let (m, v) = loss.dual_nup_update(zt, self.gamma, floor);
        self.m_bwd = m;
        self.v_bwd = v;
        zt
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::scalar_grid_argmin;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const INF: f64 = f64::INFINITY;

    #[test]
    fn primal_eval_examples() {
        let h = ScalarLoss::hinge_ii(1.0, 2.0).unwrap();
        assert_eq!(h.primal_eval(3.0), 4.0);
        assert_eq!(h.primal_eval(0.0), 0.0);
        assert_eq!(ScalarLoss::leq(1.0).unwrap().primal_eval(2.0), INF);
        assert_eq!(ScalarLoss::leq(1.0).unwrap().primal_eval(1.0), 0.0);
    }

    #[test]
    fn conjugate_eval_examples() {
        let l = ScalarLoss::leq(1.0).unwrap();
        assert_eq!(l.conjugate_eval(2.0), 2.0);
        assert_eq!(l.conjugate_eval(-1.0), INF);
        assert_eq!(ScalarLoss::l1(0.0, 1.0).unwrap().conjugate_eval(0.5), 0.0);
        let itv = ScalarLoss::interval(-1.0, 3.0).unwrap();
        assert_eq!(itv.conjugate_eval(2.0), 6.0);
        assert_eq!(itv.conjugate_eval(-2.0), 2.0);
    }

    #[test]
    fn proxy_eval_examples() {
        let l = ScalarLoss::leq(1.0).unwrap();
        assert_eq!(l.proxy_eval(-2.0, 3.0), 4.0);
        assert_eq!(l.proxy_eval(0.0, 3.0), 0.0);
        assert_eq!(l.proxy_eval(2.0, 3.0), 2.0);
        let l1 = ScalarLoss::l1(0.5, 1.0).unwrap();
        assert_relative_eq!(l1.proxy_eval(2.0, 3.0), (0.5 + 3.0) * 2.0 - 3.0);
        assert_relative_eq!(l1.proxy_eval(-2.0, 3.0), (0.5 - 3.0) * -2.0 - 3.0);
    }

    #[test]
    fn dual_nup_update_examples() {
        let l = ScalarLoss::leq(1.0).unwrap();
        let (m, v) = l.dual_nup_update(1.0, 4.0, DEFAULT_FLOOR);
        assert_relative_eq!(m, 0.5, epsilon = 1e-15);
        assert_relative_eq!(v, 0.5, epsilon = 1e-15);
        let (_, v) = l.dual_nup_update(0.0, 4.0, DEFAULT_FLOOR);
        assert_relative_eq!(v, 2.0 * DEFAULT_FLOOR / 4.0);
        assert!(v > 0.0);
        let vap = ScalarLoss::vapnik(-1.0, 1.0, INF).unwrap();
        let (m, v) = vap.dual_nup_update(1.0, 4.0, DEFAULT_FLOOR);
        assert_relative_eq!(m, 0.5, epsilon = 1e-15);
        assert_relative_eq!(v, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn dual_decide_examples() {
        let l = ScalarLoss::leq(1.0).unwrap();
        assert_eq!(l.dual_decide(0.0, 1.0, 3.0), 0.0);
        assert_eq!(l.dual_decide(2.0, 1.0, 3.0), 1.0);
        let zt = l.dual_decide(-3.0, 1.0, 3.0);
        assert_eq!(zt, -1.0);
        assert!(zt < 0.0);
    }

    #[test]
    fn gamma_min_examples() {
        let l = ScalarLoss::leq(1.0).unwrap();
        let g = l.gamma_min(-3.0, 1.0, DEFAULT_FLOOR);
        assert_eq!(g, 4.0);
        assert_eq!(l.dual_decide(-3.0, 1.0, g), 0.0);
        assert_eq!(ScalarLoss::interval(0.0, 2.0).unwrap().gamma_min(5.0, 1.0, DEFAULT_FLOOR), 1.0);
        assert_eq!(ScalarLoss::geq(0.0).unwrap().gamma_min(2.0, 1.0, DEFAULT_FLOOR), 2.0);
    }

    #[test]
    fn primal_nup_update_examples() {
        let h = ScalarLoss::hinge_ii(1.0, 2.0).unwrap();
        assert_eq!(h.primal_nup_update(3.0).unwrap(), (-1.0, 2.0));
        assert_eq!(h.primal_nup_update(0.0).unwrap(), (0.0, 1.0));
        assert_eq!(h.primal_nup_update(1.0).unwrap(), (1.0, 0.0));
        assert!(matches!(
            ScalarLoss::l1(0.0, 1.0).unwrap().primal_nup_update(0.3),
            Err(Error::UnsupportedLoss { .. })
        ));
        assert!(ScalarLoss::leq(1.0).unwrap().primal_nup_update(0.3).is_err());
    }

    #[test]
    fn primal_prox_examples() {
        assert_eq!(ScalarLoss::leq(1.0).unwrap().primal_prox(2.0, 1.0), 1.0);
        let h = ScalarLoss::hinge_ii(1.0, 0.5).unwrap();
        assert_eq!(h.primal_prox(2.0, 1.0), 1.5);
        assert_eq!(h.primal_prox(1.2, 1.0), 1.0);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(ScalarLoss::hinge_i(0.0, 0.0).is_err());
        assert!(ScalarLoss::hinge_i(0.0, -1.0).is_err());
        assert!(ScalarLoss::l1(0.0, INF).is_err());
        assert!(ScalarLoss::interval(2.0, 1.0).is_err());
        assert!(ScalarLoss::vapnik(0.0, f64::NAN, 1.0).is_err());
        assert_eq!(ScalarLoss::interval(1.0, 1.0).unwrap().b(), 1.0);
    }

    #[test]
    fn surrogates() {
        let s = ScalarLoss::interval(-1.0, 2.0).unwrap().hinge_surrogate(100.0).unwrap();
        assert_eq!(s.kind(), LossKind::Vapnik);
        assert_eq!(s.primal_eval(3.0), 100.0);
        assert_eq!(s.primal_eval(-2.0), 100.0);
        let s = ScalarLoss::geq(1.0).unwrap().hinge_surrogate(10.0).unwrap();
        assert_eq!((s.kind(), s.primal_eval(0.0)), (LossKind::HingeI, 10.0));
    }

    #[test]
    fn kind_names_round_trip() {
        for k in LossKind::ALL {
            assert_eq!(LossKind::from_name(k.name()), Some(k));
            assert_eq!(serde_json::to_string(&k).unwrap(), format!("\"{}\"", k.name()));
        }
    }

    #[test]
    fn state_escalation_never_decreases_gamma() {
        let l = ScalarLoss::leq(1.0).unwrap();
        let mut st = DualNupState::new(1.0);
        let zt = st.decide_and_update(&l, -3.0, 1.0, DEFAULT_FLOOR);
        assert_eq!((zt, st.gamma), (0.0, 4.0));
        st.decide_and_update(&l, 5.0, 1.0, DEFAULT_FLOOR);
        assert_eq!(st.gamma, 4.0);
    }

    fn any_loss() -> impl Strategy<Value = ScalarLoss> {
        (0usize..7, -3.0..3.0f64, 0.0..3.0f64, 0.2..4.0f64).prop_map(|(k, a, w, beta)| {
            ScalarLoss::new(LossKind::ALL[k], a, a + w, beta).unwrap()
        })
    }

    proptest! {
        #[test]
        fn tangency(loss in any_loss(), zt in -10.0..10.0f64, g in 0.1..20.0f64) {
            let near_kink = loss.dual_kinks().iter().any(|k| (zt - k).abs() < 1e-3);
            prop_assume!(!near_kink);
            let gamma = loss.gamma_min(0.0, 1.0, DEFAULT_FLOOR).max(0.0) + g;
            let (m, v) = loss.dual_nup_update(zt, gamma, DEFAULT_FLOOR);
            let slope = loss.proxy_slope(zt, gamma);
            prop_assert!(v > 0.0);
            prop_assert!(((zt - m) / v - slope).abs() <= 1e-9 * (1.0 + slope.abs()));
        }

        #[test]
        fn decide_matches_grid(loss in any_loss(), m in -6.0..6.0f64, v in 0.2..3.0f64, gamma in 0.1..6.0f64) {
            let obj = |z: f64| (z - m).powi(2) / (2.0 * v) + loss.proxy_eval(z, gamma);
            let grid = scalar_grid_argmin(obj, -40.0, 40.0, 1e-3).unwrap();
            let z = loss.dual_decide(m, v, gamma);
            prop_assert!(obj(z) <= obj(grid) + 1e-9);
            prop_assert!((z - grid).abs() <= 2e-3);
        }

        #[test]
        fn prox_matches_grid(loss in any_loss(), m in -6.0..6.0f64, v in 0.2..3.0f64) {
            let obj = |z: f64| (z - m).powi(2) / (2.0 * v) + loss.primal_eval(z);
            let z = loss.primal_prox(m, v);
            let grid = scalar_grid_argmin(obj, -40.0, 40.0, 1e-3).unwrap();
            prop_assert!(obj(z) <= obj(grid) + 1e-9);
            prop_assert!((z - grid).abs() <= 2e-3);
        }

        #[test]
        fn escalation_lands_in_domain(loss in any_loss(), m in -20.0..20.0f64, v in 0.05..5.0f64, g0 in 0.01..2.0f64) {
            let gamma = g0.max(loss.gamma_min(m, v, DEFAULT_FLOOR));
            let z = loss.dual_decide(m, v, gamma);
            let (lo, hi) = loss.dual_domain();
            let tol = 1e-12 * (1.0 + m.abs() + gamma * v);
            prop_assert!(z >= lo - tol && z <= hi + tol, "z={} outside [{}, {}]", z, lo, hi);
            prop_assert!((loss.proxy_eval(z.clamp(lo, hi), gamma) - loss.conjugate_eval(z.clamp(lo, hi))).abs() == 0.0);
        }

        #[test]
        fn primal_nup_variance_nonnegative(loss in any_loss(), z in -10.0..10.0f64) {
            if let Ok(s) = loss.hinge_surrogate(50.0) {
                if let Ok((_, v)) = s.primal_nup_update(z) {
                    prop_assert!(v >= 0.0);
                }
            }
        }
    }
}
