//! Closed-form continuum quantities in the half-plane normalization.
//!
//! A curve grows from the driving point `U` towards `∞`, with two further
//! marked points `V < W` on the real line to its right. Everything here is a
//! function of `X = V − U` and `Y = W − V`, or equivalently of the
//! cross-ratio `z = X / (X + Y)` and the scale `s = X + Y`.
//!
//! All formulas are homogeneous: observables have degree 0 and drifts have
//! degree −1 in `(X, Y)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::specfun::{gauss_sum, hyp2f1, hyp2f1_log_derivative, Hyp2F1Params};

/// States with `min(X, Y) / (X + Y)` at or below this are degenerate.
pub const DEGENERACY_GUARD: f64 = 1e-12;

/// κ of the FK Ising interfaces.
pub const KAPPA_FK: f64 = 16.0 / 3.0;
/// κ of the percolation exploration path.
pub const KAPPA_PERCOLATION: f64 = 6.0;

/// Driving point and the two finite marked points; the fourth is at `∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkedState {
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

impl MarkedState {
    pub fn new(u: f64, v: f64, w: f64) -> Result<Self> {
        if !(u < v && v < w) || !(u.is_finite() && w.is_finite()) {
            return domain(format!("marked points must satisfy U < V < W, got ({u}, {v}, {w})"));
        }
        Ok(Self { u, v, w })
    }

    /// State with `U = 0`, `V = X`, `W = X + Y`.
    pub fn from_xy(x: f64, y: f64) -> Result<Self> {
        Self::new(0.0, x, x + y)
    }

    pub fn x(&self) -> f64 {
        self.v - self.u
    }

    pub fn y(&self) -> f64 {
        self.w - self.v
    }

    pub fn s(&self) -> f64 {
        self.w - self.u
    }

    pub fn z(&self) -> f64 {
        self.x() / self.s()
    }

    /// Rejects states too close to degeneration for the closed forms.
    pub fn check(&self) -> Result<(f64, f64)> {
        let (x, y) = (self.x(), self.y());
        if !(x > 0.0 && y > 0.0) || x.min(y) / (x + y) <= DEGENERACY_GUARD {
            return domain(format!("degenerate marked state X = {x}, Y = {y}"));
        }
        Ok((x, y))
    }
}

/// The FK arc-pattern observable `√(1 + Y/X) − √(Y/X)`.
pub fn fk_observable(st: &MarkedState) -> Result<f64> {
    let (x, y) = st.check()?;
    Ok(fk_observable_xy(x, y))
}

pub(crate) fn fk_observable_xy(x: f64, y: f64) -> f64 {
    let r = y / x;
    // √(1+r) − √r written without cancellation.
    1.0 / ((1.0 + r).sqrt() + r.sqrt())
}

/// Cross-ratio form `(1 − √(1 − z)) / √z` of the same observable.
pub fn fk_observable_from_z(z: f64) -> Result<f64> {
    if !(z > 0.0 && z < 1.0) {
        return domain(format!("z must lie in (0, 1), got {z}"));
    }
    Ok(z.sqrt() / (1.0 + (1.0 - z).sqrt()))
}

/// `(4/3) · Y(−1 + √(1 + X/Y)) / (X(X+Y))`, the magnitude of the third drift term.
fn third_term_magnitude(x: f64, y: f64) -> f64 {
    let q = x / y;
    let sqrt_minus_one = q / (1.0 + (1.0 + q).sqrt());
    4.0 / 3.0 * y * sqrt_minus_one / (x * (x + y))
}

/// Third bracket term of the hSLE(16/3) drift in explicit algebraic form.
pub fn hsle_third_term(st: &MarkedState) -> Result<f64> {
    let (x, y) = st.check()?;
    Ok(-third_term_magnitude(x, y))
}

/// Drift of hSLE(16/3) when the noise is `+(4/√3) dB`.
pub fn hsle_drift(st: &MarkedState) -> Result<f64> {
    let (x, y) = st.check()?;
    Ok(-2.0 / x + 2.0 / (x + y) - third_term_magnitude(x, y))
}

/// Drift obtained by conditioning the FK interface on the crossing pattern,
/// written for noise `−(4/√3) dB̂`.
pub fn conditioned_drift(st: &MarkedState) -> Result<f64> {
    let (x, y) = st.check()?;
    let root = (1.0 + x / y).sqrt();
    Ok(2.0 / x - 2.0 / (x + y) - 4.0 / 3.0 * y * (2.0 + root) / (x * (x + y)))
}

/// Drift of the unconditioned FK driving function (noise `−(4/√3) dB`).
pub fn p_measure_drift(st: &MarkedState) -> Result<f64> {
    let (x, y) = st.check()?;
    let m2 = fk_observable_xy(x, y).powi(2);
    let one_minus = 1.0 - m2;
    let corr = (3.0 * m2 * m2 + 2.0 * m2 + 1.0) * one_minus * one_minus
        / (y * m2 * (m2 + 1.0) * (m2 + 1.0));
    Ok(2.0 / x - corr / 3.0)
}

/// `dB` coefficient of the observable under the unconditioned measure.
pub fn m_diffusion_coeff(st: &MarkedState) -> Result<f64> {
    let (x, y) = st.check()?;
    Ok(m_diffusion_xy(x, y))
}

pub(crate) fn m_diffusion_xy(x: f64, y: f64) -> f64 {
    let m = fk_observable_xy(x, y);
    let m2 = m * m;
    (1.0 - m2).powi(3) / (2.0 * 3f64.sqrt() * y * m * (m2 + 1.0))
}

/// `d⟨B, N⟩/dt` with `dN = dM/M`, where `B` is the driving Brownian motion
/// of [`p_measure_drift`].
pub fn girsanov_cross_term(st: &MarkedState) -> Result<f64> {
    let (x, y) = st.check()?;
    Ok(m_diffusion_xy(x, y) / fk_observable_xy(x, y))
}

/// `−(16/3) · F′(z)/F(z) · (1 − z)/s` with `F = ₂F₁(3/4, 1/4; 3/2; ·)`.
pub fn hyp_link_term(st: &MarkedState) -> Result<f64> {
    st.check()?;
    let z = st.z();
    let ld = hyp2f1_log_derivative(Hyp2F1Params::FK, z)?;
    Ok(-16.0 / 3.0 * ld * (1.0 - z) / st.s())
}

/// Cardy's normalizing constant `Γ(2/3) / (Γ(4/3) Γ(1/3))`.
pub fn cardy_constant() -> f64 {
    1.0 / gauss_sum(Hyp2F1Params::CARDY).expect("c - a - b = 1/3 > 0")
}

/// Crossing probability `C z^{1/3} ₂F₁(1/3, 2/3; 4/3; z)`, normalized to 1 at `z → 1`.
pub fn cardy(z: f64) -> Result<f64> {
    if !(z > 0.0 && z < 1.0) {
        return domain(format!("cardy requires z in (0, 1), got {z}"));
    }
    Ok(cardy_constant() * z.cbrt() * hyp2f1(Hyp2F1Params::CARDY, z)?)
}

/// Drift of hSLE(6): the percolation exploration conditioned to cross.
pub fn percolation_drift(st: &MarkedState) -> Result<f64> {
    let (x, y) = st.check()?;
    let z = st.z();
    let f = hyp2f1(Hyp2F1Params::CARDY, z)?;
    Ok(-2.0 * (y / (x + y)).cbrt() / (x * f))
}

/// Complete elliptic integral of the first kind, `K(k)`, via the AGM.
pub fn elliptic_k(k: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&k) {
        return domain(format!("elliptic modulus must lie in [0, 1), got {k}"));
    }
    let mut a = 1.0;
    let mut b = (1.0 - k * k).sqrt();
    for _ in 0..64 {
        if (a - b).abs() <= 1e-16 * a {
            break;
        }
        let next = 0.5 * (a + b);
        b = (a * b).sqrt();
        a = next;
    }
    Ok(PI / (2.0 * a))
}

/// Ratio of the `[bc]` side to the `[ab]` side of the rectangle obtained by
/// mapping `(H; 0, z, 1, ∞)` conformally onto a rectangle.
pub fn rectangle_aspect(z: f64) -> Result<f64> {
    if !(z > 0.0 && z < 1.0) {
        return domain(format!("z must lie in (0, 1), got {z}"));
    }
    Ok(elliptic_k((1.0 - z).sqrt())? / elliptic_k(z.sqrt())?)
}

/// Cross-ratio `z` of the four corners of a rectangle whose `[bc]` side is
/// `aspect` times its `[ab]` side.
pub fn rectangle_cross_ratio(aspect: f64) -> Result<f64> {
    if !(aspect > 0.0) || !aspect.is_finite() {
        return domain(format!("aspect must be positive, got {aspect}"));
    }
    if aspect == 1.0 {
        return Ok(0.5);
    }
    // The aspect is decreasing in z; bisect on ln(aspect).
    let target = aspect.ln();
    let (mut lo, mut hi) = (f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rectangle_aspect(mid)?.ln() > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
