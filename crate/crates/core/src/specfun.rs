//! Gauss hypergeometric function ₂F₁ and the Gamma function on the real line.
//!
//! Only real arguments `z ∈ [0, 1)` are supported. For `z ≤ 1/2` the Gauss
//! series is summed directly; above that the `z → 1 − z` connection formula
//! keeps the series geometric with ratio at most 1/2.

use std::f64::consts::PI;

use crate::error::{domain, Result};

const SERIES_REL_TOL: f64 = 1e-16;
const SERIES_MAX_TERMS: usize = 100_000;
const SWITCH_Z: f64 = 0.5;

/// Parameters `(a, b; c)` of ₂F₁.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyp2F1Params {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Hyp2F1Params {
    /// ₂F₁(3/4, 1/4; 3/2; ·), the function behind the hSLE(16/3) drift.
    pub const FK: Hyp2F1Params = Hyp2F1Params {
        a: 0.75,
        b: 0.25,
        c: 1.5,
    };

    /// ₂F₁(1/3, 2/3; 4/3; ·), the function in Cardy's formula.
    pub const CARDY: Hyp2F1Params = Hyp2F1Params {
        a: 1.0 / 3.0,
        b: 2.0 / 3.0,
        c: 4.0 / 3.0,
    };

    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && c.is_finite()) {
            return domain("hypergeometric parameters must be finite");
        }
        if c <= 0.0 && c == c.floor() {
            return domain(format!("c = {c} is a nonpositive integer"));
        }
        Ok(Self { a, b, c })
    }

    /// Parameters of the derivative: d/dz F(a,b;c;z) = (ab/c) F(a+1,b+1;c+1;z).
    pub fn shifted(self) -> Self {
        Self {
            a: self.a + 1.0,
            b: self.b + 1.0,
            c: self.c + 1.0,
        }
    }
}

// Lanczos approximation, g = 7, n = 9.
const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Γ(x) for any real `x` away from the poles, using reflection below 1/2.
fn gamma_real(x: f64) -> f64 {
    if x < 0.5 {
        PI / ((PI * x).sin() * gamma_real(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut acc = LANCZOS_COEF[0];
        for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        let t = x + LANCZOS_G + 0.5;
        (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
    }
}

/// Γ(x) for `x > 0`.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return domain(format!("gamma_fn requires x > 0, got {x}"));
    }
    Ok(gamma_real(x))
}

fn series(p: Hyp2F1Params, z: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    for n in 0..SERIES_MAX_TERMS {
        let k = n as f64;
        term *= (p.a + k) * (p.b + k) / ((p.c + k) * (k + 1.0)) * z;
        sum += term;
        if term.abs() < SERIES_REL_TOL * sum.abs() {
            break;
        }
    }
    sum
}

fn is_integer(x: f64) -> bool {
    (x - x.round()).abs() < 1e-12
}

/// ₂F₁(a, b; c; z) for `z ∈ [0, 1)`.
pub fn hyp2f1(p: Hyp2F1Params, z: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&z) {
        return domain(format!("hyp2f1 requires 0 <= z < 1, got {z}"));
    }
    if z == 0.0 {
        return Ok(1.0);
    }
    let s = p.c - p.a - p.b;
    if z <= SWITCH_Z || is_integer(s) || is_integer(p.a) || is_integer(p.b) {
        // Integer c - a - b needs the logarithmic connection formula; we
        // only meet it off the hot path, so sum the slow series instead.
        return Ok(series(p, z));
    }
    // DLMF 15.8.4 with w = 1 - z.
    let w = 1.0 - z;
    let g = gamma_real;
    let lead = g(p.c) * g(s) / (g(p.c - p.a) * g(p.c - p.b));
    let tail = g(p.c) * g(-s) / (g(p.a) * g(p.b));
    let f1 = series(Hyp2F1Params::new(p.a, p.b, 1.0 - s)?, w);
    let f2 = series(Hyp2F1Params::new(p.c - p.a, p.c - p.b, 1.0 + s)?, w);
    Ok(lead * f1 + tail * w.powf(s) * f2)
}

/// F′(z)/F(z) for F = ₂F₁(a, b; c; ·).
pub fn hyp2f1_log_derivative(p: Hyp2F1Params, z: f64) -> Result<f64> {
    let f = hyp2f1(p, z)?;
    if f == 0.0 {
        return domain("F(z) vanishes");
    }
    let df = p.a * p.b / p.c * hyp2f1(p.shifted(), z)?;
    Ok(df / f)
}

/// Value of ₂F₁(a, b; c; 1) by Gauss summation, valid when c − a − b > 0.
pub fn gauss_sum(p: Hyp2F1Params) -> Result<f64> {
    let s = p.c - p.a - p.b;
    if s <= 0.0 {
        return domain("Gauss summation requires c - a - b > 0");
    }
    Ok(gamma_real(p.c) * gamma_real(s) / (gamma_real(p.c - p.a) * gamma_real(p.c - p.b)))
}

/// Probability that chordal SLE(κ) from `0` to `∞`, `0 < κ < 8`, passes to
/// the left of a point at argument `theta ∈ [0, π]`.
///
/// Written as `1/2 + K cos θ ₂F₁(1/2, 3/2 − 4/κ; 3/2; cos²θ)` so that the
/// hypergeometric argument stays in `[0, 1)`.
pub fn left_passage(theta: f64, kappa: f64) -> Result<f64> {
    if !(kappa > 0.0 && kappa < 8.0) {
        return domain(format!("left passage needs 0 < kappa < 8, got {kappa}"));
    }
    if theta.is_nan() {
        return domain("left passage angle is NaN");
    }
    let c = theta.clamp(0.0, PI).cos();
    let z = c * c;
    if z >= 1.0 {
        return Ok(if c > 0.0 { 1.0 } else { 0.0 });
    }
    let k = gamma_fn(4.0 / kappa)? / (PI.sqrt() * gamma_fn((8.0 - kappa) / (2.0 * kappa))?);
    let f = hyp2f1(Hyp2F1Params::new(0.5, 1.5 - 4.0 / kappa, 1.5)?, z)?;
    Ok((0.5 + k * c * f).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn gamma_classical_values() {
        assert!(close(gamma_fn(1.0).unwrap(), 1.0, 1e-14));
        assert!(close(gamma_fn(2.0).unwrap(), 1.0, 1e-14));
        assert!(close(gamma_fn(0.5).unwrap(), PI.sqrt(), 1e-14));
        assert!(close(gamma_fn(5.0).unwrap(), 24.0, 1e-12));
    }

    #[test]
    fn gamma_recurrence_on_grid() {
        for i in 1..200 {
            let x = 0.05 * i as f64;
            let lhs = gamma_fn(x + 1.0).unwrap();
            let rhs = x * gamma_fn(x).unwrap();
            assert!(((lhs - rhs) / lhs).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn gamma_rejects_nonpositive() {
        assert!(gamma_fn(0.0).is_err());
        assert!(gamma_fn(-1.5).is_err());
        assert!(gamma_fn(f64::NAN).is_err());
    }

    #[test]
    fn hyp2f1_at_zero_is_one() {
        for p in [Hyp2F1Params::FK, Hyp2F1Params::CARDY, Hyp2F1Params::new(2.0, 3.0, 0.5).unwrap()] {
            assert_eq!(hyp2f1(p, 0.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn hyp2f1_rejects_outside_unit_interval() {
        assert!(hyp2f1(Hyp2F1Params::FK, 1.0).is_err());
        assert!(hyp2f1(Hyp2F1Params::FK, -0.1).is_err());
        assert!(Hyp2F1Params::new(1.0, 1.0, -2.0).is_err());
    }

    #[test]
    fn hyp2f1_matches_elementary_closed_forms() {
        // 2F1(1,1;2;z) = -ln(1-z)/z
        let p = Hyp2F1Params::new(1.0, 1.0, 2.0).unwrap();
        // 2F1(1/4,3/4;3/2;w^2) = (sqrt(1+w) - sqrt(1-w)) / w
        for i in 1..100 {
            let z = i as f64 / 100.0;
            let log_form = -(1.0 - z).ln() / z;
            assert!(close(hyp2f1(p, z).unwrap(), log_form, 1e-12), "z = {z}");
            let w = z.sqrt();
            let alg = ((1.0 + w).sqrt() - (1.0 - w).sqrt()) / w;
            assert!(close(hyp2f1(Hyp2F1Params::FK, z).unwrap(), alg, 1e-12), "z = {z}");
        }
    }

    #[test]
    fn hyp2f1_cardy_matches_beta_integral() {
        // z^{1/3} F(1/3,2/3;4/3;z) = (1/3) ∫_0^z t^{-2/3}(1-t)^{-2/3} dt.
        // Substitute t = u^3 to remove the endpoint singularity at 0.
        let integral = |z: f64| {
            let top = z.cbrt();
            let n = 20_000;
            let h = top / n as f64;
            let f = |u: f64| 3.0 * (1.0 - u * u * u).powf(-2.0 / 3.0);
            let mut acc = f(0.0) + f(top);
            for k in 1..n {
                acc += f(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
            }
            acc * h / 3.0 / 3.0
        };
        for &z in &[0.1f64, 0.3, 0.5, 0.7, 0.85] {
            let lhs = z.cbrt() * hyp2f1(Hyp2F1Params::CARDY, z).unwrap();
            assert!(close(lhs, integral(z), 1e-9), "z = {z}");
        }
    }

    #[test]
    fn gauss_summation_limit() {
        let p = Hyp2F1Params::CARDY;
        let g = gauss_sum(p).unwrap();
        let expected = gamma_fn(4.0 / 3.0).unwrap() * gamma_fn(1.0 / 3.0).unwrap()
            / gamma_fn(2.0 / 3.0).unwrap();
        assert!(close(g, expected, 1e-13));
        // F(1 - h) = G + B h^{1/3} + O(h): the gap must shrink like h^{1/3}.
        let b = gamma_real(p.c) * gamma_real(-(p.c - p.a - p.b)) / (gamma_real(p.a) * gamma_real(p.b));
        for &h in &[1e-6, 1e-9] {
            let gap = hyp2f1(p, 1.0 - h).unwrap() - g;
            let predicted = b * h.cbrt();
            assert!(((gap - predicted) / predicted).abs() < 1e-2, "h = {h}");
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let h = 1e-5;
        for p in [Hyp2F1Params::FK, Hyp2F1Params::CARDY] {
            for i in 1..=9 {
                let z = i as f64 / 10.0;
                let fd = (hyp2f1(p, z + h).unwrap() - hyp2f1(p, z - h).unwrap()) / (2.0 * h);
                let exact = p.a * p.b / p.c * hyp2f1(p.shifted(), z).unwrap();
                assert!(close(fd, exact, 1e-7), "z = {z}: {fd} vs {exact}");
            }
        }
    }

    #[test]
    fn log_derivative_values() {
        let p = Hyp2F1Params::FK;
        assert!(close(hyp2f1_log_derivative(p, 0.0).unwrap(), p.a * p.b / p.c, 1e-15));
        let h = 1e-5;
        let fd = (hyp2f1(p, 0.5 + h).unwrap().ln() - hyp2f1(p, 0.5 - h).unwrap().ln()) / (2.0 * h);
        assert!(close(hyp2f1_log_derivative(p, 0.5).unwrap(), fd, 1e-7));
        for p in [Hyp2F1Params::FK, Hyp2F1Params::CARDY] {
            for i in 1..100 {
                assert!(hyp2f1_log_derivative(p, i as f64 / 100.0).unwrap() > 0.0);
            }
        }
    }

    #[test]
    fn series_and_connection_agree_at_switchover() {
        for p in [Hyp2F1Params::FK, Hyp2F1Params::CARDY, Hyp2F1Params::FK.shifted(), Hyp2F1Params::CARDY.shifted()] {
            let direct = series(p, SWITCH_Z + 1e-9);
            let connected = hyp2f1(p, SWITCH_Z + 1e-9).unwrap();
            assert!(close(direct, connected, 1e-11), "{p:?}: {direct} vs {connected}");
        }
    }

    #[test]
    fn fk_and_cardy_instances_strictly_increasing() {
        for p in [Hyp2F1Params::FK, Hyp2F1Params::CARDY] {
            let mut prev = hyp2f1(p, 0.0).unwrap();
            for i in 1..1000 {
                let v = hyp2f1(p, i as f64 / 1000.0).unwrap();
                assert!(v > prev);
                prev = v;
            }
        }
    }

    #[test]
    fn left_passage_matches_quadrature() {
        // 1/2 + K cot θ ∫₀¹ (1 + cot²θ t²)^(-4/κ) dt by the midpoint rule.
        for kappa in [2.0, 4.0, 16.0 / 3.0, 6.0] {
            let k = gamma_fn(4.0 / kappa).unwrap()
                / (PI.sqrt() * gamma_fn((8.0 - kappa) / (2.0 * kappa)).unwrap());
            for theta in [0.3, 1.0, PI / 2.0, 2.0, 2.9] {
                let cot = 1.0 / theta.tan();
                let n = 200_000;
                let integral: f64 = (0..n)
                    .map(|i| {
                        let t = (i as f64 + 0.5) / n as f64;
                        (1.0 + cot * cot * t * t).powf(-4.0 / kappa)
                    })
                    .sum::<f64>()
                    / n as f64;
                let want = 0.5 + k * cot * integral;
                let got = left_passage(theta, kappa).unwrap();
                assert!(close(got, want, 1e-8), "kappa {kappa} theta {theta}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn left_passage_limits_and_symmetry() {
        for kappa in [1.0, 16.0 / 3.0, 7.5] {
            assert_eq!(left_passage(0.0, kappa).unwrap(), 1.0);
            assert_eq!(left_passage(PI, kappa).unwrap(), 0.0);
            assert!(close(left_passage(PI / 2.0, kappa).unwrap(), 0.5, 1e-14));
            let a = left_passage(0.7, kappa).unwrap();
            let b = left_passage(PI - 0.7, kappa).unwrap();
            assert!(close(a + b, 1.0, 1e-12));
        }
        assert!(left_passage(1.0, 8.0).is_err());
    }
}
