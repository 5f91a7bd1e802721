//! Scalar special functions and the closed-form Gaussian norm constants.
//!
//! `c1(q)` is the constant in `‖∂_i g_t‖_{L^q} = c1(q) / t^{3/2 - 1/q}` and
//! `c2(q)` the one in `‖g_t‖_{L^q} = c2(q) / t^{1 - 1/q}`, where `g_t` is the
//! 2-D heat kernel of variance `t` per coordinate. Both accept `q = ∞`
//! through dedicated branches.

use std::f64::consts::{LN_2, PI};

use crate::error::{Error, Result};

const LN_PI: f64 = 1.144_729_885_849_400_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

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

/// What an exponent is used for; governs its admissible range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExponentRole {
    /// Lebesgue exponent, `q ∈ [1, ∞]`.
    Lebesgue,
    /// Exponent of a weakly singular factor `s^{-a}`, in `(0, 1)`.
    SingularityA,
    SingularityB,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponent {
    value: f64,
    role: ExponentRole,
}

impl Exponent {
    pub fn new(value: f64, role: ExponentRole) -> Result<Self> {
        let ok = match role {
            ExponentRole::Lebesgue => value >= 1.0,
            ExponentRole::SingularityA | ExponentRole::SingularityB => value > 0.0 && value < 1.0,
        };
        if !ok || value.is_nan() {
            return Err(Error::domain(
                "Exponent::new",
                format!("{value} is not valid for {role:?}"),
            ));
        }
        Ok(Self { value, role })
    }

    pub fn lebesgue(q: f64) -> Result<Self> {
        Self::new(q, ExponentRole::Lebesgue)
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn role(&self) -> ExponentRole {
        self.role
    }

    /// Hölder conjugate `q'` with `1/q + 1/q' = 1`. Only defined for Lebesgue exponents.
    pub fn conjugate(&self) -> Result<Self> {
        if self.role != ExponentRole::Lebesgue {
            return Err(Error::domain("Exponent::conjugate", "not a Lebesgue exponent"));
        }
        Self::lebesgue(conjugate(self.value))
    }
}

/// `q / (q - 1)`, with the conventions `1' = ∞` and `∞' = 1`.
pub fn conjugate(q: f64) -> f64 {
    if q == 1.0 {
        f64::INFINITY
    } else if q.is_infinite() {
        1.0
    } else {
        q / (q - 1.0)
    }
}

fn lanczos_sum(z: f64) -> f64 {
    // z = x - 1
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    acc
}

/// Gamma function for positive arguments.
pub fn gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::domain("gamma", format!("argument {x} is not positive")));
    }
    if x < 0.5 {
        // Γ(x) = Γ(x+1)/x keeps the Lanczos sum in its accurate range.
        return Ok(gamma_unchecked(x + 1.0) / x);
    }
    Ok(gamma_unchecked(x))
}

fn gamma_unchecked(x: f64) -> f64 {
    if x > 171.7 {
        return f64::INFINITY;
    }
    if x == x.floor() && x <= 23.0 {
        // exact factorials
        let mut f = 1.0;
        let mut k = 2.0;
        while k < x {
            f *= k;
            k += 1.0;
        }
        return f;
    }
    let z = x - 1.0;
    let t = z + LANCZOS_G + 0.5;
    if x > 140.0 {
        return ln_gamma_unchecked(x).exp();
    }
    (2.0 * PI).sqrt() * t.powf(z + 0.5) * (-t).exp() * lanczos_sum(z)
}

/// Natural logarithm of the Gamma function for positive arguments.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::domain("ln_gamma", format!("argument {x} is not positive")));
    }
    if x < 0.5 {
        return Ok(ln_gamma_unchecked(x + 1.0) - x.ln());
    }
    Ok(ln_gamma_unchecked(x))
}

fn ln_gamma_unchecked(x: f64) -> f64 {
    if x < 20.0 {
        return gamma_unchecked(x).ln();
    }
    let z = x - 1.0;
    let t = z + LANCZOS_G + 0.5;
    LN_SQRT_2PI + (z + 0.5) * t.ln() - t + lanczos_sum(z).ln()
}

fn check_singular_pair(func: &'static str, a: f64, b: f64) -> Result<()> {
    if !(a > 0.0 && a < 1.0) || !(b > 0.0 && b < 1.0) {
        return Err(Error::domain(
            func,
            format!("exponents ({a}, {b}) must lie in (0, 1)"),
        ));
    }
    Ok(())
}

/// `∫_0^1 u^{-a} (1-u)^{-b} du`, evaluated as the Euler Beta function `B(1-a, 1-b)`.
pub fn beta_singular(a: f64, b: f64) -> Result<f64> {
    check_singular_pair("beta_singular", a, b)?;
    let (x, y) = (1.0 - a, 1.0 - b);
    // Γ ratios in this range are moderate; the direct product is more accurate than exp(ln).
    let direct = gamma(x)? * gamma(y)? / gamma(x + y)?;
    if direct.is_finite() {
        Ok(direct)
    } else {
        Ok((ln_gamma_unchecked_small(x) + ln_gamma_unchecked_small(y) - ln_gamma_unchecked(x + y))
            .exp())
    }
}

fn ln_gamma_unchecked_small(x: f64) -> f64 {
    if x < 0.5 {
        ln_gamma_unchecked(x + 1.0) - x.ln()
    } else {
        ln_gamma_unchecked(x)
    }
}

/// `∫_0^t s^{-a} (t-s)^{-b} ds = t^{1-a-b} β(a, b)`.
pub fn singular_time_integral(a: f64, b: f64, t: f64) -> Result<f64> {
    check_singular_pair("singular_time_integral", a, b)?;
    if !(t > 0.0) {
        return Err(Error::domain(
            "singular_time_integral",
            format!("horizon {t} is not positive"),
        ));
    }
    Ok(t.powf(1.0 - a - b) * beta_singular(a, b)?)
}

fn check_lebesgue(func: &'static str, q: f64) -> Result<()> {
    if !(q >= 1.0) {
        return Err(Error::domain(func, format!("exponent {q} is below 1")));
    }
    Ok(())
}

/// Norm constant of one component of the heat-kernel gradient:
/// `‖∂_i g_t‖_{L^q(ℝ²)} = c1(q) t^{1/q - 3/2}`.
pub fn c1(q: f64) -> Result<f64> {
    check_lebesgue("c1", q)?;
    if q.is_infinite() {
        // sup |x_1| e^{-|x|²/2t} / (2π t²) is attained at |x_1| = √t.
        return Ok((-0.5f64).exp() / (2.0 * PI));
    }
    let inv = 1.0 / q;
    let ln_c = (inv - 0.5) * LN_2 - (1.0 - 0.5 * inv) * LN_PI - (inv + 0.5) * q.ln()
        + ln_gamma((q + 1.0) / 2.0)? * inv;
    Ok(ln_c.exp())
}

/// Norm constant of the heat kernel: `‖g_t‖_{L^q(ℝ²)} = c2(q) t^{1/q - 1}`.
pub fn c2(q: f64) -> Result<f64> {
    check_lebesgue("c2", q)?;
    if q.is_infinite() {
        return Ok(1.0 / (2.0 * PI));
    }
    let inv = 1.0 / q;
    Ok((2.0 * PI).powf(-(1.0 - inv)) * q.powf(-inv))
}
