//! Independent numerical oracles shared by the integration tests. Nothing
//! here calls into the library.
#![allow(dead_code)]

use std::f64::consts::PI;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Gauss–Kronrod 7/15 on `[a, b]`: (Kronrod estimate, |Kronrod − Gauss|).
fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss–Kronrod with a relative-or-absolute tolerance.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: (f64, f64), tol: f64, depth: u32) -> f64 {
        if whole.1 <= tol.max(1e-15 * whole.0.abs()) || depth > 48 {
            return whole.0;
        }
        let m = 0.5 * (a + b);
        let l = gk15(f, a, m);
        let r = gk15(f, m, b);
        rec(f, a, m, l, 0.5 * tol, depth + 1) + rec(f, m, b, r, 0.5 * tol, depth + 1)
    }
    let first = gk15(f, a, b);
    let scale = first.0.abs().max(1e-300);
    rec(f, a, b, first, tol * scale, 0)
}

/// `∫_0^∞ f` for integrands that decay at least like a Gaussian beyond `scale`.
pub fn integrate_half_line(f: &dyn Fn(f64) -> f64, scale: f64, tol: f64) -> f64 {
    let mut total = 0.0;
    let mut lo = 0.0;
    let step = scale;
    for _ in 0..200 {
        let piece = integrate(f, lo, lo + step, tol);
        total += piece;
        lo += step;
        if piece.abs() <= 1e-18 * total.abs() {
            break;
        }
    }
    total
}

/// `∫_0^{π/2} cos^q θ dθ`.
pub fn cos_power_quarter(q: f64) -> f64 {
    integrate(&|th: f64| th.cos().powf(q), 0.0, PI / 2.0, 1e-14)
}

/// `‖∂_1 g_t‖_{L^q(ℝ²)}` by polar quadrature.
pub fn grad_heat_norm(q: f64, t: f64) -> f64 {
    let angular = 4.0 * cos_power_quarter(q);
    let radial = integrate_half_line(&|r: f64| r.powf(q + 1.0) * (-q * r * r / (2.0 * t)).exp(), (t / q).sqrt(), 1e-14);
    ((2.0 * PI * t * t).powf(-q) * angular * radial).powf(1.0 / q)
}

/// `‖g_t‖_{L^q(ℝ²)}` by radial quadrature.
pub fn heat_norm(q: f64, t: f64) -> f64 {
    let radial = integrate_half_line(&|r: f64| r * (-q * r * r / (2.0 * t)).exp(), (t / q).sqrt(), 1e-14);
    ((2.0 * PI * t).powf(-q) * 2.0 * PI * radial).powf(1.0 / q)
}

/// `∫_0^t s^{-a}(t-s)^{-b} ds` with both endpoint singularities removed by
/// power substitutions on each half.
pub fn singular_integral(a: f64, b: f64, t: f64) -> f64 {
    // u = w^{1/(1-a)} on [0, 1/2]
    let pa = 1.0 / (1.0 - a);
    let left = integrate(
        &|w: f64| {
            let u = w.powf(pa);
            (1.0 - u).powf(-b) * pa
        },
        0.0,
        0.5f64.powf(1.0 - a),
        1e-15,
    );
    // 1 - u = w^{1/(1-b)} on [1/2, 1]
    let pb = 1.0 / (1.0 - b);
    let right = integrate(
        &|w: f64| {
            let u = 1.0 - w.powf(pb);
            u.powf(-a) * pb
        },
        0.0,
        0.5f64.powf(1.0 - b),
        1e-15,
    );
    t.powf(1.0 - a - b) * (left + right)
}

/// `ln Γ(x)` by upward recurrence into the Stirling series.
pub fn ln_gamma_stirling(x: f64) -> f64 {
    assert!(x > 0.0);
    let mut shift = 0.0;
    let mut z = x;
    while z < 30.0 {
        shift += z.ln();
        z += 1.0;
    }
    let z2 = z * z;
    let series = 1.0 / (12.0 * z) - 1.0 / (360.0 * z * z2) + 1.0 / (1260.0 * z2 * z2 * z)
        - 1.0 / (1680.0 * z2 * z2 * z2 * z)
        + 1.0 / (1188.0 * z2 * z2 * z2 * z2 * z);
    (z - 0.5) * z.ln() - z + 0.5 * (2.0 * PI).ln() + series - shift
}

pub fn gamma_stirling(x: f64) -> f64 {
    ln_gamma_stirling(x).exp()
}

/// `∫∫ f(x, y)` over a square by nested adaptive quadrature.
pub fn integrate_square(f: &dyn Fn(f64, f64) -> f64, half_width: f64, tol: f64) -> f64 {
    integrate(
        &|y: f64| integrate(&|x: f64| f(x, y), -half_width, half_width, tol),
        -half_width,
        half_width,
        tol,
    )
}

pub fn rel(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        ((a - b) / b).abs()
    }
}
