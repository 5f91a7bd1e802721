//! Pointwise heat kernel, interaction kernel, their regularizations, and the
//! linear drift generated by the initial chemical field.
//!
//! Conventions: `g_t(x) = (2πt)^{-1} exp(-|x|²/2t)` and `K_t = ∇g_t`. Initial
//! data are finite Gaussian mixtures so that every convolution with `g_t`
//! stays in closed form.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = [f64; 2];

/// Scalar model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Chemotactic sensitivity.
    pub chi: f64,
    /// Decay rate of the chemical.
    pub lambda: f64,
    /// Kernel regularization; 0 means unregularized.
    pub epsilon: f64,
    /// Time horizon.
    pub horizon: f64,
}

impl ModelParams {
    pub fn new(chi: f64, lambda: f64, epsilon: f64, horizon: f64) -> Result<Self> {
        let p = Self {
            chi,
            lambda,
            epsilon,
            horizon,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        // chi = 0 is admitted as the pure heat-flow limit.
        if !(self.chi >= 0.0 && self.chi.is_finite()) {
            return Err(Error::domain("ModelParams", format!("chi = {} must be >= 0", self.chi)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::domain("ModelParams", format!("lambda = {} must be >= 0", self.lambda)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::domain("ModelParams", format!("epsilon = {} must be >= 0", self.epsilon)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::domain("ModelParams", format!("horizon = {} must be > 0", self.horizon)));
        }
        Ok(())
    }

    pub fn with_chi(mut self, chi: f64) -> Self {
        self.chi = chi;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub center: Vec2,
    pub variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MixtureRole {
    /// Probability density: positive weights summing to one.
    Density,
    /// Initial chemical concentration: any real weights.
    ChemoInitial,
}

/// `Σ_j w_j g_{v_j}(x - a_j)`: a mixture of isotropic Gaussians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    components: Vec<GaussianComponent>,
    role: MixtureRole,
}

/// Isotropic 2-D Gaussian density of variance `v` per coordinate.
#[inline]
fn gauss(v: f64, x: Vec2) -> f64 {
    let r2 = x[0] * x[0] + x[1] * x[1];
    let arg = -r2 / (2.0 * v);
    if arg < -708.0 {
        return 0.0;
    }
    arg.exp() / (2.0 * PI * v)
}

impl GaussianMixture {
    pub fn new(components: Vec<GaussianComponent>, role: MixtureRole) -> Result<Self> {
        for c in &components {
            if !(c.variance > 0.0 && c.variance.is_finite()) {
                return Err(Error::domain("GaussianMixture", format!("variance {} must be > 0", c.variance)));
            }
            if !c.weight.is_finite() || !c.center.iter().all(|v| v.is_finite()) {
                return Err(Error::domain("GaussianMixture", "non-finite weight or center"));
            }
        }
        if role == MixtureRole::Density {
            if components.is_empty() {
                return Err(Error::domain("GaussianMixture", "a density needs at least one component"));
            }
            if components.iter().any(|c| c.weight <= 0.0) {
                return Err(Error::domain("GaussianMixture", "density weights must be positive"));
            }
            let total: f64 = components.iter().map(|c| c.weight).sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::domain(
                    "GaussianMixture",
                    format!("density weights sum to {total}, not 1"),
                ));
            }
        }
        Ok(Self { components, role })
    }

    /// A single centered Gaussian with the given weight and variance.
    pub fn single(weight: f64, center: Vec2, variance: f64, role: MixtureRole) -> Result<Self> {
        Self::new(
            vec![GaussianComponent {
                weight,
                center,
                variance,
            }],
            role,
        )
    }

    /// The zero function, as a chemical initial datum.
    pub fn zero() -> Self {
        Self {
            components: Vec::new(),
            role: MixtureRole::ChemoInitial,
        }
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn role(&self) -> MixtureRole {
        self.role
    }

    pub fn is_zero(&self) -> bool {
        self.components.iter().all(|c| c.weight == 0.0)
    }

    pub fn eval(&self, x: Vec2) -> f64 {
        self.heat_evolved(0.0, x)
    }

    /// `(g_t ∗ f)(x)`; each component's variance grows by `t`.
    pub fn heat_evolved(&self, t: f64, x: Vec2) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * gauss(c.variance + t, [x[0] - c.center[0], x[1] - c.center[1]]))
            .sum()
    }

    /// `∇(g_t ∗ f)(x)`.
    pub fn heat_evolved_gradient(&self, t: f64, x: Vec2) -> Vec2 {
        let mut out = [0.0, 0.0];
        for c in &self.components {
            let v = c.variance + t;
            let d = [x[0] - c.center[0], x[1] - c.center[1]];
            let s = -c.weight * gauss(v, d) / v;
            out[0] += s * d[0];
            out[1] += s * d[1];
        }
        out
    }

    /// Closed-form `‖∇f‖_{L²}` from pairwise Gaussian integrals:
    /// `∫ ∇g_{v}(x-a)·∇g_{w}(x-b) dx = g_s(d) (2/s - |d|²/s²)`, `s = v + w`, `d = a - b`.
    pub fn grad_l2_norm(&self) -> f64 {
        let mut acc = 0.0;
        for a in &self.components {
            for b in &self.components {
                let s = a.variance + b.variance;
                let d = [a.center[0] - b.center[0], a.center[1] - b.center[1]];
                let d2 = d[0] * d[0] + d[1] * d[1];
                acc += a.weight * b.weight * gauss(s, d) * (2.0 / s - d2 / (s * s));
            }
        }
        acc.max(0.0).sqrt()
    }

    /// Closed-form `‖f‖_{L²}`.
    pub fn l2_norm(&self) -> f64 {
        let mut acc = 0.0;
        for a in &self.components {
            for b in &self.components {
                let d = [a.center[0] - b.center[0], a.center[1] - b.center[1]];
                acc += a.weight * b.weight * gauss(a.variance + b.variance, d);
            }
        }
        acc.max(0.0).sqrt()
    }

    /// Smallest half-width `L` for which every component's mass outside
    /// `[-L, L)²` is below `tol` (a per-axis Gaussian tail bound).
    pub fn support_half_width(&self, extra_variance: f64, tol: f64) -> f64 {
        let z = (-2.0 * (tol / 4.0).ln()).sqrt();
        self.components
            .iter()
            .map(|c| c.center[0].abs().max(c.center[1].abs()) + z * (c.variance + extra_variance).sqrt())
            .fold(0.0, f64::max)
    }
}

/// Initial pair `(ρ₀, c₀)` with the derived scalar `‖∇c₀‖_{L²}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub rho0: GaussianMixture,
    pub c0: GaussianMixture,
    pub grad_c0_l2: f64,
}

impl InitialData {
    pub fn new(rho0: GaussianMixture, c0: GaussianMixture) -> Result<Self> {
        if rho0.role() != MixtureRole::Density {
            return Err(Error::domain("InitialData", "rho0 must have the density role"));
        }
        let grad_c0_l2 = c0.grad_l2_norm();
        Ok(Self {
            rho0,
            c0,
            grad_c0_l2,
        })
    }

    /// Standard Gaussian density with the chemical started at `c0_weight · ρ₀`.
    pub fn standard(c0_weight: f64) -> Self {
        let rho0 = GaussianMixture::single(1.0, [0.0, 0.0], 1.0, MixtureRole::Density)
            .expect("valid standard density");
        let c0 = if c0_weight == 0.0 {
            GaussianMixture::zero()
        } else {
            GaussianMixture::single(c0_weight, [0.0, 0.0], 1.0, MixtureRole::ChemoInitial)
                .expect("valid chemical datum")
        };
        Self::new(rho0, c0).expect("valid initial data")
    }
}

fn check_time(func: &'static str, t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain(func, format!("time {t} must be positive")));
    }
    Ok(())
}

/// `(2πt)^{-1} exp(-|x|²/2t)`, exactly 0 once the exponent underflows.
pub fn heat_kernel(t: f64, x: Vec2) -> Result<f64> {
    check_time("heat_kernel", t)?;
    Ok(gauss(t, x))
}

/// `K_t(x) = ∇g_t(x) = -x/(2πt²) exp(-|x|²/2t)`.
pub fn singular_kernel(t: f64, x: Vec2) -> Result<Vec2> {
    check_time("singular_kernel", t)?;
    Ok(singular_kernel_unchecked(t, x))
}

#[inline]
pub(crate) fn singular_kernel_unchecked(t: f64, x: Vec2) -> Vec2 {
    let s = -gauss(t, x) / t;
    [s * x[0], s * x[1]]
}

/// `t²/(t+ε)² K_t(x)`.
pub fn reg_kernel(eps: f64, t: f64, x: Vec2) -> Result<Vec2> {
    check_time("reg_kernel", t)?;
    check_eps("reg_kernel", eps)?;
    let f = kernel_prefactor(eps, t);
    let k = singular_kernel_unchecked(t, x);
    Ok([f * k[0], f * k[1]])
}

/// `t/(t+ε) g_t(x)`.
pub fn reg_heat_kernel(eps: f64, t: f64, x: Vec2) -> Result<f64> {
    check_time("reg_heat_kernel", t)?;
    check_eps("reg_heat_kernel", eps)?;
    Ok(t / (t + eps) * gauss(t, x))
}

fn check_eps(func: &'static str, eps: f64) -> Result<()> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::domain(func, format!("epsilon {eps} must be >= 0")));
    }
    Ok(())
}

/// Regularization factor `t²/(t+ε)²` of the interaction kernel.
#[inline]
pub fn kernel_prefactor(eps: f64, t: f64) -> f64 {
    if eps == 0.0 {
        1.0
    } else {
        let r = t / (t + eps);
        r * r
    }
}

/// `sup_x |K^ε_t(x)| = √t e^{-1/2} / (2π (t+ε)²)`, attained on `|x| = √t`.
pub fn reg_kernel_sup(eps: f64, t: f64) -> f64 {
    t.sqrt() * (-0.5f64).exp() / (2.0 * PI * (t + eps) * (t + eps))
}

/// `b₀(t,x) = χ e^{-λt} (∇c₀ ∗ g_t)(x)`, optionally with `g_t` replaced by `t/(t+ε) g_t`.
pub fn b0_eval(params: &ModelParams, init: &InitialData, t: f64, x: Vec2, regularized: bool) -> Result<Vec2> {
    check_time("b0_eval", t)?;
    Ok(b0_unchecked(params, &init.c0, t, x, regularized))
}

/// As [`b0_eval`] but admits `t = 0`, where the unregularized drift is `χ∇c₀`.
pub(crate) fn b0_unchecked(params: &ModelParams, c0: &GaussianMixture, t: f64, x: Vec2, regularized: bool) -> Vec2 {
    if params.chi == 0.0 || c0.is_zero() {
        return [0.0, 0.0];
    }
    let mut f = params.chi * (-params.lambda * t).exp();
    if regularized && params.epsilon > 0.0 {
        f *= t / (t + params.epsilon);
    }
    let g = c0.heat_evolved_gradient(t, x);
    [f * g[0], f * g[1]]
}

/// Closed-form upper bound on `‖b₀(t,·)‖_∞` (per component), `χ‖∇c₀‖ c2(2)/√t`,
/// with `t` replaced by `t + ε` for the regularized drift.
pub fn b0_sup_bound(params: &ModelParams, init: &InitialData, t: f64, regularized: bool) -> f64 {
    let tt = if regularized { t + params.epsilon } else { t };
    params.chi * init.grad_c0_l2 * 0.5 / PI.sqrt() / tt.sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H0Row {
    pub t: f64,
    /// Closed-form `sup_x |K^ε_t(x)|`.
    pub h1: f64,
    /// Largest `|K^ε_t(x)|` seen on the sample lattice.
    pub h1_sampled: f64,
    /// Largest difference quotient on the sample lattice.
    pub h2_empirical: f64,
    /// `sup_x ‖DK^ε_t(x)‖ = 1/(2π(t+ε)²)`, attained at the origin.
    pub h2_analytic: f64,
}

/// Bounded-and-Lipschitz certificate of the regularized kernel on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H0Report {
    pub epsilon: f64,
    pub rows: Vec<H0Row>,
    /// Trapezoid integral of `h1` over `[0, t_max]`.
    pub integral_h1: f64,
    /// Trapezoid integral of the empirical `h2` over `[0, t_max]`.
    pub integral_h2: f64,
    /// `3^{3/2} e^{-1/2} / (32π)`, from maximizing `h1` over `t` at `t = ε/3`.
    pub sup_constant: f64,
    /// `sup_constant · ε^{-3/2}`.
    pub uniform_sup_bound: f64,
    /// Always `"empirical"`: `h2` comes from sampled difference quotients.
    pub lipschitz_label: String,
}

pub fn h0_sup_constant() -> f64 {
    3f64.powf(1.5) * (-0.5f64).exp() / (32.0 * PI)
}

/// Samples the regularized kernel on a deterministic lattice scaled by `√t` for
/// each `t`, reporting bound and Lipschitz estimates and their time integrals.
pub fn h0_certificate(params: &ModelParams, time_grid: &[f64]) -> Result<H0Report> {
    let eps = params.epsilon;
    if !(eps > 0.0) {
        return Err(Error::Precondition(
            "the unregularized kernel (epsilon = 0) is unbounded near t = 0; no certificate".into(),
        ));
    }
    if time_grid.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::domain("h0_certificate", "time grid must be positive"));
    }
    let mut times = time_grid.to_vec();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());

    const HALF: i32 = 60;
    let mut rows = Vec::with_capacity(times.len());
    for &t in &times {
        let step = 4.0 * t.sqrt() / HALF as f64;
        let pref = kernel_prefactor(eps, t);
        let eval = |i: i32, j: i32| {
            let k = singular_kernel_unchecked(t, [i as f64 * step, j as f64 * step]);
            [pref * k[0], pref * k[1]]
        };
        let mut h1_sampled: f64 = 0.0;
        let mut h2: f64 = 0.0;
        for i in -HALF..=HALF {
            for j in -HALF..=HALF {
                let k = eval(i, j);
                h1_sampled = h1_sampled.max(k[0].hypot(k[1]));
                for (di, dj) in [(1, 0), (0, 1), (1, 1), (1, -1)] {
                    let k2 = eval(i + di, j + dj);
                    let dist = step * ((di * di + dj * dj) as f64).sqrt();
                    h2 = h2.max((k2[0] - k[0]).hypot(k2[1] - k[1]) / dist);
                }
            }
        }
        rows.push(H0Row {
            t,
            h1: reg_kernel_sup(eps, t),
            h1_sampled,
            h2_empirical: h2,
            h2_analytic: 1.0 / (2.0 * PI * (t + eps) * (t + eps)),
        });
    }
    // h1(0) = 0 and h2(0) = 1/(2πε²) are the t → 0 limits.
    let mut integral_h1 = 0.0;
    let mut integral_h2 = 0.0;
    let (mut t_prev, mut h1_prev, mut h2_prev) = (0.0, 0.0, 1.0 / (2.0 * PI * eps * eps));
    for r in &rows {
        integral_h1 += 0.5 * (r.t - t_prev) * (r.h1 + h1_prev);
        integral_h2 += 0.5 * (r.t - t_prev) * (r.h2_empirical + h2_prev);
        t_prev = r.t;
        h1_prev = r.h1;
        h2_prev = r.h2_empirical;
    }
    let c = h0_sup_constant();
    Ok(H0Report {
        epsilon: eps,
        rows,
        integral_h1,
        integral_h2,
        sup_constant: c,
        uniform_sup_bound: c * eps.powf(-1.5),
        lipschitz_label: "empirical".into(),
    })
}
