//! Admissibility algebra: the existence constants in both typeset conventions,
//! the largest admissible sensitivity, the density-bound root `B_q(χ)`, the
//! `B_r` ladder and the uniqueness gate.
//!
//! Two conventions coexist. The theorem-statement constant `A_thm` lacks the
//! factor 2 carried by the proof's `K₂`; the proof renames `A := K₂` and
//! `B := 2√(C₂(q)K₁)`. Gating always uses the proof convention (the larger
//! constants), and both are reported.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{InitialData, ModelParams};
use crate::special::{beta_singular, c1, c2, conjugate};

pub const DEFAULT_Q: f64 = 3.0;
pub const DEFAULT_C0: f64 = 1.0;
/// Left-hand sides within this distance of 1 are on the boundary, which the
/// strict inequality excludes.
pub const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Convention {
    #[serde(rename = "theorem-A")]
    TheoremA,
    #[serde(rename = "proof-K2")]
    ProofK2,
}

impl Convention {
    pub fn label(self) -> &'static str {
        match self {
            Convention::TheoremA => "theorem-A",
            Convention::ProofK2 => "proof-K2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThmConstants {
    pub q: f64,
    pub a_thm: f64,
    pub b_thm: f64,
    pub k1: f64,
    pub k2: f64,
    /// `A := K₂`.
    pub a_proof: f64,
    /// `B := 2√(C₂(q) K₁)`.
    pub b_proof: f64,
    pub c2q: f64,
    /// `K₂ / A_thm`; equals 2 as typeset.
    pub k2_over_a_thm: f64,
    /// `B_proof / B_thm`; equals √2 as typeset.
    pub b_proof_over_b_thm: f64,
}

impl ThmConstants {
    pub fn a(&self, conv: Convention) -> f64 {
        match conv {
            Convention::TheoremA => self.a_thm,
            Convention::ProofK2 => self.a_proof,
        }
    }

    pub fn b(&self, conv: Convention) -> f64 {
        match conv {
            Convention::TheoremA => self.b_thm,
            Convention::ProofK2 => self.b_proof,
        }
    }
}

fn check_q(func: &'static str, q: f64) -> Result<()> {
    if !(q > 2.0 && q < 4.0) {
        return Err(Error::domain(func, format!("q = {q} must lie in (2, 4)")));
    }
    Ok(())
}

/// Each constant is evaluated from its own printed formula; the ratios record
/// how the conventions relate.
pub fn thm_constants(q: f64) -> Result<ThmConstants> {
    check_q("thm_constants", q)?;
    let qp = conjugate(q);
    let beta_space = beta_singular(1.5 - 2.0 / q, 1.5 - 1.0 / qp)?;
    let beta_time = beta_singular(1.0 - 1.0 / q, 0.5)?;
    let c1_qp = c1(qp)?;
    let c1_one = c1(1.0)?;
    let c2q = c2(q)?;
    let c2_mid = c2(2.0 * q / (q + 2.0))?;

    let a_thm = c1_qp * c2_mid * beta_space;
    let b_thm = 2.0 * (c2q * c1_qp * c1_one * beta_space * beta_time).sqrt();
    let k1 = 2.0 * c1_qp * c1_one * beta_space * beta_time;
    let k2 = 2.0 * c1_qp * c2_mid * beta_space;
    let b_proof = 2.0 * (c2q * k1).sqrt();
    Ok(ThmConstants {
        q,
        a_thm,
        b_thm,
        k1,
        k2,
        a_proof: k2,
        b_proof,
        c2q,
        k2_over_a_thm: k2 / a_thm,
        b_proof_over_b_thm: b_proof / b_thm,
    })
}

/// `A χ n + B √χ`.
pub fn existence_lhs(a: f64, b: f64, chi: f64, n: f64) -> f64 {
    a * chi * n + b * chi.sqrt()
}

/// Root of `A χ n + B √χ = 1` in the cancellation-free form
/// `√χ* = 2 / (B + √(B² + 4An))`, which reduces to `1/B²` at `n = 0`.
pub fn chi_max_from(a: f64, b: f64, n: f64) -> f64 {
    let s = 2.0 / (b + (b * b + 4.0 * a * n).sqrt());
    s * s
}

/// Largest admissible sensitivity under the proof convention.
pub fn chi_max(init: &InitialData, q: f64) -> Result<f64> {
    let k = thm_constants(q)?;
    Ok(chi_max_from(k.a_proof, k.b_proof, init.grad_c0_l2))
}

/// `P(z) = K₁χz² + (K₂χn − 1)z + C₂(q)`.
pub fn polynomial(k: &ThmConstants, chi: f64, n: f64, z: f64) -> f64 {
    k.k1 * chi * z * z + (k.k2 * chi * n - 1.0) * z + k.c2q
}

/// `|P(z)|` relative to the largest of its three terms.
pub fn polynomial_residual(k: &ThmConstants, chi: f64, n: f64, z: f64) -> f64 {
    let scale = (k.k1 * chi * z * z)
        .abs()
        .max(((k.k2 * chi * n - 1.0) * z).abs())
        .max(k.c2q);
    polynomial(k, chi, n, z).abs() / scale
}

/// Smaller root of `P`, or `None` when the discriminant is negative. A
/// discriminant within rounding of zero is treated as zero.
///
/// The printed form `(1 − K₂χn − √disc)/(2K₁χ)` cancels catastrophically as
/// `χ → 0`; the equivalent `2C₂ / (1 − K₂χn + √disc)` does not.
pub fn smaller_root(k: &ThmConstants, chi: f64, n: f64) -> Option<f64> {
    let m = 1.0 - k.k2 * chi * n;
    let mut disc = m * m - 4.0 * k.k1 * chi * k.c2q;
    if disc < 0.0 {
        if disc > -1e-13 * m * m {
            disc = 0.0;
        } else {
            return None;
        }
    }
    if m <= 0.0 {
        return None;
    }
    Some(2.0 * k.c2q / (m + disc.sqrt()))
}

/// `B_q(χ)`: the uniform bound on `t^{1−1/q}‖ρ_t‖_{L^q}`.
pub fn bq_chi(params: &ModelParams, init: &InitialData, q: f64) -> Result<f64> {
    let k = thm_constants(q)?;
    bq_with(&k, params.chi, init.grad_c0_l2)
}

pub(crate) fn bq_with(k: &ThmConstants, chi: f64, n: f64) -> Result<f64> {
    let m = 1.0 - k.k2 * chi * n;
    let disc = m * m - 4.0 * k.k1 * chi * k.c2q;
    if !(disc > 0.0) || m <= 0.0 {
        return Err(Error::Inadmissible(format!(
            "discriminant {disc:.6e} of the density-bound polynomial is not positive at chi = {chi}"
        )));
    }
    let z = 2.0 * k.c2q / (m + disc.sqrt());
    debug_assert!(polynomial_residual(k, chi, n, z) < 1e-10);
    Ok(z)
}

/// `B_r(χ)` from `B_q(χ)`: interpolation below `q`, the printed composite above.
pub fn br_ladder(params: &ModelParams, init: &InitialData, q: f64, r: f64) -> Result<f64> {
    if !(r > 1.0) || !r.is_finite() {
        return Err(Error::domain("br_ladder", format!("r = {r} must be a finite real > 1")));
    }
    let k = thm_constants(q)?;
    let bq = bq_with(&k, params.chi, init.grad_c0_l2)?;
    br_from_bq(q, bq, params.chi, init.grad_c0_l2, r)
}

fn br_from_bq(q: f64, bq: f64, chi: f64, n: f64, r: f64) -> Result<f64> {
    let below = |s: f64| bq.powf((s - 1.0) * q / (s * (q - 1.0)));
    if r == q {
        return Ok(bq);
    }
    if r < q {
        return Ok(below(r));
    }
    let r_mid = 2.0 * r / (r + 1.0);
    let s1 = q * r / (r + 1.0);
    let s2 = (2.0 * q * r / ((q - 2.0) * (r + 1.0))).min(q);
    let p = (2.0 * r * q / (3.0 * r * q + q - 4.0 * r - 2.0)).max(1.0);
    Ok(c2(r)? + c1(r_mid)? * below(s1) * (chi * n * c2(r_mid)? + below(s2) * c2(p)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub q: f64,
    pub chi: f64,
    pub grad_c0_l2: f64,
    pub constants: ThmConstants,
    /// Existence left-hand side under the proof convention.
    pub lhs: f64,
    pub lhs_theorem: f64,
    /// `lhs < 1`; the gating verdict.
    pub existence_ok: bool,
    pub existence_ok_theorem: bool,
    pub chi_max: f64,
    pub chi_max_theorem: f64,
    pub bq: Option<f64>,
    pub c0: f64,
    pub uniqueness_lhs: Option<f64>,
    pub uniqueness_ok: Option<bool>,
    pub gating_convention: Convention,
}

pub fn check_existence(params: &ModelParams, init: &InitialData, q: f64) -> Result<AdmissibilityReport> {
    check_admissibility(params, init, q, DEFAULT_C0)
}

/// Existence verdict in both conventions plus, when existence holds, `B_q(χ)`
/// and the uniqueness verdict for the given `C₀`.
pub fn check_admissibility(params: &ModelParams, init: &InitialData, q: f64, c0: f64) -> Result<AdmissibilityReport> {
    if !(c0 > 0.0) {
        return Err(Error::domain("check_admissibility", format!("C0 = {c0} must be > 0")));
    }
    let k = thm_constants(q)?;
    let n = init.grad_c0_l2;
    let chi = params.chi;
    let lhs = existence_lhs(k.a_proof, k.b_proof, chi, n);
    let lhs_theorem = existence_lhs(k.a_thm, k.b_thm, chi, n);
    let existence_ok = lhs < 1.0 - BOUNDARY_TOL;
    let bq = if existence_ok {
        Some(bq_with(&k, chi, n)?)
    } else {
        None
    };
    let uniqueness_lhs = bq.map(|b| c0 * chi * (n + b));
    Ok(AdmissibilityReport {
        q,
        chi,
        grad_c0_l2: n,
        constants: k,
        lhs,
        lhs_theorem,
        existence_ok,
        existence_ok_theorem: lhs_theorem < 1.0 - BOUNDARY_TOL,
        chi_max: chi_max_from(k.a_proof, k.b_proof, n),
        chi_max_theorem: chi_max_from(k.a_thm, k.b_thm, n),
        bq,
        c0,
        uniqueness_lhs,
        uniqueness_ok: uniqueness_lhs.map(|l| l < 1.0),
        gating_convention: Convention::ProofK2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub c0: f64,
    pub chi: f64,
    pub lhs: f64,
    pub ok: bool,
    pub chi_max_existence: f64,
    /// Largest χ passing both gates (supremum of the admissible interval).
    pub chi_max_both: f64,
    /// `(χ, χ B_q(χ))` at `χ = 10^{-k}`, showing the product vanish.
    pub vanishing_product: Vec<(f64, f64)>,
}

pub fn check_uniqueness(params: &ModelParams, init: &InitialData, q: f64, c0: f64) -> Result<UniquenessReport> {
    if !(c0 > 0.0) || !c0.is_finite() {
        return Err(Error::domain("check_uniqueness", format!("C0 = {c0} must be > 0")));
    }
    let k = thm_constants(q)?;
    let n = init.grad_c0_l2;
    let chi = params.chi;
    let bq = bq_with(&k, chi, n)?;
    let lhs = c0 * chi * (n + bq);

    let cm = chi_max_from(k.a_proof, k.b_proof, n);
    // C₀χ(n + B_q(χ)) is increasing in χ, so bisection finds the gate boundary.
    let gate = |x: f64| c0 * x * (n + smaller_root(&k, x, n).unwrap_or(f64::INFINITY)) - 1.0;
    let chi_max_both = if gate(cm) < 0.0 {
        cm
    } else {
        let (mut lo, mut hi) = (0.0, cm);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if gate(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let vanishing_product = (2..=8)
        .map(|e| {
            let x = 10f64.powi(-e);
            (x, x * smaller_root(&k, x, n).unwrap_or(f64::NAN))
        })
        .collect();
    Ok(UniquenessReport {
        c0,
        chi,
        lhs,
        ok: lhs < 1.0,
        chi_max_existence: cm,
        chi_max_both,
        vanishing_product,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QSweepRow {
    pub q: f64,
    pub a_proof: f64,
    pub b_proof: f64,
    pub chi_max: f64,
    pub lhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QSweep {
    pub chi: f64,
    pub grad_c0_l2: f64,
    pub rows: Vec<QSweepRow>,
    /// The `q` minimizing the existence left-hand side at `chi`.
    pub best_q: f64,
}

/// Proof-convention existence data over `q = 2 + j·(2/(points+1))`, `j = 1..=points`.
pub fn q_sweep(chi: f64, init: &InitialData, points: usize) -> Result<QSweep> {
    if points == 0 {
        return Err(Error::domain("q_sweep", "need at least one point"));
    }
    let n = init.grad_c0_l2;
    let mut rows = Vec::with_capacity(points);
    for j in 1..=points {
        let q = 2.0 + 2.0 * j as f64 / (points + 1) as f64;
        let k = thm_constants(q)?;
        rows.push(QSweepRow {
            q,
            a_proof: k.a_proof,
            b_proof: k.b_proof,
            chi_max: chi_max_from(k.a_proof, k.b_proof, n),
            lhs: existence_lhs(k.a_proof, k.b_proof, chi, n),
        });
    }
    let best_q = rows
        .iter()
        .min_by(|a, b| a.lhs.partial_cmp(&b.lhs).unwrap())
        .map(|r| r.q)
        .unwrap();
    Ok(QSweep {
        chi,
        grad_c0_l2: n,
        rows,
        best_q,
    })
}
