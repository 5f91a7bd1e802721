//! Post-processing: norm curves and their bound verdicts, the `𝒩_q`
//! running supremum, particle-versus-grid distances and the blow-up
//! classifier.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constants::Convention;
use crate::error::{Error, Result};
use crate::grid::{Grid, GridField};
use crate::numerics::pairwise_sum;

/// Serializes `f64` with infinities as the strings `"inf"`/`"-inf"`, since JSON has no infinity.
pub mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("not a number: {t}"))),
        }
    }
}

pub fn format_exponent(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantity {
    /// `t^{1-1/q}‖ρ_t‖_{L^q}`.
    RhoLq,
    /// `t^{1/2-1/r}‖b_t‖_{L^r}`.
    DriftLr,
    /// Running supremum of the scaled density norm.
    NqFunctional,
}

impl Quantity {
    pub fn label(self) -> &'static str {
        match self {
            Quantity::RhoLq => "rho-lq",
            Quantity::DriftLr => "drift-lr",
            Quantity::NqFunctional => "nq-functional",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundVerdict {
    Within,
    /// Exceeded by less than [`SOFT_MARGIN`]: flagged, not failed.
    SoftExceeded,
    /// "bound-exceeded (discretization or convention)".
    Exceeded,
}

/// Relative excess tolerated as a soft pass.
pub const SOFT_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormCurve {
    pub quantity: Quantity,
    #[serde(with = "extended_f64")]
    pub exponent: f64,
    pub samples: Vec<(f64, f64)>,
    pub bound: Option<f64>,
    pub convention: Convention,
}

impl NormCurve {
    pub fn new(
        quantity: Quantity,
        exponent: f64,
        samples: Vec<(f64, f64)>,
        bound: Option<f64>,
        convention: Convention,
    ) -> Result<Self> {
        for w in samples.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::Precondition(format!(
                    "curve times must increase strictly ({} then {})",
                    w[0].0, w[1].0
                )));
            }
        }
        if let Some(&(t, v)) = samples.iter().find(|(_, v)| !(*v >= 0.0)) {
            return Err(Error::Precondition(format!("negative or NaN curve value {v} at t = {t}")));
        }
        Ok(Self {
            quantity,
            exponent,
            samples,
            bound,
            convention,
        })
    }

    pub fn max_value(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.1))
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.0).collect()
    }

    pub fn verdict(&self) -> Option<BoundVerdict> {
        self.bound.map(|b| verdict(self.max_value(), b))
    }
}

pub fn verdict(value: f64, bound: f64) -> BoundVerdict {
    if value <= bound {
        BoundVerdict::Within
    } else if value <= bound * (1.0 + SOFT_MARGIN) {
        BoundVerdict::SoftExceeded
    } else {
        BoundVerdict::Exceeded
    }
}

/// CSV with columns `t,quantity,q_or_r,value,bound,bound_convention`; an
/// absent bound is an empty cell.
pub fn write_curves_csv(path: &Path, curves: &[NormCurve]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t,quantity,q_or_r,value,bound,bound_convention")?;
    for c in curves {
        let bound = c.bound.map(|b| format!("{b}")).unwrap_or_default();
        for &(t, v) in &c.samples {
            writeln!(
                w,
                "{t},{},{},{v},{bound},{}",
                c.quantity.label(),
                format_exponent(c.exponent),
                c.convention.label()
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `out_k = max_{j ≤ k} v_j`.
pub fn running_sup(samples: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut best = f64::NEG_INFINITY;
    samples
        .iter()
        .map(|&(t, v)| {
            best = best.max(v);
            (t, best)
        })
        .collect()
}

/// `𝒩_q(t) = sup_{s ≤ t} s^{1-1/q}‖ρ_s‖_q` from raw norms `(s, ‖ρ_s‖_q)`.
pub fn nq_functional(raw: &[(f64, f64)], q: f64, bound: Option<f64>) -> Result<NormCurve> {
    if raw.is_empty() {
        return Err(Error::Precondition("nq_functional needs at least one sample".into()));
    }
    if !(q >= 1.0) {
        return Err(Error::domain("nq_functional", format!("q = {q} must be >= 1")));
    }
    let p = 1.0 - 1.0 / q;
    let scaled: Vec<(f64, f64)> = raw.iter().map(|&(t, v)| (t, t.powf(p) * v)).collect();
    NormCurve::new(Quantity::NqFunctional, q, running_sup(&scaled), bound, Convention::ProofK2)
}

/// `(‖a − b‖_{L¹}, ‖a − b‖_{L^∞})` by grid quadrature.
pub fn marginal_distance(a: &GridField, b: &GridField) -> Result<(f64, f64)> {
    let d = a.difference(b)?;
    let abs: Vec<f64> = d.values().iter().map(|v| v.abs()).collect();
    Ok((pairwise_sum(&abs) * a.grid().cell_area(), d.max_abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_particles: usize,
    pub bandwidth: f64,
    pub l1: f64,
    pub linf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub times: Vec<f64>,
    pub l1_distance: Vec<f64>,
    pub linf_distance: Vec<f64>,
    pub n_particles: usize,
    pub grid: Grid,
    /// Terminal distances for each ensemble size.
    pub sweep: Vec<SweepRow>,
    pub notes: Vec<String>,
}

/// Growth history of a run, sampled at save times.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GrowthTrace {
    pub times: Vec<f64>,
    pub sup_norms: Vec<f64>,
    pub second_moments: Vec<f64>,
    pub aborted_at: Option<f64>,
    pub abort_reason: Option<String>,
    /// Set when the run stopped at the growth limit.
    pub growth_limit_hit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlowupClass {
    Stable,
    Growing,
    Aborted,
}

/// Engineering thresholds, not derived from any theory.
pub const GROWTH_FLAG_RATIO: f64 = 1.5;
pub const GROWTH_LIMIT_RATIO: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupReport {
    pub classification: BlowupClass,
    pub initial_sup: f64,
    pub max_sup: f64,
    pub sup_norm_trajectory: Vec<(f64, f64)>,
    pub abort_time: Option<f64>,
    pub abort_reason: Option<String>,
    /// Least-squares slope of the second moment in time; 2 for pure heat flow.
    pub second_moment_rate: f64,
    pub thresholds_note: String,
}

pub fn blowup_indicator(trace: &GrowthTrace) -> BlowupReport {
    let initial_sup = trace.sup_norms.first().copied().unwrap_or(0.0);
    let max_sup = trace.sup_norms.iter().copied().fold(0.0, f64::max);
    let last = trace.sup_norms.last().copied().unwrap_or(0.0);
    let classification = if trace.aborted_at.is_some() {
        BlowupClass::Aborted
    } else if trace.growth_limit_hit || last > GROWTH_FLAG_RATIO * initial_sup {
        BlowupClass::Growing
    } else {
        BlowupClass::Stable
    };
    BlowupReport {
        classification,
        initial_sup,
        max_sup,
        sup_norm_trajectory: trace.times.iter().copied().zip(trace.sup_norms.iter().copied()).collect(),
        abort_time: trace.aborted_at,
        abort_reason: trace.abort_reason.clone(),
        second_moment_rate: slope(&trace.times, &trace.second_moments),
        thresholds_note: format!(
            "engineering thresholds: growing when final sup-norm exceeds {GROWTH_FLAG_RATIO}x initial \
             or the run stops at {GROWTH_LIMIT_RATIO:e}x; aborted on non-finite or negative density"
        ),
    }
}

fn slope(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len().min(y.len());
    if n < 2 {
        return 0.0;
    }
    let mt = t[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        num += (t[i] - mt) * (y[i] - my);
        den += (t[i] - mt) * (t[i] - mt);
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}
