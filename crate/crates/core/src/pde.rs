//! Spectral time stepping of the mild Keller–Segel system on the torus.
//!
//! The chemical is split as `c = c_free + c_mem`: `c_free(t) = e^{-λt} g_t ∗ c₀`
//! is known in closed form and contributes the drift `b₀`, while `c_mem` starts
//! at zero and carries the memory of `ρ`. The drift is `b₀ + χ∇c_mem`, so the
//! initial chemical enters once.

use serde::{Deserialize, Serialize};

use crate::analysis::{GrowthTrace, NormCurve, Quantity, GROWTH_LIMIT_RATIO};
use crate::constants::{self, Convention};
use crate::error::{Error, Result};
use crate::grid::{
    chemo_source_multiplier, grad_heat_multiplier, heat_multiplier, integrated_grad_multiplier, Grid,
    GridField, SpectralField, VectorField,
};
use crate::kernels::{b0_unchecked, InitialData, ModelParams};
use crate::numerics::pairwise_sum;

/// Boundary-frame mass above which the torus truncation is refused.
pub const BOUNDARY_MASS_LIMIT: f64 = 1e-8;
/// Pointwise negativity tolerated before aborting.
pub const NEGATIVITY_TOL: f64 = -1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeConfig {
    pub grid: Grid,
    pub dt: f64,
    pub params: ModelParams,
    pub init: InitialData,
    pub save_times: Vec<f64>,
    pub q_list: Vec<f64>,
    /// Keep every step's spectral density for the memory-integral drift.
    pub retain_history: bool,
    /// Run past admissibility until non-finite values or `10³×` growth of `‖ρ‖_∞`.
    pub blowup_probe: bool,
}

impl PdeConfig {
    pub fn new(grid: Grid, dt: f64, params: ModelParams, init: InitialData) -> Self {
        Self {
            grid,
            dt,
            params,
            init,
            save_times: vec![params.horizon],
            q_list: vec![constants::DEFAULT_Q],
            retain_history: false,
            blowup_probe: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.dt > 0.0 && self.dt <= self.params.horizon) {
            return Err(Error::domain(
                "PdeConfig",
                format!("dt = {} must lie in (0, horizon = {}]", self.dt, self.params.horizon),
            ));
        }
        if let Some(&s) = self.save_times.iter().find(|&&s| !(s >= 0.0 && s <= self.params.horizon)) {
            return Err(Error::domain("PdeConfig", format!("save time {s} outside [0, horizon]")));
        }
        if let Some(&q) = self.q_list.iter().find(|&&q| !(q > 1.0)) {
            return Err(Error::domain("PdeConfig", format!("norm exponent {q} must exceed 1")));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.params.horizon / self.dt).round() as usize
    }

    /// Step indices at which saves happen, ascending and deduplicated.
    pub fn save_steps(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self
            .save_times
            .iter()
            .map(|&t| ((t / self.dt).round() as usize).min(self.steps()))
            .collect();
        s.sort_unstable();
        s.dedup();
        s
    }
}

/// `n + 1` equally spaced times on `[0, horizon]`.
pub fn uniform_times(horizon: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| horizon * i as f64 / n as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeState {
    pub t: f64,
    pub rho: GridField,
    /// Full chemical `c_free + c_mem`.
    pub c: GridField,
    /// Memory part of the chemical, started from zero.
    pub c_mem: GridField,
    pub step_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftMode {
    /// `b₀ + χ∇c_mem` from the chemical recursion.
    ChemoGradient,
    /// `b₀ + χ Σ_m Δ e^{-λ(t-t_m)} K_{t-t_m} ∗ ρ_{t_m}` over the stored history, left endpoints.
    MemoryIntegral,
}

fn c_free_field(grid: &Grid, params: &ModelParams, init: &InitialData, t: f64) -> GridField {
    let decay = (-params.lambda * t).exp();
    GridField::from_fn(*grid, |p| decay * init.c0.heat_evolved(t, p))
}

fn b0_field(grid: &Grid, params: &ModelParams, init: &InitialData, t: f64) -> VectorField {
    let mut out = VectorField::zeros(*grid);
    if params.chi == 0.0 || init.c0.is_zero() {
        return out;
    }
    let g = grid.points();
    for iy in 0..g {
        for ix in 0..g {
            let b = b0_unchecked(params, &init.c0, t, grid.node(ix, iy), false);
            out.x[iy * g + ix] = b[0];
            out.y[iy * g + ix] = b[1];
        }
    }
    out
}

fn second_moment(f: &GridField) -> f64 {
    let grid = *f.grid();
    let g = grid.points();
    let mut w = Vec::with_capacity(grid.len());
    for iy in 0..g {
        for ix in 0..g {
            let p = grid.node(ix, iy);
            w.push((p[0] * p[0] + p[1] * p[1]) * f.values()[iy * g + ix]);
        }
    }
    pairwise_sum(&w) * grid.cell_area()
}

/// Samples the initial data on the grid and checks the truncation.
pub fn init_state(config: &PdeConfig) -> Result<PdeState> {
    config.validate()?;
    let grid = config.grid;
    let rho = GridField::from_fn(grid, |p| config.init.rho0.eval(p));
    let boundary_mass = rho.boundary_mass();
    if boundary_mass > BOUNDARY_MASS_LIMIT {
        return Err(Error::DomainTooSmall {
            boundary_mass,
            limit: BOUNDARY_MASS_LIMIT,
        });
    }
    Ok(PdeState {
        t: 0.0,
        c: c_free_field(&grid, &config.params, &config.init, 0.0),
        c_mem: GridField::zeros(grid),
        rho,
        step_index: 0,
    })
}

/// Stepper with precomputed multipliers. The spectral density and memory
/// chemical are the authoritative state; physical fields are derived.
pub struct PdeSolver {
    config: PdeConfig,
    heat: SpectralField,
    integrated_grad: [SpectralField; 2],
    derivative: [SpectralField; 2],
    source: SpectralField,
    decay: f64,
    t: f64,
    step_index: usize,
    rho: GridField,
    rho_hat: SpectralField,
    c_mem_hat: SpectralField,
    history: Vec<SpectralField>,
}

impl PdeSolver {
    pub fn new(config: &PdeConfig) -> Result<Self> {
        let state = init_state(config)?;
        Self::from_state(config, state)
    }

    /// Resumes from a state; stored history restarts at this state.
    pub fn from_state(config: &PdeConfig, state: PdeState) -> Result<Self> {
        config.validate()?;
        let grid = config.grid;
        if state.rho.grid() != &grid {
            return Err(Error::GridMismatch("state and config grids differ".into()));
        }
        let dt = config.dt;
        let rho_hat = state.rho.transform();
        let history = if config.retain_history {
            vec![rho_hat.clone()]
        } else {
            Vec::new()
        };
        Ok(Self {
            heat: heat_multiplier(&grid, dt),
            integrated_grad: [
                integrated_grad_multiplier(&grid, dt, 0)?,
                integrated_grad_multiplier(&grid, dt, 1)?,
            ],
            derivative: [grad_heat_multiplier(&grid, 0.0, 0)?, grad_heat_multiplier(&grid, 0.0, 1)?],
            source: chemo_source_multiplier(&grid, dt, config.params.lambda)?,
            decay: (-config.params.lambda * dt).exp(),
            t: state.t,
            step_index: state.step_index,
            c_mem_hat: state.c_mem.transform(),
            rho: state.rho,
            rho_hat,
            history,
            config: config.clone(),
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn rho(&self) -> &GridField {
        &self.rho
    }

    pub fn state(&self) -> PdeState {
        let c_mem = self.c_mem_hat.inverse();
        let mut c = c_free_field(&self.config.grid, &self.config.params, &self.config.init, self.t);
        for (a, b) in c.values_mut().iter_mut().zip(c_mem.values()) {
            *a += b;
        }
        PdeState {
            t: self.t,
            rho: self.rho.clone(),
            c,
            c_mem,
            step_index: self.step_index,
        }
    }

    fn gradient(&self, hat: &SpectralField, axis: usize) -> GridField {
        let mut s = hat.clone();
        s.apply(&self.derivative[axis]).expect("same grid");
        s.inverse()
    }

    /// `b₀ + χ∇c_mem` at the current time.
    pub fn drift(&self) -> VectorField {
        let p = &self.config.params;
        let mut b = b0_field(&self.config.grid, p, &self.config.init, self.t);
        if p.chi != 0.0 {
            let gx = self.gradient(&self.c_mem_hat, 0);
            let gy = self.gradient(&self.c_mem_hat, 1);
            for i in 0..b.x.len() {
                b.x[i] += p.chi * gx.values()[i];
                b.y[i] += p.chi * gy.values()[i];
            }
        }
        b
    }

    /// Memory-integral drift from the stored spectral history.
    pub fn drift_memory(&self) -> Result<VectorField> {
        if !self.config.retain_history || self.history.len() != self.step_index + 1 {
            return Err(Error::Precondition(
                "memory-integral drift needs the density history of every past step".into(),
            ));
        }
        let p = &self.config.params;
        let grid = self.config.grid;
        let mut b = b0_field(&grid, p, &self.config.init, self.t);
        if p.chi == 0.0 || self.step_index == 0 {
            return Ok(b);
        }
        let dt = self.config.dt;
        let n = self.step_index;
        for axis in 0..2 {
            let mut acc = vec![num_complex::Complex64::new(0.0, 0.0); grid.len()];
            for (m, hat) in self.history[..n].iter().enumerate() {
                let lag = (n - m) as f64 * dt;
                let w = dt * (-p.lambda * lag).exp();
                let k = grad_heat_multiplier(&grid, lag, axis)?;
                for ((a, r), kk) in acc.iter_mut().zip(hat.coeffs()).zip(k.coeffs()) {
                    *a += w * r * kk;
                }
            }
            let field = SpectralField::new(grid, acc)?.inverse();
            let target = if axis == 0 { &mut b.x } else { &mut b.y };
            for (t, v) in target.iter_mut().zip(field.values()) {
                *t += p.chi * v;
            }
        }
        Ok(b)
    }

    /// One frozen-coefficient step. On failure the solver is left unchanged.
    pub fn step(&mut self) -> Result<()> {
        let p = self.config.params;
        let dt = self.config.dt;
        let mut next = self.rho_hat.applied(&self.heat)?;
        if p.chi != 0.0 {
            let b = self.drift();
            for (axis, comp) in [&b.x, &b.y].into_iter().enumerate() {
                let flux: Vec<f64> = comp.iter().zip(self.rho.values()).map(|(b, r)| b * r).collect();
                let mut flux_hat = GridField::new(self.config.grid, flux)?.transform();
                flux_hat.apply(&self.integrated_grad[axis])?;
                for (n, f) in next.coeffs_mut().iter_mut().zip(flux_hat.coeffs()) {
                    *n -= f;
                }
            }
        }
        let t_next = (self.step_index + 1) as f64 * dt;
        let rho_next = next.inverse();
        if !rho_next.all_finite() {
            return Err(Error::BlowUp {
                t: t_next,
                detail: "non-finite density".into(),
                last_state: Some(Box::new(self.state())),
            });
        }
        let min = rho_next.min();
        if min < NEGATIVITY_TOL {
            return Err(Error::Negativity { t: t_next, min });
        }
        let mut c_next = self.c_mem_hat.applied(&self.heat)?;
        let src = next.applied(&self.source)?;
        for (c, s) in c_next.coeffs_mut().iter_mut().zip(src.coeffs()) {
            *c = self.decay * *c + s;
        }
        self.rho_hat = next;
        self.rho = rho_next;
        self.c_mem_hat = c_next;
        self.t = t_next;
        self.step_index += 1;
        if self.config.retain_history {
            self.history.push(self.rho_hat.clone());
        }
        Ok(())
    }
}

/// One step from a bare state; rebuilds multipliers on each call.
pub fn step(state: &PdeState, config: &PdeConfig) -> Result<PdeState> {
    let mut s = PdeSolver::from_state(config, state.clone())?;
    s.step()?;
    Ok(s.state())
}

/// Drift field of a state. Memory mode needs the solver's stored history; use
/// [`PdeSolver::drift_memory`].
pub fn drift_field(state: &PdeState, config: &PdeConfig, mode: DriftMode) -> Result<VectorField> {
    match mode {
        DriftMode::ChemoGradient => Ok(PdeSolver::from_state(config, state.clone())?.drift()),
        DriftMode::MemoryIntegral => {
            let s = PdeSolver::from_state(config, state.clone())?;
            if state.step_index > 0 {
                return Err(Error::Precondition(
                    "memory-integral drift needs the density history of every past step".into(),
                ));
            }
            s.drift_memory()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum RunOutcome {
    Completed,
    /// Probe mode stopped once `‖ρ‖_∞` exceeded the growth limit.
    GrowthLimit { t: f64 },
    /// Probe mode stopped on non-finite or negative density.
    Aborted { t: f64, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeRun {
    pub states: Vec<PdeState>,
    pub rho_curves: Vec<NormCurve>,
    pub drift_curves: Vec<NormCurve>,
    pub trace: GrowthTrace,
    pub outcome: RunOutcome,
    pub final_boundary_mass: f64,
    pub warnings: Vec<String>,
}

/// Bound attached to the `q`-curve: `B_q(χ)` for `q ∈ (2, 4)`, the ladder value
/// from the default `q` otherwise, and none when the parameters are inadmissible.
pub fn density_bound(params: &ModelParams, init: &InitialData, q: f64) -> Option<f64> {
    if q > 2.0 && q < 4.0 {
        constants::bq_chi(params, init, q).ok()
    } else {
        constants::br_ladder(params, init, constants::DEFAULT_Q, q).ok()
    }
}

pub fn run(config: &PdeConfig) -> Result<PdeRun> {
    let mut solver = PdeSolver::new(config)?;
    let save_steps = config.save_steps();
    let total = config.steps();
    let p = config.params;

    let mut states = Vec::new();
    let mut rho_samples: Vec<Vec<(f64, f64)>> = vec![Vec::new(); config.q_list.len()];
    let mut drift_samples: Vec<Vec<(f64, f64)>> = vec![Vec::new(); 2];
    let mut trace = GrowthTrace::default();
    let initial_sup = solver.rho().max_abs();
    let mut outcome = RunOutcome::Completed;

    let mut record = |solver: &PdeSolver, states: &mut Vec<PdeState>, trace: &mut GrowthTrace| -> Result<()> {
        let t = solver.t();
        let rho = solver.rho();
        for (k, &q) in config.q_list.iter().enumerate() {
            rho_samples[k].push((t, t.powf(1.0 - 1.0 / q) * rho.lq_norm(q)?));
        }
        let b = solver.drift();
        for (k, &r) in [2.0, f64::INFINITY].iter().enumerate() {
            let w = if r.is_infinite() { t.sqrt() } else { t.powf(0.5 - 1.0 / r) };
            drift_samples[k].push((t, w * b.component_lr_norm(r)?));
        }
        trace.times.push(t);
        trace.sup_norms.push(rho.max_abs());
        trace.second_moments.push(second_moment(rho));
        states.push(solver.state());
        Ok(())
    };

    let mut next_save = 0;
    if save_steps.first() == Some(&0) {
        record(&solver, &mut states, &mut trace)?;
        next_save = 1;
    }
    for n in 1..=total {
        match solver.step() {
            Ok(()) => {}
            Err(e) if config.blowup_probe => {
                let (t, reason) = match &e {
                    Error::BlowUp { t, detail, .. } => (*t, detail.clone()),
                    Error::Negativity { t, min } => (*t, format!("negative density {min:.3e}")),
                    _ => return Err(e),
                };
                trace.aborted_at = Some(t);
                trace.abort_reason = Some(reason.clone());
                outcome = RunOutcome::Aborted { t, reason };
                break;
            }
            Err(e) => return Err(e),
        }
        let over_limit = config.blowup_probe && solver.rho().max_abs() > GROWTH_LIMIT_RATIO * initial_sup;
        if next_save < save_steps.len() && save_steps[next_save] == n || over_limit {
            record(&solver, &mut states, &mut trace)?;
            if next_save < save_steps.len() && save_steps[next_save] == n {
                next_save += 1;
            }
        }
        if over_limit {
            trace.growth_limit_hit = true;
            outcome = RunOutcome::GrowthLimit { t: solver.t() };
            break;
        }
    }

    let convention = Convention::ProofK2;
    let mut rho_curves = Vec::new();
    for (k, &q) in config.q_list.iter().enumerate() {
        rho_curves.push(NormCurve::new(
            Quantity::RhoLq,
            q,
            std::mem::take(&mut rho_samples[k]),
            density_bound(&p, &config.init, q),
            convention,
        )?);
    }
    let mut drift_curves = Vec::new();
    for (k, &r) in [2.0, f64::INFINITY].iter().enumerate() {
        drift_curves.push(NormCurve::new(
            Quantity::DriftLr,
            r,
            std::mem::take(&mut drift_samples[k]),
            None,
            convention,
        )?);
    }
    let final_boundary_mass = solver.rho().boundary_mass();
    let mut warnings = Vec::new();
    if final_boundary_mass > BOUNDARY_MASS_LIMIT {
        warnings.push(format!(
            "boundary mass {final_boundary_mass:.3e} exceeds {BOUNDARY_MASS_LIMIT:e}; torus truncation may matter"
        ));
    }
    for c in &rho_curves {
        if let Some(v) = c.verdict() {
            if v != crate::analysis::BoundVerdict::Within {
                warnings.push(format!(
                    "bound-exceeded (discretization or convention): q = {} max {} vs bound {}",
                    c.exponent,
                    c.max_value(),
                    c.bound.unwrap()
                ));
            }
        }
    }
    Ok(PdeRun {
        states,
        rho_curves,
        drift_curves,
        trace,
        outcome,
        final_boundary_mass,
        warnings,
    })
}
