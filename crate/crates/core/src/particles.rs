//! Regularized interacting particle system with full-past memory.
//!
//! Particle `i` at step `n` feels
//! `b₀^ε(t_n, X) + χ Σ_m w_m e^{-λ(t_n - t_m)} (1/N) Σ_j K^ε_{t_n - t_m}(X - X_{j,m})`
//! over retained past slices `m < n`. The direct evaluator performs that sum;
//! the field evaluator instead advances a grid chemical fed by deposited
//! densities. Noise comes from ChaCha20 streams keyed by `(seed, particle, step)`,
//! so paths do not depend on scheduling or on the ensemble size.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{marginal_distance, GrowthTrace, NormCurve, Quantity};
use crate::constants::Convention;
use crate::error::{Error, Result};
use crate::grid::{
    chemo_source_multiplier, default_bandwidth, deposit_xy, grad_heat_multiplier, heat_multiplier, kde_xy,
    Grid, GridField, SpectralField, VectorField,
};
use crate::kernels::{b0_sup_bound, b0_unchecked, reg_kernel_sup, InitialData, ModelParams, Vec2};
use crate::numerics::{exp_nonpositive, pairwise_sum};
use crate::pde::density_bound;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftEvaluator {
    /// Pairwise sum over all retained past slices, in free space.
    Direct,
    /// Grid chemical recursion with bilinear interpolation, on the torus.
    Field,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_particles: usize,
    pub dt: f64,
    pub params: ModelParams,
    pub init: InitialData,
    pub drift_mode: DriftEvaluator,
    /// Needed by the field evaluator and by density estimation.
    pub grid: Grid,
    pub memory_stride: usize,
    pub save_times: Vec<f64>,
    pub seed: u64,
    pub q_list: Vec<f64>,
    /// KDE bandwidth; `None` means `N^{-1/6}`.
    pub bandwidth: Option<f64>,
    /// Worker count; `None` uses the ambient pool.
    pub threads: Option<usize>,
    /// Multiplies the Brownian increments; 1 except in tests.
    pub noise_scale: f64,
    /// RNG stream of each particle; `None` means stream `i` for particle `i`.
    pub stream_ids: Option<Vec<u64>>,
}

impl SimConfig {
    pub fn new(
        n_particles: usize,
        dt: f64,
        params: ModelParams,
        init: InitialData,
        drift_mode: DriftEvaluator,
        grid: Grid,
        seed: u64,
    ) -> Self {
        Self {
            n_particles,
            dt,
            params,
            init,
            drift_mode,
            grid,
            memory_stride: 1,
            save_times: vec![params.horizon],
            seed,
            q_list: vec![crate::constants::DEFAULT_Q],
            bandwidth: None,
            threads: None,
            noise_scale: 1.0,
            stream_ids: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.params.epsilon > 0.0) {
            return Err(Error::Precondition(
                "particles need epsilon > 0: the unregularized kernel is not bounded".into(),
            ));
        }
        if self.n_particles == 0 {
            return Err(Error::domain("SimConfig", "need at least one particle"));
        }
        if !(self.dt > 0.0 && self.dt <= self.params.horizon) {
            return Err(Error::domain("SimConfig", format!("dt = {} must lie in (0, horizon]", self.dt)));
        }
        if self.memory_stride == 0 {
            return Err(Error::domain("SimConfig", "memory stride must be >= 1"));
        }
        if let Some(&s) = self.save_times.iter().find(|&&s| !(s >= 0.0 && s <= self.params.horizon)) {
            return Err(Error::domain("SimConfig", format!("save time {s} outside [0, horizon]")));
        }
        if let Some(ids) = &self.stream_ids {
            if ids.len() != self.n_particles {
                return Err(Error::domain("SimConfig", "one stream id per particle"));
            }
        }
        if let Some(h) = self.bandwidth {
            if !(h > 0.0) {
                return Err(Error::domain("SimConfig", format!("bandwidth {h} must be > 0")));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::domain("SimConfig", "threads must be >= 1"));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.params.horizon / self.dt).round() as usize
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth.unwrap_or_else(|| default_bandwidth(self.n_particles))
    }

    fn stream(&self, i: usize) -> u64 {
        self.stream_ids.as_ref().map_or(i as u64, |s| s[i])
    }

    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.memory_stride as f64 * self.dt > self.params.epsilon {
            w.push(format!(
                "memory stride {} x dt {} exceeds epsilon {}; the memory quadrature is coarse",
                self.memory_stride, self.dt, self.params.epsilon
            ));
        }
        w
    }

    fn save_steps(&self) -> Vec<usize> {
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

/// Uniform in `(0, 1]` from the top 53 bits.
#[inline]
fn unit_open(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
}

/// Stream words used before the first step.
const INIT_WORDS: u128 = 16;
/// Stream words reserved per step.
const STEP_WORDS: u128 = 16;

fn stream_rng(seed: u64, stream: u64, word_pos: u128) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);
    rng
}

/// Box–Muller pair from two stream words.
fn normal_pair(rng: &mut ChaCha20Rng) -> [f64; 2] {
    let u1 = unit_open(rng.next_u64());
    let u2 = unit_open(rng.next_u64());
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (2.0 * PI * u2).sin_cos();
    [r * c, r * s]
}

fn step_normals(seed: u64, stream: u64, step: usize) -> [f64; 2] {
    let mut rng = stream_rng(seed, stream, INIT_WORDS + STEP_WORDS * step as u128);
    normal_pair(&mut rng)
}

fn initial_sample(config: &SimConfig, i: usize) -> Vec2 {
    let mut rng = stream_rng(config.seed, config.stream(i), 0);
    let comps = config.init.rho0.components();
    let u = unit_open(rng.next_u64());
    let mut acc = 0.0;
    let mut pick = comps.len() - 1;
    for (k, c) in comps.iter().enumerate() {
        acc += c.weight;
        if u <= acc {
            pick = k;
            break;
        }
    }
    let c = &comps[pick];
    let z = normal_pair(&mut rng);
    let s = c.variance.sqrt();
    [c.center[0] + s * z[0], c.center[1] + s * z[1]]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleHistory {
    pub time_grid: Vec<f64>,
    /// `xs[n][j]` is the first coordinate of particle `j` at step `n`.
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<Vec<f64>>,
    pub params: ModelParams,
    pub seed: u64,
    pub memory_stride: usize,
}

impl ParticleHistory {
    pub fn n_particles(&self) -> usize {
        self.xs.first().map_or(0, |s| s.len())
    }

    pub fn slices(&self) -> usize {
        self.xs.len()
    }

    pub fn position(&self, n: usize, j: usize) -> Vec2 {
        [self.xs[n][j], self.ys[n][j]]
    }

    pub fn slice(&self, n: usize) -> Vec<Vec2> {
        self.xs[n].iter().zip(&self.ys[n]).map(|(&x, &y)| [x, y]).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.xs.iter().chain(&self.ys).all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// CSV `t,particle_id,x,y` for the given steps.
    pub fn write_snapshot_csv(&self, path: &Path, steps: &[usize]) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "t,particle_id,x,y")?;
        for &n in steps {
            for j in 0..self.n_particles() {
                writeln!(w, "{},{j},{},{}", self.time_grid[n], self.xs[n][j], self.ys[n][j])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Binary: `N` (u64), slice count (u64), `dt` (f64), seed (u64), then each
    /// slice as interleaved `x, y` f64 pairs; little-endian throughout.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let dt = if self.time_grid.len() > 1 {
            self.time_grid[1] - self.time_grid[0]
        } else {
            0.0
        };
        w.write_all(&(self.n_particles() as u64).to_le_bytes())?;
        w.write_all(&(self.slices() as u64).to_le_bytes())?;
        w.write_all(&dt.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        for n in 0..self.slices() {
            for j in 0..self.n_particles() {
                w.write_all(&self.xs[n][j].to_le_bytes())?;
                w.write_all(&self.ys[n][j].to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Order-sensitive FNV-1a digest of every coordinate's bits.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.xs.iter().chain(&self.ys).flatten() {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

pub fn init_ensemble(config: &SimConfig) -> Result<ParticleHistory> {
    config.validate()?;
    let samples: Vec<Vec2> = (0..config.n_particles).map(|i| initial_sample(config, i)).collect();
    Ok(ParticleHistory {
        time_grid: vec![0.0],
        xs: vec![samples.iter().map(|p| p[0]).collect()],
        ys: vec![samples.iter().map(|p| p[1]).collect()],
        params: config.params,
        seed: config.seed,
        memory_stride: config.memory_stride,
    })
}

/// Retained slices `m ∈ {0, s, 2s, …}` with `m < n`, each weighted by the
/// length of the block it stands for, `min(s, n - m)·dt`.
pub fn memory_slices(n: usize, stride: usize, dt: f64) -> Vec<(usize, f64)> {
    (0..n).step_by(stride).map(|m| (m, (stride.min(n - m)) as f64 * dt)).collect()
}

/// `Σ_j (x - X_j) exp(-|x - X_j|²/(2τ))`, blocked with fixed lanes so the
/// loop vectorizes and the reduction order depends only on the slice length.
fn gaussian_weighted_sum(x: Vec2, xs: &[f64], ys: &[f64], inv_two_tau: f64) -> Vec2 {
    const LANES: usize = 8;
    const BLOCK: usize = 256;
    let mut bx = Vec::with_capacity(xs.len() / BLOCK + 1);
    let mut by = Vec::with_capacity(xs.len() / BLOCK + 1);
    for (cx, cy) in xs.chunks(BLOCK).zip(ys.chunks(BLOCK)) {
        let mut ax = [0.0; LANES];
        let mut ay = [0.0; LANES];
        let mut lx = cx.chunks_exact(LANES);
        let mut ly = cy.chunks_exact(LANES);
        for (px, py) in (&mut lx).zip(&mut ly) {
            for k in 0..LANES {
                let dx = x[0] - px[k];
                let dy = x[1] - py[k];
                let e = exp_nonpositive(-(dx * dx + dy * dy) * inv_two_tau);
                ax[k] += dx * e;
                ay[k] += dy * e;
            }
        }
        for (k, (&px, &py)) in lx.remainder().iter().zip(ly.remainder()).enumerate() {
            let dx = x[0] - px;
            let dy = x[1] - py;
            let e = exp_nonpositive(-(dx * dx + dy * dy) * inv_two_tau);
            ax[k] += dx * e;
            ay[k] += dy * e;
        }
        bx.push(pairwise_sum(&ax));
        by.push(pairwise_sum(&ay));
    }
    [pairwise_sum(&bx), pairwise_sum(&by)]
}

/// Closed-form bound on `|drift_direct|` at step `n`.
pub fn direct_drift_bound(history: &ParticleHistory, init: &InitialData, n: usize, dt: f64) -> f64 {
    let p = &history.params;
    let t = n as f64 * dt;
    let b0 = if n == 0 { 0.0 } else { b0_sup_bound(p, init, t, true) };
    let mem: f64 = memory_slices(n, history.memory_stride, dt)
        .iter()
        .map(|&(m, w)| w * reg_kernel_sup(p.epsilon, (n - m) as f64 * dt))
        .sum();
    b0 + p.chi * mem
}

/// Regularized drift at step `n` and position `x`, summing every particle of
/// every retained slice before `n`.
pub fn drift_direct(history: &ParticleHistory, init: &InitialData, n: usize, x: Vec2) -> Result<Vec2> {
    if n >= history.slices() {
        return Err(Error::Precondition(format!(
            "history holds {} slices; step {n} is not available",
            history.slices()
        )));
    }
    let dt = if history.time_grid.len() > 1 {
        history.time_grid[1] - history.time_grid[0]
    } else {
        0.0
    };
    Ok(drift_direct_unchecked(history, init, n, dt, x))
}

fn drift_direct_unchecked(history: &ParticleHistory, init: &InitialData, n: usize, dt: f64, x: Vec2) -> Vec2 {
    let p = &history.params;
    let t = n as f64 * dt;
    let mut b = b0_unchecked(p, &init.c0, t, x, true);
    if p.chi == 0.0 {
        return b;
    }
    let inv_n = 1.0 / history.n_particles() as f64;
    for (m, w) in memory_slices(n, history.memory_stride, dt) {
        let tau = (n - m) as f64 * dt;
        // K^ε_τ(z) = -z e^{-|z|²/2τ} / (2π(τ+ε)²)
        let coef = -p.chi * w * (-p.lambda * tau).exp() * inv_n / (2.0 * PI * (tau + p.epsilon).powi(2));
        let s = gaussian_weighted_sum(x, &history.xs[m], &history.ys[m], 0.5 / tau);
        b[0] += coef * s[0];
        b[1] += coef * s[1];
    }
    debug_assert!(b[0].hypot(b[1]) <= direct_drift_bound(history, init, n, dt) * (1.0 + 1e-12) + 1e-300);
    b
}

/// Grid chemical `c_mem` advanced by `c ← e^{-λΔ} e^{Δ∆/2} c + S(Δ) ρ̂` from
/// deposited densities, with the closed-form `b₀` added at evaluation.
pub struct FieldDrift {
    grid: Grid,
    params: ModelParams,
    heat: SpectralField,
    source: SpectralField,
    derivative: [SpectralField; 2],
    decay: f64,
    c_mem_hat: SpectralField,
    gradient: Option<VectorField>,
}

impl FieldDrift {
    pub fn new(grid: Grid, params: ModelParams, dt: f64) -> Result<Self> {
        Ok(Self {
            heat: heat_multiplier(&grid, dt),
            source: chemo_source_multiplier(&grid, dt, params.lambda)?,
            derivative: [grad_heat_multiplier(&grid, 0.0, 0)?, grad_heat_multiplier(&grid, 0.0, 1)?],
            decay: (-params.lambda * dt).exp(),
            c_mem_hat: GridField::zeros(grid).transform(),
            gradient: Some(VectorField::zeros(grid)),
            grid,
            params,
        })
    }

    /// Advances the chemical by one step and feeds it the given slice.
    pub fn push_slice(&mut self, xs: &[f64], ys: &[f64]) -> Result<()> {
        let rho_hat = deposit_xy(xs, ys, &self.grid)?.transform();
        let mut next = self.c_mem_hat.applied(&self.heat)?;
        let src = rho_hat.applied(&self.source)?;
        for (c, s) in next.coeffs_mut().iter_mut().zip(src.coeffs()) {
            *c = self.decay * *c + s;
        }
        self.c_mem_hat = next;
        self.gradient = None;
        Ok(())
    }

    pub fn chemical(&self) -> GridField {
        self.c_mem_hat.inverse()
    }

    fn gradient(&mut self) -> &VectorField {
        if self.gradient.is_none() {
            let comp = |axis: usize| {
                let mut s = self.c_mem_hat.clone();
                s.apply(&self.derivative[axis]).expect("same grid");
                s.inverse().into_values()
            };
            let (gx, gy) = (comp(0), comp(1));
            self.gradient = Some(VectorField::new(self.grid, gx, gy).expect("grid sized"));
        }
        self.gradient.as_ref().unwrap()
    }

    /// `b₀(t, X) + χ∇c_mem(X)` with bilinear interpolation of the gradient.
    pub fn evaluate(&mut self, init: &InitialData, t: f64, xs: &[f64], ys: &[f64]) -> Vec<Vec2> {
        let params = self.params;
        let grad = self.gradient().clone();
        xs.par_iter()
            .zip(ys.par_iter())
            .map(|(&x, &y)| {
                let mut b = b0_unchecked(&params, &init.c0, t, [x, y], false);
                if params.chi != 0.0 {
                    let g = grad.interpolate([x, y]);
                    b[0] += params.chi * g[0];
                    b[1] += params.chi * g[1];
                }
                b
            })
            .collect()
    }
}

/// Field-evaluator drift at step `n` rebuilt from a stored history: slices
/// `1..=n` are replayed through the chemical recursion.
pub fn drift_field_accel(history: &ParticleHistory, config: &SimConfig, n: usize) -> Result<Vec<Vec2>> {
    if n >= history.slices() {
        return Err(Error::Precondition(format!("step {n} not in history")));
    }
    let mut field = FieldDrift::new(config.grid, config.params, config.dt)?;
    for m in 1..=n {
        field.push_slice(&history.xs[m], &history.ys[m])?;
    }
    let t = n as f64 * config.dt;
    Ok(field.evaluate(&config.init, t, &history.xs[n], &history.ys[n]))
}

/// Advances every particle by one Euler–Maruyama step with the given drifts.
fn advance(config: &SimConfig, history: &mut ParticleHistory, drifts: &[Vec2], wrap: bool) -> Result<()> {
    let n = history.slices() - 1;
    let dt = config.dt;
    let sq = dt.sqrt() * config.noise_scale;
    let (xs, ys) = (&history.xs[n], &history.ys[n]);
    let next: Vec<Vec2> = (0..config.n_particles)
        .into_par_iter()
        .map(|i| {
            let xi = if config.noise_scale == 0.0 {
                [0.0, 0.0]
            } else {
                step_normals(config.seed, config.stream(i), n)
            };
            let mut p = [xs[i] + drifts[i][0] * dt + sq * xi[0], ys[i] + drifts[i][1] * dt + sq * xi[1]];
            if wrap {
                p = [config.grid.wrap(p[0]), config.grid.wrap(p[1])];
            }
            p
        })
        .collect();
    if let Some(i) = next.iter().position(|p| !(p[0].is_finite() && p[1].is_finite())) {
        return Err(Error::BlowUp {
            t: (n + 1) as f64 * dt,
            detail: format!("particle {i} left the finite range"),
            last_state: None,
        });
    }
    history.xs.push(next.iter().map(|p| p[0]).collect());
    history.ys.push(next.iter().map(|p| p[1]).collect());
    history.time_grid.push((n + 1) as f64 * dt);
    Ok(())
}

/// One Euler–Maruyama step with the direct evaluator.
pub fn em_step(history: &mut ParticleHistory, config: &SimConfig) -> Result<()> {
    let n = history.slices() - 1;
    let drifts: Vec<Vec2> = (0..config.n_particles)
        .into_par_iter()
        .map(|i| drift_direct_unchecked(history, &config.init, n, config.dt, history.position(n, i)))
        .collect();
    advance(config, history, &drifts, false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleRun {
    pub history: ParticleHistory,
    pub save_steps: Vec<usize>,
    /// Density estimates at the save steps.
    pub densities: Vec<GridField>,
    pub curves: Vec<NormCurve>,
    pub trace: GrowthTrace,
    pub bandwidth: f64,
    pub warnings: Vec<String>,
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::Precondition(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

pub fn run(config: &SimConfig) -> Result<ParticleRun> {
    config.validate()?;
    with_pool(config.threads, || run_inner(config))?
}

fn run_inner(config: &SimConfig) -> Result<ParticleRun> {
    let mut history = init_ensemble(config)?;
    let steps = config.steps();
    let mut field = match config.drift_mode {
        DriftEvaluator::Field => {
            for n in 0..config.n_particles {
                history.xs[0][n] = config.grid.wrap(history.xs[0][n]);
                history.ys[0][n] = config.grid.wrap(history.ys[0][n]);
            }
            Some(FieldDrift::new(config.grid, config.params, config.dt)?)
        }
        DriftEvaluator::Direct => None,
    };
    for n in 0..steps {
        match field.as_mut() {
            None => em_step(&mut history, config)?,
            Some(f) => {
                if n > 0 {
                    f.push_slice(&history.xs[n], &history.ys[n])?;
                }
                let drifts = f.evaluate(&config.init, n as f64 * config.dt, &history.xs[n], &history.ys[n]);
                advance(config, &mut history, &drifts, true)?;
            }
        }
    }

    let save_steps = config.save_steps();
    let h = config.bandwidth();
    let mut densities = Vec::with_capacity(save_steps.len());
    let mut samples: Vec<Vec<(f64, f64)>> = vec![Vec::new(); config.q_list.len()];
    let mut trace = GrowthTrace::default();
    for &n in &save_steps {
        let d = kde_xy(&history.xs[n], &history.ys[n], &config.grid, h)?;
        let t = history.time_grid[n];
        for (k, &q) in config.q_list.iter().enumerate() {
            samples[k].push((t, t.powf(1.0 - 1.0 / q) * d.lq_norm(q)?));
        }
        let m2: Vec<f64> = history.xs[n].iter().zip(&history.ys[n]).map(|(x, y)| x * x + y * y).collect();
        trace.times.push(t);
        trace.sup_norms.push(d.max_abs());
        trace.second_moments.push(pairwise_sum(&m2) / config.n_particles as f64);
        densities.push(d);
    }
    let mut curves = Vec::new();
    for (k, &q) in config.q_list.iter().enumerate() {
        curves.push(NormCurve::new(
            Quantity::RhoLq,
            q,
            std::mem::take(&mut samples[k]),
            density_bound(&config.params, &config.init, q),
            Convention::ProofK2,
        )?);
    }
    Ok(ParticleRun {
        history,
        save_steps,
        densities,
        curves,
        trace,
        bandwidth: h,
        warnings: config.warnings(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardReport {
    /// Save steps at which flows are compared.
    pub save_steps: Vec<usize>,
    /// `d_j` = max over save steps of `‖flow^{j+1} - flow^j‖_{L¹}`, for `j = 0..k-1`.
    pub distances: Vec<f64>,
    /// Mass of every iterate at every save step.
    pub masses: Vec<Vec<f64>>,
    /// Densities of each flow at the save steps; `flows[0]` is the heat flow.
    pub flows: Vec<Vec<GridField>>,
}

/// Picard iteration of the frozen-marginal map. `flow⁰` is the grid heat flow
/// of `ρ₀`; `flow^{j+1}` is the density estimate, at every step, of a particle
/// system whose memory term convolves `K^ε` with `flow^j` spectrally. Every
/// iterate reuses the same noise, so `d_j` isolates the effect of the map.
/// With `χ = 0` the map ignores its argument and `d_j = 0` for `j ≥ 1`.
pub fn picard_iterate(config: &SimConfig, k: usize) -> Result<PicardReport> {
    config.validate()?;
    if k < 2 {
        return Err(Error::domain("picard_iterate", format!("need k >= 2 outer iterations, got {k}")));
    }
    with_pool(config.threads, || picard_inner(config, k))?
}

fn picard_inner(config: &SimConfig, k: usize) -> Result<PicardReport> {
    let grid = config.grid;
    let steps = config.steps();
    let dt = config.dt;
    let p = config.params;
    let h = config.bandwidth();

    let rho0 = GridField::from_fn(grid, |x| config.init.rho0.eval(x)).transform();
    let mut flow: Vec<SpectralField> = (0..=steps)
        .map(|n| rho0.applied(&heat_multiplier(&grid, n as f64 * dt)).expect("same grid"))
        .collect();

    // ε-regularized gradient-heat multiplier for each lag, weight excluded.
    let lag_multipliers: Vec<[SpectralField; 2]> = (0..=steps)
        .map(|l| {
            let tau = l as f64 * dt;
            let f = if l == 0 { 0.0 } else { (tau / (tau + p.epsilon)).powi(2) * (-p.lambda * tau).exp() };
            let mut pair = [grad_heat_multiplier(&grid, tau, 0)?, grad_heat_multiplier(&grid, tau, 1)?];
            for m in pair.iter_mut() {
                for c in m.coeffs_mut() {
                    *c *= f;
                }
            }
            Ok(pair)
        })
        .collect::<Result<_>>()?;

    let save_steps = config.save_steps();
    let snapshot = |flow: &[SpectralField]| -> Vec<GridField> { save_steps.iter().map(|&n| flow[n].inverse()).collect() };
    let mut flows = vec![snapshot(&flow)];
    let mut distances = Vec::with_capacity(k);
    let mut masses = vec![flows[0].iter().map(|f| f.mass()).collect::<Vec<_>>()];
    let init = init_ensemble(config)?;

    for _ in 0..k {
        let mut history = init.clone();
        let mut next = Vec::with_capacity(steps + 1);
        next.push(kde_xy(&history.xs[0], &history.ys[0], &grid, h)?.transform());
        for n in 0..steps {
            let mut memory = VectorField::zeros(grid);
            if p.chi != 0.0 && n > 0 {
                for axis in 0..2 {
                    let mut acc = vec![num_complex::Complex64::new(0.0, 0.0); grid.len()];
                    for (m, w) in memory_slices(n, config.memory_stride, dt) {
                        let mult = &lag_multipliers[n - m][axis];
                        for ((a, r), c) in acc.iter_mut().zip(flow[m].coeffs()).zip(mult.coeffs()) {
                            *a += w * r * c;
                        }
                    }
                    let v = SpectralField::new(grid, acc)?.inverse().into_values();
                    if axis == 0 {
                        memory.x = v;
                    } else {
                        memory.y = v;
                    }
                }
            }
            let t = n as f64 * dt;
            let drifts: Vec<Vec2> = history.xs[n]
                .par_iter()
                .zip(history.ys[n].par_iter())
                .map(|(&x, &y)| {
                    let mut b = b0_unchecked(&p, &config.init.c0, t, [x, y], true);
                    if p.chi != 0.0 {
                        let g = memory.interpolate([x, y]);
                        b[0] += p.chi * g[0];
                        b[1] += p.chi * g[1];
                    }
                    b
                })
                .collect();
            advance(config, &mut history, &drifts, false)?;
            next.push(kde_xy(&history.xs[n + 1], &history.ys[n + 1], &grid, h)?.transform());
        }
        let snap = snapshot(&next);
        let last = flows.last().unwrap();
        let mut d: f64 = 0.0;
        for (a, b) in snap.iter().zip(last) {
            d = d.max(marginal_distance(a, b)?.0);
        }
        if !d.is_finite() {
            return Err(Error::BlowUp {
                t: config.params.horizon,
                detail: "non-finite Picard iterate".into(),
                last_state: None,
            });
        }
        distances.push(d);
        masses.push(snap.iter().map(|f| f.mass()).collect());
        flows.push(snap);
        flow = next;
    }
    Ok(PicardReport {
        save_steps,
        distances,
        masses,
        flows,
    })
}
