//! Periodic square grid on `[-L, L)²`: unitary 2-D FFT, the Fourier
//! multipliers of the model's kernels, discrete norms, particle deposition
//! and kernel density estimation.
//!
//! Storage is row-major with `x` on the fast axis: node `(ix, iy)` sits at
//! `(-L + ix·h, -L + iy·h)` and lives at index `iy·G + ix`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Vec2;
use crate::numerics::pairwise_sum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    half_width: f64,
    points: usize,
}

impl Grid {
    pub fn new(half_width: f64, points: usize) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::domain("Grid", format!("half width {half_width} must be > 0")));
        }
        if points < 16 || !points.is_power_of_two() {
            return Err(Error::domain(
                "Grid",
                format!("points per side {points} must be a power of two >= 16"),
            ));
        }
        Ok(Self { half_width, points })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }

    pub fn len(&self) -> usize {
        self.points * self.points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_area(&self) -> f64 {
        let h = self.spacing();
        h * h
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    pub fn node(&self, ix: usize, iy: usize) -> Vec2 {
        [self.coord(ix), self.coord(iy)]
    }

    /// Angular wavenumber of FFT index `m`: `(π/L)·m'` with `m' ∈ [-G/2, G/2)`.
    pub fn wavenumber(&self, m: usize) -> f64 {
        let g = self.points as isize;
        let mut s = m as isize;
        if s >= g / 2 {
            s -= g;
        }
        std::f64::consts::PI / self.half_width * s as f64
    }

    /// Wavenumber used for spectral derivatives: zero at the Nyquist index, so
    /// derivatives of real fields stay real.
    pub fn derivative_wavenumber(&self, m: usize) -> f64 {
        if m == self.points / 2 {
            0.0
        } else {
            self.wavenumber(m)
        }
    }

    /// Largest `|k|` on an axis.
    pub fn nyquist(&self) -> f64 {
        std::f64::consts::PI / self.spacing()
    }

    fn check_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!(
                "(L = {}, G = {}) vs (L = {}, G = {})",
                self.half_width, self.points, other.half_width, other.points
            )));
        }
        Ok(())
    }

    /// Wraps a coordinate into `[-L, L)`.
    pub fn wrap(&self, v: f64) -> f64 {
        let w = 2.0 * self.half_width;
        let r = (v + self.half_width).rem_euclid(w);
        // rem_euclid can round up to w itself.
        let r = if r >= w { 0.0 } else { r };
        r - self.half_width
    }
}

type Plan = Arc<dyn Fft<f64>>;

thread_local! {
    static PLANS: RefCell<HashMap<usize, (Plan, Plan)>> = RefCell::new(HashMap::new());
}

fn plans(n: usize) -> (Plan, Plan) {
    PLANS.with(|p| {
        p.borrow_mut()
            .entry(n)
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
            })
            .clone()
    })
}

fn transpose(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

fn rows_fft(plan: &Plan, data: &mut [Complex64], n: usize) {
    // Each row is an independent transform, so the partition cannot change results.
    const ROWS: usize = 16;
    data.par_chunks_mut(n * ROWS).for_each(|chunk| {
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(chunk, &mut scratch);
    });
}

fn fft2(data: &mut [Complex64], n: usize, inverse: bool) {
    let (fwd, inv) = plans(n);
    let plan = if inverse { inv } else { fwd };
    rows_fft(&plan, data, n);
    transpose(data, n);
    rows_fft(&plan, data, n);
    transpose(data, n);
    let scale = 1.0 / n as f64;
    for v in data.iter_mut() {
        *v *= scale;
    }
}

/// Real scalar field in physical space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    grid: Grid,
    values: Vec<f64>,
}

/// Fourier coefficients under the unitary DFT (`1/G` on both directions).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

/// Real 2-vector field in physical space, stored by component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    grid: Grid,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl GridField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a {}x{} grid",
                values.len(),
                grid.points(),
                grid.points()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(Vec2) -> f64) -> Self {
        let g = grid.points();
        let mut values = Vec::with_capacity(grid.len());
        for iy in 0..g {
            for ix in 0..g {
                values.push(f(grid.node(ix, iy)));
            }
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.grid.points() + ix]
    }

    /// Riemann sum, which is also the trapezoid rule on the torus.
    pub fn mass(&self) -> f64 {
        pairwise_sum(&self.values) * self.grid.cell_area()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn lq_norm(&self, q: f64) -> Result<f64> {
        lq_norm(&self.values, &self.grid, q)
    }

    /// Mass of `|f|` on nodes in the outer frame `max(|x|,|y|) ≥ 7L/8`.
    pub fn boundary_mass(&self) -> f64 {
        let g = self.grid.points();
        let edge = 0.875 * self.grid.half_width();
        let mut frame = Vec::new();
        for iy in 0..g {
            for ix in 0..g {
                let p = self.grid.node(ix, iy);
                if p[0].abs().max(p[1].abs()) >= edge {
                    frame.push(self.values[iy * g + ix].abs());
                }
            }
        }
        pairwise_sum(&frame) * self.grid.cell_area()
    }

    pub fn scale(&mut self, a: f64) {
        for v in &mut self.values {
            *v *= a;
        }
    }

    /// `self - other`, after checking grids.
    pub fn difference(&self, other: &GridField) -> Result<GridField> {
        self.grid.check_same(&other.grid)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(GridField { grid: self.grid, values })
    }

    /// Rotation by 90° about the origin, an exact lattice symmetry when
    /// composed with the index reflection `i ↦ G - i`.
    pub fn rot90(&self) -> GridField {
        let g = self.grid.points();
        let refl = |i: usize| (g - i) % g;
        // (x, y) ↦ (-y, x): new(ix, iy) = old at (x,y) = (y', -x') i.e. old(iy, refl(ix)).
        let mut values = vec![0.0; g * g];
        for iy in 0..g {
            for ix in 0..g {
                values[iy * g + ix] = self.values[refl(ix) * g + iy];
            }
        }
        GridField { grid: self.grid, values }
    }

    pub fn transform(&self) -> SpectralField {
        let mut coeffs: Vec<Complex64> = self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft2(&mut coeffs, self.grid.points(), false);
        SpectralField {
            grid: self.grid,
            coeffs,
        }
    }

    /// Flat binary: `G` as u64 and `L` as f64 (16-byte header), then values, all little-endian.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&(self.grid.points() as u64).to_le_bytes())?;
        w.write_all(&self.grid.half_width().to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < 16 {
            return Err(Error::GridMismatch("truncated field header".into()));
        }
        let g = u64::from_le_bytes(bytes[0..8].try_into().unwrap()) as usize;
        let l = f64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let grid = Grid::new(l, g)?;
        if bytes.len() != 16 + 8 * grid.len() {
            return Err(Error::GridMismatch(format!("field body of {} bytes for G = {g}", bytes.len() - 16)));
        }
        let values = bytes[16..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        GridField::new(grid, values)
    }

    /// CSV with header `x,y,value`, one row per node.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "x,y,value")?;
        let g = self.grid.points();
        for iy in 0..g {
            for ix in 0..g {
                let p = self.grid.node(ix, iy);
                writeln!(w, "{},{},{}", p[0], p[1], self.values[iy * g + ix])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn lq_norm(values: &[f64], grid: &Grid, q: f64) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(Error::domain("lq_norm", format!("q = {q} must be >= 1")));
    }
    if q == f64::INFINITY {
        return Ok(values.iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    let powered: Vec<f64> = if q == 1.0 {
        values.iter().map(|v| v.abs()).collect()
    } else if q == 2.0 {
        values.iter().map(|v| v * v).collect()
    } else if q == 3.0 {
        values.iter().map(|v| v.abs() * v * v).collect()
    } else {
        values.iter().map(|v| v.abs().powf(q)).collect()
    };
    Ok((pairwise_sum(&powered) * grid.cell_area()).powf(1.0 / q))
}

impl SpectralField {
    pub fn new(grid: Grid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::GridMismatch(format!("{} coefficients for G = {}", coeffs.len(), grid.points())));
        }
        Ok(Self { grid, coeffs })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Zero-wavenumber coefficient; the physical mass is `G · h² · c₀₀`.
    pub fn k0(&self) -> Complex64 {
        self.coeffs[0]
    }

    pub fn mass(&self) -> f64 {
        self.coeffs[0].re * self.grid.points() as f64 * self.grid.cell_area()
    }

    /// Physical-space L² norm through Parseval.
    pub fn l2_norm(&self) -> f64 {
        let sq: Vec<f64> = self.coeffs.iter().map(|c| c.norm_sqr()).collect();
        (pairwise_sum(&sq) * self.grid.cell_area()).sqrt()
    }

    /// Real part of the inverse transform.
    pub fn inverse(&self) -> GridField {
        let mut data = self.coeffs.clone();
        fft2(&mut data, self.grid.points(), true);
        GridField {
            grid: self.grid,
            values: data.into_iter().map(|c| c.re).collect(),
        }
    }

    /// Pointwise product with a multiplier on the same grid.
    pub fn apply(&mut self, multiplier: &SpectralField) -> Result<()> {
        self.grid.check_same(&multiplier.grid)?;
        for (c, m) in self.coeffs.iter_mut().zip(&multiplier.coeffs) {
            *c *= m;
        }
        Ok(())
    }

    pub fn applied(&self, multiplier: &SpectralField) -> Result<SpectralField> {
        let mut out = self.clone();
        out.apply(multiplier)?;
        Ok(out)
    }
}

impl VectorField {
    pub fn new(grid: Grid, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != grid.len() || y.len() != grid.len() {
            return Err(Error::GridMismatch("vector field component length".into()));
        }
        Ok(Self { grid, x, y })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            x: vec![0.0; grid.len()],
            y: vec![0.0; grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Largest per-component `L^r` norm.
    pub fn component_lr_norm(&self, r: f64) -> Result<f64> {
        Ok(lq_norm(&self.x, &self.grid, r)?.max(lq_norm(&self.y, &self.grid, r)?))
    }

    pub fn max_difference(&self, other: &VectorField) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        let dx = self.x.iter().zip(&other.x).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let dy = self.y.iter().zip(&other.y).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        Ok(dx.max(dy))
    }

    pub fn all_finite(&self) -> bool {
        self.x.iter().chain(&self.y).all(|v| v.is_finite())
    }

    /// Bilinear interpolation on the torus.
    pub fn interpolate(&self, p: Vec2) -> Vec2 {
        let (i0, j0, fx, fy) = cell_of(&self.grid, p);
        let g = self.grid.points();
        let (i1, j1) = ((i0 + 1) % g, (j0 + 1) % g);
        let w = [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy];
        let idx = [j0 * g + i0, j0 * g + i1, j1 * g + i0, j1 * g + i1];
        let mut out = [0.0, 0.0];
        for k in 0..4 {
            out[0] += w[k] * self.x[idx[k]];
            out[1] += w[k] * self.y[idx[k]];
        }
        out
    }
}

/// Lower-left node indices and fractional offsets of the cell holding `p`.
fn cell_of(grid: &Grid, p: Vec2) -> (usize, usize, f64, f64) {
    let h = grid.spacing();
    let g = grid.points();
    let locate = |v: f64| {
        let u = (grid.wrap(v) + grid.half_width()) / h;
        let i = u.floor();
        let f = u - i;
        ((i as usize) % g, f)
    };
    let (i, fx) = locate(p[0]);
    let (j, fy) = locate(p[1]);
    (i, j, fx, fy)
}

fn real_multiplier(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> SpectralField {
    let g = grid.points();
    let kx: Vec<f64> = (0..g).map(|m| grid.wavenumber(m)).collect();
    let mut coeffs = Vec::with_capacity(grid.len());
    for iy in 0..g {
        for ix in 0..g {
            coeffs.push(Complex64::new(f(kx[ix], kx[iy]), 0.0));
        }
    }
    SpectralField { grid: *grid, coeffs }
}

fn check_axis(axis: usize) -> Result<()> {
    if axis > 1 {
        return Err(Error::domain("multiplier", format!("axis {axis} must be 0 or 1")));
    }
    Ok(())
}

fn imaginary_multiplier(grid: &Grid, axis: usize, f: impl Fn(f64, f64) -> f64) -> SpectralField {
    let g = grid.points();
    let k: Vec<f64> = (0..g).map(|m| grid.wavenumber(m)).collect();
    let kd: Vec<f64> = (0..g).map(|m| grid.derivative_wavenumber(m)).collect();
    let mut coeffs = Vec::with_capacity(grid.len());
    for iy in 0..g {
        for ix in 0..g {
            let ki = if axis == 0 { kd[ix] } else { kd[iy] };
            coeffs.push(Complex64::new(0.0, ki * f(k[ix], k[iy])));
        }
    }
    SpectralField { grid: *grid, coeffs }
}

/// `e^{-|k|²t/2}`; `t = 0` gives the identity.
pub fn heat_multiplier(grid: &Grid, t: f64) -> SpectralField {
    real_multiplier(grid, |kx, ky| (-(kx * kx + ky * ky) * t / 2.0).exp())
}

/// `i k_axis e^{-|k|²t/2}`.
pub fn grad_heat_multiplier(grid: &Grid, t: f64, axis: usize) -> Result<SpectralField> {
    check_axis(axis)?;
    Ok(imaginary_multiplier(grid, axis, |kx, ky| (-(kx * kx + ky * ky) * t / 2.0).exp()))
}

/// `∫₀^Δ i k_axis e^{-|k|²u/2} du = i k_axis · 2(1 - e^{-|k|²Δ/2})/|k|²`.
pub fn integrated_grad_multiplier(grid: &Grid, dt: f64, axis: usize) -> Result<SpectralField> {
    check_axis(axis)?;
    if !(dt > 0.0) {
        return Err(Error::domain("integrated_grad_multiplier", format!("dt = {dt} must be > 0")));
    }
    Ok(imaginary_multiplier(grid, axis, |kx, ky| {
        let k2 = kx * kx + ky * ky;
        if k2 == 0.0 {
            0.0
        } else {
            -2.0 * (-k2 * dt / 2.0).exp_m1() / k2
        }
    }))
}

/// `∫₀^Δ e^{-(λ + |k|²/2)u} du`, equal to `Δ` where the rate vanishes.
pub fn chemo_source_multiplier(grid: &Grid, dt: f64, lambda: f64) -> Result<SpectralField> {
    if !(dt > 0.0) || !(lambda >= 0.0) {
        return Err(Error::domain(
            "chemo_source_multiplier",
            format!("need dt > 0 and lambda >= 0, got dt = {dt}, lambda = {lambda}"),
        ));
    }
    Ok(real_multiplier(grid, |kx, ky| {
        let a = lambda + (kx * kx + ky * ky) / 2.0;
        if a == 0.0 {
            dt
        } else {
            -(-a * dt).exp_m1() / a
        }
    }))
}

/// Cloud-in-cell deposit of equal-weight particles; the result integrates to 1.
/// Particles are wrapped onto the torus.
pub fn deposit(particles: &[Vec2], grid: &Grid) -> Result<GridField> {
    deposit_split(particles.iter().map(|p| p[0]), particles.iter().map(|p| p[1]), particles.len(), grid)
}

/// As [`deposit`] with coordinates stored by component.
pub fn deposit_xy(xs: &[f64], ys: &[f64], grid: &Grid) -> Result<GridField> {
    if xs.len() != ys.len() {
        return Err(Error::domain("deposit", "coordinate arrays differ in length"));
    }
    deposit_split(xs.iter().copied(), ys.iter().copied(), xs.len(), grid)
}

fn deposit_split(
    xs: impl Iterator<Item = f64>,
    ys: impl Iterator<Item = f64>,
    n: usize,
    grid: &Grid,
) -> Result<GridField> {
    if n == 0 {
        return Err(Error::domain("deposit", "empty particle list"));
    }
    let g = grid.points();
    let w = 1.0 / (n as f64 * grid.cell_area());
    let mut values = vec![0.0; grid.len()];
    for (x, y) in xs.zip(ys) {
        let (i0, j0, fx, fy) = cell_of(grid, [x, y]);
        let (i1, j1) = ((i0 + 1) % g, (j0 + 1) % g);
        values[j0 * g + i0] += w * (1.0 - fx) * (1.0 - fy);
        values[j0 * g + i1] += w * fx * (1.0 - fy);
        values[j1 * g + i0] += w * (1.0 - fx) * fy;
        values[j1 * g + i1] += w * fx * fy;
    }
    GridField::new(*grid, values)
}

/// Deposit followed by Gaussian smoothing of variance `h²` per axis.
pub fn kde(particles: &[Vec2], grid: &Grid, bandwidth: f64) -> Result<GridField> {
    smooth(deposit(particles, grid)?, bandwidth)
}

pub fn kde_xy(xs: &[f64], ys: &[f64], grid: &Grid, bandwidth: f64) -> Result<GridField> {
    smooth(deposit_xy(xs, ys, grid)?, bandwidth)
}

fn smooth(field: GridField, bandwidth: f64) -> Result<GridField> {
    if !(bandwidth > 0.0) {
        return Err(Error::domain("kde", format!("bandwidth {bandwidth} must be > 0")));
    }
    let mut s = field.transform();
    s.apply(&heat_multiplier(field.grid(), bandwidth * bandwidth))?;
    Ok(s.inverse())
}

/// Default bandwidth `N^{-1/6}`.
pub fn default_bandwidth(n: usize) -> f64 {
    (n as f64).powf(-1.0 / 6.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn gaussian(v: f64) -> impl Fn(Vec2) -> f64 {
        move |p: Vec2| (-(p[0] * p[0] + p[1] * p[1]) / (2.0 * v)).exp() / (2.0 * PI * v)
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(1.0, 8).is_err());
        assert!(Grid::new(1.0, 48).is_err());
        assert!(Grid::new(0.0, 16).is_err());
        let g = Grid::new(4.0, 16).unwrap();
        assert_eq!(g.spacing(), 0.5);
        assert_eq!(g.wavenumber(8), -PI / 4.0 * 8.0);
        assert_eq!(g.derivative_wavenumber(8), 0.0);
        assert_eq!(g.wrap(4.0), -4.0);
        assert_eq!(g.wrap(-4.0), -4.0);
        assert_eq!(g.wrap(9.5), 1.5);
    }

    #[test]
    fn constant_field_spectrum() {
        let g = Grid::new(3.0, 32).unwrap();
        let s = GridField::from_fn(g, |_| 1.0).transform();
        assert!((s.k0().re - 32.0).abs() < 1e-12);
        for c in &s.coeffs()[1..] {
            assert!(c.norm() < 1e-12);
        }
    }

    #[test]
    fn roundtrip_and_parseval() {
        let g = Grid::new(5.0, 64).unwrap();
        let f = GridField::from_fn(g, |p| (p[0] * 1.3).sin() + (p[1] * p[0]).cos() * 0.2);
        let s = f.transform();
        let back = s.inverse();
        let err = f.difference(&back).unwrap().max_abs();
        assert!(err < 1e-12);
        let phys = f.lq_norm(2.0).unwrap();
        assert!(((s.l2_norm() - phys) / phys).abs() < 1e-12);
    }

    #[test]
    fn gaussian_spectrum_matches_fourier_transform() {
        let g = Grid::new(8.0, 64).unwrap();
        let t = 1.0;
        let s = GridField::from_fn(g, gaussian(t)).transform();
        let n = g.points();
        let scale = n as f64 * g.cell_area();
        for iy in 0..n {
            for ix in 0..n {
                let (kx, ky) = (g.wavenumber(ix), g.wavenumber(iy));
                let expect = (-(kx * kx + ky * ky) * t / 2.0).exp();
                // the node origin at -L contributes the phase (-1)^(ix+iy)
                let sign = if (ix + iy) % 2 == 0 { 1.0 } else { -1.0 };
                let c = s.coeffs()[iy * n + ix] * scale * sign;
                assert!((c.re - expect).abs() < 1e-12 && c.im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn heat_semigroup_and_gaussian_widening() {
        let g = Grid::new(10.0, 128).unwrap();
        let a = heat_multiplier(&g, 0.3);
        let b = heat_multiplier(&g, 0.5);
        let ab = heat_multiplier(&g, 0.8);
        for ((x, y), z) in a.coeffs().iter().zip(b.coeffs()).zip(ab.coeffs()) {
            assert!((x * y - z).norm() < 1e-12);
        }
        assert_eq!(a.k0().re, 1.0);
        let mut s = GridField::from_fn(g, gaussian(1.0)).transform();
        s.apply(&heat_multiplier(&g, 1.0)).unwrap();
        let exact = GridField::from_fn(g, gaussian(2.0));
        assert!(s.inverse().difference(&exact).unwrap().max_abs() < 1e-8);
    }

    #[test]
    fn grad_multiplier_is_spectral_derivative() {
        let g = Grid::new(6.0, 32).unwrap();
        let heat = heat_multiplier(&g, 0.4);
        for axis in 0..2 {
            let grad = grad_heat_multiplier(&g, 0.4, axis).unwrap();
            assert_eq!(grad.k0(), Complex64::new(0.0, 0.0));
            for iy in 0..32 {
                for ix in 0..32 {
                    let k = if axis == 0 {
                        g.derivative_wavenumber(ix)
                    } else {
                        g.derivative_wavenumber(iy)
                    };
                    let i = iy * 32 + ix;
                    assert_eq!(grad.coeffs()[i], Complex64::new(0.0, k) * heat.coeffs()[i]);
                }
            }
        }
        assert!(grad_heat_multiplier(&g, 0.4, 2).is_err());
    }

    #[test]
    fn integrated_grad_limits() {
        let g = Grid::new(6.0, 64).unwrap();
        let dt = 1e-6;
        let m = integrated_grad_multiplier(&g, dt, 0).unwrap();
        assert_eq!(m.k0(), Complex64::new(0.0, 0.0));
        // small |k|²Δ: ≈ i k Δ
        let k = g.wavenumber(1);
        assert!(((m.coeffs()[1].im - k * dt) / (k * dt)).abs() < 1e-6);
        let big = integrated_grad_multiplier(&g, 1e3, 1).unwrap();
        let ky = g.wavenumber(5);
        assert!(((big.coeffs()[5 * 64].im - 2.0 / ky) / (2.0 / ky)).abs() < 1e-12);
        assert!(integrated_grad_multiplier(&g, 0.0, 0).is_err());
    }

    #[test]
    fn chemo_source_values() {
        let g = Grid::new(4.0, 16).unwrap();
        assert_eq!(chemo_source_multiplier(&g, 0.1, 0.0).unwrap().k0().re, 0.1);
        let lam = 50.0;
        let v = chemo_source_multiplier(&g, 0.1, lam).unwrap().k0().re;
        assert!((v - (1.0 - (-lam * 0.1f64).exp()) / lam).abs() < 1e-15);
        // Simpson oracle on a sampled wavenumber
        let m = chemo_source_multiplier(&g, 0.2, 0.7).unwrap();
        let k2 = g.wavenumber(3).powi(2) + g.wavenumber(5).powi(2);
        let n = 2000;
        let h = 0.2 / n as f64;
        let f = |u: f64| (-(0.7 + k2 / 2.0) * u).exp();
        let mut acc = f(0.0) + f(0.2);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        let simpson = acc * h / 3.0;
        assert!((m.coeffs()[5 * 16 + 3].re - simpson).abs() < 1e-12);
    }

    #[test]
    fn lq_norms() {
        let g = Grid::new(8.0, 256).unwrap();
        let f = GridField::from_fn(g, gaussian(1.0));
        assert!((f.lq_norm(2.0).unwrap() - 0.5 / PI.sqrt()).abs() < 1e-6);
        assert!((f.lq_norm(1.0).unwrap() - 1.0).abs() < 1e-10);
        assert_eq!(f.lq_norm(f64::INFINITY).unwrap(), f.max_abs());
        assert!(f.lq_norm(0.5).is_err());
        let mut g2 = f.clone();
        g2.scale(3.0);
        for q in [1.0, 1.5, 2.0, 3.0, 7.0] {
            let a = g2.lq_norm(q).unwrap();
            let b = 3.0 * f.lq_norm(q).unwrap();
            assert!(((a - b) / b).abs() < 1e-14);
        }
    }

    #[test]
    fn deposit_on_node_and_mass() {
        let g = Grid::new(4.0, 16).unwrap();
        let d = deposit(&[[0.5, -1.0]], &g).unwrap();
        let (ix, iy) = (9, 6);
        assert!((d.at(ix, iy) - 1.0 / g.cell_area()).abs() < 1e-12);
        assert!((d.mass() - 1.0).abs() < 1e-15);
        let k = kde(&[[0.5, -1.0]], &g, 0.5).unwrap();
        assert!((k.mass() - 1.0).abs() < 1e-12);
        assert!(deposit(&[], &g).is_err());
    }

    #[test]
    fn deposit_translation_equivariance() {
        let g = Grid::new(4.0, 32).unwrap();
        let h = g.spacing();
        let pts: Vec<Vec2> = (0..50)
            .map(|i| [(i as f64 * 0.3125).sin().round() * 0.75 + i as f64 * h / 8.0 - 2.0, i as f64 * h / 4.0 - 3.0])
            .collect();
        let shifted: Vec<Vec2> = pts.iter().map(|p| [p[0] + h, p[1]]).collect();
        let a = deposit(&pts, &g).unwrap();
        let b = deposit(&shifted, &g).unwrap();
        for iy in 0..32 {
            for ix in 0..32 {
                assert_eq!(b.at((ix + 1) % 32, iy), a.at(ix, iy));
            }
        }
    }

    #[test]
    fn interpolation_reproduces_bilinear() {
        let g = Grid::new(4.0, 16).unwrap();
        let f = GridField::from_fn(g, |p| 2.0 * p[0] - p[1]);
        let v = VectorField::new(g, f.values().to_vec(), f.values().to_vec()).unwrap();
        let got = v.interpolate([0.3, -1.2]);
        assert!((got[0] - (0.6 + 1.2)).abs() < 1e-12);
    }

    #[test]
    fn rot90_of_radial_field() {
        let g = Grid::new(5.0, 32).unwrap();
        let f = GridField::from_fn(g, gaussian(0.7));
        assert!(f.difference(&f.rot90()).unwrap().max_abs() < 1e-15);
        let h = GridField::from_fn(g, |p| p[0]);
        let r = h.rot90();
        // (x,y) ↦ (-y,x) maps the field x to y
        let expect = GridField::from_fn(g, |p| p[1]);
        let d = r.difference(&expect).unwrap();
        for iy in 1..32 {
            for ix in 1..32 {
                assert!(d.at(ix, iy).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn binary_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(3.0, 16).unwrap();
        let f = GridField::from_fn(g, |p| p[0] * 0.1 + p[1]);
        let path = dir.path().join("f.bin");
        f.write_binary(&path).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 16 + 8 * 256);
        assert_eq!(GridField::read_binary(&path).unwrap(), f);
        f.write_csv(&dir.path().join("f.csv")).unwrap();
    }
}
