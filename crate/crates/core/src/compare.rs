//! Particle-versus-PDE comparison across an ensemble-size sweep.

use serde::{Deserialize, Serialize};

use crate::analysis::{marginal_distance, ComparisonReport, SweepRow};
use crate::error::{Error, Result};
use crate::particles::{self, SimConfig};
use crate::pde::{self, PdeConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub pde: PdeConfig,
    /// Template for every particle run; `n_particles` is overwritten by the sweep.
    pub sim: SimConfig,
    /// Ensemble sizes, ascending; the last one supplies the time series.
    pub sweep: Vec<usize>,
}

impl CompareConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sweep.is_empty() {
            return Err(Error::domain("CompareConfig", "empty ensemble sweep"));
        }
        if self.pde.grid != self.sim.grid {
            return Err(Error::GridMismatch("PDE and particle grids differ".into()));
        }
        if (self.pde.params.horizon - self.sim.params.horizon).abs() > 1e-12 {
            return Err(Error::domain("CompareConfig", "solvers disagree on the horizon"));
        }
        self.pde.validate()?;
        self.sim.validate()
    }
}

pub fn compare(config: &CompareConfig) -> Result<ComparisonReport> {
    config.validate()?;
    let mut pde_cfg = config.pde.clone();
    pde_cfg.save_times = config.sim.save_times.clone();
    let pde_run = pde::run(&pde_cfg)?;
    let mut notes = pde_run.warnings.clone();
    if pde_run.final_boundary_mass > pde::BOUNDARY_MASS_LIMIT {
        notes.push(format!(
            "PDE boundary mass {:.2e} exceeds {:.0e}; free-space particles and torus PDE differ",
            pde_run.final_boundary_mass,
            pde::BOUNDARY_MASS_LIMIT
        ));
    }
    let terminal = &pde_run.states.last().expect("horizon is saved").rho;

    let mut sweep = Vec::with_capacity(config.sweep.len());
    let mut series = None;
    for (k, &n) in config.sweep.iter().enumerate() {
        let mut sim = config.sim.clone();
        sim.n_particles = n;
        let run = particles::run(&sim)?;
        let (l1, linf) = marginal_distance(run.densities.last().expect("horizon is saved"), terminal)?;
        sweep.push(SweepRow {
            n_particles: n,
            bandwidth: run.bandwidth,
            l1,
            linf,
        });
        if k + 1 == config.sweep.len() {
            notes.extend(run.warnings.iter().cloned());
            let mut times = Vec::new();
            let mut l1s = Vec::new();
            let mut linfs = Vec::new();
            for ((&step, d), s) in run.save_steps.iter().zip(&run.densities).zip(&pde_run.states) {
                let (a, b) = marginal_distance(d, &s.rho)?;
                times.push(run.history.time_grid[step]);
                l1s.push(a);
                linfs.push(b);
            }
            series = Some((times, l1s, linfs, n));
        }
    }
    let (times, l1_distance, linf_distance, n_particles) = series.expect("sweep is nonempty");
    Ok(ComparisonReport {
        times,
        l1_distance,
        linf_distance,
        n_particles,
        grid: config.sim.grid,
        sweep,
        notes,
    })
}
