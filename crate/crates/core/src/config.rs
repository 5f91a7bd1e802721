//! Run configuration: flat sectioned `key = value` text.
//!
//! ```text
//! # comment
//! [model]
//! chi_over_chi_max = 0.5      # or: chi = 0.02
//! decay_rate = 1
//! regularization_epsilon = 0.05
//! horizon_time = 1
//!
//! [initial]
//! rho0 = gaussian 1 0 0 1     # weight center_x center_y variance; repeat for a mixture
//! c0 = gaussian 1 0 0 1       # repeatable; `c0 = zero` for none; omitted means c0 = rho0
//!
//! [grid]
//! grid_half_width = 10
//! grid_points = 128
//!
//! [run]
//! seed = 7
//! ```
//!
//! Keys are unique within the file. Every section except `[model]` and `[run]`
//! is optional and falls back to the documented defaults below.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compare::CompareConfig;
use crate::constants::{chi_max, DEFAULT_C0, DEFAULT_Q};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::kernels::{GaussianComponent, GaussianMixture, InitialData, MixtureRole, ModelParams};
use crate::particles::{DriftEvaluator, SimConfig};
use crate::pde::{uniform_times, PdeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ChiSpec {
    Absolute(f64),
    /// Fraction of the proof-convention `chi_max` at the configured `q`.
    Relative(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub chi: ChiSpec,
    pub lambda: f64,
    pub epsilon: f64,
    pub horizon: f64,
    pub rho0: Vec<GaussianComponent>,
    /// Empty means `c₀ ≡ 0`.
    pub c0: Vec<GaussianComponent>,
    pub grid_half_width: f64,
    pub grid_points: usize,
    pub norm_exponent: f64,
    pub uniqueness_c0: f64,
    pub pde_time_step: f64,
    pub save_count: usize,
    pub n_particles: usize,
    pub particle_time_step: f64,
    pub drift_mode: DriftEvaluator,
    pub memory_stride: usize,
    pub kde_bandwidth: Option<f64>,
    pub picard_iterations: usize,
    pub sweep: Vec<usize>,
    pub seed: u64,
    pub threads: Option<usize>,
}

struct Entry {
    line: usize,
    value: String,
}

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

const KNOWN: &[(&str, &[&str])] = &[
    (
        "model",
        &["chi", "chi_over_chi_max", "decay_rate", "regularization_epsilon", "horizon_time"],
    ),
    ("initial", &["rho0", "c0"]),
    ("grid", &["grid_half_width", "grid_points"]),
    ("analysis", &["norm_exponent", "uniqueness_c0"]),
    ("pde", &["pde_time_step", "save_count"]),
    (
        "particles",
        &["n_particles", "particle_time_step", "drift_mode", "memory_stride", "kde_bandwidth"],
    ),
    ("picard", &["picard_iterations"]),
    ("compare", &["sweep_n_particles"]),
    ("run", &["seed", "threads"]),
];

struct Table {
    scalars: BTreeMap<String, Entry>,
    rho0: Vec<Entry>,
    c0: Vec<Entry>,
    last_line: usize,
}

impl Table {
    fn take(&mut self, key: &str) -> Option<Entry> {
        self.scalars.remove(key)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<(T, usize)>> {
        match self.take(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse::<T>()
                .map(|v| Some((v, e.line)))
                .map_err(|_| err(e.line, format!("cannot parse `{}` for {key}", e.value))),
        }
    }

    fn real(&mut self, key: &str, default: Option<f64>, check: impl Fn(f64) -> bool, what: &str) -> Result<f64> {
        match self.parse::<f64>(key)? {
            Some((v, _)) if check(v) && v.is_finite() => Ok(v),
            Some((v, line)) => Err(err(line, format!("{key} = {v}: {what}"))),
            None => default.ok_or_else(|| err(self.last_line, format!("missing required key {key}"))),
        }
    }

    fn count(&mut self, key: &str, default: usize, min: usize) -> Result<usize> {
        match self.parse::<usize>(key)? {
            Some((v, line)) if v < min => Err(err(line, format!("{key} = {v}: must be >= {min}"))),
            Some((v, _)) => Ok(v),
            None => Ok(default),
        }
    }
}

fn tokenize(text: &str) -> Result<Table> {
    let mut table = Table {
        scalars: BTreeMap::new(),
        rho0: Vec::new(),
        c0: Vec::new(),
        last_line: text.lines().count().max(1),
    };
    let mut section: Option<&str> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap().trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| err(line, "unterminated section header"))?
                .trim();
            section = Some(
                KNOWN
                    .iter()
                    .find(|(s, _)| *s == name)
                    .map(|(s, _)| *s)
                    .ok_or_else(|| err(line, format!("unknown section [{name}]")))?,
            );
            continue;
        }
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected `key = value`, found `{body}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let sec = section.ok_or_else(|| err(line, format!("key {key} appears before any section")))?;
        let keys = KNOWN.iter().find(|(s, _)| *s == sec).unwrap().1;
        if !keys.contains(&key) {
            return Err(err(line, format!("unknown key {key} in [{sec}]")));
        }
        if value.is_empty() {
            return Err(err(line, format!("empty value for {key}")));
        }
        let entry = Entry {
            line,
            value: value.to_string(),
        };
        if key == "rho0" {
            table.rho0.push(entry);
        } else if key == "c0" {
            table.c0.push(entry);
        } else if let Some(prev) = table.scalars.insert(key.to_string(), entry) {
            return Err(err(line, format!("duplicate key {key} (first set on line {})", prev.line)));
        }
    }
    Ok(table)
}

fn component(e: &Entry, role: MixtureRole) -> Result<GaussianComponent> {
    let mut parts = e.value.split_whitespace();
    if parts.next() != Some("gaussian") {
        return Err(err(e.line, "expected `gaussian weight center_x center_y variance`"));
    }
    let nums: Vec<f64> = parts
        .map(|p| p.parse::<f64>().map_err(|_| err(e.line, format!("cannot parse `{p}` as a number"))))
        .collect::<Result<_>>()?;
    if nums.len() != 4 {
        return Err(err(e.line, format!("gaussian takes 4 numbers, found {}", nums.len())));
    }
    let c = GaussianComponent {
        weight: nums[0],
        center: [nums[1], nums[2]],
        variance: nums[3],
    };
    GaussianMixture::new(vec![c], MixtureRole::ChemoInitial).map_err(|x| err(e.line, x.to_string()))?;
    if role == MixtureRole::Density && !(c.weight > 0.0) {
        return Err(err(e.line, "density weights must be positive"));
    }
    Ok(c)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(err(1, "empty configuration"));
        }
        let mut t = tokenize(text)?;
        let chi = match (t.parse::<f64>("chi")?, t.parse::<f64>("chi_over_chi_max")?) {
            (Some(_), Some((_, line))) => return Err(err(line, "give either chi or chi_over_chi_max, not both")),
            (Some((v, line)), None) if !(v >= 0.0 && v.is_finite()) => {
                return Err(err(line, format!("chi = {v}: must be >= 0")))
            }
            (Some((v, _)), None) => ChiSpec::Absolute(v),
            (None, Some((v, line))) if !(v >= 0.0 && v.is_finite()) => {
                return Err(err(line, format!("chi_over_chi_max = {v}: must be >= 0")))
            }
            (None, Some((v, _))) => ChiSpec::Relative(v),
            (None, None) => return Err(err(t.last_line, "missing chi or chi_over_chi_max in [model]")),
        };
        let lambda = t.real("decay_rate", Some(1.0), |v| v >= 0.0, "must be >= 0")?;
        let epsilon = t.real("regularization_epsilon", Some(0.05), |v| v >= 0.0, "must be >= 0")?;
        let horizon = t.real("horizon_time", None, |v| v > 0.0, "must be > 0")?;

        let rho0 = if t.rho0.is_empty() {
            vec![GaussianComponent {
                weight: 1.0,
                center: [0.0, 0.0],
                variance: 1.0,
            }]
        } else {
            t.rho0
                .iter()
                .map(|e| component(e, MixtureRole::Density))
                .collect::<Result<Vec<_>>>()?
        };
        if let Some(first) = t.rho0.first() {
            GaussianMixture::new(rho0.clone(), MixtureRole::Density).map_err(|e| err(first.line, e.to_string()))?;
        }
        let c0 = match t.c0.as_slice() {
            [] => rho0.clone(),
            [e] if e.value == "zero" => Vec::new(),
            entries => entries
                .iter()
                .map(|e| component(e, MixtureRole::ChemoInitial))
                .collect::<Result<Vec<_>>>()?,
        };

        let grid_half_width = t.real("grid_half_width", Some(10.0), |v| v > 0.0, "must be > 0")?;
        let grid_points = match t.parse::<usize>("grid_points")? {
            None => 128,
            Some((g, line)) => {
                Grid::new(grid_half_width, g).map_err(|e| err(line, e.to_string()))?;
                g
            }
        };
        let norm_exponent = t.real("norm_exponent", Some(DEFAULT_Q), |v| v > 2.0 && v < 4.0, "must lie in (2, 4)")?;
        let uniqueness_c0 = t.real("uniqueness_c0", Some(DEFAULT_C0), |v| v > 0.0, "must be > 0")?;
        let pde_time_step = t.real("pde_time_step", Some(1e-3), |v| v > 0.0 && v <= horizon, "must lie in (0, horizon_time]")?;
        let save_count = t.count("save_count", 10, 1)?;
        let n_particles = t.count("n_particles", 4000, 1)?;
        let particle_time_step =
            t.real("particle_time_step", Some(1e-2), |v| v > 0.0 && v <= horizon, "must lie in (0, horizon_time]")?;
        let drift_mode = match t.take("drift_mode") {
            None => DriftEvaluator::Direct,
            Some(e) => match e.value.as_str() {
                "direct" => DriftEvaluator::Direct,
                "field" => DriftEvaluator::Field,
                other => return Err(err(e.line, format!("drift_mode `{other}` is not direct or field"))),
            },
        };
        let memory_stride = t.count("memory_stride", 1, 1)?;
        let kde_bandwidth = match t.parse::<f64>("kde_bandwidth")? {
            None => None,
            Some((h, line)) if !(h > 0.0 && h.is_finite()) => {
                return Err(err(line, format!("kde_bandwidth = {h}: must be > 0")))
            }
            Some((h, _)) => Some(h),
        };
        let picard_iterations = t.count("picard_iterations", 4, 2)?;
        let sweep = match t.take("sweep_n_particles") {
            None => vec![1000, 4000, 16000],
            Some(e) => {
                let v = e
                    .value
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<usize>()
                            .ok()
                            .filter(|&n| n > 0)
                            .ok_or_else(|| err(e.line, format!("bad ensemble size `{}`", s.trim())))
                    })
                    .collect::<Result<Vec<_>>>()?;
                if v.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(err(e.line, "sweep_n_particles must increase"));
                }
                v
            }
        };
        let seed = match t.parse::<u64>("seed")? {
            Some((s, _)) => s,
            None => return Err(err(t.last_line, "missing required key seed in [run]; runs are never auto-seeded")),
        };
        let threads = match t.parse::<usize>("threads")? {
            Some((0, line)) => return Err(err(line, "threads must be >= 1")),
            Some((k, _)) => Some(k),
            None => None,
        };
        debug_assert!(t.scalars.is_empty(), "every known key is consumed");
        Ok(Self {
            chi,
            lambda,
            epsilon,
            horizon,
            rho0,
            c0,
            grid_half_width,
            grid_points,
            norm_exponent,
            uniqueness_c0,
            pde_time_step,
            save_count,
            n_particles,
            particle_time_step,
            drift_mode,
            memory_stride,
            kde_bandwidth,
            picard_iterations,
            sweep,
            seed,
            threads,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn initial_data(&self) -> Result<InitialData> {
        let c0 = if self.c0.is_empty() {
            GaussianMixture::zero()
        } else {
            GaussianMixture::new(self.c0.clone(), MixtureRole::ChemoInitial)?
        };
        InitialData::new(GaussianMixture::new(self.rho0.clone(), MixtureRole::Density)?, c0)
    }

    pub fn resolved_chi(&self) -> Result<f64> {
        match self.chi {
            ChiSpec::Absolute(c) => Ok(c),
            ChiSpec::Relative(f) => Ok(f * chi_max(&self.initial_data()?, self.norm_exponent)?),
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(self.resolved_chi()?, self.lambda, self.epsilon, self.horizon)
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid_half_width, self.grid_points)
    }

    pub fn save_times(&self) -> Vec<f64> {
        uniform_times(self.horizon, self.save_count)[1..].to_vec()
    }

    pub fn pde_config(&self) -> Result<PdeConfig> {
        let mut c = PdeConfig::new(self.grid()?, self.pde_time_step, self.params()?, self.initial_data()?);
        c.save_times = self.save_times();
        c.q_list = vec![self.norm_exponent];
        Ok(c)
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        let mut c = SimConfig::new(
            self.n_particles,
            self.particle_time_step,
            self.params()?,
            self.initial_data()?,
            self.drift_mode,
            self.grid()?,
            self.seed,
        );
        c.memory_stride = self.memory_stride;
        c.save_times = self.save_times();
        c.q_list = vec![self.norm_exponent];
        c.bandwidth = self.kde_bandwidth;
        c.threads = self.threads;
        Ok(c)
    }

    pub fn compare_config(&self) -> Result<CompareConfig> {
        Ok(CompareConfig {
            pde: self.pde_config()?,
            sim: self.sim_config()?,
            sweep: self.sweep.clone(),
        })
    }

    /// Canonical text that parses back to an identical configuration.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let r = |v: f64| format!("{v:?}");
        let g = |c: &GaussianComponent| {
            format!("gaussian {:?} {:?} {:?} {:?}", c.weight, c.center[0], c.center[1], c.variance)
        };
        s.push_str("[model]\n");
        match self.chi {
            ChiSpec::Absolute(c) => writeln!(s, "chi = {}", r(c)),
            ChiSpec::Relative(f) => writeln!(s, "chi_over_chi_max = {}", r(f)),
        }
        .unwrap();
        writeln!(s, "decay_rate = {}", r(self.lambda)).unwrap();
        writeln!(s, "regularization_epsilon = {}", r(self.epsilon)).unwrap();
        writeln!(s, "horizon_time = {}", r(self.horizon)).unwrap();
        s.push_str("\n[initial]\n");
        for c in &self.rho0 {
            writeln!(s, "rho0 = {}", g(c)).unwrap();
        }
        if self.c0.is_empty() {
            s.push_str("c0 = zero\n");
        }
        for c in &self.c0 {
            writeln!(s, "c0 = {}", g(c)).unwrap();
        }
        writeln!(s, "\n[grid]\ngrid_half_width = {}\ngrid_points = {}", r(self.grid_half_width), self.grid_points).unwrap();
        writeln!(
            s,
            "\n[analysis]\nnorm_exponent = {}\nuniqueness_c0 = {}",
            r(self.norm_exponent),
            r(self.uniqueness_c0)
        )
        .unwrap();
        writeln!(s, "\n[pde]\npde_time_step = {}\nsave_count = {}", r(self.pde_time_step), self.save_count).unwrap();
        writeln!(
            s,
            "\n[particles]\nn_particles = {}\nparticle_time_step = {}\ndrift_mode = {}\nmemory_stride = {}",
            self.n_particles,
            r(self.particle_time_step),
            match self.drift_mode {
                DriftEvaluator::Direct => "direct",
                DriftEvaluator::Field => "field",
            },
            self.memory_stride
        )
        .unwrap();
        if let Some(h) = self.kde_bandwidth {
            writeln!(s, "kde_bandwidth = {}", r(h)).unwrap();
        }
        writeln!(s, "\n[picard]\npicard_iterations = {}", self.picard_iterations).unwrap();
        let sweep: Vec<String> = self.sweep.iter().map(|n| n.to_string()).collect();
        writeln!(s, "\n[compare]\nsweep_n_particles = {}", sweep.join(", ")).unwrap();
        writeln!(s, "\n[run]\nseed = {}", self.seed).unwrap();
        if let Some(k) = self.threads {
            writeln!(s, "threads = {k}").unwrap();
        }
        s
    }
}
