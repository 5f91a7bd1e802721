//! Command-line front end. Exit codes: 0 success, 1 usage or config error,
//! 2 admissibility refusal, 3 blow-up abort at run time.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::analysis::{blowup_indicator, nq_functional, write_curves_csv, BlowupClass, NormCurve};
use crate::compare::compare;
use crate::config::RunConfig;
use crate::constants::{check_admissibility, q_sweep, thm_constants, AdmissibilityReport};
use crate::error::{Error, Result};
use crate::particles::{self, picard_iterate};
use crate::pde::{self, RunOutcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_REFUSED: i32 = 2;
pub const EXIT_BLOWUP: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ksmv", version, about = "Keller-Segel chemotaxis through its McKean-Vlasov representation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run inadmissible parameters anyway, as a blow-up probe.
    #[arg(long, global = true)]
    pub force: bool,
    /// Directory for artifacts and the manifest.
    #[arg(long, global = true, value_name = "DIR", default_value = "ksmv-out")]
    pub output: PathBuf,
    /// Worker threads; overrides the `threads` config key.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Existence and uniqueness verdicts in both constant conventions.
    Check { config: PathBuf },
    /// Constants at the configured exponent and the proof-convention q-sweep.
    Constants {
        config: PathBuf,
        #[arg(long, default_value_t = 19)]
        points: usize,
    },
    /// Spectral solve of the mild system.
    Pde { config: PathBuf },
    /// Regularized particle system.
    Particles { config: PathBuf },
    /// Picard iteration of the frozen-marginal map.
    Picard { config: PathBuf },
    /// Particle ensembles against the PDE over the configured sweep.
    Compare { config: PathBuf },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Check { .. } => "check",
            Command::Constants { .. } => "constants",
            Command::Pde { .. } => "pde",
            Command::Particles { .. } => "particles",
            Command::Picard { .. } => "picard",
            Command::Compare { .. } => "compare",
        }
    }

    fn config(&self) -> &Path {
        match self {
            Command::Check { config }
            | Command::Constants { config, .. }
            | Command::Pde { config }
            | Command::Particles { config }
            | Command::Picard { config }
            | Command::Compare { config } => config,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: String,
    /// Canonical config text; re-running it reproduces every numeric output.
    pub config_echo: String,
    pub tool_version: String,
    pub start_unix_s: f64,
    pub end_unix_s: f64,
    /// File names relative to the output directory.
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    pub exit_code: i32,
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

struct Session {
    dir: PathBuf,
    outputs: Vec<String>,
    warnings: Vec<String>,
}

impl Session {
    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.dir.join(name)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.path(name);
        fs::write(p, serde_json::to_string_pretty(value)?)?;
        Ok(())
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let p = self.path(name);
        fs::write(p, body)?;
        Ok(())
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    execute(&cli)
}

pub fn execute(cli: &Cli) -> i32 {
    let start = unix_now();
    let path = cli.command.config();
    let mut config = match RunConfig::load(path) {
        Ok(c) => c,
        Err(Error::Io(e)) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return EXIT_USAGE;
        }
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return EXIT_USAGE;
        }
    };
    if let Some(k) = cli.threads {
        if k == 0 {
            eprintln!("error: --threads must be >= 1");
            return EXIT_USAGE;
        }
        config.threads = Some(k);
    }
    if let Err(e) = fs::create_dir_all(&cli.output) {
        eprintln!("error: cannot create {}: {e}", cli.output.display());
        return EXIT_USAGE;
    }
    let mut session = Session {
        dir: cli.output.clone(),
        outputs: Vec::new(),
        warnings: Vec::new(),
    };
    let code = match with_threads(config.threads, || dispatch(cli, &config, &mut session)).and_then(|r| r) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::BlowUp { .. } | Error::Negativity { .. } => EXIT_BLOWUP,
                Error::Inadmissible(_) => EXIT_REFUSED,
                _ => EXIT_USAGE,
            }
        }
    };
    let manifest = RunManifest {
        command: cli.command.name().to_string(),
        config_path: path.display().to_string(),
        config_echo: config.echo(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        start_unix_s: start,
        end_unix_s: unix_now(),
        outputs: session.outputs.clone(),
        warnings: session.warnings.clone(),
        exit_code: code,
    };
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    let written = serde_json::to_string_pretty(&manifest)
        .map_err(Error::from)
        .and_then(|s| fs::write(cli.output.join("manifest.json"), s).map_err(Error::from));
    if let Err(e) = written {
        eprintln!("error: cannot write manifest: {e}");
        return if code == EXIT_OK { EXIT_USAGE } else { code };
    }
    code
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
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

fn admissibility(config: &RunConfig) -> Result<AdmissibilityReport> {
    check_admissibility(
        &config.params()?,
        &config.initial_data()?,
        config.norm_exponent,
        config.uniqueness_c0,
    )
}

fn print_admissibility(r: &AdmissibilityReport) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "chi = {:.6e}, |grad c0|_2 = {:.6}, q = {}", r.chi, r.grad_c0_l2, r.q);
    let _ = writeln!(
        out,
        "proof-K2   : A = {:.6}, B = {:.6}, lhs = {:.6}, chi_max = {:.6e}, existence {}",
        r.constants.a_proof,
        r.constants.b_proof,
        r.lhs,
        r.chi_max,
        if r.existence_ok { "holds" } else { "fails" }
    );
    let _ = writeln!(
        out,
        "theorem-A  : A = {:.6}, B = {:.6}, lhs = {:.6}, chi_max = {:.6e}, existence {}",
        r.constants.a_thm,
        r.constants.b_thm,
        r.lhs_theorem,
        r.chi_max_theorem,
        if r.existence_ok_theorem { "holds" } else { "fails" }
    );
    if let (Some(bq), Some(ul), Some(uo)) = (r.bq, r.uniqueness_lhs, r.uniqueness_ok) {
        let _ = writeln!(
            out,
            "B_q(chi) = {bq:.6}; uniqueness with C0 = {}: lhs = {ul:.6}, {}",
            r.c0,
            if uo { "holds" } else { "fails" }
        );
    }
    let _ = writeln!(out, "gating convention: {}", r.gating_convention.label());
}

/// Refuses inadmissible runs unless forced; returns whether the run is forced.
fn gate(cli: &Cli, config: &RunConfig, session: &mut Session) -> Result<bool> {
    let r = admissibility(config)?;
    if r.existence_ok {
        return Ok(false);
    }
    let msg = format!(
        "existence condition fails under the {} convention (lhs = {:.6} >= 1)",
        r.gating_convention.label(),
        r.lhs
    );
    if !cli.force {
        return Err(Error::Inadmissible(format!("{msg}; pass --force to run as a blow-up probe")));
    }
    session.warnings.push(format!("{msg}; forced run in blow-up-probe mode"));
    Ok(true)
}

fn dispatch(cli: &Cli, config: &RunConfig, s: &mut Session) -> Result<i32> {
    match &cli.command {
        Command::Check { .. } => {
            let r = admissibility(config)?;
            print_admissibility(&r);
            s.json("admissibility.json", &r)?;
            if !r.existence_ok_theorem && r.existence_ok {
                s.warnings.push("existence holds under proof-K2 but not under theorem-A".into());
            }
            Ok(if r.existence_ok { EXIT_OK } else { EXIT_REFUSED })
        }
        Command::Constants { points, .. } => {
            let k = thm_constants(config.norm_exponent)?;
            s.json("constants.json", &k)?;
            let sweep = q_sweep(config.resolved_chi()?, &config.initial_data()?, *points)?;
            let mut csv = String::from("q,a_proof,b_proof,chi_max,lhs\n");
            for r in &sweep.rows {
                csv.push_str(&format!("{},{},{},{},{}\n", r.q, r.a_proof, r.b_proof, r.chi_max, r.lhs));
            }
            print!("{csv}");
            println!("# best q at chi = {:.6e}: {:.4}", sweep.chi, sweep.best_q);
            s.text("q_sweep.csv", &csv)?;
            s.json("q_sweep.json", &sweep)?;
            Ok(EXIT_OK)
        }
        Command::Pde { .. } => {
            let forced = gate(cli, config, s)?;
            let mut pc = config.pde_config()?;
            pc.blowup_probe = forced;
            let run = pde::run(&pc)?;
            s.warnings.extend(run.warnings.iter().cloned());
            let mut curves = run.rho_curves.clone();
            curves.extend(nq_curves(&run.rho_curves)?);
            curves.extend(run.drift_curves.iter().cloned());
            write_curves_csv(&s.path("pde_curves.csv"), &curves)?;
            for st in &run.states {
                st.rho.write_binary(&s.path(&format!("rho_step{:06}.bin", st.step_index)))?;
            }
            let report = blowup_indicator(&run.trace);
            s.json("blowup.json", &report)?;
            s.json(
                "pde_summary.json",
                &serde_json::json!({
                    "outcome": run.outcome,
                    "final_boundary_mass": run.final_boundary_mass,
                    "classification": report.classification,
                }),
            )?;
            println!("pde: {:?}, classification {:?}", run.outcome, report.classification);
            Ok(match run.outcome {
                RunOutcome::Completed => EXIT_OK,
                _ => EXIT_BLOWUP,
            })
        }
        Command::Particles { .. } => {
            gate(cli, config, s)?;
            let sc = config.sim_config()?;
            let run = particles::run(&sc)?;
            s.warnings.extend(run.warnings.iter().cloned());
            let mut curves = run.curves.clone();
            curves.extend(nq_curves(&run.curves)?);
            write_curves_csv(&s.path("particle_curves.csv"), &curves)?;
            run.history.write_snapshot_csv(&s.path("particles.csv"), &run.save_steps)?;
            run.history.write_binary(&s.path("trajectory.bin"))?;
            for (&n, d) in run.save_steps.iter().zip(&run.densities) {
                d.write_binary(&s.path(&format!("kde_step{n:06}.bin")))?;
            }
            let report = blowup_indicator(&run.trace);
            s.json("blowup.json", &report)?;
            println!(
                "particles: N = {}, {} steps, bandwidth {:.4}, digest {:016x}",
                sc.n_particles,
                sc.steps(),
                run.bandwidth,
                run.history.digest()
            );
            Ok(if report.classification == BlowupClass::Aborted { EXIT_BLOWUP } else { EXIT_OK })
        }
        Command::Picard { .. } => {
            gate(cli, config, s)?;
            let sc = config.sim_config()?;
            s.warnings.extend(sc.warnings());
            let r = picard_iterate(&sc, config.picard_iterations)?;
            let mut csv = String::from("iteration,distance\n");
            for (j, d) in r.distances.iter().enumerate() {
                csv.push_str(&format!("{j},{d}\n"));
                println!("d_{j} = {d:.6e}");
            }
            s.text("picard_distances.csv", &csv)?;
            s.json(
                "picard.json",
                &serde_json::json!({
                    "save_steps": r.save_steps,
                    "distances": r.distances,
                    "masses": r.masses,
                }),
            )?;
            Ok(EXIT_OK)
        }
        Command::Compare { .. } => {
            gate(cli, config, s)?;
            let cc = config.compare_config()?;
            let r = compare(&cc)?;
            s.warnings.extend(r.notes.iter().cloned());
            let mut sweep = String::from("n_particles,bandwidth,l1,linf\n");
            for row in &r.sweep {
                sweep.push_str(&format!("{},{},{},{}\n", row.n_particles, row.bandwidth, row.l1, row.linf));
                println!("N = {:>6}: L1 = {:.5}, Linf = {:.5}", row.n_particles, row.l1, row.linf);
            }
            s.text("comparison_sweep.csv", &sweep)?;
            let mut series = String::from("t,l1,linf\n");
            for ((t, a), b) in r.times.iter().zip(&r.l1_distance).zip(&r.linf_distance) {
                series.push_str(&format!("{t},{a},{b}\n"));
            }
            s.text("comparison_series.csv", &series)?;
            s.json("comparison.json", &r)?;
            Ok(EXIT_OK)
        }
    }
}

/// Running-supremum functional built from each weighted `ρ`-curve.
fn nq_curves(rho_curves: &[NormCurve]) -> Result<Vec<NormCurve>> {
    rho_curves
        .iter()
        .map(|c| {
            let q = c.exponent;
            let raw: Vec<(f64, f64)> = c
                .samples
                .iter()
                .filter(|(t, _)| *t > 0.0)
                .map(|&(t, v)| (t, v / t.powf(1.0 - 1.0 / q)))
                .collect();
            let mut n = nq_functional(&raw, q, c.bound)?;
            n.convention = c.convention;
            Ok(n)
        })
        .collect()
}
