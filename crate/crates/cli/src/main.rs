//! `sch`: presets and custom runs of the stochastic Cahn-Hilliard Monte Carlo studies.
//!
//! Exit codes: 2 for config or validation errors, 3 for solver failures beyond the failure
//! policy, 4 for I/O errors.

mod config;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use sch_core::experiment::{energy_decay_study, estimate_errors, subdivisions, ExperimentConfig};
use sch_core::noise::step_count;
use sch_core::postproc::{write_energy_series, write_level_sets, write_mass_series};
use sch_core::Error as CoreError;

use config::{ConfigFile, Overrides};
use manifest::Manifest;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 4,
            CliError::Core(e) if e.is_solver_failure() => 3,
            CliError::Core(CoreError::Io(_) | CoreError::Csv(_) | CoreError::Json(_)) => 4,
            CliError::Core(_) => 2,
        }
    }
}

#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset or config file and write reports plus a manifest.
    Run {
        /// Preset name; alternative to --preset.
        #[arg(value_name = "PRESET")]
        preset_name: Option<String>,
        #[command(flatten)]
        overrides: Overrides,
        /// Worker threads; 1 gives bitwise reproducible output, 0 uses all cores.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Resolve and check a config, print the mesh-constraint indicator and cost estimate.
    Validate {
        #[arg(value_name = "PRESET")]
        preset_name: Option<String>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            preset_name: preset,
            overrides,
            jobs,
            out_dir,
        } => run(preset.as_deref(), &overrides, jobs, &out_dir),
        Command::Validate {
            preset_name: preset,
            overrides,
        } => validate(preset.as_deref(), &overrides),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn resolve(preset: Option<&str>, overrides: &Overrides) -> Result<ExperimentConfig, CliError> {
    let c = overrides.resolve(preset)?;
    c.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(c)
}

/// Time steps per realization, peak memory per worker and single-core wall time.
struct CostEstimate {
    steps: usize,
    memory_bytes: usize,
    seconds: f64,
}

/// Calibrated on a single core: about 2 µs per unknown per Newton iteration, three
/// iterations per step.
fn estimate_cost(c: &ExperimentConfig) -> Result<CostEstimate, CliError> {
    let dofs = |h: f64| -> Result<usize, CliError> {
        let n = subdivisions(h, "h_list")?;
        Ok((n + 1) * (n + 1))
    };
    let mut work = 0.0;
    let mut steps = 0;
    let mut memory = 0;
    let mut add = |h: f64, tau: f64, stored: bool| -> Result<(), CliError> {
        let (d, s) = (dofs(h)?, step_count(c.t_final, tau)?);
        steps += s;
        work += (d * s) as f64;
        // factor fill plus stored reference states
        memory = memory.max(d * 600 + if stored { d * (s + 1) * 8 } else { 0 });
        Ok(())
    };
    if !c.is_error_study() {
        add(c.h_list[0], c.tau_list[0], false)?;
    } else if let Some(h_ref) = c.resolved_reference_h() {
        add(h_ref, c.tau_list[0], true)?;
        for &h in &c.h_list {
            add(h, c.tau_list[0], false)?;
        }
    } else {
        add(c.h_list[0], c.tau_ref, true)?;
        for &tau in &c.tau_list {
            add(c.h_list[0], tau, false)?;
        }
    }
    Ok(CostEstimate {
        steps,
        memory_bytes: memory,
        seconds: work * 3.0 * 2e-6 * c.realizations as f64,
    })
}

fn validate(preset: Option<&str>, overrides: &Overrides) -> Result<(), CliError> {
    let c = resolve(preset, overrides)?;
    let text = toml::to_string(&ConfigFile::from_resolved(&c))
        .map_err(|e| CliError::Config(e.to_string()))?;
    println!("{text}");
    for &tau in &c.tau_list {
        println!(
            "constraint indicator tau*(eps^-3 + eps^-1*delta^4) at tau = {tau:e}: {:.4e}",
            c.scheme_params(tau).constraint_indicator()
        );
    }
    for w in c.constraint_warnings() {
        println!("warning: {w}");
    }
    let cost = estimate_cost(&c)?;
    println!("time steps per realization: {}", cost.steps);
    println!("estimated peak memory per worker: {:.1} MiB", cost.memory_bytes as f64 / 1048576.0);
    println!("estimated single-core wall time: {:.0} s", cost.seconds);
    println!("config hash: {}", c.hash()?);
    Ok(())
}

fn create(path: &Path) -> Result<std::fs::File, CliError> {
    std::fs::File::create(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn run(preset: Option<&str>, overrides: &Overrides, jobs: usize, out_dir: &Path) -> Result<(), CliError> {
    let c = resolve(preset, overrides)?;
    std::fs::create_dir_all(out_dir).map_err(|source| CliError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut manifest = Manifest::start(&c, jobs)?;
    for w in c.constraint_warnings() {
        eprintln!("warning: {w}");
    }
    if c.is_error_study() {
        let report = estimate_errors(&c, jobs)?;
        let csv_path = out_dir.join("errors.csv");
        report.write_csv(create(&csv_path)?)?;
        manifest.add(&csv_path, "error-table/v1")?;
        let json_path = out_dir.join("errors.json");
        report.write_json(create(&json_path)?)?;
        manifest.add(&json_path, sch_core::experiment::ERROR_REPORT_SCHEMA)?;
        for r in &report.rungs {
            println!(
                "{:.4e}  Linf(L2) {:.3e}  L2(H1) {:.3e}  order {}",
                r.resolution,
                r.linf_l2,
                r.l2_h1,
                r.order_l2_h1.map_or("-".to_string(), |o| format!("{o:.2}"))
            );
        }
        manifest.warnings = report.warnings.clone();
    } else {
        let report = energy_decay_study(&c, jobs)?;
        let files: [(&str, &str); 3] = [
            ("energy.csv", sch_core::postproc::ENERGY_SCHEMA),
            ("mass.csv", sch_core::postproc::MASS_SCHEMA),
            ("level_sets.csv", sch_core::postproc::LEVEL_SET_SCHEMA),
        ];
        for (name, schema) in files {
            let path = out_dir.join(name);
            let f = create(&path)?;
            match name {
                "energy.csv" => write_energy_series(f, &report.energy_rows())?,
                "mass.csv" => write_mass_series(f, &report.mass_rows())?,
                _ => write_level_sets(f, &report.level_sets)?,
            }
            manifest.add(&path, schema)?;
        }
        let json_path = out_dir.join("ensemble.json");
        report.write_json(create(&json_path)?)?;
        manifest.add(&json_path, sch_core::experiment::ENSEMBLE_REPORT_SCHEMA)?;
        println!(
            "E[J]: {:.6e} -> {:.6e} over {} steps; max mass deviation {:.2e}",
            report.mean_energy[0],
            report.mean_energy[report.mean_energy.len() - 1],
            report.mean_energy.len() - 1,
            report.max_mass_deviation
        );
        manifest.warnings = report.warnings.clone();
    }
    let path = out_dir.join("manifest.json");
    manifest.finish(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}
