//! Command-line front end for the simulator.
//!
//! Exit codes: 0 on success, 1 when a run fails numerically or cannot write
//! its output, 2 for configuration errors and usage mistakes.

// `!(x > 0.0)` also rejects NaN, which is the point of every such check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{CommandFactory, Parser, Subcommand};

use llo_sim_core::experiments::{
    keyrate_asymptotic, keyrate_finite, run_bpsk_phase_experiment, run_finite_size_sweep, run_keyrate_distance_sweep,
    run_laser_noise_sweep, run_quantum_remap_experiment, run_weak_reference_sweep,
};
use llo_sim_core::link_sim::{write_samples_csv, Modulation};
use llo_sim_core::{Error, ExperimentResult};

pub use config::{parse_config, Resolved, RunConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_NUMERICAL: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Numerical(String),
    #[error("output error: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numerical(_) | CliError::Io(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => CliError::Config(m),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "llo-sim",
    version,
    about = "CV-QKD with a locally generated local oscillator: simulations and key rates"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,

    /// JSON config file; keys not given keep their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Inline override, e.g. `--set channel.fiber_length=50`. Repeatable.
    #[arg(long = "set", global = true, value_name = "PATH=VALUE")]
    pub overrides: Vec<String>,

    /// Master seed for every stochastic output.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads; output does not depend on this value.
    #[arg(long, global = true, env = "LLO_SIM_THREADS")]
    pub threads: Option<usize>,

    /// Fiber length of the key-rate link, km.
    #[arg(long, global = true, value_name = "KM")]
    pub fiber_length: Option<f64>,

    /// Directory for result files.
    #[arg(long, global = true, value_name = "DIR")]
    pub output_dir: Option<PathBuf>,

    /// Also write the first sub-batch's raw quadratures for phase-exp and
    /// remap-exp as `<experiment>-<seed>-samples.csv`.
    #[arg(long, global = true)]
    pub raw_samples: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// BPSK phase recovery with strong pulses.
    PhaseExp,
    /// Residual phase variance against reference photon number.
    WeakRef,
    /// Remapping of weak unmodulated signals.
    RemapExp,
    /// Delayed self-interference of both lasers.
    LaserNoise,
    /// Asymptotic key rate at one link length.
    KeyrateAsymptotic,
    /// Finite-size key rate at one link length and pulse count.
    KeyrateFinite,
    /// Asymptotic key rate over fiber length.
    SweepDistance,
    /// Finite-size key rate over pulse count.
    SweepN,
    /// Every command above, in order.
    All,
}

impl Command {
    pub const EXPERIMENTS: [Command; 8] = [
        Command::PhaseExp,
        Command::WeakRef,
        Command::RemapExp,
        Command::LaserNoise,
        Command::KeyrateAsymptotic,
        Command::KeyrateFinite,
        Command::SweepDistance,
        Command::SweepN,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::PhaseExp => "phase-exp",
            Command::WeakRef => "weak-ref",
            Command::RemapExp => "remap-exp",
            Command::LaserNoise => "laser-noise",
            Command::KeyrateAsymptotic => "keyrate-asymptotic",
            Command::KeyrateFinite => "keyrate-finite",
            Command::SweepDistance => "sweep-distance",
            Command::SweepN => "sweep-n",
            Command::All => "all",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::EXPERIMENTS.into_iter().chain([Command::All]).find(|c| c.name() == name)
    }
}

/// Run one experiment command.
pub fn execute(command: Command, r: &Resolved, seed: u64) -> Result<ExperimentResult, CliError> {
    Ok(match command {
        Command::PhaseExp => run_bpsk_phase_experiment(&r.bpsk, seed)?,
        Command::WeakRef => run_weak_reference_sweep(&r.weak_ref, seed)?,
        Command::RemapExp => run_quantum_remap_experiment(&r.remap, seed)?,
        Command::LaserNoise => run_laser_noise_sweep(&r.laser_noise, seed)?,
        Command::KeyrateAsymptotic => keyrate_asymptotic(&r.security)?,
        Command::KeyrateFinite => keyrate_finite(&r.security, r.delta_assignment)?,
        Command::SweepDistance => run_keyrate_distance_sweep(&r.security, &r.distance_grid)?,
        Command::SweepN => run_finite_size_sweep(&r.pulse_security, &r.pulse_grid)?,
        Command::All => return Err(CliError::Config("`all` is not a single experiment".into())),
    })
}

fn write_raw_samples(command: Command, r: &Resolved, seed: u64, dir: &Path) -> Result<Option<PathBuf>, CliError> {
    let samples = match command {
        Command::PhaseExp => {
            let b = &r.bpsk;
            let m = Modulation::Bpsk { phase0: b.phase0, phase1: b.phase1 };
            b.bench.batch_samples(0, b.n_pairs, b.signal_photons, b.reference_photons, m, seed)?
        }
        Command::RemapExp => {
            let c = &r.remap;
            c.bench.batch_samples(0, c.n_pairs, c.signal_photons, c.reference_photons, Modulation::None, seed)?
        }
        _ => return Ok(None),
    };
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}-{seed}-samples.csv", command.name()));
    let file = io::BufWriter::new(fs::File::create(&path)?);
    write_samples_csv(file, &samples).map_err(|e| CliError::Io(io::Error::other(e)))?;
    Ok(Some(path))
}

/// Resolve configuration, run the command(s), write result files and print
/// one summary line per metric to `out`.
pub fn dispatch(cli: &Cli, command: Command, out: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let mut overrides = cli.overrides.clone();
    if let Some(km) = cli.fiber_length {
        overrides.push(format!("channel.fiber_length={km}"));
    }
    let mut cfg = parse_config(cli.config.as_deref(), &overrides)?;
    let resolved = cfg.resolve()?;
    cfg.seed = cli.seed.unwrap_or(cfg.seed);
    let seed = cfg.seed;
    let dir = cli.output_dir.clone().unwrap_or_else(|| cfg.output_dir.clone());
    // The output location is not part of what determines a result.
    let mut cfg_json = serde_json::to_value(&cfg).expect("config serializes");
    if let Some(obj) = cfg_json.as_object_mut() {
        obj.remove("output_dir");
    }

    let commands: Vec<Command> = if command == Command::All { Command::EXPERIMENTS.to_vec() } else { vec![command] };
    for c in commands {
        let mut result = execute(c, &resolved, seed)?;
        if let Some(meta) = result.metadata.as_object_mut() {
            meta.insert("run_config".into(), cfg_json.clone());
            meta.insert("master_seed".into(), seed.into());
        }
        result.write_files(&dir, seed)?;
        if cli.raw_samples {
            write_raw_samples(c, &resolved, seed, &dir)?;
        }
        for line in result.summary_lines() {
            writeln!(out, "{line}")?;
        }
    }
    Ok(())
}

/// Entry point behind `main`: parse arguments and return the exit code.
pub fn run<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut (dyn Write + Send)) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = if code == 0 { write!(out, "{}", e.render()) } else { write!(err, "{}", e.render()) };
            return if code == 0 { EXIT_OK } else { EXIT_CONFIG };
        }
    };
    match run_cli(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if matches!(e, CliError::Config(_)) && cli.command.is_none() {
                let _ = writeln!(err, "{}", Cli::command().render_usage());
            }
            e.exit_code()
        }
    }
}

fn run_cli(cli: &Cli, out: &mut (dyn Write + Send)) -> Result<(), CliError> {
    let command = match cli.command {
        Some(c) => c,
        None => {
            let cfg = parse_config(cli.config.as_deref(), &cli.overrides)?;
            match cfg.experiment.as_deref() {
                Some(name) => Command::from_name(name)
                    .ok_or_else(|| CliError::Config(format!("experiment: unknown command `{name}`")))?,
                None => return Err(CliError::Config("no command given".into())),
            }
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    match cli.threads {
        Some(0) => return Err(CliError::Config("threads must be at least 1".into())),
        Some(n) => builder = builder.num_threads(n),
        None => {}
    }
    let pool = builder.build().map_err(|e| CliError::Config(format!("threads: {e}")))?;
    pool.install(|| dispatch(cli, command, out))
}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}
