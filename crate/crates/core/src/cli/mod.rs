//! Command-line front end.
//!
//! Every command is a pure function of its resolved [`RunConfig`]. Data goes
//! to CSV files, warnings and the resolved config go to stderr through `log`,
//! and stdout carries a short human-readable summary.

mod commands;
mod verify;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::filter::HBAR_OVER_K;
use crate::mc::{Model, ReservoirSpec};
use crate::noise::MechanismKind;

pub use commands::{fmt_float, CsvTable};
pub use verify::{run_checks, CheckOutcome};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "NLAMP_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "nlamp", version, about = "Noise analysis of linear and nonlinear photon-number amplifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// JSON config file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub trials: Option<u64>,
    /// Output file (default: `<command>.csv` under $NLAMP_OUT_DIR or the working directory).
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Fock cutoff used for every truncated mode instead of the leakage heuristic.
    #[arg(long, global = true)]
    pub cutoff: Option<usize>,
    /// Shift-operator phase; drawn from the seed when absent.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub fixed_phase: Option<f64>,
    /// Total gain G for verify, filter-scan and shelving-demo.
    #[arg(long, global = true)]
    pub gain: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Run the invariant checks and print a pass/fail table.
    Verify,
    /// SNR against total gain for each mechanism.
    SnrTable,
    /// Monte Carlo scenarios compared with the closed-form variances.
    Mc,
    /// Filter transmission scan with end-to-end SNR.
    FilterScan,
    /// Fluorescence readout with the cavity mode count swept from G to 1.
    ShelvingDemo,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::SnrTable => "snr-table",
            Command::Mc => "mc",
            Command::FilterScan => "filter-scan",
            Command::ShelvingDemo => "shelving-demo",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub trials: u64,
    pub out: Option<PathBuf>,
    pub cutoff: Option<usize>,
    pub fixed_phase: Option<f64>,
    pub gain: u64,
    pub verify: VerifyConfig,
    pub snr: SnrConfig,
    pub mc: McConfig,
    pub filter: FilterConfig,
    pub shelving: ShelvingConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            trials: 1_000_000,
            out: None,
            cutoff: None,
            fixed_phase: None,
            gain: 4,
            verify: VerifyConfig::default(),
            snr: SnrConfig::default(),
            mc: McConfig::default(),
            filter: FilterConfig::default(),
            shelving: ShelvingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Input photon number fed to the amplifiers.
    pub n_a: u64,
    /// Thermal occupation of the reservoir mode.
    pub reservoir_nbar: f64,
    /// Real gains for the linear-amplifier oracles.
    pub linear_gains: Vec<f64>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { n_a: 1, reservoir_nbar: 1.0, linear_gains: vec![1.0, 1.5, 2.0, 3.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnrConfig {
    pub mechanisms: Vec<MechanismKind>,
    pub gains: Vec<f64>,
    /// Step gains tried for the multi-step mechanisms.
    pub step_gains: Vec<u64>,
    pub n_a: u64,
    pub dn_b: f64,
}

impl Default for SnrConfig {
    fn default() -> Self {
        SnrConfig {
            mechanisms: MechanismKind::ALL.to_vec(),
            gains: vec![1.0, 2.0, 4.0, 8.0, 16.0, 64.0, 256.0, 1024.0],
            step_gains: vec![2, 4],
            n_a: 1,
            dn_b: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEntry {
    #[serde(flatten)]
    pub model: Model,
    pub input_n_a: u64,
    pub reservoir: ReservoirSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub scenarios: Vec<ScenarioEntry>,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            scenarios: vec![ScenarioEntry {
                model: Model::GModes { gain: 4 },
                input_n_a: 1,
                reservoir: ReservoirSpec::Thermal(1.0),
            }],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Resonance frequency in rad/s.
    pub omega0: f64,
    /// Full linewidth in rad/s.
    pub gamma: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub points: usize,
    /// CSV with columns `omega,T_re,T_im,R_re,R_im`, used instead of the
    /// Lorentzian grid.
    pub table: Option<PathBuf>,
    pub temperature: f64,
    /// Amplification frequency ω′ in rad/s.
    pub omega_amp: f64,
    pub n_a: u64,
    /// Internal-mode occupation; thermal at each scan frequency when absent.
    pub internal_nbar: Option<f64>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        // ħω/kT ≈ 5 at resonance and ≈ 150 at the amplification frequency
        let unit = 1.0 / HBAR_OVER_K;
        FilterConfig {
            omega0: 5.0 * unit,
            gamma: 0.2 * unit,
            omega_min: 4.0 * unit,
            omega_max: 6.0 * unit,
            points: 201,
            table: None,
            temperature: 1.0,
            omega_amp: 150.0 * unit,
            n_a: 1,
            internal_nbar: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShelvingConfig {
    pub n_a: u64,
    pub reservoir: ReservoirSpec,
}

impl Default for ShelvingConfig {
    fn default() -> Self {
        ShelvingConfig { n_a: 1, reservoir: ReservoirSpec::Thermal(1.0) }
    }
}

/// Configuration problems and check failures, mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    CheckFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::CheckFailed(_) => EXIT_CHECK_FAILED,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::CheckFailed(msg) => write!(f, "check failed: {msg}"),
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

/// Loads the config file (if any) and applies flag overrides.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(trials) = cli.trials {
        config.trials = trials;
    }
    if let Some(out) = &cli.out {
        config.out = Some(out.clone());
    }
    if let Some(cutoff) = cli.cutoff {
        config.cutoff = Some(cutoff);
    }
    if let Some(phase) = cli.fixed_phase {
        config.fixed_phase = Some(phase);
    }
    if let Some(gain) = cli.gain {
        config.gain = gain;
    }
    if config.trials < 1 {
        return Err(CliError::Config("trials must be >= 1".into()));
    }
    if config.gain < 1 {
        return Err(CliError::Config("gain must be >= 1".into()));
    }
    if config.fixed_phase.is_some_and(|p| !p.is_finite()) {
        return Err(CliError::Config("fixed phase must be finite".into()));
    }
    Ok(config)
}

/// `--out`, else `<command>.csv` in $NLAMP_OUT_DIR, else in the working
/// directory.
pub fn output_path(config: &RunConfig, command: Command) -> PathBuf {
    if let Some(out) = &config.out {
        return out.clone();
    }
    let dir = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
    dir.join(format!("{}.csv", command.name()))
}

fn write_output(path: &Path, table: &CsvTable) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::Config(format!("{}: {e}", parent.display())))?;
    }
    let bytes = table.to_bytes().map_err(|e| CliError::Config(e.to_string()))?;
    let mut file = fs::File::create(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    file.write_all(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(())
}

/// Runs one command against a resolved config.
pub fn execute(command: Command, config: &RunConfig) -> Result<(), CliError> {
    let resolved = serde_json::to_string(config).expect("config serializes");
    log::info!("{} resolved config: {resolved}", command.name());
    let path = output_path(config, command);
    let (table, outcome) = match command {
        Command::Verify => verify::cmd_verify(config)?,
        Command::SnrTable => (commands::cmd_snr_table(config)?, Ok(())),
        Command::Mc => (commands::cmd_mc(config)?, Ok(())),
        Command::FilterScan => (commands::cmd_filter_scan(config)?, Ok(())),
        Command::ShelvingDemo => (commands::cmd_shelving_demo(config)?, Ok(())),
    };
    write_output(&path, &table)?;
    println!("wrote {} rows to {}", table.rows.len(), path.display());
    outcome
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = resolve_config(&cli).and_then(|config| execute(cli.command, &config));
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            log::error!("{e}");
            e.exit_code()
        }
    }
}
