//! Batch front end for `vls-core`: parse a JSON run config, run one pipeline and write
//! its reports, tables and a manifest of content hashes into an output directory.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use clap::{Parser, Subcommand};
use config::{RunConfig, DEFAULT_SEED};
use error::CliError;
use output::{Artifacts, ReportFormat, RunManifest};
use std::path::{Path, PathBuf};
use std::time::Instant;

const EXIT_CODES: &str = "Exit codes: 0 success, 1 i/o failure, 2 config error, 3 numerical failure, 4 degenerate fit.";

#[derive(Debug, Parser)]
#[command(name = "vls", version, about = "Vector light shift simulation and analysis", after_help = EXIT_CODES)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run config; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root seed, overriding the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, overriding the config (default `vls-out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Format of the structured report; tables are always CSV.
    #[arg(long, global = true, value_enum, default_value_t = ReportFormat::Json)]
    pub format: ReportFormat,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Vector and scalar polarizability of a ground hyperfine level.
    #[command(after_help = "Writes polarizability.{json,csv}.")]
    Polarizability,
    /// Simulate paired Ramsey shots and fit the ellipse.
    #[command(after_help = "Writes shots.csv (phase, fz_a, fz_b) and fit.{json,csv}.")]
    Simulate,
    /// Fit an existing shot table (`fit.input`).
    #[command(after_help = "Reads a CSV with columns phase, fz_a, fz_b. Writes fit.{json,csv}.")]
    Fit,
    /// In-trap nulling: intensity scans at several QWP angles.
    #[command(after_help = "Writes nulling.{json,csv}, \
intensity_scans.csv (qwp_angle_deg, power_offset, normalized_intensity, delta_i_w_per_cm2, delta_b_g, delta_b_sigma_g, fit_g) and \
angle_slopes.csv (qwp_angle_deg, slope_g_per_w_cm2, slope_sigma_g_per_w_cm2, fit_g_per_w_cm2).")]
    Null,
    /// Delayed-drop scan of a single beam with three bias directions.
    #[command(after_help = "Writes delayed_drop.{json,csv} and \
delayed_drop_angles.csv (qwp_angle_deg, delta_b_vls_mg, delta_b_vls_sigma_mg, fit_mg, gradient_mg_per_cm).")]
    DelayedDrop,
    /// Single-mode spin-mixing trajectories at several field gradients.
    #[command(after_help = "Writes spinmix.{json,csv} and one trajectory_<k>.csv per gradient \
(t_s, rho_m1, rho_0, rho_p1, y_m1_m, y_p1_m, lambda).")]
    Spinmix,
    /// Thermal birefringence of the vacuum window.
    #[command(after_help = "Writes thermal.{json,csv} and retardance_profile.csv (r_m, theta_rad).")]
    Thermal,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Polarizability => "polarizability",
            Command::Simulate => "simulate",
            Command::Fit => "fit",
            Command::Null => "null",
            Command::DelayedDrop => "delayed-drop",
            Command::Spinmix => "spinmix",
            Command::Thermal => "thermal",
        }
    }
}

pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub summary: String,
    pub manifest: RunManifest,
}

/// Run one command. Files already produced when an error occurs are still written, and
/// the manifest records the error.
pub fn run(cli: &Cli) -> Result<RunOutcome, CliError> {
    let start = Instant::now();
    let mut config = match &cli.config {
        Some(p) => config::load(p)?,
        None => RunConfig::default(),
    };
    let base_dir = cli.config.as_deref().and_then(Path::parent).map(Path::to_path_buf).unwrap_or_default();
    let seed = cli.seed.or(config.seed).unwrap_or(DEFAULT_SEED);
    config.seed = Some(seed);
    let out_dir = cli.out.clone().or_else(|| config.output_dir.clone()).unwrap_or_else(|| PathBuf::from("vls-out"));
    config.output_dir = None;
    let config_sha256 = output::sha256_hex(&serde_json::to_vec(&config)?);

    let ctx = commands::Context { config: &config, base_dir: &base_dir, seed, format: cli.format };
    let mut artifacts = Artifacts::default();
    let mut go = || -> Result<String, CliError> {
        match cli.command {
            Command::Polarizability => commands::polarizability(&ctx, &mut artifacts),
            Command::Simulate => commands::simulate(&ctx, &mut artifacts),
            Command::Fit => commands::fit(&ctx, &mut artifacts),
            Command::Null => commands::null(&ctx, &mut artifacts),
            Command::DelayedDrop => commands::delayed_drop(&ctx, &mut artifacts),
            Command::Spinmix => commands::spinmix(&ctx, &mut artifacts),
            Command::Thermal => commands::thermal(&ctx, &mut artifacts),
        }
    };
    let result = match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("--threads {n}: {e}")))?
            .install(go),
        None => go(),
    };
    if result.is_err() && artifacts.files.is_empty() {
        return Err(result.err().expect("checked"));
    }
    let files = output::write_all(&out_dir, &artifacts)?;
    let manifest = RunManifest {
        command: cli.command.name().into(),
        toolkit_version: env!("CARGO_PKG_VERSION").into(),
        config_sha256,
        seed,
        wall_clock_s: start.elapsed().as_secs_f64(),
        status: match &result {
            Ok(_) => "ok".into(),
            Err(e) => format!("error: {e}"),
        },
        files,
    };
    output::write_manifest(&out_dir, &manifest)?;
    let summary = result?;
    Ok(RunOutcome { out_dir, summary, manifest })
}
