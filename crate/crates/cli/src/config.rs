//! Run configuration. One JSON document with a section per command; every section and
//! field is optional except where a command needs a value that has no sensible default.

use crate::error::CliError;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use vls_core::protocols::{DelayedDropPhysics, DelayedDropPlan, InTrapPhysics, InTrapPlan};
use vls_core::ramsey::{EllipseMethod, PhaseNoise, PulsePhases};
use vls_core::{HeatingScenario64, WindowMaterial64};

pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; every stochastic stage draws from a named substream of it.
    pub seed: Option<u64>,
    /// Output directory, relative to the working directory.
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub units: Units,
    #[serde(default)]
    pub atom: AtomSection,
    pub ramsey: Option<RamseySection>,
    pub fit: Option<FitSection>,
    #[serde(default)]
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub spinmix: SpinmixSection,
    #[serde(default)]
    pub thermal: ThermalSection,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolarizabilityUnit {
    #[default]
    Si,
    Cgs,
    AtomicUnits,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleUnit {
    #[default]
    Deg,
    Rad,
}

/// Units used for headline numbers in reports. Inputs are always SI and radians.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Units {
    pub polarizability: PolarizabilityUnit,
    pub angle: AngleUnit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AtomSection {
    /// Built-in species key, ignored when `line_table` is given.
    pub species: String,
    /// TOML line table, relative to the config file.
    pub line_table: Option<PathBuf>,
    pub f: f64,
    pub wavelength: f64,
    pub include_linewidth: bool,
}

impl Default for AtomSection {
    fn default() -> Self {
        Self { species: "rb87".into(), line_table: None, f: 1.0, wavelength: 1064e-9, include_linewidth: true }
    }
}

/// Two-condensate Ramsey simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RamseySection {
    /// T (s); required.
    pub interrogation_time: f64,
    #[serde(default = "default_pulse_phases")]
    pub pulse_phases: PulsePhases,
    #[serde(default = "default_contrast")]
    pub contrast_a: f64,
    #[serde(default = "default_contrast")]
    pub contrast_b: f64,
    #[serde(default = "default_phase_noise")]
    pub phase_noise: PhaseNoise,
    #[serde(default)]
    pub readout_noise: f64,
    /// Relative phase (rad). Exactly one of `delta_phi` and `delta_b` must be set.
    pub delta_phi: Option<f64>,
    /// |B_A| - |B_B| (G).
    pub delta_b: Option<f64>,
    #[serde(default)]
    pub bias: f64,
    #[serde(default)]
    pub quadratic_zeeman_contrast: bool,
    #[serde(default = "default_g_f")]
    pub g_f: f64,
    #[serde(default)]
    pub method: EllipseMethod,
}

fn default_pulse_phases() -> PulsePhases {
    PulsePhases::Uniform { count: 200 }
}

fn default_contrast() -> f64 {
    0.8
}

fn default_phase_noise() -> PhaseNoise {
    PhaseNoise::Uniform
}

fn default_g_f() -> f64 {
    -0.5
}

/// Ellipse fit of an existing shot table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    /// Shot CSV with columns `phase, fz_a, fz_b`, relative to the config file.
    pub input: PathBuf,
    #[serde(default)]
    pub method: EllipseMethod,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSection {
    pub in_trap: InTrapSection,
    pub delayed_drop: DelayedDropSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InTrapSection {
    pub plan: InTrapPlan,
    /// `physics.seed` is replaced by the root seed.
    pub physics: InTrapPhysics,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DelayedDropSection {
    pub plan: DelayedDropPlan,
    /// `physics.seed` is replaced by the root seed.
    pub physics: DelayedDropPhysics,
    /// When set, the beam power is chosen so that the full-circularity field difference
    /// over the mean separation equals this gradient (G/cm).
    pub peak_gradient_g_per_cm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpinmixSection {
    pub q_hz: f64,
    pub c_hz: f64,
    /// One trajectory per entry (G/cm).
    pub gradients_g_per_cm: Vec<f64>,
    pub trap_frequency_hz: f64,
    pub damping_ratio: f64,
    pub tf_radius: f64,
    pub rho_0: f64,
    pub magnetization: f64,
    pub theta: f64,
    pub duration: f64,
    pub dt: f64,
    /// Feed the Stern-Gerlach separation back into the interaction.
    pub separation: bool,
    /// A run counts as oscillating with at least this many periods.
    pub min_periods: usize,
    /// A run counts as suppressed when its lock-in amplitude is this many times below the
    /// lowest-gradient run.
    pub suppression_factor: f64,
}

impl Default for SpinmixSection {
    fn default() -> Self {
        Self {
            q_hz: 10.0,
            c_hz: -3.2,
            gradients_g_per_cm: vec![0.0, 0.005, 0.132],
            trap_frequency_hz: 10.0,
            damping_ratio: 1.0,
            tf_radius: 13e-6,
            rho_0: 0.5,
            magnetization: 0.0,
            theta: 0.0,
            duration: 0.4,
            dt: 5e-4,
            separation: true,
            min_periods: 3,
            suppression_factor: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThermalSection {
    pub scenario: HeatingScenario64,
    pub material: WindowMaterial64,
    pub profile_points: usize,
    /// Outer radius of the profile table, in beam radii.
    pub profile_extent: f64,
}

impl Default for ThermalSection {
    fn default() -> Self {
        Self {
            scenario: HeatingScenario64::default(),
            material: WindowMaterial64::fused_silica(),
            profile_points: 201,
            profile_extent: 5.0,
        }
    }
}

/// Parse a config document; errors carry the JSON path of the offending key.
pub fn parse(text: &str) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." || path.is_empty() {
            CliError::Config(format!("config: {inner}"))
        } else {
            CliError::Config(format!("config key `{path}`: {inner}"))
        }
    })
}

pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}
