//! One function per subcommand. Each fills an [`Artifacts`] set and returns a one-line
//! summary for the terminal.

use crate::config::{AngleUnit, PolarizabilityUnit, RunConfig};
use crate::error::CliError;
use crate::output::{Artifacts, ReportFormat};
use serde::Serialize;
use std::f64::consts::TAU;
use std::path::Path;
use vls_core::atomprops::{
    scalar_polarizability, vector_polarizability, vls_per_intensity, AtomSpecies, Polarizability, PolarizabilityOptions,
};
use vls_core::constants::{gyromagnetic_ratio_rad_per_s_per_gauss, si_to_au_polarizability, si_to_cgs_polarizability};
use vls_core::protocols::{
    delayed_drop_scan, nulling_pipeline, power_for_peak_gradient, write_angle_slopes_csv, write_delayed_drop_csv,
    write_intensity_scans_csv, DelayedDropResult, NullingResult,
};
use vls_core::ramsey::{
    ellipse_fit_with, read_shots_csv, simulate_shots, write_shots_csv, EllipseMethod, RamseyConfig, ShotRecord,
};
use vls_core::spinmix::{count_periods, evolve_sma, lockin_amplitude, oscillation_frequency, write_trajectory_csv};
use vls_core::thermobi::{thermal_report, write_profile_csv, ThermalReport};
use vls_core::{EllipseFit64, SpinMixParams64, SpinorState64};

/// What a command needs besides its config section.
pub struct Context<'a> {
    pub config: &'a RunConfig,
    /// Directory that relative input paths are resolved against.
    pub base_dir: &'a Path,
    pub seed: u64,
    pub format: ReportFormat,
}

fn species(ctx: &Context) -> Result<AtomSpecies, CliError> {
    let atom = &ctx.config.atom;
    Ok(match &atom.line_table {
        Some(p) => AtomSpecies::from_file(&ctx.base_dir.join(p))?,
        None => AtomSpecies::by_key(&atom.species)?,
    })
}

fn in_unit(si: f64, unit: PolarizabilityUnit) -> (f64, &'static str) {
    match unit {
        PolarizabilityUnit::Si => (si, "C m^2 / V"),
        PolarizabilityUnit::Cgs => (si_to_cgs_polarizability(si), "cm^3"),
        PolarizabilityUnit::AtomicUnits => (si_to_au_polarizability(si), "a0^3"),
    }
}

fn angle(v: f64, unit: AngleUnit) -> f64 {
    match unit {
        AngleUnit::Deg => v.to_degrees(),
        AngleUnit::Rad => v,
    }
}

fn angle_label(unit: AngleUnit) -> &'static str {
    match unit {
        AngleUnit::Deg => "deg",
        AngleUnit::Rad => "rad",
    }
}

#[derive(Serialize)]
struct PolarizabilityValues {
    si: f64,
    cgs: f64,
    atomic_units: f64,
}

impl From<&Polarizability> for PolarizabilityValues {
    fn from(p: &Polarizability) -> Self {
        Self { si: p.value_si, cgs: p.cgs(), atomic_units: p.atomic_units() }
    }
}

#[derive(Serialize)]
struct PolarizabilityReport {
    species: String,
    level: String,
    f: f64,
    wavelength_m: f64,
    include_linewidth: bool,
    unit: &'static str,
    alpha_v: f64,
    alpha_s: f64,
    vector: PolarizabilityValues,
    scalar: PolarizabilityValues,
    /// Frequency shift per unit C m_F I (Hz per W/cm^2).
    vls_hz_per_w_cm2: f64,
    warnings: Vec<String>,
}

pub fn polarizability(ctx: &Context, out: &mut Artifacts) -> Result<String, CliError> {
    let atom = &ctx.config.atom;
    let sp = species(ctx)?;
    let opts = PolarizabilityOptions { include_linewidth: atom.include_linewidth, ..Default::default() };
    let av = vector_polarizability(&sp, atom.f, atom.wavelength, &opts)?;
    let asc = scalar_polarizability(&sp, atom.wavelength, &opts)?;
    let (v, unit) = in_unit(av.value_si, ctx.config.units.polarizability);
    let mut warnings = av.warnings.clone();
    warnings.extend(asc.warnings.iter().cloned());
    warnings.dedup();
    let rep = PolarizabilityReport {
        species: av.species.clone(),
        level: av.level.clone(),
        f: atom.f,
        wavelength_m: atom.wavelength,
        include_linewidth: atom.include_linewidth,
        unit,
        alpha_v: v,
        alpha_s: in_unit(asc.value_si, ctx.config.units.polarizability).0,
        vector: (&av).into(),
        scalar: (&asc).into(),
        vls_hz_per_w_cm2: vls_per_intensity(&av, atom.f)?,
        warnings,
    };
    out.report("polarizability", &rep, ctx.format)?;
    Ok(format!("alpha_v = {v:.5e} {unit} ({})", av.level))
}

#[derive(Serialize)]
struct FitReport {
    method: EllipseMethod,
    n_shots: usize,
    /// Folded into [0, pi].
    expected_delta_phi: Option<f64>,
    fit: EllipseFit64,
}

fn fit_points(shots: &[ShotRecord], method: EllipseMethod) -> Result<EllipseFit64, CliError> {
    let pts: Vec<(f64, f64)> = shots.iter().map(|s| (s.fz_a, s.fz_b)).collect();
    Ok(ellipse_fit_with(&pts, method)?)
}

pub fn simulate(ctx: &Context, out: &mut Artifacts) -> Result<String, CliError> {
    let r = ctx
        .config
        .ramsey
        .as_ref()
        .ok_or_else(|| CliError::Config("config key `ramsey`: missing section required by `simulate`".into()))?;
    let gamma = gyromagnetic_ratio_rad_per_s_per_gauss(r.g_f);
    let delta_b = match (r.delta_phi, r.delta_b) {
        (Some(p), None) => p / (gamma * r.interrogation_time),
        (None, Some(b)) => b,
        _ => return Err(CliError::Config("config key `ramsey`: set exactly one of `delta_phi` and `delta_b`".into())),
    };
    let cfg = RamseyConfig {
        interrogation_time: r.interrogation_time,
        pulse_phases: r.pulse_phases.clone(),
        contrast_a: r.contrast_a,
        contrast_b: r.contrast_b,
        phase_noise: r.phase_noise,
        readout_noise: r.readout_noise,
        delta_b,
        bias: r.bias,
        quadratic_zeeman_contrast: r.quadratic_zeeman_contrast,
        gamma,
        seed: ctx.seed,
    };
    let shots = simulate_shots(&cfg)?;
    out.csv("shots.csv", |w| write_shots_csv(w, &shots))?;
    let fit = fit_points(&shots, r.method)?;
    let rep = FitReport {
        method: r.method,
        n_shots: shots.len(),
        expected_delta_phi: Some(vls_core::protocols::fold(cfg.delta_phi())),
        fit,
    };
    out.report("fit", &rep, ctx.format)?;
    Ok(format!("delta_phi = {:.6} +- {:.6} rad from {} shots", fit.delta_phi, fit.uncertainty, shots.len()))
}

pub fn fit(ctx: &Context, out: &mut Artifacts) -> Result<String, CliError> {
    let f = ctx
        .config
        .fit
        .as_ref()
        .ok_or_else(|| CliError::Config("config key `fit`: missing section required by `fit`".into()))?;
    let path = ctx.base_dir.join(&f.input);
    let file = std::fs::File::open(&path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let shots = read_shots_csv(file).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let fit = fit_points(&shots, f.method)?;
    let rep = FitReport { method: f.method, n_shots: shots.len(), expected_delta_phi: None, fit };
    out.report("fit", &rep, ctx.format)?;
    Ok(format!("delta_phi = {:.6} +- {:.6} rad from {} shots", fit.delta_phi, fit.uncertainty, shots.len()))
}

#[derive(Serialize)]
struct NullHeadline {
    angle_unit: &'static str,
    polarizability_unit: &'static str,
    alpha_v: f64,
    alpha_v_sigma: f64,
    nulling_angle: f64,
    nulling_angle_sigma: f64,
    suppression_ratio: f64,
    suppression_ratio_sigma: f64,
}

#[derive(Serialize)]
struct NullReport<'a> {
    headline: NullHeadline,
    result: &'a NullingResult,
}

pub fn null(ctx: &Context, out: &mut Artifacts) -> Result<String, CliError> {
    let sec = &ctx.config.protocol.in_trap;
    let physics = vls_core::protocols::InTrapPhysics { seed: ctx.seed, ..sec.physics.clone() };
    let res = nulling_pipeline(&sec.plan, &physics)?;
    let units = ctx.config.units;
    let scale = |si: f64| in_unit(si, units.polarizability);
    let (av, pu) = scale(res.alpha_v);
    let headline = NullHeadline {
        angle_unit: angle_label(units.angle),
        polarizability_unit: pu,
        alpha_v: av,
        alpha_v_sigma: scale(res.alpha_v_sigma).0,
        nulling_angle: angle(res.nulling_angle, units.angle),
        nulling_angle_sigma: angle(res.nulling_angle_sigma, units.angle),
        suppression_ratio: res.suppression_ratio,
        suppression_ratio_sigma: res.suppression_ratio_sigma,
    };
    out.report("nulling", &NullReport { headline, result: &res }, ctx.format)?;
    out.csv("intensity_scans.csv", |w| write_intensity_scans_csv(w, &res))?;
    out.csv("angle_slopes.csv", |w| write_angle_slopes_csv(w, &res))?;
    Ok(format!(
        "theta_N = {:.4} {}, alpha_v = {av:.4e} {pu}, suppression ratio = {:.3e}",
        angle(res.nulling_angle, units.angle),
        angle_label(units.angle),
        res.suppression_ratio
    ))
}

#[derive(Serialize)]
struct DropHeadline {
    angle_unit: &'static str,
    beam_power_w: f64,
    peak_gradient_mg_per_cm: f64,
    peak_gradient_sigma_mg_per_cm: f64,
    direction_error: f64,
    nulling_angle: f64,
}

#[derive(Serialize)]
struct DropReport<'a> {
    headline: DropHeadline,
    result: &'a DelayedDropResult,
}

pub fn delayed_drop(ctx: &Context, out: &mut Artifacts) -> Result<String, CliError> {
    let sec = &ctx.config.protocol.delayed_drop;
    let mut physics = vls_core::protocols::DelayedDropPhysics { seed: ctx.seed, ..sec.physics.clone() };
    if let Some(g) = sec.peak_gradient_g_per_cm {
        physics.beam_power = power_for_peak_gradient(&sec.plan, &physics, g)?;
    }
    let res = delayed_drop_scan(&sec.plan, &physics)?;
    let u = ctx.config.units.angle;
    let headline = DropHeadline {
        angle_unit: angle_label(u),
        beam_power_w: res.beam_power,
        peak_gradient_mg_per_cm: res.peak_gradient_g_per_cm * 1e3,
        peak_gradient_sigma_mg_per_cm: res.peak_gradient_sigma_g_per_cm * 1e3,
        direction_error: angle(res.direction_error, u),
        nulling_angle: angle(res.fit.nulling_angle, u),
    };
    out.report("delayed_drop", &DropReport { headline, result: &res }, ctx.format)?;
    out.csv("delayed_drop_angles.csv", |w| write_delayed_drop_csv(w, &res))?;
    Ok(format!(
        "peak gradient = {:.1} +- {:.1} mG/cm, beam axis error = {:.3} {}",
        res.peak_gradient_g_per_cm * 1e3,
        res.peak_gradient_sigma_g_per_cm * 1e3,
        angle(res.direction_error, u),
        angle_label(u)
    ))
}

#[derive(Serialize)]
struct SpinmixRun {
    gradient_g_per_cm: f64,
    trajectory: String,
    periods: usize,
    frequency_hz: Option<f64>,
    /// Lock-in amplitude of rho_0 at the lowest-gradient frequency.
    amplitude: f64,
    /// Lowest-gradient amplitude over this one.
    suppression: f64,
    oscillating: bool,
    suppressed: bool,
    min_overlap: f64,
    max_magnetization_drift: f64,
    max_norm_drift: f64,
    max_relative_energy_drift: f64,
}

#[derive(Serialize)]
struct SpinmixReport {
    q_hz: f64,
    c_hz: f64,
    duration_s: f64,
    separation: bool,
    reference_frequency_hz: Option<f64>,
    runs: Vec<SpinmixRun>,
}

/// Swing of rho_0 required before a half-period counts.
const MIN_SWING: f64 = 0.01;

pub fn spinmix(ctx: &Context, out: &mut Artifacts) -> Result<String, CliError> {
    let s = &ctx.config.spinmix;
    if s.gradients_g_per_cm.is_empty() {
        return Err(CliError::Config("config key `spinmix.gradients_g_per_cm`: need at least one gradient".into()));
    }
    let base = SpinMixParams64 {
        q: TAU * s.q_hz,
        c: TAU * s.c_hz,
        trap_frequency: TAU * s.trap_frequency_hz,
        damping_ratio: s.damping_ratio,
        tf_radius: s.tf_radius,
        ..SpinMixParams64::rb87_default()
    };
    let state = SpinorState64::from_rho0_m(s.rho_0, s.magnetization, s.theta)?;
    let mut order: Vec<usize> = (0..s.gradients_g_per_cm.len()).collect();
    order.sort_by(|&a, &b| s.gradients_g_per_cm[a].abs().total_cmp(&s.gradients_g_per_cm[b].abs()));
    let mut series = Vec::with_capacity(order.len());
    for &g in &s.gradients_g_per_cm {
        let p = SpinMixParams64 { gradient_g_per_cm: g, ..base };
        series.push(evolve_sma(&state, &p, s.duration, s.dt, s.separation)?);
    }
    let times: Vec<Vec<f64>> = series.iter().map(|tr| tr.iter().map(|p| p.t).collect()).collect();
    let rho: Vec<Vec<f64>> = series.iter().map(|tr| tr.iter().map(|p| p.state.rho_0).collect()).collect();
    let reference = order[0];
    let f0 = oscillation_frequency(&times[reference], &rho[reference]);
    let a0 = f0.map(|f| lockin_amplitude(&times[reference], &rho[reference], f));
    let mut runs = Vec::with_capacity(series.len());
    for (k, tr) in series.iter().enumerate() {
        let name = format!("trajectory_{k}.csv");
        out.csv(&name, |w| write_trajectory_csv(w, tr))?;
        let m0 = tr[0].state.magnetization();
        let e0 = tr[0].energy;
        let rel = |e: f64| if e0 != 0.0 { ((e - e0) / e0).abs() } else { (e - e0).abs() };
        let amplitude = f0.map_or(0.0, |f| lockin_amplitude(&times[k], &rho[k], f));
        let suppression = match a0 {
            Some(a) if amplitude > 0.0 => a / amplitude,
            Some(_) => f64::INFINITY,
            None => 1.0,
        };
        let periods = count_periods(&times[k], &rho[k], MIN_SWING);
        runs.push(SpinmixRun {
            gradient_g_per_cm: s.gradients_g_per_cm[k],
            trajectory: name,
            periods,
            frequency_hz: oscillation_frequency(&times[k], &rho[k]),
            amplitude,
            suppression,
            oscillating: periods >= s.min_periods,
            suppressed: suppression > s.suppression_factor,
            min_overlap: tr.iter().map(|p| p.overlap).fold(f64::INFINITY, f64::min),
            max_magnetization_drift: tr.iter().map(|p| (p.state.magnetization() - m0).abs()).fold(0.0, f64::max),
            max_norm_drift: tr.iter().map(|p| (p.state.total() - 1.0).abs()).fold(0.0, f64::max),
            max_relative_energy_drift: tr.iter().map(|p| rel(p.energy)).fold(0.0, f64::max),
        });
    }
    let summary = runs
        .iter()
        .map(|r| {
            let mut flags = Vec::new();
            if r.oscillating {
                flags.push("oscillating");
            }
            if r.suppressed {
                flags.push("suppressed");
            }
            format!("{:.3} mG/cm: {} periods{}", r.gradient_g_per_cm * 1e3, r.periods,
                if flags.is_empty() { String::new() } else { format!(" [{}]", flags.join(", ")) })
        })
        .collect::<Vec<_>>()
        .join("; ");
    let rep = SpinmixReport {
        q_hz: s.q_hz,
        c_hz: s.c_hz,
        duration_s: s.duration,
        separation: s.separation,
        reference_frequency_hz: f0,
        runs,
    };
    out.report("spinmix", &rep, ctx.format)?;
    Ok(summary)
}

#[derive(Serialize)]
struct ThermalFile<'a> {
    scenario: &'a vls_core::HeatingScenario64,
    material: &'a vls_core::WindowMaterial64,
    report: ThermalReport<f64>,
}

pub fn thermal(ctx: &Context, out: &mut Artifacts) -> Result<String, CliError> {
    let t = &ctx.config.thermal;
    let rep = thermal_report(&t.scenario, &t.material).map_err(CliError::Config)?;
    if !(t.profile_extent > 0.0) {
        return Err(CliError::Config("config key `thermal.profile_extent`: must be > 0".into()));
    }
    out.report("thermal", &ThermalFile { scenario: &t.scenario, material: &t.material, report: rep }, ctx.format)?;
    let r_max = t.profile_extent * t.scenario.beam_radius;
    out.csv("retardance_profile.csv", |w| write_profile_csv(w, &t.scenario, &t.material, r_max, t.profile_points))?;
    Ok(format!(
        "T0 = {:.1} mK, dT = {:.0} mK, stress = {:.2} kPa, theta_max = {:.3e} rad ({:.2}x the reference {:.1e} rad)",
        rep.t0 * 1e3,
        rep.delta_t * 1e3,
        rep.stress * 1e-3,
        rep.theta_max,
        rep.theta_max_over_reference,
        rep.reference_theta_max
    ))
}
