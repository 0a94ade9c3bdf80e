//! In-trap nulling: two trapped condensates, intensity-imbalance scans at several
//! QWP angles, and the double regression for the nulling angle.

use super::regression::{linear_fit, LinearFit};
use super::unfold::restore_signs;
use super::{balance_offset, quantize_angle, suppression_ratio, ProtocolError};
use crate::constants::{gyromagnetic_ratio_rad_per_s_per_gauss, PLANCK_H, SPEED_OF_LIGHT, EPSILON_0};
use crate::polopt::{circularity_after_cell, nulling_angle};
use crate::ramsey::{fit_shots, simulate_shots, PhaseNoise, PulsePhases, RamseyConfig};
use crate::rng::derive_seed;
use crate::trapfield::{MagneticEnvironment, VlsCoupling};
use crate::vec3::Vec3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Schedule of rf powers, intensity offsets and QWP angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InTrapPlan {
    /// rf power driving beam A before balancing (rf units).
    pub rf_power_a: f64,
    pub rf_power_b: f64,
    /// Site intensity per rf unit (W/m^2).
    pub coupling_a: f64,
    pub coupling_b: f64,
    /// Offsets `Delta P'` from the balance point (rf units).
    pub power_offsets: Vec<f64>,
    /// QWP dial angles (rad).
    pub qwp_angles: Vec<f64>,
    pub interrogation_time: f64,
    pub shots_per_point: usize,
    /// Rotation-stage step (rad) applied to the angle schedule.
    pub quantization: Option<f64>,
}

impl Default for InTrapPlan {
    fn default() -> Self {
        let balanced = 8.39e7;
        let arcmin = 1.0f64 / 60.0;
        Self {
            rf_power_a: 1.0,
            rf_power_b: 1.0,
            coupling_a: balanced / 1.33,
            coupling_b: balanced,
            power_offsets: (-8..=8).map(|k| 0.1 * k as f64).collect(),
            qwp_angles: (-3..=2).map(|k| (337.125 + 2.0 * arcmin * k as f64).to_radians()).collect(),
            interrogation_time: 15e-3,
            shots_per_point: 200,
            quantization: Some(1e-4),
        }
    }
}

impl InTrapPlan {
    pub fn balance_offset(&self) -> f64 {
        balance_offset(self.coupling_a, self.coupling_b, self.rf_power_a, self.rf_power_b)
    }

    /// Site intensities (W/m^2) at offset `dp` from the balance point.
    pub fn intensities(&self, dp: f64) -> (f64, f64) {
        let ia = self.coupling_a * (self.rf_power_a + self.balance_offset() + dp);
        (ia, self.coupling_b * self.rf_power_b)
    }

    /// `I_A = p_A P_A`, the reference for normalized intensity differences.
    pub fn reference_intensity(&self) -> f64 {
        self.coupling_a * self.rf_power_a
    }

    pub fn scheduled_angles(&self) -> Vec<f64> {
        self.qwp_angles.iter().map(|&t| quantize_angle(t, self.quantization)).collect()
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        let bad = |m: String| Err(ProtocolError::Plan(m));
        for (name, v) in [
            ("rf_power_a", self.rf_power_a),
            ("rf_power_b", self.rf_power_b),
            ("coupling_a", self.coupling_a),
            ("coupling_b", self.coupling_b),
            ("interrogation_time", self.interrogation_time),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.power_offsets.len() < 3 {
            return bad(format!("need at least 3 intensity offsets per angle, got {}", self.power_offsets.len()));
        }
        if self.qwp_angles.len() < 3 {
            return bad(format!("need at least 3 QWP angles, got {}", self.qwp_angles.len()));
        }
        if self.shots_per_point < 6 {
            return bad(format!("need at least 6 shots per point, got {}", self.shots_per_point));
        }
        if let Some(q) = self.quantization {
            if !(q > 0.0) {
                return bad(format!("quantization step must be positive, got {q}"));
            }
        }
        for &dp in &self.power_offsets {
            if !dp.is_finite() {
                return bad("intensity offsets must be finite".into());
            }
            if self.intensities(dp).0 < 0.0 {
                return bad(format!("offset {dp} drives beam A to negative intensity"));
            }
        }
        let angles = self.scheduled_angles();
        for (i, a) in angles.iter().enumerate() {
            if !a.is_finite() {
                return bad("QWP angles must be finite".into());
            }
            if angles[..i].iter().any(|b| b == a) {
                return bad(format!("QWP angle {a} repeated after quantization"));
            }
        }
        Ok(())
    }
}

/// Optional crossed beam whose polarization is independent of the QWP being scanned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossedBeam {
    /// Intensity at site A and site B (W/m^2).
    pub intensity_a: f64,
    pub intensity_b: f64,
    pub direction: Vec3<f64>,
    /// Angle of its own QWP from the linear setting (rad); circularity `sin 2 angle`.
    pub qwp_angle: f64,
}

/// Atom, optics and field configuration of the in-trap simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InTrapPhysics {
    /// Vector polarizability (C m^2/V).
    pub alpha_v: f64,
    pub g_f: f64,
    pub f: f64,
    /// QWP dial angle at which circularity vanishes (rad).
    pub nulling_angle: f64,
    /// Cell retardance and axis (rad).
    pub cell_retardance: f64,
    pub cell_axis: f64,
    /// Extra QWP-angle offset seen by beam B (rad).
    pub beam_b_theta_offset: f64,
    pub beam_a_direction: Vec3<f64>,
    pub beam_b_direction: Vec3<f64>,
    pub site_a: Vec3<f64>,
    pub site_b: Vec3<f64>,
    /// Bias field (G).
    pub bias: Vec3<f64>,
    pub gradient_g_per_cm: f64,
    pub gradient_axis: Vec3<f64>,
    pub crossed_beam: Option<CrossedBeam>,
    pub contrast: f64,
    pub readout_noise: f64,
    pub quadratic_zeeman_contrast: bool,
    pub seed: u64,
}

impl Default for InTrapPhysics {
    fn default() -> Self {
        Self {
            alpha_v: 2.36551e-40,
            g_f: -0.5,
            f: 1.0,
            nulling_angle: 337.115f64.to_radians(),
            cell_retardance: 0.01,
            cell_axis: 0.3,
            beam_b_theta_offset: 0.0,
            beam_a_direction: Vec3::unit_z(),
            beam_b_direction: Vec3::unit_z(),
            site_a: Vec3::new(-50e-6, 0.0, 0.0),
            site_b: Vec3::new(50e-6, -10e-6, 0.0),
            bias: Vec3::new(0.0, 0.0, 0.681),
            gradient_g_per_cm: 0.022,
            gradient_axis: Vec3::unit_y(),
            crossed_beam: None,
            contrast: 0.8,
            readout_noise: NOMINAL_READOUT_NOISE,
            quadratic_zeeman_contrast: true,
            seed: 1,
        }
    }
}

/// Readout noise giving about 0.011 pi phase uncertainty from 200 shots at contrast 0.8
/// (`readout_noise_for_phase_uncertainty(0.011 pi, 200, 0.8)`).
pub const NOMINAL_READOUT_NOISE: f64 = 0.12;

struct Model {
    coupling: VlsCoupling<f64>,
    env: MagneticEnvironment<f64>,
    dial_offset: f64,
    gamma: f64,
}

impl InTrapPhysics {
    pub fn gamma(&self) -> f64 {
        gyromagnetic_ratio_rad_per_s_per_gauss(self.g_f)
    }

    fn model(&self) -> Result<Model, ProtocolError> {
        if !(self.contrast > 0.0 && self.contrast <= 1.0) {
            return Err(ProtocolError::Plan(format!("contrast must lie in (0, 1], got {}", self.contrast)));
        }
        if self.cell_retardance.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(ProtocolError::Plan("cell retardance must be below pi/2".into()));
        }
        let coupling = VlsCoupling::new(self.alpha_v, self.g_f, self.f)?;
        let env = MagneticEnvironment::new(self.bias, self.gradient_g_per_cm, self.gradient_axis)?;
        let theta0 = nulling_angle(self.cell_retardance, self.cell_axis)?;
        Ok(Model { coupling, env, dial_offset: self.nulling_angle - theta0, gamma: self.gamma() })
    }

    /// Circularity of beams A and B at dial angle `theta`.
    pub fn circularities(&self, theta: f64) -> Result<(f64, f64), ProtocolError> {
        let m = self.model()?;
        Ok(self.circ(&m, theta))
    }

    fn circ(&self, m: &Model, theta: f64) -> (f64, f64) {
        let t = theta - m.dial_offset;
        (
            circularity_after_cell(t, self.cell_retardance, self.cell_axis),
            circularity_after_cell(t + self.beam_b_theta_offset, self.cell_retardance, self.cell_axis),
        )
    }

    fn delta_b(&self, m: &Model, theta: f64, ia: f64, ib: f64) -> f64 {
        let (ca, cb) = self.circ(m, theta);
        let g = m.coupling.gauss_per_w_m2;
        let ka = self.beam_a_direction.normalized().unwrap_or(Vec3::unit_z());
        let kb = self.beam_b_direction.normalized().unwrap_or(Vec3::unit_z());
        let mut ba = m.env.field_at(self.site_a) + ka * (g * ca * ia);
        let mut bb = m.env.field_at(self.site_b) + kb * (g * cb * ib);
        if let Some(c) = &self.crossed_beam {
            let kc = c.direction.normalized().unwrap_or(Vec3::unit_x());
            let cc = (2.0 * c.qwp_angle).sin();
            ba = ba + kc * (g * cc * c.intensity_a);
            bb = bb + kc * (g * cc * c.intensity_b);
        }
        ba.norm() - bb.norm()
    }

    /// Noiseless `|B(r_A)| - |B(r_B)|` (G) for a plan point.
    pub fn differential_field(&self, plan: &InTrapPlan, theta: f64, dp: f64) -> Result<f64, ProtocolError> {
        let m = self.model()?;
        let (ia, ib) = plan.intensities(dp);
        Ok(self.delta_b(&m, theta, ia, ib))
    }

    /// Slope d|B|/dI that the mapping from circularity implies, G per W/m^2 per rad, at the null.
    pub fn theta_slope_small_angle(&self) -> Result<f64, ProtocolError> {
        let m = self.model()?;
        Ok(2.0 * m.coupling.gauss_per_w_m2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanPoint {
    pub power_offset: f64,
    pub normalized_intensity: f64,
    /// `I_A - I_B` (W/m^2).
    pub delta_i: f64,
    /// Noiseless field difference used to drive the simulation (G).
    pub model_delta_b: f64,
    pub delta_phi_folded: Option<f64>,
    pub delta_phi_uncertainty: Option<f64>,
    pub delta_phi: Option<f64>,
    pub delta_b: Option<f64>,
    pub delta_b_uncertainty: Option<f64>,
    pub fit_error: Option<String>,
}

/// Simulate and fit one `(angle, offset)` point.
pub fn simulate_in_trap_point(
    plan: &InTrapPlan,
    physics: &InTrapPhysics,
    theta: f64,
    dp: f64,
    stream: u64,
) -> Result<ScanPoint, ProtocolError> {
    let m = physics.model()?;
    simulate_point(plan, physics, &m, theta, dp, stream)
}

fn simulate_point(
    plan: &InTrapPlan,
    physics: &InTrapPhysics,
    m: &Model,
    theta: f64,
    dp: f64,
    stream: u64,
) -> Result<ScanPoint, ProtocolError> {
    let (ia, ib) = plan.intensities(dp);
    let db = physics.delta_b(m, theta, ia, ib);
    let cfg = RamseyConfig {
        interrogation_time: plan.interrogation_time,
        pulse_phases: PulsePhases::Uniform { count: plan.shots_per_point },
        contrast_a: physics.contrast,
        contrast_b: physics.contrast,
        phase_noise: PhaseNoise::Uniform,
        readout_noise: physics.readout_noise,
        delta_b: db,
        bias: physics.bias.norm(),
        quadratic_zeeman_contrast: physics.quadratic_zeeman_contrast,
        gamma: m.gamma,
        seed: derive_seed(physics.seed, "in_trap.point", stream),
    };
    let shots = simulate_shots(&cfg)?;
    let (folded, u, err) = match fit_shots(&shots) {
        Ok(f) => (Some(f.delta_phi), Some(f.uncertainty), None),
        Err(e) if e.is_phase_degenerate() => (None, None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    Ok(ScanPoint {
        power_offset: dp,
        normalized_intensity: dp / plan.rf_power_a,
        delta_i: ia - ib,
        model_delta_b: db,
        delta_phi_folded: folded,
        delta_phi_uncertainty: u,
        delta_phi: None,
        delta_b: None,
        delta_b_uncertainty: None,
        fit_error: err,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AngleSlope {
    /// Dial angle after quantization (rad).
    pub qwp_angle: f64,
    /// `Delta B` against `Delta I`: slope in G per W/m^2, intercept in G.
    pub fit: LinearFit<f64>,
    pub points: Vec<ScanPoint>,
    pub ambiguous_points: Vec<usize>,
}

/// Where the per-angle lines cross, and whether their values at zero offset agree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Intersection {
    /// Crossing point in W/m^2 and as a fraction of `I_A`.
    pub delta_i: f64,
    pub normalized_delta_i: f64,
    pub delta_b: f64,
    /// Spread of the zero-offset intercepts about their weighted mean.
    pub intercept_chi2: f64,
    pub intercept_p_value: f64,
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullingResult {
    pub balance_offset: f64,
    pub reference_intensity: f64,
    pub angles: Vec<AngleSlope>,
    /// Slopes against `theta - theta_reference`.
    pub theta_fit: LinearFit<f64>,
    pub theta_reference: f64,
    /// `(4 pi / gamma) alpha_V`, G per W/m^2 per rad.
    pub theta_slope: f64,
    pub theta_slope_sigma: f64,
    /// `alpha_V` in Hz per W/cm^2.
    pub alpha_v_hz_per_w_cm2: f64,
    pub alpha_v_hz_per_w_cm2_sigma: f64,
    /// Vector polarizability (C m^2/V).
    pub alpha_v: f64,
    pub alpha_v_sigma: f64,
    pub nulling_angle: f64,
    pub nulling_angle_sigma: f64,
    /// Scheduled angle nearest the fitted null, and its measured slope.
    pub min_angle: f64,
    pub min_slope: f64,
    pub min_slope_sigma: f64,
    pub max_slope: f64,
    pub suppression_ratio: f64,
    pub suppression_ratio_sigma: f64,
    /// `2 |theta_min - theta_N|`.
    pub angle_metric: f64,
    pub intersection: Intersection,
    /// Largest `|theta - theta_N|` in the schedule (rad).
    pub max_angle_offset: f64,
    pub small_angle_ok: bool,
    pub diagnostics: Vec<String>,
}

/// Relative error of `sin 2x ~ 2x` tolerated before a warning.
pub const SMALL_ANGLE_TOLERANCE: f64 = 1e-3;

/// Simulate every point of the plan, then regress per angle and across angles.
pub fn nulling_pipeline(plan: &InTrapPlan, physics: &InTrapPhysics) -> Result<NullingResult, ProtocolError> {
    plan.validate()?;
    let model = physics.model()?;
    let angles = plan.scheduled_angles();
    let n_off = plan.power_offsets.len();
    let jobs: Vec<(usize, usize)> = (0..angles.len()).flat_map(|j| (0..n_off).map(move |k| (j, k))).collect();
    let points: Vec<ScanPoint> = jobs
        .par_iter()
        .map(|&(j, k)| {
            simulate_point(plan, physics, &model, angles[j], plan.power_offsets[k], (j * n_off + k) as u64)
        })
        .collect::<Result<_, _>>()?;

    let mut diagnostics = Vec::new();
    let gt = model.gamma * plan.interrogation_time;
    let mut slopes = Vec::with_capacity(angles.len());
    for (j, &theta) in angles.iter().enumerate() {
        let mut pts: Vec<ScanPoint> = points[j * n_off..(j + 1) * n_off].to_vec();
        let folded: Vec<Option<f64>> = pts.iter().map(|p| p.delta_phi_folded).collect();
        let anchor = (0..n_off)
            .filter(|&k| folded[k].is_some())
            .max_by(|&a, &b| {
                pts[a].power_offset.abs().partial_cmp(&pts[b].power_offset.abs()).unwrap_or(std::cmp::Ordering::Equal)
            })
            .ok_or_else(|| ProtocolError::Degenerate(format!("no usable points at angle {theta}")))?;
        let un = restore_signs(&folded, anchor, pts[anchor].model_delta_b.signum());
        for (p, v) in pts.iter_mut().zip(un.values.iter()) {
            p.delta_phi = *v;
            p.delta_b = v.map(|v| v / gt);
            p.delta_b_uncertainty = p.delta_phi_uncertainty.map(|u| u / gt);
        }
        if !un.ambiguous.is_empty() {
            diagnostics.push(format!("angle {:.6} deg: ambiguous sign at points {:?}", theta.to_degrees(), un.ambiguous));
        }
        let used: Vec<&ScanPoint> = pts.iter().filter(|p| p.delta_b.is_some()).collect();
        if used.len() < 3 {
            return Err(ProtocolError::Degenerate(format!(
                "only {} usable points at angle {:.6} deg",
                used.len(),
                theta.to_degrees()
            )));
        }
        let x: Vec<f64> = used.iter().map(|p| p.delta_i).collect();
        let y: Vec<f64> = used.iter().filter_map(|p| p.delta_b).collect();
        let s: Vec<f64> = used.iter().map(|p| p.delta_b_uncertainty.unwrap_or(f64::NAN)).collect();
        let fit = linear_fit(&x, &y, Some(&s))?;
        if !fit.weighted {
            diagnostics.push(format!("angle {:.6} deg: degenerate uncertainties, unweighted fit", theta.to_degrees()));
        }
        if fit.nonlinear() {
            diagnostics.push(format!(
                "angle {:.6} deg: non-linear residuals (chi2 = {:.2}, dof = {}, p = {:.2e})",
                theta.to_degrees(),
                fit.chi2,
                fit.dof,
                fit.p_value
            ));
        }
        slopes.push(AngleSlope { qwp_angle: theta, fit, points: pts, ambiguous_points: un.ambiguous });
    }

    let theta_reference = angles.iter().sum::<f64>() / angles.len() as f64;
    let x: Vec<f64> = slopes.iter().map(|s| s.qwp_angle - theta_reference).collect();
    let y: Vec<f64> = slopes.iter().map(|s| s.fit.slope).collect();
    let sy: Vec<f64> = slopes.iter().map(|s| s.fit.slope_sigma).collect();
    let theta_fit = linear_fit(&x, &y, Some(&sy))?;
    if theta_fit.nonlinear() {
        diagnostics.push(format!(
            "slope against angle: non-linear residuals (chi2 = {:.2}, dof = {})",
            theta_fit.chi2, theta_fit.dof
        ));
    }
    let m = theta_fit.slope;
    if !(m.abs() > 0.0) {
        return Err(ProtocolError::Degenerate("slope does not vary with QWP angle".into()));
    }
    let (root, root_sigma) = theta_fit.root();
    let theta_n = theta_reference + root;

    let sign = -physics.g_f.signum();
    let alpha_v_si_per_w_m2 = sign * m * model.gamma / (4.0 * std::f64::consts::PI);
    let alpha_v_sigma_w_m2 = theta_fit.slope_sigma * model.gamma / (4.0 * std::f64::consts::PI);
    let to_si = 4.0 * SPEED_OF_LIGHT * EPSILON_0 * physics.f * PLANCK_H;

    let (jmin, _) = slopes
        .iter()
        .enumerate()
        .map(|(j, s)| (j, (s.qwp_angle - theta_n).abs()))
        .fold((0usize, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best });
    let min_angle = slopes[jmin].qwp_angle;
    let min_slope = slopes[jmin].fit.slope;
    let min_slope_sigma = slopes[jmin].fit.slope_sigma;
    let max_slope = 0.5 * m.abs();
    let ratio = suppression_ratio(min_slope, m);
    let ratio_sigma =
        ((min_slope_sigma / max_slope).powi(2) + (ratio * theta_fit.slope_sigma / m).powi(2)).sqrt();

    let intersection = intersect(&slopes, plan.reference_intensity());
    if !intersection.consistent {
        diagnostics.push(format!(
            "per-angle lines do not share a zero-offset value (chi2 = {:.2}, p = {:.2e})",
            intersection.intercept_chi2, intersection.intercept_p_value
        ));
    }

    let max_angle_offset = angles.iter().map(|a| (a - theta_n).abs()).fold(0.0, f64::max);
    let small_angle_ok = (2.0 * max_angle_offset).powi(2) / 6.0 < SMALL_ANGLE_TOLERANCE;
    if !small_angle_ok {
        diagnostics.push(format!(
            "schedule reaches {:.4} deg from the null, outside the small-angle window",
            max_angle_offset.to_degrees()
        ));
    }
    if !(theta_n >= angles.iter().copied().fold(f64::INFINITY, f64::min)
        && theta_n <= angles.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    {
        diagnostics.push("fitted nulling angle lies outside the scanned interval".into());
    }

    Ok(NullingResult {
        balance_offset: plan.balance_offset(),
        reference_intensity: plan.reference_intensity(),
        angles: slopes,
        theta_fit,
        theta_reference,
        theta_slope: m,
        theta_slope_sigma: theta_fit.slope_sigma,
        alpha_v_hz_per_w_cm2: alpha_v_si_per_w_m2 * 1e4,
        alpha_v_hz_per_w_cm2_sigma: alpha_v_sigma_w_m2 * 1e4,
        alpha_v: alpha_v_si_per_w_m2 * to_si,
        alpha_v_sigma: alpha_v_sigma_w_m2 * to_si,
        nulling_angle: theta_n,
        nulling_angle_sigma: root_sigma,
        min_angle,
        min_slope,
        min_slope_sigma,
        max_slope,
        suppression_ratio: ratio,
        suppression_ratio_sigma: ratio_sigma,
        angle_metric: 2.0 * (min_angle - theta_n).abs(),
        intersection,
        max_angle_offset,
        small_angle_ok,
        diagnostics,
    })
}

fn intersect(slopes: &[AngleSlope], i_ref: f64) -> Intersection {
    let w: Vec<f64> = slopes
        .iter()
        .map(|s| {
            let v = s.fit.intercept_sigma;
            if v > 0.0 && v.is_finite() {
                1.0 / (v * v)
            } else {
                1.0
            }
        })
        .collect();
    let (mut sw, mut sa, mut sb, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (s, &wi) in slopes.iter().zip(&w) {
        let (a, b) = (s.fit.intercept, s.fit.slope);
        sw += wi;
        sa += wi * a;
        sb += wi * b;
        sbb += wi * b * b;
        sab += wi * a * b;
    }
    // minimise sum w (a + b x - y)^2 over the crossing point (x, y)
    let det = -sbb * sw + sb * sb;
    let (x, y) = if det.abs() > 0.0 {
        let x = (sab * sw - sb * sa) / det;
        (x, (sa + sb * x) / sw)
    } else {
        (f64::NAN, sa / sw)
    };
    let mean = sa / sw;
    let chi2: f64 = slopes.iter().zip(&w).map(|(s, wi)| wi * (s.fit.intercept - mean).powi(2)).sum();
    let dof = slopes.len().saturating_sub(1).max(1);
    let p = ChiSquared::new(dof as f64).map(|d| d.sf(chi2)).unwrap_or(f64::NAN);
    Intersection {
        delta_i: x,
        normalized_delta_i: x / i_ref,
        delta_b: y,
        intercept_chi2: chi2,
        intercept_p_value: p,
        consistent: !(p < super::CHI2_FLAG_P),
    }
}

/// One row per point: angle, offsets, measured and fitted field differences.
pub fn write_intensity_scans_csv<W: std::io::Write>(out: W, result: &NullingResult) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "qwp_angle_deg",
        "power_offset",
        "normalized_intensity",
        "delta_i_w_per_cm2",
        "delta_b_g",
        "delta_b_sigma_g",
        "fit_g",
    ])?;
    for a in &result.angles {
        for p in &a.points {
            let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:e}"));
            w.write_record([
                format!("{:.6}", a.qwp_angle.to_degrees()),
                format!("{}", p.power_offset),
                format!("{}", p.normalized_intensity),
                format!("{:e}", p.delta_i * 1e-4),
                opt(p.delta_b),
                opt(p.delta_b_uncertainty),
                format!("{:e}", a.fit.predict(p.delta_i)),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per angle: slope dB/dI (G per W/cm^2) with its error and the fitted line.
pub fn write_angle_slopes_csv<W: std::io::Write>(out: W, result: &NullingResult) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["qwp_angle_deg", "slope_g_per_w_cm2", "slope_sigma_g_per_w_cm2", "fit_g_per_w_cm2"])?;
    for a in &result.angles {
        let fit = result.theta_fit.predict(a.qwp_angle - result.theta_reference);
        w.write_record([
            format!("{:.6}", a.qwp_angle.to_degrees()),
            format!("{:e}", a.fit.slope * 1e4),
            format!("{:e}", a.fit.slope_sigma * 1e4),
            format!("{:e}", fit * 1e4),
        ])?;
    }
    w.flush()?;
    Ok(())
}
