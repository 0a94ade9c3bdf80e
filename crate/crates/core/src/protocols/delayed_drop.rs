//! Delayed drop: two condensates released at different times fall through a
//! single remaining beam, each sampling a different intensity.

use super::direction::{axis_error, solve_vls_vector};
use super::unfold::{restore_signs, Unfolded};
use super::{quantize_angle, ProtocolError};
use crate::constants::{gyromagnetic_ratio_rad_per_s_per_gauss, STANDARD_GRAVITY};
use crate::linalg::{inverse3, symmetric_eigen};
use crate::polopt::{circularity_after_cell, nulling_angle, PolarizationState};
use crate::ramsey::{fit_shots, readout_noise_for_phase_uncertainty, simulate_shots, PhaseNoise, PulsePhases, RamseyConfig};
use crate::rng::derive_seed;
use crate::trapfield::{GaussianBeam, MagneticEnvironment, VlsCoupling};
use crate::vec3::Vec3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::f64::consts::PI;

/// Freefall limit on the interrogation time (s).
pub const MAX_INTERROGATION_TIME: f64 = 5e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DelayedDropPlan {
    /// BEC_A is released this long before BEC_B (s).
    pub drop_delay: f64,
    /// Start of the Ramsey sequence after BEC_B is released (s).
    pub ramsey_start: f64,
    pub interrogation_time: f64,
    /// QWP dial angles (rad).
    pub qwp_angles: Vec<f64>,
    /// Bias fields (G); at least three linearly independent directions.
    pub biases: Vec<Vec3<f64>>,
    pub shots_per_point: usize,
    /// Light-off repetitions averaged into each background phase.
    pub background_repeats: usize,
    pub quantization: Option<f64>,
    /// Sub-steps used to average the field difference over the interrogation.
    pub time_steps: usize,
}

impl Default for DelayedDropPlan {
    fn default() -> Self {
        Self {
            drop_delay: drop_delay_for_mean_separation(41.7e-6, 0.0, 250e-6),
            ramsey_start: 0.0,
            interrogation_time: 250e-6,
            qwp_angles: (0..72).map(|k| (5.0 * k as f64).to_radians()).collect(),
            biases: orthogonal_biases_tilted(Vec3::unit_z(), 0.3),
            shots_per_point: 200,
            background_repeats: 4,
            quantization: None,
            time_steps: 32,
        }
    }
}

/// Delay giving mean vertical separation `dy` (m) during `[t_s, t_s + T]`.
pub fn drop_delay_for_mean_separation(dy: f64, t_s: f64, t: f64) -> f64 {
    // g td (td/2 + t_s + T/2) = dy
    let b = 2.0 * t_s + t;
    0.5 * (-b + (b * b + 8.0 * dy / STANDARD_GRAVITY).sqrt())
}

/// Three orthogonal biases of magnitude `b0`, each at arccos(1/sqrt 3) to `axis`.
pub fn orthogonal_biases_tilted(axis: Vec3<f64>, b0: f64) -> Vec<Vec3<f64>> {
    let k = axis.normalized().unwrap_or(Vec3::unit_z());
    let helper = if k.x.abs() < 0.9 { Vec3::unit_x() } else { Vec3::unit_y() };
    let e1 = (helper - k * helper.dot(k)).normalized().unwrap_or(Vec3::unit_x());
    let e2 = k.cross(e1);
    let c = 1.0 / 3f64.sqrt();
    let s = (2.0f64 / 3.0).sqrt();
    let h = 1.0 / 2f64.sqrt();
    [e1 * s + k * c, e1 * (-s / 2.0) + e2 * h + k * c, e1 * (-s / 2.0) - e2 * h + k * c]
        .iter()
        .map(|v| *v * b0)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DelayedDropPhysics {
    /// Beam left on during the drop.
    pub beam_power: f64,
    pub beam_waist: f64,
    pub wavelength: f64,
    pub beam_direction: Vec3<f64>,
    pub beam_focus: Vec3<f64>,
    /// Release positions of the two condensates (m).
    pub release_a: Vec3<f64>,
    pub release_b: Vec3<f64>,
    pub alpha_v: f64,
    pub g_f: f64,
    pub f: f64,
    /// QWP dial angle of zero circularity (rad).
    pub nulling_angle: f64,
    pub cell_retardance: f64,
    pub cell_axis: f64,
    /// Ambient gradient of |B| (G/cm) along `gradient_axis`.
    pub gradient_g_per_cm: f64,
    pub gradient_axis: Vec3<f64>,
    pub contrast: f64,
    pub noise: DropNoise,
    pub gravity: f64,
    pub seed: u64,
}

impl Default for DelayedDropPhysics {
    fn default() -> Self {
        Self {
            beam_power: 1.0,
            beam_waist: 67e-6,
            wavelength: 1064e-9,
            beam_direction: Vec3::unit_z(),
            beam_focus: Vec3::zero(),
            release_a: Vec3::new(0.0, 0.0, -50e-6),
            release_b: Vec3::new(0.0, 0.0, 50e-6),
            alpha_v: 2.36551e-40,
            g_f: -0.5,
            f: 1.0,
            nulling_angle: 0.0,
            cell_retardance: 0.01,
            cell_axis: 0.3,
            gradient_g_per_cm: 0.01,
            gradient_axis: Vec3::unit_y(),
            contrast: 0.8,
            noise: DropNoise::RelativeToPeak { fraction: 0.01 },
            gravity: STANDARD_GRAVITY,
            seed: 1,
        }
    }
}

/// Readout noise of the freefall interferometers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum DropNoise {
    /// Absolute Gaussian noise on each F_z.
    Readout { sigma: f64 },
    /// Noise sized so that one point's phase uncertainty is `fraction` of the
    /// full-circularity VLS phase difference.
    RelativeToPeak { fraction: f64 },
}

struct DropModel {
    beam: GaussianBeam<f64>,
    coupling: VlsCoupling<f64>,
    dial_offset: f64,
    /// (r_A, r_B) at the midpoint of each sub-step.
    path: Vec<(Vec3<f64>, Vec3<f64>)>,
    mean_separation: f64,
    gamma: f64,
}

impl DelayedDropPhysics {
    fn model(&self, plan: &DelayedDropPlan) -> Result<DropModel, ProtocolError> {
        let beam = GaussianBeam::new(
            self.beam_power,
            self.beam_waist,
            self.wavelength,
            self.beam_direction,
            self.beam_focus,
            PolarizationState::vertical(),
        )?;
        let coupling = VlsCoupling::new(self.alpha_v, self.g_f, self.f)?;
        let theta0 = nulling_angle(self.cell_retardance, self.cell_axis)?;
        let n = plan.time_steps.max(1);
        let down = Vec3::new(0.0, -1.0, 0.0);
        let mut path = Vec::with_capacity(n);
        let mut sep = 0.0;
        for i in 0..n {
            let t = plan.ramsey_start + plan.interrogation_time * (i as f64 + 0.5) / n as f64;
            let ta = t + plan.drop_delay;
            let ra = self.release_a + down * (0.5 * self.gravity * ta * ta);
            let rb = self.release_b + down * (0.5 * self.gravity * t * t);
            sep += rb.y - ra.y;
            path.push((ra, rb));
        }
        Ok(DropModel {
            beam,
            coupling,
            dial_offset: self.nulling_angle - theta0,
            path,
            mean_separation: sep / n as f64,
            gamma: gyromagnetic_ratio_rad_per_s_per_gauss(self.g_f),
        })
    }

    fn circularity(&self, m: &DropModel, theta: f64) -> f64 {
        circularity_after_cell(theta - m.dial_offset, self.cell_retardance, self.cell_axis)
    }

    /// Time-averaged `|B(r_A)| - |B(r_B)|` for circularity `c` (None = light off).
    fn delta_b(&self, m: &DropModel, bias: Vec3<f64>, c: Option<f64>) -> Result<f64, ProtocolError> {
        let env = MagneticEnvironment::new(bias, self.gradient_g_per_cm, self.gradient_axis)?;
        let g = m.coupling.gauss_per_w_m2;
        let k = m.beam.direction;
        let mut acc = 0.0;
        for &(ra, rb) in &m.path {
            let (va, vb) = match c {
                Some(c) => (k * (g * c * m.beam.intensity_at(ra)), k * (g * c * m.beam.intensity_at(rb))),
                None => (Vec3::zero(), Vec3::zero()),
            };
            acc += (env.field_at(ra) + va).norm() - (env.field_at(rb) + vb).norm();
        }
        Ok(acc / m.path.len() as f64)
    }

    /// Time-averaged `|B_vls(r_A)| - |B_vls(r_B)|` at full circularity, no bias (G).
    pub fn full_circularity_difference(&self, plan: &DelayedDropPlan) -> Result<f64, ProtocolError> {
        let m = self.model(plan)?;
        let g = m.coupling.gauss_per_w_m2;
        let s: f64 = m
            .path
            .iter()
            .map(|&(ra, rb)| g * (m.beam.intensity_at(ra) - m.beam.intensity_at(rb)))
            .sum();
        Ok(s / m.path.len() as f64)
    }

    /// Per-shot readout noise on F_z implied by `noise`.
    pub fn readout_sigma(&self, plan: &DelayedDropPlan) -> Result<f64, ProtocolError> {
        let sigma = match self.noise {
            DropNoise::Readout { sigma } => sigma,
            DropNoise::RelativeToPeak { fraction } => {
                let m = self.model(plan)?;
                let peak = (m.gamma * plan.interrogation_time * self.full_circularity_difference(plan)?).abs();
                readout_noise_for_phase_uncertainty(fraction * peak, plan.shots_per_point, self.contrast)
            }
        };
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(ProtocolError::Plan(format!("readout noise must be finite and >= 0, got {sigma}")));
        }
        Ok(sigma)
    }

    /// Mean vertical separation (m) during the interrogation.
    pub fn mean_separation(&self, plan: &DelayedDropPlan) -> Result<f64, ProtocolError> {
        Ok(self.model(plan)?.mean_separation)
    }
}

/// Beam power for which `|Delta B_vls,max| / Delta y` equals `gradient_g_per_cm`.
pub fn power_for_peak_gradient(
    plan: &DelayedDropPlan,
    physics: &DelayedDropPhysics,
    gradient_g_per_cm: f64,
) -> Result<f64, ProtocolError> {
    let unit = DelayedDropPhysics { beam_power: 1.0, ..physics.clone() };
    let per_watt = unit.full_circularity_difference(plan)?.abs();
    let dy_cm = unit.mean_separation(plan)? * 100.0;
    if !(per_watt > 0.0) {
        return Err(ProtocolError::Degenerate("condensates sample equal intensities".into()));
    }
    Ok(gradient_g_per_cm * dy_cm / per_watt)
}

impl DelayedDropPlan {
    pub fn scheduled_angles(&self) -> Vec<f64> {
        self.qwp_angles.iter().map(|&t| quantize_angle(t, self.quantization)).collect()
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        let bad = |m: String| Err(ProtocolError::Plan(m));
        if !(self.interrogation_time > 0.0 && self.interrogation_time <= MAX_INTERROGATION_TIME) {
            return bad(format!(
                "interrogation time must lie in (0, {MAX_INTERROGATION_TIME}] s, got {}",
                self.interrogation_time
            ));
        }
        if !(self.drop_delay >= 0.0) || !(self.ramsey_start >= 0.0) {
            return bad("delays must be non-negative".into());
        }
        if self.biases.len() < 3 {
            return bad(format!("need at least 3 bias fields, got {}", self.biases.len()));
        }
        if self.qwp_angles.len() < 4 {
            return bad(format!("need at least 4 QWP angles for the sinusoid fit, got {}", self.qwp_angles.len()));
        }
        if self.shots_per_point < 6 || self.background_repeats == 0 || self.time_steps == 0 {
            return bad("shots per point >= 6, background repeats and time steps >= 1".into());
        }
        Ok(())
    }
}

/// `a sin 2 theta + b cos 2 theta + c`, reported as `A sin 2(theta - theta_N) + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SinusoidFit {
    pub a: f64,
    pub b: f64,
    pub offset: f64,
    pub offset_sigma: f64,
    pub amplitude: f64,
    pub amplitude_sigma: f64,
    pub nulling_angle: f64,
    pub nulling_angle_sigma: f64,
    pub chi2: f64,
    pub dof: usize,
}

impl SinusoidFit {
    pub fn predict(&self, theta: f64) -> f64 {
        self.a * (2.0 * theta).sin() + self.b * (2.0 * theta).cos() + self.offset
    }
}

pub fn fit_sinusoid(theta: &[f64], y: &[f64], sigma: &[f64]) -> Result<SinusoidFit, ProtocolError> {
    let n = theta.len();
    if n < 4 || y.len() != n || sigma.len() != n {
        return Err(ProtocolError::Input("sinusoid fit needs at least 4 matched points".into()));
    }
    let weighted = sigma.iter().all(|s| s.is_finite() && *s > 0.0);
    let mut nm = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    for i in 0..n {
        let f = [(2.0 * theta[i]).sin(), (2.0 * theta[i]).cos(), 1.0];
        let w = if weighted { 1.0 / (sigma[i] * sigma[i]) } else { 1.0 };
        for r in 0..3 {
            rhs[r] += w * f[r] * y[i];
            for c in 0..3 {
                nm[r][c] += w * f[r] * f[c];
            }
        }
    }
    let cov = inverse3(&nm).ok_or_else(|| ProtocolError::Degenerate("QWP angles do not constrain the sinusoid".into()))?;
    let p: Vec<f64> = (0..3).map(|r| (0..3).map(|c| cov[r][c] * rhs[c]).sum()).collect();
    let (a, b, c) = (p[0], p[1], p[2]);
    let mut chi2 = 0.0;
    for i in 0..n {
        let r = y[i] - a * (2.0 * theta[i]).sin() - b * (2.0 * theta[i]).cos() - c;
        let w = if weighted { 1.0 / (sigma[i] * sigma[i]) } else { 1.0 };
        chi2 += w * r * r;
    }
    let dof = n - 3;
    let scale = if weighted { 1.0 } else { chi2 / dof.max(1) as f64 };
    let amp = a.hypot(b);
    let (va, vb, vab) = (cov[0][0] * scale, cov[1][1] * scale, cov[0][1] * scale);
    let amp_var = if amp > 0.0 { (a * a * va + b * b * vb + 2.0 * a * b * vab) / (amp * amp) } else { va + vb };
    let tn_var = if amp > 0.0 {
        0.25 * (b * b * va + a * a * vb - 2.0 * a * b * vab) / amp.powi(4)
    } else {
        f64::INFINITY
    };
    Ok(SinusoidFit {
        a,
        b,
        offset: c,
        offset_sigma: (cov[2][2] * scale).sqrt(),
        amplitude: amp,
        amplitude_sigma: amp_var.max(0.0).sqrt(),
        nulling_angle: 0.5 * (-b).atan2(a),
        nulling_angle_sigma: tn_var.max(0.0).sqrt(),
        chi2,
        dof,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DropAnglePoint {
    pub qwp_angle: f64,
    /// Per bias: background-subtracted field difference (G) and its uncertainty.
    pub delta_b: Vec<Option<f64>>,
    pub delta_b_sigma: Vec<Option<f64>>,
    /// Noiseless field difference per bias (G), light on minus light off.
    pub model_delta_b: Vec<f64>,
    /// Least-squares VLS vector (G), when all biases were usable.
    pub vls_vector: Option<Vec3<f64>>,
    /// Projection onto the fitted direction (G).
    pub delta_b_vls: Option<f64>,
    pub delta_b_vls_sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayedDropResult {
    pub drop_delay: f64,
    pub mean_separation: f64,
    pub beam_power: f64,
    pub background_phase: Vec<f64>,
    pub points: Vec<DropAnglePoint>,
    /// Principal direction of the VLS vectors, largest component positive.
    pub direction: Vec3<f64>,
    /// Angle (rad) between `direction` and the beam axis.
    pub direction_error: f64,
    pub fit: SinusoidFit,
    /// `A / Delta y` in G/cm.
    pub peak_gradient_g_per_cm: f64,
    pub peak_gradient_sigma_g_per_cm: f64,
    pub diagnostics: Vec<String>,
}

struct PhasePoint {
    folded: Option<f64>,
    sigma: Option<f64>,
}

fn run_ramsey(
    plan: &DelayedDropPlan,
    phys: &DelayedDropPhysics,
    readout_noise: f64,
    gamma: f64,
    bias: f64,
    db: f64,
    stream: u64,
) -> Result<PhasePoint, ProtocolError> {
    let cfg = RamseyConfig {
        interrogation_time: plan.interrogation_time,
        pulse_phases: PulsePhases::Uniform { count: plan.shots_per_point },
        contrast_a: phys.contrast,
        contrast_b: phys.contrast,
        phase_noise: PhaseNoise::Uniform,
        readout_noise,
        delta_b: db,
        bias,
        quadratic_zeeman_contrast: false,
        gamma,
        seed: derive_seed(phys.seed, "delayed_drop.point", stream),
    };
    let shots = simulate_shots(&cfg)?;
    match fit_shots(&shots) {
        Ok(f) => Ok(PhasePoint { folded: Some(f.delta_phi), sigma: Some(f.uncertainty) }),
        Err(e) if e.is_phase_degenerate() => Ok(PhasePoint { folded: None, sigma: None }),
        Err(e) => Err(e.into()),
    }
}

fn fit_signed(angles: &[f64], values: &[Option<f64>], sigma: &[Option<f64>]) -> Option<SinusoidFit> {
    let (mut t, mut y, mut s) = (Vec::new(), Vec::new(), Vec::new());
    for j in 0..angles.len() {
        if let (Some(v), Some(u)) = (values[j], sigma[j]) {
            t.push(angles[j]);
            y.push(v);
            s.push(u);
        }
    }
    fit_sinusoid(&t, &y, &s).ok()
}

/// Re-pick each sign as the branch nearer a sinusoid fitted to all current values,
/// until the assignment is stable.
fn polish(angles: &[f64], folded: &[Option<f64>], sigma: &[Option<f64>], mut values: Vec<Option<f64>>) -> Option<(Vec<Option<f64>>, SinusoidFit)> {
    for _ in 0..20 {
        let fit = fit_signed(angles, &values, sigma)?;
        let mut changed = false;
        for j in 0..angles.len() {
            if let (Some(f), Some(v)) = (folded[j], values[j]) {
                let pred = fit.predict(angles[j]);
                let pick = if (f - pred).abs() <= (-f - pred).abs() { f } else { -f };
                if pick != v {
                    values[j] = Some(pick);
                    changed = true;
                }
            }
        }
        if !changed {
            return Some((values, fit));
        }
    }
    let fit = fit_signed(angles, &values, sigma)?;
    Some((values, fit))
}

/// Signed series for one bias. Starting assignments are the outward walk and the sign
/// patterns of sin(2 theta - psi) on a grid of psi; each is polished and the lowest
/// chi2 wins. The global sign is then fixed at the anchor. Points whose prediction
/// lies within two sigma of zero are reported as ambiguous.
fn refine_signs(
    angles: &[f64],
    folded: &[Option<f64>],
    sigma: &[Option<f64>],
    walk: Vec<Option<f64>>,
    anchor: usize,
    anchor_sign: f64,
) -> (Unfolded, Option<SinusoidFit>) {
    let mut starts = vec![walk.clone()];
    for k in 0..90 {
        let psi = k as f64 * PI / 90.0;
        starts.push(
            (0..angles.len())
                .map(|j| folded[j].map(|f| if (2.0 * angles[j] - psi).sin() < 0.0 { -f } else { f }))
                .collect(),
        );
    }
    let best = starts
        .into_iter()
        .filter_map(|st| polish(angles, folded, sigma, st))
        .min_by(|x, y| x.1.chi2.partial_cmp(&y.1.chi2).unwrap_or(Ordering::Equal));
    let Some((mut values, mut fit)) = best else {
        return (Unfolded { values: walk, ambiguous: Vec::new() }, None);
    };
    if values.get(anchor).copied().flatten().is_some_and(|v| v * anchor_sign < 0.0) {
        for v in values.iter_mut().flatten() {
            *v = -*v;
        }
        fit = fit_signed(angles, &values, sigma).unwrap_or(fit);
    }
    let ambiguous = (0..angles.len())
        .filter(|&j| values[j].is_some() && fit.predict(angles[j]).abs() < 2.0 * sigma[j].unwrap_or(0.0))
        .collect();
    (Unfolded { values, ambiguous }, Some(fit))
}

fn largest_index(v: &[f64]) -> usize {
    (0..v.len())
        .max_by(|&a, &b| v[a].abs().partial_cmp(&v[b].abs()).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap_or(0)
}

/// Scan the QWP under each bias, subtract light-off backgrounds, reconstruct the
/// VLS vector per angle and fit the sinusoid.
pub fn delayed_drop_scan(plan: &DelayedDropPlan, physics: &DelayedDropPhysics) -> Result<DelayedDropResult, ProtocolError> {
    plan.validate()?;
    let m = physics.model(plan)?;
    let angles = plan.scheduled_angles();
    let nb = plan.biases.len();
    let na = angles.len();
    let gt = m.gamma * plan.interrogation_time;
    let sigma = physics.readout_sigma(plan)?;
    let mut diagnostics = Vec::new();

    // light-off backgrounds, one set of repeats per bias
    let bg_model: Vec<f64> = plan.biases.iter().map(|&b| physics.delta_b(&m, b, None)).collect::<Result<_, _>>()?;
    let bg_jobs: Vec<(usize, usize)> = (0..nb).flat_map(|i| (0..plan.background_repeats).map(move |r| (i, r))).collect();
    let bg_points: Vec<PhasePoint> = bg_jobs
        .par_iter()
        .map(|&(i, r)| {
            let stream = 1_000_000 + (i * plan.background_repeats + r) as u64;
            run_ramsey(plan, physics, sigma, m.gamma, plan.biases[i].norm(), bg_model[i], stream)
        })
        .collect::<Result<_, _>>()?;
    let mut bg_phase = Vec::with_capacity(nb);
    let mut bg_sigma = Vec::with_capacity(nb);
    for i in 0..nb {
        let reps = &bg_points[i * plan.background_repeats..(i + 1) * plan.background_repeats];
        let vals: Vec<(f64, f64)> = reps.iter().filter_map(|p| Some((p.folded?, p.sigma?))).collect();
        let sign = if bg_model[i] < 0.0 { -1.0 } else { 1.0 };
        if vals.is_empty() {
            bg_phase.push(f64::NAN);
            bg_sigma.push(f64::NAN);
            continue;
        }
        let n = vals.len() as f64;
        let mean = vals.iter().map(|v| v.0).sum::<f64>() / n;
        let var = vals.iter().map(|v| v.1 * v.1).sum::<f64>() / (n * n);
        bg_phase.push(sign * mean);
        bg_sigma.push(var.sqrt());
    }

    // light-on scan
    let on_model: Vec<f64> = (0..nb)
        .flat_map(|i| angles.iter().map(move |&t| (i, t)))
        .map(|(i, t)| physics.delta_b(&m, plan.biases[i], Some(physics.circularity(&m, t))))
        .collect::<Result<_, _>>()?;
    let jobs: Vec<usize> = (0..nb * na).collect();
    let on_points: Vec<PhasePoint> = jobs
        .par_iter()
        .map(|&idx| {
            let i = idx / na;
            run_ramsey(plan, physics, sigma, m.gamma, plan.biases[i].norm(), on_model[idx], idx as u64)
        })
        .collect::<Result<_, _>>()?;

    let mut delta_b = vec![vec![None; nb]; na];
    let mut delta_sigma = vec![vec![None; nb]; na];
    for i in 0..nb {
        let row = &on_points[i * na..(i + 1) * na];
        let model_row = &on_model[i * na..(i + 1) * na];
        let folded: Vec<Option<f64>> = row.iter().map(|p| p.folded).collect();
        // largest measured phase; its sign is the one expected from the nominal geometry
        let measured: Vec<f64> = folded.iter().map(|f| f.unwrap_or(0.0)).collect();
        let anchor = largest_index(&measured);
        let walk = restore_signs(&folded, anchor, model_row[anchor].signum());
        let sig: Vec<Option<f64>> = row.iter().map(|p| p.sigma).collect();
        let (un, fit) = refine_signs(&angles, &folded, &sig, walk.values, anchor, model_row[anchor].signum());
        if bg_phase[i].is_nan() {
            // the light shift averages out over a full QWP turn, so the series offset stands in
            let (c, u) = fit.map(|f| (f.offset, f.offset_sigma)).unwrap_or((0.0, 0.0));
            diagnostics.push(format!("bias {i}: background unresolved, taken from the light-on offset {c:.4} rad"));
            bg_phase[i] = c;
            bg_sigma[i] = u;
        }
        if !un.ambiguous.is_empty() {
            diagnostics.push(format!("bias {i}: sign undetermined within 2 sigma at angle indices {:?}", un.ambiguous));
        }
        let missing = folded.iter().filter(|f| f.is_none()).count();
        if missing > 0 {
            diagnostics.push(format!("bias {i}: {missing} points with unresolved phase skipped"));
        }
        for j in 0..na {
            if let (Some(phi), Some(u)) = (un.values[j], row[j].sigma) {
                delta_b[j][i] = Some((phi - bg_phase[i]) / gt);
                delta_sigma[j][i] = Some((u * u + bg_sigma[i] * bg_sigma[i]).sqrt() / gt);
            }
        }
    }

    // VLS vector per angle
    let unit_biases: Vec<Vec3<f64>> = plan.biases.iter().map(|b| *b * (1.0 / b.norm())).collect();
    let mut vectors: Vec<Option<Vec3<f64>>> = Vec::with_capacity(na);
    for j in 0..na {
        let meas: Option<Vec<(Vec3<f64>, f64)>> =
            (0..nb).map(|i| delta_b[j][i].map(|d| (plan.biases[i], d))).collect();
        vectors.push(match meas {
            Some(mm) => Some(solve_vls_vector(&mm)?),
            None => None,
        });
    }
    let mut scatter = [[0.0f64; 3]; 3];
    for v in vectors.iter().flatten() {
        let c = [v.x, v.y, v.z];
        for r in 0..3 {
            for s in 0..3 {
                scatter[r][s] += c[r] * c[s];
            }
        }
    }
    let (_, evec) = symmetric_eigen(&scatter);
    let mut u = Vec3::new(evec[0][2], evec[1][2], evec[2][2]);
    let big = [u.x, u.y, u.z].iter().copied().fold(0.0f64, |m, c| if c.abs() > m.abs() { c } else { m });
    if big < 0.0 {
        u = -u;
    }
    // d(u . v)/d(Delta B_i) = u . M^-1 b_i, with M = sum b b^T
    let mut mm = [[0.0f64; 3]; 3];
    for b in &unit_biases {
        let c = [b.x, b.y, b.z];
        for r in 0..3 {
            for s in 0..3 {
                mm[r][s] += c[r] * c[s];
            }
        }
    }
    let minv = inverse3(&mm).ok_or_else(|| ProtocolError::RankDeficient("bias directions".into()))?;
    let uc = [u.x, u.y, u.z];
    let gains: Vec<f64> = unit_biases
        .iter()
        .map(|b| {
            let c = [b.x, b.y, b.z];
            (0..3).map(|r| uc[r] * (0..3).map(|s| minv[r][s] * c[s]).sum::<f64>()).sum()
        })
        .collect();

    let mut points = Vec::with_capacity(na);
    let (mut xs, mut ys, mut ss) = (Vec::new(), Vec::new(), Vec::new());
    for j in 0..na {
        let proj = vectors[j].map(|v| v.dot(u));
        let sigma = vectors[j].map(|_| {
            (0..nb).map(|i| (gains[i] * delta_sigma[j][i].unwrap_or(0.0)).powi(2)).sum::<f64>().sqrt()
        });
        if let (Some(p), Some(s)) = (proj, sigma) {
            xs.push(angles[j]);
            ys.push(p);
            ss.push(s);
        }
        let bg: Vec<f64> = (0..nb).map(|i| on_model[i * na + j] - bg_model[i]).collect();
        points.push(DropAnglePoint {
            qwp_angle: angles[j],
            delta_b: delta_b[j].clone(),
            delta_b_sigma: delta_sigma[j].clone(),
            model_delta_b: bg,
            vls_vector: vectors[j],
            delta_b_vls: proj,
            delta_b_vls_sigma: sigma,
        });
    }
    let fit = fit_sinusoid(&xs, &ys, &ss)?;
    let dy_cm = m.mean_separation * 100.0;
    Ok(DelayedDropResult {
        drop_delay: plan.drop_delay,
        mean_separation: m.mean_separation,
        beam_power: physics.beam_power,
        background_phase: bg_phase,
        points,
        direction: u,
        direction_error: axis_error(u, m.beam.direction),
        fit,
        peak_gradient_g_per_cm: fit.amplitude / dy_cm,
        peak_gradient_sigma_g_per_cm: fit.amplitude_sigma / dy_cm,
        diagnostics,
    })
}

/// Angle, reconstructed VLS difference, fit, and gradient (mG/cm) per QWP setting.
pub fn write_delayed_drop_csv<W: std::io::Write>(out: W, result: &DelayedDropResult) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "qwp_angle_deg",
        "delta_b_vls_mg",
        "delta_b_vls_sigma_mg",
        "fit_mg",
        "gradient_mg_per_cm",
    ])?;
    let dy_cm = result.mean_separation * 100.0;
    for p in &result.points {
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{:e}", v * 1e3));
        w.write_record([
            format!("{:.4}", p.qwp_angle.to_degrees()),
            opt(p.delta_b_vls),
            opt(p.delta_b_vls_sigma),
            format!("{:e}", result.fit.predict(p.qwp_angle) * 1e3),
            p.delta_b_vls.map_or(String::new(), |v| format!("{:e}", v * 1e3 / dy_cm)),
        ])?;
    }
    w.flush()?;
    Ok(())
}
