//! Thermally induced stress birefringence in a vacuum window heated by the trap beam.

use crate::scalar::Real;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct WindowMaterial<T> {
    /// Absorption coefficient (1/m).
    pub absorption: T,
    /// Thermal conductivity (W/m/K).
    pub conductivity: T,
    /// Thermal diffusivity (m^2/s).
    pub diffusivity: T,
    /// Linear expansion coefficient (1/K).
    pub expansion: T,
    /// Young's modulus (Pa).
    pub youngs_modulus: T,
    pub poisson_ratio: T,
    /// Stress-optic coefficient (1/Pa).
    pub stress_optic: T,
    pub p11: T,
    pub p12: T,
    pub refractive_index: T,
}

impl<T: Real> Default for WindowMaterial<T> {
    fn default() -> Self {
        Self::fused_silica()
    }
}

impl<T: Real> WindowMaterial<T> {
    pub fn fused_silica() -> Self {
        let l = T::lit;
        Self {
            absorption: l(0.1),
            conductivity: l(1.31),
            diffusivity: l(7.5e-7),
            expansion: l(5e-7),
            youngs_modulus: l(72e9),
            poisson_ratio: l(0.17),
            stress_optic: l(3.4e-12),
            p11: l(0.121),
            p12: l(0.270),
            refractive_index: l(1.45),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let pos = [
            ("absorption", self.absorption, true),
            ("conductivity", self.conductivity, false),
            ("diffusivity", self.diffusivity, false),
            ("expansion", self.expansion, false),
            ("youngs_modulus", self.youngs_modulus, false),
            ("stress_optic", self.stress_optic, false),
            ("refractive_index", self.refractive_index, false),
        ];
        for (name, v, zero_ok) in pos {
            let ok = if zero_ok { v >= T::zero() } else { v > T::zero() };
            if !ok || !v.is_finite() {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.poisson_ratio > T::zero() && self.poisson_ratio < T::half()) {
            return Err(format!("poisson_ratio must lie in (0, 0.5), got {}", self.poisson_ratio));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct HeatingScenario<T> {
    /// Beam power through the window (W).
    pub power: T,
    /// Window thickness (m).
    pub thickness: T,
    /// Mean beam radius in the window (m).
    pub beam_radius: T,
    /// Exposure time (s).
    pub exposure_time: T,
    pub wavelength: T,
}

impl<T: Real> Default for HeatingScenario<T> {
    fn default() -> Self {
        Self {
            power: T::lit(10.0),
            thickness: T::lit(5e-3),
            beam_radius: T::lit(145e-6),
            exposure_time: T::lit(10.0),
            wavelength: T::lit(1064e-9),
        }
    }
}

impl<T: Real> HeatingScenario<T> {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("power", self.power),
            ("thickness", self.thickness),
            ("beam_radius", self.beam_radius),
            ("exposure_time", self.exposure_time),
            ("wavelength", self.wavelength),
        ] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

/// `mu d P` (W).
pub fn absorbed_power<T: Real>(scn: &HeatingScenario<T>, mat: &WindowMaterial<T>) -> T {
    mat.absorption * scn.thickness * scn.power
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TemperatureRise<T> {
    pub delta_t: T,
    /// `P_abs / (4 pi k d)` (K).
    pub t0: T,
    /// `w^2 / D` (s).
    pub tau: T,
    /// `d^2 / D` (s).
    pub axial_time: T,
    /// True when `tau << t << d^2/D` (factor 10 margin each side).
    pub in_validity_window: bool,
}

/// On-axis temperature rise `T0 ln(1 + 2 D t / w^2)` after time `t`.
pub fn temp_rise<T: Real>(scn: &HeatingScenario<T>, mat: &WindowMaterial<T>, t: T) -> TemperatureRise<T> {
    let p = absorbed_power(scn, mat);
    let t0 = p / (T::lit(4.0) * T::PI() * mat.conductivity * scn.thickness);
    let w2 = scn.beam_radius * scn.beam_radius;
    let tau = w2 / mat.diffusivity;
    let axial = scn.thickness * scn.thickness / mat.diffusivity;
    let ten = T::lit(10.0);
    TemperatureRise {
        delta_t: t0 * (T::one() + T::two() * mat.diffusivity * t / w2).ln(),
        t0,
        tau,
        axial_time: axial,
        in_validity_window: t >= ten * tau && t * ten <= axial,
    }
}

/// Principal stresses on axis, `alpha E dT / 2` (Pa).
pub fn axial_stress<T: Real>(delta_t: T, mat: &WindowMaterial<T>) -> T {
    T::half() * mat.expansion * mat.youngs_modulus * delta_t
}

/// `OPD = K d sigma` (m) and the retardance `2 pi OPD / lambda` (rad).
pub fn opd_bound<T: Real>(sigma: T, mat: &WindowMaterial<T>, thickness: T, wavelength: T) -> (T, T) {
    let opd = mat.stress_optic * thickness * sigma;
    (opd, T::two() * T::PI() * opd / wavelength)
}

/// `Q = n0^3 alpha (1 + nu) (p11 - p12) / (4 (1 - nu))` (1/K).
pub fn optoelastic_coefficient<T: Real>(mat: &WindowMaterial<T>) -> T {
    let n = mat.refractive_index;
    let nu = mat.poisson_ratio;
    n * n * n * mat.expansion * (T::one() + nu) * (mat.p11 - mat.p12) / (T::lit(4.0) * (T::one() - nu))
}

/// Long-time retardance `(4 pi d / lambda) Q T0 (1 + (exp(-x) - 1) / x)`, `x = 2 r^2 / w^2`.
pub fn retardance_profile<T: Real>(scn: &HeatingScenario<T>, mat: &WindowMaterial<T>, r: T) -> T {
    let x = T::two() * r * r / (scn.beam_radius * scn.beam_radius);
    theta_max(scn, mat) * radial_shape(x)
}

/// `1 + (exp(-x) - 1)/x`, evaluated by series near zero.
fn radial_shape<T: Real>(x: T) -> T {
    if x < T::lit(1e-4) {
        // x/2 - x^2/6 + x^3/24
        x * (T::half() - x * (T::one() / T::lit(6.0) - x / T::lit(24.0)))
    } else {
        T::one() + (-x).exp_m1() / x
    }
}

/// Far-field limit `4 pi d Q T0 / lambda` (rad, signed).
pub fn theta_max<T: Real>(scn: &HeatingScenario<T>, mat: &WindowMaterial<T>) -> T {
    let t0 = temp_rise(scn, mat, T::zero()).t0;
    T::lit(4.0) * T::PI() * scn.thickness * optoelastic_coefficient(mat) * t0 / scn.wavelength
}

/// Quoted estimate of |theta_max| for the default 10 W, 5 mm fused-silica scenario (rad).
/// The direct far-field evaluation of the same inputs gives about twice this; both are
/// reported.
pub const REFERENCE_THETA_MAX: f64 = 1.4e-4;

/// Order-of-magnitude retardance drift of a zero-order waveplate with temperature (rad/K).
pub const WAVEPLATE_DRIFT_PER_K: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThermalReport<T> {
    pub absorbed_power: T,
    pub t0: T,
    pub tau: T,
    pub delta_t: T,
    pub in_validity_window: bool,
    pub stress: T,
    pub opd: T,
    pub opd_retardance: T,
    pub optoelastic_coefficient: T,
    pub theta_max: T,
    pub theta_at_beam_radius: T,
    pub theta_ratio_at_beam_radius: T,
    /// `sin 2 theta_max`.
    pub peak_circularity: T,
    pub reference_theta_max: T,
    /// `|theta_max| / reference_theta_max`.
    pub theta_max_over_reference: T,
    pub waveplate_drift_per_k: T,
}

pub fn thermal_report<T: Real>(scn: &HeatingScenario<T>, mat: &WindowMaterial<T>) -> Result<ThermalReport<T>, String> {
    scn.validate()?;
    mat.validate()?;
    let rise = temp_rise(scn, mat, scn.exposure_time);
    let stress = axial_stress(rise.delta_t, mat);
    let (opd, ret) = opd_bound(stress, mat, scn.thickness, scn.wavelength);
    let tm = theta_max(scn, mat);
    let tw = retardance_profile(scn, mat, scn.beam_radius);
    Ok(ThermalReport {
        absorbed_power: absorbed_power(scn, mat),
        t0: rise.t0,
        tau: rise.tau,
        delta_t: rise.delta_t,
        in_validity_window: rise.in_validity_window,
        stress,
        opd,
        opd_retardance: ret,
        optoelastic_coefficient: optoelastic_coefficient(mat),
        theta_max: tm,
        theta_at_beam_radius: tw,
        theta_ratio_at_beam_radius: tw / tm,
        peak_circularity: (T::two() * tm).sin(),
        reference_theta_max: T::lit(REFERENCE_THETA_MAX),
        theta_max_over_reference: tm.abs() / T::lit(REFERENCE_THETA_MAX),
        waveplate_drift_per_k: T::lit(WAVEPLATE_DRIFT_PER_K),
    })
}

/// Columns `r_m, theta_rad`.
pub fn write_profile_csv<T: Real, W: std::io::Write>(
    out: W,
    scn: &HeatingScenario<T>,
    mat: &WindowMaterial<T>,
    r_max: T,
    n: usize,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["r_m", "theta_rad"])?;
    let steps = n.max(2) - 1;
    for k in 0..=steps {
        let r = r_max * T::lit(k as f64 / steps as f64);
        w.write_record([format!("{:e}", r.to_f64_lossy()), format!("{:e}", retardance_profile(scn, mat, r).to_f64_lossy())])?;
    }
    w.flush()?;
    Ok(())
}
