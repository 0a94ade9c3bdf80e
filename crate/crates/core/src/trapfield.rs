//! Gaussian-beam intensity, dipole potential with gravity, fictitious VLS
//! fields and the resulting Zeeman shifts.
//!
//! Lengths in metres, intensities in W/m^2, magnetic fields in gauss.
//! Trap potentials are expressed per unit mass (m^2/s^2) so they stay in
//! range for single precision.

use crate::constants::{
    BOHR_MAGNETON, BOLTZMANN, EPSILON_0, GAUSS_PER_TESLA, PLANCK_H, SPEED_OF_LIGHT,
};
use crate::polopt::PolarizationState;
use crate::scalar::Real;
use crate::vec3::Vec3;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrapError {
    #[error("invalid beam: {0}")]
    InvalidBeam(String),
    #[error("potential has no bound minimum along gravity (restoring force {max_force:.3e} m/s^2 < g = {gravity:.3e} m/s^2)")]
    Unbound { max_force: f64, gravity: f64 },
    #[error("trap needs at least one beam")]
    NoBeams,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBeam<T> {
    pub power: T,
    pub waist: T,
    pub wavelength: T,
    pub direction: Vec3<T>,
    pub focus: Vec3<T>,
    pub polarization: PolarizationState<T>,
    /// Optical frequency offset, kept for bookkeeping only.
    pub frequency_offset_hz: T,
}

impl<T: Real> GaussianBeam<T> {
    pub fn new(
        power: T,
        waist: T,
        wavelength: T,
        direction: Vec3<T>,
        focus: Vec3<T>,
        polarization: PolarizationState<T>,
    ) -> Result<Self, TrapError> {
        if !(power >= T::zero()) || !power.is_finite() {
            return Err(TrapError::InvalidBeam(format!("power must be >= 0, got {power}")));
        }
        if !(waist > T::zero()) || !waist.is_finite() {
            return Err(TrapError::InvalidBeam(format!("waist must be > 0, got {waist}")));
        }
        if !(wavelength > T::zero()) || !wavelength.is_finite() {
            return Err(TrapError::InvalidBeam(format!("wavelength must be > 0, got {wavelength}")));
        }
        let direction = direction
            .normalized()
            .ok_or_else(|| TrapError::InvalidBeam("propagation direction must be a non-zero vector".into()))?;
        if !focus.is_finite() {
            return Err(TrapError::InvalidBeam("focus must be finite".into()));
        }
        Ok(Self {
            power,
            waist,
            wavelength,
            direction,
            focus,
            polarization,
            frequency_offset_hz: T::zero(),
        })
    }

    pub fn rayleigh_range(&self) -> T {
        T::PI() * self.waist * self.waist / self.wavelength
    }

    pub fn peak_intensity(&self) -> T {
        T::two() * self.power / (T::PI() * self.waist * self.waist)
    }

    fn local(&self, r: Vec3<T>) -> (T, Vec3<T>, T) {
        let d = r - self.focus;
        let z = d.dot(self.direction);
        let rho = d - self.direction * z;
        let zr = self.rayleigh_range();
        let w2 = self.waist * self.waist * (T::one() + (z / zr) * (z / zr));
        (z, rho, w2)
    }

    pub fn beam_radius(&self, z: T) -> T {
        let zr = self.rayleigh_range();
        self.waist * (T::one() + (z / zr) * (z / zr)).sqrt()
    }

    pub fn intensity_at(&self, r: Vec3<T>) -> T {
        let (_, rho, w2) = self.local(r);
        T::two() * self.power / (T::PI() * w2) * (-T::two() * rho.norm_sq() / w2).exp()
    }

    pub fn intensity_gradient(&self, r: Vec3<T>) -> Vec3<T> {
        let (z, rho, w2) = self.local(r);
        let i = T::two() * self.power / (T::PI() * w2) * (-T::two() * rho.norm_sq() / w2).exp();
        let zr = self.rayleigh_range();
        let dw2 = T::two() * self.waist * self.waist * z / (zr * zr);
        let dlog_dz = dw2 * (-T::one() / w2 + T::two() * rho.norm_sq() / (w2 * w2));
        (rho * (-T::lit(4.0) / w2) + self.direction * dlog_dz) * i
    }

    pub fn circularity(&self) -> T {
        self.polarization.circularity()
    }
}

pub fn intensity_at<T: Real>(beam: &GaussianBeam<T>, r: Vec3<T>) -> T {
    beam.intensity_at(r)
}

pub fn total_intensity<T: Real>(beams: &[GaussianBeam<T>], r: Vec3<T>) -> T {
    beams.iter().fold(T::zero(), |s, b| s + b.intensity_at(r))
}

/// Fictitious-field and Zeeman coefficients of one hyperfine level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VlsCoupling<T> {
    /// `B_vls = gauss_per_w_m2 * C * I * k`, i.e. `-alpha_v / (4 c eps0 mu_B g_F F)` in G per W/m^2.
    pub gauss_per_w_m2: T,
    /// `mu_B g_F / h` in Hz per gauss; multiply by `m_F`.
    pub hz_per_gauss: T,
    /// Light shift `alpha_v / (4 c eps0 F h)` in Hz per W/m^2; multiply by `C m_F I`.
    pub hz_per_w_m2: T,
}

impl<T: Real> VlsCoupling<T> {
    pub fn new(alpha_v_si: f64, g_f: f64, f: f64) -> Result<Self, TrapError> {
        if g_f == 0.0 || f <= 0.0 || !alpha_v_si.is_finite() {
            return Err(TrapError::InvalidParameter(format!(
                "vector coupling needs g_F != 0 and F > 0 (g_F = {g_f}, F = {f})"
            )));
        }
        let b_t = -alpha_v_si / (4.0 * SPEED_OF_LIGHT * EPSILON_0 * BOHR_MAGNETON * g_f * f);
        Ok(Self {
            gauss_per_w_m2: T::lit(b_t * GAUSS_PER_TESLA),
            hz_per_gauss: T::lit(BOHR_MAGNETON * g_f / PLANCK_H / GAUSS_PER_TESLA),
            hz_per_w_m2: T::lit(alpha_v_si / (4.0 * SPEED_OF_LIGHT * EPSILON_0 * f * PLANCK_H)),
        })
    }
}

/// Fictitious magnetic field (G) for intensity `i` (W/m^2), circularity `c` and wavevector `k`.
pub fn fictitious_field<T: Real>(i: T, c: T, k: Vec3<T>, coupling: &VlsCoupling<T>) -> Vec3<T> {
    k * (coupling.gauss_per_w_m2 * c * i)
}

/// Vector sum of the fictitious fields of independent beams at `r`.
pub fn vls_field<T: Real>(beams: &[GaussianBeam<T>], coupling: &VlsCoupling<T>, r: Vec3<T>) -> Vec3<T> {
    beams.iter().fold(Vec3::zero(), |acc, b| {
        acc + fictitious_field(b.intensity_at(r), b.circularity(), b.direction, coupling)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldSample<T> {
    pub position: Vec3<T>,
    pub field: Vec3<T>,
}

/// `B_vls` at each point (evaluated in parallel, output in input order).
pub fn vls_field_map<T: Real>(
    beams: &[GaussianBeam<T>],
    coupling: &VlsCoupling<T>,
    points: &[Vec3<T>],
) -> Vec<FieldSample<T>> {
    points
        .par_iter()
        .map(|&p| FieldSample { position: p, field: vls_field(beams, coupling, p) })
        .collect()
}

/// Regular grid spanning `[min, max]` with `n` points per axis (x fastest).
pub fn grid<T: Real>(min: Vec3<T>, max: Vec3<T>, n: [usize; 3]) -> Vec<Vec3<T>> {
    let axis = |lo: T, hi: T, k: usize, n: usize| {
        if n <= 1 {
            lo
        } else {
            lo + (hi - lo) * T::lit(k as f64 / (n - 1) as f64)
        }
    };
    let mut out = Vec::with_capacity(n[0] * n[1] * n[2]);
    for iz in 0..n[2] {
        for iy in 0..n[1] {
            for ix in 0..n[0] {
                out.push(Vec3::new(
                    axis(min.x, max.x, ix, n[0]),
                    axis(min.y, max.y, iy, n[1]),
                    axis(min.z, max.z, iz, n[2]),
                ));
            }
        }
    }
    out
}

/// CSV with columns x, y, z (m), Bx, By, Bz, |B| (G); `bias` is added before taking the magnitude.
pub fn write_field_map_csv<T: Real, W: std::io::Write>(
    out: W,
    samples: &[FieldSample<T>],
    bias: Vec3<T>,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x_m", "y_m", "z_m", "bx_g", "by_g", "bz_g", "b_abs_g"])?;
    for s in samples {
        let b = s.field + bias;
        w.write_record(
            [s.position.x, s.position.y, s.position.z, b.x, b.y, b.z, b.norm()]
                .iter()
                .map(|v| format!("{:e}", v.to_f64_lossy())),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Gradient (G/m) of `|B0 + B_vls(r)|`.
pub fn total_field_magnitude_gradient<T: Real>(
    beams: &[GaussianBeam<T>],
    coupling: &VlsCoupling<T>,
    bias: Vec3<T>,
    r: Vec3<T>,
) -> Vec3<T> {
    let b = bias + vls_field(beams, coupling, r);
    let n = b.norm();
    if n == T::zero() {
        return Vec3::zero();
    }
    let bhat = b * (T::one() / n);
    beams.iter().fold(Vec3::zero(), |acc, beam| {
        let s = coupling.gauss_per_w_m2 * beam.circularity() * beam.direction.dot(bhat);
        acc + beam.intensity_gradient(r) * s
    })
}

/// Sum of beams plus uniform gravity; potential per unit mass.
#[derive(Debug, Clone, PartialEq)]
pub struct DipoleTrap<T> {
    pub beams: Vec<GaussianBeam<T>>,
    /// `alpha_s / (2 eps0 c m)` in (m^2/s^2) per W/m^2.
    pub accel_per_intensity: T,
    pub gravity: Vec3<T>,
    pub mass_kg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrapMinimum<T> {
    pub position: Vec3<T>,
    /// Distance from the intensity maximum along gravity.
    pub sag: T,
    /// `U / m` at the minimum.
    pub potential: T,
}

impl<T: Real> DipoleTrap<T> {
    pub fn new(
        beams: Vec<GaussianBeam<T>>,
        alpha_scalar_si: f64,
        mass_kg: f64,
        gravity: Vec3<T>,
    ) -> Result<Self, TrapError> {
        if beams.is_empty() {
            return Err(TrapError::NoBeams);
        }
        if !(mass_kg > 0.0) {
            return Err(TrapError::InvalidParameter("mass must be positive".into()));
        }
        Ok(Self {
            beams,
            accel_per_intensity: T::lit(alpha_scalar_si / (2.0 * EPSILON_0 * SPEED_OF_LIGHT * mass_kg)),
            gravity,
            mass_kg,
        })
    }

    /// `U(r) / m`, with the gravitational zero at the origin.
    pub fn potential(&self, r: Vec3<T>) -> T {
        -self.accel_per_intensity * total_intensity(&self.beams, r) - self.gravity.dot(r)
    }

    pub fn potential_kelvin(&self, r: Vec3<T>) -> f64 {
        self.potential(r).to_f64_lossy() * self.mass_kg / BOLTZMANN
    }

    /// Radial optical depth `alpha_s I / (2 eps0 c k_B)` at the first beam focus.
    pub fn optical_depth_kelvin(&self) -> f64 {
        let i = total_intensity(&self.beams, self.beams[0].focus).to_f64_lossy();
        self.accel_per_intensity.to_f64_lossy() * i * self.mass_kg / BOLTZMANN
    }

    fn slope_along(&self, origin: Vec3<T>, dir: Vec3<T>, s: T) -> T {
        let r = origin + dir * s;
        let grad_i = self.beams.iter().fold(Vec3::zero(), |a, b| a + b.intensity_gradient(r));
        -self.accel_per_intensity * grad_i.dot(dir) - self.gravity.dot(dir)
    }

    /// Minimum on the line through the first beam's focus along gravity.
    pub fn minimum(&self) -> Result<TrapMinimum<T>, TrapError> {
        self.minimum_from(self.beams[0].focus)
    }

    pub fn minimum_from(&self, origin: Vec3<T>) -> Result<TrapMinimum<T>, TrapError> {
        let g = self.gravity.norm();
        let dir = match self.gravity.normalized() {
            Some(d) if g > T::zero() => d,
            _ => {
                return Ok(TrapMinimum { position: origin, sag: T::zero(), potential: self.potential(origin) });
            }
        };
        let w_min = self.beams.iter().map(|b| b.waist).fold(T::infinity(), T::min);
        let w_max = self.beams.iter().map(|b| b.waist).fold(T::zero(), T::max);
        let step = w_min / T::lit(400.0);
        let s_end = T::lit(3.0) * w_max;
        let mut a = T::zero();
        let mut fa = self.slope_along(origin, dir, a);
        let mut max_force = T::zero();
        let mut bracket = None;
        while a < s_end {
            let b = a + step;
            let fb = self.slope_along(origin, dir, b);
            max_force = max_force.max(fb + g);
            if fa < T::zero() && fb >= T::zero() {
                bracket = Some((a, b));
                break;
            }
            a = b;
            fa = fb;
        }
        let (mut lo, mut hi) = bracket.ok_or(TrapError::Unbound {
            max_force: max_force.to_f64_lossy(),
            gravity: g.to_f64_lossy(),
        })?;
        let tol = T::lit(1e-10).max(T::epsilon() * w_max * T::lit(4.0));
        for _ in 0..200 {
            if hi - lo <= tol {
                break;
            }
            let m = T::half() * (lo + hi);
            if self.slope_along(origin, dir, m) < T::zero() {
                lo = m;
            } else {
                hi = m;
            }
        }
        let sag = T::half() * (lo + hi);
        let position = origin + dir * sag;
        Ok(TrapMinimum { position, sag, potential: self.potential(position) })
    }

    /// Harmonic frequency (rad/s) from the potential curvature along `dir` at `r`.
    pub fn curvature_frequency(&self, r: Vec3<T>, dir: Vec3<T>) -> Result<T, TrapError> {
        let d = dir
            .normalized()
            .ok_or_else(|| TrapError::InvalidParameter("curvature direction must be non-zero".into()))?;
        let h = self.beams.iter().map(|b| b.waist).fold(T::infinity(), T::min) * T::lit(1e-3);
        let k = (self.potential(r + d * h) - T::two() * self.potential(r) + self.potential(r - d * h)) / (h * h);
        if k > T::zero() {
            Ok(k.sqrt())
        } else {
            Err(TrapError::InvalidParameter("potential is not confining along this direction".into()))
        }
    }
}

/// Exact and first-order Zeeman shifts (Hz) from a VLS field on top of the bias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZeemanShift<T> {
    pub exact_hz: T,
    pub first_order_hz: T,
}

/// Shift of `|F, m_F>` for a beam of intensity `i0` (W/m^2) and ellipticity `theta`, with
/// `nu` the angle between the bias field (magnitude `b0`, G) and the beam wavevector.
pub fn vls_zeeman_shift<T: Real>(
    i0: T,
    theta: T,
    nu: T,
    m_f: T,
    b0: T,
    coupling: &VlsCoupling<T>,
) -> Result<ZeemanShift<T>, TrapError> {
    if !(b0 > T::zero()) {
        return Err(TrapError::InvalidParameter("bias field magnitude must be positive".into()));
    }
    let c = (T::two() * theta).sin();
    let s = coupling.gauss_per_w_m2 * c * i0;
    let (sn, cn) = nu.sin_cos();
    let total = ((b0 * cn + s) * (b0 * cn + s) + (b0 * sn) * (b0 * sn)).sqrt();
    let delta = (s * s + T::two() * b0 * s * cn) / (total + b0);
    let k = coupling.hz_per_gauss * m_f;
    Ok(ZeemanShift { exact_hz: k * delta, first_order_hz: k * s * cn })
}

/// Same, for an arbitrary VLS vector and bias vector (G).
pub fn zeeman_shift_vector<T: Real>(m_f: T, bias: Vec3<T>, b_vls: Vec3<T>, coupling: &VlsCoupling<T>) -> ZeemanShift<T> {
    let b0 = bias.norm();
    let total = (bias + b_vls).norm();
    let delta = (b_vls.norm_sq() + T::two() * bias.dot(b_vls)) / (total + b0);
    let first = if b0 > T::zero() { b_vls.dot(bias) / b0 } else { b_vls.norm() };
    let k = coupling.hz_per_gauss * m_f;
    ZeemanShift { exact_hz: k * delta, first_order_hz: k * first }
}

/// Bias plus a uniform gradient of the field magnitude along `axis`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MagneticEnvironment<T> {
    pub bias: Vec3<T>,
    /// d|B|/ds in G/cm along `axis`.
    pub gradient_g_per_cm: T,
    pub axis: Vec3<T>,
}

impl<T: Real> MagneticEnvironment<T> {
    pub fn new(bias: Vec3<T>, gradient_g_per_cm: T, axis: Vec3<T>) -> Result<Self, TrapError> {
        let axis = axis
            .normalized()
            .ok_or_else(|| TrapError::InvalidParameter("gradient axis must be non-zero".into()))?;
        Ok(Self { bias, gradient_g_per_cm, axis })
    }

    /// Real field at `r` (m): the bias rescaled so |B| grows linearly along the axis.
    pub fn field_at(&self, r: Vec3<T>) -> Vec3<T> {
        let b0 = self.bias.norm();
        if b0 == T::zero() {
            return self.bias;
        }
        let s_cm = self.axis.dot(r) * T::lit(100.0);
        self.bias * ((b0 + self.gradient_g_per_cm * s_cm) / b0)
    }
}

/// Local description of one condensate position.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrapSite<T> {
    pub position: Vec3<T>,
    pub beam_intensities: Vec<T>,
    pub total_intensity: T,
    pub b_vls: Vec3<T>,
}

pub fn trap_site<T: Real>(beams: &[GaussianBeam<T>], coupling: &VlsCoupling<T>, r: Vec3<T>) -> TrapSite<T> {
    let beam_intensities: Vec<T> = beams.iter().map(|b| b.intensity_at(r)).collect();
    let total_intensity = beam_intensities.iter().fold(T::zero(), |s, &i| s + i);
    TrapSite { position: r, beam_intensities, total_intensity, b_vls: vls_field(beams, coupling, r) }
}

/// Interrogation time limit `2 pi / (2 r_TF gamma B')`; infinite for a vanishing gradient.
///
/// `r_tf` in m, `gradient` in G/cm, `gamma` in rad s^-1 G^-1.
pub fn dephasing_time<T: Real>(r_tf: T, gradient_g_per_cm: T, gamma: T) -> T {
    let denom = T::two() * r_tf * T::lit(100.0) * gamma.abs() * gradient_g_per_cm.abs();
    if denom == T::zero() {
        T::infinity()
    } else {
        T::two() * T::PI() / denom
    }
}
