//! CODATA 2018 constants in SI units, plus unit conversion factors.

pub const PLANCK_H: f64 = 6.626_070_15e-34;
pub const HBAR: f64 = PLANCK_H / (2.0 * std::f64::consts::PI);
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
pub const BOHR_RADIUS: f64 = 5.291_772_109_03e-11;
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const STANDARD_GRAVITY: f64 = 9.81;

pub const GAUSS_PER_TESLA: f64 = 1.0e4;
/// 1 W/cm^2 expressed in W/m^2.
pub const W_PER_M2_PER_W_PER_CM2: f64 = 1.0e4;
/// 1 G/cm expressed in T/m.
pub const TESLA_PER_M_PER_GAUSS_PER_CM: f64 = 1.0e-2;

/// SI polarizability (C m^2/V) to cgs volume (cm^3).
pub fn si_to_cgs_polarizability(alpha_si: f64) -> f64 {
    alpha_si / (4.0 * std::f64::consts::PI * EPSILON_0) * 1.0e6
}

pub fn cgs_to_si_polarizability(alpha_cgs: f64) -> f64 {
    alpha_cgs * 1.0e-6 * 4.0 * std::f64::consts::PI * EPSILON_0
}

/// SI polarizability (C m^2/V) to atomic units.
pub fn si_to_au_polarizability(alpha_si: f64) -> f64 {
    alpha_si / (4.0 * std::f64::consts::PI * EPSILON_0 * BOHR_RADIUS.powi(3))
}

pub fn au_to_si_polarizability(alpha_au: f64) -> f64 {
    alpha_au * 4.0 * std::f64::consts::PI * EPSILON_0 * BOHR_RADIUS.powi(3)
}

/// Magnitude of the F-level gyromagnetic ratio |g_F| mu_B / hbar in rad s^-1 G^-1.
pub fn gyromagnetic_ratio_rad_per_s_per_gauss(g_f: f64) -> f64 {
    g_f.abs() * BOHR_MAGNETON / HBAR / GAUSS_PER_TESLA
}

/// Fall distance after `t` seconds from rest.
pub fn freefall_distance(t: f64, g: f64) -> f64 {
    0.5 * g * t * t
}
