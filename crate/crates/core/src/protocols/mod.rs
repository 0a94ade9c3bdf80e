//! Measurement pipelines: delayed drop through a single beam, and in-trap nulling
//! by intensity-balanced differential Ramsey interferometry.

mod delayed_drop;
mod direction;
mod in_trap;
mod regression;
mod unfold;

pub use delayed_drop::{
    delayed_drop_scan, drop_delay_for_mean_separation, fit_sinusoid, orthogonal_biases_tilted, power_for_peak_gradient,
    write_delayed_drop_csv, DelayedDropPhysics, DelayedDropPlan, DelayedDropResult, DropAnglePoint, DropNoise, SinusoidFit,
    MAX_INTERROGATION_TIME,
};
pub use direction::{axis_error, infer_vls_direction, solve_vls_vector, VlsDirection};
pub use in_trap::{
    nulling_pipeline, simulate_in_trap_point, write_angle_slopes_csv, write_intensity_scans_csv, AngleSlope, CrossedBeam,
    InTrapPhysics, InTrapPlan, Intersection, NullingResult, ScanPoint, NOMINAL_READOUT_NOISE, SMALL_ANGLE_TOLERANCE,
};
pub use regression::{linear_fit, LinearFit, CHI2_FLAG_P};
pub use unfold::{fold, restore_signs, Unfolded, AMBIGUITY_MARGIN};

use crate::constants::{freefall_distance, STANDARD_GRAVITY};
use crate::ramsey::FitError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProtocolError {
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("bias set is rank deficient: {0}")]
    RankDeficient(String),
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("{0}")]
    Physics(String),
}

impl From<crate::trapfield::TrapError> for ProtocolError {
    fn from(e: crate::trapfield::TrapError) -> Self {
        ProtocolError::Physics(e.to_string())
    }
}

impl From<crate::polopt::PolError> for ProtocolError {
    fn from(e: crate::polopt::PolError) -> Self {
        ProtocolError::Physics(e.to_string())
    }
}

/// Distance fallen (m) after `t_delay` seconds, with g = 9.81 m/s^2.
pub fn freefall_separation(t_delay: f64) -> f64 {
    freefall_distance(t_delay, STANDARD_GRAVITY)
}

/// Background-subtracted field difference (G): `(dphi - dphi_bg) / (gamma T)`.
pub fn delta_b_from_phase(dphi: f64, dphi_bg: f64, t: f64, gamma: f64) -> f64 {
    (dphi - dphi_bg) / (gamma * t)
}

/// rf power change on beam A that balances the two site intensities.
pub fn balance_offset(p_a: f64, p_b: f64, rf_a: f64, rf_b: f64) -> f64 {
    p_b / p_a * rf_b - rf_a
}

/// `Delta I / I_A` for an rf offset `dp` relative to the balance point.
pub fn normalized_intensity(dp: f64, rf_a: f64) -> f64 {
    dp / rf_a
}

/// `|min_slope| / (|theta_slope| / 2)`.
pub fn suppression_ratio(min_slope: f64, theta_slope: f64) -> f64 {
    min_slope.abs() / (0.5 * theta_slope.abs())
}

/// Round an angle to the nearest multiple of `step` (rad).
pub fn quantize_angle(theta: f64, step: Option<f64>) -> f64 {
    match step {
        Some(s) if s > 0.0 => (theta / s).round() * s,
        _ => theta,
    }
}
