use super::lines::AtomSpecies;
use super::wigner::{doubled, six_j};
use super::AtomError;
use crate::constants::{
    si_to_au_polarizability, si_to_cgs_polarizability, EPSILON_0, HBAR, PLANCK_H, SPEED_OF_LIGHT,
    W_PER_M2_PER_W_PER_CM2,
};
use serde::Serialize;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rank {
    Scalar,
    Vector,
}

/// A dynamic polarizability in SI units (C m^2 / V) with what it was computed for.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Polarizability {
    pub value_si: f64,
    pub rank: Rank,
    pub species: String,
    pub level: String,
    pub wavelength_m: f64,
    pub warnings: Vec<String>,
}

impl Polarizability {
    pub fn cgs(&self) -> f64 {
        si_to_cgs_polarizability(self.value_si)
    }

    pub fn atomic_units(&self) -> f64 {
        si_to_au_polarizability(self.value_si)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizabilityOptions {
    pub include_linewidth: bool,
    /// Multiplicative correction applied to the fine-structure result; 1 leaves it untouched.
    pub hyperfine_correction: f64,
    /// Warn when any detuning is below this fraction of the transition frequency.
    pub near_resonance_fraction: f64,
}

impl Default for PolarizabilityOptions {
    fn default() -> Self {
        Self {
            include_linewidth: true,
            hyperfine_correction: 1.0,
            near_resonance_fraction: 1e-3,
        }
    }
}

fn parity(twice_exponent: i64) -> f64 {
    debug_assert!(twice_exponent % 2 == 0);
    if (twice_exponent / 2).rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

fn omega_of(wavelength_m: f64) -> Result<f64, AtomError> {
    if !(wavelength_m > 0.0) || !wavelength_m.is_finite() {
        return Err(AtomError::BadWavelength(wavelength_m));
    }
    Ok(2.0 * PI * SPEED_OF_LIGHT / wavelength_m)
}

/// Rank-`k` reduced polarizability `alpha^(K)_{nJ}` of the ground fine-structure level.
pub fn reduced_polarizability(
    species: &AtomSpecies,
    k: u32,
    wavelength_m: f64,
    opts: &PolarizabilityOptions,
) -> Result<(f64, Vec<String>), AtomError> {
    let omega = omega_of(wavelength_m)?;
    let two_j = doubled(species.ground_j).expect("validated at load");
    let mut warnings = Vec::new();
    let mut sum = 0.0;
    for t in &species.transitions {
        let two_jp = doubled(t.j_upper).expect("validated at load");
        let w0 = t.angular_frequency();
        let gamma = if opts.include_linewidth { t.gamma() } else { 0.0 };
        let detuning = w0 - omega;
        if detuning == 0.0 && gamma == 0.0 {
            return Err(AtomError::Resonant(t.label.clone()));
        }
        if detuning.abs() < opts.near_resonance_fraction * w0 {
            warnings.push(format!(
                "{} detuning {:.3e} Hz is small; excited hyperfine structure is not resolved",
                t.label,
                detuning / (2.0 * PI)
            ));
        }
        let h2 = gamma * gamma / 4.0;
        let co = detuning / (detuning * detuning + h2);
        let counter = (w0 + omega) / ((w0 + omega).powi(2) + h2);
        let kp = if k % 2 == 0 { 1.0 } else { -1.0 };
        let sj = six_j([2, 2 * k, 2, two_j, two_jp, two_j]).to_f64();
        let sign = parity(2 * (k as i64) + two_j as i64 + 2 + two_jp as i64);
        sum += sign * sj * t.reduced_dipole_sq / HBAR * (co + kp * counter);
    }
    Ok((((2 * k + 1) as f64).sqrt() * sum, warnings))
}

fn f_label(species: &AtomSpecies, f: f64) -> String {
    format!("{} F={}", species.ground_label, f)
}

/// Vector polarizability `alpha^v_{nJF}` of ground hyperfine level `f`.
pub fn vector_polarizability(
    species: &AtomSpecies,
    f: f64,
    wavelength_m: f64,
    opts: &PolarizabilityOptions,
) -> Result<Polarizability, AtomError> {
    species.hyperfine_level(f)?;
    if f == 0.0 {
        return Err(AtomError::ZeroF);
    }
    let (alpha1, warnings) = reduced_polarizability(species, 1, wavelength_m, opts)?;
    let two_f = doubled(f).expect("validated at load");
    let two_j = doubled(species.ground_j).expect("validated at load");
    let two_i = doubled(species.nuclear_spin).expect("validated at load");
    let sign = parity(two_j as i64 + two_i as i64 + two_f as i64);
    let sj = six_j([two_f, 2, two_f, two_j, two_i, two_j]).to_f64();
    let pref = sign * (2.0 * f * (2.0 * f + 1.0) / (f + 1.0)).sqrt() * sj;
    Ok(Polarizability {
        value_si: pref * alpha1 * opts.hyperfine_correction,
        rank: Rank::Vector,
        species: species.name.clone(),
        level: f_label(species, f),
        wavelength_m,
        warnings,
    })
}

/// Scalar polarizability of the ground fine-structure level (identical for every F).
pub fn scalar_polarizability(
    species: &AtomSpecies,
    wavelength_m: f64,
    opts: &PolarizabilityOptions,
) -> Result<Polarizability, AtomError> {
    let (alpha0, warnings) = reduced_polarizability(species, 0, wavelength_m, opts)?;
    let norm = (3.0 * (2.0 * species.ground_j + 1.0)).sqrt();
    Ok(Polarizability {
        value_si: alpha0 / norm * opts.hyperfine_correction,
        rank: Rank::Scalar,
        species: species.name.clone(),
        level: species.ground_label.clone(),
        wavelength_m,
        warnings,
    })
}

/// Vector light shift coefficient `alpha^v / (4 c eps0 F h)` in Hz per W/cm^2.
///
/// Multiply by `C m_F I` to obtain the frequency shift of sublevel `m_F`.
pub fn vls_per_intensity(alpha_v: &Polarizability, f: f64) -> Result<f64, AtomError> {
    if f == 0.0 {
        return Err(AtomError::ZeroF);
    }
    Ok(alpha_v.value_si / (4.0 * SPEED_OF_LIGHT * EPSILON_0 * f * PLANCK_H) * W_PER_M2_PER_W_PER_CM2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::BOHR_RADIUS;
    use proptest::prelude::*;

    const L1064: f64 = 1064e-9;

    fn two_level_scalar(rb: &AtomSpecies, lambda: f64) -> f64 {
        // independent check: sum over lines of 2 w0 |<J||er||J'>|^2 / (3 hbar (w0^2 - w^2))
        let w = 2.0 * PI * SPEED_OF_LIGHT / lambda;
        rb.transitions
            .iter()
            .map(|t| {
                let w0 = t.angular_frequency();
                let d2 = t.reduced_dipole_sq / (2.0 * rb.ground_j + 1.0);
                2.0 * w0 * d2 / (3.0 * HBAR * (w0 * w0 - w * w))
            })
            .sum()
    }

    #[test]
    fn scalar_matches_two_level_sum() {
        let rb = AtomSpecies::rb87();
        let opts = PolarizabilityOptions { include_linewidth: false, ..Default::default() };
        let a = scalar_polarizability(&rb, L1064, &opts).unwrap();
        let b = two_level_scalar(&rb, L1064);
        assert!((a.value_si / b - 1.0).abs() < 1e-12);
        assert!((a.atomic_units() - 677.0).abs() < 5.0);
    }

    #[test]
    fn vector_f1_independent_oracle() {
        // hand-expanded rank-1 sum for J = 1/2 with R = 1/(w0 - w) - 1/(w0 + w)
        let rb = AtomSpecies::rb87();
        let opts = PolarizabilityOptions { include_linewidth: false, ..Default::default() };
        let w = 2.0 * PI * SPEED_OF_LIGHT / L1064;
        let r = |w0: f64| 1.0 / (w0 - w) - 1.0 / (w0 + w);
        let d1 = &rb.transitions[0];
        let d2 = &rb.transitions[1];
        // alpha^(1) = (-1)^J sqrt3 [(-1)^(1/2)(-1/3)|d1|^2 R1 + (-1)^(3/2)(-1/6)|d2|^2 R2]/hbar
        // with (-1)^(J+J') = -1 for J' = 1/2 and +1 for J' = 3/2
        let alpha1 = 3f64.sqrt()
            * (-(-1.0 / 3.0) * d1.reduced_dipole_sq * r(d1.angular_frequency())
                + (-1.0 / 6.0) * d2.reduced_dipole_sq * r(d2.angular_frequency()))
            / HBAR;
        // (-1)^(J+I+F) sqrt(2F(2F+1)/(F+1)) {1 1 1; 1/2 3/2 1/2} with F = 1
        let pref = -1.0 * 3f64.sqrt() * (-1.0 / 6.0);
        let expect = pref * alpha1;
        let got = vector_polarizability(&rb, 1.0, L1064, &opts).unwrap();
        assert!((got.value_si / expect - 1.0).abs() < 1e-12, "{} vs {}", got.value_si, expect);
    }

    #[test]
    fn f1_vector_polarizability_at_1064() {
        let rb = AtomSpecies::rb87();
        let a = vector_polarizability(&rb, 1.0, L1064, &Default::default()).unwrap();
        assert!((a.value_si / 2.365e-40 - 1.0).abs() < 5e-4);
        assert!((a.cgs() / 2.126e-24 - 1.0).abs() < 5e-4);
        assert!((a.atomic_units() / 14.35 - 1.0).abs() < 5e-4);
        assert!(a.warnings.is_empty());
    }

    #[test]
    fn linewidth_is_negligible_far_off_resonance() {
        let rb = AtomSpecies::rb87();
        let with = vector_polarizability(&rb, 1.0, L1064, &Default::default()).unwrap();
        let without = vector_polarizability(
            &rb,
            1.0,
            L1064,
            &PolarizabilityOptions { include_linewidth: false, ..Default::default() },
        )
        .unwrap();
        assert!((with.value_si / without.value_si - 1.0).abs() < 1e-12);
    }

    #[test]
    fn light_shift_coefficient() {
        let rb = AtomSpecies::rb87();
        let a = vector_polarizability(&rb, 1.0, L1064, &Default::default()).unwrap();
        let k = vls_per_intensity(&a, 1.0).unwrap();
        assert!((k - 0.3358).abs() < 5e-4, "{k}");
    }

    #[test]
    fn f2_shift_per_m_f_mirrors_f1() {
        let rb = AtomSpecies::rb87();
        let a1 = vector_polarizability(&rb, 1.0, L1064, &Default::default()).unwrap();
        let a2 = vector_polarizability(&rb, 2.0, L1064, &Default::default()).unwrap();
        // g_F-weighted shifts per unit m_F / F agree: alpha1 / 1 = -alpha2 / 2
        assert!((a1.value_si / 1.0 + a2.value_si / 2.0).abs() < 1e-12 * a1.value_si.abs());
    }

    #[test]
    fn errors_for_bad_inputs() {
        let rb = AtomSpecies::rb87();
        let o = PolarizabilityOptions::default();
        assert!(matches!(vector_polarizability(&rb, 3.0, L1064, &o), Err(AtomError::UnknownLevel { .. })));
        assert!(matches!(vector_polarizability(&rb, 1.0, -1.0, &o), Err(AtomError::BadWavelength(_))));
        let lambda_d1 = SPEED_OF_LIGHT / rb.transitions[0].frequency_hz;
        let no_gamma = PolarizabilityOptions { include_linewidth: false, ..o };
        assert!(matches!(scalar_polarizability(&rb, lambda_d1, &no_gamma), Err(AtomError::Resonant(_))));
    }

    #[test]
    fn near_resonance_warns() {
        let rb = AtomSpecies::rb87();
        let lambda = SPEED_OF_LIGHT / (rb.transitions[0].frequency_hz - 50e9);
        let a = vector_polarizability(&rb, 1.0, lambda, &Default::default()).unwrap();
        assert!(!a.warnings.is_empty());
    }

    #[test]
    fn atomic_unit_conversion_is_consistent() {
        let rb = AtomSpecies::rb87();
        let a = vector_polarizability(&rb, 1.0, L1064, &Default::default()).unwrap();
        let au = a.value_si / (4.0 * PI * EPSILON_0 * BOHR_RADIUS.powi(3));
        assert!((a.atomic_units() - au).abs() < 1e-12 * au);
    }

    proptest! {
        #[test]
        fn vector_polarizability_vanishes_without_fine_structure_splitting(lambda_nm in 800.0f64..2000.0) {
            // collapse both lines onto one frequency with equal line strengths weighted 1:2
            let mut rb = AtomSpecies::rb87();
            let f0 = rb.transitions[1].frequency_hz;
            let s = rb.transitions[0].reduced_dipole_sq;
            rb.transitions[0].frequency_hz = f0;
            rb.transitions[1].reduced_dipole_sq = 2.0 * s;
            let o = PolarizabilityOptions { include_linewidth: false, ..Default::default() };
            let a = vector_polarizability(&rb, 1.0, lambda_nm * 1e-9, &o).unwrap();
            let scale = scalar_polarizability(&rb, lambda_nm * 1e-9, &o).unwrap();
            prop_assert!(a.value_si.abs() < 1e-12 * scale.value_si.abs());
        }

        #[test]
        fn scalar_is_positive_below_both_resonances(lambda_nm in 810.0f64..3000.0) {
            let rb = AtomSpecies::rb87();
            let a = scalar_polarizability(&rb, lambda_nm * 1e-9, &Default::default()).unwrap();
            prop_assert!(a.value_si > 0.0);
        }
    }
}
