//! Differential Ramsey shots and elliptical phase extraction.

mod ellipse;

pub use ellipse::{ellipse_fit, ellipse_fit_with, phase_from_conic, Conic, EllipseFit, EllipseMethod};

use crate::constants::gyromagnetic_ratio_rad_per_s_per_gauss;
use crate::rng::{derive_seed, stream_rng};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Quadratic Zeeman coefficient of the F = 1 ground state, in Hz / G^2.
pub const QUADRATIC_ZEEMAN_HZ_PER_G2: f64 = 71.89;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("ellipse fit needs at least 6 points, got {n}")]
    TooFewPoints { n: usize },
    #[error("points are collinear: relative phase is 0 or pi and cannot be resolved")]
    Collinear,
    #[error("fitted conic is not an ellipse (B^2 - 4AC = {discriminant:.3e})")]
    NotAnEllipse { discriminant: f64 },
    #[error("ellipse is degenerate (cos dphi = {cos:.15}): relative phase is 0 or pi and cannot be resolved")]
    PhaseIndeterminate { cos: f64 },
    #[error("ellipse not resolved from a line (noise {noise_rms:.3e} vs minor-axis spread {minor_rms:.3e}, normalised units): relative phase is near 0 or pi")]
    Unresolved { noise_rms: f64, minor_rms: f64 },
    #[error("non-finite input point")]
    NonFinite,
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("invalid Ramsey configuration: {0}")]
    Config(String),
}

impl FitError {
    /// True when the data are consistent with a relative phase of 0 or pi.
    pub fn is_phase_degenerate(&self) -> bool {
        matches!(self, FitError::Collinear | FitError::PhaseIndeterminate { .. } | FitError::Unresolved { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum PhaseNoise {
    /// Common-mode phase uniform on [0, 2 pi).
    Uniform,
    /// Common-mode phase normal with the given RMS (rad).
    Gaussian { rms: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum PulsePhases {
    /// `count` phases evenly spaced over [0, 2 pi).
    Uniform { count: usize },
    List { values: Vec<f64> },
}

impl PulsePhases {
    pub fn values(&self) -> Vec<f64> {
        match self {
            PulsePhases::Uniform { count } => (0..*count).map(|k| 2.0 * PI * k as f64 / *count as f64).collect(),
            PulsePhases::List { values } => values.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RamseyConfig {
    /// Interrogation time T (s).
    pub interrogation_time: f64,
    pub pulse_phases: PulsePhases,
    pub contrast_a: f64,
    pub contrast_b: f64,
    pub phase_noise: PhaseNoise,
    /// Additive Gaussian noise on each F_z (absolute units).
    pub readout_noise: f64,
    /// |B(r_A)| - |B(r_B)| (G).
    pub delta_b: f64,
    /// Bias magnitude (G), used by the quadratic Zeeman contrast model.
    pub bias: f64,
    /// Apply |cos(2 pi q_Z B0^2 T)| to both contrasts.
    pub quadratic_zeeman_contrast: bool,
    /// rad s^-1 G^-1.
    pub gamma: f64,
    pub seed: u64,
}

impl Default for RamseyConfig {
    fn default() -> Self {
        Self {
            interrogation_time: 15e-3,
            pulse_phases: PulsePhases::Uniform { count: 200 },
            contrast_a: 0.8,
            contrast_b: 0.8,
            phase_noise: PhaseNoise::Uniform,
            readout_noise: 0.0,
            delta_b: 0.0,
            bias: 0.0,
            quadratic_zeeman_contrast: false,
            gamma: gyromagnetic_ratio_rad_per_s_per_gauss(-0.5),
            seed: 0,
        }
    }
}

impl RamseyConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        let bad = |m: String| Err(FitError::Config(m));
        if !(self.interrogation_time > 0.0) || !self.interrogation_time.is_finite() {
            return bad(format!("interrogation time must be > 0, got {}", self.interrogation_time));
        }
        for (name, c) in [("contrast_a", self.contrast_a), ("contrast_b", self.contrast_b)] {
            if !(c > 0.0 && c <= 1.0) {
                return bad(format!("{name} must lie in (0, 1], got {c}"));
            }
        }
        if !(self.readout_noise >= 0.0) {
            return bad("readout noise must be >= 0".into());
        }
        if let PhaseNoise::Gaussian { rms } = self.phase_noise {
            if !(rms >= 0.0) {
                return bad("phase noise rms must be >= 0".into());
            }
        }
        let phases = self.pulse_phases.values();
        let mut distinct: Vec<f64> = phases.iter().map(|p| p.rem_euclid(2.0 * PI)).collect();
        distinct.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        if distinct.len() < 6 {
            return bad(format!("need at least 6 distinct pulse phases, got {}", distinct.len()));
        }
        if !self.gamma.is_finite() || !self.delta_b.is_finite() || !self.bias.is_finite() {
            return bad("gamma, delta_b and bias must be finite".into());
        }
        Ok(())
    }

    /// `gamma * delta_B * T`.
    pub fn delta_phi(&self) -> f64 {
        self.gamma * self.delta_b * self.interrogation_time
    }

    pub fn contrast_factor(&self) -> f64 {
        if self.quadratic_zeeman_contrast {
            qz_contrast(self.interrogation_time, self.bias)
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub phase: f64,
    pub fz_a: f64,
    pub fz_b: f64,
    /// Realised common-mode phase; not exported.
    #[serde(skip)]
    pub common_phase: f64,
}

/// Gain of the default ellipse fit: `u(delta phi) ~ K sigma / (C sqrt N)` for uniform
/// common-mode phase, isotropic readout noise `sigma`, contrast `C` and `N` shots.
pub const PHASE_NOISE_GAIN: f64 = 3.28;

/// Readout noise that gives phase uncertainty `u` from `shots` shots at `contrast`.
pub fn readout_noise_for_phase_uncertainty(u: f64, shots: usize, contrast: f64) -> f64 {
    u * contrast * (shots as f64).sqrt() / PHASE_NOISE_GAIN
}

/// One shot per pulse phase; shot `k` draws from its own counter-based stream.
pub fn simulate_shots(cfg: &RamseyConfig) -> Result<Vec<ShotRecord>, FitError> {
    cfg.validate()?;
    let phases = cfg.pulse_phases.values();
    let stage = derive_seed(cfg.seed, "ramsey.shots", 0);
    let k = cfg.contrast_factor();
    let (ca, cb) = (cfg.contrast_a * k, cfg.contrast_b * k);
    let dphi = cfg.delta_phi();
    let readout = if cfg.readout_noise > 0.0 {
        Some(Normal::new(0.0, cfg.readout_noise).map_err(|e| FitError::Config(e.to_string()))?)
    } else {
        None
    };
    let common = match cfg.phase_noise {
        PhaseNoise::Gaussian { rms } if rms > 0.0 => {
            Some(Normal::new(0.0, rms).map_err(|e| FitError::Config(e.to_string()))?)
        }
        _ => None,
    };
    let shots = phases
        .par_iter()
        .enumerate()
        .map(|(i, &phi)| {
            let mut rng = stream_rng(stage, i as u64);
            let psi = match cfg.phase_noise {
                PhaseNoise::Uniform => rng.random::<f64>() * 2.0 * PI,
                PhaseNoise::Gaussian { .. } => common.map_or(0.0, |d| d.sample(&mut rng)),
            };
            let mut a = ca * (psi - phi).cos();
            let mut b = cb * (psi - phi + dphi).cos();
            if let Some(d) = readout {
                a = (a + d.sample(&mut rng)).clamp(-1.0, 1.0);
                b = (b + d.sample(&mut rng)).clamp(-1.0, 1.0);
            }
            ShotRecord { phase: phi, fz_a: a, fz_b: b, common_phase: psi }
        })
        .collect();
    Ok(shots)
}

/// Fit the (F_zA, F_zB) cloud of a shot list.
pub fn fit_shots(shots: &[ShotRecord]) -> Result<EllipseFit<f64>, FitError> {
    let pts: Vec<(f64, f64)> = shots.iter().map(|s| (s.fz_a, s.fz_b)).collect();
    ellipse_fit(&pts)
}

/// Contrast factor `|cos(2 pi q_Z B0^2 T)|` from the quadratic Zeeman shift.
pub fn qz_contrast(t: f64, b0: f64) -> f64 {
    (2.0 * PI * QUADRATIC_ZEEMAN_HZ_PER_G2 * b0 * b0 * t).cos().abs()
}

/// Interrogation times of the first `count` contrast maxima after T = 0 (excluded).
pub fn qz_contrast_maxima(b0: f64, count: usize) -> Vec<f64> {
    let q = 2.0 * PI * QUADRATIC_ZEEMAN_HZ_PER_G2 * b0 * b0;
    if q == 0.0 {
        return Vec::new();
    }
    (1..=count).map(|k| k as f64 * PI / q).collect()
}

/// Contrast maximum closest to `t` for bias `b0`; `t` itself when the contrast never varies.
pub fn nearest_qz_maximum(t: f64, b0: f64) -> f64 {
    let q = 2.0 * PI * QUADRATIC_ZEEMAN_HZ_PER_G2 * b0 * b0;
    if q == 0.0 {
        return t;
    }
    (t * q / PI).round() * PI / q
}

/// Bias magnitude for which `t` is the `k`-th contrast maximum.
pub fn bias_for_qz_maximum(t: f64, k: u32) -> f64 {
    (k as f64 * PI / (2.0 * PI * QUADRATIC_ZEEMAN_HZ_PER_G2 * t)).sqrt()
}

pub fn write_shots_csv<W: std::io::Write>(out: W, shots: &[ShotRecord]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["phase", "fz_a", "fz_b"])?;
    for s in shots {
        w.write_record([format!("{:e}", s.phase), format!("{:e}", s.fz_a), format!("{:e}", s.fz_b)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_shots_csv<R: std::io::Read>(input: R) -> Result<Vec<ShotRecord>, csv::Error> {
    #[derive(Deserialize)]
    struct Row {
        phase: f64,
        fz_a: f64,
        fz_b: f64,
    }
    let mut r = csv::Reader::from_reader(input);
    r.deserialize::<Row>()
        .map(|row| row.map(|x| ShotRecord { phase: x.phase, fz_a: x.fz_a, fz_b: x.fz_b, common_phase: f64::NAN }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(dphi: f64) -> RamseyConfig {
        let c = RamseyConfig { contrast_a: 1.0, contrast_b: 1.0, ..Default::default() };
        RamseyConfig { delta_b: dphi / (c.gamma * c.interrogation_time), ..c }
    }

    #[test]
    fn zero_phase_puts_points_on_the_diagonal() {
        let shots = simulate_shots(&cfg(0.0)).unwrap();
        assert!(shots.iter().all(|s| (s.fz_a - s.fz_b).abs() < 1e-12));
        assert!(fit_shots(&shots).unwrap_err().is_phase_degenerate());
    }

    #[test]
    fn quadrature_phase_traces_the_unit_circle() {
        let shots = simulate_shots(&cfg(PI / 2.0)).unwrap();
        assert!(shots.iter().all(|s| (s.fz_a.powi(2) + s.fz_b.powi(2) - 1.0).abs() < 1e-12));
    }

    #[test]
    fn gaussian_common_mode_noise_closed_loop() {
        let c = RamseyConfig { phase_noise: PhaseNoise::Gaussian { rms: 3.0 }, seed: 5, ..cfg(0.3) };
        let fit = fit_shots(&simulate_shots(&c).unwrap()).unwrap();
        assert!((fit.delta_phi - 0.3).abs() < 0.011 * PI);
    }

    #[test]
    fn shots_are_deterministic() {
        let c = RamseyConfig { readout_noise: 0.05, seed: 9, ..cfg(1.0) };
        let a = simulate_shots(&c).unwrap();
        let b = simulate_shots(&c).unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let s = pool.install(|| simulate_shots(&c).unwrap());
        assert!(a.iter().zip(s.iter()).all(|(x, y)| x.fz_a.to_bits() == y.fz_a.to_bits() && x.fz_b.to_bits() == y.fz_b.to_bits()));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(simulate_shots(&RamseyConfig { interrogation_time: 0.0, ..cfg(1.0) }).is_err());
        assert!(simulate_shots(&RamseyConfig { contrast_a: 1.2, ..cfg(1.0) }).is_err());
        assert!(simulate_shots(&RamseyConfig { pulse_phases: PulsePhases::Uniform { count: 5 }, ..cfg(1.0) }).is_err());
        let rep = PulsePhases::List { values: vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0] };
        assert!(simulate_shots(&RamseyConfig { pulse_phases: rep, ..cfg(1.0) }).is_err());
    }

    #[test]
    fn qz_contrast_examples() {
        assert_eq!(qz_contrast(0.0, 0.7), 1.0);
        assert_eq!(qz_contrast(0.015, 0.0), 1.0);
        let b0 = bias_for_qz_maximum(15e-3, 1);
        assert!((b0 - 0.681).abs() < 1e-3);
        assert!((nearest_qz_maximum(15.3e-3, b0) - 15e-3).abs() < 1e-12);
        assert!(qz_contrast_maxima(b0, 3).iter().any(|t| (t - 15e-3).abs() < 1e-12));
        assert!((qz_contrast(15e-3, b0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let shots = simulate_shots(&RamseyConfig { readout_noise: 0.01, seed: 2, ..cfg(0.8) }).unwrap();
        let mut buf = Vec::new();
        write_shots_csv(&mut buf, &shots).unwrap();
        let back = read_shots_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), shots.len());
        for (a, b) in shots.iter().zip(back.iter()) {
            assert_eq!(a.fz_a, b.fz_a);
            assert_eq!(a.fz_b, b.fz_b);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn noiseless_shots_respect_contrast(seed in 0u64..10_000, ca in 0.05f64..1.0, cb in 0.05f64..1.0, d in -10.0f64..10.0) {
            let c = RamseyConfig { contrast_a: ca, contrast_b: cb, delta_b: d, seed, ..Default::default() };
            for s in simulate_shots(&c).unwrap() {
                prop_assert!(s.fz_a.abs() <= ca + 1e-12 && s.fz_b.abs() <= cb + 1e-12);
            }
        }

        #[test]
        fn noisy_shots_stay_physical(seed in 0u64..10_000) {
            let c = RamseyConfig { contrast_a: 1.0, contrast_b: 1.0, readout_noise: 0.3, seed, ..Default::default() };
            for s in simulate_shots(&c).unwrap() {
                prop_assert!(s.fz_a.abs() <= 1.0 && s.fz_b.abs() <= 1.0);
            }
        }

        #[test]
        fn recovered_phase_is_folded(k in -3i32..3, d in 0.3f64..2.8, seed in 0u64..100) {
            let truth = d + 2.0 * PI * k as f64;
            let c = RamseyConfig { seed, ..cfg(truth) };
            let fit = fit_shots(&simulate_shots(&c).unwrap()).unwrap();
            prop_assert!((fit.delta_phi - d).abs() < 1e-8);
            let neg = RamseyConfig { seed, ..cfg(-truth) };
            let fit = fit_shots(&simulate_shots(&neg).unwrap()).unwrap();
            prop_assert!((fit.delta_phi - d).abs() < 1e-8);
        }
    }
}
