//! Single-mode spin-1 dynamics with a centroid model of gradient-driven
//! separation of the m_F = +-1 components.
//!
//! Per-atom energy (rad/s, constant `c m^2 / 2` dropped):
//! `E = c rho0 [(1 - rho0) + sqrt((1 - rho0)^2 - m^2) cos theta] + q (1 - rho0)`,
//! with `theta = theta_{+1} + theta_{-1} - 2 theta_0` conjugate to `rho0`:
//! `rho0' = -2 dE/dtheta`, `theta' = 2 dE/drho0`.

use crate::constants::{BOHR_MAGNETON, HBAR, TESLA_PER_M_PER_GAUSS_PER_CM};
use crate::ramsey::QUADRATIC_ZEEMAN_HZ_PER_G2;
use crate::scalar::Real;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpinMixError {
    #[error("invalid spin-mixing parameter: {0}")]
    Parameter(String),
    #[error("invalid spinor state: {0}")]
    State(String),
    #[error("output step {dt} s does not resolve the dynamics (need <= {limit} s)")]
    StepTooLarge { dt: f64, limit: f64 },
    #[error("integrator failed at t = {t} s: {reason}")]
    StepFailure { t: f64, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpinorState<T> {
    pub rho_m1: T,
    pub rho_0: T,
    pub rho_p1: T,
    /// Relative spinor phase `theta_{+1} + theta_{-1} - 2 theta_0`.
    pub theta: T,
    /// Centroids of the m_F = -1, 0, +1 components along the gradient (m).
    pub y_m1: T,
    pub y_0: T,
    pub y_p1: T,
    pub v_m1: T,
    pub v_0: T,
    pub v_p1: T,
}

impl<T: Real> SpinorState<T> {
    /// Populations from `rho0` and `m`, with centroids at rest at the origin.
    pub fn from_rho0_m(rho_0: T, m: T, theta: T) -> Result<Self, SpinMixError> {
        let one = T::one();
        if !(rho_0 >= T::zero() && rho_0 <= one) || !(m.abs() <= one - rho_0) {
            return Err(SpinMixError::State(format!("rho0 = {rho_0}, m = {m} outside the physical region")));
        }
        let z = T::zero();
        Ok(Self {
            rho_m1: T::half() * (one - rho_0 - m),
            rho_0,
            rho_p1: T::half() * (one - rho_0 + m),
            theta,
            y_m1: z,
            y_0: z,
            y_p1: z,
            v_m1: z,
            v_0: z,
            v_p1: z,
        })
    }

    /// State after a pi/2 rf rotation of |m_F = +1>: amplitudes (1/2, 1/sqrt2, 1/2), all real
    /// and positive, so `theta = 0`.
    pub fn initial_after_pi2() -> Self {
        Self::from_rho0_m(T::half(), T::zero(), T::zero()).expect("valid state")
    }

    pub fn magnetization(&self) -> T {
        self.rho_p1 - self.rho_m1
    }

    pub fn total(&self) -> T {
        self.rho_m1 + self.rho_0 + self.rho_p1
    }

    pub fn separation(&self) -> T {
        self.y_p1 - self.y_m1
    }
}

/// `m = rho_{+1} - rho_{-1}` from a population triple `(rho_{-1}, rho_0, rho_{+1})`.
pub fn magnetization<T: Real>(rho: [T; 3]) -> T {
    rho[2] - rho[0]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinMixParams<T> {
    /// Quadratic Zeeman energy (rad/s).
    pub q: T,
    /// Spin-dependent interaction `c = c2 <n> / hbar` (rad/s).
    pub c: T,
    /// Field-magnitude gradient (G/cm).
    pub gradient_g_per_cm: T,
    /// Trap frequency along the gradient (rad/s).
    pub trap_frequency: T,
    /// Damping ratio of the relative centroid motion.
    pub damping_ratio: T,
    /// Thomas-Fermi radius along the gradient (m).
    pub tf_radius: T,
    pub mass_kg: f64,
    pub g_f: f64,
}

impl SpinMixParams<f64> {
    /// Values used for the spin-mixing runs: q = 2 pi 10 Hz, c = -2 pi 3.2 Hz.
    pub fn rb87_default() -> Self {
        Self {
            q: 2.0 * std::f64::consts::PI * 10.0,
            c: -2.0 * std::f64::consts::PI * 3.2,
            gradient_g_per_cm: 0.0,
            trap_frequency: 2.0 * std::f64::consts::PI * 10.0,
            damping_ratio: 1.0,
            tf_radius: 13e-6,
            mass_kg: 86.909180527 * crate::constants::ATOMIC_MASS_UNIT,
            g_f: -0.5,
        }
    }
}

/// `q = 2 pi q_Z B0^2` (rad/s) for bias `b0` in G.
pub fn q_from_bias(b0: f64) -> f64 {
    2.0 * std::f64::consts::PI * QUADRATIC_ZEEMAN_HZ_PER_G2 * b0 * b0
}

/// `c = c2 n / hbar` (rad/s) for `c2` in J m^3 and density in m^-3.
pub fn interaction_from_density(c2: f64, density: f64) -> f64 {
    c2 * density / HBAR
}

impl<T: Real> SpinMixParams<T> {
    pub fn validate(&self) -> Result<(), SpinMixError> {
        let bad = |m: String| Err(SpinMixError::Parameter(m));
        if !(self.q >= T::zero()) || !self.q.is_finite() {
            return bad(format!("q must be >= 0, got {}", self.q));
        }
        if !self.c.is_finite() {
            return bad("c must be finite".into());
        }
        if !(self.trap_frequency > T::zero()) || !(self.damping_ratio >= T::zero()) || !(self.tf_radius > T::zero()) {
            return bad("trap frequency and TF radius must be > 0, damping >= 0".into());
        }
        if !self.gradient_g_per_cm.is_finite() || !(self.mass_kg > 0.0) {
            return bad("gradient must be finite and mass positive".into());
        }
        Ok(())
    }

    /// Acceleration (m/s^2) of the m_F = +1 component: `-g_F mu_B |grad B| / M`.
    pub fn acceleration(&self) -> T {
        let grad_t_per_m = self.gradient_g_per_cm.to_f64_lossy() * TESLA_PER_M_PER_GAUSS_PER_CM;
        T::lit(-self.g_f * BOHR_MAGNETON * grad_t_per_m / self.mass_kg)
    }

    /// Centroid of m_F = +1 (m); m_F = -1 is its mirror image.
    pub fn centroid(&self, t: T) -> (T, T) {
        let a = self.acceleration();
        let w = self.trap_frequency;
        let z = self.damping_ratio;
        let y_inf = a / (w * w);
        let one = T::one();
        let (g, dg) = if (z - one).abs() < T::lit(1e-9) {
            let e = (-w * t).exp();
            ((one + w * t) * e, -w * w * t * e)
        } else if z < one {
            let wd = w * (one - z * z).sqrt();
            let e = (-z * w * t).exp();
            let k = z / (one - z * z).sqrt();
            let g = e * ((wd * t).cos() + k * (wd * t).sin());
            let dg = -e * (w * w / wd) * (wd * t).sin();
            (g, dg)
        } else {
            let s = (z * z - one).sqrt();
            let (r1, r2) = (-w * (z - s), -w * (z + s));
            let g = (r1 * (r2 * t).exp() - r2 * (r1 * t).exp()) / (r1 - r2);
            let dg = r1 * r2 * ((r2 * t).exp() - (r1 * t).exp()) / (r1 - r2);
            (g, dg)
        };
        (y_inf * (one - g), -y_inf * dg)
    }

    /// Overlap `exp(-dy^2 / (4 r_TF^2 / 5))` of the +-1 components.
    pub fn overlap(&self, t: T) -> T {
        let dy = T::two() * self.centroid(t).0;
        (-dy * dy / (T::lit(0.8) * self.tf_radius * self.tf_radius)).exp()
    }

    /// Energy of `(rho0, theta)` with interaction scaled by `lambda`.
    pub fn energy(&self, rho0: T, theta: T, m: T, lambda: T) -> T {
        let one = T::one();
        let s = ((one - rho0) * (one - rho0) - m * m).max(T::zero()).sqrt();
        self.c * lambda * rho0 * ((one - rho0) + s * theta.cos()) + self.q * (one - rho0)
    }

    fn rhs(&self, t: T, y: [T; 2], m: T, separation: bool) -> [T; 2] {
        let one = T::one();
        let two = T::two();
        let lambda = if separation { self.overlap(t) } else { one };
        let c = self.c * lambda;
        let (r, th) = (y[0], y[1]);
        let s = ((one - r) * (one - r) - m * m).max(T::zero()).sqrt();
        let dr = two * c * r * s * th.sin();
        let mut dth = -two * self.q + two * c * (one - two * r);
        if s > T::zero() {
            dth += two * c * ((one - r) * (one - two * r) - m * m) / s * th.cos();
        }
        [dr, dth]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryPoint<T> {
    pub t: T,
    pub state: SpinorState<T>,
    pub overlap: T,
    pub energy: T,
}

/// Integration tolerances for the embedded Dormand-Prince 5(4) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rtol: 1e-12, atol: 1e-14, max_steps: 10_000_000 }
    }
}

/// Evolve `state` over `[0, t_end]`, reporting every `dt`.
///
/// `separation` feeds the centroid overlap back into the interaction.
pub fn evolve_sma<T: Real>(
    state: &SpinorState<T>,
    params: &SpinMixParams<T>,
    t_end: T,
    dt: T,
    separation: bool,
) -> Result<Vec<TrajectoryPoint<T>>, SpinMixError> {
    evolve_with(state, params, t_end, dt, separation, Tolerances::default())
}

pub fn evolve_with<T: Real>(
    state: &SpinorState<T>,
    params: &SpinMixParams<T>,
    t_end: T,
    dt: T,
    separation: bool,
    tol: Tolerances,
) -> Result<Vec<TrajectoryPoint<T>>, SpinMixError> {
    params.validate()?;
    if !(dt > T::zero()) || !(t_end >= T::zero()) {
        return Err(SpinMixError::Parameter("dt must be > 0 and t_end >= 0".into()));
    }
    let mut limit = f64::INFINITY;
    for w in [params.q, params.c.abs()] {
        if w > T::zero() {
            limit = limit.min(2.0 * std::f64::consts::PI / w.to_f64_lossy() / 50.0);
        }
    }
    if dt.to_f64_lossy() > limit {
        return Err(SpinMixError::StepTooLarge { dt: dt.to_f64_lossy(), limit });
    }
    let m = state.magnetization();
    let total = state.total();
    if (total - T::one()).abs() > T::lit(1e-9) || state.rho_0 < T::zero() {
        return Err(SpinMixError::State(format!("populations sum to {total}")));
    }
    let n = (t_end / dt).round().to_f64_lossy() as usize;
    let mut y = [state.rho_0, state.theta];
    let mut out = Vec::with_capacity(n + 1);
    let mut t = T::zero();
    let mut h = dt.min(T::lit(1e-4));
    let mut steps = 0usize;
    let record = |t: T, y: [T; 2]| -> TrajectoryPoint<T> {
        let mut s = SpinorState::from_rho0_m(y[0], m, y[1]).unwrap_or(SpinorState {
            rho_m1: T::half() * (T::one() - y[0] - m),
            rho_0: y[0],
            rho_p1: T::half() * (T::one() - y[0] + m),
            ..*state
        });
        s.theta = y[1];
        let lambda = if separation { params.overlap(t) } else { T::one() };
        if separation {
            let (yp, vp) = params.centroid(t);
            s.y_p1 = yp;
            s.v_p1 = vp;
            s.y_m1 = -yp;
            s.v_m1 = -vp;
        }
        TrajectoryPoint { t, state: s, overlap: lambda, energy: params.energy(y[0], y[1], m, lambda) }
    };
    out.push(record(t, y));
    for k in 1..=n {
        let target = dt * T::lit(k as f64);
        while t < target {
            if steps >= tol.max_steps {
                return Err(SpinMixError::StepFailure { t: t.to_f64_lossy(), reason: "step budget exhausted".into() });
            }
            let hh = h.min(target - t);
            let (ynew, err) = dopri5_step(params, t, y, hh, m, separation);
            let sc0 = T::lit(tol.atol) + T::lit(tol.rtol) * y[0].abs().max(ynew[0].abs());
            let sc1 = T::lit(tol.atol) + T::lit(tol.rtol) * y[1].abs().max(ynew[1].abs()).max(T::one());
            let e = ((err[0] / sc0).powi(2) + (err[1] / sc1).powi(2)).sqrt() / T::two().sqrt();
            if !e.is_finite() {
                return Err(SpinMixError::StepFailure { t: t.to_f64_lossy(), reason: "non-finite error estimate".into() });
            }
            steps += 1;
            if e <= T::one() {
                t += hh;
                y = ynew;
            }
            let fac = if e == T::zero() { T::lit(5.0) } else { (T::lit(0.9) * e.powf(T::lit(-0.2))).min(T::lit(5.0)).max(T::lit(0.2)) };
            h = hh * fac;
            if h < T::lit(1e-15) {
                return Err(SpinMixError::StepFailure { t: t.to_f64_lossy(), reason: "step size underflow".into() });
            }
        }
        t = target;
        out.push(record(t, y));
    }
    Ok(out)
}

fn dopri5_step<T: Real>(p: &SpinMixParams<T>, t: T, y: [T; 2], h: T, m: T, sep: bool) -> ([T; 2], [T; 2]) {
    let l = |v: f64| T::lit(v);
    let add = |y: [T; 2], ks: &[([T; 2], f64)]| -> [T; 2] {
        let mut r = y;
        for (k, a) in ks {
            r[0] += h * l(*a) * k[0];
            r[1] += h * l(*a) * k[1];
        }
        r
    };
    let k1 = p.rhs(t, y, m, sep);
    let k2 = p.rhs(t + h * l(0.2), add(y, &[(k1, 0.2)]), m, sep);
    let k3 = p.rhs(t + h * l(0.3), add(y, &[(k1, 3.0 / 40.0), (k2, 9.0 / 40.0)]), m, sep);
    let k4 = p.rhs(t + h * l(0.8), add(y, &[(k1, 44.0 / 45.0), (k2, -56.0 / 15.0), (k3, 32.0 / 9.0)]), m, sep);
    let k5 = p.rhs(
        t + h * l(8.0 / 9.0),
        add(y, &[(k1, 19372.0 / 6561.0), (k2, -25360.0 / 2187.0), (k3, 64448.0 / 6561.0), (k4, -212.0 / 729.0)]),
        m,
        sep,
    );
    let k6 = p.rhs(
        t + h,
        add(y, &[(k1, 9017.0 / 3168.0), (k2, -355.0 / 33.0), (k3, 46732.0 / 5247.0), (k4, 49.0 / 176.0), (k5, -5103.0 / 18656.0)]),
        m,
        sep,
    );
    let b = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
    let y5 = add(y, &[(k1, b[0]), (k3, b[2]), (k4, b[3]), (k5, b[4]), (k6, b[5])]);
    let k7 = p.rhs(t + h, y5, m, sep);
    let bs = [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];
    let ks = [k1, k2, k3, k4, k5, k6, k7];
    let mut err = [T::zero(); 2];
    for i in 0..7 {
        let d = l((if i < 6 { b[i] } else { 0.0 }) - bs[i]);
        err[0] += h * d * ks[i][0];
        err[1] += h * d * ks[i][1];
    }
    (y5, err)
}

/// Dominant oscillation frequency (Hz) from the mean crossings of a uniformly sampled series.
pub fn oscillation_frequency<T: Real>(t: &[T], x: &[T]) -> Option<f64> {
    let c = upward_crossings(t, x);
    if c.len() < 2 {
        return None;
    }
    Some((c.len() - 1) as f64 / (c[c.len() - 1] - c[0]))
}

fn upward_crossings<T: Real>(t: &[T], x: &[T]) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return Vec::new();
    }
    let mean = x.iter().fold(0.0, |s, v| s + v.to_f64_lossy()) / n as f64;
    let mut out = Vec::new();
    for i in 1..n {
        let (a, b) = (x[i - 1].to_f64_lossy() - mean, x[i].to_f64_lossy() - mean);
        if a < 0.0 && b >= 0.0 {
            let (ta, tb) = (t[i - 1].to_f64_lossy(), t[i].to_f64_lossy());
            out.push(ta + (tb - ta) * (-a) / (b - a));
        }
    }
    out
}

/// Number of complete oscillation periods whose peak-to-trough swing exceeds `min_swing`.
pub fn count_periods<T: Real>(t: &[T], x: &[T], min_swing: f64) -> usize {
    let c = upward_crossings(t, x);
    let mut count = 0;
    for w in c.windows(2) {
        let (lo, hi) = x.iter().zip(t).filter(|(_, ti)| {
            let tv = ti.to_f64_lossy();
            tv >= w[0] && tv <= w[1]
        })
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (v, _)| {
            let v = v.to_f64_lossy();
            (lo.min(v), hi.max(v))
        });
        if hi - lo >= min_swing {
            count += 1;
        }
    }
    count
}

/// Amplitude of the least-squares sinusoid at `freq_hz` (with offset) fitted to the series.
pub fn lockin_amplitude<T: Real>(t: &[T], x: &[T], freq_hz: f64) -> f64 {
    let w = 2.0 * std::f64::consts::PI * freq_hz;
    let mut nm = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    for (ti, xi) in t.iter().zip(x) {
        let tv = ti.to_f64_lossy();
        let f = [(w * tv).cos(), (w * tv).sin(), 1.0];
        for r in 0..3 {
            rhs[r] += f[r] * xi.to_f64_lossy();
            for c in 0..3 {
                nm[r][c] += f[r] * f[c];
            }
        }
    }
    match crate::linalg::inverse3(&nm) {
        Some(inv) => {
            let a: f64 = (0..3).map(|c| inv[0][c] * rhs[c]).sum();
            let b: f64 = (0..3).map(|c| inv[1][c] * rhs[c]).sum();
            a.hypot(b)
        }
        None => 0.0,
    }
}

/// Columns `t, rho_m1, rho_0, rho_p1, y_m1, y_p1, lambda`.
pub fn write_trajectory_csv<T: Real, W: std::io::Write>(out: W, traj: &[TrajectoryPoint<T>]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t_s", "rho_m1", "rho_0", "rho_p1", "y_m1_m", "y_p1_m", "lambda"])?;
    for p in traj {
        let s = &p.state;
        w.write_record([
            format!("{}", p.t),
            format!("{:e}", s.rho_m1.to_f64_lossy()),
            format!("{:e}", s.rho_0.to_f64_lossy()),
            format!("{:e}", s.rho_p1.to_f64_lossy()),
            format!("{:e}", s.y_m1.to_f64_lossy()),
            format!("{:e}", s.y_p1.to_f64_lossy()),
            format!("{:e}", p.overlap.to_f64_lossy()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(traj: &[TrajectoryPoint<f64>]) -> (Vec<f64>, Vec<f64>) {
        (traj.iter().map(|p| p.t).collect(), traj.iter().map(|p| p.state.rho_0).collect())
    }

    #[test]
    fn initial_state() {
        let s = SpinorState::<f64>::initial_after_pi2();
        assert_eq!((s.rho_m1, s.rho_0, s.rho_p1), (0.25, 0.5, 0.25));
        assert_eq!(s.magnetization(), 0.0);
        assert_eq!(s.total(), 1.0);
    }

    #[test]
    fn magnetization_examples() {
        assert_eq!(magnetization([0.25, 0.5, 0.25]), 0.0);
        assert_eq!(magnetization([0.0, 0.0, 1.0]), 1.0);
        assert!((magnetization([0.3, 0.5, 0.2f64]) + 0.1).abs() < 1e-15);
    }

    #[test]
    fn no_mixing_without_interaction() {
        let p = SpinMixParams { c: 0.0, ..SpinMixParams::rb87_default() };
        let tr = evolve_sma(&SpinorState::initial_after_pi2(), &p, 0.5, 1e-3, false).unwrap();
        assert!(tr.iter().all(|q| (q.state.rho_0 - 0.5).abs() < 1e-14));
    }

    #[test]
    fn conserved_quantities_over_one_second() {
        let p = SpinMixParams::rb87_default();
        let s0 = SpinorState::initial_after_pi2();
        let tr = evolve_sma(&s0, &p, 1.0, 1e-3, false).unwrap();
        let e0 = tr[0].energy;
        for q in &tr {
            assert!((q.state.magnetization() - s0.magnetization()).abs() <= 1e-12);
            assert!((q.state.total() - 1.0).abs() <= 1e-9);
            assert!(((q.energy - e0) / e0).abs() <= 1e-8, "{}", (q.energy - e0) / e0);
        }
    }

    #[test]
    fn pair_creation_symmetry() {
        let p = SpinMixParams::rb87_default();
        let tr = evolve_sma(&SpinorState::initial_after_pi2(), &p, 0.2, 1e-3, false).unwrap();
        let a = &tr[0].state;
        for q in &tr {
            let d0 = q.state.rho_0 - a.rho_0;
            assert!((q.state.rho_p1 - a.rho_p1 + d0 / 2.0).abs() < 1e-14);
            assert!((q.state.rho_m1 - a.rho_m1 + d0 / 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn oscillates_at_about_twice_q() {
        let p = SpinMixParams::rb87_default();
        let tr = evolve_sma(&SpinorState::initial_after_pi2(), &p, 0.4, 5e-4, false).unwrap();
        let (t, r) = series(&tr);
        let f = oscillation_frequency(&t, &r).unwrap();
        assert!(f > 15.0 && f < 25.0, "{f}");
        assert!(count_periods(&t, &r, 0.01) >= 3);
    }

    #[test]
    fn too_coarse_output_step_is_rejected() {
        let p = SpinMixParams::rb87_default();
        let e = evolve_sma(&SpinorState::initial_after_pi2(), &p, 0.1, 5e-3, false).unwrap_err();
        assert!(matches!(e, SpinMixError::StepTooLarge { .. }));
    }

    #[test]
    fn zero_gradient_keeps_centroids_static() {
        let p = SpinMixParams::rb87_default();
        for k in 0..50 {
            let t = k as f64 * 0.01;
            assert_eq!(p.centroid(t).0, 0.0);
            assert_eq!(p.overlap(t), 1.0);
        }
    }

    /// Direct RK4 integration of y'' = a - w^2 y - 2 z w y'.
    fn oscillator_oracle(a: f64, w: f64, z: f64, t_end: f64) -> (f64, f64) {
        let n = 200_000;
        let h = t_end / n as f64;
        let f = |y: f64, v: f64| (v, a - w * w * y - 2.0 * z * w * v);
        let (mut y, mut v) = (0.0, 0.0);
        for _ in 0..n {
            let (k1y, k1v) = f(y, v);
            let (k2y, k2v) = f(y + 0.5 * h * k1y, v + 0.5 * h * k1v);
            let (k3y, k3v) = f(y + 0.5 * h * k2y, v + 0.5 * h * k2v);
            let (k4y, k4v) = f(y + h * k3y, v + h * k3v);
            y += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
            v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        }
        (y, v)
    }

    #[test]
    fn centroid_matches_oscillator_oracle() {
        for z in [0.3, 1.0, 1.7] {
            let p = SpinMixParams { gradient_g_per_cm: 0.132, damping_ratio: z, ..SpinMixParams::rb87_default() };
            for t in [0.01, 0.05, 0.2] {
                let (y, v) = oscillator_oracle(p.acceleration(), p.trap_frequency, z, t);
                let (ya, va) = p.centroid(t);
                assert!((ya - y).abs() < 1e-12 * (1.0 + y.abs() * 1e6), "{z} {t} {ya} {y}");
                assert!((va - v).abs() < 1e-9, "{z} {t} {va} {v}");
            }
        }
    }

    #[test]
    fn weak_gradient_keeps_overlap() {
        let p = SpinMixParams { gradient_g_per_cm: 0.005, ..SpinMixParams::rb87_default() };
        for k in 0..=400 {
            assert!(p.overlap(k as f64 * 1e-3) > 0.9);
        }
    }

    #[test]
    fn strong_gradient_suppresses_oscillation() {
        let base = SpinMixParams::rb87_default();
        let s0 = SpinorState::initial_after_pi2();
        let (t, r) = series(&evolve_sma(&s0, &base, 0.4, 5e-4, true).unwrap());
        let f0 = oscillation_frequency(&t, &r).unwrap();
        let a0 = lockin_amplitude(&t, &r, f0);
        let strong = SpinMixParams { gradient_g_per_cm: 0.132, ..base };
        let (t1, r1) = series(&evolve_sma(&s0, &strong, 0.4, 5e-4, true).unwrap());
        let a1 = lockin_amplitude(&t1, &r1, f0);
        assert!(a0 / a1 > 5.0, "{a0} {a1}");
    }

    #[test]
    fn trajectory_csv_has_header_and_rows() {
        let p = SpinMixParams::rb87_default();
        let tr = evolve_sma(&SpinorState::initial_after_pi2(), &p, 0.01, 1e-3, true).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &tr).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t_s,rho_m1,rho_0,rho_p1,y_m1_m,y_p1_m,lambda"));
        assert_eq!(text.lines().count(), tr.len() + 1);
    }

    #[test]
    fn single_precision_runs() {
        let p = SpinMixParams::<f32> {
            q: 62.83,
            c: -20.1,
            gradient_g_per_cm: 0.0,
            trap_frequency: 62.83,
            damping_ratio: 1.0,
            tf_radius: 13e-6,
            mass_kg: 1.443e-25,
            g_f: -0.5,
        };
        let tol = Tolerances { rtol: 1e-5, atol: 1e-7, max_steps: 1_000_000 };
        let tr = evolve_with(&SpinorState::<f32>::initial_after_pi2(), &p, 0.1, 1e-3, false, tol).unwrap();
        assert!(tr.iter().all(|q| (q.state.total() - 1.0).abs() < 1e-6));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn invariants_hold_for_random_states(r0 in 0.05f64..0.9, mf in -0.9f64..0.9, th in -3.0f64..3.0,
                                             q in 0.0f64..100.0, c in -40.0f64..40.0) {
            let m = mf * (1.0 - r0);
            let s = SpinorState::from_rho0_m(r0, m, th).unwrap();
            let p = SpinMixParams { q, c, ..SpinMixParams::rb87_default() };
            let tr = evolve_sma(&s, &p, 0.1, 5e-4, false).unwrap();
            let e0 = tr[0].energy;
            for pt in &tr {
                prop_assert!((pt.state.magnetization() - m).abs() <= 1e-12);
                prop_assert!((pt.state.total() - 1.0).abs() <= 1e-9);
                prop_assert!((pt.energy - e0).abs() <= 1e-8 * (e0.abs() + q + c.abs()));
            }
        }

        #[test]
        fn amplitude_is_monotone_in_gradient(g1 in 0.0f64..0.15, dg in 0.0f64..0.05) {
            let base = SpinMixParams::rb87_default();
            let s0 = SpinorState::initial_after_pi2();
            let amp = |g: f64| {
                let p = SpinMixParams { gradient_g_per_cm: g, ..base };
                let (t, r) = series(&evolve_sma(&s0, &p, 0.4, 1e-3, true).unwrap());
                lockin_amplitude(&t, &r, 2.0 * base.q / (2.0 * std::f64::consts::PI))
            };
            prop_assert!(amp(g1 + dg) <= amp(g1) * (1.0 + 1e-9) + 1e-12);
        }
    }
}
