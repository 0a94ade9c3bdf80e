//! Polarization states in the circular basis and Jones-matrix retarders.
//!
//! Frame: beam along +z, transverse axes x (horizontal) and y (vertical),
//! `eps_L = (x + i y)/sqrt2`, `eps_R = (x - i y)/sqrt2`. Retarder axes are
//! measured counter-clockwise from x. With these choices `i eps* x eps = -C z`
//! where `C = |a_L|^2 - |a_R|^2` is the circularity.

use crate::scalar::Real;
use num_complex::Complex;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum PolError {
    #[error("polarization amplitudes must be finite and not both zero")]
    ZeroAmplitude,
    #[error("no zero of the circularity in the search interval")]
    NoRoot,
}

type C<T> = Complex<T>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizationState<T> {
    /// Amplitude on `eps_L`.
    pub l: Complex<T>,
    /// Amplitude on `eps_R`.
    pub r: Complex<T>,
}

impl<T: Real> PolarizationState<T> {
    /// Normalised state from circular amplitudes.
    pub fn from_circular(l: Complex<T>, r: Complex<T>) -> Result<Self, PolError> {
        let n = (l.norm_sqr() + r.norm_sqr()).sqrt();
        if !(n > T::zero()) || !n.is_finite() {
            return Err(PolError::ZeroAmplitude);
        }
        let inv = T::one() / n;
        Ok(Self { l: l * inv, r: r * inv })
    }

    /// `sin(theta + pi/4) eps_L + exp(2 i phi) cos(theta + pi/4) eps_R`.
    pub fn from_theta_phi(theta: T, phi: T) -> Self {
        let q = T::FRAC_PI_4();
        let l = C::new((theta + q).sin(), T::zero());
        let r = C::from_polar((theta + q).cos(), T::two() * phi);
        Self { l, r }
    }

    /// Normalised state from linear (x, y) Jones components.
    pub fn from_linear(ex: Complex<T>, ey: Complex<T>) -> Result<Self, PolError> {
        let s = T::FRAC_1_SQRT_2();
        let i = C::new(T::zero(), T::one());
        Self::from_circular((ex - i * ey) * s, (ex + i * ey) * s)
    }

    /// Linear polarization at `angle` from x.
    pub fn linear(angle: T) -> Self {
        Self::from_theta_phi(T::zero(), angle)
    }

    pub fn horizontal() -> Self {
        Self::linear(T::zero())
    }

    pub fn vertical() -> Self {
        Self::linear(T::FRAC_PI_2())
    }

    pub fn left() -> Self {
        Self { l: C::new(T::one(), T::zero()), r: C::new(T::zero(), T::zero()) }
    }

    pub fn right() -> Self {
        Self { l: C::new(T::zero(), T::zero()), r: C::new(T::one(), T::zero()) }
    }

    /// Jones components (E_x, E_y).
    pub fn linear_components(&self) -> (Complex<T>, Complex<T>) {
        let s = T::FRAC_1_SQRT_2();
        let i = C::new(T::zero(), T::one());
        ((self.l + self.r) * s, i * (self.l - self.r) * s)
    }

    pub fn circularity(&self) -> T {
        self.l.norm_sqr() - self.r.norm_sqr()
    }

    /// Ellipticity parameter with `C = sin 2 theta`, in [-pi/4, pi/4].
    pub fn theta(&self) -> T {
        T::half() * self.circularity().max(-T::one()).min(T::one()).asin()
    }

    /// Orientation of the ellipse major axis from x, in [0, pi).
    pub fn phi(&self) -> T {
        let rel = self.r * self.l.conj();
        let mut p = T::half() * rel.im.atan2(rel.re);
        if p < T::zero() {
            p += T::PI();
        }
        p
    }

    pub fn norm_sq(&self) -> T {
        self.l.norm_sqr() + self.r.norm_sqr()
    }

    /// `i eps* x eps` expressed in the beam frame (x, y, z).
    pub fn spin_vector(&self) -> [T; 3] {
        let (ex, ey) = self.linear_components();
        let i = C::new(T::zero(), T::one());
        let e = [ex, ey, C::new(T::zero(), T::zero())];
        let c = [e[0].conj(), e[1].conj(), e[2].conj()];
        let cross = [
            c[1] * e[2] - c[2] * e[1],
            c[2] * e[0] - c[0] * e[2],
            c[0] * e[1] - c[1] * e[0],
        ];
        [(i * cross[0]).re, (i * cross[1]).re, (i * cross[2]).re]
    }

    /// Overlap modulus `|<self|other>|`, insensitive to global phase.
    pub fn overlap(&self, other: &Self) -> T {
        (self.l.conj() * other.l + self.r.conj() * other.r).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RetarderKind {
    QuarterWave,
    HalfWave,
    Window,
}

/// Linear retarder: the component along `fast_axis` leads the orthogonal one by `retardance`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Retarder<T> {
    pub retardance: T,
    pub fast_axis: T,
    pub kind: RetarderKind,
}

impl<T: Real> Retarder<T> {
    pub fn quarter_wave(fast_axis: T) -> Self {
        Self { retardance: T::FRAC_PI_2(), fast_axis, kind: RetarderKind::QuarterWave }
    }

    pub fn half_wave(fast_axis: T) -> Self {
        Self { retardance: T::PI(), fast_axis, kind: RetarderKind::HalfWave }
    }

    pub fn window(retardance: T, fast_axis: T) -> Self {
        Self { retardance, fast_axis, kind: RetarderKind::Window }
    }

    /// Birefringent cell window with retardance `phi_k` whose slow axis lies at `theta_k`.
    pub fn cell(phi_k: T, theta_k: T) -> Self {
        Self::window(phi_k, theta_k + T::FRAC_PI_2())
    }

    /// Jones matrix in the (x, y) basis.
    pub fn jones(&self) -> [[Complex<T>; 2]; 2] {
        let (s, c) = self.fast_axis.sin_cos();
        let e = C::from_polar(T::one(), self.retardance);
        let one = C::new(T::one(), T::zero());
        let cc = C::new(c * c, T::zero());
        let ss = C::new(s * s, T::zero());
        let sc = C::new(s * c, T::zero());
        [[cc + e * ss, sc * (one - e)], [sc * (one - e), ss + e * cc]]
    }

    pub fn apply(&self, state: &PolarizationState<T>) -> PolarizationState<T> {
        let m = self.jones();
        let (ex, ey) = state.linear_components();
        let ox = m[0][0] * ex + m[0][1] * ey;
        let oy = m[1][0] * ex + m[1][1] * ey;
        // unitary, so the norm is preserved up to roundoff
        PolarizationState::from_linear(ox, oy).unwrap_or(*state)
    }
}

/// Apply retarders in order of traversal.
pub fn propagate<T: Real>(input: &PolarizationState<T>, elements: &[Retarder<T>]) -> PolarizationState<T> {
    elements.iter().fold(*input, |s, r| r.apply(&s))
}

/// Circularity after a QWP at `theta` followed by the cell, for vertical input light.
///
/// Closed form of the Jones product.
pub fn circularity_after_cell<T: Real>(theta: T, phi_k: T, theta_k: T) -> T {
    let two = T::two();
    phi_k.cos() * (two * theta).sin() + phi_k.sin() * (two * theta).cos() * (two * (theta - theta_k)).sin()
}

/// Same quantity evaluated by propagating Jones vectors through QWP and cell.
pub fn circularity_after_cell_jones<T: Real>(theta: T, phi_k: T, theta_k: T) -> T {
    let s = propagate(
        &PolarizationState::vertical(),
        &[Retarder::quarter_wave(theta), Retarder::cell(phi_k, theta_k)],
    );
    s.circularity()
}

fn bisect<T: Real, F: Fn(T) -> T>(f: &F, mut a: T, mut b: T, tol: T) -> T {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = T::half() * (a + b);
        let fm = f(m);
        if fm == T::zero() || (b - a).abs() < tol {
            return m;
        }
        if (fa < T::zero()) == (fm < T::zero()) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    T::half() * (a + b)
}

/// QWP angle, nearest zero, at which the circularity after the cell vanishes.
pub fn nulling_angle<T: Real>(phi_k: T, theta_k: T) -> Result<T, PolError> {
    let f = |t: T| circularity_after_cell(t, phi_k, theta_k);
    let n = 720;
    let lo = -T::FRAC_PI_4();
    let step = T::FRAC_PI_2() / T::lit(n as f64);
    let mut best: Option<(T, T, T)> = None;
    let mut a = lo;
    let mut fa = f(a);
    for k in 1..=n {
        let b = lo + step * T::lit(k as f64);
        let fb = f(b);
        if fa == T::zero() || (fa < T::zero()) != (fb < T::zero()) {
            let mid = T::half() * (a + b);
            if best.map_or(true, |(_, _, m)| mid.abs() < m.abs()) {
                best = Some((a, b, mid));
            }
        }
        a = b;
        fa = fb;
    }
    let (a, b, _) = best.ok_or(PolError::NoRoot)?;
    let tol = T::epsilon() * T::lit(4.0);
    let mut t = bisect(&f, a, b, tol);
    // one Newton polish with a centred derivative
    let h = T::lit(1e-6).max(T::epsilon().sqrt());
    let d = (f(t + h) - f(t - h)) / (T::two() * h);
    if d != T::zero() {
        let tn = t - f(t) / d;
        if tn >= a && tn <= b && f(tn).abs() <= f(t).abs() {
            t = tn;
        }
    }
    Ok(t)
}

/// QWP fast-axis angle in [0, pi) that turns `input` into linear polarization.
pub fn linear_qwp_angle<T: Real>(input: &PolarizationState<T>) -> Result<T, PolError> {
    let f = |a: T| Retarder::quarter_wave(a).apply(input).circularity();
    let n = 360;
    let step = T::PI() / T::lit(n as f64);
    let mut a = T::zero();
    let mut fa = f(a);
    if fa.abs() < T::epsilon() * T::lit(8.0) {
        return Ok(a);
    }
    for k in 1..=n {
        let b = step * T::lit(k as f64);
        let fb = f(b);
        if fb.abs() < T::epsilon() * T::lit(8.0) {
            return Ok(b);
        }
        if (fa < T::zero()) != (fb < T::zero()) {
            return Ok(bisect(&f, a, b, T::epsilon() * T::lit(4.0)));
        }
        a = b;
        fa = fb;
    }
    Err(PolError::NoRoot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn c64(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn basis_states_have_expected_circularity() {
        assert!((PolarizationState::<f64>::left().circularity() - 1.0).abs() < 1e-15);
        assert!((PolarizationState::<f64>::right().circularity() + 1.0).abs() < 1e-15);
        assert!(PolarizationState::<f64>::horizontal().circularity().abs() < 1e-15);
        let (ex, ey) = PolarizationState::<f64>::horizontal().linear_components();
        assert!((ex.norm() - 1.0).abs() < 1e-15 && ey.norm() < 1e-15);
    }

    #[test]
    fn spin_vector_is_minus_c_along_k() {
        let s = PolarizationState::<f64>::from_theta_phi(0.3, 1.1);
        let v = s.spin_vector();
        assert!(v[0].abs() < 1e-15 && v[1].abs() < 1e-15);
        assert!((v[2] + s.circularity()).abs() < 1e-14);
    }

    #[test]
    fn qwp_on_vertical_light_gives_sin_two_theta() {
        for t in [-0.7f64, -0.2, 0.0, 0.1, 0.5, 1.3] {
            let out = Retarder::quarter_wave(t).apply(&PolarizationState::vertical());
            assert!((out.circularity() - (2.0 * t).sin()).abs() < 1e-14);
        }
    }

    #[test]
    fn qwp_at_45_degrees_makes_circular_light() {
        let out = Retarder::quarter_wave(FRAC_PI_4).apply(&PolarizationState::vertical());
        assert!((out.circularity() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn half_wave_plate_rotates_linear_polarization() {
        let out = Retarder::half_wave(0.2f64).apply(&PolarizationState::horizontal());
        assert!(out.circularity().abs() < 1e-14);
        assert!((out.phi() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn closed_form_circularity_equals_jones_chain_example() {
        let (t, p, tk) = (0.3f64, 0.05, 0.8);
        assert!((circularity_after_cell(t, p, tk) - circularity_after_cell_jones(t, p, tk)).abs() < 1e-14);
    }

    #[test]
    fn nulling_angle_without_birefringence_is_zero() {
        assert!(nulling_angle(0.0f64, 0.4).unwrap().abs() < 1e-14);
    }

    #[test]
    fn nulling_angle_small_retardance_oracle() {
        // C ~ 2 theta (1 + phi_k cos 2 theta_k) - phi_k sin 2 theta_k near theta = 0
        let (p, tk) = (1e-3f64, 0.6);
        let t = nulling_angle(p, tk).unwrap();
        let first = 0.5 * p * (2.0 * tk).sin();
        let second = first * (1.0 - p * (2.0 * tk).cos());
        assert!((t - first).abs() < 2.0 * p * p);
        assert!((t - second).abs() < 10.0 * p * p * p);
    }

    #[test]
    fn theta_phi_round_trip_example() {
        let s = PolarizationState::from_theta_phi(0.2f64, 2.0);
        assert!((s.theta() - 0.2).abs() < 1e-12);
        assert!((s.phi() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_amplitudes_are_rejected() {
        assert_eq!(
            PolarizationState::<f64>::from_circular(c64(0.0, 0.0), c64(0.0, 0.0)),
            Err(PolError::ZeroAmplitude)
        );
    }

    #[test]
    fn f32_chain_agrees_with_f64() {
        let a = circularity_after_cell_jones(0.3f32, 0.05, 0.8) as f64;
        let b = circularity_after_cell(0.3f64, 0.05, 0.8);
        assert!((a - b).abs() < 1e-5);
    }

    fn state_strategy() -> impl Strategy<Value = PolarizationState<f64>> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
            .prop_filter("non-zero", |(a, b, c, d)| a * a + b * b + c * c + d * d > 1e-3)
            .prop_map(|(a, b, c, d)| PolarizationState::from_circular(c64(a, b), c64(c, d)).unwrap())
    }

    proptest! {
        #[test]
        fn retarders_preserve_norm(s in state_strategy(), d in -PI..PI, ax in 0.0..PI) {
            let out = Retarder::window(d, ax).apply(&s);
            prop_assert!((out.norm_sq() - 1.0).abs() < 1e-12);
            let m = Retarder::window(d, ax).jones();
            // unitarity of the raw matrix
            for i in 0..2 {
                for j in 0..2 {
                    let v = m[0][i].conj() * m[0][j] + m[1][i].conj() * m[1][j];
                    let e = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((v - c64(e, 0.0)).norm() < 1e-12);
                }
            }
        }

        #[test]
        fn circularity_is_sin_two_theta(t in -FRAC_PI_4..FRAC_PI_4, p in 0.0..PI) {
            let s = PolarizationState::from_theta_phi(t, p);
            prop_assert!((s.circularity() - (2.0 * t).sin()).abs() < 1e-12);
            prop_assert!((s.theta() - t).abs() < 1e-6);
        }

        #[test]
        fn circularity_bounded(s in state_strategy()) {
            prop_assert!(s.circularity().abs() <= 1.0 + 1e-12);
        }

        #[test]
        fn quarter_wave_twice_is_half_wave(s in state_strategy(), ax in 0.0..PI) {
            let a = propagate(&s, &[Retarder::quarter_wave(ax), Retarder::quarter_wave(ax)]);
            let b = Retarder::half_wave(ax).apply(&s);
            prop_assert!((a.overlap(&b) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn cell_formula_matches_jones(t in -PI..PI, p in -0.5f64..0.5, tk in 0.0..PI) {
            let a = circularity_after_cell(t, p, tk);
            let b = circularity_after_cell_jones(t, p, tk);
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn a_linearising_qwp_angle_exists(s in state_strategy()) {
            let a = linear_qwp_angle(&s).unwrap();
            prop_assert!((0.0..PI + 1e-12).contains(&a));
            let out = Retarder::quarter_wave(a).apply(&s);
            prop_assert!(out.circularity().abs() < 1e-9);
        }

        #[test]
        fn nulling_angle_zeroes_circularity(p in -0.3f64..0.3, tk in 0.0..PI) {
            let t = nulling_angle(p, tk).unwrap();
            prop_assert!(t.abs() <= FRAC_PI_4);
            prop_assert!(circularity_after_cell(t, p, tk).abs() < 1e-12);
        }

        #[test]
        fn cell_axis_convention_matches_rotated_window(p in -0.5f64..0.5, tk in 0.0..FRAC_PI_2) {
            let s = PolarizationState::from_theta_phi(0.1, 0.3);
            let a = Retarder::cell(p, tk).apply(&s);
            let b = Retarder::window(-p, tk).apply(&s);
            prop_assert!((a.overlap(&b) - 1.0).abs() < 1e-12);
        }
    }
}
