//! Weighted straight-line regression with chi-square diagnostics.

use super::ProtocolError;
use crate::scalar::Real;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit<T> {
    pub slope: T,
    pub intercept: T,
    pub slope_sigma: T,
    pub intercept_sigma: T,
    pub covariance: T,
    pub chi2: T,
    pub dof: usize,
    /// Upper-tail probability of `chi2`; NaN for unweighted fits.
    pub p_value: f64,
    pub weighted: bool,
}

/// Chi-square probability below which residuals are flagged as non-linear.
pub const CHI2_FLAG_P: f64 = 1e-3;

impl<T: Real> LinearFit<T> {
    pub fn predict(&self, x: T) -> T {
        self.intercept + self.slope * x
    }

    /// Root `x0 = -intercept / slope` and its delta-method standard error.
    pub fn root(&self) -> (T, T) {
        let x0 = -self.intercept / self.slope;
        let var = (self.intercept_sigma * self.intercept_sigma
            + x0 * x0 * self.slope_sigma * self.slope_sigma
            + T::two() * x0 * self.covariance)
            / (self.slope * self.slope);
        (x0, var.max(T::zero()).sqrt())
    }

    pub fn nonlinear(&self) -> bool {
        self.weighted && self.p_value < CHI2_FLAG_P
    }
}

/// Weighted least squares with `w = 1/sigma^2`.
///
/// When any `sigma` is missing, non-finite or non-positive the fit is
/// unweighted and the parameter errors come from the residual scatter.
pub fn linear_fit<T: Real>(x: &[T], y: &[T], sigma: Option<&[T]>) -> Result<LinearFit<T>, ProtocolError> {
    let n = x.len();
    if n != y.len() || sigma.is_some_and(|s| s.len() != n) {
        return Err(ProtocolError::Input("regression inputs differ in length".into()));
    }
    if n < 3 {
        return Err(ProtocolError::Input(format!("regression needs at least 3 points, got {n}")));
    }
    let usable = sigma.filter(|s| s.iter().all(|v| v.is_finite() && *v > T::zero()));
    let weighted = usable.is_some();
    let w: Vec<T> = match usable {
        Some(s) => s.iter().map(|v| T::one() / (*v * *v)).collect(),
        None => vec![T::one(); n],
    };
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (T::zero(), T::zero(), T::zero(), T::zero(), T::zero());
    for i in 0..n {
        sw += w[i];
        sx += w[i] * x[i];
        sy += w[i] * y[i];
    }
    // centred sums for stability
    let xm = sx / sw;
    let ym = sy / sw;
    for i in 0..n {
        let dx = x[i] - xm;
        sxx += w[i] * dx * dx;
        sxy += w[i] * dx * (y[i] - ym);
    }
    if !(sxx > T::zero()) {
        return Err(ProtocolError::Input("regression abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let mut chi2 = T::zero();
    for i in 0..n {
        let r = y[i] - intercept - slope * x[i];
        chi2 += w[i] * r * r;
    }
    let dof = n - 2;
    let scale = if weighted { T::one() } else { chi2 / T::lit(dof as f64) };
    let var_b = scale / sxx;
    let var_a = scale * (T::one() / sw + xm * xm / sxx);
    let cov = -scale * xm / sxx;
    let p_value = if weighted {
        ChiSquared::new(dof as f64).map(|d| d.sf(chi2.to_f64_lossy())).unwrap_or(f64::NAN)
    } else {
        f64::NAN
    };
    Ok(LinearFit {
        slope,
        intercept,
        slope_sigma: var_b.sqrt(),
        intercept_sigma: var_a.sqrt(),
        covariance: cov,
        chi2,
        dof,
        p_value,
        weighted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn exact_line() {
        let x = [0.0f64, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = linear_fit(&x, &y, Some(&[0.1; 4])).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14 && (f.intercept - 1.0).abs() < 1e-14);
        assert!(f.chi2 < 1e-20);
        assert!((f.root().0 + 0.5).abs() < 1e-14);
    }

    #[test]
    fn textbook_weighted_errors() {
        // equal sigmas: var(b) = sigma^2 / sum (x - xbar)^2
        let x = [0.0, 1.0, 2.0, 3.0, 4.0];
        let y = [0.1, 0.9, 2.2, 2.8, 4.1];
        let f = linear_fit(&x, &y, Some(&[0.2; 5])).unwrap();
        assert!((f.slope_sigma - (0.04f64 / 10.0).sqrt()).abs() < 1e-14);
        assert!((f.intercept_sigma - (0.04f64 * (1.0 / 5.0 + 4.0 / 10.0)).sqrt()).abs() < 1e-14);
        assert!(f.weighted && f.p_value > 0.0 && f.p_value <= 1.0);
    }

    #[test]
    fn falls_back_to_unweighted() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [0.0, 1.1, 1.9, 3.2];
        let f = linear_fit(&x, &y, Some(&[0.1, 0.0, 0.1, 0.1])).unwrap();
        assert!(!f.weighted);
        assert!(f.slope_sigma > 0.0);
        assert!(!f.nonlinear());
    }

    #[test]
    fn curvature_is_flagged() {
        let x: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let f = linear_fit(&x, &y, Some(&[0.1; 10])).unwrap();
        assert!(f.nonlinear());
    }

    #[test]
    fn bad_inputs() {
        assert!(linear_fit(&[1.0, 2.0], &[1.0, 2.0], None).is_err());
        assert!(linear_fit(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0], None).is_err());
        assert!(linear_fit(&[1.0, 2.0, 3.0], &[1.0, 2.0], None).is_err());
    }

    #[test]
    fn monte_carlo_slope_pull_is_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let x: Vec<f64> = (0..9).map(|k| -1.0 + 0.25 * k as f64).collect();
        let mut pulls = Vec::new();
        for _ in 0..2000 {
            let y: Vec<f64> = x.iter().map(|v| 0.5 + 1.7 * v + noise.sample(&mut rng)).collect();
            let f = linear_fit(&x, &y, Some(&[0.3; 9])).unwrap();
            pulls.push((f.slope - 1.7) / f.slope_sigma);
        }
        let m = pulls.iter().sum::<f64>() / pulls.len() as f64;
        let v = pulls.iter().map(|p| (p - m) * (p - m)).sum::<f64>() / (pulls.len() - 1) as f64;
        assert!(m.abs() < 0.06 && (v.sqrt() - 1.0).abs() < 0.05, "{m} {v}");
    }

    proptest! {
        #[test]
        fn offset_in_y_only_moves_intercept(c in -5.0f64..5.0, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise = Normal::new(0.0, 0.1).unwrap();
            let x: Vec<f64> = (0..7).map(|k| k as f64).collect();
            let y: Vec<f64> = x.iter().map(|v| 2.0 * v + noise.sample(&mut rng)).collect();
            let y2: Vec<f64> = y.iter().map(|v| v + c).collect();
            let f1 = linear_fit(&x, &y, Some(&[0.1; 7])).unwrap();
            let f2 = linear_fit(&x, &y2, Some(&[0.1; 7])).unwrap();
            prop_assert!((f1.slope - f2.slope).abs() < 1e-10);
            prop_assert!((f2.intercept - f1.intercept - c).abs() < 1e-10);
        }
    }
}
