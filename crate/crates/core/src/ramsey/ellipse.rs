//! Direct least-squares ellipse fitting with the conic constraint 4AC - B^2 = 1.
//!
//! The 6x6 scatter matrix is reduced to a 3x3 problem in the quadratic
//! coefficients (Halir-Flusser partition), and the constrained minimum is read
//! from a symmetric eigenproblem `M^{-1/2} C1 M^{-1/2}`. By default the scatter
//! matrix is first corrected for the second-moment bias of readout noise
//! (adjusted least squares), which otherwise pulls the phase towards pi/2.

use super::FitError;
use crate::linalg::{inverse3, matmul, matvec, symmetric_eigen, transpose, zeros, Mat};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};

/// `A x^2 + B x y + C y^2 + D x + E y + F = 0`, unit norm, `A + C > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Conic<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub d: T,
    pub e: T,
    pub f: T,
}

impl<T: Real> Conic<T> {
    pub fn from_array(v: [T; 6]) -> Self {
        Self { a: v[0], b: v[1], c: v[2], d: v[3], e: v[4], f: v[5] }
    }

    pub fn to_array(&self) -> [T; 6] {
        [self.a, self.b, self.c, self.d, self.e, self.f]
    }

    pub fn discriminant(&self) -> T {
        self.b * self.b - T::lit(4.0) * self.a * self.c
    }

    pub fn normalized(&self) -> Self {
        let v = self.to_array();
        let n = v.iter().fold(T::zero(), |s, &x| s + x * x).sqrt();
        let sign = if self.a + self.c < T::zero() { -T::one() } else { T::one() };
        let k = sign / n;
        Self::from_array(v.map(|x| x * k))
    }

    pub fn evaluate(&self, x: T, y: T) -> T {
        self.a * x * x + self.b * x * y + self.c * y * y + self.d * x + self.e * y + self.f
    }

    /// Conic traced by `(ca cos u, cb cos(u + dphi))`.
    pub fn two_interferometer(ca: T, cb: T, dphi: T) -> Self {
        let s = dphi.sin();
        Self {
            a: T::one() / (ca * ca),
            b: -T::two() * dphi.cos() / (ca * cb),
            c: T::one() / (cb * cb),
            d: T::zero(),
            e: T::zero(),
            f: -s * s,
        }
        .normalized()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EllipseFit<T> {
    pub conic: Conic<T>,
    /// Extracted |delta phi| in [0, pi].
    pub delta_phi: T,
    /// Jackknife standard error of `delta_phi`.
    pub uncertainty: T,
    /// Estimated per-axis readout noise; zero for the direct method.
    pub noise_rms: T,
    pub discriminant: T,
    /// Eigenvalue ratio of the normalised 6x6 scatter matrix.
    pub scatter_condition: T,
    pub n_points: usize,
}

/// `|delta phi| = arccos(-B / (2 sqrt(AC)))`.
pub fn phase_from_conic<T: Real>(conic: &Conic<T>) -> Result<T, FitError> {
    let ac = conic.a * conic.c;
    if !(ac > T::zero()) || !(conic.discriminant() < T::zero()) {
        return Err(FitError::NotAnEllipse { discriminant: conic.discriminant().to_f64_lossy() });
    }
    let cos = -conic.b / (T::two() * ac.sqrt());
    let margin = T::one() - cos.abs();
    if !(margin > T::lit(1e-12).max(T::epsilon() * T::lit(8.0))) {
        return Err(FitError::PhaseIndeterminate { cos: cos.to_f64_lossy() });
    }
    Ok(cos.acos())
}

/// Power sums `sum x^k y^l` over the points, `k + l <= 4`.
#[derive(Clone, Copy)]
struct Moments<T>([[T; 5]; 5]);

impl<T: Real> Moments<T> {
    fn zero() -> Self {
        Moments([[T::zero(); 5]; 5])
    }

    fn of(x: T, y: T) -> Self {
        let mut m = Self::zero();
        let mut xk = T::one();
        for k in 0..5 {
            let mut yl = T::one();
            for l in 0..(5 - k) {
                m.0[k][l] = xk * yl;
                yl = yl * y;
            }
            xk = xk * x;
        }
        m
    }

    fn add(&mut self, o: &Self, sign: T) {
        for k in 0..5 {
            for l in 0..(5 - k) {
                self.0[k][l] += sign * o.0[k][l];
            }
        }
    }

    /// Scatter matrix of the design `[x^2, xy, y^2, x, y, 1]` with the bias from
    /// independent Gaussian noise of variances `(vx, vy)` removed.
    fn scatter(&self, vx: T, vy: T) -> Mat<T, 6> {
        // x^a has expectation h_a(x), the scaled Hermite polynomial
        let three = T::lit(3.0);
        let herm = |v: T| -> [[T; 5]; 5] {
            [
                [T::one(), T::zero(), T::zero(), T::zero(), T::zero()],
                [T::zero(), T::one(), T::zero(), T::zero(), T::zero()],
                [-v, T::zero(), T::one(), T::zero(), T::zero()],
                [T::zero(), -three * v, T::zero(), T::one(), T::zero()],
                [three * v * v, T::zero(), -T::lit(6.0) * v, T::zero(), T::one()],
            ]
        };
        let (hx, hy) = (herm(vx), herm(vy));
        const EXP: [(usize, usize); 6] = [(2, 0), (1, 1), (0, 2), (1, 0), (0, 1), (0, 0)];
        let mut s = zeros::<T, 6>();
        for p in 0..6 {
            for q in p..6 {
                let (a, b) = (EXP[p].0 + EXP[q].0, EXP[p].1 + EXP[q].1);
                let mut acc = T::zero();
                for k in 0..=a {
                    if hx[a][k] == T::zero() {
                        continue;
                    }
                    for l in 0..=b {
                        if hy[b][l] != T::zero() {
                            acc += hx[a][k] * hy[b][l] * self.0[k][l];
                        }
                    }
                }
                s[p][q] = acc;
                s[q][p] = acc;
            }
        }
        s
    }
}

struct Reduced<T> {
    quad: [T; 3],
    lin: [T; 3],
}

fn split<T: Real>(s: &Mat<T, 6>) -> (Mat<T, 3>, Mat<T, 3>, Mat<T, 3>) {
    let mut s1 = zeros::<T, 3>();
    let mut s2 = zeros::<T, 3>();
    let mut s3 = zeros::<T, 3>();
    for i in 0..3 {
        for j in 0..3 {
            s1[i][j] = s[i][j];
            s2[i][j] = s[i][j + 3];
            s3[i][j] = s[i + 3][j + 3];
        }
    }
    (s1, s2, s3)
}

/// Schur complement on the quadratic block, and the map from quadratic to linear coefficients.
fn reduce<T: Real>(s: &Mat<T, 6>) -> Result<(Mat<T, 3>, Mat<T, 3>), FitError> {
    let (s1, s2, s3) = split(s);
    let s3i = inverse3(&s3).ok_or(FitError::Collinear)?;
    let mut t = matmul(&s3i, &transpose(&s2));
    for row in t.iter_mut() {
        for v in row.iter_mut() {
            *v = -*v;
        }
    }
    let mut m = s1;
    let s2t = matmul(&s2, &t);
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] += s2t[i][j];
        }
    }
    // symmetrise against roundoff
    for i in 0..3 {
        for j in (i + 1)..3 {
            let v = T::half() * (m[i][j] + m[j][i]);
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    Ok((m, t))
}

fn solve_scatter<T: Real>(s: &Mat<T, 6>) -> Result<Reduced<T>, FitError> {
    let (m, t) = reduce(s)?;
    let c1: Mat<T, 3> = [
        [T::zero(), T::zero(), T::two()],
        [T::zero(), -T::one(), T::zero()],
        [T::two(), T::zero(), T::zero()],
    ];
    let constraint = |a: &[T; 3]| T::lit(4.0) * a[0] * a[2] - a[1] * a[1];
    let (lam, vecs) = symmetric_eigen(&m);
    let lmax = lam[2].abs();
    if !(lmax > T::zero()) || !lmax.is_finite() {
        return Err(FitError::Numerical("reduced scatter matrix vanishes".into()));
    }
    let tiny = T::epsilon().sqrt() * T::lit(1e-2) * lmax;
    let quad = if lam[0] <= tiny {
        if lam[1] <= tiny {
            return Err(FitError::Numerical("fewer than five independent constraints on the conic".into()));
        }
        // data lie exactly on a conic
        let v = [vecs[0][0], vecs[1][0], vecs[2][0]];
        if !(constraint(&v) > T::zero()) {
            return Err(FitError::NotAnEllipse { discriminant: (-constraint(&v)).to_f64_lossy() });
        }
        v
    } else {
        let mut half_inv = zeros::<T, 3>();
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = T::zero();
                for k in 0..3 {
                    acc += vecs[i][k] * vecs[j][k] / lam[k].sqrt();
                }
                half_inv[i][j] = acc;
            }
        }
        let k = matmul(&matmul(&half_inv, &c1), &half_inv);
        let (mu, y) = symmetric_eigen(&k);
        if !(mu[2] > T::zero()) {
            return Err(FitError::Numerical("no admissible ellipse eigenvector".into()));
        }
        let yv = [y[0][2], y[1][2], y[2][2]];
        let v = matvec(&half_inv, &yv);
        if !(constraint(&v) > T::zero()) {
            return Err(FitError::NotAnEllipse { discriminant: (-constraint(&v)).to_f64_lossy() });
        }
        v
    };
    let lin = matvec(&t, &quad);
    Ok(Reduced { quad, lin })
}

/// Points in principal-axis coordinates scaled to unit variance; isotropic noise of
/// variance `s2` in the original coordinates has variances `s2 * w` per axis.
struct Whitened<T> {
    moments: Moments<T>,
    w: (T, T),
}

impl<T: Real> Whitened<T> {
    fn scatter(&self, s2: T) -> Mat<T, 6> {
        self.moments.scatter(s2 * self.w.0, s2 * self.w.1)
    }

    /// Smallest eigenvalue of the reduced corrected scatter, relative to the largest.
    fn singularity(&self, s2: T) -> Option<T> {
        let (r, _) = reduce(&self.scatter(s2)).ok()?;
        let (lam, _) = symmetric_eigen(&r);
        let scale = lam[2].abs();
        if scale > T::zero() && scale.is_finite() {
            Some(lam[0] / scale)
        } else {
            None
        }
    }

    /// Noise variance at which the corrected scatter matrix becomes singular, searched in `[lo, hi]`.
    /// Returns a value on the positive-definite side of the root, or `None` without a sign change.
    fn noise_variance(&self, lo: T, hi: T) -> Option<T> {
        let (mut a, mut b) = (lo, hi);
        let mut fa = self.singularity(a)?;
        let mut fb = self.singularity(b)?;
        if fa <= T::zero() {
            return if a == T::zero() { Some(a) } else { None };
        }
        if fb > T::zero() {
            return None;
        }
        // Illinois false position
        let tol = (hi - lo).abs() * T::epsilon() * T::lit(16.0);
        let mut side = 0i8;
        for _ in 0..200 {
            let c = (a * fb - b * fa) / (fb - fa);
            let c = if c > a && c < b { c } else { T::half() * (a + b) };
            let fc = match self.singularity(c) {
                Some(f) => f,
                None => break,
            };
            if fc > T::zero() {
                a = c;
                fa = fc;
                if side == 1 {
                    fb = fb * T::half();
                }
                side = 1;
            } else {
                b = c;
                fb = fc;
                if side == -1 {
                    fa = fa * T::half();
                }
                side = -1;
            }
            if b - a <= tol {
                break;
            }
        }
        Some(a)
    }

    /// Conic from the scatter with the estimated noise bias removed, and the noise variance.
    /// Falls back to the uncorrected scatter when no noise level makes it singular.
    /// A noise estimate as large as half the minor-axis variance means the ellipse is not
    /// resolved from a line: its phase is then reported as indeterminate.
    fn corrected(&self, minor: T, bracket: Option<(T, T)>) -> Result<(Reduced<T>, T), FitError> {
        let hi = minor * T::lit(0.98);
        let mut v = None;
        if let Some((a, b)) = bracket {
            let (a, b) = (a.max(T::zero()), b.min(hi));
            if a < b {
                v = self.noise_variance(a, b);
            }
        }
        if v.is_none() {
            v = self.noise_variance(T::zero(), hi);
        }
        match v {
            Some(v) if v >= T::half() * minor => Err(FitError::Unresolved {
                noise_rms: v.sqrt().to_f64_lossy(),
                minor_rms: minor.sqrt().to_f64_lossy(),
            }),
            Some(v) => match solve_scatter(&self.scatter(v)) {
                Ok(r) => Ok((r, v)),
                Err(_) => solve_scatter(&self.scatter(T::zero())).map(|r| (r, T::zero())),
            },
            None => solve_scatter(&self.scatter(T::zero())).map(|r| (r, T::zero())),
        }
    }
}

/// Conic in original coordinates from one in `x_n = M (x - m)`.
fn to_original<T: Real>(r: &Reduced<T>, mm: [[T; 2]; 2], m: (T, T)) -> Conic<T> {
    let [a, b, c] = r.quad;
    let [d, e, f] = r.lin;
    let q = [[a, T::half() * b], [T::half() * b, c]];
    // Q' = M^T Q M, l' = M^T l
    let mut qp = [[T::zero(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let mut acc = T::zero();
            for k in 0..2 {
                for l in 0..2 {
                    acc += mm[k][i] * q[k][l] * mm[l][j];
                }
            }
            qp[i][j] = acc;
        }
    }
    let lp = [mm[0][0] * d + mm[1][0] * e, mm[0][1] * d + mm[1][1] * e];
    let qm = [qp[0][0] * m.0 + qp[0][1] * m.1, qp[1][0] * m.0 + qp[1][1] * m.1];
    Conic {
        a: qp[0][0],
        b: qp[0][1] + qp[1][0],
        c: qp[1][1],
        d: lp[0] - T::two() * qm[0],
        e: lp[1] - T::two() * qm[1],
        f: m.0 * qm[0] + m.1 * qm[1] - lp[0] * m.0 - lp[1] * m.1 + f,
    }
    .normalized()
}

/// How the scatter matrix is turned into a conic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EllipseMethod {
    /// Direct least squares with the ellipse constraint on the raw scatter matrix.
    Direct,
    /// Same constrained solve after subtracting the bias of isotropic readout noise,
    /// whose variance is estimated as the level that makes the corrected scatter singular.
    #[default]
    NoiseCorrected,
}

/// Fit an ellipse to `(F_zA, F_zB)` points and extract the relative phase.
pub fn ellipse_fit<T: Real>(points: &[(T, T)]) -> Result<EllipseFit<T>, FitError> {
    ellipse_fit_with(points, EllipseMethod::default())
}

pub fn ellipse_fit_with<T: Real>(points: &[(T, T)], method: EllipseMethod) -> Result<EllipseFit<T>, FitError> {
    let n = points.len();
    if n < 6 {
        return Err(FitError::TooFewPoints { n });
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(FitError::NonFinite);
    }
    let nf = T::lit(n as f64);
    let (mx, my) = points.iter().fold((T::zero(), T::zero()), |(a, b), &(x, y)| (a + x, b + y));
    let (mx, my) = (mx / nf, my / nf);
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for &(x, y) in points {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    if !(tr > T::zero()) || det <= T::epsilon() * T::lit(16.0) * tr * tr {
        return Err(FitError::Collinear);
    }
    // principal axes of the cloud, each scaled to unit variance
    let (cxx, cxy, cyy) = (sxx / nf, sxy / nf, syy / nf);
    let half_tr = T::half() * (cxx + cyy);
    let disc = (T::lit(0.25) * (cxx - cyy) * (cxx - cyy) + cxy * cxy).sqrt();
    let (major, minor) = (half_tr + disc, half_tr - disc);
    if !(minor > T::zero()) {
        return Err(FitError::Collinear);
    }
    let ang = T::half() * (T::two() * cxy).atan2(cxx - cyy);
    let (sn, cs) = ang.sin_cos();
    let (k1, k2) = (T::one() / major.sqrt(), T::one() / minor.sqrt());
    let mm = [[cs * k1, sn * k1], [-sn * k2, cs * k2]];
    let white = |x: T, y: T| {
        let (dx, dy) = (x - mx, y - my);
        (mm[0][0] * dx + mm[0][1] * dy, mm[1][0] * dx + mm[1][1] * dy)
    };
    let each: Vec<Moments<T>> = points.iter().map(|&(x, y)| {
        let (u, v) = white(x, y);
        Moments::of(u, v)
    }).collect();
    let mut total = Moments::zero();
    for m in &each {
        total.add(m, T::one());
    }
    let w = Whitened { moments: total, w: (k1 * k1, k2 * k2) };
    let s = w.scatter(T::zero());
    let (full, v) = match method {
        EllipseMethod::Direct => (solve_scatter(&s)?, T::zero()),
        EllipseMethod::NoiseCorrected => w.corrected(minor, None)?,
    };
    let (sv, _) = symmetric_eigen(&s);
    let scatter_condition = if sv[0] > T::zero() { sv[5] / sv[0] } else { T::infinity() };
    let conic = to_original(&full, mm, (mx, my));
    let delta_phi = phase_from_conic(&conic)?;

    // leave-one-out estimates from downdated power sums
    let mut loo = Vec::with_capacity(n);
    let bracket = if v > T::zero() { Some((v * T::half(), v * T::two())) } else { None };
    for m in &each {
        let mut mi = total;
        mi.add(m, -T::one());
        let wi = Whitened { moments: mi, w: w.w };
        let r = match method {
            EllipseMethod::Direct => solve_scatter(&wi.scatter(T::zero())),
            EllipseMethod::NoiseCorrected => wi.corrected(minor, bracket).map(|(r, _)| r),
        };
        if let Ok(p) = r.and_then(|r| phase_from_conic(&to_original(&r, mm, (mx, my)))) {
            loo.push(p);
        }
    }
    let uncertainty = if loo.len() >= 2 {
        let m = T::lit(loo.len() as f64);
        let mean = loo.iter().fold(T::zero(), |s, &v| s + v) / m;
        let ss = loo.iter().fold(T::zero(), |s, &v| s + (v - mean) * (v - mean));
        ((m - T::one()) / m * ss).sqrt()
    } else {
        T::nan()
    };
    Ok(EllipseFit {
        conic,
        delta_phi,
        uncertainty,
        noise_rms: v.sqrt(),
        discriminant: conic.discriminant(),
        scatter_condition,
        n_points: n,
    })
}
