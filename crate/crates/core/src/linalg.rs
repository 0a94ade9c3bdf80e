//! Small dense helpers for fixed-size symmetric problems.

use crate::scalar::Real;

pub type Mat<T, const N: usize> = [[T; N]; N];

pub fn zeros<T: Real, const N: usize>() -> Mat<T, N> {
    [[T::zero(); N]; N]
}

pub fn identity<T: Real, const N: usize>() -> Mat<T, N> {
    let mut m = zeros::<T, N>();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = T::one();
    }
    m
}

pub fn transpose<T: Real, const N: usize>(a: &Mat<T, N>) -> Mat<T, N> {
    let mut t = zeros::<T, N>();
    for i in 0..N {
        for j in 0..N {
            t[j][i] = a[i][j];
        }
    }
    t
}

pub fn matmul<T: Real, const N: usize>(a: &Mat<T, N>, b: &Mat<T, N>) -> Mat<T, N> {
    let mut c = zeros::<T, N>();
    for i in 0..N {
        for k in 0..N {
            let aik = a[i][k];
            for j in 0..N {
                c[i][j] += aik * b[k][j];
            }
        }
    }
    c
}

pub fn matvec<T: Real, const N: usize>(a: &Mat<T, N>, v: &[T; N]) -> [T; N] {
    let mut out = [T::zero(); N];
    for i in 0..N {
        for j in 0..N {
            out[i] += a[i][j] * v[j];
        }
    }
    out
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues and a matrix whose columns are the matching unit
/// eigenvectors, sorted by ascending eigenvalue.
pub fn symmetric_eigen<T: Real, const N: usize>(a: &Mat<T, N>) -> ([T; N], Mat<T, N>) {
    let mut m = *a;
    let mut v = identity::<T, N>();
    let eps = T::epsilon();
    for _sweep in 0..100 {
        let mut off = T::zero();
        let mut diag = T::zero();
        for i in 0..N {
            diag += m[i][i] * m[i][i];
            for j in (i + 1)..N {
                off += m[i][j] * m[i][j];
            }
        }
        if off <= eps * eps * diag || off == T::zero() {
            break;
        }
        for p in 0..N {
            for q in (p + 1)..N {
                let apq = m[p][q];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (T::two() * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..N {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..N {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut idx: [usize; N] = [0; N];
    for (i, x) in idx.iter_mut().enumerate() {
        *x = i;
    }
    idx.sort_by(|&i, &j| m[i][i].partial_cmp(&m[j][j]).unwrap_or(std::cmp::Ordering::Equal));
    let mut vals = [T::zero(); N];
    let mut vecs = zeros::<T, N>();
    for (col, &i) in idx.iter().enumerate() {
        vals[col] = m[i][i];
        for r in 0..N {
            vecs[r][col] = v[r][i];
        }
    }
    (vals, vecs)
}

/// Inverse of a 3x3 matrix via cofactors; `None` when the determinant vanishes
/// relative to the matrix scale.
pub fn inverse3<T: Real>(a: &Mat<T, 3>) -> Option<Mat<T, 3>> {
    let c00 = a[1][1] * a[2][2] - a[1][2] * a[2][1];
    let c01 = a[1][2] * a[2][0] - a[1][0] * a[2][2];
    let c02 = a[1][0] * a[2][1] - a[1][1] * a[2][0];
    let det = a[0][0] * c00 + a[0][1] * c01 + a[0][2] * c02;
    let scale = a.iter().flatten().fold(T::zero(), |m, x| m.max(x.abs()));
    if !det.is_finite() || scale == T::zero() || det.abs() <= T::epsilon() * scale * scale * scale {
        return None;
    }
    let inv_det = T::one() / det;
    let mut inv = zeros::<T, 3>();
    inv[0][0] = c00 * inv_det;
    inv[1][0] = c01 * inv_det;
    inv[2][0] = c02 * inv_det;
    inv[0][1] = (a[0][2] * a[2][1] - a[0][1] * a[2][2]) * inv_det;
    inv[1][1] = (a[0][0] * a[2][2] - a[0][2] * a[2][0]) * inv_det;
    inv[2][1] = (a[0][1] * a[2][0] - a[0][0] * a[2][1]) * inv_det;
    inv[0][2] = (a[0][1] * a[1][2] - a[0][2] * a[1][1]) * inv_det;
    inv[1][2] = (a[0][2] * a[1][0] - a[0][0] * a[1][2]) * inv_det;
    inv[2][2] = (a[0][0] * a[1][1] - a[0][1] * a[1][0]) * inv_det;
    Some(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn jacobi_reconstructs_symmetric_matrix(vals in proptest::collection::vec(-5.0f64..5.0, 6)) {
            let a = [
                [vals[0], vals[1], vals[2]],
                [vals[1], vals[3], vals[4]],
                [vals[2], vals[4], vals[5]],
            ];
            let (w, v) = symmetric_eigen(&a);
            for i in 0..3 {
                for j in 0..3 {
                    let mut s = 0.0;
                    for k in 0..3 {
                        s += v[i][k] * w[k] * v[j][k];
                    }
                    prop_assert!((s - a[i][j]).abs() < 1e-10);
                }
            }
            prop_assert!(w[0] <= w[1] && w[1] <= w[2]);
        }

        #[test]
        fn inverse3_is_inverse(vals in proptest::collection::vec(-3.0f64..3.0, 9)) {
            let a = [
                [vals[0] + 4.0, vals[1], vals[2]],
                [vals[3], vals[4] + 4.0, vals[5]],
                [vals[6], vals[7], vals[8] + 4.0],
            ];
            let inv = inverse3(&a).unwrap();
            let p = matmul(&a, &inv);
            for i in 0..3 {
                for j in 0..3 {
                    let e = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((p[i][j] - e).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn singular_matrix_has_no_inverse() {
        let a = [[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 1.0, 1.0]];
        assert!(inverse3(&a).is_none());
    }
}
