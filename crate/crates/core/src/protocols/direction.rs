//! VLS field direction from field-magnitude differences measured under several biases.

use super::ProtocolError;
use crate::linalg::symmetric_eigen;
use crate::vec3::Vec3;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VlsDirection {
    /// Unit vector, sign fixed so its largest component is positive.
    pub direction: Vec3<f64>,
    /// Signed `Delta B_vls` (G) paired with `direction`.
    pub delta_b_vls: f64,
}

/// Least-squares solution of `Delta B_i = v . B0_i / |B0_i|` for `v = Delta B_vls u`.
pub fn infer_vls_direction(measurements: &[(Vec3<f64>, f64)]) -> Result<VlsDirection, ProtocolError> {
    let v = solve_vls_vector(measurements)?;
    let n = v.norm();
    if !(n > 0.0) {
        return Err(ProtocolError::Degenerate("no VLS signal under any bias".into()));
    }
    let mut u = v * (1.0 / n);
    let mut s = n;
    let comps = [u.x, u.y, u.z];
    let big = comps.iter().copied().fold(0.0f64, |m, c| if c.abs() > m.abs() { c } else { m });
    if big < 0.0 {
        u = -u;
        s = -s;
    }
    Ok(VlsDirection { direction: u, delta_b_vls: s })
}

/// The vector `v` itself (G); rank-deficient bias sets are rejected.
pub fn solve_vls_vector(measurements: &[(Vec3<f64>, f64)]) -> Result<Vec3<f64>, ProtocolError> {
    if measurements.len() < 3 {
        return Err(ProtocolError::RankDeficient(format!("{} bias directions", measurements.len())));
    }
    let mut a = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    for (b, db) in measurements {
        let u = b
            .normalized()
            .ok_or_else(|| ProtocolError::Input("bias field with zero magnitude".into()))?;
        let c = [u.x, u.y, u.z];
        for i in 0..3 {
            rhs[i] += c[i] * db;
            for j in 0..3 {
                a[i][j] += c[i] * c[j];
            }
        }
    }
    let (lam, vecs) = symmetric_eigen(&a);
    if lam[0] <= 1e-10 * lam[2] {
        return Err(ProtocolError::RankDeficient("bias directions do not span three dimensions".into()));
    }
    let mut x = [0.0f64; 3];
    for k in 0..3 {
        let proj = (0..3).map(|i| vecs[i][k] * rhs[i]).sum::<f64>() / lam[k];
        for i in 0..3 {
            x[i] += proj * vecs[i][k];
        }
    }
    Ok(Vec3::new(x[0], x[1], x[2]))
}

/// Angle (rad) between two axes, ignoring orientation.
pub fn axis_error(a: Vec3<f64>, b: Vec3<f64>) -> f64 {
    let c = (a.dot(b) / (a.norm() * b.norm())).abs().min(1.0);
    c.acos()
}
