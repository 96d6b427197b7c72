//! Small dense helpers: 3-vectors, 3×3 rotations, symmetric eigensolver.

use alloc::vec;
use alloc::vec::Vec;

pub type Vec3 = [f64; 3];
/// Row-major 3×3 matrix.
pub type Mat3 = [f64; 9];

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn scale(a: Vec3, c: f64) -> Vec3 {
    [a[0] * c, a[1] * c, a[2] * c]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn norm(a: Vec3) -> f64 {
    libm::sqrt(dot(a, a))
}

pub fn dist(a: Vec3, b: Vec3) -> f64 {
    norm(sub(a, b))
}

pub fn normalize(a: Vec3) -> Vec3 {
    let n = norm(a);
    if n > 0.0 {
        scale(a, 1.0 / n)
    } else {
        a
    }
}

pub fn lerp(a: Vec3, b: Vec3, s: f64) -> Vec3 {
    add(a, scale(sub(b, a), s))
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            out[i * 3 + j] = (0..3).map(|k| a[i * 3 + k] * b[k * 3 + j]).sum();
        }
    }
    out
}

pub fn mat_t(a: &Mat3) -> Mat3 {
    [a[0], a[3], a[6], a[1], a[4], a[7], a[2], a[5], a[8]]
}

pub fn mat_vec(a: &Mat3, v: Vec3) -> Vec3 {
    [a[0] * v[0] + a[1] * v[1] + a[2] * v[2], a[3] * v[0] + a[4] * v[1] + a[5] * v[2], a[6] * v[0] + a[7] * v[1] + a[8] * v[2]]
}

pub fn det(a: &Mat3) -> f64 {
    a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6]) + a[2] * (a[3] * a[7] - a[4] * a[6])
}

pub fn trace(a: &Mat3) -> f64 {
    a[0] + a[4] + a[8]
}

/// Max entry of `|RᵀR − I|`.
pub fn orthogonality_error(r: &Mat3) -> f64 {
    let p = mat_mul(&mat_t(r), r);
    (0..9).map(|i| libm::fabs(p[i] - if i % 4 == 0 { 1.0 } else { 0.0 })).fold(0.0, f64::max)
}

/// Rotation about the z axis.
pub fn rot_z(angle: f64) -> Mat3 {
    let (s, c) = (libm::sin(angle), libm::cos(angle));
    [c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0]
}

/// Rotation (axis, angle) via Rodrigues' formula.
pub fn axis_angle(axis: Vec3, angle: f64) -> Mat3 {
    let [x, y, z] = normalize(axis);
    let (s, c) = (libm::sin(angle), libm::cos(angle));
    let t = 1.0 - c;
    [
        t * x * x + c,
        t * x * y - s * z,
        t * x * z + s * y,
        t * x * y + s * z,
        t * y * y + c,
        t * y * z - s * x,
        t * x * z - s * y,
        t * y * z + s * x,
        t * z * z + c,
    ]
}

/// Eigen-decomposition of a symmetric `n×n` row-major matrix by cyclic
/// Jacobi rotations. Returns `(eigenvalues, eigenvectors as columns)`.
pub fn symmetric_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if libm::fabs(apq) < 1e-300 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (libm::fabs(theta) + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (m[k * n + p], m[k * n + q]);
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (m[p * n + k], m[q * n + k]);
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| m[i * n + i]).collect(), v)
}

/// Rotation nearest to `m` in Frobenius norm (det +1).
///
/// Solved as the maximiser of `tr(Rᵀ m)` through the dominant eigenvector of
/// the associated symmetric 4×4 quaternion matrix. For `det(m) > 0` this is
/// the orthogonal polar factor of `m`.
pub fn nearest_rotation(m: &Mat3) -> Mat3 {
    let [m00, m01, m02, m10, m11, m12, m20, m21, m22] = *m;
    // tr(Rᵀ M) = qᵀ K q for unit quaternion q = (w, x, y, z).
    let k = [
        m00 + m11 + m22,
        m21 - m12,
        m02 - m20,
        m10 - m01,
        m21 - m12,
        m00 - m11 - m22,
        m01 + m10,
        m02 + m20,
        m02 - m20,
        m01 + m10,
        -m00 + m11 - m22,
        m12 + m21,
        m10 - m01,
        m02 + m20,
        m12 + m21,
        -m00 - m11 + m22,
    ];
    let (vals, vecs) = symmetric_eigen(&k, 4);
    let best = (0..4).fold(0, |b, i| if vals[i] > vals[b] { i } else { b });
    let q = [vecs[best], vecs[4 + best], vecs[8 + best], vecs[12 + best]];
    quat_to_mat(q)
}

/// Rotation matrix of a (not necessarily normalised) quaternion `(w, x, y, z)`.
pub fn quat_to_mat(q: [f64; 4]) -> Mat3 {
    let n = libm::sqrt(q.iter().map(|v| v * v).sum());
    let [w, x, y, z] = [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
    [
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_of_diagonalisable() {
        let a = [2.0, 1.0, 1.0, 2.0];
        let (mut vals, _) = symmetric_eigen(&a, 2);
        vals.sort_by(f64::total_cmp);
        assert!((vals[0] - 1.0).abs() < 1e-12 && (vals[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn nearest_rotation_recovers_rotation() {
        let r = axis_angle([0.3, -1.0, 0.5], 1.1);
        let n = nearest_rotation(&r);
        for i in 0..9 {
            assert!((r[i] - n[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn nearest_rotation_of_scaled_and_perturbed() {
        let r = axis_angle([1.0, 2.0, 3.0], 2.5);
        let mut m = r.map(|v| 1.7 * v);
        m[1] += 0.05;
        m[5] -= 0.03;
        let n = nearest_rotation(&m);
        assert!(orthogonality_error(&n) < 1e-12);
        assert!((det(&n) - 1.0).abs() < 1e-12);
        // close to the unperturbed rotation
        assert!((0..9).all(|i| (n[i] - r[i]).abs() < 0.05));
    }

    #[test]
    fn reflection_input_still_gives_proper_rotation() {
        let m = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0];
        let n = nearest_rotation(&m);
        assert!((det(&n) - 1.0).abs() < 1e-12);
    }
}
