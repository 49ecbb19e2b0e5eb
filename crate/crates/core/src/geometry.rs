//! Quaternion and SO(3) tangent-space algebra.
//!
//! Quaternions are stored as `(x, y, z, w)` with the scalar part last. The
//! log map returns full-angle rotation vectors (magnitude equals the rotation
//! angle θ ∈ [0, π]), so [`geodesic_error`] is the true SO(3) geodesic
//! distance. Near θ = 0 the exp/log maps switch to 4th-order series to avoid
//! catastrophic cancellation.
//!
//! Euler angles use the intrinsic Tait-Bryan convention
//! `R = R_yaw(y) · R_pitch(x) · R_roll(z)` in camera axes where x points
//! right, y down, and z into the image plane. Angles are degrees. All other
//! math in the crate is quaternion-based and convention-free.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Default jitter added to `M Mᵀ` so covariances stay positive-definite.
pub const DEFAULT_COV_EPS: f64 = 1e-4;

/// Rotation angle below which exp/log use their series expansions (radians).
const SERIES_ANGLE: f64 = 1e-4;

/// Smooth map from the reals onto the positive reals: `ELU(x) + 1`.
///
/// Equals `x + 1` for `x >= 0` and `exp(x)` for `x < 0`; continuously
/// differentiable with slope 1 at the origin.
#[inline]
pub fn smoothclip(x: f64) -> f64 {
    if x >= 0.0 {
        x + 1.0
    } else {
        x.exp()
    }
}

/// Derivative of [`smoothclip`].
#[inline]
pub fn smoothclip_deriv(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        x.exp()
    }
}

/// Inverse of [`smoothclip`] for positive arguments.
#[inline]
pub fn smoothclip_inv(y: f64) -> f64 {
    assert!(y > 0.0, "smoothclip_inv requires a positive argument");
    if y >= 1.0 {
        y - 1.0
    } else {
        y.ln()
    }
}

/// Unit quaternion, stored `(x, y, z, w)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Quaternion {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        x: 0.0,
        y: 0.0,
        z: 0.0,
        w: 1.0,
    };

    /// Raw constructor; does not normalize.
    #[inline]
    pub fn new(x: f64, y: f64, z: f64, w: f64) -> Self {
        Quaternion { x, y, z, w }
    }

    /// Maps four raw network features to a unit quaternion.
    ///
    /// `q' = (z0, z1, z2, smoothclip(z3))`, `q = q' / ||q'||`. The positive
    /// scalar part biases the output toward zero rotation and fixes the sign
    /// ambiguity of the double cover: the result always has `w > 0`.
    pub fn from_features(z0: f64, z1: f64, z2: f64, z3: f64) -> Self {
        Quaternion::new(z0, z1, z2, smoothclip(z3)).normalized()
    }

    /// Rotation of `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        assert!(n > 0.0, "axis must be non-zero");
        let (s, c) = (0.5 * angle).sin_cos();
        let u = axis / n;
        Quaternion::new(s * u.x, s * u.y, s * u.z, c)
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z + self.w * self.w).sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        assert!(n > 0.0, "cannot normalize a zero quaternion");
        Quaternion::new(self.x / n, self.y / n, self.z / n, self.w / n)
    }

    #[inline]
    pub fn dot(&self, rhs: &Quaternion) -> f64 {
        self.x * rhs.x + self.y * rhs.y + self.z * rhs.z + self.w * rhs.w
    }

    #[inline]
    pub fn conjugate(&self) -> Self {
        Quaternion::new(-self.x, -self.y, -self.z, self.w)
    }

    /// Inverse of a unit quaternion (the conjugate).
    #[inline]
    pub fn inverse(&self) -> Self {
        self.conjugate()
    }

    /// Hamilton product `self ⊗ rhs`.
    pub fn mul(&self, rhs: &Quaternion) -> Self {
        let (ax, ay, az, aw) = (self.x, self.y, self.z, self.w);
        let (bx, by, bz, bw) = (rhs.x, rhs.y, rhs.z, rhs.w);
        Quaternion::new(
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
            aw * bw - ax * bx - ay * by - az * bz,
        )
    }

    #[inline]
    pub fn negated(&self) -> Self {
        Quaternion::new(-self.x, -self.y, -self.z, -self.w)
    }

    /// Canonical representative of the double cover: flips the sign so that
    /// `w > 0`, with a fixed total order breaking the tie at `w == 0`.
    pub fn canonical(&self) -> Self {
        let flip = self.w < 0.0
            || (self.w == 0.0
                && (self.z < 0.0
                    || (self.z == 0.0 && (self.y < 0.0 || (self.y == 0.0 && self.x < 0.0)))));
        if flip {
            self.negated()
        } else {
            *self
        }
    }

    /// Rotates a 3-vector. Assumes a unit quaternion.
    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        let u = Vector3::new(self.x, self.y, self.z);
        let uv = u.cross(v);
        v + 2.0 * self.w * uv + 2.0 * u.cross(&uv)
    }

    /// 3×3 rotation matrix of a unit quaternion.
    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        let (x, y, z, w) = (self.x, self.y, self.z, self.w);
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }
}

impl std::ops::Mul for Quaternion {
    type Output = Quaternion;
    fn mul(self, rhs: Quaternion) -> Quaternion {
        Quaternion::mul(&self, &rhs)
    }
}

impl std::ops::Neg for Quaternion {
    type Output = Quaternion;
    fn neg(self) -> Quaternion {
        self.negated()
    }
}

/// Full-angle rotation vector: direction is the rotation axis, magnitude the
/// rotation angle in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationVector {
    pub rx: f64,
    pub ry: f64,
    pub rz: f64,
}

impl RotationVector {
    #[inline]
    pub fn new(rx: f64, ry: f64, rz: f64) -> Self {
        RotationVector { rx, ry, rz }
    }

    #[inline]
    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.rx, self.ry, self.rz)
    }

    #[inline]
    pub fn magnitude(&self) -> f64 {
        self.as_vector().norm()
    }
}

impl From<Vector3<f64>> for RotationVector {
    fn from(v: Vector3<f64>) -> Self {
        RotationVector::new(v.x, v.y, v.z)
    }
}

/// Logarithmic map of a unit quaternion to its full-angle rotation vector.
///
/// Canonicalizes the sign first, so the angle lands in [0, π] and
/// `log_map(q) == log_map(-q)` exactly.
pub fn log_map(q: &Quaternion) -> RotationVector {
    let q = q.canonical();
    let s = (q.x * q.x + q.y * q.y + q.z * q.z).sqrt();
    let theta = 2.0 * s.atan2(q.w);
    let k = if theta < SERIES_ANGLE {
        // atan series: 2·atan(s/w)/s = (2/w)(1 - x²/3 + x⁴/5), x = s/w
        let x2 = (s / q.w) * (s / q.w);
        (2.0 / q.w) * (1.0 - x2 / 3.0 + x2 * x2 / 5.0)
    } else {
        theta / s
    };
    RotationVector::new(k * q.x, k * q.y, k * q.z)
}

/// Exponential map from a rotation vector back to a unit quaternion.
pub fn exp_map(v: &RotationVector) -> Quaternion {
    let theta = v.magnitude();
    let k = if theta < SERIES_ANGLE {
        // sin(θ/2)/θ = ½(1 - θ²/24 + θ⁴/1920)
        let t2 = theta * theta;
        0.5 * (1.0 - t2 / 24.0 + t2 * t2 / 1920.0)
    } else {
        (0.5 * theta).sin() / theta
    };
    Quaternion::new(k * v.rx, k * v.ry, k * v.rz, (0.5 * theta).cos())
}

/// Geodesic distance between two orientations, in radians.
///
/// Equals the magnitude of `log_map(q̂⁻¹ ⊗ q)`; lies in [0, π], is symmetric,
/// and is invariant to the sign of either argument.
pub fn geodesic_error(qhat: &Quaternion, q: &Quaternion) -> f64 {
    let rel = qhat.inverse().mul(q).canonical();
    let s = (rel.x * rel.x + rel.y * rel.y + rel.z * rel.z).sqrt();
    2.0 * s.atan2(rel.w)
}

/// Averages unit quaternions by hemisphere-aligning every element to the
/// first, averaging componentwise, and renormalizing.
pub fn mean_quaternion(qs: &[Quaternion]) -> Result<Quaternion> {
    let first = qs.first().ok_or(Error::EmptyInput("mean_quaternion"))?;
    let mut acc = [0.0f64; 4];
    for q in qs {
        let q = if q.dot(first) < 0.0 { q.negated() } else { *q };
        acc[0] += q.x;
        acc[1] += q.y;
        acc[2] += q.z;
        acc[3] += q.w;
    }
    let n = qs.len() as f64;
    let mean = Quaternion::new(acc[0] / n, acc[1] / n, acc[2] / n, acc[3] / n);
    let norm = mean.norm();
    if norm < 1e-12 {
        return Err(Error::DegenerateMean { norm });
    }
    Ok(Quaternion::new(
        mean.x / norm,
        mean.y / norm,
        mean.z / norm,
        mean.w / norm,
    ))
}

/// Euler angles in degrees, intrinsic yaw-pitch-roll about the (y, x, z)
/// camera axes.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EulerAngles {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl EulerAngles {
    #[inline]
    pub fn new(yaw: f64, pitch: f64, roll: f64) -> Self {
        EulerAngles { yaw, pitch, roll }
    }
}

/// Extracts yaw/pitch/roll (degrees) from a unit quaternion.
///
/// At gimbal lock (|pitch| = 90°) the roll-yaw ambiguity is resolved by
/// setting roll to zero.
pub fn to_euler(q: &Quaternion) -> EulerAngles {
    let r = q.rotation_matrix();
    let sp = (-r[(1, 2)]).clamp(-1.0, 1.0);
    if 1.0 - sp.abs() < 1e-9 {
        let yaw = (-r[(2, 0)]).atan2(r[(0, 0)]);
        EulerAngles::new(
            yaw.to_degrees(),
            (std::f64::consts::FRAC_PI_2 * sp.signum()).to_degrees(),
            0.0,
        )
    } else {
        let yaw = r[(0, 2)].atan2(r[(2, 2)]);
        let pitch = sp.asin();
        let roll = r[(1, 0)].atan2(r[(1, 1)]);
        EulerAngles::new(yaw.to_degrees(), pitch.to_degrees(), roll.to_degrees())
    }
}

/// Composes a unit quaternion from Euler angles in degrees.
pub fn from_euler(e: &EulerAngles) -> Quaternion {
    let qy = Quaternion::from_axis_angle(Vector3::y(), e.yaw.to_radians());
    let qx = Quaternion::from_axis_angle(Vector3::x(), e.pitch.to_radians());
    let qz = Quaternion::from_axis_angle(Vector3::z(), e.roll.to_radians());
    qy.mul(&qx).mul(&qz)
}

/// Symmetric positive-definite 3×3 covariance matrix.
///
/// Constructed as `Σ = M Mᵀ + ε I` from six raw features filling a lower
/// triangular `M` row-major; the ε jitter guarantees a minimum eigenvalue of
/// at least ε for any finite features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Covariance3 {
    m: Matrix3<f64>,
}

impl Covariance3 {
    /// Builds `M Mᵀ + eps·I` with `M = [[m0,0,0],[m1,m2,0],[m3,m4,m5]]`.
    pub fn from_features(f: &[f64; 6], eps: f64) -> Self {
        assert!(eps > 0.0, "eps must be positive");
        let m = lower_triangular(f);
        let mut s = m * m.transpose();
        for i in 0..3 {
            s[(i, i)] += eps;
        }
        Covariance3 { m: s }
    }

    /// Wraps an explicit matrix, validating symmetry and positive
    /// definiteness.
    pub fn from_matrix(mat: Matrix3<f64>) -> Result<Self> {
        for i in 0..3 {
            for j in (i + 1)..3 {
                if (mat[(i, j)] - mat[(j, i)]).abs() > 1e-12 {
                    return Err(Error::NotPositiveDefinite);
                }
            }
        }
        if nalgebra::Cholesky::new(mat).is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Covariance3 { m: mat })
    }

    pub fn identity() -> Self {
        Covariance3 {
            m: Matrix3::identity(),
        }
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    fn cholesky(&self) -> nalgebra::Cholesky<f64, nalgebra::Const<3>> {
        nalgebra::Cholesky::new(self.m).expect("covariance is positive-definite by construction")
    }

    /// Inverse via Cholesky.
    pub fn inverse(&self) -> Matrix3<f64> {
        self.cholesky().inverse()
    }

    /// `log det Σ` via Cholesky.
    pub fn log_det(&self) -> f64 {
        let l = self.cholesky();
        let d = l.l_dirty();
        2.0 * (d[(0, 0)].ln() + d[(1, 1)].ln() + d[(2, 2)].ln())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.norm()
    }
}

/// Lower-triangular matrix from six row-major features.
pub(crate) fn lower_triangular(f: &[f64; 6]) -> Matrix3<f64> {
    Matrix3::new(f[0], 0.0, 0.0, f[1], f[2], 0.0, f[3], f[4], f[5])
}

/// Axis-aligned box in image space, parameterized by center and size.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Box2 {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl Box2 {
    #[inline]
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Box2 { cx, cy, w, h }
    }

    /// Corner coordinates `(x0, y0, x1, y1)`.
    #[inline]
    pub fn corners(&self) -> [f64; 4] {
        [
            self.cx - 0.5 * self.w,
            self.cy - 0.5 * self.h,
            self.cx + 0.5 * self.w,
            self.cy + 0.5 * self.h,
        ]
    }

    /// Box from corner coordinates.
    pub fn from_corners(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Box2::new(0.5 * (x0 + x1), 0.5 * (y0 + y1), x1 - x0, y1 - y0)
    }

    /// Four corner points in (x, y) order: TL, TR, BR, BL.
    pub fn corner_points(&self) -> [[f64; 2]; 4] {
        let [x0, y0, x1, y1] = self.corners();
        [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}
