//! Rigid-body poses, pinhole intrinsics and the closed-form rigid fit
//! shared by the pose estimator and the trajectory aligner.

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

pub type Point3 = Vector3<f64>;

/// Pinhole camera intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0) || !cx.is_finite() || !cy.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "intrinsics fx={fx} fy={fy} cx={cx} cy={cy}"
            )));
        }
        Ok(Intrinsics { fx, fy, cx, cy })
    }

    /// Freiburg 1 colour camera of the TUM RGB-D benchmark.
    pub const TUM_FR1: Intrinsics = Intrinsics {
        fx: 517.3,
        fy: 516.5,
        cx: 318.6,
        cy: 255.3,
    };

    /// Ray through pixel `(x, y)` with unit z component.
    #[inline]
    pub fn ray(&self, x: f64, y: f64) -> Point3 {
        Vector3::new((x - self.cx) / self.fx, (y - self.cy) / self.fy, 1.0)
    }

    #[inline]
    pub fn project(&self, p: &Point3) -> Option<(f64, f64)> {
        (p.z > 0.0).then(|| (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }
}

/// Element of SE(3). As a camera pose it maps camera coordinates into the
/// world frame: `p_world = rotation * p_cam + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    /// Rotation from an axis-angle vector (radians) plus translation.
    pub fn from_axis_angle(axis_angle: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Pose {
            rotation: *Rotation3::new(axis_angle).matrix(),
            translation,
        }
    }

    /// Build from a TUM quaternion `(qx, qy, qz, qw)`; the quaternion is normalized.
    pub fn from_quaternion(translation: Vector3<f64>, q: [f64; 4]) -> Result<Self> {
        let raw = Quaternion::new(q[3], q[0], q[1], q[2]);
        let norm = raw.norm();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(Error::InvalidArgument(format!("quaternion {q:?}")));
        }
        let unit = UnitQuaternion::from_quaternion(raw);
        Ok(Pose {
            rotation: *unit.to_rotation_matrix().matrix(),
            translation,
        })
    }

    /// Unit quaternion `(qx, qy, qz, qw)` with `qw >= 0`.
    pub fn quaternion(&self) -> [f64; 4] {
        let rot = Rotation3::from_matrix_unchecked(self.rotation);
        let q = UnitQuaternion::from_rotation_matrix(&rot);
        let mut v = [q.i, q.j, q.k, q.w];
        let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        v.iter_mut().for_each(|c| *c /= n);
        if v[3] < 0.0 {
            v.iter_mut().for_each(|c| *c = -*c);
        }
        v
    }

    #[inline]
    pub fn transform(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    /// `self * other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Project the rotation back onto SO(3) (polar decomposition via SVD).
    pub fn orthonormalized(&self) -> Pose {
        let svd = self.rotation.svd(true, true);
        let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            let mut d = Matrix3::identity();
            d[(2, 2)] = -1.0;
            r = u * d * v_t;
        }
        Pose {
            rotation: r,
            translation: self.translation,
        }
    }

    /// `RᵀR = I` and `det R = +1` within `tol`, translation finite.
    pub fn is_valid(&self, tol: f64) -> bool {
        let rtr = self.rotation.transpose() * self.rotation;
        let ortho = (rtr - Matrix3::identity()).abs().max();
        self.rotation.iter().all(|v| v.is_finite())
            && self.translation.iter().all(|v| v.is_finite())
            && ortho <= tol
            && (self.rotation.determinant() - 1.0).abs() <= tol
    }

    /// Rotation angle of `self⁻¹ · other` in radians.
    pub fn rotation_angle_to(&self, other: &Pose) -> f64 {
        let r = self.rotation.transpose() * other.rotation;
        // atan2 stays accurate near 0 and pi, where acos of the trace does not
        let s = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]).norm();
        s.atan2(r.trace() - 1.0)
    }

    pub fn translation_distance(&self, other: &Pose) -> f64 {
        (self.translation - other.translation).norm()
    }
}

/// Result of a least-squares rigid fit.
#[derive(Debug, Clone, Copy)]
pub struct RigidFit {
    pub pose: Pose,
    /// The cross-covariance has rank < 2, so the rotation minimizer is not
    /// unique (residuals are still well defined).
    pub rank_deficient: bool,
}

/// Closed-form `argmin_{R,t} Σ ‖dst_i − (R src_i + t)‖²` over proper rotations
/// (orthogonal Procrustes on centred sets, reflection corrected).
pub fn fit_rigid(src: &[Point3], dst: &[Point3]) -> Result<RigidFit> {
    if src.len() != dst.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} points", src.len()),
            actual: format!("{} points", dst.len()),
        });
    }
    if src.is_empty() {
        return Err(Error::Insufficient("rigid fit needs at least one pair".into()));
    }
    let n = src.len() as f64;
    let src_mean = src.iter().sum::<Point3>() / n;
    let dst_mean = dst.iter().sum::<Point3>() / n;
    let mut cov = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        cov += (s - src_mean) * (d - dst_mean).transpose();
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("rigid fit input".into()));
    }
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let v = v_t.transpose();
    let mut sv = svd.singular_values;
    // nalgebra does not guarantee ordering
    sv.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    let rank_deficient = sv[0] <= f64::MIN_POSITIVE || sv[1] <= sv[0] * 1e-12;
    let mut correction = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        // flip the axis of the smallest singular value
        let smallest = (0..3)
            .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
            .unwrap();
        correction[(smallest, smallest)] = -1.0;
    }
    let rotation = v * correction * u.transpose();
    let translation = dst_mean - rotation * src_mean;
    Ok(RigidFit {
        pose: Pose {
            rotation,
            translation,
        },
        rank_deficient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_angle_is_accurate_at_both_ends() {
        let id = Pose::identity();
        for angle in [1e-12, 1e-8, 0.3, 2.0, std::f64::consts::PI - 1e-9] {
            let p = Pose::from_axis_angle(Vector3::new(0.0, 0.6, 0.8) * angle, Vector3::zeros());
            let got = id.rotation_angle_to(&p);
            assert!((got - angle).abs() <= 1e-14 * angle.max(1.0), "{angle}: {got}");
        }
    }

    #[test]
    fn quaternion_round_trip_and_canonical_sign() {
        let p = Pose::from_axis_angle(Vector3::new(0.3, -1.2, 2.5), Vector3::new(1.0, 2.0, 3.0));
        let q = p.quaternion();
        assert!(q[3] >= 0.0);
        let back = Pose::from_quaternion(p.translation, q).unwrap();
        assert!((back.rotation - p.rotation).abs().max() < 1e-12);
        let neg = Pose::from_quaternion(p.translation, [-q[0], -q[1], -q[2], -q[3]]).unwrap();
        assert_eq!(neg.quaternion().map(|c| (c * 1e9).round()), q.map(|c| (c * 1e9).round()));
    }

    #[test]
    fn compose_inverse_is_identity() {
        let p = Pose::from_axis_angle(Vector3::new(0.1, 0.2, -0.3), Vector3::new(-1.0, 0.5, 2.0));
        let id = p.compose(&p.inverse());
        assert!((id.rotation - Matrix3::identity()).abs().max() < 1e-12);
        assert!(id.translation.norm() < 1e-12);
        assert!(p.is_valid(1e-9));
    }

    #[test]
    fn fit_rejects_reflections() {
        // mirrored planar set: best orthogonal map is a reflection
        let src = vec![
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(-1.0, 0.0, 0.0),
            Vector3::new(0.0, -2.0, 0.0),
        ];
        let dst: Vec<_> = src.iter().map(|p| Vector3::new(-p.x, p.y, p.z)).collect();
        let fit = fit_rigid(&src, &dst).unwrap();
        assert!((fit.pose.rotation.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn intrinsics_validate_focal_lengths() {
        assert!(Intrinsics::new(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(Intrinsics::new(1.0, -1.0, 0.0, 0.0).is_err());
        assert!(Intrinsics::new(500.0, 500.0, 320.0, 240.0).is_ok());
    }
}
