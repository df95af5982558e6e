use nalgebra::{Matrix3, Matrix4, Point3, Rotation3, Vector3};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Rigid body transformation stored as a 4×4 homogeneous matrix.
///
/// The rotation block is always orthonormal with determinant +1 and the
/// bottom row is `[0, 0, 0, 1]`; every constructor enforces this.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform<T: Real> {
    matrix: Matrix4<T>,
}

impl<T: Real> Default for RigidTransform<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> RigidTransform<T> {
    pub fn identity() -> Self {
        Self {
            matrix: Matrix4::identity(),
        }
    }

    pub fn from_translation(t: Vector3<T>) -> Self {
        Self::from_yaw_translation(T::zero(), t)
    }

    /// Rotation about `z` by `yaw` followed by translation `t`.
    pub fn from_yaw_translation(yaw: T, t: Vector3<T>) -> Self {
        let (s, c) = yaw.sin_cos();
        let (o, i) = (T::zero(), T::one());
        #[rustfmt::skip]
        let matrix = Matrix4::new(
            c, -s, o, t.x,
            s,  c, o, t.y,
            o,  o, i, t.z,
            o,  o, o, i,
        );
        Self { matrix }
    }

    pub fn from_rotation_translation(rotation: &Rotation3<T>, t: Vector3<T>) -> Self {
        let mut matrix = Matrix4::identity();
        matrix
            .fixed_view_mut::<3, 3>(0, 0)
            .copy_from(rotation.matrix());
        matrix.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        Self { matrix }
    }

    /// Validates an arbitrary homogeneous matrix.
    pub fn from_matrix(matrix: Matrix4<T>) -> Result<Self> {
        let candidate = Self { matrix };
        if candidate.is_valid() {
            Ok(candidate)
        } else {
            Err(Error::InvalidParameter(
                "matrix is not a proper rigid transform".into(),
            ))
        }
    }

    pub fn matrix(&self) -> &Matrix4<T> {
        &self.matrix
    }

    pub fn rotation(&self) -> Matrix3<T> {
        self.matrix.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<T> {
        self.matrix.fixed_view::<3, 1>(0, 3).into_owned()
    }

    /// Heading of the rotated body `x` axis in the world `xy` plane.
    pub fn yaw(&self) -> T {
        self.matrix[(1, 0)].atan2(self.matrix[(0, 0)])
    }

    /// Rotation angle of the rotation block, in radians.
    pub fn rotation_angle(&self) -> T {
        let trace = self.matrix[(0, 0)] + self.matrix[(1, 1)] + self.matrix[(2, 2)];
        let c = ((trace - T::one()) / T::lit(2.0)).clamp(-T::one(), T::one());
        c.acos()
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation().transpose();
        let t = -(rt * self.translation());
        let mut matrix = Matrix4::identity();
        matrix.fixed_view_mut::<3, 3>(0, 0).copy_from(&rt);
        matrix.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        Self { matrix }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            matrix: self.matrix * other.matrix,
        }
    }

    #[inline]
    pub fn apply(&self, p: &Point3<T>) -> Point3<T> {
        let m = &self.matrix;
        Point3::new(
            m[(0, 0)] * p.x + m[(0, 1)] * p.y + m[(0, 2)] * p.z + m[(0, 3)],
            m[(1, 0)] * p.x + m[(1, 1)] * p.y + m[(1, 2)] * p.z + m[(1, 3)],
            m[(2, 0)] * p.x + m[(2, 1)] * p.y + m[(2, 2)] * p.z + m[(2, 3)],
        )
    }

    /// Orthonormality of the rotation block, unit determinant and homogeneous bottom row.
    pub fn is_valid(&self) -> bool {
        let tol = T::lit(1e-9).max(T::tolerance());
        let r = self.rotation();
        let gram = r.transpose() * r - Matrix3::identity();
        if gram.iter().any(|v| v.abs() > tol) {
            return false;
        }
        if (r.determinant() - T::one()).abs() > tol {
            return false;
        }
        let bottom = [T::zero(), T::zero(), T::zero(), T::one()];
        (0..4).all(|j| self.matrix[(3, j)] == bottom[j])
            && self.matrix.iter().all(|v| v.is_finite())
    }
}

/// Applies `t` to the homogeneous coordinates of every point.
pub fn apply_transform<T: Real>(t: &RigidTransform<T>, pts: &[Point3<T>]) -> Vec<Point3<T>> {
    pts.iter().map(|p| t.apply(p)).collect()
}
