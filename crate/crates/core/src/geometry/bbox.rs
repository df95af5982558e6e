use nalgebra::{Point3, Vector2, Vector3};

use super::transform::RigidTransform;
use crate::scalar::{normalize_angle, Real};

/// Oriented 3D box with planar velocity.
///
/// `w` is measured across the heading, `l` along it, `h` vertically.
/// `theta` lives in `(-π, π]`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct BoundingBox<T: Real> {
    pub cx: T,
    pub cy: T,
    pub cz: T,
    pub w: T,
    pub l: T,
    pub h: T,
    pub theta: T,
    pub vx: T,
    pub vy: T,
}

impl<T: Real> BoundingBox<T> {
    /// Box at rest; `dims` is `(l, w, h)`.
    pub fn new(center: [T; 3], dims: [T; 3], theta: T) -> Self {
        Self {
            cx: center[0],
            cy: center[1],
            cz: center[2],
            l: dims[0],
            w: dims[1],
            h: dims[2],
            theta: normalize_angle(theta),
            vx: T::zero(),
            vy: T::zero(),
        }
    }

    pub fn with_velocity(mut self, vx: T, vy: T) -> Self {
        self.vx = vx;
        self.vy = vy;
        self
    }

    pub fn center(&self) -> Point3<T> {
        Point3::new(self.cx, self.cy, self.cz)
    }

    pub fn center_xy(&self) -> Vector2<T> {
        Vector2::new(self.cx, self.cy)
    }

    pub fn is_valid(&self) -> bool {
        let fields = [
            self.cx, self.cy, self.cz, self.w, self.l, self.h, self.theta, self.vx, self.vy,
        ];
        fields.iter().all(|v| v.is_finite())
            && self.w > T::zero()
            && self.l > T::zero()
            && self.h > T::zero()
            && self.theta > -T::pi()
            && self.theta <= T::pi()
    }

    /// Body-to-world pose of the box.
    pub fn pose(&self) -> RigidTransform<T> {
        box_to_transform(self)
    }

    /// Footprint corners in counter-clockwise order.
    pub fn footprint(&self) -> [Vector2<T>; 4] {
        let (s, c) = self.theta.sin_cos();
        let hl = self.l / T::lit(2.0);
        let hw = self.w / T::lit(2.0);
        let center = self.center_xy();
        let corner = |a: T, b: T| center + Vector2::new(c * a - s * b, s * a + c * b);
        [
            corner(hl, -hw),
            corner(hl, hw),
            corner(-hl, hw),
            corner(-hl, -hw),
        ]
    }

    pub fn bev_area(&self) -> T {
        self.l * self.w
    }

    pub fn volume(&self) -> T {
        self.l * self.w * self.h
    }

    /// Copy with center moved by `d`.
    pub fn translated(&self, d: Vector3<T>) -> Self {
        Self {
            cx: self.cx + d.x,
            cy: self.cy + d.y,
            cz: self.cz + d.z,
            ..*self
        }
    }

    /// Copy with the pose replaced by `pose` (dims and velocity kept).
    pub fn with_pose(&self, pose: &RigidTransform<T>) -> Self {
        let t = pose.translation();
        Self {
            cx: t.x,
            cy: t.y,
            cz: t.z,
            theta: normalize_angle(pose.yaw()),
            ..*self
        }
    }
}

/// Yaw rotation plus center translation mapping the box body frame to the world frame.
pub fn box_to_transform<T: Real>(b: &BoundingBox<T>) -> RigidTransform<T> {
    RigidTransform::from_yaw_translation(b.theta, Vector3::new(b.cx, b.cy, b.cz))
}

/// Indices of the points whose body-frame coordinates fall inside the box grown by `margin`.
pub fn points_in_box_indices<T: Real>(
    pts: &[Point3<T>],
    b: &BoundingBox<T>,
    margin: T,
) -> Vec<usize> {
    let two = T::lit(2.0);
    let (hl, hw, hh) = (b.l / two + margin, b.w / two + margin, b.h / two + margin);
    let (s, c) = b.theta.sin_cos();
    // Cheap circumscribed-circle rejection before the body-frame test.
    let reach2 = hl * hl + hw * hw;
    pts.iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let dx = p.x - b.cx;
            let dy = p.y - b.cy;
            if dx * dx + dy * dy > reach2 {
                return None;
            }
            let bx = c * dx + s * dy;
            let by = -s * dx + c * dy;
            let bz = p.z - b.cz;
            (bx.abs() <= hl && by.abs() <= hw && bz.abs() <= hh).then_some(i)
        })
        .collect()
}

pub fn points_in_box<T: Real>(pts: &[Point3<T>], b: &BoundingBox<T>, margin: T) -> Vec<Point3<T>> {
    points_in_box_indices(pts, b, margin)
        .into_iter()
        .map(|i| pts[i])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::apply_transform;
    use nalgebra::Matrix3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn origin_box_is_identity() {
        let b = BoundingBox::new([0.0, 0.0, 0.0], [4.0, 2.0, 1.5], 0.0);
        let t = box_to_transform(&b);
        assert_eq!(*t.matrix(), nalgebra::Matrix4::identity());
    }

    #[test]
    fn quarter_turn_pose() {
        let b = BoundingBox::new([1.0, 2.0, 3.0], [4.0, 2.0, 1.5], FRAC_PI_2);
        let t = box_to_transform(&b);
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((t.rotation() - expected).amax() < 1e-15);
        assert_eq!(t.translation(), Vector3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn corner_matches_planar_rotation() {
        let theta = 30f64.to_radians();
        let b = BoundingBox::new([5.0, -3.0, 1.0], [4.6, 1.8, 1.5], theta);
        let body = Point3::new(b.l / 2.0, b.w / 2.0, b.h / 2.0);
        let world = box_to_transform(&b).apply(&body);
        // independent 2D rotation of the corner offset
        let ox = b.l / 2.0 * theta.cos() - b.w / 2.0 * theta.sin();
        let oy = b.l / 2.0 * theta.sin() + b.w / 2.0 * theta.cos();
        assert!((world.x - (5.0 + ox)).abs() < 1e-12);
        assert!((world.y - (-3.0 + oy)).abs() < 1e-12);
        assert!((world.z - (1.0 + 0.75)).abs() < 1e-12);
    }

    #[test]
    fn random_boxes_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let b = BoundingBox::new(
                [rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(0.0..3.0)],
                [4.0, 2.0, 1.5],
                rng.random_range(-PI..PI),
            );
            let t = box_to_transform(&b);
            let id = t.compose(&t.inverse());
            assert!((id.matrix() - nalgebra::Matrix4::identity()).amax() < 1e-9);
        }
    }

    #[test]
    fn membership_simple_cases() {
        let b = BoundingBox::new([2.0, 1.0, 0.8], [4.0, 2.0, 1.6], 0.4);
        let pts = vec![b.center(), Point3::new(2.0 + 40.0, 1.0, 0.8)];
        assert_eq!(points_in_box_indices(&pts, &b, 0.0), vec![0]);
    }

    #[test]
    fn membership_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = BoundingBox::new([1.0, -2.0, 1.0], [4.5, 1.9, 1.6], 1.1);
        let pts: Vec<Point3<f64>> = (0..1000)
            .map(|_| {
                Point3::new(
                    rng.random_range(-4.0..6.0),
                    rng.random_range(-7.0..3.0),
                    rng.random_range(-1.0..3.0),
                )
            })
            .collect();
        let margin = 0.1;
        let body = apply_transform(&box_to_transform(&b).inverse(), &pts);
        let expected: Vec<usize> = body
            .iter()
            .enumerate()
            .filter(|(_, p)| {
                p.x.abs() <= b.l / 2.0 + margin
                    && p.y.abs() <= b.w / 2.0 + margin
                    && p.z.abs() <= b.h / 2.0 + margin
            })
            .map(|(i, _)| i)
            .collect();
        assert!(!expected.is_empty());
        assert_eq!(points_in_box_indices(&pts, &b, margin), expected);
    }

    #[test]
    fn validity() {
        assert!(BoundingBox::new([0.0, 0.0, 0.0], [1.0, 1.0, 1.0], 7.0).is_valid());
        assert!(!BoundingBox::new([0.0, 0.0, 0.0], [0.0, 1.0, 1.0], 0.0).is_valid());
        let mut b = BoundingBox::new([0.0, 0.0, 0.0], [1.0, 1.0, 1.0], 0.0);
        b.cx = f64::NAN;
        assert!(!b.is_valid());
    }
}
