use nalgebra::Vector2;

use super::bbox::BoundingBox;
use crate::scalar::Real;

/// Shoelace area of a simple polygon (positive for counter-clockwise order).
pub fn polygon_area<T: Real>(poly: &[Vector2<T>]) -> T {
    if poly.len() < 3 {
        return T::zero();
    }
    let mut acc = T::zero();
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        acc += a.x * b.y - a.y * b.x;
    }
    acc / T::lit(2.0)
}

#[inline]
fn cross<T: Real>(o: Vector2<T>, a: Vector2<T>, b: Vector2<T>) -> T {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Sutherland–Hodgman clipping of `subject` against a convex counter-clockwise `clip`.
fn clip_convex<T: Real>(subject: &[Vector2<T>], clip: &[Vector2<T>]) -> Vec<Vector2<T>> {
    let mut output = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let p = input[j];
            let q = input[(j + 1) % input.len()];
            let dp = cross(a, b, p);
            let dq = cross(a, b, q);
            let p_in = dp >= T::zero();
            let q_in = dq >= T::zero();
            if p_in {
                output.push(p);
            }
            if p_in != q_in {
                let t = dp / (dp - dq);
                output.push(p + (q - p) * t);
            }
        }
    }
    output
}

/// Intersection-over-union of the two boxes' bird's-eye-view footprints.
pub fn bev_iou<T: Real>(a: &BoundingBox<T>, b: &BoundingBox<T>) -> T {
    let reach = (a.l * a.l + a.w * a.w).sqrt() / T::lit(2.0)
        + (b.l * b.l + b.w * b.w).sqrt() / T::lit(2.0);
    if (a.center_xy() - b.center_xy()).norm() >= reach {
        return T::zero();
    }
    let pa = a.footprint();
    let pb = b.footprint();
    let inter = polygon_area(&clip_convex(&pa, &pb)).max(T::zero());
    let union = a.bev_area() + b.bev_area() - inter;
    if union <= T::zero() {
        return T::zero();
    }
    (inter / union).clamp(T::zero(), T::one())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x: f64, y: f64, l: f64, w: f64, theta: f64) -> BoundingBox<f64> {
        BoundingBox::new([x, y, 0.0], [l, w, 1.0], theta)
    }

    #[test]
    fn identical_boxes() {
        let a = bx(3.0, -1.0, 4.5, 1.9, 0.3);
        assert!((bev_iou(&a, &a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_boxes() {
        let a = bx(0.0, 0.0, 4.5, 1.9, 0.3);
        let b = bx(20.0, 0.0, 4.5, 1.9, -1.0);
        assert_eq!(bev_iou(&a, &b), 0.0);
    }

    #[test]
    fn half_offset_unit_squares() {
        let a = bx(0.0, 0.0, 1.0, 1.0, 0.0);
        let b = bx(0.5, 0.0, 1.0, 1.0, 0.0);
        assert!((bev_iou(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rotated_square_inside_square() {
        // unit square rotated 45° centered in a 2×2 square: inter = 1, union = 4
        let a = bx(0.0, 0.0, 2.0, 2.0, 0.0);
        let b = bx(0.0, 0.0, 1.0, 1.0, std::f64::consts::FRAC_PI_4);
        assert!((bev_iou(&a, &b) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn works_in_single_precision() {
        let a = BoundingBox::new([0.0f32, 0.0, 0.0], [1.0, 1.0, 1.0], 0.0);
        let b = BoundingBox::new([0.5f32, 0.0, 0.0], [1.0, 1.0, 1.0], 0.0);
        assert!((bev_iou(&a, &b) - 1.0 / 3.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn symmetric_and_translation_invariant(
            x in -10.0..10.0f64, y in -10.0..10.0f64,
            l1 in 0.5..8.0f64, w1 in 0.5..4.0f64, t1 in -3.1..3.1f64,
            l2 in 0.5..8.0f64, w2 in 0.5..4.0f64, t2 in -3.1..3.1f64,
            dx in -100.0..100.0f64, dy in -100.0..100.0f64,
        ) {
            let a = bx(0.0, 0.0, l1, w1, t1);
            let b = bx(x / 3.0, y / 3.0, l2, w2, t2);
            let ab = bev_iou(&a, &b);
            prop_assert!((ab - bev_iou(&b, &a)).abs() < 1e-9);
            prop_assert!((0.0..=1.0).contains(&ab));
            let d = nalgebra::Vector3::new(dx, dy, 0.0);
            prop_assert!((ab - bev_iou(&a.translated(d), &b.translated(d))).abs() < 1e-9);
            prop_assert!((bev_iou(&a, &a) - 1.0).abs() < 1e-12);
        }
    }
}
