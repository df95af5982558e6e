use nalgebra::{Matrix3, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{centroid, PointCloud};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundParams {
    /// Points closer than this to the plane are ground (meters).
    pub distance_threshold: f64,
    /// Largest accepted angle between plane normal and vertical (degrees).
    pub max_tilt_deg: f64,
    pub iterations: usize,
    /// A plane must explain at least this fraction of the cloud.
    pub min_inlier_fraction: f64,
    /// Hypotheses are scored on at most this many evenly strided points.
    pub score_sample: usize,
    pub seed: u64,
}

impl Default for GroundParams {
    fn default() -> Self {
        Self {
            distance_threshold: 0.15,
            max_tilt_deg: 15.0,
            iterations: 100,
            min_inlier_fraction: 0.05,
            score_sample: 4000,
            seed: 0,
        }
    }
}

/// Plane `normal · p + offset = 0` with unit, upward normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane<T: Real> {
    pub normal: Vector3<T>,
    pub offset: T,
}

impl<T: Real> Plane<T> {
    pub fn distance(&self, p: &Point3<T>) -> T {
        (self.normal.dot(&p.coords) + self.offset).abs()
    }

    fn through(a: &Point3<T>, b: &Point3<T>, c: &Point3<T>) -> Option<Self> {
        let n = (b - a).cross(&(c - a));
        let norm = n.norm();
        if norm <= T::tolerance() {
            return None;
        }
        let mut normal = n / norm;
        if normal.z < T::zero() {
            normal = -normal;
        }
        Some(Self {
            normal,
            offset: -normal.dot(&a.coords),
        })
    }

    fn tilt_ok(&self, max_tilt_deg: f64) -> bool {
        self.normal.z >= T::lit(max_tilt_deg.to_radians().cos())
    }
}

#[derive(Clone, Debug)]
pub struct GroundRemoval<T: Real> {
    /// Non-ground points.
    pub cloud: PointCloud<T>,
    /// `true` for points removed as ground, aligned with the input.
    pub ground_mask: Vec<bool>,
    pub plane: Option<Plane<T>>,
    /// Set when no acceptable plane was found and the input passed through.
    pub warning: bool,
}

/// RANSAC ground plane restricted to near-horizontal normals.
pub fn remove_ground<T: Real>(cloud: &PointCloud<T>, params: &GroundParams) -> GroundRemoval<T> {
    let n = cloud.len();
    let passthrough = || GroundRemoval {
        cloud: cloud.clone(),
        ground_mask: vec![false; n],
        plane: None,
        warning: true,
    };
    if n < 3 {
        return passthrough();
    }
    let pts = &cloud.points;
    let threshold = T::lit(params.distance_threshold);
    let stride = n.div_ceil(params.score_sample.max(1)).max(1);
    let sample: Vec<usize> = (0..n).step_by(stride).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<(usize, Plane<T>)> = None;
    for _ in 0..params.iterations {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        let c = rng.random_range(0..n);
        if a == b || b == c || a == c {
            continue;
        }
        let Some(plane) = Plane::through(&pts[a], &pts[b], &pts[c]) else {
            continue;
        };
        if !plane.tilt_ok(params.max_tilt_deg) {
            continue;
        }
        let count = sample
            .iter()
            .filter(|&&i| plane.distance(&pts[i]) <= threshold)
            .count();
        if best.is_none_or(|(bc, _)| count > bc) {
            best = Some((count, plane));
        }
    }
    let Some((_, mut plane)) = best else {
        return passthrough();
    };

    let inliers: Vec<Point3<T>> = pts
        .iter()
        .filter(|p| plane.distance(p) <= threshold)
        .copied()
        .collect();
    if let Some(refit) = fit_plane(&inliers).filter(|p| p.tilt_ok(params.max_tilt_deg)) {
        plane = refit;
    }
    let ground_mask: Vec<bool> = pts.iter().map(|p| plane.distance(p) <= threshold).collect();
    let count = ground_mask.iter().filter(|&&g| g).count();
    if (count as f64) < params.min_inlier_fraction * n as f64 {
        return passthrough();
    }
    let keep: Vec<bool> = ground_mask.iter().map(|g| !g).collect();
    GroundRemoval {
        cloud: cloud.filter_mask(&keep),
        ground_mask,
        plane: Some(plane),
        warning: false,
    }
}

/// Total least squares plane through `pts`.
fn fit_plane<T: Real>(pts: &[Point3<T>]) -> Option<Plane<T>> {
    if pts.len() < 3 {
        return None;
    }
    let c = centroid(pts)?;
    let mut cov = Matrix3::zeros();
    for p in pts {
        let d = p - c;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigen();
    let (k, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())?;
    let mut normal: Vector3<T> = eig.eigenvectors.column(k).into_owned();
    if normal.z < T::zero() {
        normal = -normal;
    }
    Some(Plane {
        normal,
        offset: -normal.dot(&c.coords),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn plane_cloud(seed: u64, n: usize) -> Vec<Point3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.01).unwrap();
        (0..n)
            .map(|_| Point3::new(rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0), noise.sample(&mut rng)))
            .collect()
    }

    fn params() -> GroundParams {
        GroundParams { distance_threshold: 0.1, ..Default::default() }
    }

    #[test]
    fn pure_plane_is_removed() {
        let cloud = PointCloud::new(plane_cloud(1, 1000), 0.0, 0);
        let r = remove_ground(&cloud, &params());
        assert!(!r.warning);
        assert!(r.cloud.len() <= 10);
    }

    #[test]
    fn box_above_plane_survives() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut pts = plane_cloud(3, 1000);
        for _ in 0..200 {
            pts.push(Point3::new(rng.random_range(2.0..6.0), rng.random_range(-1.0..1.0), rng.random_range(0.5..2.0)));
        }
        let cloud = PointCloud::new(pts, 0.0, 0);
        let r = remove_ground(&cloud, &params());
        let kept_box = r.ground_mask[1000..].iter().filter(|g| !**g).count();
        assert!(kept_box as f64 >= 0.99 * 200.0);
        assert!(r.cloud.len() <= 200 + 10);
    }

    #[test]
    fn ground_only_cloud_becomes_empty_without_error() {
        let pts: Vec<_> = (0..400).map(|i| Point3::new((i % 20) as f64, (i / 20) as f64, 0.0)).collect();
        let r = remove_ground(&PointCloud::new(pts, 0.0, 0), &params());
        assert!(r.cloud.is_empty());
        assert!(!r.warning);
    }

    #[test]
    fn vertical_wall_is_not_ground() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<_> = (0..500)
            .map(|_| Point3::new(rng.random_range(-5.0..5.0), 3.0, rng.random_range(0.0..10.0)))
            .collect();
        let r = remove_ground(&PointCloud::new(pts, 0.0, 0), &params());
        assert!(r.warning);
        assert_eq!(r.cloud.len(), 500);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let cloud = PointCloud::new(plane_cloud(5, 3000), 0.0, 0);
        let a = remove_ground(&cloud, &params());
        let b = remove_ground(&cloud, &params());
        assert_eq!(a.ground_mask, b.ground_mask);
    }
}
