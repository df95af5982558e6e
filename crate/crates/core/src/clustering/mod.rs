//! Density-based clustering of 3D points backed by a k-d tree.

mod dbscan;
mod hdbscan;
mod kdtree;
mod voxel;

pub use dbscan::dbscan;
pub use hdbscan::hdbscan;
pub use kdtree::KdTree;
pub use voxel::{voxel_downsample, VoxelGrid};

use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Label value for points outside every cluster.
pub const NOISE: i32 = -1;

/// Per-point cluster assignment: `-1` for noise, `0..K` for clusters.
///
/// Cluster ids are numbered in order of the lowest point index they contain.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ClusterLabeling {
    pub labels: Vec<i32>,
    pub cluster_count: usize,
}

impl ClusterLabeling {
    pub fn all_noise(n: usize) -> Self {
        Self {
            labels: vec![NOISE; n],
            cluster_count: 0,
        }
    }

    /// Builds a labeling from arbitrary non-negative group keys, renumbering
    /// clusters in order of first appearance.
    pub fn from_raw(raw: &[i64]) -> Self {
        let mut map = std::collections::HashMap::new();
        let labels = raw
            .iter()
            .map(|&r| {
                if r < 0 {
                    NOISE
                } else {
                    let next = map.len() as i32;
                    *map.entry(r).or_insert(next)
                }
            })
            .collect();
        Self {
            labels,
            cluster_count: map.len(),
        }
    }

    /// Point indices of each cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.cluster_count];
        for (i, &l) in self.labels.iter().enumerate() {
            if l >= 0 {
                out[l as usize].push(i);
            }
        }
        out
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }

    pub fn is_valid(&self) -> bool {
        let k = self.cluster_count as i32;
        self.labels.iter().all(|&l| l == NOISE || (0..k).contains(&l))
            && self.members().iter().all(|m| !m.is_empty())
    }
}

fn check_scale(s: f64) -> Result<()> {
    if s > 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("scale factor {s} must be positive")))
    }
}

/// Multiplies every coordinate by `s` about the world origin.
pub fn scale_points<T: Real>(pts: &[Point3<T>], s: f64) -> Result<Vec<Point3<T>>> {
    check_scale(s)?;
    let s = T::lit(s);
    Ok(pts.iter().map(|p| Point3::from(p.coords * s)).collect())
}

/// Divides every coordinate by `s`; undoes [`scale_points`].
pub fn inverse_scale<T: Real>(pts: &[Point3<T>], s: f64) -> Result<Vec<Point3<T>>> {
    check_scale(s)?;
    let s = T::lit(s);
    Ok(pts.iter().map(|p| Point3::from(p.coords / s)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_scale_is_identity() {
        let pts = vec![Point3::new(1.5, -2.0, 0.25)];
        assert_eq!(scale_points(&pts, 1.0).unwrap(), pts);
    }

    #[test]
    fn half_scale() {
        let out = scale_points(&[Point3::new(2.0, 4.0, 6.0)], 0.5).unwrap();
        assert_eq!(out, vec![Point3::new(1.0, 2.0, 3.0)]);
    }

    #[test]
    fn round_trip_deviation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<Point3<f64>> = (0..1000)
            .map(|_| Point3::new(rng.random_range(-60.0..60.0), rng.random_range(-60.0..60.0), rng.random_range(-2.0..5.0)))
            .collect();
        let back = inverse_scale(&scale_points(&pts, 0.35).unwrap(), 0.35).unwrap();
        let max = pts.iter().zip(&back).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(max < 1e-9);
    }

    #[test]
    fn non_positive_scale_rejected() {
        assert!(scale_points::<f64>(&[], 0.0).is_err());
        assert!(inverse_scale::<f64>(&[], -1.0).is_err());
        assert!(scale_points::<f64>(&[], f64::NAN).is_err());
    }

    #[test]
    fn raw_relabeling() {
        let l = ClusterLabeling::from_raw(&[7, -1, 3, 7, 3, 9]);
        assert_eq!(l.labels, vec![0, -1, 1, 0, 1, 2]);
        assert_eq!(l.cluster_count, 3);
        assert!(l.is_valid());
    }
}
