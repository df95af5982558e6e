use std::collections::HashMap;

use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Points merged per cubic voxel.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGrid<T: Real> {
    /// Centroid of each occupied voxel, in order of first occupancy.
    pub centroids: Vec<Point3<T>>,
    /// Voxel index of every input point.
    pub assignment: Vec<usize>,
}

impl<T: Real> VoxelGrid<T> {
    /// Input point indices grouped per voxel.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.centroids.len()];
        for (i, &v) in self.assignment.iter().enumerate() {
            out[v].push(i);
        }
        out
    }
}

pub fn voxel_downsample<T: Real>(pts: &[Point3<T>], size: T) -> Result<VoxelGrid<T>> {
    if !(size > T::zero()) {
        return Err(Error::InvalidParameter("voxel size must be positive".into()));
    }
    let mut index: HashMap<[i64; 3], usize> = HashMap::new();
    let mut sums: Vec<(nalgebra::Vector3<T>, usize)> = Vec::new();
    let mut assignment = Vec::with_capacity(pts.len());
    for p in pts {
        let key = [p.x, p.y, p.z].map(|c| (c / size).floor().as_f64() as i64);
        let v = *index.entry(key).or_insert_with(|| {
            sums.push((nalgebra::Vector3::zeros(), 0));
            sums.len() - 1
        });
        sums[v].0 += p.coords;
        sums[v].1 += 1;
        assignment.push(v);
    }
    let centroids = sums
        .into_iter()
        .map(|(s, n)| Point3::from(s / T::from_usize(n).unwrap()))
        .collect();
    Ok(VoxelGrid {
        centroids,
        assignment,
    })
}
