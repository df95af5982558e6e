use nalgebra::Point3;

use crate::scalar::Real;

/// Synchronized capture in the common world frame.
///
/// Every point carries the id of the RSU LiDAR that produced it so merged
/// clouds keep their provenance.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct PointCloud<T: Real> {
    pub points: Vec<Point3<T>>,
    pub sensor_ids: Vec<u16>,
    /// Capture time in seconds.
    pub timestamp: f64,
}

impl<T: Real> PointCloud<T> {
    pub fn new(points: Vec<Point3<T>>, timestamp: f64, sensor_id: u16) -> Self {
        let sensor_ids = vec![sensor_id; points.len()];
        Self {
            points,
            sensor_ids,
            timestamp,
        }
    }

    pub fn empty(timestamp: f64) -> Self {
        Self {
            points: Vec::new(),
            sensor_ids: Vec::new(),
            timestamp,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Keeps the points at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            sensor_ids: indices.iter().map(|&i| self.sensor_ids[i]).collect(),
            timestamp: self.timestamp,
        }
    }

    /// Keeps the points whose mask entry is `true`.
    pub fn filter_mask(&self, keep: &[bool]) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep[i]).collect();
        self.select(&idx)
    }

    /// Appends another cloud; the timestamp of `self` is kept.
    pub fn extend_from(&mut self, other: &Self) {
        self.points.extend_from_slice(&other.points);
        self.sensor_ids.extend_from_slice(&other.sensor_ids);
    }

    pub fn is_finite(&self) -> bool {
        self.points
            .iter()
            .all(|p| p.x.is_finite() && p.y.is_finite() && p.z.is_finite())
    }

    pub fn centroid(&self) -> Option<Point3<T>> {
        centroid(&self.points)
    }
}

pub fn centroid<T: Real>(pts: &[Point3<T>]) -> Option<Point3<T>> {
    if pts.is_empty() {
        return None;
    }
    let mut acc = nalgebra::Vector3::zeros();
    for p in pts {
        acc += p.coords;
    }
    Some(Point3::from(acc / T::from_usize(pts.len()).unwrap()))
}
