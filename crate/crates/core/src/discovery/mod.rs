//! Multi-frame, multi-scale object discovery.
//!
//! History frames are flow-compensated onto the current frame, ground is
//! removed, and DBSCAN runs on progressively shrunk copies of the working
//! cloud. Shrinking the cloud by `s` is equivalent to clustering with radius
//! `eps / s`, so sparse objects that fragment at full scale connect at a
//! smaller one, while objects already found at a larger scale are taken out
//! of the working set first.

mod ground;

pub use ground::{remove_ground, GroundParams, GroundRemoval, Plane};

use nalgebra::{Point3, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{dbscan, scale_points};
use crate::error::{Error, Result};
use crate::geometry::{fit_box_lshape_with, BoundingBox, BoxFitParams, PointCloud};
use crate::registration::{estimate_scene_flow, FlowConfig};
use crate::scalar::Real;

/// Current frame plus history frames, all in the common world frame.
#[derive(Clone, Debug)]
pub struct FrameBundle<T: Real> {
    pub current: PointCloud<T>,
    pub history: Vec<PointCloud<T>>,
}

impl<T: Real> FrameBundle<T> {
    pub fn single(current: PointCloud<T>) -> Self {
        Self {
            current,
            history: Vec::new(),
        }
    }

    pub fn k(&self) -> usize {
        self.history.len()
    }
}

/// Closed `[min, max]` intervals for box length, width and height (meters).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DimLimits {
    pub l: [f64; 2],
    pub w: [f64; 2],
    pub h: [f64; 2],
}

impl Default for DimLimits {
    fn default() -> Self {
        Self {
            l: [2.0, 15.0],
            w: [1.0, 4.0],
            h: [1.0, 4.5],
        }
    }
}

impl DimLimits {
    pub fn contains<T: Real>(&self, b: &BoundingBox<T>) -> bool {
        let inside = |v: T, r: [f64; 2]| v.as_f64() >= r[0] && v.as_f64() <= r[1];
        inside(b.l, self.l) && inside(b.w, self.w) && inside(b.h, self.h)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("l", self.l), ("w", self.w), ("h", self.h)] {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] < r[1]) {
                return Err(Error::Config(format!(
                    "dim_limits.{name}: need min < max, got {r:?}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscoveryConfig {
    pub scales: Vec<f64>,
    pub eps: f64,
    pub min_pts: usize,
    pub dim_limits: DimLimits,
    /// Number of history frames aggregated into each bundle.
    pub history_frames: usize,
    /// Clusters whose box fails `dim_limits` leave their points in the
    /// working cloud for the next scale instead of consuming them.
    pub release_rejected: bool,
    pub detection_range: f64,
    /// Intersection center `[x, y]` the detection range is measured from.
    pub center: [f64; 2],
    pub box_fit: BoxFitParams,
    pub ground: GroundParams,
    pub flow: FlowConfig,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        Self {
            scales: vec![1.0, 0.7, 0.5],
            eps: 0.7,
            min_pts: 5,
            dim_limits: DimLimits::default(),
            history_frames: 2,
            release_rejected: true,
            detection_range: 50.0,
            center: [0.0, 0.0],
            box_fit: BoxFitParams::default(),
            ground: GroundParams::default(),
            flow: FlowConfig::default(),
        }
    }
}

impl DiscoveryConfig {
    pub fn validate(&self) -> Result<()> {
        let Some(&first) = self.scales.first() else {
            return Err(Error::Config("scales must not be empty".into()));
        };
        if first != 1.0 {
            return Err(Error::Config(format!("first scale must be 1.0, got {first}")));
        }
        if self.scales.iter().any(|&s| !(s > 0.0 && s <= 1.0)) {
            return Err(Error::Config("scales must lie in (0, 1]".into()));
        }
        if self.scales.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("scales must be strictly descending".into()));
        }
        if !(self.eps > 0.0) || self.min_pts == 0 {
            return Err(Error::Config("dbscan needs eps > 0 and min_pts ≥ 1".into()));
        }
        if !(self.detection_range > 0.0) {
            return Err(Error::Config("detection_range must be positive".into()));
        }
        self.dim_limits.validate()
    }
}

/// Concatenates simultaneous clouds from several RSUs.
pub fn merge_rsu_clouds<T: Real>(clouds: &[PointCloud<T>]) -> Result<PointCloud<T>> {
    let Some(first) = clouds.first() else {
        return Err(Error::InvalidParameter("no clouds to merge".into()));
    };
    let mut out = first.clone();
    for c in &clouds[1..] {
        if c.timestamp != first.timestamp {
            return Err(Error::InvalidParameter(format!(
                "timestamp mismatch: {} vs {}",
                first.timestamp, c.timestamp
            )));
        }
        out.extend_from(c);
    }
    Ok(out)
}

/// Flow-compensates every history frame onto the current one and unions them.
///
/// Frames whose flow estimate fails are skipped with a warning.
pub fn aggregate_frames<T: Real>(bundle: &FrameBundle<T>, cfg: &FlowConfig) -> PointCloud<T> {
    let moved: Vec<Option<PointCloud<T>>> = bundle
        .history
        .par_iter()
        .map(|h| match estimate_scene_flow(h, &bundle.current, cfg) {
            Ok(flow) => Some(PointCloud {
                points: flow.translate(&h.points),
                sensor_ids: h.sensor_ids.clone(),
                timestamp: bundle.current.timestamp,
            }),
            Err(e) => {
                log::warn!("skipping history frame at t={}: {e}", h.timestamp);
                None
            }
        })
        .collect();
    let mut out = bundle.current.clone();
    for m in moved.into_iter().flatten() {
        out.extend_from(&m);
    }
    out
}

/// Keeps boxes whose dimensions all lie within the closed limits.
pub fn filter_by_dimension<T: Real>(boxes: Vec<BoundingBox<T>>, limits: &DimLimits) -> Vec<BoundingBox<T>> {
    boxes.into_iter().filter(|b| limits.contains(b)).collect()
}

/// Keeps boxes whose whole footprint lies within `range` of `center`.
pub fn filter_by_range<T: Real>(boxes: Vec<BoundingBox<T>>, center: [f64; 2], range: f64) -> Vec<BoundingBox<T>> {
    let c = Vector2::new(T::lit(center[0]), T::lit(center[1]));
    let r = T::lit(range);
    boxes
        .into_iter()
        .filter(|b| b.footprint().iter().all(|p| (p - c).norm() <= r))
        .collect()
}

/// What happened at one scale of the clustering loop.
#[derive(Clone, Debug)]
pub struct ScaleRecord<T: Real> {
    pub scale: f64,
    pub working_points: usize,
    pub clusters: usize,
    pub accepted: Vec<BoundingBox<T>>,
    pub rejected: Vec<BoundingBox<T>>,
}

#[derive(Clone, Debug)]
pub struct DiscoveryTrace<T: Real> {
    pub boxes: Vec<BoundingBox<T>>,
    pub aggregated_points: usize,
    pub ground_found: bool,
    pub scales: Vec<ScaleRecord<T>>,
}

/// Discovered boxes at the bundle's current timestep.
pub fn discover<T: Real>(bundle: &FrameBundle<T>, cfg: &DiscoveryConfig) -> Result<Vec<BoundingBox<T>>> {
    Ok(discover_traced(bundle, cfg)?.boxes)
}

pub fn discover_traced<T: Real>(bundle: &FrameBundle<T>, cfg: &DiscoveryConfig) -> Result<DiscoveryTrace<T>> {
    cfg.validate()?;
    let aggregated = aggregate_frames(bundle, &cfg.flow);
    let aggregated_points = aggregated.len();
    let ground = remove_ground(&aggregated, &cfg.ground);
    let (boxes, scales) = cluster_multiscale(&ground.cloud.points, cfg)?;
    let boxes = filter_by_dimension(boxes, &cfg.dim_limits);
    let boxes = filter_by_range(boxes, cfg.center, cfg.detection_range);
    Ok(DiscoveryTrace {
        boxes,
        aggregated_points,
        ground_found: !ground.warning,
        scales,
    })
}

/// The scale loop on a ground-free cloud; boxes are not yet filtered.
pub fn cluster_multiscale<T: Real>(
    points: &[Point3<T>],
    cfg: &DiscoveryConfig,
) -> Result<(Vec<BoundingBox<T>>, Vec<ScaleRecord<T>>)> {
    let mut working: Vec<Point3<T>> = points.to_vec();
    let mut boxes = Vec::new();
    let mut records = Vec::new();
    for &s in &cfg.scales {
        let scaled = scale_points(&working, s)?;
        let labels = dbscan(&scaled, T::lit(cfg.eps), cfg.min_pts)?;
        let mut consumed = vec![false; working.len()];
        let mut record = ScaleRecord {
            scale: s,
            working_points: working.len(),
            clusters: labels.cluster_count,
            accepted: Vec::new(),
            rejected: Vec::new(),
        };
        for members in labels.members() {
            // Cluster points in original coordinates are the working points themselves.
            let cluster: Vec<Point3<T>> = members.iter().map(|&i| working[i]).collect();
            let fitted = fit_box_lshape_with(&cluster, &cfg.box_fit).ok();
            let keep = fitted.as_ref().is_some_and(|b| cfg.dim_limits.contains(b));
            if keep || !cfg.release_rejected {
                for &i in &members {
                    consumed[i] = true;
                }
            }
            match fitted {
                Some(b) if keep || !cfg.release_rejected => {
                    record.accepted.push(b);
                    boxes.push(b);
                }
                Some(b) => record.rejected.push(b),
                None => {}
            }
        }
        working = working
            .into_iter()
            .zip(consumed)
            .filter_map(|(p, c)| (!c).then_some(p))
            .collect();
        records.push(record);
    }
    Ok((boxes, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::fit_box_lshape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn car_blob(rng: &mut ChaCha8Rng, c: [f64; 2], n: usize) -> Vec<Point3<f64>> {
        // Points on the two visible sides and the roof of a 4.5 × 1.9 × 1.6 car.
        (0..n)
            .map(|k| {
                let (x, y, z) = match k % 3 {
                    0 => (rng.random_range(-2.25..2.25), -0.95, rng.random_range(0.0..1.6)),
                    1 => (-2.25, rng.random_range(-0.95..0.95), rng.random_range(0.0..1.6)),
                    _ => (rng.random_range(-2.25..2.25), rng.random_range(-0.95..0.95), 1.6),
                };
                Point3::new(c[0] + x, c[1] + y, z)
            })
            .collect()
    }

    fn ground(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point3<f64>> {
        (0..n)
            .map(|_| Point3::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0), 0.0))
            .collect()
    }

    fn base_cfg() -> DiscoveryConfig {
        DiscoveryConfig {
            ground: GroundParams { distance_threshold: 0.1, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(DiscoveryConfig::default().validate().is_ok());
        let bad = |f: fn(&mut DiscoveryConfig)| {
            let mut c = DiscoveryConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.scales = vec![0.7, 0.5]));
        assert!(bad(|c| c.scales = vec![1.0, 1.0]));
        assert!(bad(|c| c.scales = vec![1.0, 0.5, 0.7]));
        assert!(bad(|c| c.scales = vec![1.0, -0.5]));
        assert!(bad(|c| c.scales.clear()));
        assert!(bad(|c| c.dim_limits.l = [3.0, 3.0]));
    }

    #[test]
    fn merge_checks_timestamps_and_keeps_tags() {
        let a = PointCloud::new(vec![Point3::new(0.0, 0.0, 0.0); 100], 1.0, 1);
        let b = PointCloud::new(vec![Point3::new(5.0, 0.0, 0.0); 100], 1.0, 2);
        let m = merge_rsu_clouds(&[a.clone(), b]).unwrap();
        assert_eq!(m.len(), 200);
        assert!(m.sensor_ids.contains(&1) && m.sensor_ids.contains(&2));
        assert_eq!(merge_rsu_clouds(std::slice::from_ref(&a)).unwrap(), a);
        let c = PointCloud::new(vec![Point3::new(0.0, 0.0, 0.0)], 2.0, 3);
        assert!(merge_rsu_clouds(&[a, c]).is_err());
    }

    #[test]
    fn dimension_filter_is_closed() {
        let lim = DimLimits::default();
        let car = BoundingBox::new([0.0, 0.0, 0.8], [4.5, 1.9, 1.6], 0.0);
        let huge = BoundingBox::new([0.0, 0.0, 2.0], [30.0, 6.0, 4.0], 0.0);
        let edge = BoundingBox::new([0.0, 0.0, 1.0], [15.0, 2.0, 2.0], 0.0);
        let kept = filter_by_dimension(vec![car, huge, edge], &lim);
        assert_eq!(kept, vec![car, edge]);
    }

    #[test]
    fn single_car_is_discovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut pts = car_blob(&mut rng, [5.0, 3.0], 900);
        pts.extend(ground(&mut rng, 3000));
        let boxes = discover(&FrameBundle::single(PointCloud::new(pts, 0.0, 0)), &base_cfg()).unwrap();
        assert_eq!(boxes.len(), 1);
        let b = boxes[0];
        assert!((b.cx - 5.0).hypot(b.cy - 3.0) < 0.3);
        assert!((b.l - 4.5).abs() < 0.4 && (b.w - 1.9).abs() < 0.4 && (b.h - 1.6).abs() < 0.4);
    }

    #[test]
    fn single_scale_without_history_is_classic_pipeline() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut pts = car_blob(&mut rng, [5.0, 3.0], 600);
        pts.extend(car_blob(&mut rng, [-8.0, 10.0], 600));
        pts.extend(ground(&mut rng, 3000));
        let cloud = PointCloud::new(pts, 0.0, 0);
        let cfg = DiscoveryConfig { scales: vec![1.0], ..base_cfg() };
        let boxes = discover(&FrameBundle::single(cloud.clone()), &cfg).unwrap();

        let g = remove_ground(&cloud, &cfg.ground);
        let labels = dbscan(&g.cloud.points, cfg.eps, cfg.min_pts).unwrap();
        let classic: Vec<_> = labels
            .members()
            .iter()
            .map(|m| fit_box_lshape(&m.iter().map(|&i| g.cloud.points[i]).collect::<Vec<_>>()).unwrap())
            .filter(|b| cfg.dim_limits.contains(b))
            .collect();
        assert_eq!(boxes, classic);
    }

    #[test]
    fn boxes_respect_detection_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut pts = car_blob(&mut rng, [5.0, 0.0], 600);
        pts.extend(car_blob(&mut rng, [49.5, 0.0], 600));
        let cfg = DiscoveryConfig { ground: GroundParams { min_inlier_fraction: 0.9, ..Default::default() }, ..base_cfg() };
        let boxes = discover(&FrameBundle::single(PointCloud::new(pts, 0.0, 0)), &cfg).unwrap();
        assert_eq!(boxes.len(), 1);
        for b in &boxes {
            assert!(b.footprint().iter().all(|p| p.norm() <= cfg.detection_range));
        }
    }

    #[test]
    fn working_cloud_shrinks_across_scales() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut pts = car_blob(&mut rng, [0.0, 0.0], 600);
        // A sparse row that only connects at smaller scales.
        pts.extend((0..12).map(|i| Point3::new(10.0 + i as f64 * 1.0, 5.0, 1.0)));
        let (_, records) = cluster_multiscale(&pts, &base_cfg()).unwrap();
        for w in records.windows(2) {
            let removed: usize = w[0].working_points - w[1].working_points;
            assert_eq!(removed == 0, w[0].accepted.is_empty());
        }
        assert_eq!(records[0].working_points, pts.len());
    }

    #[test]
    fn static_history_concatenates() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts = car_blob(&mut rng, [0.0, 0.0], 300);
        let c = PointCloud::new(pts.clone(), 1.0, 0);
        let bundle = FrameBundle {
            current: c.clone(),
            history: vec![PointCloud::new(pts.clone(), 0.0, 0), PointCloud::new(pts.clone(), 2.0, 0)],
        };
        let cfg = FlowConfig { exclude_ground: false, ..Default::default() };
        let agg = aggregate_frames(&bundle, &cfg);
        assert_eq!(agg.len(), 900);
        for (k, p) in agg.points.iter().enumerate() {
            assert!((p - pts[k % 300]).norm() < 1e-6);
        }
        assert_eq!(aggregate_frames(&FrameBundle::single(c.clone()), &cfg), c);
    }
}
