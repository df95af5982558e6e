//! Deterministic ray-casting scene generator.
//!
//! Vehicles are solid boxes moving along piecewise constant-velocity
//! trajectories over a flat ground plane. Each elevated RSU casts rays on a
//! fixed azimuth × elevation grid; the nearest surface hit wins, so vehicles
//! occlude each other and the ground. Every (frame, RSU) pair draws from its
//! own RNG stream, so output does not depend on evaluation order.

mod presets;

pub use presets::{fixture_library, preset, random_intersection, partial_visibility, Preset};

use nalgebra::{Point3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{bev_iou, BoundingBox, PointCloud};

/// Object id of ground returns.
pub const GROUND_ID: i32 = -1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RsuSpec {
    pub id: u16,
    /// Mounting point `[x, y]` in the world frame (m).
    pub position: [f64; 2],
    /// Sensor height above ground (m).
    pub height: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSpec {
    pub id: u32,
    /// `[l, w, h]` in meters.
    pub dims: [f64; 3],
    /// `[t, x, y]` waypoints, `t` in seconds and strictly increasing. The
    /// vehicle rests at the first/last waypoint outside their time span.
    pub waypoints: Vec<[f64; 3]>,
    /// Fixed heading; defaults to the direction of travel.
    #[serde(default)]
    pub yaw: Option<f64>,
    /// First frame the vehicle exists in.
    #[serde(default)]
    pub spawn: Option<usize>,
    /// First frame the vehicle no longer exists in.
    #[serde(default)]
    pub despawn: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sampling {
    pub az_res_deg: f64,
    pub az_min_deg: f64,
    pub az_max_deg: f64,
    pub el_res_deg: f64,
    pub el_min_deg: f64,
    pub el_max_deg: f64,
    /// Gaussian range noise σ (m).
    pub range_noise: f64,
    pub max_range: f64,
    pub min_range: f64,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            az_res_deg: 0.25,
            az_min_deg: -180.0,
            az_max_deg: 180.0,
            el_res_deg: 0.5,
            el_min_deg: -40.0,
            el_max_deg: -2.0,
            range_noise: 0.02,
            max_range: 60.0,
            min_range: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Dropout {
    pub ground: f64,
    pub vehicle: f64,
}

impl Default for Dropout {
    fn default() -> Self {
        Self {
            ground: 0.5,
            vehicle: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub frames: usize,
    pub frame_dt: f64,
    pub rsus: Vec<RsuSpec>,
    pub vehicles: Vec<VehicleSpec>,
    pub sampling: Sampling,
    /// Half side of the square ground patch centred on the origin (m).
    pub ground_extent: f64,
    pub dropout: Dropout,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            frames: 10,
            frame_dt: 0.1,
            rsus: vec![RsuSpec {
                id: 0,
                position: [0.0, 0.0],
                height: 6.0,
            }],
            vehicles: Vec::new(),
            sampling: Sampling::default(),
            ground_extent: 60.0,
            dropout: Dropout::default(),
        }
    }
}

impl VehicleSpec {
    pub fn present(&self, frame: usize) -> bool {
        self.spawn.is_none_or(|s| frame >= s) && self.despawn.is_none_or(|d| frame < d)
    }

    /// Position and velocity at time `t`.
    pub fn kinematics(&self, t: f64) -> (Vector2<f64>, Vector2<f64>) {
        let wp = &self.waypoints;
        let at = |k: usize| Vector2::new(wp[k][1], wp[k][2]);
        if t < wp[0][0] {
            return (at(0), Vector2::zeros());
        }
        for k in 0..wp.len() - 1 {
            let (t0, t1) = (wp[k][0], wp[k + 1][0]);
            if t >= t0 && t < t1 {
                let v = (at(k + 1) - at(k)) / (t1 - t0);
                return (at(k) + v * (t - t0), v);
            }
        }
        (at(wp.len() - 1), Vector2::zeros())
    }

    /// Heading at time `t`: the fixed yaw, else the direction of the current
    /// segment, else of the nearest moving segment.
    pub fn heading(&self, t: f64) -> f64 {
        if let Some(y) = self.yaw {
            return y;
        }
        let wp = &self.waypoints;
        let dirs: Vec<(f64, Option<f64>)> = wp
            .windows(2)
            .map(|s| {
                let d = Vector2::new(s[1][1] - s[0][1], s[1][2] - s[0][2]);
                (s[0][0], (d.norm() > 1e-12).then(|| d.y.atan2(d.x)))
            })
            .collect();
        let current = dirs.iter().rposition(|(t0, _)| *t0 <= t).unwrap_or(0);
        (0..dirs.len())
            .filter_map(|k| dirs[k].1.map(|y| (k.abs_diff(current), k < current, y)))
            .min_by_key(|&(d, earlier, _)| (d, !earlier))
            .map_or(0.0, |(_, _, y)| y)
    }

    /// Ground-truth box at time `t` (bottom face on the ground).
    pub fn box_at(&self, t: f64) -> BoundingBox<f64> {
        let (p, v) = self.kinematics(t);
        let [l, w, h] = self.dims;
        BoundingBox::new([p.x, p.y, h / 2.0], [l, w, h], self.heading(t)).with_velocity(v.x, v.y)
    }
}

impl SimConfig {
    pub fn timestamp(&self, frame: usize) -> f64 {
        frame as f64 * self.frame_dt
    }

    /// Boxes of the vehicles present in `frame`, with their ids.
    pub fn ground_truth(&self, frame: usize) -> Vec<(u32, BoundingBox<f64>)> {
        let t = self.timestamp(frame);
        self.vehicles
            .iter()
            .filter(|v| v.present(frame))
            .map(|v| (v.id, v.box_at(t)))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.frames == 0 || !(self.frame_dt > 0.0) {
            return bad("need frames ≥ 1 and frame_dt > 0".into());
        }
        if self.rsus.is_empty() {
            return bad("at least one RSU is required".into());
        }
        let mut ids: Vec<u16> = self.rsus.iter().map(|r| r.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("duplicate RSU id".into());
        }
        if let Some(r) = self.rsus.iter().find(|r| !(r.height > 0.0)) {
            return bad(format!("RSU {} must be elevated (height {})", r.id, r.height));
        }
        let s = &self.sampling;
        if !(s.az_res_deg > 0.0 && s.el_res_deg > 0.0 && s.az_min_deg < s.az_max_deg && s.el_min_deg <= s.el_max_deg) {
            return bad("sampling grid must have positive resolution and ordered bounds".into());
        }
        if !(s.el_min_deg >= -90.0 && s.el_max_deg <= 90.0) {
            return bad("elevations must lie in [-90°, 90°]".into());
        }
        if !(s.range_noise >= 0.0 && s.max_range > s.min_range && s.min_range >= 0.0) {
            return bad("range settings invalid".into());
        }
        for p in [self.dropout.ground, self.dropout.vehicle] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("dropout {p} outside [0, 1]"));
            }
        }
        let mut vids: Vec<u32> = self.vehicles.iter().map(|v| v.id).collect();
        vids.sort_unstable();
        if vids.windows(2).any(|w| w[0] == w[1]) {
            return bad("duplicate vehicle id".into());
        }
        for v in &self.vehicles {
            if v.dims.iter().any(|&d| !(d > 0.0)) {
                return bad(format!("vehicle {} has non-positive dims", v.id));
            }
            if v.waypoints.is_empty() || v.waypoints.windows(2).any(|w| !(w[1][0] > w[0][0])) {
                return bad(format!("vehicle {} needs waypoints with increasing times", v.id));
            }
        }
        for f in 0..self.frames {
            let gt = self.ground_truth(f);
            for (i, (ia, a)) in gt.iter().enumerate() {
                for (ib, b) in &gt[i + 1..] {
                    if bev_iou(a, b) > 0.0 {
                        return bad(format!("vehicles {ia} and {ib} overlap in frame {f}"));
                    }
                }
                for r in &self.rsus {
                    let inside = crate::geometry::points_in_box_indices(
                        &[Point3::new(r.position[0], r.position[1], a.h / 2.0)],
                        a,
                        0.0,
                    );
                    if !inside.is_empty() && r.height <= a.h {
                        return bad(format!("RSU {} inside vehicle {ia} in frame {f}", r.id));
                    }
                }
            }
        }
        Ok(())
    }
}

/// One RSU's capture in one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct RsuCapture {
    pub rsu: u16,
    pub cloud: PointCloud<f64>,
    /// Vehicle id per point, [`GROUND_ID`] for ground. Diagnostics only.
    pub object_ids: Vec<i32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimFrame {
    pub index: usize,
    pub timestamp: f64,
    pub captures: Vec<RsuCapture>,
    pub ground_truth: Vec<(u32, BoundingBox<f64>)>,
}

impl SimFrame {
    /// All RSU captures concatenated.
    pub fn merged(&self) -> PointCloud<f64> {
        let mut out = PointCloud::empty(self.timestamp);
        for c in &self.captures {
            out.extend_from(&c.cloud);
        }
        out
    }

    pub fn merged_object_ids(&self) -> Vec<i32> {
        self.captures.iter().flat_map(|c| c.object_ids.iter().copied()).collect()
    }

    pub fn gt_boxes(&self) -> Vec<BoundingBox<f64>> {
        self.ground_truth.iter().map(|(_, b)| *b).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOutput {
    pub frames: Vec<SimFrame>,
}

struct Hit {
    range: f64,
    object: i32,
}

/// Entry distance of the ray `o + t·d` into the box, if any.
fn ray_box(o: &Point3<f64>, d: &Vector3<f64>, b: &BoundingBox<f64>) -> Option<f64> {
    let (s, c) = b.theta.sin_cos();
    let (ox, oy) = (o.x - b.cx, o.y - b.cy);
    let lo = [c * ox + s * oy, -s * ox + c * oy, o.z - b.cz];
    let ld = [c * d.x + s * d.y, -s * d.x + c * d.y, d.z];
    let half = [b.l / 2.0, b.w / 2.0, b.h / 2.0];
    let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
    for k in 0..3 {
        if ld[k].abs() < 1e-15 {
            if lo[k].abs() > half[k] {
                return None;
            }
            continue;
        }
        let a = (-half[k] - lo[k]) / ld[k];
        let b = (half[k] - lo[k]) / ld[k];
        let (near, far) = if a < b { (a, b) } else { (b, a) };
        t0 = t0.max(near);
        t1 = t1.min(far);
        if t0 > t1 {
            return None;
        }
    }
    (t0 > 0.0).then_some(t0)
}

fn cast(o: &Point3<f64>, d: &Vector3<f64>, boxes: &[(u32, BoundingBox<f64>)], ground_extent: f64) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    if d.z < 0.0 {
        let t = -o.z / d.z;
        let p = o + d * t;
        if p.x.abs() <= ground_extent && p.y.abs() <= ground_extent {
            best = Some(Hit { range: t, object: GROUND_ID });
        }
    }
    for (id, b) in boxes {
        if let Some(t) = ray_box(o, d, b) {
            if best.as_ref().is_none_or(|h| t < h.range) {
                best = Some(Hit { range: t, object: *id as i32 });
            }
        }
    }
    best
}

fn grid(min: f64, max: f64, res: f64, half_open: bool) -> Vec<f64> {
    let n = ((max - min) / res + 1e-9).floor() as usize;
    let mut v: Vec<f64> = (0..=n).map(|k| (min + k as f64 * res).to_radians()).collect();
    if half_open && (min + n as f64 * res - max).abs() < 1e-9 {
        v.pop();
    }
    v
}

fn capture(cfg: &SimConfig, frame: usize, rsu_index: usize, boxes: &[(u32, BoundingBox<f64>)]) -> RsuCapture {
    let rsu = &cfg.rsus[rsu_index];
    let s = &cfg.sampling;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(((frame as u64) << 16) | rsu_index as u64);
    let noise = Normal::new(0.0, s.range_noise).expect("finite noise");
    let origin = Point3::new(rsu.position[0], rsu.position[1], rsu.height);
    // Only boxes that can be reached within max_range matter.
    let near: Vec<(u32, BoundingBox<f64>)> = boxes
        .iter()
        .filter(|(_, b)| {
            let reach = (b.l * b.l + b.w * b.w).sqrt() / 2.0;
            (b.cx - origin.x).hypot(b.cy - origin.y) - reach <= s.max_range
        })
        .copied()
        .collect();
    let full_circle = s.az_max_deg - s.az_min_deg >= 360.0 - 1e-9;
    let azimuths = grid(s.az_min_deg, s.az_max_deg, s.az_res_deg, full_circle);
    let elevations = grid(s.el_min_deg, s.el_max_deg, s.el_res_deg, false);
    let mut points = Vec::new();
    let mut ids = Vec::new();
    for &el in &elevations {
        let (se, ce) = el.sin_cos();
        for &az in &azimuths {
            let (sa, ca) = az.sin_cos();
            let d = Vector3::new(ce * ca, ce * sa, se);
            let Some(hit) = cast(&origin, &d, &near, cfg.ground_extent) else {
                continue;
            };
            let r = hit.range + noise.sample(&mut rng);
            let drop = if hit.object == GROUND_ID { cfg.dropout.ground } else { cfg.dropout.vehicle };
            let dropped = rng.random::<f64>() < drop;
            if dropped || hit.range > s.max_range || hit.range < s.min_range {
                continue;
            }
            points.push(origin + d * r);
            ids.push(hit.object);
        }
    }
    RsuCapture {
        rsu: rsu.id,
        cloud: PointCloud::new(points, cfg.timestamp(frame), rsu.id),
        object_ids: ids,
    }
}

/// Renders every frame of the scene.
pub fn simulate(cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate()?;
    let frames = (0..cfg.frames)
        .into_par_iter()
        .map(|f| {
            let gt = cfg.ground_truth(f);
            let captures = (0..cfg.rsus.len()).map(|r| capture(cfg, f, r, &gt)).collect();
            SimFrame {
                index: f,
                timestamp: cfg.timestamp(f),
                captures,
                ground_truth: gt,
            }
        })
        .collect();
    Ok(SimOutput { frames })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::points_in_box_indices;

    fn car(id: u32, x: f64, y: f64, yaw: f64) -> VehicleSpec {
        VehicleSpec {
            id,
            dims: [4.5, 1.9, 1.6],
            waypoints: vec![[0.0, x, y]],
            yaw: Some(yaw),
            spawn: None,
            despawn: None,
        }
    }

    fn small_cfg() -> SimConfig {
        SimConfig {
            frames: 2,
            sampling: Sampling { az_res_deg: 1.0, el_res_deg: 1.0, ..Default::default() },
            ground_extent: 30.0,
            ..Default::default()
        }
    }

    #[test]
    fn empty_scene_is_ground_only() {
        let out = simulate(&small_cfg()).unwrap();
        for f in &out.frames {
            assert!(f.ground_truth.is_empty());
            let c = &f.captures[0];
            assert!(!c.cloud.is_empty());
            assert!(c.object_ids.iter().all(|&i| i == GROUND_ID));
            assert!(c.cloud.points.iter().all(|p| p.z.abs() < 0.2));
        }
    }

    #[test]
    fn car_below_rsu_is_contained() {
        let cfg = SimConfig {
            rsus: vec![RsuSpec { id: 3, position: [0.0, 0.0], height: 8.0 }],
            vehicles: vec![car(1, 0.0, 0.0, 0.4)],
            sampling: Sampling { el_min_deg: -90.0, el_max_deg: -30.0, range_noise: 0.0, ..Default::default() },
            frames: 1,
            ..Default::default()
        };
        let out = simulate(&cfg).unwrap();
        let f = &out.frames[0];
        let gt = f.ground_truth[0].1;
        let car_pts: Vec<_> = f.captures[0]
            .cloud
            .points
            .iter()
            .zip(&f.captures[0].object_ids)
            .filter(|(_, &id)| id == 1)
            .map(|(p, _)| *p)
            .collect();
        assert!(!car_pts.is_empty());
        assert_eq!(points_in_box_indices(&car_pts, &gt, 1e-6).len(), car_pts.len());
        assert!(f.captures[0].cloud.sensor_ids.iter().all(|&s| s == 3));
    }

    #[test]
    fn same_seed_same_output() {
        let mut cfg = small_cfg();
        cfg.vehicles.push(car(0, 10.0, 5.0, 0.0));
        cfg.dropout.vehicle = 0.3;
        let a = simulate(&cfg).unwrap();
        let b = simulate(&cfg).unwrap();
        assert_eq!(a, b);
        cfg.seed = 1;
        assert_ne!(a, simulate(&cfg).unwrap());
    }

    #[test]
    fn occluded_points_are_not_emitted() {
        let mut cfg = small_cfg();
        cfg.sampling.range_noise = 0.0;
        cfg.vehicles = vec![car(0, 8.0, 0.0, 0.0), car(1, 14.0, 0.0, 0.0)];
        let out = simulate(&cfg).unwrap();
        let f = &out.frames[0];
        let o = Point3::new(0.0, 0.0, 6.0);
        let boxes = f.gt_boxes();
        for p in &f.captures[0].cloud.points {
            let d = (p - o).normalize();
            let r = (p - o).norm();
            for b in &boxes {
                if let Some(t) = ray_box(&o, &d, b) {
                    assert!(t >= r - 1e-6, "point behind a surface");
                }
            }
        }
    }

    #[test]
    fn kinematics_and_velocity() {
        let v = VehicleSpec {
            id: 0,
            dims: [4.5, 1.9, 1.6],
            waypoints: vec![[0.0, 0.0, 0.0], [1.0, 10.0, 0.0], [2.0, 10.0, 5.0]],
            yaw: None,
            spawn: None,
            despawn: None,
        };
        let cfg = SimConfig { frames: 20, vehicles: vec![v.clone()], ..Default::default() };
        for f in 0..19 {
            let (a, b) = (cfg.ground_truth(f)[0].1, cfg.ground_truth(f + 1)[0].1);
            let seg_a = (cfg.timestamp(f) / 1.0).floor();
            let seg_b = (cfg.timestamp(f + 1) / 1.0 - 1e-12).floor();
            if seg_a == seg_b {
                assert!(((b.cx - a.cx) / cfg.frame_dt - a.vx).abs() < 1e-9);
                assert!(((b.cy - a.cy) / cfg.frame_dt - a.vy).abs() < 1e-9);
            }
        }
        assert_eq!(v.heading(0.5), 0.0);
        assert!((v.heading(1.5) - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!((v.heading(5.0) - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert_eq!(v.kinematics(9.0).1, Vector2::zeros());
    }

    #[test]
    fn validation_errors() {
        let mut cfg = small_cfg();
        cfg.vehicles = vec![car(0, 10.0, 0.0, 0.0), car(1, 11.0, 0.5, 0.0)];
        assert!(matches!(simulate(&cfg), Err(Error::Config(_))));
        let mut cfg = small_cfg();
        cfg.rsus[0].height = 0.0;
        assert!(simulate(&cfg).is_err());
        let mut cfg = small_cfg();
        cfg.dropout.ground = 1.5;
        assert!(simulate(&cfg).is_err());
    }

    #[test]
    fn spawn_and_despawn() {
        let mut v = car(0, 10.0, 0.0, 0.0);
        v.spawn = Some(2);
        v.despawn = Some(4);
        let cfg = SimConfig { frames: 6, vehicles: vec![v], ..small_cfg() };
        let counts: Vec<usize> = (0..6).map(|f| cfg.ground_truth(f).len()).collect();
        assert_eq!(counts, vec![0, 0, 1, 1, 0, 0]);
    }
}
