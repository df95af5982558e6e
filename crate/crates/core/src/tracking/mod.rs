//! Track-by-detection with a constant-velocity Kalman filter.

mod kalman;

pub use kalman::{
    kf_predict, kf_update, measurement_of, KalmanParams, Measurement, StateCov, StateVector, TrackState,
};

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{bev_iou, points_in_box, BoundingBox, PointCloud};
use crate::registration::gated_max_score_matching;
use crate::scalar::Real;

/// One tracklet element: the object's box at one frame with its member points.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance<T: Real> {
    pub frame: usize,
    pub timestamp: f64,
    pub bbox: BoundingBox<T>,
    pub points: Vec<Point3<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tracklet<T: Real> {
    pub track_id: u64,
    pub instances: Vec<Instance<T>>,
}

impl<T: Real> Tracklet<T> {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn is_valid(&self) -> bool {
        !self.instances.is_empty() && self.instances.windows(2).all(|w| w[0].timestamp < w[1].timestamp)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingConfig {
    /// Minimum BEV IoU between a prediction and a detection to associate them.
    pub iou_gate: f64,
    /// A track ends after more than this many consecutive misses.
    pub max_miss: usize,
    /// Hits needed before a track is reported.
    pub min_hits: usize,
    /// Tracklets with fewer instances are dropped as spurious.
    pub min_instances: usize,
    /// Extra margin (meters) around a box when collecting member points.
    pub point_margin: f64,
    pub kalman: KalmanParams,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            iou_gate: 0.1,
            max_miss: 2,
            min_hits: 1,
            min_instances: 4,
            point_margin: 0.2,
            kalman: KalmanParams::default(),
        }
    }
}

impl TrackingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_gate > 0.0 && self.iou_gate < 1.0) {
            return Err(Error::Config(format!("iou_gate must be in (0, 1), got {}", self.iou_gate)));
        }
        if self.min_instances == 0 {
            return Err(Error::Config("min_instances must be ≥ 1".into()));
        }
        if !(self.point_margin >= 0.0) {
            return Err(Error::Config("point_margin must be ≥ 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Association {
    /// `(prediction, detection)` pairs.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_predictions: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

/// Optimal IoU matching; pairs below `iou_gate` stay unmatched.
pub fn associate<T: Real>(predicted: &[BoundingBox<T>], detections: &[BoundingBox<T>], iou_gate: T) -> Association {
    let mut matches = gated_max_score_matching(
        predicted.len(),
        detections.len(),
        |i, j| bev_iou(&predicted[i], &detections[j]),
        iou_gate,
    );
    matches.sort_unstable();
    let mut used_p = vec![false; predicted.len()];
    let mut used_d = vec![false; detections.len()];
    for &(p, d) in &matches {
        used_p[p] = true;
        used_d[d] = true;
    }
    Association {
        matches,
        unmatched_predictions: (0..predicted.len()).filter(|&i| !used_p[i]).collect(),
        unmatched_detections: (0..detections.len()).filter(|&i| !used_d[i]).collect(),
    }
}

struct LiveTrack<T: Real> {
    state: TrackState<T>,
    instances: Vec<Instance<T>>,
    last_time: f64,
}

/// Links per-frame detections into tracklets.
///
/// `clouds[i]` supplies the timestamp of frame `i` and the points collected
/// into each instance. Instance boxes keep the detected geometry and carry the
/// posterior velocity.
pub fn track_sequence<T: Real>(
    detections: &[Vec<BoundingBox<T>>],
    clouds: &[PointCloud<T>],
    cfg: &TrackingConfig,
) -> Result<Vec<Tracklet<T>>> {
    cfg.validate()?;
    if detections.len() != clouds.len() {
        return Err(Error::InvalidParameter(format!(
            "{} detection frames but {} clouds",
            detections.len(),
            clouds.len()
        )));
    }
    if clouds.windows(2).any(|w| w[1].timestamp <= w[0].timestamp) {
        return Err(Error::InvalidParameter("frames must be strictly time-ordered".into()));
    }
    let margin = T::lit(cfg.point_margin);
    let mut live: Vec<LiveTrack<T>> = Vec::new();
    let mut done: Vec<LiveTrack<T>> = Vec::new();
    let mut next_id = 0u64;

    for (frame, (dets, cloud)) in detections.iter().zip(clouds).enumerate() {
        let t = cloud.timestamp;
        for tr in &mut live {
            tr.state = kf_predict(&tr.state, T::lit(t - tr.last_time), &cfg.kalman);
            tr.last_time = t;
        }
        let predicted: Vec<BoundingBox<T>> = live.iter().map(|tr| tr.state.to_box()).collect();
        let assoc = associate(&predicted, dets, T::lit(cfg.iou_gate));
        let instance = |b: &BoundingBox<T>, state: &TrackState<T>| Instance {
            frame,
            timestamp: t,
            bbox: b.with_velocity(state.mean[7], state.mean[8]),
            points: points_in_box(&cloud.points, b, margin),
        };
        for &(p, d) in &assoc.matches {
            let tr = &mut live[p];
            tr.state = kf_update(&tr.state, &dets[d], &cfg.kalman);
            tr.state.hit_count += 1;
            tr.state.miss_count = 0;
            tr.instances.push(instance(&dets[d], &tr.state));
        }
        for &p in &assoc.unmatched_predictions {
            live[p].state.miss_count += 1;
        }
        for &d in &assoc.unmatched_detections {
            let state = TrackState::from_detection(&dets[d].with_velocity(T::zero(), T::zero()), next_id, &cfg.kalman);
            next_id += 1;
            let inst = instance(&dets[d], &state);
            live.push(LiveTrack {
                state,
                instances: vec![inst],
                last_time: t,
            });
        }
        let (ended, kept): (Vec<_>, Vec<_>) = live.into_iter().partition(|tr| tr.state.miss_count > cfg.max_miss);
        done.extend(ended);
        live = kept;
    }
    done.extend(live);
    let mut out: Vec<Tracklet<T>> = done
        .into_iter()
        .filter(|tr| tr.state.hit_count >= cfg.min_hits)
        .map(|tr| Tracklet {
            track_id: tr.state.track_id,
            instances: tr.instances,
        })
        .collect();
    out.sort_by_key(|t| t.track_id);
    Ok(out)
}

/// Drops tracklets with fewer than `min_instances` instances.
pub fn filter_short_tracklets<T: Real>(tracklets: Vec<Tracklet<T>>, min_instances: usize) -> Vec<Tracklet<T>> {
    tracklets.into_iter().filter(|t| t.len() >= min_instances).collect()
}
