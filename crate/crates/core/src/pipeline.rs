//! Stage drivers over whole sequences, shared by the CLI and the tests.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discovery::{discover, remove_ground, DiscoveryConfig, FrameBundle};
use crate::error::Result;
use crate::evaluation::EvalConfig;
use crate::geometry::{BoundingBox, PointCloud};
use crate::refinement::{refine_tracklets, RefineConfig, RefineOutcome};
use crate::scalar::Real;
use crate::tracking::{filter_short_tracklets, track_sequence, Tracklet, TrackingConfig};

/// Every hyperparameter of the pipeline; the on-disk config deserialises into this.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub discovery: DiscoveryConfig,
    pub tracking: TrackingConfig,
    pub refinement: RefineConfig,
    pub evaluation: EvalConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.discovery.validate()?;
        self.tracking.validate()
    }

    /// Applies a global seed to every randomised component.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.discovery.ground.seed = seed;
        self.discovery.flow.ground.seed = seed;
        self
    }
}

/// History frames for frame `t` of `n`: nearest first, earlier before later
/// (`t−1, t+1, t−2, t+2, …`), clipped to the sequence.
pub fn history_indices(t: usize, n: usize, k: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    let mut d = 1;
    while out.len() < k && (d <= t || t + d < n) {
        if d <= t {
            out.push(t - d);
        }
        if out.len() < k && t + d < n {
            out.push(t + d);
        }
        d += 1;
    }
    out
}

/// Runs discovery on every frame with `cfg.history_frames` history frames.
pub fn discover_sequence<T: Real>(clouds: &[PointCloud<T>], cfg: &DiscoveryConfig) -> Result<Vec<Vec<BoundingBox<T>>>> {
    cfg.validate()?;
    (0..clouds.len())
        .into_par_iter()
        .map(|t| {
            let bundle = FrameBundle {
                current: clouds[t].clone(),
                history: history_indices(t, clouds.len(), cfg.history_frames)
                    .into_iter()
                    .map(|i| clouds[i].clone())
                    .collect(),
            };
            discover(&bundle, cfg)
        })
        .collect()
}

/// Per-frame ground-free clouds from which tracklet member points are taken.
pub fn member_clouds<T: Real>(clouds: &[PointCloud<T>], cfg: &DiscoveryConfig) -> Vec<PointCloud<T>> {
    clouds.par_iter().map(|c| remove_ground(c, &cfg.ground).cloud).collect()
}

/// Tracks detections and drops short tracklets.
pub fn track_stage<T: Real>(
    detections: &[Vec<BoundingBox<T>>],
    clouds: &[PointCloud<T>],
    cfg: &PipelineConfig,
) -> Result<Vec<Tracklet<T>>> {
    let members = member_clouds(clouds, &cfg.discovery);
    let tracklets = track_sequence(detections, &members, &cfg.tracking)?;
    Ok(filter_short_tracklets(tracklets, cfg.tracking.min_instances))
}

pub fn refine_stage<T: Real>(tracklets: &[Tracklet<T>], cfg: &PipelineConfig) -> Vec<RefineOutcome<T>> {
    refine_tracklets(tracklets, &cfg.refinement)
}

/// Per-frame boxes of a set of tracklets over `n` frames.
pub fn tracklet_boxes<T: Real>(tracklets: &[Tracklet<T>], n: usize) -> Vec<Vec<BoundingBox<T>>> {
    let mut out = vec![Vec::new(); n];
    for t in tracklets {
        for i in &t.instances {
            out[i.frame].push(i.bbox);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn history_order() {
        assert_eq!(history_indices(5, 10, 2), vec![4, 6]);
        assert_eq!(history_indices(0, 10, 2), vec![1, 2]);
        assert_eq!(history_indices(9, 10, 3), vec![8, 7, 6]);
        assert_eq!(history_indices(5, 10, 0), Vec::<usize>::new());
        assert_eq!(history_indices(0, 1, 2), Vec::<usize>::new());
        assert_eq!(history_indices(1, 3, 4), vec![0, 2]);
    }
}
