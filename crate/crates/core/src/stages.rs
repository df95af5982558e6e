//! File-to-file stage runners behind the CLI.
//!
//! Every stage reads its inputs from disk and writes one label file, so a
//! full pipeline run and a chain of single-stage invocations see exactly the
//! same bytes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{compute_report, EvalConfig, EvalReport, FrameBoxes};
use crate::geometry::{points_in_box, PointCloud};
use crate::io::{
    labels_to_tracklets, read_labels, write_dataset, write_labels, LabelFile, LoadedManifest, RunConfig, Source,
    Stage, MANIFEST_FILE,
};
use crate::pipeline::{discover_sequence, member_clouds, refine_stage, track_stage, PipelineConfig};
use crate::registration::{estimate_scene_flow_detailed, FlowConfig};
use crate::simulator::{simulate, SimConfig};

pub const DISCOVERED_FILE: &str = "discovered.labels";
pub const TRACKED_FILE: &str = "tracked.labels";
pub const REFINED_FILE: &str = "refined.labels";
pub const REPORT_FILE: &str = "report.json";

/// Renders a scene and writes it as a dataset directory.
pub fn simulate_to_dir(dir: impl AsRef<Path>, sequence: &str, cfg: &SimConfig) -> Result<LoadedManifest> {
    let sim = simulate(cfg)?;
    write_dataset(dir, sequence, cfg, &sim)
}

/// A manifest and its merged per-frame clouds.
pub struct Sequence {
    pub manifest: LoadedManifest,
    pub clouds: Vec<PointCloud<f64>>,
}

impl Sequence {
    pub fn load(manifest_path: impl AsRef<Path>) -> Result<Self> {
        let manifest = LoadedManifest::load(manifest_path)?;
        let clouds = manifest.load_clouds()?;
        Ok(Self { manifest, clouds })
    }

    fn id(&self) -> &str {
        &self.manifest.manifest.sequence
    }

    fn keys(&self) -> Vec<(usize, f64)> {
        self.manifest.manifest.frame_keys()
    }
}

pub fn discover_stage(seq: &Sequence, cfg: &PipelineConfig) -> Result<LabelFile> {
    let boxes = discover_sequence(&seq.clouds, &cfg.discovery)?;
    Ok(LabelFile::from_boxes(seq.id(), &seq.keys(), &boxes, Stage::Discovered))
}

/// Tracks the detections of a discovered label file; short tracklets are dropped.
pub fn track_labels(seq: &Sequence, detections: &LabelFile, cfg: &PipelineConfig) -> Result<LabelFile> {
    seq.manifest.check_labels(detections)?;
    let tracklets = track_stage(&detections.boxes(), &seq.clouds, cfg)?;
    Ok(LabelFile::from_tracklets(seq.id(), &seq.keys(), &tracklets, Stage::Tracked))
}

/// Refines the tracklets of a tracked label file. Member points are
/// recollected from the ground-free clouds inside each instance box.
pub fn refine_labels(seq: &Sequence, tracked: &LabelFile, cfg: &PipelineConfig) -> Result<LabelFile> {
    seq.manifest.check_labels(tracked)?;
    let mut tracklets = labels_to_tracklets(tracked)?;
    let members = member_clouds(&seq.clouds, &cfg.discovery);
    let margin = cfg.tracking.point_margin;
    for t in &mut tracklets {
        for inst in &mut t.instances {
            inst.points = points_in_box(&members[inst.frame].points, &inst.bbox, margin);
        }
    }
    let outcomes = refine_stage(&tracklets, cfg);
    for o in outcomes.iter().filter(|o| !o.refined) {
        log::info!(
            "track {} left unrefined: {}",
            o.tracklet.track_id,
            o.skipped.as_deref().unwrap_or("skipped")
        );
    }
    let refined: Vec<_> = outcomes.into_iter().map(|o| o.tracklet).collect();
    Ok(LabelFile::from_tracklets(seq.id(), &seq.keys(), &refined, Stage::Refined))
}

fn frame_boxes(labels: &LabelFile) -> Vec<FrameBoxes<f64>> {
    labels
        .frames
        .iter()
        .map(|f| FrameBoxes {
            timestep: f.timestep,
            boxes: f.labels.iter().map(|l| l.bbox).collect(),
        })
        .collect()
}

/// Scores a label file against ground truth of the same sequence.
pub fn evaluate_labels(labels: &LabelFile, gt: &LabelFile, cfg: &EvalConfig) -> Result<EvalReport> {
    if labels.sequence != gt.sequence {
        return Err(Error::Config(format!(
            "sequence mismatch: labels are for {:?}, ground truth for {:?}",
            labels.sequence, gt.sequence
        )));
    }
    if !labels.same_frames(&gt.frame_keys()) {
        return Err(Error::Config("label and ground-truth frames differ".into()));
    }
    let mut dets = frame_boxes(labels);
    let gts = frame_boxes(gt);
    for (d, g) in dets.iter_mut().zip(&gts) {
        d.timestep = g.timestep;
    }
    compute_report(&dets, &gts, cfg)
}

/// Summary of the scene flow between two frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowStats {
    pub src_frame: usize,
    pub dst_frame: usize,
    pub src_points: usize,
    pub src_clusters: usize,
    pub dst_clusters: usize,
    pub matched_clusters: usize,
    /// Points whose flow exceeds `moving_threshold`.
    pub moving_points: usize,
    pub moving_threshold: f64,
    pub mean_moving_flow: f64,
    pub max_flow: f64,
}

/// Scene flow from frame position `src` to `dst` of a sequence.
pub fn flow_stats(seq: &Sequence, src: usize, dst: usize, cfg: &FlowConfig) -> Result<FlowStats> {
    let n = seq.clouds.len();
    if src >= n || dst >= n {
        return Err(Error::InvalidParameter(format!("frames {src}, {dst}: sequence has {n} frames")));
    }
    let sf = estimate_scene_flow_detailed(&seq.clouds[src], &seq.clouds[dst], cfg)?;
    let threshold = 0.1;
    let norms: Vec<f64> = sf.flow.vectors.iter().map(|v| v.norm()).collect();
    let moving: Vec<f64> = norms.iter().copied().filter(|&m| m > threshold).collect();
    let keys = seq.keys();
    Ok(FlowStats {
        src_frame: keys[src].0,
        dst_frame: keys[dst].0,
        src_points: norms.len(),
        src_clusters: sf.src_labels.cluster_count,
        dst_clusters: sf.dst_labels.cluster_count,
        matched_clusters: sf.matches.len(),
        moving_points: moving.len(),
        moving_threshold: threshold,
        mean_moving_flow: if moving.is_empty() {
            0.0
        } else {
            moving.iter().sum::<f64>() / moving.len() as f64
        },
        max_flow: norms.iter().copied().fold(0.0, f64::max),
    })
}

/// Evaluation of every stage output of a pipeline run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub sequence: String,
    pub discovered: EvalReport,
    pub tracked: EvalReport,
    pub refined: EvalReport,
}

/// Paths written by [`run_pipeline`].
#[derive(Clone, Debug)]
pub struct PipelineOutputs {
    pub manifest: PathBuf,
    pub discovered: PathBuf,
    pub tracked: PathBuf,
    pub refined: PathBuf,
    /// Absent when the sequence has no ground truth.
    pub report: Option<(PathBuf, PipelineReport)>,
}

/// Simulates or loads the scenario, then runs discover → track → refine →
/// eval, each stage reading the previous stage's file from `out_dir`.
pub fn run_pipeline(cfg: &RunConfig, source: &Source, out_dir: impl AsRef<Path>) -> Result<PipelineOutputs> {
    let out = out_dir.as_ref();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let pc = cfg.pipeline();
    let manifest = match source {
        Source::Simulate { sequence, config } => {
            simulate_to_dir(out, sequence, config)?;
            out.join(MANIFEST_FILE)
        }
        Source::Manifest(path) => path.clone(),
    };
    let seq = Sequence::load(&manifest)?;
    let path = |name: &str| out.join(name);

    write_labels(path(DISCOVERED_FILE), &discover_stage(&seq, &pc)?)?;
    let discovered = read_labels(path(DISCOVERED_FILE))?;
    write_labels(path(TRACKED_FILE), &track_labels(&seq, &discovered, &pc)?)?;
    let tracked = read_labels(path(TRACKED_FILE))?;
    write_labels(path(REFINED_FILE), &refine_labels(&seq, &tracked, &pc)?)?;
    let refined = read_labels(path(REFINED_FILE))?;

    let report = match seq.manifest.ground_truth()? {
        Some(gt) => {
            let report = PipelineReport {
                sequence: gt.sequence.clone(),
                discovered: evaluate_labels(&discovered, &gt, &pc.evaluation)?,
                tracked: evaluate_labels(&tracked, &gt, &pc.evaluation)?,
                refined: evaluate_labels(&refined, &gt, &pc.evaluation)?,
            };
            write_json(path(REPORT_FILE), &report)?;
            Some((path(REPORT_FILE), report))
        }
        None => None,
    };
    Ok(PipelineOutputs {
        manifest,
        discovered: path(DISCOVERED_FILE),
        tracked: path(TRACKED_FILE),
        refined: path(REFINED_FILE),
        report,
    })
}

pub fn write_json<S: Serialize>(path: impl AsRef<Path>, value: &S) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).expect("report serialises");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::preset;

    fn static_car(dir: &Path) -> Sequence {
        let mut cfg = preset("static_car").unwrap();
        cfg.frames = 4;
        simulate_to_dir(dir, "static_car", &cfg).unwrap();
        Sequence::load(dir.join(MANIFEST_FILE)).unwrap()
    }

    #[test]
    fn stages_chain_through_label_files() {
        let dir = tempfile::tempdir().unwrap();
        let seq = static_car(dir.path());
        let mut pc = PipelineConfig::default();
        pc.tracking.min_instances = 2;
        let d = discover_stage(&seq, &pc).unwrap();
        assert_eq!(d.frames.len(), 4);
        assert!(d.frames.iter().all(|f| f.labels.len() == 1));
        let t = track_labels(&seq, &d, &pc).unwrap();
        assert_eq!(t.label_count(), 4);
        assert!(t.frames.iter().all(|f| f.labels[0].track_id == Some(0)));
        let r = refine_labels(&seq, &t, &pc).unwrap();
        assert!(r.frames.iter().all(|f| f.labels[0].stage == Stage::Refined));
        let gt = seq.manifest.ground_truth().unwrap().unwrap();
        let rep = evaluate_labels(&r, &gt, &pc.evaluation).unwrap();
        assert_eq!((rep.recall, rep.precision), (1.0, 1.0));
    }

    #[test]
    fn mismatched_sequences_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let seq = static_car(dir.path());
        let gt = seq.manifest.ground_truth().unwrap().unwrap();
        let mut other = gt.clone();
        other.sequence = "elsewhere".into();
        assert!(matches!(
            evaluate_labels(&other, &gt, &EvalConfig::default()),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            track_labels(&seq, &other, &PipelineConfig::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn flow_of_a_static_scene_is_still() {
        let dir = tempfile::tempdir().unwrap();
        let seq = static_car(dir.path());
        let s = flow_stats(&seq, 0, 1, &FlowConfig::default()).unwrap();
        assert_eq!(s.src_points, seq.clouds[0].len());
        assert!(s.mean_moving_flow < 0.5);
        assert!(flow_stats(&seq, 0, 9, &FlowConfig::default()).is_err());
    }
}
