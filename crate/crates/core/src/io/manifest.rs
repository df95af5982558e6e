//! Sequence manifests: the JSON index tying frames, RSUs and cloud files
//! together.
//!
//! ```json
//! {
//!   "format": "rsu-manifest",
//!   "version": 1,
//!   "sequence": "static_car",
//!   "units": { "length": "m", "time": "s" },
//!   "rsus": [ { "id": 0, "position": [0.0, 0.0, 6.0] } ],
//!   "frames": [
//!     { "index": 0, "timestep": 0.0, "clouds": [ { "rsu": 0, "path": "clouds/000000_0.bin" } ] }
//!   ],
//!   "ground_truth": "groundtruth.labels"
//! }
//! ```
//!
//! Paths are relative to the manifest's directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::cloud::{read_cloud, write_cloud};
use super::labels::{read_labels, write_labels, Label, LabelFile, Stage};
use super::FormatError;
use crate::discovery::merge_rsu_clouds;
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::simulator::{SimConfig, SimOutput};
use crate::tracking::{Instance, Tracklet};

pub const MANIFEST_FORMAT: &str = "rsu-manifest";
pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const GROUND_TRUTH_FILE: &str = "groundtruth.labels";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Units {
    pub length: String,
    pub time: String,
}

impl Default for Units {
    fn default() -> Self {
        Self {
            length: "m".into(),
            time: "s".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RsuEntry {
    pub id: u16,
    /// Sensor origin `[x, y, z]` in the world frame.
    pub position: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloudRef {
    pub rsu: u16,
    pub path: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub index: usize,
    pub timestep: f64,
    pub clouds: Vec<CloudRef>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceManifest {
    pub format: String,
    pub version: u32,
    pub sequence: String,
    pub units: Units,
    pub rsus: Vec<RsuEntry>,
    pub frames: Vec<FrameEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<String>,
}

/// A manifest together with the directory its paths are relative to.
#[derive(Clone, Debug)]
pub struct LoadedManifest {
    pub manifest: SequenceManifest,
    pub root: PathBuf,
}

impl SequenceManifest {
    /// Checks everything that does not need the filesystem.
    pub fn validate(&self) -> Result<()> {
        if self.format != MANIFEST_FORMAT {
            return Err(FormatError::BadMagic {
                expected: MANIFEST_FORMAT.into(),
                found: self.format.clone(),
            }
            .into());
        }
        if self.version != MANIFEST_VERSION {
            return Err(FormatError::VersionMismatch {
                format: "manifest",
                expected: MANIFEST_VERSION,
                found: self.version,
            }
            .into());
        }
        validate_sequence_id(&self.sequence)?;
        if self.units != Units::default() {
            return Err(Error::Config(format!(
                "units must be meters and seconds, got {:?}/{:?}",
                self.units.length, self.units.time
            )));
        }
        let ids: BTreeSet<u16> = self.rsus.iter().map(|r| r.id).collect();
        if ids.len() != self.rsus.len() {
            return Err(Error::Config("duplicate RSU id".into()));
        }
        if self.frames.is_empty() {
            return Err(Error::Config("manifest lists no frames".into()));
        }
        for w in self.frames.windows(2) {
            if w[1].timestep <= w[0].timestep || w[1].index <= w[0].index {
                return Err(Error::Config(format!(
                    "frames must be strictly increasing: frame {} at {} follows frame {} at {}",
                    w[1].index, w[1].timestep, w[0].index, w[0].timestep
                )));
            }
        }
        for f in &self.frames {
            if !f.timestep.is_finite() {
                return Err(Error::Config(format!("frame {} has a non-finite timestep", f.index)));
            }
            if f.clouds.is_empty() {
                return Err(Error::Config(format!("frame {} lists no clouds", f.index)));
            }
            let mut seen = BTreeSet::new();
            for c in &f.clouds {
                if !ids.contains(&c.rsu) {
                    return Err(Error::Config(format!("frame {} references unknown RSU {}", f.index, c.rsu)));
                }
                if !seen.insert(c.rsu) {
                    return Err(Error::Config(format!("frame {} lists RSU {} twice", f.index, c.rsu)));
                }
            }
        }
        Ok(())
    }

    /// `(index, timestep)` of every frame, in order.
    pub fn frame_keys(&self) -> Vec<(usize, f64)> {
        self.frames.iter().map(|f| (f.index, f.timestep)).collect()
    }
}

/// Sequence ids are written verbatim into label headers.
pub fn validate_sequence_id(id: &str) -> Result<()> {
    if id.is_empty() || id.chars().any(char::is_whitespace) {
        return Err(Error::Config(format!("invalid sequence id {id:?}: must be non-empty without whitespace")));
    }
    Ok(())
}

impl LoadedManifest {
    /// Reads and validates a manifest; every referenced file must exist.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: SequenceManifest = serde_json::from_str(&text).map_err(|e| {
            FormatError::Syntax {
                line: e.line(),
                message: e.to_string(),
            }
        })?;
        manifest.validate()?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let loaded = Self { manifest, root };
        let referenced = loaded
            .manifest
            .frames
            .iter()
            .flat_map(|f| f.clouds.iter().map(|c| c.path.as_str()))
            .chain(loaded.manifest.ground_truth.as_deref());
        for rel in referenced {
            let p = loaded.resolve(rel);
            if !p.is_file() {
                return Err(Error::io(
                    &p,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "referenced by the manifest but missing"),
                ));
            }
        }
        Ok(loaded)
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Loads every frame, merging the RSU clouds of each timestep.
    pub fn load_clouds(&self) -> Result<Vec<PointCloud<f64>>> {
        self.manifest
            .frames
            .iter()
            .map(|f| {
                let parts = f
                    .clouds
                    .iter()
                    .map(|c| Ok(PointCloud::new(read_cloud(self.resolve(&c.path))?, f.timestep, c.rsu)))
                    .collect::<Result<Vec<_>>>()?;
                merge_rsu_clouds(&parts)
            })
            .collect()
    }

    pub fn ground_truth(&self) -> Result<Option<LabelFile>> {
        self.manifest
            .ground_truth
            .as_deref()
            .map(|rel| read_labels(self.resolve(rel)))
            .transpose()
    }

    /// Label files must describe exactly this manifest's sequence and frames.
    pub fn check_labels(&self, labels: &LabelFile) -> Result<()> {
        if labels.sequence != self.manifest.sequence {
            return Err(Error::Config(format!(
                "label file is for sequence {:?}, manifest for {:?}",
                labels.sequence, self.manifest.sequence
            )));
        }
        if !labels.same_frames(&self.manifest.frame_keys()) {
            return Err(Error::Config("label frames do not match the manifest frames".into()));
        }
        Ok(())
    }
}

/// Groups labels carrying a track id into tracklets, ordered by id; instance
/// `frame` is the position of the frame in the file. Member points are left
/// empty.
pub fn labels_to_tracklets(labels: &LabelFile) -> Result<Vec<Tracklet<f64>>> {
    let mut out: Vec<Tracklet<f64>> = Vec::new();
    for (pos, frame) in labels.frames.iter().enumerate() {
        for l in &frame.labels {
            let Some(id) = l.track_id else {
                return Err(Error::Config(format!("frame {}: label without a track id", frame.index)));
            };
            let inst = Instance {
                frame: pos,
                timestamp: frame.timestep,
                bbox: l.bbox,
                points: Vec::new(),
            };
            match out.iter_mut().find(|t| t.track_id == id) {
                Some(t) => {
                    if t.instances.last().is_some_and(|i| i.frame == pos) {
                        return Err(Error::Config(format!("track {id} appears twice in frame {}", frame.index)));
                    }
                    t.instances.push(inst)
                }
                None => out.push(Tracklet {
                    track_id: id,
                    instances: vec![inst],
                }),
            }
        }
    }
    out.sort_by_key(|t| t.track_id);
    Ok(out)
}

/// Writes a simulated sequence as a dataset directory: `manifest.json`,
/// `clouds/<frame>_<rsu>.bin` and `groundtruth.labels`.
pub fn write_dataset(dir: impl AsRef<Path>, sequence: &str, cfg: &SimConfig, sim: &SimOutput) -> Result<LoadedManifest> {
    let dir = dir.as_ref();
    validate_sequence_id(sequence)?;
    let clouds_dir = dir.join("clouds");
    std::fs::create_dir_all(&clouds_dir).map_err(|e| Error::io(&clouds_dir, e))?;
    let mut frames = Vec::with_capacity(sim.frames.len());
    for f in &sim.frames {
        let mut clouds = Vec::with_capacity(f.captures.len());
        for c in &f.captures {
            let rel = format!("clouds/{:06}_{}.bin", f.index, c.rsu);
            write_cloud(dir.join(&rel), &c.cloud.points)?;
            clouds.push(CloudRef { rsu: c.rsu, path: rel });
        }
        frames.push(FrameEntry {
            index: f.index,
            timestep: f.timestamp,
            clouds,
        });
    }
    let manifest = SequenceManifest {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        sequence: sequence.into(),
        units: Units::default(),
        rsus: cfg
            .rsus
            .iter()
            .map(|r| RsuEntry {
                id: r.id,
                position: [r.position[0], r.position[1], r.height],
            })
            .collect(),
        frames,
        ground_truth: Some(GROUND_TRUTH_FILE.into()),
    };
    let mut gt = LabelFile::from_boxes(sequence, &manifest.frame_keys(), &vec![Vec::new(); sim.frames.len()], Stage::Groundtruth);
    for (block, f) in gt.frames.iter_mut().zip(&sim.frames) {
        block.labels = f
            .ground_truth
            .iter()
            .map(|(id, b)| Label {
                track_id: Some(u64::from(*id)),
                bbox: *b,
                stage: Stage::Groundtruth,
            })
            .collect();
    }
    write_labels(dir.join(GROUND_TRUTH_FILE), &gt)?;
    write_manifest(dir.join(MANIFEST_FILE), &manifest)?;
    Ok(LoadedManifest {
        manifest,
        root: dir.to_path_buf(),
    })
}

pub fn write_manifest(path: impl AsRef<Path>, manifest: &SequenceManifest) -> Result<()> {
    let path = path.as_ref();
    manifest.validate()?;
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serialises");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
