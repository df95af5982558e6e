//! Line-oriented label files.
//!
//! ```text
//! rsu-labels 1
//! sequence crossing_pair
//! columns track_id cx cy cz w l h theta vx vy stage
//! frame 0 0.000000
//! 3 -12.001000 -2.498000 0.800000 1.900000 4.500000 1.600000 0.000000 14.000000 0.000000 refined
//! - 2.500000 24.100000 0.790000 1.880000 4.460000 1.580000 -1.570796 0.000000 0.000000 discovered
//! frame 1 0.100000
//! ```
//!
//! One `frame <index> <timestep>` block per frame, possibly empty. Lengths in
//! meters, angles in radians, velocities in m/s, all with six decimals; a
//! missing track id is written `-`. Blank lines and `#` comments are ignored.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::FormatError;
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::tracking::Tracklet;

pub const LABELS_MAGIC: &str = "rsu-labels";
pub const LABELS_VERSION: u32 = 1;
pub const LABEL_COLUMNS: [&str; 11] = ["track_id", "cx", "cy", "cz", "w", "l", "h", "theta", "vx", "vy", "stage"];

/// Pipeline stage that produced a label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Discovered,
    Tracked,
    Refined,
    /// Simulator ground truth.
    Groundtruth,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Discovered => "discovered",
            Stage::Tracked => "tracked",
            Stage::Refined => "refined",
            Stage::Groundtruth => "groundtruth",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "discovered" => Stage::Discovered,
            "tracked" => Stage::Tracked,
            "refined" => Stage::Refined,
            "groundtruth" => Stage::Groundtruth,
            other => return Err(format!("unknown stage `{other}`")),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Label {
    pub track_id: Option<u64>,
    pub bbox: BoundingBox<f64>,
    pub stage: Stage,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelFrame {
    pub index: usize,
    pub timestep: f64,
    pub labels: Vec<Label>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelFile {
    pub sequence: String,
    pub frames: Vec<LabelFrame>,
}

impl LabelFile {
    /// One block per `(index, timestep)` holding the given boxes.
    pub fn from_boxes(
        sequence: &str,
        frames: &[(usize, f64)],
        boxes: &[Vec<BoundingBox<f64>>],
        stage: Stage,
    ) -> Self {
        assert_eq!(frames.len(), boxes.len(), "one box list per frame");
        Self {
            sequence: sequence.to_string(),
            frames: frames
                .iter()
                .zip(boxes)
                .map(|(&(index, timestep), b)| LabelFrame {
                    index,
                    timestep,
                    labels: b
                        .iter()
                        .map(|&bbox| Label {
                            track_id: None,
                            bbox,
                            stage,
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    /// Instances of every tracklet placed in their frames, ordered by track id.
    /// Instance `frame` fields index into `frames`.
    pub fn from_tracklets(sequence: &str, frames: &[(usize, f64)], tracklets: &[Tracklet<f64>], stage: Stage) -> Self {
        let mut out = Self::from_boxes(sequence, frames, &vec![Vec::new(); frames.len()], stage);
        let mut sorted: Vec<&Tracklet<f64>> = tracklets.iter().collect();
        sorted.sort_by_key(|t| t.track_id);
        for t in sorted {
            for inst in &t.instances {
                out.frames[inst.frame].labels.push(Label {
                    track_id: Some(t.track_id),
                    bbox: inst.bbox,
                    stage,
                });
            }
        }
        out
    }

    pub fn frame_keys(&self) -> Vec<(usize, f64)> {
        self.frames.iter().map(|f| (f.index, f.timestep)).collect()
    }

    /// Same frame indices, and timesteps equal up to the file's rounding.
    pub fn same_frames(&self, keys: &[(usize, f64)]) -> bool {
        self.frames.len() == keys.len()
            && self
                .frames
                .iter()
                .zip(keys)
                .all(|(f, &(i, t))| f.index == i && (f.timestep - t).abs() <= 1e-6)
    }

    pub fn boxes(&self) -> Vec<Vec<BoundingBox<f64>>> {
        self.frames
            .iter()
            .map(|f| f.labels.iter().map(|l| l.bbox).collect())
            .collect()
    }

    pub fn label_count(&self) -> usize {
        self.frames.iter().map(|f| f.labels.len()).sum()
    }

    pub fn encode(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{LABELS_MAGIC} {LABELS_VERSION}").unwrap();
        writeln!(s, "sequence {}", self.sequence).unwrap();
        writeln!(s, "columns {}", LABEL_COLUMNS.join(" ")).unwrap();
        for f in &self.frames {
            writeln!(s, "frame {} {:.6}", f.index, f.timestep).unwrap();
            for l in &f.labels {
                match l.track_id {
                    Some(id) => write!(s, "{id}").unwrap(),
                    None => s.push('-'),
                }
                let b = &l.bbox;
                for v in [b.cx, b.cy, b.cz, b.w, b.l, b.h, b.theta, b.vx, b.vy] {
                    write!(s, " {v:.6}").unwrap();
                }
                writeln!(s, " {}", l.stage).unwrap();
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let syntax = |line: usize, message: String| FormatError::Syntax { line, message };

        let (ln, header) = lines.next().ok_or_else(|| syntax(1, "empty label file".into()))?;
        let mut parts = header.split_whitespace();
        let magic = parts.next().unwrap_or_default();
        if magic != LABELS_MAGIC {
            return Err(FormatError::BadMagic {
                expected: LABELS_MAGIC.into(),
                found: magic.into(),
            });
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| syntax(ln, "missing schema version".into()))?;
        if version != LABELS_VERSION {
            return Err(FormatError::VersionMismatch {
                format: "labels",
                expected: LABELS_VERSION,
                found: version,
            });
        }

        let (ln, seq_line) = lines.next().ok_or_else(|| syntax(ln, "missing sequence line".into()))?;
        let sequence = match seq_line.split_whitespace().collect::<Vec<_>>()[..] {
            ["sequence", id] => id.to_string(),
            _ => return Err(syntax(ln, "expected `sequence <id>`".into())),
        };

        let (ln, col_line) = lines.next().ok_or_else(|| syntax(ln, "missing columns line".into()))?;
        let mut cols = col_line.split_whitespace();
        if cols.next() != Some("columns") {
            return Err(syntax(ln, "expected `columns ...`".into()));
        }
        let cols: Vec<&str> = cols.collect();
        if let Some(unknown) = cols.iter().find(|c| !LABEL_COLUMNS.contains(c)) {
            return Err(FormatError::UnknownColumn(unknown.to_string()));
        }
        if cols != LABEL_COLUMNS {
            return Err(syntax(
                ln,
                format!("columns must be `{}` in this order", LABEL_COLUMNS.join(" ")),
            ));
        }

        let mut frames: Vec<LabelFrame> = Vec::new();
        for (ln, line) in lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields[0] == "frame" {
                let (index, timestep) = match fields[..] {
                    [_, i, t] => (
                        i.parse::<usize>().map_err(|e| syntax(ln, format!("frame index: {e}")))?,
                        t.parse::<f64>().map_err(|e| syntax(ln, format!("timestep: {e}")))?,
                    ),
                    _ => return Err(syntax(ln, "expected `frame <index> <timestep>`".into())),
                };
                if !timestep.is_finite() {
                    return Err(syntax(ln, "non-finite timestep".into()));
                }
                if let Some(prev) = frames.last() {
                    if index <= prev.index || timestep <= prev.timestep {
                        return Err(syntax(ln, "frames must be strictly increasing".into()));
                    }
                }
                frames.push(LabelFrame {
                    index,
                    timestep,
                    labels: Vec::new(),
                });
                continue;
            }
            let frame = frames
                .last_mut()
                .ok_or_else(|| syntax(ln, "label before the first frame line".into()))?;
            if fields.len() != LABEL_COLUMNS.len() {
                return Err(syntax(
                    ln,
                    format!("expected {} fields, found {}", LABEL_COLUMNS.len(), fields.len()),
                ));
            }
            let track_id = match fields[0] {
                "-" => None,
                id => Some(id.parse::<u64>().map_err(|e| syntax(ln, format!("track_id: {e}")))?),
            };
            let mut v = [0.0f64; 9];
            for (k, slot) in v.iter_mut().enumerate() {
                *slot = fields[k + 1]
                    .parse()
                    .map_err(|e| syntax(ln, format!("{}: {e}", LABEL_COLUMNS[k + 1])))?;
                if !slot.is_finite() {
                    return Err(syntax(ln, format!("{} is not finite", LABEL_COLUMNS[k + 1])));
                }
            }
            let [cx, cy, cz, w, l, h, theta, vx, vy] = v;
            if !(w > 0.0 && l > 0.0 && h > 0.0) {
                return Err(syntax(ln, "box dimensions must be positive".into()));
            }
            let stage = fields[10].parse().map_err(|e| syntax(ln, e))?;
            frame.labels.push(Label {
                track_id,
                bbox: BoundingBox {
                    cx,
                    cy,
                    cz,
                    w,
                    l,
                    h,
                    theta,
                    vx,
                    vy,
                },
                stage,
            });
        }
        Ok(Self { sequence, frames })
    }
}

pub fn write_labels(path: impl AsRef<Path>, labels: &LabelFile) -> Result<()> {
    let path = path.as_ref();
    if labels.sequence.is_empty() || labels.sequence.contains(char::is_whitespace) {
        return Err(Error::InvalidParameter(format!(
            "sequence id `{}` must be a non-empty word",
            labels.sequence
        )));
    }
    std::fs::write(path, labels.encode()).map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(LabelFile::parse(&text)?)
}
