//! Ground-truth matching and detection metrics.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{bev_iou, BoundingBox};
use crate::registration::gated_max_score_matching;
use crate::scalar::{heading_error, Real};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub iou_thresh: f64,
    /// Report the mean velocity error over true positives.
    pub velocity: bool,
    /// Only boxes whose whole footprint lies within this distance of
    /// `center` count.
    pub range: Option<f64>,
    pub center: [f64; 2],
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_thresh: 0.3,
            velocity: false,
            range: None,
            center: [0.0, 0.0],
        }
    }
}

/// Boxes of one timestep.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameBoxes<T: Real> {
    pub timestep: f64,
    pub boxes: Vec<BoundingBox<T>>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrameMatch {
    /// `(detection, ground truth, IoU)`.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_dets: Vec<usize>,
    pub unmatched_gts: Vec<usize>,
}

/// Matches detections to ground truth maximising first the number of pairs
/// with IoU ≥ `iou_thresh`, then their total IoU. Detections carry no
/// confidence; all are treated alike.
pub fn match_frame<T: Real>(dets: &[BoundingBox<T>], gts: &[BoundingBox<T>], iou_thresh: f64) -> FrameMatch {
    let iou: Vec<f64> = dets
        .iter()
        .flat_map(|d| gts.iter().map(move |g| bev_iou(d, g).as_f64()))
        .collect();
    let cols = gts.len();
    let mut matched = gated_max_score_matching(dets.len(), cols, |i, j| iou[i * cols + j], iou_thresh);
    matched.sort_unstable();
    let mut used_d = vec![false; dets.len()];
    let mut used_g = vec![false; gts.len()];
    let pairs = matched
        .into_iter()
        .map(|(i, j)| {
            used_d[i] = true;
            used_g[j] = true;
            (i, j, iou[i * cols + j])
        })
        .collect();
    FrameMatch {
        pairs,
        unmatched_dets: (0..dets.len()).filter(|&i| !used_d[i]).collect(),
        unmatched_gts: (0..gts.len()).filter(|&j| !used_g[j]).collect(),
    }
}

/// `1 − IoU` of two boxes after aligning their centers and headings.
pub fn scale_error<T: Real>(a: &BoundingBox<T>, b: &BoundingBox<T>) -> f64 {
    let da = [a.l.as_f64(), a.w.as_f64(), a.h.as_f64()];
    let db = [b.l.as_f64(), b.w.as_f64(), b.h.as_f64()];
    let inter: f64 = da.iter().zip(&db).map(|(x, y)| x.min(*y)).product();
    let union = da.iter().product::<f64>() + db.iter().product::<f64>() - inter;
    if union <= 0.0 {
        return 1.0;
    }
    (1.0 - inter / union).clamp(0.0, 1.0)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub timestep: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub ate_sum: f64,
    pub ase_sum: f64,
    pub aoe_sum: f64,
    pub ave_sum: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub iou_thresh: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub recall: f64,
    pub precision: f64,
    /// Mean BEV center distance over true positives (m).
    pub ate: f64,
    /// Mean `1 − IoU` of center- and heading-aligned boxes.
    pub ase: f64,
    /// Mean heading difference modulo π (rad).
    pub aoe: f64,
    /// Mean planar velocity error (m/s), when requested.
    pub ave: Option<f64>,
    pub frames: Vec<FrameReport>,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn evaluate_frame<T: Real>(dets: &FrameBoxes<T>, gts: &FrameBoxes<T>, cfg: &EvalConfig) -> FrameReport {
    let keep = |b: &&BoundingBox<T>| {
        cfg.range.is_none_or(|r| {
            b.footprint()
                .iter()
                .all(|p| (p.x.as_f64() - cfg.center[0]).hypot(p.y.as_f64() - cfg.center[1]) <= r)
        })
    };
    let d: Vec<BoundingBox<T>> = dets.boxes.iter().filter(keep).copied().collect();
    let g: Vec<BoundingBox<T>> = gts.boxes.iter().filter(keep).copied().collect();
    let m = match_frame(&d, &g, cfg.iou_thresh);
    let mut r = FrameReport {
        timestep: gts.timestep,
        tp: m.pairs.len(),
        fp: m.unmatched_dets.len(),
        fn_: m.unmatched_gts.len(),
        ..Default::default()
    };
    for &(i, j, _) in &m.pairs {
        let (a, b) = (&d[i], &g[j]);
        r.ate_sum += (a.cx - b.cx).as_f64().hypot((a.cy - b.cy).as_f64());
        r.ase_sum += scale_error(a, b);
        r.aoe_sum += heading_error(a.theta, b.theta).as_f64();
        r.ave_sum += (a.vx - b.vx).as_f64().hypot((a.vy - b.vy).as_f64());
    }
    r
}

/// Aggregates per-frame matching into one report.
pub fn compute_report<T: Real>(dets: &[FrameBoxes<T>], gts: &[FrameBoxes<T>], cfg: &EvalConfig) -> Result<EvalReport> {
    if !(cfg.iou_thresh > 0.0 && cfg.iou_thresh < 1.0) {
        return Err(Error::InvalidParameter(format!("iou_thresh {} outside (0, 1)", cfg.iou_thresh)));
    }
    if dets.len() != gts.len() {
        return Err(Error::InvalidParameter(format!(
            "{} detection frames vs {} ground-truth frames",
            dets.len(),
            gts.len()
        )));
    }
    if let Some((d, g)) = dets.iter().zip(gts).find(|(d, g)| d.timestep != g.timestep) {
        return Err(Error::InvalidParameter(format!(
            "timestep mismatch: detections at {} vs ground truth at {}",
            d.timestep, g.timestep
        )));
    }
    let frames: Vec<FrameReport> = dets
        .par_iter()
        .zip(gts.par_iter())
        .map(|(d, g)| evaluate_frame(d, g, cfg))
        .collect();
    let mut rep = EvalReport {
        iou_thresh: cfg.iou_thresh,
        ..Default::default()
    };
    let (mut ate, mut ase, mut aoe, mut ave) = (0.0, 0.0, 0.0, 0.0);
    for f in &frames {
        rep.tp += f.tp;
        rep.fp += f.fp;
        rep.fn_ += f.fn_;
        ate += f.ate_sum;
        ase += f.ase_sum;
        aoe += f.aoe_sum;
        ave += f.ave_sum;
    }
    rep.recall = ratio(rep.tp, rep.tp + rep.fn_);
    rep.precision = ratio(rep.tp, rep.tp + rep.fp);
    if rep.tp > 0 {
        let n = rep.tp as f64;
        rep.ate = ate / n;
        rep.ase = ase / n;
        rep.aoe = aoe / n;
        if cfg.velocity {
            rep.ave = Some(ave / n);
        }
    }
    rep.frames = frames;
    Ok(rep)
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "IoU threshold  {:.2}", self.iou_thresh)?;
        writeln!(f, "TP / FP / FN   {} / {} / {}", self.tp, self.fp, self.fn_)?;
        writeln!(f, "recall         {:.4}", self.recall)?;
        writeln!(f, "precision      {:.4}", self.precision)?;
        writeln!(f, "ATE (m)        {:.4}", self.ate)?;
        writeln!(f, "ASE            {:.4}", self.ase)?;
        write!(f, "AOE (deg)      {:.4}", self.aoe.to_degrees())?;
        if let Some(v) = self.ave {
            write!(f, "\nAVE (m/s)      {v:.4}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{box_to_transform, RigidTransform};
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn car(x: f64, y: f64, t: f64) -> BoundingBox<f64> {
        BoundingBox::new([x, y, 0.8], [4.5, 1.9, 1.6], t)
    }

    fn frames(boxes: Vec<Vec<BoundingBox<f64>>>) -> Vec<FrameBoxes<f64>> {
        boxes
            .into_iter()
            .enumerate()
            .map(|(i, boxes)| FrameBoxes { timestep: i as f64 * 0.1, boxes })
            .collect()
    }

    #[test]
    fn perfect_detections() {
        let g = frames(vec![vec![car(0.0, 0.0, 0.1), car(10.0, 3.0, 1.0)]; 3]);
        let r = compute_report(&g, &g, &EvalConfig::default()).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (6, 0, 0));
        assert_eq!((r.recall, r.precision), (1.0, 1.0));
        assert_eq!((r.ate, r.ase, r.aoe), (0.0, 0.0, 0.0));
    }

    #[test]
    fn empty_detections() {
        let g = frames(vec![vec![car(0.0, 0.0, 0.0), car(10.0, 0.0, 0.0), car(20.0, 0.0, 0.0)]]);
        let d = frames(vec![vec![]]);
        let r = compute_report(&d, &g, &EvalConfig::default()).unwrap();
        assert_eq!((r.fn_, r.recall, r.precision), (3, 0.0, 0.0));
    }

    #[test]
    fn shifted_detections_give_exact_ate() {
        let g = frames(vec![vec![car(0.0, 0.0, 0.0), car(10.0, 0.0, 0.5)]]);
        let d = frames(vec![g[0].boxes.iter().map(|b| b.translated(Vector3::new(0.2, 0.0, 0.0))).collect()]);
        let r = compute_report(&d, &g, &EvalConfig::default()).unwrap();
        assert!((r.ate - 0.2).abs() < 1e-12);
        assert_eq!(r.aoe, 0.0);
        assert_eq!(r.ase, 0.0);
    }

    #[test]
    fn flipped_heading_has_zero_orientation_error() {
        let g = frames(vec![vec![car(0.0, 0.0, 0.3)]]);
        let d = frames(vec![vec![car(0.0, 0.0, 0.3 + std::f64::consts::PI)]]);
        assert!(compute_report(&d, &g, &EvalConfig::default()).unwrap().aoe < 1e-12);
    }

    #[test]
    fn scale_error_values() {
        let a = car(0.0, 0.0, 0.0);
        let mut b = a;
        b.l = 9.0;
        assert!((scale_error(&a, &b) - 0.5).abs() < 1e-12);
        assert_eq!(scale_error(&a, &a), 0.0);
    }

    #[test]
    fn timestep_mismatch_is_an_error() {
        let g = frames(vec![vec![], vec![]]);
        let mut d = g.clone();
        d[1].timestep = 5.0;
        assert!(compute_report(&d, &g, &EvalConfig::default()).is_err());
        assert!(compute_report(&d[..1], &g, &EvalConfig::default()).is_err());
    }

    #[test]
    fn velocity_error_is_opt_in() {
        let g = frames(vec![vec![car(0.0, 0.0, 0.0).with_velocity(3.0, 4.0)]]);
        let d = frames(vec![vec![car(0.0, 0.0, 0.0)]]);
        assert_eq!(compute_report(&d, &g, &EvalConfig::default()).unwrap().ave, None);
        let cfg = EvalConfig { velocity: true, ..Default::default() };
        assert_eq!(compute_report(&d, &g, &cfg).unwrap().ave, Some(5.0));
    }

    fn random_scene(rng: &mut ChaCha8Rng) -> (Vec<BoundingBox<f64>>, Vec<BoundingBox<f64>>) {
        let gts: Vec<_> = (0..rng.random_range(0..6))
            .map(|i| car(i as f64 * 7.0, rng.random_range(-2.0..2.0), rng.random_range(-1.5..1.5)))
            .collect();
        let mut dets = Vec::new();
        for b in &gts {
            if rng.random_bool(0.8) {
                let mut d = b.translated(Vector3::new(rng.random_range(-1.5..1.5), rng.random_range(-0.8..0.8), 0.0));
                d.theta += rng.random_range(-0.3..0.3);
                dets.push(d);
            }
        }
        for _ in 0..rng.random_range(0..3) {
            dets.push(car(rng.random_range(-5.0..40.0), rng.random_range(-4.0..4.0), rng.random_range(-1.5..1.5)));
        }
        (dets, gts)
    }

    #[test]
    fn monotone_under_extra_fp_and_fn() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let (d, g) = random_scene(&mut rng);
            let base = compute_report(&frames(vec![d.clone()]), &frames(vec![g.clone()]), &EvalConfig::default()).unwrap();
            let mut d2 = d.clone();
            d2.push(car(500.0, 500.0, 0.0));
            let more_fp = compute_report(&frames(vec![d2]), &frames(vec![g.clone()]), &EvalConfig::default()).unwrap();
            assert!(more_fp.precision <= base.precision);
            let mut g2 = g.clone();
            g2.push(car(-500.0, 500.0, 0.0));
            let more_fn = compute_report(&frames(vec![d]), &frames(vec![g2]), &EvalConfig::default()).unwrap();
            assert!(more_fn.recall <= base.recall);
        }
    }

    #[test]
    fn invariant_under_rigid_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = RigidTransform::from_yaw_translation(0.9, Vector3::new(13.0, -7.0, 0.0));
        let mv = |bs: &[BoundingBox<f64>]| -> Vec<BoundingBox<f64>> {
            bs.iter().map(|b| b.with_pose(&g.compose(&box_to_transform(b)))).collect()
        };
        for _ in 0..30 {
            let (d, gt) = random_scene(&mut rng);
            let a = compute_report(&frames(vec![d.clone()]), &frames(vec![gt.clone()]), &EvalConfig::default()).unwrap();
            let b = compute_report(&frames(vec![mv(&d)]), &frames(vec![mv(&gt)]), &EvalConfig::default()).unwrap();
            assert_eq!((a.tp, a.fp, a.fn_), (b.tp, b.fp, b.fn_));
            assert!((a.ate - b.ate).abs() < 1e-9 && (a.ase - b.ase).abs() < 1e-9 && (a.aoe - b.aoe).abs() < 1e-9);
        }
    }

    #[test]
    fn pair_count_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let (d, g) = random_scene(&mut rng);
            let m = match_frame(&d, &g, 0.3);
            assert!(m.pairs.len() <= d.len().min(g.len()));
            assert_eq!(m.pairs.len() + m.unmatched_dets.len(), d.len());
            assert_eq!(m.pairs.len() + m.unmatched_gts.len(), g.len());
            assert!(m.pairs.iter().all(|p| p.2 >= 0.3));
        }
    }
}
