//! Tracklet refinement: aggregate all instances of an object in its body
//! frame, fit one shared box to the aggregate, then re-solve every instance
//! pose so the canonical shape best explains that instance's points.

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{voxel_downsample, KdTree};
use crate::error::{Error, Result};
use crate::geometry::{
    box_to_transform, fit_box_lshape_with, BoundingBox, BoxFitParams, RigidTransform,
};
use crate::registration::{icp_with_tree, IcpParams};
use crate::scalar::{normalize_angle, normalize_half_angle, Real};
use crate::tracking::Tracklet;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub icp: IcpParams,
    /// Instances with fewer member points take no part in aggregation.
    pub min_points: usize,
    /// Voxel size (m) of the thinned copies ICP runs on; 0 registers every point.
    pub voxel_size: f64,
    /// Box fit applied to the aggregate. Finer than the per-frame fit: the
    /// aggregate is dense enough to resolve sub-degree headings.
    pub box_fit: BoxFitParams,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            icp: IcpParams {
                max_iter: 50,
                corr_dist: 1.0,
                tol: 1e-6,
            },
            min_points: 3,
            voxel_size: 0.1,
            box_fit: BoxFitParams {
                resolution_deg: 0.1,
                ..BoxFitParams::default()
            },
        }
    }
}

/// World/body point pair.
pub type Correspondence<T> = (Point3<T>, Point3<T>);

/// All instances of one object expressed in a common body frame.
#[derive(Clone, Debug)]
pub struct CanonicalObject<T: Real> {
    /// Aggregated points in the frame of the seed instance.
    pub points: Vec<Point3<T>>,
    /// Per tracklet instance: world points paired with their aggregated
    /// body coordinates. Empty for instances that were left out.
    pub correspondences: Vec<Vec<Correspondence<T>>>,
    /// Index of the seed (largest) instance.
    pub seed: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefinedDims<T: Real> {
    pub l: T,
    pub w: T,
    pub h: T,
    /// Pose of the fitted box inside the aggregate frame.
    pub canonical: RigidTransform<T>,
}

/// Instance pose within the yaw + translation family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose<T: Real> {
    pub cx: T,
    pub cy: T,
    pub cz: T,
    pub theta: T,
}

impl<T: Real> Pose<T> {
    pub fn transform(&self) -> RigidTransform<T> {
        RigidTransform::from_yaw_translation(self.theta, Vector3::new(self.cx, self.cy, self.cz))
    }
}

pub fn to_body_frame<T: Real>(instance: &BoundingBox<T>, world_pts: &[Point3<T>]) -> Vec<Point3<T>> {
    let inv = box_to_transform(instance).inverse();
    world_pts.iter().map(|p| inv.apply(p)).collect()
}

/// Builds the canonical point set, seeded by the instance with the most points.
pub fn aggregate_object<T: Real>(tracklet: &Tracklet<T>, cfg: &RefineConfig) -> Result<CanonicalObject<T>> {
    let min_points = cfg.min_points.max(3);
    let mut order: Vec<usize> = (0..tracklet.len())
        .filter(|&i| tracklet.instances[i].points.len() >= min_points)
        .collect();
    if order.is_empty() {
        return Err(Error::Degenerate(format!(
            "tracklet {} has no instance with ≥ {min_points} points",
            tracklet.track_id
        )));
    }
    // Largest first; ties keep the earlier instance.
    order.sort_by_key(|&i| std::cmp::Reverse(tracklet.instances[i].points.len()));
    let seed = order[0];
    let reference = tracklet.instances[seed].bbox.theta;

    let thin = |pts: &[Point3<T>]| -> Result<Vec<Point3<T>>> {
        if cfg.voxel_size > 0.0 {
            Ok(voxel_downsample(pts, T::lit(cfg.voxel_size))?.centroids)
        } else {
            Ok(pts.to_vec())
        }
    };
    let mut correspondences = vec![Vec::new(); tracklet.len()];
    let mut points: Vec<Point3<T>> = Vec::new();
    for (rank, &i) in order.iter().enumerate() {
        let inst = &tracklet.instances[i];
        let body = to_body_frame(&facing(&inst.bbox, reference), &inst.points);
        let aligned = if rank == 0 {
            body
        } else {
            let tree = KdTree::new(&thin(&points)?);
            let r = icp_with_tree(&thin(&body)?, &tree, &RigidTransform::identity(), &cfg.icp)?;
            body.iter().map(|p| r.transform.apply(p)).collect()
        };
        correspondences[i] = inst.points.iter().copied().zip(aligned.iter().copied()).collect();
        points.extend(aligned);
    }
    Ok(CanonicalObject {
        points,
        correspondences,
        seed,
    })
}

/// The same footprint re-expressed with the heading among `theta + k·π/2`
/// closest to `reference` (a rectangle is unchanged by a quarter turn that
/// swaps its sides). Short partial views are often fitted sideways.
fn facing<T: Real>(b: &BoundingBox<T>, reference: T) -> BoundingBox<T> {
    let quarter = T::frac_pi_2();
    let k = (normalize_angle(reference - b.theta) / quarter).round();
    let mut out = *b;
    out.theta = normalize_angle(b.theta + k * quarter);
    if (k.as_f64() as i64) % 2 != 0 {
        std::mem::swap(&mut out.l, &mut out.w);
    }
    out
}

/// Fits the shared box to the aggregate.
///
/// The fitted heading is kept within ±90° of the seed's body x-axis so that
/// refined headings stay close to the tracked ones.
pub fn refine_dimension<T: Real>(obj: &CanonicalObject<T>) -> Result<RefinedDims<T>> {
    refine_dimension_with(obj, &BoxFitParams::default())
}

/// [`refine_dimension`] with explicit fit parameters.
pub fn refine_dimension_with<T: Real>(obj: &CanonicalObject<T>, fit: &BoxFitParams) -> Result<RefinedDims<T>> {
    let b = fit_box_lshape_with(&obj.points, fit)?;
    let canonical = RigidTransform::from_yaw_translation(normalize_half_angle(b.theta), b.center().coords);
    Ok(RefinedDims {
        l: b.l,
        w: b.w,
        h: b.h,
        canonical,
    })
}

/// Closed-form yaw + translation least squares mapping body points onto
/// world points.
pub fn refine_pose<T: Real>(correspondences: &[Correspondence<T>]) -> Result<Pose<T>> {
    if correspondences.len() < 2 {
        return Err(Error::Underdetermined("need at least two correspondences".into()));
    }
    let n = T::from_usize(correspondences.len()).unwrap();
    let mut wbar = Vector3::zeros();
    let mut obar = Vector3::zeros();
    for (w, o) in correspondences {
        wbar += w.coords;
        obar += o.coords;
    }
    wbar /= n;
    obar /= n;
    let (mut sin_sum, mut cos_sum, mut spread) = (T::zero(), T::zero(), T::zero());
    for (w, o) in correspondences {
        let (ox, oy) = (o.x - obar.x, o.y - obar.y);
        let (wx, wy) = (w.x - wbar.x, w.y - wbar.y);
        sin_sum += ox * wy - oy * wx;
        cos_sum += ox * wx + oy * wy;
        spread += ox * ox + oy * oy;
    }
    if spread <= T::tolerance() * n || (sin_sum.abs() + cos_sum.abs()) <= T::tolerance() * n {
        return Err(Error::Underdetermined("correspondences have no planar spread".into()));
    }
    let theta = sin_sum.atan2(cos_sum);
    let (s, c) = theta.sin_cos();
    Ok(Pose {
        cx: wbar.x - (c * obar.x - s * obar.y),
        cy: wbar.y - (s * obar.x + c * obar.y),
        cz: wbar.z - obar.z,
        theta: normalize_angle(theta),
    })
}

/// Sum of squared body-frame residuals `‖T⁻¹·w − o‖²` under `pose`.
pub fn pose_objective<T: Real>(pose: &RigidTransform<T>, correspondences: &[Correspondence<T>]) -> T {
    let inv = pose.inverse();
    correspondences
        .iter()
        .map(|(w, o)| (inv.apply(w) - o).norm_squared())
        .fold(T::zero(), |a, b| a + b)
}

#[derive(Clone, Debug)]
pub struct RefineOutcome<T: Real> {
    pub tracklet: Tracklet<T>,
    pub refined: bool,
    /// Why refinement was skipped.
    pub skipped: Option<String>,
}

/// Shared dimensions, per-instance poses and finite-difference velocities.
pub fn refine_tracklet<T: Real>(tracklet: &Tracklet<T>, cfg: &RefineConfig) -> RefineOutcome<T> {
    let skip = |e: Error| RefineOutcome {
        tracklet: tracklet.clone(),
        refined: false,
        skipped: Some(e.to_string()),
    };
    let obj = match aggregate_object(tracklet, cfg) {
        Ok(o) => o,
        Err(e) => return skip(e),
    };
    let dims = match refine_dimension_with(&obj, &cfg.box_fit) {
        Ok(d) => d,
        Err(e) => return skip(e),
    };
    let to_canonical = dims.canonical.inverse();
    let mut out = tracklet.clone();
    for (inst, corr) in out.instances.iter_mut().zip(&obj.correspondences) {
        inst.bbox.l = dims.l;
        inst.bbox.w = dims.w;
        inst.bbox.h = dims.h;
        if corr.is_empty() {
            continue;
        }
        let recentred: Vec<Correspondence<T>> = corr.iter().map(|(w, o)| (*w, to_canonical.apply(o))).collect();
        if let Ok(p) = refine_pose(&recentred) {
            inst.bbox.cx = p.cx;
            inst.bbox.cy = p.cy;
            inst.bbox.cz = p.cz;
            inst.bbox.theta = p.theta;
        }
    }
    finite_difference_velocities(&mut out);
    RefineOutcome {
        tracklet: out,
        refined: true,
        skipped: None,
    }
}

/// Central differences inside, one-sided at the ends; a lone instance keeps
/// its velocity.
pub fn finite_difference_velocities<T: Real>(tracklet: &mut Tracklet<T>) {
    let n = tracklet.len();
    if n < 2 {
        return;
    }
    let centers: Vec<(T, T, f64)> = tracklet
        .instances
        .iter()
        .map(|i| (i.bbox.cx, i.bbox.cy, i.timestamp))
        .collect();
    for k in 0..n {
        let (a, b) = (k.saturating_sub(1), (k + 1).min(n - 1));
        let dt = T::lit(centers[b].2 - centers[a].2);
        let inst = &mut tracklet.instances[k].bbox;
        inst.vx = (centers[b].0 - centers[a].0) / dt;
        inst.vy = (centers[b].1 - centers[a].1) / dt;
    }
}

/// Refines independent tracklets in parallel, preserving order.
pub fn refine_tracklets<T: Real>(tracklets: &[Tracklet<T>], cfg: &RefineConfig) -> Vec<RefineOutcome<T>> {
    tracklets.par_iter().map(|t| refine_tracklet(t, cfg)).collect()
}
