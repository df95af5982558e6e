use nalgebra::{Matrix3, Point3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::clustering::KdTree;
use crate::error::{Error, Result};
use crate::geometry::{centroid, RigidTransform};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcpParams {
    pub max_iter: usize,
    /// Correspondence gate in meters; also the inlier threshold.
    pub corr_dist: f64,
    /// Convergence threshold on the per-iteration update (meters / radians).
    pub tol: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iter: 30,
            corr_dist: 1.0,
            tol: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IcpResult<T: Real> {
    /// Maps source points onto the target.
    pub transform: RigidTransform<T>,
    /// Fraction of source points whose aligned nearest target lies within the gate.
    pub inlier_ratio: T,
    pub iterations: usize,
    pub converged: bool,
}

/// Point-to-point ICP with closed-form SVD updates.
pub fn icp<T: Real>(
    source: &[Point3<T>],
    target: &[Point3<T>],
    init: &RigidTransform<T>,
    params: &IcpParams,
) -> Result<IcpResult<T>> {
    let tree = KdTree::new(target);
    icp_with_tree(source, &tree, init, params)
}

/// As [`icp`] with a prebuilt index over the target.
pub fn icp_with_tree<T: Real>(
    source: &[Point3<T>],
    target: &KdTree<T>,
    init: &RigidTransform<T>,
    params: &IcpParams,
) -> Result<IcpResult<T>> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::InvalidParameter(
            "icp needs non-empty source and target".into(),
        ));
    }
    if !(params.corr_dist > 0.0) {
        return Err(Error::InvalidParameter("icp corr_dist must be positive".into()));
    }
    let gate = T::lit(params.corr_dist);
    let tol = T::lit(params.tol);
    let mut current = *init;
    let mut converged = false;
    let mut iterations = 0;
    let mut src = Vec::with_capacity(source.len());
    let mut dst = Vec::with_capacity(source.len());

    while iterations < params.max_iter {
        iterations += 1;
        src.clear();
        dst.clear();
        for p in source {
            let moved = current.apply(p);
            if let Some((j, d)) = target.nearest(&moved) {
                if d <= gate {
                    src.push(moved);
                    dst.push(*target.point(j));
                }
            }
        }
        if src.len() < 3 {
            break;
        }
        let (step, well_posed) = match kabsch(&src, &dst) {
            Some(step) => (step, true),
            None => {
                // rotation unobservable: best-effort translation-only step
                let d = centroid(&dst).unwrap() - centroid(&src).unwrap();
                (RigidTransform::from_translation(d), false)
            }
        };
        current = step.compose(&current);
        if !well_posed {
            break;
        }
        if step.translation().norm() < tol && step.rotation_angle() < tol {
            converged = true;
            break;
        }
    }

    let inliers = source
        .iter()
        .filter(|p| {
            target
                .nearest(&current.apply(p))
                .is_some_and(|(_, d)| d < gate)
        })
        .count();
    Ok(IcpResult {
        transform: current,
        inlier_ratio: T::from_usize(inliers).unwrap() / T::from_usize(source.len()).unwrap(),
        iterations,
        converged,
    })
}

/// Least-squares rotation and translation mapping `src` onto `dst`.
///
/// Returns `None` when the correspondences are collinear or coincident.
pub fn kabsch<T: Real>(src: &[Point3<T>], dst: &[Point3<T>]) -> Option<RigidTransform<T>> {
    let cs = centroid(src)?;
    let cd = centroid(dst)?;
    let mut h = Matrix3::zeros();
    for (p, q) in src.iter().zip(dst) {
        h += (p - cs) * (q - cd).transpose();
    }
    let svd = h.svd(true, true);
    let s = svd.singular_values;
    let scale = s[0].max(s[1]).max(s[2]);
    let mid = {
        let mut v = [s[0], s[1], s[2]];
        v.sort_by(|a, b| b.partial_cmp(a).unwrap());
        v[1]
    };
    if scale <= T::zero() || mid <= scale * T::tolerance() {
        return None;
    }
    let u = svd.u?;
    let v_t = svd.v_t?;
    let mut correction = Matrix3::identity();
    if (v_t.transpose() * u.transpose()).determinant() < T::zero() {
        correction[(2, 2)] = -T::one();
    }
    let r = v_t.transpose() * correction * u.transpose();
    let rotation = Rotation3::from_matrix_eps(&r, T::default_epsilon(), 16, Rotation3::identity());
    let t: Vector3<T> = cd.coords - rotation * cs.coords;
    Some(RigidTransform::from_rotation_translation(&rotation, t))
}
