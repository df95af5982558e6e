use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{hdbscan, voxel_downsample, ClusterLabeling, KdTree};
use crate::discovery::{remove_ground, GroundParams};
use crate::error::Result;
use crate::geometry::{centroid, PointCloud, RigidTransform};
use crate::registration::{hungarian, icp_with_tree, CostMatrix, IcpParams};
use crate::scalar::Real;

/// Cost assigned to cluster pairs that fail the centroid gate.
pub const GATED_COST: f64 = 1e3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub min_cluster_size: usize,
    /// Clustering and registration run on voxel centroids of this size
    /// (meters); `0` uses every point.
    pub voxel_size: f64,
    /// Cluster pairs whose centroids are farther apart are not registered (meters).
    pub centroid_gate: f64,
    /// Matches with cost `1 − inlier_ratio` above this are dropped.
    pub max_cost: f64,
    /// Cluster only non-ground points; ground keeps zero flow.
    pub exclude_ground: bool,
    pub icp: IcpParams,
    pub ground: GroundParams,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            min_cluster_size: 10,
            voxel_size: 0.2,
            centroid_gate: 10.0,
            max_cost: 0.5,
            exclude_ground: true,
            icp: IcpParams::default(),
            ground: GroundParams::default(),
        }
    }
}

/// Per-point displacement, aligned with the source cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField<T: Real> {
    pub vectors: Vec<Vector3<T>>,
}

impl<T: Real> FlowField<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            vectors: vec![Vector3::zeros(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Moves each point by its flow vector.
    pub fn translate(&self, pts: &[Point3<T>]) -> Vec<Point3<T>> {
        assert_eq!(pts.len(), self.vectors.len(), "flow/cloud size mismatch");
        pts.iter().zip(&self.vectors).map(|(p, f)| p + f).collect()
    }

    pub fn moving_count(&self, threshold: T) -> usize {
        self.vectors.iter().filter(|v| v.norm() > threshold).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterMatch<T: Real> {
    pub src_cluster: usize,
    pub dst_cluster: usize,
    pub transform: RigidTransform<T>,
    pub cost: T,
}

/// Scene flow together with the intermediate clustering and matching.
#[derive(Clone, Debug)]
pub struct SceneFlow<T: Real> {
    pub flow: FlowField<T>,
    /// Labels over the full source / target clouds (ground is noise).
    pub src_labels: ClusterLabeling,
    pub dst_labels: ClusterLabeling,
    pub matches: Vec<ClusterMatch<T>>,
}

/// Flow aligning `src` onto `dst` by cluster matching.
pub fn estimate_scene_flow<T: Real>(
    src: &PointCloud<T>,
    dst: &PointCloud<T>,
    cfg: &FlowConfig,
) -> Result<FlowField<T>> {
    Ok(estimate_scene_flow_detailed(src, dst, cfg)?.flow)
}

pub fn estimate_scene_flow_detailed<T: Real>(
    src: &PointCloud<T>,
    dst: &PointCloud<T>,
    cfg: &FlowConfig,
) -> Result<SceneFlow<T>> {
    let src_cl = cluster_cloud(src, cfg)?;
    let dst_cl = cluster_cloud(dst, cfg)?;
    let mut flow = FlowField::zeros(src.len());
    if src_cl.members.is_empty() || dst_cl.members.is_empty() {
        return Ok(SceneFlow {
            flow,
            src_labels: src_cl.labels,
            dst_labels: dst_cl.labels,
            matches: Vec::new(),
        });
    }
    let src_sets = &src_cl.points;
    let dst_sets = &dst_cl.points;
    let src_c: Vec<Point3<T>> = src_sets.iter().map(|s| centroid(s).unwrap()).collect();
    let dst_c: Vec<Point3<T>> = dst_sets.iter().map(|s| centroid(s).unwrap()).collect();
    let trees: Vec<KdTree<T>> = dst_sets.par_iter().map(|s| KdTree::new(s)).collect();

    let gate = T::lit(cfg.centroid_gate);
    let cols = dst_sets.len();
    let pairs: Vec<(usize, usize)> = (0..src_sets.len())
        .flat_map(|i| (0..cols).map(move |j| (i, j)))
        .filter(|&(i, j)| (dst_c[j] - src_c[i]).norm() <= gate)
        .collect();
    let results = pairs
        .par_iter()
        .map(|&(i, j)| {
            let init = RigidTransform::from_translation(dst_c[j] - src_c[i]);
            icp_with_tree(&src_sets[i], &trees[j], &init, &cfg.icp)
        })
        .collect::<Result<Vec<_>>>()?;

    let sentinel = T::lit(GATED_COST);
    let mut data = vec![sentinel; src_sets.len() * cols];
    let mut transforms = vec![None; src_sets.len() * cols];
    for (&(i, j), r) in pairs.iter().zip(results) {
        data[i * cols + j] = T::one() - r.inlier_ratio;
        transforms[i * cols + j] = Some(r.transform);
    }
    let cost = CostMatrix::new(src_sets.len(), cols, data)?;
    let assignment = hungarian(&cost, Some(T::lit(cfg.max_cost)));

    let mut matches = Vec::new();
    for (i, j) in assignment.pairs() {
        let Some(t) = transforms[i * cols + j] else {
            continue;
        };
        for &p in &src_cl.members[i] {
            let q = src.points[p];
            flow.vectors[p] = t.apply(&q) - q;
        }
        matches.push(ClusterMatch {
            src_cluster: i,
            dst_cluster: j,
            transform: t,
            cost: cost.get(i, j),
        });
    }
    Ok(SceneFlow {
        flow,
        src_labels: src_cl.labels,
        dst_labels: dst_cl.labels,
        matches,
    })
}

/// Clusters of one cloud.
struct Clusters<T: Real> {
    /// Labels over the full cloud; ground and noise are [`crate::clustering::NOISE`].
    labels: ClusterLabeling,
    /// Cloud indices per cluster.
    members: Vec<Vec<usize>>,
    /// Points registration runs on per cluster (voxel centroids when voxelised).
    points: Vec<Vec<Point3<T>>>,
}

/// HDBSCAN over the non-ground, optionally voxelised part of `cloud`.
fn cluster_cloud<T: Real>(cloud: &PointCloud<T>, cfg: &FlowConfig) -> Result<Clusters<T>> {
    let keep: Vec<usize> = if cfg.exclude_ground && !cloud.is_empty() {
        let g = remove_ground(cloud, &cfg.ground);
        (0..cloud.len()).filter(|&i| !g.ground_mask[i]).collect()
    } else {
        (0..cloud.len()).collect()
    };
    let pts: Vec<Point3<T>> = keep.iter().map(|&i| cloud.points[i]).collect();
    // Working points and the cloud indices each one stands for.
    let (work, groups): (Vec<Point3<T>>, Vec<Vec<usize>>) = if cfg.voxel_size > 0.0 {
        let grid = voxel_downsample(&pts, T::lit(cfg.voxel_size))?;
        let groups = grid
            .members()
            .into_iter()
            .map(|m| m.into_iter().map(|k| keep[k]).collect())
            .collect();
        (grid.centroids, groups)
    } else {
        (pts, keep.iter().map(|&i| vec![i]).collect())
    };
    let sub = hdbscan(&work, cfg.min_cluster_size)?;
    let mut labels = ClusterLabeling::all_noise(cloud.len());
    labels.cluster_count = sub.cluster_count;
    let mut members = vec![Vec::new(); sub.cluster_count];
    let mut points = vec![Vec::new(); sub.cluster_count];
    for (k, &l) in sub.labels.iter().enumerate() {
        for &i in &groups[k] {
            labels.labels[i] = l;
        }
        if l >= 0 {
            members[l as usize].extend_from_slice(&groups[k]);
            points[l as usize].push(work[k]);
        }
    }
    for m in &mut members {
        m.sort_unstable();
    }
    Ok(Clusters {
        labels,
        members,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registration::icp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blob(rng: &mut ChaCha8Rng, c: [f64; 3], half: [f64; 3], n: usize) -> Vec<Point3<f64>> {
        (0..n)
            .map(|_| {
                Point3::new(
                    c[0] + rng.random_range(-half[0]..half[0]),
                    c[1] + rng.random_range(-half[1]..half[1]),
                    c[2] + rng.random_range(-half[2]..half[2]),
                )
            })
            .collect()
    }

    fn no_ground() -> FlowConfig {
        FlowConfig {
            exclude_ground: false,
            ..Default::default()
        }
    }

    #[test]
    fn static_scene_has_zero_flow() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pts = blob(&mut rng, [0.0, 0.0, 1.0], [2.0, 1.0, 0.7], 150);
        pts.extend(blob(&mut rng, [10.0, 5.0, 1.0], [2.0, 1.0, 0.7], 150));
        let cloud = PointCloud::new(pts, 0.0, 0);
        let flow = estimate_scene_flow(&cloud, &cloud, &no_ground()).unwrap();
        assert_eq!(flow.len(), 300);
        assert!(flow.vectors.iter().all(|v| v.norm() < 1e-6));
    }

    #[test]
    fn moving_cluster_flow_matches_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let car = blob(&mut rng, [0.0, 0.0, 1.0], [2.2, 0.9, 0.7], 100);
        let wall = blob(&mut rng, [0.0, 12.0, 1.0], [4.0, 0.3, 1.0], 150);
        let mut src = car.clone();
        src.extend(&wall);
        let mut dst: Vec<_> = car.iter().map(|p| p + Vector3::new(2.0, 0.0, 0.0)).collect();
        dst.extend(&wall);
        let flow = estimate_scene_flow(
            &PointCloud::new(src, 0.0, 0),
            &PointCloud::new(dst, 0.1, 0),
            &no_ground(),
        )
        .unwrap();
        for v in &flow.vectors[..100] {
            assert!((v - Vector3::new(2.0, 0.0, 0.0)).norm() < 0.05, "{v:?}");
        }
        for v in &flow.vectors[100..] {
            assert!(v.norm() < 1e-6);
        }
    }

    #[test]
    fn swapped_clusters_match_true_counterparts() {
        // A long van and a small crate trade places along x.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let van = blob(&mut rng, [0.0, 0.0, 1.0], [3.0, 1.0, 1.0], 180);
        let crate_box = blob(&mut rng, [8.0, 0.0, 1.0], [0.5, 0.5, 0.5], 150);
        let shift = Vector3::new(8.0, 0.0, 0.0);
        let mut src = van.clone();
        src.extend(&crate_box);
        let mut dst: Vec<_> = van.iter().map(|p| p + shift).collect();
        dst.extend(crate_box.iter().map(|p| p - shift));
        let cfg = FlowConfig {
            max_cost: 1.0,
            ..no_ground()
        };
        let sf = estimate_scene_flow_detailed(
            &PointCloud::new(src.clone(), 0.0, 0),
            &PointCloud::new(dst.clone(), 0.1, 0),
            &cfg,
        )
        .unwrap();
        assert_eq!(sf.matches.len(), 2);
        for m in &sf.matches {
            let a = sf.src_labels.members()[m.src_cluster][0];
            let b = sf.dst_labels.members()[m.dst_cluster][0];
            assert_eq!(a < 180, b < 180, "crossed match");
        }
        // Direct ICP confirms the true pairing is cheaper than the crossed one.
        let run = |s: &[Point3<f64>], d: &[Point3<f64>]| {
            let init = RigidTransform::from_translation(centroid(d).unwrap() - centroid(s).unwrap());
            1.0 - icp(s, d, &init, &cfg.icp).unwrap().inlier_ratio
        };
        let (dl, db) = (&dst[..180], &dst[180..]);
        let true_cost = run(&van, dl) + run(&crate_box, db);
        let crossed = run(&van, db) + run(&crate_box, dl);
        assert!(true_cost < crossed, "{true_cost} vs {crossed}");
    }

    #[test]
    fn empty_source_gives_empty_field() {
        let dst = PointCloud::new(vec![Point3::new(0.0, 0.0, 0.0)], 0.0, 0);
        let flow = estimate_scene_flow(&PointCloud::<f64>::empty(0.0), &dst, &no_ground()).unwrap();
        assert!(flow.is_empty());
    }

    #[test]
    fn compensation_does_not_increase_median_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let car = blob(&mut rng, [0.0, 0.0, 1.0], [2.2, 0.9, 0.7], 120);
        let van = blob(&mut rng, [0.0, 8.0, 1.0], [2.5, 1.0, 1.0], 120);
        let mut src = car.clone();
        src.extend(&van);
        let mut dst: Vec<_> = car.iter().map(|p| p + Vector3::new(1.0, 0.2, 0.0)).collect();
        dst.extend(van.iter().map(|p| p + Vector3::new(-0.8, 0.0, 0.0)));
        let flow = estimate_scene_flow(
            &PointCloud::new(src.clone(), 0.0, 0),
            &PointCloud::new(dst.clone(), 0.1, 0),
            &no_ground(),
        )
        .unwrap();
        let tree = KdTree::new(&dst);
        let median = |pts: &[Point3<f64>]| {
            let mut d: Vec<f64> = pts.iter().map(|p| tree.nearest(p).unwrap().1).collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            d[d.len() / 2]
        };
        assert!(median(&flow.translate(&src)) <= median(&src));
    }
}
