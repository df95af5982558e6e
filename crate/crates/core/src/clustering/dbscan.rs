use std::collections::VecDeque;

use nalgebra::Point3;

use super::{ClusterLabeling, KdTree, NOISE};
use crate::error::{Error, Result};
use crate::scalar::Real;

const UNVISITED: i32 = -2;

/// DBSCAN over `pts`.
///
/// A point is core when its closed `eps`-ball (itself included) holds at least
/// `min_pts` points. Points are visited in input order, so a border point
/// reachable from several clusters joins the one with the lowest id.
pub fn dbscan<T: Real>(pts: &[Point3<T>], eps: T, min_pts: usize) -> Result<ClusterLabeling> {
    if !(eps > T::zero()) || min_pts == 0 {
        return Err(Error::InvalidParameter(format!(
            "dbscan requires eps > 0 and min_pts ≥ 1 (eps={eps}, min_pts={min_pts})"
        )));
    }
    let n = pts.len();
    if n == 0 {
        return Ok(ClusterLabeling::default());
    }
    let tree = KdTree::new(pts);
    let mut labels = vec![UNVISITED; n];
    let mut cluster = 0i32;
    let mut nbrs = Vec::new();
    let mut queue = VecDeque::new();

    // Labels do not depend on the expansion order within a cluster: each
    // cluster is grown completely before the next seed is tried. Points are
    // labelled when enqueued, so each is queued at most once.
    for i in 0..n {
        if labels[i] != UNVISITED {
            continue;
        }
        tree.within_radius_unordered_into(&pts[i], eps, &mut nbrs);
        if nbrs.len() < min_pts {
            labels[i] = NOISE;
            continue;
        }
        labels[i] = cluster;
        enqueue(&nbrs, &mut labels, cluster, &mut queue);
        while let Some(j) = queue.pop_front() {
            tree.within_radius_unordered_into(&pts[j], eps, &mut nbrs);
            if nbrs.len() >= min_pts {
                enqueue(&nbrs, &mut labels, cluster, &mut queue);
            }
        }
        cluster += 1;
    }
    Ok(ClusterLabeling {
        labels,
        cluster_count: cluster as usize,
    })
}

/// Claims unvisited and noise neighbours for `cluster`; only unvisited ones
/// still need their own neighbourhood examined (noise was already found
/// non-core and becomes a border point).
fn enqueue(nbrs: &[usize], labels: &mut [i32], cluster: i32, queue: &mut VecDeque<usize>) {
    for &j in nbrs {
        match labels[j] {
            UNVISITED => {
                labels[j] = cluster;
                queue.push_back(j);
            }
            NOISE => labels[j] = cluster,
            _ => {}
        }
    }
}
