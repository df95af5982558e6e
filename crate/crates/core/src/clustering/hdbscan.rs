//! HDBSCAN: mutual-reachability minimum spanning tree, condensed cluster
//! tree and excess-of-mass cluster selection.
//!
//! The core-distance neighbour count equals `min_cluster_size` (the point
//! itself counts as its first neighbour). The root cluster may be selected,
//! so a single dense blob comes out as one cluster rather than as noise.

use nalgebra::Point3;

use super::{ClusterLabeling, KdTree};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub fn hdbscan<T: Real>(pts: &[Point3<T>], min_cluster_size: usize) -> Result<ClusterLabeling> {
    if min_cluster_size < 2 {
        return Err(Error::InvalidParameter(format!(
            "min_cluster_size must be ≥ 2, got {min_cluster_size}"
        )));
    }
    let n = pts.len();
    if n < min_cluster_size {
        return Ok(ClusterLabeling::all_noise(n));
    }
    let core = core_distances(pts, min_cluster_size);
    let mst = mutual_reachability_mst(pts, &core);
    let linkage = single_linkage(n, mst);
    let tree = CondensedTree::build(&linkage, n, min_cluster_size);
    let selected = tree.select_clusters();
    Ok(tree.label_points(&selected))
}

fn core_distances<T: Real>(pts: &[Point3<T>], k: usize) -> Vec<T> {
    let tree = KdTree::new(pts);
    pts.iter()
        .map(|p| tree.nearest_k(p, k).last().map(|x| x.1).unwrap_or(T::zero()))
        .collect()
}

#[derive(Clone, Copy, Debug)]
struct Edge<T> {
    a: usize,
    b: usize,
    weight: T,
}

/// Prim's algorithm on the dense mutual-reachability graph; ties resolve to
/// the lowest vertex index.
fn mutual_reachability_mst<T: Real>(pts: &[Point3<T>], core: &[T]) -> Vec<Edge<T>> {
    let n = pts.len();
    let inf = T::max_value().unwrap();
    let mut in_tree = vec![false; n];
    let mut best = vec![inf; n];
    let mut from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut current = 0usize;
    in_tree[0] = true;
    for _ in 1..n {
        let mut next = usize::MAX;
        let mut next_w = inf;
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let d = (pts[current] - pts[j]).norm();
            let mr = d.max(core[current]).max(core[j]);
            if mr < best[j] {
                best[j] = mr;
                from[j] = current;
            }
            if best[j] < next_w || next == usize::MAX {
                next_w = best[j];
                next = j;
            }
        }
        in_tree[next] = true;
        edges.push(Edge {
            a: from[next],
            b: next,
            weight: best[next],
        });
        current = next;
    }
    edges
}

/// One merge of the single-linkage dendrogram; node `n + i` is merge `i`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Merge<T> {
    left: usize,
    right: usize,
    distance: T,
    size: usize,
}

fn single_linkage<T: Real>(n: usize, mut mst: Vec<Edge<T>>) -> Vec<Merge<T>> {
    // stable: equal weights keep Prim order
    mst.sort_by(|x, y| x.weight.partial_cmp(&y.weight).unwrap());
    let mut parent: Vec<usize> = (0..2 * n).collect();
    let mut size = vec![1usize; 2 * n];
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for e in mst {
        let ra = find(&mut parent, e.a);
        let rb = find(&mut parent, e.b);
        let node = n + merges.len();
        let (left, right) = (ra.min(rb), ra.max(rb));
        size[node] = size[ra] + size[rb];
        parent[ra] = node;
        parent[rb] = node;
        merges.push(Merge {
            left,
            right,
            distance: e.weight,
            size: size[node],
        });
    }
    merges
}

/// Row of the condensed tree: `child` (a point `< n` or a cluster label
/// `≥ n`) leaves `parent` at density `lambda`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct CondensedRow<T> {
    pub parent: usize,
    pub child: usize,
    pub lambda: T,
    pub size: usize,
}

pub(crate) struct CondensedTree<T> {
    pub n: usize,
    pub rows: Vec<CondensedRow<T>>,
    pub cluster_count: usize,
}

impl<T: Real> CondensedTree<T> {
    pub(crate) fn build(merges: &[Merge<T>], n: usize, min_size: usize) -> Self {
        let root = 2 * n - 2;
        let node_size = |x: usize| if x < n { 1 } else { merges[x - n].size };
        let lambda_of = |d: T| T::one() / d.max(T::lit(1e-10));

        let mut relabel = vec![usize::MAX; 2 * n - 1];
        relabel[root] = n;
        let mut next_label = n + 1;
        let mut rows = Vec::new();
        let mut ignore = vec![false; 2 * n - 1];

        // breadth-first from the root so cluster labels grow with depth
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(node) = queue.pop_front() {
            if node < n || ignore[node] {
                continue;
            }
            let m = merges[node - n];
            queue.push_back(m.left);
            queue.push_back(m.right);
            let lambda = lambda_of(m.distance);
            let (ls, rs) = (node_size(m.left), node_size(m.right));
            let parent = relabel[node];
            match (ls >= min_size, rs >= min_size) {
                (true, true) => {
                    for (child, sz) in [(m.left, ls), (m.right, rs)] {
                        relabel[child] = next_label;
                        rows.push(CondensedRow {
                            parent,
                            child: next_label,
                            lambda,
                            size: sz,
                        });
                        next_label += 1;
                    }
                }
                (false, false) => {
                    for child in [m.left, m.right] {
                        for p in leaves(merges, n, child) {
                            rows.push(CondensedRow {
                                parent,
                                child: p,
                                lambda,
                                size: 1,
                            });
                        }
                        mark_ignored(merges, n, child, &mut ignore);
                    }
                }
                (big_left, _) => {
                    let (big, small) = if big_left {
                        (m.left, m.right)
                    } else {
                        (m.right, m.left)
                    };
                    relabel[big] = parent;
                    for p in leaves(merges, n, small) {
                        rows.push(CondensedRow {
                            parent,
                            child: p,
                            lambda,
                            size: 1,
                        });
                    }
                    mark_ignored(merges, n, small, &mut ignore);
                }
            }
        }
        Self {
            n,
            rows,
            cluster_count: next_label - n,
        }
    }

    fn birth_lambdas(&self) -> Vec<T> {
        let mut birth = vec![T::zero(); self.cluster_count];
        for r in &self.rows {
            if r.child >= self.n {
                birth[r.child - self.n] = r.lambda;
            }
        }
        birth
    }

    pub(crate) fn stabilities(&self) -> Vec<T> {
        let birth = self.birth_lambdas();
        let mut stability = vec![T::zero(); self.cluster_count];
        for r in &self.rows {
            let c = r.parent - self.n;
            stability[c] += (r.lambda - birth[c]) * T::from_usize(r.size).unwrap();
        }
        stability
    }

    /// Excess-of-mass selection; returns a flag per cluster label (offset by `n`).
    pub(crate) fn select_clusters(&self) -> Vec<bool> {
        let k = self.cluster_count;
        let mut stability = self.stabilities();
        let mut children = vec![Vec::new(); k];
        for r in &self.rows {
            if r.child >= self.n {
                children[r.parent - self.n].push(r.child - self.n);
            }
        }
        let mut selected = vec![false; k];
        // children always carry larger labels than their parent
        for c in (0..k).rev() {
            if children[c].is_empty() {
                selected[c] = true;
                continue;
            }
            let subtree: T = children[c]
                .iter()
                .fold(T::zero(), |acc, &ch| acc + stability[ch]);
            if subtree > stability[c] {
                stability[c] = subtree;
            } else {
                selected[c] = true;
                let mut stack = children[c].clone();
                while let Some(d) = stack.pop() {
                    selected[d] = false;
                    stack.extend(children[d].iter().copied());
                }
            }
        }
        selected
    }

    pub(crate) fn label_points(&self, selected: &[bool]) -> ClusterLabeling {
        let n = self.n;
        let mut cluster_parent = vec![usize::MAX; self.cluster_count];
        let mut point_parent = vec![usize::MAX; n];
        for r in &self.rows {
            if r.child >= n {
                cluster_parent[r.child - n] = r.parent - n;
            } else {
                point_parent[r.child] = r.parent - n;
            }
        }
        let raw: Vec<i64> = point_parent
            .iter()
            .map(|&start| {
                let mut c = start;
                while c != usize::MAX {
                    if selected[c] {
                        return c as i64;
                    }
                    c = cluster_parent[c];
                }
                -1
            })
            .collect();
        ClusterLabeling::from_raw(&raw)
    }
}

fn leaves<T>(merges: &[Merge<T>], n: usize, node: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut stack = vec![node];
    while let Some(x) = stack.pop() {
        if x < n {
            out.push(x);
        } else {
            stack.push(merges[x - n].left);
            stack.push(merges[x - n].right);
        }
    }
    out.sort_unstable();
    out
}

fn mark_ignored<T>(merges: &[Merge<T>], n: usize, node: usize, ignore: &mut [bool]) {
    let mut stack = vec![node];
    while let Some(x) = stack.pop() {
        if x >= n {
            ignore[x] = true;
            stack.push(merges[x - n].left);
            stack.push(merges[x - n].right);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn line(xs: &[f64]) -> Vec<Point3<f64>> {
        xs.iter().map(|&x| Point3::new(x, 0.0, 0.0)).collect()
    }

    /// Hand trace, min_cluster_size 3, points {0,1,2,3} and {10,11,12,13}:
    /// core distances 2,1,1,2 per group; the groups join at mutual
    /// reachability 7 (λ = 1/7) and each dissolves at distance 2 (λ = 1/2).
    /// Root stability 8·(1/7) < children 2·4·(1/2 − 1/7), so both groups win.
    #[test]
    fn eight_point_hand_trace() {
        let pts = line(&[0.0, 1.0, 2.0, 3.0, 10.0, 11.0, 12.0, 13.0]);
        let core = core_distances(&pts, 3);
        assert_eq!(core, vec![2.0, 1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0]);
        let mst = mutual_reachability_mst(&pts, &core);
        let mut w: Vec<f64> = mst.iter().map(|e| e.weight).collect();
        w.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(w, vec![1.0, 1.0, 2.0, 2.0, 2.0, 2.0, 7.0]);

        let tree = CondensedTree::build(&single_linkage(8, mst), 8, 3);
        assert_eq!(tree.cluster_count, 3);
        let clusters: Vec<_> = tree.rows.iter().filter(|r| r.child >= 8).collect();
        assert_eq!(clusters.len(), 2);
        for r in &clusters {
            assert_eq!((r.parent, r.size), (8, 4));
            assert!((r.lambda - 1.0 / 7.0).abs() < 1e-12);
        }
        for r in tree.rows.iter().filter(|r| r.child < 8) {
            assert!((r.lambda - 0.5).abs() < 1e-12);
        }
        let stab = tree.stabilities();
        assert!((stab[0] - 8.0 / 7.0).abs() < 1e-12);
        assert!((stab[1] - 4.0 * (0.5 - 1.0 / 7.0)).abs() < 1e-12);
        assert!((stab[2] - 4.0 * (0.5 - 1.0 / 7.0)).abs() < 1e-12);

        let l = hdbscan(&pts, 3).unwrap();
        assert_eq!(l.labels, vec![0, 0, 0, 0, 1, 1, 1, 1]);
    }

    /// Same groups at gap 3: root stability 8/3 beats children 8·(1/2 − 1/3).
    #[test]
    fn close_groups_collapse_to_root() {
        let pts = line(&[0.0, 1.0, 2.0, 3.0, 6.0, 7.0, 8.0, 9.0]);
        let l = hdbscan(&pts, 3).unwrap();
        assert_eq!(l.cluster_count, 1);
        assert_eq!(l.noise_count(), 0);
    }

    #[test]
    fn two_gaussian_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let normal = Normal::new(0.0, 0.2).unwrap();
        let mut pts = Vec::new();
        for c in [0.0, 10.0] {
            for _ in 0..50 {
                pts.push(Point3::new(
                    c + normal.sample(&mut rng),
                    normal.sample(&mut rng),
                    normal.sample(&mut rng),
                ));
            }
        }
        let l = hdbscan(&pts, 5).unwrap();
        assert_eq!(l.cluster_count, 2);
        assert!(pts.len() - l.noise_count() >= 90);
        assert!(l.labels[..50].iter().all(|&x| x != 1));
        assert!(l.labels[50..].iter().all(|&x| x != 0));
    }

    #[test]
    fn single_blob_is_one_cluster() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let normal = Normal::new(0.0, 0.3).unwrap();
        let pts: Vec<_> = (0..80)
            .map(|_| Point3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng)))
            .collect();
        assert_eq!(hdbscan(&pts, 10).unwrap().cluster_count, 1);
    }

    #[test]
    fn too_few_points_is_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let pts: Vec<_> = (0..20)
            .map(|_| Point3::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0), 0.0))
            .collect();
        assert_eq!(hdbscan(&pts, 25).unwrap(), ClusterLabeling::all_noise(20));
        assert!(hdbscan(&pts, 1).is_err());
    }

    #[test]
    fn clusters_respect_min_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for m in [3, 5, 8, 12] {
            let pts: Vec<_> = (0..150)
                .map(|_| Point3::new(rng.random_range(0.0..12.0), rng.random_range(0.0..12.0), rng.random_range(0.0..1.0)))
                .collect();
            let l = hdbscan(&pts, m).unwrap();
            assert!(l.is_valid());
            for members in l.members() {
                assert!(members.len() >= m, "cluster of {} < {m}", members.len());
            }
        }
    }
}
