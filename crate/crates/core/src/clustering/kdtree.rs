use nalgebra::Point3;

use crate::scalar::Real;

const LEAF_SIZE: usize = 16;

#[derive(Clone, Debug)]
enum Node<T> {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: T,
        left: usize,
        right: usize,
    },
}

/// Balanced k-d tree over 3D points with median splits.
///
/// Query results refer to indices into the slice the tree was built from.
#[derive(Clone, Debug)]
pub struct KdTree<T: Real> {
    points: Vec<Point3<T>>,
    order: Vec<usize>,
    /// `points` permuted into `order`, so leaf scans are contiguous.
    packed: Vec<Point3<T>>,
    nodes: Vec<Node<T>>,
}

impl<T: Real> KdTree<T> {
    pub fn new(points: &[Point3<T>]) -> Self {
        let mut tree = Self {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            packed: Vec::new(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            tree.build(0, points.len());
        }
        tree.packed = tree.order.iter().map(|&i| tree.points[i]).collect();
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &Point3<T> {
        &self.points[i]
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let axis = self.widest_axis(start, end);
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis]
                .partial_cmp(&points[b][axis])
                .unwrap()
                .then(a.cmp(&b))
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start, end }); // placeholder
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    fn widest_axis(&self, start: usize, end: usize) -> usize {
        let mut lo = self.points[self.order[start]];
        let mut hi = lo;
        for &i in &self.order[start..end] {
            let p = &self.points[i];
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let spread = hi - lo;
        (0..3)
            .max_by(|&a, &b| spread[a].partial_cmp(&spread[b]).unwrap().then(b.cmp(&a)))
            .unwrap()
    }

    /// Indices of all points with `‖p − q‖ ≤ radius`, ascending.
    pub fn within_radius(&self, q: &Point3<T>, radius: T) -> Vec<usize> {
        let mut out = Vec::new();
        self.within_radius_into(q, radius, &mut out);
        out
    }

    /// As [`KdTree::within_radius`], reusing `out`.
    pub fn within_radius_into(&self, q: &Point3<T>, radius: T, out: &mut Vec<usize>) {
        self.within_radius_unordered_into(q, radius, out);
        out.sort_unstable();
    }

    /// As [`KdTree::within_radius_into`] but in unspecified (deterministic) order.
    pub fn within_radius_unordered_into(&self, q: &Point3<T>, radius: T, out: &mut Vec<usize>) {
        out.clear();
        if self.nodes.is_empty() {
            return;
        }
        let r2 = radius * radius;
        let mut stack = Vec::with_capacity(32);
        stack.push(0usize);
        while let Some(id) = stack.pop() {
            match &self.nodes[id] {
                Node::Leaf { start, end } => {
                    for (p, &i) in self.packed[*start..*end].iter().zip(&self.order[*start..*end]) {
                        if (p - q).norm_squared() <= r2 {
                            out.push(i);
                        }
                    }
                }
                Node::Split {
                    axis,
                    value,
                    left,
                    right,
                } => {
                    let d = q[*axis] - *value;
                    if d <= radius {
                        stack.push(*left);
                    }
                    if d >= -radius {
                        stack.push(*right);
                    }
                }
            }
        }
    }

    /// Number of points within `radius` of `q`.
    pub fn count_within(&self, q: &Point3<T>, radius: T) -> usize {
        let mut out = Vec::new();
        self.within_radius_unordered_into(q, radius, &mut out);
        out.len()
    }

    /// The `k` nearest points as `(index, distance)`, ordered by distance then index.
    pub fn nearest_k(&self, q: &Point3<T>, k: usize) -> Vec<(usize, T)> {
        let mut best: Vec<(T, usize)> = Vec::with_capacity(k + 1);
        if k == 0 || self.nodes.is_empty() {
            return Vec::new();
        }
        self.knn_visit(0, q, k, &mut best);
        best.into_iter().map(|(d2, i)| (i, d2.sqrt())).collect()
    }

    fn knn_visit(&self, id: usize, q: &Point3<T>, k: usize, best: &mut Vec<(T, usize)>) {
        match &self.nodes[id] {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    let d2 = (self.points[i] - q).norm_squared();
                    let full = best.len() == k;
                    if full {
                        let (wd, wi) = best[k - 1];
                        if d2 > wd || (d2 == wd && i > wi) {
                            continue;
                        }
                    }
                    let pos = best
                        .partition_point(|&(bd, bi)| bd < d2 || (bd == d2 && bi < i));
                    best.insert(pos, (d2, i));
                    if best.len() > k {
                        best.pop();
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let d = q[*axis] - *value;
                let (near, far) = if d <= T::zero() {
                    (*left, *right)
                } else {
                    (*right, *left)
                };
                self.knn_visit(near, q, k, best);
                if best.len() < k || d * d <= best[best.len() - 1].0 {
                    self.knn_visit(far, q, k, best);
                }
            }
        }
    }

    /// Nearest point as `(index, distance)`.
    pub fn nearest(&self, q: &Point3<T>) -> Option<(usize, T)> {
        self.nearest_k(q, 1).into_iter().next()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point3<f64>> {
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-20.0..20.0),
                    rng.random_range(-2.0..2.0),
                )
            })
            .collect()
    }

    #[test]
    fn radius_query_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = random_points(&mut rng, 2000);
        let tree = KdTree::new(&pts);
        for _ in 0..100 {
            let q = Point3::new(
                rng.random_range(-25.0..25.0),
                rng.random_range(-25.0..25.0),
                rng.random_range(-3.0..3.0),
            );
            let r = rng.random_range(0.1..6.0);
            let expected: Vec<usize> = (0..pts.len())
                .filter(|&i| (pts[i] - q).norm() <= r)
                .collect();
            assert_eq!(tree.within_radius(&q, r), expected);
        }
    }

    #[test]
    fn knn_matches_sorting() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = random_points(&mut rng, 500);
        let tree = KdTree::new(&pts);
        for _ in 0..50 {
            let q = pts[rng.random_range(0..pts.len())] + nalgebra::Vector3::new(0.1, -0.2, 0.05);
            let mut all: Vec<(usize, f64)> =
                pts.iter().enumerate().map(|(i, p)| (i, (p - q).norm())).collect();
            all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
            let got = tree.nearest_k(&q, 7);
            assert_eq!(got.iter().map(|g| g.0).collect::<Vec<_>>(), all[..7].iter().map(|a| a.0).collect::<Vec<_>>());
        }
    }

    #[test]
    fn empty_and_duplicate_points() {
        let tree = KdTree::<f64>::new(&[]);
        assert!(tree.nearest(&Point3::origin()).is_none());
        assert!(tree.within_radius(&Point3::origin(), 1.0).is_empty());
        let pts = vec![Point3::new(1.0, 1.0, 1.0); 40];
        let tree = KdTree::new(&pts);
        assert_eq!(tree.within_radius(&Point3::new(1.0, 1.0, 1.0), 0.0).len(), 40);
        assert_eq!(tree.nearest_k(&Point3::origin(), 3).iter().map(|x| x.0).collect::<Vec<_>>(), vec![0, 1, 2]);
    }
}
