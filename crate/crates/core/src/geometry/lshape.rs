//! Tightest-box fitting by heading search.
//!
//! For each candidate heading on a grid over `[0°, 90°)` the footprint is
//! projected onto the two box axes and every point is scored by its
//! distance to the nearest rectangle edge; the best-scoring heading wins.

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::bbox::BoundingBox;
use crate::error::{Error, Result};
use crate::scalar::{normalize_angle, Real};

pub const LSHAPE_RESOLUTION_DEG: f64 = 1.0;

/// Smallest extent assigned to a fitted box side.
const MIN_EXTENT: f64 = 1e-3;

/// Heading score of the edge search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LShapeCriterion {
    /// Sum over points of `1 / max(d, d0)`, `d` the distance to the nearest
    /// edge. Interior points (roofs seen from above) barely contribute.
    Closeness { d0: f64 },
    /// Points split by their nearer edge axis; minimises the summed variance
    /// of the two groups' edge distances.
    Variance,
}

impl Default for LShapeCriterion {
    fn default() -> Self {
        LShapeCriterion::Closeness { d0: 0.05 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoxFitParams {
    /// Heading grid step in degrees.
    pub resolution_deg: f64,
    pub criterion: LShapeCriterion,
}

impl Default for BoxFitParams {
    fn default() -> Self {
        Self {
            resolution_deg: LSHAPE_RESOLUTION_DEG,
            criterion: LShapeCriterion::default(),
        }
    }
}

/// [`fit_box_lshape_with`] at the default 1° heading grid and criterion.
pub fn fit_box_lshape<T: Real>(cluster: &[Point3<T>]) -> Result<BoundingBox<T>> {
    fit_box_lshape_with(cluster, &BoxFitParams::default())
}

pub fn fit_box_lshape_with<T: Real>(cluster: &[Point3<T>], params: &BoxFitParams) -> Result<BoundingBox<T>> {
    let BoxFitParams {
        resolution_deg,
        criterion,
    } = *params;
    if let LShapeCriterion::Closeness { d0 } = criterion {
        if !(d0 > 0.0) {
            return Err(Error::InvalidParameter(format!("closeness floor {d0} must be positive")));
        }
    }
    if !(resolution_deg > 0.0 && resolution_deg <= 90.0) {
        return Err(Error::InvalidParameter(format!(
            "heading resolution {resolution_deg}° outside (0, 90]"
        )));
    }
    check_planar_spread(cluster)?;

    // Center the footprint for numerical stability.
    let n = T::from_usize(cluster.len()).unwrap();
    let (mut mx, mut my) = (T::zero(), T::zero());
    for p in cluster {
        mx += p.x;
        my += p.y;
    }
    mx /= n;
    my /= n;
    let xy: Vec<(T, T)> = cluster.iter().map(|p| (p.x - mx, p.y - my)).collect();

    let steps = (90.0 / resolution_deg).round().max(1.0) as usize;
    let mut best: Option<(T, T)> = None; // (score, theta)
    let mut c1 = vec![T::zero(); xy.len()];
    let mut c2 = vec![T::zero(); xy.len()];
    for k in 0..steps {
        let theta = T::lit((k as f64 * resolution_deg).to_radians());
        let (s, c) = theta.sin_cos();
        for (i, &(x, y)) in xy.iter().enumerate() {
            c1[i] = c * x + s * y;
            c2[i] = -s * x + c * y;
        }
        let score = match criterion {
            LShapeCriterion::Closeness { d0 } => closeness(&c1, &c2, T::lit(d0)),
            LShapeCriterion::Variance => -edge_distance_variance(&c1, &c2),
        };
        // near-ties go to the first heading so rounding cannot pick the winner
        if best.is_none_or(|(b, _)| score > b + T::lit(1e-12) * b.abs().max(T::one())) {
            best = Some((score, theta));
        }
    }
    let (_, theta) = best.expect("at least one heading evaluated");

    let (s, c) = theta.sin_cos();
    let (mut min1, mut max1, mut min2, mut max2) = (
        T::max_value().unwrap(),
        T::min_value().unwrap(),
        T::max_value().unwrap(),
        T::min_value().unwrap(),
    );
    for &(x, y) in &xy {
        let a = c * x + s * y;
        let b = -s * x + c * y;
        min1 = min1.min(a);
        max1 = max1.max(a);
        min2 = min2.min(b);
        max2 = max2.max(b);
    }
    let two = T::lit(2.0);
    let (m1, m2) = ((min1 + max1) / two, (min2 + max2) / two);
    let cx = mx + c * m1 - s * m2;
    let cy = my + s * m1 + c * m2;
    let floor = T::lit(MIN_EXTENT);
    let (e1, e2) = ((max1 - min1).max(floor), (max2 - min2).max(floor));
    let (l, w, heading) = if e1 >= e2 {
        (e1, e2, theta)
    } else {
        (e2, e1, theta + T::frac_pi_2())
    };

    let (zlo, zhi) = z_extent(cluster);
    let h = (zhi - zlo).max(floor);
    Ok(BoundingBox::new(
        [cx, cy, (zlo + zhi) / two],
        [l, w, h],
        normalize_angle(heading),
    ))
}

fn closeness<T: Real>(c1: &[T], c2: &[T], d0: T) -> T {
    let (min1, max1) = min_max(c1);
    let (min2, max2) = min_max(c2);
    let mut score = T::zero();
    for (&a, &b) in c1.iter().zip(c2) {
        let d = (max1 - a).min(a - min1).min((max2 - b).min(b - min2));
        score += T::one() / d.max(d0);
    }
    score
}

/// Sum of the variances of the nearest-edge distances along each box axis.
fn edge_distance_variance<T: Real>(c1: &[T], c2: &[T]) -> T {
    let (min1, max1) = min_max(c1);
    let (min2, max2) = min_max(c2);
    let mut e1 = Moments::default();
    let mut e2 = Moments::default();
    for (&a, &b) in c1.iter().zip(c2) {
        let d1 = (max1 - a).min(a - min1);
        let d2 = (max2 - b).min(b - min2);
        if d1 < d2 {
            e1.push(d1);
        } else {
            e2.push(d2);
        }
    }
    e1.variance() + e2.variance()
}

fn min_max<T: Real>(v: &[T]) -> (T, T) {
    v.iter()
        .fold((v[0], v[0]), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

#[derive(Default)]
struct Moments<T> {
    n: usize,
    sum: T,
    sum_sq: T,
}

impl<T: Real> Moments<T> {
    fn push(&mut self, x: T) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn variance(&self) -> T {
        if self.n == 0 {
            return T::zero();
        }
        let n = T::from_usize(self.n).unwrap();
        let mean = self.sum / n;
        (self.sum_sq / n - mean * mean).max(T::zero())
    }
}

/// 1st and 99th nearest-rank percentiles of `z`.
fn z_extent<T: Real>(cluster: &[Point3<T>]) -> (T, T) {
    let mut z: Vec<T> = cluster.iter().map(|p| p.z).collect();
    z.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let last = (z.len() - 1) as f64;
    let lo = (0.01 * last).floor() as usize;
    let hi = (0.99 * last).ceil() as usize;
    (z[lo], z[hi])
}

/// Rejects clusters with fewer than three points or a collinear plan view.
fn check_planar_spread<T: Real>(cluster: &[Point3<T>]) -> Result<()> {
    if cluster.len() < 3 {
        return Err(Error::Degenerate(format!(
            "box fitting needs at least 3 points, got {}",
            cluster.len()
        )));
    }
    if cluster
        .iter()
        .any(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()))
    {
        return Err(Error::InvalidParameter("non-finite point in cluster".into()));
    }
    let n = T::from_usize(cluster.len()).unwrap();
    let (mut mx, mut my) = (T::zero(), T::zero());
    for p in cluster {
        mx += p.x;
        my += p.y;
    }
    mx /= n;
    my /= n;
    let (mut sxx, mut syy, mut sxy) = (T::zero(), T::zero(), T::zero());
    for p in cluster {
        let (dx, dy) = (p.x - mx, p.y - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    // eigenvalues of the 2×2 scatter matrix
    let half_trace = (sxx + syy) / T::lit(2.0);
    let disc = (((sxx - syy) / T::lit(2.0)).powi(2) + sxy * sxy).sqrt();
    let big = half_trace + disc;
    let small = half_trace - disc;
    if big <= T::zero() || small <= big * T::tolerance() {
        return Err(Error::Degenerate(
            "cluster footprint is collinear or coincident".into(),
        ));
    }
    Ok(())
}
