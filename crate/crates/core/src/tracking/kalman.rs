use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::geometry::BoundingBox;
use crate::scalar::{normalize_angle, normalize_half_angle, Real};

pub type StateVector<T> = SVector<T, 9>;
pub type StateCov<T> = SMatrix<T, 9, 9>;
pub type Measurement<T> = SVector<T, 7>;

const MIN_DIM: f64 = 1e-3;

/// Diagonal noise model. Variances in m², rad² and (m/s)².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KalmanParams {
    pub q_pos: f64,
    pub q_yaw: f64,
    pub q_dim: f64,
    pub q_vel: f64,
    pub r_pos: f64,
    pub r_yaw: f64,
    pub r_dim: f64,
    pub init_vel_var: f64,
}

impl Default for KalmanParams {
    fn default() -> Self {
        Self {
            q_pos: 0.5,
            q_yaw: 0.1,
            q_dim: 0.05,
            q_vel: 1.0,
            r_pos: 0.5,
            r_yaw: 0.1,
            r_dim: 0.05,
            init_vel_var: 100.0,
        }
    }
}

impl KalmanParams {
    pub fn process_noise<T: Real>(&self) -> StateCov<T> {
        let d = [
            self.q_pos, self.q_pos, self.q_pos, self.q_yaw, self.q_dim, self.q_dim, self.q_dim, self.q_vel,
            self.q_vel,
        ];
        StateCov::from_diagonal(&SVector::from_fn(|i, _| T::lit(d[i])))
    }

    pub fn measurement_noise<T: Real>(&self) -> SMatrix<T, 7, 7> {
        let d = [
            self.r_pos, self.r_pos, self.r_pos, self.r_yaw, self.r_dim, self.r_dim, self.r_dim,
        ];
        SMatrix::from_diagonal(&SVector::from_fn(|i, _| T::lit(d[i])))
    }
}

/// Kalman state over `[cx, cy, cz, theta, l, w, h, vx, vy]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackState<T: Real> {
    pub mean: StateVector<T>,
    pub cov: StateCov<T>,
    pub hit_count: usize,
    pub miss_count: usize,
    pub track_id: u64,
}

impl<T: Real> TrackState<T> {
    /// Starts a track at `b` with unknown velocity.
    pub fn from_detection(b: &BoundingBox<T>, track_id: u64, params: &KalmanParams) -> Self {
        let r = params.measurement_noise::<T>();
        let mut cov = StateCov::zeros();
        cov.fixed_view_mut::<7, 7>(0, 0).copy_from(&r);
        cov[(7, 7)] = T::lit(params.init_vel_var);
        cov[(8, 8)] = T::lit(params.init_vel_var);
        Self {
            mean: StateVector::from_column_slice(&[b.cx, b.cy, b.cz, b.theta, b.l, b.w, b.h, b.vx, b.vy]),
            cov,
            hit_count: 1,
            miss_count: 0,
            track_id,
        }
    }

    pub fn to_box(&self) -> BoundingBox<T> {
        let m = &self.mean;
        BoundingBox::new([m[0], m[1], m[2]], [m[4], m[5], m[6]], m[3]).with_velocity(m[7], m[8])
    }
}

fn transition<T: Real>(dt: T) -> StateCov<T> {
    let mut f = StateCov::identity();
    f[(0, 7)] = dt;
    f[(1, 8)] = dt;
    f
}

fn observation<T: Real>() -> SMatrix<T, 7, 9> {
    SMatrix::from_fn(|r, c| if r == c { T::one() } else { T::zero() })
}

pub fn measurement_of<T: Real>(b: &BoundingBox<T>) -> Measurement<T> {
    Measurement::from_column_slice(&[b.cx, b.cy, b.cz, b.theta, b.l, b.w, b.h])
}

/// Constant-velocity prediction over `dt` seconds.
pub fn kf_predict<T: Real>(s: &TrackState<T>, dt: T, params: &KalmanParams) -> TrackState<T> {
    let f = transition(dt);
    let mut out = s.clone();
    out.mean = f * s.mean;
    out.cov = f * s.cov * f.transpose() + params.process_noise::<T>();
    out
}

/// Measurement update with the box (velocity unobserved).
///
/// The yaw innovation is taken modulo π, so a measurement flipped by 180°
/// pulls the heading the short way.
pub fn kf_update<T: Real>(s: &TrackState<T>, z: &BoundingBox<T>, params: &KalmanParams) -> TrackState<T> {
    let h = observation::<T>();
    let mut y = measurement_of(z) - h * s.mean;
    y[3] = normalize_half_angle(y[3]);
    let sys = h * s.cov * h.transpose() + params.measurement_noise::<T>();
    let sys_inv = sys
        .try_inverse()
        .or_else(|| sys.pseudo_inverse(T::default_epsilon()).ok())
        .expect("innovation covariance invertible");
    let k = s.cov * h.transpose() * sys_inv;
    let mut out = s.clone();
    out.mean = s.mean + k * y;
    let cov = (StateCov::identity() - k * h) * s.cov;
    out.cov = (cov + cov.transpose()) * T::lit(0.5);
    out.mean[3] = normalize_angle(out.mean[3]);
    for i in 4..7 {
        out.mean[i] = out.mean[i].max(T::lit(MIN_DIM));
    }
    out
}
