//! Geometry-only auto-labeling of vehicles in roadside-unit LiDAR recordings.
//!
//! The pipeline discovers vehicles by multi-frame, multi-scale density
//! clustering, links detections into tracklets with a constant-velocity
//! Kalman filter, and refines each tracklet by aggregating its instances in
//! the object body frame. A deterministic ray-casting simulator and an
//! evaluation harness make every stage checkable against ground truth.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases at the
//! crate root name the double precision instantiations used by the CLI.

// `!(x > 0)` is how parameter checks reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod clustering;
pub mod discovery;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod refinement;
pub mod registration;
pub mod scalar;
pub mod simulator;
pub mod stages;
pub mod tracking;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Point = geometry::Point3<f64>;
pub type Box3 = geometry::BoundingBox<f64>;
pub type Box3f = geometry::BoundingBox<f32>;
pub type Cloud = geometry::PointCloud<f64>;
pub type Cloudf = geometry::PointCloud<f32>;
pub type Transform = geometry::RigidTransform<f64>;
