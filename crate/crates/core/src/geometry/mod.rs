//! Core 3D types: points and clouds, rigid transforms, oriented boxes,
//! bird's-eye-view overlap and tightest-box fitting.
//!
//! Conventions used throughout the crate:
//!
//! * world frame is right-handed with `z` up; all RSU clouds share it;
//! * a box body frame has its origin at the box center, `x` along the
//!   heading (length `l`), `y` across (width `w`) and `z` up (height `h`);
//! * yaw is measured counter-clockwise from the world `x` axis.

mod bbox;
mod cloud;
mod iou;
mod lshape;
mod transform;

pub use bbox::{box_to_transform, points_in_box, points_in_box_indices, BoundingBox};
pub use cloud::{centroid, PointCloud};
pub use iou::{bev_iou, polygon_area};
pub use lshape::{fit_box_lshape, fit_box_lshape_with, BoxFitParams, LShapeCriterion, LSHAPE_RESOLUTION_DEG};
pub use transform::{apply_transform, RigidTransform};

pub use nalgebra::{Point3, Vector2, Vector3};
