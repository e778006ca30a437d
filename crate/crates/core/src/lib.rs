//! Feature-based model selection for LIDAR 3D object detection.
//!
//! The crate covers the whole loop: degrading a clean training corpus into
//! pseudo-incomplete variants, analysing inference data, picking a model from
//! a registry of trained-model descriptors, evaluating detections with
//! rotated 3D IoU at 40 recall positions, and the edge/cloud wire protocol
//! that carries the selection request and assignment.

// Negated comparisons double as NaN rejection in validators.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod cloud;
pub mod corpus;
pub mod degrade;
pub mod detect;
pub mod eval;
pub mod features;
pub mod geometry;
pub mod kitti;
pub mod protocol;
pub mod registry;
pub mod rng;
pub mod selector;
pub mod synth;

pub use cloud::{Point, PointCloud};
pub use geometry::OrientedBox3D;
