//! Skeleton fitting for 3D point clouds.
//!
//! A skeleton is the complete graph over `k` ordered keypoints. Each edge is
//! sampled into a small sub-cloud, refined by per-sample offsets and masked by
//! an activation strength. The composite Chamfer distance ([`ccd`]) scores the
//! merged reconstruction against the input; [`optim`] minimizes it directly for
//! one shape, and [`metrics`] evaluates the resulting ordered keypoints.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod annotation;
pub mod ccd;
pub mod cloud;
pub mod error;
pub mod io;
pub mod metrics;
pub mod optim;
pub mod rng;
pub mod shapes;
pub mod skeleton;
pub mod spatial;

pub use annotation::{Annotation, AnnotationSet};
pub use ccd::{ccd, coverage_loss, fidelity_loss, CcdConfig, CcdResult};
pub use cloud::{BoundingBox, NormalizeTransform, PointCloud};
pub use error::{Error, Result};
pub use optim::{fit, FitConfig, FitParams, FitReport, KeypointMode};
pub use skeleton::{ActivationVector, OffsetTable, SamplingPlan, Skeleton, SkeletonDoc, SubCloudSet};
