//! Volumetric pulmonary vessel segmentation toolkit.
//!
//! The crate covers the non-training parts of an artery/vein segmentation
//! pipeline: volume I/O and preprocessing, topology-preserving centerline
//! extraction, centerline-weighted training losses with analytic gradients,
//! centerline-aware evaluation metrics, iterative artery/vein repair, and a
//! synthetic vascular phantom generator used as ground truth in tests.

pub mod error;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod numeric;
pub mod postprocess;
pub mod preprocess;
pub mod skeleton;
pub mod synth;
pub mod vlsom;
pub mod volume;

pub use error::{Error, Result};
pub use geometry::VolumeGeometry;
pub use skeleton::SkeletonVolume;
pub use volume::{ClassField, LabelVolume, ProbVolume, ScalarVolume, VesselClass};
